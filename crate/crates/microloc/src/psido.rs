//! Symbols, Kohn-Nirenberg quantization
//! `Op(a)u(x) = (2pi)^{-n} sum_xi e^{i x.xi} a(x, xi) F(u)(xi) dxi`,
//! smoothing operators `P_j u = chi_j * (psi_j u)` and principal-symbol
//! algebra.
//!
//! Multiplier, spatial and separable symbols take exact fast paths through
//! the frequency lattice; a fully general amplitude falls back to the
//! per-point sum, guarded by a hard size budget.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::cones::DirectionCap;
use crate::error::{Error, Result};
use crate::grid::{
    bracket, forward_transform, inverse_transform, GridField, GridSpec, SpectralField,
};
use crate::seminorm::{shell_profile, BumpCutoff, ShellProfile};

/// Inner-product budget for the general quantization path.
pub const GENERAL_PATH_BUDGET: u128 = 1 << 28;

/// Radial cutoff from the polyhomogeneous construction: 0 on |xi| <= 1/4,
/// 1 on |xi| >= 1/2, smooth in between.
pub fn radial_cutoff(r: f64) -> f64 {
    if r <= 0.25 {
        0.0
    } else if r >= 0.5 {
        1.0
    } else {
        let t = (r - 0.25) / 0.25;
        let g = (-1.0 / t).exp();
        let h = (-1.0 / (1.0 - t)).exp();
        g / (g + h)
    }
}

/// Real frequency multiplier m(xi).
#[derive(Debug, Clone)]
pub enum Multiplier {
    One,
    /// `<xi>^power`
    BracketPower(f64),
    /// `rho(|xi|) |xi|^power` with the radial cutoff above
    HomogeneousPower(f64),
    /// hard indicator of the truncated cone over a cap
    ConeIndicator { cap: DirectionCap, radial_floor: f64 },
    /// plateau: 1 on |xi| <= flat, smooth roll-off to 0 at cut
    LowpassPlateau { flat: f64, cut: f64 },
    Product(Vec<Multiplier>),
}

impl Multiplier {
    pub fn eval(&self, xi: &[f64]) -> f64 {
        match self {
            Multiplier::One => 1.0,
            Multiplier::BracketPower(p) => bracket(xi).powf(*p),
            Multiplier::HomogeneousPower(p) => {
                let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
                if r == 0.0 {
                    0.0
                } else {
                    radial_cutoff(r) * r.powf(*p)
                }
            }
            Multiplier::ConeIndicator { cap, radial_floor } => {
                let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
                if r > 0.0 && r >= *radial_floor && cap.contains(xi) {
                    1.0
                } else {
                    0.0
                }
            }
            Multiplier::LowpassPlateau { flat, cut } => {
                let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
                if r <= *flat {
                    1.0
                } else if r >= *cut {
                    0.0
                } else {
                    let t = (*cut - r) / (*cut - *flat);
                    let g = (-1.0 / t).exp();
                    let h = (-1.0 / (1.0 - t)).exp();
                    g / (g + h)
                }
            }
            Multiplier::Product(ms) => ms.iter().map(|m| m.eval(xi)).product(),
        }
    }
}

/// Direction-homogeneous matrix amplitude a0(x, omega) on box x S^{n-1}.
#[derive(Debug, Clone)]
pub enum PrincipalPart {
    /// identity on `k` channels
    Identity(usize),
    /// I - omega ox omega (k = n)
    TangentialProjector(usize),
    /// omega0 ox omega0 for a fixed unit direction, or omega ox omega if none
    NormalProjector { omega0: Option<Vec<f64>> },
    /// 1x2 curl symbol (-omega_2, omega_1) in two dimensions
    Curl2D,
    /// constant matrix, row-major (k_out x k_in)
    Constant {
        rows: usize,
        cols: usize,
        entries: Vec<Complex64>,
    },
    /// nearest-neighbour direction table: (unit direction, row-major matrix)
    DirectionTable {
        rows: usize,
        cols: usize,
        table: Vec<(Vec<f64>, Vec<Complex64>)>,
    },
    /// pointwise product of two parts (inner applied first)
    Composed(Box<PrincipalPart>, Box<PrincipalPart>),
    /// conjugate transpose
    Adjoint(Box<PrincipalPart>),
}

impl PrincipalPart {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            PrincipalPart::Identity(k) => (*k, *k),
            PrincipalPart::TangentialProjector(n) => (*n, *n),
            PrincipalPart::NormalProjector { omega0 } => {
                let n = omega0.as_ref().map(|w| w.len()).unwrap_or(0);
                if n == 0 {
                    (0, 0) // resolved at evaluation from omega
                } else {
                    (n, n)
                }
            }
            PrincipalPart::Curl2D => (1, 2),
            PrincipalPart::Constant { rows, cols, .. } => (*rows, *cols),
            PrincipalPart::DirectionTable { rows, cols, .. } => (*rows, *cols),
            PrincipalPart::Composed(outer, inner) => (outer.shape().0, inner.shape().1),
            PrincipalPart::Adjoint(p) => {
                let (r, c) = p.shape();
                (c, r)
            }
        }
    }

    /// Evaluate at a unit direction (the in-scope parts are x-independent).
    pub fn eval(&self, omega: &[f64]) -> DMatrix<Complex64> {
        match self {
            PrincipalPart::Identity(k) => DMatrix::identity(*k, *k),
            PrincipalPart::TangentialProjector(n) => {
                DMatrix::from_fn(*n, *n, |i, j| {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    Complex64::new(delta - omega[i] * omega[j], 0.0)
                })
            }
            PrincipalPart::NormalProjector { omega0 } => {
                let w: &[f64] = omega0.as_deref().unwrap_or(omega);
                let n = w.len();
                DMatrix::from_fn(n, n, |i, j| Complex64::new(w[i] * w[j], 0.0))
            }
            PrincipalPart::Curl2D => DMatrix::from_row_slice(
                1,
                2,
                &[
                    Complex64::new(-omega[1], 0.0),
                    Complex64::new(omega[0], 0.0),
                ],
            ),
            PrincipalPart::Constant { rows, cols, entries } => {
                DMatrix::from_row_slice(*rows, *cols, entries)
            }
            PrincipalPart::DirectionTable { rows, cols, table } => {
                let mut best = 0usize;
                let mut best_dot = f64::NEG_INFINITY;
                for (i, (w, _)) in table.iter().enumerate() {
                    let d: f64 = w.iter().zip(omega).map(|(a, b)| a * b).sum();
                    if d > best_dot {
                        best_dot = d;
                        best = i;
                    }
                }
                DMatrix::from_row_slice(*rows, *cols, &table[best].1)
            }
            PrincipalPart::Composed(outer, inner) => outer.eval(omega) * inner.eval(omega),
            PrincipalPart::Adjoint(p) => p.eval(omega).adjoint(),
        }
    }
}

/// Amplitude form of a symbol.
#[derive(Clone)]
pub enum SymbolForm {
    /// x-independent multiplier m(xi), scalar (acts channel-diagonally)
    Multiplier(Multiplier),
    /// frequency-independent spatial factor psi(x), sampled scalar field
    Spatial(GridField),
    /// sum of separable terms psi_i(x) m_i(xi)
    Separable(Vec<(GridField, Multiplier)>),
    /// rho(|xi|) a0(x, xi/|xi|) |xi|^order
    Polyhomogeneous(PrincipalPart),
    /// general sampled amplitude a(x_idx, xi_idx), scalar, slow exact path
    General(std::sync::Arc<dyn Fn(usize, usize) -> Complex64 + Send + Sync>),
}

impl std::fmt::Debug for SymbolForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SymbolForm::Multiplier(_) => "Multiplier",
            SymbolForm::Spatial(_) => "Spatial",
            SymbolForm::Separable(_) => "Separable",
            SymbolForm::Polyhomogeneous(_) => "Polyhomogeneous",
            SymbolForm::General(_) => "General",
        };
        f.write_str(name)
    }
}

/// A symbol a(x, xi) of a given order, with channel shape (k_out, k_in).
#[derive(Clone)]
pub struct Symbol {
    order: f64,
    channels: (usize, usize),
    form: SymbolForm,
    hermitian: bool,
}

impl std::fmt::Debug for Symbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Symbol")
            .field("order", &self.order)
            .field("channels", &self.channels)
            .finish()
    }
}

impl Symbol {
    pub fn multiplier(order: f64, m: Multiplier) -> Symbol {
        Symbol {
            order,
            channels: (1, 1),
            form: SymbolForm::Multiplier(m),
            hermitian: true,
        }
    }

    pub fn spatial(psi: GridField) -> Symbol {
        Symbol {
            order: 0.0,
            channels: (1, 1),
            form: SymbolForm::Spatial(psi),
            hermitian: false,
        }
    }

    pub fn separable(order: f64, terms: Vec<(GridField, Multiplier)>) -> Symbol {
        Symbol {
            order,
            channels: (1, 1),
            form: SymbolForm::Separable(terms),
            hermitian: false,
        }
    }

    /// Polyhomogeneous symbol `rho(|xi|) a0(x, omega) |xi|^order`.
    pub fn polyhomogeneous(order: f64, principal: PrincipalPart) -> Result<Symbol> {
        let shape = principal.shape();
        let hermitian = check_hermitian(&principal);
        Ok(Symbol {
            order,
            channels: shape,
            form: SymbolForm::Polyhomogeneous(principal),
            hermitian,
        })
    }

    pub fn general(
        order: f64,
        f: std::sync::Arc<dyn Fn(usize, usize) -> Complex64 + Send + Sync>,
    ) -> Symbol {
        Symbol {
            order,
            channels: (1, 1),
            form: SymbolForm::General(f),
            hermitian: false,
        }
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn channels(&self) -> (usize, usize) {
        self.channels
    }

    pub fn form(&self) -> &SymbolForm {
        &self.form
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Evaluate the homogeneous part at (x, omega); defined for
    /// polyhomogeneous symbols (x is accepted for interface parity).
    pub fn principal_at(&self, _x: &[f64], omega: &[f64]) -> DMatrix<Complex64> {
        match &self.form {
            SymbolForm::Polyhomogeneous(p) => p.eval(omega),
            SymbolForm::Multiplier(_) | SymbolForm::Spatial(_) | SymbolForm::Separable(_) => {
                DMatrix::identity(1, 1)
            }
            SymbolForm::General(_) => DMatrix::identity(1, 1),
        }
    }
}

fn check_hermitian(p: &PrincipalPart) -> bool {
    let (r, c) = p.shape();
    if r != c || r == 0 {
        return matches!(p, PrincipalPart::NormalProjector { omega0: None });
    }
    // sampled check at a few directions on the relevant sphere
    let n = r.clamp(1, 3);
    let dirs: Vec<Vec<f64>> = match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..8)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / 4.0;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.577350269189626, 0.577350269189626, 0.577350269189626],
        ],
    };
    dirs.iter().all(|w| {
        if w.len() != 2 && matches!(p, PrincipalPart::Curl2D) {
            return true;
        }
        let m = p.eval(w);
        (&m - m.adjoint()).iter().all(|z| z.norm() <= 1e-12)
    })
}

/// Apply a real multiplier through the frequency lattice, channel by channel.
fn apply_multiplier(m: &Multiplier, u: &GridField) -> GridField {
    let us = forward_transform(u);
    let spec = *us.spec();
    let weights: Vec<f64> = (0..spec.len()).map(|i| m.eval(&spec.frequency(i))).collect();
    inverse_transform(&us.map(|i, z| z * weights[i]))
}

fn apply_polyhom(
    order: f64,
    p: &PrincipalPart,
    u: &GridField,
) -> Result<GridField> {
    let (k_out, k_in) = p.shape();
    let resolved_in = if k_in == 0 { u.channels() } else { k_in };
    let resolved_out = if k_out == 0 { u.channels() } else { k_out };
    if resolved_in != u.channels() {
        return Err(Error::ChannelMismatch {
            op_out: resolved_out,
            op_in: resolved_in,
            field: u.channels(),
        });
    }
    let us = forward_transform(u);
    let spec = *us.spec();
    let n = spec.len();
    let mut out = vec![Complex64::default(); resolved_out * n];
    for i in 0..n {
        let xi = spec.frequency(i);
        let r: f64 = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rho = radial_cutoff(r);
        if rho == 0.0 || r == 0.0 {
            continue;
        }
        let omega: Vec<f64> = xi.iter().map(|x| x / r).collect();
        let a0 = p.eval(&omega);
        let scale = rho * r.powf(order);
        for row in 0..resolved_out {
            let mut acc = Complex64::default();
            for col in 0..resolved_in {
                acc += a0[(row, col)] * us.channel(col)[i];
            }
            out[row * n + i] = acc * scale;
        }
    }
    let spectral = SpectralField::new(spec, resolved_out, out)?;
    Ok(inverse_transform(&spectral))
}

/// Kohn-Nirenberg quantization `Op(a) u`.
pub fn quantize(a: &Symbol, u: &GridField) -> Result<GridField> {
    match &a.form {
        SymbolForm::Multiplier(m) => Ok(apply_multiplier(m, u)),
        SymbolForm::Spatial(psi) => {
            let w = psi.channel(0).to_vec();
            Ok(u.map(|i, z| z * w[i]))
        }
        SymbolForm::Separable(terms) => {
            let mut acc = GridField::zero(*u.spec(), u.channels());
            for (psi, m) in terms {
                let filtered = apply_multiplier(m, u);
                let w = psi.channel(0).to_vec();
                let term = filtered.map(|i, z| z * w[i]);
                acc = acc.add_scaled(&term, Complex64::new(1.0, 0.0))?;
            }
            Ok(acc)
        }
        SymbolForm::Polyhomogeneous(p) => apply_polyhom(a.order, p, u),
        SymbolForm::General(f) => {
            let spec = *u.spec();
            let n = spec.len() as u128;
            let cost = n * n;
            if cost > GENERAL_PATH_BUDGET {
                return Err(Error::SizeLimit {
                    cost,
                    budget: GENERAL_PATH_BUDGET,
                });
            }
            let us = forward_transform(u);
            let dxi = spec.freq_cell_volume();
            let two_pi_n = (2.0 * std::f64::consts::PI).powi(spec.dim() as i32);
            let coeff = us.channel(0).to_vec();
            let data: Vec<Complex64> = (0..spec.len())
                .into_par_iter()
                .map(|xi_idx_outer| {
                    let x = spec.point(xi_idx_outer);
                    let mut acc = Complex64::default();
                    for (k, &c) in coeff.iter().enumerate() {
                        let xi = spec.frequency(k);
                        let phase: f64 = x.iter().zip(&xi).map(|(a, b)| a * b).sum();
                        acc += Complex64::from_polar(1.0, phase) * f(xi_idx_outer, k) * c;
                    }
                    acc * (dxi / two_pi_n)
                })
                .collect();
            GridField::new(spec, 1, data)
        }
    }
}

/// Smoothing operator data: `P_j u = chi_j * (psi_j u)` with
/// `chi_j(x) = j^n chi(j x)` for a fixed nonnegative mollifier of unit mass
/// supported in the unit ball.
#[derive(Debug, Clone)]
pub struct SmoothingSpec {
    j: u32,
    window: BumpCutoff,
}

impl SmoothingSpec {
    pub fn new(j: u32, window: BumpCutoff) -> Result<Self> {
        if j == 0 {
            return Err(Error::InvalidField("smoothing index j must be >= 1".into()));
        }
        Ok(SmoothingSpec { j, window })
    }

    pub fn j(&self) -> u32 {
        self.j
    }

    pub fn window(&self) -> &BumpCutoff {
        &self.window
    }

    /// The scaled mollifier `chi_j` sampled on the grid, discretely
    /// normalized so that `sum chi_j h^n = 1` exactly (this keeps
    /// `|F(chi_j)| <= 1` on the lattice and `P_j 1 = 1` in the interior).
    pub fn mollifier(&self, spec: &GridSpec) -> GridField {
        let j = self.j as f64;
        let raw = GridField::from_fn(*spec, |x| {
            let r2: f64 = x.iter().map(|v| v * v * j * j).sum();
            let v = if r2 < 1.0 { (-1.0 / (1.0 - r2)).exp() } else { 0.0 };
            Complex64::new(v, 0.0)
        })
        .expect("finite mollifier samples");
        let mass: f64 = raw.data().iter().map(|z| z.re).sum::<f64>() * spec.cell_volume();
        raw.scale(Complex64::new(1.0 / mass, 0.0))
    }
}

/// Apply `P_j u = chi_j * (psi_j u)` by spectral convolution.
pub fn smoothing_apply(s: &SmoothingSpec, u: &GridField) -> GridField {
    let spec = *u.spec();
    let windowed = s.window.apply(u);
    let chi_hat = forward_transform(&s.mollifier(&spec));
    let kernel = chi_hat.channel(0).to_vec();
    let ws = forward_transform(&windowed);
    inverse_transform(&ws.map(|i, z| z * kernel[i]))
}

/// Critical orders of a patch before and after applying `Op(a)`.
pub fn order_shift_probe(
    a: &Symbol,
    u: &GridField,
    phi: &BumpCutoff,
    cap: &DirectionCap,
) -> Result<(ShellProfile, ShellProfile)> {
    let before = shell_profile(u, phi, cap)?;
    let moved = quantize(a, u)?;
    let after = shell_profile(&moved, phi, cap)?;
    Ok((before, after))
}

/// Pointwise product of principal parts; orders add.
pub fn principal_compose(a: &Symbol, b: &Symbol) -> Result<Symbol> {
    let pa = match &a.form {
        SymbolForm::Polyhomogeneous(p) => p.clone(),
        _ => PrincipalPart::Identity(a.channels.0),
    };
    let pb = match &b.form {
        SymbolForm::Polyhomogeneous(p) => p.clone(),
        _ => PrincipalPart::Identity(b.channels.0),
    };
    if a.channels.1 != b.channels.0 {
        return Err(Error::ChannelMismatch {
            op_out: a.channels.1,
            op_in: b.channels.0,
            field: b.channels.0,
        });
    }
    Symbol::polyhomogeneous(a.order + b.order, PrincipalPart::Composed(Box::new(pa), Box::new(pb)))
}

/// Conjugate-transpose of the homogeneous part; order unchanged.
pub fn adjoint_symbol(a: &Symbol) -> Symbol {
    match &a.form {
        SymbolForm::Polyhomogeneous(p) => Symbol::polyhomogeneous(
            a.order,
            PrincipalPart::Adjoint(Box::new(p.clone())),
        )
        .expect("adjoint keeps a valid shape"),
        SymbolForm::Multiplier(_) => a.clone(), // real multipliers are self-adjoint
        _ => a.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn test_field() -> GridField {
        let spec = GridSpec::new(1, 256, 16.0).unwrap();
        GridField::from_fn(spec, |x| {
            Complex64::new((-x[0] * x[0]).exp(), 0.4 * (2.0 * x[0]).sin())
        })
        .unwrap()
    }

    #[test]
    fn unit_symbol_is_identity() {
        let u = test_field();
        let a = Symbol::multiplier(0.0, Multiplier::One);
        let v = quantize(&a, &u).unwrap();
        let worst = u
            .data()
            .iter()
            .zip(v.data())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-12 * u.max_abs());
    }

    #[test]
    fn spatial_symbol_is_pointwise_multiplication() {
        let u = test_field();
        let psi = BumpCutoff::new(vec![0.0], 2.0, 4.0).unwrap().sample(u.spec());
        let a = Symbol::spatial(psi.clone());
        let v = quantize(&a, &u).unwrap();
        for i in 0..u.spec().len() {
            let expect = u.channel(0)[i] * psi.channel(0)[i].re;
            assert!((v.channel(0)[i] - expect).norm() <= 1e-15);
        }
    }

    #[test]
    fn separable_equals_spatial_times_multiplier() {
        let u = test_field();
        let psi = BumpCutoff::new(vec![0.0], 2.0, 4.0).unwrap().sample(u.spec());
        let m = Multiplier::BracketPower(-1.0);
        let a = Symbol::separable(-1.0, vec![(psi.clone(), m.clone())]);
        let v = quantize(&a, &u).unwrap();
        let filtered = apply_multiplier(&m, &u);
        for i in 0..u.spec().len() {
            let expect = filtered.channel(0)[i] * psi.channel(0)[i].re;
            assert!((v.channel(0)[i] - expect).norm() <= 1e-14);
        }
    }

    #[test]
    fn multiplier_composition_is_exact_on_lattice() {
        let u = test_field();
        let m1 = Symbol::multiplier(-1.0, Multiplier::BracketPower(-1.0));
        let m2 = Symbol::multiplier(2.0, Multiplier::BracketPower(2.0));
        let two_step = quantize(&m1, &quantize(&m2, &u).unwrap()).unwrap();
        let product = Symbol::multiplier(
            1.0,
            Multiplier::Product(vec![
                Multiplier::BracketPower(-1.0),
                Multiplier::BracketPower(2.0),
            ]),
        );
        let one_step = quantize(&product, &u).unwrap();
        let scale = one_step.max_abs();
        let worst = two_step
            .data()
            .iter()
            .zip(one_step.data())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-11 * scale, "worst {worst:e}");
    }

    #[test]
    fn quantize_is_linear_in_both_slots() {
        let u = test_field();
        let v = GridField::from_fn(*u.spec(), |x| Complex64::new((0.5 * x[0]).cos(), 0.1)).unwrap();
        let m1 = Symbol::multiplier(-2.0, Multiplier::BracketPower(-2.0));
        let m2 = Symbol::multiplier(0.0, Multiplier::HomogeneousPower(0.0));
        let c = Complex64::new(0.7, -0.3);

        let lhs = quantize(&m1, &u.add_scaled(&v, c).unwrap()).unwrap();
        let rhs = quantize(&m1, &u)
            .unwrap()
            .add_scaled(&quantize(&m1, &v).unwrap(), c)
            .unwrap();
        let worst = lhs
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-12 * lhs.max_abs().max(1.0));

        // linearity in the symbol: separable with two copies
        let psi = BumpCutoff::new(vec![0.0], 3.0, 5.0).unwrap().sample(u.spec());
        let sum_sym = Symbol::separable(
            0.0,
            vec![
                (psi.clone(), Multiplier::BracketPower(-2.0)),
                (psi.clone(), Multiplier::HomogeneousPower(0.0)),
            ],
        );
        let both = quantize(&sum_sym, &u).unwrap();
        let part1 = quantize(&Symbol::separable(0.0, vec![(psi.clone(), Multiplier::BracketPower(-2.0))]), &u).unwrap();
        let part2 = quantize(&Symbol::separable(0.0, vec![(psi, Multiplier::HomogeneousPower(0.0))]), &u).unwrap();
        let rhs2 = part1.add_scaled(&part2, Complex64::new(1.0, 0.0)).unwrap();
        let worst2 = both
            .data()
            .iter()
            .zip(rhs2.data())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst2 <= 1e-12 * both.max_abs().max(1.0));
        let _ = m2;
    }

    #[test]
    fn general_path_agrees_with_multiplier_path_and_respects_budget() {
        let spec = GridSpec::new(1, 64, 8.0).unwrap();
        let u = GridField::from_fn(spec, |x| Complex64::new((-x[0] * x[0]).exp(), 0.0)).unwrap();
        let spec_c = spec;
        let f = std::sync::Arc::new(move |_x: usize, k: usize| {
            Complex64::new(bracket(&spec_c.frequency(k)).powf(-1.0), 0.0)
        });
        let general = Symbol::general(-1.0, f);
        let fast = Symbol::multiplier(-1.0, Multiplier::BracketPower(-1.0));
        let a = quantize(&general, &u).unwrap();
        let b = quantize(&fast, &u).unwrap();
        let worst = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-10 * b.max_abs());

        // budget guard on a grid that exceeds the general-path budget
        let big = GridSpec::new(2, 512, 8.0).unwrap();
        let ub = GridField::zero(big, 1);
        let fz = std::sync::Arc::new(|_: usize, _: usize| Complex64::default());
        match quantize(&Symbol::general(0.0, fz), &ub) {
            Err(Error::SizeLimit { .. }) => {}
            other => panic!("expected SizeLimit, got {other:?}"),
        }
    }

    #[test]
    fn smoothing_preserves_constants_inside_window() {
        let spec = GridSpec::new(1, 512, 16.0).unwrap();
        let u = GridField::from_fn(spec, |_| Complex64::new(1.0, 0.0)).unwrap();
        let window = BumpCutoff::new(vec![0.0], 4.0, 6.0).unwrap();
        let s = SmoothingSpec::new(32, window).unwrap();
        let v = smoothing_apply(&s, &u);
        // interior points: |x| <= 2 stays well inside the window plateau
        for i in 0..spec.len() {
            let x = spec.point(i)[0];
            if x.abs() <= 2.0 {
                assert!(
                    (v.channel(0)[i].re - 1.0).abs() <= 1e-8,
                    "P_j 1 = {} at x = {x}",
                    v.channel(0)[i].re
                );
            }
        }
    }

    #[test]
    fn smoothing_converges_on_smooth_fields() {
        let spec = GridSpec::new(1, 512, 16.0).unwrap();
        let u = GridField::from_fn(spec, |x| Complex64::new((-x[0] * x[0] / 4.0).exp(), 0.0)).unwrap();
        let window = BumpCutoff::new(vec![0.0], 4.0, 6.0).unwrap();
        let mut last = f64::INFINITY;
        for j in [8u32, 16, 32, 64] {
            let s = SmoothingSpec::new(j, window.clone()).unwrap();
            let v = smoothing_apply(&s, &u);
            let mut worst = 0.0f64;
            for i in 0..spec.len() {
                let x = spec.point(i)[0];
                if x.abs() <= 2.0 {
                    worst = worst.max((v.channel(0)[i] - u.channel(0)[i]).norm());
                }
            }
            assert!(worst < last * 1.5, "j={j}: {worst} vs {last}");
            last = worst;
        }
        assert!(last <= 1e-3, "j=64 error {last}");
    }

    #[test]
    fn mollifier_transform_is_a_contraction() {
        let spec = GridSpec::new(1, 256, 16.0).unwrap();
        let window = BumpCutoff::new(vec![0.0], 4.0, 6.0).unwrap();
        for j in [4u32, 16, 64] {
            let s = SmoothingSpec::new(j, window.clone()).unwrap();
            let chi_hat = forward_transform(&s.mollifier(&spec));
            let max = chi_hat.coeff().iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(max <= 1.0 + 1e-12, "j={j}: |F chi_j| max {max}");
            // masked tail energies of P_j u are dominated by those of psi_j u
            let u = test_field();
            let windowed = s.window.apply(&u);
            let pu = smoothing_apply(&s, &u);
            let ws = forward_transform(&windowed);
            let ps = forward_transform(&pu);
            for i in 0..spec.len() {
                assert!(ps.coeff()[i].norm() <= ws.coeff()[i].norm() + 1e-12);
            }
        }
    }

    #[test]
    fn order_shift_probe_on_isotropic_field() {
        // u with spectrum <xi>^{-2.5}: r* ~ 2.0; Op(<xi>^{-1}) raises it by 1
        let spec = GridSpec::new(1, 1024, 32.0).unwrap();
        let us = SpectralField::from_fn(spec, |xi| Complex64::new(bracket(xi).powf(-2.5), 0.0));
        let u = inverse_transform(&us);
        let phi = BumpCutoff::new(vec![0.0], 6.0, 12.0).unwrap();
        let cap = DirectionCap::new(vec![1.0], PI).unwrap();
        let a = Symbol::multiplier(-1.0, Multiplier::BracketPower(-1.0));
        let (before, after) = order_shift_probe(&a, &u, &phi, &cap).unwrap();
        let shift = after.r_star - before.r_star;
        assert!((shift - 1.0).abs() <= 0.2, "shift {shift}");

        let a2 = Symbol::multiplier(-2.0, Multiplier::BracketPower(-2.0));
        let (b2, a2r) = order_shift_probe(&a2, &u, &phi, &cap).unwrap();
        let shift2 = a2r.r_star - b2.r_star;
        assert!((shift2 - 2.0).abs() <= 0.2, "shift2 {shift2}");

        let id = Symbol::multiplier(0.0, Multiplier::One);
        let (b0, a0) = order_shift_probe(&id, &u, &phi, &cap).unwrap();
        assert!((a0.r_star - b0.r_star).abs() <= 1e-9);
    }

    #[test]
    fn adjoint_and_compose_on_principal_parts() {
        // real scalar symbol: adjoint is itself
        let a = Symbol::multiplier(0.0, Multiplier::BracketPower(0.0));
        let adj = adjoint_symbol(&a);
        assert_eq!(adj.order(), a.order());

        // compose with identity
        let t = Symbol::polyhomogeneous(0.0, PrincipalPart::TangentialProjector(2)).unwrap();
        let id = Symbol::polyhomogeneous(0.0, PrincipalPart::Identity(2)).unwrap();
        let c = principal_compose(&t, &id).unwrap();
        let w = [0.6, 0.8];
        let lhs = c.principal_at(&[0.0, 0.0], &w);
        let rhs = t.principal_at(&[0.0, 0.0], &w);
        assert!((lhs - rhs).iter().all(|z| z.norm() <= 1e-12));

        // 2x2 matrix case: compose-then-evaluate equals product of evaluations
        let m1 = Symbol::polyhomogeneous(
            0.0,
            PrincipalPart::Constant {
                rows: 2,
                cols: 2,
                entries: vec![
                    Complex64::new(1.0, 0.5),
                    Complex64::new(0.0, -1.0),
                    Complex64::new(2.0, 0.0),
                    Complex64::new(0.3, 0.3),
                ],
            },
        )
        .unwrap();
        let m2 = Symbol::polyhomogeneous(0.0, PrincipalPart::TangentialProjector(2)).unwrap();
        let comp = principal_compose(&m1, &m2).unwrap();
        assert_eq!(comp.order(), 0.0);
        let lhs = comp.principal_at(&[0.0, 0.0], &w);
        let rhs = m1.principal_at(&[0.0, 0.0], &w) * m2.principal_at(&[0.0, 0.0], &w);
        assert!((lhs - rhs).iter().all(|z| z.norm() <= 1e-12));

        // adjoint of the hermitian projector is itself
        let tp = PrincipalPart::TangentialProjector(2);
        let adj_tp = PrincipalPart::Adjoint(Box::new(tp.clone()));
        assert!((tp.eval(&w) - adj_tp.eval(&w)).iter().all(|z| z.norm() <= 1e-12));
    }

    #[test]
    fn quadratic_form_positivity_for_squared_window_symbols() {
        // a = psi(x)^2 m(xi) with m >= 0 a lattice plateau covering the
        // band of v: the form equals sum m |F(psi v)|^2 dxi/(2pi)^n there
        let spec = GridSpec::new(1, 256, 16.0).unwrap();
        let psi = BumpCutoff::new(vec![0.0], 2.0, 4.0).unwrap();
        let psi2 = GridField::from_fn(spec, |x| {
            let v = psi.value(x);
            Complex64::new(v * v, 0.0)
        })
        .unwrap();
        let m = Multiplier::LowpassPlateau { flat: 30.0, cut: 45.0 };
        let a = Symbol::separable(0.0, vec![(psi2, m.clone())]);

        // band-limited random-ish field (deterministic phases)
        let us = SpectralField::from_fn(spec, |xi| {
            let r = xi[0].abs();
            if r <= 20.0 {
                Complex64::from_polar((1.0 + r).powf(-0.3), 1.7 * xi[0] + 0.3)
            } else {
                Complex64::default()
            }
        });
        let v = inverse_transform(&us);

        let av = quantize(&a, &v).unwrap();
        let h = spec.cell_volume();
        let form: Complex64 = av
            .data()
            .iter()
            .zip(v.data())
            .map(|(x, y)| x * y.conj())
            .sum::<Complex64>()
            * h;

        let psiv = psi.apply(&v);
        let ps = forward_transform(&psiv);
        let dxi = spec.freq_cell_volume();
        let oracle: f64 = ps
            .coeff()
            .iter()
            .enumerate()
            .map(|(i, z)| m.eval(&spec.frequency(i)) * z.norm_sqr())
            .sum::<f64>()
            * dxi
            / (2.0 * std::f64::consts::PI);
        let scale = psiv.l2_norm().powi(2);
        assert!(
            (form.re - oracle).abs() <= 1e-8 * scale,
            "form {} vs oracle {}",
            form.re,
            oracle
        );
        assert!(form.re >= -1e-8 * scale);
        assert!(form.im.abs() <= 1e-8 * scale);
    }
}
