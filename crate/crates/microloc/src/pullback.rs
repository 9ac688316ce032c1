//! Pullback of fields by smooth maps, the admissibility case split for
//! pullback regularity, and the explicit kernel family
//!
//! `u_s^(q)(y) = 1/(Gamma(s/2) 2^q pi^{q/2}) int_0^inf t^{(s-q-2)/2}
//!               e^{-t} e^{-|y|^2/(4t)} dt`
//!
//! whose Fourier transform is `<xi>^{-s}`, together with the restriction
//! identity and the mollified-trace divergence experiment built on it.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::cones::LinearMap;
use crate::error::{Error, Result};
use crate::grid::{forward_transform, GridField, GridSpec};
use crate::seminorm::{shell_profile, BumpCutoff};

/// Quadrature window for the `t = e^tau` substitution; the integrand
/// decays doubly exponentially at both ends for y != 0.
const TAU_WINDOW: f64 = 40.0;
const QUAD_TARGET: f64 = 1e-8;
/// Interpolation budget: target points x source lattice points.
const INTERP_BUDGET: u128 = 1 << 28;

/// Map classes of the pullback-admissibility theorem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapClass {
    General,
    ConstantRank(usize),
    Submersion,
    Diffeo,
}

/// Tri-state verdict; the borderline constant-rank case
/// `r2 = (n-k)/2, r1 <= 0` is open in the theory and never classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admissibility {
    Admissible,
    NotAdmissible,
    OpenInPaper,
}

/// Evaluate the admissibility case split for a pullback
/// `D'^{r2}_L(R^n) -> D'^{r1}(domain)`:
///
/// - general smooth maps: `r2 - r1 > n/2` and `r2 > n/2`;
/// - constant rank k >= 1: `r2 - r1 >= (n-k)/2` and `r2 > (n-k)/2`;
/// - submersions: `r2 >= r1`;
/// - diffeomorphisms: `r2 >= r1` (an isomorphism for each order).
pub fn admissible(class: MapClass, n: usize, r1: f64, r2: f64) -> Result<Admissibility> {
    assert!(r1.is_finite() && r2.is_finite());
    let half_n = n as f64 / 2.0;
    let verdict = match class {
        MapClass::General => r2 - r1 > half_n && r2 > half_n,
        MapClass::ConstantRank(k) => {
            if k < 1 || k > n {
                return Err(Error::RankOutOfRange { k, max: n });
            }
            let gap = (n - k) as f64 / 2.0;
            if k < n && r2 == gap && r1 <= 0.0 {
                return Ok(Admissibility::OpenInPaper);
            }
            r2 - r1 >= gap && r2 > gap
        }
        MapClass::Submersion | MapClass::Diffeo => r2 >= r1,
    };
    Ok(if verdict {
        Admissibility::Admissible
    } else {
        Admissibility::NotAdmissible
    })
}

type PointFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type JacobianFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
enum MapKind {
    Linear(LinearMap),
    Callback { f: PointFn, jacobian: JacobianFn },
}

/// A smooth map R^m -> R^n, linear or callback-defined.
#[derive(Clone)]
pub struct SmoothMap {
    kind: MapKind,
    dims: (usize, usize),
    declared_rank: Option<usize>,
}

impl std::fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothMap").field("dims", &self.dims).finish()
    }
}

impl SmoothMap {
    pub fn linear(map: LinearMap) -> Result<Self> {
        let dims = (map.dim_in(), map.dim_out());
        Ok(SmoothMap {
            kind: MapKind::Linear(map),
            dims,
            declared_rank: None,
        })
    }

    pub fn linear_with_rank(map: LinearMap, rank: usize) -> Result<Self> {
        let computed = map.rank();
        if computed != rank {
            return Err(Error::InvalidField(format!(
                "declared rank {rank} but singular values give {computed}"
            )));
        }
        let dims = (map.dim_in(), map.dim_out());
        Ok(SmoothMap {
            kind: MapKind::Linear(map),
            dims,
            declared_rank: Some(rank),
        })
    }

    pub fn callback(dims: (usize, usize), f: PointFn, jacobian: JacobianFn) -> Self {
        SmoothMap {
            kind: MapKind::Callback { f, jacobian },
            dims,
            declared_rank: None,
        }
    }

    /// (m, n) for a map R^m -> R^n.
    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn declared_rank(&self) -> Option<usize> {
        self.declared_rank
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            MapKind::Linear(a) => a.apply(x),
            MapKind::Callback { f, .. } => f(x),
        }
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.kind {
            MapKind::Linear(a) => a.matrix().clone(),
            MapKind::Callback { jacobian, .. } => jacobian(x),
        }
    }

    pub fn as_linear(&self) -> Option<&LinearMap> {
        match &self.kind {
            MapKind::Linear(a) => Some(a),
            MapKind::Callback { .. } => None,
        }
    }
}

/// Pullback of a conic region under a possibly nonlinear map: the linear
/// rule is applied pointwise with the local Jacobian on a spatial sample
/// grid over `[-domain_radius, domain_radius]^m`, one pulled patch per
/// sample whose image lands in a patch ball. Linear maps should use
/// [`crate::cones::pullback_region`], which is exact on patch sets.
pub fn pullback_region_map(
    f: &SmoothMap,
    region: &crate::cones::ConicRegion,
    domain_radius: f64,
    samples_per_axis: usize,
) -> Result<crate::cones::ConicRegion> {
    let (m, _) = f.dims();
    let step = 2.0 * domain_radius / samples_per_axis as f64;
    let coords: Vec<f64> = (0..samples_per_axis)
        .map(|i| -domain_radius + (i as f64 + 0.5) * step)
        .collect();
    let mut points = vec![vec![]];
    for _ in 0..m {
        let mut next = Vec::with_capacity(points.len() * coords.len());
        for p in &points {
            for &c in &coords {
                let mut q = p.clone();
                q.push(c);
                next.push(q);
            }
        }
        points = next;
    }
    let local_radius = step * (m as f64).sqrt();
    let mut patches = Vec::new();
    for x in &points {
        let y = f.apply(x);
        for (ball, cap) in region.patches() {
            if !ball.contains(&y) {
                continue;
            }
            let local = LinearMap::new(f.jacobian(x));
            let pulled = crate::cones::pullback_region(
                &local,
                &crate::cones::ConicRegion::new(
                    vec![(ball.clone(), cap.clone())],
                    region.polarity(),
                ),
                domain_radius,
            )?;
            let new_cap = pulled.patches()[0].1.clone();
            patches.push((
                crate::cones::SpatialBall::new(x.clone(), local_radius)?,
                new_cap,
            ));
        }
    }
    Ok(crate::cones::ConicRegion::new(patches, region.polarity()))
}

/// Result of a field pullback: the composed field plus a non-fatal flag
/// raised when the continuity proxy (estimated global critical order
/// above n/2) fails.
#[derive(Debug, Clone)]
pub struct Pulled {
    pub field: GridField,
    pub continuity_warning: bool,
}

fn lattice_preserving_permutation(
    f: &SmoothMap,
    source: &GridSpec,
    target: &GridSpec,
) -> Option<Vec<usize>> {
    if f.dims().0 != target.dim() || f.dims().1 != source.dim() {
        return None;
    }
    if source.dim() != target.dim()
        || source.samples() != target.samples()
        || (source.extent() - target.extent()).abs() > 1e-12 * source.extent()
    {
        return None;
    }
    let h = source.spacing();
    let half = source.extent() / 2.0;
    let n = source.samples();
    let mut perm = Vec::with_capacity(target.len());
    for idx in 0..target.len() {
        let y = f.apply(&target.point(idx));
        let mut axes = Vec::with_capacity(source.dim());
        for &c in &y {
            let t = (c + half) / h;
            let r = t.round();
            if (t - r).abs() > 1e-9 {
                return None;
            }
            axes.push((r as i64).rem_euclid(n as i64) as usize);
        }
        perm.push(source.flat_index(&axes));
    }
    Some(perm)
}

/// Global critical-order estimate used as the continuity proxy.
fn global_critical_order(u: &GridField) -> Option<f64> {
    let l = u.spec().extent();
    let phi = BumpCutoff::new(vec![0.0; u.spec().dim()], 0.30 * l, 0.45 * l).ok()?;
    let mut e1 = vec![0.0; u.spec().dim()];
    e1[0] = 1.0;
    let cap = crate::cones::DirectionCap::new(e1, std::f64::consts::PI).ok()?;
    shell_profile(u, &phi, &cap).ok().map(|p| p.r_star)
}

/// Sample `u(f(x))` on the target grid by trigonometric interpolation of
/// the source field (valid for fields representing continuous functions;
/// a failed continuity proxy only raises the warning flag).
///
/// Lattice-preserving maps between identical grids take an exact
/// sample-permutation fast path.
pub fn pullback_field(f: &SmoothMap, u: &GridField, target: &GridSpec) -> Result<Pulled> {
    if f.dims().1 != u.spec().dim() {
        return Err(Error::InvalidField(format!(
            "map lands in R^{} but the field lives on R^{}",
            f.dims().1,
            u.spec().dim()
        )));
    }
    if f.dims().0 != target.dim() {
        return Err(Error::InvalidField(format!(
            "map domain R^{} but target grid has dim {}",
            f.dims().0,
            target.dim()
        )));
    }
    let continuity_warning = match global_critical_order(u) {
        Some(r_star) => r_star <= u.spec().dim() as f64 / 2.0,
        None => false,
    };

    if let Some(perm) = lattice_preserving_permutation(f, u.spec(), target) {
        let n = u.spec().len();
        let mut data = vec![Complex64::default(); u.channels() * target.len()];
        for c in 0..u.channels() {
            let src = u.channel(c);
            for (i, &p) in perm.iter().enumerate() {
                data[c * n + i] = src[p];
            }
        }
        let field = GridField::new(*target, u.channels(), data)?;
        return Ok(Pulled {
            field,
            continuity_warning,
        });
    }

    let cost = target.len() as u128 * u.spec().len() as u128;
    if cost > INTERP_BUDGET {
        return Err(Error::SizeLimit {
            cost,
            budget: INTERP_BUDGET,
        });
    }
    let us = forward_transform(u);
    let spec = *u.spec();
    let dxi = spec.freq_cell_volume();
    let two_pi_n = (2.0 * std::f64::consts::PI).powi(spec.dim() as i32);
    let freqs: Vec<Vec<f64>> = (0..spec.len()).map(|i| spec.frequency(i)).collect();
    let mut data = vec![Complex64::default(); u.channels() * target.len()];
    for c in 0..u.channels() {
        let coeff = us.channel(c);
        let evaluated: Vec<Complex64> = (0..target.len())
            .into_par_iter()
            .map(|idx| {
                let y = f.apply(&target.point(idx));
                let mut acc = Complex64::default();
                for (k, z) in coeff.iter().enumerate() {
                    let phase: f64 = y.iter().zip(&freqs[k]).map(|(a, b)| a * b).sum();
                    acc += z * Complex64::from_polar(1.0, phase);
                }
                acc * (dxi / two_pi_n)
            })
            .collect();
        data[c * target.len()..(c + 1) * target.len()].copy_from_slice(&evaluated);
    }
    let field = GridField::new(*target, u.channels(), data)?;
    Ok(Pulled {
        field,
        continuity_warning,
    })
}

fn kernel_integrand_log(tau: f64, s: f64, q: f64, y2: f64) -> f64 {
    tau * (s - q) / 2.0 - tau.exp() - y2 * (-tau).exp() / 4.0
}

fn kernel_quad(s: f64, q: usize, y2: f64, points: usize) -> f64 {
    // trapezoid on [-TAU_WINDOW, TAU_WINDOW]; the integrand vanishes to
    // double precision at both ends so endpoint weights do not matter
    let step = 2.0 * TAU_WINDOW / (points - 1) as f64;
    let mut acc = 0.0;
    for i in 0..points {
        let tau = -TAU_WINDOW + i as f64 * step;
        let v = kernel_integrand_log(tau, s, q as f64, y2);
        if v > -700.0 {
            acc += v.exp();
        }
    }
    acc * step
}

/// Point evaluation of `u_s^(q)(y)` by adaptive quadrature in `t = e^tau`
/// to relative `1e-8`. Singular at y = 0 when s <= q.
pub fn kernel_point(q: usize, s: f64, y: &[f64]) -> Result<f64> {
    assert!(s > 0.0, "kernel family needs s > 0");
    let y2: f64 = y.iter().map(|v| v * v).sum();
    if y2 == 0.0 && s <= q as f64 {
        return Err(Error::InvalidField(
            "kernel family is singular at y = 0 for s <= q".into(),
        ));
    }
    let pref = 1.0 / (gamma(s / 2.0) * 2f64.powi(q as i32) * std::f64::consts::PI.powf(q as f64 / 2.0));
    let mut points = 401usize;
    let mut last = kernel_quad(s, q, y2, points);
    let mut best_gap = f64::INFINITY;
    for _ in 0..8 {
        points = points * 2 - 1;
        let next = kernel_quad(s, q, y2, points);
        let gap = (next - last).abs() / next.abs().max(1e-300);
        if gap <= QUAD_TARGET {
            return Ok(pref * next);
        }
        best_gap = best_gap.min(gap);
        last = next;
    }
    Err(Error::QuadratureFailure {
        target: QUAD_TARGET,
        best: best_gap,
    })
}

/// Sample `u_s^(q)` on a grid. For `s <= q` the (singular) origin sample
/// is set to zero; every other sample is the adaptive quadrature value.
pub fn appendix_family(q: usize, s: f64, grid: &GridSpec) -> Result<GridField> {
    if grid.dim() != q {
        return Err(Error::InvalidGrid(format!(
            "kernel family u_s^({q}) needs a {q}-dimensional grid"
        )));
    }
    let values: Vec<Result<Complex64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let y = grid.point(i);
            let y2: f64 = y.iter().map(|v| v * v).sum();
            if y2 == 0.0 && s <= q as f64 {
                return Ok(Complex64::default());
            }
            kernel_point(q, s, &y).map(|v| Complex64::new(v, 0.0))
        })
        .collect();
    let mut data = Vec::with_capacity(grid.len());
    for v in values {
        data.push(v?);
    }
    GridField::new(*grid, 1, data)
}

/// One comparison row of the restriction identity check.
#[derive(Debug, Clone)]
pub struct RestrictionRow {
    pub x: f64,
    pub restricted: f64,
    pub reference: f64,
    pub rel_err: f64,
}

/// Report of the restriction identity
/// `u^(n)_{r2p + n/2} restricted to the k-plane = c0 u^(k)_{r2p + k - n/2}`
/// with `c0 = Gamma(r2p/2 + k/2 - n/4) Gamma(r2p/2 + n/4)^{-1} 2^{k-n} pi^{(k-n)/2}`.
#[derive(Debug, Clone)]
pub struct RestrictionReport {
    pub c0: f64,
    pub rows: Vec<RestrictionRow>,
    pub max_rel_err: f64,
}

/// The constant `c0` of the restriction identity; reduces to 1 at k = n.
pub fn restriction_constant(n: usize, k: usize, r2p: f64) -> f64 {
    let (nf, kf) = (n as f64, k as f64);
    gamma(r2p / 2.0 + kf / 2.0 - nf / 4.0) / gamma(r2p / 2.0 + nf / 4.0)
        * 2f64.powf(kf - nf)
        * std::f64::consts::PI.powf((kf - nf) / 2.0)
}

/// Build `u^(n)_{r2p+n/2}` on the source grid, restrict it to the first
/// k coordinates through [`pullback_field`], and compare against
/// `c0 u^(k)_{r2p+k-n/2}` on the window `|x| in [x_lo, x_hi]` of the
/// target grid (both sides must be continuous: r2p > n/2).
pub fn restriction_identity_check(
    n: usize,
    k: usize,
    r2p: f64,
    source: &GridSpec,
    target: &GridSpec,
    x_lo: f64,
    x_hi: f64,
) -> Result<RestrictionReport> {
    assert!(k >= 1 && k < n, "restriction needs 1 <= k < n");
    assert!(r2p > n as f64 / 2.0, "both sides continuous only for r2p > n/2");
    assert!(k == 1, "comparison window is parameterized for 1-D targets");
    let u_n = appendix_family(n, r2p + n as f64 / 2.0, source)?;
    // f: R^k -> R^n, x -> (x, 0)
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        rows.push(if i < k { vec![1.0] } else { vec![0.0] });
    }
    let rows_ref: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let f = SmoothMap::linear(LinearMap::from_rows(&rows_ref))?;
    let restricted = pullback_field(&f, &u_n, target)?.field;

    let c0 = restriction_constant(n, k, r2p);
    let reference = appendix_family(k, r2p + k as f64 - n as f64 / 2.0, target)?;

    let mut out_rows = Vec::new();
    let mut max_rel = 0.0f64;
    for i in 0..target.len() {
        let x = target.point(i)[0];
        if x.abs() < x_lo || x.abs() > x_hi {
            continue;
        }
        let a = restricted.channel(0)[i].re;
        let b = c0 * reference.channel(0)[i].re;
        let rel = (a - b).abs() / b.abs().max(1e-300);
        max_rel = max_rel.max(rel);
        out_rows.push(RestrictionRow {
            x,
            restricted: a,
            reference: b,
            rel_err: rel,
        });
    }
    Ok(RestrictionReport {
        c0,
        rows: out_rows,
        max_rel_err: max_rel,
    })
}

/// Default mollifier radius of the divergence experiment. Wide enough
/// that the logarithmic growth of the q = 1 trace clears a factor of 3
/// between j = 4 and j = 64.
pub const MOLLIFIER_RADIUS: f64 = 8.0;

/// Mollified trace values `(u_s^(q) * psi_j)(0)` for `q = n - k`, where
/// `psi_j(y) = j^q psi(j y)` and `psi` is the normalized radius-R bump.
/// With `s = q` (the divergence experiment) the values grow without bound;
/// with `s > q` they converge to `u_s^(q)(0)`.
pub fn mollified_trace(q: usize, s: f64, j_list: &[u32], radius: f64) -> Result<Vec<f64>> {
    assert!((1..=2).contains(&q), "trace experiment covers q in {{1, 2}}");
    // radial quadrature: int psi(|z|) u(|z|/j) dz = sigma_{q-1} int_0^R psi(rho) u(rho/j) rho^{q-1} drho
    let sigma = match q {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => unreachable!(),
    };
    let m = 4000usize;
    let h = radius / m as f64;
    let bump = |rho: f64| -> f64 {
        let u = rho / radius;
        if u < 1.0 {
            (-1.0 / (1.0 - u * u)).exp()
        } else {
            0.0
        }
    };
    // midpoint rule avoids both rho = 0 and the support edge
    let nodes: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) * h).collect();
    let mass: f64 = nodes
        .iter()
        .map(|&rho| bump(rho) * rho.powi(q as i32 - 1))
        .sum::<f64>()
        * h
        * sigma;
    let mut out = Vec::with_capacity(j_list.len());
    for &j in j_list {
        let vals: Vec<f64> = nodes
            .par_iter()
            .map(|&rho| {
                let w = bump(rho);
                if w == 0.0 {
                    return Ok(0.0);
                }
                let mut yq = vec![0.0; q];
                yq[0] = rho / j as f64;
                kernel_point(q, s, &yq).map(|u| w * u * rho.powi(q as i32 - 1))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(vals.iter().sum::<f64>() * h * sigma / mass);
    }
    Ok(out)
}

/// The divergence experiment: mollified trace of `u^(n-k)_{n-k}` at the
/// origin for each j.
pub fn divergence_experiment(n: usize, k: usize, j_list: &[u32]) -> Result<Vec<f64>> {
    assert!(n > k, "divergence experiment needs n > k");
    let q = n - k;
    mollified_trace(q, q as f64, j_list, MOLLIFIER_RADIUS)
}
