//! Conic geometry in phase space: direction caps, spatial balls, finite
//! patch-union conic regions, pullback of conic sets under linear maps and
//! the set of normals.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Angle tolerance below which a pulled-back cap is not narrowed further.
const MIN_HALF_ANGLE: f64 = 1e-3;
/// Singular values below this are treated as zero.
const SV_TOL: f64 = 1e-10;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Angle in [0, pi] between two nonzero vectors.
pub fn angle(a: &[f64], b: &[f64]) -> f64 {
    let c = dot(a, b) / (norm(a) * norm(b));
    c.clamp(-1.0, 1.0).acos()
}

/// Open cone of directions within `half_angle` of a unit vector.
///
/// `half_angle = pi` is the full frequency space (every nonzero direction),
/// which is how a "full cone" cap is spelled.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionCap {
    omega: Vec<f64>,
    half_angle: f64,
}

impl DirectionCap {
    pub fn new(omega: Vec<f64>, half_angle: f64) -> Result<Self> {
        let n = norm(&omega);
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidField(format!("|omega| = {n}, expected 1")));
        }
        if !(half_angle > 0.0 && half_angle <= std::f64::consts::PI) {
            return Err(Error::InvalidField(format!(
                "half angle {half_angle} not in (0, pi]"
            )));
        }
        Ok(DirectionCap { omega, half_angle })
    }

    /// Normalizes `omega` before constructing.
    pub fn from_direction(omega: &[f64], half_angle: f64) -> Result<Self> {
        let n = norm(omega);
        if n == 0.0 {
            return Err(Error::ZeroFrequency);
        }
        DirectionCap::new(omega.iter().map(|x| x / n).collect(), half_angle)
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    /// Membership of a nonzero frequency in the open cone over the cap.
    pub fn contains(&self, xi: &[f64]) -> bool {
        if norm(xi) == 0.0 {
            return false;
        }
        if self.half_angle >= std::f64::consts::PI {
            return true;
        }
        angle(xi, &self.omega) < self.half_angle
    }

    /// Deterministic sample of directions in the closed cap: the center,
    /// interior rings and the boundary ring.
    pub fn sample_directions(&self, per_ring: usize, rings: usize) -> Vec<Vec<f64>> {
        let mut out = vec![self.omega.clone()];
        let n = self.dim();
        if n == 1 {
            return out;
        }
        // orthonormal frame completing omega
        let frame = orthonormal_complement(&self.omega);
        let alpha = self.half_angle.min(std::f64::consts::PI - 1e-9);
        for ring in 1..=rings {
            let theta = alpha * ring as f64 / rings as f64;
            for s in 0..per_ring {
                let phi = 2.0 * std::f64::consts::PI * s as f64 / per_ring as f64;
                let mut v: Vec<f64> = self.omega.iter().map(|x| x * theta.cos()).collect();
                match frame.len() {
                    1 => {
                        for (vi, fi) in v.iter_mut().zip(&frame[0]) {
                            *vi += theta.sin() * fi;
                        }
                        if per_ring < 2 {
                            continue;
                        }
                    }
                    2 => {
                        for i in 0..n {
                            v[i] += theta.sin() * (phi.cos() * frame[0][i] + phi.sin() * frame[1][i]);
                        }
                    }
                    _ => unreachable!(),
                }
                out.push(v);
            }
            if frame.len() == 1 {
                // 2-D: each ring contributes its two boundary rotations
                let mut w: Vec<f64> = self.omega.iter().map(|x| x * theta.cos()).collect();
                for (wi, fi) in w.iter_mut().zip(&frame[0]) {
                    *wi -= theta.sin() * fi;
                }
                out.push(w);
            }
        }
        out
    }
}

fn orthonormal_complement(omega: &[f64]) -> Vec<Vec<f64>> {
    let n = omega.len();
    if n == 1 {
        return Vec::new();
    }
    // pick the axis least aligned with omega, Gram-Schmidt it
    let mut best = 0;
    for i in 1..n {
        if omega[i].abs() < omega[best].abs() {
            best = i;
        }
    }
    let mut e1 = vec![0.0; n];
    e1[best] = 1.0;
    let p = dot(&e1, omega);
    for i in 0..n {
        e1[i] -= p * omega[i];
    }
    let n1 = norm(&e1);
    for v in &mut e1 {
        *v /= n1;
    }
    if n == 2 {
        return vec![e1];
    }
    // n == 3: cross product completes the frame
    let e2 = vec![
        omega[1] * e1[2] - omega[2] * e1[1],
        omega[2] * e1[0] - omega[0] * e1[2],
        omega[0] * e1[1] - omega[1] * e1[0],
    ];
    vec![e1, e2]
}

/// Open ball in the spatial variable.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialBall {
    center: Vec<f64>,
    radius: f64,
}

impl SpatialBall {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if radius <= 0.0 || radius.is_nan() {
            return Err(Error::InvalidField(format!("radius {radius} must be > 0")));
        }
        Ok(SpatialBall { center, radius })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let d2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d2 < self.radius * self.radius
    }
}

/// Whether the patch list describes the conic set itself or covers its
/// complement (the paper-style covering of `L^c`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    CoversRegion,
    CoversComplement,
}

/// Finite union of (spatial ball x direction cap) patches.
///
/// The point query [`ConicRegion::contains`] is always membership in the
/// union of patch products; `polarity` records which conic set (the region
/// or its complement) that union stands for.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicRegion {
    patches: Vec<(SpatialBall, DirectionCap)>,
    polarity: Polarity,
}

impl ConicRegion {
    pub fn new(patches: Vec<(SpatialBall, DirectionCap)>, polarity: Polarity) -> Self {
        ConicRegion { patches, polarity }
    }

    pub fn empty() -> Self {
        ConicRegion {
            patches: Vec::new(),
            polarity: Polarity::CoversRegion,
        }
    }

    pub fn patches(&self) -> &[(SpatialBall, DirectionCap)] {
        &self.patches
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    /// True iff (x, xi) lies in some patch product. Rejects xi = 0.
    pub fn contains(&self, x: &[f64], xi: &[f64]) -> Result<bool> {
        if norm(xi) == 0.0 {
            return Err(Error::ZeroFrequency);
        }
        Ok(self
            .patches
            .iter()
            .any(|(ball, cap)| ball.contains(x) && cap.contains(xi)))
    }
}

/// Boolean mask over the centered frequency lattice selecting the truncated
/// cone `{ xi != 0 : |xi| >= radial_floor, angle(xi, omega) < alpha }`.
pub fn freq_mask(spec: &GridSpec, cap: &DirectionCap, radial_floor: f64) -> Vec<bool> {
    (0..spec.len())
        .map(|i| {
            let xi = spec.frequency(i);
            let r = norm(&xi);
            r > 0.0 && r >= radial_floor && cap.contains(&xi)
        })
        .collect()
}

/// Linear map `f(x) = A x` from R^m to R^n (A is n rows x m columns).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        LinearMap { matrix }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let m = rows[0].len();
        LinearMap {
            matrix: DMatrix::from_fn(n, m, |i, j| rows[i][j]),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Domain dimension m.
    pub fn dim_in(&self) -> usize {
        self.matrix.ncols()
    }

    /// Codomain dimension n.
    pub fn dim_out(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let v = self.matrix.clone() * DMatrix::from_column_slice(self.dim_in(), 1, x);
        v.column(0).iter().copied().collect()
    }

    pub fn apply_transpose(&self, eta: &[f64]) -> Vec<f64> {
        let v = self.matrix.transpose() * DMatrix::from_column_slice(self.dim_out(), 1, eta);
        v.column(0).iter().copied().collect()
    }

    /// Rank by singular values with threshold 1e-10 relative to the largest.
    pub fn rank(&self) -> usize {
        let sv = self.matrix.clone().svd(false, false).singular_values;
        let top = sv.iter().cloned().fold(0.0, f64::max);
        if top == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > SV_TOL * top.max(1.0)).count()
    }

    /// Orthonormal basis of ker(A^T) = (range A)^perp, as columns.
    fn kernel_of_transpose(&self) -> Vec<Vec<f64>> {
        let n = self.dim_out();
        let svd = self.matrix.clone().svd(true, false);
        let u = svd.u.as_ref().expect("svd with U");
        let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > SV_TOL * top.max(1.0))
            .count();
        // columns of U beyond the rank span (range A)^perp; U from the thin
        // SVD may omit them, so fall back to completing the basis.
        let mut basis: Vec<Vec<f64>> = (rank..u.ncols())
            .map(|c| u.column(c).iter().copied().collect())
            .collect();
        let needed = n - rank;
        if basis.len() < needed {
            basis = complete_orthonormal(
                &(0..rank)
                    .map(|c| u.column(c).iter().copied().collect::<Vec<f64>>())
                    .collect::<Vec<_>>(),
                n,
            );
        }
        basis
    }

    fn range_basis(&self) -> Vec<Vec<f64>> {
        let svd = self.matrix.clone().svd(true, false);
        let u = svd.u.as_ref().expect("svd with U");
        let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > SV_TOL * top.max(1.0))
            .count();
        (0..rank).map(|c| u.column(c).iter().copied().collect()).collect()
    }
}

fn complete_orthonormal(have: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = have.to_vec();
    let mut extra = Vec::new();
    for axis in 0..n {
        if basis.len() >= n {
            break;
        }
        let mut v = vec![0.0; n];
        v[axis] = 1.0;
        for b in &basis {
            let p = dot(&v, b);
            for i in 0..n {
                v[i] -= p * b[i];
            }
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            for x in &mut v {
                *x /= nv;
            }
            basis.push(v.clone());
            extra.push(v);
        }
    }
    extra
}

/// Minimal angle from a unit direction to a subspace spanned by an
/// orthonormal basis (pi/2 for the zero subspace).
fn angle_to_subspace(omega: &[f64], basis: &[Vec<f64>]) -> f64 {
    if basis.is_empty() {
        return std::f64::consts::FRAC_PI_2;
    }
    let p2: f64 = basis.iter().map(|b| dot(omega, b).powi(2)).sum();
    p2.sqrt().clamp(0.0, 1.0).acos()
}

/// True iff no patch of `region` meets the set of normals of the linear
/// map: every cap stays at angular distance >= its half angle from
/// ker(A^T), tested exactly via the null-space angle and confirmed on a
/// directional sample grid. Patches whose ball misses the image of `f`
/// impose no constraint.
pub fn normals_clear(f: &LinearMap, region: &ConicRegion) -> bool {
    let kernel = f.kernel_of_transpose();
    if kernel.is_empty() {
        return true; // A^T injective, N_f empty
    }
    let range = f.range_basis();
    for (ball, cap) in region.patches() {
        // distance from ball center to range(A)
        let c = ball.center();
        let mut proj = vec![0.0; c.len()];
        for b in &range {
            let p = dot(c, b);
            for i in 0..c.len() {
                proj[i] += p * b[i];
            }
        }
        let dist2: f64 = c
            .iter()
            .zip(&proj)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if dist2.sqrt() >= ball.radius() {
            continue;
        }
        if angle_to_subspace(cap.omega(), &kernel) < cap.half_angle() {
            return false;
        }
        // sample-grid confirmation of the exact test
        for v in cap.sample_directions(16, 4) {
            if f.apply_transpose(&v).iter().map(|x| x * x).sum::<f64>().sqrt() < SV_TOL {
                return false;
            }
        }
    }
    true
}

fn pull_cap(f: &LinearMap, cap: &DirectionCap) -> Result<DirectionCap> {
    let w = f.apply_transpose(cap.omega());
    let wn = norm(&w);
    if wn < SV_TOL {
        return Err(Error::NormalsIntersect);
    }
    let omega: Vec<f64> = w.iter().map(|x| x / wn).collect();
    let mut widest = 0.0f64;
    for v in cap.sample_directions(24, 6) {
        let y = f.apply_transpose(&v);
        if norm(&y) < SV_TOL {
            return Err(Error::NormalsIntersect);
        }
        widest = widest.max(angle(&y, &omega));
    }
    DirectionCap::new(omega, widest.clamp(MIN_HALF_ANGLE, std::f64::consts::PI))
}

fn pull_ball(f: &LinearMap, ball: &SpatialBall, domain_radius: f64) -> SpatialBall {
    // least-squares preimage of the center; enclosing radius from the
    // smallest singular value when A is injective, the domain bound
    // otherwise (preimages of balls are then unbounded cylinders).
    let svd = f.matrix.clone().svd(true, true);
    let c = DMatrix::from_column_slice(f.dim_out(), 1, ball.center());
    let x0 = svd.solve(&c, SV_TOL).expect("svd solve");
    let center: Vec<f64> = x0.column(0).iter().copied().collect();
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .filter(|&s| s > SV_TOL)
        .fold(f64::INFINITY, f64::min);
    let injective = f.rank() == f.dim_in();
    let radius = if injective && smin.is_finite() {
        ball.radius() / smin
    } else {
        domain_radius
    };
    SpatialBall {
        center,
        radius: radius.max(1e-12),
    }
}

/// Pullback of a conic region under the linear map `f(x) = Ax`:
/// `f*L = {(x, A^T eta) : (Ax, eta) in L}` realized patchwise by the
/// least-squares ball preimage and the re-capped `A^T` image of each cap.
/// Both are conservative over-approximations; `domain_radius` bounds the
/// spatial enclosure when the map is not injective.
pub fn pullback_region(
    f: &LinearMap,
    region: &ConicRegion,
    domain_radius: f64,
) -> Result<ConicRegion> {
    if !normals_clear(f, region) {
        return Err(Error::NormalsIntersect);
    }
    let mut patches = Vec::with_capacity(region.patches().len());
    for (ball, cap) in region.patches() {
        let new_cap = pull_cap(f, cap)?;
        let new_ball = pull_ball(f, ball, domain_radius);
        patches.push((new_ball, new_cap));
    }
    Ok(ConicRegion {
        patches,
        polarity: region.polarity(),
    })
}

// ---------------------------------------------------------------------------
// Region literal syntax: `ball(x..., r) x cap(omega..., alpha)`
// ---------------------------------------------------------------------------

fn parse_call(s: &str, name: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    let body = s
        .strip_prefix(name)
        .and_then(|rest| rest.trim().strip_prefix('('))
        .and_then(|rest| rest.trim_end().strip_suffix(')'))
        .ok_or_else(|| Error::Parse(format!("expected `{name}(...)` in {s:?}")))?;
    body.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad number {tok:?}: {e}")))
        })
        .collect()
}

/// Parse one patch literal `ball(x0..., r) x cap(omega..., alpha)`.
pub fn parse_patch(s: &str) -> Result<(SpatialBall, DirectionCap)> {
    let (left, right) = s
        .split_once(" x ")
        .ok_or_else(|| Error::Parse(format!("expected `ball(...) x cap(...)` in {s:?}")))?;
    let ball_args = parse_call(left, "ball")?;
    let cap_args = parse_call(right, "cap")?;
    if ball_args.len() < 2 || cap_args.len() < 2 {
        return Err(Error::Parse("ball/cap need a center and a final scalar".into()));
    }
    let (r, center) = ball_args.split_last().unwrap();
    let (alpha, omega) = cap_args.split_last().unwrap();
    if center.len() != omega.len() {
        return Err(Error::Parse("ball and cap dimensions differ".into()));
    }
    Ok((
        SpatialBall::new(center.to_vec(), *r)?,
        DirectionCap::from_direction(omega, *alpha)?,
    ))
}
