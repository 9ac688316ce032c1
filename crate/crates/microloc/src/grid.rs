//! Sampled complex fields on centered boxes and the discrete Fourier
//! transform under the convention `Fu(xi) = integral e^{-i x.xi} u(x) dx`.
//!
//! Spatial samples live at `x_i = -L/2 + i*h` (h = L/N, row-major axis
//! order); the frequency lattice is `xi_k = 2*pi*k/L` for `k` in
//! `[-N/2, N/2)` per axis, stored centered: storage index `j` on an axis
//! maps to `k = j - N/2`. Both orderings are fixed so serialized fields
//! are portable.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Mutex;

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

static PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

/// Geometry of a centered uniform box grid in dimension 1..=3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    samples: usize,
    extent: f64,
}

impl GridSpec {
    /// `samples` must be a power of two >= 32; the box is `[-extent/2, extent/2)^dim`.
    pub fn new(dim: usize, samples: usize, extent: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dim {dim} not in 1..=3")));
        }
        if samples < 32 || !samples.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "samples {samples} must be a power of two >= 32"
            )));
        }
        if extent <= 0.0 || !extent.is_finite() || extent.is_nan() {
            return Err(Error::InvalidGrid(format!("extent {extent} must be positive")));
        }
        Ok(GridSpec { dim, samples, extent })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Grid spacing h = L/N.
    pub fn spacing(&self) -> f64 {
        self.extent / self.samples as f64
    }

    /// Spatial cell volume h^n.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Frequency cell volume (2*pi/L)^n.
    pub fn freq_cell_volume(&self) -> f64 {
        (2.0 * std::f64::consts::PI / self.extent).powi(self.dim as i32)
    }

    /// Frequency lattice spacing 2*pi/L.
    pub fn freq_spacing(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.extent
    }

    /// Nyquist radius `Xi = pi*N/L` per axis.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI * self.samples as f64 / self.extent
    }

    /// Total number of lattice points N^n.
    pub fn len(&self) -> usize {
        self.samples.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Spatial coordinates of the sample at flat row-major index `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let h = self.spacing();
        let half = self.extent / 2.0;
        self.axis_indices(idx)
            .into_iter()
            .map(|i| i as f64 * h - half)
            .collect()
    }

    /// Frequency vector of the centered lattice point at flat index `idx`.
    pub fn frequency(&self, idx: usize) -> Vec<f64> {
        let dxi = self.freq_spacing();
        let half = (self.samples / 2) as i64;
        self.axis_indices(idx)
            .into_iter()
            .map(|j| (j as i64 - half) as f64 * dxi)
            .collect()
    }

    /// Integer frequency multi-index `k` (each in [-N/2, N/2)) at flat index `idx`.
    pub fn freq_index(&self, idx: usize) -> Vec<i64> {
        let half = (self.samples / 2) as i64;
        self.axis_indices(idx)
            .into_iter()
            .map(|j| j as i64 - half)
            .collect()
    }

    /// Row-major axis indices of a flat index.
    pub fn axis_indices(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0usize; self.dim];
        for d in (0..self.dim).rev() {
            out[d] = idx % self.samples;
            idx /= self.samples;
        }
        out
    }

    /// Flat row-major index from axis indices.
    pub fn flat_index(&self, axes: &[usize]) -> usize {
        debug_assert_eq!(axes.len(), self.dim);
        let mut idx = 0usize;
        for &a in axes {
            idx = idx * self.samples + (a % self.samples);
        }
        idx
    }

    /// Flat index of the centered-lattice frequency `k` (each in [-N/2, N/2)).
    pub fn flat_freq_index(&self, k: &[i64]) -> usize {
        let half = (self.samples / 2) as i64;
        let mut idx = 0usize;
        for &ki in k {
            debug_assert!(ki >= -half && ki < half);
            idx = idx * self.samples + (ki + half) as usize;
        }
        idx
    }

    /// |xi| of the centered lattice point at flat index `idx`.
    pub fn freq_norm(&self, idx: usize) -> f64 {
        self.frequency(idx).iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Japanese bracket `<x> = (1 + |x|^2)^(1/2)`.
pub fn bracket(xi: &[f64]) -> f64 {
    (1.0 + xi.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// Immutable sampled complex field (`channels` x N^n samples, channel-major).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    spec: GridSpec,
    channels: usize,
    data: Vec<Complex64>,
}

impl GridField {
    pub fn new(spec: GridSpec, channels: usize, data: Vec<Complex64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidField("channels must be >= 1".into()));
        }
        if data.len() != channels * spec.len() {
            return Err(Error::InvalidField(format!(
                "expected {} samples, got {}",
                channels * spec.len(),
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidField("non-finite sample".into()));
        }
        Ok(GridField { spec, channels, data })
    }

    /// Scalar field from a function of the sample position.
    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> Complex64) -> Result<Self> {
        let data: Vec<Complex64> = (0..spec.len()).map(|i| f(&spec.point(i))).collect();
        GridField::new(spec, 1, data)
    }

    /// Vector field from a function returning one value per channel.
    pub fn from_fn_vec(
        spec: GridSpec,
        channels: usize,
        f: impl Fn(&[f64]) -> Vec<Complex64>,
    ) -> Result<Self> {
        let mut data = vec![Complex64::default(); channels * spec.len()];
        for i in 0..spec.len() {
            let vals = f(&spec.point(i));
            assert_eq!(vals.len(), channels);
            for (c, v) in vals.into_iter().enumerate() {
                data[c * spec.len() + i] = v;
            }
        }
        GridField::new(spec, channels, data)
    }

    pub fn zero(spec: GridSpec, channels: usize) -> Self {
        GridField {
            spec,
            channels,
            data: vec![Complex64::default(); channels * spec.len()],
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.spec.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Pointwise map of all samples into a new field.
    pub fn map(&self, f: impl Fn(usize, Complex64) -> Complex64) -> GridField {
        let n = self.spec.len();
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &z)| f(i % n, z))
            .collect();
        GridField {
            spec: self.spec,
            channels: self.channels,
            data,
        }
    }

    /// Linear combination `self + c * other`.
    pub fn add_scaled(&self, other: &GridField, c: Complex64) -> Result<GridField> {
        if self.spec != other.spec || self.channels != other.channels {
            return Err(Error::InvalidField("field shapes differ".into()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + c * b)
            .collect();
        Ok(GridField {
            spec: self.spec,
            channels: self.channels,
            data,
        })
    }

    pub fn scale(&self, c: Complex64) -> GridField {
        GridField {
            spec: self.spec,
            channels: self.channels,
            data: self.data.iter().map(|&z| c * z).collect(),
        }
    }

    /// L2 norm over the box: `(sum |u|^2 h^n)^(1/2)`, all channels.
    pub fn l2_norm(&self) -> f64 {
        (self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.spec.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Fourier coefficients on the centered frequency lattice.
#[derive(Debug, Clone)]
pub struct SpectralField {
    spec: GridSpec,
    channels: usize,
    coeff: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(spec: GridSpec, channels: usize, coeff: Vec<Complex64>) -> Result<Self> {
        if coeff.len() != channels * spec.len() {
            return Err(Error::InvalidField("coefficient length mismatch".into()));
        }
        Ok(SpectralField { spec, channels, coeff })
    }

    /// Scalar spectral field from a function of the lattice frequency.
    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let coeff = (0..spec.len()).map(|i| f(&spec.frequency(i))).collect();
        SpectralField { spec, channels: 1, coeff }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.spec.len();
        &self.coeff[c * n..(c + 1) * n]
    }

    pub fn coeff(&self) -> &[Complex64] {
        &self.coeff
    }

    pub fn map(&self, f: impl Fn(usize, Complex64) -> Complex64) -> SpectralField {
        let n = self.spec.len();
        let coeff = self
            .coeff
            .iter()
            .enumerate()
            .map(|(i, &z)| f(i % n, z))
            .collect();
        SpectralField {
            spec: self.spec,
            channels: self.channels,
            coeff,
        }
    }
}

fn fft_axis(data: &mut [Complex64], spec: &GridSpec, axis: usize, inverse: bool) {
    let n = spec.samples;
    let fft = {
        let mut planner = PLANNER.lock().unwrap();
        if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        }
    };
    let total = spec.len();
    let stride = spec.samples.pow((spec.dim - 1 - axis) as u32);
    let mut line = vec![Complex64::default(); n];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    // iterate over all 1-D lines along `axis`
    let lines = total / n;
    for l in 0..lines {
        // decompose l into (outer, inner) around the axis
        let inner = l % stride;
        let outer = l / stride;
        let base = outer * stride * n + inner;
        for (t, slot) in line.iter_mut().enumerate() {
            *slot = data[base + t * stride];
        }
        fft.process_with_scratch(&mut line, &mut scratch);
        for (t, &v) in line.iter().enumerate() {
            data[base + t * stride] = v;
        }
    }
}

/// Map centered storage order to FFT order along every axis (an involution,
/// since N is even: index j <-> (j + N/2) mod N) with the alternating-sign
/// twist that carries the `e^{i pi k}` phase of the centered box.
fn shift_and_sign(spec: &GridSpec, src: &[Complex64], to_centered: bool) -> Vec<Complex64> {
    let n = spec.samples;
    let total = spec.len();
    let mut out = vec![Complex64::default(); total];
    for idx in 0..total {
        let axes = spec.axis_indices(idx);
        let mut sign_pow = 0usize;
        let mut other = 0usize;
        for &j in &axes {
            let shifted = (j + n / 2) % n;
            other = other * n + shifted;
            // (-1)^k with k = j - N/2 on the centered side
            let k = if to_centered { j } else { shifted };
            sign_pow += k;
        }
        let sign = if sign_pow.is_multiple_of(2) { 1.0 } else { -1.0 };
        if to_centered {
            // out is centered at idx, fft array holds value at `other`
            out[idx] = src[other] * sign;
        } else {
            out[other] = src[idx] * sign;
        }
    }
    out
}

/// Discrete realization of `Fu(xi) = integral e^{-i x.xi} u(x) dx`:
/// `h^n` times the DFT with the centered-box phase twist.
pub fn forward_transform(u: &GridField) -> SpectralField {
    let spec = *u.spec();
    let scale = spec.cell_volume();
    let n = spec.len();
    let mut coeff = Vec::with_capacity(u.channels() * n);
    for c in 0..u.channels() {
        let mut work: Vec<Complex64> = u.channel(c).to_vec();
        for axis in 0..spec.dim() {
            fft_axis(&mut work, &spec, axis, false);
        }
        let mut centered = shift_and_sign(&spec, &work, true);
        for z in &mut centered {
            *z *= scale;
        }
        coeff.extend_from_slice(&centered);
    }
    SpectralField {
        spec,
        channels: u.channels(),
        coeff,
    }
}

/// Exact lattice inverse of [`forward_transform`]: `(2pi)^{-n} sum e^{i x.xi} U(xi) dxi`.
pub fn inverse_transform(us: &SpectralField) -> GridField {
    let spec = *us.spec();
    let n = spec.len();
    let scale = 1.0 / spec.extent().powi(spec.dim() as i32);
    let mut data = Vec::with_capacity(us.channels() * n);
    for c in 0..us.channels() {
        let mut work = shift_and_sign(&spec, us.channel(c), false);
        for axis in 0..spec.dim() {
            fft_axis(&mut work, &spec, axis, true);
        }
        for z in &mut work {
            *z *= scale;
        }
        data.extend_from_slice(&work);
    }
    GridField {
        spec,
        channels: us.channels(),
        data,
    }
}

/// Fraction of the spectral energy carried by the aliasing-prone outer
/// octave `|xi| > Xi/2`. Whether a distribution is faithfully
/// representable at a given (N, L) is a resolution question; this
/// diagnostic reports it instead of guessing. Values near zero mean the
/// field is well inside the usable band.
pub fn bandwidth_utilization(u: &GridField) -> f64 {
    let us = forward_transform(u);
    let spec = us.spec();
    let top = spec.nyquist() / 2.0;
    let mut outer = 0.0;
    let mut total = 0.0;
    for c in 0..us.channels() {
        let ch = us.channel(c);
        for (i, z) in ch.iter().enumerate() {
            let e = z.norm_sqr();
            total += e;
            if spec.freq_norm(i) > top {
                outer += e;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outer / total
    }
}

/// Sobolev norm `((2pi)^{-n} sum <xi>^{2r} |Fu|^2 dxi)^{1/2}` over the full
/// lattice, all channels summed.
pub fn sobolev_norm(u: &GridField, r: f64) -> f64 {
    let us = forward_transform(u);
    let spec = us.spec();
    let dxi = spec.freq_cell_volume();
    let two_pi_n = (2.0 * std::f64::consts::PI).powi(spec.dim() as i32);
    let mut total = 0.0;
    for c in 0..us.channels() {
        let ch = us.channel(c);
        for (i, z) in ch.iter().enumerate() {
            let w = bracket(&spec.frequency(i)).powf(2.0 * r);
            total += w * z.norm_sqr();
        }
    }
    (total * dxi / two_pi_n).sqrt()
}

// ---------------------------------------------------------------------------
// MFLD1 field file format
// ---------------------------------------------------------------------------

/// Write a field in the `MFLD1` format: ASCII header lines `MFLD1`,
/// `dim=`, `samples=`, `extent=`, `channels=`, a blank line, then row-major
/// complex samples as little-endian (re, im) f64 pairs.
pub fn write_mfld<W: Write>(w: &mut W, field: &GridField) -> Result<()> {
    writeln!(w, "MFLD1")?;
    writeln!(w, "dim={}", field.spec().dim())?;
    writeln!(w, "samples={}", field.spec().samples())?;
    writeln!(w, "extent={:.17e}", field.spec().extent())?;
    writeln!(w, "channels={}", field.channels())?;
    writeln!(w)?;
    for z in field.data() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_mfld(path: &Path, field: &GridField) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_mfld(&mut w, field)
}

pub fn read_mfld<R: Read>(r: &mut R) -> Result<GridField> {
    let mut br = BufReader::new(r);
    let mut line = String::new();
    br.read_line(&mut line)?;
    if line.trim_end() != "MFLD1" {
        return Err(Error::Parse(format!("bad magic {line:?}, expected MFLD1")));
    }
    let mut dim = None;
    let mut samples = None;
    let mut extent = None;
    let mut channels = None;
    loop {
        line.clear();
        if br.read_line(&mut line)? == 0 {
            return Err(Error::Parse("unexpected end of header".into()));
        }
        let t = line.trim_end();
        if t.is_empty() {
            break;
        }
        let (key, value) = t
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad header line {t:?}")))?;
        match key {
            "dim" => dim = Some(value.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
            "samples" => {
                samples = Some(value.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?)
            }
            "extent" => {
                extent = Some(value.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?)
            }
            "channels" => {
                channels = Some(value.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?)
            }
            other => return Err(Error::Parse(format!("unknown header key {other:?}"))),
        }
    }
    let spec = GridSpec::new(
        dim.ok_or_else(|| Error::Parse("missing dim".into()))?,
        samples.ok_or_else(|| Error::Parse("missing samples".into()))?,
        extent.ok_or_else(|| Error::Parse("missing extent".into()))?,
    )?;
    let channels = channels.ok_or_else(|| Error::Parse("missing channels".into()))?;
    let count = channels * spec.len();
    let mut buf = vec![0u8; count * 16];
    br.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect();
    GridField::new(spec, channels, data)
}

pub fn load_mfld(path: &Path) -> Result<GridField> {
    let mut f = std::fs::File::open(path)?;
    read_mfld(&mut f)
}
