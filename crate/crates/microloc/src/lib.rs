//! Numerical microlocal analysis on sampled fields over centered boxes in
//! R^n (n <= 3): cone-restricted Sobolev seminorms, wave front set and
//! compactness scanners, pseudo-differential operators, smoothing
//! operators, pullback-regularity experiments, microlocal defect measure
//! estimation and compensated-compactness runs.

pub mod cones;
pub mod compcomp;
pub mod defect;
pub mod error;
pub mod grid;
pub mod psido;
pub mod pullback;
pub mod seminorm;
pub mod wavefront;

pub use error::{Error, Result};
pub use grid::{
    bracket, forward_transform, inverse_transform, sobolev_norm, GridField, GridSpec,
    SpectralField,
};
