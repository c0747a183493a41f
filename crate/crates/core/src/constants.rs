//! Physical constants (CODATA 2018).

use std::f64::consts::PI;

/// Elementary charge, C (exact).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Planck constant, J s (exact).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = PLANCK / (2.0 * PI);

/// Planck constant in eV s.
pub const PLANCK_EV_S: f64 = 4.135_667_696e-15;
