//! Closed-form model parameters of a transmon chain coupled to a resonator,
//! computed from the circuit element values.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::constants::{ELEMENTARY_CHARGE, HBAR};
use crate::error::{domain, Result};

/// Raw circuit element values in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitElements {
    /// Capacitance of each of the two Josephson junctions, F.
    pub c_josephson: f64,
    /// Shunt capacitance, F.
    pub c_shunt: f64,
    /// Gate capacitance, F.
    pub c_gate: f64,
    /// Qubit-resonator coupling capacitance, F.
    pub c_coupler: f64,
    /// Capacitance between neighbouring qubits, F.
    pub c_neighbor: f64,
    /// Resonator capacitance, F.
    pub c_resonator: f64,
    /// Resonator inductance, H.
    pub l_resonator: f64,
    /// Josephson energy, J.
    pub e_josephson: f64,
    pub n_qubits: usize,
}

impl CircuitElements {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c_josephson", self.c_josephson),
            ("c_shunt", self.c_shunt),
            ("c_gate", self.c_gate),
            ("c_coupler", self.c_coupler),
            ("c_resonator", self.c_resonator),
            ("l_resonator", self.l_resonator),
            ("e_josephson", self.e_josephson),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        // a vanishing neighbour capacitance is allowed and switches J off
        if !(self.c_neighbor.is_finite() && self.c_neighbor >= 0.0) {
            return Err(domain(format!(
                "c_neighbor must be non-negative and finite, got {}",
                self.c_neighbor
            )));
        }
        if self.n_qubits == 0 {
            return Err(domain("n_qubits must be at least 1"));
        }
        Ok(())
    }

    /// `C₀ = 2C_J + C_B + C_g + C_c`.
    pub fn c_total(&self) -> f64 {
        2.0 * self.c_josephson + self.c_shunt + self.c_gate + self.c_coupler
    }

    /// Returns a copy with every capacitance multiplied by `s`.
    pub fn scale_capacitances(&self, s: f64) -> Self {
        Self {
            c_josephson: self.c_josephson * s,
            c_shunt: self.c_shunt * s,
            c_gate: self.c_gate * s,
            c_coupler: self.c_coupler * s,
            c_neighbor: self.c_neighbor * s,
            c_resonator: self.c_resonator * s,
            ..*self
        }
    }
}

/// Model parameters derived from the circuit, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// `E_C`, J.
    pub e_charging: f64,
    /// rad/s.
    pub omega_q: f64,
    /// rad/s.
    pub omega_r: f64,
    /// rad/s.
    pub g_coupling: f64,
    pub beta: f64,
    /// rad/s.
    pub j_coupling: f64,
    pub ej_ec_ratio: f64,
}

/// Resonator frequency formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonatorConvention {
    /// `ω_r = 2π / √(L_r (C_r + N C_c))`, the form used by the model.
    #[default]
    AsPrinted,
    /// `ω_r = 1 / √(L_r (C_r + N C_c))`, the usual LC angular frequency.
    Conventional,
}

/// Symmetric tridiagonal capacitance matrix of an open chain: `c0 + c` on the
/// two end sites, `c0 + 2c` inside, `−c` between neighbours. A single site
/// gives `[c0]`.
pub fn build_capacitance_matrix(n: usize, c0: f64, c: f64) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(domain("capacitance matrix needs at least one site"));
    }
    if !(c0.is_finite() && c0 > 0.0) || !(c.is_finite() && c > 0.0) {
        return Err(domain(format!(
            "capacitances must be positive, got c0 = {c0}, c = {c}"
        )));
    }
    let mut m = Array2::zeros((n, n));
    if n == 1 {
        m[[0, 0]] = c0;
        return Ok(m);
    }
    for i in 0..n {
        let neighbours = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
        m[[i, i]] = c0 + neighbours * c;
        if i + 1 < n {
            m[[i, i + 1]] = -c;
            m[[i + 1, i]] = -c;
        }
    }
    Ok(m)
}

/// `√(16 E_C E_J)` in whatever energy-equals-frequency units the caller uses.
pub fn transmon_frequency(e_charging: f64, e_josephson: f64) -> f64 {
    (16.0 * e_charging * e_josephson).sqrt()
}

pub fn derive_params(elem: &CircuitElements) -> Result<DerivedParams> {
    derive_params_with(elem, ResonatorConvention::AsPrinted)
}

pub fn derive_params_with(
    elem: &CircuitElements,
    convention: ResonatorConvention,
) -> Result<DerivedParams> {
    elem.validate()?;
    let e2 = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE;
    let c0 = elem.c_total();
    let e_charging = e2 / (2.0 * c0);
    let omega_q = transmon_frequency(e_charging, elem.e_josephson) / HBAR;

    let c_loaded = elem.c_resonator + elem.n_qubits as f64 * elem.c_coupler;
    let numerator = match convention {
        ResonatorConvention::AsPrinted => 2.0 * PI,
        ResonatorConvention::Conventional => 1.0,
    };
    let omega_r = numerator / (elem.l_resonator * c_loaded).sqrt();

    let beta = elem.c_neighbor / (c0 + elem.c_neighbor);
    let g_coupling =
        (omega_q * omega_r * e_charging * elem.c_coupler * elem.c_coupler / (e2 * c_loaded)).sqrt();

    Ok(DerivedParams {
        e_charging,
        omega_q,
        omega_r,
        g_coupling,
        beta,
        j_coupling: omega_q * beta / 2.0,
        ej_ec_ratio: elem.e_josephson / e_charging,
    })
}

/// Coupling regime by `g/ω_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "SC")]
    Strong,
    #[serde(rename = "weak-USC")]
    WeakUltrastrong,
    #[serde(rename = "strong-USC")]
    StrongUltrastrong,
    #[serde(rename = "DSC")]
    DeepStrong,
}

impl Regime {
    pub const WEAK_USC: f64 = 0.1;
    pub const STRONG_USC: f64 = 0.3;
    pub const DSC: f64 = 1.0;

    pub fn from_ratio(ratio: f64) -> Self {
        if ratio < Self::WEAK_USC {
            Regime::Strong
        } else if ratio < Self::STRONG_USC {
            Regime::WeakUltrastrong
        } else if ratio < Self::DSC {
            Regime::StrongUltrastrong
        } else {
            Regime::DeepStrong
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Regime::Strong => "SC",
            Regime::WeakUltrastrong => "weak-USC",
            Regime::StrongUltrastrong => "strong-USC",
            Regime::DeepStrong => "DSC",
        }
    }

    /// Both ultrastrong bands.
    pub fn is_ultrastrong(&self) -> bool {
        matches!(self, Regime::WeakUltrastrong | Regime::StrongUltrastrong)
    }
}

/// Minimum `E_J/E_C` for the transmon approximation.
pub const TRANSMON_MIN_RATIO: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    pub g_over_omega_r: f64,
    pub regime: Regime,
    pub transmon_valid: bool,
}

pub fn classify_regime(params: &DerivedParams) -> RegimeReport {
    let ratio = params.g_coupling / params.omega_r;
    RegimeReport {
        g_over_omega_r: ratio,
        regime: Regime::from_ratio(ratio),
        transmon_valid: params.ej_ec_ratio >= TRANSMON_MIN_RATIO,
    }
}

/// Parameter record emitted by the `params` command.
#[derive(Debug, Clone, Serialize)]
pub struct ParamReport {
    pub elements: CircuitElements,
    pub resonator_convention: ResonatorConvention,
    pub derived: DerivedParams,
    pub f_q_ghz: f64,
    pub f_r_ghz: f64,
    pub g_mhz: f64,
    pub j_mhz: f64,
    /// Dimensionless model parameters in units of `ω_r`.
    pub omega_q_over_omega_r: f64,
    pub g_over_omega_r: f64,
    pub j_over_omega_r: f64,
    pub regime: Regime,
    pub transmon_valid: bool,
    /// Present when `ω_r` carries the extra 2π of the printed formula.
    pub note: Option<String>,
}

impl ParamReport {
    pub fn new(elements: &CircuitElements, convention: ResonatorConvention) -> Result<Self> {
        let derived = derive_params_with(elements, convention)?;
        let regime = classify_regime(&derived);
        let to_hz = |w: f64| w / (2.0 * PI);
        Ok(Self {
            elements: *elements,
            resonator_convention: convention,
            derived,
            f_q_ghz: to_hz(derived.omega_q) * 1e-9,
            f_r_ghz: to_hz(derived.omega_r) * 1e-9,
            g_mhz: to_hz(derived.g_coupling) * 1e-6,
            j_mhz: to_hz(derived.j_coupling) * 1e-6,
            omega_q_over_omega_r: derived.omega_q / derived.omega_r,
            g_over_omega_r: regime.g_over_omega_r,
            j_over_omega_r: derived.j_coupling / derived.omega_r,
            regime: regime.regime,
            transmon_valid: regime.transmon_valid,
            note: (convention == ResonatorConvention::AsPrinted).then(|| {
                "omega_r = 2*pi/sqrt(L_r (C_r + N C_c)); 2*pi times the LC angular frequency"
                    .to_string()
            }),
        })
    }
}
