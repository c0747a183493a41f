//! Battery observables and summary scalars: reduced state, stored energy,
//! charging power, stable energy and peak power.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Probe, Trajectory};
use crate::error::{domain, Error, Result};
use crate::hilbert::{DensityMatrix, Operator, SpaceSpec};
use crate::model::{
    build_battery_hamiltonian, build_total_hamiltonian, collective_sz, ModelParams,
};

/// Probe names used by [`battery_probes`].
pub const PROBE_ENERGY: &str = "battery_energy";
pub const PROBE_PHOTONS: &str = "photons";
pub const PROBE_SZ: &str = "sz";
pub const PROBE_TOTAL: &str = "total_energy";

/// Partial trace over the resonator: `ρ_q[s, s'] = Σ_n ρ[nD + s, nD + s']`.
pub fn battery_reduced_state(rho: &DensityMatrix, space: &SpaceSpec) -> Result<DensityMatrix> {
    if rho.dim() != space.dim() {
        return Err(Error::Dimension {
            expected: space.dim(),
            got: rho.dim(),
        });
    }
    let b = space.battery_dim();
    let mut out = Array2::zeros((b, b));
    for n in 0..space.fock_cutoff {
        let block = rho
            .matrix
            .slice(ndarray::s![n * b..(n + 1) * b, n * b..(n + 1) * b]);
        out += &block;
    }
    Ok(DensityMatrix::new(out))
}

/// `E = tr(H_q ρ_q)`; fails if the imaginary part exceeds `1e−10`.
pub fn battery_energy(rho_q: &DensityMatrix, h_battery: &Operator) -> Result<f64> {
    let e = rho_q.expectation(h_battery)?;
    if e.im.abs() > 1e-10 {
        return Err(Error::Invariant(format!(
            "battery energy has imaginary part {:e}",
            e.im
        )));
    }
    Ok(e.re)
}

/// `ΔE = E(t) − E_G`.
pub fn charging_energy(e_t: f64, e_g: f64) -> f64 {
    e_t - e_g
}

/// Sanity check on the first sample of a run.
pub fn check_initial_charge(delta_e0: f64) -> Result<()> {
    if delta_e0 < -1e-9 {
        return Err(Error::Invariant(format!(
            "initial charging energy {delta_e0:e} is negative"
        )));
    }
    Ok(())
}

/// Average-power definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerConvention {
    /// `ΔE(t)/t`, zero at `t = 0`.
    #[default]
    Delta,
    /// `E(t)/t`, undefined at `t = 0`.
    Literal,
}

impl std::str::FromStr for PowerConvention {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "delta" => Ok(Self::Delta),
            "literal" => Ok(Self::Literal),
            other => Err(format!(
                "unknown power convention {other:?} (delta|literal)"
            )),
        }
    }
}

/// `P(t)` from the charging energy `ΔE(t)` and the ground energy `E_G`.
pub fn average_power(
    delta_e: f64,
    e_ground: f64,
    t: f64,
    convention: PowerConvention,
) -> Result<f64> {
    match convention {
        PowerConvention::Delta if t == 0.0 => Ok(0.0),
        PowerConvention::Delta if t > 0.0 => Ok(delta_e / t),
        PowerConvention::Literal if t > 0.0 => Ok((delta_e + e_ground) / t),
        _ => Err(domain(format!("average power needs t > 0, got {t}"))),
    }
}

/// `(⟨S_z⟩, ⟨S_z⟩/N)` of a battery state.
pub fn sz_average(rho_q: &DensityMatrix, space: &SpaceSpec) -> Result<(f64, f64)> {
    let total = rho_q.expectation(&collective_sz(space)?)?.re;
    Ok((total, total / space.n_sites as f64))
}

/// Stable-energy detection settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StableConfig {
    pub window: f64,
    pub rel_tol: f64,
}

impl Default for StableConfig {
    fn default() -> Self {
        Self {
            window: 50.0,
            rel_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StableEnergy {
    /// Mean of `ΔE` over the trailing window.
    pub value: f64,
    pub settled: bool,
    /// Earliest window end from which every later window passes.
    pub settle_time: Option<f64>,
    /// `std / |mean|` of the trailing window.
    pub rel_std: f64,
}

/// Relative spread `std/|mean|` over `[t_end − window, t_end]` for every
/// sample `t_end` at least one window after the start.
fn window_spreads(times: &[f64], values: &[f64], window: f64) -> Vec<(usize, f64, f64)> {
    let mut s1 = vec![0.0; values.len() + 1];
    for (k, v) in values.iter().enumerate() {
        s1[k + 1] = s1[k] + v;
    }
    let t0 = times[0];
    let mut out = Vec::new();
    let mut start = 0;
    for end in 0..times.len() {
        if times[end] - t0 < window - 1e-9 {
            continue;
        }
        while times[end] - times[start] > window + 1e-9 {
            start += 1;
        }
        let n = (end + 1 - start) as f64;
        let mean = (s1[end + 1] - s1[start]) / n;
        // second pass over the window avoids cancellation in the variance
        let var = values[start..=end]
            .iter()
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / n;
        let rel = if mean == 0.0 {
            if var == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            var.sqrt() / mean.abs()
        };
        out.push((end, mean, rel));
    }
    out
}

/// `E_s` as the trailing-window mean once its relative spread drops below
/// `rel_tol`.
pub fn detect_stable_energy(
    times: &[f64],
    delta_e: &[f64],
    cfg: &StableConfig,
) -> Result<StableEnergy> {
    if times.len() != delta_e.len() {
        return Err(Error::Dimension {
            expected: times.len(),
            got: delta_e.len(),
        });
    }
    let span = match (times.first(), times.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    if span < 2.0 * cfg.window - 1e-9 {
        return Err(Error::TrajectoryTooShort {
            span,
            needed: 2.0 * cfg.window,
        });
    }
    let spreads = window_spreads(times, delta_e, cfg.window);
    let &(_, value, rel_std) = spreads.last().expect("span covers a window");
    let settled = rel_std < cfg.rel_tol;
    let settle_time = settled.then(|| {
        let mut first = spreads.len() - 1;
        while first > 0 && spreads[first - 1].2 < cfg.rel_tol {
            first -= 1;
        }
        times[spreads[first].0]
    });
    Ok(StableEnergy {
        value,
        settled,
        settle_time,
        rel_std,
    })
}

/// Peak of `P(t)` over `t > 0` with three-point parabolic refinement.
pub fn max_power(
    times: &[f64],
    delta_e: &[f64],
    e_ground: f64,
    convention: PowerConvention,
) -> Result<(f64, f64)> {
    let mut p = Vec::with_capacity(times.len());
    let mut ts = Vec::with_capacity(times.len());
    for (&t, &de) in times.iter().zip(delta_e) {
        if t > 0.0 {
            p.push(average_power(de, e_ground, t, convention)?);
            ts.push(t);
        }
    }
    if p.is_empty() {
        return Err(Error::TrajectoryTooShort {
            span: 0.0,
            needed: f64::MIN_POSITIVE,
        });
    }
    let k = p
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > p[best] { i } else { best });
    if k == 0 || k + 1 == p.len() {
        return Ok((p[k], ts[k]));
    }
    Ok(parabolic_peak(
        (ts[k - 1], p[k - 1]),
        (ts[k], p[k]),
        (ts[k + 1], p[k + 1]),
    ))
}

fn parabolic_peak(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> (f64, f64) {
    let (x0, y0) = a;
    let (x1, y1) = b;
    let (x2, y2) = c;
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    if curv.is_nan() || curv >= 0.0 {
        return (y1, x1);
    }
    // y = y1 + s (x − x1) + curv (x − x1)², s from the divided differences
    let slope = d01 + curv * (x1 - x0);
    let dx = -slope / (2.0 * curv);
    let x = x1 + dx;
    if x < x0 || x > x2 {
        return (y1, x1);
    }
    let y = y1 + slope * dx + curv * dx * dx;
    if y >= y1 {
        (y, x)
    } else {
        (y1, x1)
    }
}

/// Probes for battery energy, photon number, `Σσ^z` (qubits) and the total
/// energy, all on the full space.
pub fn battery_probes(p: &ModelParams) -> Result<Vec<Probe>> {
    let space = p.space()?;
    let h_q = space.lift_battery(&build_battery_hamiltonian(p)?)?;
    let mut probes = vec![
        Probe::new(PROBE_ENERGY, &h_q),
        Probe::new(PROBE_PHOTONS, &space.photon_number()?),
        Probe::new(PROBE_TOTAL, &build_total_hamiltonian(p)?),
    ];
    if space.is_qubit() {
        probes.push(Probe::new(
            PROBE_SZ,
            &space.lift_battery(&collective_sz(&space)?)?,
        ));
    }
    Ok(probes)
}

/// Summary scalars of one charging run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryMetrics {
    pub stable_energy: f64,
    pub max_power: f64,
    pub t_at_max_power: f64,
    pub settled: bool,
    pub settle_time: Option<f64>,
    pub stable_rel_std: f64,
    pub max_charging_energy: f64,
    pub power_convention: PowerConvention,
    /// Battery charge of the Liouvillian steady state, when computed.
    pub steady_state_energy: Option<f64>,
    /// `|E_s − E_ss|`, when the steady state is known.
    pub steady_state_deviation: Option<f64>,
}

/// `ΔE(t)` series of a trajectory recorded with [`battery_probes`].
pub fn charging_series(traj: &Trajectory, e_ground: f64) -> Result<Vec<f64>> {
    let e = traj
        .series(PROBE_ENERGY)
        .ok_or_else(|| domain("trajectory lacks the battery energy probe"))?;
    let out: Vec<f64> = e.iter().map(|v| charging_energy(*v, e_ground)).collect();
    if let Some(first) = out.first() {
        check_initial_charge(*first)?;
    }
    Ok(out)
}

pub fn summarize(
    traj: &Trajectory,
    e_ground: f64,
    stable: &StableConfig,
    convention: PowerConvention,
    steady_state_energy: Option<f64>,
) -> Result<SummaryMetrics> {
    let de = charging_series(traj, e_ground)?;
    let s = detect_stable_energy(&traj.times, &de, stable)?;
    let (max_power, t_at_max_power) = max_power(&traj.times, &de, e_ground, convention)?;
    Ok(SummaryMetrics {
        stable_energy: s.value,
        max_power,
        t_at_max_power,
        settled: s.settled,
        settle_time: s.settle_time,
        stable_rel_std: s.rel_std,
        max_charging_energy: de.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        power_convention: convention,
        steady_state_energy,
        steady_state_deviation: steady_state_energy.map(|e| (e - s.value).abs()),
    })
}

/// Battery charge `tr(H_q ρ_q) − E_G` of a full-space state.
pub fn state_charge(rho: &DensityMatrix, p: &ModelParams, e_ground: f64) -> Result<f64> {
    let space = p.space()?;
    let rho_q = battery_reduced_state(rho, &space)?;
    Ok(charging_energy(
        battery_energy(&rho_q, &build_battery_hamiltonian(p)?)?,
        e_ground,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::StateVector;
    use crate::linalg;
    use crate::model::ground_state;
    use num_complex::Complex64;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn reduced_state_of_product_and_bell_states() {
        let space = SpaceSpec::new(1, 2, 3).unwrap();
        let rho_q = DensityMatrix::new(ndarray::array![
            [c(0.3), Complex64::new(0.1, 0.2)],
            [Complex64::new(0.1, -0.2), c(0.7)]
        ]);
        let rho_r = StateVector::fock(3, 1).unwrap().to_density();
        let full = DensityMatrix::new(linalg::kron(&rho_r.matrix, &rho_q.matrix));
        let out = battery_reduced_state(&full, &space).unwrap();
        assert_eq!(out, rho_q);
        assert!((out.trace() - full.trace()).norm() < 1e-12);

        // (|0,g⟩ + |1,e⟩)/√2
        let space = SpaceSpec::new(1, 2, 2).unwrap();
        let h = 0.5f64.sqrt();
        let bell = StateVector::new(ndarray::arr1(&[c(h), c(0.0), c(0.0), c(h)]));
        let out = battery_reduced_state(&bell.to_density(), &space).unwrap();
        let half = Array2::from_diag(&ndarray::arr1(&[c(0.5), c(0.5)]));
        assert!(linalg::max_abs(&(out.matrix - half)) < 1e-15);
    }

    #[test]
    fn battery_energy_examples() {
        let p = ModelParams::resonant_qubits(3, 1.0, 0.0, 4);
        let h = build_battery_hamiltonian(&p).unwrap();
        let (eg, g) = ground_state(&h).unwrap();
        assert!((battery_energy(&g.to_density(), &h).unwrap() - eg).abs() < 1e-14);
        let mut top = Array2::zeros((8, 8));
        top[[7, 7]] = c(1.0);
        assert!((battery_energy(&DensityMatrix::new(top), &h).unwrap() - 1.5).abs() < 1e-14);

        // random state against the eigenbasis-weighted sum
        let p = ModelParams::resonant_qubits(3, 1.0, 0.8, 4);
        let h = build_battery_hamiltonian(&p).unwrap();
        let (vals, vecs) = linalg::eigh(h.matrix()).unwrap();
        let a = Array2::from_shape_fn((8, 8), |(i, j)| {
            Complex64::new(((i * 3 + j) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64)
        });
        let rho = a.dot(&linalg::adjoint(&a));
        let tr = linalg::trace(&rho);
        let rho = DensityMatrix::new(rho.mapv(|z| z / tr));
        let weights = linalg::adjoint(&vecs).dot(&rho.matrix).dot(&vecs);
        let oracle: f64 = (0..8).map(|n| weights[[n, n]].re * vals[n]).sum();
        assert!((battery_energy(&rho, &h).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn energy_and_power_arithmetic() {
        assert!((charging_energy(1.2, -1.5) - 2.7).abs() < 1e-15);
        assert_eq!(charging_energy(-1.5, -1.5), 0.0);
        assert_eq!(
            average_power(2.0, -1.0, 4.0, PowerConvention::Delta).unwrap(),
            0.5
        );
        assert_eq!(
            average_power(2.0, -1.0, 0.0, PowerConvention::Delta).unwrap(),
            0.0
        );
        assert_eq!(
            average_power(2.0, -1.0, 4.0, PowerConvention::Literal).unwrap(),
            0.25
        );
        assert!(average_power(2.0, -1.0, 0.0, PowerConvention::Literal).is_err());
        assert!(check_initial_charge(-1e-6).is_err());
        // constant ΔE decays as 1/t
        let p1 = average_power(3.0, 0.0, 10.0, PowerConvention::Delta).unwrap();
        let p2 = average_power(3.0, 0.0, 20.0, PowerConvention::Delta).unwrap();
        assert!((p1 / p2 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn sz_examples() {
        let p = ModelParams::resonant_qubits(3, 1.0, 0.0, 4);
        let space = p.space().unwrap();
        let (_, g) = ground_state(&build_battery_hamiltonian(&p).unwrap()).unwrap();
        assert_eq!(sz_average(&g.to_density(), &space).unwrap(), (-3.0, -1.0));
        let mixed = DensityMatrix::new(Array2::eye(8).mapv(|z: Complex64| z / 8.0));
        assert!(sz_average(&mixed, &space).unwrap().0.abs() < 1e-15);
    }

    #[test]
    fn stable_energy_detection() {
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.1).collect();
        let flat = vec![1.25; times.len()];
        let s = detect_stable_energy(&times, &flat, &StableConfig::default()).unwrap();
        assert!(s.settled && s.value == 1.25);
        assert_eq!(s.settle_time, Some(50.0));

        let wave: Vec<f64> = times.iter().map(|t| 1.0 + 0.5 * t.sin()).collect();
        let s = detect_stable_energy(&times, &wave, &StableConfig::default()).unwrap();
        assert!(!s.settled && s.settle_time.is_none());

        let relax: Vec<f64> = times.iter().map(|t| 2.0 - (-0.2 * t).exp()).collect();
        let s = detect_stable_energy(&times, &relax, &StableConfig::default()).unwrap();
        assert!(s.settled);
        let t = s.settle_time.unwrap();
        assert!(t > 50.0 && t < 200.0);

        assert!(matches!(
            detect_stable_energy(&times[..900], &flat[..900], &StableConfig::default()),
            Err(Error::TrajectoryTooShort { .. })
        ));
    }

    #[test]
    fn parabolic_refinement_recovers_peak() {
        // P(t) = 2 − (t − 1.23)², sampled every 0.1
        let times: Vec<f64> = (0..=30).map(|k| k as f64 * 0.1).collect();
        let de: Vec<f64> = times
            .iter()
            .map(|t| t * (2.0 - (t - 1.23).powi(2)))
            .collect();
        let (p, t) = max_power(&times, &de, 0.0, PowerConvention::Delta).unwrap();
        assert!((p - 2.0).abs() < 1e-12 && (t - 1.23).abs() < 1e-12);
    }
}
