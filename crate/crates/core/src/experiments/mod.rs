//! Pipelines behind each dataset: charging traces, decay and `(J, g)`
//! sweeps, the qutrit comparison and the physical-units table.
//!
//! Every run starts from `|n⟩ ⊗ |G⟩`: the resonator in a Fock state and the
//! battery in the ground state of `H_q`. `E_s` is taken from the Liouvillian
//! steady state reached from that state unless a trajectory window is asked
//! for; `P_max` always comes from a trajectory.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    evolve, evolve_in_sector_with, evolve_pure_with, steady_state_for, DecayRates, DissipatorForm,
    IntegratorConfig, OpenSystem, Probe, SampleDiagnostics, StepStats, Trajectory,
};
use crate::error::{domain, Error, Result};
use crate::hilbert::{DensityMatrix, Operator, StateVector};
use crate::metrics::{
    average_power, battery_probes, charging_series, detect_stable_energy, max_power, state_charge,
    PowerConvention, StableConfig, StableEnergy, PROBE_PHOTONS, PROBE_SZ, PROBE_TOTAL,
};
use crate::model::{build_battery_hamiltonian, build_total_hamiltonian, ground_state, ModelParams};

mod sweeps;
mod table1;
mod traces;

pub use sweeps::{
    convergence_gate, decay_grid, run_decay_sweeps, run_jg_grid, run_sweep, sweep_csv,
    ConvergenceReport, ConvergenceRow, DecaySweeps, JgGrid, PointResult, SweepAxis, SweepPoint,
    SweepSpec, AXIS_NAMES,
};
pub use table1::{
    convert_units, run_table1, table1_convergence, table1_rows, PairOutcome, PaperValues,
    PhysicalRow, Scheme, Table1Options, Table1Report, Table1Row,
};
pub use traces::{fig2_cases, run_qutrit_comparison, run_time_traces, QutritComparison, TimeTrace};

/// Largest tolerated trace deviation of a recorded state.
pub const TRACE_TOL: f64 = 1e-7;
/// Largest tolerated `‖ρ − ρ†‖_max`.
pub const HERMITICITY_TOL: f64 = 1e-9;
/// Smallest tolerated eigenvalue of a recorded state.
pub const POSITIVITY_TOL: f64 = -1e-7;

/// A battery of `model` charged from `|photons⟩` under `rates`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeSetup {
    pub model: ModelParams,
    pub photons: usize,
    pub rates: DecayRates,
}

/// Operators and starting state of a [`ChargeSetup`].
pub struct Prepared {
    pub setup: ChargeSetup,
    pub e_ground: f64,
    /// Largest eigenvalue of `H_q`; bounds every battery energy.
    pub e_top: f64,
    pub psi0: StateVector,
    pub hamiltonian: Operator,
    pub probes: Vec<Probe>,
}

impl ChargeSetup {
    pub fn prepare(&self) -> Result<Prepared> {
        self.model.validate_for_photons(self.photons)?;
        self.rates.validate()?;
        let h_q = build_battery_hamiltonian(&self.model)?;
        let (e_ground, ground) = ground_state(&h_q)?;
        let e_top = *h_q.eigenvalues()?.last().expect("non-empty spectrum");
        let psi0 = StateVector::fock(self.model.fock_cutoff, self.photons)?.kron(&ground);
        Ok(Prepared {
            setup: *self,
            e_ground,
            e_top,
            psi0,
            hamiltonian: build_total_hamiltonian(&self.model)?,
            probes: battery_probes(&self.model)?,
        })
    }
}

impl Prepared {
    pub fn system(&self) -> Result<OpenSystem> {
        OpenSystem::new(
            self.setup.model.space()?,
            self.hamiltonian.clone(),
            self.setup.rates,
        )
    }

    pub fn rho0(&self) -> DensityMatrix {
        self.psi0.to_density()
    }

    /// Integrates to `t_final` (pure-state propagation for closed systems).
    pub fn trajectory(&self, cfg: &IntegratorConfig) -> Result<ChargeTrace> {
        self.trajectory_until(cfg, &mut |_, _| false)
    }

    /// As [`Prepared::trajectory`], but stops once no later sample can raise
    /// `P_max` under the delta convention, and under the literal one too when
    /// `literal` is set. A literal peak is only bounded once `E(t) > 0`, so
    /// literal runs may go to `t_final`.
    pub fn power_peak_trajectory(
        &self,
        cfg: &IntegratorConfig,
        literal: bool,
    ) -> Result<ChargeTrace> {
        let (eg, top) = (self.e_ground, self.e_top);
        let conventions = if literal { 2 } else { 1 };
        let mut best = [f64::NEG_INFINITY; 2];
        let mut stop = move |t: f64, values: &[f64]| {
            if t <= 0.0 {
                return false;
            }
            // ΔE ≤ E_top − E_G and E ≤ E_top bound each convention
            let e = values[0];
            let candidates = [(e - eg) / t, e / t];
            let bounds = [top - eg, top];
            let mut done = true;
            for k in 0..conventions {
                best[k] = best[k].max(candidates[k]);
                done &= best[k] > 0.0 && t * best[k] > bounds[k];
            }
            done
        };
        self.trajectory_until(cfg, &mut stop)
    }

    fn trajectory_until(
        &self,
        cfg: &IntegratorConfig,
        stop: &mut dyn FnMut(f64, &[f64]) -> bool,
    ) -> Result<ChargeTrace> {
        let traj = if self.setup.rates.is_closed() {
            evolve_pure_with(
                &self.hamiltonian,
                &self.psi0,
                cfg,
                &self.probes,
                false,
                stop,
            )?
        } else {
            evolve_in_sector_with(
                &self.system()?,
                &self.rho0(),
                cfg,
                &self.probes,
                false,
                stop,
            )?
            .0
        };
        check_invariants(&traj)?;
        ChargeTrace::from_trajectory(&traj, self.e_ground, self.setup.model.n_qubits)
    }

    /// Battery charge of the steady state reached from the initial state.
    pub fn steady_charge(&self, form: DissipatorForm) -> Result<(f64, f64, String)> {
        let system = self.system()?;
        let ss = steady_state_for(&system, &self.rho0(), form)?;
        let e = state_charge(&ss.rho, &self.setup.model, self.e_ground)?;
        Ok((e, ss.residual, ss.method))
    }
}

/// Fails on the first recorded sample that breaks trace, Hermiticity or
/// positivity (standard form only).
pub fn check_invariants(traj: &Trajectory) -> Result<()> {
    if traj.form != DissipatorForm::Standard {
        return Ok(());
    }
    for (t, d) in traj.times.iter().zip(&traj.diagnostics) {
        if d.trace_dev > TRACE_TOL {
            return Err(Error::Invariant(format!(
                "trace deviation {:e} at t = {t}",
                d.trace_dev
            )));
        }
        if d.hermiticity > HERMITICITY_TOL {
            return Err(Error::Invariant(format!(
                "hermiticity defect {:e} at t = {t}",
                d.hermiticity
            )));
        }
        if d.min_eig < POSITIVITY_TOL {
            return Err(Error::Invariant(format!(
                "negative eigenvalue {:e} at t = {t}",
                d.min_eig
            )));
        }
    }
    Ok(())
}

/// Per-sample battery observables of one charging run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeTrace {
    pub times: Vec<f64>,
    pub delta_e: Vec<f64>,
    /// `⟨Σσ^z⟩/N`; NaN for qutrits.
    pub sz_per_site: Vec<f64>,
    pub photons: Vec<f64>,
    pub total_energy: Vec<f64>,
    pub diagnostics: Vec<SampleDiagnostics>,
    pub e_ground: f64,
    pub stats: StepStats,
    pub pure: bool,
    pub stopped_early: bool,
}

impl ChargeTrace {
    fn from_trajectory(traj: &Trajectory, e_ground: f64, n_sites: usize) -> Result<Self> {
        let series = |name: &str| -> Result<Vec<f64>> {
            traj.series(name)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| domain(format!("trajectory lacks probe {name}")))
        };
        let sz_per_site = match traj.series(PROBE_SZ) {
            Some(v) => v.iter().map(|x| x / n_sites as f64).collect(),
            None => vec![f64::NAN; traj.len()],
        };
        Ok(Self {
            times: traj.times.clone(),
            delta_e: charging_series(traj, e_ground)?,
            sz_per_site,
            photons: series(PROBE_PHOTONS)?,
            total_energy: series(PROBE_TOTAL)?,
            diagnostics: traj.diagnostics.clone(),
            e_ground,
            stats: traj.stats,
            pure: traj.pure,
            stopped_early: traj.stopped_early,
        })
    }

    /// `P(t)`, with `P(0) = 0` under both conventions.
    pub fn power(&self, convention: PowerConvention) -> Vec<f64> {
        self.times
            .iter()
            .zip(&self.delta_e)
            .map(|(&t, &de)| {
                if t > 0.0 {
                    average_power(de, self.e_ground, t, convention).unwrap_or(f64::NAN)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// `(P_max, t at P_max)`.
    pub fn max_power(&self, convention: PowerConvention) -> Result<(f64, f64)> {
        max_power(&self.times, &self.delta_e, self.e_ground, convention)
    }

    pub fn max_charge(&self) -> f64 {
        self.delta_e
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn stable_energy(&self, cfg: &StableConfig) -> Result<StableEnergy> {
        detect_stable_energy(&self.times, &self.delta_e, cfg)
    }

    /// Largest relative change of `tr(Hρ)` from its initial value.
    pub fn total_energy_drift(&self) -> f64 {
        let e0 = self.total_energy[0];
        let scale = e0.abs().max(f64::MIN_POSITIVE);
        self.total_energy
            .iter()
            .map(|e| (e - e0).abs() / scale)
            .fold(0.0, f64::max)
    }

    /// Trajectory CSV: `t, ΔE, P, ⟨S_z⟩/N, ⟨a†a⟩, purity, trace_dev, min_eig`.
    pub fn to_csv(&self, convention: PowerConvention) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "t",
            "delta_e",
            "power",
            "sz_per_site",
            "photons",
            "purity",
            "trace_dev",
            "min_eig",
        ])
        .map_err(csv_error)?;
        let power = self.power(convention);
        for (k, d) in self.diagnostics.iter().enumerate() {
            w.write_record(
                [
                    self.times[k],
                    self.delta_e[k],
                    power[k],
                    self.sz_per_site[k],
                    self.photons[k],
                    d.purity,
                    d.trace_dev,
                    d.min_eig,
                ]
                .iter()
                .map(|v| fmt_f64(*v)),
            )
            .map_err(csv_error)?;
        }
        finish_csv(w)
    }
}

/// Shortest round-trip representation; `NaN` for missing values.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:?}")
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::LinAlg(format!("csv encoding: {e}"))
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::LinAlg(format!("csv encoding: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::LinAlg(format!("csv encoding: {e}")))
}

/// Where `E_s` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EsMethod {
    /// Liouvillian steady state in the sector of the initial state, falling
    /// back to the trajectory window when the kernel is degenerate.
    #[default]
    SteadyState,
    /// Trailing-window mean of a full trajectory.
    Trajectory,
}

impl fmt::Display for EsMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EsMethod::SteadyState => "steady-state",
            EsMethod::Trajectory => "trajectory",
        })
    }
}

impl std::str::FromStr for EsMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "steady-state" => Ok(Self::SteadyState),
            "trajectory" => Ok(Self::Trajectory),
            other => Err(format!(
                "unknown es_method {other:?} (steady-state|trajectory)"
            )),
        }
    }
}

/// Shared settings for every run in a pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub integrator: IntegratorConfig,
    pub stable: StableConfig,
    pub es_method: EsMethod,
    pub power: PowerConvention,
    /// Also report `P_max` under the literal convention.
    #[serde(default)]
    pub literal_power: bool,
}

impl RunSettings {
    fn wants_literal(&self) -> bool {
        self.literal_power || self.power == PowerConvention::Literal
    }
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            stable: StableConfig::default(),
            es_method: EsMethod::SteadyState,
            power: PowerConvention::Delta,
            literal_power: false,
        }
    }
}

/// `E_s` together with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StableEstimate {
    pub value: f64,
    pub source: String,
    /// Liouvillian residual when the steady state was used.
    pub residual: Option<f64>,
    /// Window flag when the trajectory was used.
    pub settled: Option<bool>,
}

/// `E_s` and the power peaks of one setup.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChargeMetrics {
    pub stable: StableEstimate,
    pub max_power: f64,
    pub t_at_max_power: f64,
    /// Present when the settings ask for the literal convention.
    pub max_power_literal: Option<f64>,
    pub t_at_max_power_literal: Option<f64>,
    pub max_trace_dev: f64,
    pub min_eig: f64,
    pub rhs_evals: usize,
}

/// `E_s` alone, as [`charge_metrics`] would report it.
pub fn stable_estimate(setup: &ChargeSetup, settings: &RunSettings) -> Result<StableEstimate> {
    let prep = setup.prepare()?;
    if let Some(s) = steady_estimate(&prep, settings)? {
        return Ok(s);
    }
    let trace = prep.trajectory(&settings.integrator)?;
    window_estimate(&trace, &settings.stable)
}

fn steady_estimate(prep: &Prepared, settings: &RunSettings) -> Result<Option<StableEstimate>> {
    if settings.es_method != EsMethod::SteadyState || prep.setup.rates.is_closed() {
        return Ok(None);
    }
    match prep.steady_charge(settings.integrator.dissipator_form) {
        Ok((value, residual, method)) => Ok(Some(StableEstimate {
            value,
            source: method,
            residual: Some(residual),
            settled: None,
        })),
        Err(Error::AmbiguousSteadyState { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn window_estimate(trace: &ChargeTrace, cfg: &StableConfig) -> Result<StableEstimate> {
    let s = trace.stable_energy(cfg)?;
    Ok(StableEstimate {
        value: s.value,
        source: "trajectory".into(),
        residual: None,
        settled: Some(s.settled),
    })
}

/// Runs one setup to the metrics the sweeps and the table report.
pub fn charge_metrics(setup: &ChargeSetup, settings: &RunSettings) -> Result<ChargeMetrics> {
    let prep = setup.prepare()?;
    let (trace, stable) = match steady_estimate(&prep, settings)? {
        Some(stable) => (
            prep.power_peak_trajectory(&settings.integrator, settings.wants_literal())?,
            stable,
        ),
        None => {
            let trace = prep.trajectory(&settings.integrator)?;
            let stable = window_estimate(&trace, &settings.stable)?;
            (trace, stable)
        }
    };
    let (max_power, t_at_max_power) = trace.max_power(PowerConvention::Delta)?;
    let literal = if settings.wants_literal() {
        Some(trace.max_power(PowerConvention::Literal)?)
    } else {
        None
    };
    Ok(ChargeMetrics {
        stable,
        max_power,
        t_at_max_power,
        max_power_literal: literal.map(|l| l.0),
        t_at_max_power_literal: literal.map(|l| l.1),
        max_trace_dev: trace
            .diagnostics
            .iter()
            .map(|d| d.trace_dev)
            .fold(0.0, f64::max),
        min_eig: trace
            .diagnostics
            .iter()
            .map(|d| d.min_eig)
            .filter(|v| !v.is_nan())
            .fold(f64::INFINITY, f64::min),
        rhs_evals: trace.stats.rhs_evals,
    })
}

/// Dense-state run used by the conservation checks.
pub fn mixed_trajectory(prep: &Prepared, cfg: &IntegratorConfig) -> Result<ChargeTrace> {
    let traj = evolve(&prep.system()?, &prep.rho0(), cfg, &prep.probes, false)?;
    check_invariants(&traj)?;
    ChargeTrace::from_trajectory(&traj, prep.e_ground, prep.setup.model.n_qubits)
}

/// Builds a rayon pool of `jobs` workers (`None`: available parallelism).
pub fn worker_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(domain("jobs must be at least 1"));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| domain(format!("worker pool: {e}")))
}

#[cfg(test)]
mod tests;
