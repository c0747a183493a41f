//! Charging traces: the decay-channel cases at `g = J = 1` and the closed
//! qubit-versus-qutrit comparison.

use rayon::prelude::*;
use serde::Serialize;

use super::{ChargeSetup, ChargeTrace, RunSettings};
use crate::dynamics::{DecayRates, DissipatorForm, IntegratorConfig};
use crate::error::Result;
use crate::metrics::{PowerConvention, StableEnergy};
use crate::model::{default_cutoff, ModelParams};

/// The closed case followed by each single channel at 0.1 and 0.5 and all
/// three channels at 0.1.
pub fn fig2_cases() -> Vec<DecayRates> {
    let mut cases = vec![DecayRates::closed()];
    for rate in [0.1, 0.5] {
        cases.push(DecayRates::new(rate, 0.0, 0.0));
    }
    for rate in [0.1, 0.5] {
        cases.push(DecayRates::new(0.0, rate, 0.0));
    }
    for rate in [0.1, 0.5] {
        cases.push(DecayRates::new(0.0, 0.0, rate));
    }
    cases.push(DecayRates::new(0.1, 0.1, 0.1));
    cases
}

/// One case of [`run_time_traces`].
#[derive(Debug, Clone, Serialize)]
pub struct TimeTrace {
    pub rates: DecayRates,
    #[serde(skip)]
    pub trace: ChargeTrace,
    pub stable: StableEnergy,
    pub max_power: f64,
    pub t_at_max_power: f64,
    pub max_charge: f64,
    /// Steady-state charge and `|E_s − E_ss|`, for open cases.
    pub steady_state_energy: Option<f64>,
    pub steady_state_deviation: Option<f64>,
    pub rhs_evals: usize,
}

impl TimeTrace {
    /// File stem naming the case by its rates.
    pub fn label(&self) -> String {
        let r = &self.rates;
        if r.is_closed() {
            "closed".into()
        } else {
            format!("kappa{}_gamma1{}_gamma2{}", r.kappa, r.gamma1, r.gamma2)
        }
    }
}

/// Full trajectories of `model` from `|photons⟩` for each set of rates.
/// `E_s` here is the trajectory window; open cases are cross-checked against
/// the steady state when the kernel allows.
pub fn run_time_traces(
    model: &ModelParams,
    photons: usize,
    cases: &[DecayRates],
    settings: &RunSettings,
    pool: &rayon::ThreadPool,
) -> Result<Vec<TimeTrace>> {
    pool.install(|| {
        cases
            .par_iter()
            .map(|rates| {
                let setup = ChargeSetup {
                    model: *model,
                    photons,
                    rates: *rates,
                };
                let prep = setup.prepare()?;
                let trace = prep.trajectory(&settings.integrator)?;
                let stable = trace.stable_energy(&settings.stable)?;
                let (max_power, t_at_max_power) = trace.max_power(settings.power)?;
                let steady = if rates.is_closed() {
                    None
                } else {
                    prep.steady_charge(DissipatorForm::Standard)
                        .ok()
                        .map(|s| s.0)
                };
                Ok(TimeTrace {
                    rates: *rates,
                    stable,
                    max_power,
                    t_at_max_power,
                    max_charge: trace.max_charge(),
                    steady_state_energy: steady,
                    steady_state_deviation: steady.map(|e| (e - stable.value).abs()),
                    rhs_evals: trace.stats.rhs_evals,
                    trace,
                })
            })
            .collect()
    })
}

/// Closed qubit and qutrit runs of the same chain.
#[derive(Debug, Clone, Serialize)]
pub struct QutritComparison {
    pub qubit_model: ModelParams,
    pub qubit_photons: usize,
    pub qutrit_model: ModelParams,
    pub qutrit_photons: usize,
    #[serde(skip)]
    pub qubit: ChargeTrace,
    #[serde(skip)]
    pub qutrit: ChargeTrace,
    pub qubit_max_charge: f64,
    pub qutrit_max_charge: f64,
    pub qubit_max_power: f64,
    pub qutrit_max_power: f64,
    pub qubit_energy_drift: f64,
    pub qutrit_energy_drift: f64,
}

/// Qubit chain from `|N⟩` against the qutrit chain from `|2N⟩`, both closed
/// at `g`, `J` and unit frequencies.
pub fn run_qutrit_comparison(
    n: usize,
    g: f64,
    j: f64,
    cfg: &IntegratorConfig,
    power: PowerConvention,
) -> Result<QutritComparison> {
    let qubit_photons = n;
    let qutrit_photons = 2 * n;
    let qubit_model = ModelParams::resonant_qubits(n, g, j, default_cutoff(qubit_photons, n));
    let qutrit_model = ModelParams {
        site_levels: 3,
        fock_cutoff: default_cutoff(qutrit_photons, n),
        ..qubit_model
    };
    let run = |model: ModelParams, photons: usize| -> Result<ChargeTrace> {
        ChargeSetup {
            model,
            photons,
            rates: DecayRates::closed(),
        }
        .prepare()?
        .trajectory(cfg)
    };
    let (qubit, qutrit) = rayon::join(
        || run(qubit_model, qubit_photons),
        || run(qutrit_model, qutrit_photons),
    );
    let (qubit, qutrit) = (qubit?, qutrit?);
    Ok(QutritComparison {
        qubit_model,
        qubit_photons,
        qutrit_model,
        qutrit_photons,
        qubit_max_charge: qubit.max_charge(),
        qutrit_max_charge: qutrit.max_charge(),
        qubit_max_power: qubit.max_power(power)?.0,
        qutrit_max_power: qutrit.max_power(power)?.0,
        qubit_energy_drift: qubit.total_energy_drift(),
        qutrit_energy_drift: qutrit.total_energy_drift(),
        qubit,
        qutrit,
    })
}
