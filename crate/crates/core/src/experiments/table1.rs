//! Collective versus parallel charging under device parameters, in physical
//! units.
//!
//! Each device row is simulated in units of its own `ω_r`: `ω_q/ω_r`,
//! `g/ω_r`, `J/ω_r` and every rate over `ω_r` follow from the listed
//! frequencies. Energies are converted with `ħω_r = h f_r` and powers with
//! `ħω_r²`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sweeps::refine;
use super::{
    charge_metrics, csv_error, finish_csv, fmt_f64, ChargeMetrics, ChargeSetup, ConvergenceReport,
    ConvergenceRow, RunSettings,
};
use crate::circuit::Regime;
use crate::constants::PLANCK_EV_S;
use crate::dynamics::DecayRates;
use crate::error::{domain, Result};
use crate::model::{default_cutoff, ModelParams};

/// `(E in neV, P in eV/s)` from dimensionless `E/ħω` and `P/ħω²` with
/// `ω = 2π f_ref`.
pub fn convert_units(e_dimless: f64, p_dimless: f64, f_ref_ghz: f64) -> Result<(f64, f64)> {
    if !(f_ref_ghz.is_finite() && f_ref_ghz > 0.0) {
        return Err(domain(format!(
            "reference frequency must be positive, got {f_ref_ghz}"
        )));
    }
    let f = f_ref_ghz * 1e9;
    let quantum_ev = PLANCK_EV_S * f;
    let omega = 2.0 * std::f64::consts::PI * f;
    Ok((e_dimless * quantum_ev * 1e9, p_dimless * quantum_ev * omega))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// `N` independent single-qubit cells, each with its own resonator.
    Parallel,
    /// `N` coupled qubits sharing one resonator.
    Collective,
}

/// Device parameters of one table entry (frequencies over `2π`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalRow {
    pub label: String,
    pub f_r_ghz: f64,
    pub f_q_ghz: f64,
    pub g_mhz: f64,
    pub kappa_mhz: f64,
    pub gamma1_mhz: f64,
    pub gamma2_mhz: f64,
    pub j_mhz: f64,
    pub scheme: Scheme,
}

impl PhysicalRow {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("f_r_ghz", self.f_r_ghz), ("f_q_ghz", self.f_q_ghz)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!(
                    "{}: {name} must be positive, got {v}",
                    self.label
                )));
            }
        }
        for (name, v) in [
            ("g_mhz", self.g_mhz),
            ("kappa_mhz", self.kappa_mhz),
            ("gamma1_mhz", self.gamma1_mhz),
            ("gamma2_mhz", self.gamma2_mhz),
            ("j_mhz", self.j_mhz),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(domain(format!(
                    "{}: {name} must be non-negative, got {v}",
                    self.label
                )));
            }
        }
        Ok(())
    }

    fn over_omega_r(&self, mhz: f64) -> f64 {
        mhz / (1e3 * self.f_r_ghz)
    }

    pub fn coupling_ratio(&self) -> f64 {
        self.over_omega_r(self.g_mhz)
    }

    /// One simulated cell: all `n` qubits for the collective scheme, a single
    /// qubit with `J = 0` for the parallel scheme.
    pub fn setup(&self, n: usize, photons: usize) -> Result<ChargeSetup> {
        self.validate()?;
        let n_qubits = match self.scheme {
            Scheme::Collective => n,
            Scheme::Parallel => 1,
        };
        let j = match self.scheme {
            Scheme::Collective => self.over_omega_r(self.j_mhz),
            Scheme::Parallel => 0.0,
        };
        Ok(ChargeSetup {
            model: ModelParams {
                n_qubits,
                omega_r: 1.0,
                omega_q: self.f_q_ghz / self.f_r_ghz,
                g: self.coupling_ratio(),
                j,
                site_levels: 2,
                fock_cutoff: default_cutoff(photons, n_qubits),
            },
            photons,
            rates: DecayRates::new(
                self.over_omega_r(self.kappa_mhz),
                self.over_omega_r(self.gamma1_mhz),
                self.over_omega_r(self.gamma2_mhz),
            ),
        })
    }
}

/// Published `E_s` (neV) and `P_max` (eV/s) used for deviation ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaperValues {
    pub e_s_nev: f64,
    pub p_max_ev_s: f64,
}

/// The six device rows, each as a parallel and a collective entry, with
/// their published values.
pub fn table1_rows() -> Vec<(PhysicalRow, PaperValues)> {
    #[allow(clippy::type_complexity)]
    let devices: [(&str, f64, f64, f64, f64, f64, f64, [(f64, f64); 2]); 6] = [
        (
            "schuster2007",
            5.7,
            6.9,
            105.0,
            0.25,
            1.8,
            1.0,
            [(2.2574e1, 7.0347e3), (2.4003e2, 1.8178e4)],
        ),
        (
            "bishop2009",
            6.92,
            6.92,
            173.5,
            0.30,
            0.094,
            0.227,
            [(1.9964e2, 6.7230e4), (6.0026e2, 9.4678e4)],
        ),
        (
            "prb95_224515",
            6.23,
            3.586,
            455.0,
            29.3,
            38.0,
            0.0,
            [(1.7015e2, 2.9198e4), (3.3901e2, 8.2112e4)],
        ),
        (
            "bosman2017",
            4.603,
            10.67,
            897.0,
            3.0,
            20.0,
            0.0,
            [(5.7195e2, 1.5266e5), (1.1007e3, 3.4661e5)],
        ),
        (
            "ideal1",
            5.0,
            10.0,
            2500.0,
            1.0,
            1.0,
            1.0,
            [(1.5508e4, 9.9804e5), (3.2328e4, 1.5388e6)],
        ),
        (
            "ideal2",
            5.0,
            10.0,
            5000.0,
            1.0,
            1.0,
            1.0,
            [(3.5445e4, 2.5253e6), (5.7538e4, 3.0394e6)],
        ),
    ];
    let mut out = Vec::new();
    for (label, f_r, f_q, g, kappa, gamma1, gamma2, paper) in devices {
        for (scheme, (e, p)) in [Scheme::Parallel, Scheme::Collective]
            .into_iter()
            .zip(paper)
        {
            out.push((
                PhysicalRow {
                    label: label.into(),
                    f_r_ghz: f_r,
                    f_q_ghz: f_q,
                    g_mhz: g,
                    kappa_mhz: kappa,
                    gamma1_mhz: gamma1,
                    gamma2_mhz: gamma2,
                    j_mhz: if scheme == Scheme::Collective { g } else { 0.0 },
                    scheme,
                },
                PaperValues {
                    e_s_nev: e,
                    p_max_ev_s: p,
                },
            ));
        }
    }
    out
}

/// Scheme semantics of the table run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Table1Options {
    pub n_qubits: usize,
    /// Initial photons of the shared resonator.
    pub collective_photons: usize,
    /// Initial photons of each independent resonator.
    pub parallel_photons: usize,
}

impl Default for Table1Options {
    fn default() -> Self {
        Self {
            n_qubits: 3,
            collective_photons: 3,
            parallel_photons: 1,
        }
    }
}

/// Computed values of one entry, totals over all `N` qubits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub row: PhysicalRow,
    pub paper: Option<PaperValues>,
    pub coupling_ratio: f64,
    pub regime: Regime,
    /// Cells the single-cell result is multiplied by.
    pub copies: usize,
    pub fock_cutoff: usize,
    pub metrics: ChargeMetrics,
    pub e_s_nev: f64,
    pub p_max_ev_s: f64,
    pub p_max_literal_ev_s: f64,
    /// computed / published.
    pub e_s_ratio: Option<f64>,
    pub p_max_ratio: Option<f64>,
    pub p_max_literal_ratio: Option<f64>,
}

/// Collective-over-parallel comparison of one device.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairOutcome {
    pub label: String,
    pub collective_e_s_higher: bool,
    pub collective_p_max_higher: bool,
    pub collective_p_max_literal_higher: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Report {
    pub options: Table1Options,
    pub rows: Vec<Table1Row>,
    pub pairs: Vec<PairOutcome>,
}

pub fn run_table1(
    rows: &[(PhysicalRow, Option<PaperValues>)],
    options: &Table1Options,
    settings: &RunSettings,
    pool: &rayon::ThreadPool,
) -> Result<Table1Report> {
    if options.n_qubits == 0 {
        return Err(domain("n_qubits must be at least 1"));
    }
    let settings = RunSettings {
        literal_power: true,
        ..*settings
    };
    let settings = &settings;
    let computed: Vec<Result<Table1Row>> = pool.install(|| {
        rows.par_iter()
            .map(|(row, paper)| {
                let (photons, copies) = match row.scheme {
                    Scheme::Collective => (options.collective_photons, 1),
                    Scheme::Parallel => (options.parallel_photons, options.n_qubits),
                };
                let setup = row.setup(options.n_qubits, photons)?;
                let at = format!("{} ({:?})", row.label, row.scheme);
                let metrics = charge_metrics(&setup, settings).map_err(|e| e.at(at))?;
                let k = copies as f64;
                let (e_s_nev, p_max_ev_s) =
                    convert_units(k * metrics.stable.value, k * metrics.max_power, row.f_r_ghz)?;
                let (_, p_max_literal_ev_s) = convert_units(
                    0.0,
                    k * metrics.max_power_literal.unwrap_or(f64::NAN),
                    row.f_r_ghz,
                )?;
                Ok(Table1Row {
                    coupling_ratio: row.coupling_ratio(),
                    regime: Regime::from_ratio(row.coupling_ratio()),
                    copies,
                    fock_cutoff: setup.model.fock_cutoff,
                    e_s_ratio: paper.map(|p| e_s_nev / p.e_s_nev),
                    p_max_ratio: paper.map(|p| p_max_ev_s / p.p_max_ev_s),
                    p_max_literal_ratio: paper.map(|p| p_max_literal_ev_s / p.p_max_ev_s),
                    row: row.clone(),
                    paper: *paper,
                    metrics,
                    e_s_nev,
                    p_max_ev_s,
                    p_max_literal_ev_s,
                })
            })
            .collect()
    });
    let rows: Vec<Table1Row> = computed.into_iter().collect::<Result<_>>()?;

    let mut pairs = Vec::new();
    for (k, par) in rows.iter().enumerate() {
        if par.row.scheme != Scheme::Parallel {
            continue;
        }
        if let Some(col) = rows[k + 1..]
            .iter()
            .find(|r| r.row.label == par.row.label && r.row.scheme == Scheme::Collective)
        {
            pairs.push(PairOutcome {
                label: par.row.label.clone(),
                collective_e_s_higher: col.e_s_nev > par.e_s_nev,
                collective_p_max_higher: col.p_max_ev_s > par.p_max_ev_s,
                collective_p_max_literal_higher: col.p_max_literal_ev_s > par.p_max_literal_ev_s,
            });
        }
    }
    Ok(Table1Report {
        options: *options,
        rows,
        pairs,
    })
}

/// Cutoff gate over every entry: the single-cell `E_s` at `factor ×` the
/// cutoff against the reported one.
pub fn table1_convergence(
    report: &Table1Report,
    factor: usize,
    tol: f64,
    settings: &RunSettings,
    pool: &rayon::ThreadPool,
) -> Result<ConvergenceReport> {
    if factor < 2 {
        return Err(domain("convergence factor must be at least 2"));
    }
    let rows: Vec<Result<ConvergenceRow>> = pool.install(|| {
        report
            .rows
            .par_iter()
            .map(|r| {
                let photons = match r.row.scheme {
                    Scheme::Collective => report.options.collective_photons,
                    Scheme::Parallel => report.options.parallel_photons,
                };
                let setup = r.row.setup(report.options.n_qubits, photons)?;
                let point = format!("{} ({:?})", r.row.label, r.row.scheme);
                refine(point, &setup, r.metrics.stable.value, factor, tol, settings)
            })
            .collect()
    });
    Ok(ConvergenceReport {
        tol,
        factor,
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}

impl Table1Report {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "label",
            "scheme",
            "g_over_omega_r",
            "regime",
            "fock_cutoff",
            "e_s_nev",
            "p_max_ev_s",
            "p_max_literal_ev_s",
            "paper_e_s_nev",
            "paper_p_max_ev_s",
            "e_s_ratio",
            "p_max_ratio",
            "p_max_literal_ratio",
            "es_source",
        ])
        .map_err(csv_error)?;
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
            w.write_record([
                r.row.label.clone(),
                format!("{:?}", r.row.scheme).to_lowercase(),
                fmt_f64(r.coupling_ratio),
                r.regime.label().to_string(),
                r.fock_cutoff.to_string(),
                fmt_f64(r.e_s_nev),
                fmt_f64(r.p_max_ev_s),
                fmt_f64(r.p_max_literal_ev_s),
                opt(r.paper.map(|p| p.e_s_nev)),
                opt(r.paper.map(|p| p.p_max_ev_s)),
                opt(r.e_s_ratio),
                opt(r.p_max_ratio),
                opt(r.p_max_literal_ratio),
                r.metrics.stable.source.clone(),
            ])
            .map_err(csv_error)?;
        }
        finish_csv(w)
    }
}
