//! Grid sweeps over model parameters and decay rates, and the Fock-cutoff
//! convergence gate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    charge_metrics, csv_error, finish_csv, fmt_f64, stable_estimate, ChargeMetrics, ChargeSetup,
    RunSettings,
};
use crate::dynamics::DecayRates;
use crate::error::{domain, Error, Result};

/// Parameters a sweep axis may vary.
pub const AXIS_NAMES: [&str; 6] = ["g", "j", "omega_q", "kappa", "gamma1", "gamma2"];

/// One grid axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

/// Cartesian grid over `axes` around a base setup; the first axis varies
/// slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axes: Vec<SweepAxis>,
    pub base: ChargeSetup,
    pub settings: RunSettings,
}

/// A grid point: its multi-index and the setup it runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: Vec<usize>,
    pub coords: Vec<f64>,
    pub setup: ChargeSetup,
}

fn apply(setup: &mut ChargeSetup, name: &str, v: f64) -> Result<()> {
    match name {
        "g" => setup.model.g = v,
        "j" => setup.model.j = v,
        "omega_q" => setup.model.omega_q = v,
        "kappa" => setup.rates.kappa = v,
        "gamma1" => setup.rates.gamma1 = v,
        "gamma2" => setup.rates.gamma2 = v,
        other => {
            return Err(domain(format!(
                "unknown sweep axis {other:?} (expected one of {AXIS_NAMES:?})"
            )))
        }
    }
    Ok(())
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(domain("a sweep needs at least one axis"));
        }
        for (k, axis) in self.axes.iter().enumerate() {
            if !AXIS_NAMES.contains(&axis.name.as_str()) {
                return Err(domain(format!(
                    "unknown sweep axis {:?} (expected one of {AXIS_NAMES:?})",
                    axis.name
                )));
            }
            if self.axes[..k].iter().any(|a| a.name == axis.name) {
                return Err(domain(format!("sweep axis {:?} repeated", axis.name)));
            }
            if axis.values.is_empty() {
                return Err(domain(format!("sweep axis {:?} has no values", axis.name)));
            }
            if let Some(v) = axis.values.iter().find(|v| !v.is_finite()) {
                return Err(domain(format!(
                    "sweep axis {:?} has non-finite value {v}",
                    axis.name
                )));
            }
        }
        self.settings.integrator.validate()?;
        Ok(())
    }

    /// Every grid point in row-major order.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        self.validate()?;
        let dims: Vec<usize> = self.axes.iter().map(|a| a.values.len()).collect();
        let total: usize = dims.iter().product();
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut index = vec![0; dims.len()];
            let mut rest = flat;
            for k in (0..dims.len()).rev() {
                index[k] = rest % dims[k];
                rest /= dims[k];
            }
            let mut setup = self.base;
            let mut coords = Vec::with_capacity(dims.len());
            for (axis, &i) in self.axes.iter().zip(&index) {
                let v = axis.values[i];
                apply(&mut setup, &axis.name, v)?;
                coords.push(v);
            }
            out.push(SweepPoint {
                index,
                coords,
                setup,
            });
        }
        Ok(out)
    }

    pub fn describe(&self, point: &SweepPoint) -> String {
        let parts: Vec<String> = self
            .axes
            .iter()
            .zip(&point.coords)
            .map(|(a, v)| format!("{}={v}", a.name))
            .collect();
        format!("point ({})", parts.join(", "))
    }
}

/// Metrics of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub index: Vec<usize>,
    pub coords: Vec<f64>,
    pub fock_cutoff: usize,
    pub metrics: ChargeMetrics,
}

/// Runs every point on `pool`; the first failing point in grid order is
/// reported with its coordinates.
pub fn run_sweep(spec: &SweepSpec, pool: &rayon::ThreadPool) -> Result<Vec<PointResult>> {
    let points = spec.points()?;
    let results: Vec<Result<PointResult>> = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let metrics =
                    charge_metrics(&p.setup, &spec.settings).map_err(|e| e.at(spec.describe(p)))?;
                log::debug!("{} done: E_s = {}", spec.describe(p), metrics.stable.value);
                Ok(PointResult {
                    index: p.index.clone(),
                    coords: p.coords.clone(),
                    fock_cutoff: p.setup.model.fock_cutoff,
                    metrics,
                })
            })
            .collect()
    });
    results.into_iter().collect()
}

/// Sweep CSV with one column per axis followed by the metrics.
pub fn sweep_csv(spec: &SweepSpec, rows: &[PointResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = spec.axes.iter().map(|a| a.name.clone()).collect();
    header.extend(
        [
            "stable_energy",
            "es_source",
            "max_power",
            "t_at_max_power",
            "max_power_literal",
            "t_at_max_power_literal",
            "max_trace_dev",
            "min_eig",
        ]
        .map(String::from),
    );
    w.write_record(&header).map_err(csv_error)?;
    for r in rows {
        let m = &r.metrics;
        let mut rec: Vec<String> = r.coords.iter().map(|v| fmt_f64(*v)).collect();
        rec.push(fmt_f64(m.stable.value));
        rec.push(m.stable.source.clone());
        for v in [
            m.max_power,
            m.t_at_max_power,
            m.max_power_literal.unwrap_or(f64::NAN),
            m.t_at_max_power_literal.unwrap_or(f64::NAN),
            m.max_trace_dev,
            m.min_eig,
        ] {
            rec.push(fmt_f64(v));
        }
        w.write_record(&rec).map_err(csv_error)?;
    }
    finish_csv(w)
}

/// Logarithmic 1-2-5 grid on `[10⁻³, 1]`.
pub fn decay_grid() -> Vec<f64> {
    let mut out = Vec::new();
    for decade in [1e-3, 1e-2, 1e-1] {
        for m in [1.0, 2.0, 5.0] {
            // round to the printed value instead of the product's last bit
            out.push(format!("{:e}", m * decade).parse().expect("float"));
        }
    }
    out.push(1.0);
    out
}

/// One-channel axes and channel-pair grids of the decay sweeps.
#[derive(Debug, Clone, Serialize)]
pub struct DecaySweeps {
    pub one_d: Vec<(String, SweepSpec, Vec<PointResult>)>,
    pub two_d: Vec<((String, String), SweepSpec, Vec<PointResult>)>,
}

const CHANNELS: [&str; 3] = ["kappa", "gamma1", "gamma2"];

/// Each channel alone on `grid` (others zero), then each channel pair on
/// `grid × grid` (third channel zero).
pub fn run_decay_sweeps(
    base: &ChargeSetup,
    grid: &[f64],
    settings: &RunSettings,
    pool: &rayon::ThreadPool,
) -> Result<DecaySweeps> {
    let closed = ChargeSetup {
        rates: DecayRates::closed(),
        ..*base
    };
    let mut one_d = Vec::new();
    for c in CHANNELS {
        let spec = SweepSpec {
            axes: vec![SweepAxis {
                name: c.into(),
                values: grid.to_vec(),
            }],
            base: closed,
            settings: *settings,
        };
        let rows = run_sweep(&spec, pool)?;
        one_d.push((c.to_string(), spec, rows));
    }
    let mut two_d = Vec::new();
    for (a, b) in [
        ("kappa", "gamma1"),
        ("kappa", "gamma2"),
        ("gamma1", "gamma2"),
    ] {
        let spec = SweepSpec {
            axes: vec![
                SweepAxis {
                    name: a.into(),
                    values: grid.to_vec(),
                },
                SweepAxis {
                    name: b.into(),
                    values: grid.to_vec(),
                },
            ],
            base: closed,
            settings: *settings,
        };
        let rows = run_sweep(&spec, pool)?;
        two_d.push(((a.to_string(), b.to_string()), spec, rows));
    }
    Ok(DecaySweeps { one_d, two_d })
}

/// The `(J, g)` grid with every rate at `rate`.
#[derive(Debug, Clone, Serialize)]
pub struct JgGrid {
    pub spec: SweepSpec,
    pub rows: Vec<PointResult>,
}

impl JgGrid {
    /// Default axes: `J ∈ {0, ±0.5, ±1, ±1.5, ±1.8}`, `g ∈ {0.2, …, 1.0}`.
    pub fn default_axes() -> (Vec<f64>, Vec<f64>) {
        let j = vec![-1.8, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 1.8];
        let g = (2..=10).map(|k| k as f64 / 10.0).collect();
        (j, g)
    }

    /// Result at exact coordinates `(j, g)`.
    pub fn at(&self, j: f64, g: f64) -> Option<&PointResult> {
        self.rows
            .iter()
            .find(|r| r.coords[0] == j && r.coords[1] == g)
    }
}

pub fn run_jg_grid(
    base: &ChargeSetup,
    j_values: &[f64],
    g_values: &[f64],
    settings: &RunSettings,
    pool: &rayon::ThreadPool,
) -> Result<JgGrid> {
    let spec = SweepSpec {
        axes: vec![
            SweepAxis {
                name: "j".into(),
                values: j_values.to_vec(),
            },
            SweepAxis {
                name: "g".into(),
                values: g_values.to_vec(),
            },
        ],
        base: *base,
        settings: *settings,
    };
    let rows = run_sweep(&spec, pool)?;
    Ok(JgGrid { spec, rows })
}

/// `E_s` at the base cutoff and at `factor ×` the cutoff for one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub point: String,
    pub cutoff: usize,
    pub refined_cutoff: usize,
    pub stable_energy: f64,
    pub refined_stable_energy: f64,
    pub rel_change: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub tol: f64,
    pub factor: usize,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn worst(&self) -> Option<&ConvergenceRow> {
        self.rows
            .iter()
            .max_by(|a, b| a.rel_change.total_cmp(&b.rel_change))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "point",
            "cutoff",
            "refined_cutoff",
            "stable_energy",
            "refined_stable_energy",
            "rel_change",
            "passed",
        ])
        .map_err(csv_error)?;
        for r in &self.rows {
            w.write_record([
                r.point.clone(),
                r.cutoff.to_string(),
                r.refined_cutoff.to_string(),
                fmt_f64(r.stable_energy),
                fmt_f64(r.refined_stable_energy),
                fmt_f64(r.rel_change),
                r.passed.to_string(),
            ])
            .map_err(csv_error)?;
        }
        finish_csv(w)
    }

    /// Error naming the first point (grid order) outside the tolerance.
    pub fn enforce(&self) -> Result<()> {
        match self.rows.iter().find(|r| !r.passed) {
            None => Ok(()),
            Some(r) => Err(Error::CutoffNotConverged {
                point: r.point.clone(),
                rel_change: r.rel_change,
                tol: self.tol,
                cutoff: r.cutoff,
                doubled: r.refined_cutoff,
            }),
        }
    }
}

/// Recomputes `E_s` of `setup` at `factor ×` its cutoff and compares with
/// `e0`.
pub(crate) fn refine(
    point: String,
    setup: &ChargeSetup,
    e0: f64,
    factor: usize,
    tol: f64,
    settings: &RunSettings,
) -> Result<ConvergenceRow> {
    let mut refined = *setup;
    refined.model.fock_cutoff = setup.model.fock_cutoff * factor;
    let e1 = stable_estimate(&refined, settings)
        .map_err(|e| e.at(point.clone()))?
        .value;
    let rel_change = (e1 - e0).abs() / e1.abs().max(f64::MIN_POSITIVE);
    Ok(ConvergenceRow {
        point,
        cutoff: setup.model.fock_cutoff,
        refined_cutoff: refined.model.fock_cutoff,
        stable_energy: e0,
        refined_stable_energy: e1,
        rel_change,
        passed: rel_change < tol,
    })
}

/// Recomputes `E_s` with the cutoff multiplied by `factor` and compares
/// against `rows`.
pub fn convergence_gate(
    spec: &SweepSpec,
    rows: &[PointResult],
    factor: usize,
    tol: f64,
    pool: &rayon::ThreadPool,
) -> Result<ConvergenceReport> {
    if factor < 2 {
        return Err(domain("convergence factor must be at least 2"));
    }
    let points = spec.points()?;
    let out: Vec<Result<ConvergenceRow>> = pool.install(|| {
        points
            .par_iter()
            .zip(rows)
            .map(|(p, base)| {
                refine(
                    spec.describe(p),
                    &p.setup,
                    base.metrics.stable.value,
                    factor,
                    tol,
                    &spec.settings,
                )
            })
            .collect()
    });
    Ok(ConvergenceReport {
        tol,
        factor,
        rows: out.into_iter().collect::<Result<_>>()?,
    })
}
