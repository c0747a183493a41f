//! Run specification files.
//!
//! A spec is TOML with one table per concern. Every field has a default, so
//! an empty file (apart from `spec_version`) is a valid spec; the normalized
//! form with all defaults filled in is echoed into every run summary and
//! re-validates to itself.
//!
//! ```toml
//! spec_version = 1
//!
//! [model]
//! n_qubits = 3
//! g = 1.0
//! j = 1.0
//! photons = 3
//!
//! [rates]
//! kappa = 0.1
//! ```
//!
//! Command-line overrides use dotted keys (`rates.kappa=0.5`) and are applied
//! to the parsed table before validation, so they obey the same schema.

use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitElements, ParamReport, ResonatorConvention};
use crate::dynamics::{DecayRates, IntegratorConfig};
use crate::error::{Error, Result};
use crate::experiments::{
    decay_grid, fig2_cases, table1_rows, ChargeSetup, EsMethod, JgGrid, PhysicalRow, RunSettings,
    SweepAxis, SweepSpec, Table1Options,
};
use crate::metrics::{PowerConvention, StableConfig};
use crate::model::{default_cutoff, ModelParams};

pub const SPEC_VERSION: u32 = 1;

/// Chain and resonator. Frequencies are in units of the reference `ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n_qubits: usize,
    pub omega_r: f64,
    pub omega_q: f64,
    pub g: f64,
    pub j: f64,
    /// 2 for qubits, 3 for qutrits.
    pub site_levels: usize,
    /// Initial Fock state of the resonator.
    pub photons: usize,
    /// Defaults to `photons + 2N + 4`.
    pub fock_cutoff: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            n_qubits: 3,
            omega_r: 1.0,
            omega_q: 1.0,
            g: 1.0,
            j: 1.0,
            site_levels: 2,
            photons: 3,
            fock_cutoff: None,
        }
    }
}

/// Circuit elements; when present they override `ω_q`, `g`, `J` and `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSection {
    #[serde(default)]
    pub resonator_convention: ResonatorConvention,
    pub elements: CircuitElements,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub es_method: EsMethod,
    pub power: PowerConvention,
    /// Report `P_max` under the literal convention as well.
    pub literal_power: bool,
}

/// What a sweep does when the cutoff gate fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvergenceMode {
    /// Fail the run (exit 3) after writing outputs.
    #[default]
    Enforce,
    /// Record the gate without failing.
    Report,
    /// Skip the gate.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    pub mode: ConvergenceMode,
    pub factor: usize,
    pub tol: f64,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            mode: ConvergenceMode::Enforce,
            factor: 2,
            tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceSection {
    /// Decay cases; defaults to the closed case, each channel at 0.1 and 0.5
    /// and all channels at 0.1.
    pub cases: Vec<DecayRates>,
}

impl Default for TraceSection {
    fn default() -> Self {
        Self {
            cases: fig2_cases(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    /// Cartesian grid over `axes`.
    #[default]
    Grid,
    /// Each channel alone and each channel pair over `decay_values`.
    Decay,
    /// `J × g` over `j_values` and `g_values`.
    Jg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub kind: SweepKind,
    pub axes: Vec<SweepAxis>,
    pub decay_values: Vec<f64>,
    pub j_values: Vec<f64>,
    pub g_values: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let (j_values, g_values) = JgGrid::default_axes();
        Self {
            kind: SweepKind::Grid,
            axes: Vec::new(),
            decay_values: decay_grid(),
            j_values,
            g_values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub j_values: Vec<f64>,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            j_values: (-40..=40).map(|k| k as f64 / 20.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Table1Section {
    pub n_qubits: usize,
    pub collective_photons: usize,
    pub parallel_photons: usize,
    /// Device rows; an empty list selects the built-in rows with their
    /// published values.
    pub rows: Vec<PhysicalRow>,
}

impl Default for Table1Section {
    fn default() -> Self {
        let o = Table1Options::default();
        Self {
            n_qubits: o.n_qubits,
            collective_photons: o.collective_photons,
            parallel_photons: o.parallel_photons,
            rows: Vec::new(),
        }
    }
}

impl Table1Section {
    pub fn options(&self) -> Table1Options {
        Table1Options {
            n_qubits: self.n_qubits,
            collective_photons: self.collective_photons,
            parallel_photons: self.parallel_photons,
        }
    }
}

/// A complete run specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub spec_version: u32,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit: Option<CircuitSection>,
    #[serde(default)]
    pub rates: DecayRates,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub stable: StableConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub convergence: ConvergenceSection,
    #[serde(default)]
    pub trace: TraceSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub table1: Table1Section,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            spec_version: SPEC_VERSION,
            model: ModelSection::default(),
            circuit: None,
            rates: DecayRates::default(),
            integrator: IntegratorConfig::default(),
            stable: StableConfig::default(),
            run: RunSection::default(),
            convergence: ConvergenceSection::default(),
            trace: TraceSection::default(),
            sweep: SweepSection::default(),
            spectrum: SpectrumSection::default(),
            table1: Table1Section::default(),
        }
    }
}

fn config_error(issue: impl Into<String>) -> Error {
    Error::Config {
        issues: vec![issue.into()],
    }
}

/// Parses `key=value`; the value is read as a TOML literal, falling back
/// to a bare string.
fn parse_override(item: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| config_error(format!("override {item:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(config_error(format!("override {item:?} has an empty key")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.split('.').map(str::to_string).collect(), value))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty key");
    let mut cur = table;
    for (depth, part) in parents.iter().enumerate() {
        let entry = cur
            .entry(part.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| {
            config_error(format!(
                "override key {}: {} is not a table",
                path.join("."),
                parents[..=depth].join(".")
            ))
        })?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

impl RunSpec {
    /// Parses, applies overrides, validates and normalizes. Returns the spec
    /// together with any warnings.
    pub fn load_str(text: &str, overrides: &[String]) -> Result<(Self, Vec<String>)> {
        // parse the file on its own first so diagnostics carry line numbers
        let spec: RunSpec = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        let spec = if overrides.is_empty() {
            spec
        } else {
            let mut table: toml::Table =
                toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
            for item in overrides {
                let (path, value) = parse_override(item)?;
                apply_override(&mut table, &path, value)?;
            }
            toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| {
                    config_error(format!("after overrides: {}", e.message()))
                })?
        };
        spec.normalize()
    }

    pub fn load_file(path: &std::path::Path, overrides: &[String]) -> Result<(Self, Vec<String>)> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::load_str(&text, overrides).map_err(|e| match e {
            Error::Config { issues } => Error::Config {
                issues: issues
                    .into_iter()
                    .map(|i| format!("{}: {i}", path.display()))
                    .collect(),
            },
            other => other,
        })
    }

    /// Fills defaults, applies circuit-derived parameters and checks every
    /// section.
    pub fn normalize(mut self) -> Result<(Self, Vec<String>)> {
        let mut warnings = Vec::new();
        if self.spec_version != SPEC_VERSION {
            return Err(config_error(format!(
                "spec_version: unsupported version {} (expected {SPEC_VERSION})",
                self.spec_version
            )));
        }
        if let Some(c) = &self.circuit {
            let report = ParamReport::new(&c.elements, c.resonator_convention)
                .map_err(|e| config_error(format!("circuit.elements: {}", domain_message(e))))?;
            let m = &mut self.model;
            let derived = [
                ("omega_q", &mut m.omega_q, report.omega_q_over_omega_r),
                ("g", &mut m.g, report.g_over_omega_r),
                ("j", &mut m.j, report.j_over_omega_r),
            ];
            for (name, slot, value) in derived {
                if (*slot - value).abs() > 1e-12 * value.abs().max(1.0) {
                    warnings.push(format!(
                        "model.{name} = {} replaced by the circuit-derived value {value}",
                        *slot
                    ));
                }
                *slot = value;
            }
            if m.omega_r != 1.0 {
                warnings.push(format!(
                    "model.omega_r = {} replaced by 1 (circuit units of omega_r)",
                    m.omega_r
                ));
                m.omega_r = 1.0;
            }
            if m.n_qubits != c.elements.n_qubits {
                warnings.push(format!(
                    "model.n_qubits = {} replaced by circuit.elements.n_qubits = {}",
                    m.n_qubits, c.elements.n_qubits
                ));
                m.n_qubits = c.elements.n_qubits;
            }
        }
        if self.model.fock_cutoff.is_none() {
            self.model.fock_cutoff = Some(default_cutoff(self.model.photons, self.model.n_qubits));
        }
        if self.sweep.kind == SweepKind::Decay && self.sweep.decay_values.is_empty() {
            self.sweep.decay_values = decay_grid();
        }
        self.validate()?;
        Ok((self, warnings))
    }

    /// Every issue found, each prefixed by its key.
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        let mut check = |key: &str, r: Result<()>| {
            if let Err(e) = r {
                issues.push(format!("{key}: {}", domain_message(e)));
            }
        };
        check(
            "model",
            self.setup()
                .and_then(|s| s.model.validate_for_photons(s.photons)),
        );
        check("rates", self.rates.validate());
        check("integrator", self.integrator.validate());
        check("stable", validate_stable(&self.stable));
        check("convergence", {
            let c = &self.convergence;
            if c.factor < 2 {
                Err(crate::error::domain(format!(
                    "factor must be at least 2, got {}",
                    c.factor
                )))
            } else if !(c.tol.is_finite() && c.tol > 0.0) {
                Err(crate::error::domain(format!(
                    "tol must be positive, got {}",
                    c.tol
                )))
            } else {
                Ok(())
            }
        });
        for (k, rates) in self.trace.cases.iter().enumerate() {
            check(&format!("trace.cases[{k}]"), rates.validate());
        }
        match self.sweep.kind {
            SweepKind::Grid if !self.sweep.axes.is_empty() => {
                check("sweep", self.grid_sweep().and_then(|s| s.validate()))
            }
            SweepKind::Grid => {}
            SweepKind::Decay => check(
                "sweep.decay_values",
                finite_grid(&self.sweep.decay_values, true),
            ),
            SweepKind::Jg => {
                check("sweep.j_values", finite_grid(&self.sweep.j_values, false));
                check("sweep.g_values", finite_grid(&self.sweep.g_values, false));
            }
        }
        check(
            "spectrum.j_values",
            finite_grid(&self.spectrum.j_values, false),
        );
        for (k, row) in self.table1.rows.iter().enumerate() {
            check(&format!("table1.rows[{k}]"), row.validate());
        }
        if self.table1.n_qubits == 0 {
            issues.push("table1.n_qubits: must be at least 1".into());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { issues })
        }
    }

    pub fn model_params(&self) -> ModelParams {
        let m = &self.model;
        ModelParams {
            n_qubits: m.n_qubits,
            omega_r: m.omega_r,
            omega_q: m.omega_q,
            g: m.g,
            j: m.j,
            site_levels: m.site_levels,
            fock_cutoff: m
                .fock_cutoff
                .unwrap_or_else(|| default_cutoff(m.photons, m.n_qubits)),
        }
    }

    pub fn setup(&self) -> Result<ChargeSetup> {
        let model = self.model_params();
        model.validate()?;
        Ok(ChargeSetup {
            model,
            photons: self.model.photons,
            rates: self.rates,
        })
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            integrator: self.integrator,
            stable: self.stable,
            es_method: self.run.es_method,
            power: self.run.power,
            literal_power: self.run.literal_power,
        }
    }

    /// The `grid` sweep around the model and rates.
    pub fn grid_sweep(&self) -> Result<SweepSpec> {
        Ok(SweepSpec {
            axes: self.sweep.axes.clone(),
            base: self.setup()?,
            settings: self.settings(),
        })
    }

    /// Table rows with published values when the built-in rows are used.
    pub fn table1_rows(&self) -> Vec<(PhysicalRow, Option<crate::experiments::PaperValues>)> {
        if self.table1.rows.is_empty() {
            table1_rows()
                .into_iter()
                .map(|(r, p)| (r, Some(p)))
                .collect()
        } else {
            self.table1
                .rows
                .iter()
                .cloned()
                .map(|r| (r, None))
                .collect()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_error(format!("cannot serialize spec: {e}")))
    }
}

fn domain_message(e: Error) -> String {
    match e {
        Error::Domain(m) => m,
        other => other.to_string(),
    }
}

fn validate_stable(s: &StableConfig) -> Result<()> {
    if !(s.window.is_finite() && s.window > 0.0) {
        return Err(crate::error::domain(format!(
            "window must be positive, got {}",
            s.window
        )));
    }
    if !(s.rel_tol.is_finite() && s.rel_tol > 0.0) {
        return Err(crate::error::domain(format!(
            "rel_tol must be positive, got {}",
            s.rel_tol
        )));
    }
    Ok(())
}

fn finite_grid(values: &[f64], non_negative: bool) -> Result<()> {
    if values.is_empty() {
        return Err(crate::error::domain("grid must not be empty"));
    }
    if let Some(v) = values
        .iter()
        .find(|v| !v.is_finite() || (non_negative && **v < 0.0))
    {
        return Err(crate::error::domain(format!("invalid grid value {v}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, overrides: &[&str]) -> Result<(RunSpec, Vec<String>)> {
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        RunSpec::load_str(text, &o)
    }

    fn issues(e: Error) -> Vec<String> {
        match e {
            Error::Config { issues } => issues,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn minimal_spec_gets_defaults() {
        let (spec, warnings) = load("spec_version = 1\n", &[]).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(spec.model.fock_cutoff, Some(13));
        assert_eq!(spec.rates, DecayRates::closed());
        assert_eq!(spec.integrator, IntegratorConfig::default());
        assert_eq!(spec.trace.cases, fig2_cases());
        assert_eq!(spec.convergence.mode, ConvergenceMode::Enforce);
    }

    #[test]
    fn normalized_spec_round_trips() {
        let text = "spec_version = 1\n[model]\nn_qubits = 2\ng = 0.4\n[rates]\nkappa = 0.2\n[sweep]\nkind = \"jg\"\n";
        let (spec, _) = load(text, &[]).unwrap();
        let again = load(&spec.to_toml().unwrap(), &[]).unwrap().0;
        assert_eq!(again, spec);
    }

    #[test]
    fn negative_rate_names_the_key() {
        let e = load("spec_version = 1\n[rates]\nkappa = -0.1\n", &[]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let issues = issues(e);
        assert_eq!(issues.len(), 1);
        assert!(issues[0].starts_with("rates: kappa"), "{issues:?}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let e = load("spec_version = 1\n[model]\nbogus = 1\n", &[]).unwrap_err();
        let msg = issues(e).join(" ");
        assert!(msg.contains("bogus") && msg.contains("line 3"), "{msg}");
        let e = load("spec_version = 1\n", &["rates.bogus=1"]).unwrap_err();
        assert!(issues(e)[0].contains("bogus"));
    }

    #[test]
    fn overrides_beat_the_file() {
        let (spec, _) = load(
            "spec_version = 1\n[rates]\nkappa = 0.1\n",
            &[
                "rates.kappa=0.5",
                "run.power=literal",
                "model.fock_cutoff=9",
            ],
        )
        .unwrap();
        assert_eq!(spec.rates.kappa, 0.5);
        assert_eq!(spec.run.power, PowerConvention::Literal);
        assert_eq!(spec.model.fock_cutoff, Some(9));
    }

    #[test]
    fn malformed_override_is_a_config_error() {
        assert_eq!(
            load("spec_version = 1\n", &["novalue"])
                .unwrap_err()
                .exit_code(),
            2
        );
        assert_eq!(
            load("spec_version = 1\n", &["model.g.x=1"])
                .unwrap_err()
                .exit_code(),
            2
        );
    }

    #[test]
    fn wrong_version_is_rejected() {
        assert!(issues(load("spec_version = 7\n", &[]).unwrap_err())[0].starts_with("spec_version"));
    }

    #[test]
    fn circuit_values_win_over_model_with_warning() {
        let text = "spec_version = 1\n[model]\ng = 0.7\n[circuit.elements]\n\
            c_josephson = 1e-15\nc_shunt = 50e-15\nc_gate = 2e-15\nc_coupler = 5e-15\n\
            c_neighbor = 1e-15\nc_resonator = 400e-15\nl_resonator = 2e-9\n\
            e_josephson = 2.0e-23\nn_qubits = 3\n";
        let (spec, warnings) = load(text, &[]).unwrap();
        let c = spec.circuit.unwrap();
        let report = ParamReport::new(&c.elements, c.resonator_convention).unwrap();
        assert_eq!(spec.model.g, report.g_over_omega_r);
        assert!(
            warnings.iter().any(|w| w.starts_with("model.g")),
            "{warnings:?}"
        );
        // the normalized form carries the derived values and warns no more
        let (again, warnings) = load(&spec.to_toml().unwrap(), &[]).unwrap();
        assert_eq!(again, spec);
        assert!(warnings.is_empty(), "{warnings:?}");
    }

    #[test]
    fn too_small_cutoff_is_rejected() {
        let e = load("spec_version = 1\n[model]\nfock_cutoff = 4\n", &[]).unwrap_err();
        assert!(issues(e)[0].starts_with("model: fock_cutoff"));
    }
}
