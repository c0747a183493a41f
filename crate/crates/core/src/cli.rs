//! Command-line front end: loads a run spec, dispatches one experiment and
//! writes its CSV files and JSON summary into the output directory.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid arguments or spec,
//! 3 numerical failure (including a failed cutoff gate, reported after the
//! outputs are written).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::circuit::ParamReport;
use crate::config::{ConvergenceMode, RunSpec, SweepKind};
use crate::dynamics::DissipatorForm;
use crate::error::{Error, Result};
use crate::experiments::{
    convergence_gate, run_decay_sweeps, run_jg_grid, run_qutrit_comparison, run_sweep, run_table1,
    run_time_traces, sweep_csv, table1_convergence, worker_pool, ConvergenceReport, PointResult,
    SweepSpec,
};
use crate::metrics::PowerConvention;
use crate::model::spectrum_vs_j;
use crate::output::{OutputDir, Summary};

#[derive(Debug, Parser)]
#[command(
    name = "qbattery",
    version,
    about = "Transmon-chain quantum battery simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Model parameters derived from the `[circuit]` section.
    Params(CommonArgs),
    /// Charging traces for each `[trace]` case.
    Trace(CommonArgs),
    /// Grid, decay or (J, g) sweep with the cutoff gate.
    Sweep(CommonArgs),
    /// Battery spectrum and ground-state population difference versus J.
    Spectrum(CommonArgs),
    /// Collective versus parallel charging under device parameters.
    Table1(CommonArgs),
    /// Closed qubit chain against the qutrit chain.
    Qutrit(CommonArgs),
    /// Liouvillian steady state of the model.
    Steady(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run spec (TOML); defaults apply when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override a spec value, e.g. `rates.kappa=0.5`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Dissipator form, overriding `integrator.dissipator_form`.
    #[arg(long)]
    pub dissipator: Option<DissipatorForm>,
    /// Power convention, overriding `run.power`.
    #[arg(long)]
    pub power: Option<PowerConvention>,
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Params(_) => "params",
            Command::Trace(_) => "trace",
            Command::Sweep(_) => "sweep",
            Command::Spectrum(_) => "spectrum",
            Command::Table1(_) => "table1",
            Command::Qutrit(_) => "qutrit",
            Command::Steady(_) => "steady",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Params(a)
            | Command::Trace(a)
            | Command::Sweep(a)
            | Command::Spectrum(a)
            | Command::Table1(a)
            | Command::Qutrit(a)
            | Command::Steady(a) => a,
        }
    }
}

/// Everything a command needs after argument handling.
struct Context {
    spec: RunSpec,
    warnings: Vec<String>,
    out: OutputDir,
    pool: rayon::ThreadPool,
}

impl Context {
    fn from_args(args: &CommonArgs) -> Result<Self> {
        let mut overrides = args.overrides.clone();
        if let Some(d) = args.dissipator {
            overrides.push(format!("integrator.dissipator_form=\"{}\"", lower(&d)));
        }
        if let Some(p) = args.power {
            overrides.push(format!("run.power=\"{}\"", lower(&p)));
        }
        let (spec, warnings) = match &args.spec {
            Some(path) => RunSpec::load_file(path, &overrides)?,
            None => RunSpec::load_str(
                &format!("spec_version = {}\n", crate::config::SPEC_VERSION),
                &overrides,
            )?,
        };
        for w in &warnings {
            log::warn!("{w}");
        }
        let out = OutputDir::create(&args.out)?;
        let pool = worker_pool(args.jobs).map_err(|e| Error::Config {
            issues: vec![format!("--jobs: {e}")],
        })?;
        Ok(Self {
            spec,
            warnings,
            out,
            pool,
        })
    }

    fn summary<T: Serialize>(&self, command: &str, results: T) -> Result<()> {
        self.out
            .write_text("effective_spec.toml", &self.spec.to_toml()?)?;
        self.out.write_json(
            "summary.json",
            &Summary::new(command, &self.spec, &self.warnings, results),
        )?;
        Ok(())
    }
}

fn lower<T: std::fmt::Debug>(v: &T) -> String {
    format!("{v:?}").to_lowercase()
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run_from<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.command.args().verbose);
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

pub fn dispatch(command: &Command) -> Result<()> {
    let ctx = Context::from_args(command.args())?;
    let name = command.name();
    match command {
        Command::Params(_) => params(&ctx, name),
        Command::Trace(_) => trace(&ctx, name),
        Command::Sweep(_) => sweep(&ctx, name),
        Command::Spectrum(_) => spectrum(&ctx, name),
        Command::Table1(_) => table1(&ctx, name),
        Command::Qutrit(_) => qutrit(&ctx, name),
        Command::Steady(_) => steady(&ctx, name),
    }
}

fn params(ctx: &Context, name: &str) -> Result<()> {
    let circuit = ctx.spec.circuit.as_ref().ok_or_else(|| Error::Config {
        issues: vec!["circuit: the params command needs a [circuit] section".into()],
    })?;
    let report = ParamReport::new(&circuit.elements, circuit.resonator_convention)?;
    println!(
        "f_q = {:.6} GHz, f_r = {:.6} GHz, g = {:.6} MHz, J = {:.6} MHz, g/omega_r = {:.6} ({})",
        report.f_q_ghz,
        report.f_r_ghz,
        report.g_mhz,
        report.j_mhz,
        report.g_over_omega_r,
        report.regime.label()
    );
    ctx.summary(name, report)
}

fn trace(ctx: &Context, name: &str) -> Result<()> {
    let setup = ctx.spec.setup()?;
    let settings = ctx.spec.settings();
    let traces = run_time_traces(
        &setup.model,
        setup.photons,
        &ctx.spec.trace.cases,
        &settings,
        &ctx.pool,
    )?;
    for t in &traces {
        ctx.out.write_text(
            &format!("trace_{}.csv", t.label()),
            &t.trace.to_csv(settings.power)?,
        )?;
        log::info!(
            "{}: E_s = {:.6} (settled {}), P_max = {:.6} at t = {:.3}",
            t.label(),
            t.stable.value,
            t.stable.settled,
            t.max_power,
            t.t_at_max_power
        );
    }
    ctx.summary(name, &traces)
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    kind: SweepKind,
    datasets: Vec<(String, &'a [PointResult])>,
    convergence: Option<Vec<ConvergenceReport>>,
}

fn sweep(ctx: &Context, name: &str) -> Result<()> {
    let spec = &ctx.spec;
    let settings = spec.settings();
    let base = spec.setup()?;
    let mut datasets: Vec<(String, SweepSpec, Vec<PointResult>)> = Vec::new();
    match spec.sweep.kind {
        SweepKind::Grid => {
            if spec.sweep.axes.is_empty() {
                return Err(Error::Config {
                    issues: vec!["sweep.axes: a grid sweep needs at least one axis".into()],
                });
            }
            let s = spec.grid_sweep()?;
            let rows = run_sweep(&s, &ctx.pool)?;
            datasets.push(("sweep".into(), s, rows));
        }
        SweepKind::Decay => {
            let d = run_decay_sweeps(&base, &spec.sweep.decay_values, &settings, &ctx.pool)?;
            for (c, s, rows) in d.one_d {
                datasets.push((format!("decay_{c}"), s, rows));
            }
            for ((a, b), s, rows) in d.two_d {
                datasets.push((format!("decay_{a}_{b}"), s, rows));
            }
        }
        SweepKind::Jg => {
            let g = run_jg_grid(
                &base,
                &spec.sweep.j_values,
                &spec.sweep.g_values,
                &settings,
                &ctx.pool,
            )?;
            datasets.push(("jg_grid".into(), g.spec, g.rows));
        }
    }
    for (stem, s, rows) in &datasets {
        ctx.out
            .write_text(&format!("{stem}.csv"), &sweep_csv(s, rows)?)?;
    }

    let c = spec.convergence;
    let reports = if c.mode == ConvergenceMode::Off {
        None
    } else {
        let mut reports = Vec::new();
        for (stem, s, rows) in &datasets {
            let r = convergence_gate(s, rows, c.factor, c.tol, &ctx.pool)?;
            ctx.out
                .write_text(&format!("{stem}_convergence.csv"), &r.to_csv()?)?;
            reports.push(r);
        }
        Some(reports)
    };
    ctx.summary(
        name,
        SweepSummary {
            kind: spec.sweep.kind,
            datasets: datasets
                .iter()
                .map(|(n, _, r)| (n.clone(), r.as_slice()))
                .collect(),
            convergence: reports.clone(),
        },
    )?;
    finish_gate(c.mode, reports.as_deref().unwrap_or_default())
}

/// Logs each gate and, when enforcing, fails on the first unconverged point.
fn finish_gate(mode: ConvergenceMode, reports: &[ConvergenceReport]) -> Result<()> {
    for r in reports {
        if let Some(w) = r.worst() {
            log::info!(
                "cutoff gate worst at {}: relative change {:.3e}",
                w.point,
                w.rel_change
            );
        }
    }
    if mode == ConvergenceMode::Enforce {
        for r in reports {
            r.enforce()?;
        }
    } else if let Some(r) = reports.iter().find(|r| !r.passed()) {
        let w = r.worst().expect("a failed report has rows");
        log::warn!(
            "cutoff gate failed at {} (relative change {:.3e})",
            w.point,
            w.rel_change
        );
    }
    Ok(())
}

fn spectrum(ctx: &Context, name: &str) -> Result<()> {
    let model = ctx.spec.model_params();
    let table = ctx
        .pool
        .install(|| spectrum_vs_j(&model, &ctx.spec.spectrum.j_values))?;
    ctx.out.write_text("spectrum.csv", &table.to_csv())?;
    ctx.summary(name, &table)
}

#[derive(Serialize)]
struct Table1Summary<'a> {
    report: &'a crate::experiments::Table1Report,
    convergence: Option<&'a ConvergenceReport>,
}

fn table1(ctx: &Context, name: &str) -> Result<()> {
    let settings = ctx.spec.settings();
    let rows = ctx.spec.table1_rows();
    let report = run_table1(&rows, &ctx.spec.table1.options(), &settings, &ctx.pool)?;
    ctx.out.write_text("table1.csv", &report.to_csv()?)?;
    for r in &report.rows {
        log::info!(
            "{} {:?}: E_s = {:.4e} neV, P_max = {:.4e} eV/s (literal {:.4e})",
            r.row.label,
            r.row.scheme,
            r.e_s_nev,
            r.p_max_ev_s,
            r.p_max_literal_ev_s
        );
    }
    let c = ctx.spec.convergence;
    let gate = if c.mode == ConvergenceMode::Off {
        None
    } else {
        let g = table1_convergence(&report, c.factor, c.tol, &settings, &ctx.pool)?;
        ctx.out.write_text("table1_convergence.csv", &g.to_csv()?)?;
        Some(g)
    };
    ctx.summary(
        name,
        Table1Summary {
            report: &report,
            convergence: gate.as_ref(),
        },
    )?;
    finish_gate(c.mode, gate.as_slice())
}

fn qutrit(ctx: &Context, name: &str) -> Result<()> {
    let m = &ctx.spec.model;
    let power = ctx.spec.run.power;
    let cmp = ctx
        .pool
        .install(|| run_qutrit_comparison(m.n_qubits, m.g, m.j, &ctx.spec.integrator, power))?;
    ctx.out
        .write_text("qubit_trace.csv", &cmp.qubit.to_csv(power)?)?;
    ctx.out
        .write_text("qutrit_trace.csv", &cmp.qutrit.to_csv(power)?)?;
    ctx.summary(name, &cmp)
}

#[derive(Serialize)]
struct SteadySummary {
    stable_energy: f64,
    residual: f64,
    method: String,
}

fn steady(ctx: &Context, name: &str) -> Result<()> {
    let prep = ctx.spec.setup()?.prepare()?;
    let (stable_energy, residual, method) =
        prep.steady_charge(ctx.spec.integrator.dissipator_form)?;
    println!("E_ss = {stable_energy:.10} (residual {residual:.2e}, {method})");
    ctx.summary(
        name,
        SteadySummary {
            stable_energy,
            residual,
            method,
        },
    )
}
