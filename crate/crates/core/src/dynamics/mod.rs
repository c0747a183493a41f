//! Lindblad master equation with resonator loss, collective relaxation and
//! collective dephasing:
//!
//! `ρ̇ = i[ρ, H] + κ 𝕃[a] + Γ₁ 𝕃[J₋] + Γ₂ 𝕃[J_z]`, `J₋ = Σσ⁻_i`, `J_z = Σσ^z_i`.
//!
//! The standard dissipator is `𝕃[A] = AρA† − ½{A†A, ρ}`. The literal variant
//! `AρA† − ½(A†Aρ + ρAA†)` is available through [`DissipatorForm::Literal`];
//! it does not preserve the trace when `A` is not normal.

mod blocks;
mod integrator;
mod liouvillian;

use std::ops::ControlFlow;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use blocks::{evolve_blocks_with, BlockGenerator, BlockLayout, BlockScratch};
pub use integrator::{integrate, StepControl, StepStats};
pub use liouvillian::{
    invariant_sector, liouvillian_matrix, liouvillian_sparse, steady_state, steady_state_auto,
    steady_state_for, steady_state_from, steady_state_sparse, SteadyState, DENSE_LIMIT,
};

use crate::error::{domain, Error, Result};
use crate::hilbert::{qubit_operator, DensityMatrix, Operator, QubitOp, SpaceSpec, StateVector};
use crate::linalg;
use crate::sparse::{CsrMatrix, RealCsr, SplitCsr};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Rates of the three channels, in units of `ω`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayRates {
    pub kappa: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl DecayRates {
    pub const fn new(kappa: f64, gamma1: f64, gamma2: f64) -> Self {
        Self {
            kappa,
            gamma1,
            gamma2,
        }
    }

    pub const fn closed() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa", self.kappa),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(domain(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn is_closed(&self) -> bool {
        self.kappa == 0.0 && self.gamma1 == 0.0 && self.gamma2 == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DissipatorForm {
    #[default]
    Standard,
    Literal,
}

impl std::str::FromStr for DissipatorForm {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "standard" => Ok(Self::Standard),
            "literal" => Ok(Self::Literal),
            other => Err(format!(
                "unknown dissipator form {other:?} (standard|literal)"
            )),
        }
    }
}

/// Integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub t_final: f64,
    pub output_stride: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub dissipator_form: DissipatorForm,
    /// Allowed `|tr ρ − 1|` before the run is aborted (standard form).
    pub trace_budget: f64,
    /// Smallest eigenvalue of the full state is computed every this many
    /// samples; 0 disables the check.
    pub positivity_every: usize,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            t_final: 200.0,
            output_stride: 0.1,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: 1.0,
            dissipator_form: DissipatorForm::Standard,
            trace_budget: 1e-6,
            positivity_every: 1,
            max_steps: 50_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_t_final(t_final: f64, output_stride: f64) -> Self {
        Self {
            t_final,
            output_stride,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(domain(format!(
                "t_final must be positive, got {}",
                self.t_final
            )));
        }
        if !(self.output_stride > 0.0 && self.output_stride <= self.t_final) {
            return Err(domain(format!(
                "output_stride must lie in (0, t_final], got {}",
                self.output_stride
            )));
        }
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 0.0 && v <= 1e-2) {
                return Err(domain(format!("{name} must lie in (0, 1e-2], got {v}")));
            }
        }
        if self.max_step.is_nan() || self.max_step <= 0.0 {
            return Err(domain(format!(
                "max_step must be positive, got {}",
                self.max_step
            )));
        }
        if self.trace_budget.is_nan() || self.trace_budget <= 0.0 {
            return Err(domain("trace_budget must be positive"));
        }
        Ok(())
    }

    /// `0, stride, 2·stride, …` up to and including `t_final`.
    pub fn output_times(&self) -> Vec<f64> {
        let n = (self.t_final / self.output_stride + 1e-9).floor() as usize;
        let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * self.output_stride).collect();
        let last = times[n];
        if (self.t_final - last).abs() > 1e-9 * self.t_final {
            times.push(self.t_final);
        } else {
            times[n] = self.t_final;
        }
        times
    }

    fn step_control(&self) -> StepControl {
        StepControl {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            max_steps: self.max_steps,
        }
    }
}

/// `(J₋, J_z)` embedded in the full space.
pub fn collective_jump_operators(space: &SpaceSpec) -> Result<(Operator, Operator)> {
    if !space.is_qubit() {
        return Err(domain(
            "collective jump operators are defined for qubit sites only",
        ));
    }
    let minus = space.battery_sum(&qubit_operator(QubitOp::Minus, 2)?)?;
    let z = space.battery_sum(&qubit_operator(QubitOp::Z, 2)?)?;
    Ok((space.lift_battery(&minus)?, space.lift_battery(&z)?))
}

/// Hamiltonian, space and rates of one master equation, optionally
/// restricted to an invariant subspace.
#[derive(Debug, Clone)]
pub struct OpenSystem {
    pub space: SpaceSpec,
    pub hamiltonian: Operator,
    pub rates: DecayRates,
    basis: Option<Array2<Complex64>>,
}

impl OpenSystem {
    pub fn new(space: SpaceSpec, hamiltonian: Operator, rates: DecayRates) -> Result<Self> {
        rates.validate()?;
        if hamiltonian.dim() != space.dim() {
            return Err(Error::Dimension {
                expected: space.dim(),
                got: hamiltonian.dim(),
            });
        }
        if !rates.is_closed() && !space.is_qubit() {
            return Err(domain("dissipation is only modelled for qubit sites"));
        }
        Ok(Self {
            space,
            hamiltonian,
            rates,
            basis: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    /// Compresses onto the span of the orthonormal columns of `basis`, which
    /// must be invariant under the Hamiltonian and every jump operator.
    pub fn restrict(&self, basis: Array2<Complex64>) -> Result<Self> {
        if self.basis.is_some() {
            return Err(domain("system is already restricted"));
        }
        if basis.nrows() != self.dim() || basis.ncols() == 0 {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: basis.nrows(),
            });
        }
        let bh = linalg::adjoint(&basis);
        let gram = bh.dot(&basis) - Array2::<Complex64>::eye(basis.ncols());
        if linalg::max_abs(&gram) > 1e-12 {
            return Err(domain("restriction basis is not orthonormal"));
        }
        if !self.leaves_invariant(&basis)? {
            return Err(domain("restriction subspace is not invariant"));
        }
        let hamiltonian = Operator::new(bh.dot(self.hamiltonian.matrix()).dot(&basis));
        Ok(Self {
            space: self.space,
            hamiltonian,
            rates: self.rates,
            basis: Some(basis),
        })
    }

    /// True when `H`, every jump `A` and every `A†` map the span of the
    /// orthonormal columns of `basis` into itself.
    pub fn leaves_invariant(&self, basis: &Array2<Complex64>) -> Result<bool> {
        let bh = linalg::adjoint(basis);
        let mut ops = vec![self.hamiltonian.clone()];
        for (_, a) in self.jumps()? {
            ops.push(a.adjoint());
            ops.push(a);
        }
        for op in &ops {
            let image = op.matrix().dot(basis);
            let outside = &image - &basis.dot(&bh.dot(&image));
            let scale = linalg::max_abs(op.matrix()).max(1.0);
            if linalg::max_abs(&outside) > 1e-10 * scale {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Isometry of a restricted system.
    pub fn basis(&self) -> Option<&Array2<Complex64>> {
        self.basis.as_ref()
    }

    /// `V ρ V†` back on the full space (identity when unrestricted).
    pub fn lift(&self, rho: &DensityMatrix) -> DensityMatrix {
        match &self.basis {
            Some(v) => DensityMatrix::new(v.dot(&rho.matrix).dot(&linalg::adjoint(v))),
            None => rho.clone(),
        }
    }

    /// `V† ρ V` (identity when unrestricted).
    pub fn compress(&self, rho: &DensityMatrix) -> DensityMatrix {
        match &self.basis {
            Some(v) => DensityMatrix::new(linalg::adjoint(v).dot(&rho.matrix).dot(v)),
            None => rho.clone(),
        }
    }

    /// Non-zero channels as `(rate, A)`.
    pub fn jumps(&self) -> Result<Vec<(f64, Operator)>> {
        let mut out = Vec::new();
        if self.rates.kappa > 0.0 {
            out.push((self.rates.kappa, self.space.resonator_lowering()?));
        }
        if self.rates.gamma1 > 0.0 || self.rates.gamma2 > 0.0 {
            let (minus, z) = collective_jump_operators(&self.space)?;
            if self.rates.gamma1 > 0.0 {
                out.push((self.rates.gamma1, minus));
            }
            if self.rates.gamma2 > 0.0 {
                out.push((self.rates.gamma2, z));
            }
        }
        if let Some(v) = &self.basis {
            let vh = linalg::adjoint(v);
            for (_, a) in &mut out {
                *a = Operator::new(vh.dot(a.matrix()).dot(v));
            }
        }
        Ok(out)
    }

    /// `K₁ = Σ γ A†A` and `K₂ = Σ γ AA†`.
    fn anticommutator_terms(&self) -> Result<(Operator, Operator)> {
        let d = self.dim();
        let mut k1 = Operator::zeros(d);
        let mut k2 = Operator::zeros(d);
        for (rate, a) in self.jumps()? {
            k1 = &k1 + &(&a.adjoint().dot(&a) * rate);
            k2 = &k2 + &(&a.dot(&a.adjoint()) * rate);
        }
        Ok((k1, k2))
    }

    /// The non-Hermitian pair `(M₁, M₂)` with
    /// `ρ̇ = −i M₁ρ + i ρM₂ + Σ γ AρA†`.
    pub(crate) fn effective_pair(&self, form: DissipatorForm) -> Result<(Operator, Operator)> {
        let (k1, k2) = self.anticommutator_terms()?;
        let h = &self.hamiltonian;
        let m1 = h - &k1.scale(I * 0.5);
        let m2 = match form {
            DissipatorForm::Standard => h + &k1.scale(I * 0.5),
            DissipatorForm::Literal => h + &k2.scale(I * 0.5),
        };
        Ok((m1, m2))
    }

    /// Precomputed sparse generator.
    pub fn generator(&self, form: DissipatorForm) -> Result<Generator> {
        let (m1, m2) = self.effective_pair(form)?;
        let jumps = self
            .jumps()?
            .into_iter()
            .map(|(rate, a)| {
                let csr = a.to_csr();
                let split = SplitCsr::new(&csr);
                let kind = if csr.is_diagonal() {
                    JumpKind::Diagonal(csr.diagonal())
                } else if let (true, Some(re)) = (split.is_real(), split.re) {
                    JumpKind::Real(re)
                } else {
                    JumpKind::General(csr)
                };
                Jump { rate, kind }
            })
            .collect();
        Ok(Generator {
            d: self.dim(),
            form,
            m1_split: SplitCsr::new(&m1.to_csr()),
            m1: m1.to_csr(),
            m2: m2.to_csr(),
            jumps,
        })
    }
}

/// Dense reference evaluation of the right-hand side.
pub fn lindblad_rhs(
    rho: &DensityMatrix,
    system: &OpenSystem,
    form: DissipatorForm,
) -> Result<Array2<Complex64>> {
    if rho.dim() != system.dim() {
        return Err(Error::Dimension {
            expected: system.dim(),
            got: rho.dim(),
        });
    }
    let r = &rho.matrix;
    let h = system.hamiltonian.matrix();
    let mut out = (r.dot(h) - h.dot(r)).mapv(|z| z * I);
    for (rate, a) in system.jumps()? {
        let a = a.matrix();
        let ad = linalg::adjoint(a);
        let ada = ad.dot(a);
        let right = match form {
            DissipatorForm::Standard => r.dot(&ada),
            DissipatorForm::Literal => r.dot(&a.dot(&ad)),
        };
        let term = a.dot(r).dot(&ad) - (ada.dot(r) + right).mapv(|z| z * 0.5);
        out = out + term.mapv(|z| z * rate);
    }
    Ok(out)
}

enum JumpKind {
    Diagonal(Vec<Complex64>),
    Real(RealCsr),
    General(CsrMatrix),
}

struct Jump {
    rate: f64,
    kind: JumpKind,
}

/// Sparse form of the generator acting on row-major `d × d` buffers.
pub struct Generator {
    d: usize,
    form: DissipatorForm,
    m1: CsrMatrix,
    m1_split: SplitCsr,
    m2: CsrMatrix,
    jumps: Vec<Jump>,
}

/// Work buffers for [`Generator::apply`].
pub struct Scratch {
    x: Vec<Complex64>,
    y: Vec<Complex64>,
    z: Vec<Complex64>,
}

impl Generator {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn form(&self) -> DissipatorForm {
        self.form
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            x: vec![ZERO; self.d * self.d],
            y: vec![ZERO; self.d * self.d],
            z: vec![ZERO; self.d * self.d],
        }
    }

    /// `out = ρ̇` for a row-major `ρ`.
    pub fn apply(&self, rho: &[Complex64], out: &mut [Complex64], s: &mut Scratch) {
        match self.form {
            DissipatorForm::Standard => self.apply_standard(rho, out, s),
            DissipatorForm::Literal => self.apply_literal(rho, out, s),
        }
    }

    /// `X = −i H_eff ρ`, `ρ̇ = X + X† + Σ γ AρA†`, symmetrised so the output
    /// is exactly Hermitian.
    fn apply_standard(&self, rho: &[Complex64], out: &mut [Complex64], s: &mut Scratch) {
        let d = self.d;
        // H_eff ρ = x + i y
        match &self.m1_split.re {
            Some(re) => re.mul_dense(rho, &mut s.x),
            None => s.x.fill(ZERO),
        }
        match &self.m1_split.im {
            Some(im) => im.mul_dense(rho, &mut s.y),
            None => s.y.fill(ZERO),
        }
        for i in 0..d {
            for j in i..d {
                let a = s.y[i * d + j] - I * s.x[i * d + j];
                let b = s.y[j * d + i] - I * s.x[j * d + i];
                let v = a + b.conj();
                out[i * d + j] = v;
                out[j * d + i] = v.conj();
            }
        }
        for jump in &self.jumps {
            let z = match &jump.kind {
                JumpKind::Diagonal(z) => {
                    for i in 0..d {
                        for j in i..d {
                            let sym = 0.5 * (rho[i * d + j] + rho[j * d + i].conj());
                            let v = jump.rate * z[i] * z[j].conj() * sym;
                            out[i * d + j] += v;
                            if j != i {
                                out[j * d + i] += v.conj();
                            }
                        }
                    }
                    continue;
                }
                JumpKind::Real(a) => {
                    // A (Aρ)† equals AρA† for Hermitian ρ
                    a.mul_dense(rho, &mut s.x);
                    for i in 0..d {
                        for j in 0..d {
                            s.y[j * d + i] = s.x[i * d + j].conj();
                        }
                    }
                    a.mul_dense(&s.y, &mut s.z);
                    &s.z
                }
                JumpKind::General(a) => {
                    a.dense_mul_adjoint(rho, &mut s.x);
                    a.mul_dense(&s.x, &mut s.y);
                    &s.y
                }
            };
            for i in 0..d {
                for j in i..d {
                    let v = 0.5 * jump.rate * (z[i * d + j] + z[j * d + i].conj());
                    out[i * d + j] += v;
                    if j != i {
                        out[j * d + i] += v.conj();
                    }
                }
            }
        }
    }

    fn apply_literal(&self, rho: &[Complex64], out: &mut [Complex64], s: &mut Scratch) {
        self.m1.mul_dense(rho, &mut s.x);
        self.m2.dense_mul(rho, &mut s.y);
        for ((o, x), y) in out.iter_mut().zip(&s.x).zip(&s.y) {
            *o = -I * x + I * y;
        }
        let d = self.d;
        for jump in &self.jumps {
            match &jump.kind {
                JumpKind::Diagonal(z) => {
                    for i in 0..d {
                        for j in 0..d {
                            out[i * d + j] += jump.rate * z[i] * z[j].conj() * rho[i * d + j];
                        }
                    }
                }
                JumpKind::Real(a) => {
                    // ρ need not be Hermitian here: AρAᵀ = (A (Aρ)ᵀ)ᵀ
                    a.mul_dense(rho, &mut s.x);
                    for i in 0..d {
                        for j in 0..d {
                            s.y[j * d + i] = s.x[i * d + j];
                        }
                    }
                    a.mul_dense(&s.y, &mut s.z);
                    for i in 0..d {
                        for j in 0..d {
                            out[i * d + j] += jump.rate * s.z[j * d + i];
                        }
                    }
                }
                JumpKind::General(a) => {
                    a.dense_mul_adjoint(rho, &mut s.x);
                    a.mul_dense(&s.x, &mut s.y);
                    for (o, y) in out.iter_mut().zip(&s.y) {
                        *o += jump.rate * y;
                    }
                }
            }
        }
    }
}

/// A named observable recorded as `Re tr(Oρ)` at every sample.
#[derive(Debug, Clone)]
pub struct Probe {
    pub name: String,
    pub op: CsrMatrix,
}

impl Probe {
    pub fn new(name: impl Into<String>, op: &Operator) -> Self {
        Self {
            name: name.into(),
            op: op.to_csr(),
        }
    }
}

/// Health of the state at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleDiagnostics {
    pub trace_dev: f64,
    pub hermiticity: f64,
    /// NaN when not evaluated at this sample.
    pub min_eig: f64,
    pub purity: f64,
}

/// Recorded time series of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub probe_names: Vec<String>,
    /// `values[probe][sample]`.
    pub values: Vec<Vec<f64>>,
    pub diagnostics: Vec<SampleDiagnostics>,
    pub states: Option<Vec<DensityMatrix>>,
    pub stats: StepStats,
    pub form: DissipatorForm,
    pub pure: bool,
    /// True when a stop criterion ended the run before `t_final`.
    pub stopped_early: bool,
}

impl Trajectory {
    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.probe_names
            .iter()
            .position(|p| p == name)
            .map(|k| self.values[k].as_slice())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn max_trace_dev(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.trace_dev)
            .fold(0.0, f64::max)
    }

    pub fn max_hermiticity(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.hermiticity)
            .fold(0.0, f64::max)
    }

    /// Smallest evaluated eigenvalue over the run.
    pub fn min_eigenvalue(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.min_eig)
            .filter(|v| !v.is_nan())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Values seen by a stop criterion: `(t, probe values)`.
pub type StopFn<'a> = dyn FnMut(f64, &[f64]) -> bool + 'a;

fn check_state(rho: &DensityMatrix, system_dim: usize) -> Result<()> {
    if rho.dim() != system_dim {
        return Err(Error::Dimension {
            expected: system_dim,
            got: rho.dim(),
        });
    }
    rho.validate().map(|_| ())
}

fn trace_of(rho: &[Complex64], d: usize) -> Complex64 {
    (0..d).map(|i| rho[i * d + i]).sum()
}

struct Recorder<'p> {
    probes: &'p [Probe],
    traj: Trajectory,
    every: usize,
    record_states: bool,
}

impl<'p> Recorder<'p> {
    fn new(
        probes: &'p [Probe],
        form: DissipatorForm,
        pure: bool,
        every: usize,
        record_states: bool,
    ) -> Self {
        Self {
            probes,
            traj: Trajectory {
                times: Vec::new(),
                probe_names: probes.iter().map(|p| p.name.clone()).collect(),
                values: vec![Vec::new(); probes.len()],
                diagnostics: Vec::new(),
                states: record_states.then(Vec::new),
                stats: StepStats::default(),
                form,
                pure,
                stopped_early: false,
            },
            every,
            record_states,
        }
    }

    fn push_mixed(&mut self, k: usize, t: f64, rho: &[Complex64], d: usize) -> Result<Vec<f64>> {
        let mut values = Vec::with_capacity(self.probes.len());
        for (series, p) in self.traj.values.iter_mut().zip(self.probes) {
            let v = p.op.trace_product(rho).re;
            series.push(v);
            values.push(v);
        }
        let m = Array2::from_shape_vec((d, d), rho.to_vec()).expect("square buffer");
        let min_eig = if self.every > 0 && k % self.every == 0 {
            linalg::eigvalsh(&linalg::hermitize(&m))?[0]
        } else {
            f64::NAN
        };
        self.traj.diagnostics.push(SampleDiagnostics {
            trace_dev: (trace_of(rho, d) - 1.0).norm(),
            hermiticity: linalg::hermiticity_defect(&m),
            min_eig,
            purity: rho.iter().map(|z| z.norm_sqr()).sum(),
        });
        self.traj.times.push(t);
        if self.record_states {
            self.traj
                .states
                .as_mut()
                .expect("enabled")
                .push(DensityMatrix::new(m));
        }
        Ok(values)
    }

    fn push_blocks(
        &mut self,
        k: usize,
        t: f64,
        y: &[Complex64],
        layout: &BlockLayout,
        probe_blocks: &[Vec<CsrMatrix>],
    ) -> Result<Vec<f64>> {
        let mut values = Vec::with_capacity(self.probes.len());
        for (series, ops) in self.traj.values.iter_mut().zip(probe_blocks) {
            let v: f64 = (0..layout.n_blocks())
                .map(|b| ops[b].trace_product(&y[layout.range(b)]).re)
                .sum();
            series.push(v);
            values.push(v);
        }
        let check = self.every > 0 && k % self.every == 0;
        let mut min_eig = if check { f64::INFINITY } else { f64::NAN };
        let mut hermiticity: f64 = 0.0;
        for b in 0..layout.n_blocks() {
            let m = blocks::block_matrix(y, layout, b);
            hermiticity = hermiticity.max(linalg::hermiticity_defect(&m));
            if check {
                min_eig = min_eig.min(linalg::eigvalsh(&linalg::hermitize(&m))?[0]);
            }
        }
        self.traj.diagnostics.push(SampleDiagnostics {
            trace_dev: (blocks::block_trace(y, layout) - 1.0).norm(),
            hermiticity,
            min_eig,
            purity: y.iter().map(|z| z.norm_sqr()).sum(),
        });
        self.traj.times.push(t);
        if self.record_states {
            self.traj
                .states
                .as_mut()
                .expect("enabled")
                .push(DensityMatrix::new(layout.lift(y)));
        }
        Ok(values)
    }

    fn push_pure(&mut self, t: f64, psi: &[Complex64]) -> Vec<f64> {
        let mut values = Vec::with_capacity(self.probes.len());
        for (series, p) in self.traj.values.iter_mut().zip(self.probes) {
            let v = p.op.expectation_vec(psi).re;
            series.push(v);
            values.push(v);
        }
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        self.traj.diagnostics.push(SampleDiagnostics {
            trace_dev: (norm2 - 1.0).abs(),
            hermiticity: 0.0,
            min_eig: 0.0,
            purity: norm2 * norm2,
        });
        self.traj.times.push(t);
        if self.record_states {
            let v = StateVector::new(ndarray::Array1::from(psi.to_vec()));
            self.traj
                .states
                .as_mut()
                .expect("enabled")
                .push(v.to_density());
        }
        values
    }
}

/// Integrates the master equation from `rho0`.
pub fn evolve(
    system: &OpenSystem,
    rho0: &DensityMatrix,
    cfg: &IntegratorConfig,
    probes: &[Probe],
    record_states: bool,
) -> Result<Trajectory> {
    evolve_with(system, rho0, cfg, probes, record_states, &mut |_, _| false)
}

/// As [`evolve`], stopping at the first sample for which `stop` is true.
pub fn evolve_with(
    system: &OpenSystem,
    rho0: &DensityMatrix,
    cfg: &IntegratorConfig,
    probes: &[Probe],
    record_states: bool,
    stop: &mut StopFn<'_>,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_state(rho0, system.dim())?;
    let d = system.dim();
    let generator = system.generator(cfg.dissipator_form)?;
    let mut scratch = generator.scratch();
    // exact Hermiticity is preserved by every stage of the standard form
    let y0: Vec<Complex64> = linalg::hermitize(&rho0.matrix).iter().copied().collect();
    let times = cfg.output_times();
    let standard = cfg.dissipator_form == DissipatorForm::Standard;
    let budget = cfg.trace_budget;

    let mut rec = Recorder::new(
        probes,
        cfg.dissipator_form,
        false,
        cfg.positivity_every,
        record_states,
    );
    let mut stopped = false;
    let stats = integrate(
        &y0,
        &times,
        &cfg.step_control(),
        |_, y, out| generator.apply(y, out, &mut scratch),
        |k, t, y| {
            let values = rec.push_mixed(k, t, y, d)?;
            if k + 1 < times.len() && stop(t, &values) {
                stopped = true;
                return Ok(ControlFlow::Break(()));
            }
            Ok(ControlFlow::Continue(()))
        },
        |t, y| {
            if standard {
                let drift = (trace_of(y, d) - 1.0).norm();
                if drift > budget {
                    return Err(Error::TraceDrift { t, drift, budget });
                }
            }
            Ok(())
        },
    )?;
    rec.traj.stats = stats;
    rec.traj.stopped_early = stopped;
    if standard {
        check_positivity(&rec.traj)?;
    }
    Ok(rec.traj)
}

fn check_positivity(traj: &Trajectory) -> Result<()> {
    let worst = traj.min_eigenvalue();
    if worst < -1e-7 {
        return Err(Error::Invariant(format!(
            "state lost positivity: smallest eigenvalue {worst:e}"
        )));
    }
    Ok(())
}

/// As [`evolve_with`], integrated in block form when a symmetry applies: the
/// [`invariant_sector`] holding `rho0`, split further by excitation parity
/// when the state and every channel respect it. Probes and states are mapped
/// to and from the blocks, so the result matches a full-space run to
/// integration tolerance. Returns the layout label alongside, `None` for a
/// plain full-space run.
pub fn evolve_in_sector_with(
    system: &OpenSystem,
    rho0: &DensityMatrix,
    cfg: &IntegratorConfig,
    probes: &[Probe],
    record_states: bool,
    stop: &mut StopFn<'_>,
) -> Result<(Trajectory, Option<String>)> {
    check_state(rho0, system.dim())?;
    if cfg.dissipator_form == DissipatorForm::Standard && system.basis().is_none() {
        let (label, v) = match invariant_sector(system, rho0)? {
            Some((label, sub)) => (label, sub.basis().expect("restricted").clone()),
            None => ("full", Array2::eye(system.dim())),
        };
        let parity = system.space.excitation_parity();
        let mut layouts = Vec::new();
        if system.space.is_qubit() {
            if let Some(split) = BlockLayout::parity_split(&parity, &v) {
                layouts.push((format!("{label}/parity"), split));
            }
        }
        if label != "full" {
            layouts.push((label.to_string(), BlockLayout::new(vec![v])));
        }
        for (label, layout) in layouts {
            if let Some(traj) =
                evolve_blocks_with(system, &layout, rho0, cfg, probes, record_states, stop)?
            {
                return Ok((traj, Some(label)));
            }
        }
    }
    Ok((
        evolve_with(system, rho0, cfg, probes, record_states, stop)?,
        None,
    ))
}

/// Closed-system propagation of a pure state, `ψ(t) = V e^{−iEt} V†ψ₀` in
/// the eigenbasis of `H`. Exact up to the eigensolver, so the norm stays at
/// one to rounding and `stats` counts samples rather than steps.
pub fn evolve_pure(
    h: &Operator,
    psi0: &StateVector,
    cfg: &IntegratorConfig,
    probes: &[Probe],
    record_states: bool,
) -> Result<Trajectory> {
    evolve_pure_with(h, psi0, cfg, probes, record_states, &mut |_, _| false)
}

pub fn evolve_pure_with(
    h: &Operator,
    psi0: &StateVector,
    cfg: &IntegratorConfig,
    probes: &[Probe],
    record_states: bool,
    stop: &mut StopFn<'_>,
) -> Result<Trajectory> {
    cfg.validate()?;
    if psi0.dim() != h.dim() {
        return Err(Error::Dimension {
            expected: h.dim(),
            got: psi0.dim(),
        });
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::Invariant(format!(
            "initial state norm {} differs from 1",
            psi0.norm()
        )));
    }
    let (energies, v) = linalg::eigh(h.matrix())?;
    let coeffs = linalg::adjoint(&v).dot(&psi0.amplitudes);
    let times = cfg.output_times();
    let budget = cfg.trace_budget;
    let mut rec = Recorder::new(probes, DissipatorForm::Standard, true, 0, record_states);
    let mut stopped = false;
    let mut phased = coeffs.clone();
    for (k, &t) in times.iter().enumerate() {
        for ((p, c), e) in phased.iter_mut().zip(&coeffs).zip(&energies) {
            *p = c * Complex64::from_polar(1.0, -e * t);
        }
        // the start is recorded as given so ΔE(0) is exactly zero
        let psi = if t == 0.0 {
            psi0.amplitudes.clone()
        } else {
            v.dot(&phased)
        };
        let y = psi.as_slice().expect("contiguous");
        let drift = (y.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs();
        if drift > budget {
            return Err(Error::TraceDrift { t, drift, budget });
        }
        let values = rec.push_pure(t, y);
        if k + 1 < times.len() && stop(t, &values) {
            stopped = true;
            break;
        }
    }
    rec.traj.stats = StepStats {
        accepted: rec.traj.times.len(),
        ..StepStats::default()
    };
    rec.traj.stopped_early = stopped;
    Ok(rec.traj)
}
