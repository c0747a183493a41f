//! Master-equation integration for states that stay block-diagonal in a
//! fixed orthogonal decomposition of an invariant subspace.
//!
//! The state is stored as its diagonal blocks, concatenated row-major. The
//! decomposition must be respected by every term of the generator: `H` and
//! `Σ γ A†A` are block-diagonal, and each jump maps each block into a single
//! block.

use std::ops::{ControlFlow, Range};

use ndarray::Array2;
use num_complex::Complex64;

use super::integrator::integrate;
use super::{
    check_positivity, DissipatorForm, IntegratorConfig, OpenSystem, Probe, Recorder, StopFn,
    Trajectory,
};
use crate::error::{Error, Result};
use crate::hilbert::DensityMatrix;
use crate::linalg;
use crate::sparse::{CsrMatrix, RealCsr, SplitCsr};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// Relative size below which a compressed operator block counts as zero.
const BLOCK_TOL: f64 = 1e-10;
/// Entries dropped when sparsifying compressed blocks.
const DROP_TOL: f64 = 1e-14;

/// Orthonormal bases of the blocks, as `dim × d_b` isometries with mutually
/// orthogonal ranges.
#[derive(Debug, Clone)]
pub struct BlockLayout {
    bases: Vec<Array2<Complex64>>,
    offsets: Vec<usize>,
    len: usize,
}

impl BlockLayout {
    pub fn new(bases: Vec<Array2<Complex64>>) -> Self {
        let mut offsets = Vec::with_capacity(bases.len());
        let mut len = 0;
        for v in &bases {
            offsets.push(len);
            len += v.ncols() * v.ncols();
        }
        Self {
            bases,
            offsets,
            len,
        }
    }

    /// Splits the columns of `v` by excitation parity. `None` unless every
    /// column has a definite parity and both parities occur.
    pub fn parity_split(parity: &[i8], v: &Array2<Complex64>) -> Option<Self> {
        let mut even = Vec::new();
        let mut odd = Vec::new();
        for (c, col) in v.columns().into_iter().enumerate() {
            let mut sign = 0;
            for (k, z) in col.iter().enumerate() {
                if *z != ZERO {
                    if sign != 0 && sign != parity[k] {
                        return None;
                    }
                    sign = parity[k];
                }
            }
            if sign >= 0 {
                even.push(c)
            } else {
                odd.push(c)
            }
        }
        if even.is_empty() || odd.is_empty() {
            return None;
        }
        let pick = |cols: &[usize]| v.select(ndarray::Axis(1), cols);
        Some(Self::new(vec![pick(&even), pick(&odd)]))
    }

    pub fn n_blocks(&self) -> usize {
        self.bases.len()
    }

    pub fn block_dim(&self, b: usize) -> usize {
        self.bases[b].ncols()
    }

    /// Total dimension of the covered subspace.
    pub fn span_dim(&self) -> usize {
        self.bases.iter().map(|v| v.ncols()).sum()
    }

    /// Length of the flat block buffer.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub(super) fn range(&self, b: usize) -> Range<usize> {
        let n = self.block_dim(b);
        self.offsets[b]..self.offsets[b] + n * n
    }

    /// `V_c† M V_b`.
    fn project(&self, m: &Array2<Complex64>, c: usize, b: usize) -> Array2<Complex64> {
        linalg::adjoint(&self.bases[c]).dot(m).dot(&self.bases[b])
    }

    /// Diagonal blocks `V_b† M V_b`, concatenated.
    pub fn compress(&self, m: &Array2<Complex64>) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.len);
        for b in 0..self.n_blocks() {
            out.extend(self.project(m, b, b).iter().copied());
        }
        out
    }

    /// `Σ_b V_b ρ_b V_b†`.
    pub fn lift(&self, flat: &[Complex64]) -> Array2<Complex64> {
        let d = self.bases[0].nrows();
        let mut out = Array2::zeros((d, d));
        for (b, v) in self.bases.iter().enumerate() {
            out = out + v.dot(&block_matrix(flat, self, b)).dot(&linalg::adjoint(v));
        }
        out
    }

    /// Largest entry of `M` outside the block-diagonal part of the span.
    pub fn defect(&self, m: &Array2<Complex64>) -> f64 {
        linalg::max_abs(&(m - &self.lift(&self.compress(m))))
    }

    /// Nonzero blocks `(c, V_c† op V_b)` for a source block `b`, or `None`
    /// when the image of block `b` leaves the span.
    fn image(&self, op: &Array2<Complex64>, b: usize) -> Option<Vec<(usize, Array2<Complex64>)>> {
        let scale = linalg::max_abs(op).max(1.0);
        let y = op.dot(&self.bases[b]);
        let mut rest = y.clone();
        let mut out = Vec::new();
        for c in 0..self.n_blocks() {
            let blk = linalg::adjoint(&self.bases[c]).dot(&y);
            if linalg::max_abs(&blk) > BLOCK_TOL * scale {
                rest = rest - self.bases[c].dot(&blk);
                out.push((c, blk));
            }
        }
        (linalg::max_abs(&rest) <= BLOCK_TOL * scale).then_some(out)
    }

    /// Diagonal blocks of a probe operator.
    fn probe_blocks(&self, op: &CsrMatrix) -> Vec<CsrMatrix> {
        let dense = op.to_dense();
        (0..self.n_blocks())
            .map(|b| CsrMatrix::from_dense(&self.project(&dense, b, b), 0.0))
            .collect()
    }
}

enum BlockJumpKind {
    Diagonal(Vec<f64>),
    Real(RealCsr),
}

struct BlockJump {
    rate: f64,
    from: usize,
    to: usize,
    kind: BlockJumpKind,
}

/// Standard-form generator acting on flat block buffers.
pub struct BlockGenerator {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    m1: Vec<SplitCsr>,
    jumps: Vec<BlockJump>,
}

/// Work buffers for [`BlockGenerator::apply`].
pub struct BlockScratch {
    t: Vec<Complex64>,
    x: Vec<Complex64>,
    y: Vec<Complex64>,
}

impl BlockGenerator {
    /// `None` when the layout is not respected by the system, or a jump
    /// block is not real.
    pub fn new(system: &OpenSystem, layout: &BlockLayout) -> Result<Option<Self>> {
        let (m1, _) = system.effective_pair(DissipatorForm::Standard)?;
        let mut m1_blocks = Vec::with_capacity(layout.n_blocks());
        for b in 0..layout.n_blocks() {
            let Some(image) = layout.image(m1.matrix(), b) else {
                return Ok(None);
            };
            if image.iter().any(|(c, _)| *c != b) {
                return Ok(None);
            }
            let n = layout.block_dim(b);
            let blk = image
                .into_iter()
                .next()
                .map_or_else(|| Array2::zeros((n, n)), |(_, m)| m);
            m1_blocks.push(SplitCsr::new(&CsrMatrix::from_dense(&blk, DROP_TOL)));
        }
        let mut jumps = Vec::new();
        for (rate, a) in system.jumps()? {
            for b in 0..layout.n_blocks() {
                let Some(image) = layout.image(a.matrix(), b) else {
                    return Ok(None);
                };
                if image.len() > 1 {
                    return Ok(None);
                }
                let Some((c, blk)) = image.into_iter().next() else {
                    continue;
                };
                if blk.iter().any(|z| z.im.abs() > DROP_TOL) {
                    return Ok(None);
                }
                let re = blk.mapv(|z| z.re);
                let diagonal = c == b
                    && re
                        .indexed_iter()
                        .all(|((i, j), v)| i == j || v.abs() <= DROP_TOL);
                let kind = if diagonal {
                    BlockJumpKind::Diagonal(re.diag().to_vec())
                } else {
                    BlockJumpKind::Real(RealCsr::from_dense(&re, DROP_TOL))
                };
                jumps.push(BlockJump {
                    rate,
                    from: b,
                    to: c,
                    kind,
                });
            }
        }
        Ok(Some(Self {
            dims: (0..layout.n_blocks())
                .map(|b| layout.block_dim(b))
                .collect(),
            offsets: layout.offsets.clone(),
            m1: m1_blocks,
            jumps,
        }))
    }

    pub fn scratch(&self) -> BlockScratch {
        let len = self.dims.iter().map(|n| n * n).sum();
        let widest = self.dims.iter().copied().max().unwrap_or(0);
        BlockScratch {
            t: vec![ZERO; len],
            x: vec![ZERO; widest * widest],
            y: vec![ZERO; widest * widest],
        }
    }

    fn range(&self, b: usize) -> Range<usize> {
        self.offsets[b]..self.offsets[b] + self.dims[b] * self.dims[b]
    }

    /// `T = −i M₁ρ + ½ Σ γ AρA†` per block, then `ρ̇ = T + T†`.
    pub fn apply(&self, rho: &[Complex64], out: &mut [Complex64], s: &mut BlockScratch) {
        for (b, m1) in self.m1.iter().enumerate() {
            let n = self.dims[b];
            let r = &rho[self.range(b)];
            let t = &mut s.t[self.range(b)];
            match &m1.im {
                Some(im) => im.mul_cols(r, n, t),
                None => t.fill(ZERO),
            }
            if let Some(re) = &m1.re {
                let x = &mut s.x[..n * n];
                re.mul_cols(r, n, x);
                for (t, x) in t.iter_mut().zip(x.iter()) {
                    *t -= I * x;
                }
            }
        }
        for jump in &self.jumps {
            let (nb, nc) = (self.dims[jump.from], self.dims[jump.to]);
            let r = &rho[self.range(jump.from)];
            let t = &mut s.t[self.range(jump.to)];
            let half = 0.5 * jump.rate;
            match &jump.kind {
                BlockJumpKind::Diagonal(z) => {
                    for i in 0..nb {
                        let zi = half * z[i];
                        for j in 0..nb {
                            t[i * nb + j] += zi * z[j] * r[i * nb + j];
                        }
                    }
                }
                BlockJumpKind::Real(a) => {
                    // A (Aρ)† equals AρA† for Hermitian ρ and real A
                    let x = &mut s.x[..nc * nb];
                    a.mul_cols(r, nb, x);
                    let y = &mut s.y[..nb * nc];
                    for i in 0..nc {
                        for j in 0..nb {
                            y[j * nc + i] = x[i * nb + j].conj();
                        }
                    }
                    a.mul_cols_add(y, nc, half, t);
                }
            }
        }
        for b in 0..self.dims.len() {
            let n = self.dims[b];
            let t = &s.t[self.range(b)];
            let o = &mut out[self.range(b)];
            for i in 0..n {
                for j in i..n {
                    let v = t[i * n + j] + t[j * n + i].conj();
                    o[i * n + j] = v;
                    o[j * n + i] = v.conj();
                }
            }
        }
    }
}

/// Integrates the standard-form master equation with the state kept in
/// `layout`. `None` when the layout does not apply to `system` or `rho0`.
/// States are recorded on the full space; when the layout spans a proper
/// subspace the recorded smallest eigenvalue is capped at 0.
pub fn evolve_blocks_with(
    system: &OpenSystem,
    layout: &BlockLayout,
    rho0: &DensityMatrix,
    cfg: &IntegratorConfig,
    probes: &[Probe],
    record_states: bool,
    stop: &mut StopFn<'_>,
) -> Result<Option<Trajectory>> {
    cfg.validate()?;
    if cfg.dissipator_form != DissipatorForm::Standard || rho0.dim() != system.dim() {
        return Ok(None);
    }
    let rho0 = linalg::hermitize(&rho0.matrix);
    if layout.defect(&rho0) > 1e-12 {
        return Ok(None);
    }
    let Some(generator) = BlockGenerator::new(system, layout)? else {
        return Ok(None);
    };
    let mut scratch = generator.scratch();
    let y0 = layout.compress(&rho0);
    let times = cfg.output_times();
    let budget = cfg.trace_budget;
    let probe_blocks: Vec<Vec<CsrMatrix>> =
        probes.iter().map(|p| layout.probe_blocks(&p.op)).collect();
    let proper = layout.span_dim() < system.dim();

    let mut rec = Recorder::new(
        probes,
        DissipatorForm::Standard,
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
            let values = rec.push_blocks(k, t, y, layout, &probe_blocks)?;
            if k + 1 < times.len() && stop(t, &values) {
                stopped = true;
                return Ok(ControlFlow::Break(()));
            }
            Ok(ControlFlow::Continue(()))
        },
        |t, y| {
            let drift = (block_trace(y, layout) - 1.0).norm();
            if drift > budget {
                return Err(Error::TraceDrift { t, drift, budget });
            }
            Ok(())
        },
    )?;
    rec.traj.stats = stats;
    rec.traj.stopped_early = stopped;
    if proper {
        for d in &mut rec.traj.diagnostics {
            if !d.min_eig.is_nan() {
                d.min_eig = d.min_eig.min(0.0);
            }
        }
    }
    check_positivity(&rec.traj)?;
    Ok(Some(rec.traj))
}

pub(super) fn block_trace(y: &[Complex64], layout: &BlockLayout) -> Complex64 {
    (0..layout.n_blocks())
        .map(|b| {
            let n = layout.block_dim(b);
            let blk = &y[layout.range(b)];
            (0..n).map(|i| blk[i * n + i]).sum::<Complex64>()
        })
        .sum()
}

pub(super) fn block_matrix(y: &[Complex64], layout: &BlockLayout, b: usize) -> Array2<Complex64> {
    let n = layout.block_dim(b);
    Array2::from_shape_vec((n, n), y[layout.range(b)].to_vec()).expect("square block")
}
