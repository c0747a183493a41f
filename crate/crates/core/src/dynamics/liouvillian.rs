//! Vectorised generator and steady states.
//!
//! Column stacking is used throughout: `vec(AXB) = (Bᵀ ⊗ A) vec(X)`, so
//! element `(i, j)` of `ρ` sits at `j·d + i`.

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::Serialize;

use super::{DissipatorForm, OpenSystem};
use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, Reflection};
use crate::linalg;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest superoperator dimension `d²` built densely.
pub const DENSE_LIMIT: usize = 10_000;

/// Superoperator dimension up to which [`steady_state_auto`] uses the SVD.
const SVD_LIMIT: usize = 400;

/// Relative singular-value threshold that counts as zero.
const NULL_TOL: f64 = 1e-10;

fn triplets(system: &OpenSystem, form: DissipatorForm) -> Result<Vec<(usize, usize, Complex64)>> {
    let d = system.dim();
    let (m1, m2) = system.effective_pair(form)?;
    let mut out = Vec::new();
    for (i, k, v) in m1.to_csr().triplets() {
        for j in 0..d {
            out.push((j * d + i, j * d + k, -I * v));
        }
    }
    for (l, j, v) in m2.to_csr().triplets() {
        for i in 0..d {
            out.push((j * d + i, l * d + i, I * v));
        }
    }
    for (rate, a) in system.jumps()? {
        let a = a.to_csr();
        let entries: Vec<_> = a.triplets().collect();
        for &(j, l, u) in &entries {
            for &(i, k, v) in &entries {
                out.push((j * d + i, l * d + k, rate * u.conj() * v));
            }
        }
    }
    Ok(out)
}

/// Dense `d² × d²` superoperator; refuses `d² > 10⁴`.
pub fn liouvillian_matrix(system: &OpenSystem, form: DissipatorForm) -> Result<Array2<Complex64>> {
    let d = system.dim();
    let n = d * d;
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge {
            dim: n,
            limit: DENSE_LIMIT,
        });
    }
    let mut l = Array2::zeros((n, n));
    for (r, c, v) in triplets(system, form)? {
        l[[r, c]] += v;
    }
    Ok(l)
}

/// Sparse superoperator in compressed-column form.
pub fn liouvillian_sparse(
    system: &OpenSystem,
    form: DissipatorForm,
) -> Result<SparseColMat<usize, Complex64>> {
    let n = system.dim() * system.dim();
    let entries: Vec<_> = triplets(system, form)?
        .into_iter()
        .map(|(r, c, v)| Triplet::new(r, c, v))
        .collect();
    SparseColMat::try_new_from_triplets(n, n, &entries)
        .map_err(|e| Error::LinAlg(format!("sparse liouvillian: {e:?}")))
}

/// A stationary state and how well it solves `L vec(ρ) = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct SteadyState {
    #[serde(skip)]
    pub rho: DensityMatrix,
    /// `‖L vec(ρ)‖₂`.
    pub residual: f64,
    /// Number of singular values below the null threshold (1 for the
    /// bordered solve, which cannot see the kernel dimension).
    pub null_dim: usize,
    /// Up to four smallest singular values, ascending (SVD only).
    pub smallest_singular_values: Vec<f64>,
    pub method: String,
}

fn finish(v: Array1<Complex64>, d: usize) -> Result<DensityMatrix> {
    let m = linalg::unvectorize(&v, d);
    let tr = linalg::trace(&m);
    if tr.norm() < 1e-300 || !tr.re.is_finite() {
        return Err(Error::LinAlg("steady-state vector has zero trace".into()));
    }
    let m = linalg::hermitize(&m.mapv(|z| z / tr));
    let tr = linalg::trace(&m).re;
    Ok(DensityMatrix::new(m.mapv(|z| z / tr)))
}

fn residual(l: &Array2<Complex64>, rho: &DensityMatrix) -> f64 {
    let r = l.dot(&linalg::vectorize(&rho.matrix));
    r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dim_of(l: &Array2<Complex64>) -> Result<usize> {
    let n = l.nrows();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n || l.ncols() != n {
        return Err(Error::Dimension {
            expected: d * d,
            got: n,
        });
    }
    Ok(d)
}

struct Kernel {
    svd: linalg::Svd,
    k: usize,
    tail: Vec<f64>,
}

fn kernel(l: &Array2<Complex64>) -> Result<Kernel> {
    let svd = linalg::svd(l)?;
    let s_max = svd.s.first().copied().unwrap_or(0.0);
    let k = svd.s.iter().filter(|&&s| s < NULL_TOL * s_max).count();
    let mut tail: Vec<f64> = svd.s.iter().rev().take(4).copied().collect();
    tail.sort_by(f64::total_cmp);
    Ok(Kernel { svd, k, tail })
}

/// Null vector of a dense superoperator by SVD. Fails with
/// [`Error::AmbiguousSteadyState`] when the kernel is degenerate.
pub fn steady_state(l: &Array2<Complex64>) -> Result<SteadyState> {
    let d = dim_of(l)?;
    let ker = kernel(l)?;
    if ker.k > 1 {
        return Err(Error::AmbiguousSteadyState {
            dim: ker.k,
            singular_values: ker.tail,
        });
    }
    let last = ker.svd.s.len() - 1;
    let rho = finish(ker.svd.v.column(last).to_owned(), d)?;
    Ok(SteadyState {
        residual: residual(l, &rho),
        rho,
        null_dim: ker.k.max(1),
        smallest_singular_values: ker.tail,
        method: "svd".into(),
    })
}

/// Long-time limit reached from `rho0`: the spectral projection of
/// `vec(ρ₀)` onto the kernel, `R (U†R)⁻¹ U† vec(ρ₀)` with right and left
/// null vectors `R` and `U`. Handles degenerate kernels.
pub fn steady_state_from(l: &Array2<Complex64>, rho0: &DensityMatrix) -> Result<SteadyState> {
    let d = dim_of(l)?;
    if rho0.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            got: rho0.dim(),
        });
    }
    let ker = kernel(l)?;
    let k = ker.k.max(1);
    let n = ker.svd.s.len();
    let cols: Vec<usize> = (n - k..n).collect();
    let right = Array2::from_shape_fn((n, k), |(i, c)| ker.svd.v[[i, cols[c]]]);
    let left = Array2::from_shape_fn((n, k), |(i, c)| ker.svd.u[[i, cols[c]]]);
    let left_h = linalg::adjoint(&left);
    let overlap = left_h.dot(&right);
    let coeffs = left_h.dot(&linalg::vectorize(&rho0.matrix));
    let coeffs = linalg::solve(&overlap, &coeffs.insert_axis(ndarray::Axis(1)))?;
    let v = right.dot(&coeffs).column(0).to_owned();
    let rho = finish(v, d)?;
    Ok(SteadyState {
        residual: residual(l, &rho),
        rho,
        null_dim: k,
        smallest_singular_values: ker.tail,
        method: "svd-projection".into(),
    })
}

fn bordered_solve(
    entries: &[Triplet<usize, usize, Complex64>],
    weights: &[Complex64],
    d: usize,
) -> Result<Option<DensityMatrix>> {
    let n = d * d;
    let mut entries = entries.to_vec();
    for (i, &w) in weights.iter().enumerate() {
        let k = i * d + i;
        entries.push(Triplet::new(k, n, w));
        entries.push(Triplet::new(n, k, w));
    }
    let bordered = SparseColMat::<usize, Complex64>::try_new_from_triplets(n + 1, n + 1, &entries)
        .map_err(|e| Error::LinAlg(format!("bordered system: {e:?}")))?;
    linalg::seq();
    let lu = bordered
        .sp_lu()
        .map_err(|e| Error::LinAlg(format!("sparse LU: {e:?}")))?;
    let mut rhs = Mat::<Complex64>::zeros(n + 1, 1);
    rhs[(n, 0)] = Complex64::new(1.0, 0.0);
    use faer::linalg::solvers::SolveCore;
    lu.solve_in_place_with_conj(faer::Conj::No, rhs.as_mut());
    let x = Array1::from_shape_fn(n, |k| rhs[(k, 0)]);
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Ok(None);
    }
    Ok(finish(x, d).ok())
}

/// Unique steady state from the bordered system `[[L, w], [wᵀ, 0]]` with
/// `w` a diagonal functional, solved by sparse LU. Standard form only.
///
/// The solve is repeated with two different functionals; a unique kernel
/// gives the same normalised state, a degenerate one does not.
pub fn steady_state_sparse(system: &OpenSystem) -> Result<SteadyState> {
    let d = system.dim();
    let n = d * d;
    let entries: Vec<Triplet<usize, usize, Complex64>> =
        triplets(system, DissipatorForm::Standard)?
            .into_iter()
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
    let ambiguous = || Error::AmbiguousSteadyState {
        dim: 2,
        singular_values: Vec::new(),
    };
    let trace = vec![Complex64::new(1.0, 0.0); d];
    let ramp: Vec<Complex64> = (0..d)
        .map(|i| Complex64::new(1.0 + i as f64 / d as f64, 0.0))
        .collect();
    let rho = bordered_solve(&entries, &trace, d)?.ok_or_else(ambiguous)?;
    let check = bordered_solve(&entries, &ramp, d)?.ok_or_else(ambiguous)?;
    if linalg::max_abs(&(&rho.matrix - &check.matrix)) > 1e-8 {
        return Err(ambiguous());
    }

    // residual through the sparse generator
    let generator = system.generator(DissipatorForm::Standard)?;
    let mut scratch = generator.scratch();
    let flat: Vec<Complex64> = rho.matrix.iter().copied().collect();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    generator.apply(&flat, &mut out, &mut scratch);
    let residual = out.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if residual.is_nan() || residual >= 1e-6 {
        return Err(ambiguous());
    }
    Ok(SteadyState {
        rho,
        residual,
        null_dim: 1,
        smallest_singular_values: Vec::new(),
        method: "bordered-lu".into(),
    })
}

/// SVD on small instances and for the literal form, bordered LU otherwise.
pub fn steady_state_auto(system: &OpenSystem, form: DissipatorForm) -> Result<SteadyState> {
    let n = system.dim() * system.dim();
    if form == DissipatorForm::Literal || n <= SVD_LIMIT {
        steady_state(&liouvillian_matrix(system, form)?)
    } else {
        steady_state_sparse(system)
    }
}

/// The system compressed onto the smallest symmetry sector (permutation
/// symmetric, or reflection even or odd) that is invariant under the
/// dynamics and holds `rho0`, with the sector's label.
pub fn invariant_sector(
    system: &OpenSystem,
    rho0: &DensityMatrix,
) -> Result<Option<(&'static str, OpenSystem)>> {
    if system.basis().is_some() || system.space.n_sites < 2 {
        return Ok(None);
    }
    let mut sectors = vec![("symmetric", system.space.symmetric_sector())];
    for parity in [Reflection::Even, Reflection::Odd] {
        sectors.push((parity.label(), system.space.reflection_sector(parity)));
    }
    sectors.sort_by_key(|(_, v)| v.ncols());
    for (label, v) in sectors {
        if v.ncols() == 0 || v.ncols() == system.dim() || !system.leaves_invariant(&v)? {
            continue;
        }
        let sub = system.restrict(v)?;
        let back = sub.lift(&sub.compress(rho0));
        if linalg::max_abs(&(&back.matrix - &rho0.matrix)) <= 1e-10 {
            return Ok(Some((label, sub)));
        }
    }
    Ok(None)
}

/// Long-time state reached from `rho0`, solved inside
/// [`invariant_sector`] when one applies.
///
/// The reflection commutes with the Hamiltonian and all collective jump
/// operators, so for two or more sites the full kernel is degenerate and
/// only the sector of the initial state carries a unique answer.
pub fn steady_state_for(
    system: &OpenSystem,
    rho0: &DensityMatrix,
    form: DissipatorForm,
) -> Result<SteadyState> {
    if rho0.dim() != system.dim() {
        return Err(Error::Dimension {
            expected: system.dim(),
            got: rho0.dim(),
        });
    }
    if system.basis().is_some() {
        return steady_state_auto(system, form);
    }
    if let Some((label, sub)) = invariant_sector(system, rho0)? {
        let mut ss = steady_state_auto(&sub, form)?;
        ss.rho = sub.lift(&ss.rho);
        ss.method = format!("{label}-{}", ss.method);
        return Ok(ss);
    }
    if system.space.n_sites < 2 {
        return steady_state_auto(system, form);
    }
    if system.dim() * system.dim() <= SVD_LIMIT {
        steady_state_from(&liouvillian_matrix(system, form)?, rho0)
    } else {
        Err(Error::AmbiguousSteadyState {
            dim: 2,
            singular_values: Vec::new(),
        })
    }
}
