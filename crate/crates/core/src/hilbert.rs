//! Truncated tensor-product spaces: one bosonic mode followed by `N` qubit or
//! qutrit sites.
//!
//! Ordering convention, used by every embedding and partial trace in the
//! crate: `resonator ⊗ site₀ ⊗ site₁ ⊗ … ⊗ site_{N−1}`. A basis index is
//! therefore `n · L^N + s` where `n` is the photon number and `s` the battery
//! index with site 0 as the most significant digit in base `L`.
//!
//! Site basis: `|0⟩ = |g⟩`, `|1⟩ = |e⟩` (and `|2⟩` for qutrits). With this
//! ordering `σ^z = diag(−1, +1)` and `σ^− = |g⟩⟨e|`.

use std::ops::{Add, Mul, Sub};

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg;
use crate::sparse::CsrMatrix;

const HERMITIAN_TOL: f64 = 1e-12;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Shape of the truncated Hilbert space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub n_sites: usize,
    pub site_levels: usize,
    pub fock_cutoff: usize,
}

impl SpaceSpec {
    pub fn new(n_sites: usize, site_levels: usize, fock_cutoff: usize) -> Result<Self> {
        let space = Self {
            n_sites,
            site_levels,
            fock_cutoff,
        };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites == 0 {
            return Err(domain("n_sites must be at least 1"));
        }
        if !(2..=3).contains(&self.site_levels) {
            return Err(domain(format!(
                "site_levels must be 2 or 3, got {}",
                self.site_levels
            )));
        }
        if self.fock_cutoff < 2 {
            return Err(domain(format!(
                "fock_cutoff must be at least 2, got {}",
                self.fock_cutoff
            )));
        }
        Ok(())
    }

    /// Dimension of the battery factor, `L^N`.
    pub fn battery_dim(&self) -> usize {
        self.site_levels.pow(self.n_sites as u32)
    }

    /// Total dimension `cutoff · L^N`.
    pub fn dim(&self) -> usize {
        self.fock_cutoff * self.battery_dim()
    }

    pub fn is_qubit(&self) -> bool {
        self.site_levels == 2
    }

    /// Embeds a single-site operator into the battery factor only.
    pub fn embed_in_battery(&self, site_op: &Operator, site_index: usize) -> Result<Operator> {
        if site_index >= self.n_sites {
            return Err(domain(format!(
                "site index {} out of range for {} sites",
                site_index, self.n_sites
            )));
        }
        if site_op.dim() != self.site_levels {
            return Err(Error::Dimension {
                expected: self.site_levels,
                got: site_op.dim(),
            });
        }
        let eye = Operator::identity(self.site_levels);
        let mut acc = Operator::identity(1);
        for k in 0..self.n_sites {
            acc = acc.kron(if k == site_index { site_op } else { &eye });
        }
        Ok(acc)
    }

    /// `I_r ⊗ op` for an operator on the battery factor.
    pub fn lift_battery(&self, op: &Operator) -> Result<Operator> {
        if op.dim() != self.battery_dim() {
            return Err(Error::Dimension {
                expected: self.battery_dim(),
                got: op.dim(),
            });
        }
        Ok(Operator::identity(self.fock_cutoff).kron(op))
    }

    /// `op ⊗ I_b` for an operator on the resonator factor.
    pub fn lift_resonator(&self, op: &Operator) -> Result<Operator> {
        if op.dim() != self.fock_cutoff {
            return Err(Error::Dimension {
                expected: self.fock_cutoff,
                got: op.dim(),
            });
        }
        Ok(op.kron(&Operator::identity(self.battery_dim())))
    }

    /// Resonator lowering operator on the full space.
    pub fn resonator_lowering(&self) -> Result<Operator> {
        self.lift_resonator(&bosonic_lowering(self.fock_cutoff)?)
    }

    /// Photon number operator on the full space.
    pub fn photon_number(&self) -> Result<Operator> {
        let a = bosonic_lowering(self.fock_cutoff)?;
        self.lift_resonator(&a.adjoint().dot(&a))
    }

    /// Σ_i op_i on the battery factor.
    pub fn battery_sum(&self, site_op: &Operator) -> Result<Operator> {
        let mut acc = Operator::zeros(self.battery_dim());
        for i in 0..self.n_sites {
            acc = &acc + &self.embed_in_battery(site_op, i)?;
        }
        Ok(acc)
    }
}

/// Parity under the chain reflection `i ↔ N−1−i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reflection {
    Even,
    Odd,
}

impl Reflection {
    pub fn label(self) -> &'static str {
        match self {
            Reflection::Even => "even",
            Reflection::Odd => "odd",
        }
    }
}

impl SpaceSpec {
    /// Full-space index of the reflected basis state.
    pub fn reflect_index(&self, index: usize) -> usize {
        let b = self.battery_dim();
        let (n, mut s) = (index / b, index % b);
        let mut r = 0;
        for _ in 0..self.n_sites {
            r = r * self.site_levels + s % self.site_levels;
            s /= self.site_levels;
        }
        n * b + r
    }

    /// Orthonormal columns spanning the states symmetric under every site
    /// permutation: for each Fock level and each multiset of site levels,
    /// the normalized sum over its distinct orderings.
    pub fn symmetric_sector(&self) -> Array2<Complex64> {
        let b = self.battery_dim();
        let mut groups: std::collections::BTreeMap<Vec<usize>, Vec<usize>> = Default::default();
        for s in 0..b {
            let mut digits = Vec::with_capacity(self.n_sites);
            let mut r = s;
            for _ in 0..self.n_sites {
                digits.push(r % self.site_levels);
                r /= self.site_levels;
            }
            digits.sort_unstable();
            groups.entry(digits).or_default().push(s);
        }
        let mut v = Array2::zeros((self.dim(), self.fock_cutoff * groups.len()));
        let mut c = 0;
        for n in 0..self.fock_cutoff {
            for members in groups.values() {
                let amp = Complex64::new(1.0 / (members.len() as f64).sqrt(), 0.0);
                for &s in members {
                    v[[n * b + s, c]] = amp;
                }
                c += 1;
            }
        }
        v
    }

    /// `(−1)^(n + Σ site levels)` of each product basis state. The
    /// Hamiltonian conserves it for qubit sites; `a` and `J₋` flip it.
    pub fn excitation_parity(&self) -> Vec<i8> {
        let b = self.battery_dim();
        (0..self.dim())
            .map(|index| {
                let (n, mut s) = (index / b, index % b);
                let mut total = n;
                for _ in 0..self.n_sites {
                    total += s % self.site_levels;
                    s /= self.site_levels;
                }
                if total % 2 == 0 {
                    1
                } else {
                    -1
                }
            })
            .collect()
    }

    /// Orthonormal columns spanning one reflection sector, as a real
    /// `dim × m` isometry.
    pub fn reflection_sector(&self, parity: Reflection) -> Array2<Complex64> {
        let d = self.dim();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
        for k in 0..d {
            let r = self.reflect_index(k);
            match (r.cmp(&k), parity) {
                (std::cmp::Ordering::Equal, Reflection::Even) => cols.push(vec![(k, 1.0)]),
                (std::cmp::Ordering::Greater, Reflection::Even) => cols.push(vec![(k, h), (r, h)]),
                (std::cmp::Ordering::Greater, Reflection::Odd) => cols.push(vec![(k, h), (r, -h)]),
                _ => {}
            }
        }
        let mut v = Array2::zeros((d, cols.len()));
        for (c, entries) in cols.iter().enumerate() {
            for &(k, x) in entries {
                v[[k, c]] = Complex64::new(x, 0.0);
            }
        }
        v
    }
}

/// Embeds a single-site operator into the full space, identity elsewhere.
pub fn embed(site_op: &Operator, site_index: usize, space: &SpaceSpec) -> Result<Operator> {
    space.lift_battery(&space.embed_in_battery(site_op, site_index)?)
}

/// A dense complex square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: Array2<Complex64>,
}

impl Operator {
    pub fn new(matrix: Array2<Complex64>) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "operators are square");
        Self { matrix }
    }

    pub fn from_real(matrix: Array2<f64>) -> Self {
        Self::new(matrix.mapv(c))
    }

    pub fn identity(n: usize) -> Self {
        Self::new(Array2::eye(n))
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(Array2::zeros((n, n)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<Complex64> {
        self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self::new(linalg::adjoint(&self.matrix))
    }

    pub fn dot(&self, other: &Operator) -> Self {
        Self::new(self.matrix.dot(&other.matrix))
    }

    pub fn kron(&self, other: &Operator) -> Self {
        Self::new(linalg::kron(&self.matrix, &other.matrix))
    }

    pub fn commutator(&self, other: &Operator) -> Self {
        Self::new(linalg::commutator(&self.matrix, &other.matrix))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.matrix.mapv(|z| z * s))
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.matrix)
    }

    /// `‖A − A†‖_max < 1e−12`.
    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() < HERMITIAN_TOL
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.matrix)
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_dense(&self.matrix, 0.0)
    }

    /// Ascending eigenvalues; the operator must be Hermitian.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::eigvalsh(&self.matrix)
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator::new(&self.matrix + &rhs.matrix)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator::new(&self.matrix - &rhs.matrix)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        Operator::new(self.matrix.mapv(|z| z * rhs))
    }
}

/// Single-qubit operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QubitOp {
    X,
    Y,
    Z,
    Plus,
    Minus,
}

fn pauli(kind: QubitOp) -> Operator {
    let z0 = c(0.0);
    let i = Complex64::new(0.0, 1.0);
    let m = match kind {
        QubitOp::X => [[z0, c(1.0)], [c(1.0), z0]],
        // σ^y = i(σ^− − σ^+)
        QubitOp::Y => [[z0, i], [-i, z0]],
        QubitOp::Z => [[c(-1.0), z0], [z0, c(1.0)]],
        QubitOp::Plus => [[z0, z0], [c(1.0), z0]],
        QubitOp::Minus => [[z0, c(1.0)], [z0, z0]],
    };
    Operator::new(Array2::from_shape_fn((2, 2), |(r, k)| m[r][k]))
}

/// Single-site qubit operator; fails unless `site_levels == 2`.
pub fn qubit_operator(kind: QubitOp, site_levels: usize) -> Result<Operator> {
    if site_levels != 2 {
        return Err(domain(format!(
            "qubit operators need site_levels = 2, got {site_levels}"
        )));
    }
    Ok(pauli(kind))
}

/// `S^− = |0⟩⟨1| + √2 |1⟩⟨2|`.
pub fn qutrit_lowering() -> Operator {
    let mut m = Array2::zeros((3, 3));
    m[[0, 1]] = c(1.0);
    m[[1, 2]] = c(2f64.sqrt());
    Operator::new(m)
}

/// Site lowering operator for either site type: σ^− or S^−.
pub fn site_lowering(site_levels: usize) -> Result<Operator> {
    match site_levels {
        2 => Ok(pauli(QubitOp::Minus)),
        3 => Ok(qutrit_lowering()),
        other => Err(domain(format!("site_levels must be 2 or 3, got {other}"))),
    }
}

/// Truncated annihilation operator, `a|n⟩ = √n |n−1⟩`.
pub fn bosonic_lowering(cutoff: usize) -> Result<Operator> {
    if cutoff < 2 {
        return Err(domain(format!(
            "fock cutoff must be at least 2, got {cutoff}"
        )));
    }
    let mut m = Array2::zeros((cutoff, cutoff));
    for n in 1..cutoff {
        m[[n - 1, n]] = c((n as f64).sqrt());
    }
    Ok(Operator::new(m))
}

/// Pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: Array1<Complex64>,
}

impl StateVector {
    pub fn new(amplitudes: Array1<Complex64>) -> Self {
        Self { amplitudes }
    }

    /// Fock state `|n⟩` in a space truncated at `cutoff`.
    pub fn fock(cutoff: usize, n: usize) -> Result<Self> {
        if n >= cutoff {
            return Err(domain(format!(
                "photon number {n} does not fit below cutoff {cutoff}"
            )));
        }
        let mut v = Array1::zeros(cutoff);
        v[n] = c(1.0);
        Ok(Self::new(v))
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `|self⟩ ⊗ |other⟩`.
    pub fn kron(&self, other: &StateVector) -> Self {
        let (a, b) = (&self.amplitudes, &other.amplitudes);
        Self::new(Array1::from_shape_fn(a.len() * b.len(), |k| {
            a[k / b.len()] * b[k % b.len()]
        }))
    }

    pub fn to_density(&self) -> DensityMatrix {
        let v = &self.amplitudes;
        DensityMatrix::new(Array2::from_shape_fn((v.len(), v.len()), |(i, j)| {
            v[i] * v[j].conj()
        }))
    }
}

/// Numerical health of a density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityDiagnostics {
    pub trace_dev: f64,
    pub hermiticity: f64,
    pub min_eig: f64,
    pub purity: f64,
}

/// Mixed state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub matrix: Array2<Complex64>,
}

impl DensityMatrix {
    pub const TRACE_TOL: f64 = 1e-9;
    pub const MIN_EIG_TOL: f64 = -1e-8;

    pub fn new(matrix: Array2<Complex64>) -> Self {
        assert_eq!(
            matrix.nrows(),
            matrix.ncols(),
            "density matrices are square"
        );
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        linalg::trace(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        // tr ρ² = Σ_ij ρ_ij ρ_ji = Σ |ρ_ij|² for Hermitian ρ
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn diagnostics(&self) -> Result<DensityDiagnostics> {
        let min_eig = linalg::eigvalsh(&linalg::hermitize(&self.matrix))?
            .first()
            .copied()
            .unwrap_or(0.0);
        Ok(DensityDiagnostics {
            trace_dev: (self.trace() - c(1.0)).norm(),
            hermiticity: linalg::hermiticity_defect(&self.matrix),
            min_eig,
            purity: self.purity(),
        })
    }

    /// Checks Hermiticity, unit trace and positivity.
    pub fn validate(&self) -> Result<DensityDiagnostics> {
        let d = self.diagnostics()?;
        if d.hermiticity > HERMITIAN_TOL.max(1e-10) {
            return Err(Error::Invariant(format!(
                "density matrix not Hermitian (defect {:e})",
                d.hermiticity
            )));
        }
        if d.trace_dev > Self::TRACE_TOL {
            return Err(Error::Invariant(format!(
                "density matrix trace off by {:e}",
                d.trace_dev
            )));
        }
        if d.min_eig < Self::MIN_EIG_TOL {
            return Err(Error::Invariant(format!(
                "density matrix has eigenvalue {:e}",
                d.min_eig
            )));
        }
        Ok(d)
    }

    /// `tr(Aρ)`.
    pub fn expectation(&self, op: &Operator) -> Result<Complex64> {
        if op.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: op.dim(),
            });
        }
        let (a, r) = (op.matrix(), &self.matrix);
        let n = self.dim();
        let mut acc = c(0.0);
        for i in 0..n {
            for j in 0..n {
                acc += a[[i, j]] * r[[j, i]];
            }
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowering_acts_on_fock_states() {
        let a = bosonic_lowering(4).unwrap();
        let one = StateVector::fock(4, 1).unwrap();
        let out = a.matrix().dot(&one.amplitudes);
        assert_eq!(out, StateVector::fock(4, 0).unwrap().amplitudes);
        let n = a.adjoint().dot(&a);
        for k in 0..4 {
            assert!((n.matrix()[[k, k]].re - k as f64).abs() < 1e-15);
        }
        assert!(bosonic_lowering(1).is_err());
    }

    #[test]
    fn truncated_commutator_corner() {
        // [a, a†] on cutoff 4, computed by brute force element by element
        let a = bosonic_lowering(4).unwrap();
        let ad = a.adjoint();
        let mut brute = Array2::<Complex64>::zeros((4, 4));
        for i in 0..4 {
            for j in 0..4 {
                let mut s = c(0.0);
                for k in 0..4 {
                    s += a.matrix()[[i, k]] * ad.matrix()[[k, j]]
                        - ad.matrix()[[i, k]] * a.matrix()[[k, j]];
                }
                brute[[i, j]] = s;
            }
        }
        let expect = Array2::from_diag(&ndarray::arr1(&[c(1.0), c(1.0), c(1.0), c(-3.0)]));
        assert!(linalg::max_abs(&(&brute - &expect)) < 1e-14);
        assert!(linalg::max_abs(&(a.commutator(&ad).into_matrix() - expect)) < 1e-14);
    }

    #[test]
    fn pauli_conventions() {
        let p = qubit_operator(QubitOp::Plus, 2).unwrap();
        let m = qubit_operator(QubitOp::Minus, 2).unwrap();
        let x = qubit_operator(QubitOp::X, 2).unwrap();
        let z = qubit_operator(QubitOp::Z, 2).unwrap();
        let excited = Operator::from_real(ndarray::array![[0.0, 0.0], [0.0, 1.0]]);
        assert_eq!(p.dot(&m), excited);
        assert_eq!(&p + &m, x);
        assert_eq!(x.dot(&x), Operator::identity(2));
        // σ^z|g⟩ = −|g⟩, σ^−|e⟩ = |g⟩
        assert_eq!(z.matrix()[[0, 0]], c(-1.0));
        assert_eq!(m.matrix()[[0, 1]], c(1.0));
        // σ^x σ^y = i σ^z
        let y = qubit_operator(QubitOp::Y, 2).unwrap();
        assert_eq!(x.dot(&y), z.scale(Complex64::new(0.0, 1.0)));
        assert!(qubit_operator(QubitOp::X, 3).is_err());
    }

    #[test]
    fn qutrit_lowering_matrix() {
        let s = qutrit_lowering();
        let two = ndarray::arr1(&[c(0.0), c(0.0), c(1.0)]);
        let out = s.matrix().dot(&two);
        assert!((out[1] - c(2f64.sqrt())).norm() < 1e-15);
        let zero = ndarray::arr1(&[c(1.0), c(0.0), c(0.0)]);
        assert!(s.matrix().dot(&zero).iter().all(|z| z.norm() == 0.0));
        // S⁺S⁻ diagonal by direct 3×3 product
        let sp = s.adjoint();
        let mut diag = [0.0; 3];
        for (k, d) in diag.iter_mut().enumerate() {
            *d = (0..3)
                .map(|m| sp.matrix()[[k, m]] * s.matrix()[[m, k]])
                .sum::<Complex64>()
                .re;
        }
        assert!(
            (diag[0] - 0.0).abs() < 1e-15
                && (diag[1] - 1.0).abs() < 1e-15
                && (diag[2] - 2.0).abs() < 1e-14
        );
    }

    #[test]
    fn embed_ordering_and_dimension() {
        let space = SpaceSpec::new(1, 2, 2).unwrap();
        let z = qubit_operator(QubitOp::Z, 2).unwrap();
        let e = embed(&z, 0, &space).unwrap();
        let diag: Vec<f64> = (0..4).map(|k| e.matrix()[[k, k]].re).collect();
        assert_eq!(diag, vec![-1.0, 1.0, -1.0, 1.0]);

        let space = SpaceSpec::new(3, 2, 5).unwrap();
        assert_eq!(space.dim(), 5 * 8);
        let x = qubit_operator(QubitOp::X, 2).unwrap();
        let a = embed(&x, 0, &space).unwrap();
        let b = embed(&z, 2, &space).unwrap();
        assert_eq!(a.commutator(&b).max_abs(), 0.0);
        assert!(embed(&x, 3, &space).is_err());
        assert!(embed(&qutrit_lowering(), 0, &space).is_err());
        assert_eq!(
            embed(&Operator::identity(2), 1, &space).unwrap(),
            Operator::identity(40)
        );
    }

    #[test]
    fn space_validation() {
        assert!(SpaceSpec::new(0, 2, 4).is_err());
        assert!(SpaceSpec::new(2, 4, 4).is_err());
        assert!(SpaceSpec::new(2, 2, 1).is_err());
    }
}
