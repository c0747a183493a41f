//! Compressed sparse row storage for the operators that act on dense
//! density matrices inside the integrator.
//!
//! Dense matrices here are row-major `d × d` slices.

use ndarray::Array2;
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Complex64>,
}

impl CsrMatrix {
    /// Keeps every entry with modulus above `drop_tol`.
    pub fn from_dense(a: &Array2<Complex64>, drop_tol: f64) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "square matrices only");
        let n = a.nrows();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let v = a[[i, j]];
                if v.norm() > drop_tol {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, _)| j == i))
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        let mut d = vec![ZERO; self.n];
        for (i, slot) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                if j == i {
                    *slot += v;
                }
            }
        }
        d
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    /// Entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn to_dense(&self) -> Array2<Complex64> {
        let mut a = Array2::zeros((self.n, self.n));
        for (i, j, v) in self.triplets() {
            a[[i, j]] += v;
        }
        a
    }

    /// `out = S · X`.
    pub fn mul_dense(&self, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        debug_assert_eq!(x.len(), n * n);
        out.fill(ZERO);
        for i in 0..n {
            let dst = &mut out[i * n..(i + 1) * n];
            for (k, s) in self.row(i) {
                let src = &x[k * n..(k + 1) * n];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d += s * v;
                }
            }
        }
    }

    /// `out = X · S`.
    pub fn dense_mul(&self, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        out.fill(ZERO);
        for i in 0..n {
            let xi = &x[i * n..(i + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            for (k, &xik) in xi.iter().enumerate() {
                if xik == ZERO {
                    continue;
                }
                for (j, s) in self.row(k) {
                    dst[j] += xik * s;
                }
            }
        }
    }

    /// `out = X · S†`.
    pub fn dense_mul_adjoint(&self, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            let xi = &x[i * n..(i + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            for (j, d) in dst.iter_mut().enumerate() {
                let mut acc = ZERO;
                for (k, s) in self.row(j) {
                    acc += xi[k] * s.conj();
                }
                *d = acc;
            }
        }
    }

    /// `y = S v` for a vector.
    pub fn mul_vec(&self, v: &[Complex64], y: &mut [Complex64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(k, s)| s * v[k]).sum();
        }
    }

    /// `tr(S X)` for a row-major dense `X`.
    pub fn trace_product(&self, x: &[Complex64]) -> Complex64 {
        let n = self.n;
        self.triplets().map(|(i, j, s)| s * x[j * n + i]).sum()
    }

    /// `⟨v|S|v⟩`.
    pub fn expectation_vec(&self, v: &[Complex64]) -> Complex64 {
        (0..self.n)
            .map(|i| v[i].conj() * self.row(i).map(|(k, s)| s * v[k]).sum::<Complex64>())
            .sum()
    }
}

/// Real-valued CSR used for the real and imaginary parts of a split
/// operator.
#[derive(Debug, Clone)]
pub struct RealCsr {
    n: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl RealCsr {
    fn from_parts(a: &CsrMatrix, part: impl Fn(Complex64) -> f64) -> Option<Self> {
        let mut indptr = Vec::with_capacity(a.n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..a.n {
            for (j, v) in a.row(i) {
                let x = part(v);
                if x != 0.0 {
                    indices.push(j);
                    values.push(x);
                }
            }
            indptr.push(indices.len());
        }
        (!values.is_empty()).then_some(Self {
            n: a.n,
            ncols: a.n,
            indptr,
            indices,
            values,
        })
    }

    /// Keeps every entry of the `rows × cols` matrix with modulus above
    /// `drop_tol`.
    pub fn from_dense(a: &Array2<f64>, drop_tol: f64) -> Self {
        let mut indptr = Vec::with_capacity(a.nrows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in a.rows() {
            for (j, &x) in row.iter().enumerate() {
                if x.abs() > drop_tol {
                    indices.push(j);
                    values.push(x);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            n: a.nrows(),
            ncols: a.ncols(),
            indptr,
            indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// `out = S · X` for a row-major `ncols × m` block `X`.
    pub fn mul_cols(&self, x: &[Complex64], m: usize, out: &mut [Complex64]) {
        self.sweep(x, m, out, 1.0, false);
    }

    /// `out += scale · S · X` for a row-major `ncols × m` block `X`.
    pub fn mul_cols_add(&self, x: &[Complex64], m: usize, scale: f64, out: &mut [Complex64]) {
        self.sweep(x, m, out, scale, true);
    }

    fn sweep(
        &self,
        x: &[Complex64],
        m: usize,
        out: &mut [Complex64],
        scale: f64,
        accumulate: bool,
    ) {
        debug_assert_eq!(x.len(), self.ncols * m);
        debug_assert_eq!(out.len(), self.n * m);
        let x: &[f64] = bytemuck::cast_slice(x);
        let out: &mut [f64] = bytemuck::cast_slice_mut(out);
        let w = 2 * m;
        for i in 0..self.n {
            let dst = &mut out[i * w..(i + 1) * w];
            let entries = self.indptr[i]..self.indptr[i + 1];
            let mut first = !accumulate;
            for p in entries {
                let k = self.indices[p];
                let s = scale * self.values[p];
                let src = &x[k * w..(k + 1) * w];
                if first {
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d = s * v;
                    }
                    first = false;
                } else {
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d += s * v;
                    }
                }
            }
            if first {
                dst.fill(0.0);
            }
        }
    }

    /// `out = S · X` with real `S`, as axpy sweeps over interleaved rows.
    pub fn mul_dense(&self, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        debug_assert_eq!(self.ncols, n);
        debug_assert_eq!(x.len(), n * n);
        let x: &[f64] = bytemuck::cast_slice(x);
        let out: &mut [f64] = bytemuck::cast_slice_mut(out);
        out.fill(0.0);
        let w = 2 * n;
        for i in 0..n {
            let dst = &mut out[i * w..(i + 1) * w];
            for p in self.indptr[i]..self.indptr[i + 1] {
                let k = self.indices[p];
                let s = self.values[p];
                let src = &x[k * w..(k + 1) * w];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d += s * v;
                }
            }
        }
    }
}

/// Complex operator stored as `Re + i·Im` with real-valued parts.
#[derive(Debug, Clone)]
pub struct SplitCsr {
    pub re: Option<RealCsr>,
    pub im: Option<RealCsr>,
}

impl SplitCsr {
    pub fn new(a: &CsrMatrix) -> Self {
        Self {
            re: RealCsr::from_parts(a, |z| z.re),
            im: RealCsr::from_parts(a, |z| z.im),
        }
    }

    pub fn is_real(&self) -> bool {
        self.im.is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{adjoint, max_abs};

    fn sample(n: usize, seed: u64) -> Array2<Complex64> {
        let mut state = seed;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        Array2::from_shape_fn((n, n), |(i, j)| {
            if (i * 7 + j * 3) % 4 == 0 {
                Complex64::new(next(), next())
            } else {
                ZERO
            }
        })
    }

    fn flat(a: &Array2<Complex64>) -> Vec<Complex64> {
        a.iter().copied().collect()
    }

    #[test]
    fn products_match_dense() {
        let n = 6;
        let s = sample(n, 1);
        let x = sample(n, 2) + sample(n, 3).t();
        let csr = CsrMatrix::from_dense(&s, 0.0);
        let mut out = vec![ZERO; n * n];

        csr.mul_dense(&flat(&x), &mut out);
        assert!(
            max_abs(&(Array2::from_shape_vec((n, n), out.clone()).unwrap() - s.dot(&x))) < 1e-14
        );

        csr.dense_mul(&flat(&x), &mut out);
        assert!(
            max_abs(&(Array2::from_shape_vec((n, n), out.clone()).unwrap() - x.dot(&s))) < 1e-14
        );

        csr.dense_mul_adjoint(&flat(&x), &mut out);
        let expect = x.dot(&adjoint(&s));
        assert!(max_abs(&(Array2::from_shape_vec((n, n), out).unwrap() - expect)) < 1e-14);

        let tr = csr.trace_product(&flat(&x));
        assert!((tr - s.dot(&x).diag().sum()).norm() < 1e-14);
    }

    #[test]
    fn split_products_match() {
        let n = 5;
        let s = sample(n, 4);
        let x = sample(n, 5);
        let split = SplitCsr::new(&CsrMatrix::from_dense(&s, 0.0));
        let mut re = vec![ZERO; n * n];
        let mut im = vec![ZERO; n * n];
        split.re.as_ref().unwrap().mul_dense(&flat(&x), &mut re);
        split.im.as_ref().unwrap().mul_dense(&flat(&x), &mut im);
        let got: Vec<Complex64> = re
            .iter()
            .zip(&im)
            .map(|(a, b)| a + Complex64::i() * b)
            .collect();
        let got = Array2::from_shape_vec((n, n), got).unwrap();
        assert!(max_abs(&(got - s.dot(&x))) < 1e-14);
    }

    #[test]
    fn rectangular_products_match() {
        let s = sample(5, 6)
            .mapv(|z| z.re)
            .slice(ndarray::s![..3, ..])
            .to_owned();
        let x = sample(5, 7).slice(ndarray::s![.., ..4]).to_owned();
        let a = RealCsr::from_dense(&s, 0.0);
        assert_eq!((a.nrows(), a.ncols()), (3, 5));
        let expect = s.mapv(|v| Complex64::new(v, 0.0)).dot(&x);
        let mut out = vec![Complex64::new(9.0, 9.0); 3 * 4];
        a.mul_cols(&flat(&x), 4, &mut out);
        assert!(max_abs(&(Array2::from_shape_vec((3, 4), out.clone()).unwrap() - &expect)) < 1e-14);
        a.mul_cols_add(&flat(&x), 4, -0.5, &mut out);
        let got = Array2::from_shape_vec((3, 4), out).unwrap();
        assert!(max_abs(&(got - expect.mapv(|z| z * 0.5))) < 1e-14);
    }

    #[test]
    fn diagonal_detection() {
        let d = Array2::from_diag(&ndarray::arr1(&[
            Complex64::new(1.0, 0.0),
            Complex64::new(-2.0, 0.0),
        ]));
        assert!(CsrMatrix::from_dense(&d, 0.0).is_diagonal());
        assert!(!CsrMatrix::from_dense(&sample(4, 9), 0.0).is_diagonal());
    }
}
