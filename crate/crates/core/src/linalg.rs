//! Dense decompositions backed by faer, plus a Padé matrix exponential.
//!
//! Matrices are stored as `ndarray::Array2<Complex64>` everywhere else in the
//! crate; the helpers here copy into faer matrices, factor, and copy back.
//! All faer calls run sequentially so results are bit-reproducible.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, MatRef, Side};
use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub(crate) fn to_faer(a: &Array2<Complex64>) -> Mat<Complex64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_faer(m: MatRef<'_, Complex64>) -> Array2<Complex64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub(crate) fn seq() {
    faer::set_global_parallelism(faer::Par::Seq);
}

/// Eigendecomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching eigenvectors as columns.
pub fn eigh(a: &Array2<Complex64>) -> Result<(Vec<f64>, Array2<Complex64>)> {
    seq();
    let evd = to_faer(a)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::LinAlg(format!("hermitian eigendecomposition: {e:?}")))?;
    let n = a.nrows();
    let s = evd.S();
    let mut order: Vec<usize> = (0..n).collect();
    let vals: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let u = evd.U();
    let vectors = Array2::from_shape_fn((n, n), |(i, k)| u[(i, order[k])]);
    Ok((order.iter().map(|&i| vals[i]).collect(), vectors))
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn eigvalsh(a: &Array2<Complex64>) -> Result<Vec<f64>> {
    seq();
    let mut vals = to_faer(a)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::LinAlg(format!("hermitian eigenvalues: {e:?}")))?;
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Full singular value decomposition `A = U diag(s) V†` with the singular
/// values in descending order.
pub struct Svd {
    pub u: Array2<Complex64>,
    pub s: Vec<f64>,
    pub v: Array2<Complex64>,
}

pub fn svd(a: &Array2<Complex64>) -> Result<Svd> {
    seq();
    let dec = to_faer(a)
        .svd()
        .map_err(|e| Error::LinAlg(format!("svd: {e:?}")))?;
    let s = dec.S();
    let k = a.nrows().min(a.ncols());
    let vals: Vec<f64> = (0..k).map(|i| s[i].re).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
    let (u, v) = (dec.U(), dec.V());
    Ok(Svd {
        u: Array2::from_shape_fn((a.nrows(), k), |(i, c)| u[(i, order[c])]),
        s: order.iter().map(|&i| vals[i]).collect(),
        v: Array2::from_shape_fn((a.ncols(), k), |(i, c)| v[(i, order[c])]),
    })
}

/// Solves `A X = B` with partial-pivoting LU.
pub fn solve(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::Dimension {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    seq();
    let x = to_faer(a).partial_piv_lu().solve(to_faer(b));
    let x = from_faer(x.as_ref());
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::LinAlg("singular system".into()));
    }
    Ok(x)
}

/// Inverse of a square matrix.
pub fn inverse(a: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    seq();
    let inv = to_faer(a).partial_piv_lu().inverse();
    let inv = from_faer(inv.as_ref());
    if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::LinAlg("singular matrix".into()));
    }
    Ok(inv)
}

fn one_norm(a: &Array2<Complex64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by degree-13 Padé approximation with scaling and
/// squaring (Higham 2005).
pub fn expm(a: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    const B: [f64; 14] = [
        64_764_752_532_480_000.0,
        32_382_376_266_240_000.0,
        7_771_770_303_897_600.0,
        1_187_353_796_428_800.0,
        129_060_195_264_000.0,
        10_559_470_521_600.0,
        670_442_572_800.0,
        33_522_128_640.0,
        1_323_241_920.0,
        40_840_800.0,
        960_960.0,
        16_380.0,
        182.0,
        1.0,
    ];
    const THETA_13: f64 = 5.371_920_351_148_152;

    let n = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.mapv(|z| z / 2f64.powi(squarings));
    let eye = Array2::<Complex64>::eye(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let c = |x: f64| Complex64::new(x, 0.0);

    let u_inner = &a6 * c(B[13]) + &a4 * c(B[11]) + &a2 * c(B[9]);
    let u_tail = &a6 * c(B[7]) + &a4 * c(B[5]) + &a2 * c(B[3]) + &eye * c(B[1]);
    let u = a.dot(&(a6.dot(&u_inner) + u_tail));
    let v_inner = &a6 * c(B[12]) + &a4 * c(B[10]) + &a2 * c(B[8]);
    let v = a6.dot(&v_inner) + &a6 * c(B[6]) + &a4 * c(B[4]) + &a2 * c(B[2]) + &eye * c(B[0]);

    let mut r = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    Ok(r)
}

/// Hermitian part `(A + A†)/2`.
pub fn hermitize(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n = a.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (a[[i, j]] + a[[j, i]].conj()))
}

pub fn adjoint(a: &Array2<Complex64>) -> Array2<Complex64> {
    a.t().mapv(|z| z.conj())
}

/// Largest elementwise modulus.
pub fn max_abs(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max |A - A†|`.
pub fn hermiticity_defect(a: &Array2<Complex64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    worst
}

pub fn trace(a: &Array2<Complex64>) -> Complex64 {
    a.diag().sum()
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

pub fn commutator(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    a.dot(b) - b.dot(a)
}

/// Column-stacking vectorisation: element `(i, j)` lands at `j * n + i`.
pub fn vectorize(a: &Array2<Complex64>) -> Array1<Complex64> {
    let (r, c) = a.dim();
    Array1::from_shape_fn(r * c, |k| a[[k % r, k / r]])
}

pub fn unvectorize(v: &Array1<Complex64>, n: usize) -> Array2<Complex64> {
    Array2::from_shape_fn((n, n), |(i, j)| v[j * n + i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eigh_sorted_and_orthonormal() {
        let h = array![[c(2.0, 0.0), c(0.0, 1.0)], [c(0.0, -1.0), c(-1.0, 0.0)]];
        let (vals, vecs) = eigh(&h).unwrap();
        assert!(vals[0] < vals[1]);
        let recon = vecs
            .dot(&Array2::from_diag(&Array1::from(
                vals.iter().map(|&v| c(v, 0.0)).collect::<Vec<_>>(),
            )))
            .dot(&adjoint(&vecs));
        assert!(max_abs(&(recon - &h)) < 1e-13);
    }

    #[test]
    fn expm_of_pauli_rotation() {
        // exp(-i θ σx) = cos θ I - i sin θ σx
        let theta = 0.7;
        let a = array![[c(0.0, 0.0), c(0.0, -theta)], [c(0.0, -theta), c(0.0, 0.0)]];
        let e = expm(&a).unwrap();
        let expect = array![
            [c(theta.cos(), 0.0), c(0.0, -theta.sin())],
            [c(0.0, -theta.sin()), c(theta.cos(), 0.0)]
        ];
        assert!(max_abs(&(e - expect)) < 1e-14);
    }

    #[test]
    fn expm_large_norm_uses_squaring() {
        let a = array![[c(-30.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(3.0, 1.0)]];
        let e = expm(&a).unwrap();
        assert!(((e[[0, 0]] - c((-30f64).exp(), 0.0)).norm()) < 1e-20);
        let z = c(3.0, 1.0).exp();
        assert!((e[[1, 1]] - z).norm() / z.norm() < 1e-13);
    }

    #[test]
    fn vectorize_roundtrip_is_column_major() {
        let a = array![[c(1.0, 0.0), c(2.0, 0.0)], [c(3.0, 0.0), c(4.0, 0.0)]];
        let v = vectorize(&a);
        assert_eq!(v[1], c(3.0, 0.0));
        assert_eq!(unvectorize(&v, 2), a);
    }

    #[test]
    fn svd_descending() {
        let a = array![[c(0.0, 0.0), c(3.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]];
        let d = svd(&a).unwrap();
        assert!((d.s[0] - 3.0).abs() < 1e-14 && (d.s[1] - 1.0).abs() < 1e-14);
    }
}
