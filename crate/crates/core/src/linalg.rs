//! Dense complex linear algebra for the small Hermitian systems that appear
//! here (N up to a few hundred).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::C64;

pub fn identity(n: usize) -> Array2<C64> {
    Array2::from_diag_elem(n, C64::new(1.0, 0.0))
}

pub fn conj_transpose(a: ArrayView2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

/// `X^H X` for a tall data matrix.
pub fn gram(x: ArrayView2<C64>) -> Array2<C64> {
    conj_transpose(x).dot(&x)
}

/// `sum_m x_m x_m^H` over the rows of `x`.
pub fn outer_sum(x: ArrayView2<C64>) -> Array2<C64> {
    x.t().dot(&x.mapv(|z| z.conj()))
}

/// Largest |A - A^H| entry.
pub fn hermitian_deviation(a: ArrayView2<C64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    worst
}

pub fn ensure_hermitian(a: ArrayView2<C64>, tol: f64) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            actual: a.ncols(),
        });
    }
    let scale = a.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    let dev = hermitian_deviation(a);
    if dev > tol * scale {
        Err(Error::NotHermitian(dev))
    } else {
        Ok(())
    }
}

/// Lower Cholesky factor `L` with `L L^H = A`. Only the lower triangle of `A`
/// is read.
pub fn cholesky(a: ArrayView2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    let mut l = Array2::<C64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]].re;
        for k in 0..j {
            d -= l[[j, k]].norm_sqr();
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[[j, j]] = C64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn lower_inverse(l: ArrayView2<C64>) -> Array2<C64> {
    let n = l.nrows();
    let mut inv = Array2::<C64>::zeros((n, n));
    for col in 0..n {
        inv[[col, col]] = l[[col, col]].inv();
        for i in (col + 1)..n {
            let mut s = C64::new(0.0, 0.0);
            for k in col..i {
                s += l[[i, k]] * inv[[k, col]];
            }
            inv[[i, col]] = -s / l[[i, i]];
        }
    }
    inv
}

pub fn log_det_from_cholesky(l: ArrayView2<C64>) -> f64 {
    l.diag().iter().map(|d| 2.0 * d.re.ln()).sum()
}

/// `A + eps * I`.
pub fn add_diagonal(a: ArrayView2<C64>, eps: f64) -> Array2<C64> {
    let mut out = a.to_owned();
    for d in out.diag_mut() {
        *d += eps;
    }
    out
}

/// Inverse of a Hermitian positive definite matrix.
pub fn hpd_inverse(a: ArrayView2<C64>) -> Result<Array2<C64>> {
    let l = cholesky(a)?;
    let li = lower_inverse(l.view());
    Ok(conj_transpose(li.view()).dot(&li))
}

/// Whitening factor and log-determinant of a Hermitian positive definite
/// matrix: `W = L^{-1}` so that `x^H A^{-1} x = |W x|^2`.
#[derive(Debug, Clone)]
pub struct Whitener {
    pub w: Array2<C64>,
    pub log_det: f64,
}

impl Whitener {
    pub fn new(a: ArrayView2<C64>) -> Result<Self> {
        let l = cholesky(a)?;
        Ok(Whitener {
            log_det: log_det_from_cholesky(l.view()),
            w: lower_inverse(l.view()),
        })
    }

    pub fn quad_form(&self, x: ArrayView1<C64>) -> f64 {
        let n = x.len();
        let mut q = 0.0;
        for i in 0..n {
            let row = self.w.row(i);
            let mut s = C64::new(0.0, 0.0);
            for k in 0..=i {
                s += row[k] * x[k];
            }
            q += s.norm_sqr();
        }
        q
    }

    /// Quadratic forms of all rows of `x` (rows are vectors).
    pub fn quad_forms(&self, x: ArrayView2<C64>) -> Array1<f64> {
        let z = x.dot(&self.w.t());
        z.map_axis(Axis(1), |r| r.iter().map(|v| v.norm_sqr()).sum())
    }
}

pub fn norm_sqr(x: ArrayView1<C64>) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

pub fn inner(a: ArrayView1<C64>, b: ArrayView1<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, stream};

    fn random_hpd(n: usize, seed: u64) -> Array2<C64> {
        let mut rng = stream(seed, 0);
        let x = Array2::from_shape_fn((2 * n, n), |_| complex_normal(&mut rng));
        add_diagonal(gram(x.view()).view(), 0.1)
    }

    #[test]
    fn outer_sum_is_sum_of_outer_products() {
        let mut rng = stream(2, 0);
        let x = Array2::from_shape_fn((4, 3), |_| complex_normal(&mut rng));
        let s = outer_sum(x.view());
        for i in 0..3 {
            for j in 0..3 {
                let want: C64 = (0..4).map(|m| x[[m, i]] * x[[m, j]].conj()).sum();
                assert!((s[[i, j]] - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = random_hpd(6, 3);
        let l = cholesky(a.view()).unwrap();
        let back = l.dot(&conj_transpose(l.view()));
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn inverse_and_whitener_agree() {
        let a = random_hpd(5, 4);
        let inv = hpd_inverse(a.view()).unwrap();
        let prod = a.dot(&inv);
        let eye = identity(5);
        for (x, y) in prod.iter().zip(eye.iter()) {
            assert!((x - y).norm() < 1e-10);
        }
        let w = Whitener::new(a.view()).unwrap();
        let mut rng = stream(9, 1);
        let x = Array1::from_shape_fn(5, |_| complex_normal(&mut rng));
        let direct = inner(x.view(), inv.dot(&x).view()).re;
        assert!((w.quad_form(x.view()) - direct).abs() < 1e-10 * direct.abs().max(1.0));
        let batch = w.quad_forms(x.view().insert_axis(Axis(0)));
        assert!((batch[0] - direct).abs() < 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = identity(3);
        a[[2, 2]] = C64::new(-1.0, 0.0);
        assert!(matches!(
            cholesky(a.view()),
            Err(Error::NotPositiveDefinite { pivot: 2, .. })
        ));
    }

    #[test]
    fn hermitian_check() {
        let mut a = identity(2);
        a[[0, 1]] = C64::new(0.0, 1.0);
        assert!(ensure_hermitian(a.view(), 1e-12).is_err());
        a[[1, 0]] = C64::new(0.0, -1.0);
        assert!(ensure_hermitian(a.view(), 1e-12).is_ok());
    }
}
