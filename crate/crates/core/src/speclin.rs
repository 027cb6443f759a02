//! Structured covariance operators `C = Q^H diag(c) Q`.
//!
//! For block-circulant matrices with circulant blocks `Q = F_{N_v} (x) F_{N_h}`
//! is the unitary 2-D DFT, so `c` is the eigenvalue spectrum of `C`. For
//! block-Toeplitz matrices with Toeplitz blocks `Q = Q_{N_v} (x) Q_{N_h}` where
//! `Q_J` holds the first `J` columns of the unitary `2J x 2J` DFT; `Q` is then
//! an isometry (`Q^H Q = I`) with `4N` rows. Row `p = p_v * G_h + p_h` of `Q`
//! pairs with the frequency grid `G_v x G_h`, column `n = v * n_h + h` with the
//! antenna layout of [`ArrayGeometry`].
//!
//! Products with `Q` and `Q^H` run through (zero-padded) 2-D FFTs.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::channel_sim::ArrayGeometry;
use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureKind {
    BlockToeplitz,
    BlockCirculant,
}

/// Spectral entries below this fraction of the largest one are floored when a
/// structured covariance is inverted.
pub const SPECTRUM_FLOOR: f64 = 1e-10;

/// 2-D DFT over a `rows x cols` grid stored row-major. Unnormalized.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    fwd_rows: Arc<dyn Fft<f64>>,
    fwd_cols: Arc<dyn Fft<f64>>,
    inv_rows: Arc<dyn Fft<f64>>,
    inv_cols: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            rows,
            cols,
            // transforms along a row have length `cols`
            fwd_rows: planner.plan_fft_forward(cols),
            fwd_cols: planner.plan_fft_forward(rows),
            inv_rows: planner.plan_fft_inverse(cols),
            inv_cols: planner.plan_fft_inverse(rows),
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn run(&self, buf: &mut [C64], inverse: bool) {
        debug_assert_eq!(buf.len(), self.len());
        let (along_row, along_col) = if inverse {
            (&self.inv_rows, &self.inv_cols)
        } else {
            (&self.fwd_rows, &self.fwd_cols)
        };
        if self.cols > 1 {
            along_row.process(buf);
        }
        if self.rows > 1 {
            let mut t = vec![C64::new(0.0, 0.0); buf.len()];
            for r in 0..self.rows {
                for c in 0..self.cols {
                    t[c * self.rows + r] = buf[r * self.cols + c];
                }
            }
            along_col.process(&mut t);
            for r in 0..self.rows {
                for c in 0..self.cols {
                    buf[r * self.cols + c] = t[c * self.rows + r];
                }
            }
        }
    }

    /// `X[k] = sum_n x[n] exp(-2 pi j k.n / G)`.
    pub fn forward(&self, buf: &mut [C64]) {
        self.run(buf, false)
    }

    /// `x[n] = sum_k X[k] exp(+2 pi j k.n / G)` (no `1/G` factor).
    pub fn inverse(&self, buf: &mut [C64]) {
        self.run(buf, true)
    }
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

/// The implicit Kronecker operator `Q` of one structure family.
#[derive(Debug, Clone)]
pub struct StructuredFactor {
    kind: StructureKind,
    geometry: ArrayGeometry,
    grid_v: usize,
    grid_h: usize,
    fft: Fft2,
    dense: Array2<C64>,
    gram: Array2<f64>,
}

impl PartialEq for StructuredFactor {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.geometry.n_v == other.geometry.n_v
            && self.geometry.n_h == other.geometry.n_h
    }
}

/// `K[p, p'] = (Q_J Q_J^H)[p, p']` for one axis with grid size `g >= j`.
fn axis_outer(j: usize, g: usize) -> Array2<C64> {
    let scale = 1.0 / g as f64;
    Array2::from_shape_fn((g, g), |(p, q)| {
        let d = p as f64 - q as f64;
        (0..j)
            .map(|n| C64::from_polar(scale, -std::f64::consts::TAU * d * n as f64 / g as f64))
            .sum()
    })
}

impl StructuredFactor {
    pub fn new(kind: StructureKind, geometry: ArrayGeometry) -> Self {
        let (grid_v, grid_h) = match kind {
            StructureKind::BlockToeplitz => (2 * geometry.n_v, 2 * geometry.n_h),
            StructureKind::BlockCirculant => (geometry.n_v, geometry.n_h),
        };
        let n = geometry.n();
        let rows = grid_v * grid_h;
        let scale = 1.0 / (rows as f64).sqrt();
        let tau = std::f64::consts::TAU;
        let dense = Array2::from_shape_fn((rows, n), |(p, i)| {
            let (pv, ph) = (p / grid_h, p % grid_h);
            let (v, h) = (i / geometry.n_h, i % geometry.n_h);
            let phase = ((pv * v) % grid_v) as f64 / grid_v as f64
                + ((ph * h) % grid_h) as f64 / grid_h as f64;
            C64::from_polar(scale, -tau * phase)
        });
        let kv = axis_outer(geometry.n_v, grid_v);
        let kh = axis_outer(geometry.n_h, grid_h);
        let gram = Array2::from_shape_fn((rows, rows), |(p, q)| {
            kv[[p / grid_h, q / grid_h]].norm_sqr() * kh[[p % grid_h, q % grid_h]].norm_sqr()
        });
        StructuredFactor {
            kind,
            geometry,
            grid_v,
            grid_h,
            fft: Fft2::new(grid_v, grid_h),
            dense,
            gram,
        }
    }

    pub fn kind(&self) -> StructureKind {
        self.kind
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    /// Number of rows of `Q`, i.e. the length of `c`.
    pub fn rows(&self) -> usize {
        self.grid_v * self.grid_h
    }

    pub fn n(&self) -> usize {
        self.geometry.n()
    }

    /// Explicit `Q`, shape `rows x N`.
    pub fn dense_q(&self) -> ArrayView2<'_, C64> {
        self.dense.view()
    }

    /// `|Q Q^H|^2` elementwise: the Gram matrix of the rank-one atoms
    /// `q_p q_p^H` under the Frobenius inner product.
    pub fn gram(&self) -> ArrayView2<'_, f64> {
        self.gram.view()
    }

    /// `Q x` via a zero-padded 2-D FFT.
    pub fn forward(&self, x: ArrayView1<C64>) -> Array1<C64> {
        let mut buf = vec![C64::new(0.0, 0.0); self.rows()];
        let nh = self.geometry.n_h;
        for (i, &xi) in x.iter().enumerate() {
            buf[(i / nh) * self.grid_h + i % nh] = xi;
        }
        self.fft.forward(&mut buf);
        let scale = 1.0 / (self.rows() as f64).sqrt();
        Array1::from_iter(buf.into_iter().map(|z| z * scale))
    }

    /// `Q^H z` via an inverse 2-D FFT and cropping.
    pub fn adjoint(&self, z: ArrayView1<C64>) -> Array1<C64> {
        let mut buf = z.to_vec();
        self.fft.inverse(&mut buf);
        let scale = 1.0 / (self.rows() as f64).sqrt();
        let nh = self.geometry.n_h;
        Array1::from_shape_fn(self.n(), |i| buf[(i / nh) * self.grid_h + i % nh] * scale)
    }

    /// `Q x` for every row of `x`.
    pub fn forward_rows(&self, x: ArrayView2<C64>) -> Array2<C64> {
        let mut out = Array2::zeros((x.nrows(), self.rows()));
        for (row, mut dst) in x.outer_iter().zip(out.outer_iter_mut()) {
            dst.assign(&self.forward(row));
        }
        out
    }

    /// `Q^H diag(c) Q x` in `O(N log N)`.
    pub fn apply(&self, c: ArrayView1<f64>, x: ArrayView1<C64>) -> Array1<C64> {
        let mut z = self.forward(x);
        z.iter_mut().zip(c.iter()).for_each(|(zi, &ci)| *zi *= ci);
        self.adjoint(z.view())
    }

    /// Dense `Q^H diag(c) Q`, built from its (block-)Toeplitz generator.
    pub fn materialize(&self, c: ArrayView1<f64>) -> Array2<C64> {
        let mut r: Vec<C64> = c.iter().map(|&ci| C64::new(ci, 0.0)).collect();
        self.fft.inverse(&mut r);
        let scale = 1.0 / self.rows() as f64;
        let (gv, gh, nh) = (self.grid_v, self.grid_h, self.geometry.n_h);
        let n = self.n();
        Array2::from_shape_fn((n, n), |(a, b)| {
            let dv = (a / nh + gv - b / nh) % gv;
            let dh = (a % nh + gh - b % nh) % gh;
            r[dv * gh + dh] * scale
        })
    }

    /// `diag(Q S Q^H)`, the inner products of `S` with the atoms `q_p q_p^H`.
    pub fn atom_inner_products(&self, s: ArrayView2<C64>) -> Array1<f64> {
        let qs = self.dense.dot(&s);
        Array1::from_shape_fn(self.rows(), |p| {
            qs.row(p)
                .iter()
                .zip(self.dense.row(p).iter())
                .map(|(a, q)| (a * q.conj()).re)
                .sum()
        })
    }

    /// Nonnegative least-squares coefficients for atom inner products `b`.
    ///
    /// Circulant atoms are orthonormal, so the clamped unconstrained solution
    /// is optimal. Toeplitz atoms are not; the problem
    /// `min 1/2 c^T G c - b^T c, c >= 0` is solved by cyclic coordinate
    /// descent, started from `warm` when given and otherwise from the clamped
    /// diagonally-scaled solution.
    pub fn solve_nonneg(&self, b: ArrayView1<f64>, warm: Option<ArrayView1<f64>>) -> Array1<f64> {
        match self.kind {
            StructureKind::BlockCirculant => b.mapv(|x| x.max(0.0)),
            StructureKind::BlockToeplitz => nnls_coordinate_descent(
                self.gram.view(),
                b,
                warm,
                NNLS_MAX_SWEEPS,
                NNLS_TOL,
            ),
        }
    }

    /// Frobenius projection of a Hermitian matrix onto `{Q^H diag(c) Q : c >= 0}`.
    pub fn project(&self, s: ArrayView2<C64>) -> Result<Array1<f64>> {
        check_len(self.n(), s.nrows())?;
        check_len(self.n(), s.ncols())?;
        linalg::ensure_hermitian(s, 1e-9)?;
        let b = self.atom_inner_products(s);
        Ok(self.solve_nonneg(b.view(), None))
    }
}

impl StructuredFactor {
    /// Maximum-likelihood refinement of a spectrum for a Gaussian with
    /// sample covariance `s` and model `Q^H diag(c) Q + reg I`.
    ///
    /// Treats `x = Q^H z + e` with independent `z_p ~ CN(0, c_p)` as complete
    /// data and iterates the expectation-maximization update
    /// `c_p <- c_p - c_p^2 (Q C^{-1} Q^H)_pp + c_p^2 (Q C^{-1} S C^{-1} Q^H)_pp`,
    /// which keeps `c >= 0` and never decreases `-log det C - tr(C^{-1} S)`.
    /// Stops after `max_iters` updates or once no entry moves by more than
    /// `tol * max(c)`.
    pub fn refine_spectrum(
        &self,
        s: ArrayView2<C64>,
        start: ArrayView1<f64>,
        reg: f64,
        max_iters: usize,
        tol: f64,
    ) -> Result<Array1<f64>> {
        check_len(self.n(), s.nrows())?;
        check_len(self.rows(), start.len())?;
        let mut c = start.mapv(|v| v.max(0.0));
        let q = self.dense.view();
        for _ in 0..max_iters {
            let cov = linalg::add_diagonal(self.materialize(c.view()).view(), reg);
            let a = q.dot(&linalg::hpd_inverse(cov.view())?);
            let asa = a.dot(&s);
            let mut biggest = 0.0f64;
            for p in 0..self.rows() {
                let (mut d1, mut d2) = (0.0, 0.0);
                for ((ap, qp), bp) in a.row(p).iter().zip(q.row(p)).zip(asa.row(p)) {
                    d1 += (ap * qp.conj()).re;
                    d2 += (bp * ap.conj()).re;
                }
                let cp = c[p];
                let next = (cp + cp * cp * (d2 - d1)).max(0.0);
                biggest = biggest.max((next - cp).abs());
                c[p] = next;
            }
            let top = c.iter().fold(0.0f64, |m, &x| m.max(x));
            if biggest <= tol * top.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        Ok(c)
    }

    /// Starting spectrum for [`refine_spectrum`](Self::refine_spectrum):
    /// atom inner products divided by the atom energies `|q_p|^2 = N / rows`.
    /// Exact for circulant factors and trace preserving for both kinds.
    pub fn spectrum_guess(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let scale = self.rows() as f64 / self.n() as f64;
        b.mapv(|v| v.max(0.0) * scale)
    }
}

const NNLS_MAX_SWEEPS: usize = 5000;
const NNLS_TOL: f64 = 1e-13;

/// Cyclic coordinate descent for `min 1/2 c^T G c - b^T c` over `c >= 0`.
pub fn nnls_coordinate_descent(
    gram: ArrayView2<f64>,
    b: ArrayView1<f64>,
    warm: Option<ArrayView1<f64>>,
    max_sweeps: usize,
    tol: f64,
) -> Array1<f64> {
    let n = b.len();
    let mut c = match warm {
        Some(w) => w.mapv(|x| x.max(0.0)),
        None => Array1::from_shape_fn(n, |i| {
            let row_sum: f64 = gram.row(i).sum();
            if row_sum > 0.0 {
                (b[i] / row_sum).max(0.0)
            } else {
                0.0
            }
        }),
    };
    let mut gc = gram.dot(&c);
    for _ in 0..max_sweeps {
        let mut biggest = 0.0f64;
        for i in 0..n {
            let gii = gram[[i, i]];
            if gii <= 0.0 {
                continue;
            }
            let next = (c[i] - (gc[i] - b[i]) / gii).max(0.0);
            let delta = next - c[i];
            if delta != 0.0 {
                c[i] = next;
                gc.scaled_add(delta, &gram.row(i));
                biggest = biggest.max(delta.abs());
            }
        }
        let scale = c.iter().fold(0.0f64, |m, &x| m.max(x));
        if biggest <= tol * scale.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    c
}

/// Covariance matrix storage.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceRep {
    Full(Array2<C64>),
    Structured {
        factor: Arc<StructuredFactor>,
        c: Array1<f64>,
    },
}

impl CovarianceRep {
    pub fn structured(factor: Arc<StructuredFactor>, c: Array1<f64>) -> Result<Self> {
        check_len(factor.rows(), c.len())?;
        if c.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::config("structured spectrum must be finite and nonnegative"));
        }
        Ok(CovarianceRep::Structured { factor, c })
    }

    pub fn n(&self) -> usize {
        match self {
            CovarianceRep::Full(m) => m.nrows(),
            CovarianceRep::Structured { factor, .. } => factor.n(),
        }
    }

    pub fn kind(&self) -> Option<StructureKind> {
        match self {
            CovarianceRep::Full(_) => None,
            CovarianceRep::Structured { factor, .. } => Some(factor.kind()),
        }
    }

    pub fn materialize(&self) -> Array2<C64> {
        match self {
            CovarianceRep::Full(m) => m.clone(),
            CovarianceRep::Structured { factor, c } => factor.materialize(c.view()),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            CovarianceRep::Full(m) => m.diag().iter().map(|z| z.re).sum(),
            // every row of Q has squared norm N / rows
            CovarianceRep::Structured { factor, c } => {
                c.sum() * factor.n() as f64 / factor.rows() as f64
            }
        }
    }
}

/// `C x` for any representation.
pub fn structured_matvec(rep: &CovarianceRep, x: ArrayView1<C64>) -> Result<Array1<C64>> {
    check_len(rep.n(), x.len())?;
    Ok(match rep {
        CovarianceRep::Full(m) => m.dot(&x),
        CovarianceRep::Structured { factor, c } => factor.apply(c.view(), x),
    })
}

pub fn materialize(rep: &CovarianceRep) -> Array2<C64> {
    rep.materialize()
}

pub fn project_to_structure(
    s: ArrayView2<C64>,
    factor: &StructuredFactor,
) -> Result<Array1<f64>> {
    factor.project(s)
}

/// `c + extra` with tiny entries raised to `SPECTRUM_FLOOR * max`.
pub fn floored_spectrum(c: ArrayView1<f64>, extra: f64) -> Array1<f64> {
    let top = c.iter().fold(0.0f64, |m, &x| m.max(x));
    let floor = SPECTRUM_FLOOR * top;
    c.mapv(|x| x.max(floor) + extra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, stream};
    use rand::Rng;

    fn rel_err(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
        let num: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den.max(1e-300)).sqrt()
    }

    fn random_c(len: usize, seed: u64) -> Array1<f64> {
        let mut rng = stream(seed, 0);
        Array1::from_shape_fn(len, |_| rng.random::<f64>() * 2.0)
    }

    #[test]
    fn circulant_1x4_is_unitary_dft() {
        let f = StructuredFactor::new(StructureKind::BlockCirculant, ArrayGeometry::ura(1, 4));
        let q = f.dense_q();
        for p in 0..4 {
            for n in 0..4 {
                let want = C64::from_polar(0.5, -std::f64::consts::TAU * (p * n) as f64 / 4.0);
                assert!((q[[p, n]] - want).norm() < 1e-14);
            }
        }
        let qhq = linalg::conj_transpose(q).dot(&q);
        assert!(rel_err(&qhq, &linalg::identity(4)) < 1e-14);
    }

    #[test]
    fn flat_spectrum_gives_identity() {
        for kind in [StructureKind::BlockCirculant, StructureKind::BlockToeplitz] {
            let f = StructuredFactor::new(kind, ArrayGeometry::ura(2, 2));
            let c = Array1::ones(f.rows());
            assert!(rel_err(&f.materialize(c.view()), &linalg::identity(4)) < 1e-14);
        }
    }

    #[test]
    fn toeplitz_factor_is_isometry_with_unit_modulus_entries() {
        let f = StructuredFactor::new(StructureKind::BlockToeplitz, ArrayGeometry::ura(2, 3));
        assert_eq!(f.rows(), 24);
        let q = f.dense_q();
        let scale = 1.0 / 24f64.sqrt();
        assert!(q.iter().all(|z| (z.norm() - scale).abs() < 1e-14));
        let qhq = linalg::conj_transpose(q).dot(&q);
        assert!(rel_err(&qhq, &linalg::identity(6)) < 1e-13);
    }

    #[test]
    fn fast_paths_match_dense_q() {
        for kind in [StructureKind::BlockCirculant, StructureKind::BlockToeplitz] {
            let f = StructuredFactor::new(kind, ArrayGeometry::ura(2, 4));
            let mut rng = stream(3, 1);
            let x = Array1::from_shape_fn(8, |_| complex_normal(&mut rng));
            let z = Array1::from_shape_fn(f.rows(), |_| complex_normal(&mut rng));
            let fq = f.forward(x.view());
            let dq = f.dense_q().dot(&x);
            assert!(fq.iter().zip(dq.iter()).all(|(a, b)| (a - b).norm() < 1e-12));
            let fa = f.adjoint(z.view());
            let da = linalg::conj_transpose(f.dense_q()).dot(&z);
            assert!(fa.iter().zip(da.iter()).all(|(a, b)| (a - b).norm() < 1e-12));
        }
    }

    #[test]
    fn matvec_matches_materialized() {
        for kind in [StructureKind::BlockCirculant, StructureKind::BlockToeplitz] {
            let f = Arc::new(StructuredFactor::new(kind, ArrayGeometry::ura(2, 4)));
            let c = random_c(f.rows(), 8);
            let rep = CovarianceRep::structured(f.clone(), c).unwrap();
            let mut rng = stream(4, 2);
            let x = Array1::from_shape_fn(8, |_| complex_normal(&mut rng));
            let fast = structured_matvec(&rep, x.view()).unwrap();
            let dense = rep.materialize().dot(&x);
            let err: f64 = fast.iter().zip(dense.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
            let den: f64 = dense.iter().map(|a| a.norm_sqr()).sum();
            assert!((err / den).sqrt() < 1e-10);
            assert!(structured_matvec(&rep, Array1::zeros(3).view()).is_err());
        }
    }

    #[test]
    fn identity_and_single_bin() {
        let f = Arc::new(StructuredFactor::new(
            StructureKind::BlockCirculant,
            ArrayGeometry::ura(2, 2),
        ));
        let mut rng = stream(5, 0);
        let x = Array1::from_shape_fn(4, |_| complex_normal(&mut rng));
        let rep = CovarianceRep::structured(f.clone(), Array1::ones(4)).unwrap();
        let y = structured_matvec(&rep, x.view()).unwrap();
        assert!(y.iter().zip(x.iter()).all(|(a, b)| (a - b).norm() < 1e-14));

        let mut c = Array1::zeros(4);
        c[2] = 3.0;
        let rep = CovarianceRep::structured(f.clone(), c).unwrap();
        let y = structured_matvec(&rep, x.view()).unwrap();
        let q = f.dense_q().row(2).mapv(|z| z.conj());
        let coef: C64 = f.dense_q().row(2).dot(&x) * 3.0;
        for (a, b) in y.iter().zip(q.iter()) {
            assert!((a - coef * b).norm() < 1e-13);
        }
    }

    #[test]
    fn toeplitz_materialization_has_constant_diagonals() {
        let f = StructuredFactor::new(StructureKind::BlockToeplitz, ArrayGeometry::ura(1, 3));
        let c = random_c(f.rows(), 12);
        let m = f.materialize(c.view());
        assert!((m[[0, 0]] - m[[1, 1]]).norm() < 1e-10);
        assert!((m[[1, 1]] - m[[2, 2]]).norm() < 1e-10);
        assert!((m[[0, 1]] - m[[1, 2]]).norm() < 1e-10);
        assert!((m[[1, 0]] - m[[2, 1]]).norm() < 1e-10);
        assert!(linalg::hermitian_deviation(m.view()) < 1e-12);
    }

    #[test]
    fn projection_of_identity_and_round_trip() {
        let f = StructuredFactor::new(StructureKind::BlockCirculant, ArrayGeometry::ura(2, 2));
        let c = f.project(linalg::identity(4).view()).unwrap();
        assert!(c.iter().all(|&x| (x - 1.0).abs() < 1e-13));
        let c0 = random_c(4, 2);
        let back = f.project(f.materialize(c0.view()).view()).unwrap();
        assert!(back.iter().zip(c0.iter()).all(|(a, b)| (a - b).abs() < 1e-8));
    }

    #[test]
    fn toeplitz_projection_reproduces_in_family_matrix() {
        let f = StructuredFactor::new(StructureKind::BlockToeplitz, ArrayGeometry::ura(2, 2));
        let c0 = random_c(f.rows(), 31);
        let s = f.materialize(c0.view());
        let c = f.project(s.view()).unwrap();
        assert!(rel_err(&f.materialize(c.view()), &s) < 1e-8);
    }

    #[test]
    fn rejects_non_hermitian_input() {
        let f = StructuredFactor::new(StructureKind::BlockCirculant, ArrayGeometry::ura(1, 2));
        let mut s = linalg::identity(2);
        s[[0, 1]] = C64::new(1.0, 0.0);
        assert!(matches!(f.project(s.view()), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn floor_applies_relative_to_max() {
        let c = Array1::from(vec![2.0, 0.0, 1e-12]);
        let fl = floored_spectrum(c.view(), 0.5);
        assert_eq!(fl[0], 2.5);
        assert!((fl[1] - (2e-10 + 0.5)).abs() < 1e-15);
    }

    fn gaussian_objective(f: &StructuredFactor, c: &Array1<f64>, s: &Array2<C64>, reg: f64) -> f64 {
        let cov = linalg::add_diagonal(f.materialize(c.view()).view(), reg);
        let w = linalg::Whitener::new(cov.view()).unwrap();
        let inv = linalg::hpd_inverse(cov.view()).unwrap();
        let tr: f64 = inv.dot(s).diag().iter().map(|z| z.re).sum();
        -w.log_det - tr
    }

    #[test]
    fn refinement_never_decreases_likelihood() {
        let g = ArrayGeometry::ura(2, 3);
        let f = StructuredFactor::new(StructureKind::BlockToeplitz, g);
        let mut rng = stream(40, 0);
        // low-rank sample covariance, the case where projection alone struggles
        let x = Array2::from_shape_fn((3, 6), |_| complex_normal(&mut rng));
        let s = linalg::outer_sum(x.view()).mapv(|z| z / 3.0);
        let b = f.atom_inner_products(s.view());
        let mut c = f.spectrum_guess(b.view());
        let mut last = gaussian_objective(&f, &c, &s, 1e-6);
        for _ in 0..25 {
            c = f.refine_spectrum(s.view(), c.view(), 1e-6, 1, 0.0).unwrap();
            assert!(c.iter().all(|&v| v >= 0.0));
            let now = gaussian_objective(&f, &c, &s, 1e-6);
            assert!(now >= last - 1e-9 * last.abs(), "{last} -> {now}");
            last = now;
        }
    }

    #[test]
    fn circulant_refinement_is_one_step() {
        let f = StructuredFactor::new(StructureKind::BlockCirculant, ArrayGeometry::ura(2, 2));
        let mut rng = stream(41, 0);
        let x = Array2::from_shape_fn((7, 4), |_| complex_normal(&mut rng));
        let s = linalg::outer_sum(x.view()).mapv(|z| z / 7.0);
        let b = f.atom_inner_products(s.view());
        let start = random_c(4, 42) + 0.5;
        let c = f.refine_spectrum(s.view(), start.view(), 0.0, 1, 0.0).unwrap();
        assert!(c.iter().zip(b.iter()).all(|(a, e)| (a - e).abs() < 1e-10));
        let guess = f.spectrum_guess(b.view());
        assert!(guess.iter().zip(b.iter()).all(|(a, e)| (a - e).abs() < 1e-15));
    }

    #[test]
    fn spectrum_guess_preserves_trace() {
        let f = StructuredFactor::new(StructureKind::BlockToeplitz, ArrayGeometry::ura(2, 4));
        let mut rng = stream(43, 0);
        let x = Array2::from_shape_fn((5, 8), |_| complex_normal(&mut rng));
        let s = linalg::outer_sum(x.view());
        let c = f.spectrum_guess(f.atom_inner_products(s.view()).view());
        let t: f64 = f.materialize(c.view()).diag().iter().map(|z| z.re).sum();
        let want: f64 = s.diag().iter().map(|z| z.re).sum();
        assert!((t - want).abs() < 1e-9 * want);
    }
}
