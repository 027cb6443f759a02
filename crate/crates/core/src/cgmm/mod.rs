//! Complex Gaussian mixture models.
//!
//! Densities are circularly-symmetric complex Gaussians,
//! `log N(x; mu, C) = -(x-mu)^H C^{-1} (x-mu) - N log(pi) - log det C`.
//! Mixture posteriors are evaluated in the log domain with max subtraction.

mod em;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::channel_sim::ArrayGeometry;
use crate::error::{check_len, Error, Result};
use crate::linalg::{self, Whitener};
use crate::speclin::{floored_spectrum, CovarianceRep, StructureKind, StructuredFactor};
use crate::C64;

pub use em::{em_fit, EmConfig, FitOutcome, FitReport, InitMethod, StructuredUpdate};

/// Covariance family of a mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    Full,
    Toeplitz,
    Circulant,
}

impl Structure {
    pub const ALL: [Structure; 3] = [Structure::Full, Structure::Toeplitz, Structure::Circulant];

    pub fn kind(self) -> Option<StructureKind> {
        match self {
            Structure::Full => None,
            Structure::Toeplitz => Some(StructureKind::BlockToeplitz),
            Structure::Circulant => Some(StructureKind::BlockCirculant),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Structure::Full => "full",
            Structure::Toeplitz => "toeplitz",
            Structure::Circulant => "circulant",
        }
    }

    pub fn factor(self, geometry: ArrayGeometry) -> Option<Arc<StructuredFactor>> {
        self.kind()
            .map(|k| Arc::new(StructuredFactor::new(k, geometry)))
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Structure::Full),
            "toeplitz" => Ok(Structure::Toeplitz),
            "circulant" => Ok(Structure::Circulant),
            other => Err(Error::config(format!("unknown covariance structure '{other}'"))),
        }
    }
}

/// A fitted mixture `sum_k p(k) N(mu_k, C_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    geometry: ArrayGeometry,
    structure: Structure,
    weights: Array1<f64>,
    /// One mean per row.
    means: Array2<C64>,
    covs: Vec<CovarianceRep>,
}

impl GmmModel {
    /// Builds a model; weights are renormalized to sum to one.
    pub fn new(
        geometry: ArrayGeometry,
        structure: Structure,
        weights: Array1<f64>,
        means: Array2<C64>,
        covs: Vec<CovarianceRep>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::config("a mixture needs at least one component"));
        }
        check_len(k, means.nrows())?;
        check_len(k, covs.len())?;
        check_len(geometry.n(), means.ncols())?;
        for cov in &covs {
            check_len(geometry.n(), cov.n())?;
            if cov.kind() != structure.kind() {
                return Err(Error::config("all components must share the model structure"));
            }
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::config("mixture weights must be finite and nonnegative"));
        }
        let total = weights.sum();
        if !(total > 0.0) {
            return Err(Error::config("mixture weights sum to zero"));
        }
        // leave already normalized weights bit-identical
        let weights = if (total - 1.0).abs() > 1e-12 { weights / total } else { weights };
        Ok(GmmModel {
            geometry,
            structure,
            weights,
            means,
            covs,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn n(&self) -> usize {
        self.geometry.n()
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn means(&self) -> ArrayView2<'_, C64> {
        self.means.view()
    }

    pub fn mean(&self, k: usize) -> ArrayView1<'_, C64> {
        self.means.row(k)
    }

    pub fn covs(&self) -> &[CovarianceRep] {
        &self.covs
    }

    /// Component `order[i]` of `self` becomes component `i`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        check_len(self.k(), order.len())?;
        let weights = Array1::from_iter(order.iter().map(|&i| self.weights[i]));
        let means = self.means.select(Axis(0), order);
        let covs = order.iter().map(|&i| self.covs[i].clone()).collect();
        GmmModel::new(self.geometry, self.structure, weights, means, covs)
    }

    /// Density kernels of every component for covariance `C_k + extra * I`.
    pub fn kernels(&self, extra_diag: f64) -> Result<MixtureKernels> {
        MixtureKernels::new(self, extra_diag)
    }
}

/// Everything needed to evaluate `log N(x; mu, C + extra I)` without
/// refactorizing.
#[derive(Debug, Clone)]
pub enum DensityKernel {
    Dense(Whitener),
    Spectral {
        factor: Arc<StructuredFactor>,
        /// `1 / (c + extra)` with the spectrum floor applied.
        inv_spectrum: Array1<f64>,
        log_det: f64,
    },
}

impl DensityKernel {
    pub fn new(cov: &CovarianceRep, extra_diag: f64) -> Result<Self> {
        match cov {
            CovarianceRep::Structured { factor, c }
                if factor.kind() == StructureKind::BlockCirculant =>
            {
                let spec = floored_spectrum(c.view(), extra_diag);
                if let Some((i, &v)) = spec.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
                    return Err(Error::NotPositiveDefinite { pivot: i, value: v });
                }
                Ok(DensityKernel::Spectral {
                    factor: factor.clone(),
                    log_det: spec.iter().map(|v| v.ln()).sum(),
                    inv_spectrum: spec.mapv(|v| 1.0 / v),
                })
            }
            _ => {
                let a = linalg::add_diagonal(cov.materialize().view(), extra_diag);
                Ok(DensityKernel::Dense(Whitener::new(a.view())?))
            }
        }
    }

    pub fn log_det(&self) -> f64 {
        match self {
            DensityKernel::Dense(w) => w.log_det,
            DensityKernel::Spectral { log_det, .. } => *log_det,
        }
    }

    /// `(x - mu)^H (C + extra I)^{-1} (x - mu)`.
    pub fn quad_form(&self, x: ArrayView1<C64>, mu: ArrayView1<C64>) -> f64 {
        let d = &x - &mu;
        match self {
            DensityKernel::Dense(w) => w.quad_form(d.view()),
            DensityKernel::Spectral {
                factor,
                inv_spectrum,
                ..
            } => factor
                .forward(d.view())
                .iter()
                .zip(inv_spectrum.iter())
                .map(|(z, s)| z.norm_sqr() * s)
                .sum(),
        }
    }

    pub fn log_density(&self, x: ArrayView1<C64>, mu: ArrayView1<C64>) -> f64 {
        -self.quad_form(x, mu) - x.len() as f64 * PI.ln() - self.log_det()
    }
}

/// `log N(x; mu, C + extra_diag I)`.
pub fn log_gaussian_density(
    x: ArrayView1<C64>,
    mu: ArrayView1<C64>,
    cov: &CovarianceRep,
    extra_diag: f64,
) -> Result<f64> {
    check_len(cov.n(), x.len())?;
    check_len(cov.n(), mu.len())?;
    if !(extra_diag >= 0.0) {
        return Err(Error::config("extra diagonal loading must be >= 0"));
    }
    Ok(DensityKernel::new(cov, extra_diag)?.log_density(x, mu))
}

/// Per-component kernels of one mixture at one diagonal loading.
#[derive(Debug, Clone)]
pub struct MixtureKernels {
    log_weights: Array1<f64>,
    means: Array2<C64>,
    /// `Q mu_k` per row when the model is circulant.
    spectral_means: Option<Array2<C64>>,
    factor: Option<Arc<StructuredFactor>>,
    kernels: Vec<DensityKernel>,
}

impl MixtureKernels {
    pub fn new(model: &GmmModel, extra_diag: f64) -> Result<Self> {
        if !(extra_diag >= 0.0) {
            return Err(Error::config("noise variance must be >= 0"));
        }
        let kernels = model
            .covs
            .iter()
            .map(|c| DensityKernel::new(c, extra_diag))
            .collect::<Result<Vec<_>>>()?;
        let factor = match model.covs.first() {
            Some(CovarianceRep::Structured { factor, .. })
                if factor.kind() == StructureKind::BlockCirculant =>
            {
                Some(factor.clone())
            }
            _ => None,
        };
        let spectral_means = factor.as_ref().map(|f| f.forward_rows(model.means.view()));
        Ok(MixtureKernels {
            log_weights: model.weights.mapv(f64::ln),
            means: model.means.clone(),
            spectral_means,
            factor,
            kernels,
        })
    }

    pub fn k(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernel(&self, k: usize) -> &DensityKernel {
        &self.kernels[k]
    }

    pub fn log_weights(&self) -> ArrayView1<'_, f64> {
        self.log_weights.view()
    }

    /// Circulant factor when every kernel is spectral.
    pub fn spectral_factor(&self) -> Option<&Arc<StructuredFactor>> {
        self.factor.as_ref()
    }

    pub fn spectral_means(&self) -> Option<ArrayView2<'_, C64>> {
        self.spectral_means.as_ref().map(|m| m.view())
    }

    /// `log p(k) + log N(x; mu_k, C_k + extra I)` for one vector.
    pub fn log_joint(&self, x: ArrayView1<C64>) -> Array1<f64> {
        let n = x.len() as f64;
        match (&self.factor, &self.spectral_means) {
            (Some(f), Some(smeans)) => {
                let xs = f.forward(x);
                self.log_joint_spectral(xs.view(), smeans.view(), n)
            }
            _ => Array1::from_shape_fn(self.k(), |k| {
                self.log_weights[k] + self.kernels[k].log_density(x, self.means.row(k))
            }),
        }
    }

    /// Same as [`log_joint`](Self::log_joint) for an already transformed
    /// vector `Q x` of a circulant model.
    pub fn log_joint_spectral(
        &self,
        xs: ArrayView1<C64>,
        smeans: ArrayView2<C64>,
        n: f64,
    ) -> Array1<f64> {
        let ln_pi = PI.ln();
        Array1::from_shape_fn(self.k(), |k| {
            let DensityKernel::Spectral {
                inv_spectrum,
                log_det,
                ..
            } = &self.kernels[k]
            else {
                unreachable!("spectral path on a dense kernel")
            };
            let q: f64 = xs
                .iter()
                .zip(smeans.row(k).iter())
                .zip(inv_spectrum.iter())
                .map(|((x, m), s)| (x - m).norm_sqr() * s)
                .sum();
            self.log_weights[k] - q - n * ln_pi - log_det
        })
    }

    /// Log joint densities of every row of `x`, shape `rows x K`.
    pub fn log_joint_rows(&self, x: ArrayView2<C64>) -> Array2<f64> {
        let n = x.ncols() as f64;
        let ln_pi = PI.ln();
        let mut out = Array2::<f64>::zeros((x.nrows(), self.k()));
        match (&self.factor, &self.spectral_means) {
            (Some(f), Some(smeans)) => {
                let xs = f.forward_rows(x);
                for (row, mut dst) in xs.outer_iter().zip(out.outer_iter_mut()) {
                    dst.assign(&self.log_joint_spectral(row, smeans.view(), n));
                }
            }
            _ => {
                for (k, kernel) in self.kernels.iter().enumerate() {
                    let DensityKernel::Dense(w) = kernel else {
                        unreachable!("dense path on a spectral kernel")
                    };
                    let centered = &x - &self.means.row(k);
                    let q = w.quad_forms(centered.view());
                    let base = self.log_weights[k] - n * ln_pi - w.log_det;
                    out.column_mut(k).assign(&q.mapv(|qi| base - qi));
                }
            }
        }
        out
    }
}

/// `log sum exp` of a slice; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: ArrayView1<f64>) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalizes log joint values into posterior probabilities in place and
/// returns the log normalizer.
pub fn normalize_log_joint(mut row: ndarray::ArrayViewMut1<f64>) -> f64 {
    let lse = log_sum_exp(row.view());
    row.mapv_inplace(|v| (v - lse).exp());
    lse
}

/// Posterior component probabilities `p(k | y)` under noise variance
/// `noise_var`.
pub fn responsibilities(model: &GmmModel, y: ArrayView1<C64>, noise_var: f64) -> Result<Array1<f64>> {
    check_len(model.n(), y.len())?;
    let kernels = model.kernels(noise_var)?;
    let mut lj = kernels.log_joint(y);
    normalize_log_joint(lj.view_mut());
    Ok(lj)
}

/// Total log-likelihood `sum_m log sum_k p(k) N(h_m; mu_k, C_k)` of the rows
/// of `samples`.
pub fn log_likelihood(model: &GmmModel, samples: ArrayView2<C64>) -> Result<f64> {
    check_len(model.n(), samples.ncols())?;
    let kernels = model.kernels(0.0)?;
    let lj = kernels.log_joint_rows(samples);
    Ok(lj.outer_iter().map(log_sum_exp).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, stream};
    use crate::speclin::StructuredFactor;

    fn eye_model(n_h: usize, means: Array2<C64>, weights: Vec<f64>) -> GmmModel {
        let g = ArrayGeometry::ura(1, n_h);
        let k = weights.len();
        let covs = (0..k).map(|_| CovarianceRep::Full(linalg::identity(n_h))).collect();
        GmmModel::new(g, Structure::Full, Array1::from(weights), means, covs).unwrap()
    }

    fn random_hpd(n: usize, seed: u64) -> Array2<C64> {
        let mut rng = stream(seed, 0);
        let x = Array2::from_shape_fn((n + 2, n), |_| complex_normal(&mut rng));
        linalg::add_diagonal(linalg::gram(x.view()).view(), 0.2)
    }

    #[test]
    fn density_at_mean_with_identity() {
        let mu = Array1::from(vec![C64::new(0.3, -1.0)]);
        let cov = CovarianceRep::Full(linalg::identity(1));
        let v = log_gaussian_density(mu.view(), mu.view(), &cov, 0.0).unwrap();
        assert!((v + PI.ln()).abs() < 1e-14);
        let mu = Array1::zeros(5);
        let cov = CovarianceRep::Full(linalg::identity(5));
        let v = log_gaussian_density(mu.view(), mu.view(), &cov, 0.0).unwrap();
        assert!((v + 5.0 * PI.ln()).abs() < 1e-13);
    }

    #[test]
    fn density_matches_explicit_formula() {
        let c = random_hpd(4, 17);
        let mut rng = stream(18, 0);
        let x = Array1::from_shape_fn(4, |_| complex_normal(&mut rng));
        let mu = Array1::from_shape_fn(4, |_| complex_normal(&mut rng));
        let inv = linalg::hpd_inverse(c.view()).unwrap();
        let d = &x - &mu;
        let quad = linalg::inner(d.view(), inv.dot(&d).view()).re;
        // det through the Cholesky diagonal of an independent factorization order
        let l = linalg::cholesky(c.view()).unwrap();
        let det: f64 = l.diag().iter().map(|z| z.re * z.re).product();
        let want = -quad - 4.0 * PI.ln() - det.ln();
        let got = log_gaussian_density(x.view(), mu.view(), &CovarianceRep::Full(c), 0.0).unwrap();
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn spectral_density_matches_dense() {
        let g = ArrayGeometry::ura(2, 2);
        let f = Arc::new(StructuredFactor::new(StructureKind::BlockCirculant, g));
        let c = Array1::from(vec![0.5, 1.5, 0.1, 2.0]);
        let rep = CovarianceRep::structured(f.clone(), c).unwrap();
        let dense = CovarianceRep::Full(rep.materialize());
        let mut rng = stream(2, 0);
        let x = Array1::from_shape_fn(4, |_| complex_normal(&mut rng));
        let mu = Array1::from_shape_fn(4, |_| complex_normal(&mut rng));
        let a = log_gaussian_density(x.view(), mu.view(), &rep, 0.3).unwrap();
        let b = log_gaussian_density(x.view(), mu.view(), &dense, 0.3).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn degenerate_covariance_is_reported() {
        let cov = CovarianceRep::Full(Array2::zeros((2, 2)));
        let x = Array1::zeros(2);
        assert!(matches!(
            log_gaussian_density(x.view(), x.view(), &cov, 0.0),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let f = Arc::new(StructuredFactor::new(
            StructureKind::BlockCirculant,
            ArrayGeometry::ura(1, 2),
        ));
        let rep = CovarianceRep::structured(f, Array1::zeros(2)).unwrap();
        assert!(log_gaussian_density(x.view(), x.view(), &rep, 0.0).is_err());
    }

    #[test]
    fn single_component_takes_everything() {
        let m = eye_model(2, Array2::zeros((1, 2)), vec![1.0]);
        let y = Array1::from(vec![C64::new(40.0, 0.0), C64::new(-3.0, 2.0)]);
        assert_eq!(responsibilities(&m, y.view(), 0.5).unwrap()[0], 1.0);
    }

    #[test]
    fn identical_components_split_evenly() {
        let m = eye_model(2, Array2::zeros((2, 2)), vec![0.5, 0.5]);
        let y = Array1::from(vec![C64::new(1.0, 0.0), C64::new(-3.0, 2.0)]);
        let r = responsibilities(&m, y.view(), 0.0).unwrap();
        assert!((r[0] - 0.5).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn scalar_two_component_posterior() {
        // N = 1, means +-3, unit variance, y = 3: log ratio = |y+3|^2 - |y-3|^2 = 36
        let means = Array2::from_shape_vec((2, 1), vec![C64::new(3.0, 0.0), C64::new(-3.0, 0.0)])
            .unwrap();
        let m = eye_model(1, means, vec![0.5, 0.5]);
        let y = Array1::from(vec![C64::new(3.0, 0.0)]);
        let r = responsibilities(&m, y.view(), 0.0).unwrap();
        let direct_1 = (-0.0f64).exp() / PI;
        let direct_2 = (-36.0f64).exp() / PI;
        let want = direct_1 / (direct_1 + direct_2);
        assert!((r[0] - want).abs() < 1e-15);
        assert!((r[0] / r[1] - 36f64.exp()).abs() / 36f64.exp() < 1e-9);
    }

    #[test]
    fn far_observation_does_not_underflow() {
        let means = Array2::from_shape_vec((2, 1), vec![C64::new(3.0, 0.0), C64::new(-3.0, 0.0)])
            .unwrap();
        let m = eye_model(1, means, vec![0.5, 0.5]);
        let y = Array1::from(vec![C64::new(1e4, 0.0)]);
        let r = responsibilities(&m, y.view(), 0.0).unwrap();
        assert!((r.sum() - 1.0).abs() < 1e-12);
        assert_eq!(r[0], 1.0);
    }

    #[test]
    fn log_likelihood_basics() {
        let m = eye_model(1, Array2::zeros((1, 1)), vec![1.0]);
        let one = Array2::zeros((1, 1));
        let ll = log_likelihood(&m, one.view()).unwrap();
        assert!((ll + PI.ln()).abs() < 1e-14);
        let mut rng = stream(4, 4);
        let x = Array2::from_shape_fn((1, 1), |_| complex_normal(&mut rng));
        let twice = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let a = log_likelihood(&m, x.view()).unwrap();
        let b = log_likelihood(&m, twice.view()).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_matches_dense_sum() {
        let g = ArrayGeometry::ura(1, 2);
        let mut rng = stream(6, 1);
        let means = Array2::from_shape_fn((2, 2), |_| complex_normal(&mut rng));
        let covs = vec![
            CovarianceRep::Full(random_hpd(2, 1)),
            CovarianceRep::Full(random_hpd(2, 2)),
        ];
        let m = GmmModel::new(g, Structure::Full, Array1::from(vec![0.3, 0.7]), means, covs)
            .unwrap();
        let x = Array2::from_shape_fn((10, 2), |_| complex_normal(&mut rng));
        let mut want = 0.0;
        for row in x.outer_iter() {
            let mut p = 0.0;
            for k in 0..2 {
                let CovarianceRep::Full(c) = &m.covs()[k] else { unreachable!() };
                let inv = linalg::hpd_inverse(c.view()).unwrap();
                let d = &row - &m.mean(k);
                let q = linalg::inner(d.view(), inv.dot(&d).view()).re;
                let det = (c[[0, 0]] * c[[1, 1]] - c[[0, 1]] * c[[1, 0]]).re;
                p += m.weights()[k] * (-q).exp() / (PI * PI * det);
            }
            want += p.ln();
        }
        let got = log_likelihood(&m, x.view()).unwrap();
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn batch_and_single_paths_agree() {
        for structure in Structure::ALL {
            let g = ArrayGeometry::ura(2, 2);
            let mut rng = stream(8, 0);
            let means = Array2::from_shape_fn((3, 4), |_| complex_normal(&mut rng));
            let covs = (0..3)
                .map(|i| match structure.factor(g) {
                    None => CovarianceRep::Full(random_hpd(4, 30 + i)),
                    Some(f) => {
                        let c = f.project(random_hpd(4, 30 + i).view()).unwrap();
                        CovarianceRep::structured(f, c + 0.1).unwrap()
                    }
                })
                .collect();
            let m = GmmModel::new(g, structure, Array1::from(vec![1.0, 2.0, 3.0]), means, covs)
                .unwrap();
            let x = Array2::from_shape_fn((5, 4), |_| complex_normal(&mut rng));
            let kernels = m.kernels(0.25).unwrap();
            let batch = kernels.log_joint_rows(x.view());
            for (i, row) in x.outer_iter().enumerate() {
                let single = kernels.log_joint(row);
                for k in 0..3 {
                    assert!((batch[[i, k]] - single[k]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn permutation_and_weight_scaling() {
        let mut rng = stream(10, 0);
        let means = Array2::from_shape_fn((3, 2), |_| complex_normal(&mut rng));
        let m = eye_model(2, means.clone(), vec![0.2, 0.3, 0.5]);
        let scaled = eye_model(2, means, vec![2.0, 3.0, 5.0]);
        let p = m.permuted(&[2, 0, 1]).unwrap();
        let y = Array1::from_shape_fn(2, |_| complex_normal(&mut rng));
        let r = responsibilities(&m, y.view(), 0.1).unwrap();
        let rp = responsibilities(&p, y.view(), 0.1).unwrap();
        let rs = responsibilities(&scaled, y.view(), 0.1).unwrap();
        assert!((rp[0] - r[2]).abs() < 1e-15 && (rp[1] - r[0]).abs() < 1e-15);
        assert!(r.iter().zip(rs.iter()).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn rejects_mixed_structures() {
        let g = ArrayGeometry::ura(1, 2);
        let f = Structure::Circulant.factor(g).unwrap();
        let covs = vec![
            CovarianceRep::Full(linalg::identity(2)),
            CovarianceRep::structured(f, Array1::ones(2)).unwrap(),
        ];
        let r = GmmModel::new(g, Structure::Full, Array1::ones(2), Array2::zeros((2, 2)), covs);
        assert!(r.is_err());
    }
}
