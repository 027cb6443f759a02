//! Expectation-maximization for complex Gaussian mixtures.
//!
//! The E-step evaluates posteriors under the current model on noiseless
//! training channels. The M-step sets weights to mean responsibilities, means
//! to responsibility-weighted averages and covariances to weighted sample
//! covariances plus `reg_eps * I`. For structured models the weighted
//! covariance is projected onto the family; the projection only needs the
//! atom inner products `diag(Q S Q^H)`, which are accumulated directly from the
//! transformed samples `Q x_m` without forming `S`.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GmmModel, MixtureKernels, Structure};
use crate::channel_sim::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{derive_seed, stream};
use crate::speclin::{CovarianceRep, StructureKind, StructuredFactor};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMethod {
    /// k-means++ seeding plus a few Lloyd rounds on the stacked real and
    /// imaginary parts.
    KmeansPlusPlus,
    /// Uniformly random responsibilities followed by one M-step.
    RandomResponsibilities,
}

/// How structured M-steps turn weighted statistics into a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructuredUpdate {
    /// Frobenius projection of the weighted sample covariance.
    Projection,
    /// Likelihood-increasing spectrum refinement, warm-started from the
    /// previous iteration. Identical to the projection for circulant models.
    Likelihood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop once the per-sample log-likelihood improves by less than this
    /// fraction.
    pub rel_tol: f64,
    /// Diagonal loading added to every covariance in the M-step.
    pub reg_eps: f64,
    pub init: InitMethod,
    pub seed: u64,
    /// Components whose weight falls below this are reinitialized.
    pub min_weight: f64,
    /// Pin all means to zero.
    pub zero_mean: bool,
    pub structured_update: StructuredUpdate,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iters: 500,
            rel_tol: 1e-6,
            reg_eps: 1e-6,
            init: InitMethod::KmeansPlusPlus,
            seed: 0,
            min_weight: 1e-6,
            zero_mean: false,
            structured_update: StructuredUpdate::Likelihood,
        }
    }
}

impl EmConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be >= 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::config("rel_tol must be > 0"));
        }
        if !(self.reg_eps >= 0.0) {
            return Err(Error::config("reg_eps must be >= 0"));
        }
        if !(self.min_weight >= 0.0 && self.min_weight * k as f64 <= 1.0 - 1e-12) {
            return Err(Error::config("min_weight must lie in [0, 1/K)"));
        }
        Ok(())
    }
}

/// Inner spectrum updates per Toeplitz M-step.
const REFINE_ITERS: usize = 30;
const REFINE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Completed M-steps.
    pub iterations: usize,
    pub converged: bool,
    /// Mean per-sample log-likelihood before the first M-step and after each
    /// one.
    pub log_likelihood_trace: Vec<f64>,
    /// Number of component reinitializations after collapse.
    pub reinitialized: usize,
}

impl FitReport {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood_trace.last().expect("trace is never empty")
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: GmmModel,
    pub report: FitReport,
}

/// Training data plus the transformed copy the structured paths need.
struct Workspace<'a> {
    x: ArrayView2<'a, C64>,
    factor: Option<Arc<StructuredFactor>>,
    /// `Q x_m` per row for structured models.
    xs: Option<Array2<C64>>,
}

struct EStep {
    resp: Array2<f64>,
    /// Per-sample log-likelihood.
    ll: Array1<f64>,
}

impl EStep {
    fn mean_ll(&self) -> f64 {
        self.ll.sum() / self.ll.len() as f64
    }
}

/// Fits a `k`-component mixture to the rows of `data.samples`.
pub fn em_fit(data: &Dataset, k: usize, structure: Structure, config: &EmConfig) -> Result<FitOutcome> {
    config.validate(k)?;
    let m = data.len();
    if k == 0 {
        return Err(Error::config("K must be >= 1"));
    }
    if m < k {
        return Err(Error::config(format!("need at least K = {k} samples, got {m}")));
    }
    if data.n() != data.geometry.n() {
        return Err(Error::DimensionMismatch {
            expected: data.geometry.n(),
            actual: data.n(),
        });
    }
    let mut fitter = Fitter::new(data, k, structure, config);

    let mut model = fitter.initialize()?;
    let mut step = fitter.e_step(&model)?;
    let mut trace = vec![step.mean_ll()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        model = fitter.m_step(&step)?;
        iterations += 1;
        let next = fitter.e_step(&model)?;
        let (prev, cur) = (step.mean_ll(), next.mean_ll());
        trace.push(cur);
        step = next;
        if (cur - prev).abs() <= config.rel_tol * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Ok(FitOutcome {
        model,
        report: FitReport {
            iterations,
            converged,
            log_likelihood_trace: trace,
            reinitialized: fitter.reinitialized,
        },
    })
}

struct Fitter<'a> {
    ws: Workspace<'a>,
    data: &'a Dataset,
    k: usize,
    structure: Structure,
    config: &'a EmConfig,
    /// Last unregularized Toeplitz spectra, used to warm-start the projection.
    warm: Vec<Option<Array1<f64>>>,
    reinitialized: usize,
}

impl<'a> Fitter<'a> {
    fn new(data: &'a Dataset, k: usize, structure: Structure, config: &'a EmConfig) -> Self {
        let factor = structure.factor(data.geometry);
        let xs = factor.as_ref().map(|f| f.forward_rows(data.view()));
        Fitter {
            ws: Workspace {
                x: data.view(),
                factor,
                xs,
            },
            data,
            k,
            structure,
            config,
            warm: vec![None; k],
            reinitialized: 0,
        }
    }

    fn m(&self) -> usize {
        self.ws.x.nrows()
    }

    fn n(&self) -> usize {
        self.ws.x.ncols()
    }

    fn e_step(&self, model: &GmmModel) -> Result<EStep> {
        let kernels = MixtureKernels::new(model, 0.0)?;
        let mut lj = match (&self.ws.factor, &self.ws.xs, kernels.spectral_means()) {
            (Some(f), Some(xs), Some(smeans)) if f.kind() == StructureKind::BlockCirculant => {
                let n = self.n() as f64;
                let mut out = Array2::zeros((self.m(), self.k));
                for (row, mut dst) in xs.outer_iter().zip(out.outer_iter_mut()) {
                    dst.assign(&kernels.log_joint_spectral(row, smeans, n));
                }
                out
            }
            _ => kernels.log_joint_rows(self.ws.x),
        };
        let mut ll = Array1::zeros(self.m());
        for (row, l) in lj.outer_iter_mut().zip(ll.iter_mut()) {
            *l = super::normalize_log_joint(row);
        }
        if ll.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite {
                pivot: 0,
                value: f64::NAN,
            });
        }
        Ok(EStep { resp: lj, ll })
    }

    fn weighted_means(&self, resp: ArrayView2<f64>, nk: &Array1<f64>) -> Array2<C64> {
        if self.config.zero_mean {
            return Array2::zeros((self.k, self.n()));
        }
        let rc = resp.mapv(|r| C64::new(r, 0.0));
        let mut means = rc.t().dot(&self.ws.x);
        for (mut row, &w) in means.outer_iter_mut().zip(nk.iter()) {
            if w > 0.0 {
                row.mapv_inplace(|z| z / w);
            }
        }
        means
    }

    /// `sum_m w_m (x_m - mu)(x_m - mu)^H / total`.
    fn weighted_outer(
        &self,
        weights: ndarray::ArrayView1<f64>,
        total: f64,
        mean: ndarray::ArrayView1<C64>,
    ) -> Array2<C64> {
        let mut d = &self.ws.x - &mean;
        for (mut row, &w) in d.outer_iter_mut().zip(weights.iter()) {
            let s = w.max(0.0).sqrt();
            row.mapv_inplace(|z| z * s);
        }
        hermitize(linalg::outer_sum(d.view()).mapv(|z| z / total))
    }

    /// Weighted covariance of component `k` before regularization, together
    /// with its trace.
    fn component_cov(
        &mut self,
        k: usize,
        weights: ndarray::ArrayView1<f64>,
        total: f64,
        mean: ndarray::ArrayView1<C64>,
    ) -> Result<(CovarianceRep, f64)> {
        let reg = self.config.reg_eps;
        match (&self.ws.factor, &self.ws.xs) {
            (None, _) => {
                let s = self.weighted_outer(weights, total, mean);
                let trace: f64 = s.diag().iter().map(|z| z.re).sum();
                Ok((CovarianceRep::Full(linalg::add_diagonal(s.view(), reg)), trace))
            }
            (Some(f), Some(xs)) => {
                let f = f.clone();
                let smean = f.forward(mean);
                let mut b = Array1::<f64>::zeros(f.rows());
                for (row, &w) in xs.outer_iter().zip(weights.iter()) {
                    if w == 0.0 {
                        continue;
                    }
                    for ((bp, x), mu) in b.iter_mut().zip(row.iter()).zip(smean.iter()) {
                        *bp += w * (x - mu).norm_sqr();
                    }
                }
                b.mapv_inplace(|v| v / total);
                let c = match (f.kind(), self.config.structured_update) {
                    (StructureKind::BlockToeplitz, StructuredUpdate::Likelihood) => {
                        let start = match &self.warm[k] {
                            Some(c) => c.clone(),
                            None => f.spectrum_guess(b.view()),
                        };
                        let s = self.weighted_outer(weights, total, mean);
                        f.refine_spectrum(s.view(), start.view(), reg, REFINE_ITERS, REFINE_TOL)?
                    }
                    _ => f.solve_nonneg(b.view(), self.warm[k].as_ref().map(|w| w.view())),
                };
                let trace = c.sum() * f.n() as f64 / f.rows() as f64;
                self.warm[k] = Some(c.clone());
                Ok((CovarianceRep::structured(f, c + reg)?, trace))
            }
            (Some(_), None) => unreachable!("structured workspace without transformed data"),
        }
    }

    fn m_step(&mut self, step: &EStep) -> Result<GmmModel> {
        let resp = step.resp.view();
        let m = self.m() as f64;
        let nk = resp.sum_axis(Axis(0));
        let means = self.weighted_means(resp, &nk);
        let mut weights = nk.mapv(|v| v / m);
        let mut covs = Vec::with_capacity(self.k);
        let mut collapsed = Vec::new();
        for k in 0..self.k {
            if weights[k] < self.config.min_weight || !(nk[k] > 0.0) {
                collapsed.push(k);
                covs.push(None);
                continue;
            }
            let (cov, trace) = self.component_cov(k, resp.column(k), nk[k], means.row(k))?;
            if trace < 10.0 * self.config.reg_eps {
                collapsed.push(k);
                covs.push(None);
            } else {
                covs.push(Some(cov));
            }
        }
        let mut means = means;
        if !collapsed.is_empty() {
            // reseed from the worst-explained samples, lowest index first on ties
            let mut order: Vec<usize> = (0..self.ws.x.nrows()).collect();
            order.sort_by(|&a, &b| step.ll[a].total_cmp(&step.ll[b]).then(a.cmp(&b)));
            let (_, global_cov) = self.global_moments()?;
            for (&k, &sample) in collapsed.iter().zip(order.iter()) {
                if self.config.zero_mean {
                    means.row_mut(k).fill(C64::new(0.0, 0.0));
                } else {
                    means.row_mut(k).assign(&self.ws.x.row(sample));
                }
                covs[k] = Some(global_cov.clone());
                weights[k] = 1.0 / self.k as f64;
                self.warm[k] = None;
                self.reinitialized += 1;
            }
        }
        let covs = covs.into_iter().map(|c| c.expect("every component set")).collect();
        GmmModel::new(self.data.geometry, self.structure, weights, means, covs)
    }

    /// Global mean (zero when means are pinned) and regularized, structure
    /// projected covariance of the training set.
    fn global_moments(&self) -> Result<(Array1<C64>, CovarianceRep)> {
        let m = self.m() as f64;
        let mean = if self.config.zero_mean {
            Array1::zeros(self.n())
        } else {
            self.ws.x.sum_axis(Axis(0)).mapv(|z| z / m)
        };
        let centered = &self.ws.x - &mean;
        let s = hermitize(linalg::outer_sum(centered.view()).mapv(|z| z / m));
        let cov = match &self.ws.factor {
            None => CovarianceRep::Full(linalg::add_diagonal(s.view(), self.config.reg_eps)),
            Some(f) => {
                let c = match (f.kind(), self.config.structured_update) {
                    (StructureKind::BlockToeplitz, StructuredUpdate::Likelihood) => {
                        let start = f.spectrum_guess(f.atom_inner_products(s.view()).view());
                        f.refine_spectrum(s.view(), start.view(), self.config.reg_eps, REFINE_ITERS, REFINE_TOL)?
                    }
                    _ => f.project(s.view())?,
                };
                CovarianceRep::structured(f.clone(), c + self.config.reg_eps)?
            }
        };
        Ok((mean, cov))
    }

    fn initialize(&mut self) -> Result<GmmModel> {
        let mut rng = stream(derive_seed(self.config.seed, "em-init"), 0);
        match self.config.init {
            InitMethod::KmeansPlusPlus if !self.config.zero_mean => {
                let centroids = kmeans(self.ws.x, self.k, &mut rng).0;
                let (_, cov) = self.global_moments()?;
                let weights = Array1::from_elem(self.k, 1.0 / self.k as f64);
                let covs = vec![cov; self.k];
                GmmModel::new(self.data.geometry, self.structure, weights, centroids, covs)
            }
            InitMethod::KmeansPlusPlus => {
                // zero means would make every component identical under a
                // shared covariance, so start from the hard cluster labels
                let labels = kmeans(self.ws.x, self.k, &mut rng).1;
                let mut resp = Array2::zeros((self.m(), self.k));
                for (i, &l) in labels.iter().enumerate() {
                    resp[[i, l]] = 1.0;
                }
                self.m_step_from(resp)
            }
            InitMethod::RandomResponsibilities => {
                let mut resp = Array2::from_shape_fn((self.m(), self.k), |_| rng.random::<f64>());
                for mut row in resp.outer_iter_mut() {
                    let s = row.sum();
                    row.mapv_inplace(|v| v / s);
                }
                self.m_step_from(resp)
            }
        }
    }

    fn m_step_from(&mut self, resp: Array2<f64>) -> Result<GmmModel> {
        let ll = Array1::zeros(self.m());
        self.m_step(&EStep { resp, ll })
    }
}

fn hermitize(s: Array2<C64>) -> Array2<C64> {
    let sh = linalg::conj_transpose(s.view());
    (s + sh).mapv(|z| z * 0.5)
}

fn sq_dist(a: ndarray::ArrayView1<C64>, b: ndarray::ArrayView1<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum()
}

const LLOYD_ROUNDS: usize = 10;

/// k-means++ seeding and Lloyd refinement. Distances in `C^N` equal those of
/// the stacked real/imaginary vectors. Returns centroids and hard labels.
fn kmeans<R: Rng>(x: ArrayView2<C64>, k: usize, rng: &mut R) -> (Array2<C64>, Vec<usize>) {
    let m = x.nrows();
    let mut centroids = Array2::<C64>::zeros((k, x.ncols()));
    let first = rng.random_range(0..m);
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = x.outer_iter().map(|r| sq_dist(r, x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = m - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..m)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (d, row) in d2.iter_mut().zip(x.outer_iter()) {
            *d = d.min(sq_dist(row, x.row(pick)));
        }
    }

    let mut labels = vec![0usize; m];
    for round in 0..=LLOYD_ROUNDS {
        let mut changed = false;
        for (i, row) in x.outer_iter().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for c in 0..k {
                let d = sq_dist(row, centroids.row(c));
                if d < best.0 {
                    best = (d, c);
                }
            }
            if labels[i] != best.1 {
                labels[i] = best.1;
                changed = true;
            }
        }
        if round == LLOYD_ROUNDS || (round > 0 && !changed) {
            break;
        }
        let mut sums = Array2::<C64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (row, &l) in x.outer_iter().zip(&labels) {
            sums.row_mut(l).scaled_add(C64::new(1.0, 0.0), &row);
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                centroids.row_mut(c).assign(&sums.row(c).mapv(|z| z * inv));
            }
        }
    }
    (centroids, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgmm::log_likelihood;
    use crate::channel_sim::ArrayGeometry;
    use crate::rng::complex_normal;

    fn dataset(samples: Array2<C64>, geometry: ArrayGeometry) -> Dataset {
        Dataset {
            geometry,
            scenario_id: "test".into(),
            seed: 0,
            samples,
            normalization_scale: 1.0,
        }
    }

    /// Samples from a two-component mixture with means `+-mu` along the first
    /// coordinate and identity covariance.
    fn two_blobs(m: usize, weight: f64, sep: f64, seed: u64) -> Array2<C64> {
        let mut rng = stream(seed, 0);
        let mut x = Array2::zeros((m, 2));
        for mut row in x.outer_iter_mut() {
            let shift = if rng.random::<f64>() < weight { sep / 2.0 } else { -sep / 2.0 };
            row[0] = complex_normal(&mut rng) + shift;
            row[1] = complex_normal(&mut rng);
        }
        x
    }

    #[test]
    fn single_component_fixed_point() {
        let g = ArrayGeometry::ura(1, 3);
        let mut rng = stream(1, 0);
        let x = Array2::from_shape_fn((50, 3), |_| complex_normal(&mut rng) + C64::new(0.5, 0.0));
        let ds = dataset(x.clone(), g);
        let cfg = EmConfig {
            max_iters: 1,
            ..EmConfig::default()
        };
        let out = em_fit(&ds, 1, Structure::Full, &cfg).unwrap();
        let mean = x.sum_axis(Axis(0)).mapv(|z| z / 50.0);
        for (a, b) in out.model.mean(0).iter().zip(mean.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        let centered = &x - &mean;
        let s = linalg::add_diagonal(
            linalg::outer_sum(centered.view()).mapv(|z| z / 50.0).view(),
            cfg.reg_eps,
        );
        let CovarianceRep::Full(c) = &out.model.covs()[0] else { panic!() };
        for (a, b) in c.iter().zip(s.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        assert_eq!(out.model.weights()[0], 1.0);
    }

    #[test]
    fn recovers_separated_mixture() {
        // distance 10 sigma along one coordinate
        for seed in 0..10 {
            let x = two_blobs(5000, 0.3, 10.0 * std::f64::consts::FRAC_1_SQRT_2, 100 + seed);
            let ds = dataset(x, ArrayGeometry::ura(1, 2));
            let cfg = EmConfig {
                seed,
                ..EmConfig::default()
            };
            let out = em_fit(&ds, 2, Structure::Full, &cfg).unwrap();
            let m = &out.model;
            let hi = if m.mean(0)[0].re > m.mean(1)[0].re { 0 } else { 1 };
            let lo = 1 - hi;
            let half = 5.0 * std::f64::consts::FRAC_1_SQRT_2;
            assert!((m.weights()[hi] - 0.3).abs() < 0.03, "seed {seed}");
            assert!((m.weights()[lo] - 0.7).abs() < 0.03);
            assert!((m.mean(hi)[0] - C64::new(half, 0.0)).norm() < 0.1);
            assert!((m.mean(lo)[0] - C64::new(-half, 0.0)).norm() < 0.1);
            assert!(m.mean(hi)[1].norm() < 0.1);
        }
    }

    #[test]
    fn full_em_is_monotone() {
        let g = ArrayGeometry::ura(2, 2);
        let ds = crate::channel_sim::generate_dataset(
            &crate::channel_sim::ScenarioConfig::env_a(),
            &g,
            1500,
            4,
        )
        .unwrap();
        let cfg = EmConfig {
            max_iters: 60,
            rel_tol: 1e-12,
            ..EmConfig::default()
        };
        let out = em_fit(&ds, 3, Structure::Full, &cfg).unwrap();
        assert_eq!(out.report.reinitialized, 0);
        for w in out.report.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
        let ll = log_likelihood(&out.model, ds.view()).unwrap() / ds.len() as f64;
        assert!((ll - out.report.final_log_likelihood()).abs() < 1e-9);
    }

    #[test]
    fn structured_fits_stay_in_family() {
        let g = ArrayGeometry::ura(2, 4);
        let ds = crate::channel_sim::generate_dataset(
            &crate::channel_sim::ScenarioConfig::env_b(),
            &g,
            800,
            5,
        )
        .unwrap();
        for structure in [Structure::Toeplitz, Structure::Circulant] {
            let cfg = EmConfig {
                max_iters: 20,
                ..EmConfig::default()
            };
            let out = em_fit(&ds, 4, structure, &cfg).unwrap();
            assert_eq!(out.model.structure(), structure);
            for cov in out.model.covs() {
                let CovarianceRep::Structured { c, .. } = cov else { panic!() };
                assert!(c.iter().all(|&v| v >= cfg.reg_eps));
            }
            assert!((out.model.weights().sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn structured_m_step_matches_dense_projection() {
        // accumulating in the transformed domain must equal projecting the
        // dense weighted covariance
        let g = ArrayGeometry::ura(2, 2);
        let ds = crate::channel_sim::generate_dataset(
            &crate::channel_sim::ScenarioConfig::env_a(),
            &g,
            300,
            6,
        )
        .unwrap();
        let cfg = EmConfig {
            structured_update: StructuredUpdate::Projection,
            ..EmConfig::default()
        };
        let mut rng = stream(3, 0);
        let mut resp = Array2::from_shape_fn((300, 2), |_| rng.random::<f64>());
        for mut row in resp.outer_iter_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        let full = Fitter::new(&ds, 2, Structure::Full, &cfg)
            .m_step_from(resp.clone())
            .unwrap();
        for structure in [Structure::Circulant, Structure::Toeplitz] {
            let st = Fitter::new(&ds, 2, structure, &cfg)
                .m_step_from(resp.clone())
                .unwrap();
            let f = structure.factor(g).unwrap();
            for k in 0..2 {
                let CovarianceRep::Full(s) = &full.covs()[k] else { panic!() };
                let s = linalg::add_diagonal(s.view(), -cfg.reg_eps);
                let c = f.project(s.view()).unwrap() + cfg.reg_eps;
                let want = f.materialize(c.view());
                let got = st.covs()[k].materialize();
                let err = want
                    .iter()
                    .zip(got.iter())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                assert!(err < 1e-8, "{structure}: {err}");
            }
            assert_eq!(st.means(), full.means());
        }
    }

    #[test]
    fn toeplitz_likelihood_update_refines_weighted_covariance() {
        let g = ArrayGeometry::ura(2, 2);
        let ds = crate::channel_sim::generate_dataset(
            &crate::channel_sim::ScenarioConfig::env_b(),
            &g,
            200,
            7,
        )
        .unwrap();
        let cfg = EmConfig {
            zero_mean: true,
            ..EmConfig::default()
        };
        let resp = Array2::from_elem((200, 1), 1.0);
        let model = Fitter::new(&ds, 1, Structure::Toeplitz, &cfg).m_step_from(resp).unwrap();
        let f = Structure::Toeplitz.factor(g).unwrap();
        let s = linalg::outer_sum(ds.view()).mapv(|z| z / 200.0);
        let start = f.spectrum_guess(f.atom_inner_products(s.view()).view());
        let c = f
            .refine_spectrum(s.view(), start.view(), cfg.reg_eps, REFINE_ITERS, REFINE_TOL)
            .unwrap()
            + cfg.reg_eps;
        let CovarianceRep::Structured { c: got, .. } = &model.covs()[0] else { panic!() };
        assert!(got.iter().zip(c.iter()).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = ArrayGeometry::ura(1, 2);
        let ds = dataset(Array2::zeros((3, 2)), g);
        assert!(em_fit(&ds, 4, Structure::Full, &EmConfig::default()).is_err());
        let bad = EmConfig {
            min_weight: 0.6,
            ..EmConfig::default()
        };
        assert!(em_fit(&ds, 2, Structure::Full, &bad).is_err());
    }

    #[test]
    fn fits_are_deterministic() {
        let g = ArrayGeometry::ura(2, 2);
        let ds = crate::channel_sim::generate_dataset(
            &crate::channel_sim::ScenarioConfig::env_a(),
            &g,
            400,
            9,
        )
        .unwrap();
        let cfg = EmConfig {
            max_iters: 10,
            ..EmConfig::default()
        };
        let a = em_fit(&ds, 3, Structure::Full, &cfg).unwrap();
        let b = em_fit(&ds, 3, Structure::Full, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.report, b.report);
    }
}
