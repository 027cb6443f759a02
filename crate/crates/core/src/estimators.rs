//! Channel estimators.
//!
//! The GMM estimator combines per-component LMMSE estimates
//! `C_k (C_k + s I)^{-1} (y - mu_k) + mu_k` with posterior weights `p(k | y)`.
//! Everything that depends only on the model and the noise level is cached
//! per SNR grid point by [`precompute_filters`], so an estimate costs
//! `O(K N^2)` for dense models and `O(K N + N log N)` for circulant ones.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::cgmm::{normalize_log_joint, GmmModel, MixtureKernels};
use crate::channel_sim::{noise_var_from_snr, ArrayGeometry, ChannelVector, Dataset};
use crate::error::{check_len, Error, Result};
use crate::linalg::{self, Whitener};
use crate::rng::{complex_normal, stream};
use crate::speclin::{floored_spectrum, CovarianceRep};
use crate::C64;

/// Grid points closer than this (in dB) are considered equal.
const SNR_MATCH_TOL: f64 = 1e-9;

fn find_snr(grid: &[f64], snr_db: f64) -> Result<usize> {
    grid.iter()
        .position(|&s| (s - snr_db).abs() <= SNR_MATCH_TOL)
        .ok_or(Error::UnknownSnr(snr_db))
}

fn check_snrs(snrs_db: &[f64]) -> Result<()> {
    if let Some(s) = snrs_db.iter().find(|s| !s.is_finite()) {
        return Err(Error::config(format!("SNR grid point {s} is not finite")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Gain {
    /// `C (C + s I)^{-1}`.
    Dense(Array2<C64>),
    /// `c / (c + s)` per bin.
    Spectral(Array1<f64>),
}

#[derive(Debug, Clone)]
struct FilterBank {
    kernels: MixtureKernels,
    gains: Vec<Gain>,
}

impl FilterBank {
    fn new(model: &GmmModel, noise_var: f64) -> Result<Self> {
        let kernels = model.kernels(noise_var)?;
        let gains = model
            .covs()
            .iter()
            .enumerate()
            .map(|(k, cov)| match (cov, kernels.spectral_factor()) {
                (CovarianceRep::Structured { c, .. }, Some(_)) => {
                    let spec = floored_spectrum(c.view(), noise_var);
                    Gain::Spectral(Array1::from_shape_fn(c.len(), |i| (spec[i] - noise_var) / spec[i]))
                }
                _ => {
                    let crate::cgmm::DensityKernel::Dense(w) = kernels.kernel(k) else {
                        unreachable!("dense covariance with a spectral kernel")
                    };
                    Gain::Dense(dense_gain(w, noise_var))
                }
            })
            .collect();
        Ok(FilterBank { kernels, gains })
    }
}

/// `I - s (C + s I)^{-1}` from the whitening factor of `C + s I`.
fn dense_gain(w: &Whitener, noise_var: f64) -> Array2<C64> {
    let inv = linalg::conj_transpose(w.w.view()).dot(&w.w);
    let mut g = inv.mapv(|z| -z * noise_var);
    for d in g.diag_mut() {
        *d += 1.0;
    }
    g
}

/// Model plus per-SNR factorizations, built once and then read-only.
#[derive(Debug, Clone)]
pub struct PrecomputedFilters {
    model: GmmModel,
    snrs_db: Vec<f64>,
    banks: Vec<FilterBank>,
}

pub fn precompute_filters(model: &GmmModel, snrs_db: &[f64]) -> Result<PrecomputedFilters> {
    check_snrs(snrs_db)?;
    let banks = snrs_db
        .iter()
        .map(|&s| FilterBank::new(model, noise_var_from_snr(s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PrecomputedFilters {
        model: model.clone(),
        snrs_db: snrs_db.to_vec(),
        banks,
    })
}

impl PrecomputedFilters {
    pub fn model(&self) -> &GmmModel {
        &self.model
    }

    pub fn snrs_db(&self) -> &[f64] {
        &self.snrs_db
    }

    fn bank(&self, snr_db: f64) -> Result<&FilterBank> {
        Ok(&self.banks[find_snr(&self.snrs_db, snr_db)?])
    }

    /// `p(k | y)` at the given grid point.
    pub fn responsibilities(&self, y: ArrayView1<C64>, snr_db: f64) -> Result<Array1<f64>> {
        check_len(self.model.n(), y.len())?;
        let bank = self.bank(snr_db)?;
        let mut lj = bank.kernels.log_joint(y);
        normalize_log_joint(lj.view_mut());
        Ok(lj)
    }

    /// LMMSE estimate under component `k` alone.
    pub fn lmmse_component(&self, y: ArrayView1<C64>, k: usize, snr_db: f64) -> Result<ChannelVector> {
        check_len(self.model.n(), y.len())?;
        if k >= self.model.k() {
            return Err(Error::config(format!("component {k} out of range")));
        }
        let bank = self.bank(snr_db)?;
        let mu = self.model.mean(k);
        let d = &y - &mu;
        let est = match (&bank.gains[k], bank.kernels.spectral_factor()) {
            (Gain::Dense(g), _) => g.dot(&d) + mu,
            (Gain::Spectral(g), Some(f)) => f.adjoint((f.forward(d.view()) * g).view()) + mu,
            (Gain::Spectral(_), None) => unreachable!("spectral gain without a factor"),
        };
        ChannelVector::new(est)
    }

    /// Posterior-weighted combination of the component LMMSE estimates.
    pub fn gmm_estimate(&self, y: ArrayView1<C64>, snr_db: f64) -> Result<ChannelVector> {
        check_len(self.model.n(), y.len())?;
        let bank = self.bank(snr_db)?;
        let est = match (bank.kernels.spectral_factor(), bank.kernels.spectral_means()) {
            (Some(f), Some(smeans)) => {
                let ys = f.forward(y);
                f.adjoint(self.combine_spectral(bank, ys.view(), smeans).view())
            }
            _ => {
                let mut p = bank.kernels.log_joint(y);
                normalize_log_joint(p.view_mut());
                let mut out = Array1::<C64>::zeros(y.len());
                for (k, &pk) in p.iter().enumerate() {
                    if pk == 0.0 {
                        continue;
                    }
                    let Gain::Dense(g) = &bank.gains[k] else { unreachable!() };
                    let mu = self.model.mean(k);
                    let local = g.dot(&(&y - &mu)) + mu;
                    out.scaled_add(C64::new(pk, 0.0), &local);
                }
                out
            }
        };
        ChannelVector::new(est)
    }

    /// Estimate in the transformed domain of a circulant model.
    fn combine_spectral(&self, bank: &FilterBank, ys: ArrayView1<C64>, smeans: ArrayView2<C64>) -> Array1<C64> {
        let n = self.model.n() as f64;
        let mut p = bank.kernels.log_joint_spectral(ys, smeans, n);
        normalize_log_joint(p.view_mut());
        let mut z = Array1::<C64>::zeros(ys.len());
        for (k, &pk) in p.iter().enumerate() {
            if pk == 0.0 {
                continue;
            }
            let Gain::Spectral(g) = &bank.gains[k] else { unreachable!() };
            for (((zi, &y), &m), &gi) in z.iter_mut().zip(ys.iter()).zip(smeans.row(k).iter()).zip(g.iter()) {
                *zi += ((y - m) * gi + m) * pk;
            }
        }
        z
    }

    /// [`gmm_estimate`](Self::gmm_estimate) for every row of `ys`.
    pub fn gmm_estimate_rows(&self, ys: ArrayView2<C64>, snr_db: f64) -> Result<Array2<C64>> {
        check_len(self.model.n(), ys.ncols())?;
        let bank = self.bank(snr_db)?;
        let mut out = Array2::<C64>::zeros(ys.raw_dim());
        match (bank.kernels.spectral_factor(), bank.kernels.spectral_means()) {
            (Some(f), Some(smeans)) => {
                let transformed = f.forward_rows(ys);
                for (row, mut dst) in transformed.outer_iter().zip(out.outer_iter_mut()) {
                    let z = self.combine_spectral(bank, row, smeans);
                    dst.assign(&f.adjoint(z.view()));
                }
            }
            _ => {
                let mut p = bank.kernels.log_joint_rows(ys);
                for row in p.outer_iter_mut() {
                    normalize_log_joint(row);
                }
                for k in 0..self.model.k() {
                    let Gain::Dense(g) = &bank.gains[k] else { unreachable!() };
                    let mu = self.model.mean(k);
                    let mut local = (&ys - &mu).dot(&g.t());
                    local += &mu;
                    for ((mut dst, src), &pk) in out.outer_iter_mut().zip(local.outer_iter()).zip(p.column(k)) {
                        dst.scaled_add(C64::new(pk, 0.0), &src);
                    }
                }
            }
        }
        if out.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::config("estimate has non-finite entries"));
        }
        Ok(out)
    }
}

/// Least squares: the observation itself.
pub fn ls_estimate(y: ArrayView1<C64>) -> ChannelVector {
    ChannelVector(y.to_owned())
}

/// Single LMMSE filter built from the training sample covariance
/// `C_s = (1/M) sum h_m h_m^H`.
#[derive(Debug, Clone)]
pub struct SampleCovEstimator {
    cov: Array2<C64>,
    snrs_db: Vec<f64>,
    gains: Vec<Array2<C64>>,
}

pub fn fit_sample_cov(training: &Dataset) -> Result<SampleCovEstimator> {
    if training.is_empty() {
        return Err(Error::config("sample covariance needs at least one training sample"));
    }
    let m = training.len() as f64;
    let s = linalg::outer_sum(training.view()).mapv(|z| z / m);
    let sh = linalg::conj_transpose(s.view());
    Ok(SampleCovEstimator {
        cov: (s + sh).mapv(|z| z * 0.5),
        snrs_db: Vec::new(),
        gains: Vec::new(),
    })
}

impl SampleCovEstimator {
    pub fn covariance(&self) -> ArrayView2<'_, C64> {
        self.cov.view()
    }

    /// Caches the filter for every grid point.
    pub fn with_snr_grid(mut self, snrs_db: &[f64]) -> Result<Self> {
        check_snrs(snrs_db)?;
        self.gains = snrs_db
            .iter()
            .map(|&s| self.gain(noise_var_from_snr(s)))
            .collect::<Result<Vec<_>>>()?;
        self.snrs_db = snrs_db.to_vec();
        Ok(self)
    }

    /// `C_s (C_s + s I)^{-1}`, computed directly.
    pub fn gain(&self, noise_var: f64) -> Result<Array2<C64>> {
        let n = self.cov.nrows();
        if noise_var == f64::INFINITY {
            return Ok(Array2::zeros((n, n)));
        }
        if !(noise_var > 0.0) {
            return Err(Error::config("noise variance must be > 0"));
        }
        let a = linalg::add_diagonal(self.cov.view(), noise_var);
        Ok(dense_gain(&Whitener::new(a.view())?, noise_var))
    }

    pub fn estimate(&self, y: ArrayView1<C64>, noise_var: f64) -> Result<ChannelVector> {
        check_len(self.cov.nrows(), y.len())?;
        ChannelVector::new(self.gain(noise_var)?.dot(&y))
    }

    pub fn estimate_at(&self, y: ArrayView1<C64>, snr_db: f64) -> Result<ChannelVector> {
        check_len(self.cov.nrows(), y.len())?;
        ChannelVector::new(self.gains[find_snr(&self.snrs_db, snr_db)?].dot(&y))
    }

    pub fn estimate_rows(&self, ys: ArrayView2<C64>, snr_db: f64) -> Result<Array2<C64>> {
        check_len(self.cov.nrows(), ys.ncols())?;
        Ok(ys.dot(&self.gains[find_snr(&self.snrs_db, snr_db)?].t()))
    }
}

/// Importance-sampling estimate of `E[h | y]` with its uncertainty.
#[derive(Debug, Clone)]
pub struct CmeEstimate {
    pub estimate: ChannelVector,
    /// Root of the summed per-entry variances of the estimate.
    pub std_error: f64,
    /// Kish effective sample size of the weights.
    pub ess: f64,
}

/// Estimates below this effective sample size are rejected.
pub const MIN_ESS: f64 = 50.0;

/// Draws from a mixture prior that can be reused across observations.
#[derive(Debug, Clone)]
pub struct PriorSamples {
    samples: Array2<C64>,
}

impl PriorSamples {
    pub fn draw(model: &GmmModel, count: usize, seed: u64) -> Result<Self> {
        let n = model.n();
        let factors = model
            .covs()
            .iter()
            .map(|c| prior_factor(&c.materialize()))
            .collect::<Result<Vec<_>>>()?;
        let cumulative: Vec<f64> = model
            .weights()
            .iter()
            .scan(0.0, |acc, &w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let mut rng = stream(seed, 0);
        let mut samples = Array2::<C64>::zeros((count, n));
        let mut z = Array1::<C64>::zeros(n);
        for mut row in samples.outer_iter_mut() {
            let u = rng.random::<f64>() * cumulative[cumulative.len() - 1];
            let k = cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1);
            z.mapv_inplace(|_| complex_normal(&mut rng));
            row.assign(&(factors[k].dot(&z) + model.mean(k)));
        }
        Ok(PriorSamples { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    /// Self-normalized estimate with weights `exp(-|y - h_s|^2 / noise_var)`.
    pub fn cme(&self, y: ArrayView1<C64>, noise_var: f64) -> Result<CmeEstimate> {
        let n = self.samples.ncols();
        check_len(n, y.len())?;
        if !(noise_var > 0.0) {
            return Err(Error::config("noise variance must be > 0"));
        }
        let y = y.to_vec();
        let flat = self.samples.as_slice().expect("samples are contiguous");
        let dist = |h: &[C64], c: &[C64]| -> f64 { h.iter().zip(c).map(|(a, b)| (a - b).norm_sqr()).sum() };
        let mut w: Vec<f64> = flat.chunks_exact(n).map(|h| -dist(h, &y) / noise_var).collect();
        let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        let mut acc = vec![C64::new(0.0, 0.0); n];
        for (wi, h) in w.iter_mut().zip(flat.chunks_exact(n)) {
            *wi = (*wi - top).exp();
            sum += *wi;
            sum_sq += *wi * *wi;
            for (a, z) in acc.iter_mut().zip(h) {
                *a += z * *wi;
            }
        }
        let ess = sum * sum / sum_sq;
        if !(ess >= MIN_ESS) {
            return Err(Error::Unreliable(ess));
        }
        acc.iter_mut().for_each(|a| *a /= sum);
        let var: f64 = w
            .iter()
            .zip(flat.chunks_exact(n))
            .map(|(&wi, h)| (wi / sum).powi(2) * dist(h, &acc))
            .sum();
        Ok(CmeEstimate {
            estimate: ChannelVector::new(Array1::from(acc))?,
            std_error: var.sqrt(),
            ess,
        })
    }
}

/// A matrix `L` with `L L^H = C` for a PSD `C`, tolerating singular `C`.
fn prior_factor(c: &Array2<C64>) -> Result<Array2<C64>> {
    let scale = c.diag().iter().map(|z| z.re).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    match linalg::cholesky(c.view()) {
        Ok(l) => Ok(l),
        Err(_) => linalg::cholesky(linalg::add_diagonal(c.view(), 1e-12 * scale).view()),
    }
}

/// Monte-Carlo conditional mean under a mixture prior with `count` prior draws.
pub fn brute_force_cme(
    y: ArrayView1<C64>,
    model: &GmmModel,
    noise_var: f64,
    count: usize,
    seed: u64,
) -> Result<CmeEstimate> {
    PriorSamples::draw(model, count, seed)?.cme(y, noise_var)
}

/// Oversampled 2-D DFT dictionary with unit-norm atoms.
#[derive(Debug, Clone)]
pub struct Dictionary {
    atoms: Array2<C64>,
    oversampling_v: usize,
    oversampling_h: usize,
}

/// Splits a total oversampling factor across the array axes. Axes of length
/// one are never oversampled.
fn split_oversampling(geometry: &ArrayGeometry, oversampling: usize) -> (usize, usize) {
    match (geometry.n_v > 1, geometry.n_h > 1) {
        (true, true) => {
            let oh = (1..=oversampling)
                .find(|d| oversampling % d == 0 && d * d >= oversampling)
                .unwrap_or(oversampling);
            (oversampling / oh, oh)
        }
        (true, false) => (oversampling, 1),
        (false, true) => (1, oversampling),
        (false, false) => (1, 1),
    }
}

fn dft_atoms(n: usize, grid: usize) -> Array2<C64> {
    let scale = 1.0 / (n as f64).sqrt();
    Array2::from_shape_fn((n, grid), |(i, g)| {
        let phase = 2.0 * std::f64::consts::PI * ((i * g) % grid) as f64 / grid as f64;
        C64::from_polar(scale, phase)
    })
}

pub fn build_dictionary(geometry: &ArrayGeometry, oversampling: usize) -> Result<Dictionary> {
    if oversampling == 0 {
        return Err(Error::config("oversampling must be >= 1"));
    }
    let (ov, oh) = split_oversampling(geometry, oversampling);
    let av = dft_atoms(geometry.n_v, ov * geometry.n_v);
    let ah = dft_atoms(geometry.n_h, oh * geometry.n_h);
    let (gv, gh) = (av.ncols(), ah.ncols());
    let atoms = Array2::from_shape_fn((geometry.n(), gv * gh), |(row, col)| {
        let (v, h) = (row / geometry.n_h, row % geometry.n_h);
        av[[v, col / gh]] * ah[[h, col % gh]]
    });
    Ok(Dictionary {
        atoms,
        oversampling_v: ov,
        oversampling_h: oh,
    })
}

impl Dictionary {
    /// `N x L` matrix of atoms.
    pub fn atoms(&self) -> ArrayView2<'_, C64> {
        self.atoms.view()
    }

    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }

    pub fn n(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn oversampling(&self) -> (usize, usize) {
        (self.oversampling_v, self.oversampling_h)
    }
}

/// Default sparsity search range.
pub fn default_max_sparsity(n: usize) -> usize {
    (n / 2).max(1)
}

/// OMP estimates after each of the first `max_sparsity` atom selections.
/// Each estimate is the least-squares fit of `y` on the selected atoms, kept
/// as a projection onto an incrementally orthonormalized basis. Atoms that
/// are linearly dependent on the support leave the fit unchanged.
pub fn omp_path(y: ArrayView1<C64>, dict: &Dictionary, max_sparsity: usize) -> Result<Vec<Array1<C64>>> {
    check_len(dict.n(), y.len())?;
    if max_sparsity > dict.len() {
        return Err(Error::config(format!(
            "max sparsity {max_sparsity} exceeds dictionary size {}",
            dict.len()
        )));
    }
    let d = dict.atoms();
    let dh = linalg::conj_transpose(d);
    let mut basis: Vec<Array1<C64>> = Vec::with_capacity(max_sparsity);
    let mut selected = vec![false; dict.len()];
    let mut fit = Array1::<C64>::zeros(y.len());
    let mut path = Vec::with_capacity(max_sparsity);
    for _ in 0..max_sparsity {
        let residual = &y - &fit;
        let corr = dh.dot(&residual);
        let mut best = (f64::NEG_INFINITY, 0);
        for (l, c) in corr.iter().enumerate() {
            let v = c.norm_sqr();
            if !selected[l] && v > best.0 {
                best = (v, l);
            }
        }
        selected[best.1] = true;
        let mut u = d.column(best.1).to_owned();
        for _ in 0..2 {
            for b in &basis {
                let proj = linalg::inner(b.view(), u.view());
                u.scaled_add(-proj, b);
            }
        }
        let norm = linalg::norm_sqr(u.view()).sqrt();
        if norm > 1e-10 {
            u.mapv_inplace(|z| z / norm);
            let coef = linalg::inner(u.view(), residual.view());
            fit.scaled_add(coef, &u);
            basis.push(u);
        }
        path.push(fit.clone());
    }
    Ok(path)
}

/// OMP with a fixed number of selected atoms.
pub fn omp_fixed(y: ArrayView1<C64>, dict: &Dictionary, sparsity: usize) -> Result<ChannelVector> {
    if sparsity == 0 {
        return Ok(ChannelVector(Array1::zeros(y.len())));
    }
    let path = omp_path(y, dict, sparsity)?;
    ChannelVector::new(path.into_iter().last().expect("nonempty path"))
}

/// OMP whose sparsity is chosen with knowledge of the true channel: the
/// estimate along the path closest to `true_h`, smallest sparsity on ties.
pub fn omp_genie(
    y: ArrayView1<C64>,
    dict: &Dictionary,
    true_h: ArrayView1<C64>,
    max_sparsity: usize,
) -> Result<ChannelVector> {
    check_len(y.len(), true_h.len())?;
    if max_sparsity == 0 {
        return Err(Error::config("max sparsity must be >= 1"));
    }
    let mut path = omp_path(y, dict, max_sparsity)?;
    let err = |h: &Array1<C64>| -> f64 { h.iter().zip(true_h.iter()).map(|(a, b)| (a - b).norm_sqr()).sum() };
    let mut best = 0;
    for (s, h) in path.iter().enumerate().skip(1) {
        if err(h) < err(&path[best]) {
            best = s;
        }
    }
    ChannelVector::new(path.swap_remove(best))
}

/// Genie OMP on every row of `ys` against the matching row of `truth`.
pub fn omp_genie_rows(
    ys: ArrayView2<C64>,
    dict: &Dictionary,
    truth: ArrayView2<C64>,
    max_sparsity: usize,
) -> Result<Array2<C64>> {
    if ys.dim() != truth.dim() {
        return Err(Error::DimensionMismatch {
            expected: truth.nrows(),
            actual: ys.nrows(),
        });
    }
    let mut out = Array2::zeros(ys.raw_dim());
    for ((y, h), mut dst) in ys.outer_iter().zip(truth.outer_iter()).zip(out.axis_iter_mut(Axis(0))) {
        dst.assign(&omp_genie(y, dict, h, max_sparsity)?.0);
    }
    Ok(out)
}
