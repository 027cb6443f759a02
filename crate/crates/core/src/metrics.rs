//! Estimation quality measures. Sums run over samples in index order so
//! results are reproducible bit for bit.

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::cgmm::{normalize_log_joint, GmmModel};
use crate::error::{check_len, Error, Result};
use crate::C64;

/// Average responsibility above which a component counts as representative.
pub const SUPPORT_THRESHOLD: f64 = 1e-3;

fn check_pair(truth: ArrayView2<C64>, estimates: ArrayView2<C64>) -> Result<()> {
    if truth.nrows() == 0 {
        return Err(Error::config("metrics need at least one sample"));
    }
    check_len(truth.nrows(), estimates.nrows())?;
    check_len(truth.ncols(), estimates.ncols())
}

/// `(1 / (N T)) sum_t |h_t - hhat_t|^2` over the rows.
pub fn nmse(truth: ArrayView2<C64>, estimates: ArrayView2<C64>) -> Result<f64> {
    check_pair(truth, estimates)?;
    let total: f64 = truth
        .iter()
        .zip(estimates.iter())
        .map(|(h, e)| (h - e).norm_sqr())
        .sum();
    Ok(total / truth.len() as f64)
}

/// `log2(1 + |hhat^H h|^2 / (noise_var |hhat|^2))`; zero for a zero estimate.
pub fn matched_filter_rate(h: ArrayView1<C64>, estimate: ArrayView1<C64>, noise_var: f64) -> f64 {
    let energy: f64 = estimate.iter().map(|z| z.norm_sqr()).sum();
    if energy == 0.0 {
        return 0.0;
    }
    let gain: C64 = estimate.iter().zip(h.iter()).map(|(e, x)| e.conj() * x).sum();
    (1.0 + gain.norm_sqr() / (noise_var * energy)).log2()
}

/// Mean matched-filter rate in bits per channel use.
pub fn spectral_efficiency(truth: ArrayView2<C64>, estimates: ArrayView2<C64>, noise_var: f64) -> Result<f64> {
    check_pair(truth, estimates)?;
    if !(noise_var > 0.0) {
        return Err(Error::config("noise variance must be > 0"));
    }
    let total: f64 = truth
        .outer_iter()
        .zip(estimates.outer_iter())
        .map(|(h, e)| matched_filter_rate(h, e, noise_var))
        .sum();
    Ok(total / truth.nrows() as f64)
}

/// Mean of `p(k | y_t)` over the rows of `observations`, in component order.
pub fn mean_responsibilities(model: &GmmModel, observations: ArrayView2<C64>, noise_var: f64) -> Result<Array1<f64>> {
    if observations.nrows() == 0 {
        return Err(Error::config("responsibility averaging needs at least one observation"));
    }
    check_len(model.n(), observations.ncols())?;
    let mut lj = model.kernels(noise_var)?.log_joint_rows(observations);
    let mut acc = Array1::<f64>::zeros(model.k());
    for row in lj.outer_iter_mut() {
        normalize_log_joint(row);
    }
    for row in lj.outer_iter() {
        acc += &row;
    }
    Ok(acc / observations.nrows() as f64)
}

/// [`mean_responsibilities`] sorted from largest to smallest.
pub fn avg_responsibilities(model: &GmmModel, observations: ArrayView2<C64>, noise_var: f64) -> Result<Array1<f64>> {
    let mut v = mean_responsibilities(model, observations, noise_var)?.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(Array1::from(v))
}

/// Number of entries strictly above `threshold`.
pub fn effective_support(profile: ArrayView1<f64>, threshold: f64) -> usize {
    profile.iter().filter(|&&p| p > threshold).count()
}

/// One estimator at one SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub snr_db: f64,
    pub estimator: String,
    pub nmse: f64,
    pub spectral_efficiency: f64,
}

/// Records of an evaluation run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalResult {
    pub records: Vec<EvalRecord>,
    /// Sorted average responsibilities per named model.
    pub responsibility_profiles: Vec<(String, Array1<f64>)>,
    pub samples: usize,
}

impl EvalResult {
    pub fn record(&self, estimator: &str, snr_db: f64) -> Option<&EvalRecord> {
        self.records
            .iter()
            .find(|r| r.estimator == estimator && (r.snr_db - snr_db).abs() < 1e-9)
    }
}
