//! Experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cgmm::{EmConfig, Structure};
use crate::channel_sim::{ArrayGeometry, ScenarioConfig};
use crate::error::{Error, Result};
use crate::fsio;

/// Baseline or model family evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Ls,
    SampleCov,
    OmpGenie,
    /// One GMM estimator per configured `(K, structure)` pair.
    Gmm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmpSettings {
    /// Total dictionary oversampling, `L = oversampling * N`.
    pub oversampling: usize,
    /// Largest sparsity searched; `N / 2` when absent.
    pub max_sparsity: Option<usize>,
}

impl Default for OmpSettings {
    fn default() -> Self {
        OmpSettings {
            oversampling: 4,
            max_sparsity: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub snr_db: f64,
    pub k_list: Vec<usize>,
    pub m_list: Vec<usize>,
    pub structures: Vec<Structure>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            snr_db: 10.0,
            k_list: vec![1, 4, 16],
            m_list: vec![2000, 20000],
            structures: Structure::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponsibilitySettings {
    pub snr_db: f64,
    pub k: usize,
    pub structure: Structure,
    /// Scenario whose model and test set are compared.
    pub matched_scenario: String,
    /// Scenario whose model is applied to the matched test set.
    pub mismatched_scenario: String,
}

impl Default for ResponsibilitySettings {
    fn default() -> Self {
        ResponsibilitySettings {
            snr_db: 10.0,
            k: 16,
            structure: Structure::Full,
            matched_scenario: "env-A".into(),
            mismatched_scenario: "env-B".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub geometry: ArrayGeometry,
    /// Every scenario that `generate` and `fit` process.
    pub scenarios: Vec<String>,
    pub train_scenario: String,
    pub test_scenario: String,
    /// Scenario definitions that add to or replace the built-in presets.
    pub custom_scenarios: Vec<ScenarioConfig>,
    pub m_train: usize,
    pub t_test: usize,
    pub k_list: Vec<usize>,
    pub structures: Vec<Structure>,
    pub estimators: Vec<EstimatorKind>,
    pub snr_db: Vec<f64>,
    pub em: EmConfig,
    pub omp: OmpSettings,
    pub sweep: SweepSettings,
    pub responsibilities: ResponsibilitySettings,
}

/// `-15, -10, ..., 20` dB.
pub fn default_snr_grid() -> Vec<f64> {
    (-3..=4).map(|i| f64::from(i) * 5.0).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::desk()
    }
}

/// Training sets above this size trigger a runtime warning.
pub const LARGE_TRAINING_SET: usize = 100_000;

impl ExperimentConfig {
    /// 4x8 array, `K = 16`, `M = 20000`, `T = 2000`.
    pub fn desk() -> Self {
        ExperimentConfig {
            seed: 1,
            out_dir: PathBuf::from("out"),
            geometry: ArrayGeometry::desk(),
            scenarios: vec!["env-A".into(), "env-B".into()],
            train_scenario: "env-A".into(),
            test_scenario: "env-A".into(),
            custom_scenarios: Vec::new(),
            m_train: 20_000,
            t_test: 2_000,
            k_list: vec![16],
            structures: Structure::ALL.to_vec(),
            estimators: vec![
                EstimatorKind::Ls,
                EstimatorKind::SampleCov,
                EstimatorKind::OmpGenie,
                EstimatorKind::Gmm,
            ],
            snr_db: default_snr_grid(),
            em: EmConfig::default(),
            omp: OmpSettings::default(),
            sweep: SweepSettings::default(),
            responsibilities: ResponsibilitySettings::default(),
        }
    }

    /// 4x16 array, `K = 64`, `M = 300000`, `T = 10000`.
    pub fn full_scale() -> Self {
        let mut cfg = ExperimentConfig::desk();
        cfg.apply_full_scale();
        cfg
    }

    pub fn apply_full_scale(&mut self) {
        self.geometry = ArrayGeometry::large();
        self.m_train = 300_000;
        self.t_test = 10_000;
        self.k_list = vec![64];
        self.sweep.k_list = vec![1, 4, 16, 64, 128];
        self.sweep.m_list = vec![1_000, 10_000, 100_000, 300_000];
        self.responsibilities.k = 64;
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fsio::read(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "config is not UTF-8"))?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn scenario(&self, id: &str) -> Result<ScenarioConfig> {
        self.custom_scenarios
            .iter()
            .find(|s| s.scenario_id == id)
            .cloned()
            .or_else(|| ScenarioConfig::preset(id))
            .ok_or_else(|| Error::config(format!("unknown scenario '{id}'")))
    }

    pub fn max_sparsity(&self) -> usize {
        self.omp
            .max_sparsity
            .unwrap_or_else(|| crate::estimators::default_max_sparsity(self.geometry.n()))
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.m_train == 0 {
            return Err(Error::config("m_train must be >= 1"));
        }
        if self.t_test == 0 {
            return Err(Error::config("t_test must be >= 1"));
        }
        if self.snr_db.is_empty() {
            return Err(Error::config("snr grid must not be empty"));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) || !self.sweep.snr_db.is_finite() || !self.responsibilities.snr_db.is_finite() {
            return Err(Error::config("SNR values must be finite"));
        }
        if self.estimators.is_empty() {
            return Err(Error::config("estimator list must not be empty"));
        }
        if self.k_list.is_empty() || self.structures.is_empty() {
            return Err(Error::config("k_list and structures must not be empty"));
        }
        for &k in self.k_list.iter().chain(&self.sweep.k_list).chain([&self.responsibilities.k]) {
            if k == 0 {
                return Err(Error::config("component counts must be >= 1"));
            }
            self.em.validate(k)?;
        }
        for &k in &self.k_list {
            if k > self.m_train {
                return Err(Error::config(format!("K = {k} exceeds m_train = {}", self.m_train)));
            }
        }
        if self.sweep.m_list.iter().any(|&m| m == 0) {
            return Err(Error::config("sweep training sizes must be >= 1"));
        }
        if self.scenarios.is_empty() {
            return Err(Error::config("scenario list must not be empty"));
        }
        for id in &self.scenarios {
            if id.is_empty() || id.contains([',', '"', '\n', '\r', '/', '\\']) {
                return Err(Error::config(format!("scenario id '{id}' contains reserved characters")));
            }
            self.scenario(id)?.validate()?;
        }
        for id in [
            &self.train_scenario,
            &self.test_scenario,
            &self.responsibilities.matched_scenario,
            &self.responsibilities.mismatched_scenario,
        ] {
            self.scenario(id)?;
        }
        if self.omp.oversampling == 0 {
            return Err(Error::config("omp oversampling must be >= 1"));
        }
        if self.max_sparsity() == 0 || self.max_sparsity() > self.omp.oversampling * self.geometry.n() {
            return Err(Error::config("omp max_sparsity must lie in [1, L]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate() {
        ExperimentConfig::desk().validate().unwrap();
        let p = ExperimentConfig::full_scale();
        p.validate().unwrap();
        assert_eq!(p.geometry.n(), 64);
        assert_eq!(p.m_train, 300_000);
        assert_eq!(default_snr_grid(), vec![-15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]);
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = ExperimentConfig::desk();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let partial = ExperimentConfig::from_toml("m_train = 500\nk_list = [2]\n[em]\nmax_iters = 7\n").unwrap();
        assert_eq!(partial.m_train, 500);
        assert_eq!(partial.em.max_iters, 7);
        assert_eq!(partial.t_test, 2000);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn rejects_invalid_settings() {
        let bad = |f: fn(&mut ExperimentConfig)| {
            let mut c = ExperimentConfig::desk();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.m_train = 0));
        assert!(bad(|c| c.t_test = 0));
        assert!(bad(|c| c.snr_db.clear()));
        assert!(bad(|c| c.k_list = vec![0]));
        assert!(bad(|c| c.train_scenario = "env-C".into()));
        assert!(bad(|c| c.scenarios.push("a,b".into())));
        assert!(bad(|c| c.omp.max_sparsity = Some(1000)));
    }

    #[test]
    fn custom_scenarios_override_presets() {
        let mut c = ExperimentConfig::desk();
        let mut s = ScenarioConfig::env_a();
        s.scenario_id = "street".into();
        c.custom_scenarios.push(s);
        c.scenarios.push("street".into());
        c.validate().unwrap();
        assert_eq!(c.scenario("street").unwrap().azimuth_spread, ScenarioConfig::env_a().azimuth_spread);
    }
}
