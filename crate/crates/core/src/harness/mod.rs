//! Experiment orchestration: dataset generation, fitting, evaluation, sweeps
//! and CSV output.
//!
//! Everything lives under `config.out_dir`:
//!
//! ```text
//! manifest.toml
//! data/{scenario}_train.gmcd, data/{scenario}_test.gmcd
//! models/{scenario}_K{K}_{structure}.gmm
//! results/*.csv, results/traces/*.csv
//! ```
//!
//! All observations at one SNR share a single noise realization per test
//! sample, so estimator columns are paired.

mod config;
mod model_file;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2};
use serde::Serialize;

use crate::cgmm::{em_fit, FitReport, GmmModel, Structure};
use crate::channel_sim::{
    add_noise_rows, generate_dataset, noise_var_from_snr, read_dataset, write_dataset, Dataset, ScenarioConfig,
};
use crate::error::{Error, Result};
use crate::estimators::{build_dictionary, fit_sample_cov, omp_genie_rows, precompute_filters};
use crate::fsio;
use crate::metrics::{avg_responsibilities, nmse, spectral_efficiency};
use crate::rng::derive_seed;
use crate::C64;

pub use config::{
    default_snr_grid, EstimatorKind, ExperimentConfig, OmpSettings, ResponsibilitySettings, SweepSettings,
    LARGE_TRAINING_SET,
};
pub use model_file::{decode_model, encode_model, read_model, write_model};

pub fn train_path(out: &Path, scenario: &str) -> PathBuf {
    out.join("data").join(format!("{scenario}_train.gmcd"))
}

pub fn test_path(out: &Path, scenario: &str) -> PathBuf {
    out.join("data").join(format!("{scenario}_test.gmcd"))
}

pub fn model_path(out: &Path, scenario: &str, k: usize, structure: Structure) -> PathBuf {
    out.join("models").join(format!("{scenario}_K{k}_{structure}.gmm"))
}

pub fn results_path(out: &Path, name: &str) -> PathBuf {
    out.join("results").join(name)
}

fn train_seed(cfg: &ExperimentConfig, sc: &ScenarioConfig) -> u64 {
    derive_seed(cfg.seed, &format!("train/{}/{}", sc.scenario_id, sc.seed))
}

fn test_seed(cfg: &ExperimentConfig, sc: &ScenarioConfig) -> u64 {
    derive_seed(cfg.seed, &format!("test/{}/{}", sc.scenario_id, sc.seed))
}

fn noise_seed(cfg: &ExperimentConfig, test_scenario: &str, snr_db: f64) -> u64 {
    derive_seed(cfg.seed, &format!("noise/{test_scenario}/{:016x}", snr_db.to_bits()))
}

fn em_seed(cfg: &ExperimentConfig, scenario: &str, m: usize, k: usize, structure: Structure) -> u64 {
    derive_seed(cfg.seed, &format!("em/{}/{scenario}/M{m}/K{k}/{structure}", cfg.em.seed))
}

/// Label used in result rows for a GMM of the given structure.
pub fn gmm_label(structure: Structure) -> &'static str {
    match structure {
        Structure::Full => "GMM-full",
        Structure::Toeplitz => "GMM-toep",
        Structure::Circulant => "GMM-circ",
    }
}

fn check_geometry(cfg: &ExperimentConfig, ds: &Dataset, path: &Path) -> Result<()> {
    if ds.geometry.n() != cfg.geometry.n() {
        return Err(Error::DimensionMismatch {
            expected: cfg.geometry.n(),
            actual: ds.geometry.n(),
        });
    }
    if (ds.geometry.n_v, ds.geometry.n_h) != (cfg.geometry.n_v, cfg.geometry.n_h) {
        return Err(Error::config(format!(
            "{}: array is {}x{}, configuration expects {}x{}",
            path.display(),
            ds.geometry.n_v,
            ds.geometry.n_h,
            cfg.geometry.n_v,
            cfg.geometry.n_h
        )));
    }
    Ok(())
}

fn load_dataset(cfg: &ExperimentConfig, path: &Path, scenario: &str) -> Result<Dataset> {
    let ds = read_dataset(path)?;
    if ds.scenario_id != scenario {
        return Err(Error::format(path, format!("holds scenario '{}', expected '{scenario}'", ds.scenario_id)));
    }
    check_geometry(cfg, &ds, path)?;
    Ok(ds)
}

fn load_model(cfg: &ExperimentConfig, scenario: &str, k: usize, structure: Structure) -> Result<GmmModel> {
    let path = model_path(&cfg.out_dir, scenario, k, structure);
    let (model, id) = read_model(&path)?;
    if id != scenario || model.k() != k || model.structure() != structure {
        return Err(Error::format(&path, "model header does not match its file name"));
    }
    if model.n() != cfg.geometry.n() {
        return Err(Error::DimensionMismatch {
            expected: cfg.geometry.n(),
            actual: model.n(),
        });
    }
    Ok(model)
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, Serialize)]
pub struct DatasetEntry {
    pub path: PathBuf,
    pub scenario_id: String,
    pub role: String,
    pub samples: usize,
    pub seed: u64,
    pub normalization_scale: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    geometry: crate::channel_sim::ArrayGeometry,
    datasets: &'a [DatasetEntry],
}

/// Writes a train and a test set for every configured scenario plus
/// `manifest.toml`.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<Vec<DatasetEntry>> {
    cfg.validate()?;
    if cfg.m_train > LARGE_TRAINING_SET {
        eprintln!(
            "warning: generating {} training samples per scenario; this takes a while",
            cfg.m_train
        );
    }
    let mut entries = Vec::new();
    for id in &cfg.scenarios {
        let sc = cfg.scenario(id)?;
        for (role, m, seed, path) in [
            ("train", cfg.m_train, train_seed(cfg, &sc), train_path(&cfg.out_dir, id)),
            ("test", cfg.t_test, test_seed(cfg, &sc), test_path(&cfg.out_dir, id)),
        ] {
            let ds = generate_dataset(&sc, &cfg.geometry, m, seed)?;
            write_dataset(&path, &ds)?;
            entries.push(DatasetEntry {
                path,
                scenario_id: id.clone(),
                role: role.into(),
                samples: m,
                seed,
                normalization_scale: ds.normalization_scale,
            });
        }
    }
    let manifest = Manifest {
        seed: cfg.seed,
        geometry: cfg.geometry,
        datasets: &entries,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::config(e.to_string()))?;
    fsio::write_atomic(&cfg.out_dir.join("manifest.toml"), text.as_bytes())?;
    Ok(entries)
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub scenario_id: String,
    pub k: usize,
    pub structure: Structure,
    pub path: PathBuf,
    pub report: FitReport,
    pub wall_time_s: f64,
}

/// Fits one model per `(scenario, K, structure)` and writes the model files,
/// `results/fit_report.csv` and one log-likelihood trace per model.
pub fn cmd_fit(cfg: &ExperimentConfig) -> Result<Vec<FitSummary>> {
    cfg.validate()?;
    let mut summaries = Vec::new();
    for id in &cfg.scenarios {
        let train = load_dataset(cfg, &train_path(&cfg.out_dir, id), id)?;
        for &k in &cfg.k_list {
            for &structure in &cfg.structures {
                let mut em = cfg.em.clone();
                em.seed = em_seed(cfg, id, train.len(), k, structure);
                let start = Instant::now();
                let outcome = em_fit(&train, k, structure, &em)?;
                let wall_time_s = start.elapsed().as_secs_f64();
                let path = model_path(&cfg.out_dir, id, k, structure);
                write_model(&path, &outcome.model, id)?;
                let trace_name = format!("traces/{id}_K{k}_{structure}.csv");
                write_trace(&results_path(&cfg.out_dir, &trace_name), &outcome.report)?;
                eprintln!(
                    "fit {id} K={k} {structure}: {} iterations, log-likelihood {:.6}, {:.1} s",
                    outcome.report.iterations,
                    outcome.report.final_log_likelihood(),
                    wall_time_s
                );
                summaries.push(FitSummary {
                    scenario_id: id.clone(),
                    k,
                    structure,
                    path,
                    report: outcome.report,
                    wall_time_s,
                });
            }
        }
    }
    let mut csv = String::from(
        "seed,train_scenario,m_train,K,structure,iterations,converged,final_log_likelihood,reinitialized,wall_time_s\n",
    );
    for s in &summaries {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            cfg.seed,
            s.scenario_id,
            cfg.m_train,
            s.k,
            s.structure,
            s.report.iterations,
            s.report.converged,
            float(s.report.final_log_likelihood()),
            s.report.reinitialized,
            float(s.wall_time_s)
        );
    }
    fsio::write_atomic(&results_path(&cfg.out_dir, "fit_report.csv"), csv.as_bytes())?;
    Ok(summaries)
}

fn write_trace(path: &Path, report: &FitReport) -> Result<()> {
    let mut csv = String::from("iteration,log_likelihood\n");
    for (i, ll) in report.log_likelihood_trace.iter().enumerate() {
        let _ = writeln!(csv, "{i},{}", float(*ll));
    }
    fsio::write_atomic(path, csv.as_bytes())
}

// ---------------------------------------------------------------- evaluation

/// One estimator at one SNR. `k` and `structure` are absent for baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub seed: u64,
    pub train_scenario: String,
    pub test_scenario: String,
    pub m_train: usize,
    pub k: Option<usize>,
    pub structure: Option<Structure>,
    pub estimator: String,
    pub snr_db: f64,
    pub nmse: f64,
    pub spectral_efficiency: f64,
}

/// Finds the row of `estimator` (and `k`, when given) at `snr_db`.
pub fn find_row<'a>(rows: &'a [ResultRow], estimator: &str, k: Option<usize>, snr_db: f64) -> Option<&'a ResultRow> {
    rows.iter().find(|r| {
        r.estimator == estimator && (k.is_none() || r.k == k) && (r.snr_db - snr_db).abs() < 1e-9
    })
}

const RESULT_HEADER: &str =
    "seed,train_scenario,test_scenario,m_train,K,structure,estimator,snr_db,nmse,spectral_efficiency\n";

/// 17 significant digits; parses back to the same `f64`.
fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut csv = String::from(RESULT_HEADER);
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.train_scenario,
            r.test_scenario,
            r.m_train,
            r.k.map_or("NA".to_string(), |k| k.to_string()),
            r.structure.map_or("NA", |s| s.name()),
            r.estimator,
            float(r.snr_db),
            float(r.nmse),
            float(r.spectral_efficiency)
        );
    }
    csv
}

/// Noisy copies of `test` at every grid SNR, shared by all estimators.
fn observations(cfg: &ExperimentConfig, test: &Dataset, snrs: &[f64]) -> Vec<Array2<C64>> {
    snrs.iter()
        .map(|&s| add_noise_rows(test.view(), s, noise_seed(cfg, &test.scenario_id, s)))
        .collect()
}

struct RowContext<'a> {
    cfg: &'a ExperimentConfig,
    train_scenario: &'a str,
    test: &'a Dataset,
    m_train: usize,
}

impl RowContext<'_> {
    fn row(
        &self,
        k: Option<usize>,
        structure: Option<Structure>,
        estimator: &str,
        snr_db: f64,
        estimates: ArrayView2<C64>,
    ) -> Result<ResultRow> {
        let truth = self.test.view();
        Ok(ResultRow {
            seed: self.cfg.seed,
            train_scenario: self.train_scenario.to_string(),
            test_scenario: self.test.scenario_id.clone(),
            m_train: self.m_train,
            k,
            structure,
            estimator: estimator.to_string(),
            snr_db,
            nmse: nmse(truth, estimates)?,
            spectral_efficiency: spectral_efficiency(truth, estimates, noise_var_from_snr(snr_db))?,
        })
    }
}

fn evaluate_pair(
    cfg: &ExperimentConfig,
    train_scenario: &str,
    train: &Dataset,
    test: &Dataset,
    models: &[GmmModel],
) -> Result<Vec<ResultRow>> {
    let snrs = &cfg.snr_db;
    let ys = observations(cfg, test, snrs);
    let ctx = RowContext {
        cfg,
        train_scenario,
        test,
        m_train: train.len(),
    };
    let mut rows = Vec::new();
    for kind in &cfg.estimators {
        match kind {
            EstimatorKind::Ls => {
                for (&s, y) in snrs.iter().zip(&ys) {
                    rows.push(ctx.row(None, None, "LS", s, y.view())?);
                }
            }
            EstimatorKind::SampleCov => {
                let est = fit_sample_cov(train)?.with_snr_grid(snrs)?;
                for (&s, y) in snrs.iter().zip(&ys) {
                    rows.push(ctx.row(None, None, "sample-cov", s, est.estimate_rows(y.view(), s)?.view())?);
                }
            }
            EstimatorKind::OmpGenie => {
                let dict = build_dictionary(&cfg.geometry, cfg.omp.oversampling)?;
                for (&s, y) in snrs.iter().zip(&ys) {
                    let h = omp_genie_rows(y.view(), &dict, test.view(), cfg.max_sparsity())?;
                    rows.push(ctx.row(None, None, "OMP-genie", s, h.view())?);
                }
            }
            EstimatorKind::Gmm => {
                for model in models {
                    let filters = precompute_filters(model, snrs)?;
                    let label = gmm_label(model.structure());
                    for (&s, y) in snrs.iter().zip(&ys) {
                        let h = filters.gmm_estimate_rows(y.view(), s)?;
                        rows.push(ctx.row(Some(model.k()), Some(model.structure()), label, s, h.view())?);
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn models_for(cfg: &ExperimentConfig, scenario: &str) -> Result<Vec<GmmModel>> {
    if !cfg.estimators.contains(&EstimatorKind::Gmm) {
        return Ok(Vec::new());
    }
    let mut models = Vec::new();
    for &k in &cfg.k_list {
        for &structure in &cfg.structures {
            models.push(load_model(cfg, scenario, k, structure)?);
        }
    }
    Ok(models)
}

/// Evaluates every configured estimator on the test set of `test_scenario`
/// over the SNR grid, with models and training data of `train_scenario`.
/// Writes `results/evaluate.csv`.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let (tr, te) = (&cfg.train_scenario, &cfg.test_scenario);
    let train = load_dataset(cfg, &train_path(&cfg.out_dir, tr), tr)?;
    let test = load_dataset(cfg, &test_path(&cfg.out_dir, te), te)?;
    let models = models_for(cfg, tr)?;
    let rows = evaluate_pair(cfg, tr, &train, &test, &models)?;
    fsio::write_atomic(&results_path(&cfg.out_dir, "evaluate.csv"), rows_to_csv(&rows).as_bytes())?;
    Ok(rows)
}

/// Every train scenario against every test scenario over the SNR grid.
/// Writes `results/crosseval.csv`.
pub fn cmd_crosseval(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for tr in &cfg.scenarios {
        let train = load_dataset(cfg, &train_path(&cfg.out_dir, tr), tr)?;
        let models = models_for(cfg, tr)?;
        for te in &cfg.scenarios {
            let test = load_dataset(cfg, &test_path(&cfg.out_dir, te), te)?;
            rows.extend(evaluate_pair(cfg, tr, &train, &test, &models)?);
        }
    }
    fsio::write_atomic(&results_path(&cfg.out_dir, "crosseval.csv"), rows_to_csv(&rows).as_bytes())?;
    Ok(rows)
}

/// GMM NMSE over the `(M, K, structure)` grid at `sweep.snr_db`. Training
/// sets are drawn in memory with the seed of the main training set, so each
/// is a rescaled prefix of the largest. Writes `results/sweep.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let sw = &cfg.sweep;
    if sw.k_list.is_empty() || sw.m_list.is_empty() || sw.structures.is_empty() {
        return Err(Error::config("sweep grid must not be empty"));
    }
    let id = &cfg.train_scenario;
    let sc = cfg.scenario(id)?;
    let test = load_dataset(cfg, &test_path(&cfg.out_dir, &cfg.test_scenario), &cfg.test_scenario)?;
    let snr = sw.snr_db;
    let y = add_noise_rows(test.view(), snr, noise_seed(cfg, &test.scenario_id, snr));
    let mut rows = Vec::new();
    for &m in &sw.m_list {
        let train = generate_dataset(&sc, &cfg.geometry, m, train_seed(cfg, &sc))?;
        let ctx = RowContext {
            cfg,
            train_scenario: id,
            test: &test,
            m_train: m,
        };
        for &k in &sw.k_list {
            if k > m {
                return Err(Error::config(format!("sweep cell K = {k} exceeds M = {m}")));
            }
            for &structure in &sw.structures {
                let mut em = cfg.em.clone();
                em.seed = em_seed(cfg, id, m, k, structure);
                let start = Instant::now();
                let model = em_fit(&train, k, structure, &em)?.model;
                eprintln!("sweep M={m} K={k} {structure}: {:.1} s", start.elapsed().as_secs_f64());
                let h = precompute_filters(&model, &[snr])?.gmm_estimate_rows(y.view(), snr)?;
                rows.push(ctx.row(Some(k), Some(structure), gmm_label(structure), snr, h.view())?);
            }
        }
    }
    fsio::write_atomic(&results_path(&cfg.out_dir, "sweep.csv"), rows_to_csv(&rows).as_bytes())?;
    Ok(rows)
}

// ---------------------------------------------------------------- responsibilities

/// Sorted average responsibilities of two models on the same observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsibilityProfiles {
    pub test_scenario: String,
    pub matched_scenario: String,
    pub mismatched_scenario: String,
    pub matched: Array1<f64>,
    pub mismatched: Array1<f64>,
}

/// Applies the matched and mismatched models to noisy copies of the matched
/// scenario's test set. Writes `results/responsibilities.csv`.
pub fn cmd_responsibilities(cfg: &ExperimentConfig) -> Result<ResponsibilityProfiles> {
    cfg.validate()?;
    let rs = &cfg.responsibilities;
    let (a, b) = (&rs.matched_scenario, &rs.mismatched_scenario);
    let test = load_dataset(cfg, &test_path(&cfg.out_dir, a), a)?;
    let y = add_noise_rows(test.view(), rs.snr_db, noise_seed(cfg, a, rs.snr_db));
    let noise_var = noise_var_from_snr(rs.snr_db);
    let matched = avg_responsibilities(&load_model(cfg, a, rs.k, rs.structure)?, y.view(), noise_var)?;
    let mismatched = avg_responsibilities(&load_model(cfg, b, rs.k, rs.structure)?, y.view(), noise_var)?;

    let mut csv = String::from(
        "seed,test_scenario,matched_scenario,mismatched_scenario,K,structure,snr_db,rank,matched_value,mismatched_value\n",
    );
    for (i, (p, q)) in matched.iter().zip(mismatched.iter()).enumerate() {
        let _ = writeln!(
            csv,
            "{},{a},{a},{b},{},{},{},{},{},{}",
            cfg.seed,
            rs.k,
            rs.structure,
            float(rs.snr_db),
            i + 1,
            float(*p),
            float(*q)
        );
    }
    fsio::write_atomic(&results_path(&cfg.out_dir, "responsibilities.csv"), csv.as_bytes())?;
    Ok(ResponsibilityProfiles {
        test_scenario: a.clone(),
        matched_scenario: a.clone(),
        mismatched_scenario: b.clone(),
        matched,
        mismatched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(out: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk();
        cfg.out_dir = out.to_path_buf();
        cfg.geometry = crate::channel_sim::ArrayGeometry::ura(2, 2);
        cfg.m_train = 300;
        cfg.t_test = 100;
        cfg.k_list = vec![2];
        cfg.snr_db = vec![0.0, 10.0];
        cfg.em.max_iters = 20;
        cfg.sweep.k_list = vec![1, 2];
        cfg.sweep.m_list = vec![100, 300];
        cfg.responsibilities.k = 2;
        cfg
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123456.789] {
            assert_eq!(float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(float(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn pipeline_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let entries = cmd_generate(&cfg).unwrap();
        assert_eq!(entries.len(), 4);
        let manifest = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
        assert!(manifest.contains("normalization_scale"));

        let fits = cmd_fit(&cfg).unwrap();
        assert_eq!(fits.len(), 2 * 3);
        assert!(results_path(dir.path(), "traces/env-B_K2_toeplitz.csv").exists());

        let rows = cmd_evaluate(&cfg).unwrap();
        // LS, sample-cov, OMP and three GMMs at two SNRs
        assert_eq!(rows.len(), 6 * 2);
        let ls = find_row(&rows, "LS", None, 10.0).unwrap();
        assert!(ls.k.is_none() && ls.structure.is_none());
        let csv = std::fs::read_to_string(results_path(dir.path(), "evaluate.csv")).unwrap();
        assert!(csv.lines().nth(1).unwrap().contains(",NA,NA,LS,"));
        assert_eq!(csv.lines().count(), rows.len() + 1);

        let cross = cmd_crosseval(&cfg).unwrap();
        assert_eq!(cross.len(), 4 * rows.len());

        let sweep = cmd_sweep(&cfg).unwrap();
        assert_eq!(sweep.len(), 2 * 2 * 3);

        let p = cmd_responsibilities(&cfg).unwrap();
        assert!((p.matched.sum() - 1.0).abs() < 1e-12);
        assert!(p.matched.windows(2).into_iter().all(|w| w[0] >= w[1]));
    }

    #[test]
    fn missing_inputs_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        assert!(matches!(cmd_fit(&cfg), Err(Error::Io { .. })));
        assert!(matches!(cmd_evaluate(&cfg), Err(Error::Io { .. })));
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        cmd_generate(&cfg).unwrap();
        let mut other = cfg.clone();
        other.geometry = crate::channel_sim::ArrayGeometry::ura(2, 3);
        assert!(matches!(cmd_fit(&other), Err(Error::DimensionMismatch { .. })));
    }
}
