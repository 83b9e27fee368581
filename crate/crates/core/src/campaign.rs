//! Monte-Carlo benchmark campaigns.
//!
//! Each `(scenario, trial)` pair gets a seed derived from
//! `(master_seed, scenario name, trial index)`. Every nonlinearity in a
//! trial sees the same sources, mixing matrix and initial demixer, so
//! results are paired. Trial failures are recorded rather than aborting the
//! campaign.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fastica::{init_w, run_fastica_from, FasticaConfig};
use crate::metrics::{amari_error, gain_matrix};
use crate::nonlinearity::{Nonlinearity, NonlinearityKind};
use crate::par::{self, Exec};
use crate::preprocess::fit_whitening;
use crate::rng::{fnv1a, stream, streams, trial_seed};
use crate::score::{tabulate_score, PbecfParams};
use crate::stats::{quantile_sorted, sorted};
use crate::synth::{make_dataset, Scenario, SourceFamily};

pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Columns of `trials.csv` that hold wall-clock measurements.
pub const TIMING_COLUMNS: [&str; 3] = ["tabulation_seconds", "iteration_seconds", "total_seconds"];

/// A named scenario template; its seed is filled in per trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub family: SourceFamily,
    pub m: usize,
    pub n_samples: usize,
}

impl ScenarioSpec {
    pub fn with_seed(&self, seed: u64) -> Scenario {
        Scenario {
            family: self.family,
            m: self.m,
            n_samples: self.n_samples,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_trials: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub exec: Exec,
    pub nonlinearities: Vec<NonlinearityKind>,
    pub pbecf: PbecfParams,
    /// `seed` is ignored here; each trial derives its own.
    pub fastica: FasticaConfig,
    pub scenarios: Vec<ScenarioSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_trials: 100,
            master_seed: 1,
            output_dir: PathBuf::from("results"),
            exec: Exec::Parallel,
            nonlinearities: NonlinearityKind::ALL.to_vec(),
            pbecf: PbecfParams::default(),
            fastica: FasticaConfig::default(),
            scenarios: vec![
                ScenarioSpec {
                    name: "ggd".into(),
                    family: SourceFamily::Ggd { beta: 1.6 },
                    m: 8,
                    n_samples: 1000,
                },
                ScenarioSpec {
                    name: "poisson".into(),
                    family: SourceFamily::Poisson { lambda: 0.5 },
                    m: 8,
                    n_samples: 1000,
                },
            ],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if self.nonlinearities.is_empty() {
            return Err(Error::Config("no nonlinearities selected".into()));
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("no scenarios defined".into()));
        }
        for (i, s) in self.scenarios.iter().enumerate() {
            if self.scenarios[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::Config(format!(
                    "duplicate scenario name `{}`",
                    s.name
                )));
            }
            s.with_seed(0).validate()?;
        }
        self.pbecf.validate()?;
        self.fastica.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scenario: String,
    pub nonlinearity: NonlinearityKind,
    pub trial: usize,
    pub seed: u64,
    /// FNV-1a over X, A, S and W₀; equal across nonlinearities within a trial.
    pub dataset_hash: String,
    pub amari_error: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub max_orthogonality_error: Option<f64>,
    pub failure: Option<String>,
    pub tabulation_seconds: f64,
    pub iteration_seconds: f64,
    pub total_seconds: f64,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub nonlinearity: NonlinearityKind,
    pub trials: usize,
    pub failures: usize,
    pub median_amari: Option<f64>,
    pub q1_amari: Option<f64>,
    pub q3_amari: Option<f64>,
    pub mean_amari: Option<f64>,
    pub converged_fraction: f64,
    pub median_iterations: Option<f64>,
    pub median_tabulation_seconds: Option<f64>,
    pub median_iteration_seconds: Option<f64>,
    pub median_total_seconds: Option<f64>,
}

fn dataset_hash(mats: &[&DMatrix<f64>]) -> String {
    let bytes: Vec<u8> = mats
        .iter()
        .flat_map(|m| m.iter().flat_map(|v| v.to_le_bytes()))
        .collect();
    format!("{:016x}", fnv1a(&bytes))
}

struct TrialOutcome {
    hash: String,
    amari: f64,
    iterations: usize,
    converged: bool,
    max_orth: f64,
    tabulation: f64,
    iteration: f64,
    total: f64,
}

/// Runs one trial of one nonlinearity. Timed sections run on the calling thread.
pub fn run_trial(
    spec: &ScenarioSpec,
    kind: NonlinearityKind,
    pbecf: &PbecfParams,
    fastica: &FasticaConfig,
    trial: usize,
    seed: u64,
) -> TrialRecord {
    let mut hash = String::new();
    let outcome = try_trial(spec, kind, pbecf, fastica, seed, &mut hash);
    let base = TrialRecord {
        scenario: spec.name.clone(),
        nonlinearity: kind,
        trial,
        seed,
        dataset_hash: hash,
        amari_error: None,
        iterations: 0,
        converged: false,
        max_orthogonality_error: None,
        failure: None,
        tabulation_seconds: 0.0,
        iteration_seconds: 0.0,
        total_seconds: 0.0,
    };
    match outcome {
        Ok(o) => TrialRecord {
            dataset_hash: o.hash,
            amari_error: Some(o.amari),
            iterations: o.iterations,
            converged: o.converged,
            max_orthogonality_error: Some(o.max_orth),
            tabulation_seconds: o.tabulation,
            iteration_seconds: o.iteration,
            total_seconds: o.total,
            ..base
        },
        Err(e) => TrialRecord {
            failure: Some(e.to_string()),
            ..base
        },
    }
}

fn try_trial(
    spec: &ScenarioSpec,
    kind: NonlinearityKind,
    pbecf: &PbecfParams,
    fastica: &FasticaConfig,
    seed: u64,
    hash_out: &mut String,
) -> Result<TrialOutcome> {
    let data = make_dataset(&spec.with_seed(seed))?;
    let w0 = init_w(spec.m, &mut stream(seed, streams::INIT_W));
    let hash = dataset_hash(&[data.x.values(), &data.a, &data.s, &w0]);
    hash_out.clone_from(&hash);

    let start = Instant::now();
    let (white, model) = fit_whitening(&data.x)?;
    let mut tabulation = 0.0;
    let nl = match kind.fixed() {
        Some(nl) => nl,
        None => {
            let t = Instant::now();
            let table = tabulate_score(&white, pbecf, seed, Exec::Sequential)?;
            tabulation = t.elapsed().as_secs_f64();
            Nonlinearity::Learned(Arc::new(table))
        }
    };
    let cfg = FasticaConfig { seed, ..*fastica };
    let res = run_fastica_from(&white, &nl, &cfg, w0)?;
    let total = start.elapsed().as_secs_f64();
    let amari = amari_error(&gain_matrix(&res.w, &model.v, &data.a)?)?;
    Ok(TrialOutcome {
        hash,
        amari,
        iterations: res.iterations,
        converged: res.converged,
        max_orth: res.max_orthogonality_error,
        tabulation,
        iteration: res.elapsed.as_secs_f64(),
        total,
    })
}

/// Runs every `(scenario, trial, nonlinearity)` combination without touching disk.
///
/// Records are ordered by scenario, then nonlinearity (config order), then trial.
pub fn execute(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.scenarios.len())
        .flat_map(|s| (0..cfg.n_trials).map(move |t| (s, t)))
        .collect();
    let per_job = par::map(cfg.exec, &jobs, |&(s, t)| {
        let spec = &cfg.scenarios[s];
        let seed = trial_seed(cfg.master_seed, &spec.name, t as u64);
        cfg.nonlinearities
            .iter()
            .map(|&kind| run_trial(spec, kind, &cfg.pbecf, &cfg.fastica, t, seed))
            .collect::<Vec<_>>()
    });
    let mut records = Vec::with_capacity(jobs.len() * cfg.nonlinearities.len());
    for (s, spec) in cfg.scenarios.iter().enumerate() {
        for (k, _) in cfg.nonlinearities.iter().enumerate() {
            for (job, recs) in jobs.iter().zip(&per_job) {
                if job.0 == s {
                    debug_assert_eq!(recs[k].scenario, spec.name);
                    records.push(recs[k].clone());
                }
            }
        }
    }
    Ok(records)
}

pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, NonlinearityKind)> = Vec::new();
    for r in records {
        let key = (r.scenario.clone(), r.nonlinearity);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(scenario, nonlinearity)| {
            let group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.scenario == scenario && r.nonlinearity == nonlinearity)
                .collect();
            let ok: Vec<&TrialRecord> = group.iter().copied().filter(|r| !r.failed()).collect();
            let amari = sorted(ok.iter().filter_map(|r| r.amari_error));
            let q = |v: &[f64], p: f64| (!v.is_empty()).then(|| quantile_sorted(v, p));
            let med = |f: fn(&TrialRecord) -> f64| q(&sorted(ok.iter().map(|r| f(r))), 0.5);
            SummaryRow {
                scenario,
                nonlinearity,
                trials: group.len(),
                failures: group.len() - ok.len(),
                median_amari: q(&amari, 0.5),
                q1_amari: q(&amari, 0.25),
                q3_amari: q(&amari, 0.75),
                mean_amari: (!amari.is_empty())
                    .then(|| amari.iter().sum::<f64>() / amari.len() as f64),
                converged_fraction: if ok.is_empty() {
                    0.0
                } else {
                    ok.iter().filter(|r| r.converged).count() as f64 / ok.len() as f64
                },
                median_iterations: med(|r| r.iterations as f64),
                median_tabulation_seconds: med(|r| r.tabulation_seconds),
                median_iteration_seconds: med(|r| r.iteration_seconds),
                median_total_seconds: med(|r| r.total_seconds),
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Creates `dir` and checks that it accepts writes.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".write-check");
    fs::write(&probe, b"")?;
    fs::remove_file(probe)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct CampaignOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    pub trials_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Full campaign: checks the output directory, runs, then writes `trials.csv` and `summary.csv`.
pub fn run_campaign(cfg: &ExperimentConfig) -> Result<CampaignOutput> {
    cfg.validate()?;
    prepare_output_dir(&cfg.output_dir)?;
    let records = execute(cfg)?;
    let summary = summarize(&records);
    let trials_path = cfg.output_dir.join(TRIALS_FILE);
    let summary_path = cfg.output_dir.join(SUMMARY_FILE);
    write_csv(&trials_path, &records)?;
    write_csv(&summary_path, &summary)?;
    Ok(CampaignOutput {
        records,
        summary,
        trials_path,
        summary_path,
    })
}

/// CSV text with the timing columns removed, for reproducibility checks.
pub fn strip_timing_columns(csv_text: &str) -> Result<String> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    let keep: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !TIMING_COLUMNS.contains(h))
        .map(|(i, _)| i)
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(keep.iter().map(|&i| &headers[i]))?;
    for rec in reader.records() {
        let rec = rec?;
        w.write_record(keep.iter().map(|&i| &rec[i]))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
