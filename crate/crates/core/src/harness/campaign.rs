use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output::{self, campaign_csv, to_json, write_text, Format};
use super::run::{run_once, scenario_digest, StageSet, StageSummary};
use crate::error::{Error, Result};
use crate::localization::Stage;
use crate::rng;
use crate::scenario::{load_scenario, RoomScenario};

fn default_trials() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignOutput {
    pub summary_csv: PathBuf,
    pub summary_json: PathBuf,
    /// Also write one per-fix CSV per (SNR, trial) under `runs/`.
    pub per_run_csv: bool,
}

impl Default for CampaignOutput {
    fn default() -> Self {
        Self {
            summary_csv: "summary.csv".into(),
            summary_json: "summary.json".into(),
            per_run_csv: false,
        }
    }
}

/// Monte Carlo grid over SNR and trial. The scenario comes either from a
/// file (`scenario_path`) or inline (`[scenario]`), never both; with
/// neither the default scenario is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<RoomScenario>,
    pub snr_list_db: Vec<f64>,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub stages: StageSet,
    /// Root seed; trial `t` uses the same derived seed at every SNR.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: CampaignOutput,
}

impl CampaignSpec {
    pub fn new(scenario: RoomScenario, snr_list_db: Vec<f64>, n_trials: usize) -> Self {
        Self {
            scenario_path: None,
            scenario: Some(scenario),
            snr_list_db,
            n_trials,
            stages: StageSet::ALL,
            seed: 0,
            output: CampaignOutput::default(),
        }
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials < 1 {
            return Err(Error::validation("n_trials", "must be at least 1"));
        }
        if self.snr_list_db.is_empty() {
            return Err(Error::validation("snr_list_db", "must not be empty"));
        }
        if let Some(i) = self.snr_list_db.iter().position(|s| s.is_nan()) {
            return Err(Error::validation(format!("snr_list_db[{i}]"), "must be a number"));
        }
        for (i, s) in self.snr_list_db.iter().enumerate() {
            if self.snr_list_db[..i].contains(s) {
                return Err(Error::validation(format!("snr_list_db[{i}]"), "duplicate SNR"));
            }
        }
        if self.scenario_path.is_some() && self.scenario.is_some() {
            return Err(Error::validation("scenario", "give either scenario_path or [scenario], not both"));
        }
        Ok(())
    }

    /// The base scenario; relative paths resolve against the working
    /// directory.
    pub fn base_scenario(&self) -> Result<RoomScenario> {
        match (&self.scenario_path, &self.scenario) {
            (Some(p), _) => load_scenario(p),
            (None, Some(s)) => {
                s.validate()?;
                Ok(s.clone())
            }
            (None, None) => Ok(RoomScenario::default()),
        }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        rng::derive_seed(self.seed, &[rng::tag::TRIAL, trial as u64])
    }
}

/// The base scenario with its channel SNR replaced.
pub fn scenario_at_snr(base: &RoomScenario, snr_db: f64) -> RoomScenario {
    let mut s = base.clone();
    s.channel.snr_db = snr_db;
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub snr_db: f64,
    pub trial: usize,
    pub seed: u64,
    pub summary: Vec<StageSummary>,
}

impl TrialOutcome {
    pub fn stage(&self, s: Stage) -> Option<&StageSummary> {
        self.summary.iter().find(|x| x.stage == s)
    }
}

/// Trial-averaged errors for one (SNR, stage) pair. Means are over trials
/// of each trial's mean; trials without a single fix are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub snr_db: f64,
    pub stage: Stage,
    pub trials: usize,
    pub fixes: usize,
    pub unavailable: usize,
    pub mean_abs_x_m: f64,
    pub mean_abs_y_m: f64,
    pub mean_abs_z_m: f64,
    pub mean_xy_m: f64,
    pub mean_3d_m: f64,
    /// Standard error of `mean_3d_m` across trials.
    pub se_3d_m: f64,
    pub p95_3d_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub seed: u64,
    pub n_trials: usize,
    pub stages: StageSet,
    pub scenario_digest: String,
    pub rows: Vec<SummaryRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub summary: CampaignSummary,
    /// Ordered by SNR (list order), then trial.
    pub trials: Vec<TrialOutcome>,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Aggregates trials in trial-index order.
pub fn summarize(snr_db: f64, stage: Stage, outcomes: &[&TrialOutcome]) -> SummaryRow {
    let mut sorted: Vec<&StageSummary> = Vec::new();
    let mut order: Vec<&&TrialOutcome> = outcomes.iter().collect();
    order.sort_by_key(|o| o.trial);
    let (mut fixes, mut unavailable) = (0, 0);
    for o in order {
        if let Some(s) = o.stage(stage) {
            fixes += s.fixes;
            unavailable += s.unavailable;
            if s.fixes > 0 {
                sorted.push(s);
            }
        }
    }
    let col = |f: fn(&StageSummary) -> f64| -> Vec<f64> { sorted.iter().map(|s| f(s)).collect() };
    let m = |f: fn(&StageSummary) -> f64| mean_se(&col(f)).0;
    let (mean_3d, se_3d) = mean_se(&col(|s| s.mean_3d_m));
    SummaryRow {
        snr_db,
        stage,
        trials: sorted.len(),
        fixes,
        unavailable,
        mean_abs_x_m: m(|s| s.mean_abs_x_m),
        mean_abs_y_m: m(|s| s.mean_abs_y_m),
        mean_abs_z_m: m(|s| s.mean_abs_z_m),
        mean_xy_m: m(|s| s.mean_xy_m),
        mean_3d_m: mean_3d,
        se_3d_m: se_3d,
        p95_3d_m: m(|s| s.p95_3d_m),
    }
}

/// Mean paired change in a stage's mean 3D error between two SNRs, with
/// its standard error over trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedStep {
    pub from_db: f64,
    pub to_db: f64,
    pub mean_change_m: f64,
    pub se_m: f64,
}

/// Paired comparison of consecutive SNRs in list order.
pub fn paired_steps(result: &CampaignResult, snr_list_db: &[f64], stage: Stage) -> Vec<PairedStep> {
    let per_snr = |snr: f64| -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = result
            .trials
            .iter()
            .filter(|t| t.snr_db == snr)
            .filter_map(|t| t.stage(stage).filter(|s| s.fixes > 0).map(|s| (t.trial, s.mean_3d_m)))
            .collect();
        v.sort_by_key(|x| x.0);
        v
    };
    snr_list_db
        .windows(2)
        .map(|w| {
            let a = per_snr(w[0]);
            let b = per_snr(w[1]);
            let diffs: Vec<f64> = a
                .iter()
                .filter_map(|(t, ea)| b.iter().find(|(u, _)| u == t).map(|(_, eb)| eb - ea))
                .collect();
            let (m, se) = mean_se(&diffs);
            PairedStep {
                from_db: w[0],
                to_db: w[1],
                mean_change_m: m,
                se_m: se,
            }
        })
        .collect()
}

fn resolve(out_dir: Option<&Path>, p: &Path) -> PathBuf {
    match out_dir {
        Some(d) if p.is_relative() => d.join(p),
        _ => p.to_path_buf(),
    }
}

fn check_writable(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(true)
        .open(path)
        .map(drop)
        .map_err(|e| Error::io(path, e))
}

/// Runs every (SNR, trial) pair in parallel, aggregates, and writes the
/// summary files. Output paths are checked before any simulation starts.
/// With `out_dir = None` nothing is written.
pub fn run_campaign(spec: &CampaignSpec, out_dir: Option<&Path>) -> Result<CampaignResult> {
    spec.validate()?;
    let base = spec.base_scenario()?;
    let csv_path = resolve(out_dir, &spec.output.summary_csv);
    let json_path = resolve(out_dir, &spec.output.summary_json);
    let runs_dir = resolve(out_dir, Path::new("runs"));
    if out_dir.is_some() {
        check_writable(&csv_path)?;
        check_writable(&json_path)?;
        if spec.output.per_run_csv {
            fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
        }
    }
    let scenarios: Vec<RoomScenario> = spec.snr_list_db.iter().map(|&s| scenario_at_snr(&base, s)).collect();
    for s in &scenarios {
        s.validate()?;
    }
    let jobs: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|i| (0..spec.n_trials).map(move |t| (i, t)))
        .collect();
    let trials: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(i, t)| -> Result<TrialOutcome> {
            let seed = spec.trial_seed(t);
            let run = run_once(&scenarios[i], spec.stages, seed)?;
            if out_dir.is_some() && spec.output.per_run_csv {
                let name = format!("snr{}_trial{t:04}.csv", output::fmt_float(spec.snr_list_db[i]));
                write_text(&runs_dir.join(name), &output::run_csv(&run))?;
            }
            Ok(TrialOutcome {
                snr_db: spec.snr_list_db[i],
                trial: t,
                seed,
                summary: run.summary,
            })
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &snr in &spec.snr_list_db {
        let here: Vec<&TrialOutcome> = trials.iter().filter(|t| t.snr_db == snr).collect();
        for stage in spec.stages.stages() {
            rows.push(summarize(snr, stage, &here));
        }
    }
    let result = CampaignResult {
        summary: CampaignSummary {
            seed: spec.seed,
            n_trials: spec.n_trials,
            stages: spec.stages,
            scenario_digest: scenario_digest(&base)?,
            rows,
        },
        trials,
    };
    if out_dir.is_some() {
        write_campaign(&result.summary, &csv_path, Format::Csv)?;
        write_campaign(&result.summary, &json_path, Format::Json)?;
    }
    Ok(result)
}

pub fn write_campaign(summary: &CampaignSummary, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Csv => campaign_csv(summary),
        Format::Json => to_json(summary)?,
    };
    write_text(path, &text)
}
