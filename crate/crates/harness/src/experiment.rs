//! Running configured experiments and writing their metrics.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dpkm::baseline::kmeanspp_lloyd;
use dpkm::budget::LedgerLine;
use dpkm::candidates::additive_floor_shape;
use dpkm::coreset::{centralized_coreset, coreset_check, ldp_coreset};
use dpkm::geometry::{MAX_ENUM_CANDIDATES, MAX_ENUM_K};
use dpkm::ldp::{ldp_k_means, ClientPool, LdpTranscript};
use dpkm::pipeline::centralized_k_means;
use dpkm::rng::{derive_seed, DpRng};
use dpkm::{cost, opt_over_candidates, BudgetLedger, CenterSet, Dataset, Point, PrivacyBudget, WeightedDataset};

use crate::config::{DatasetSpec, ExperimentConfig, PipelineKind, Statistic, Threshold};
use crate::data::{generate_mixture, purity};
use crate::error::{io_error, Result};
use crate::points::{ingest, NormPolicy};

/// Independent random streams of one trial.
const PIPELINE_STREAM: u64 = 0;
const BASELINE_STREAM: u64 = 1;
const CLIENT_STREAM: u64 = 2;
const CHECK_STREAM: u64 = 3;

/// Everything a pipeline makes public. Metrics labeled as released are
/// computed from this and the evaluation data only.
#[derive(Debug, Clone, Copy)]
pub struct Released<'a> {
    pub centers: &'a CenterSet,
    pub candidates: &'a [Point],
    pub transcript: Option<&'a LdpTranscript>,
    pub coreset: Option<&'a WeightedDataset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleasedMetrics {
    pub private_cost: f64,
    pub candidate_count: usize,
    pub rounds: Option<usize>,
    /// Best cost over `k`-subsets of the candidates, when small enough to enumerate.
    pub opt_over_candidates: Option<f64>,
    pub coreset_size: Option<usize>,
    pub coreset_total_weight: Option<f64>,
}

pub fn released_metrics(s: &Dataset, k: usize, released: Released<'_>) -> Result<ReleasedMetrics> {
    let candidates = released.candidates;
    let enumerable = k <= MAX_ENUM_K && candidates.len() <= MAX_ENUM_CANDIDATES && k <= candidates.len();
    Ok(ReleasedMetrics {
        private_cost: cost(s, released.centers)?,
        candidate_count: candidates.len(),
        rounds: released.transcript.map(|t| t.round_count()),
        opt_over_candidates: if enumerable {
            Some(opt_over_candidates(s, candidates, k)?.1)
        } else {
            None
        },
        coreset_size: released.coreset.map(|c| c.len()),
        coreset_total_weight: released.coreset.map(|c| c.total_weight()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub depth: usize,
    pub label: String,
    pub rule: String,
    pub epsilon: f64,
    pub delta: f64,
}

impl From<LedgerLine> for LedgerEntry {
    fn from(l: LedgerLine) -> Self {
        LedgerEntry {
            depth: l.depth,
            label: l.label,
            rule: l.rule.to_string(),
            epsilon: l.epsilon,
            delta: l.delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoresetMetrics {
    pub gamma: f64,
    pub eta: f64,
    pub eta_at_unit_gamma: f64,
    pub probes: usize,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub trial: u64,
    pub seed: u64,
    pub pipeline: String,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub released: ReleasedMetrics,
    pub baseline_cost: f64,
    pub cost_ratio: f64,
    pub padded: usize,
    /// Unit-constant shape of the additive error bound, centralized only.
    pub additive_floor_shape: Option<f64>,
    pub purity: Option<f64>,
    pub coreset: Option<CoresetMetrics>,
    pub ledger: Vec<LedgerEntry>,
    pub ledger_epsilon: f64,
    pub ledger_delta: f64,
    /// The ledger audits and its total equals the configured budget.
    pub ledger_ok: bool,
    pub max_user_epsilon: Option<f64>,
}

impl MetricsRecord {
    /// Numeric metrics by name, for summaries and thresholds.
    pub fn metric(&self, name: &str) -> Option<f64> {
        let r = &self.released;
        match name {
            "private_cost" => Some(r.private_cost),
            "baseline_cost" => Some(self.baseline_cost),
            "cost_ratio" => Some(self.cost_ratio),
            "candidate_count" => Some(r.candidate_count as f64),
            "rounds" => r.rounds.map(|v| v as f64),
            "opt_over_candidates" => r.opt_over_candidates,
            "padded" => Some(self.padded as f64),
            "additive_floor_shape" => self.additive_floor_shape,
            "purity" => self.purity,
            "coreset_gamma" => self.coreset.as_ref().map(|c| c.gamma),
            "coreset_eta" => self.coreset.as_ref().map(|c| c.eta),
            "coreset_eta_unit_gamma" => self.coreset.as_ref().map(|c| c.eta_at_unit_gamma),
            "coreset_total_weight" => r.coreset_total_weight,
            "ledger_ok" => Some(if self.ledger_ok { 1.0 } else { 0.0 }),
            "max_user_epsilon" => self.max_user_epsilon,
            _ => None,
        }
    }
}

pub const SUMMARY_METRICS: &[&str] = &[
    "private_cost",
    "baseline_cost",
    "cost_ratio",
    "candidate_count",
    "rounds",
    "opt_over_candidates",
    "padded",
    "additive_floor_shape",
    "purity",
    "coreset_gamma",
    "coreset_eta",
    "coreset_eta_unit_gamma",
    "coreset_total_weight",
    "ledger_ok",
    "max_user_epsilon",
];

/// One trial's outputs.
#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub record: MetricsRecord,
    pub transcript: Option<String>,
    pub wall_seconds: f64,
}

/// The dataset and, for generated data, its ground-truth labels.
pub fn load_dataset(config: &ExperimentConfig) -> Result<(Dataset, Option<Vec<usize>>)> {
    match &config.dataset {
        DatasetSpec::Mixture {
            n,
            d,
            separation,
            sigma,
            lambda,
            data_seed,
        } => {
            let mut rng = DpRng::seed_from_u64(data_seed.unwrap_or(config.seed));
            let m = generate_mixture(config.k, *d, *n, *separation, *sigma, *lambda, &mut rng)?;
            Ok((m.dataset, Some(m.labels)))
        }
        DatasetSpec::File { path, project } => {
            let policy = if *project { NormPolicy::Project } else { NormPolicy::Reject };
            Ok((ingest(path, None, policy)?.into_plain()?, None))
        }
    }
}

/// Seed of trial `trial`: the master seed XOR the trial index.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    master ^ trial
}

pub fn run_trial(config: &ExperimentConfig, s: &Dataset, labels: Option<&[usize]>, trial: u64) -> Result<TrialOutput> {
    let start = Instant::now();
    let seed = trial_seed(config.seed, trial);
    let k = config.k;
    let p = config.privacy;
    let mut rng = DpRng::seed_from_u64(derive_seed(seed, PIPELINE_STREAM));
    let baseline = kmeanspp_lloyd(s, k, &mut DpRng::seed_from_u64(derive_seed(seed, BASELINE_STREAM)))?;
    let baseline_cost = cost(s, &baseline)?;
    let clients = || ClientPool::new(s, derive_seed(seed, CLIENT_STREAM));
    let mut check_rng = DpRng::seed_from_u64(derive_seed(seed, CHECK_STREAM));

    let configured = match config.pipeline {
        PipelineKind::Centralized | PipelineKind::CentralizedCoreset => PrivacyBudget::new(p.epsilon, p.delta)?,
        PipelineKind::Ldp | PipelineKind::LdpCoreset => PrivacyBudget::pure(p.epsilon)?,
    };
    let candidate_config = config.knobs.candidate_config();
    let ldp_config = config.knobs.ldp_config();

    let (centers, candidates, transcript, coreset, ledger, padded, floor): (
        CenterSet,
        Vec<Point>,
        Option<LdpTranscript>,
        Option<WeightedDataset>,
        BudgetLedger,
        usize,
        Option<f64>,
    ) = match config.pipeline {
        PipelineKind::Centralized => {
            let out = centralized_k_means(s, k, configured, p.beta, &candidate_config, &mut rng)?;
            let floor = additive_floor_shape(&out.discovery.schedule, s.lambda());
            (out.centers, out.candidates, None, None, out.ledger, out.padded, Some(floor))
        }
        PipelineKind::Ldp => {
            let out = ldp_k_means(&clients(), k, p.epsilon, p.beta, &ldp_config, &mut rng)?;
            (out.centers, out.candidates, Some(out.transcript), None, out.ledger, out.padded, None)
        }
        PipelineKind::CentralizedCoreset => {
            let out = centralized_coreset(s, k, configured, p.beta, &candidate_config, false, &mut rng)?;
            let pts = out.coreset.points.clone();
            let centers = CenterSet::new(pts.points().to_vec())?;
            (centers, pts.points().to_vec(), None, Some(pts), out.ledger, 0, None)
        }
        PipelineKind::LdpCoreset => {
            let out = ldp_coreset(&clients(), k, p.epsilon, p.beta, &ldp_config, &mut rng)?;
            let pts = out.coreset.points.clone();
            let centers = CenterSet::new(pts.points().to_vec())?;
            (centers, pts.points().to_vec(), Some(out.transcript), Some(pts), out.ledger, 0, None)
        }
    };

    let released = released_metrics(
        s,
        k,
        Released {
            centers: &centers,
            candidates: &candidates,
            transcript: transcript.as_ref(),
            coreset: coreset.as_ref(),
        },
    )?;
    let coreset_metrics = match &coreset {
        Some(c) => {
            let env = coreset_check(s, c, k, config.knobs.coreset_trials, &mut check_rng)?;
            Some(CoresetMetrics {
                gamma: env.gamma,
                eta: env.eta,
                eta_at_unit_gamma: env.eta_at_unit_gamma,
                probes: env.probes.len(),
                note: dpkm::coreset::CoresetEnvelope::NOTE.to_string(),
            })
        }
        None => None,
    };
    let purity = match labels {
        Some(l) => {
            let assignment = s
                .points()
                .iter()
                .map(|x| dpkm::nearest(x, &centers).map(|(j, _)| j))
                .collect::<std::result::Result<Vec<usize>, _>>()?;
            Some(purity(l, &assignment))
        }
        None => None,
    };
    let total = ledger.total();
    let ledger_ok = ledger.audit().is_ok() && total.approx_eq(&configured);
    let max_user_epsilon = transcript
        .as_ref()
        .map(|t| t.per_user_epsilon(s.len()).into_iter().fold(0.0, f64::max));
    let record = MetricsRecord {
        trial,
        seed,
        pipeline: config.pipeline.name().to_string(),
        n: s.len(),
        d: s.dim(),
        k,
        epsilon: p.epsilon,
        delta: configured.delta(),
        baseline_cost,
        cost_ratio: released.private_cost / baseline_cost.max(f64::MIN_POSITIVE),
        released,
        padded,
        additive_floor_shape: floor,
        purity,
        coreset: coreset_metrics,
        ledger: ledger.lines().into_iter().map(LedgerEntry::from).collect(),
        ledger_epsilon: total.epsilon(),
        ledger_delta: total.delta(),
        ledger_ok,
        max_user_epsilon,
    };
    Ok(TrialOutput {
        record,
        transcript: transcript.map(|t| t.serialize()),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs every trial, on up to `config.workers` threads, returning outputs in
/// trial order.
pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialOutput>> {
    config.validate()?;
    let (s, labels) = load_dataset(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| crate::error::HarnessError::Config(e.to_string()))?;
    pool.install(|| {
        (0..config.trials as u64)
            .into_par_iter()
            .map(|t| run_trial(config, &s, labels.as_deref(), t))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub count: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub mean: f64,
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(records: &[MetricsRecord]) -> Vec<MetricSummary> {
    SUMMARY_METRICS
        .iter()
        .filter_map(|&name| {
            let mut values: Vec<f64> = records.iter().filter_map(|r| r.metric(name)).collect();
            if values.is_empty() {
                return None;
            }
            values.sort_by(f64::total_cmp);
            Some(MetricSummary {
                metric: name.to_string(),
                count: values.len(),
                min: values[0],
                q25: quantile(&values, 0.25),
                median: quantile(&values, 0.5),
                q75: quantile(&values, 0.75),
                max: values[values.len() - 1],
                mean: values.iter().sum::<f64>() / values.len() as f64,
            })
        })
        .collect()
}

pub fn summary_csv(summary: &[MetricSummary]) -> String {
    let mut out = String::from("metric,count,min,q25,median,q75,max,mean\n");
    for m in summary {
        writeln!(
            out,
            "{},{},{:?},{:?},{:?},{:?},{:?},{:?}",
            m.metric, m.count, m.min, m.q25, m.median, m.q75, m.max, m.mean
        )
        .expect("writing to a String");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub threshold: Threshold,
    pub value: Option<f64>,
    pub passed: bool,
}

pub fn check_thresholds(thresholds: &[Threshold], summary: &[MetricSummary]) -> Vec<ThresholdResult> {
    thresholds
        .iter()
        .map(|t| {
            let value = summary.iter().find(|m| m.metric == t.metric).map(|m| match t.statistic {
                Statistic::Min => m.min,
                Statistic::Median => m.median,
                Statistic::Mean => m.mean,
                Statistic::Max => m.max,
            });
            let passed = value.is_some_and(|v| t.min.is_none_or(|lo| v >= lo) && t.max.is_none_or(|hi| v <= hi));
            ThresholdResult {
                threshold: t.clone(),
                value,
                passed,
            }
        })
        .collect()
}

/// What a run wrote and whether its thresholds held.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub records: Vec<MetricsRecord>,
    pub summary: Vec<MetricSummary>,
    pub thresholds: Vec<ThresholdResult>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.thresholds.iter().all(|t| t.passed)
    }
}

/// Runs the experiment and writes `metrics.jsonl`, `summary.csv`,
/// `thresholds.json`, one transcript per local-model trial, and wall-clock
/// times in the separate `timings.jsonl` so that the other files depend only
/// on the configuration and seed.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    let outputs = run_trials(config)?;
    fs::create_dir_all(out_dir).map_err(io_error(out_dir))?;
    let mut metrics = String::new();
    let mut timings = String::new();
    for o in &outputs {
        metrics.push_str(&serde_json::to_string(&o.record).expect("metrics serialize"));
        metrics.push('\n');
        writeln!(timings, "{{\"trial\":{},\"wall_seconds\":{}}}", o.record.trial, o.wall_seconds).expect("writing to a String");
        if let Some(t) = &o.transcript {
            let path = out_dir.join(format!("transcript-{}.tsv", o.record.trial));
            fs::write(&path, t).map_err(io_error(&path))?;
        }
    }
    let records: Vec<MetricsRecord> = outputs.into_iter().map(|o| o.record).collect();
    let summary = summarize(&records);
    let thresholds = check_thresholds(&config.thresholds, &summary);
    let files = [
        ("metrics.jsonl", metrics),
        ("summary.csv", summary_csv(&summary)),
        (
            "thresholds.json",
            serde_json::to_string_pretty(&thresholds).expect("thresholds serialize") + "\n",
        ),
        ("timings.jsonl", timings),
    ];
    for (name, body) in files {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(io_error(&path))?;
    }
    Ok(RunReport {
        records,
        summary,
        thresholds,
    })
}

/// Reads `metrics.jsonl` back.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| crate::error::HarnessError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}
