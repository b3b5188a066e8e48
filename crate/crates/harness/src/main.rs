use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use serde_json::json;

use dpkm::coreset::{coreset_check, CoresetEnvelope};
use dpkm::lsh::{collision_probability_estimate, LshParams};
use dpkm::rng::DpRng;
use dpkm_harness::config::{default_output_dir, ExperimentConfig, PipelineKind};
use dpkm_harness::data::generate_mixture;
use dpkm_harness::experiment::{check_thresholds, read_metrics, run_experiment, summarize, summary_csv};
use dpkm_harness::points::{ingest, write_points, NormPolicy};

#[derive(Parser)]
#[command(name = "dpkm", version, about = "Differentially private k-means experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted mixture as a point file.
    Gen {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        separation: f64,
        #[arg(long, default_value_t = 0.02)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write ground-truth labels, one per line.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Run an experiment from a TOML config. Exits non-zero if a threshold fails.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, value_parser = parse_pipeline)]
        pipeline: Option<PipelineKind>,
    },
    /// Measure a (gamma, eta) envelope for a weighted point file against data.
    CheckCoreset {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        coreset: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Report derived hash parameters and measured collision rates.
    CalibrateLsh {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.2)]
        a: f64,
        #[arg(long, default_value_t = 0.1)]
        b: f64,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 5)]
        d: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarize a finished run's metrics.
    Report {
        /// Run directory; defaults to DPKM_OUT_DIR or ./dpkm-out.
        dir: Option<PathBuf>,
    },
}

fn parse_pipeline(s: &str) -> std::result::Result<PipelineKind, String> {
    match s {
        "centralized" => Ok(PipelineKind::Centralized),
        "ldp" => Ok(PipelineKind::Ldp),
        "centralized-coreset" => Ok(PipelineKind::CentralizedCoreset),
        "ldp-coreset" => Ok(PipelineKind::LdpCoreset),
        other => Err(format!("unknown pipeline {other:?}")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen {
            k,
            d,
            n,
            separation,
            sigma,
            lambda,
            seed,
            out,
            labels,
        } => {
            let m = generate_mixture(k, d, n, separation, sigma, lambda, &mut DpRng::seed_from_u64(seed))?;
            write_points(&out, &m.dataset)?;
            if let Some(path) = labels {
                let body: String = m.labels.iter().map(|l| format!("{l}\n")).collect();
                std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            config,
            out,
            seed,
            trials,
            workers,
            k,
            epsilon,
            delta,
            pipeline,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = trials {
                cfg.trials = v;
            }
            if let Some(v) = workers {
                cfg.workers = v;
            }
            if let Some(v) = k {
                cfg.k = v;
            }
            if let Some(v) = epsilon {
                cfg.privacy.epsilon = v;
            }
            if let Some(v) = delta {
                cfg.privacy.delta = v;
            }
            if let Some(v) = pipeline {
                cfg.pipeline = v;
            }
            let dir = out.unwrap_or_else(|| cfg.output_dir());
            let report = run_experiment(&cfg, &dir)?;
            print!("{}", summary_csv(&report.summary));
            for t in &report.thresholds {
                println!(
                    "{} {} {:?} = {} (min {:?}, max {:?}) [{}]",
                    if t.passed { "PASS" } else { "FAIL" },
                    t.threshold.metric,
                    t.threshold.statistic,
                    t.value.map_or("missing".to_string(), |v| v.to_string()),
                    t.threshold.min,
                    t.threshold.max,
                    t.threshold.provenance
                );
            }
            println!("wrote {}", dir.display());
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::CheckCoreset {
            data,
            coreset,
            k,
            trials,
            seed,
        } => {
            let s = ingest(&data, None, NormPolicy::Reject)?.into_plain()?;
            let p = ingest(&coreset, Some(s.dim()), NormPolicy::Reject)?.into_weighted();
            let env = coreset_check(&s, &p, k, trials, &mut DpRng::seed_from_u64(seed))?;
            let out = json!({
                "gamma": env.gamma,
                "eta": env.eta,
                "eta_at_unit_gamma": env.eta_at_unit_gamma,
                "probes": env.probes.len(),
                "note": CoresetEnvelope::NOTE,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::CalibrateLsh {
            n,
            a,
            b,
            r,
            d,
            trials,
            seed,
        } => {
            let params = LshParams::new(r, a, b, n)?;
            let mut rng = DpRng::seed_from_u64(seed);
            let near = collision_probability_estimate(&params, d, r, trials, &mut rng)?;
            let far = collision_probability_estimate(&params, d, params.c * r, trials, &mut rng)?;
            let nf = n as f64;
            let out = json!({
                "n": n, "a": a, "b": b, "r": r, "d": d,
                "width": params.width,
                "concat": params.concat,
                "c": params.c,
                "b_effective": params.b_effective,
                "p_base": params.p_base,
                "q_base": params.q_base,
                "p_near": params.p_near(),
                "q_far": params.q_far(),
                "far_target": nf.powf(-2.0 - a),
                "universe": params.universe,
                "near_measured": { "estimate": near.estimate, "lower": near.lower, "upper": near.upper },
                "far_measured": { "estimate": far.estimate, "lower": far.lower, "upper": far.upper },
                "trials": trials,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dir } => {
            let dir = dir.unwrap_or_else(default_output_dir);
            let records = read_metrics(&dir.join("metrics.jsonl"))?;
            let summary = summarize(&records);
            print!("{}", summary_csv(&summary));
            let thresholds_path = dir.join("thresholds.json");
            if thresholds_path.exists() {
                let text = std::fs::read_to_string(&thresholds_path)?;
                let stored: Vec<dpkm_harness::experiment::ThresholdResult> = serde_json::from_str(&text)?;
                let specs: Vec<_> = stored.into_iter().map(|t| t.threshold).collect();
                let mut all = true;
                for t in check_thresholds(&specs, &summary) {
                    all &= t.passed;
                    println!("{} {} {:?}", if t.passed { "PASS" } else { "FAIL" }, t.threshold.metric, t.value);
                }
                return Ok(if all { ExitCode::SUCCESS } else { ExitCode::FAILURE });
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
