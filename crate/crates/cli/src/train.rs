//! `train`: runs one algorithm and writes `manifest.json`, `log.jsonl` and
//! `model.ckpt` into the output directory.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use dmil_core::checkpoint::Checkpoint;
use dmil_core::data::Dataset;
use dmil_core::env::{LinearEnv, Task};
use dmil_core::trainer::{check_dims, train, Algo, TrainConfig, TrainLog};

use crate::gen_data::parse_task;
use crate::manifest::{now, sha256_file, DatasetHash, RunManifest, CODE_VERSION};
use crate::{usage, Classify, CliError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOG_FILE: &str = "log.jsonl";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// bc, bc-d, two-phase-bc-d, dmil or d2mil (overrides the config file).
    #[arg(long, value_parser = parse_algo)]
    pub algo: Option<Algo>,
    /// JSON configuration; absent fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Expert dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Suboptimal dataset CSV (D2MIL only).
    #[arg(long)]
    pub data_suboptimal: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub total_steps: Option<usize>,
    #[arg(long, value_parser = parse_task)]
    pub env: Option<Task>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_algo(s: &str) -> Result<Algo, String> {
    Algo::parse(s).map_err(|e| e.to_string())
}

/// Reads the config file and applies flag overrides.
pub fn resolve_config(a: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).usage_err()?;
            TrainConfig::from_json(&text).with_context(|| format!("parsing {}", p.display())).usage_err()?
        }
        None => TrainConfig::default(),
    };
    if let Some(algo) = a.algo {
        cfg.algo = algo;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(steps) = a.total_steps {
        cfg.total_steps = steps;
    }
    if let Some(env) = a.env {
        cfg.env = env;
    }
    cfg.validate().usage_err()?;
    Ok(cfg)
}

fn load(path: &Path, role: &str) -> Result<(Dataset, DatasetHash), CliError> {
    let data =
        Dataset::read_csv(path).with_context(|| format!("loading {role} dataset {}", path.display())).usage_err()?;
    if data.is_empty() {
        return Err(usage(format!("{role} dataset {} has no transitions", path.display())));
    }
    let sha256 = sha256_file(path).usage_err()?;
    Ok((data, DatasetHash { role: role.into(), path: path.to_path_buf(), sha256 }))
}

pub fn run(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve_config(a)?;
    match (cfg.algo, &a.data_suboptimal) {
        (Algo::D2mil, None) => return Err(usage("--algo d2mil needs --data-suboptimal")),
        (algo, Some(_)) if algo != Algo::D2mil => {
            return Err(usage(format!("--data-suboptimal is only used by d2mil, not {}", algo.name())))
        }
        _ => {}
    }
    let env = LinearEnv::for_task(cfg.env);
    let (expert, expert_hash) = load(&a.data, "expert")?;
    check_dims(expert.state_dim(), expert.action_dim(), &env).usage_err()?;
    let mut hashes = vec![expert_hash];
    let suboptimal = match &a.data_suboptimal {
        Some(p) => {
            let (d, h) = load(p, "suboptimal")?;
            check_dims(d.state_dim(), d.action_dim(), &env).usage_err()?;
            hashes.push(h);
            Some(d)
        }
        None => None,
    };
    let manifest_path = a.out.join(MANIFEST_FILE);
    if manifest_path.exists() {
        let previous = RunManifest::read(&manifest_path).usage_err()?;
        for h in &hashes {
            if let Some(p) = previous.datasets.iter().find(|p| p.role == h.role && p.sha256 != h.sha256) {
                return Err(usage(format!(
                    "{} already holds a run on a different {} dataset (sha256 {}); choose a fresh --out",
                    a.out.display(),
                    h.role,
                    p.sha256
                )));
            }
        }
    }

    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display())).runtime_err()?;
    let mut manifest = RunManifest {
        config: cfg.clone(),
        datasets: hashes,
        code_version: CODE_VERSION.into(),
        seed: cfg.seed,
        started_at: now(),
        finished_at: None,
        status: "running".into(),
    };
    manifest.write(&manifest_path).runtime_err()?;

    let mut log = TrainLog::default();
    let result = train(&cfg, &expert, suboptimal.as_ref(), &mut log);
    let log_path = a.out.join(LOG_FILE);
    let log_written = std::fs::File::create(&log_path)
        .map_err(anyhow::Error::from)
        .and_then(|f| Ok(log.write_jsonl(std::io::BufWriter::new(f))?));
    manifest.finished_at = Some(now());
    let models = match result {
        Ok(m) => m,
        Err(e) => {
            manifest.status = format!("failed: {e}");
            let _ = manifest.write(&manifest_path);
            return Err(CliError::Runtime(anyhow::Error::from(e).context("training failed")));
        }
    };
    log_written.with_context(|| format!("writing {}", log_path.display())).runtime_err()?;
    Checkpoint::from_models(&models).save(&a.out.join(CHECKPOINT_FILE)).runtime_err()?;
    manifest.status = "completed".into();
    manifest.write(&manifest_path).runtime_err()?;

    if let Some(e) = log.final_eval() {
        writeln!(
            out,
            "{} finished {} steps: final score {:.3} ± {:.3}",
            cfg.algo.name(),
            cfg.total_steps,
            e.mean,
            e.std
        )
        .runtime_err()?;
    }
    writeln!(out, "outputs in {}", a.out.display()).runtime_err()?;
    Ok(())
}
