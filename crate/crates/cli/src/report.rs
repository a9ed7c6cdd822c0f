//! Output files: results.csv / results.json / summary.csv / manifest.json.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiment::{run_trials, trial_seed, AttackEntry, ResultRow};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hex SHA-256 of the canonical JSON form of the config. The output directory is
/// left out: where results land does not change them.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let mut c = cfg.clone();
    c.output_dir = PathBuf::new();
    let bytes = serde_json::to_vec(&c)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub trial_seeds: Vec<u64>,
    pub emitted_files: Vec<PathBuf>,
    /// Reporting conventions that the numbers depend on, keyed by the field they affect.
    pub conventions: BTreeMap<String, String>,
    /// Seconds since the Unix epoch. The only time-dependent field of a run.
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, master_seed: u64, trial_seeds: Vec<u64>) -> Self {
        Self {
            command: command.to_string(),
            config_hash,
            tool_version: TOOL_VERSION.to_string(),
            master_seed,
            trial_seeds,
            emitted_files: Vec::new(),
            conventions: conventions(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    /// Writes manifest.json into `dir` (listing itself last).
    pub fn write(mut self, dir: &Path) -> Result<Self, CliError> {
        let path = dir.join("manifest.json");
        self.emitted_files.push(path.clone());
        write_json(&path, &self)?;
        Ok(self)
    }
}

fn conventions() -> BTreeMap<String, String> {
    [
        (
            "mean_rank",
            "raw rank 1 + #(pool points scoring strictly above the AE) within references + AE; larger is stealthier",
        ),
        (
            "poisoning",
            "injected AEs are perturbed copies of held-out source items, never of gallery items",
        ),
        ("best_iterate", "reported AEs are the best iterate; objective traces hold every iterate"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| io_at(path, e))?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f).map_err(|e| io_at(path, e))?;
    f.flush().map_err(|e| io_at(path, e))
}

pub fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| io_at(path, e))
}

pub fn io_at(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Across-trial mean of one method at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sweep_parameter: String,
    pub sweep_value: Option<f64>,
    pub attack: String,
    pub trials: usize,
    pub asr_mean: f64,
    pub asr_std: f64,
    pub asrd_mean: f64,
    pub asrd_std: f64,
    pub mean_rank: Option<f64>,
    pub recall_drop: Option<f64>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn mean_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = v.collect();
    v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Groups rows by (sweep value, attack), keeping first-appearance order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(Option<u64>, String)> = Vec::new();
    let mut groups: BTreeMap<(Option<u64>, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.sweep_value.map(f64::to_bits), r.attack.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let (asr_mean, asr_std) = mean_std(&g.iter().map(|r| r.asr).collect::<Vec<_>>());
            let (asrd_mean, asrd_std) = mean_std(&g.iter().map(|r| r.asrd).collect::<Vec<_>>());
            SummaryRow {
                sweep_parameter: g[0].sweep_parameter.clone(),
                sweep_value: g[0].sweep_value,
                attack: key.1.clone(),
                trials: g.len(),
                asr_mean,
                asr_std,
                asrd_mean,
                asrd_std,
                mean_rank: mean_opt(g.iter().map(|r| r.mean_rank)),
                recall_drop: mean_opt(g.iter().map(|r| r.recall_drop)),
            }
        })
        .collect()
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub manifest: RunManifest,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

/// Validates, runs every trial, and writes results.csv, results.json, summary.csv,
/// attacks.json (when `keep_attacks`) and manifest.json into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize, command: &str, keep_attacks: bool) -> Result<ExperimentRun, CliError> {
    cfg.validate()?;
    let hash = config_hash(cfg)?;
    let outputs = run_trials(cfg, jobs, &hash, keep_attacks)?;
    let rows: Vec<ResultRow> = outputs.iter().flat_map(|o| o.rows.iter().cloned()).collect();
    let summary = summarize(&rows);

    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| io_at(dir, e))?;
    let seeds = (0..cfg.trials).map(|t| trial_seed(cfg.seed, t)).collect();
    let mut manifest = RunManifest::new(command, hash, cfg.seed, seeds);

    let path = dir.join("results.csv");
    write_csv_rows(&path, &rows)?;
    manifest.emitted_files.push(path);
    let path = dir.join("results.json");
    write_json(&path, &rows)?;
    manifest.emitted_files.push(path);
    let path = dir.join("summary.csv");
    write_csv_rows(&path, &summary)?;
    manifest.emitted_files.push(path);
    if keep_attacks {
        let attacks: Vec<&AttackEntry> = outputs.iter().flat_map(|o| o.attacks.iter()).collect();
        let path = dir.join("attacks.json");
        write_json(&path, &attacks)?;
        manifest.emitted_files.push(path);
    }
    let path = dir.join("config.json");
    write_json(&path, cfg)?;
    manifest.emitted_files.push(path);
    let manifest = manifest.write(dir)?;
    Ok(ExperimentRun { manifest, rows, summary })
}
