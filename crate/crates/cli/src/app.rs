//! Command-line front end.

use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pta_core::numerics::unit_normalize;
use pta_core::synthworld::{read_embedding_csv, write_embedding_csv};
use pta_core::Embedding;

use crate::config::{load_config, parse_override_args, ExperimentConfig, Task};
use crate::error::CliError;
use crate::report::{io_at, run_experiment, write_json, RunManifest};
use crate::theory_suite::{replay, run_theory_suite, TheoryConfig};

#[derive(Debug, Parser)]
#[command(name = "pta", version, about = "Proxy targeted attacks on synthetic cross-modal embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Craft AEs, evaluate them, and also store every AE in attacks.json.
    Attack(RunArgs),
    /// Run the configured experiment.
    Eval(RunArgs),
    /// Run the experiment with the gallery-poisoning task.
    Poison(RunArgs),
    /// Run the configured sweep (the config must contain one).
    Sweep(RunArgs),
    /// Randomized checks of the theoretical results.
    Theory(TheoryArgs),
    /// Score an embedding CSV with the configured detector.
    Detect(DetectArgs),
    /// Validate (and optionally normalize) an embedding CSV.
    Import(ImportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Concurrent trials.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value_t = 500)]
    pub polytope_count: usize,
    #[arg(long, default_value_t = 2)]
    pub dim_min: usize,
    #[arg(long, default_value_t = 64)]
    pub dim_max: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value = "pta-theory")]
    pub out: PathBuf,
    /// Re-run the cases of a replay.json instead of sweeping.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Embedding CSV (`tag,x1,x2,...`).
    #[arg(long)]
    pub file: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Source,
    Target,
    Reference,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub file: PathBuf,
    #[arg(long, value_enum)]
    pub role: Role,
    /// Scale every row to unit length.
    #[arg(long)]
    pub normalize: bool,
    /// Where `<role>.csv` is written.
    #[arg(long, default_value = "pta-import")]
    pub out: PathBuf,
}

/// Parses and validates an embedding CSV, optionally unit-normalizing each row.
pub fn import_embeddings(path: &Path, normalize: bool) -> Result<Vec<(String, Embedding)>, CliError> {
    let f = std::fs::File::open(path).map_err(|e| io_at(path, e))?;
    let rows = read_embedding_csv(BufReader::new(f)).map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))?;
    if !normalize {
        return Ok(rows);
    }
    rows.into_iter()
        .map(|(tag, e)| Ok((tag, unit_normalize(&e)?)))
        .collect()
}

/// Top-level config fields that may be set without a dot.
const TOP_LEVEL_FIELDS: [&str; 5] = ["name", "methods", "trials", "seed", "output_dir"];

/// Moves config-path flags (`--a.b=v`, `--a.b v`, `--trials 3`) out of `args`.
pub fn split_dotted(args: &[String]) -> (Vec<String>, Vec<String>) {
    let mut plain = Vec::new();
    let mut dotted = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        let name = a.strip_prefix("--").map(|b| b.split('=').next().unwrap_or(b));
        if name.is_some_and(|n| n.contains('.') || TOP_LEVEL_FIELDS.contains(&n)) {
            dotted.push(a.clone());
            if !a.contains('=') && i + 1 < args.len() {
                dotted.push(args[i + 1].clone());
                i += 1;
            }
        } else {
            plain.push(a.clone());
        }
        i += 1;
    }
    (plain, dotted)
}

fn experiment_config(args: &RunArgs, dotted: &[String], env_seed: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let overrides = parse_override_args(dotted)?;
    let mut cfg = load_config(args.config.as_deref(), &overrides, env_seed)?;
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

/// Runs one invocation. `args` includes the program name.
pub fn run(args: &[String], env_seed: Option<&str>) -> Result<String, CliError> {
    let (plain, dotted) = split_dotted(args);
    let cli = match Cli::try_parse_from(&plain) {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => return Ok(e.to_string()),
            _ => return Err(CliError::Validation(vec![e.to_string().trim_end().to_string()])),
        },
    };
    let no_dotted = |what: &str| {
        if dotted.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(vec![format!("`{what}` takes no dotted overrides: {}", dotted.join(" "))]))
        }
    };
    match cli.command {
        Command::Attack(a) => experiment("attack", &a, &dotted, env_seed, true, |_| Ok(())),
        Command::Eval(a) => experiment("eval", &a, &dotted, env_seed, false, |_| Ok(())),
        Command::Poison(a) => experiment("poison", &a, &dotted, env_seed, false, |cfg| {
            cfg.evaluation.task = Task::Poisoning;
            Ok(())
        }),
        Command::Sweep(a) => experiment("sweep", &a, &dotted, env_seed, false, |cfg| {
            if cfg.sweep.is_none() {
                return Err(CliError::Validation(vec!["sweep: required by the `sweep` subcommand".into()]));
            }
            Ok(())
        }),
        Command::Theory(t) => {
            no_dotted("theory")?;
            theory(&t, env_seed)
        }
        Command::Detect(d) => detect(&d, &dotted, env_seed),
        Command::Import(i) => {
            no_dotted("import")?;
            let rows = import_embeddings(&i.file, i.normalize)?;
            std::fs::create_dir_all(&i.out).map_err(|e| io_at(&i.out, e))?;
            let path = i.out.join(format!("{}.csv", serde_json::to_value(i.role)?.as_str().unwrap_or("embeddings")));
            let f = std::fs::File::create(&path).map_err(|e| io_at(&path, e))?;
            write_embedding_csv(std::io::BufWriter::new(f), &rows).map_err(|e| io_at(&path, e))?;
            let dim = rows.first().map(|r| r.1.dim()).unwrap_or(0);
            Ok(format!("imported {} embeddings of dimension {dim} → {}", rows.len(), path.display()))
        }
    }
}

fn experiment(
    name: &str,
    args: &RunArgs,
    dotted: &[String],
    env_seed: Option<&str>,
    keep_attacks: bool,
    adjust: impl FnOnce(&mut ExperimentConfig) -> Result<(), CliError>,
) -> Result<String, CliError> {
    let mut cfg = experiment_config(args, dotted, env_seed)?;
    adjust(&mut cfg)?;
    let run = run_experiment(&cfg, args.jobs, name, keep_attacks)?;
    let mut text = format!(
        "{} rows, config {} → {}\n",
        run.rows.len(),
        &run.manifest.config_hash[..12],
        cfg.output_dir.display()
    );
    for s in &run.summary {
        let point = match s.sweep_value {
            Some(v) => format!("{}={v} ", s.sweep_parameter),
            None => String::new(),
        };
        text.push_str(&format!(
            "{point}{:<10} ASR {:6.2} ± {:5.2}  ASRD {:6.2} ± {:5.2}",
            s.attack, s.asr_mean, s.asr_std, s.asrd_mean, s.asrd_std
        ));
        if let Some(r) = s.mean_rank {
            text.push_str(&format!("  rank {r:.1}"));
        }
        if let Some(d) = s.recall_drop {
            text.push_str(&format!("  R@1 drop {d:.2}"));
        }
        text.push('\n');
    }
    Ok(text)
}

fn theory(t: &TheoryArgs, env_seed: Option<&str>) -> Result<String, CliError> {
    if let Some(path) = &t.replay {
        let outcomes = replay(path)?;
        let bad = outcomes.iter().filter(|o| !o.matches).count();
        let mut text = String::new();
        for o in &outcomes {
            text.push_str(&format!("{}: recorded {:e}, reproduced {:e}\n", o.kind, o.recorded, o.reproduced));
        }
        if bad > 0 {
            return Err(CliError::Io(format!("{bad} replayed cases did not reproduce")));
        }
        return Ok(text);
    }
    let seed = match env_seed {
        Some(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(vec![format!("PTA_SEED: `{s}` is not an unsigned integer")]))?,
        None => t.seed,
    };
    let cfg = TheoryConfig {
        count: t.count,
        polytope_count: t.polytope_count,
        dim_min: t.dim_min,
        dim_max: t.dim_max,
        seed,
        tol: t.tol,
        output_dir: t.out.clone(),
        ..TheoryConfig::default()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(t.jobs.max(1))
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let (_, s) = pool.install(|| run_theory_suite(&cfg))?;
    Ok(format!(
        "{} trade-off instances: max gap {:e}, {} monotonicity violations; {} polytope checks: {} violations ({:.2}s)\n",
        s.instances, s.max_gap, s.monotonicity_violations, s.polytope_instances, s.bound_violations, s.seconds
    ))
}

fn detect(d: &DetectArgs, dotted: &[String], env_seed: Option<&str>) -> Result<String, CliError> {
    let overrides = parse_override_args(dotted)?;
    let cfg = load_config(d.config.as_deref(), &overrides, env_seed)?;
    let det = &cfg.detection;
    let problems = det.violations();
    if !problems.is_empty() {
        return Err(CliError::Validation(problems.into_iter().map(|p| format!("detection.{p}")).collect()));
    }
    let rows = import_embeddings(&d.file, false)?;
    let points: Vec<Embedding> = rows.into_iter().map(|r| r.1).collect();
    let result = det.detect(&points)?;
    let dir = d.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&dir).map_err(|e| io_at(&dir, e))?;
    let path = dir.join("detection.csv");
    let f = std::fs::File::create(&path).map_err(|e| io_at(&path, e))?;
    result.write_csv(std::io::BufWriter::new(f)).map_err(|e| io_at(&path, e))?;
    let summary = serde_json::json!({
        "points": points.len(),
        "threshold": result.threshold,
        "flagged": result.outlier_indices,
    });
    let json_path = dir.join("detection.json");
    write_json(&json_path, &summary)?;
    let hash = hex::encode(<sha2::Sha256 as sha2::Digest>::digest(serde_json::to_vec(det)?));
    let mut manifest = RunManifest::new("detect", hash, det.seed, vec![det.seed]);
    manifest.emitted_files.extend([path.clone(), json_path]);
    manifest.write(&dir)?;
    Ok(format!(
        "{} of {} points flagged (threshold {:.6}) → {}\n",
        result.flagged_count,
        points.len(),
        result.threshold,
        path.display()
    ))
}
