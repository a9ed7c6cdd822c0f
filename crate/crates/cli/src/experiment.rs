//! Trial pipeline: world → AEs per attack method → detection → metrics.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pta_core::attack::{run_attack, select_surrogate, AttackConfig, AttackRecord, AttackResult, Objective, ProxySet};
use pta_core::detect::{score_in_pool, DetectionConfig};
use pta_core::eval::{
    classification_outcome, flag_window, mark_detected, paired_captions, poisoning_degradation, retrieval_outcomes,
    retrieve_topk, Gallery, MetricReport, Outcome,
};
use pta_core::numerics::mean_embedding;
use pta_core::rng::{derive_seed, tags};
use pta_core::synthworld::{preset_world, read_embedding_csv, sample_world, WorldSnapshot};
use pta_core::Embedding;

use crate::config::{AttackMethod, ExperimentConfig, Roles, SweepParameter, Task, WorldConfig};
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Seed of trial `index`; independent of how many trials run.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, &[tags::TRIAL, index as u64])
}

pub fn build_world(cfg: &WorldConfig, seed: u64) -> Result<WorldSnapshot, CliError> {
    let mut world = match &cfg.clusters {
        Some(clusters) => sample_world(clusters, cfg.params().dims, seed)?,
        None => preset_world(&cfg.params(), seed)?,
    };
    if let Some(path) = &cfg.target_file {
        let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let rows = read_embedding_csv(std::io::BufReader::new(file))
            .map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))?;
        world.replace_targets(&rows)?;
    }
    Ok(world)
}

/// Where one AE starts and what it aims at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AeSlot {
    pub target_cluster: usize,
    pub origin_cluster: usize,
    /// Index into the origin cluster's source inputs.
    pub origin_index: usize,
    /// Position among the AEs aimed at the same target.
    pub slot: usize,
}

/// `count` AEs spread round-robin over target clusters; AE `i` aims at cluster
/// `i mod C` and starts from the next cluster's `i div C`-th origin input.
pub fn ae_slots(n_clusters: usize, roles: &Roles, count: usize) -> Vec<AeSlot> {
    (0..count)
        .map(|i| {
            let target_cluster = i % n_clusters;
            let slot = i / n_clusters;
            AeSlot {
                target_cluster,
                origin_cluster: (target_cluster + 1) % n_clusters,
                origin_index: roles.origins.start + slot,
                slot,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CraftedAe {
    pub slot: AeSlot,
    pub original_embedding: Embedding,
    pub result: AttackResult,
}

fn method_tag(m: AttackMethod) -> u64 {
    match m {
        AttackMethod::Pta => 0,
        AttackMethod::Illusion => 1,
        AttackMethod::SameModal => 2,
    }
}

/// Objective for one AE.
pub fn objective_for(
    world: &WorldSnapshot,
    roles: &Roles,
    cfg: &ExperimentConfig,
    method: AttackMethod,
    slot: &AeSlot,
) -> Result<Objective, CliError> {
    let c = slot.target_cluster;
    let proxies = world.proxy_targets(c)?;
    Ok(match method {
        AttackMethod::Pta => {
            let targets = proxies[..cfg.proxies.n_c].to_vec();
            let sources = world.source_embeddings(c)?[roles.pool.clone()][..cfg.proxies.n_s].to_vec();
            Objective::pta(ProxySet::new(sources, targets)?, cfg.attack.alpha)?
        }
        AttackMethod::Illusion => Objective::Illusion {
            target: proxies[slot.slot % proxies.len()].clone(),
        },
        AttackMethod::SameModal => {
            let clusters: Vec<Vec<Embedding>> = (0..world.n_clusters())
                .map(|k| Ok(world.source_embeddings(k)?[roles.gallery.clone()].to_vec()))
                .collect::<Result<_, CliError>>()?;
            let (_, surrogate) = select_surrogate(&clusters, &mean_embedding(&proxies)?)?;
            Objective::SameModal { surrogate }
        }
    })
}

fn attack_config_for(cfg: &ExperimentConfig, method: AttackMethod, slot: &AeSlot, trial_seed: u64) -> AttackConfig {
    let mut a = cfg.attack.clone();
    if method != AttackMethod::Pta {
        a.alpha = 0.0;
    }
    a.seed = derive_seed(
        trial_seed,
        &[tags::SQUARE, cfg.attack.seed, method_tag(method), slot.target_cluster as u64, slot.slot as u64],
    );
    a
}

pub fn craft(
    world: &WorldSnapshot,
    roles: &Roles,
    cfg: &ExperimentConfig,
    method: AttackMethod,
    slots: &[AeSlot],
    trial_seed: u64,
) -> Result<Vec<CraftedAe>, CliError> {
    slots
        .par_iter()
        .map(|slot| {
            let objective = objective_for(world, roles, cfg, method, slot)?;
            let x0 = &world.source_inputs(slot.origin_cluster)?[slot.origin_index];
            let acfg = attack_config_for(cfg, method, slot, trial_seed);
            let result = run_attack(&world.encoder, x0, &objective, &acfg)?;
            Ok(CraftedAe {
                slot: *slot,
                original_embedding: world.source_embeddings(slot.origin_cluster)?[slot.origin_index].clone(),
                result,
            })
        })
        .collect()
}

/// Everything in the config that changes the AEs of `method`.
fn craft_key(cfg: &ExperimentConfig, method: AttackMethod, count: usize) -> String {
    let mut a = cfg.attack.clone();
    let proxies = if method == AttackMethod::Pta {
        Some(cfg.proxies)
    } else {
        a.alpha = 0.0;
        None
    };
    serde_json::json!([method, a, proxies, count]).to_string()
}

fn gallery_items(world: &WorldSnapshot, roles: &Roles) -> Result<Vec<Embedding>, CliError> {
    let mut items = Vec::new();
    for c in 0..world.n_clusters() {
        items.extend_from_slice(&world.source_embeddings(c)?[roles.gallery.clone()]);
    }
    Ok(items)
}

fn detection_for_trial(det: &DetectionConfig, trial_seed: u64) -> DetectionConfig {
    DetectionConfig {
        seed: derive_seed(trial_seed, &[tags::FOREST, det.seed]),
        ..det.clone()
    }
}

/// Metrics of one method within one trial and sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub report: MetricReport,
    pub objective_start: f64,
    pub objective_final: f64,
}

pub fn evaluate(
    world: &WorldSnapshot,
    roles: &Roles,
    cfg: &ExperimentConfig,
    aes: &[CraftedAe],
    trial_seed: u64,
) -> Result<Evaluated, CliError> {
    let det = detection_for_trial(&cfg.detection, trial_seed);
    let e = &cfg.evaluation;
    // anomaly-score rank of every AE among references from its target cluster
    let pools: Vec<(usize, bool)> = aes
        .par_iter()
        .map(|ae| {
            let refs = &world.source_embeddings(ae.slot.target_cluster)?[roles.gallery.clone()][..e.references];
            let p = score_in_pool(&ae.result.adversarial_embedding, refs, &det)?;
            Ok((p.rank, p.flagged))
        })
        .collect::<Result<_, CliError>>()?;
    let mean_rank = pools.iter().map(|p| p.0 as f64).sum::<f64>() / pools.len().max(1) as f64;

    let mut report = match e.task {
        Task::Classification => {
            let prompts: Vec<Vec<Embedding>> = (0..world.n_clusters())
                .map(|c| world.true_targets(c))
                .collect::<Result<_, _>>()?;
            let outcomes = aes
                .iter()
                .zip(&pools)
                .map(|(ae, &(_, flagged))| {
                    let mut o = classification_outcome(
                        &prompts,
                        &ae.original_embedding,
                        &ae.result.adversarial_embedding,
                        ae.slot.target_cluster,
                    )?;
                    o.detected = flagged;
                    Ok(o)
                })
                .collect::<Result<Vec<Outcome>, CliError>>()?;
            MetricReport::from_outcomes(&outcomes)?
        }
        Task::Retrieval => {
            let items = gallery_items(world, roles)?;
            let per_ae: Vec<Vec<Outcome>> = aes
                .par_iter()
                .map(|ae| {
                    let queries = world.true_targets(ae.slot.target_cluster)?;
                    let poisoned = Gallery::new(items.clone(), vec![ae.result.adversarial_embedding.clone()])?;
                    let clean = poisoned.with_injected(vec![ae.original_embedding.clone()])?;
                    retrieval_with_detection(&queries, &poisoned, &clean, e.k, e.detection_k, &det)
                })
                .collect::<Result<_, CliError>>()?;
            MetricReport::from_outcomes(&per_ae.concat())?
        }
        Task::Poisoning => {
            let items = gallery_items(world, roles)?;
            let per_cluster = roles.gallery.len();
            let mut captions = Vec::with_capacity(items.len());
            for c in 0..world.n_clusters() {
                let chunk = &items[c * per_cluster..(c + 1) * per_cluster];
                let seed = derive_seed(trial_seed, &[tags::CAPTION, c as u64]);
                captions.extend(paired_captions(chunk, &world.clusters[c].modality_offset, e.caption_noise, seed)?);
            }
            let truth: Vec<usize> = (0..items.len()).collect();
            let adv: Vec<Embedding> = aes.iter().map(|a| a.result.adversarial_embedding.clone()).collect();
            let orig: Vec<Embedding> = aes.iter().map(|a| a.original_embedding.clone()).collect();
            let deg = poisoning_degradation(&captions, &truth, &items, &adv, e.injection_ratio)?;
            let poisoned = Gallery::new(items.clone(), adv[..deg.injected].to_vec())?;
            let clean = poisoned.with_injected(orig[..deg.injected].to_vec())?;
            let outcomes = retrieval_with_detection(&captions, &poisoned, &clean, e.k, e.detection_k, &det)?;
            let mut r = MetricReport::from_outcomes(&outcomes)?;
            r.recall_at_1 = Some(deg.recall_after);
            r.recall_drop = Some(deg.drop);
            r
        }
    };
    report.mean_rank = Some(mean_rank);
    let n = aes.len().max(1) as f64;
    Ok(Evaluated {
        report,
        objective_start: aes.iter().map(|a| a.result.loss_trace[0]).sum::<f64>() / n,
        objective_final: aes.iter().map(|a| a.result.best_objective).sum::<f64>() / n,
    })
}

fn retrieval_with_detection(
    queries: &[Embedding],
    poisoned: &Gallery,
    clean: &Gallery,
    k: usize,
    detection_k: usize,
    det: &DetectionConfig,
) -> Result<Vec<Outcome>, CliError> {
    let mut outs = retrieval_outcomes(queries, poisoned, clean, k)?;
    let windows = queries
        .iter()
        .map(|q| retrieve_topk(q, poisoned, detection_k))
        .collect::<Result<Vec<_>, _>>()?;
    let flagged = flag_window(&windows, poisoned, det)?;
    mark_detected(&mut outs, poisoned, &flagged);
    Ok(outs.into_iter().map(|o| o.outcome).collect())
}

/// One CSV row: one attack method in one trial at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub schema_version: u32,
    pub config_hash: String,
    pub experiment: String,
    pub task: String,
    pub trial: usize,
    pub seed: u64,
    pub sweep_parameter: String,
    pub sweep_value: Option<f64>,
    pub attack: String,
    pub alpha: Option<f64>,
    pub n_c: Option<usize>,
    pub n_s: Option<usize>,
    pub epsilon: f64,
    pub optimizer: String,
    pub detector: String,
    pub k: usize,
    pub injection_ratio: Option<f64>,
    pub asr: f64,
    pub asrd: f64,
    /// Mean anomaly-score rank among `references + 1` pooled points (raw rank, not %).
    pub mean_rank: Option<f64>,
    pub recall_at_1: Option<f64>,
    pub recall_drop: Option<f64>,
    pub n_total: usize,
    pub n_success: usize,
    pub n_pre_success: usize,
    pub n_detected: usize,
    pub objective_start: f64,
    pub objective_final: f64,
}

/// AE record kept for the `attack` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackEntry {
    pub trial: usize,
    pub sweep_value: Option<f64>,
    pub attack: String,
    pub slot: AeSlot,
    pub record: AttackRecord,
}

#[derive(Debug, Clone, Default)]
pub struct TrialOutput {
    pub rows: Vec<ResultRow>,
    pub attacks: Vec<AttackEntry>,
}

fn ae_count(cfg: &ExperimentConfig, n_clusters: usize, roles: &Roles) -> Result<usize, CliError> {
    Ok(match cfg.evaluation.task {
        Task::Poisoning => pta_core::eval::injection_count(cfg.evaluation.injection_ratio, roles.gallery.len() * n_clusters)?,
        _ => cfg.evaluation.aes_per_cluster * n_clusters,
    })
}

/// Runs every sweep point and method of one trial.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize, config_hash: &str, keep_attacks: bool) -> Result<TrialOutput, CliError> {
    let seed = trial_seed(cfg.seed, trial);
    let world = build_world(&cfg.world, seed)?;
    let n_source = (0..world.n_clusters())
        .map(|c| world.source_inputs(c).map(|s| s.len()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .min()
        .unwrap_or(0);
    let roles = Roles::new(n_source);
    let mut cache: HashMap<String, Arc<Vec<CraftedAe>>> = HashMap::new();
    let mut out = TrialOutput::default();
    for (param, value, point) in cfg.sweep_points() {
        let count = ae_count(&point, world.n_clusters(), &roles)?;
        let slots = ae_slots(world.n_clusters(), &roles, count);
        for &method in &point.methods {
            let key = craft_key(&point, method, count);
            let aes = match cache.get(&key) {
                Some(a) => a.clone(),
                None => {
                    let a = Arc::new(craft(&world, &roles, &point, method, &slots, seed)?);
                    cache.insert(key, a.clone());
                    a
                }
            };
            let ev = evaluate(&world, &roles, &point, &aes, seed)?;
            let is_pta = method == AttackMethod::Pta;
            out.rows.push(ResultRow {
                schema_version: SCHEMA_VERSION,
                config_hash: config_hash.to_string(),
                experiment: cfg.name.clone(),
                task: point.evaluation.task.name().into(),
                trial,
                seed,
                sweep_parameter: param.map(SweepParameter::name).unwrap_or("").into(),
                sweep_value: value,
                attack: method.name().into(),
                alpha: is_pta.then_some(point.attack.alpha),
                n_c: is_pta.then_some(point.proxies.n_c),
                n_s: is_pta.then_some(point.proxies.n_s),
                epsilon: point.attack.epsilon,
                optimizer: serde_json::to_value(point.attack.optimizer)?.as_str().unwrap_or("").into(),
                detector: point.detection.method.name().into(),
                k: point.evaluation.k,
                injection_ratio: (point.evaluation.task == Task::Poisoning).then_some(point.evaluation.injection_ratio),
                asr: ev.report.asr,
                asrd: ev.report.asrd,
                mean_rank: ev.report.mean_rank,
                recall_at_1: ev.report.recall_at_1,
                recall_drop: ev.report.recall_drop,
                n_total: ev.report.n_total,
                n_success: ev.report.n_success,
                n_pre_success: ev.report.n_pre_success,
                n_detected: ev.report.n_detected,
                objective_start: ev.objective_start,
                objective_final: ev.objective_final,
            });
            if keep_attacks {
                let acfg = &point.attack;
                out.attacks.extend(aes.iter().map(|a| AttackEntry {
                    trial,
                    sweep_value: value,
                    attack: method.name().into(),
                    slot: a.slot,
                    record: a.result.to_record(&attack_config_for(&point, method, &a.slot, seed)).with_echo(acfg),
                }));
            }
        }
    }
    Ok(out)
}

trait WithEcho {
    fn with_echo(self, cfg: &AttackConfig) -> Self;
}

impl WithEcho for AttackRecord {
    /// Echo the configured settings but keep the per-AE derived seed.
    fn with_echo(mut self, cfg: &AttackConfig) -> Self {
        let seed = self.seed;
        self.config_echo = AttackConfig { seed, ..cfg.clone() };
        self
    }
}

/// Runs all trials on up to `jobs` threads and returns their outputs in trial order.
pub fn run_trials(cfg: &ExperimentConfig, jobs: usize, config_hash: &str, keep_attacks: bool) -> Result<Vec<TrialOutput>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, t, config_hash, keep_attacks))
            .collect()
    })
}
