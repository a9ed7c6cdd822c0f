//! Experiment configuration: JSON document, dotted overrides, total validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use pta_core::attack::AttackConfig;
use pta_core::detect::DetectionConfig;
use pta_core::synthworld::{ClusterSpec, EncoderDims, PresetKind, PresetParams};

use crate::error::CliError;

/// Attack variants compared within one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod {
    /// Proxy objective with the configured `alpha`, `n_c`, `n_s`.
    Pta,
    /// Single cross-modal target.
    Illusion,
    /// Same-modal surrogate.
    SameModal,
}

impl AttackMethod {
    pub fn name(self) -> &'static str {
        match self {
            AttackMethod::Pta => "pta",
            AttackMethod::Illusion => "illusion",
            AttackMethod::SameModal => "samemodal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Retrieval,
    Poisoning,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Retrieval => "retrieval",
            Task::Poisoning => "poisoning",
        }
    }
}

/// Synthetic world: a preset with optional per-field overrides, or explicit clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub preset: PresetKind,
    pub n_clusters: Option<usize>,
    pub input_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub embed_dim: Option<usize>,
    pub source_dispersion: Option<f64>,
    pub target_dispersion: Option<f64>,
    pub offset_norm: Option<f64>,
    pub target_count: Option<usize>,
    pub source_count: Option<usize>,
    /// Explicit clusters; replaces the preset's seeded cluster specs.
    pub clusters: Option<Vec<ClusterSpec>>,
    /// CSV of `cluster,x1,...` target embeddings replacing the sampled ones.
    pub target_file: Option<PathBuf>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            preset: PresetKind::Retrieval,
            n_clusters: None,
            input_dim: None,
            hidden_dim: None,
            embed_dim: None,
            source_dispersion: None,
            target_dispersion: None,
            offset_norm: None,
            target_count: None,
            source_count: None,
            clusters: None,
            target_file: None,
        }
    }
}

impl WorldConfig {
    pub fn for_preset(preset: PresetKind) -> Self {
        Self {
            preset,
            ..Self::default()
        }
    }

    /// Preset parameters with overrides applied.
    pub fn params(&self) -> PresetParams {
        let mut p = PresetParams::for_kind(self.preset);
        let d = p.dims;
        p.dims = EncoderDims::new(
            self.input_dim.unwrap_or(d.input_dim),
            self.hidden_dim.unwrap_or(d.hidden_dim),
            self.embed_dim.unwrap_or(d.embed_dim),
        );
        p.n_clusters = self.n_clusters.unwrap_or(p.n_clusters);
        p.source_dispersion = self.source_dispersion.unwrap_or(p.source_dispersion);
        p.target_dispersion = self.target_dispersion.unwrap_or(p.target_dispersion);
        p.offset_norm = self.offset_norm.unwrap_or(p.offset_norm);
        p.target_count = self.target_count.unwrap_or(p.target_count);
        p.source_count = self.source_count.unwrap_or(p.source_count);
        p
    }

    pub fn n_clusters(&self) -> usize {
        match &self.clusters {
            Some(c) => c.len(),
            None => self.params().n_clusters,
        }
    }

    /// Smallest per-cluster source / target counts.
    pub fn min_counts(&self) -> (usize, usize) {
        match &self.clusters {
            Some(c) => (
                c.iter().map(ClusterSpec::n_source).min().unwrap_or(0),
                c.iter().map(|s| s.count).min().unwrap_or(0),
            ),
            None => {
                let p = self.params();
                (p.source_count, p.target_count)
            }
        }
    }
}

/// How many proxies of each modality the adversary uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyCounts {
    /// Target-modal proxies `N_c`.
    pub n_c: usize,
    /// Source-modal proxies `N_s`.
    pub n_s: usize,
}

impl Default for ProxyCounts {
    fn default() -> Self {
        Self { n_c: 50, n_s: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub task: Task,
    /// Rank cut-off for retrieval success.
    pub k: usize,
    /// Top-K lists whose union forms the retrieval detection window.
    pub detection_k: usize,
    pub injection_ratio: f64,
    /// AEs crafted per target cluster (classification and retrieval tasks).
    pub aes_per_cluster: usize,
    /// Reference points pooled with each AE for classification detection.
    pub references: usize,
    /// Total noise scale of the paired captions in the poisoning task.
    pub caption_noise: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            task: Task::Retrieval,
            k: 1,
            detection_k: 50,
            injection_ratio: 0.01,
            aes_per_cluster: 2,
            references: 100,
            caption_noise: 1.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Alpha,
    #[serde(rename = "n_c")]
    NC,
    #[serde(rename = "n_s")]
    NS,
    Epsilon,
    QueryBudget,
    InjectionRatio,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Alpha => "alpha",
            SweepParameter::NC => "n_c",
            SweepParameter::NS => "n_s",
            SweepParameter::Epsilon => "epsilon",
            SweepParameter::QueryBudget => "query_budget",
            SweepParameter::InjectionRatio => "injection_ratio",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub world: WorldConfig,
    pub attack: AttackConfig,
    pub methods: Vec<AttackMethod>,
    pub proxies: ProxyCounts,
    pub detection: DetectionConfig,
    pub evaluation: EvalConfig,
    pub sweep: Option<SweepConfig>,
    pub trials: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            world: WorldConfig::default(),
            attack: AttackConfig::default(),
            methods: vec![AttackMethod::Pta, AttackMethod::Illusion],
            proxies: ProxyCounts::default(),
            detection: DetectionConfig::default(),
            evaluation: EvalConfig::default(),
            sweep: None,
            trials: 1,
            seed: 0,
            output_dir: PathBuf::from("pta-out"),
        }
    }
}

fn is_integral(v: f64) -> bool {
    v.is_finite() && v >= 0.0 && v.fract() == 0.0
}

impl ExperimentConfig {
    /// Copy with the sweep parameter set to `value`.
    pub fn at_sweep_point(&self, parameter: SweepParameter, value: f64) -> Self {
        let mut c = self.clone();
        match parameter {
            SweepParameter::Alpha => c.attack.alpha = value,
            SweepParameter::NC => c.proxies.n_c = value as usize,
            SweepParameter::NS => c.proxies.n_s = value as usize,
            SweepParameter::Epsilon => {
                // keep the step a fixed fraction of the budget
                let frac = c.attack.step_size / c.attack.epsilon;
                c.attack.epsilon = value;
                c.attack.step_size = value * frac;
            }
            SweepParameter::QueryBudget => c.attack.query_budget = value as usize,
            SweepParameter::InjectionRatio => c.evaluation.injection_ratio = value,
        }
        c.sweep = None;
        c
    }

    /// `(parameter name, value, config)` for every point; a single unnamed point when
    /// there is no sweep.
    pub fn sweep_points(&self) -> Vec<(Option<SweepParameter>, Option<f64>, ExperimentConfig)> {
        match &self.sweep {
            None => vec![(None, None, self.clone())],
            Some(s) => s
                .values
                .iter()
                .map(|&v| (Some(s.parameter), Some(v), self.at_sweep_point(s.parameter, v)))
                .collect(),
        }
    }

    /// Every violated constraint, prefixed with its field path.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.trials == 0 {
            out.push("trials: must be at least 1".into());
        }
        if self.methods.is_empty() {
            out.push("methods: at least one attack method is required".into());
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                out.push("sweep.values: must not be empty".into());
            }
            for v in &s.values {
                let integral = matches!(
                    s.parameter,
                    SweepParameter::NC | SweepParameter::NS | SweepParameter::QueryBudget
                );
                if integral && !is_integral(*v) {
                    out.push(format!("sweep.values: {} needs non-negative integers, got {v}", s.parameter.name()));
                }
            }
            for (_, v, point) in self.sweep_points() {
                for msg in point.point_violations() {
                    out.push(format!("sweep point {}: {msg}", v.unwrap_or_default()));
                }
            }
        } else {
            out.extend(self.point_violations());
        }
        out.extend(self.world_violations());
        out
    }

    fn world_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let w = &self.world;
        let p = w.params();
        for (name, v) in [
            ("world.input_dim", p.dims.input_dim),
            ("world.hidden_dim", p.dims.hidden_dim),
            ("world.embed_dim", p.dims.embed_dim),
        ] {
            if v < 2 {
                out.push(format!("{name}: must be at least 2, got {v}"));
            }
        }
        if let Some(clusters) = &w.clusters {
            for (i, c) in clusters.iter().enumerate() {
                if let Err(e) = c.validate(p.dims.embed_dim, i) {
                    out.push(format!("world.clusters[{i}]: {e}"));
                }
            }
        } else {
            for (name, v) in [
                ("world.source_dispersion", p.source_dispersion),
                ("world.target_dispersion", p.target_dispersion),
                ("world.offset_norm", p.offset_norm),
            ] {
                if !(v.is_finite() && v >= 0.0) {
                    out.push(format!("{name}: must be finite and >= 0, got {v}"));
                }
            }
        }
        if w.n_clusters() < 2 {
            out.push(format!("world.n_clusters: need at least 2 clusters, got {}", w.n_clusters()));
        }
        let (n_source, n_target) = w.min_counts();
        if n_source < 8 {
            out.push(format!("world.source_count: need at least 8 source inputs per cluster, got {n_source}"));
        }
        if n_target < 2 {
            out.push(format!("world.target_count: need at least 2 target embeddings per cluster, got {n_target}"));
        }
        if let Some(f) = &w.target_file {
            if !f.exists() {
                out.push(format!("world.target_file: {} does not exist", f.display()));
            }
        }
        out
    }

    /// Constraints that depend on swept values.
    fn point_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        out.extend(self.attack.violations().into_iter().map(|m| format!("attack.{m}")));
        out.extend(self.detection.violations().into_iter().map(|m| format!("detection.{m}")));
        let (n_source, n_target) = self.world.min_counts();
        let roles = Roles::new(n_source);
        let n_proxy_half = n_target.div_ceil(2);
        let e = &self.evaluation;
        if self.proxies.n_c == 0 || self.proxies.n_c > n_proxy_half {
            out.push(format!(
                "proxies.n_c: must lie in 1..={n_proxy_half}, got {}",
                self.proxies.n_c
            ));
        }
        if self.proxies.n_s > roles.pool.len() {
            out.push(format!(
                "proxies.n_s: at most {} source proxies available, got {}",
                roles.pool.len(),
                self.proxies.n_s
            ));
        }
        if self.attack.alpha > 0.0 && self.proxies.n_s == 0 && self.methods.contains(&AttackMethod::Pta) {
            out.push("proxies.n_s: alpha > 0 needs at least one source proxy".into());
        }
        if e.k == 0 {
            out.push("evaluation.k: must be positive".into());
        }
        if e.detection_k == 0 {
            out.push("evaluation.detection_k: must be positive".into());
        }
        let gallery = roles.gallery.len() * self.world.n_clusters();
        if e.k > gallery || e.detection_k > gallery {
            out.push(format!("evaluation.k / detection_k: gallery holds only {gallery} items"));
        }
        if e.aes_per_cluster == 0 || e.aes_per_cluster > roles.origins.len() {
            out.push(format!(
                "evaluation.aes_per_cluster: must lie in 1..={}, got {}",
                roles.origins.len(),
                e.aes_per_cluster
            ));
        }
        if e.references == 0 || e.references > roles.gallery.len() {
            out.push(format!(
                "evaluation.references: must lie in 1..={}, got {}",
                roles.gallery.len(),
                e.references
            ));
        } else if self.detection.neighbors_k >= e.references + 1 {
            out.push("detection.neighbors_k: must be smaller than the reference pool".into());
        }
        if !(e.caption_noise.is_finite() && e.caption_noise >= 0.0) {
            out.push("evaluation.caption_noise: must be finite and >= 0".into());
        }
        if !(e.injection_ratio.is_finite() && e.injection_ratio >= 0.0) {
            out.push("evaluation.injection_ratio: must be finite and >= 0".into());
        } else if e.task == Task::Poisoning {
            let need = (e.injection_ratio * gallery as f64 - 1e-9).ceil().max(0.0) as usize;
            let have = roles.origins.len() * self.world.n_clusters();
            if need > have {
                out.push(format!(
                    "evaluation.injection_ratio: {} needs {need} AEs but only {have} origins exist",
                    e.injection_ratio
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(v))
        }
    }
}

/// Partition of one cluster's source inputs by role: the first half is the benign
/// gallery and detection reference set, the next quarter the adversary's source-proxy
/// pool, the last quarter the clean inputs AEs start from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roles {
    pub gallery: std::ops::Range<usize>,
    pub pool: std::ops::Range<usize>,
    pub origins: std::ops::Range<usize>,
}

impl Roles {
    pub fn new(n_source: usize) -> Self {
        let half = n_source / 2;
        let three_q = half + (n_source - half) / 2;
        Self {
            gallery: 0..half,
            pool: half..three_q,
            origins: three_q..n_source,
        }
    }
}

/// Sets `path` (dot-separated) in a JSON document to `raw`, parsed as JSON when it
/// parses and kept as a string otherwise. Missing intermediate objects are created.
pub fn apply_override(doc: &mut Value, path: &str, raw: &str) -> Result<(), CliError> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Validation(vec![format!("override `{path}`: empty path segment")]));
    }
    for (i, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            if cur.is_null() {
                *cur = Value::Object(Default::default());
            } else {
                return Err(CliError::Validation(vec![format!(
                    "override `{path}`: `{}` is not an object",
                    parts[..i].join(".")
                )]));
            }
        }
        let map = cur.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        cur = map.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

/// Splits `--a.b=v` / `--a.b v` style arguments into `(path, raw value)` pairs.
pub fn parse_override_args(args: &[String]) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        let Some(body) = a.strip_prefix("--") else {
            return Err(CliError::Validation(vec![format!("unexpected argument `{a}`")]));
        };
        if let Some((k, v)) = body.split_once('=') {
            out.push((k.to_string(), v.to_string()));
            i += 1;
        } else if i + 1 < args.len() {
            out.push((body.to_string(), args[i + 1].clone()));
            i += 2;
        } else {
            return Err(CliError::Validation(vec![format!("override `{a}` has no value")]));
        }
    }
    Ok(out)
}

/// Loads a config file (or defaults), applies overrides and the `PTA_SEED` variable.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
    env_seed: Option<&str>,
) -> Result<ExperimentConfig, CliError> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(vec![format!("{}: {e}", p.display())]))?
        }
        None => Value::Object(Default::default()),
    };
    for (k, v) in overrides {
        apply_override(&mut doc, k, v)?;
    }
    if let Some(s) = env_seed {
        let seed: u64 = s
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(vec![format!("PTA_SEED: `{s}` is not an unsigned integer")]))?;
        apply_override(&mut doc, "seed", &seed.to_string())?;
    }
    serde_json::from_value(doc).map_err(|e| CliError::Validation(vec![format!("config: {e}")]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles_partition_sources() {
        let r = Roles::new(200);
        assert_eq!((r.gallery, r.pool, r.origins), (0..100, 100..150, 150..200));
        let r = Roles::new(9);
        assert_eq!(r.gallery.len() + r.pool.len() + r.origins.len(), 9);
    }

    #[test]
    fn overrides_create_paths_and_parse_json() {
        let mut doc = serde_json::json!({"attack": {"alpha": 0.0}});
        apply_override(&mut doc, "attack.alpha", "0.4").unwrap();
        apply_override(&mut doc, "world.preset", "classification").unwrap();
        apply_override(&mut doc, "methods", r#"["pta"]"#).unwrap();
        assert_eq!(doc["attack"]["alpha"], 0.4);
        assert_eq!(doc["world"]["preset"], "classification");
        let cfg: ExperimentConfig = serde_json::from_value(doc).unwrap();
        assert_eq!(cfg.methods, vec![AttackMethod::Pta]);
        assert_eq!(cfg.world.preset, PresetKind::Classification);
    }

    #[test]
    fn override_args_accept_both_forms() {
        let args: Vec<String> = ["--attack.alpha=0.4", "--trials", "3"].iter().map(|s| s.to_string()).collect();
        assert_eq!(
            parse_override_args(&args).unwrap(),
            vec![("attack.alpha".into(), "0.4".into()), ("trials".into(), "3".into())]
        );
        assert!(parse_override_args(&["oops".to_string()]).is_err());
    }

    #[test]
    fn env_seed_wins() {
        let cfg = load_config(None, &[("seed".into(), "3".into())], Some("17")).unwrap();
        assert_eq!(cfg.seed, 17);
        assert!(load_config(None, &[], Some("x")).is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = load_config(None, &[("attack.alhpa".into(), "0.4".into())], None).unwrap_err();
        assert!(matches!(err, CliError::Validation(_)));
    }

    #[test]
    fn validation_reports_every_field() {
        let mut cfg = ExperimentConfig::default();
        cfg.trials = 0;
        cfg.attack.epsilon = -1.0;
        cfg.proxies.n_c = 0;
        cfg.evaluation.k = 0;
        cfg.detection.anomaly_ratio = 2.0;
        let v = cfg.violations();
        for field in ["trials", "attack", "proxies.n_c", "evaluation.k", "detection"] {
            assert!(v.iter().any(|m| m.starts_with(field)), "{field} missing from {v:?}");
        }
    }

    #[test]
    fn sweep_points_apply_values() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep = Some(SweepConfig { parameter: SweepParameter::NC, values: vec![1.0, 5.0] });
        let pts = cfg.sweep_points();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].2.proxies.n_c, 5);
        assert!(cfg.validate().is_ok());
        cfg.sweep = Some(SweepConfig { parameter: SweepParameter::NC, values: vec![1.5, 500.0] });
        assert_eq!(cfg.violations().len(), 2);
        cfg.sweep = Some(SweepConfig { parameter: SweepParameter::Alpha, values: vec![] });
        assert!(cfg.validate().is_err());
    }
}
