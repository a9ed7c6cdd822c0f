//! Synthetic multimodal world.
//!
//! The source modality is produced by a small tanh MLP over inputs in the box
//! `[0,1]^n` (so pixel-style budgets such as `8/255` keep their meaning). The target
//! modality exists only as embeddings: each cluster samples
//! `unit_normalize(concept + modality_offset + noise)`, which is all the attack ever
//! consumes of it.

use std::io::{BufRead, Write};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, check_dims, dot, l2_dist, unit_normalize, Embedding, EmbeddingSet};
use crate::rng::{self, tags};

/// Layer sizes of the source encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
}

impl EncoderDims {
    pub fn new(input_dim: usize, hidden_dim: usize, embed_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            embed_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("embed_dim", self.embed_dim),
        ] {
            if v < 2 {
                return Err(Error::config(format!("{name} must be at least 2, got {v}")));
            }
        }
        Ok(())
    }
}

/// `x ↦ unit_normalize(W₂ · tanh(W₁x + b))`.
///
/// `W₁` is stored row-major as `hidden × input`, `W₂` as `embed × hidden`. The bias
/// is `−W₁·(½,…,½)`, which centres the input box so pre-activations are zero-mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceEncoder {
    dims: EncoderDims,
    layer1_weights: Vec<f64>,
    layer1_bias: Vec<f64>,
    layer2_weights: Vec<f64>,
    seed: u64,
}

/// Intermediate values of one forward pass, reused by the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    hidden: Vec<f64>,
    raw_norm: f64,
    output: Embedding,
}

impl Forward {
    pub fn output(&self) -> &Embedding {
        &self.output
    }
}

fn normal(rng: &mut rng::Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Builds an encoder whose weights are Gaussian draws scaled by `1/√fan_in`.
pub fn build_encoder(dims: EncoderDims, seed: u64) -> Result<SourceEncoder> {
    dims.validate()?;
    let EncoderDims {
        input_dim: n,
        hidden_dim: h,
        embed_dim: d,
    } = dims;
    let mut rng = rng::stream(seed, &[tags::ENCODER]);
    let s1 = 1.0 / (n as f64).sqrt();
    let s2 = 1.0 / (h as f64).sqrt();
    let layer1_weights: Vec<f64> = (0..h * n)
        .map(|_| s1 * normal(&mut rng))
        .collect();
    let layer2_weights: Vec<f64> = (0..d * h)
        .map(|_| s2 * normal(&mut rng))
        .collect();
    let layer1_bias = layer1_weights
        .chunks_exact(n)
        .map(|row| -0.5 * row.iter().sum::<f64>())
        .collect();
    Ok(SourceEncoder {
        dims,
        layer1_weights,
        layer1_bias,
        layer2_weights,
        seed,
    })
}

impl SourceEncoder {
    pub fn dims(&self) -> EncoderDims {
        self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layer1_weights(&self) -> &[f64] {
        &self.layer1_weights
    }

    pub fn layer2_weights(&self) -> &[f64] {
        &self.layer2_weights
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        check_dims(self.dims.input_dim, x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder input".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        self.check_input(x)?;
        let n = self.dims.input_dim;
        let hidden: Vec<f64> = self
            .layer1_weights
            .chunks_exact(n)
            .zip(&self.layer1_bias)
            .map(|(row, b)| (dot(row, x) + b).tanh())
            .collect();
        let raw: Vec<f64> = self
            .layer2_weights
            .chunks_exact(self.dims.hidden_dim)
            .map(|row| dot(row, &hidden))
            .collect();
        let raw_norm = numerics::norm(&raw);
        if raw_norm == 0.0 || !raw_norm.is_finite() {
            return Err(Error::Numeric("encoder pre-normalization output is degenerate".into()));
        }
        let output = Embedding::new(raw.iter().map(|v| v / raw_norm).collect())?;
        Ok(Forward {
            hidden,
            raw_norm,
            output,
        })
    }

    pub fn encode(&self, x: &[f64]) -> Result<Embedding> {
        Ok(self.forward(x)?.output)
    }

    /// `∂(upstream · encode(x)) / ∂x` from a cached forward pass.
    pub fn backward(&self, fwd: &Forward, upstream: &[f64]) -> Result<Vec<f64>> {
        let EncoderDims {
            input_dim: n,
            hidden_dim: h,
            embed_dim: d,
        } = self.dims;
        check_dims(d, upstream.len())?;
        if upstream.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("upstream gradient".into()));
        }
        let v = fwd.output.values();
        // normalize: d(u·z/|z|)/dz = (u − (u·v) v) / |z|
        let uv = dot(upstream, v);
        let g_raw: Vec<f64> = upstream
            .iter()
            .zip(v)
            .map(|(u, vi)| (u - uv * vi) / fwd.raw_norm)
            .collect();
        let mut g_pre = vec![0.0; h];
        for (k, gk) in g_raw.iter().enumerate() {
            let row = &self.layer2_weights[k * h..(k + 1) * h];
            for (g, w) in g_pre.iter_mut().zip(row) {
                *g += gk * w;
            }
        }
        for (g, a) in g_pre.iter_mut().zip(&fwd.hidden) {
            *g *= 1.0 - a * a;
        }
        let mut g_x = vec![0.0; n];
        for (j, gj) in g_pre.iter().enumerate() {
            if *gj == 0.0 {
                continue;
            }
            let row = &self.layer1_weights[j * n..(j + 1) * n];
            for (g, w) in g_x.iter_mut().zip(row) {
                *g += gj * w;
            }
        }
        Ok(g_x)
    }

    /// `∂(upstream · encode(x)) / ∂x`.
    pub fn encode_gradient(&self, x: &[f64], upstream: &Embedding) -> Result<Vec<f64>> {
        let fwd = self.forward(x)?;
        self.backward(&fwd, upstream.values())
    }
}

/// Sampling parameters for one concept cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    /// Unit vector the cluster's target-modal embeddings are centred on (before the
    /// modality offset).
    pub concept_direction: Vec<f64>,
    /// Gaussian noise scale per input coordinate for source inputs.
    pub source_dispersion: f64,
    /// Total Gaussian noise scale in embedding space for target embeddings; each
    /// coordinate gets variance `target_dispersion² / d`.
    pub target_dispersion: f64,
    /// Shift applied to target embeddings only; realizes the modality gap.
    pub modality_offset: Vec<f64>,
    /// Number of target-modal embeddings (split into proxy and true-target halves).
    pub count: usize,
    /// Number of source inputs; defaults to `count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_count: Option<usize>,
}

impl ClusterSpec {
    pub fn n_source(&self) -> usize {
        self.source_count.unwrap_or(self.count)
    }

    pub fn validate(&self, embed_dim: usize, index: usize) -> Result<()> {
        let ctx = |m: String| Error::config(format!("cluster {index}: {m}"));
        check_dims(embed_dim, self.concept_direction.len())?;
        check_dims(embed_dim, self.modality_offset.len())?;
        let n = numerics::norm(&self.concept_direction);
        if (n - 1.0).abs() > 1e-9 {
            return Err(ctx(format!("concept_direction must be unit-norm, has norm {n}")));
        }
        if !(self.source_dispersion >= 0.0 && self.source_dispersion.is_finite()) {
            return Err(ctx("source_dispersion must be finite and >= 0".into()));
        }
        if !(self.target_dispersion >= 0.0 && self.target_dispersion.is_finite()) {
            return Err(ctx("target_dispersion must be finite and >= 0".into()));
        }
        if self.modality_offset.iter().any(|v| !v.is_finite()) {
            return Err(ctx("modality_offset must be finite".into()));
        }
        if self.count < 2 {
            return Err(ctx(format!(
                "count must be at least 2 to split proxies from true targets, got {}",
                self.count
            )));
        }
        if self.n_source() < 1 {
            return Err(ctx("source_count must be at least 1".into()));
        }
        Ok(())
    }
}

/// A fully sampled world. Regenerating from `(clusters, dims, seed)` reproduces it
/// bit-exactly.
#[derive(Debug, Clone)]
pub struct WorldSnapshot {
    pub encoder: SourceEncoder,
    pub clusters: Vec<ClusterSpec>,
    /// Per-cluster source inputs, each in `[0,1]^n`.
    pub source_inputs: Vec<Vec<Vec<f64>>>,
    /// Per-cluster target-modal embeddings.
    pub target_embeddings: Vec<EmbeddingSet>,
    /// Per-cluster `encode(source_inputs)`, cached.
    source_embeddings: Vec<Vec<Embedding>>,
    pub seed: u64,
}

/// Uniform anchor in `[0.25, 0.75]^n` for cluster `index`, drawn from its own stream.
pub fn cluster_anchor(seed: u64, index: usize, input_dim: usize) -> Vec<f64> {
    let mut rng = rng::stream(seed, &[tags::ANCHOR, index as u64]);
    (0..input_dim).map(|_| rng.random_range(0.25..0.75)).collect()
}

fn sample_target(
    spec: &ClusterSpec,
    rng: &mut rng::Rng,
    embed_dim: usize,
) -> Result<Embedding> {
    let scale = spec.target_dispersion / (embed_dim as f64).sqrt();
    let raw: Vec<f64> = spec
        .concept_direction
        .iter()
        .zip(&spec.modality_offset)
        .map(|(c, o)| {
            let z: f64 = StandardNormal.sample(rng);
            c + o + scale * z
        })
        .collect();
    unit_normalize(&Embedding::new(raw)?)
}

/// Samples source inputs and target embeddings for every cluster.
pub fn sample_world(specs: &[ClusterSpec], dims: EncoderDims, seed: u64) -> Result<WorldSnapshot> {
    dims.validate()?;
    if specs.is_empty() {
        return Err(Error::config("world needs at least one cluster"));
    }
    for (i, s) in specs.iter().enumerate() {
        s.validate(dims.embed_dim, i)?;
    }
    let encoder = build_encoder(dims, seed)?;
    let mut source_inputs = Vec::with_capacity(specs.len());
    let mut target_embeddings = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let anchor = cluster_anchor(seed, i, dims.input_dim);
        let mut rng = rng::stream(seed, &[tags::SOURCE, i as u64]);
        let inputs: Vec<Vec<f64>> = (0..spec.n_source())
            .map(|_| {
                anchor
                    .iter()
                    .map(|a| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (a + spec.source_dispersion * z).clamp(0.0, 1.0)
                    })
                    .collect()
            })
            .collect();
        source_inputs.push(inputs);

        let mut rng = rng::stream(seed, &[tags::TARGET, i as u64]);
        let targets = (0..spec.count)
            .map(|_| sample_target(spec, &mut rng, dims.embed_dim))
            .collect::<Result<Vec<_>>>()?;
        target_embeddings.push(EmbeddingSet::new(targets, i.to_string())?);
    }
    WorldSnapshot::assemble(encoder, specs.to_vec(), source_inputs, target_embeddings, seed)
}

/// Summary of the gap between a cluster's source and target embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    /// `‖mean(target) − mean(source)‖₂`.
    pub delta_norm: f64,
    pub sigma_s: f64,
    pub sigma_t: f64,
}

impl WorldSnapshot {
    fn assemble(
        encoder: SourceEncoder,
        clusters: Vec<ClusterSpec>,
        source_inputs: Vec<Vec<Vec<f64>>>,
        target_embeddings: Vec<EmbeddingSet>,
        seed: u64,
    ) -> Result<Self> {
        if source_inputs.len() != clusters.len() || target_embeddings.len() != clusters.len() {
            return Err(Error::config("per-cluster lists must match the cluster count"));
        }
        let mut source_embeddings = Vec::with_capacity(clusters.len());
        for (c, inputs) in source_inputs.iter().enumerate() {
            if inputs.is_empty() {
                return Err(Error::config(format!("cluster {c} has no source inputs")));
            }
            for x in inputs {
                if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::config(format!(
                        "cluster {c}: source input outside [0,1]^n"
                    )));
                }
            }
            source_embeddings.push(
                inputs
                    .iter()
                    .map(|x| encoder.encode(x))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        for t in &target_embeddings {
            check_dims(encoder.dims.embed_dim, t.dim())?;
            if t.len() < 2 {
                return Err(Error::config("each cluster needs at least 2 target embeddings"));
            }
        }
        Ok(Self {
            encoder,
            clusters,
            source_inputs,
            target_embeddings,
            source_embeddings,
            seed,
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn dims(&self) -> EncoderDims {
        self.encoder.dims
    }

    fn check_cluster(&self, cluster: usize) -> Result<()> {
        if cluster >= self.clusters.len() {
            return Err(Error::Lookup {
                kind: "cluster",
                id: cluster.to_string(),
            });
        }
        Ok(())
    }

    pub fn source_embeddings(&self, cluster: usize) -> Result<&[Embedding]> {
        self.check_cluster(cluster)?;
        Ok(&self.source_embeddings[cluster])
    }

    pub fn source_inputs(&self, cluster: usize) -> Result<&[Vec<f64>]> {
        self.check_cluster(cluster)?;
        Ok(&self.source_inputs[cluster])
    }

    pub fn targets(&self, cluster: usize) -> Result<&EmbeddingSet> {
        self.check_cluster(cluster)?;
        Ok(&self.target_embeddings[cluster])
    }

    /// Even-indexed target embeddings: the adversary's proxy half.
    pub fn proxy_targets(&self, cluster: usize) -> Result<Vec<Embedding>> {
        Ok(split_indices(self.targets(cluster)?.len()).0
            .into_iter()
            .map(|i| self.target_embeddings[cluster].members()[i].clone())
            .collect())
    }

    /// Odd-indexed target embeddings: held-out true targets.
    pub fn true_targets(&self, cluster: usize) -> Result<Vec<Embedding>> {
        Ok(split_indices(self.targets(cluster)?.len()).1
            .into_iter()
            .map(|i| self.target_embeddings[cluster].members()[i].clone())
            .collect())
    }

    pub fn gap_stats(&self, cluster: usize) -> Result<GapStats> {
        empirical_gap_stats(self, cluster)
    }

    /// Replaces the sampled target embeddings with externally supplied ones, matched by
    /// cluster tag (the cluster index as a decimal string).
    pub fn replace_targets(&mut self, tagged: &[(String, Embedding)]) -> Result<()> {
        let mut per_cluster: Vec<Vec<Embedding>> = vec![Vec::new(); self.clusters.len()];
        for (tag, e) in tagged {
            let idx: usize = tag.parse().map_err(|_| Error::Lookup {
                kind: "cluster tag",
                id: tag.clone(),
            })?;
            self.check_cluster(idx)?;
            check_dims(self.encoder.dims.embed_dim, e.dim())?;
            per_cluster[idx].push(e.clone());
        }
        for (i, members) in per_cluster.into_iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            if members.len() < 2 {
                return Err(Error::config(format!(
                    "cluster {i} needs at least 2 imported target embeddings"
                )));
            }
            self.target_embeddings[i] = EmbeddingSet::new(members, i.to_string())?;
        }
        Ok(())
    }

    pub fn to_document(&self) -> WorldDocument {
        WorldDocument {
            dims: self.encoder.dims,
            seed: self.seed,
            clusters: self.clusters.clone(),
            source_inputs: self.source_inputs.clone(),
            target_embeddings: self
                .target_embeddings
                .iter()
                .map(|s| s.members().iter().map(|e| e.values().to_vec()).collect())
                .collect(),
        }
    }

    pub fn from_document(doc: WorldDocument) -> Result<Self> {
        let encoder = build_encoder(doc.dims, doc.seed)?;
        for (i, s) in doc.clusters.iter().enumerate() {
            s.validate(doc.dims.embed_dim, i)?;
        }
        let targets = doc
            .target_embeddings
            .into_iter()
            .enumerate()
            .map(|(i, rows)| {
                let members = rows
                    .into_iter()
                    .map(Embedding::new)
                    .collect::<Result<Vec<_>>>()?;
                EmbeddingSet::new(members, i.to_string())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(encoder, doc.clusters, doc.source_inputs, targets, doc.seed)
    }
}

/// Disjoint (even, odd) index partition of `0..len`.
pub fn split_indices(len: usize) -> (Vec<usize>, Vec<usize>) {
    ((0..len).step_by(2).collect(), (1..len).step_by(2).collect())
}

/// `(‖μ_T − μ_S‖₂, tr Cov_S, tr Cov_T)` for one cluster of the snapshot.
pub fn empirical_gap_stats(world: &WorldSnapshot, cluster: usize) -> Result<GapStats> {
    let source = world.source_embeddings(cluster)?;
    let target = world.targets(cluster)?;
    let mu_s = numerics::mean_embedding(source)?;
    let mu_t = target.mean();
    Ok(GapStats {
        delta_norm: l2_dist(&mu_t, &mu_s)?,
        sigma_s: numerics::variance_trace(source)?,
        sigma_t: target.variance_trace(),
    })
}

/// JSON form of a snapshot. The encoder is rebuilt from `(dims, seed)` on import.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldDocument {
    pub dims: EncoderDims,
    pub seed: u64,
    pub clusters: Vec<ClusterSpec>,
    pub source_inputs: Vec<Vec<Vec<f64>>>,
    pub target_embeddings: Vec<Vec<Vec<f64>>>,
}

/// Named world presets whose dispersions are calibrated against reference covariance
/// traces: classification-like (σ_T ≈ 0.1107, σ_S ≈ 0.2753) and retrieval-like
/// (σ_T ≈ 0.5868, σ_S ≈ 0.5706).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetKind {
    Classification,
    Retrieval,
}

/// Knobs for building a preset world; `Default` per kind gives the calibrated values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PresetParams {
    pub n_clusters: usize,
    pub dims: EncoderDims,
    pub source_dispersion: f64,
    pub target_dispersion: f64,
    pub offset_norm: f64,
    /// Target embeddings per cluster (half proxies, half true targets).
    pub target_count: usize,
    pub source_count: usize,
}

impl Default for PresetParams {
    fn default() -> Self {
        Self::for_kind(PresetKind::Retrieval)
    }
}

impl PresetParams {
    pub fn for_kind(kind: PresetKind) -> Self {
        match kind {
            PresetKind::Retrieval => Self {
                n_clusters: 8,
                dims: EncoderDims::new(3072, 64, 32),
                source_dispersion: 0.16,
                target_dispersion: 1.7,
                offset_norm: 1.0,
                target_count: 100,
                source_count: 200,
            },
            PresetKind::Classification => Self {
                n_clusters: 8,
                dims: EncoderDims::new(3072, 64, 32),
                source_dispersion: 0.085,
                target_dispersion: 0.5,
                offset_norm: 1.0,
                target_count: 100,
                source_count: 200,
            },
        }
    }
}

/// Cluster specs whose concept directions are the encoder's images of the cluster
/// anchors, sharing one modality offset of norm `offset_norm`.
pub fn preset_specs(params: &PresetParams, seed: u64) -> Result<Vec<ClusterSpec>> {
    params.dims.validate()?;
    if params.n_clusters == 0 {
        return Err(Error::config("preset needs at least one cluster"));
    }
    let encoder = build_encoder(params.dims, seed)?;
    let d = params.dims.embed_dim;
    let mut rng = rng::stream(seed, &[tags::OFFSET]);
    let dir: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
    let dir_norm = numerics::norm(&dir);
    let offset: Vec<f64> = dir.iter().map(|v| params.offset_norm * v / dir_norm).collect();
    (0..params.n_clusters)
        .map(|i| {
            let anchor = cluster_anchor(seed, i, params.dims.input_dim);
            Ok(ClusterSpec {
                concept_direction: encoder.encode(&anchor)?.into_values(),
                source_dispersion: params.source_dispersion,
                target_dispersion: params.target_dispersion,
                modality_offset: offset.clone(),
                count: params.target_count,
                source_count: Some(params.source_count),
            })
        })
        .collect()
}

pub fn preset_world(params: &PresetParams, seed: u64) -> Result<WorldSnapshot> {
    let specs = preset_specs(params, seed)?;
    sample_world(&specs, params.dims, seed)
}

/// Writes `tag,x1,x2,...` rows with full round-trip precision.
pub fn write_embedding_csv<W: Write>(mut out: W, rows: &[(String, Embedding)]) -> std::io::Result<()> {
    for (tag, e) in rows {
        write!(out, "{tag}")?;
        for v in e.values() {
            write!(out, ",{v:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Parse failure in an embedding CSV, with its 1-based row number.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("row {row}: {message}")]
pub struct CsvError {
    pub row: usize,
    pub message: String,
}

/// Reads `tag,x1,x2,...` rows. Every row must have the same width (at least a tag
/// and two coordinates) and finite numeric coordinates.
pub fn read_embedding_csv<R: BufRead>(input: R) -> std::result::Result<Vec<(String, Embedding)>, CsvError> {
    let mut rows = Vec::new();
    let mut width = None;
    for (i, line) in input.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| CsvError {
            row,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() < 3 {
            return Err(CsvError {
                row,
                message: format!("need a tag and at least 2 coordinates, got {} cells", cells.len()),
            });
        }
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(CsvError {
                    row,
                    message: format!("ragged row: {} cells, expected {w}", cells.len()),
                })
            }
            _ => {}
        }
        let values = cells[1..]
            .iter()
            .map(|c| {
                let v: f64 = c.parse().map_err(|_| CsvError {
                    row,
                    message: format!("non-numeric cell {c:?}"),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(CsvError {
                        row,
                        message: format!("non-finite cell {c:?}"),
                    })
                }
            })
            .collect::<std::result::Result<Vec<f64>, CsvError>>()?;
        let e = Embedding::new(values).map_err(|e| CsvError {
            row,
            message: e.to_string(),
        })?;
        rows.push((cells[0].to_string(), e));
    }
    Ok(rows)
}
