//! The adversary: proxy objectives, baselines and the two optimizers.
//!
//! The combined objective for an adversarial embedding `v` is
//!
//! ```text
//! L_G(v) = 1 − (1/N_c) Σ_j cos(v, ŷ_j)          target-modal proxies
//! L_D(v) = (1/N_s) Σ_i ‖v − x̂_i‖₂               source-modal proxies
//! J(v)   = L_G(v) + α · L_D(v)
//! ```
//!
//! minimized over inputs `x` with `‖x − x₀‖∞ ≤ ε` and `x ∈ [0,1]^n`.

mod pgd;
mod square;

use serde::{Deserialize, Serialize};

pub use pgd::{pgd_minimize, run_pgd, Minimized};
pub use square::{run_square, square_minimize, InputLayout};

use crate::error::{Error, Result};
use crate::numerics::{self, check_dims, cosine, l2_dist, Embedding};
use crate::synthworld::SourceEncoder;

/// Source-modal proxies `x̂_i` (concealment) and target-modal proxies `ŷ_j`
/// (similarity), all unit-norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxySet {
    source_proxies: Vec<Embedding>,
    target_proxies: Vec<Embedding>,
}

impl ProxySet {
    pub fn new(source_proxies: Vec<Embedding>, target_proxies: Vec<Embedding>) -> Result<Self> {
        if target_proxies.is_empty() {
            return Err(Error::Empty("target proxies"));
        }
        let dim = target_proxies[0].dim();
        for e in source_proxies.iter().chain(&target_proxies) {
            check_dims(dim, e.dim())?;
            if !e.is_unit(1e-9) {
                return Err(Error::domain(format!(
                    "proxy embeddings must be unit-norm, found norm {}",
                    e.norm()
                )));
            }
        }
        Ok(Self {
            source_proxies,
            target_proxies,
        })
    }

    pub fn source_proxies(&self) -> &[Embedding] {
        &self.source_proxies
    }

    pub fn target_proxies(&self) -> &[Embedding] {
        &self.target_proxies
    }

    pub fn n_source(&self) -> usize {
        self.source_proxies.len()
    }

    pub fn n_target(&self) -> usize {
        self.target_proxies.len()
    }

    pub fn dim(&self) -> usize {
        self.target_proxies[0].dim()
    }
}

/// Generalizability loss `1 − mean_j cos(v, ŷ_j)`, in `[0, 2]`.
pub fn loss_g(v: &Embedding, proxies: &ProxySet) -> Result<f64> {
    mean_of(proxies.target_proxies(), "target proxies", |y| cosine(v, y)).map(|m| 1.0 - m)
}

/// Undetectability loss `mean_i ‖v − x̂_i‖₂`.
pub fn loss_d(v: &Embedding, proxies: &ProxySet) -> Result<f64> {
    mean_of(proxies.source_proxies(), "source proxies", |x| l2_dist(v, x))
}

fn mean_of(
    items: &[Embedding],
    what: &'static str,
    f: impl Fn(&Embedding) -> Result<f64>,
) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::domain(format!("{what} are empty")));
    }
    let mut sum = 0.0;
    for it in items {
        sum += f(it)?;
    }
    Ok(sum / items.len() as f64)
}

fn check_alpha(alpha: f64, proxies: &ProxySet) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::config(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    if alpha > 0.0 && proxies.n_source() == 0 {
        return Err(Error::config("alpha > 0 requires at least one source proxy"));
    }
    Ok(())
}

/// `L_G(v) + α·L_D(v)`; the `L_D` term is skipped entirely when `α = 0`.
pub fn pta_objective(v: &Embedding, proxies: &ProxySet, alpha: f64) -> Result<f64> {
    check_alpha(alpha, proxies)?;
    let g = loss_g(v, proxies)?;
    if alpha == 0.0 {
        return Ok(g);
    }
    Ok(g + alpha * loss_d(v, proxies)?)
}

/// Single cross-modal target baseline: `1 − cos(v, target)`.
pub fn illusion_objective(v: &Embedding, target: &Embedding) -> Result<f64> {
    Ok(1.0 - cosine(v, target)?)
}

/// Same-modal surrogate baseline: `‖v − surrogate‖₂`.
pub fn samemodal_objective(v: &Embedding, surrogate: &Embedding) -> Result<f64> {
    l2_dist(v, surrogate)
}

/// Picks the same-modal surrogate for a target cluster: among the source clusters, the
/// one whose mean has the highest cosine to `target_mean`; within it, the member with
/// the highest cosine to `target_mean`. Returns `(cluster index, surrogate)`.
pub fn select_surrogate(
    source_clusters: &[Vec<Embedding>],
    target_mean: &Embedding,
) -> Result<(usize, Embedding)> {
    let mut best: Option<(usize, f64)> = None;
    for (c, members) in source_clusters.iter().enumerate() {
        let mean = numerics::mean_embedding(members)?;
        let s = cosine(&mean, target_mean)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    let (cluster, _) = best.ok_or(Error::Empty("source clusters"))?;
    let mut pick: Option<(&Embedding, f64)> = None;
    for m in &source_clusters[cluster] {
        let s = cosine(m, target_mean)?;
        if pick.is_none_or(|(_, b)| s > b) {
            pick = Some((m, s));
        }
    }
    Ok((cluster, pick.expect("non-empty cluster").0.clone()))
}

/// Objective over the source embedding `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    Pta { proxies: ProxySet, alpha: f64 },
    Illusion { target: Embedding },
    SameModal { surrogate: Embedding },
}

/// `∇_v cos(v, y)`.
fn cosine_gradient(v: &[f64], y: &[f64]) -> Vec<f64> {
    let nv = numerics::norm(v);
    let ny = numerics::norm(y);
    let c = numerics::dot(v, y) / (nv * ny);
    v.iter()
        .zip(y)
        .map(|(vi, yi)| yi / (nv * ny) - c * vi / (nv * nv))
        .collect()
}

/// `∇_v ‖v − p‖₂`, taking 0 at `v = p`.
fn distance_gradient(v: &[f64], p: &[f64]) -> Vec<f64> {
    let d = numerics::sq_dist(v, p).sqrt();
    if d == 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().zip(p).map(|(a, b)| (a - b) / d).collect()
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (y, xi) in acc.iter_mut().zip(x) {
        *y += a * xi;
    }
}

impl Objective {
    pub fn pta(proxies: ProxySet, alpha: f64) -> Result<Self> {
        check_alpha(alpha, &proxies)?;
        Ok(Objective::Pta { proxies, alpha })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Objective::Pta { .. } => "pta",
            Objective::Illusion { .. } => "illusion",
            Objective::SameModal { .. } => "samemodal",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Objective::Pta { proxies, .. } => proxies.dim(),
            Objective::Illusion { target } => target.dim(),
            Objective::SameModal { surrogate } => surrogate.dim(),
        }
    }

    pub fn value(&self, v: &Embedding) -> Result<f64> {
        match self {
            Objective::Pta { proxies, alpha } => pta_objective(v, proxies, *alpha),
            Objective::Illusion { target } => illusion_objective(v, target),
            Objective::SameModal { surrogate } => samemodal_objective(v, surrogate),
        }
    }

    /// `∇_v` of [`Objective::value`].
    pub fn embedding_gradient(&self, v: &Embedding) -> Result<Vec<f64>> {
        check_dims(self.dim(), v.dim())?;
        let vv = v.values();
        let mut g = vec![0.0; vv.len()];
        match self {
            Objective::Pta { proxies, alpha } => {
                let wc = -1.0 / proxies.n_target() as f64;
                for y in proxies.target_proxies() {
                    axpy(&mut g, wc, &cosine_gradient(vv, y.values()));
                }
                if *alpha > 0.0 {
                    let ws = alpha / proxies.n_source() as f64;
                    for x in proxies.source_proxies() {
                        axpy(&mut g, ws, &distance_gradient(vv, x.values()));
                    }
                }
            }
            Objective::Illusion { target } => {
                axpy(&mut g, -1.0, &cosine_gradient(vv, target.values()));
            }
            Objective::SameModal { surrogate } => {
                g = distance_gradient(vv, surrogate.values());
            }
        }
        Ok(g)
    }
}

/// A scalar function of the raw input that an optimizer can minimize.
pub trait InputObjective {
    fn input_dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// An [`Objective`] composed with the source encoder. The input gradient uses a single
/// backward pass with the summed upstream `∇_v J`; by linearity of the chain rule in
/// the upstream slot this equals summing one backward pass per proxy term.
pub struct EncodedObjective<'a> {
    pub encoder: &'a SourceEncoder,
    pub objective: &'a Objective,
}

impl InputObjective for EncodedObjective<'_> {
    fn input_dim(&self) -> usize {
        self.encoder.dims().input_dim
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.objective.value(&self.encoder.encode(x)?)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let fwd = self.encoder.forward(x)?;
        let value = self.objective.value(fwd.output())?;
        let upstream = self.objective.embedding_gradient(fwd.output())?;
        Ok((value, self.encoder.backward(&fwd, &upstream)?))
    }
}

/// `x ↦ g·x`; lets optimizer behaviour be checked in closed form without an encoder.
#[derive(Debug, Clone)]
pub struct LinearObjective {
    pub weights: Vec<f64>,
}

impl InputObjective for LinearObjective {
    fn input_dim(&self) -> usize {
        self.weights.len()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        check_dims(self.weights.len(), x.len())?;
        Ok(numerics::dot(&self.weights, x))
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.value(x)?, self.weights.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Pgd,
    Square,
}

/// Budget and optimizer settings for one attack run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    /// L∞ budget in input units.
    pub epsilon: f64,
    /// PGD steps.
    pub iterations: usize,
    /// PGD signed-step length; must not exceed `epsilon`.
    pub step_size: f64,
    /// Weight of the undetectability loss.
    pub alpha: f64,
    pub optimizer: Optimizer,
    /// Objective evaluations allowed to the Square Attack.
    pub query_budget: usize,
    /// Initial fraction of the input area covered by a Square Attack window.
    pub p_init: f64,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        let epsilon = 8.0 / 255.0;
        Self {
            epsilon,
            iterations: 100,
            step_size: epsilon / 10.0,
            alpha: 0.0,
            optimizer: Optimizer::Pgd,
            query_budget: 10_000,
            p_init: 0.8,
            seed: 0,
        }
    }
}

impl AttackConfig {
    /// Black-box defaults: `ε = 16/255`, Square Attack.
    pub fn square_default() -> Self {
        let epsilon = 16.0 / 255.0;
        Self {
            epsilon,
            step_size: epsilon / 10.0,
            optimizer: Optimizer::Square,
            ..Self::default()
        }
    }

    /// All violated constraints, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            out.push(format!("epsilon must be finite and > 0, got {}", self.epsilon));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            out.push(format!("step_size must be finite and > 0, got {}", self.step_size));
        } else if self.step_size > self.epsilon {
            out.push(format!(
                "step_size {} exceeds epsilon {}",
                self.step_size, self.epsilon
            ));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            out.push(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if self.optimizer == Optimizer::Square && self.query_budget == 0 {
            out.push("query_budget must be at least 1".into());
        }
        if !(self.p_init > 0.0 && self.p_init <= 1.0) {
            out.push(format!("p_init must lie in (0, 1], got {}", self.p_init));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::config(v.join("; ")))
        }
    }
}

/// Outcome of one attack run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub original: Vec<f64>,
    pub adversarial_input: Vec<f64>,
    pub adversarial_embedding: Embedding,
    /// PGD: objective at every iterate (index 0 is `x₀`). Square: best-so-far objective
    /// after every query.
    pub loss_trace: Vec<f64>,
    pub best_objective: f64,
    pub queries_used: usize,
}

impl AttackResult {
    pub fn linf_distance(&self) -> f64 {
        linf(&self.original, &self.adversarial_input)
    }

    pub fn to_record(&self, cfg: &AttackConfig) -> AttackRecord {
        AttackRecord {
            original: self.original.clone(),
            adversarial_input: self.adversarial_input.clone(),
            adversarial_embedding: self.adversarial_embedding.values().to_vec(),
            objective_trace: self.loss_trace.clone(),
            queries_used: self.queries_used,
            config_echo: cfg.clone(),
            seed: cfg.seed,
        }
    }
}

/// JSON form of an attack result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub original: Vec<f64>,
    pub adversarial_input: Vec<f64>,
    pub adversarial_embedding: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub queries_used: usize,
    pub config_echo: AttackConfig,
    pub seed: u64,
}

pub(crate) fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub(crate) fn check_start(x0: &[f64], dim: usize) -> Result<()> {
    check_dims(dim, x0.len())?;
    if x0.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Precondition("starting input must lie in [0,1]^n".into()));
    }
    Ok(())
}

/// Runs the optimizer selected by `cfg.optimizer`.
pub fn run_attack(
    encoder: &SourceEncoder,
    x0: &[f64],
    objective: &Objective,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    match cfg.optimizer {
        Optimizer::Pgd => run_pgd(encoder, x0, objective, cfg),
        Optimizer::Square => run_square(encoder, x0, objective, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::unit_normalize;
    use crate::rng;
    use crate::synthworld::{build_encoder, EncoderDims};
    use proptest::prelude::*;
    use rand::Rng as _;

    fn e(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn unit(v: &[f64]) -> Embedding {
        unit_normalize(&e(v)).unwrap()
    }

    #[test]
    fn loss_g_examples() {
        let y = unit(&[1.0, 0.0, 0.0]);
        let p = ProxySet::new(vec![], vec![y.clone()]).unwrap();
        assert_eq!(loss_g(&y, &p).unwrap(), 0.0);
        let p = ProxySet::new(vec![], vec![unit(&[0.0, 1.0, 0.0]), unit(&[0.0, 0.0, 1.0])]).unwrap();
        assert_eq!(loss_g(&y, &p).unwrap(), 1.0);
        let p = ProxySet::new(vec![], vec![y.clone(), unit(&[0.0, 1.0, 0.0])]).unwrap();
        assert_eq!(loss_g(&y, &p).unwrap(), 0.5);
        assert!(matches!(ProxySet::new(vec![], vec![]), Err(Error::Empty(_))));
    }

    #[test]
    fn loss_d_examples() {
        let v = unit(&[1.0, 0.0]);
        let t = vec![unit(&[0.0, 1.0])];
        let p = ProxySet::new(vec![v.clone(), v.clone()], t.clone()).unwrap();
        assert_eq!(loss_d(&v, &p).unwrap(), 0.0);
        let p = ProxySet::new(vec![unit(&[-1.0, 0.0])], t.clone()).unwrap();
        assert_eq!(loss_d(&v, &p).unwrap(), 2.0);
        let empty = ProxySet::new(vec![], t.clone()).unwrap();
        assert!(matches!(loss_d(&v, &empty), Err(Error::Domain(_))));
    }

    #[test]
    fn loss_d_averages_distances() {
        let v = e(&[-2.0, 0.0]);
        let p = ProxySet::new(vec![unit(&[1.0, 0.0]), unit(&[-1.0, 0.0])], vec![unit(&[0.0, 1.0])]).unwrap();
        assert_eq!(loss_d(&v, &p).unwrap(), 2.0);
    }

    #[test]
    fn pta_objective_examples() {
        let v = unit(&[1.0, 1.0]);
        let p = ProxySet::new(vec![unit(&[1.0, 0.0])], vec![unit(&[0.0, 1.0]), unit(&[1.0, 0.2])]).unwrap();
        assert_eq!(pta_objective(&v, &p, 0.0).unwrap(), loss_g(&v, &p).unwrap());
        let single = ProxySet::new(vec![], vec![unit(&[0.3, 1.0])]).unwrap();
        assert_eq!(
            pta_objective(&v, &single, 0.0).unwrap(),
            illusion_objective(&v, &unit(&[0.3, 1.0])).unwrap()
        );
        assert!(matches!(pta_objective(&v, &single, 0.5), Err(Error::Config(_))));
    }

    #[test]
    fn pta_objective_adds_weighted_losses() {
        // both losses equal to 0.5: cos = 0.5 to the target, distance 0.5 to the source
        let v = e(&[1.0, 0.0]);
        let y = unit(&[0.5, 0.75f64.sqrt()]);
        let theta = 2.0 * (0.25f64).asin();
        let x = e(&[theta.cos(), theta.sin()]);
        let p = ProxySet::new(vec![x], vec![y]).unwrap();
        assert!((loss_g(&v, &p).unwrap() - 0.5).abs() < 1e-12);
        assert!((loss_d(&v, &p).unwrap() - 0.5).abs() < 1e-12);
        assert!((pta_objective(&v, &p, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn baseline_objectives() {
        let t = unit(&[0.0, 1.0]);
        assert_eq!(illusion_objective(&t, &t).unwrap(), 0.0);
        assert_eq!(illusion_objective(&unit(&[1.0, 0.0]), &t).unwrap(), 1.0);
        assert_eq!(illusion_objective(&unit(&[0.0, -1.0]), &t).unwrap(), 2.0);
        assert_eq!(samemodal_objective(&t, &t).unwrap(), 0.0);
        assert_eq!(samemodal_objective(&unit(&[0.0, -1.0]), &t).unwrap(), 2.0);
    }

    #[test]
    fn surrogate_is_argmax_over_cluster_means() {
        let clusters = vec![
            vec![unit(&[1.0, 0.0, 0.0]), unit(&[1.0, 0.1, 0.0])],
            vec![unit(&[0.2, 1.0, 0.0]), unit(&[0.0, 1.0, 0.3]), unit(&[0.0, 1.0, 0.0])],
            vec![unit(&[0.0, 0.0, 1.0])],
        ];
        let target_mean = e(&[0.0, 0.5, 0.0]);
        // brute force: cosines of cluster means with the target mean
        let scores: Vec<f64> = clusters
            .iter()
            .map(|c| cosine(&numerics::mean_embedding(c).unwrap(), &target_mean).unwrap())
            .collect();
        let expected = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let (cluster, s) = select_surrogate(&clusters, &target_mean).unwrap();
        assert_eq!(cluster, expected);
        assert_eq!(cluster, 1);
        assert_eq!(s, unit(&[0.0, 1.0, 0.0]));
    }

    fn random_unit(rng: &mut rng::Rng, d: usize) -> Embedding {
        unit(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
    }

    fn fd(obj: &dyn InputObjective, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (obj.value(&xp).unwrap() - obj.value(&xm).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn objective_input_gradients_match_finite_differences() {
        let dims = EncoderDims::new(10, 12, 6);
        let enc = build_encoder(dims, 5).unwrap();
        let mut rng = rng::stream(3, &[]);
        for probe in 0..50 {
            let targets: Vec<Embedding> = (0..4).map(|_| random_unit(&mut rng, 6)).collect();
            let sources: Vec<Embedding> = (0..3).map(|_| random_unit(&mut rng, 6)).collect();
            let objective = match probe % 3 {
                0 => Objective::pta(ProxySet::new(sources, targets).unwrap(), 0.7).unwrap(),
                1 => Objective::Illusion { target: targets[0].clone() },
                _ => Objective::SameModal { surrogate: sources[0].clone() },
            };
            let obj = EncodedObjective { encoder: &enc, objective: &objective };
            let x: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
            let (_, g) = obj.value_and_gradient(&x).unwrap();
            let num = fd(&obj, &x, 1e-5);
            let diff: f64 = g.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = numerics::norm(&g).max(numerics::norm(&num)).max(1e-12);
            assert!(diff / scale < 1e-4, "probe {probe}: rel err {}", diff / scale);
        }
    }

    #[test]
    fn config_validation_collects_violations() {
        let cfg = AttackConfig {
            epsilon: 0.01,
            step_size: 0.02,
            alpha: -1.0,
            ..AttackConfig::default()
        };
        assert_eq!(cfg.violations().len(), 2);
        assert!(AttackConfig::default().validate().is_ok());
        assert!(AttackConfig::square_default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn alpha_decomposition_is_exact(
            seed in 0u64..10_000,
            alpha in 0.0f64..5.0,
        ) {
            let mut rng = rng::stream(seed, &[]);
            let v = random_unit(&mut rng, 5);
            let p = ProxySet::new(
                (0..3).map(|_| random_unit(&mut rng, 5)).collect(),
                (0..4).map(|_| random_unit(&mut rng, 5)).collect(),
            ).unwrap();
            let lhs = pta_objective(&v, &p, alpha).unwrap() - pta_objective(&v, &p, 0.0).unwrap();
            let rhs = alpha * loss_d(&v, &p).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
            let lg = loss_g(&v, &p).unwrap();
            prop_assert!((0.0..=2.0).contains(&lg));
            let ld = loss_d(&v, &p).unwrap();
            prop_assert!((0.0..=2.0 + 1e-12).contains(&ld));
        }

        #[test]
        fn proxy_order_does_not_matter(seed in 0u64..10_000, rot in 1usize..5) {
            let mut rng = rng::stream(seed, &[1]);
            let v = random_unit(&mut rng, 4);
            let src: Vec<Embedding> = (0..5).map(|_| random_unit(&mut rng, 4)).collect();
            let tgt: Vec<Embedding> = (0..6).map(|_| random_unit(&mut rng, 4)).collect();
            let mut src2 = src.clone();
            let mut tgt2 = tgt.clone();
            src2.rotate_left(rot);
            tgt2.reverse();
            let a = pta_objective(&v, &ProxySet::new(src, tgt).unwrap(), 0.4).unwrap();
            let b = pta_objective(&v, &ProxySet::new(src2, tgt2).unwrap(), 0.4).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
