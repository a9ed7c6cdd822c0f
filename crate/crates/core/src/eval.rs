//! Task simulations and success metrics.
//!
//! Success rates follow the set arithmetic
//!
//! ```text
//! ASR  = 100 · |A_success \ A'| / N
//! ASRD = 100 · |(A_success \ A') \ A_detected| / N
//! ```
//!
//! where `A'` holds the cases that already succeed with the clean (unperturbed)
//! originals in place of the AEs.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::detect::{filter_outliers, DetectionConfig};
use crate::error::{Error, Result};
use crate::numerics::{check_dims, cosine, unit_normalize, Embedding};
use crate::rng::{self, tags};

/// Retrieval corpus: benign items followed by injected AEs. Item ids are positions in
/// `items`; injected ids continue after them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gallery {
    pub items: Vec<Embedding>,
    pub injected: Vec<Embedding>,
}

impl Gallery {
    pub fn new(items: Vec<Embedding>, injected: Vec<Embedding>) -> Result<Self> {
        if let Some(first) = items.first().or(injected.first()) {
            for e in items.iter().chain(&injected) {
                check_dims(first.dim(), e.dim())?;
            }
        }
        Ok(Self { items, injected })
    }

    pub fn len(&self) -> usize {
        self.items.len() + self.injected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: usize) -> Option<&Embedding> {
        if id < self.items.len() {
            self.items.get(id)
        } else {
            self.injected.get(id - self.items.len())
        }
    }

    pub fn is_injected(&self, id: usize) -> bool {
        id >= self.items.len() && id < self.len()
    }

    /// `|injected| / (|items| + |injected|)`.
    pub fn injection_ratio(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.injected.len() as f64 / self.len() as f64
        }
    }

    /// Same gallery with the injected entries swapped for `originals`.
    pub fn with_injected(&self, originals: Vec<Embedding>) -> Result<Self> {
        if originals.len() != self.injected.len() {
            return Err(Error::config(format!(
                "expected {} originals, got {}",
                self.injected.len(),
                originals.len()
            )));
        }
        Gallery::new(self.items.clone(), originals)
    }
}

/// Zero-shot classification: the class whose best-matching prompt has the highest
/// cosine to `candidate`; ties go to the lowest class index.
pub fn classify(class_prompts: &[Vec<Embedding>], candidate: &Embedding) -> Result<usize> {
    if class_prompts.is_empty() {
        return Err(Error::config("no classes to choose from"));
    }
    let mut best: Option<(usize, f64)> = None;
    for (c, prompts) in class_prompts.iter().enumerate() {
        if prompts.is_empty() {
            return Err(Error::config(format!("class {c} has no prompts")));
        }
        let mut top = f64::NEG_INFINITY;
        for p in prompts {
            top = top.max(cosine(candidate, p)?);
        }
        if best.is_none_or(|(_, b)| top > b) {
            best = Some((c, top));
        }
    }
    Ok(best.expect("non-empty").0)
}

/// Per-case bookkeeping for the success-rate formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Outcome {
    /// In `A_success`: the attack reached its target.
    pub success: bool,
    /// In `A'`: the clean original already reached it.
    pub pre_success: bool,
    /// In `A_detected`.
    pub detected: bool,
}

impl Outcome {
    pub fn counts_for_asr(&self) -> bool {
        self.success && !self.pre_success
    }

    pub fn counts_for_asrd(&self) -> bool {
        self.counts_for_asr() && !self.detected
    }
}

fn rate(outcomes: &[Outcome], keep: impl Fn(&Outcome) -> bool) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::domain("success rate over zero cases"));
    }
    Ok(100.0 * outcomes.iter().filter(|o| keep(o)).count() as f64 / outcomes.len() as f64)
}

/// `100 · |A_success \ A'| / N`.
pub fn asr(outcomes: &[Outcome]) -> Result<f64> {
    rate(outcomes, Outcome::counts_for_asr)
}

/// `100 · |(A_success \ A') \ A_detected| / N`.
pub fn asrd(outcomes: &[Outcome]) -> Result<f64> {
    rate(outcomes, Outcome::counts_for_asrd)
}

/// Classification outcome of one AE against the held-out true prompts.
pub fn classification_outcome(
    true_prompts: &[Vec<Embedding>],
    original: &Embedding,
    adversarial: &Embedding,
    target_class: usize,
) -> Result<Outcome> {
    if target_class >= true_prompts.len() {
        return Err(Error::Lookup {
            kind: "class",
            id: target_class.to_string(),
        });
    }
    Ok(Outcome {
        success: classify(true_prompts, adversarial)? == target_class,
        pre_success: classify(true_prompts, original)? == target_class,
        detected: false,
    })
}

/// Classification ASR over `(original, adversarial, target class)` triples.
pub fn cls_asr(true_prompts: &[Vec<Embedding>], cases: &[(Embedding, Embedding, usize)]) -> Result<f64> {
    let outcomes = cases
        .iter()
        .map(|(o, a, t)| classification_outcome(true_prompts, o, a, *t))
        .collect::<Result<Vec<_>>>()?;
    asr(&outcomes)
}

/// Ids of the `k` most similar gallery entries: descending cosine, ties by ascending id.
pub fn retrieve_topk(query: &Embedding, gallery: &Gallery, k: usize) -> Result<Vec<usize>> {
    if k > gallery.len() {
        return Err(Error::config(format!("K = {k} exceeds gallery size {}", gallery.len())));
    }
    let mut scored = Vec::with_capacity(gallery.len());
    for id in 0..gallery.len() {
        // `+ 0.0` folds -0.0 into 0.0 so orthogonal entries tie under total_cmp
        scored.push((id, cosine(query, gallery.get(id).expect("id in range"))? + 0.0));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(k).map(|(id, _)| id).collect())
}

/// Per-query retrieval outcome plus the poisoned top-K list it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalOutcome {
    pub outcome: Outcome,
    pub top_k: Vec<usize>,
}

/// Success = any injected id in the poisoned top-K; pre-success = the same with the
/// clean originals injected instead.
pub fn retrieval_outcomes(
    queries: &[Embedding],
    poisoned: &Gallery,
    clean: &Gallery,
    k: usize,
) -> Result<Vec<RetrievalOutcome>> {
    if queries.is_empty() {
        return Err(Error::domain("no retrieval queries"));
    }
    if poisoned.items.len() != clean.items.len() || poisoned.injected.len() != clean.injected.len() {
        return Err(Error::config("poisoned and clean galleries differ in shape"));
    }
    queries
        .iter()
        .map(|q| {
            let top_k = retrieve_topk(q, poisoned, k)?;
            let clean_top = retrieve_topk(q, clean, k)?;
            Ok(RetrievalOutcome {
                outcome: Outcome {
                    success: top_k.iter().any(|&id| poisoned.is_injected(id)),
                    pre_success: clean_top.iter().any(|&id| clean.is_injected(id)),
                    detected: false,
                },
                top_k,
            })
        })
        .collect()
}

/// R@K ASR.
pub fn rk_asr(queries: &[Embedding], poisoned: &Gallery, clean: &Gallery, k: usize) -> Result<f64> {
    let outs = retrieval_outcomes(queries, poisoned, clean, k)?;
    asr(&outs.iter().map(|o| o.outcome).collect::<Vec<_>>())
}

/// Runs the detector on the deduplicated union of `lists`, flagging exactly as many
/// points as there are injected AEs in that window (anomaly ratio `n_adv / window`).
/// Returns the flagged gallery ids, ascending.
pub fn flag_window(lists: &[Vec<usize>], gallery: &Gallery, cfg: &DetectionConfig) -> Result<Vec<usize>> {
    let mut window: Vec<usize> = lists.iter().flatten().copied().collect();
    window.sort_unstable();
    window.dedup();
    let n_adv = window.iter().filter(|&&id| gallery.is_injected(id)).count();
    if n_adv == 0 {
        return Ok(Vec::new());
    }
    let points: Vec<Embedding> = window
        .iter()
        .map(|&id| gallery.get(id).cloned().ok_or(Error::Lookup { kind: "gallery id", id: id.to_string() }))
        .collect::<Result<_>>()?;
    let scores = cfg.score(&points)?;
    let result = filter_outliers(&scores, n_adv as f64 / window.len() as f64)?;
    Ok(result.outlier_indices.iter().map(|&i| window[i]).collect())
}

/// Marks a query detected when every injected AE in its top-K is in `flagged`.
pub fn mark_detected(outcomes: &mut [RetrievalOutcome], gallery: &Gallery, flagged: &[usize]) {
    for o in outcomes.iter_mut() {
        let mut advs = o.top_k.iter().filter(|&&id| gallery.is_injected(id)).peekable();
        o.outcome.detected = advs.peek().is_some() && advs.all(|id| flagged.binary_search(id).is_ok());
    }
}

/// [`flag_window`] over the outcomes' own top-K lists followed by [`mark_detected`].
pub fn detect_in_topk_window(
    outcomes: &mut [RetrievalOutcome],
    gallery: &Gallery,
    cfg: &DetectionConfig,
) -> Result<Vec<usize>> {
    let lists: Vec<Vec<usize>> = outcomes.iter().map(|o| o.top_k.clone()).collect();
    let flagged = flag_window(&lists, gallery, cfg)?;
    mark_detected(outcomes, gallery, &flagged);
    Ok(flagged)
}

/// Recall@1 in percent: share of queries whose rank-1 entry is their ground-truth item.
pub fn recall_at_1(queries: &[Embedding], ground_truth: &[usize], gallery: &Gallery) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::domain("no recall queries"));
    }
    if queries.len() != ground_truth.len() {
        return Err(Error::config("each query needs exactly one ground-truth item"));
    }
    let mut hits = 0;
    for (q, &gt) in queries.iter().zip(ground_truth) {
        if gt >= gallery.items.len() {
            return Err(Error::Lookup { kind: "gallery item", id: gt.to_string() });
        }
        if retrieve_topk(q, gallery, 1)?[0] == gt {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / queries.len() as f64)
}

/// AEs needed for an injection ratio, `⌈ratio·|items|⌉`.
pub fn injection_count(ratio: f64, n_items: usize) -> Result<usize> {
    if !(ratio.is_finite() && ratio >= 0.0) {
        return Err(Error::config(format!("injection_ratio must be >= 0, got {ratio}")));
    }
    Ok((ratio * n_items as f64 - 1e-9).ceil().max(0.0) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub recall_before: f64,
    pub recall_after: f64,
    /// Percentage points.
    pub drop: f64,
    pub injected: usize,
}

/// Recall@1 before and after injecting the first `⌈ratio·|items|⌉` of `aes`.
pub fn poisoning_degradation(
    queries: &[Embedding],
    ground_truth: &[usize],
    items: &[Embedding],
    aes: &[Embedding],
    injection_ratio: f64,
) -> Result<Degradation> {
    let n = injection_count(injection_ratio, items.len())?;
    if n > aes.len() {
        return Err(Error::config(format!(
            "injection ratio {injection_ratio} needs {n} AEs but only {} are available",
            aes.len()
        )));
    }
    let clean = Gallery::new(items.to_vec(), vec![])?;
    let poisoned = Gallery::new(items.to_vec(), aes[..n].to_vec())?;
    let recall_before = recall_at_1(queries, ground_truth, &clean)?;
    let recall_after = recall_at_1(queries, ground_truth, &poisoned)?;
    Ok(Degradation {
        recall_before,
        recall_after,
        drop: recall_before - recall_after,
        injected: n,
    })
}

/// Summary row for one attack within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub asr: f64,
    pub asrd: f64,
    pub recall_at_1: Option<f64>,
    pub recall_drop: Option<f64>,
    /// Mean anomaly-score rank of the AEs in their reference pools.
    pub mean_rank: Option<f64>,
    pub n_total: usize,
    pub n_success: usize,
    pub n_pre_success: usize,
    pub n_detected: usize,
}

impl MetricReport {
    pub fn from_outcomes(outcomes: &[Outcome]) -> Result<Self> {
        Ok(Self {
            asr: asr(outcomes)?,
            asrd: asrd(outcomes)?,
            n_total: outcomes.len(),
            n_success: outcomes.iter().filter(|o| o.success).count(),
            n_pre_success: outcomes.iter().filter(|o| o.pre_success).count(),
            n_detected: outcomes.iter().filter(|o| o.counts_for_asr() && o.detected).count(),
            ..Self::default()
        })
    }
}

/// Text-side embeddings paired one-to-one with `items`:
/// `unit_normalize(item + offset + N(0, noise²·I/d))`.
pub fn paired_captions(items: &[Embedding], offset: &[f64], noise: f64, seed: u64) -> Result<Vec<Embedding>> {
    let mut rng = rng::stream(seed, &[tags::CAPTION]);
    items
        .iter()
        .map(|it| {
            check_dims(it.dim(), offset.len())?;
            let scale = noise / (it.dim() as f64).sqrt();
            let v: Vec<f64> = it
                .values()
                .iter()
                .zip(offset)
                .map(|(a, o)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    a + o + scale * z
                })
                .collect();
            unit_normalize(&Embedding::new(v)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn e(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn rand_unit(rng: &mut rng::Rng, d: usize) -> Embedding {
        unit_normalize(&e(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())).unwrap()
    }

    #[test]
    fn classify_examples() {
        let classes = vec![vec![e(&[1.0, 0.0, 0.0])], vec![e(&[0.0, 1.0, 0.0])], vec![e(&[0.0, 0.0, 1.0])]];
        assert_eq!(classify(&classes, &e(&[1.0, 0.0, 0.0])).unwrap(), 0);
        let tied = vec![
            vec![e(&[0.0, 0.0, 1.0])],
            vec![e(&[1.0, 0.0, 0.0])],
            vec![e(&[0.0, 0.0, -1.0])],
            vec![e(&[0.0, 1.0, 0.0])],
        ];
        assert_eq!(classify(&tied, &e(&[1.0, 1.0, 0.0])).unwrap(), 1);
        assert!(matches!(classify(&[], &e(&[1.0, 0.0])), Err(Error::Config(_))));
    }

    #[test]
    fn classify_matches_exhaustive_scan() {
        let mut rng = rng::stream(11, &[]);
        for _ in 0..200 {
            let classes: Vec<Vec<Embedding>> = (0..3)
                .map(|_| (0..rng.random_range(1..4)).map(|_| rand_unit(&mut rng, 4)).collect())
                .collect();
            let cand = rand_unit(&mut rng, 4);
            // scan every (class, prompt) pair, keep the first strictly better one
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for (c, ps) in classes.iter().enumerate() {
                for p in ps {
                    let s = cosine(&cand, p).unwrap();
                    if s > best.1 {
                        best = (c, s);
                    }
                }
            }
            assert_eq!(classify(&classes, &cand).unwrap(), best.0);
        }
    }

    #[test]
    fn asr_set_arithmetic() {
        // 8 of 10 succeed, 2 of those were already target-classified
        let outcomes: Vec<Outcome> = (0..10)
            .map(|i| Outcome { success: i < 8, pre_success: i < 2, detected: false })
            .collect();
        assert_eq!(asr(&outcomes).unwrap(), 60.0);
        assert_eq!(asr(&[Outcome::default(); 4]).unwrap(), 0.0);
        let all = [Outcome { success: true, ..Outcome::default() }; 5];
        assert_eq!(asr(&all).unwrap(), 100.0);
        assert!(matches!(asr(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn asrd_set_arithmetic() {
        let mut outcomes: Vec<Outcome> = (0..10)
            .map(|i| Outcome { success: i < 6, ..Outcome::default() })
            .collect();
        assert_eq!(asrd(&outcomes).unwrap(), asr(&outcomes).unwrap());
        for o in outcomes.iter_mut().take(3) {
            o.detected = true;
        }
        assert_eq!(asrd(&outcomes).unwrap(), 30.0);
        for o in outcomes.iter_mut() {
            o.detected = o.success;
        }
        assert_eq!(asrd(&outcomes).unwrap(), 0.0);
    }

    #[test]
    fn cls_asr_from_prompts() {
        let prompts = vec![vec![e(&[1.0, 0.0])], vec![e(&[0.0, 1.0])]];
        let cases = vec![
            (e(&[1.0, 0.1]), e(&[0.1, 1.0]), 1),
            (e(&[0.1, 1.0]), e(&[0.1, 1.0]), 1),
            (e(&[1.0, 0.1]), e(&[1.0, 0.2]), 1),
            (e(&[1.0, 0.1]), e(&[0.0, 1.0]), 1),
        ];
        assert_eq!(cls_asr(&prompts, &cases).unwrap(), 50.0);
    }

    #[test]
    fn topk_examples() {
        let g = Gallery::new(vec![e(&[0.0, 1.0, 0.0]), e(&[1.0, 0.0, 0.0]), e(&[0.0, 0.0, 1.0])], vec![]).unwrap();
        assert_eq!(retrieve_topk(&e(&[1.0, 0.0, 0.0]), &g, 1).unwrap(), vec![1]);
        let g = Gallery::new(vec![e(&[0.0, 1.0]), e(&[1.0, 0.0]), e(&[1.0, 0.0])], vec![e(&[1.0, 0.0])]).unwrap();
        assert_eq!(retrieve_topk(&e(&[1.0, 0.0]), &g, 4).unwrap(), vec![1, 2, 3, 0]);
        assert!(matches!(retrieve_topk(&e(&[1.0, 0.0]), &g, 5), Err(Error::Config(_))));
    }

    #[test]
    fn orthogonal_ties_break_by_id_whatever_the_zero_sign() {
        // the first dot product sums to -0.0, the second to +0.0
        let q = e(&[-1.0, 0.0, 0.0]);
        let g = Gallery::new(vec![e(&[0.0, -1.0, -1.0]), e(&[0.0, 1.0, 0.0])], vec![]).unwrap();
        let c0 = cosine(&q, g.get(0).unwrap()).unwrap();
        let c1 = cosine(&q, g.get(1).unwrap()).unwrap();
        assert!(c0 == c1 && c0.is_sign_negative() && c1.is_sign_positive());
        assert_eq!(retrieve_topk(&q, &g, 1).unwrap(), vec![0]);
    }

    #[test]
    fn topk_matches_full_sort() {
        let mut rng = rng::stream(12, &[]);
        let items: Vec<Embedding> = (0..20).map(|_| rand_unit(&mut rng, 5)).collect();
        let g = Gallery::new(items.clone(), vec![]).unwrap();
        for _ in 0..20 {
            let q = rand_unit(&mut rng, 5);
            let mut ids: Vec<usize> = (0..20).collect();
            let sims: Vec<f64> = items.iter().map(|it| cosine(&q, it).unwrap()).collect();
            ids.sort_by(|&a, &b| sims[b].partial_cmp(&sims[a]).unwrap().then(a.cmp(&b)));
            assert_eq!(retrieve_topk(&q, &g, 7).unwrap(), ids[..7].to_vec());
        }
    }

    #[test]
    fn rk_asr_examples() {
        let q = vec![e(&[1.0, 0.0, 0.0]), e(&[0.0, 1.0, 0.0])];
        let items = vec![e(&[0.0, 0.0, 1.0]), e(&[0.0, 0.8, 0.6])];
        let poisoned = Gallery::new(items.clone(), vec![e(&[1.0, 0.0, 0.0])]).unwrap();
        let clean = Gallery::new(items.clone(), vec![e(&[0.0, 0.0, -1.0])]).unwrap();
        assert_eq!(rk_asr(&q, &poisoned, &clean, 1).unwrap(), 50.0);
        let none = Gallery::new(items, vec![]).unwrap();
        assert_eq!(rk_asr(&q, &none, &none, 1).unwrap(), 0.0);
    }

    #[test]
    fn poisoning_examples() {
        let items: Vec<Embedding> = (0..10)
            .map(|i| {
                let a = i as f64 * 0.15;
                e(&[a.cos(), a.sin()])
            })
            .collect();
        let gt: Vec<usize> = (0..10).collect();
        let d = poisoning_degradation(&items, &gt, &items, &[], 0.0).unwrap();
        assert_eq!((d.recall_before, d.drop), (100.0, 0.0));
        // two AEs sit exactly on queries 3 and 7; ties go to the item, so nudge them
        let hijack = |i: usize| {
            let a = i as f64 * 0.15 + 1e-4;
            e(&[a.cos(), a.sin()])
        };
        let aes = vec![hijack(3), hijack(7)];
        let queries: Vec<Embedding> = (0..10).map(|i| if i == 3 || i == 7 { hijack(i) } else { items[i].clone() }).collect();
        let d = poisoning_degradation(&queries, &gt, &items, &aes, 0.2).unwrap();
        assert_eq!((d.recall_before, d.recall_after, d.drop), (100.0, 80.0, 20.0));
        assert!(matches!(
            poisoning_degradation(&queries, &gt, &items, &aes, 0.3),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn injection_count_is_robust_to_rounding() {
        assert_eq!(injection_count(0.01, 800).unwrap(), 8);
        assert_eq!(injection_count(0.1, 800).unwrap(), 80);
        assert_eq!(injection_count(0.001, 800).unwrap(), 1);
        assert_eq!(injection_count(0.0, 800).unwrap(), 0);
    }

    #[test]
    fn window_detection_marks_queries() {
        let items: Vec<Embedding> = (0..6).map(|i| e(&[1.0, 0.01 * i as f64])).collect();
        let g = Gallery::new(items, vec![e(&[1.0, 1.0])]).unwrap();
        let cfg = DetectionConfig { neighbors_k: 1, ..DetectionConfig::default() };
        let queries = vec![e(&[1.0, 1.0]), e(&[1.0, 0.0])];
        let mut outs = retrieval_outcomes(&queries, &g, &g.with_injected(vec![e(&[-1.0, 0.0])]).unwrap(), 2).unwrap();
        let flagged = detect_in_topk_window(&mut outs, &g, &cfg).unwrap();
        assert_eq!(flagged, vec![6]);
        assert!(outs[0].outcome.success && outs[0].outcome.detected);
        assert!(!outs[1].outcome.success && !outs[1].outcome.detected);
    }

    #[test]
    fn captions_are_unit_and_seeded() {
        let items = vec![e(&[1.0, 0.0, 0.0]), e(&[0.0, 1.0, 0.0])];
        let a = paired_captions(&items, &[0.0, 0.0, 0.5], 0.1, 3).unwrap();
        assert_eq!(a, paired_captions(&items, &[0.0, 0.0, 0.5], 0.1, 3).unwrap());
        assert!(a.iter().all(|c| c.is_unit(1e-12)));
    }

    proptest! {
        #[test]
        fn topk_hits_are_monotone_in_k(seed in 0u64..10_000) {
            let mut rng = rng::stream(seed, &[]);
            let queries: Vec<Embedding> = (0..5).map(|_| rand_unit(&mut rng, 3)).collect();
            let items: Vec<Embedding> = (0..6).map(|_| rand_unit(&mut rng, 3)).collect();
            let advs: Vec<Embedding> = (0..2).map(|_| rand_unit(&mut rng, 3)).collect();
            let origs: Vec<Embedding> = (0..2).map(|_| rand_unit(&mut rng, 3)).collect();
            let p = Gallery::new(items.clone(), advs).unwrap();
            let c = Gallery::new(items, origs).unwrap();
            let mut prev = 0usize;
            for k in 1..=8 {
                let outs = retrieval_outcomes(&queries, &p, &c, k).unwrap();
                let s = outs.iter().filter(|o| o.outcome.success).count();
                prop_assert!(s >= prev);
                prev = s;
            }
        }
    }
}
