//! Embedding-space anomaly detection.
//!
//! Each scorer maps a point set to one score per point (higher = more anomalous).
//! [`filter_outliers`] turns scores into the outlier set
//! `{ i : s_i > quantile(S, 1 − r) }` for an anomaly ratio `r`.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, check_members, sq_dist, Embedding};
use crate::rng::{self, tags};

const EULER_GAMMA: f64 = 0.577_215_664_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Knn,
    Lof,
    Iforest,
    Pca,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Knn => "knn",
            Method::Lof => "lof",
            Method::Iforest => "iforest",
            Method::Pca => "pca",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub method: Method,
    pub anomaly_ratio: f64,
    pub neighbors_k: usize,
    pub n_trees: usize,
    pub subsample: usize,
    pub pca_variance_keep: f64,
    pub seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            method: Method::Knn,
            anomaly_ratio: 0.1,
            neighbors_k: 5,
            n_trees: 100,
            subsample: 256,
            pca_variance_keep: 0.9,
            seed: 0,
        }
    }
}

impl DetectionConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.anomaly_ratio > 0.0 && self.anomaly_ratio <= 1.0) {
            out.push(format!("anomaly_ratio must lie in (0, 1], got {}", self.anomaly_ratio));
        }
        if self.neighbors_k == 0 {
            out.push("neighbors_k must be positive".into());
        }
        if self.method == Method::Lof && self.neighbors_k < 2 {
            out.push("lof needs neighbors_k >= 2".into());
        }
        if self.n_trees == 0 {
            out.push("n_trees must be positive".into());
        }
        if self.subsample == 0 {
            out.push("subsample must be positive".into());
        }
        if !(self.pca_variance_keep > 0.0 && self.pca_variance_keep <= 1.0) {
            out.push(format!(
                "pca_variance_keep must lie in (0, 1], got {}",
                self.pca_variance_keep
            ));
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

    /// Scores `points` with the configured method.
    pub fn score(&self, points: &[Embedding]) -> Result<Vec<f64>> {
        self.validate()?;
        match self.method {
            Method::Knn => score_knn(points, self.neighbors_k),
            Method::Lof => score_lof(points, self.neighbors_k),
            Method::Iforest => score_iforest(points, self.n_trees, self.subsample, self.seed),
            Method::Pca => score_pca(points, self.pca_variance_keep),
        }
    }

    /// Scores and filters at the configured anomaly ratio.
    pub fn detect(&self, points: &[Embedding]) -> Result<DetectionResult> {
        filter_outliers(&self.score(points)?, self.anomaly_ratio)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub scores: Vec<f64>,
    pub threshold: f64,
    /// Ascending indices with `score > threshold`.
    pub outlier_indices: Vec<usize>,
    pub flagged_count: usize,
}

impl DetectionResult {
    pub fn is_flagged(&self, index: usize) -> bool {
        self.outlier_indices.binary_search(&index).is_ok()
    }

    /// `index,score,flagged` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,score,flagged")?;
        for (i, s) in self.scores.iter().enumerate() {
            writeln!(out, "{i},{s:?},{}", self.is_flagged(i))?;
        }
        Ok(())
    }
}

fn pairwise_distances(points: &[Embedding]) -> Result<Vec<Vec<f64>>> {
    check_members(points)?;
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = sq_dist(points[i].values(), points[j].values()).sqrt();
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::config(format!(
            "neighbors_k = {k} needs 1 <= k < number of points ({n})"
        )));
    }
    Ok(())
}

/// For each point, the other points sorted by distance (ties by index).
fn neighbour_orders(d: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = d.len();
    (0..n)
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| d[i][a].total_cmp(&d[i][b]).then(a.cmp(&b)));
            others
        })
        .collect()
}

/// Distance to the `k`-th nearest other point.
pub fn score_knn(points: &[Embedding], k: usize) -> Result<Vec<f64>> {
    check_members(points)?;
    check_k(k, points.len())?;
    let d = pairwise_distances(points)?;
    Ok(neighbour_orders(&d)
        .iter()
        .enumerate()
        .map(|(i, order)| d[i][order[k - 1]])
        .collect())
}

/// Local Outlier Factor with `k`-distance neighbourhoods (ties at the `k`-distance
/// included). A `1e-10` floor keeps densities finite on duplicate points, so an
/// all-identical set scores 1 everywhere.
pub fn score_lof(points: &[Embedding], k: usize) -> Result<Vec<f64>> {
    check_members(points)?;
    check_k(k, points.len())?;
    if k < 2 {
        return Err(Error::config("lof needs neighbors_k >= 2"));
    }
    let d = pairwise_distances(points)?;
    let orders = neighbour_orders(&d);
    let n = points.len();
    let kdist: Vec<f64> = (0..n).map(|i| d[i][orders[i][k - 1]]).collect();
    let hoods: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            orders[i]
                .iter()
                .copied()
                .take_while(|&j| d[i][j] <= kdist[i])
                .collect()
        })
        .collect();
    let lrd: Vec<f64> = (0..n)
        .map(|i| {
            let reach: f64 = hoods[i].iter().map(|&o| kdist[o].max(d[i][o])).sum();
            1.0 / (reach / hoods[i].len() as f64 + 1e-10)
        })
        .collect();
    Ok((0..n)
        .map(|i| {
            let mean: f64 = hoods[i].iter().map(|&o| lrd[o]).sum::<f64>() / hoods[i].len() as f64;
            mean / lrd[i]
        })
        .collect())
}

/// Average path length of an unsuccessful BST search over `n` points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = (n - 1) as f64;
            2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
        }
    }
}

enum Node {
    Leaf { size: usize },
    Split { feature: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

fn grow(points: &[&[f64]], depth: usize, limit: usize, rng: &mut rng::Rng) -> Node {
    if depth >= limit || points.len() <= 1 {
        return Node::Leaf { size: points.len() };
    }
    let dim = points[0].len();
    let ranges: Vec<(usize, f64, f64)> = (0..dim)
        .filter_map(|f| {
            let (lo, hi) = points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[f]), hi.max(p[f])));
            (hi > lo).then_some((f, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return Node::Leaf { size: points.len() };
    }
    let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
    let value = lo + rng.random::<f64>() * (hi - lo);
    let (l, r): (Vec<&[f64]>, Vec<&[f64]>) = points.iter().partition(|p| p[feature] < value);
    Node::Split {
        feature,
        value,
        left: Box::new(grow(&l, depth + 1, limit, rng)),
        right: Box::new(grow(&r, depth + 1, limit, rng)),
    }
}

fn path_length(node: &Node, x: &[f64], depth: usize) -> f64 {
    match node {
        Node::Leaf { size } => depth as f64 + average_path_length(*size),
        Node::Split { feature, value, left, right } => {
            let next = if x[*feature] < *value { left } else { right };
            path_length(next, x, depth + 1)
        }
    }
}

/// Isolation Forest score `2^(−E[h(x)] / c(ψ))` with `ψ = min(subsample, N)`.
pub fn score_iforest(points: &[Embedding], n_trees: usize, subsample: usize, seed: u64) -> Result<Vec<f64>> {
    check_members(points)?;
    let n = points.len();
    if n < 2 {
        return Err(Error::config("isolation forest needs at least 2 points"));
    }
    if n_trees == 0 || subsample == 0 {
        return Err(Error::config("n_trees and subsample must be positive"));
    }
    let psi = subsample.min(n);
    let limit = (psi as f64).log2().ceil() as usize;
    let mut rng = rng::stream(seed, &[tags::FOREST]);
    let rows: Vec<&[f64]> = points.iter().map(|p| p.values()).collect();
    let mut total = vec![0.0; n];
    for _ in 0..n_trees {
        let sample: Vec<&[f64]> = index::sample(&mut rng, n, psi).into_iter().map(|i| rows[i]).collect();
        let tree = grow(&sample, 0, limit, &mut rng);
        for (t, x) in total.iter_mut().zip(&rows) {
            *t += path_length(&tree, x, 0);
        }
    }
    let c = average_path_length(psi);
    Ok(total
        .into_iter()
        .map(|t| 2f64.powf(-(t / n_trees as f64) / c))
        .collect())
}

/// Squared reconstruction error from the leading principal components that explain at
/// least `variance_keep` of the total variance.
pub fn score_pca(points: &[Embedding], variance_keep: f64) -> Result<Vec<f64>> {
    check_members(points)?;
    if !(variance_keep > 0.0 && variance_keep <= 1.0) {
        return Err(Error::config(format!("pca_variance_keep must lie in (0, 1], got {variance_keep}")));
    }
    let n = points.len();
    if n < 2 {
        return Err(Error::config("pca needs at least 2 points"));
    }
    let dim = points[0].dim();
    let mean = numerics::mean_embedding(points)?;
    let centred = DMatrix::from_fn(n, dim, |i, j| points[i].values()[j] - mean.values()[j]);
    let cov = centred.transpose() * &centred / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = vals.iter().sum();
    if total <= 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut keep = dim;
    let mut cum = 0.0;
    for (c, v) in vals.iter().enumerate() {
        cum += v;
        if cum / total >= variance_keep - 1e-12 {
            keep = c + 1;
            break;
        }
    }
    let basis = DMatrix::from_fn(dim, keep, |r, c| eig.eigenvectors[(r, order[c])]);
    let residual = &centred - (&centred * &basis) * basis.transpose();
    Ok(residual.row_iter().map(|r| r.norm_squared()).collect())
}

/// Flags strict exceedances of the `(1 − r)` nearest-rank quantile.
pub fn filter_outliers(scores: &[f64], r: f64) -> Result<DetectionResult> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::config(format!("anomaly ratio must lie in (0, 1], got {r}")));
    }
    let threshold = numerics::quantile(scores, 1.0 - r)?;
    let outlier_indices: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > threshold)
        .map(|(i, _)| i)
        .collect();
    Ok(DetectionResult {
        scores: scores.to_vec(),
        threshold,
        flagged_count: outlier_indices.len(),
        outlier_indices,
    })
}

/// Rank of one AE within `reference ∪ {ae}` and whether the pooled filter at
/// `r = 1/|pool|` flags it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolOutcome {
    /// `1 + #{pooled points scoring strictly above the AE}`; larger is stealthier.
    pub rank: usize,
    pub flagged: bool,
}

pub fn score_in_pool(ae: &Embedding, reference: &[Embedding], cfg: &DetectionConfig) -> Result<PoolOutcome> {
    if reference.is_empty() {
        return Err(Error::Empty("reference set"));
    }
    let mut pool = reference.to_vec();
    pool.push(ae.clone());
    let scores = cfg.score(&pool)?;
    let own = scores[pool.len() - 1];
    let rank = 1 + scores.iter().filter(|&&s| s > own).count();
    let filtered = filter_outliers(&scores, 1.0 / pool.len() as f64)?;
    Ok(PoolOutcome {
        rank,
        flagged: filtered.is_flagged(pool.len() - 1),
    })
}

/// Mean over AEs of [`PoolOutcome::rank`], each AE scored in its own pool.
pub fn average_score_rank(aes: &[Embedding], reference: &[Embedding], cfg: &DetectionConfig) -> Result<f64> {
    if aes.is_empty() {
        return Err(Error::Empty("adversarial embeddings"));
    }
    let mut sum = 0.0;
    for ae in aes {
        sum += score_in_pool(ae, reference, cfg)?.rank as f64;
    }
    Ok(sum / aes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(rows: &[&[f64]]) -> Vec<Embedding> {
        rows.iter().map(|r| Embedding::new(r.to_vec()).unwrap()).collect()
    }

    fn line(xs: &[f64]) -> Vec<Embedding> {
        xs.iter().map(|&x| Embedding::new(vec![x, 0.0]).unwrap()).collect()
    }

    fn random_points(seed: u64, n: usize, d: usize) -> Vec<Embedding> {
        let mut rng = rng::stream(seed, &[]);
        (0..n)
            .map(|_| Embedding::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect()
    }

    #[test]
    fn knn_examples() {
        assert_eq!(score_knn(&line(&[0.3, 0.3]), 1).unwrap(), vec![0.0, 0.0]);
        assert_eq!(score_knn(&line(&[0.0, 1.0, 2.0, 10.0]), 1).unwrap(), vec![1.0, 1.0, 1.0, 8.0]);
        let s = score_knn(&line(&[0.0, 1.0, 5.0, 5.0]), 1).unwrap();
        assert_eq!(s[2], 0.0);
        assert!(matches!(score_knn(&line(&[0.0, 1.0]), 2), Err(Error::Config(_))));
    }

    /// Direct transcription of the LOF definitions for the oracle.
    fn lof_oracle(p: &[Embedding], k: usize) -> Vec<f64> {
        let n = p.len();
        let d = |a: usize, b: usize| numerics::l2_dist(&p[a], &p[b]).unwrap();
        let kd = |a: usize| {
            let mut v: Vec<f64> = (0..n).filter(|&b| b != a).map(|b| d(a, b)).collect();
            v.sort_by(f64::total_cmp);
            v[k - 1]
        };
        let hood = |a: usize| -> Vec<usize> { (0..n).filter(|&b| b != a && d(a, b) <= kd(a)).collect() };
        let lrd = |a: usize| {
            let h = hood(a);
            1.0 / (h.iter().map(|&o| kd(o).max(d(a, o))).sum::<f64>() / h.len() as f64 + 1e-10)
        };
        (0..n)
            .map(|a| {
                let h = hood(a);
                h.iter().map(|&o| lrd(o)).sum::<f64>() / h.len() as f64 / lrd(a)
            })
            .collect()
    }

    #[test]
    fn lof_grid_interior_is_near_one() {
        let mut rows = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                rows.push(Embedding::new(vec![i as f64, j as f64]).unwrap());
            }
        }
        let s = score_lof(&rows, 4).unwrap();
        let oracle = lof_oracle(&rows, 4);
        for (a, b) in s.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        // centre of the grid
        assert!((0.9..=1.1).contains(&s[12]), "{}", s[12]);
    }

    #[test]
    fn lof_isolated_point_scores_highest() {
        let mut p = random_points(1, 30, 3);
        for e in &mut p {
            *e = Embedding::new(e.values().iter().map(|v| v * 0.1).collect()).unwrap();
        }
        p.push(Embedding::new(vec![5.0, 5.0, 5.0]).unwrap());
        let s = score_lof(&p, 5).unwrap();
        assert!(s[..30].iter().all(|&v| v < s[30]));
        let oracle = lof_oracle(&p, 5);
        for (a, b) in s.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn lof_identical_points_score_one() {
        let s = score_lof(&line(&[0.2; 6]), 3).unwrap();
        assert!(s.iter().all(|&v| v == 1.0), "{s:?}");
    }

    #[test]
    fn iforest_is_deterministic_and_bounded() {
        let p = random_points(2, 50, 4);
        let a = score_iforest(&p, 50, 32, 7).unwrap();
        assert_eq!(a, score_iforest(&p, 50, 32, 7).unwrap());
        assert!(a.iter().all(|&s| s > 0.0 && s < 1.0));
        // subsample above N is capped
        assert!(score_iforest(&p, 10, 10_000, 1).is_ok());
    }

    #[test]
    fn iforest_finds_extreme_outlier_every_seed() {
        let mut p = random_points(3, 60, 4);
        for e in &mut p {
            *e = Embedding::new(e.values().iter().map(|v| v * 0.05).collect()).unwrap();
        }
        p.push(Embedding::new(vec![3.0, -3.0, 3.0, -3.0]).unwrap());
        for seed in 0..10 {
            let s = score_iforest(&p, 200, 256, seed).unwrap();
            let top = s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert_eq!(top, 60, "seed {seed}");
        }
    }

    #[test]
    fn average_path_length_values() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        // 2(ln 255 + γ) − 2·255/256
        let want = 2.0 * (255f64.ln() + 0.5772156649) - 510.0 / 256.0;
        assert!((average_path_length(256) - want).abs() < 1e-12);
    }

    #[test]
    fn pca_examples() {
        let on_line = pts(&[&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], &[-1.0, -2.0, -3.0]]);
        assert!(score_pca(&on_line, 0.9).unwrap().iter().all(|&s| s.abs() < 1e-9));
        // lifting the middle point by h leaves the axis in place; centring moves every
        // other point off it by h/N, so N is large enough to keep (h/N)² below 1e-6
        let mut lifted: Vec<Embedding> = (-10..=10)
            .map(|t| Embedding::new(vec![t as f64, 2.0 * t as f64, 0.0]).unwrap())
            .collect();
        lifted[10] = Embedding::new(vec![0.0, 0.0, 0.01]).unwrap();
        let s = score_pca(&lifted, 0.9).unwrap();
        let above: Vec<usize> = (0..s.len()).filter(|&i| s[i] > 1e-6).collect();
        assert_eq!(above, vec![10]);
        let full = random_points(4, 10, 3);
        assert!(score_pca(&full, 1.0).unwrap().iter().all(|&s| s.abs() < 1e-9));
        assert!(matches!(score_pca(&full, 0.0), Err(Error::Config(_))));
        assert!(matches!(score_pca(&full, 1.5), Err(Error::Config(_))));
    }

    #[test]
    fn filter_examples() {
        let s: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let r = filter_outliers(&s, 0.2).unwrap();
        assert_eq!(r.threshold, 0.8);
        assert_eq!(r.outlier_indices, vec![8, 9]);
        let r = filter_outliers(&s, 1.0).unwrap();
        assert_eq!(r.flagged_count, 9);
        assert!(!r.is_flagged(0));
        assert_eq!(filter_outliers(&[0.5; 7], 0.3).unwrap().flagged_count, 0);
        assert!(matches!(filter_outliers(&s, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn pool_rank_examples() {
        let cfg = DetectionConfig { neighbors_k: 1, ..DetectionConfig::default() };
        let reference = line(&(0..100).map(|i| i as f64 * 0.01).collect::<Vec<_>>());
        let far = Embedding::new(vec![50.0, 0.0]).unwrap();
        let out = score_in_pool(&far, &reference, &cfg).unwrap();
        assert_eq!(out, PoolOutcome { rank: 1, flagged: true });
        assert_eq!(average_score_rank(&[far], &reference, &cfg).unwrap(), 1.0);
        // an interior duplicate scores 0, every reference except its twin scores 0.01
        let dup = reference[40].clone();
        let out = score_in_pool(&dup, &reference, &cfg).unwrap();
        assert_eq!(out.rank, 1 + 99);
        assert!(!out.flagged);
    }

    #[test]
    fn iforest_is_not_rotation_invariant() {
        let p = random_points(5, 40, 2);
        let (c, s) = (0.6f64, 0.8f64);
        let rot: Vec<Embedding> = p
            .iter()
            .map(|e| {
                let v = e.values();
                Embedding::new(vec![c * v[0] - s * v[1], s * v[0] + c * v[1]]).unwrap()
            })
            .collect();
        let a = score_iforest(&p, 50, 32, 0).unwrap();
        let b = score_iforest(&rot, 50, 32, 0).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    fn rotate(points: &[Embedding], seed: u64) -> Vec<Embedding> {
        // random orthogonal matrix from a QR factorization
        let d = points[0].dim();
        let mut rng = rng::stream(seed, &[99]);
        let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let q = m.qr().q();
        points
            .iter()
            .map(|p| {
                let v = &q * nalgebra::DVector::from_column_slice(p.values());
                Embedding::new(v.iter().copied().collect()).unwrap()
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn scorers_are_permutation_equivariant(seed in 0u64..10_000, shift in 1usize..19) {
            let p = random_points(seed, 20, 3);
            let perm: Vec<usize> = (0..20).map(|i| (i * 7 + shift) % 20).collect();
            let q: Vec<Embedding> = perm.iter().map(|&i| p[i].clone()).collect();
            for method in [Method::Knn, Method::Lof, Method::Pca] {
                let cfg = DetectionConfig { method, ..DetectionConfig::default() };
                let a = cfg.score(&p).unwrap();
                let b = cfg.score(&q).unwrap();
                for (j, &i) in perm.iter().enumerate() {
                    prop_assert!((a[i] - b[j]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn knn_and_pca_are_rotation_invariant(seed in 0u64..10_000) {
            let p = random_points(seed, 15, 4);
            let r = rotate(&p, seed);
            for method in [Method::Knn, Method::Pca] {
                let cfg = DetectionConfig { method, ..DetectionConfig::default() };
                let a = cfg.score(&p).unwrap();
                let b = cfg.score(&r).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn duplicate_never_raises_knn_score(seed in 0u64..10_000, pick in 0usize..12, k in 1usize..5) {
            let p = random_points(seed, 12, 3);
            let before = score_knn(&p, k).unwrap()[pick];
            let mut q = p.clone();
            q.push(p[pick].clone());
            prop_assert!(score_knn(&q, k).unwrap()[pick] <= before);
        }

        #[test]
        fn filter_flags_at_most_ceil_rn(seed in 0u64..10_000, n in 1usize..60, r in 0.001f64..1.0) {
            let mut rng = rng::stream(seed, &[]);
            let s: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let out = filter_outliers(&s, r).unwrap();
            prop_assert!(out.flagged_count as f64 <= (r * n as f64).ceil());
            prop_assert!(out.outlier_indices.iter().all(|&i| s[i] > out.threshold));
        }
    }
}
