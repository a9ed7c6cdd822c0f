//! Dense vector primitives shared by every other module.
//!
//! Embeddings are stored unnormalized; callers normalize explicitly with
//! [`unit_normalize`]. Statistics use population (1/N) moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the shared latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Wraps `values`; requires dimension ≥ 2 and finite coordinates.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::domain(format!(
                "embedding dimension must be at least 2, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding".into()));
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }
}

/// An ordered, non-empty collection of equal-dimension embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    members: Vec<Embedding>,
    /// Free-form tag such as a cluster id.
    pub label: String,
}

impl EmbeddingSet {
    pub fn new(members: Vec<Embedding>, label: impl Into<String>) -> Result<Self> {
        check_members(&members)?;
        Ok(Self {
            members,
            label: label.into(),
        })
    }

    pub fn members(&self) -> &[Embedding] {
        &self.members
    }

    pub fn into_members(self) -> Vec<Embedding> {
        self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    pub fn mean(&self) -> Embedding {
        mean_embedding(&self.members).expect("non-empty by construction")
    }

    pub fn variance_trace(&self) -> f64 {
        variance_trace(&self.members).expect("non-empty by construction")
    }
}

pub(crate) fn check_members(members: &[Embedding]) -> Result<()> {
    let first = members.first().ok_or(Error::Empty("embedding set"))?;
    for m in members {
        check_dims(first.dim(), m.dim())?;
    }
    Ok(())
}

pub(crate) fn check_dims(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::DimensionMismatch { left, right });
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity `a·b / (‖a‖‖b‖)`.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let na = a.norm();
    if na == 0.0 {
        return Err(Error::ZeroNorm("a"));
    }
    let nb = b.norm();
    if nb == 0.0 {
        return Err(Error::ZeroNorm("b"));
    }
    Ok((dot(&a.values, &b.values) / (na * nb)).clamp(-1.0, 1.0))
}

/// Euclidean distance.
pub fn l2_dist(a: &Embedding, b: &Embedding) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(sq_dist(&a.values, &b.values).sqrt())
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Scales `a` to unit Euclidean length.
pub fn unit_normalize(a: &Embedding) -> Result<Embedding> {
    let n = a.norm();
    if n == 0.0 {
        return Err(Error::ZeroNorm("a"));
    }
    Ok(Embedding {
        values: a.values.iter().map(|v| v / n).collect(),
    })
}

/// Coordinate-wise arithmetic mean; not re-normalized.
pub fn mean_embedding(members: &[Embedding]) -> Result<Embedding> {
    check_members(members)?;
    let dim = members[0].dim();
    let mut acc = vec![0.0; dim];
    for m in members {
        for (a, v) in acc.iter_mut().zip(&m.values) {
            *a += v;
        }
    }
    let n = members.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(Embedding { values: acc })
}

/// Trace of the population covariance: `Σ_k Var[x_k]` with 1/N normalization.
pub fn variance_trace(members: &[Embedding]) -> Result<f64> {
    let mean = mean_embedding(members)?;
    let n = members.len() as f64;
    let total: f64 = members
        .iter()
        .map(|m| sq_dist(&m.values, &mean.values))
        .sum();
    Ok(total / n)
}

/// Nearest-rank quantile: the element at index `ceil(q·N) − 1` of the ascending sort
/// (index 0 for `q = 0`).
///
/// A relative guard of 1e-9 absorbs floating-point noise in `q·N` so that, e.g.,
/// `q = 0.7, N = 10` selects the 7th element.
pub fn quantile(scores: &[f64], q: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("score list"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::domain(format!("quantile level {q} outside [0, 1]")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("score list".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = (q * n as f64 - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(n) - 1])
}
