//! Executable forms of the trade-off and polytope results.
//!
//! Trade-off: with source/target means `μ_S`, `μ_T`, gap `Δ = μ_T − μ_S` and covariance
//! traces `σ_S`, `σ_T`, the best achievable
//!
//! ```text
//! min ‖v − μ_T‖² + σ_T   s.t.   ‖v − μ_S‖² + σ_S ≤ β
//! ```
//!
//! equals `(max{‖Δ‖ − √(β − σ_S), 0})² + σ_T`.
//!
//! Polytope bounds: a point of the convex hull of unit proxies keeps at least the
//! smallest proxy cosine to a target, provided that cosine is non-negative.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, check_members, cosine, unit_normalize, Embedding};
use crate::rng::{self, tags};

/// Slack allowed on the polytope inequalities.
pub const BOUND_SLACK: f64 = 1e-9;
/// Default residual tolerance for hull membership.
pub const MEMBERSHIP_TOL: f64 = 1e-7;

const ORACLE_STEP: f64 = 0.1;
const ORACLE_MAX_ITERS: usize = 10_000;
const ORACLE_STOP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryInstance {
    pub delta_norm: f64,
    /// Estimated detection threshold.
    pub beta: f64,
    pub sigma_s: f64,
    pub sigma_t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_s: Option<Embedding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_t: Option<Embedding>,
}

impl TheoryInstance {
    pub fn scalar(delta_norm: f64, beta: f64, sigma_s: f64, sigma_t: f64) -> Self {
        Self {
            delta_norm,
            beta,
            sigma_s,
            sigma_t,
            mu_s: None,
            mu_t: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta_norm", self.delta_norm),
            ("sigma_s", self.sigma_s),
            ("sigma_t", self.sigma_t),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.beta.is_finite() {
            return Err(Error::domain("beta must be finite"));
        }
        match (&self.mu_s, &self.mu_t) {
            (Some(s), Some(t)) => {
                let gap = numerics::l2_dist(s, t)?;
                if (gap - self.delta_norm).abs() > 1e-9 {
                    return Err(Error::domain(format!(
                        "|mu_t - mu_s| = {gap} disagrees with delta_norm = {}",
                        self.delta_norm
                    )));
                }
            }
            (None, None) => {}
            _ => return Err(Error::domain("mu_s and mu_t must be given together")),
        }
        Ok(())
    }

    fn feasible_radius(&self) -> Result<f64> {
        if self.beta < self.sigma_s {
            return Err(Error::Infeasible(format!(
                "beta = {} is below sigma_s = {}; no embedding meets the threshold",
                self.beta, self.sigma_s
            )));
        }
        Ok((self.beta - self.sigma_s).sqrt())
    }
}

/// `(max{‖Δ‖ − √(β − σ_S), 0})² + σ_T`.
pub fn theorem1_closed_form(inst: &TheoryInstance) -> Result<f64> {
    inst.validate()?;
    let radius = inst.feasible_radius()?;
    Ok((inst.delta_norm - radius).max(0.0).powi(2) + inst.sigma_t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub iterations: usize,
    pub closed_form: f64,
    pub gap: f64,
}

fn project_ball(v: &mut [f64], centre: &[f64], radius: f64) {
    let d = numerics::sq_dist(v, centre).sqrt();
    if d > radius {
        let s = if d > 0.0 { radius / d } else { 0.0 };
        for (x, c) in v.iter_mut().zip(centre) {
            *x = c + s * (*x - c);
        }
    }
}

/// Minimizes `‖v − μ_T‖² + σ_T` over the feasible ball by projected gradient descent
/// started at `μ_S`. Without explicit means, `μ_S = 0` and `μ_T = ‖Δ‖·e₁` in `dim`
/// dimensions. Fails when the iteration cap is hit or when the result is more than
/// `tol` away from [`theorem1_closed_form`].
pub fn theorem1_numeric_oracle(inst: &TheoryInstance, dim: usize, tol: f64) -> Result<OracleResult> {
    let closed_form = theorem1_closed_form(inst)?;
    let radius = inst.feasible_radius()?;
    let (mu_s, mu_t) = match (&inst.mu_s, &inst.mu_t) {
        (Some(s), Some(t)) => (s.values().to_vec(), t.values().to_vec()),
        _ => {
            if dim < 1 {
                return Err(Error::config("oracle dimension must be positive"));
            }
            let mut t = vec![0.0; dim];
            t[0] = inst.delta_norm;
            (vec![0.0; dim], t)
        }
    };
    let mut v = mu_s.clone();
    let mut next = v.clone();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < ORACLE_MAX_ITERS {
        for ((n, x), t) in next.iter_mut().zip(&v).zip(&mu_t) {
            *n = x - ORACLE_STEP * 2.0 * (x - t);
        }
        project_ball(&mut next, &mu_s, radius);
        let moved = numerics::sq_dist(&next, &v).sqrt() / ORACLE_STEP;
        std::mem::swap(&mut v, &mut next);
        iterations += 1;
        if moved < ORACLE_STOP {
            converged = true;
            break;
        }
    }
    let value = numerics::sq_dist(&v, &mu_t) + inst.sigma_t;
    let gap = (value - closed_form).abs();
    if !converged {
        return Err(Error::Numeric(format!(
            "oracle did not converge in {ORACLE_MAX_ITERS} iterations; gap to closed form {gap:e}"
        )));
    }
    if gap >= tol {
        return Err(Error::Numeric(format!(
            "oracle value {value} differs from closed form {closed_form} by {gap:e}"
        )));
    }
    Ok(OracleResult {
        value,
        iterations,
        closed_form,
        gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub inside: bool,
    /// Simplex weights, present when inside.
    pub weights: Option<Vec<f64>>,
    pub residual: f64,
}

/// Lawson–Hanson non-negative least squares.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * a.norm().max(1.0) * b.norm().max(1.0);
    let solve = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(&idx);
        // Householder QR; nalgebra's SVD can lose accuracy on tall well-conditioned
        // matrices, so it only serves rank-deficient passive sets
        let qr = sub.clone().qr();
        let r = qr.r();
        let diag_max = r.diagonal().amax();
        let z_p = if r.diagonal().iter().all(|d| d.abs() > 1e-12 * diag_max.max(1e-300)) {
            r.solve_upper_triangular(&(qr.q().transpose() * b))
        } else {
            None
        }
        .or_else(|| sub.svd(true, true).solve(b, 1e-14).ok())
        .unwrap_or_else(|| DVector::zeros(idx.len()));
        let mut z = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            z[j] = z_p[k];
        }
        z
    };
    for _ in 0..3 * n + 10 {
        let w = a.transpose() * (b - a * &x);
        let pick = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = pick else { break };
        if w[j] <= tol {
            break;
        }
        passive[j] = true;
        for _ in 0..3 * n + 10 {
            let z = solve(&passive);
            let bad: Vec<usize> = (0..n).filter(|&i| passive[i] && z[i] <= 0.0).collect();
            if bad.is_empty() {
                x = z;
                break;
            }
            let alpha = bad
                .iter()
                .map(|&i| x[i] / (x[i] - z[i]))
                .fold(f64::INFINITY, f64::min);
            x += (z - &x) * alpha;
            for i in 0..n {
                if passive[i] && x[i] <= tol {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
        // the entering column was dropped straight away: no further progress possible
        if !passive[j] {
            break;
        }
    }
    x
}

/// Decides whether `point = Σ w_i v_i` with `w ≥ 0`, `Σ w = 1`: non-negative least
/// squares on the vertices stacked over a row of ones, weights rescaled onto the
/// simplex, inside iff the resulting residual is below `tol`.
pub fn convex_membership(point: &Embedding, vertices: &[Embedding], tol: f64) -> Result<Membership> {
    check_members(vertices)?;
    numerics::check_dims(vertices[0].dim(), point.dim())?;
    let d = point.dim();
    let m = vertices.len();
    let a = DMatrix::from_fn(d + 1, m, |r, c| if r < d { vertices[c].values()[r] } else { 1.0 });
    let b = DVector::from_fn(d + 1, |r, _| if r < d { point.values()[r] } else { 1.0 });
    let raw = nnls(&a, &b);
    let total: f64 = raw.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        let residual = numerics::norm(point.values());
        return Ok(Membership { inside: false, weights: None, residual });
    }
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mut recon = vec![0.0; d];
    for (w, v) in weights.iter().zip(vertices) {
        for (r, x) in recon.iter_mut().zip(v.values()) {
            *r += w * x;
        }
    }
    let residual = numerics::sq_dist(&recon, point.values()).sqrt();
    let inside = residual < tol;
    Ok(Membership {
        inside,
        weights: inside.then_some(weights),
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub bound: f64,
    pub cosine: f64,
    pub satisfied: bool,
}

fn min_cosine(reference: &Embedding, others: &[Embedding]) -> Result<f64> {
    let mut b = f64::INFINITY;
    for o in others {
        b = b.min(cosine(reference, o)?);
    }
    Ok(b)
}

/// AE inside the hull of the source proxies: `cos(ae, target) ≥ min_i cos(x̂_i, target)`.
pub fn theorem2_bound_check(ae: &Embedding, source_proxies: &[Embedding], true_target: &Embedding) -> Result<BoundCheck> {
    let m = convex_membership(ae, source_proxies, MEMBERSHIP_TOL)?;
    if !m.inside {
        return Err(Error::Precondition(format!(
            "AE is not a convex combination of the proxies (residual {:e}); check convex_membership first",
            m.residual
        )));
    }
    let bound = min_cosine(true_target, source_proxies)?;
    let c = cosine(ae, true_target)?;
    Ok(BoundCheck {
        bound,
        cosine: c,
        satisfied: c >= bound - BOUND_SLACK,
    })
}

/// True target inside the hull of the target proxies:
/// `cos(ae, target) ≥ min_j cos(ae, ŷ_j)`.
pub fn theorem3_bound_check(ae: &Embedding, target_proxies: &[Embedding], true_target: &Embedding) -> Result<BoundCheck> {
    let m = convex_membership(true_target, target_proxies, MEMBERSHIP_TOL)?;
    if !m.inside {
        return Err(Error::Precondition(format!(
            "true target is not a convex combination of the proxies (residual {:e}); check convex_membership first",
            m.residual
        )));
    }
    let bound = min_cosine(ae, target_proxies)?;
    let c = cosine(ae, true_target)?;
    Ok(BoundCheck {
        bound,
        cosine: c,
        satisfied: c >= bound - BOUND_SLACK,
    })
}

/// One row of the trade-off sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Row {
    pub index: usize,
    pub dim: usize,
    pub instance: TheoryInstance,
    pub closed_form: f64,
    pub oracle: f64,
    pub gap: f64,
    pub iterations: usize,
}

fn gaussian_vec(rng: &mut rng::Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect()
}

fn random_unit(rng: &mut rng::Rng, d: usize) -> Embedding {
    loop {
        let v = gaussian_vec(rng, d);
        if numerics::norm(&v) > 1e-6 {
            return unit_normalize(&Embedding::new(v).expect("finite")).expect("non-zero");
        }
    }
}

/// Random feasible instance with explicit means: `dim ∈ dims`, `σ ∈ [0, 1]`,
/// `β ∈ (σ_S, σ_S + 4]`, `‖Δ‖ ∈ [0, 3]`.
pub fn random_theorem1_instance(rng: &mut rng::Rng, dims: (usize, usize)) -> (usize, TheoryInstance) {
    let dim = rng.random_range(dims.0..=dims.1);
    let sigma_s = rng.random::<f64>();
    let sigma_t = rng.random::<f64>();
    let beta = sigma_s + 4.0 * (1.0 - rng.random::<f64>());
    let delta_norm = 3.0 * rng.random::<f64>();
    let mu_s = gaussian_vec(rng, dim);
    let dir = random_unit(rng, dim.max(2));
    let mu_t: Vec<f64> = mu_s.iter().zip(dir.values()).map(|(s, u)| s + delta_norm * u).collect();
    // re-measure so the stored norm matches the vectors to rounding
    let delta_norm = numerics::sq_dist(&mu_s, &mu_t).sqrt();
    let mu = |v: Vec<f64>| {
        if v.len() >= 2 {
            Some(Embedding::new(v).expect("finite"))
        } else {
            None
        }
    };
    let inst = TheoryInstance {
        delta_norm,
        beta,
        sigma_s,
        sigma_t,
        mu_s: mu(mu_s),
        mu_t: mu(mu_t),
    };
    (dim, inst)
}

/// Instance `index` of the seeded trade-off sweep.
pub fn theorem1_instance(seed: u64, index: usize, dims: (usize, usize)) -> (usize, TheoryInstance) {
    let mut rng = rng::stream(seed, &[tags::THEORY, 1, index as u64]);
    random_theorem1_instance(&mut rng, dims)
}

/// Closed form vs. oracle over `count` random instances.
pub fn theorem1_sweep(count: usize, dims: (usize, usize), seed: u64, tol: f64) -> Result<Vec<Theorem1Row>> {
    if dims.0 < 2 || dims.1 < dims.0 {
        return Err(Error::config(format!("bad dimension range {dims:?}")));
    }
    (0..count)
        .map(|index| {
            let (dim, instance) = theorem1_instance(seed, index, dims);
            let o = theorem1_numeric_oracle(&instance, dim, tol)?;
            Ok(Theorem1Row {
                index,
                dim,
                instance,
                closed_form: o.closed_form,
                oracle: o.value,
                gap: o.gap,
                iterations: o.iterations,
            })
        })
        .collect()
}

/// Violations of the monotonicity of the closed form on regular grids: non-increasing
/// in `β` for fixed gap, non-decreasing in `‖Δ‖` for fixed `β`.
pub fn theorem1_monotonicity_violations(grid: usize) -> Result<usize> {
    let mut violations = 0;
    let grid = grid.max(2);
    for &(sigma_s, sigma_t) in &[(0.0, 0.0), (0.2753, 0.1107), (0.5706, 0.5868), (1.0, 0.3)] {
        for i in 0..grid {
            let delta = 3.0 * i as f64 / (grid - 1) as f64;
            let mut prev = f64::INFINITY;
            for j in 0..grid {
                let beta = sigma_s + 4.0 * j as f64 / (grid - 1) as f64;
                let l = theorem1_closed_form(&TheoryInstance::scalar(delta, beta, sigma_s, sigma_t))?;
                if l > prev {
                    violations += 1;
                }
                prev = l;
            }
        }
        for j in 0..grid {
            let beta = sigma_s + 4.0 * j as f64 / (grid - 1) as f64;
            let mut prev = f64::NEG_INFINITY;
            for i in 0..grid {
                let delta = 3.0 * i as f64 / (grid - 1) as f64;
                let l = theorem1_closed_form(&TheoryInstance::scalar(delta, beta, sigma_s, sigma_t))?;
                if l < prev {
                    violations += 1;
                }
                prev = l;
            }
        }
    }
    Ok(violations)
}

/// Polytope instance: proxies, a hull point and the vector it is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeInstance {
    pub proxies: Vec<Embedding>,
    pub weights: Vec<f64>,
    /// The convex combination of `proxies` under `weights`.
    pub hull_point: Embedding,
    /// Target (source-side check) or AE (target-side check).
    pub probe: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeRow {
    pub index: usize,
    pub dim: usize,
    pub n_proxies: usize,
    pub bound: f64,
    pub cosine: f64,
    pub satisfied: bool,
    pub instance: PolytopeInstance,
}

fn dirichlet(rng: &mut rng::Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| Exp1.sample(&mut *rng)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / s).collect()
}

/// Random instance whose proxies all make a non-negative cosine with `probe`, the
/// regime in which the bound holds. Dimensions 2–64, 1–8 proxies.
pub fn random_polytope_instance(rng: &mut rng::Rng) -> PolytopeInstance {
    let dim = rng.random_range(2..=64usize);
    let m = rng.random_range(1..=8usize);
    let anchor = random_unit(rng, dim);
    let near = |rng: &mut rng::Rng| {
        let spread = 0.99 * rng.random::<f64>();
        let u = random_unit(rng, dim);
        let v: Vec<f64> = anchor.values().iter().zip(u.values()).map(|(a, b)| a + spread * b).collect();
        unit_normalize(&Embedding::new(v).expect("finite")).expect("non-zero")
    };
    let proxies: Vec<Embedding> = (0..m).map(|_| near(rng)).collect();
    let weights = dirichlet(rng, m);
    let mut hull = vec![0.0; dim];
    for (w, p) in weights.iter().zip(&proxies) {
        for (h, x) in hull.iter_mut().zip(p.values()) {
            *h += w * x;
        }
    }
    let probe = loop {
        let cand = near(rng);
        if proxies.iter().all(|p| numerics::dot(p.values(), cand.values()) >= 0.0) {
            break cand;
        }
    };
    PolytopeInstance {
        proxies,
        weights,
        hull_point: Embedding::new(hull).expect("finite"),
        probe,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolytopeSide {
    /// AE inside the source-proxy hull, probe is the true target.
    Source,
    /// True target inside the target-proxy hull, probe is the AE.
    Target,
}

pub fn check_polytope(inst: &PolytopeInstance, side: PolytopeSide) -> Result<BoundCheck> {
    match side {
        PolytopeSide::Source => theorem2_bound_check(&inst.hull_point, &inst.proxies, &inst.probe),
        PolytopeSide::Target => theorem3_bound_check(&inst.probe, &inst.proxies, &inst.hull_point),
    }
}

/// Instance `index` of the seeded polytope sweep for `side`.
pub fn polytope_instance(seed: u64, index: usize, side: PolytopeSide) -> PolytopeInstance {
    let stream_tag = match side {
        PolytopeSide::Source => 2,
        PolytopeSide::Target => 3,
    };
    let mut rng = rng::stream(seed, &[tags::THEORY, stream_tag, index as u64]);
    random_polytope_instance(&mut rng)
}

pub fn polytope_sweep(count: usize, seed: u64, side: PolytopeSide) -> Result<Vec<PolytopeRow>> {
    (0..count)
        .map(|index| {
            let instance = polytope_instance(seed, index, side);
            let b = check_polytope(&instance, side)?;
            Ok(PolytopeRow {
                index,
                dim: instance.probe.dim(),
                n_proxies: instance.proxies.len(),
                bound: b.bound,
                cosine: b.cosine,
                satisfied: b.satisfied,
                instance,
            })
        })
        .collect()
}
