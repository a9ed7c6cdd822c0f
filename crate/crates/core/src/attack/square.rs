use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::pgd::Minimized;
use super::{check_start, AttackConfig, AttackResult, EncodedObjective, InputObjective, Objective, Optimizer};
use crate::error::{Error, Result};
use crate::rng::{self, tags};
use crate::synthworld::SourceEncoder;

/// Budget fractions at which the window area halves.
const HALVING_POINTS: [f64; 6] = [0.001, 0.005, 0.02, 0.1, 0.2, 0.5];

/// Redraws allowed for a proposal that would leave the input unchanged.
const MAX_RESAMPLES: usize = 16;

/// Channel-major view of a flat input used to place square windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputLayout {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputLayout {
    /// `(3, s, s)` when `n/3` is a perfect square, else `(1, s, s)` when `n` is, else a
    /// single row `(1, 1, n)` on which windows become contiguous segments.
    pub fn infer(n: usize) -> Self {
        let side = |m: usize| {
            let s = (m as f64).sqrt().round() as usize;
            (s * s == m && s >= 2).then_some(s)
        };
        if n % 3 == 0 {
            if let Some(s) = side(n / 3) {
                return Self { channels: 3, height: s, width: s };
            }
        }
        if let Some(s) = side(n) {
            return Self { channels: 1, height: s, width: s };
        }
        Self { channels: 1, height: 1, width: n }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn is_row(&self) -> bool {
        self.height == 1
    }

    /// Window side for area fraction `p`.
    fn window_side(&self, p: f64) -> usize {
        if self.is_row() {
            let s = (p * self.width as f64).round() as usize;
            s.clamp(1, (self.width - 1).max(1))
        } else {
            let s = (p * (self.height * self.width) as f64).sqrt().round() as usize;
            s.clamp(1, self.height - 1)
        }
    }
}

/// Window area fraction after `used` of `budget` queries.
pub fn window_fraction(p_init: f64, used: usize, budget: usize) -> f64 {
    let progress = used as f64 / budget as f64;
    let halvings = HALVING_POINTS.iter().filter(|&&f| progress > f).count();
    p_init / f64::from(1u32 << halvings)
}

fn project(x0: f64, delta: f64) -> f64 {
    (x0 + delta).clamp(0.0, 1.0)
}

/// Gradient-free random search over square windows set to `x0 ± ε`. Every query
/// evaluates the full objective; `trace[k]` is the best value after query `k + 1`.
pub fn square_minimize(
    objective: &dyn InputObjective,
    x0: &[f64],
    epsilon: f64,
    budget: usize,
    p_init: f64,
    rng: &mut rng::Rng,
) -> Result<Minimized> {
    let n = objective.input_dim();
    check_start(x0, n)?;
    if budget == 0 {
        return Err(Error::config("query_budget must be at least 1"));
    }
    let layout = InputLayout::infer(n);
    let eval = |x: &[f64]| -> Result<f64> {
        let v = objective.value(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric("non-finite objective in square search".into()))
        }
    };
    let mut best_input = x0.to_vec();
    let mut best_value = eval(x0)?;
    let mut trace = vec![best_value];

    if budget >= 2 {
        // vertical stripes: one sign per channel and column
        let hw = layout.height * layout.width;
        let mut x = x0.to_vec();
        for ch in 0..layout.channels {
            for col in 0..layout.width {
                let delta = if rng.random::<bool>() { epsilon } else { -epsilon };
                for row in 0..layout.height {
                    let i = ch * hw + row * layout.width + col;
                    x[i] = project(x0[i], delta);
                }
            }
        }
        let v = eval(&x)?;
        if v < best_value {
            best_value = v;
            best_input = x;
        }
        trace.push(best_value);
    }

    let hw = layout.height * layout.width;
    let mut candidate = best_input.clone();
    while trace.len() < budget {
        let p = window_fraction(p_init, trace.len(), budget);
        let s = layout.window_side(p);
        let (top, left) = if layout.is_row() {
            (0, rng.random_range(0..=layout.width - s))
        } else {
            (
                rng.random_range(0..=layout.height - s),
                rng.random_range(0..=layout.width - s),
            )
        };
        let rows = if layout.is_row() { 0..1 } else { top..top + s };
        let mut changed = false;
        for _ in 0..MAX_RESAMPLES {
            candidate.clone_from(&best_input);
            for ch in 0..layout.channels {
                let delta = if rng.random::<bool>() { epsilon } else { -epsilon };
                for row in rows.clone() {
                    for col in left..left + s {
                        let i = ch * hw + row * layout.width + col;
                        candidate[i] = project(x0[i], delta);
                        changed |= candidate[i] != best_input[i];
                    }
                }
            }
            if changed {
                break;
            }
        }
        let v = if changed { eval(&candidate)? } else { best_value };
        if v < best_value {
            best_value = v;
            std::mem::swap(&mut best_input, &mut candidate);
        }
        trace.push(best_value);
    }
    Ok(Minimized {
        best_input,
        best_value,
        queries: trace.len(),
        trace,
    })
}

/// Black-box attack: Square Attack on `objective ∘ encoder`, seeded from `cfg.seed`.
pub fn run_square(
    encoder: &SourceEncoder,
    x0: &[f64],
    objective: &Objective,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    cfg.validate()?;
    if cfg.optimizer != Optimizer::Square {
        return Err(Error::config("run_square requires optimizer = square"));
    }
    let obj = EncodedObjective { encoder, objective };
    let mut rng = rng::stream(cfg.seed, &[tags::SQUARE]);
    let m = square_minimize(&obj, x0, cfg.epsilon, cfg.query_budget, cfg.p_init, &mut rng)?;
    Ok(AttackResult {
        original: x0.to_vec(),
        adversarial_embedding: encoder.encode(&m.best_input)?,
        adversarial_input: m.best_input,
        loss_trace: m.trace,
        best_objective: m.best_value,
        queries_used: m.queries,
    })
}
