use super::{check_start, AttackConfig, AttackResult, EncodedObjective, InputObjective, Objective, Optimizer};
use crate::error::{Error, Result};
use crate::synthworld::SourceEncoder;

/// Outcome of a bare optimizer run over an [`InputObjective`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimized {
    pub best_input: Vec<f64>,
    pub best_value: f64,
    pub trace: Vec<f64>,
    pub queries: usize,
}

fn signed_step(x: &mut [f64], x0: &[f64], grad: &[f64], step: f64, eps: f64) {
    for ((xi, &oi), &g) in x.iter_mut().zip(x0).zip(grad) {
        let s = if g > 0.0 {
            1.0
        } else if g < 0.0 {
            -1.0
        } else {
            0.0
        };
        let moved = (*xi - step * s).clamp(oi - eps, oi + eps);
        *xi = moved.clamp(0.0, 1.0);
    }
}

/// Signed-gradient descent projected onto the ε-ball about `x0` and the unit box.
/// Keeps the best iterate; `trace[0]` is the objective at `x0`.
pub fn pgd_minimize(
    objective: &dyn InputObjective,
    x0: &[f64],
    epsilon: f64,
    step_size: f64,
    iterations: usize,
) -> Result<Minimized> {
    check_start(x0, objective.input_dim())?;
    let mut x = x0.to_vec();
    let mut best_input = x.clone();
    let mut best_value = f64::INFINITY;
    let mut trace = Vec::with_capacity(iterations + 1);
    for it in 0..=iterations {
        let (value, grad) = if it < iterations {
            let (v, g) = objective.value_and_gradient(&x)?;
            (v, Some(g))
        } else {
            (objective.value(&x)?, None)
        };
        if !value.is_finite() {
            return Err(Error::Numeric(format!("non-finite objective at iteration {it}")));
        }
        trace.push(value);
        if value < best_value {
            best_value = value;
            best_input.clone_from(&x);
        }
        if let Some(g) = grad {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient at iteration {it}")));
            }
            signed_step(&mut x, x0, &g, step_size, epsilon);
        }
    }
    Ok(Minimized {
        best_input,
        best_value,
        queries: trace.len(),
        trace,
    })
}

/// White-box attack: PGD on `objective ∘ encoder`.
pub fn run_pgd(
    encoder: &SourceEncoder,
    x0: &[f64],
    objective: &Objective,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    cfg.validate()?;
    if cfg.optimizer != Optimizer::Pgd {
        return Err(Error::config("run_pgd requires optimizer = pgd"));
    }
    let obj = EncodedObjective { encoder, objective };
    let m = pgd_minimize(&obj, x0, cfg.epsilon, cfg.step_size, cfg.iterations)?;
    Ok(AttackResult {
        original: x0.to_vec(),
        adversarial_embedding: encoder.encode(&m.best_input)?,
        adversarial_input: m.best_input,
        loss_trace: m.trace,
        best_objective: m.best_value,
        queries_used: m.queries,
    })
}
