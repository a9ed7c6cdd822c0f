//! Randomized checks of the trade-off closed form and the two polytope bounds.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pta_core::theory::{
    check_polytope, polytope_instance, theorem1_closed_form, theorem1_instance, theorem1_monotonicity_violations,
    theorem1_numeric_oracle, PolytopeInstance, PolytopeSide, TheoryInstance,
};

use crate::error::CliError;
use crate::report::{write_csv_rows, write_json, RunManifest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub count: usize,
    pub polytope_count: usize,
    pub dim_min: usize,
    pub dim_max: usize,
    pub seed: u64,
    /// Largest acceptable |closed form − oracle|.
    pub tol: f64,
    pub monotonicity_grid: usize,
    pub output_dir: PathBuf,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            count: 200,
            polytope_count: 500,
            dim_min: 2,
            dim_max: 64,
            seed: 0,
            tol: 1e-4,
            monotonicity_grid: 41,
            output_dir: PathBuf::from("pta-theory"),
        }
    }
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let mut v = Vec::new();
        if self.count < 1 {
            v.push("count: must be >= 1".to_string());
        }
        if self.dim_min < 2 || self.dim_max < self.dim_min {
            v.push(format!("dim_min/dim_max: need 2 <= dim_min <= dim_max, got {}..{}", self.dim_min, self.dim_max));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            v.push(format!("tol: must be > 0, got {}", self.tol));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(v))
        }
    }
}

/// One closed-form vs. oracle comparison (theory.csv).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub index: usize,
    pub dim: usize,
    pub delta_norm: f64,
    pub beta: f64,
    pub sigma_s: f64,
    pub sigma_t: f64,
    pub closed_form: f64,
    pub oracle: f64,
    pub gap: f64,
    pub iterations: usize,
}

/// One polytope bound check (polytope.csv).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub side: PolytopeSide,
    pub index: usize,
    pub dim: usize,
    pub n_proxies: usize,
    pub bound: f64,
    pub cosine: f64,
    pub satisfied: bool,
}

/// Instances worth re-running: the worst gap plus every violation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReplayFile {
    pub gaps: Vec<GapCase>,
    pub bounds: Vec<BoundCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCase {
    pub dim: usize,
    pub instance: TheoryInstance,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCase {
    pub side: PolytopeSide,
    pub instance: PolytopeInstance,
    pub bound: f64,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySummary {
    pub instances: usize,
    pub max_gap: f64,
    pub gap_violations: usize,
    pub monotonicity_violations: usize,
    pub polytope_instances: usize,
    pub bound_violations: usize,
    pub seconds: f64,
}

impl TheorySummary {
    pub fn violations(&self) -> usize {
        self.gap_violations + self.monotonicity_violations + self.bound_violations
    }
}

#[derive(Debug, Clone)]
pub struct TheoryRun {
    pub summary: TheorySummary,
    pub gaps: Vec<GapRow>,
    pub bounds: Vec<BoundRow>,
    pub replay: ReplayFile,
}

/// Runs the sweeps in memory.
pub fn theory_sweeps(cfg: &TheoryConfig) -> Result<TheoryRun, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let gaps: Vec<(GapRow, TheoryInstance)> = (0..cfg.count)
        .into_par_iter()
        .map(|index| {
            let (dim, inst) = theorem1_instance(cfg.seed, index, (cfg.dim_min, cfg.dim_max));
            // infinite tolerance: the gap is judged here so violators can be recorded
            let o = theorem1_numeric_oracle(&inst, dim, f64::INFINITY)?;
            Ok((
                GapRow {
                    index,
                    dim,
                    delta_norm: inst.delta_norm,
                    beta: inst.beta,
                    sigma_s: inst.sigma_s,
                    sigma_t: inst.sigma_t,
                    closed_form: o.closed_form,
                    oracle: o.value,
                    gap: o.gap,
                    iterations: o.iterations,
                },
                inst,
            ))
        })
        .collect::<Result<_, CliError>>()?;
    let mut bounds = Vec::new();
    let mut replay = ReplayFile::default();
    for side in [PolytopeSide::Source, PolytopeSide::Target] {
        let checked: Vec<(BoundRow, PolytopeInstance)> = (0..cfg.polytope_count)
            .into_par_iter()
            .map(|index| {
                let inst = polytope_instance(cfg.seed, index, side);
                let b = check_polytope(&inst, side)?;
                Ok((
                    BoundRow {
                        side,
                        index,
                        dim: inst.probe.dim(),
                        n_proxies: inst.proxies.len(),
                        bound: b.bound,
                        cosine: b.cosine,
                        satisfied: b.satisfied,
                    },
                    inst,
                ))
            })
            .collect::<Result<_, CliError>>()?;
        for (row, inst) in checked {
            if !row.satisfied {
                replay.bounds.push(BoundCase {
                    side,
                    instance: inst,
                    bound: row.bound,
                    cosine: row.cosine,
                });
            }
            bounds.push(row);
        }
    }
    let max_gap = gaps.iter().map(|g| g.0.gap).fold(0.0, f64::max);
    let mut gap_violations = 0;
    for (i, (row, inst)) in gaps.iter().enumerate() {
        let worst = row.gap == max_gap && gaps[..i].iter().all(|g| g.0.gap < max_gap);
        if row.gap >= cfg.tol {
            gap_violations += 1;
        }
        if row.gap >= cfg.tol || worst {
            replay.gaps.push(GapCase {
                dim: row.dim,
                instance: inst.clone(),
                gap: row.gap,
            });
        }
    }
    let summary = TheorySummary {
        instances: gaps.len(),
        max_gap,
        gap_violations,
        monotonicity_violations: theorem1_monotonicity_violations(cfg.monotonicity_grid)?,
        polytope_instances: bounds.len(),
        bound_violations: bounds.iter().filter(|b| !b.satisfied).count(),
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(TheoryRun {
        summary,
        gaps: gaps.into_iter().map(|g| g.0).collect(),
        bounds,
        replay,
    })
}

/// Runs the sweeps and writes theory.csv, polytope.csv, summary.json, replay.json and
/// manifest.json. Any violation turns into [`CliError::TheoremViolation`] after the
/// files are written.
pub fn run_theory_suite(cfg: &TheoryConfig) -> Result<(RunManifest, TheorySummary), CliError> {
    let run = theory_sweeps(cfg)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| crate::report::io_at(dir, e))?;
    let hash = hex::encode(<sha2::Sha256 as sha2::Digest>::digest(serde_json::to_vec(cfg)?));
    let mut manifest = RunManifest::new("theory", hash, cfg.seed, vec![cfg.seed]);
    let mut emit = |name: &str| {
        let p = dir.join(name);
        manifest.emitted_files.push(p.clone());
        p
    };
    write_csv_rows(&emit("theory.csv"), &run.gaps)?;
    write_csv_rows(&emit("polytope.csv"), &run.bounds)?;
    write_json(&emit("summary.json"), &run.summary)?;
    write_json(&emit("replay.json"), &run.replay)?;
    let manifest = manifest.write(dir)?;
    let s = &run.summary;
    if s.violations() > 0 {
        return Err(CliError::TheoremViolation(format!(
            "{} gap, {} monotonicity and {} bound violations; offending instances in {}",
            s.gap_violations,
            s.monotonicity_violations,
            s.bound_violations,
            dir.join("replay.json").display()
        )));
    }
    Ok((manifest, run.summary))
}

/// Outcome of re-running one stored case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub kind: String,
    pub recorded: f64,
    pub reproduced: f64,
    pub matches: bool,
}

/// Re-runs every case of a replay file; gaps and cosines must reproduce bit for bit.
pub fn replay(path: &Path) -> Result<Vec<ReplayOutcome>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::report::io_at(path, e))?;
    let file: ReplayFile =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))?;
    let mut out = Vec::new();
    for g in &file.gaps {
        theorem1_closed_form(&g.instance)?;
        let o = theorem1_numeric_oracle(&g.instance, g.dim, f64::INFINITY)?;
        out.push(ReplayOutcome {
            kind: "gap".into(),
            recorded: g.gap,
            reproduced: o.gap,
            matches: o.gap.to_bits() == g.gap.to_bits(),
        });
    }
    for b in &file.bounds {
        let c = check_polytope(&b.instance, b.side)?;
        out.push(ReplayOutcome {
            kind: format!("{:?} bound", b.side).to_lowercase(),
            recorded: b.cosine - b.bound,
            reproduced: c.cosine - c.bound,
            matches: c.cosine.to_bits() == b.cosine.to_bits() && c.bound.to_bits() == b.bound.to_bits(),
        });
    }
    Ok(out)
}
