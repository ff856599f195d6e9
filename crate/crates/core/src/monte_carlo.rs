//! Monte Carlo estimates of the exit transform and the survival probability
//! of the natural tax process.
//!
//! Path `i` draws from substream `i` of the configured seed and the per-path
//! results are reduced in path order, so estimates do not depend on the
//! number of worker threads.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::path::{fmt17, generate_cramer_lundberg_until, Direction, LevyModel, PiecewiseLinearPath, RngStream};
use crate::rate::RateFunction;
use crate::scale::{phi_zero, ExitProblemSpec};
use crate::taxation::TaxScheme;

/// Survival paths stop once the remaining ruin probability is below this.
pub const SAFE_LEVEL_RUIN_BOUND: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub horizon: f64,
    pub seed: u64,
    /// Grid spacing for Brownian paths; unused for Cramér–Lundberg.
    pub step: f64,
}

impl McConfig {
    pub fn new(n_paths: usize, horizon: f64, seed: u64) -> Self {
        Self {
            n_paths,
            horizon,
            seed,
            step: 0.01,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths < 100 {
            return Err(Error::InvalidParameter(format!(
                "need at least 100 paths, got {}",
                self.n_paths
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be finite and > 0, got {}",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Result of one simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathOutcome {
    pub value: f64,
    /// The target was decided before the path ended.
    pub resolved: bool,
    /// Bound on the error of `value` caused by ending the path early.
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub horizon: f64,
    pub unresolved: usize,
    /// Bound on `|E[estimate] - target|` from finite simulation length.
    pub truncation_bias: f64,
    pub truncation_note: String,
}

impl McEstimate {
    /// `|value - target| <= k * std_error + truncation_bias`.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error + self.truncation_bias
    }
}

/// Pairwise summation in index order.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn summarize(outcomes: &[PathOutcome], horizon: f64, note: String) -> McEstimate {
    let n = outcomes.len();
    let values: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
    let mean = pairwise_sum(&values) / n as f64;
    let squares: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = if n > 1 { pairwise_sum(&squares) / (n - 1) as f64 } else { 0.0 };
    let biases: Vec<f64> = outcomes.iter().map(|o| o.bias).collect();
    McEstimate {
        value: mean,
        std_error: (var / n as f64).sqrt(),
        n_paths: n,
        horizon,
        unresolved: outcomes.iter().filter(|o| !o.resolved).count(),
        truncation_bias: pairwise_sum(&biases) / n as f64,
        truncation_note: note,
    }
}

/// Simulates a path of `model`, ending early at the first claim after which
/// `stop(value, running_max)` holds. Brownian paths always run to the horizon.
fn simulate<F>(model: &LevyModel, x: f64, cfg: &McConfig, index: usize, mut stop: F) -> Result<PiecewiseLinearPath>
where
    F: FnMut(f64, f64) -> bool,
{
    let rng = RngStream::new(cfg.seed, index as u64);
    match model {
        LevyModel::CramerLundberg(m) => {
            generate_cramer_lundberg_until(m, x, cfg.horizon, rng, |b, running_max| stop(b.right, running_max))
        }
        LevyModel::BrownianWithDrift(_) => model.generate(x, cfg.horizon, cfg.step, rng),
    }
}

/// Taxed value right after a claim, from the pre-tax value and maximum.
fn taxed_value(scheme: &TaxScheme, value: f64, running_max: f64) -> f64 {
    scheme
        .level_map(running_max)
        .map_or(f64::NAN, |m| value - running_max + m)
}

/// Per-path outcomes of `exp(-q tau_a^+) 1{tau_a^+ < tau_0^-}` for the
/// natural tax process.
pub fn exit_transform_outcomes(model: &LevyModel, problem: &ExitProblemSpec, cfg: &McConfig) -> Result<Vec<PathOutcome>> {
    problem.validate()?;
    cfg.validate()?;
    model.validate()?;
    let scheme = TaxScheme::natural(&problem.rate)?;
    if scheme.start() != problem.x {
        return Err(Error::DomainMismatch {
            expected: scheme.start(),
            found: problem.x,
        });
    }
    let (a, q) = (problem.a, problem.q);
    let pre_image = match scheme.level_inverse(a)? {
        Extended::Finite(s) => s,
        Extended::Infinite => {
            return Ok(vec![
                PathOutcome {
                    value: 0.0,
                    resolved: true,
                    bias: 0.0,
                };
                cfg.n_paths
            ])
        }
    };
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let path = simulate(model, problem.x, cfg, i, |v, m| {
                m > pre_image || taxed_value(&scheme, v, m) < 0.0
            })?;
            let taxed = scheme.apply(path)?;
            let up = taxed.first_passage(a, Direction::Up)?;
            let down = taxed.first_passage(0.0, Direction::Down)?;
            let value = match up {
                Extended::Finite(t) if up.lt(down) => (-q * t).exp(),
                _ => 0.0,
            };
            let resolved = up.is_finite() || down.is_finite();
            let bias = if resolved { 0.0 } else { (-q * cfg.horizon).exp() };
            Ok(PathOutcome { value, resolved, bias })
        })
        .collect()
}

pub fn estimate_exit_transform(model: &LevyModel, problem: &ExitProblemSpec, cfg: &McConfig) -> Result<McEstimate> {
    let outcomes = exit_transform_outcomes(model, problem, cfg)?;
    let note = "underestimate: paths that neither exit nor are ruined by the horizon count as 0; \
                each contributes at most exp(-q * horizon)"
        .to_string();
    Ok(summarize(&outcomes, cfg.horizon, note))
}

/// Lower bound on survival from taxed level `v` onwards: tax at the rate's
/// supremum everywhere above `v` never pays less than the actual regime.
fn survival_lower_bound(model: &LevyModel, v: f64, sup_rate: f64) -> Result<f64> {
    if sup_rate >= 1.0 || v < 0.0 {
        return Ok(0.0);
    }
    Ok(phi_zero(*model, v)?.powf(1.0 / (1.0 - sup_rate)))
}

/// Smallest level from which the remaining ruin probability is certainly
/// below [`SAFE_LEVEL_RUIN_BOUND`], if the model drifts upwards.
fn safe_level(model: &LevyModel, x: f64, sup_rate: f64) -> Result<Option<f64>> {
    if model.mean_drift() <= 0.0 || sup_rate >= 1.0 {
        return Ok(None);
    }
    let ok = |v: f64| -> Result<bool> { Ok(1.0 - survival_lower_bound(model, v, sup_rate)? <= SAFE_LEVEL_RUIN_BOUND) };
    let mut hi = x.max(1.0);
    while !ok(hi)? {
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(None);
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Per-path survival indicators of the natural tax process.
pub fn survival_outcomes(model: &LevyModel, x: f64, rate: &RateFunction, cfg: &McConfig) -> Result<Vec<PathOutcome>> {
    cfg.validate()?;
    model.validate()?;
    let scheme = TaxScheme::natural(rate)?;
    if scheme.start() != x {
        return Err(Error::DomainMismatch {
            expected: scheme.start(),
            found: x,
        });
    }
    let sup_rate = rate.sup();
    let safe = safe_level(model, x, sup_rate)?.unwrap_or(f64::INFINITY);
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let path = simulate(model, x, cfg, i, |v, m| {
                let taxed = taxed_value(&scheme, v, m);
                taxed < 0.0 || taxed >= safe
            })?;
            let end = path.horizon();
            let taxed = scheme.apply(path)?;
            if taxed.first_passage(0.0, Direction::Down)?.is_finite() {
                return Ok(PathOutcome {
                    value: 0.0,
                    resolved: true,
                    bias: 0.0,
                });
            }
            let bias = 1.0 - survival_lower_bound(model, taxed.value_at(end)?, sup_rate)?;
            Ok(PathOutcome {
                value: 1.0,
                resolved: bias <= SAFE_LEVEL_RUIN_BOUND,
                bias,
            })
        })
        .collect()
}

pub fn estimate_survival(model: &LevyModel, x: f64, rate: &RateFunction, cfg: &McConfig) -> Result<McEstimate> {
    let outcomes = survival_outcomes(model, x, rate, cfg)?;
    let note = "overestimate: a surviving path may still be ruined after it ends; \
                the bound sums 1 - phi_0(V_end)^(1/(1 - sup rate)) over surviving paths"
        .to_string();
    Ok(summarize(&outcomes, cfg.horizon, note))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchSummary {
    pub batch: usize,
    pub n_paths: usize,
    pub mean: f64,
    pub std_error: f64,
    pub unresolved: usize,
}

/// Splits outcomes into consecutive batches of `batch_size` paths.
pub fn batch_summaries(outcomes: &[PathOutcome], batch_size: usize) -> Vec<BatchSummary> {
    outcomes
        .chunks(batch_size.max(1))
        .enumerate()
        .map(|(batch, chunk)| {
            let est = summarize(chunk, 0.0, String::new());
            BatchSummary {
                batch,
                n_paths: chunk.len(),
                mean: est.value,
                std_error: est.std_error,
                unresolved: est.unresolved,
            }
        })
        .collect()
}

pub fn write_batch_csv<W: Write>(writer: W, batches: &[BatchSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["batch", "n_paths", "mean", "std_error", "unresolved"])?;
    for b in batches {
        w.write_record([
            b.batch.to_string(),
            b.n_paths.to_string(),
            fmt17(b.mean),
            fmt17(b.std_error),
            b.unresolved.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
