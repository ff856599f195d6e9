//! Taxed paths.
//!
//! Loss-carry-forward tax is paid only while `X` sits at its running maximum,
//! so the taxed process is `X_t - Xbar_t + m(Xbar_t)` for a level map `m`:
//! the net-of-tax map `gamma_bar` for a latent rate, and `s -> y(s - x)` for
//! a natural rate. The closed forms below evaluate exactly that. The two
//! oracles discretize the defining integrals directly and share no code with
//! the conversion calculus.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calculus::{gamma_bar, solve_rate_ode, GammaBarMap, RateOdeSolution};
use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::path::{fmt17, Direction, PiecewiseLinearPath};
use crate::rate::RateFunction;

/// Tolerance for the max-time set comparison.
pub const MAX_TIME_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    Latent,
    Natural,
}

/// Which maximum the rate reads, together with the rate itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Regime {
    pub kind: RegimeKind,
    pub rate: Arc<RateFunction>,
}

#[derive(Debug, Clone)]
enum LevelMap {
    Latent(Arc<GammaBarMap>),
    Natural(Arc<RateOdeSolution>),
}

impl LevelMap {
    fn forward(&self, s: f64) -> Result<f64> {
        match self {
            LevelMap::Latent(g) => g.forward(s),
            LevelMap::Natural(y) => y.level_map(s),
        }
    }

    fn inverse(&self, v: f64) -> Result<Extended> {
        match self {
            LevelMap::Latent(g) => g.inverse(v),
            LevelMap::Natural(y) => y.level_inverse(v),
        }
    }

    fn ceiling(&self) -> Extended {
        match self {
            LevelMap::Latent(g) => g.limit(),
            LevelMap::Natural(y) => y.horizon(),
        }
    }
}

/// A rate prepared for repeated use: the level map is built once and shared
/// by every path taxed with it.
#[derive(Debug, Clone)]
pub struct TaxScheme {
    regime: Regime,
    map: LevelMap,
}

impl TaxScheme {
    /// Latent rate started at `rate.domain_start()`.
    pub fn latent(rate: &RateFunction) -> Result<Self> {
        let map = gamma_bar(rate, rate.domain_start())?;
        Ok(Self {
            regime: Regime {
                kind: RegimeKind::Latent,
                rate: Arc::new(rate.clone()),
            },
            map: LevelMap::Latent(Arc::new(map)),
        })
    }

    /// Natural rate started at `rate.domain_start()`; fails when the rate
    /// ODE is not certified.
    pub fn natural(rate: &RateFunction) -> Result<Self> {
        let solution = solve_rate_ode(rate, rate.domain_start())?;
        Ok(Self {
            regime: Regime {
                kind: RegimeKind::Natural,
                rate: Arc::new(rate.clone()),
            },
            map: LevelMap::Natural(Arc::new(solution)),
        })
    }

    pub fn regime(&self) -> &Regime {
        &self.regime
    }

    pub fn start(&self) -> f64 {
        self.regime.rate.domain_start()
    }

    /// Taxed maximum as a function of the pre-tax maximum.
    pub fn level_map(&self, s: f64) -> Result<f64> {
        self.map.forward(s)
    }

    /// Pre-tax level whose image is `v`; `Infinite` at or above the ceiling.
    pub fn level_inverse(&self, v: f64) -> Result<Extended> {
        self.map.inverse(v)
    }

    /// Supremum of the taxed maximum over all paths.
    pub fn ceiling(&self) -> Extended {
        self.map.ceiling()
    }

    pub fn apply(&self, path: PiecewiseLinearPath) -> Result<TaxedPath> {
        let x = path.start_value();
        if x != self.start() {
            return Err(Error::DomainMismatch {
                expected: self.start(),
                found: x,
            });
        }
        let nodes = path.breakpoints().iter().map(|b| b.t).collect();
        TaxedPath::build(path, self.regime.clone(), Ledger::Exact(self.map.clone()), nodes)
    }
}

/// Latent tax process `U_t = X_t - Xbar_t + gamma_bar(Xbar_t)`.
pub fn apply_latent_tax(path: PiecewiseLinearPath, rate: &RateFunction) -> Result<TaxedPath> {
    TaxScheme::latent(rate)?.apply(path)
}

/// Natural tax process `V_t = X_t - Xbar_t + y(Xbar_t - x)`.
pub fn apply_natural_tax(path: PiecewiseLinearPath, rate: &RateFunction) -> Result<TaxedPath> {
    TaxScheme::natural(rate)?.apply(path)
}

/// Tax paid on grid cells: on `[t_j, t_{j+1})` the cumulative tax is
/// `cum_j + rate_j (Xbar_t - xbar_j)`.
#[derive(Debug, Clone)]
struct GridLedger {
    t: Vec<f64>,
    xbar: Vec<f64>,
    cum: Vec<f64>,
    rate: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Ledger {
    Exact(LevelMap),
    Grid(GridLedger),
}

/// A pre-tax path together with its taxed process.
///
/// The taxed running maximum is computed from the taxed values themselves,
/// not from the level map, so the identities relating the two are genuine
/// checks.
#[derive(Debug, Clone)]
pub struct TaxedPath {
    pre_tax: PiecewiseLinearPath,
    regime: Regime,
    ledger: Ledger,
    /// Times between which the taxed process is monotone.
    nodes: Vec<f64>,
    /// Taxed maximum over `[0, nodes[i]]`, left limits included.
    node_max: Vec<f64>,
}

impl TaxedPath {
    fn build(
        pre_tax: PiecewiseLinearPath,
        regime: Regime,
        ledger: Ledger,
        nodes: Vec<f64>,
    ) -> Result<Self> {
        let mut taxed = Self {
            pre_tax,
            regime,
            ledger,
            nodes,
            node_max: Vec::new(),
        };
        let mut running = f64::NEG_INFINITY;
        let mut node_max = Vec::with_capacity(taxed.nodes.len());
        for &t in &taxed.nodes {
            running = running.max(taxed.left_limit_at(t)?).max(taxed.value_at(t)?);
            node_max.push(running);
        }
        taxed.node_max = node_max;
        Ok(taxed)
    }

    pub fn pre_tax(&self) -> &PiecewiseLinearPath {
        &self.pre_tax
    }

    pub fn regime(&self) -> &Regime {
        &self.regime
    }

    pub fn horizon(&self) -> f64 {
        self.pre_tax.horizon()
    }

    /// Cumulative tax paid on `[0, t]`.
    pub fn total_tax(&self, t: f64) -> Result<f64> {
        let xbar = self.pre_tax.running_max(t)?;
        match &self.ledger {
            Ledger::Exact(map) => Ok(xbar - map.forward(xbar)?),
            Ledger::Grid(g) => {
                let j = g.t.partition_point(|&s| s <= t).max(1) - 1;
                Ok(g.cum[j] + g.rate[j] * (xbar - g.xbar[j]))
            }
        }
    }

    pub fn value_at(&self, t: f64) -> Result<f64> {
        self.taxed_from(self.pre_tax.value_at(t)?, t)
    }

    pub fn left_limit_at(&self, t: f64) -> Result<f64> {
        self.taxed_from(self.pre_tax.left_limit_at(t)?, t)
    }

    /// Taxed value for pre-tax value `x` at time `t`. Exact ledgers use
    /// `x - Xbar + map(Xbar)`, which is exactly the level map at the maximum.
    fn taxed_from(&self, x: f64, t: f64) -> Result<f64> {
        match &self.ledger {
            Ledger::Exact(map) => {
                let xbar = self.pre_tax.running_max(t)?;
                Ok((x - xbar) + map.forward(xbar)?)
            }
            Ledger::Grid(_) => Ok(x - self.total_tax(t)?),
        }
    }

    /// `sup_{s <= t}` of the taxed process.
    pub fn running_max(&self, t: f64) -> Result<f64> {
        let v = self.value_at(t)?;
        let i = self.nodes.partition_point(|&s| s <= t).max(1) - 1;
        Ok(self.node_max[i].max(v))
    }

    /// Exact first passage of the taxed process, strict crossing semantics.
    pub fn first_passage(&self, level: f64, direction: Direction) -> Result<Extended> {
        match direction {
            Direction::Up => self.first_passage_up(level),
            Direction::Down => self.first_passage_down(level),
        }
    }

    fn first_passage_up(&self, level: f64) -> Result<Extended> {
        if self.pre_tax.start_value() > level {
            return Ok(Extended::Finite(0.0));
        }
        match &self.ledger {
            // The taxed maximum rises only together with Xbar, so the taxed
            // process first exceeds `level` exactly when X first exceeds
            // the pre-image of `level`.
            Ledger::Exact(map) => Ok(match map.inverse(level)? {
                Extended::Finite(s) => self.pre_tax.first_passage(s, Direction::Up),
                Extended::Infinite => Extended::Infinite,
            }),
            Ledger::Grid(_) => {
                for w in self.nodes.windows(2) {
                    let (t0, t1) = (w[0], w[1]);
                    if self.value_at(t0)? > level {
                        return Ok(Extended::Finite(t0));
                    }
                    if self.left_limit_at(t1)? > level {
                        return Ok(Extended::Finite(self.bisect_up(level, t0, t1)?));
                    }
                }
                let end = self.horizon();
                Ok(if self.value_at(end)? > level {
                    Extended::Finite(end)
                } else {
                    Extended::Infinite
                })
            }
        }
    }

    /// `inf {t in (t0, t1) : value(t) > level}` on an increasing cell.
    fn bisect_up(&self, level: f64, mut lo: f64, mut hi: f64) -> Result<f64> {
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                return Ok(hi);
            }
            if self.value_at(mid)? > level {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }

    fn first_passage_down(&self, level: f64) -> Result<Extended> {
        for (i, &t0) in self.nodes.iter().enumerate() {
            let v0 = self.value_at(t0)?;
            if v0 < level {
                return Ok(Extended::Finite(t0));
            }
            let Some(&t1) = self.nodes.get(i + 1) else {
                break;
            };
            let v1 = self.left_limit_at(t1)?;
            if v1 < level {
                // Only a decreasing cell can cross downwards; Xbar and the
                // tax are constant there, so the taxed path is affine.
                let frac = (v0 - level) / (v0 - v1);
                return Ok(Extended::Finite((t0 + frac * (t1 - t0)).min(t1)));
            }
        }
        Ok(Extended::Infinite)
    }

    /// Writes `t,X,Xbar,taxed,taxed_bar,cumulative_tax` on `grid` merged with
    /// the path breakpoints; grid points outside `[0, horizon]` are dropped.
    pub fn write_csv<W: Write>(&self, writer: W, grid: &[f64]) -> Result<()> {
        let horizon = self.horizon();
        let mut times: Vec<f64> = grid
            .iter()
            .copied()
            .filter(|&t| (0.0..=horizon).contains(&t))
            .chain(self.pre_tax.breakpoints().iter().map(|b| b.t))
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "X", "Xbar", "taxed", "taxed_bar", "cumulative_tax"])?;
        for t in times {
            w.write_record([
                fmt17(t),
                fmt17(self.pre_tax.value_at(t)?),
                fmt17(self.pre_tax.running_max(t)?),
                fmt17(self.value_at(t)?),
                fmt17(self.running_max(t)?),
                fmt17(self.total_tax(t)?),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Free-function form of [`TaxedPath::first_passage`].
pub fn first_passage_taxed(taxed: &TaxedPath, level: f64, direction: Direction) -> Result<Extended> {
    taxed.first_passage(level, direction)
}

/// Uniform grid of spacing `step` merged with the path breakpoints.
fn oracle_grid(path: &PiecewiseLinearPath, step: f64) -> Result<Vec<f64>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be > 0, got {step}")));
    }
    let horizon = path.horizon();
    let n = (horizon / step).ceil() as usize;
    let mut grid: Vec<f64> = (0..n).map(|k| k as f64 * step).filter(|&t| t < horizon).collect();
    grid.extend(path.breakpoints().iter().map(|b| b.t));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

fn check_start(path: &PiecewiseLinearPath, rate: &RateFunction) -> Result<()> {
    if path.start_value() == rate.domain_start() {
        Ok(())
    } else {
        Err(Error::DomainMismatch {
            expected: rate.domain_start(),
            found: path.start_value(),
        })
    }
}

/// Left-point Riemann–Stieltjes sums for `int gamma(Xbar) dXbar`.
///
/// The error is at most the total variation of `gamma(Xbar)` over the path
/// times the largest increment of `Xbar` over one cell.
pub fn stieltjes_oracle(path: &PiecewiseLinearPath, rate: &RateFunction, step: f64) -> Result<TaxedPath> {
    check_start(path, rate)?;
    let t = oracle_grid(path, step)?;
    let n = t.len();
    let (mut xbar, mut cum, mut rates) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut acc = 0.0;
    for (j, &tj) in t.iter().enumerate() {
        let m = path.running_max(tj)?;
        if j > 0 {
            acc += rates[j - 1] * (m - xbar[j - 1]);
        }
        xbar.push(m);
        cum.push(acc);
        rates.push(rate.eval(m)?);
    }
    let ledger = Ledger::Grid(GridLedger {
        t: t.clone(),
        xbar,
        cum,
        rate: rates,
    });
    let regime = Regime {
        kind: RegimeKind::Latent,
        rate: Arc::new(rate.clone()),
    };
    TaxedPath::build(path.clone(), regime, ledger, t)
}

/// Forward recursion `V_{k+1} = V_k + dX - delta(Vbar_k) dXbar` for the
/// natural tax integral equation, with `Vbar_k` taken over grid values and
/// left limits.
pub fn euler_fixed_point_oracle(
    path: &PiecewiseLinearPath,
    rate: &RateFunction,
    step: f64,
) -> Result<TaxedPath> {
    check_start(path, rate)?;
    let t = oracle_grid(path, step)?;
    let n = t.len();
    let (mut xbar, mut cum, mut rates) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut acc = 0.0;
    let mut vbar = f64::NEG_INFINITY;
    for (j, &tj) in t.iter().enumerate() {
        let m = path.running_max(tj)?;
        if j > 0 {
            acc += rates[j - 1] * (m - xbar[j - 1]);
        }
        let left = path.left_limit_at(tj)? - acc;
        let right = path.value_at(tj)? - acc;
        vbar = vbar.max(left).max(right);
        xbar.push(m);
        cum.push(acc);
        rates.push(rate.eval(vbar)?);
    }
    let ledger = Ledger::Grid(GridLedger {
        t: t.clone(),
        xbar,
        cum,
        rate: rates,
    });
    let regime = Regime {
        kind: RegimeKind::Natural,
        rate: Arc::new(rate.clone()),
    };
    TaxedPath::build(path.clone(), regime, ledger, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// The taxed path is at its maximum but `X` is not, or vice versa.
    SetMismatch,
    /// `taxed_bar != Xbar - total_tax`.
    MaximumIdentity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxTimeViolation {
    pub t: f64,
    pub kind: ViolationKind,
    pub pre_tax_gap: f64,
    pub taxed_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxTimeReport {
    pub samples: usize,
    pub violations: Vec<MaxTimeViolation>,
    pub max_identity_error: f64,
}

impl MaxTimeReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that the taxed path and `X` sit at their running maxima at the
/// same sample times, and that the taxed maximum equals `Xbar` minus the
/// cumulative tax.
pub fn check_max_time_equality(taxed: &TaxedPath, sample_times: &[f64]) -> Result<MaxTimeReport> {
    let x = taxed.pre_tax();
    let mut violations = Vec::new();
    let mut max_identity_error: f64 = 0.0;
    for &t in sample_times {
        let pre_tax_gap = x.running_max(t)? - x.value_at(t)?;
        let h_bar = taxed.running_max(t)?;
        let taxed_gap = h_bar - taxed.value_at(t)?;
        let at_max_x = pre_tax_gap.abs() <= MAX_TIME_TOLERANCE;
        let at_max_h = taxed_gap.abs() <= MAX_TIME_TOLERANCE;
        if at_max_x != at_max_h {
            violations.push(MaxTimeViolation {
                t,
                kind: ViolationKind::SetMismatch,
                pre_tax_gap,
                taxed_gap,
            });
        }
        let identity = (h_bar - (x.running_max(t)? - taxed.total_tax(t)?)).abs();
        max_identity_error = max_identity_error.max(identity);
        if identity > MAX_TIME_TOLERANCE {
            violations.push(MaxTimeViolation {
                t,
                kind: ViolationKind::MaximumIdentity,
                pre_tax_gap,
                taxed_gap,
            });
        }
    }
    Ok(MaxTimeReport {
        samples: sample_times.len(),
        violations,
        max_identity_error,
    })
}
