//! Conversion calculus between latent and natural tax rates.
//!
//! A latent rate `gamma` acts through the pre-tax maximum, a natural rate
//! `delta` through the taxed maximum. They are linked by two monotone maps:
//!
//! * the net-of-tax map `gamma_bar(s) = x + int_x^s (1 - gamma)`, which sends
//!   the pre-tax maximum to the taxed maximum under a latent rate, and
//! * the solution `y` of `y' = 1 - delta(y)`, `y(0) = x`, which does the same
//!   under a natural rate via `s -> y(s - x)`.
//!
//! Converting a rate means composing it with one of these maps. Both maps are
//! exact for constant and piecewise-constant pieces; tabulated rates with
//! linear interpolation use the adaptive integrator in [`crate::ode`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::ode::{integrate_to_level, DenseStep, OdeOptions, Termination};
use crate::rate::{Admissibility, Interpolation, KappaRate, Piece, RateFunction, RateSpec};

fn check_domain(rate_start: f64, x: f64) -> Result<()> {
    if rate_start == x {
        Ok(())
    } else {
        Err(Error::DomainMismatch {
            expected: rate_start,
            found: x,
        })
    }
}

/// Finds `z` in `[lo, hi]` with `g(z) = target` for increasing `g`,
/// bisecting down to floating-point resolution.
fn bisect_increasing(g: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return if (g(hi) - target).abs() < (g(lo) - target).abs() {
                hi
            } else {
                lo
            };
        }
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// The map `s -> x + int_x^s (1 - gamma(y)) dy` and its inverse.
#[derive(Debug, Clone)]
pub struct GammaBarMap {
    base: f64,
    pieces: Vec<Piece>,
    /// Map value at each piece start.
    cumulative: Vec<f64>,
    limit: Extended,
}

/// Builds the net-of-tax map of a latent rate at `x`.
pub fn gamma_bar(rate: &RateFunction, x: f64) -> Result<GammaBarMap> {
    check_domain(rate.domain_start(), x)?;
    let pieces = rate.pieces();
    let mut cumulative = Vec::with_capacity(pieces.len());
    let mut acc = x;
    let mut limit = Extended::Infinite;
    for p in &pieces {
        cumulative.push(acc);
        if p.is_saturated() {
            limit = Extended::Finite(acc);
            break;
        }
        if p.end.is_finite() {
            acc += p.net_integral(p.end);
        }
    }
    Ok(GammaBarMap {
        base: x,
        pieces,
        cumulative,
        limit,
    })
}

impl GammaBarMap {
    pub fn base(&self) -> f64 {
        self.base
    }

    /// `gamma_bar(inf)`.
    pub fn limit(&self) -> Extended {
        self.limit
    }

    pub fn forward(&self, s: f64) -> Result<f64> {
        if s < self.base || s.is_nan() {
            return Err(Error::BelowDomain {
                level: s,
                domain_start: self.base,
            });
        }
        let k = self.cumulative.len();
        let i = self.pieces[..k].partition_point(|p| p.start <= s) - 1;
        let p = &self.pieces[i];
        if p.is_saturated() {
            return Ok(self.cumulative[i]);
        }
        Ok(self.cumulative[i] + p.net_integral(s))
    }

    /// Inverse map; `Infinite` for values at or above `gamma_bar(inf)`.
    pub fn inverse(&self, v: f64) -> Result<Extended> {
        if v < self.base || v.is_nan() {
            return Err(Error::BelowDomain {
                level: v,
                domain_start: self.base,
            });
        }
        if self.limit.reached_by(v) {
            return Ok(Extended::Infinite);
        }
        let i = self.cumulative.partition_point(|&c| c <= v) - 1;
        let p = &self.pieces[i];
        let c = self.cumulative[i];
        if v == c {
            return Ok(Extended::Finite(p.start));
        }
        let z = if p.slope == 0.0 {
            p.start + (v - c) / (1.0 - p.rate_start)
        } else {
            bisect_increasing(|z| c + p.net_integral(z), v, p.start, p.end)
        };
        Ok(Extended::Finite(z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionMethod {
    Analytic,
    Numeric,
}

#[derive(Debug, Clone)]
enum OdeSegment {
    /// `y = y0 + speed (t - t0)`.
    Linear { speed: f64 },
    Numeric(Vec<DenseStep>),
    /// `y = ceiling - (ceiling - y0) exp(-rate (t - t0))`, the exact tail of a
    /// linear rate piece that reaches `1` at `ceiling`.
    Relaxation { ceiling: f64, rate: f64 },
    Frozen,
}

#[derive(Debug, Clone)]
struct OdePiece {
    t0: f64,
    y0: f64,
    segment: OdeSegment,
}

/// Solution `y` of `y' = 1 - delta(y)`, `y(0) = x`, on `[0, inf)`.
#[derive(Debug, Clone)]
pub struct RateOdeSolution {
    base: f64,
    pieces: Vec<OdePiece>,
    horizon: Extended,
    method: SolutionMethod,
}

/// Solves the rate ODE for a natural rate started at `x`.
///
/// The rate must carry a monotone or Lipschitz certificate; otherwise the
/// solution is not known to be unique and the call is refused.
pub fn solve_rate_ode(rate: &RateFunction, x: f64) -> Result<RateOdeSolution> {
    solve_rate_ode_with(rate, x, &OdeOptions::default())
}

pub fn solve_rate_ode_with(
    rate: &RateFunction,
    x: f64,
    opts: &OdeOptions,
) -> Result<RateOdeSolution> {
    check_domain(rate.domain_start(), x)?;
    if rate.admissibility() == Admissibility::None {
        return Err(Error::NotCertified(
            "rate carries no monotone or Lipschitz certificate".into(),
        ));
    }
    let mut pieces = Vec::new();
    let mut method = SolutionMethod::Analytic;
    let mut horizon = Extended::Infinite;
    let (mut t, mut y) = (0.0, x);
    for p in rate.pieces() {
        if p.is_saturated() {
            pieces.push(OdePiece {
                t0: t,
                y0: y,
                segment: OdeSegment::Frozen,
            });
            horizon = Extended::Finite(y);
            break;
        }
        if p.slope == 0.0 {
            let speed = 1.0 - p.rate_start;
            pieces.push(OdePiece {
                t0: t,
                y0: y,
                segment: OdeSegment::Linear { speed },
            });
            t += (p.end - p.start) / speed;
            y = p.end;
            continue;
        }
        method = SolutionMethod::Numeric;
        let (steps, term) = integrate_to_level(|v| 1.0 - p.rate_at(v), t, y, p.end, opts)?;
        let start = OdePiece {
            t0: t,
            y0: y,
            segment: OdeSegment::Numeric(steps),
        };
        pieces.push(start);
        match term {
            Termination::Target { t: t_hit } => {
                t = t_hit;
                y = p.end;
            }
            Termination::Stalled { t: ts, y: ys } => {
                if p.rate_end() >= 1.0 {
                    pieces.push(OdePiece {
                        t0: ts,
                        y0: ys,
                        segment: OdeSegment::Relaxation {
                            ceiling: p.end,
                            rate: p.slope,
                        },
                    });
                    horizon = Extended::Finite(p.end);
                } else {
                    pieces.push(OdePiece {
                        t0: ts,
                        y0: ys,
                        segment: OdeSegment::Frozen,
                    });
                    horizon = Extended::Finite(ys);
                }
                break;
            }
        }
    }
    Ok(RateOdeSolution {
        base: x,
        pieces,
        horizon,
        method,
    })
}

impl RateOdeSolution {
    pub fn base(&self) -> f64 {
        self.base
    }

    /// `y(inf)`.
    pub fn horizon(&self) -> Extended {
        self.horizon
    }

    pub fn method(&self) -> SolutionMethod {
        self.method
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "ODE solution evaluated at negative time {t}"
            )));
        }
        let i = self.pieces.partition_point(|p| p.t0 <= t) - 1;
        let p = &self.pieces[i];
        let y = match &p.segment {
            OdeSegment::Linear { speed } => {
                if t == p.t0 {
                    p.y0
                } else {
                    p.y0 + speed * (t - p.t0)
                }
            }
            OdeSegment::Numeric(steps) => {
                let j = steps.partition_point(|s| s.t0 <= t).max(1) - 1;
                let s = &steps[j];
                if t >= s.t_end {
                    s.y_end
                } else {
                    s.eval(t)
                }
            }
            OdeSegment::Relaxation { ceiling, rate } => {
                ceiling - (ceiling - p.y0) * (-rate * (t - p.t0)).exp()
            }
            OdeSegment::Frozen => p.y0,
        };
        Ok(y)
    }

    /// Time at which `y` reaches `v`; `Infinite` at or above `y(inf)`.
    pub fn inverse(&self, v: f64) -> Result<Extended> {
        if v < self.base || v.is_nan() {
            return Err(Error::BelowDomain {
                level: v,
                domain_start: self.base,
            });
        }
        if self.horizon.reached_by(v) {
            return Ok(Extended::Infinite);
        }
        let i = self.pieces.partition_point(|p| p.y0 <= v) - 1;
        let p = &self.pieces[i];
        if v == p.y0 {
            return Ok(Extended::Finite(p.t0));
        }
        let t = match &p.segment {
            OdeSegment::Linear { speed } => p.t0 + (v - p.y0) / speed,
            OdeSegment::Numeric(steps) => {
                let j = steps.partition_point(|s| s.y0 <= v).max(1) - 1;
                steps[j].invert(v)
            }
            OdeSegment::Relaxation { ceiling, rate } => {
                p.t0 + ((ceiling - p.y0) / (ceiling - v)).ln() / rate
            }
            OdeSegment::Frozen => return Ok(Extended::Infinite),
        };
        Ok(Extended::Finite(t))
    }

    /// Like [`Self::inverse`], but a ceiling that is reached in finite time
    /// (a step rate saturating at that level) reports its arrival time.
    pub fn arrival_time(&self, v: f64) -> Result<Extended> {
        if let (Extended::Finite(h), Some(last)) = (self.horizon, self.pieces.last()) {
            if v == h && last.y0 == h && matches!(last.segment, OdeSegment::Frozen) {
                return Ok(Extended::Finite(last.t0));
            }
        }
        self.inverse(v)
    }

    /// `y(s - x)`, the taxed maximum as a function of the pre-tax maximum.
    pub fn level_map(&self, s: f64) -> Result<f64> {
        if s < self.base {
            return Err(Error::BelowDomain {
                level: s,
                domain_start: self.base,
            });
        }
        self.eval(s - self.base)
    }

    /// Inverse of [`Self::level_map`].
    pub fn level_inverse(&self, v: f64) -> Result<Extended> {
        Ok(match self.inverse(v)? {
            Extended::Finite(t) => Extended::Finite(self.base + t),
            Extended::Infinite => Extended::Infinite,
        })
    }
}

/// Maps knot levels through `map`; the rates stay attached to their knots.
fn map_knots(
    rate: &RateFunction,
    mut map: impl FnMut(f64) -> Result<Extended>,
) -> Result<Vec<(f64, f64)>> {
    let x = rate.domain_start();
    let mut out = vec![(x, rate.eval(x)?)];
    if let RateSpec::Tabulated { knots, .. } = rate.spec() {
        for &(level, r) in knots.iter().filter(|k| k.0 > x) {
            match map(level)? {
                Extended::Finite(l) => out.push((l, r)),
                Extended::Infinite => {
                    return Err(Error::Unrepresentable(format!(
                        "knot at level {level} is never reached"
                    )))
                }
            }
        }
    }
    Ok(out)
}

fn knot_slope_bound(knots: &[(f64, f64)]) -> f64 {
    knots
        .windows(2)
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
        .fold(0.0, f64::max)
}

fn convert(
    rate: &RateFunction,
    x: f64,
    mut map: impl FnMut(f64) -> Result<Extended>,
) -> Result<RateFunction> {
    let spec = match rate.spec() {
        RateSpec::Constant(r) => RateSpec::Constant(*r),
        RateSpec::Piecewise { thresholds, values } => {
            let mut mapped = Vec::with_capacity(thresholds.len());
            for &b in thresholds {
                match map(b)? {
                    Extended::Finite(v) => mapped.push(v),
                    Extended::Infinite => {
                        return Err(Error::Unrepresentable(format!(
                            "threshold {b} is never reached"
                        )))
                    }
                }
            }
            RateSpec::Piecewise {
                thresholds: mapped,
                values: values.clone(),
            }
        }
        RateSpec::Tabulated { interpolation, .. } => RateSpec::Tabulated {
            knots: map_knots(rate, &mut map)?,
            interpolation: *interpolation,
        },
    };
    let admissibility = match (rate.admissibility(), &spec) {
        (Admissibility::Lipschitz(_), RateSpec::Tabulated { knots, .. }) => {
            Admissibility::Lipschitz(knot_slope_bound(knots))
        }
        (a, _) => a,
    };
    RateFunction::new(x, spec, admissibility)
}

/// Natural rate equivalent to the latent rate `gamma` started at `x`:
/// `delta(s) = gamma(gamma_bar^{-1}(s))` on `[x, gamma_bar(inf))`.
///
/// Exact for constant, piecewise-constant and step-tabulated rates. A
/// linearly tabulated rate is mapped knot by knot and interpolated on the
/// image grid, which is exact at the knots only.
pub fn latent_to_natural(gamma: &RateFunction, x: f64) -> Result<RateFunction> {
    let map = gamma_bar(gamma, x)?;
    convert(gamma, x, |level| map.forward(level).map(Extended::Finite))
}

/// Latent rate equivalent to the natural rate `delta` started at `x`:
/// `gamma(s) = delta(y(s - x))` on `[x, inf)`.
pub fn natural_to_latent(delta: &RateFunction, x: f64) -> Result<RateFunction> {
    let solution = solve_rate_ode(delta, x)?;
    convert(delta, x, |level| {
        Ok(match solution.arrival_time(level)? {
            Extended::Finite(t) => Extended::Finite(x + t),
            Extended::Infinite => Extended::Infinite,
        })
    })
}

/// Maps a rate charged on the taxed maximum to the equivalent natural rate,
/// pointwise `delta = kappa / (1 + kappa)`.
pub fn kappa_to_delta(kappa: &KappaRate) -> Result<RateFunction> {
    let f = |k: f64| k / (1.0 + k);
    let spec = match &kappa.spec {
        RateSpec::Constant(k) => RateSpec::Constant(f(*k)),
        RateSpec::Piecewise { thresholds, values } => RateSpec::Piecewise {
            thresholds: thresholds.clone(),
            values: values.iter().map(|&k| f(k)).collect(),
        },
        RateSpec::Tabulated {
            knots,
            interpolation,
        } => RateSpec::Tabulated {
            knots: knots.iter().map(|&(l, k)| (l, f(k))).collect(),
            interpolation: *interpolation,
        },
    };
    let admissibility = match (kappa.admissibility, &spec) {
        (
            Admissibility::Lipschitz(_),
            RateSpec::Tabulated {
                knots,
                interpolation: Interpolation::Linear,
            },
        ) => Admissibility::Lipschitz(knot_slope_bound(knots)),
        (a, _) => a,
    };
    RateFunction::new(kappa.domain_start, spec, admissibility)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn zero_rate_gives_identity() {
        let g = gamma_bar(&RateFunction::constant(3.0, 0.0).unwrap(), 3.0).unwrap();
        for s in [3.0, 4.5, 100.0] {
            assert_eq!(g.forward(s).unwrap(), s);
            assert_eq!(g.inverse(s).unwrap(), Extended::Finite(s));
        }
        assert_eq!(g.limit(), Extended::Infinite);
    }

    #[test]
    fn figure_thresholds() {
        let f = RateFunction::threshold(7.0, 20.0, 0.4, 0.9).unwrap();
        assert!(close(gamma_bar(&f, 7.0).unwrap().forward(20.0).unwrap(), 14.8, 1e-12));
        let f = RateFunction::threshold(10.0, 20.0, 0.4, 0.9).unwrap();
        assert!(close(gamma_bar(&f, 10.0).unwrap().forward(20.0).unwrap(), 16.0, 1e-12));
    }

    #[test]
    fn domain_mismatch() {
        let f = RateFunction::threshold(7.0, 20.0, 0.4, 0.9).unwrap();
        assert!(matches!(gamma_bar(&f, 6.0), Err(Error::DomainMismatch { .. })));
        assert!(matches!(solve_rate_ode(&f, 6.0), Err(Error::DomainMismatch { .. })));
    }

    #[test]
    fn constant_rate_ode() {
        let d = RateFunction::constant(2.0, 0.3).unwrap();
        let s = solve_rate_ode(&d, 2.0).unwrap();
        assert_eq!(s.method(), SolutionMethod::Analytic);
        for t in [0.0, 1.0, 17.5] {
            assert!(close(s.eval(t).unwrap(), 2.0 + 0.7 * t, 1e-12));
        }
        assert_eq!(s.horizon(), Extended::Infinite);
    }

    #[test]
    fn piecewise_ode_closed_form() {
        let d = RateFunction::threshold(7.0, 14.8, 0.4, 0.9).unwrap();
        let s = solve_rate_ode(&d, 7.0).unwrap();
        // 7 + 0.6 t up to t = 13, then 14.8 + 0.1 (t - 13).
        assert!(close(s.eval(5.0).unwrap(), 10.0, 1e-12));
        assert!(close(s.eval(13.0).unwrap(), 14.8, 1e-12));
        assert!(close(s.eval(23.0).unwrap(), 15.8, 1e-12));
        assert!(close(s.inverse(14.8).unwrap().to_f64(), 13.0, 1e-12));
    }

    #[test]
    fn uncertified_rate_refused() {
        let d = RateFunction::threshold(0.0, 1.0, 0.5, 0.2).unwrap();
        assert!(matches!(solve_rate_ode(&d, 0.0), Err(Error::NotCertified(_))));
        assert!(matches!(natural_to_latent(&d, 0.0), Err(Error::NotCertified(_))));
        // The latent direction needs no ODE.
        assert!(latent_to_natural(&d, 0.0).is_ok());
    }

    #[test]
    fn conversions_of_threshold_rate() {
        let g = RateFunction::threshold(7.0, 20.0, 0.4, 0.9).unwrap();
        let d = latent_to_natural(&g, 7.0).unwrap();
        let RateSpec::Piecewise { thresholds, values } = d.spec() else {
            panic!()
        };
        assert!(close(thresholds[0], 14.8, 1e-12));
        assert_eq!(values, &vec![0.4, 0.9]);
        let back = natural_to_latent(&d, 7.0).unwrap();
        let RateSpec::Piecewise { thresholds, .. } = back.spec() else {
            panic!()
        };
        assert!(close(thresholds[0], 20.0, 1e-12));
    }

    #[test]
    fn saturated_rates() {
        let step = RateFunction::new(
            0.0,
            RateSpec::Tabulated {
                knots: vec![(0.0, 0.5), (4.0, 1.0)],
                interpolation: Interpolation::Step,
            },
            Admissibility::Monotone,
        )
        .unwrap();
        let s = solve_rate_ode(&step, 0.0).unwrap();
        assert_eq!(s.horizon(), Extended::Finite(4.0));
        assert_eq!(s.eval(100.0).unwrap(), 4.0);
        assert_eq!(s.inverse(4.0).unwrap(), Extended::Infinite);
        assert!(close(s.inverse(2.0).unwrap().to_f64(), 4.0, 1e-12));
        assert_eq!(s.arrival_time(4.0).unwrap(), Extended::Finite(8.0));
        let latent = natural_to_latent(&step, 0.0).unwrap();
        assert_eq!(latent.saturation_level(), Some(8.0));
        let g = gamma_bar(&step, 0.0).unwrap();
        assert_eq!(g.limit(), Extended::Finite(2.0));
        assert_eq!(g.forward(50.0).unwrap(), 2.0);
        assert_eq!(g.inverse(2.0).unwrap(), Extended::Infinite);

        let linear = RateFunction::new(
            0.0,
            RateSpec::Tabulated {
                knots: vec![(0.0, 0.2), (10.0, 1.0)],
                interpolation: Interpolation::Linear,
            },
            Admissibility::Monotone,
        )
        .unwrap();
        let s = solve_rate_ode(&linear, 0.0).unwrap();
        assert_eq!(s.method(), SolutionMethod::Numeric);
        assert_eq!(s.horizon(), Extended::Finite(10.0));
        // 1 - delta(y) = 0.08 (10 - y): y = 10 - 10 exp(-0.08 t).
        for t in [0.5_f64, 3.0, 20.0, 200.0, 500.0] {
            let exact = 10.0 - 10.0 * (-0.08 * t).exp();
            assert!(close(s.eval(t).unwrap(), exact, 1e-8), "t = {t}");
        }
        assert!(matches!(natural_to_latent(&linear, 0.0), Err(Error::Unrepresentable(_))));
    }

    #[test]
    fn kappa_examples() {
        let zero = KappaRate::new(0.0, RateSpec::Constant(0.0), Admissibility::Monotone).unwrap();
        assert_eq!(kappa_to_delta(&zero).unwrap().eval(3.0).unwrap(), 0.0);
        let one = KappaRate::new(0.0, RateSpec::Constant(1.0), Admissibility::Monotone).unwrap();
        assert_eq!(kappa_to_delta(&one).unwrap().eval(3.0).unwrap(), 0.5);
        let pw = KappaRate::new(
            0.0,
            RateSpec::Piecewise {
                thresholds: vec![5.0],
                values: vec![1.0, 3.0],
            },
            Admissibility::Monotone,
        )
        .unwrap();
        let d = kappa_to_delta(&pw).unwrap();
        assert_eq!(d.eval(1.0).unwrap(), 0.5);
        assert_eq!(d.eval(6.0).unwrap(), 0.75);
    }
}
