//! Tax-rate functions on `[x, inf)`.
//!
//! Three shapes are supported: a constant, a piecewise-constant function
//! given by thresholds (value `values[k]` on `(thresholds[k-1], thresholds[k]]`),
//! and a tabulated function with step or linear interpolation. Every shape
//! reduces internally to a table of [`Piece`]s, on which the conversion
//! calculus works exactly.
//!
//! Rates take values in `[0, 1)`. The single exception is a tabulated rate
//! whose final knot has rate exactly `1`: such a rate *saturates* at that
//! level, which is how finite ceilings `y(inf) < inf` are expressed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Right-continuous: the rate of the last knot at or below the level.
    Step,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSpec {
    Constant(f64),
    Piecewise {
        thresholds: Vec<f64>,
        values: Vec<f64>,
    },
    Tabulated {
        /// `(level, rate)` pairs with strictly ascending levels.
        knots: Vec<(f64, f64)>,
        interpolation: Interpolation,
    },
}

/// Caller-supplied certificate that the rate ODE has a unique solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Admissibility {
    #[default]
    None,
    /// Non-decreasing (progressive) rate.
    Monotone,
    /// Lipschitz with the given constant.
    Lipschitz(f64),
}

/// One piece of a rate on `[start, end)`: `rate(z) = rate_start + slope * (z - start)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub start: f64,
    /// `f64::INFINITY` for the last piece.
    pub end: f64,
    pub rate_start: f64,
    pub slope: f64,
}

impl Piece {
    pub fn rate_at(&self, z: f64) -> f64 {
        if self.slope == 0.0 {
            self.rate_start
        } else {
            self.rate_start + self.slope * (z - self.start)
        }
    }

    pub fn rate_end(&self) -> f64 {
        if self.slope == 0.0 {
            self.rate_start
        } else {
            self.rate_start + self.slope * (self.end - self.start)
        }
    }

    pub fn is_saturated(&self) -> bool {
        self.slope == 0.0 && self.rate_start >= 1.0
    }

    /// `integral of (1 - rate)` over `[start, z]`, exact.
    pub fn net_integral(&self, z: f64) -> f64 {
        let h = z - self.start;
        if self.slope == 0.0 {
            (1.0 - self.rate_start) * h
        } else {
            (1.0 - self.rate_start) * h - 0.5 * self.slope * h * h
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RateFunctionRepr", into = "RateFunctionRepr")]
pub struct RateFunction {
    domain_start: f64,
    spec: RateSpec,
    admissibility: Admissibility,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateFunctionRepr {
    domain_start: f64,
    spec: RateSpec,
    #[serde(default)]
    admissibility: Admissibility,
}

impl TryFrom<RateFunctionRepr> for RateFunction {
    type Error = Error;

    fn try_from(r: RateFunctionRepr) -> Result<Self> {
        RateFunction::new(r.domain_start, r.spec, r.admissibility)
    }
}

impl From<RateFunction> for RateFunctionRepr {
    fn from(r: RateFunction) -> Self {
        RateFunctionRepr {
            domain_start: r.domain_start,
            spec: r.spec,
            admissibility: r.admissibility,
        }
    }
}

fn in_unit(v: f64) -> bool {
    (0.0..1.0).contains(&v)
}

fn non_decreasing(values: impl IntoIterator<Item = f64>) -> bool {
    let mut prev = f64::NEG_INFINITY;
    for v in values {
        if v < prev {
            return false;
        }
        prev = v;
    }
    true
}

impl RateFunction {
    pub fn new(domain_start: f64, spec: RateSpec, admissibility: Admissibility) -> Result<Self> {
        let r = Self {
            domain_start,
            spec,
            admissibility,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn constant(domain_start: f64, rate: f64) -> Result<Self> {
        Self::new(domain_start, RateSpec::Constant(rate), Admissibility::Monotone)
    }

    /// The two-level rate `alpha` on `[x, b]`, `beta` above `b`.
    ///
    /// Certified monotone when `alpha <= beta`.
    pub fn threshold(domain_start: f64, b: f64, alpha: f64, beta: f64) -> Result<Self> {
        let admissibility = if alpha <= beta {
            Admissibility::Monotone
        } else {
            Admissibility::None
        };
        Self::new(
            domain_start,
            RateSpec::Piecewise {
                thresholds: vec![b],
                values: vec![alpha, beta],
            },
            admissibility,
        )
    }

    pub fn domain_start(&self) -> f64 {
        self.domain_start
    }

    pub fn spec(&self) -> &RateSpec {
        &self.spec
    }

    pub fn admissibility(&self) -> Admissibility {
        self.admissibility
    }

    pub fn with_admissibility(mut self, admissibility: Admissibility) -> Result<Self> {
        self.admissibility = admissibility;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidRate(msg));
        if !self.domain_start.is_finite() {
            return fail(format!("domain start {} not finite", self.domain_start));
        }
        match &self.spec {
            RateSpec::Constant(r) => {
                if !in_unit(*r) {
                    return fail(format!("constant rate {r} outside [0, 1)"));
                }
            }
            RateSpec::Piecewise { thresholds, values } => {
                if values.len() != thresholds.len() + 1 {
                    return fail(format!(
                        "{} thresholds need {} values, got {}",
                        thresholds.len(),
                        thresholds.len() + 1,
                        values.len()
                    ));
                }
                if let Some(v) = values.iter().find(|v| !in_unit(**v)) {
                    return fail(format!("piecewise value {v} outside [0, 1)"));
                }
                if thresholds.iter().any(|t| !t.is_finite()) {
                    return fail("thresholds must be finite".into());
                }
                if thresholds.windows(2).any(|w| w[1] <= w[0]) {
                    return fail("thresholds must be strictly ascending".into());
                }
                if let Some(t) = thresholds.first() {
                    if *t <= self.domain_start {
                        return fail(format!(
                            "threshold {t} must lie above the domain start {}",
                            self.domain_start
                        ));
                    }
                }
            }
            RateSpec::Tabulated { knots, .. } => {
                let Some(first) = knots.first() else {
                    return fail("tabulated rate needs at least one knot".into());
                };
                if first.0 > self.domain_start {
                    return fail(format!(
                        "first knot {} lies above the domain start {}",
                        first.0, self.domain_start
                    ));
                }
                if knots.iter().any(|(l, r)| !l.is_finite() || !r.is_finite()) {
                    return fail("knots must be finite".into());
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return fail("knot levels must be strictly ascending".into());
                }
                let n = knots.len();
                for (i, (l, r)) in knots.iter().enumerate() {
                    let saturating = i == n - 1 && *r == 1.0;
                    if !(in_unit(*r) || saturating) {
                        return fail(format!("knot rate {r} at level {l} outside [0, 1)"));
                    }
                    if saturating && (n == 1 || *l <= self.domain_start) {
                        return fail("a saturating knot must lie above the domain start".into());
                    }
                }
            }
        }
        match self.admissibility {
            Admissibility::None => {}
            Admissibility::Monotone => {
                let ok = match &self.spec {
                    RateSpec::Constant(_) => true,
                    RateSpec::Piecewise { values, .. } => non_decreasing(values.iter().copied()),
                    RateSpec::Tabulated { knots, .. } => {
                        non_decreasing(knots.iter().map(|k| k.1))
                    }
                };
                if !ok {
                    return fail("certified monotone but values decrease".into());
                }
            }
            Admissibility::Lipschitz(l) => {
                if !(l.is_finite() && l >= 0.0) {
                    return fail(format!("Lipschitz constant {l} must be finite and >= 0"));
                }
                let ok = match &self.spec {
                    RateSpec::Constant(_) => true,
                    RateSpec::Piecewise { values, .. } => values.iter().all(|v| *v == values[0]),
                    RateSpec::Tabulated {
                        knots,
                        interpolation: Interpolation::Step,
                    } => knots.iter().all(|k| k.1 == knots[0].1),
                    RateSpec::Tabulated {
                        knots,
                        interpolation: Interpolation::Linear,
                    } => knots
                        .windows(2)
                        .all(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs() <= l),
                };
                if !ok {
                    return fail(format!("rate is not Lipschitz with constant {l}"));
                }
            }
        }
        Ok(())
    }

    /// Rate at level `z >= domain_start`.
    pub fn eval(&self, z: f64) -> Result<f64> {
        if z < self.domain_start || z.is_nan() {
            return Err(Error::BelowDomain {
                level: z,
                domain_start: self.domain_start,
            });
        }
        Ok(self.eval_unchecked(z))
    }

    fn eval_unchecked(&self, z: f64) -> f64 {
        match &self.spec {
            RateSpec::Constant(r) => *r,
            RateSpec::Piecewise { thresholds, values } => {
                values[thresholds.partition_point(|&t| t < z)]
            }
            RateSpec::Tabulated {
                knots,
                interpolation,
            } => {
                let i = knots.partition_point(|k| k.0 <= z).max(1) - 1;
                match (interpolation, knots.get(i + 1)) {
                    (_, None) | (Interpolation::Step, _) => knots[i].1,
                    (Interpolation::Linear, Some(next)) => {
                        let (l0, r0) = knots[i];
                        r0 + (next.1 - r0) * ((z - l0) / (next.0 - l0))
                    }
                }
            }
        }
    }

    /// Level from which the rate equals `1`, if any.
    pub fn saturation_level(&self) -> Option<f64> {
        match &self.spec {
            RateSpec::Tabulated { knots, .. } => {
                let last = knots[knots.len() - 1];
                (last.1 == 1.0).then_some(last.0)
            }
            _ => None,
        }
    }

    /// Supremum of the rate on `[domain_start, inf)`.
    pub fn sup(&self) -> f64 {
        self.pieces()
            .iter()
            .map(|p| p.rate_start.max(p.rate_end()))
            .fold(0.0, f64::max)
    }

    /// Levels inside `(lo, hi)` where the rate has a jump or a kink.
    pub fn breakpoints_between(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.pieces()
            .iter()
            .map(|p| p.start)
            .filter(|&s| s > lo && s < hi)
            .collect()
    }

    /// Piece table covering `[domain_start, inf)`.
    pub fn pieces(&self) -> Vec<Piece> {
        let x = self.domain_start;
        let constant = |start: f64, end: f64, rate: f64| Piece {
            start,
            end,
            rate_start: rate,
            slope: 0.0,
        };
        match &self.spec {
            RateSpec::Constant(r) => vec![constant(x, f64::INFINITY, *r)],
            RateSpec::Piecewise { thresholds, values } => {
                let mut bounds = Vec::with_capacity(thresholds.len() + 2);
                bounds.push(x);
                bounds.extend_from_slice(thresholds);
                bounds.push(f64::INFINITY);
                bounds
                    .windows(2)
                    .zip(values)
                    .map(|(w, v)| constant(w[0], w[1], *v))
                    .collect()
            }
            RateSpec::Tabulated {
                knots,
                interpolation,
            } => {
                let mut pts = vec![(x, self.eval_unchecked(x))];
                pts.extend(knots.iter().copied().filter(|k| k.0 > x));
                let mut pieces = Vec::with_capacity(pts.len());
                for w in pts.windows(2) {
                    let ((l0, r0), (l1, r1)) = (w[0], w[1]);
                    let slope = match interpolation {
                        Interpolation::Step => 0.0,
                        Interpolation::Linear => (r1 - r0) / (l1 - l0),
                    };
                    pieces.push(Piece {
                        start: l0,
                        end: l1,
                        rate_start: r0,
                        slope,
                    });
                }
                let (l, r) = pts[pts.len() - 1];
                pieces.push(constant(l, f64::INFINITY, r));
                pieces
            }
        }
    }
}

/// A rate with values in `[0, inf)`, used for the alternative tax
/// parametrization where tax is charged on increments of the taxed maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaRate {
    pub domain_start: f64,
    pub spec: RateSpec,
    #[serde(default)]
    pub admissibility: Admissibility,
}

impl KappaRate {
    pub fn new(domain_start: f64, spec: RateSpec, admissibility: Admissibility) -> Result<Self> {
        let values: Vec<f64> = match &spec {
            RateSpec::Constant(k) => vec![*k],
            RateSpec::Piecewise { values, .. } => values.clone(),
            RateSpec::Tabulated { knots, .. } => knots.iter().map(|k| k.1).collect(),
        };
        if let Some(k) = values.iter().find(|k| !(k.is_finite() && **k >= 0.0)) {
            return Err(Error::InvalidRate(format!(
                "kappa value {k} must be finite and >= 0"
            )));
        }
        Ok(Self {
            domain_start,
            spec,
            admissibility,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_rate_convention() {
        let f = RateFunction::threshold(7.0, 20.0, 0.4, 0.9).unwrap();
        assert_eq!(f.eval(7.0).unwrap(), 0.4);
        assert_eq!(f.eval(20.0).unwrap(), 0.4);
        assert_eq!(f.eval(20.000001).unwrap(), 0.9);
        assert!(f.eval(6.9).is_err());
        assert_eq!(f.admissibility(), Admissibility::Monotone);
        assert_eq!(f.sup(), 0.9);
    }

    #[test]
    fn validation_errors() {
        let bad = [
            RateFunction::constant(0.0, 1.0),
            RateFunction::constant(0.0, -0.1),
            RateFunction::threshold(5.0, 5.0, 0.1, 0.2),
            RateFunction::new(
                0.0,
                RateSpec::Piecewise {
                    thresholds: vec![2.0, 1.0],
                    values: vec![0.1, 0.2, 0.3],
                },
                Admissibility::None,
            ),
            RateFunction::new(
                0.0,
                RateSpec::Piecewise {
                    thresholds: vec![1.0],
                    values: vec![0.3, 0.1],
                },
                Admissibility::Monotone,
            ),
            RateFunction::new(
                0.0,
                RateSpec::Tabulated {
                    knots: vec![(1.0, 0.2)],
                    interpolation: Interpolation::Step,
                },
                Admissibility::None,
            ),
            RateFunction::new(
                0.0,
                RateSpec::Tabulated {
                    knots: vec![(0.0, 0.0), (1.0, 0.5)],
                    interpolation: Interpolation::Linear,
                },
                Admissibility::Lipschitz(0.4),
            ),
            RateFunction::new(
                0.0,
                RateSpec::Tabulated {
                    knots: vec![(0.0, 0.0), (1.0, 0.5)],
                    interpolation: Interpolation::Step,
                },
                Admissibility::Lipschitz(10.0),
            ),
            RateFunction::new(
                0.0,
                RateSpec::Tabulated {
                    knots: vec![(0.0, 1.0)],
                    interpolation: Interpolation::Step,
                },
                Admissibility::None,
            ),
        ];
        for (i, r) in bad.into_iter().enumerate() {
            assert!(r.is_err(), "case {i} should be rejected");
        }
    }

    #[test]
    fn tabulated_eval_and_pieces() {
        let r = RateFunction::new(
            1.0,
            RateSpec::Tabulated {
                knots: vec![(0.0, 0.0), (2.0, 0.4), (4.0, 0.4), (6.0, 1.0)],
                interpolation: Interpolation::Linear,
            },
            Admissibility::Lipschitz(0.3),
        )
        .unwrap();
        assert!((r.eval(1.0).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(r.eval(3.0).unwrap(), 0.4);
        assert!((r.eval(5.0).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(r.eval(7.0).unwrap(), 1.0);
        assert_eq!(r.saturation_level(), Some(6.0));
        let pieces = r.pieces();
        assert_eq!(pieces.len(), 4);
        assert_eq!(pieces[0].start, 1.0);
        assert!(pieces[3].is_saturated());
        assert_eq!(r.breakpoints_between(1.0, 5.0), vec![2.0, 4.0]);

        let step = RateFunction::new(
            0.0,
            RateSpec::Tabulated {
                knots: vec![(0.0, 0.1), (2.0, 0.3)],
                interpolation: Interpolation::Step,
            },
            Admissibility::Monotone,
        )
        .unwrap();
        assert_eq!(step.eval(1.999).unwrap(), 0.1);
        assert_eq!(step.eval(2.0).unwrap(), 0.3);
    }

    #[test]
    fn json_shape() {
        let text = r#"{"domain_start": 7, "spec": {"piecewise": {"thresholds": [20], "values": [0.4, 0.9]}}, "admissibility": "monotone"}"#;
        let r: RateFunction = serde_json::from_str(text).unwrap();
        assert_eq!(r, RateFunction::threshold(7.0, 20.0, 0.4, 0.9).unwrap());
        let out = serde_json::to_string(&r).unwrap();
        assert_eq!(
            out,
            r#"{"domain_start":7.0,"spec":{"piecewise":{"thresholds":[20.0],"values":[0.4,0.9]}},"admissibility":"monotone"}"#
        );
        let lip = r#"{"domain_start": 0, "spec": {"tabulated": {"knots": [[0, 0.1], [1, 0.2]], "interpolation": "linear"}}, "admissibility": {"lipschitz": 0.5}}"#;
        let r: RateFunction = serde_json::from_str(lip).unwrap();
        assert_eq!(r.admissibility(), Admissibility::Lipschitz(0.5));

        let unknown = r#"{"domain_start": 0, "spec": {"constant": 0.1}, "extra": 1}"#;
        assert!(serde_json::from_str::<RateFunction>(unknown).is_err());
        let invalid = r#"{"domain_start": 0, "spec": {"constant": 1.5}}"#;
        assert!(serde_json::from_str::<RateFunction>(invalid).is_err());
    }

    #[test]
    fn kappa_rejects_negative() {
        assert!(KappaRate::new(0.0, RateSpec::Constant(-1.0), Admissibility::None).is_err());
        assert!(KappaRate::new(0.0, RateSpec::Constant(3.0), Admissibility::None).is_ok());
    }
}
