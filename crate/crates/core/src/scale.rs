//! q-scale functions, the two-sided exit transform of the natural tax
//! process, and survival probabilities with and without tax.
//!
//! Both supported models have a rational `psi(lambda) - q` whose numerator
//! is a quadratic with roots `r_minus <= r_plus`, so
//!
//! ```text
//! W(z) = K e^{r_minus z} (A E(z) + B),   E(z) = (e^{(r_plus - r_minus) z} - 1) / (r_plus - r_minus)
//! ```
//!
//! with `(K, A, B) = (2 / sigma^2, 1, 0)` for Brownian motion and
//! `(1 / c, mu + r_plus, 1)` for the Cramér–Lundberg model with exponential
//! claims of rate `mu`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::path::LevyModel;
use crate::quadrature::integrate;
use crate::rate::RateFunction;

/// Absolute tolerance on the exponent integral.
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleForm {
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleFunction {
    model: LevyModel,
    q: f64,
    r_plus: f64,
    r_minus: f64,
    k: f64,
    a: f64,
    b: f64,
}

/// Roots of `a t^2 + b t + c = 0` for `a > 0`, `c <= 0`, smaller first.
fn quadratic_roots(a: f64, b: f64, c: f64) -> (f64, f64) {
    let disc = (b * b - 4.0 * a * c).max(0.0);
    let t = -0.5 * (b + b.signum() * disc.sqrt());
    if t == 0.0 {
        return (0.0, 0.0);
    }
    let (r1, r2) = (t / a, c / t);
    (r1.min(r2), r1.max(r2))
}

pub fn scale_function(model: LevyModel, q: f64) -> Result<ScaleFunction> {
    model.validate()?;
    if !(q.is_finite() && q >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "discount rate q must be finite and >= 0, got {q}"
        )));
    }
    let s = match model {
        LevyModel::BrownianWithDrift(m) => {
            let half_var = 0.5 * m.volatility * m.volatility;
            let (r_minus, r_plus) = quadratic_roots(half_var, m.drift, -q);
            ScaleFunction {
                model,
                q,
                r_plus,
                r_minus,
                k: 1.0 / half_var,
                a: 1.0,
                b: 0.0,
            }
        }
        LevyModel::CramerLundberg(m) => {
            let (c, lam, mu) = (m.premium_rate, m.claim_intensity, m.claim_rate());
            let (r_minus, r_plus) = quadratic_roots(c, c * mu - lam - q, -q * mu);
            ScaleFunction {
                model,
                q,
                r_plus,
                r_minus,
                k: 1.0 / c,
                a: mu + r_plus,
                b: 1.0,
            }
        }
    };
    Ok(s)
}

impl ScaleFunction {
    pub fn model(&self) -> LevyModel {
        self.model
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn form(&self) -> ScaleForm {
        ScaleForm::ClosedForm
    }

    /// `Phi(q)`, the largest root of `psi(lambda) = q`.
    pub fn phi_q(&self) -> f64 {
        self.r_plus
    }

    fn gap(&self) -> f64 {
        self.r_plus - self.r_minus
    }

    fn e(&self, z: f64) -> f64 {
        let d = self.gap();
        if d == 0.0 {
            z
        } else {
            (d * z).exp_m1() / d
        }
    }

    fn ln_e(&self, z: f64) -> f64 {
        let dz = self.gap() * z;
        if dz > 30.0 {
            dz + (-(-dz).exp()).ln_1p() - self.gap().ln()
        } else {
            self.e(z).ln()
        }
    }

    pub fn w(&self, z: f64) -> f64 {
        if z < 0.0 {
            return 0.0;
        }
        if z == 0.0 {
            return self.k * self.b;
        }
        let (a, b) = (self.a, self.b);
        let e = self.e(z);
        let ln_inner = if e.is_finite() && e < 1e300 {
            (a * e + b).ln()
        } else {
            a.ln() + self.ln_e(z)
        };
        (self.k.ln() + self.r_minus * z + ln_inner).exp()
    }

    /// `W'/W` on `(0, inf)`; `+inf` at `0` when `W(0) = 0`.
    pub fn log_derivative(&self, z: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        let e = self.e(z);
        if e <= 1.0 {
            let den = a * e + b;
            if den == 0.0 {
                return f64::INFINITY;
            }
            (a * self.r_plus * e + a + b * self.r_minus) / den
        } else {
            let inv = 1.0 / e;
            (a * self.r_plus + (a + b * self.r_minus) * inv) / (a + b * inv)
        }
    }

    /// Right derivative of `W`; `0` below zero.
    pub fn w_prime(&self, z: f64) -> f64 {
        if z < 0.0 {
            return 0.0;
        }
        let (a, b) = (self.a, self.b);
        if z == 0.0 {
            return self.k * (a + b * self.r_minus);
        }
        self.w(z) * self.log_derivative(z)
    }

    /// `W(inf)` when it is finite, i.e. when `q = 0` and the drift is positive.
    pub fn limit(&self) -> Option<f64> {
        (self.r_plus == 0.0 && self.r_minus < 0.0).then(|| self.k * self.a / self.gap())
    }

    /// `ln(W(inf) / W(z)) = int_z^inf W'/W`, when `W(inf)` is finite.
    pub fn log_ratio_to_limit(&self, z: f64) -> Option<f64> {
        self.limit()?;
        let d = self.gap();
        let coeff = 1.0 - self.b * d / self.a;
        Some(-(-coeff * (-d * z).exp()).ln_1p())
    }
}

/// Survival probability without tax, `phi_0(x) = psi'(0+) W(x)`, or `0` when
/// the drift is not positive.
pub fn phi_zero(model: LevyModel, x: f64) -> Result<f64> {
    let drift = model.mean_drift();
    if drift <= 0.0 {
        return Ok(0.0);
    }
    Ok((drift * scale_function(model, 0.0)?.w(x)).min(1.0))
}

/// Two-sided exit problem for the natural tax process on `[0, a]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitProblemSpec {
    pub x: f64,
    pub a: f64,
    pub q: f64,
    pub rate: RateFunction,
}

impl ExitProblemSpec {
    pub fn new(x: f64, a: f64, q: f64, rate: RateFunction) -> Result<Self> {
        let spec = Self { x, a, q, rate };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.x >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "start x must be finite and >= 0, got {}",
                self.x
            )));
        }
        if !(self.a.is_finite() && self.a > self.x) {
            return Err(Error::InvalidParameter(format!(
                "upper level a = {} must exceed x = {}",
                self.a, self.x
            )));
        }
        if !(self.q.is_finite() && self.q >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "discount rate q must be finite and >= 0, got {}",
                self.q
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitTransform {
    pub value: f64,
    /// Bound on the value error implied by the quadrature error estimate.
    pub tolerance: f64,
    /// `a >= y(inf)`: the taxed process never exceeds `a`.
    pub degenerate: bool,
    pub ceiling: Extended,
}

fn exponent_integral(scale: &ScaleFunction, rate: &RateFunction, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let pieces = rate.pieces();
    let breaks = rate.breakpoints_between(lo, hi);
    let integrand = |y: f64| {
        let i = pieces.partition_point(|p| p.start <= y).max(1) - 1;
        scale.log_derivative(y) / (1.0 - pieces[i].rate_at(y))
    };
    let quad = integrate(integrand, lo, hi, &breaks, QUADRATURE_TOLERANCE)?;
    Ok((quad.value, quad.error))
}

/// `y(inf)`: the level where the rate first reaches `1`, infinite otherwise.
/// Found from the rate alone, so no uniqueness certificate is needed.
fn ceiling(rate: &RateFunction, x: f64) -> Result<Extended> {
    if rate.domain_start() != x {
        return Err(Error::DomainMismatch {
            expected: rate.domain_start(),
            found: x,
        });
    }
    Ok(rate.saturation_level().map_or(Extended::Infinite, Extended::Finite))
}

/// `E_x[exp(-q tau_a^+); tau_a^+ < tau_0^-]` for the natural tax process.
pub fn exit_transform(spec: &ExitProblemSpec, scale: &ScaleFunction) -> Result<ExitTransform> {
    spec.validate()?;
    if scale.q() != spec.q {
        return Err(Error::InvalidParameter(format!(
            "scale function built for q = {}, exit problem has q = {}",
            scale.q(),
            spec.q
        )));
    }
    let ceiling = ceiling(&spec.rate, spec.x)?;
    if ceiling.reached_by(spec.a) {
        return Ok(ExitTransform {
            value: 0.0,
            tolerance: 0.0,
            degenerate: true,
            ceiling,
        });
    }
    if scale.w(spec.x) == 0.0 {
        // Regular downward creeping from 0: ruin is immediate.
        return Ok(ExitTransform {
            value: 0.0,
            tolerance: 0.0,
            degenerate: false,
            ceiling,
        });
    }
    let (exponent, err) = exponent_integral(scale, &spec.rate, spec.x, spec.a)?;
    let value = (-exponent).exp();
    Ok(ExitTransform {
        value,
        tolerance: value * err.exp_m1(),
        degenerate: false,
        ceiling,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivalBranch {
    Regular,
    /// `y(inf) < inf`: the taxed process is capped and ruin is certain.
    CappedByCeiling,
    /// `psi'(0+) <= 0`: ruin is certain even without tax.
    NonPositiveDrift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Survival {
    pub value: f64,
    pub tolerance: f64,
    pub branch: SurvivalBranch,
}

/// `P_x(inf_t V_t >= 0)` for the natural tax process with rate `rate`.
///
/// The exponent is integrated numerically up to the last rate breakpoint
/// and completed with the exact tail `ln(W(inf) / W(z)) / (1 - delta_last)`.
pub fn survival_probability(model: LevyModel, x: f64, rate: &RateFunction) -> Result<Survival> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "start x must be finite and >= 0, got {x}"
        )));
    }
    model.validate()?;
    let ceiling = ceiling(rate, x)?;
    let zero = |branch| Survival {
        value: 0.0,
        tolerance: 0.0,
        branch,
    };
    if model.mean_drift() <= 0.0 {
        return Ok(zero(SurvivalBranch::NonPositiveDrift));
    }
    if ceiling.is_finite() {
        return Ok(zero(SurvivalBranch::CappedByCeiling));
    }
    let scale = scale_function(model, 0.0)?;
    if scale.w(x) == 0.0 {
        return Ok(zero(SurvivalBranch::Regular));
    }
    let pieces = rate.pieces();
    let last = pieces[pieces.len() - 1];
    let cut = last.start.max(x);
    let (body, err) = if cut > x {
        exponent_integral(&scale, rate, x, cut)?
    } else {
        (0.0, 0.0)
    };
    let tail = scale
        .log_ratio_to_limit(cut)
        .expect("finite W(inf) for positive drift at q = 0")
        / (1.0 - last.rate_start);
    let value = (-(body + tail)).exp();
    Ok(Survival {
        value,
        tolerance: value * err.exp_m1(),
        branch: SurvivalBranch::Regular,
    })
}

/// JSON record of an analytic result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticRecord {
    pub model: LevyModel,
    pub q: f64,
    pub x: f64,
    pub a: Extended,
    pub rate: RateFunction,
    pub value: f64,
    pub tolerance: f64,
}
