//! Adaptive Dormand–Prince 5(4) integration for autonomous scalar ODEs
//! `y' = f(y)` with increasing solutions, dense output, and a stopping
//! event when `y` reaches a target level.

use crate::error::{Error, Result};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Integration stops once `f(y)` drops below this value.
    pub slope_floor: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            slope_floor: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    /// End of the valid range; `< t0 + h` only for a step cut by the event.
    pub t_end: f64,
    pub y0: f64,
    pub y_end: f64,
    rcont: [f64; 5],
}

impl DenseStep {
    pub fn eval(&self, t: f64) -> f64 {
        let theta = (t - self.t0) / self.h;
        self.eval_theta(theta)
    }

    fn eval_theta(&self, theta: f64) -> f64 {
        let [r1, r2, r3, r4, r5] = self.rcont;
        let theta1 = 1.0 - theta;
        r1 + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * r5)))
    }

    /// Time at which the interpolant equals `v`, for `y0 <= v <= y_end`.
    pub fn invert(&self, v: f64) -> f64 {
        let (mut lo, mut hi) = (self.t0, self.t_end);
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                return if (self.eval(hi) - v).abs() < (self.eval(lo) - v).abs() {
                    hi
                } else {
                    lo
                };
            }
            if self.eval(mid) < v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    /// `y` reached the target level at time `t`.
    Target { t: f64 },
    /// `f(y)` fell below the slope floor, or `y` stopped advancing by more
    /// than the local tolerance, at `(t, y)`.
    Stalled { t: f64, y: f64 },
}

/// Integrates `y' = f(y)` from `(t0, y0)` until `y` reaches `target`
/// (which may be infinite only if the integration stalls).
pub fn integrate_to_level<F>(
    mut f: F,
    t0: f64,
    y0: f64,
    target: f64,
    opts: &OdeOptions,
) -> Result<(Vec<DenseStep>, Termination)>
where
    F: FnMut(f64) -> f64,
{
    let mut steps = Vec::new();
    let (mut t, mut y) = (t0, y0);
    let mut k1 = f(y);
    if k1 < opts.slope_floor {
        return Ok((steps, Termination::Stalled { t, y }));
    }
    let mut h = if target.is_finite() {
        ((target - y0) / k1 * 0.05).max(1e-8)
    } else {
        1e-3
    };
    for _ in 0..opts.max_steps {
        let k2 = f(y + h * A21 * k1);
        let k3 = f(y + h * (A31 * k1 + A32 * k2));
        let k4 = f(y + h * (A41 * k1 + A42 * k2 + A43 * k3));
        let k5 = f(y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
        let k6 = f(y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
        let y_new = y + h * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6);
        let k7 = f(y_new);
        let err_est = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
        let scale = opts.atol + opts.rtol * y.abs().max(y_new.abs());
        let err = (err_est / scale).abs();

        if err <= 1.0 {
            let ydiff = y_new - y;
            let bspl = h * k1 - ydiff;
            let rcont = [
                y,
                ydiff,
                bspl,
                ydiff - h * k7 - bspl,
                h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7),
            ];
            let mut step = DenseStep {
                t0: t,
                h,
                t_end: t + h,
                y0: y,
                y_end: y_new,
                rcont,
            };
            if y_new >= target {
                let t_hit = step.invert(target).min(t + h);
                step.t_end = t_hit;
                step.y_end = target;
                steps.push(step);
                return Ok((steps, Termination::Target { t: t_hit }));
            }
            steps.push(step);
            t += h;
            y = y_new;
            k1 = k7;
            // Near an attracting ceiling the step size settles at the
            // stability limit and `y` stops making resolvable progress.
            if k1 < opts.slope_floor || ydiff <= scale {
                return Ok((steps, Termination::Stalled { t, y }));
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= factor;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step size collapsed to {h} at t = {t}"
            )));
        }
    }
    Err(Error::InvalidParameter(format!(
        "ODE integration exceeded {} steps",
        opts.max_steps
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y' = a - b y, y(0) = y0 has y(t) = a/b + (y0 - a/b) e^{-bt}.
    fn exact(a: f64, b: f64, y0: f64, t: f64) -> f64 {
        a / b + (y0 - a / b) * (-b * t).exp()
    }

    #[test]
    fn linear_ode_matches_closed_form() {
        let (a, b, y0) = (0.8, 0.05, 1.0);
        let target = 10.0;
        let (steps, term) =
            integrate_to_level(|y| a - b * y, 0.0, y0, target, &OdeOptions::default()).unwrap();
        let Termination::Target { t: t_hit } = term else {
            panic!("expected target hit")
        };
        // Exact crossing time from the closed form.
        let t_exact = -((target - a / b) / (y0 - a / b)).ln() / b;
        assert!((t_hit - t_exact).abs() < 1e-8, "{t_hit} vs {t_exact}");
        for s in &steps {
            for k in 0..=10 {
                let t = s.t0 + (s.t_end - s.t0) * k as f64 / 10.0;
                let err = (s.eval(t) - exact(a, b, y0, t)).abs();
                assert!(err < 1e-9 * exact(a, b, y0, t).abs(), "dense error {err} at {t}");
            }
        }
    }

    #[test]
    fn stalls_when_slope_vanishes() {
        // y' = 2 - y approaches 2.
        let (steps, term) =
            integrate_to_level(|y| 2.0 - y, 0.0, 0.0, f64::INFINITY, &OdeOptions::default())
                .unwrap();
        let Termination::Stalled { y, t } = term else {
            panic!("expected stall")
        };
        assert!((2.0 - y).abs() < 1e-9);
        assert!(t > 20.0);
        assert!(!steps.is_empty());
    }

    #[test]
    fn inverse_of_dense_step() {
        let (steps, _) =
            integrate_to_level(|y| 1.0 - 0.01 * y, 0.0, 0.0, 5.0, &OdeOptions::default()).unwrap();
        for s in &steps {
            let v = 0.5 * (s.y0 + s.y_end);
            let t = s.invert(v);
            assert!((s.eval(t) - v).abs() < 1e-14);
        }
    }
}
