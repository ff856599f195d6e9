#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taxrisk::{Admissibility, CramerLundberg, LevyModel, PiecewiseLinearPath, RateFunction, RateSpec, RngStream};

pub fn cl_model() -> CramerLundberg {
    CramerLundberg::new(2.0, 1.0, 1.0).unwrap()
}

pub fn cl_levy() -> LevyModel {
    LevyModel::CramerLundberg(cl_model())
}

pub fn cl_path(seed: u64, x: f64, horizon: f64) -> PiecewiseLinearPath {
    taxrisk::path::generate_cramer_lundberg(&cl_model(), x, horizon, RngStream::new(seed, 0)).unwrap()
}

/// Non-decreasing piecewise-constant rate with 1 to 4 thresholds above `x`.
pub fn random_monotone_piecewise(seed: u64, x: f64) -> RateFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=4);
    let mut thresholds = Vec::with_capacity(n);
    let mut level = x;
    for _ in 0..n {
        level += rng.random_range(0.5..8.0);
        thresholds.push(level);
    }
    let mut values: Vec<f64> = (0..=n).map(|_| rng.random_range(0.0..0.95)).collect();
    values.sort_by(f64::total_cmp);
    RateFunction::new(x, RateSpec::Piecewise { thresholds, values }, Admissibility::Monotone).unwrap()
}

/// Classical fixed-step RK4 for `y' = 1 - delta(y)`.
pub fn rk4(rate: &RateFunction, x: f64, t_end: f64, h: f64) -> Vec<(f64, f64)> {
    let f = |y: f64| 1.0 - rate.eval(y).unwrap();
    let n = (t_end / h).round() as usize;
    let mut out = Vec::with_capacity(n + 1);
    let mut y = x;
    out.push((0.0, y));
    for k in 0..n {
        let k1 = f(y);
        let k2 = f(y + 0.5 * h * k1);
        let k3 = f(y + 0.5 * h * k2);
        let k4 = f(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(((k + 1) as f64 * h, y));
    }
    out
}

/// `int_0^inf e^{-lambda z} W(z) dz` by quadrature on `[0, Z]` plus a tail
/// bound; returns `(value, tail_bound)`.
pub fn laplace_of_w(w: &taxrisk::scale::ScaleFunction, lambda: f64) -> (f64, f64) {
    let gap = lambda - w.phi_q();
    assert!(gap > 0.0);
    let z_max = 45.0 / gap;
    let mut breaks = Vec::new();
    let mut z = 0.0;
    while z < z_max {
        z += 0.5 / gap;
        breaks.push(z);
    }
    let f = |z: f64| (-lambda * z).exp() * w.w(z);
    let rough = taxrisk::quadrature::integrate(f, 0.0, z_max, &breaks, 1e-6).unwrap();
    let q = taxrisk::quadrature::integrate(f, 0.0, z_max, &breaks, 1e-12 * rough.value.abs()).unwrap();
    // W(z) e^{-Phi z} is monotone and bounded by its values at 0 and Z.
    let envelope = (w.w(z_max) * (-w.phi_q() * z_max).exp()).max(w.w(0.0));
    let tail = envelope * (-gap * z_max).exp() / gap;
    (q.value, tail + q.error)
}

pub fn brownian_levy() -> LevyModel {
    LevyModel::BrownianWithDrift(taxrisk::BrownianWithDrift::new(0.5, 1.0).unwrap())
}

/// Non-decreasing linearly interpolated rate with 2 to 4 knots, the first at `x`.
pub fn random_monotone_tabulated(seed: u64, x: f64) -> RateFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=4);
    let mut values: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.9)).collect();
    values.sort_by(f64::total_cmp);
    let mut level = x;
    let knots = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            if i > 0 {
                level += rng.random_range(1.0..10.0);
            }
            (level, v)
        })
        .collect();
    RateFunction::new(
        x,
        RateSpec::Tabulated {
            knots,
            interpolation: taxrisk::Interpolation::Linear,
        },
        Admissibility::Monotone,
    )
    .unwrap()
}

/// A rate as `(start, rate at start, slope)` pieces read straight off its
/// specification; the last piece runs to infinity.
pub struct RatePieces(Vec<(f64, f64, f64)>);

impl RatePieces {
    pub fn of(rate: &RateFunction) -> Self {
        let x = rate.domain_start();
        let pieces = match rate.spec() {
            RateSpec::Constant(c) => vec![(x, *c, 0.0)],
            RateSpec::Piecewise { thresholds, values } => std::iter::once(x)
                .chain(thresholds.iter().copied())
                .zip(values.iter().copied())
                .map(|(s, v)| (s, v, 0.0))
                .collect(),
            RateSpec::Tabulated { knots, interpolation } => {
                let linear = *interpolation == taxrisk::Interpolation::Linear;
                knots
                    .iter()
                    .enumerate()
                    .map(|(i, &(l, r))| match knots.get(i + 1) {
                        Some(&(l1, r1)) if linear => (l, r, (r1 - r) / (l1 - l)),
                        _ => (l, r, 0.0),
                    })
                    .collect()
            }
        };
        Self(pieces)
    }

    fn end(&self, i: usize) -> f64 {
        self.0.get(i + 1).map_or(f64::INFINITY, |p| p.0)
    }

    /// `x + int_x^s (1 - rate)`.
    pub fn gamma_bar(&self, s: f64) -> f64 {
        let mut acc = self.0[0].0;
        for (i, &(z0, r0, k)) in self.0.iter().enumerate() {
            let hi = self.end(i).min(s);
            if hi <= z0 {
                break;
            }
            let len = hi - z0;
            acc += (1.0 - r0) * len - 0.5 * k * len * len;
        }
        acc
    }

    /// Solution of `y' = 1 - rate(y)` from the domain start, in closed form:
    /// linear on flat pieces, exponential relaxation on sloped ones.
    pub fn y(&self, t: f64) -> f64 {
        let mut t0 = 0.0;
        for (i, &(z0, r0, k)) in self.0.iter().enumerate() {
            let z1 = self.end(i);
            let u0 = 1.0 - r0;
            let dt = if k == 0.0 {
                (z1 - z0) / u0
            } else {
                (u0 / (u0 - k * (z1 - z0))).ln() / k
            };
            if t <= t0 + dt {
                let s = t - t0;
                return if k == 0.0 { z0 + u0 * s } else { z0 + u0 * (-(-k * s).exp_m1()) / k };
            }
            t0 += dt;
        }
        unreachable!("last piece is unbounded")
    }
}

/// Relative error of `W'(z)` against a central difference. Where `W` has
/// flattened towards a finite limit the difference is taken of the small
/// remainder `W(inf) - W(z)`, computed from the exact tail, instead of `W`.
pub fn derivative_error(w: &taxrisk::scale::ScaleFunction, z: f64) -> f64 {
    let h = 1e-5 * z.max(1.0);
    let d = w.w_prime(z);
    let conditioning = 4.0 * f64::EPSILON * w.w(z) / (h * d);
    let fd = match w.limit() {
        Some(top) if conditioning > 1e-8 => {
            let rest = |z: f64| -top * (-w.log_ratio_to_limit(z).unwrap()).exp_m1();
            (rest(z - h) - rest(z + h)) / (2.0 * h)
        }
        _ => (w.w(z + h) - w.w(z - h)) / (2.0 * h),
    };
    (fd - d).abs() / d.abs()
}
