//! Exact sample paths of the pre-tax risk process.
//!
//! A path is stored as an ordered list of breakpoints. Between consecutive
//! breakpoints it is affine, and at a breakpoint it may jump down from
//! `left` to `right`. Cramér–Lundberg paths fit this form with no
//! discretization error at all; Brownian paths are interpolated on a grid.

use std::io::{Read, Write};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extended::Extended;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub t: f64,
    /// Left limit of the path at `t`.
    pub left: f64,
    /// Value at `t` (the path is right-continuous).
    pub right: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// First time the path is strictly above the level.
    Up,
    /// First time the path is strictly below the level.
    Down,
}

/// Piecewise-linear path with downward jumps on `[0, horizon]`.
///
/// The first breakpoint sits at time 0 with `left == right == start_value`,
/// the last one at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearPath {
    breakpoints: Vec<Breakpoint>,
    /// Running maximum at each breakpoint time.
    max_at: Vec<f64>,
}

impl PiecewiseLinearPath {
    pub fn new(breakpoints: Vec<Breakpoint>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidPath(
                "need at least a start and an end breakpoint".into(),
            ));
        }
        let first = breakpoints[0];
        if first.t != 0.0 || first.left != first.right {
            return Err(Error::InvalidPath(
                "first breakpoint must be at t = 0 with left == right".into(),
            ));
        }
        let mut max_at = Vec::with_capacity(breakpoints.len());
        let mut running = first.right;
        for (i, b) in breakpoints.iter().enumerate() {
            if !(b.t.is_finite() && b.left.is_finite() && b.right.is_finite()) {
                return Err(Error::InvalidPath(format!("non-finite breakpoint {i}")));
            }
            if i > 0 && b.t <= breakpoints[i - 1].t {
                return Err(Error::InvalidPath(format!(
                    "breakpoint times not strictly increasing at index {i}"
                )));
            }
            if b.right > b.left {
                return Err(Error::InvalidPath(format!("upward jump at t = {}", b.t)));
            }
            running = running.max(b.left);
            max_at.push(running);
        }
        Ok(Self {
            breakpoints,
            max_at,
        })
    }

    /// Single affine segment from `(0, start)` to `(horizon, end)`.
    pub fn linear(start: f64, end: f64, horizon: f64) -> Result<Self> {
        Self::new(vec![
            Breakpoint {
                t: 0.0,
                left: start,
                right: start,
            },
            Breakpoint {
                t: horizon,
                left: end,
                right: end,
            },
        ])
    }

    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    pub fn start_value(&self) -> f64 {
        self.breakpoints[0].right
    }

    pub fn horizon(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1].t
    }

    /// Running maximum at the time of breakpoint `i`.
    pub fn max_at_breakpoint(&self, i: usize) -> f64 {
        self.max_at[i]
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t >= 0.0 && t <= self.horizon() {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon(),
            })
        }
    }

    /// Index of the last breakpoint at or before `t`.
    pub fn segment_index(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|b| b.t <= t).saturating_sub(1)
    }

    /// Value on segment `i` at time `t`, which must lie in `[t_i, t_{i+1})`.
    fn segment_value(&self, i: usize, t: f64) -> f64 {
        let a = self.breakpoints[i];
        if t == a.t {
            return a.right;
        }
        match self.breakpoints.get(i + 1) {
            None => a.right,
            Some(b) => a.right + (b.left - a.right) * ((t - a.t) / (b.t - a.t)),
        }
    }

    pub fn value_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let i = self.segment_index(t);
        Ok(self.segment_value(i, t))
    }

    /// Left limit `X_{t-}`; equals `X_t` away from jump times.
    pub fn left_limit_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let i = self.segment_index(t);
        if i > 0 && self.breakpoints[i].t == t {
            Ok(self.breakpoints[i].left)
        } else {
            Ok(self.segment_value(i, t))
        }
    }

    /// Exact running maximum `sup_{s <= t} X_s`.
    pub fn running_max(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let i = self.segment_index(t);
        Ok(self.max_at[i].max(self.segment_value(i, t)))
    }

    /// Exact first passage time with strict crossing semantics; `0` when the
    /// start value already satisfies the condition.
    pub fn first_passage(&self, level: f64, direction: Direction) -> Extended {
        let bps = &self.breakpoints;
        match direction {
            Direction::Up => {
                if self.start_value() > level {
                    return Extended::Finite(0.0);
                }
                // First breakpoint whose running max exceeds the level; the
                // crossing happened on the segment just before it.
                let j = self.max_at.partition_point(|&m| m <= level);
                if j == bps.len() {
                    return Extended::Infinite;
                }
                let (a, b) = (bps[j - 1], bps[j]);
                let frac = (level - a.right) / (b.left - a.right);
                Extended::Finite((a.t + frac * (b.t - a.t)).min(b.t))
            }
            Direction::Down => {
                for (i, a) in bps.iter().enumerate() {
                    if a.right < level {
                        return Extended::Finite(a.t);
                    }
                    if let Some(b) = bps.get(i + 1) {
                        if b.left < level {
                            let frac = (a.right - level) / (a.right - b.left);
                            return Extended::Finite((a.t + frac * (b.t - a.t)).min(b.t));
                        }
                    }
                }
                Extended::Infinite
            }
        }
    }

    /// Writes `t,left,right` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "left", "right"])?;
        for b in &self.breakpoints {
            w.write_record([fmt17(b.t), fmt17(b.left), fmt17(b.right)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "left", "right"] {
            return Err(Error::InvalidPath(format!(
                "expected header t,left,right, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut breakpoints = Vec::new();
        for record in r.deserialize() {
            breakpoints.push(record?);
        }
        Self::new(breakpoints)
    }
}

/// Deterministic 17-significant-digit formatting used by every CSV writer.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CramerLundberg {
    pub premium_rate: f64,
    pub claim_intensity: f64,
    /// Mean claim size `1/mu` of the exponential claims.
    pub claim_mean: f64,
}

impl CramerLundberg {
    pub fn new(premium_rate: f64, claim_intensity: f64, claim_mean: f64) -> Result<Self> {
        let m = Self {
            premium_rate,
            claim_intensity,
            claim_mean,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.premium_rate.is_finite()
            && self.premium_rate > 0.0
            && self.claim_intensity.is_finite()
            && self.claim_intensity >= 0.0
            && self.claim_mean.is_finite()
            && self.claim_mean > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "Cramér–Lundberg needs finite c > 0, lambda >= 0, claim mean > 0; got {self:?}"
            )))
        }
    }

    /// Exponential claim rate `mu`.
    pub fn claim_rate(&self) -> f64 {
        1.0 / self.claim_mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrownianWithDrift {
    pub drift: f64,
    pub volatility: f64,
}

impl BrownianWithDrift {
    pub fn new(drift: f64, volatility: f64) -> Result<Self> {
        let m = Self { drift, volatility };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.drift.is_finite() && self.volatility.is_finite() && self.volatility > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "Brownian motion needs finite drift and volatility > 0; got {self:?}"
            )))
        }
    }
}

/// The two supported spectrally negative Lévy models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevyModel {
    CramerLundberg(CramerLundberg),
    BrownianWithDrift(BrownianWithDrift),
}

impl LevyModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            LevyModel::CramerLundberg(m) => m.validate(),
            LevyModel::BrownianWithDrift(m) => m.validate(),
        }
    }

    /// Laplace exponent `psi(theta) = log E[exp(theta X_1)]`.
    ///
    /// For the Cramér–Lundberg model this is finite for `theta > -mu`.
    pub fn laplace_exponent(&self, theta: f64) -> f64 {
        match self {
            LevyModel::CramerLundberg(m) => {
                let mu = m.claim_rate();
                m.premium_rate * theta - m.claim_intensity * theta / (mu + theta)
            }
            LevyModel::BrownianWithDrift(m) => {
                m.drift * theta + 0.5 * m.volatility * m.volatility * theta * theta
            }
        }
    }

    /// Mean drift `psi'(0+) = E[X_1] - X_0`.
    pub fn mean_drift(&self) -> f64 {
        match self {
            LevyModel::CramerLundberg(m) => m.premium_rate - m.claim_intensity * m.claim_mean,
            LevyModel::BrownianWithDrift(m) => m.drift,
        }
    }

    /// Generates a path; `step` is only used by the Brownian model.
    pub fn generate(
        &self,
        x: f64,
        horizon: f64,
        step: f64,
        rng: RngStream,
    ) -> Result<PiecewiseLinearPath> {
        match self {
            LevyModel::CramerLundberg(m) => generate_cramer_lundberg(m, x, horizon, rng),
            LevyModel::BrownianWithDrift(m) => generate_brownian_drift(m, x, horizon, step, rng),
        }
    }
}

/// Seed plus substream index; identical pairs give identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

fn check_start(x: f64, horizon: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::InvalidParameter(format!("start value {x} not finite")));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be finite and > 0, got {horizon}"
        )));
    }
    Ok(())
}

/// Exact Cramér–Lundberg path on `[0, horizon]`.
pub fn generate_cramer_lundberg(
    model: &CramerLundberg,
    x: f64,
    horizon: f64,
    rng: RngStream,
) -> Result<PiecewiseLinearPath> {
    generate_cramer_lundberg_until(model, x, horizon, rng, |_, _| false)
}

/// Like [`generate_cramer_lundberg`] but ends the path at the first claim
/// after which `stop(claim, running_max)` holds.
///
/// The result is a prefix of the full path drawn from the same stream.
pub fn generate_cramer_lundberg_until<F>(
    model: &CramerLundberg,
    x: f64,
    horizon: f64,
    rng: RngStream,
    mut stop: F,
) -> Result<PiecewiseLinearPath>
where
    F: FnMut(&Breakpoint, f64) -> bool,
{
    model.validate()?;
    check_start(x, horizon)?;
    let mut rng = rng.rng();
    let c = model.premium_rate;
    let mut bps = vec![Breakpoint {
        t: 0.0,
        left: x,
        right: x,
    }];
    let mut running_max = x;
    if model.claim_intensity > 0.0 {
        let arrivals = Exp::new(model.claim_intensity)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let sizes = Exp::new(model.claim_rate())
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let (mut t, mut v) = (0.0, x);
        loop {
            let gap: f64 = arrivals.sample(&mut rng);
            if t + gap >= horizon {
                break;
            }
            let size: f64 = sizes.sample(&mut rng);
            let left = v + c * gap;
            t += gap;
            v = left - size;
            running_max = running_max.max(left);
            let b = Breakpoint { t, left, right: v };
            bps.push(b);
            if stop(&b, running_max) {
                return PiecewiseLinearPath::new(bps);
            }
        }
    }
    let last = bps[bps.len() - 1];
    let end = last.right + c * (horizon - last.t);
    bps.push(Breakpoint {
        t: horizon,
        left: end,
        right: end,
    });
    PiecewiseLinearPath::new(bps)
}

/// Brownian motion with drift, linearly interpolated on a grid of spacing
/// `step` (the last cell may be shorter). This is the only approximate
/// generator: passages between grid points are missed.
pub fn generate_brownian_drift(
    model: &BrownianWithDrift,
    x: f64,
    horizon: f64,
    step: f64,
    rng: RngStream,
) -> Result<PiecewiseLinearPath> {
    model.validate()?;
    check_start(x, horizon)?;
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be > 0, got {step}")));
    }
    if step >= horizon {
        return Err(Error::InvalidParameter(format!(
            "step {step} must be smaller than the horizon {horizon}"
        )));
    }
    let mut rng = rng.rng();
    let n = (horizon / step).ceil() as usize;
    let mut bps = Vec::with_capacity(n + 1);
    bps.push(Breakpoint {
        t: 0.0,
        left: x,
        right: x,
    });
    let mut v = x;
    let mut prev_t = 0.0;
    for k in 1..=n {
        let t = if k == n { horizon } else { k as f64 * step };
        let dt = t - prev_t;
        if dt <= 0.0 {
            continue;
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        v += model.drift * dt + model.volatility * dt.sqrt() * z;
        bps.push(Breakpoint {
            t,
            left: v,
            right: v,
        });
        prev_t = t;
    }
    PiecewiseLinearPath::new(bps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cl(c: f64, lambda: f64, mean: f64) -> CramerLundberg {
        CramerLundberg::new(c, lambda, mean).unwrap()
    }

    #[test]
    fn no_claims_gives_single_segment() {
        let p = generate_cramer_lundberg(&cl(1.0, 0.0, 1.0), 0.0, 5.0, RngStream::new(1, 0)).unwrap();
        assert_eq!(
            p.breakpoints(),
            &[
                Breakpoint { t: 0.0, left: 0.0, right: 0.0 },
                Breakpoint { t: 5.0, left: 5.0, right: 5.0 },
            ]
        );
    }

    #[test]
    fn same_stream_same_path() {
        let m = cl(2.0, 1.0, 1.0);
        let a = generate_cramer_lundberg(&m, 3.0, 50.0, RngStream::new(42, 0)).unwrap();
        let b = generate_cramer_lundberg(&m, 3.0, 50.0, RngStream::new(42, 0)).unwrap();
        let c = generate_cramer_lundberg(&m, 3.0, 50.0, RngStream::new(42, 1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn stopped_path_is_prefix() {
        let m = cl(2.0, 1.0, 1.0);
        let full = generate_cramer_lundberg(&m, 1.0, 80.0, RngStream::new(9, 4)).unwrap();
        let cut = generate_cramer_lundberg_until(&m, 1.0, 80.0, RngStream::new(9, 4), |_, max| {
            max > 10.0
        })
        .unwrap();
        let n = cut.breakpoints().len();
        assert!(n < full.breakpoints().len());
        assert_eq!(cut.breakpoints(), &full.breakpoints()[..n]);
        assert!(cut.running_max(cut.horizon()).unwrap() > 10.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(CramerLundberg::new(f64::NAN, 1.0, 1.0).is_err());
        assert!(CramerLundberg::new(1.0, -1.0, 1.0).is_err());
        assert!(BrownianWithDrift::new(1.0, 0.0).is_err());
        let bm = BrownianWithDrift::new(0.0, 1.0).unwrap();
        assert!(generate_brownian_drift(&bm, 0.0, 1.0, 1.0, RngStream::new(0, 0)).is_err());
        assert!(generate_brownian_drift(&bm, 0.0, 1.0, 0.0, RngStream::new(0, 0)).is_err());
        assert!(generate_cramer_lundberg(&cl(1.0, 1.0, 1.0), 0.0, 0.0, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn brownian_starts_at_x() {
        let bm = BrownianWithDrift::new(0.3, 2.0).unwrap();
        for seed in 0..20 {
            let p = generate_brownian_drift(&bm, 4.25, 1.0, 0.01, RngStream::new(seed, 0)).unwrap();
            assert_eq!(p.value_at(0.0).unwrap(), 4.25);
            assert_eq!(p.horizon(), 1.0);
        }
    }

    #[test]
    fn path_invariants_enforced() {
        let up = vec![
            Breakpoint { t: 0.0, left: 0.0, right: 0.0 },
            Breakpoint { t: 1.0, left: 1.0, right: 2.0 },
        ];
        assert!(PiecewiseLinearPath::new(up).is_err());
        let unordered = vec![
            Breakpoint { t: 0.0, left: 0.0, right: 0.0 },
            Breakpoint { t: 1.0, left: 1.0, right: 1.0 },
            Breakpoint { t: 1.0, left: 1.0, right: 1.0 },
        ];
        assert!(PiecewiseLinearPath::new(unordered).is_err());
        let bad_start = vec![
            Breakpoint { t: 0.0, left: 1.0, right: 0.0 },
            Breakpoint { t: 1.0, left: 1.0, right: 1.0 },
        ];
        assert!(PiecewiseLinearPath::new(bad_start).is_err());
    }

    #[test]
    fn running_max_examples() {
        let p = PiecewiseLinearPath::linear(0.0, 4.0, 4.0).unwrap();
        for t in [0.0, 0.5, 1.7, 4.0] {
            assert_eq!(p.running_max(t).unwrap(), p.value_at(t).unwrap());
        }
        // Up to (1, 5), jump to 2, then flat.
        let p = PiecewiseLinearPath::new(vec![
            Breakpoint { t: 0.0, left: 0.0, right: 0.0 },
            Breakpoint { t: 1.0, left: 5.0, right: 2.0 },
            Breakpoint { t: 3.0, left: 2.0, right: 2.0 },
        ])
        .unwrap();
        assert_eq!(p.running_max(2.0).unwrap(), 5.0);
        assert_eq!(p.value_at(1.0).unwrap(), 2.0);
        assert_eq!(p.left_limit_at(1.0).unwrap(), 5.0);
        assert_eq!(p.value_at(0.5).unwrap(), 2.5);
        assert!(p.running_max(3.5).is_err());
        assert!(p.value_at(-0.1).is_err());
    }

    #[test]
    fn passage_examples() {
        let p = PiecewiseLinearPath::linear(0.0, 10.0, 10.0).unwrap();
        assert_eq!(p.first_passage(3.0, Direction::Up), Extended::Finite(3.0));
        assert_eq!(p.first_passage(-1.0, Direction::Up), Extended::Finite(0.0));
        assert_eq!(p.first_passage(0.0, Direction::Up), Extended::Finite(0.0));
        assert_eq!(p.first_passage(10.0, Direction::Up), Extended::Infinite);
        assert_eq!(p.first_passage(0.0, Direction::Down), Extended::Infinite);
        assert_eq!(p.first_passage(1.0, Direction::Down), Extended::Finite(0.0));

        let p = PiecewiseLinearPath::new(vec![
            Breakpoint { t: 0.0, left: 1.0, right: 1.0 },
            Breakpoint { t: 2.0, left: 3.0, right: -1.0 },
            Breakpoint { t: 4.0, left: 1.0, right: 1.0 },
        ])
        .unwrap();
        // Jump through zero: passage is the jump time itself.
        assert_eq!(p.first_passage(0.0, Direction::Down), Extended::Finite(2.0));
    }

    #[test]
    fn laplace_exponent_basics() {
        let m = LevyModel::CramerLundberg(cl(2.0, 1.0, 1.0));
        assert_eq!(m.laplace_exponent(0.0), 0.0);
        assert!((m.mean_drift() - 1.0).abs() < 1e-15);
        let b = LevyModel::BrownianWithDrift(BrownianWithDrift::new(-0.5, 2.0).unwrap());
        assert_eq!(b.laplace_exponent(0.0), 0.0);
        for model in [m, b] {
            // Convexity on a grid.
            let h = 0.01;
            for k in 1..500 {
                let th = k as f64 * h;
                let second = model.laplace_exponent(th + h) - 2.0 * model.laplace_exponent(th)
                    + model.laplace_exponent(th - h);
                assert!(second >= -1e-12, "psi not convex at {th}");
            }
        }
    }

    #[test]
    fn csv_header_and_format() {
        let p = PiecewiseLinearPath::linear(0.0, 0.1, 1.0).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,left,right");
        assert_eq!(
            lines[2],
            "1.0000000000000000e0,1.0000000000000001e-1,1.0000000000000001e-1"
        );
        assert!(!text.contains('\r'));
        let back = PiecewiseLinearPath::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, p);
        assert!(PiecewiseLinearPath::read_csv("a,b,c\n0,0,0\n".as_bytes()).is_err());
    }
}
