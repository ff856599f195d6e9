//! Loss-carry-forward taxation of spectrally negative risk processes.
//!
//! Tax is paid only while the capital sits at a running maximum. Under a
//! *latent* rate the fraction paid depends on the pre-tax maximum; under a
//! *natural* rate it depends on the taxed process's own maximum, which makes
//! the taxed process the solution of an integral equation. The two regimes
//! are equivalent: each natural rate has a latent counterpart and vice versa,
//! related through a monotone change of level (see [`calculus`]).
//!
//! The crate is organized as
//!
//! - [`path`]: exact piecewise-linear sample paths with downward jumps and
//!   generators for the Cramér–Lundberg and Brownian models,
//! - [`rate`] and [`calculus`]: tax-rate functions and the conversion maps,
//! - [`taxation`]: taxed paths by closed form and by two discretized oracles,
//! - [`scale`]: q-scale functions, the two-sided exit transform and survival
//!   probabilities with tax,
//! - [`monte_carlo`]: simulation estimates used to cross-check [`scale`],
//! - [`cli`]: the `taxrisk` command-line front end.

pub mod calculus;
pub mod cli;
pub mod error;
pub mod extended;
pub mod monte_carlo;
pub mod ode;
pub mod path;
pub mod quadrature;
pub mod rate;
pub mod scale;
pub mod taxation;

pub use calculus::{
    gamma_bar, kappa_to_delta, latent_to_natural, natural_to_latent, solve_rate_ode,
    GammaBarMap, RateOdeSolution,
};
pub use error::{Error, Result};
pub use extended::Extended;
pub use path::{
    BrownianWithDrift, CramerLundberg, Direction, LevyModel, PiecewiseLinearPath, RngStream,
};
pub use rate::{Admissibility, Interpolation, KappaRate, RateFunction, RateSpec};
