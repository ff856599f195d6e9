//! Converting a threshold rate between the latent and natural regimes.
//!
//! A latent rate `alpha` below `b` and `beta` above it taxes exactly like a
//! natural rate with the same two values and threshold `(1 - alpha) b + alpha x`.

use taxrisk::{gamma_bar, kappa_to_delta, latent_to_natural, natural_to_latent, solve_rate_ode};
use taxrisk::{Admissibility, KappaRate, RateFunction, RateSpec};

fn threshold_of(rate: &RateFunction) -> f64 {
    match rate.spec() {
        RateSpec::Piecewise { thresholds, .. } => thresholds[0],
        _ => f64::NAN,
    }
}

pub fn run_example() -> taxrisk::Result<()> {
    for x in [7.0, 10.0] {
        let gamma = RateFunction::threshold(x, 20.0, 0.4, 0.9)?;
        let delta = latent_to_natural(&gamma, x)?;
        let back = natural_to_latent(&delta, x)?;
        println!(
            "x = {x:>4}: latent threshold 20 -> natural {} -> latent {}",
            threshold_of(&delta),
            threshold_of(&back)
        );
    }

    let gamma = RateFunction::threshold(7.0, 20.0, 0.4, 0.9)?;
    let map = gamma_bar(&gamma, 7.0)?;
    println!("gamma_bar(20) = {}, inverse(14.8) = {}", map.forward(20.0)?, map.inverse(14.8)?);

    let delta = latent_to_natural(&gamma, 7.0)?;
    let y = solve_rate_ode(&delta, 7.0)?;
    for t in [0.0, 13.0, 20.0] {
        println!("y({t}) = {}", y.eval(t)?);
    }

    let kappa = KappaRate::new(
        0.0,
        RateSpec::Piecewise {
            thresholds: vec![5.0],
            values: vec![1.0, 3.0],
        },
        Admissibility::Monotone,
    )?;
    let from_kappa = kappa_to_delta(&kappa)?;
    println!("kappa (1, 3) -> delta {:?}", from_kappa.spec());
    Ok(())
}

#[allow(dead_code)]
fn main() -> taxrisk::Result<()> {
    run_example()
}
