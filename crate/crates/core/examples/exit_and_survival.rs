//! Scale functions, the two-sided exit transform with tax, and the tax
//! identity for survival probabilities.

use taxrisk::scale::{exit_transform, phi_zero, scale_function, survival_probability, ExitProblemSpec};
use taxrisk::{CramerLundberg, LevyModel, RateFunction};

pub fn run_example() -> taxrisk::Result<()> {
    let model = LevyModel::CramerLundberg(CramerLundberg::new(2.0, 1.0, 1.0)?);
    let w = scale_function(model, 0.0)?;
    println!("W(0) = {}, W(5) = {:.10}, W(15) = {:.10}", w.w(0.0), w.w(5.0), w.w(15.0));

    let untaxed = ExitProblemSpec::new(5.0, 15.0, 0.0, RateFunction::constant(5.0, 0.0)?)?;
    println!(
        "no tax:    exit = {:.12}, W(5)/W(15) = {:.12}",
        exit_transform(&untaxed, &w)?.value,
        w.w(5.0) / w.w(15.0)
    );

    let taxed = ExitProblemSpec::new(5.0, 15.0, 0.0, RateFunction::threshold(5.0, 10.0, 0.2, 0.5)?)?;
    println!("threshold: exit = {:.12}", exit_transform(&taxed, &w)?.value);

    let discounted = scale_function(model, 0.05)?;
    let spec = ExitProblemSpec::new(5.0, 15.0, 0.05, RateFunction::threshold(5.0, 10.0, 0.2, 0.5)?)?;
    println!("q = 0.05:  exit = {:.12}", exit_transform(&spec, &discounted)?.value);

    for c in [0.25, 0.5] {
        let x = 5.0;
        let phi = survival_probability(model, x, &RateFunction::constant(x, c)?)?;
        let phi0 = phi_zero(model, x)?;
        println!(
            "delta = {c}: phi = {:.12}, phi_0^(1/(1-delta)) = {:.12}",
            phi.value,
            phi0.powf(1.0 / (1.0 - c))
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> taxrisk::Result<()> {
    run_example()
}
