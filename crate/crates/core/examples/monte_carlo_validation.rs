//! Monte Carlo estimates next to their closed forms.

use taxrisk::monte_carlo::{estimate_exit_transform, estimate_survival, McConfig};
use taxrisk::scale::{exit_transform, scale_function, survival_probability, ExitProblemSpec};
use taxrisk::{CramerLundberg, LevyModel, RateFunction};

pub fn run_example() -> taxrisk::Result<()> {
    let model = LevyModel::CramerLundberg(CramerLundberg::new(2.0, 1.0, 1.0)?);
    let problem = ExitProblemSpec::new(5.0, 15.0, 0.0, RateFunction::threshold(5.0, 10.0, 0.2, 0.5)?)?;
    let analytic = exit_transform(&problem, &scale_function(model, 0.0)?)?.value;
    let mc = estimate_exit_transform(&model, &problem, &McConfig::new(5_000, 500.0, 11))?;
    println!(
        "exit:     analytic {analytic:.6}, MC {:.6} +/- {:.6} (bias <= {:.1e})",
        mc.value, mc.std_error, mc.truncation_bias
    );

    let rate = RateFunction::constant(2.0, 0.5)?;
    let analytic = survival_probability(model, 2.0, &rate)?.value;
    let mc = estimate_survival(&model, 2.0, &rate, &McConfig::new(5_000, 200.0, 12))?;
    println!(
        "survival: analytic {analytic:.6}, MC {:.6} +/- {:.6} (bias <= {:.1e})",
        mc.value, mc.std_error, mc.truncation_bias
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> taxrisk::Result<()> {
    run_example()
}
