//! The discretized oracles converge to the closed-form taxed paths at first
//! order in the grid step.

use taxrisk::taxation::{apply_latent_tax, apply_natural_tax, euler_fixed_point_oracle, stieltjes_oracle, TaxedPath};
use taxrisk::{Admissibility, CramerLundberg, Interpolation, RateFunction, RateSpec, RngStream};

fn max_gap(a: &TaxedPath, b: &TaxedPath, times: &[f64]) -> taxrisk::Result<f64> {
    let mut m: f64 = 0.0;
    for &t in times {
        m = m.max((a.value_at(t)? - b.value_at(t)?).abs());
    }
    Ok(m)
}

pub fn run_example() -> taxrisk::Result<()> {
    let x = 3.0;
    let rate = RateFunction::new(
        x,
        RateSpec::Tabulated {
            knots: vec![(x, 0.1), (30.0, 0.6)],
            interpolation: Interpolation::Linear,
        },
        Admissibility::Monotone,
    )?;
    let model = CramerLundberg::new(2.0, 1.0, 1.0)?;
    let path = taxrisk::path::generate_cramer_lundberg(&model, x, 30.0, RngStream::new(1, 0))?;
    let latent = apply_latent_tax(path.clone(), &rate)?;
    let natural = apply_natural_tax(path.clone(), &rate)?;
    let times: Vec<f64> = (0..=3000).map(|k| k as f64 * 0.01).collect();

    println!("{:>8} {:>12} {:>12}", "step", "stieltjes", "euler");
    for step in [0.04, 0.02, 0.01, 0.005] {
        let s = stieltjes_oracle(&path, &rate, step)?;
        let e = euler_fixed_point_oracle(&path, &rate, step)?;
        println!(
            "{step:>8} {:>12.3e} {:>12.3e}",
            max_gap(&s, &latent, &times)?,
            max_gap(&e, &natural, &times)?
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> taxrisk::Result<()> {
    run_example()
}
