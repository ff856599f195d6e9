//! Latent and natural taxation of one Cramér–Lundberg path.

use taxrisk::taxation::{apply_latent_tax, apply_natural_tax, check_max_time_equality};
use taxrisk::{latent_to_natural, CramerLundberg, Direction, RateFunction, RngStream};

pub fn run_example() -> taxrisk::Result<()> {
    let model = CramerLundberg::new(2.0, 1.0, 1.0)?;
    let path = taxrisk::path::generate_cramer_lundberg(&model, 7.0, 40.0, RngStream::new(2024, 0))?;
    let gamma = RateFunction::threshold(7.0, 20.0, 0.4, 0.9)?;
    let delta = latent_to_natural(&gamma, 7.0)?;

    let latent = apply_latent_tax(path.clone(), &gamma)?;
    let natural = apply_natural_tax(path, &delta)?;

    let mut worst: f64 = 0.0;
    for b in latent.pre_tax().breakpoints() {
        worst = worst.max((latent.value_at(b.t)? - natural.value_at(b.t)?).abs());
    }
    println!("claims: {}", latent.pre_tax().breakpoints().len() - 2);
    println!("max |U - V| over breakpoints: {worst:.3e}");
    println!("tax paid by t = 40: {:.6}", latent.total_tax(40.0)?);
    println!(
        "X above 20 at {}, taxed above 14.8 at {}",
        latent.pre_tax().first_passage(20.0, Direction::Up),
        natural.first_passage(14.8, Direction::Up)?
    );

    let times: Vec<f64> = (0..4000).map(|k| k as f64 * 0.01).collect();
    let report = check_max_time_equality(&latent, &times)?;
    println!(
        "max-time check: {} samples, {} violations",
        report.samples,
        report.violations.len()
    );

    let mut csv = Vec::new();
    latent.write_csv(&mut csv, &[10.0, 20.0, 30.0])?;
    let text = String::from_utf8_lossy(&csv);
    for line in text.lines().take(3) {
        println!("{line}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> taxrisk::Result<()> {
    run_example()
}
