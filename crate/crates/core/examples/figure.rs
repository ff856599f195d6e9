//! Renders the threshold-rate figure for both starting points into a
//! directory (first argument, default a temporary directory).

use std::path::{Path, PathBuf};

use taxrisk::cli::{figure_paths, render_svg};

pub fn run_example() -> taxrisk::Result<()> {
    render_into(&std::env::temp_dir().join("taxrisk-figure"))
}

pub fn render_into(dir: &Path) -> taxrisk::Result<()> {
    std::fs::create_dir_all(dir)?;
    for variant in [1, 2] {
        let (taxed, report) = figure_paths(variant, 7)?;
        let file = dir.join(format!("figure_{variant}.svg"));
        std::fs::write(&file, render_svg(&taxed, &[report.b, report.b_prime]))?;
        println!(
            "variant {variant}: b = {}, b' = {}, passages {} / {}, svg {}",
            report.b,
            report.b_prime,
            report.passage_pre_tax,
            report.passage_taxed,
            file.display()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> taxrisk::Result<()> {
    match std::env::args().nth(1) {
        Some(dir) => render_into(&PathBuf::from(dir)),
        None => run_example(),
    }
}
