//! The `taxrisk` command line.
//!
//! Every command reads a JSON [`RunConfig`]; `--seed` and `--out` override
//! the corresponding keys. Exit codes: `0` success, `2` invalid
//! configuration, `3` rate refused by the ODE admissibility rules, `1` for
//! I/O failures.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::calculus::{gamma_bar, latent_to_natural, natural_to_latent, solve_rate_ode};
use crate::error::Error;
use crate::extended::Extended;
use crate::monte_carlo::{estimate_exit_transform, McConfig, McEstimate};
use crate::path::{CramerLundberg, Direction, LevyModel, PiecewiseLinearPath, RngStream};
use crate::rate::{RateFunction, RateSpec};
use crate::scale::{exit_transform, phi_zero, scale_function, survival_probability, AnalyticRecord, ExitProblemSpec, SurvivalBranch};
use crate::taxation::{RegimeKind, TaxScheme, TaxedPath};

#[derive(Debug, Parser)]
#[command(name = "taxrisk", version, about = "Loss-carry-forward tax processes on risk models")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a path and its taxed process; writes path.csv, taxed.csv and markers.json.
    Simulate,
    /// Convert a rate between the latent and natural regimes.
    Convert,
    /// Two-sided exit transform, analytic and optionally Monte Carlo.
    Exit,
    /// Survival probabilities with and without tax.
    Identity,
    /// Reproduce the threshold-rate figure with its marker levels.
    Figure {
        /// 1: start at 7, 2: start at 10.
        #[arg(long)]
        variant: Option<u8>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvertDirection {
    LatentToNatural,
    NaturalToLatent,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<LevyModel>,
    pub rate: Option<RateFunction>,
    pub x: Option<f64>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub a: Option<f64>,
    pub q: Option<f64>,
    pub n_paths: Option<usize>,
    pub step: Option<f64>,
    pub out: Option<PathBuf>,
    /// Which maximum the rate reads in `simulate`; latent by default.
    pub regime: Option<RegimeKind>,
    pub direction: Option<ConvertDirection>,
    pub preset: Option<String>,
    pub variant: Option<u8>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Refused(String),
    Io(String),
    Failed(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Refused(_) => 3,
            CliError::Io(_) | CliError::Failed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Refused(m) => write!(f, "rate refused: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Failed(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NotCertified(_) | Error::Unrepresentable(_) => CliError::Refused(e.to_string()),
            Error::Io(_) | Error::Csv(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn require<T: Clone>(value: &Option<T>, key: &str) -> CliResult<T> {
    value
        .clone()
        .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
}

pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

struct Context {
    config: RunConfig,
    out: PathBuf,
    /// An output directory was requested on the command line or in the config.
    persist: bool,
    seed: u64,
}

impl Context {
    /// Start level: `x` if given, else the rate's domain start.
    fn start(&self, rate: &RateFunction) -> CliResult<f64> {
        let x = self.config.x.unwrap_or(rate.domain_start());
        if x != rate.domain_start() {
            return Err(CliError::Config(format!(
                "x = {x} differs from the rate's domain_start = {}",
                rate.domain_start()
            )));
        }
        Ok(x)
    }

    fn write_file(&self, name: &str, contents: &[u8]) -> CliResult<()> {
        fs::create_dir_all(&self.out)?;
        fs::write(self.out.join(name), contents)?;
        Ok(())
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

/// Parses the process arguments and runs the selected command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::parse_from(args);
    let mut stdout = std::io::stdout().lock();
    match run(cli, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("taxrisk: {e}");
            ExitCode::from(e.code())
        }
    }
}

pub fn run<W: Write>(cli: Cli, stdout: &mut W) -> CliResult<()> {
    let config = load_config(cli.config.as_deref())?;
    let requested = cli.out.clone().or_else(|| config.out.clone());
    let persist = requested.is_some();
    let out = requested.unwrap_or_else(|| PathBuf::from("."));
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let ctx = Context {
        config,
        out,
        persist,
        seed,
    };
    let text = match cli.command {
        Command::Simulate => cmd_simulate(&ctx)?,
        Command::Convert => cmd_convert(&ctx)?,
        Command::Exit => cmd_exit(&ctx)?,
        Command::Identity => cmd_identity(&ctx)?,
        Command::Figure { variant } => cmd_figure(&ctx, variant)?,
    };
    stdout.write_all(text.as_bytes())?;
    Ok(())
}

fn uniform_grid(horizon: f64, step: f64) -> CliResult<Vec<f64>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(CliError::Config(format!("step must be > 0, got {step}")));
    }
    let n = (horizon / step).floor() as usize;
    Ok((0..=n).map(|k| k as f64 * step).collect())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> crate::error::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// A threshold of the rate together with its image in the other regime and
/// the two passage times, which coincide.
#[derive(Debug, Clone, Serialize)]
struct Marker {
    level: f64,
    image: Extended,
    passage: Extended,
    image_passage: Extended,
}

#[derive(Debug, Clone, Serialize)]
struct Markers {
    regime: RegimeKind,
    x: f64,
    horizon: f64,
    seed: u64,
    ceiling: Extended,
    thresholds: Vec<Marker>,
}

fn rate_thresholds(rate: &RateFunction) -> Vec<f64> {
    let x = rate.domain_start();
    match rate.spec() {
        RateSpec::Constant(_) => Vec::new(),
        RateSpec::Piecewise { thresholds, .. } => thresholds.clone(),
        RateSpec::Tabulated { knots, .. } => knots.iter().map(|k| k.0).filter(|&l| l > x).collect(),
    }
}

fn markers_for(scheme: &TaxScheme, taxed: &TaxedPath, seed: u64) -> CliResult<Markers> {
    let rate = scheme.regime().rate.clone();
    let mut thresholds = Vec::new();
    for level in rate_thresholds(&rate) {
        let (image, passage, image_passage) = match scheme.regime().kind {
            // A latent threshold sits on the pre-tax maximum.
            RegimeKind::Latent => {
                let image = scheme.level_map(level)?;
                (
                    Extended::Finite(image),
                    taxed.pre_tax().first_passage(level, Direction::Up),
                    taxed.first_passage(image, Direction::Up)?,
                )
            }
            RegimeKind::Natural => {
                let image = scheme.level_inverse(level)?;
                let pre = match image {
                    Extended::Finite(s) => taxed.pre_tax().first_passage(s, Direction::Up),
                    Extended::Infinite => Extended::Infinite,
                };
                (image, taxed.first_passage(level, Direction::Up)?, pre)
            }
        };
        thresholds.push(Marker {
            level,
            image,
            passage,
            image_passage,
        });
    }
    Ok(Markers {
        regime: scheme.regime().kind,
        x: scheme.start(),
        horizon: taxed.horizon(),
        seed,
        ceiling: scheme.ceiling(),
        thresholds,
    })
}

fn cmd_simulate(ctx: &Context) -> CliResult<String> {
    let c = &ctx.config;
    let model = require(&c.model, "model")?;
    let rate = require(&c.rate, "rate")?;
    let horizon = require(&c.horizon, "horizon")?;
    let x = ctx.start(&rate)?;
    let step = c.step.unwrap_or(horizon / 1000.0);
    let scheme = match c.regime.unwrap_or(RegimeKind::Latent) {
        RegimeKind::Latent => TaxScheme::latent(&rate)?,
        RegimeKind::Natural => TaxScheme::natural(&rate)?,
    };
    let path = model.generate(x, horizon, step, RngStream::new(ctx.seed, 0))?;
    let taxed = scheme.apply(path)?;
    let grid = uniform_grid(horizon, step)?;
    ctx.write_file("path.csv", &csv_bytes(|w| taxed.pre_tax().write_csv(w))?)?;
    ctx.write_file("taxed.csv", &csv_bytes(|w| taxed.write_csv(w, &grid))?)?;
    let markers = markers_for(&scheme, &taxed, ctx.seed)?;
    let json = to_json(&markers);
    ctx.write_file("markers.json", json.as_bytes())?;
    Ok(json)
}

#[derive(Debug, Serialize)]
struct ConvertOutput {
    direction: ConvertDirection,
    x: f64,
    input: RateFunction,
    output: RateFunction,
    /// `gamma_bar(inf)` or `y(inf)`.
    limit: Extended,
}

fn cmd_convert(ctx: &Context) -> CliResult<String> {
    let c = &ctx.config;
    let rate = require(&c.rate, "rate")?;
    let direction = require(&c.direction, "direction")?;
    let x = ctx.start(&rate)?;
    let (output, limit) = match direction {
        ConvertDirection::LatentToNatural => (latent_to_natural(&rate, x)?, gamma_bar(&rate, x)?.limit()),
        ConvertDirection::NaturalToLatent => (natural_to_latent(&rate, x)?, solve_rate_ode(&rate, x)?.horizon()),
    };
    let json = to_json(&ConvertOutput {
        direction,
        x,
        input: rate,
        output,
        limit,
    });
    if ctx.persist {
        ctx.write_file("convert.json", json.as_bytes())?;
    }
    Ok(json)
}

#[derive(Debug, Serialize)]
struct ExitOutput {
    analytic: AnalyticRecord,
    degenerate: bool,
    monte_carlo: Option<McEstimate>,
}

fn cmd_exit(ctx: &Context) -> CliResult<String> {
    let c = &ctx.config;
    let model = require(&c.model, "model")?;
    let rate = require(&c.rate, "rate")?;
    let a = require(&c.a, "a")?;
    let q = c.q.unwrap_or(0.0);
    let x = ctx.start(&rate)?;
    let problem = ExitProblemSpec::new(x, a, q, rate.clone())?;
    let scale = scale_function(model, q)?;
    let result = exit_transform(&problem, &scale)?;
    let monte_carlo = match c.n_paths {
        Some(n) => {
            let mut cfg = McConfig::new(n, require(&c.horizon, "horizon")?, ctx.seed);
            if let Some(step) = c.step {
                cfg.step = step;
            }
            Some(estimate_exit_transform(&model, &problem, &cfg)?)
        }
        None => None,
    };
    let json = to_json(&ExitOutput {
        analytic: AnalyticRecord {
            model,
            q,
            x,
            a: Extended::Finite(a),
            rate,
            value: result.value,
            tolerance: result.tolerance,
        },
        degenerate: result.degenerate,
        monte_carlo,
    });
    if ctx.persist {
        ctx.write_file("exit.json", json.as_bytes())?;
    }
    Ok(json)
}

#[derive(Debug, Serialize)]
struct IdentityOutput {
    x: f64,
    phi_delta: f64,
    phi_0: f64,
    /// `ln phi_delta / ln phi_0`; `null` when `phi_0 = 1`.
    ratio_check: Option<f64>,
    branch: SurvivalBranch,
    tolerance: f64,
}

fn cmd_identity(ctx: &Context) -> CliResult<String> {
    let c = &ctx.config;
    let model = require(&c.model, "model")?;
    let rate = require(&c.rate, "rate")?;
    let x = ctx.start(&rate)?;
    if model.mean_drift() <= 0.0 {
        return Err(CliError::Config(format!(
            "model drift {} is not positive; survival is 0 with or without tax",
            model.mean_drift()
        )));
    }
    let phi = survival_probability(model, x, &rate)?;
    let phi_0 = phi_zero(model, x)?;
    let ratio_check = (phi_0 < 1.0).then(|| phi.value.ln() / phi_0.ln());
    let json = to_json(&IdentityOutput {
        x,
        phi_delta: phi.value,
        phi_0,
        ratio_check,
        branch: phi.branch,
        tolerance: phi.tolerance,
    });
    if ctx.persist {
        ctx.write_file("identity.json", json.as_bytes())?;
    }
    Ok(json)
}

pub const FIGURE_THRESHOLD: f64 = 20.0;
pub const FIGURE_ALPHA: f64 = 0.4;
pub const FIGURE_BETA: f64 = 0.9;
pub const FIGURE_HORIZON: f64 = 40.0;

/// The illustrative Cramér–Lundberg model behind the figure.
pub fn figure_model() -> CramerLundberg {
    CramerLundberg {
        premium_rate: 2.0,
        claim_intensity: 1.0,
        claim_mean: 1.0,
    }
}

pub fn figure_start(variant: u8) -> Option<f64> {
    match variant {
        1 => Some(7.0),
        2 => Some(10.0),
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FigureReport {
    pub variant: u8,
    pub seed: u64,
    pub x: f64,
    pub b: f64,
    pub b_prime: f64,
    pub passage_pre_tax: Extended,
    pub passage_taxed: Extended,
    pub passages_equal: bool,
}

/// Builds the figure path, its latent taxed path and the passage report.
pub fn figure_paths(variant: u8, seed: u64) -> crate::error::Result<(TaxedPath, FigureReport)> {
    let x = figure_start(variant)
        .ok_or_else(|| Error::InvalidParameter(format!("figure variant must be 1 or 2, got {variant}")))?;
    let gamma = RateFunction::threshold(x, FIGURE_THRESHOLD, FIGURE_ALPHA, FIGURE_BETA)?;
    let delta = latent_to_natural(&gamma, x)?;
    let b_prime = match delta.spec() {
        RateSpec::Piecewise { thresholds, .. } => thresholds[0],
        other => return Err(Error::InvalidRate(format!("unexpected converted rate {other:?}"))),
    };
    let path = crate::path::generate_cramer_lundberg(&figure_model(), x, FIGURE_HORIZON, RngStream::new(seed, 0))?;
    let taxed = TaxScheme::latent(&gamma)?.apply(path)?;
    let passage_pre_tax = taxed.pre_tax().first_passage(FIGURE_THRESHOLD, Direction::Up);
    let passage_taxed = taxed.first_passage(b_prime, Direction::Up)?;
    let report = FigureReport {
        variant,
        seed,
        x,
        b: FIGURE_THRESHOLD,
        b_prime,
        passage_pre_tax,
        passage_taxed,
        passages_equal: passage_pre_tax == passage_taxed,
    };
    Ok((taxed, report))
}

fn cmd_figure(ctx: &Context, variant: Option<u8>) -> CliResult<String> {
    let c = &ctx.config;
    if let Some(preset) = &c.preset {
        if preset != "figureA" {
            return Err(CliError::Config(format!("unknown preset {preset:?}; expected \"figureA\"")));
        }
    }
    let variant = variant.or(c.variant).unwrap_or(1);
    let (taxed, report) = figure_paths(variant, ctx.seed)?;
    let grid = uniform_grid(FIGURE_HORIZON, c.step.unwrap_or(0.05))?;
    ctx.write_file("figure_path.csv", &csv_bytes(|w| taxed.pre_tax().write_csv(w))?)?;
    ctx.write_file("figure_taxed.csv", &csv_bytes(|w| taxed.write_csv(w, &grid))?)?;
    ctx.write_file("figure.svg", render_svg(&taxed, &[report.b, report.b_prime]).as_bytes())?;
    let json = to_json(&report);
    ctx.write_file("markers.json", json.as_bytes())?;
    if !report.passages_equal {
        return Err(CliError::Failed(format!(
            "passage over b = {} at {} but taxed passage over b' = {} at {}",
            report.b, report.passage_pre_tax, report.b_prime, report.passage_taxed
        )));
    }
    Ok(json)
}

/// Pre-tax (dashed) and taxed path as SVG polylines with horizontal markers.
pub fn render_svg(taxed: &TaxedPath, markers: &[f64]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 400.0;
    const PAD: f64 = 40.0;
    let path: &PiecewiseLinearPath = taxed.pre_tax();
    let mut pre = Vec::new();
    let mut post = Vec::new();
    for (i, b) in path.breakpoints().iter().enumerate() {
        if i > 0 {
            pre.push((b.t, b.left));
            post.push((b.t, taxed.left_limit_at(b.t).unwrap_or(f64::NAN)));
        }
        pre.push((b.t, b.right));
        post.push((b.t, taxed.value_at(b.t).unwrap_or(f64::NAN)));
    }
    let values = pre.iter().chain(&post).map(|p| p.1).chain(markers.iter().copied());
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let span = (hi - lo).max(1e-9);
    let horizon = path.horizon();
    let sx = |t: f64| PAD + (W - 2.0 * PAD) * t / horizon;
    let sy = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / span;
    let points = |pts: &[(f64, f64)]| {
        let mut s = String::new();
        for (t, v) in pts {
            let _ = write!(s, "{:.3},{:.3} ", sx(*t), sy(*v));
        }
        s.trim_end().to_string()
    };
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    for m in markers {
        let y = sy(*m);
        let _ = writeln!(
            svg,
            r##"<line x1="{PAD}" y1="{y:.3}" x2="{:.3}" y2="{y:.3}" stroke="#888" stroke-width="1"/>"##,
            W - PAD
        );
        let _ = writeln!(svg, r#"<text x="4" y="{:.3}" font-size="12">{m}</text>"#, y + 4.0);
    }
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="black" stroke-dasharray="5,4" points="{}"/>"#,
        points(&pre)
    );
    let _ = writeln!(svg, r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#, points(&post));
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"x": 1.0, "bogus": 2}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::NotCertified("x".into())).code(), 3);
        assert_eq!(CliError::from(Error::InvalidParameter("x".into())).code(), 2);
        assert_eq!(require::<f64>(&None, "model").unwrap_err().code(), 2);
    }

    #[test]
    fn figure_markers() {
        for (variant, b_prime) in [(1, 14.8), (2, 16.0)] {
            let (_, report) = figure_paths(variant, 5).unwrap();
            assert!((report.b_prime - b_prime).abs() < 1e-12);
            assert!(report.passages_equal);
        }
        assert!(figure_paths(3, 0).is_err());
    }
}
