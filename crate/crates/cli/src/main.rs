use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use sbl_core::adversary::{greedy_adversary, AdversaryConfig};
use sbl_core::construction::{verify_construction, Color, ColorSeq, FamilySpec};
use sbl_core::experiment::{
    fit_slopes, parse_config, read_rows, render_svg, run_sweep, write_rows, SweepConfig,
    SweepPolicy,
};
use sbl_core::holder::certify_holder;
use sbl_core::reward::{RewardCurve, SinusoidalParams};
use sbl_core::sim::clean_event_frequency;
use sbl_core::Error;

#[derive(Parser)]
#[command(
    name = "sbl",
    version,
    about = "Smooth non-stationary bandit experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Regret sweep over horizons on random sinusoidal instances (CSV).
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write a log-log SVG scatter.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Log-log slope per policy from a sweep CSV (JSON).
    Slope {
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy adaptive adversary over the bowl/red family (JSON).
    Adversary {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Samples a family curve (CSV) and verifies its bump (JSON).
    Construct {
        config: Option<PathBuf>,
        #[arg(long)]
        beta: Option<u32>,
        #[arg(long = "T")]
        horizon: Option<u64>,
        /// Epoch colors such as `rbbr`; missing trailing epochs are red.
        #[arg(long)]
        colors: Option<String>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Verification report destination (stdout when absent).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Finite-difference Hölder certification of a curve (JSON).
    Certify {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Clean-event violation frequency for a constant-mean stream (JSON).
    CleanScan {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn default_rollouts() -> u64 {
    64
}

#[derive(Deserialize)]
struct AdversaryFile {
    policy: SweepPolicy,
    beta: u32,
    #[serde(rename = "T")]
    horizon: u64,
    #[serde(default = "default_rollouts")]
    rollouts: u64,
    #[serde(default)]
    final_trials: Option<u64>,
    #[serde(default)]
    master_seed: u64,
}

fn default_resolution() -> usize {
    10_000
}

#[derive(Deserialize, Default)]
struct ConstructFile {
    beta: Option<u32>,
    #[serde(rename = "T")]
    horizon: Option<u64>,
    colors: Option<String>,
    resolution: Option<usize>,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum CurveKindFile {
    Constant,
    Sinusoidal,
    Family,
}

/// Flat curve description; which fields are required depends on `kind`.
#[derive(Deserialize)]
struct CurveFile {
    kind: CurveKindFile,
    value: Option<f64>,
    amplitude: Option<f64>,
    frequency: Option<f64>,
    #[serde(default)]
    phase: f64,
    beta: Option<u32>,
    #[serde(rename = "T")]
    horizon: Option<u64>,
    colors: Option<String>,
}

fn need<T>(value: Option<T>, kind: &str, field: &str) -> Result<T, Error> {
    value.ok_or_else(|| Error::Config(format!("curve of kind {kind} needs `{field}`")))
}

impl CurveFile {
    fn build(self) -> Result<RewardCurve, Error> {
        match self.kind {
            CurveKindFile::Constant => {
                RewardCurve::constant(need(self.value, "constant", "value")?)
            }
            CurveKindFile::Sinusoidal => RewardCurve::sinusoidal(SinusoidalParams::new(
                need(self.amplitude, "sinusoidal", "amplitude")?,
                need(self.frequency, "sinusoidal", "frequency")?,
                self.phase,
            )),
            CurveKindFile::Family => RewardCurve::family(family_spec(
                need(self.beta, "family", "beta")?,
                need(self.horizon, "family", "T")?,
                self.colors.as_deref().unwrap_or(""),
            )?),
        }
    }
}

fn default_grid() -> usize {
    10_000
}

#[derive(Deserialize)]
struct CertifyFile {
    curve: CurveFile,
    beta: u32,
    #[serde(rename = "L")]
    lipschitz: f64,
    #[serde(default = "default_grid")]
    grid_n: usize,
}

#[derive(Deserialize)]
struct CleanScanFile {
    #[serde(default)]
    mean: f64,
    #[serde(rename = "T")]
    horizon: usize,
    trials: u64,
    #[serde(default)]
    master_seed: u64,
}

#[derive(Serialize)]
struct ConstructOutput<'a> {
    beta: u32,
    #[serde(rename = "T")]
    horizon: u64,
    delta: f64,
    epochs: usize,
    colors: &'a ColorSeq,
    verification: sbl_core::construction::ConstructionReport,
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Opens the destination up front so an unwritable path fails before any work.
fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn write_json<T: Serialize>(value: &T, mut out: Box<dyn Write>) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(e.to_string()))?;
    writeln!(out, "{text}")?;
    out.flush()?;
    Ok(())
}

fn family_spec(beta: u32, horizon: u64, colors: &str) -> Result<FamilySpec, Error> {
    let prefix: ColorSeq = colors.parse()?;
    FamilySpec::with_prefix(beta, horizon, prefix.as_slice())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Sweep {
            config,
            out,
            seed,
            svg,
        } => {
            let mut cfg: SweepConfig = read_config(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            cfg.validate()?;
            let out_path = out.or_else(|| cfg.out.clone().map(PathBuf::from));
            let svg_path = svg.or_else(|| cfg.svg.clone().map(PathBuf::from));
            let sink = open_out(out_path.as_deref())?;
            let svg_sink = svg_path.as_deref().map(|p| open_out(Some(p))).transpose()?;
            let rows = run_sweep(&cfg)?;
            write_rows(&rows, sink)?;
            if let Some(mut s) = svg_sink {
                let fits = fit_slopes(&rows).unwrap_or_default();
                s.write_all(render_svg(&rows, &fits).as_bytes())?;
                s.flush()?;
            }
        }
        Command::Slope { csv, out } => {
            let file =
                File::open(&csv).map_err(|e| Error::Io(format!("{}: {e}", csv.display())))?;
            let rows = read_rows(file)?;
            let sink = open_out(out.as_deref())?;
            write_json(&fit_slopes(&rows)?, sink)?;
        }
        Command::Adversary { config, out, seed } => {
            let f: AdversaryFile = read_config(&config)?;
            let sink = open_out(out.as_deref())?;
            let adv = AdversaryConfig {
                beta: f.beta,
                horizon: f.horizon,
                rollouts: f.rollouts,
                final_trials: f.final_trials.unwrap_or(f.rollouts),
                master_seed: seed.unwrap_or(f.master_seed),
            };
            adv.validate()?;
            let policy = f.policy.resolve(f.horizon)?;
            write_json(&greedy_adversary(&policy, &adv)?, sink)?;
        }
        Command::Construct {
            config,
            beta,
            horizon,
            colors,
            resolution,
            out,
            report,
        } => {
            let file: ConstructFile = match config {
                Some(p) => read_config(&p)?,
                None => ConstructFile::default(),
            };
            let beta = beta
                .or(file.beta)
                .ok_or_else(|| Error::Config("missing beta".into()))?;
            let horizon = horizon
                .or(file.horizon)
                .ok_or_else(|| Error::Config("missing T".into()))?;
            let resolution = resolution
                .or(file.resolution)
                .unwrap_or_else(default_resolution);
            let spec = match colors.or(file.colors) {
                Some(c) => family_spec(beta, horizon, &c)?,
                None => {
                    let m = FamilySpec::epoch_count(beta, horizon)?;
                    FamilySpec::new(beta, horizon, ColorSeq::uniform(Color::Bowl, m)?)?
                }
            };
            let curve_sink = open_out(out.as_deref())?;
            let report_sink = open_out(report.as_deref())?;
            let verification = verify_construction(beta, 2.0 * spec.delta())?;
            let colors = spec.colors().clone();
            let summary = ConstructOutput {
                beta,
                horizon,
                delta: spec.delta(),
                epochs: spec.epochs(),
                colors: &colors,
                verification,
            };
            RewardCurve::family(spec.clone())?.write_csv(resolution, curve_sink)?;
            write_json(&summary, report_sink)?;
        }
        Command::Certify { config, out } => {
            let f: CertifyFile = read_config(&config)?;
            let sink = open_out(out.as_deref())?;
            let curve = f.curve.build()?;
            write_json(
                &certify_holder(&curve, f.beta, f.lipschitz, f.grid_n)?,
                sink,
            )?;
        }
        Command::CleanScan { config, out, seed } => {
            let f: CleanScanFile = read_config(&config)?;
            let sink = open_out(out.as_deref())?;
            let report =
                clean_event_frequency(f.mean, f.horizon, f.trials, seed.unwrap_or(f.master_seed))?;
            write_json(&report, sink)?;
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Numeric(_) | Error::DegreeOverflow { .. } | Error::State(_) => 3,
        Error::Domain(_) | Error::Config(_) | Error::Io(_) => 2,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("SBL_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Error::Config(format!(
                "SBL_THREADS must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
