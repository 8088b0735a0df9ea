//! Command-line front end: echo synthesis, target training, identification,
//! set discrimination, feature inspection, and the two experiment scans.
//!
//! Every command that consumes randomness takes a mandatory `--seed`; there
//! is no wall-clock seeding anywhere. Identical command lines produce
//! byte-identical outputs.
//!
//! Exit codes: 0 success; 1 domain outcome (unknown target under `--strict`,
//! unreachable threshold, exhausted scan budget); 2 usage, format, or IO
//! errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use biosonar::io::{self, Overlay};
use biosonar::{
    identify, run_dlt, run_iso, run_matching, synth_series, train_target, DltRun, Discrimination,
    EchoSpec, Error, IdentificationResult, IsoRun, NoiseSpec, SampledEcho, TargetDatabase,
    ThresholdPoint, ThresholdValue, TrainingConfig,
};

#[derive(Parser)]
#[command(
    name = "biosonar",
    version,
    about = "Hierarchical echo-image features and experiments",
    max_term_width = 100
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Training geometry shared by every command that trains images.
#[derive(Args, Clone, Copy)]
struct TrainingArgs {
    /// Echoes averaged into a standard
    #[arg(long = "N", value_name = "COUNT")]
    standard_count: usize,
    /// Random subsets drawn to calibrate confidence radii
    #[arg(long = "M", value_name = "COUNT")]
    subset_count: usize,
    /// Echoes per subset (also the probe averaging depth)
    #[arg(long = "n", value_name = "COUNT")]
    subset_size: usize,
    /// Radius = mean + SIGMA * stddev of subset distances
    #[arg(long, value_name = "SIGMA")]
    radius_sigma: Option<f64>,
}

impl TrainingArgs {
    fn config(&self) -> TrainingConfig {
        let mut cfg = TrainingConfig::new(self.standard_count, self.subset_count, self.subset_size);
        if let Some(sigma) = self.radius_sigma {
            cfg.radius_sigma = sigma;
        }
        cfg
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic echo series
    ///
    /// `--d` makes two-highlight echoes (one delayed copy); `--d1` with
    /// `--d2` makes three-component echoes (a delayed pair). Echoes go to
    /// standard output as CSV unless `--out` names a file; a `.csv` suffix
    /// selects the text format, anything else the binary format.
    Synth(SynthArgs),
    /// Train a target image from an echo file and store it in a database
    Train(TrainArgs),
    /// Identify a probe echo series against a database
    Identify(IdentifyArgs),
    /// Train images on two echo files and compare them level by level
    Discriminate(DiscriminateArgs),
    /// Print the feature triple of one echo in a file
    Inspect(InspectArgs),
    /// Delay difference-limen scan over center delays
    #[command(name = "exp-dlt")]
    ExpDlt(ExpDltArgs),
    /// Pair-spacing sensitivity scan over amplitude
    #[command(name = "exp-iso")]
    ExpIso(ExpIsoArgs),
    /// Train labeled classes and identify labeled probe sets
    Match(MatchArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Amplitude coefficient of the delayed copies
    #[arg(long)]
    a: f64,
    /// Center delay of the single copy, microseconds
    #[arg(long, conflicts_with_all = ["d1", "d2"])]
    d: Option<f64>,
    /// First delay of the pair, microseconds
    #[arg(long, requires = "d2")]
    d1: Option<f64>,
    /// Second delay of the pair, microseconds
    #[arg(long, requires = "d1")]
    d2: Option<f64>,
    /// Delay randomization half-width as a fraction of the center delay
    #[arg(long, default_value_t = 0.2)]
    jitter: f64,
    /// White noise level as SNR over the analysis window, dB
    #[arg(long, value_name = "DB", conflicts_with = "noise_floor", allow_hyphen_values = true)]
    noise_snr: Option<f64>,
    /// White noise RMS relative to the echo peak, dB (e.g. -40)
    #[arg(long, value_name = "DB", allow_hyphen_values = true)]
    noise_floor: Option<f64>,
    /// Number of echoes
    #[arg(long)]
    count: usize,
    /// Base RNG seed
    #[arg(long)]
    seed: u64,
    /// Output file (.csv for text, anything else binary)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Echo file holding the training series
    echoes: PathBuf,
    /// Name stored with the trained image
    #[arg(long)]
    name: String,
    #[command(flatten)]
    training: TrainingArgs,
    /// Subset-draw RNG seed
    #[arg(long)]
    seed: u64,
    /// Database file to create or extend
    #[arg(long)]
    db: PathBuf,
}

#[derive(Args)]
struct IdentifyArgs {
    /// Echo file holding the probe series
    echoes: PathBuf,
    /// Database file
    #[arg(long)]
    db: PathBuf,
    /// Probe averaging depth
    #[arg(long = "n", value_name = "COUNT")]
    subset_size: usize,
    /// Exit with code 1 when the probe stays unknown
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct DiscriminateArgs {
    /// First echo file
    first: PathBuf,
    /// Second echo file
    second: PathBuf,
    #[command(flatten)]
    training: TrainingArgs,
    /// Subset-draw RNG seed
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct InspectArgs {
    /// Echo file
    echoes: PathBuf,
    /// Index of the echo to inspect
    #[arg(long, default_value_t = 0)]
    echo: usize,
}

#[derive(Args)]
struct ExpDltArgs {
    /// Center delays to scan, microseconds
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "40,80,120,160,190",
        value_name = "US,..."
    )]
    centers: Vec<f64>,
    #[command(flatten)]
    training: TrainingArgs,
    /// Delay randomization fraction
    #[arg(long, default_value_t = 0.2)]
    jitter: f64,
    /// Optional white noise as SNR over the analysis window, dB
    #[arg(long, value_name = "DB", allow_hyphen_values = true)]
    noise_snr: Option<f64>,
    /// Added-delay grid step, microseconds
    #[arg(long, default_value_t = 0.5)]
    step: f64,
    /// Base RNG seed
    #[arg(long)]
    seed: u64,
    /// Write the CSV table here instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG plot with the dolphin 5-8% reference band
    #[arg(long, value_name = "SVG")]
    plot: Option<PathBuf>,
    /// Worker threads for the center-delay grid
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ExpIsoArgs {
    /// Pair-spacing centers to scan, microseconds
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,2.5,5,70,100,130,160,185",
        value_name = "US,..."
    )]
    centers: Vec<f64>,
    #[command(flatten)]
    training: TrainingArgs,
    /// Close-variant pair spacing, microseconds
    #[arg(long, default_value_t = 7.0)]
    spacing_close: f64,
    /// Far-variant pair spacing, microseconds
    #[arg(long, default_value_t = 10.0)]
    spacing_far: f64,
    /// Noise RMS relative to the echo peak, dB
    #[arg(long, default_value_t = -40.0, value_name = "DB", allow_hyphen_values = true)]
    noise_floor: f64,
    /// Leading-delay randomization fraction
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Amplitude grid, ascending within [0.003, 0.06]
    #[arg(long, value_delimiter = ',', value_name = "A,...")]
    a_grid: Option<Vec<f64>>,
    /// Base RNG seed
    #[arg(long)]
    seed: u64,
    /// Write the CSV table here instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG plot of the hierarchical curve
    #[arg(long, value_name = "SVG")]
    plot: Option<PathBuf>,
    /// Reference markers for the plot: CSV rows "x,y"
    #[arg(long, value_name = "CSV")]
    markers: Option<PathBuf>,
    /// Worker threads for the spacing-center grid
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct MatchArgs {
    /// Training class as label=echo-file (repeatable)
    #[arg(long = "train", value_parser = parse_labeled, required = true)]
    train_sets: Vec<(String, PathBuf)>,
    /// Probe set as label=echo-file (repeatable)
    #[arg(long = "probe", value_parser = parse_labeled, required = true)]
    probe_sets: Vec<(String, PathBuf)>,
    #[command(flatten)]
    training: TrainingArgs,
    /// Subset-draw RNG seed
    #[arg(long)]
    seed: u64,
}

fn parse_labeled(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((label, path)) if !label.is_empty() && !path.is_empty() => {
            Ok((label.to_string(), PathBuf::from(path)))
        }
        _ => Err("expected label=path".into()),
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn read_echo_file(path: &Path) -> Result<Vec<SampledEcho>, Error> {
    if is_csv(path) {
        io::read_echoes_csv(path)
    } else {
        io::read_echoes(path)
    }
}

fn write_echo_file(path: &Path, echoes: &[SampledEcho]) -> Result<(), Error> {
    if is_csv(path) {
        io::write_echoes_csv(path, echoes)
    } else {
        io::write_echoes(path, echoes)
    }
}

fn load_or_new_db(path: &Path) -> Result<TargetDatabase, Error> {
    if path.exists() {
        io::load_db(path)
    } else {
        Ok(TargetDatabase::new())
    }
}

/// CSV rows "x,y" (blank lines and `#` comments skipped) as marker points.
fn read_markers(path: &Path) -> Result<Vec<(f64, f64)>, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = |s: &str| -> Result<f64, Error> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidSpec(format!("marker line {}: bad number {s:?}", i + 1)))
        };
        match line.split_once(',') {
            Some((x, y)) => points.push((parse(x)?, parse(y)?)),
            None => {
                return Err(Error::InvalidSpec(format!(
                    "marker line {}: expected x,y",
                    i + 1
                )))
            }
        }
    }
    Ok(points)
}

fn emit_table(csv: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => io::write_atomic(path, csv.as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

/// Combined CSV for the three spacing-sensitivity curves.
fn render_iso_csv(result: &biosonar::IsoResult) -> Result<String, Error> {
    let mut out = String::from("curve,x,y,feature\n");
    let curves: [(&str, &[ThresholdPoint]); 3] = [
        ("hierarchical", &result.hierarchical),
        ("coarse-only", &result.maps_only),
        ("fine-only", &result.mips_only),
    ];
    for (name, points) in curves {
        let body = io::render_csv(points)?;
        for line in body.lines().skip(1) {
            out.push_str(name);
            out.push(',');
            out.push_str(line);
            out.push('\n');
        }
    }
    Ok(out)
}

fn noise_from(snr: Option<f64>, floor: Option<f64>) -> Option<NoiseSpec> {
    match (snr, floor) {
        (Some(db), _) => Some(NoiseSpec::SnrOverWindow(db)),
        (None, Some(db)) => Some(NoiseSpec::RelativeToFirstHighlightPeak(db)),
        (None, None) => None,
    }
}

fn run(command: Command) -> Result<u8, Error> {
    match command {
        Command::Synth(args) => {
            let mut spec = match (args.d, args.d1, args.d2) {
                (Some(d), None, None) => EchoSpec::two_highlight(args.a, d, args.seed),
                (None, Some(d1), Some(d2)) => {
                    EchoSpec::three_component(args.a, d1, d2, args.seed)
                }
                _ => {
                    return Err(Error::InvalidSpec(
                        "give either --d or both --d1 and --d2".into(),
                    ))
                }
            };
            spec = spec.with_jitter(args.jitter);
            if let Some(noise) = noise_from(args.noise_snr, args.noise_floor) {
                spec = spec.with_noise(noise);
            }
            let echoes = synth_series(&spec, args.count)?;
            match args.out {
                Some(path) => write_echo_file(&path, &echoes)?,
                None => print!("{}", io::render_echoes_csv(&echoes)?),
            }
            Ok(0)
        }
        Command::Train(args) => {
            let echoes = read_echo_file(&args.echoes)?;
            let cfg = args.training.config();
            let image = train_target(&args.name, &echoes, &cfg, args.seed)?;
            println!(
                "trained {}: radii maps {:.6e}, mips {:.6e}, p {:.6e}",
                image.name, image.radius_maps, image.radius_mips, image.radius_p
            );
            let mut db = load_or_new_db(&args.db)?;
            db.append(image)?;
            io::save_db(&args.db, &db)?;
            Ok(0)
        }
        Command::Identify(args) => {
            let echoes = read_echo_file(&args.echoes)?;
            let db = io::load_db(&args.db)?;
            match identify(&echoes, &db, args.subset_size)? {
                IdentificationResult::Identified { name, level } => {
                    println!("IDENTIFIED {name} at {level}");
                    Ok(0)
                }
                IdentificationResult::Unknown => {
                    println!("UNKNOWN");
                    Ok(if args.strict { 1 } else { 0 })
                }
                IdentificationResult::Indistinguishable { names } => {
                    println!("AMBIGUOUS {}", names.join(" "));
                    Ok(if args.strict { 1 } else { 0 })
                }
            }
        }
        Command::Discriminate(args) => {
            let first = read_echo_file(&args.first)?;
            let second = read_echo_file(&args.second)?;
            let cfg = args.training.config();
            match biosonar::discriminate_sets(&first, &second, &cfg, args.seed)? {
                Discrimination::Distinct(level) => {
                    println!("DISTINCT at {level}");
                    Ok(0)
                }
                Discrimination::Indistinguishable => {
                    println!("INDISTINGUISHABLE");
                    Ok(0)
                }
            }
        }
        Command::Inspect(args) => {
            let echoes = read_echo_file(&args.echoes)?;
            let echo = echoes.get(args.echo).ok_or_else(|| {
                Error::InvalidSpec(format!(
                    "echo index {} out of range (file holds {})",
                    args.echo,
                    echoes.len()
                ))
            })?;
            let triple = biosonar::extract_triple(echo)?;
            let join = |vals: &[f64]| -> String {
                vals.iter()
                    .map(|v| format!("{v}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            println!(
                "echo {}: {} samples at {} us",
                args.echo,
                echo.len(),
                echo.sample_interval_us
            );
            println!("maps: {}", join(&triple.maps.0));
            println!("mips: {}", join(&triple.mips.0));
            println!("p: {}", triple.power.0);
            Ok(0)
        }
        Command::ExpDlt(args) => {
            let mut run = DltRun::new(args.centers, args.training.config(), args.seed);
            run.jitter_fraction = args.jitter;
            run.noise_snr_db = args.noise_snr;
            run.step_us = args.step;
            let points = run_dlt(&run, args.jobs)?;
            emit_table(&io::render_csv(&points)?, args.out.as_deref())?;
            if let Some(plot) = args.plot {
                let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
                let band = Overlay::Band {
                    label: "dolphin 5-8% band".into(),
                    lower: xs.iter().map(|&x| (x, 0.05 * x)).collect(),
                    upper: xs.iter().map(|&x| (x, 0.08 * x)).collect(),
                };
                io::emit_svg(
                    &points,
                    &[band],
                    "center delay (us)",
                    "delay limen (us)",
                    &plot,
                )?;
            }
            Ok(0)
        }
        Command::ExpIso(args) => {
            let mut run = IsoRun::new(args.centers, args.training.config(), args.seed);
            run.pair_spacing_close_us = args.spacing_close;
            run.pair_spacing_far_us = args.spacing_far;
            run.noise_peak_db = args.noise_floor;
            run.jitter_fraction = args.jitter;
            if let Some(grid) = args.a_grid {
                run.a_grid = grid;
            }
            let result = run_iso(&run, args.jobs)?;
            emit_table(&render_iso_csv(&result)?, args.out.as_deref())?;
            if let Some(plot) = args.plot {
                let mut overlays = Vec::new();
                if let Some(markers) = args.markers {
                    overlays.push(Overlay::Markers {
                        label: "reference".into(),
                        points: read_markers(&markers)?,
                    });
                }
                io::emit_svg(
                    &result.hierarchical,
                    &overlays,
                    "pair spacing center (us)",
                    "threshold (dB)",
                    &plot,
                )?;
            }
            let unreachable = result
                .hierarchical
                .iter()
                .chain(&result.maps_only)
                .chain(&result.mips_only)
                .any(|p| p.value == ThresholdValue::NotReached);
            Ok(if unreachable { 1 } else { 0 })
        }
        Command::Match(args) => {
            let load_sets =
                |sets: &[(String, PathBuf)]| -> Result<Vec<(String, Vec<SampledEcho>)>, Error> {
                    sets.iter()
                        .map(|(label, path)| Ok((label.clone(), read_echo_file(path)?)))
                        .collect()
                };
            let train = load_sets(&args.train_sets)?;
            let probe = load_sets(&args.probe_sets)?;
            let cfg = args.training.config();
            let report = run_matching(&train, &probe, &cfg, args.seed)?;
            print!("{}", report.render_table());
            println!("diagonal fraction: {}", report.diagonal_fraction());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::InsufficientBudget { .. } => 1,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}
