use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mural_cli::config::{Config, Normalize, Preset};
use mural_cli::curve;
use mural_cli::service::{self, AppState, ServiceSettings};
use mural_core::active::{run_simulated, score_detections, write_transcript};
use mural_core::init::InitThreshold;
use mural_core::signal_io::{load_csv, load_labels};
use mural_core::synth::{generate, ChangeKind, SynthSpec};
use mural_core::Detector;

#[derive(Parser)]
#[command(name = "mural", version, about = "Multiresolution change-point detection with active learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Unsupervised detection on a CSV series.
    Detect(DetectArgs),
    /// Simulated labeling sessions with a ground-truth oracle; writes a learning curve.
    Simulate(SimulateArgs),
    /// Generate a synthetic series with known change points.
    Synth(SynthArgs),
    /// Run the HTTP annotation service.
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// TOML file with configuration keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short = 'K')]
    levels: Option<usize>,
    #[arg(long, short = 'w')]
    window: Option<usize>,
    #[arg(long)]
    eta: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget: Option<usize>,
    /// Initial threshold: `elbow` or `max`.
    #[arg(long, value_parser = parse_init)]
    init_threshold: Option<InitThreshold>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    cadence: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    queries_per_round: Option<u8>,
    /// `per-sequence` (default), `global` or `none`.
    #[arg(long, value_parser = parse_normalize)]
    normalize: Option<Normalize>,
}

fn parse_init(s: &str) -> Result<InitThreshold, String> {
    match s {
        "elbow" => Ok(InitThreshold::Elbow),
        "max" => Ok(InitThreshold::Max),
        _ => Err(format!("expected `elbow` or `max`, got {s:?}")),
    }
}

fn parse_normalize(s: &str) -> Result<Normalize, String> {
    match s {
        "per-sequence" => Ok(Normalize::PerSequence),
        "global" => Ok(Normalize::Global),
        "none" => Ok(Normalize::None),
        _ => Err(format!("expected `per-sequence`, `global` or `none`, got {s:?}")),
    }
}

impl Common {
    fn resolve(&self) -> Result<Config> {
        let mut c = match self.preset {
            Some(p) => Config::preset(p),
            None => Config::default(),
        };
        if let Some(path) = &self.config {
            c = c.load(path)?;
        }
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {$(
                if let Some(v) = self.$field {
                    c.$target = v.into();
                }
            )*};
        }
        set!(levels => levels, window => window, eta => eta, seed => seed, budget => budget,
             init_threshold => init, warmup => warmup, cadence => cadence,
             queries_per_round => queries_per_round, normalize => normalize);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct DetectArgs {
    input: PathBuf,
    /// Ground-truth change points; prints precision, recall and F1.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Detections file (one index per line); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// The CSV has a header row.
    #[arg(long)]
    header: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SimulateArgs {
    input: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Sessions to run; repetition r uses seed + r.
    #[arg(long, default_value_t = 1)]
    repetitions: u64,
    /// Learning-curve CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for one transcript per repetition.
    #[arg(long)]
    transcripts: Option<PathBuf>,
    #[arg(long)]
    header: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 4096)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 5)]
    segments: usize,
    /// Comma-separated change kinds: mean, variance, frequency.
    #[arg(long, default_value = "mean", value_delimiter = ',', value_parser = parse_kind)]
    kinds: Vec<ChangeKind>,
    /// Change size in noise standard deviations.
    #[arg(long, default_value_t = 3.0)]
    magnitude: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Series CSV.
    #[arg(long)]
    out: PathBuf,
    /// Change-point file.
    #[arg(long)]
    labels_out: PathBuf,
}

fn parse_kind(s: &str) -> Result<ChangeKind, String> {
    match s {
        "mean" => Ok(ChangeKind::Mean),
        "variance" => Ok(ChangeKind::Variance),
        "frequency" => Ok(ChangeKind::Frequency),
        _ => Err(format!("unknown change kind {s:?}")),
    }
}

#[derive(Args)]
struct ServeArgs {
    /// Bind address; the MURAL_PORT environment variable overrides the port.
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Directory for session transcripts; sessions found there are replayed.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 64 << 20)]
    max_upload_bytes: usize,
    #[command(flatten)]
    common: Common,
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn detect(args: DetectArgs) -> Result<()> {
    let config = args.common.resolve()?;
    let raw = load_csv(&args.input, args.header)?;
    let x = config.prepare(&raw);
    let result = Detector::new(config.detector_config()).run(&x)?;
    let mut out = open_out(args.out.as_deref())?;
    for i in &result.detections.indices {
        writeln!(out, "{i}")?;
    }
    out.flush()?;
    if let Some(path) = &args.labels {
        let truth = load_labels(path, x.len())?;
        let m = score_detections(&result.detections.indices, truth.indices(), config.eta);
        eprintln!(
            "detections={} precision={:.4} recall={:.4} f1={:.4}",
            result.detections.indices.len(),
            m.precision,
            m.recall,
            m.f1
        );
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let config = args.common.resolve()?;
    if args.repetitions == 0 {
        bail!("repetitions must be at least 1");
    }
    let raw = load_csv(&args.input, args.header)?;
    let x = config.prepare(&raw);
    let truth = load_labels(&args.labels, x.len())?;
    if let Some(dir) = &args.transcripts {
        fs::create_dir_all(dir)?;
    }
    let mut curves = Vec::new();
    for r in 0..args.repetitions {
        let mut session = config.session_config();
        session.seed = config.seed.wrapping_add(r);
        let sim = run_simulated(&x, &truth, &config.detector_config(), session)?;
        if let Some(dir) = &args.transcripts {
            let path = dir.join(format!("rep{r:03}.jsonl"));
            write_transcript(&sim.transcript, BufWriter::new(File::create(&path)?))?;
        }
        curves.push(sim.curve);
    }
    let mut out = open_out(args.out.as_deref())?;
    curve::write_csv(&curve::aggregate(&curves), &mut out)?;
    out.flush()?;
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n: args.n,
        d: args.d,
        segments: args.segments,
        kinds: args.kinds,
        magnitude: args.magnitude,
        noise: args.noise,
        seed: args.seed,
        boundaries: None,
    };
    let (x, labels) = generate(&spec)?;
    x.save_csv(&args.out)?;
    labels.save(&args.labels_out)?;
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let defaults = args.common.resolve()?;
    let mut addr = args.bind;
    if let Ok(port) = std::env::var("MURAL_PORT") {
        addr.set_port(port.parse().with_context(|| format!("MURAL_PORT={port:?} is not a port"))?);
    }
    let state = AppState::new(ServiceSettings {
        defaults,
        data_dir: args.data_dir,
        max_upload_bytes: args.max_upload_bytes,
    })?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot bind {addr}"))?;
        eprintln!("listening on http://{}/v1", listener.local_addr()?);
        tokio::select! {
            r = service::serve(listener, state) => r.context("server error"),
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Detect(a) => detect(a),
        Command::Simulate(a) => simulate(a),
        Command::Synth(a) => synth(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
