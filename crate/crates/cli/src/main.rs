use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gaitfb::estimator::{
    self, load_weights, measure_latency, Hyperparams, ModelWeights, BLOB_NAMES,
};
use gaitfb::frame::{read_csv, BodyParams, BodySide, ReplayReader, ReplayWriter};
use gaitfb::haptics::EmulatorSink;
use gaitfb::metrics::{report, Report};
use gaitfb::session::live::{serve, ServeConfig};
use gaitfb::session::{run_session, weights_digest, SessionConfig, SessionLog, VecSource};
use gaitfb::synthgait::{self, closed_loop, ClosedLoopConfig, GaitProfile, ResponseMode};

#[derive(Parser)]
#[command(name = "gaitfb", version, about = "Gait biofeedback engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a live session: UDP frame ingest plus the WebSocket control channel.
    Serve(ServeArgs),
    /// Run the protocol over a recorded stream against the armband emulator.
    Replay(ReplayArgs),
    /// Run a scripted synthetic participant through the closed loop.
    Simulate(SimulateArgs),
    /// Build the statistics report from session logs.
    Analyze(AnalyzeArgs),
    /// Train estimator weights.
    Train(TrainArgs),
    /// Weight file utilities.
    Weights {
        #[command(subcommand)]
        command: WeightsCommand,
    },
    /// Write a synthetic recording (.gaitbin or .csv) and its ground truth.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct ParticipantArgs {
    #[arg(long, default_value = "p01")]
    participant: String,
    #[arg(long, default_value_t = 70.0)]
    mass_kg: f64,
    #[arg(long, value_enum, default_value_t = SideArg::Left)]
    paretic_side: SideArg,
    /// Threshold multiplier over the baseline mean peak.
    #[arg(long, default_value_t = gaitfb::feedback::DEFAULT_MULTIPLIER)]
    multiplier: f64,
    /// Weight file; the embedded reference weights when omitted.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Left,
    Right,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Responder,
    Nonresponder,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    participant: ParticipantArgs,
    #[arg(long, default_value = "0.0.0.0:9000")]
    ingest: SocketAddr,
    #[arg(long, default_value = "127.0.0.1:9001")]
    control: SocketAddr,
    /// Armband address.
    #[arg(long)]
    device: Option<SocketAddr>,
    /// Wait for an operator start instead of starting on the first frame.
    #[arg(long)]
    manual_start: bool,
    #[arg(long, default_value = "session.sessionl")]
    log: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// .gaitbin or .csv recording.
    input: PathBuf,
    #[command(flatten)]
    participant: ParticipantArgs,
    /// Seconds before the first seated rest; replays have no operator.
    #[arg(long, default_value_t = 60)]
    don_device_s: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "replay.sessionl")]
    log: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = ProfileArg::Responder)]
    profile: ProfileArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    /// Also print the report of the simulated session.
    #[arg(long)]
    report: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// One log per participant.
    #[arg(required = true)]
    logs: Vec<PathBuf>,
    /// Machine-readable output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Train on the synthetic reference set (the only source supported).
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value = "reference.agrfw")]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum WeightsCommand {
    /// Print architecture, normalization and parameter statistics.
    Inspect {
        file: PathBuf,
        /// Also time 1000 frames of inference.
        #[arg(long)]
        latency: bool,
    },
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 120.0)]
    duration_s: f64,
    #[arg(long)]
    noiseless: bool,
    /// Output path; `.csv` selects the text format. Truth goes to `<out>.truth`.
    #[arg(long, default_value = "synthetic.gaitbin")]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Serve(a) => cmd_serve(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Train(a) => cmd_train(a),
        Command::Weights {
            command: WeightsCommand::Inspect { file, latency },
        } => cmd_inspect(&file, latency),
        Command::Generate(a) => cmd_generate(a),
    }
}

fn weights_from(path: Option<&Path>) -> Result<ModelWeights> {
    match path {
        Some(p) => {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(load_weights(&bytes)?)
        }
        None => Ok(estimator::reference_weights()),
    }
}

fn session_config(p: &ParticipantArgs) -> Result<SessionConfig> {
    let side = match p.paretic_side {
        SideArg::Left => BodySide::Left,
        SideArg::Right => BodySide::Right,
    };
    let body = BodyParams::new(p.mass_kg, side)?;
    let mut cfg = SessionConfig::new(&p.participant, body);
    cfg.multiplier = p.multiplier;
    Ok(cfg)
}

fn summarize(log: &SessionLog) {
    let stances = log.stances().count();
    let triggers = log.triggers().count();
    let threshold = log
        .threshold()
        .map_or_else(|| "-".into(), |t| format!("{:.4} BW", t.value));
    println!(
        "stances {stances}, triggers {triggers}, threshold {threshold}, aborted {}",
        log.aborted()
    );
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let mut session = session_config(&a.participant)?;
    session.auto_start = !a.manual_start;
    session.source = format!("udp:{}", a.ingest);
    let weights = weights_from(a.participant.weights.as_deref())?;
    let handle = serve(
        ServeConfig {
            session,
            ingest: a.ingest,
            control: a.control,
            device: a.device,
            log_path: Some(a.log.clone()),
        },
        weights,
    )?;
    eprintln!(
        "ingest on {}, control on ws://{}",
        handle.ingest_addr(),
        handle.control_addr()
    );
    match handle.wait() {
        Ok(log) => {
            summarize(&log);
            println!("log written to {}", a.log.display());
            Ok(())
        }
        Err(f) => {
            summarize(&f.log);
            bail!(
                "session ended: {} (partial log in {})",
                f.error,
                a.log.display()
            )
        }
    }
}

fn cmd_replay(a: ReplayArgs) -> Result<()> {
    let mut cfg = session_config(&a.participant)?;
    cfg.durations.don_device_s = Some(a.don_device_s);
    cfg.seed = a.seed;
    cfg.source = a.input.display().to_string();
    let weights = weights_from(a.participant.weights.as_deref())?;
    let file = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let result = if a.input.extension().is_some_and(|e| e == "csv") {
        let frames = read_csv(BufReader::new(file))?;
        run_session(
            cfg,
            weights,
            &mut VecSource::new(frames),
            EmulatorSink::default(),
        )
    } else {
        let mut reader = ReplayReader::new(BufReader::new(file));
        run_session(cfg, weights, &mut reader, EmulatorSink::default())
    };
    let log = match result {
        Ok(log) => log,
        Err(f) => {
            f.log.persist(&a.log)?;
            summarize(&f.log);
            bail!(
                "replay failed: {} (partial log in {})",
                f.error,
                a.log.display()
            );
        }
    };
    log.persist(&a.log)?;
    summarize(&log);
    println!("log written to {}", a.log.display());
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mode = match a.profile {
        ProfileArg::Responder => ResponseMode::Responder,
        ProfileArg::Nonresponder => ResponseMode::Nonresponder,
    };
    let cfg = ClosedLoopConfig::scripted(mode, a.seed);
    let run = closed_loop(&cfg, weights_from(a.weights.as_deref())?)?;
    summarize(&run.log);
    println!(
        "armband pulses {}, motor transitions {}",
        run.pulses_received,
        run.device_log.len()
    );
    if let Some(path) = &a.log {
        run.log.persist(path)?;
        println!("log written to {}", path.display());
    }
    if a.report {
        print!("{}", report(std::slice::from_ref(&run.log))?);
    }
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let logs = a
        .logs
        .iter()
        .map(|p| SessionLog::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let rep: Report = report(&logs)?;
    if let Some(out) = &a.out {
        let mut w = BufWriter::new(File::create(out)?);
        rep.write_jsonl(&mut w)?;
        w.flush()?;
        eprintln!("report written to {}", out.display());
    }
    print!("{rep}");
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    if !a.synthetic {
        bail!("only --synthetic training is supported");
    }
    let defaults = Hyperparams::default();
    let hp = Hyperparams {
        epochs: a.epochs.unwrap_or(defaults.epochs),
        lr: a.lr.unwrap_or(defaults.lr),
        seed: a.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    let out = estimator::train_synthetic(&hp)?;
    for (epoch, loss) in out.loss_trace.iter().enumerate() {
        println!("epoch {epoch:>3}  mse {loss:.6e}");
    }
    std::fs::write(&a.out, out.weights.to_bytes()?)?;
    println!(
        "weights written to {} ({})",
        a.out.display(),
        weights_digest(&out.weights)
    );
    Ok(())
}

fn cmd_inspect(path: &Path, latency: bool) -> Result<()> {
    let w = weights_from(Some(path))?;
    let arch = w.arch;
    println!("file           {}", path.display());
    println!("digest         {}", weights_digest(&w));
    println!(
        "architecture   {} channels, conv {}x{}, lstm {}, dense {}",
        arch.input_channels, arch.conv_filters, arch.kernel, arch.lstm_hidden, arch.dense1
    );
    println!("parameters     {}", arch.param_count());
    for (name, blob) in BLOB_NAMES.iter().zip(w.params.blobs()) {
        let max = blob.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        println!("  {name:<16} {:>7}  max |w| {max:.4}", blob.len());
    }
    let min_scale = w.norm.scale.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("norm scale     min {min_scale:.4e}");
    if latency {
        let s = measure_latency(&w, 1000);
        println!(
            "latency        p50 {:.1} us, p95 {:.1} us, max {:.1} us",
            s.p50_us, s.p95_us, s.max_us
        );
    }
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let profile = if a.noiseless {
        GaitProfile {
            seed: a.seed,
            ..GaitProfile::noiseless()
        }
    } else {
        GaitProfile {
            seed: a.seed,
            ..GaitProfile::default()
        }
    };
    let rec = synthgait::generate(&profile, a.duration_s)?;
    let file = BufWriter::new(File::create(&a.out)?);
    if a.out.extension().is_some_and(|e| e == "csv") {
        gaitfb::frame::write_csv(file, &rec.frames)?;
    } else {
        let mut w = ReplayWriter::new(file);
        for f in &rec.frames {
            w.write_frame(f)?;
        }
        w.into_inner().flush()?;
    }
    let mut truth_path = a.out.clone().into_os_string();
    truth_path.push(".truth");
    rec.write_truth(BufWriter::new(File::create(&truth_path)?))?;
    println!(
        "{} frames, {} stances written to {} (truth in {})",
        rec.frames.len(),
        rec.stances.len(),
        a.out.display(),
        PathBuf::from(truth_path).display()
    );
    Ok(())
}
