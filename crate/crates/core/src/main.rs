use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tempfile::NamedTempFile;

use evstream::config::{Profile, RunConfig};
use evstream::feature_stream::{FrameReader, FrameWriter};
use evstream::harness::{
    bench, compression_ratio, eval_boundaries, similarity_matrix, BoundaryFile, EvalReport,
    SuiteParams, SynthIter, SynthSpec,
};
use evstream::pacing::{EmissionLogLine, StubResponder};
use evstream::pipeline::{check_stream_dim, Engine, EngineCounters};
use evstream::{
    open_stream, validate_stream, Activation, EmissionKind, Error, FrameFeature, MemoryBank,
    PredictorModel, Result, StreamFormat,
};

#[derive(Parser)]
#[command(
    name = "evstream",
    version,
    about = "Causal event segmentation for streams of frame embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the streaming engine over a feature stream.
    Segment(SegmentArgs),
    /// Fit the next-embedding predictor on one or more streams.
    TrainPredictor(TrainArgs),
    /// Generate a synthetic stream with ground-truth boundaries.
    Synth(SynthArgs),
    /// Score detected boundaries against ground truth.
    Eval(EvalArgs),
    /// Measure engine throughput and latency.
    Bench(BenchArgs),
    /// Write the pairwise cosine matrix and similarity-vs-gap curve.
    DiagSimmatrix(SimArgs),
    /// Check that a stream file is well formed and summarize it.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Stream to check (`-` for stdin).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in parameter profile: `default` or `paper-defaults`.
    #[arg(long, default_value = "default")]
    profile: String,
    /// Override a configuration key, e.g. `--set detector.tau0=0.9`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let profile: Profile = self.profile.parse()?;
        RunConfig::load(profile, self.config.as_deref(), &self.overrides)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Binary,
}

impl From<FormatArg> for StreamFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => StreamFormat::Jsonl,
            FormatArg::Binary => StreamFormat::Binary,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ActivationArg {
    Softplus,
    Silu,
    Gelu,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Softplus => Activation::Softplus,
            ActivationArg::Silu => Activation::Silu,
            ActivationArg::Gelu => Activation::Gelu,
        }
    }
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Input stream (`-` for stdin); falls back to `io.input`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Input format; sniffed from the first bytes when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Predictor model file; falls back to `predictor.path`, else identity.
    #[arg(long)]
    predictor: Option<PathBuf>,
    /// Emission log (JSONL); falls back to `io.emissions`, else stdout.
    #[arg(long)]
    emissions: Option<PathBuf>,
    /// Per-frame decision trace (CSV); falls back to `io.trace`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Memory snapshot written at end of stream; falls back to `io.snapshot`.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Detected boundary times (JSON), for `eval`.
    #[arg(long)]
    boundaries: Option<PathBuf>,
    /// Run summary (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Training streams.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss trace (CSV).
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Hidden width; defaults to `predictor.hidden`, else twice the embedding dimension.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long, value_enum)]
    activation: Option<ActivationArg>,
    /// Seed for initialization and shuffling; defaults to `predictor.train.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output stream.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth boundary times (JSON).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Explicit generator spec (JSON); otherwise `harness.suite` is used.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Defaults to `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "binary")]
    format: FormatArg,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Detected boundaries (JSON, as written by `segment --boundaries`).
    #[arg(long)]
    detected: PathBuf,
    /// Ground-truth boundaries (JSON, as written by `synth --truth`).
    #[arg(long)]
    truth: PathBuf,
    /// Emission log used for the compression and rate figures.
    #[arg(long)]
    emissions: Option<PathBuf>,
    /// Memory snapshot used for the slot count.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Matching tolerance in frames; defaults to `harness.tolerance_frames`.
    #[arg(long)]
    tolerance: Option<u32>,
    /// Frame rate; defaults to the truth file's, else `harness.suite.fps`.
    #[arg(long)]
    fps: Option<f64>,
    /// Report (JSON); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Input stream; a synthetic stream is generated when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    predictor: Option<PathBuf>,
    /// Embedding dimension of the generated stream.
    #[arg(long, default_value_t = 512)]
    dim: usize,
    /// Length of the generated stream in seconds.
    #[arg(long, default_value_t = 600.0)]
    duration: f64,
    /// Defaults to `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Report (JSON); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Defaults to `harness.stride`.
    #[arg(long)]
    stride: Option<usize>,
    /// Cosine matrix (CSV).
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Mean cosine by frame gap (CSV).
    #[arg(long)]
    decay: Option<PathBuf>,
    /// Block summary (JSON); stdout when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
}

/// An output that only appears at its destination once committed.
enum Output {
    Stdout(BufWriter<io::Stdout>),
    File {
        w: BufWriter<NamedTempFile>,
        dest: PathBuf,
    },
    Device(BufWriter<std::fs::File>),
}

impl Output {
    fn create(dest: &Path) -> Result<Self> {
        if dest == Path::new("-") {
            return Ok(Output::Stdout(BufWriter::new(io::stdout())));
        }
        // devices and pipes are written in place, never replaced
        if std::fs::metadata(dest).is_ok_and(|m| !m.is_file() && !m.is_dir()) {
            let f = std::fs::OpenOptions::new().write(true).open(dest)?;
            return Ok(Output::Device(BufWriter::new(f)));
        }
        let dir = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut builder = tempfile::Builder::new();
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            builder.permissions(std::fs::Permissions::from_mode(0o644));
        }
        let tmp = builder.prefix(".evstream").tempfile_in(dir)?;
        Ok(Output::File {
            w: BufWriter::new(tmp),
            dest: dest.to_path_buf(),
        })
    }

    fn commit(self) -> Result<()> {
        match self {
            Output::Stdout(mut w) => Ok(w.flush()?),
            Output::Device(mut w) => Ok(w.flush()?),
            Output::File { w, dest } => {
                let tmp = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
                tmp.persist(&dest).map_err(|e| Error::Io(e.error))?;
                Ok(())
            }
        }
    }
}

impl Write for Output {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Output::Stdout(w) => w.write(buf),
            Output::File { w, .. } => w.write(buf),
            Output::Device(w) => w.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Output::Stdout(w) => w.flush(),
            Output::File { w, .. } => w.flush(),
            Output::Device(w) => w.flush(),
        }
    }
}

fn write_output(dest: &Path, body: impl FnOnce(&mut Output) -> Result<()>) -> Result<()> {
    let mut out = Output::create(dest)?;
    body(&mut out)?;
    out.commit()
}

fn write_json<T: Serialize>(dest: &Path, value: &T) -> Result<()> {
    write_output(dest, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        out.write_all(b"\n")?;
        Ok(())
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn open_input(path: &Path, format: Option<FormatArg>) -> Result<FrameReader<Box<dyn Read>>> {
    let raw: Box<dyn Read> = if path == Path::new("-") {
        Box::new(io::stdin())
    } else {
        Box::new(File::open(path)?)
    };
    let mut buf = BufReader::new(raw);
    let format = match format {
        Some(f) => f.into(),
        None => StreamFormat::sniff(buf.fill_buf()?),
    };
    open_stream(Box::new(buf) as Box<dyn Read>, format)
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let summary = validate_stream(open_input(&args.input, args.format)?)?;
    write_json(Path::new("-"), &summary)
}

fn load_predictor(path: &Path) -> Result<PredictorModel> {
    PredictorModel::load(BufReader::new(File::open(path)?))
}

#[derive(Serialize)]
struct SegmentSummary {
    frames: u64,
    dim: Option<usize>,
    duration_s: f64,
    boundaries: u64,
    forced_boundaries: u64,
    emitted_events: u64,
    keep_alives: u64,
    memory_slots: usize,
    compression_ratio: f64,
    emissions_per_minute: f64,
}

fn per_minute(count: u64, duration_s: f64) -> f64 {
    if duration_s > 0.0 {
        count as f64 * 60.0 / duration_s
    } else {
        0.0
    }
}

const TRACE_HEADER: &str = "t,s_t,m_tilde,c_t,e_t,p_t,tau_t,is_boundary,forced";

fn cmd_segment(args: SegmentArgs) -> Result<()> {
    let cfg = args.cfg.load()?;
    let input = args
        .input
        .or_else(|| cfg.io.input.clone())
        .ok_or_else(|| Error::InvalidConfig("no input stream given".into()))?;
    let predictor = match args.predictor.or_else(|| cfg.predictor.path.clone()) {
        Some(p) => Some(load_predictor(&p)?),
        None => None,
    };
    let mut reader = open_input(&input, args.format)?;
    if let (Some(p), Some(d)) = (&predictor, reader.dim()) {
        check_stream_dim(p, d)?;
    }

    let emissions_path = args
        .emissions
        .or_else(|| cfg.io.emissions.clone())
        .unwrap_or_else(|| PathBuf::from("-"));
    let mut emissions = Output::create(&emissions_path)?;
    let mut trace = match args.trace.or_else(|| cfg.io.trace.clone()) {
        Some(p) => {
            let mut out = Output::create(&p)?;
            writeln!(out, "{TRACE_HEADER}")?;
            Some(out)
        }
        None => None,
    };

    let mut detected = Vec::new();
    let mut first_t = None;
    let mut last_t = 0.0;
    let (bank, counters, dim) = match reader.next().transpose()? {
        None => (
            MemoryBank::new(&cfg.memory),
            EngineCounters::default(),
            None,
        ),
        Some(first) => {
            let d = first.dim();
            let predictor = match predictor {
                Some(p) => {
                    check_stream_dim(&p, d)?;
                    p
                }
                None => PredictorModel::identity(d),
            };
            let mut engine = Engine::new(cfg.engine(), Arc::new(predictor), StubResponder)?;
            for frame in std::iter::once(Ok(first)).chain(reader) {
                let frame: FrameFeature = frame?;
                first_t.get_or_insert(frame.t);
                last_t = frame.t;
                let step = engine.push(&frame)?;
                let dec = &step.decision;
                if dec.is_boundary {
                    detected.push(dec.t);
                }
                if let Some(out) = trace.as_mut() {
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{}",
                        dec.t,
                        dec.s_t,
                        dec.m_tilde,
                        dec.c_t,
                        dec.e_t,
                        dec.p_t,
                        dec.tau_t,
                        u8::from(dec.is_boundary),
                        u8::from(dec.forced)
                    )?;
                }
                for rec in &step.emissions {
                    serde_json::to_writer(&mut emissions, &EmissionLogLine::from(rec))?;
                    emissions.write_all(b"\n")?;
                }
            }
            let (bank, counters) = engine.finish()?;
            (bank, counters, Some(d))
        }
    };

    let duration_s = first_t.map_or(0.0, |t0| last_t - t0);
    emissions.commit()?;
    if let Some(out) = trace {
        out.commit()?;
    }
    if let Some(p) = args.snapshot.or_else(|| cfg.io.snapshot.clone()) {
        write_output(&p, |out| bank.snapshot(out))?;
    }
    if let Some(p) = args.boundaries {
        let file = BoundaryFile {
            fps: None,
            frames: Some(counters.frames),
            duration_s: Some(duration_s),
            boundaries: detected,
        };
        write_json(&p, &file)?;
    }
    let summary = SegmentSummary {
        frames: counters.frames,
        dim,
        duration_s,
        boundaries: counters.boundaries,
        forced_boundaries: counters.forced_boundaries,
        emitted_events: counters.boundary_emissions,
        keep_alives: counters.keep_alives,
        memory_slots: bank.len(),
        compression_ratio: compression_ratio(counters.frames, counters.boundary_emissions),
        emissions_per_minute: per_minute(
            counters.boundary_emissions + counters.keep_alives,
            duration_s,
        ),
    };
    if let Some(p) = args.report {
        write_json(&p, &summary)?;
    }
    eprintln!(
        "segment: {} frames, {} boundaries, {} events emitted, {} keep-alives, {} memory slots",
        summary.frames,
        summary.boundaries,
        summary.emitted_events,
        summary.keep_alives,
        summary.memory_slots
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = args.cfg.load()?;
    let mut streams = Vec::with_capacity(args.input.len());
    for path in &args.input {
        let frames: Vec<FrameFeature> = open_input(path, args.format)?.collect::<Result<_>>()?;
        streams.push(frames);
    }
    let d = streams
        .iter()
        .find_map(|s| s.first().map(FrameFeature::dim))
        .ok_or(Error::StreamTooShort {
            needed: 2,
            actual: 0,
        })?;
    for s in &streams {
        if let Some(f) = s.first() {
            if f.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: f.dim(),
                });
            }
        }
    }
    let hidden = args.hidden.or(cfg.predictor.hidden).unwrap_or(2 * d);
    if hidden == 0 {
        return Err(Error::InvalidConfig("hidden width must be >= 1".into()));
    }
    let activation = args
        .activation
        .map_or(cfg.predictor.activation, Activation::from);
    let mut train = cfg.predictor.train.clone();
    if let Some(seed) = args.seed {
        train.seed = seed;
    }
    let mut model = PredictorModel::mlp(d, hidden, activation, train.seed);
    let refs: Vec<&[FrameFeature]> = streams.iter().map(Vec::as_slice).collect();
    let losses = model.train_streams(&refs, &train)?;
    model.freeze();
    write_output(&args.out, |out| model.save(out))?;
    if let Some(p) = &args.loss_csv {
        write_output(p, |out| {
            writeln!(out, "epoch,loss")?;
            for (epoch, loss) in losses.iter().enumerate() {
                writeln!(out, "{epoch},{loss}")?;
            }
            Ok(())
        })?;
    }
    eprintln!(
        "train-predictor: d={d} h={hidden}, loss {} -> {}",
        losses.first().copied().unwrap_or(f64::NAN),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let cfg = args.cfg.load()?;
    let seed = args.seed.unwrap_or(cfg.run.seed);
    let spec: SynthSpec = match &args.spec {
        Some(p) => {
            let mut spec: SynthSpec =
                read_json(p).map_err(|e| Error::InvalidSpec(format!("{}: {e}", p.display())))?;
            if args.seed.is_some() {
                spec.seed = seed;
            }
            spec
        }
        None => cfg.harness.suite.spec(seed),
    };
    spec.validate()?;
    let truth = BoundaryFile {
        fps: Some(spec.fps),
        frames: Some(spec.total_frames() as u64),
        duration_s: Some(spec.total_frames() as f64 / spec.fps),
        boundaries: spec.boundary_times(),
    };
    let d = spec.d;
    write_output(&args.out, |out| {
        let mut writer = FrameWriter::new(out, args.format.into(), d)?;
        for frame in SynthIter::new(spec)? {
            writer.write(&frame)?;
        }
        writer.finish()?;
        Ok(())
    })?;
    if let Some(p) = &args.truth {
        write_json(p, &truth)?;
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let cfg = args.cfg.load()?;
    let detected: BoundaryFile = read_json(&args.detected)?;
    let truth: BoundaryFile = read_json(&args.truth)?;
    let fps = args
        .fps
        .or(truth.fps)
        .or(detected.fps)
        .unwrap_or(cfg.harness.suite.fps);
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "fps must be positive, got {fps}"
        )));
    }
    let tolerance = args.tolerance.unwrap_or(cfg.harness.tolerance_frames);
    let mut det = detected.boundaries.clone();
    let mut tru = truth.boundaries.clone();
    for v in det.iter().chain(&tru) {
        if !v.is_finite() {
            return Err(Error::NonFiniteValue(*v));
        }
    }
    det.sort_by(f64::total_cmp);
    tru.sort_by(f64::total_cmp);
    let boundary = eval_boundaries(&det, &tru, tolerance, fps);

    let frames = detected.frames.or(truth.frames).unwrap_or(0);
    let duration_s = detected.duration_s.or(truth.duration_s).unwrap_or(0.0);
    let (emitted_events, keep_alives) = match &args.emissions {
        Some(p) => {
            let mut events = 0u64;
            let mut keep = 0u64;
            for line in BufReader::new(File::open(p)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: EmissionLogLine = serde_json::from_str(&line)?;
                match rec.kind {
                    EmissionKind::Boundary => events += 1,
                    EmissionKind::KeepAlive => keep += 1,
                }
            }
            (events, keep)
        }
        None => (det.len() as u64, 0),
    };
    let memory_slots = match &args.snapshot {
        Some(p) => Some(MemoryBank::restore(BufReader::new(File::open(p)?))?.len()),
        None => None,
    };
    let report = EvalReport {
        tolerance_frames: tolerance,
        boundary,
        frames,
        emitted_events,
        keep_alives,
        compression_ratio: compression_ratio(frames, emitted_events),
        memory_slots,
        frame_latency: None,
        emissions_per_minute: per_minute(emitted_events + keep_alives, duration_s),
    };
    write_json(args.out.as_deref().unwrap_or(Path::new("-")), &report)?;
    eprintln!(
        "eval: P={:.4} R={:.4} F1={:.4} ({} matched of {} detected, {} true)",
        report.boundary.precision,
        report.boundary.recall,
        report.boundary.f1,
        report.boundary.matched,
        report.boundary.detected,
        report.boundary.truth
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let cfg = args.cfg.load()?;
    let engine_cfg = cfg.engine();
    let predictor = match args.predictor.or_else(|| cfg.predictor.path.clone()) {
        Some(p) => Some(load_predictor(&p)?),
        None => None,
    };
    let report = match &args.input {
        Some(path) => {
            let frames: Vec<FrameFeature> =
                open_input(path, args.format)?.collect::<Result<_>>()?;
            let d = match frames.first() {
                Some(f) => f.dim(),
                None => {
                    return Err(Error::StreamTooShort {
                        needed: 1,
                        actual: 0,
                    })
                }
            };
            let predictor = predictor.unwrap_or_else(|| PredictorModel::identity(d));
            check_stream_dim(&predictor, d)?;
            bench(
                frames,
                &engine_cfg,
                Arc::new(predictor),
                StubResponder,
                cfg.harness.bench_sample_every,
            )?
        }
        None => {
            if args.duration.is_nan() || args.duration <= 0.0 || args.dim == 0 {
                return Err(Error::InvalidConfig(
                    "bench needs a positive duration and dimension".into(),
                ));
            }
            let suite = &cfg.harness.suite;
            let mean_len = 0.5 * (suite.min_duration + suite.max_duration);
            let params = SuiteParams {
                d: args.dim,
                segments: (args.duration / mean_len).ceil().max(1.0) as usize,
                ..suite.clone()
            };
            let spec = params.spec(args.seed.unwrap_or(cfg.run.seed));
            let predictor = predictor.unwrap_or_else(|| PredictorModel::identity(args.dim));
            check_stream_dim(&predictor, args.dim)?;
            bench(
                SynthIter::new(spec)?,
                &engine_cfg,
                Arc::new(predictor),
                StubResponder,
                cfg.harness.bench_sample_every,
            )?
        }
    };
    write_json(args.out.as_deref().unwrap_or(Path::new("-")), &report)?;
    eprintln!(
        "bench: {} frames at d={}, {:.0} frames/s, p50 {:.4} ms, p95 {:.4} ms",
        report.frames,
        report.dim,
        report.frames_per_sec,
        report.frame_latency.p50_ms,
        report.frame_latency.p95_ms
    );
    Ok(())
}

fn cmd_simmatrix(args: SimArgs) -> Result<()> {
    let cfg = args.cfg.load()?;
    let frames: Vec<FrameFeature> = open_input(&args.input, args.format)?.collect::<Result<_>>()?;
    if frames.len() < 2 {
        return Err(Error::StreamTooShort {
            needed: 2,
            actual: frames.len(),
        });
    }
    let report = similarity_matrix(&frames, args.stride.unwrap_or(cfg.harness.stride))?;
    if let Some(p) = &args.matrix {
        write_output(p, |out| report.write_matrix_csv(out))?;
    }
    if let Some(p) = &args.decay {
        write_output(p, |out| report.write_decay_csv(out))?;
    }
    write_json(
        args.summary.as_deref().unwrap_or(Path::new("-")),
        &report.summary,
    )
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Segment(a) => cmd_segment(a),
        Command::TrainPredictor(a) => cmd_train(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::DiagSimmatrix(a) => cmd_simmatrix(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("evstream: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(5),
    }
}
