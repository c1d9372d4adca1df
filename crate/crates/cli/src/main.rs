use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stmd_core::eval::{ablation, match_and_score, roc_sweep, tuning_experiment, TuningAxis, MATCH_RADIUS};
use stmd_core::io::{self, GroundTruthPoint};
use stmd_core::kv::parse_override;
use stmd_core::motion::MotionPathway;
use stmd_core::mushroom::Label;
use stmd_core::synth::{generate_sequence, Sequence, SequenceSpec};
use stmd_core::{CandidateCache, Error, Frame, Result, RunConfig, RunOutput};

/// Small-target motion detection with contrast-based fake-feature rejection.
#[derive(Debug, Parser)]
#[command(name = "stmd", version)]
struct Cli {
    /// Model config file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one config key; repeatable, applied after --config.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect, track and classify; writes detections, traces and directions CSVs.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a synthetic sequence to numbered PGM frames plus ground truth.
    Synth {
        #[command(flatten)]
        sequence: SequenceArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a detections CSV against ground truth.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        /// First scored frame; defaults to the end of warm-up.
        #[arg(long)]
        start: Option<u64>,
        /// One past the last scored frame; defaults to the end of the ground truth.
        #[arg(long)]
        end: Option<u64>,
    },
    /// Detection rate and false alarm rate over a list of thresholds.
    Roc {
        #[command(flatten)]
        source: Source,
        /// Ground truth CSV; required with --frames.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Strictly increasing thresholds.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        betas: Vec<f64>,
        /// ROC CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also score every threshold with the contrast pathway off and print the comparison.
        #[arg(long)]
        ablation: bool,
    },
    /// Mean target response over a sweep of one stimulus property.
    Tune {
        /// contrast, velocity, width or height
        #[arg(long)]
        axis: TuningAxis,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
        #[command(flatten)]
        sequence: SequenceArgs,
        /// Tuning CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SequenceArgs {
    /// Sequence spec file; the built-in cluttered scene when absent.
    #[arg(long, value_name = "FILE")]
    sequence: Option<PathBuf>,
    /// Override one sequence key; repeatable.
    #[arg(long = "seq-set", value_name = "KEY=VALUE")]
    seq_overrides: Vec<String>,
}

impl SequenceArgs {
    fn spec(&self) -> Result<SequenceSpec> {
        let (mut spec, base) = match &self.sequence {
            Some(p) => (SequenceSpec::from_file(p)?, p.parent().map(Path::to_path_buf)),
            None => (SequenceSpec::default(), None),
        };
        for o in &self.seq_overrides {
            let (k, v) = parse_override(o)?;
            spec.set(&k, &v, base.as_deref())?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Frames from disk, or a synthetic sequence rendered on the fly.
#[derive(Debug, Args)]
struct Source {
    /// Directory of numbered frames or a manifest file listing them.
    #[arg(long, conflicts_with_all = ["sequence", "seq_overrides"])]
    frames: Option<PathBuf>,
    #[command(flatten)]
    sequence: SequenceArgs,
}

enum Frames {
    Disk(PathBuf),
    Synthetic(Box<Sequence>),
}

impl Source {
    fn open(&self) -> Result<Frames> {
        match &self.frames {
            Some(p) => Ok(Frames::Disk(p.clone())),
            None => Ok(Frames::Synthetic(Box::new(generate_sequence(&self.sequence.spec()?)?))),
        }
    }
}

impl Frames {
    fn stream(&self) -> Result<Box<dyn Iterator<Item = Result<Frame>> + '_>> {
        Ok(match self {
            Frames::Disk(p) => Box::new(io::FrameReader::open(p)?),
            Frames::Synthetic(seq) => Box::new(seq.frames().map(Ok)),
        })
    }

    fn ground_truth(&self, explicit: Option<&Path>) -> Result<Vec<GroundTruthPoint>> {
        match (explicit, self) {
            (Some(p), _) => read_ground_truth(p),
            (None, Frames::Synthetic(seq)) => Ok(seq.ground_truth()),
            (None, Frames::Disk(_)) => Err(Error::Config("--ground-truth is required with --frames".into())),
        }
    }
}

fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthPoint>> {
    io::read_records(io::open_file(path)?)
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    config.apply_overrides(&cli.overrides)?;
    config.validate()?;
    Ok(config)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        context: format!("creating {}", dir.display()),
        source: e,
    })
}

fn summarize(out: &RunOutput) {
    let count = |l: Label| out.traces.iter().filter(|t| t.label == l).count();
    eprintln!(
        "{} frames ({} warm-up), {} detections, {} traces: {} target, {} fake, {} undecided",
        out.frames,
        out.warm_up_frames,
        out.detections.len(),
        out.traces.len(),
        count(Label::Target),
        count(Label::Fake),
        count(Label::Undecided)
    );
}

fn cmd_run(config: &RunConfig, source: &Source, out: &Path) -> Result<()> {
    let frames = source.open()?;
    let result = stmd_core::run(config, frames.stream()?)?;
    create_dir(out)?;
    io::with_file(&out.join("detections.csv"), |w| {
        io::write_detections(&result.detections, w)
    })?;
    io::with_file(&out.join("traces.csv"), |w| {
        io::write_traces(&result.trace_records(), w)
    })?;
    io::with_file(&out.join("directions.csv"), |w| {
        io::write_directions(&result.directions, w)
    })?;
    if let Frames::Synthetic(seq) = &frames {
        io::with_file(&out.join("ground_truth.csv"), |w| {
            io::write_ground_truth(&seq.ground_truth(), w)
        })?;
    }
    summarize(&result);
    Ok(())
}

fn cmd_synth(sequence: &SequenceArgs, out: &Path) -> Result<()> {
    let seq = generate_sequence(&sequence.spec()?)?;
    create_dir(out)?;
    for (t, frame) in seq.frames().enumerate() {
        io::write_pgm(&frame, &out.join(format!("{t:06}.pgm")))?;
    }
    io::with_file(&out.join("ground_truth.csv"), |w| {
        io::write_ground_truth(&seq.ground_truth(), w)
    })?;
    eprintln!("wrote {} frames to {}", seq.len(), out.display());
    Ok(())
}

fn cmd_eval(config: &RunConfig, detections: &Path, gt_path: &Path, start: Option<u64>, end: Option<u64>) -> Result<()> {
    let dets: Vec<io::DetectionRecord> = io::read_records(io::open_file(detections)?)?;
    let gt = read_ground_truth(gt_path)?;
    let start = match start {
        Some(s) => s,
        None => MotionPathway::new(config.pipeline.clone())?.warm_up_frames() as u64,
    };
    let end = end.unwrap_or_else(|| gt.iter().map(|g| g.frame + 1).max().unwrap_or(0));
    if end < start {
        return Err(Error::Config(format!("scoring range {start}..{end} is empty")));
    }
    let scored: Vec<_> = dets
        .into_iter()
        .filter(|d| d.label == Label::Target || (config.include_undecided && d.label == Label::Undecided))
        .collect();
    let r = match_and_score(&scored, &gt, MATCH_RADIUS, start..end);
    println!("detection_rate = {}", r.detection_rate());
    println!("false_alarm_rate = {}", r.false_alarm_rate());
    println!("true_detections = {}", r.true_detections);
    println!("actual_targets = {}", r.actual_targets);
    println!("false_detections = {}", r.false_detections);
    println!("frames = {}", r.frames);
    Ok(())
}

fn cmd_roc(
    config: &RunConfig,
    source: &Source,
    gt: Option<&Path>,
    betas: &[f64],
    out: Option<&Path>,
    show_ablation: bool,
) -> Result<()> {
    let frames = source.open()?;
    let gt = frames.ground_truth(gt)?;
    let floor = betas.iter().copied().fold(f64::INFINITY, f64::min);
    let cache = CandidateCache::build(config, floor.max(0.0), frames.stream()?)?;
    let points = roc_sweep(&cache, &gt, betas, config)?;
    match out {
        Some(p) => io::with_file(p, |w| io::write_roc(&points, w))?,
        None => io::write_roc(&points, std::io::stdout().lock())?,
    }
    if show_ablation {
        eprintln!("beta\tD_R with\tF_A with\tD_R without\tF_A without\tsame positions");
        for row in ablation(&cache, &gt, betas, config)? {
            eprintln!(
                "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}",
                row.beta,
                row.with_contrast.detection_rate(),
                row.with_contrast.false_alarm_rate(),
                row.without_contrast.detection_rate(),
                row.without_contrast.false_alarm_rate(),
                row.positions_identical
            );
        }
    }
    Ok(())
}

fn cmd_tune(
    config: &RunConfig,
    axis: TuningAxis,
    values: &[f64],
    sequence: &SequenceArgs,
    out: Option<&Path>,
) -> Result<()> {
    let records = tuning_experiment(axis, values, &sequence.spec()?, &config.pipeline)?;
    match out {
        Some(p) => io::with_file(p, |w| io::write_tuning(&records, w)),
        None => io::write_tuning(&records, std::io::stdout().lock()),
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Run { source, out } => cmd_run(&config, source, out),
        Command::Synth { sequence, out } => cmd_synth(sequence, out),
        Command::Eval {
            detections,
            ground_truth,
            start,
            end,
        } => cmd_eval(&config, detections, ground_truth, *start, *end),
        Command::Roc {
            source,
            ground_truth,
            betas,
            out,
            ablation,
        } => cmd_roc(
            &config,
            source,
            ground_truth.as_deref(),
            betas,
            out.as_deref(),
            *ablation,
        ),
        Command::Tune {
            axis,
            values,
            sequence,
            out,
        } => cmd_tune(&config, *axis, values, sequence, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage mistakes are configuration errors
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
