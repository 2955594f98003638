use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use facepipe_core::evaluation::evaluate;
use facepipe_core::runtime::{read_trace, render_ppm};
use facepipe_core::scheduler::CadencePolicy;
use facepipe_core::{run, ClockMode, Error, PipelineConfig, RunOutput, Scenario};

#[derive(Debug, Parser)]
#[command(
    name = "facepipe",
    version,
    about = "Run and evaluate the face analysis pipeline on synthetic scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipeline over a scenario and write its trace, annotated frames and metrics.
    Run(RunArgs),
    /// Score a trace against the scenario it was produced from.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// `virtual` (deterministic, simulated time) or `realtime` (threads, wall clock).
    #[arg(long, default_value_t = ClockMode::Virtual)]
    clock: ClockMode,
    /// Output directory.
    #[arg(long, env = "FACEPIPE_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Replace the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write one PPM image per visualization tick under frames/.
    #[arg(long)]
    dump_frames: bool,
    /// Run age every N recognition cycles.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    age_every: Option<u32>,
    /// Run gender every N recognition cycles.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    gender_every: Option<u32>,
    /// Run expression every N recognition cycles.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    expression_every: Option<u32>,
    /// Frame buffer capacity.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    buffer_capacity: Option<u64>,
    /// Smoothing window length K.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    window: Option<u64>,
    /// Tracker gate as a fraction of the frame diagonal.
    #[arg(long)]
    max_match_distance: Option<f64>,
    /// Missed detection passes a track survives.
    #[arg(long)]
    expiry_misses: Option<u32>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// trace.jsonl written by `facepipe run`.
    #[arg(long)]
    trace: PathBuf,
    /// Scenario the trace was produced from.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for eval.json and table.csv.
    #[arg(long, env = "FACEPIPE_OUT_DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("bad scenario {path}: {source}")]
    Scenario { path: PathBuf, source: Error },
    #[error("bad configuration: {0}")]
    Config(Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("trace does not match scenario: {0}")]
    Mismatch(Error),
    #[error(transparent)]
    Pipeline(Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Scenario { .. } | CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Mismatch(_) => 4,
            CliError::Pipeline(_) => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    Scenario::load(path).map_err(|source| CliError::Scenario {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn build_config(args: &RunArgs, scenario: &Scenario) -> Result<PipelineConfig, CliError> {
    let mut config = PipelineConfig::for_scenario(scenario).with_clock(args.clock);
    let c = config.cadence;
    config.cadence = CadencePolicy {
        expression_every: args.expression_every.unwrap_or(c.expression_every),
        age_every: args.age_every.unwrap_or(c.age_every),
        gender_every: args.gender_every.unwrap_or(c.gender_every),
    };
    if let Some(n) = args.buffer_capacity {
        config.buffer_capacity = n as usize;
    }
    if let Some(k) = args.window {
        config.window = k as usize;
    }
    if let Some(d) = args.max_match_distance {
        config.tracker.max_match_distance = d;
    }
    if let Some(m) = args.expiry_misses {
        config.tracker.expiry_misses = m;
    }
    config.validate().map_err(CliError::Config)?;
    Ok(config)
}

fn write_run(
    out: &Path,
    output: &RunOutput,
    scenario: &Scenario,
    dump_frames: bool,
) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_file(&out.join("trace.jsonl"), output.trace_jsonl().as_bytes())?;
    write_file(
        &out.join("annotated.jsonl"),
        output.annotated_jsonl().as_bytes(),
    )?;
    let metrics = serde_json::to_string_pretty(&output.metrics).expect("metrics serialize") + "\n";
    write_file(&out.join("metrics.json"), metrics.as_bytes())?;
    if dump_frames {
        let dir = out.join("frames");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let [w, h] = scenario.frame_size;
        for (i, frame) in output.annotated.iter().enumerate() {
            write_file(
                &dir.join(format!("tick_{i:06}.ppm")),
                &render_ppm(frame, w, h),
            )?;
        }
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let config = build_config(&args, &scenario)?;
    let output = run(&scenario, &config).map_err(CliError::Pipeline)?;
    write_run(&args.out, &output, &scenario, args.dump_frames)?;
    let m = &output.metrics;
    println!(
        "fps {:.2} | faces tracked {} | mean per-face recognition {:.1} ms | frames {} | drops {}",
        m.achieved_fps,
        m.tracks_created,
        m.mean_face_recognition_ms,
        m.frames_grabbed,
        m.drop_count
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.scenario)?;
    let file = fs::File::open(&args.trace).map_err(io_err(&args.trace))?;
    let trace = read_trace(BufReader::new(file)).map_err(|e| match e {
        Error::Io(source) => CliError::Io {
            path: args.trace.clone(),
            source,
        },
        other => CliError::Mismatch(other),
    })?;
    let report = evaluate(&trace, &scenario).map_err(|e| match e {
        Error::Mismatch(_) => CliError::Mismatch(e),
        other => CliError::Pipeline(other),
    })?;
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_file(&args.out.join("eval.json"), json.as_bytes())?;
    let table = report.to_csv();
    write_file(&args.out.join("table.csv"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(io::stderr(), "facepipe: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
