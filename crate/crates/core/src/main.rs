use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sparsetrack::io::{frames_to_string, generate_scenario, write_atomic, ScenarioSpec};
use sparsetrack::pipeline::{report_to_string, run_eval, run_geometry_selfcheck, run_track};
use sparsetrack::tracker::AssociationMode;

/// Verbosity: 0 silent, 1 summaries (default), 2 adds full reports.
const VERBOSITY_VAR: &str = "SPARSETRACK_VERBOSITY";

#[derive(Parser)]
#[command(name = "sparsetrack", version, about = "3D multi-object tracking with multi-Bernoulli mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track a detection file.
    Track {
        #[arg(long)]
        detections: PathBuf,
        /// Camera rig; detections no camera sees lose their RoI feature.
        #[arg(long)]
        cameras: Option<PathBuf>,
        /// Tracker TOML; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_mode)]
        mode: AssociationMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a track file against ground truth.
    Eval {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic scenario.
    Sim {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the randomized geometry and cascade checks on a rig.
    Selfcheck {
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        seed: u64,
    },
}

fn parse_mode(s: &str) -> Result<AssociationMode, String> {
    s.parse().map_err(|e: sparsetrack::Error| e.to_string())
}

fn verbosity() -> u8 {
    std::env::var(VERBOSITY_VAR)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(1)
}

fn run(cli: Cli) -> sparsetrack::Result<bool> {
    let v = verbosity();
    match cli.command {
        Command::Track {
            detections,
            cameras,
            config,
            mode,
            out,
        } => {
            let s = run_track(&detections, cameras.as_deref(), config.as_deref(), mode, &out)?;
            if v >= 1 {
                eprintln!(
                    "{}: {} sequences, {} frames, {} detections -> {} track boxes ({} tracks) in {}",
                    s.mode,
                    s.sequences,
                    s.frames,
                    s.detections,
                    s.track_boxes,
                    s.distinct_tracks,
                    out.display()
                );
            }
            Ok(true)
        }
        Command::Eval { tracks, gt, out } => {
            let r = run_eval(&tracks, &gt, &out)?;
            if v >= 2 {
                eprint!("{}", report_to_string(&r));
            } else if v >= 1 {
                eprintln!(
                    "MOTA {:.4}  MOTP {}  AMOTA {:.4}  IDSW {}  FP {}  FN {}",
                    r.mota,
                    r.motp.map_or("n/a".to_string(), |m| format!("{m:.4}")),
                    r.amota,
                    r.id_switches,
                    r.false_positives,
                    r.misses
                );
            }
            Ok(true)
        }
        Command::Sim { spec, seed, out_dir } => {
            let spec = ScenarioSpec::load(&spec)?;
            let s = generate_scenario(&spec, seed)?;
            let det = frames_to_string(&s.detections);
            let gt = frames_to_string(&s.ground_truth);
            std::fs::create_dir_all(&out_dir)?;
            write_atomic(&out_dir.join("detections.jsonl"), det.as_bytes())?;
            write_atomic(&out_dir.join("ground_truth.jsonl"), gt.as_bytes())?;
            if v >= 1 {
                eprintln!("{} frames written to {}", s.detections.len(), out_dir.display());
            }
            Ok(true)
        }
        Command::Selfcheck { cameras, seed } => {
            let r = run_geometry_selfcheck(&cameras, seed)?;
            println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
            if v >= 1 {
                eprintln!("selfcheck {}", if r.passed { "passed" } else { "FAILED" });
            }
            Ok(r.passed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            if verbosity() >= 1 {
                eprintln!("error: {e}");
            }
            ExitCode::from(2)
        }
    }
}
