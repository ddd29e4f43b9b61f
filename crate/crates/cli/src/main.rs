mod commands;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Occlusion-aware level-set stereo for two-layer figure/ground scenes.
#[derive(Debug, Parser)]
#[command(name = "levelstereo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate disparity, occlusions and the figure boundary for a stereo pair.
    Run(RunArgs),
    /// Generate a random-dot two-layer scene with full ground truth.
    Synth(SynthArgs),
    /// Score a predicted disparity map and occlusion mask against ground truth.
    Eval(EvalArgs),
    /// Dump the matching, monocular-boundary and occlusion-boundary volumes.
    Costvol(CostvolArgs),
}

/// Solver settings: a `key = value` file, then individual overrides.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set mu=2.0` (repeatable, applied after --config).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ViewArg {
    Cyclopean,
    Left,
}

impl From<ViewArg> for levelstereo::io::GtView {
    fn from(v: ViewArg) -> Self {
        match v {
            ViewArg::Cyclopean => Self::Cyclopean,
            ViewArg::Left => Self::Left,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
    /// Largest cyclopean disparity searched.
    #[arg(long)]
    dmax: usize,
    /// Initial contour `cx,cy,a,b` in pixels; defaults to a centred ellipse
    /// spanning half of each dimension.
    #[arg(long, value_name = "CX,CY,A,B")]
    init_ellipse: Option<String>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth disparity (PFM); enables metrics.
    #[arg(long)]
    gt_disparity: Option<PathBuf>,
    /// Frame the ground truth is expressed in.
    #[arg(long, value_enum, default_value = "cyclopean")]
    gt_view: ViewArg,
    /// Ground-truth foreground boundary mask (PNG/PGM); derived from
    /// disparity jumps when omitted.
    #[arg(long, requires = "gt_disparity")]
    gt_boundary: Option<PathBuf>,
    /// Identifier written to the metrics row.
    #[arg(long)]
    scene_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ShapeArg {
    Ellipse,
    Rect,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    width: usize,
    #[arg(long, default_value_t = 200)]
    height: usize,
    /// Foreground (figure) disparity.
    #[arg(long, default_value_t = 20.0)]
    dfg: f64,
    /// Background disparity.
    #[arg(long, default_value_t = 5.0)]
    dbg: f64,
    #[arg(long, value_enum, default_value = "ellipse")]
    shape: ShapeArg,
    /// Figure extent as a fraction of each image dimension.
    #[arg(long, default_value_t = 0.5)]
    fraction: f64,
    /// Disparity search range recorded with the scene; defaults to ceil(dfg) + 12.
    #[arg(long)]
    dmax: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred_disparity: PathBuf,
    #[arg(long)]
    pred_occlusion: PathBuf,
    #[arg(long)]
    gt_disparity: PathBuf,
    #[arg(long, value_enum, default_value = "cyclopean")]
    gt_view: ViewArg,
    #[arg(long)]
    gt_boundary: Option<PathBuf>,
    /// Metrics CSV path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "scene")]
    scene_id: String,
}

#[derive(Debug, Args)]
struct CostvolArgs {
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
    #[arg(long)]
    dmax: usize,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Synth(a) => commands::synth(a),
        Command::Eval(a) => commands::eval(a),
        Command::Costvol(a) => commands::costvol(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
