use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trackfuse_core::fusion::{FusionOptions, LearningWindow};

#[derive(Debug, Parser)]
#[command(name = "trackfuse", version, about = "HMM fusion of object trackers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trace, running the engine in the loop.
    Simulate(SimulateArgs),
    /// Stream a trace through the fusion engine.
    Run(RunArgs),
    /// Score a run report against a trace's ground truth.
    Evaluate(EvaluateArgs),
    /// Print a parameter file in readable form.
    Inspect(InspectArgs),
    /// Write the default initial parameters for a layout.
    Params(ParamsArgs),
    /// Simulate many seeds and compare the engine with its best channel.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output trace (JSON lines).
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Input trace (JSON lines).
    pub trace: PathBuf,
    /// Per-frame report CSV.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Summary JSON; printed to stdout when omitted.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Initial parameters instead of the layout's defaults.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Where to save the learned parameters.
    #[arg(long)]
    pub params_out: Option<PathBuf>,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Report CSV written by `run`.
    pub report: PathBuf,
    /// Trace carrying ground-truth boxes.
    pub trace: PathBuf,
    /// Per-frame overlap CSV.
    #[arg(long)]
    pub overlaps: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub params: PathBuf,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    #[arg(long, default_value_t = 3)]
    pub trackers: usize,
    /// Observables per tracker.
    #[arg(long, default_value_t = 3)]
    pub arity: usize,
    /// Observables shared by all trackers.
    #[arg(long, default_value_t = 0)]
    pub shared: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Number of seeds.
    #[arg(long, default_value_t = 50)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub first_seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub frames: usize,
    /// Channel failure rates are drawn uniformly from [rate-min, rate-max).
    #[arg(long, default_value_t = 0.002)]
    pub rate_min: f64,
    #[arg(long, default_value_t = 0.01)]
    pub rate_max: f64,
    /// Per-seed CSV.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WindowArg {
    Full,
    Segment,
}

/// Engine overrides shared by the commands that run the engine.
#[derive(Debug, Default, Args)]
pub struct EngineArgs {
    /// GEM iterations per accepted detection.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Frames the learner sees at each accepted detection.
    #[arg(long, value_enum)]
    pub window: Option<WindowArg>,
    #[arg(long)]
    pub gate_iou: Option<f64>,
    #[arg(long)]
    pub correct_iou: Option<f64>,
    /// Transition pseudo-count weight; 0 disables it.
    #[arg(long)]
    pub prior_weight: Option<f64>,
    #[arg(long)]
    pub min_state_mass: Option<f64>,
}

impl EngineArgs {
    pub fn apply(&self, base: &FusionOptions) -> FusionOptions {
        let mut o = base.clone();
        if let Some(v) = self.iters {
            o.max_iters = v;
        }
        if let Some(w) = self.window {
            o.window = match w {
                WindowArg::Full => LearningWindow::Full,
                WindowArg::Segment => LearningWindow::Segment,
            };
        }
        if let Some(v) = self.gate_iou {
            o.gate_iou = v;
        }
        if let Some(v) = self.correct_iou {
            o.correct_iou = v;
        }
        if let Some(v) = self.prior_weight {
            o.prior_weight = v;
        }
        if let Some(v) = self.min_state_mass {
            o.min_state_mass = v;
        }
        o
    }
}
