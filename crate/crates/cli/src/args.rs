//! Command-line flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use jigsolve_core::grid::GridShape;
use jigsolve_core::puzzlegen::{MeanSubtract, SynthKind};

#[derive(Debug, Parser)]
#[command(
    name = "jigsolve",
    version,
    about = "Generate, train on and solve jigsaw puzzles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a corpus of puzzle instances.
    Gen(GenArgs),
    /// Train a linear scorer on a corpus.
    Train(TrainArgs),
    /// Solve puzzles and write one record per puzzle plus an aggregate.
    Solve(SolveArgs),
    /// Sweep solver settings over the same puzzles.
    Bench(BenchArgs),
    /// Run the built-in brute-force checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Base seed; instance `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (0 = one per core).
    #[arg(long, env = "JIGSOLVE_THREADS", default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// Synthetic 2D source kind (synth-gradient, synth-blobs, synth-mixed).
    #[arg(long, default_value = "synth-mixed")]
    pub kind: SynthKind,

    /// Synthetic 3D source kind, used for `WxHxZ` grids.
    #[arg(long, default_value = "synth-mixed")]
    pub volume_kind: SynthKind,

    /// Directory of PGM/PPM images to cut instead of synthetic sources.
    #[arg(long)]
    pub input: Option<PathBuf>,

    /// Grid, `WxH` or `WxHxZ` (3D grids must be 2x2x2 or 3x3x3).
    #[arg(long, default_value = "3x3")]
    pub grid: GridShape,

    #[arg(long, default_value_t = 100)]
    pub count: usize,

    /// Edge of synthetic 2D sources in pixels (3D volumes are 120³).
    #[arg(long, default_value_t = 256)]
    pub size: usize,

    /// Centred crops and no flips.
    #[arg(long)]
    pub testing: bool,

    /// Horizontal flip probability per tile (ignored with --testing).
    #[arg(long, default_value_t = 0.5)]
    pub mirror_p: f64,

    /// Mean subtraction: patch, image or off.
    #[arg(long, default_value = "patch")]
    pub mean: MeanSubtract,

    #[arg(long, default_value = "corpus")]
    pub out: PathBuf,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "corpus")]
    pub corpus: PathBuf,

    /// Expected grid; must match the corpus when given.
    #[arg(long)]
    pub grid: Option<GridShape>,

    #[arg(long, default_value = "model.jsw")]
    pub out: PathBuf,

    /// Epoch log (JSON lines); defaults to the model path with `.log.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,

    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,

    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 10)]
    pub epochs: usize,

    /// Reorganization rounds per sample.
    #[arg(long, default_value_t = 5)]
    pub train_rounds: usize,

    #[arg(long, default_value_t = 0.01)]
    pub init_scale: f64,

    #[command(flatten)]
    pub common: Common,
}

/// Where the puzzles and scores come from.
#[derive(Debug, Clone, Args)]
pub struct Source {
    /// Corpus directory written by `gen`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,

    /// Grid for pixel-less oracle puzzles (without --corpus), or the expected
    /// corpus grid.
    #[arg(long)]
    pub grid: Option<GridShape>,

    /// Number of pixel-less oracle puzzles when no corpus is given.
    #[arg(long, default_value_t = 100)]
    pub count: usize,

    /// Model file written by `train`.
    #[arg(long, conflicts_with = "oracle")]
    pub model: Option<PathBuf>,

    /// Oracle noise level in [0, 1].
    #[arg(long)]
    pub oracle: Option<f64>,

    /// Oracle noise for the binary table only (defaults to --oracle).
    #[arg(long, requires = "oracle")]
    pub binary_noise: Option<f64>,

    /// Cap on candidates per refinement (unbounded when absent).
    #[arg(long)]
    pub candidate_cap: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: Source,

    #[arg(long, default_value_t = 3)]
    pub radius: usize,

    /// Maximum reorganization rounds.
    #[arg(long, default_value_t = 20)]
    pub rounds: usize,

    /// Unary terms only.
    #[arg(long)]
    pub no_binary: bool,

    /// Report path (JSON lines); `-` for stdout.
    #[arg(long, default_value = "-")]
    pub report: PathBuf,

    /// Add wall-clock time to the aggregate (breaks byte-for-byte
    /// reproducibility of reports).
    #[arg(long)]
    pub timing: bool,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub source: Source,

    /// Comma-separated radii.
    #[arg(long, default_value = "3")]
    pub radii: String,

    /// Comma-separated round caps.
    #[arg(long, default_value = "1,5,10,20")]
    pub rounds: String,

    /// Comma-separated binary settings (on, off).
    #[arg(long, default_value = "on,off")]
    pub binary: String,

    /// Comma-separated oracle noise levels; replaces --oracle for the sweep.
    #[arg(long)]
    pub noise: Option<String>,

    /// Report path (JSON lines); `-` for stdout.
    #[arg(long, default_value = "bench.jsonl")]
    pub report: PathBuf,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct SelftestArgs {
    /// Deliberately break a component to confirm the checks notice.
    #[arg(long, hide = true)]
    pub mutate: Option<Mutation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mutation {
    TieBreak,
}
