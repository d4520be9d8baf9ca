//! JSON-lines records and the batch solve driver behind `solve` and `bench`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::Result;
use jigsolve_core::grid::{random_permutation, GridShape};
use jigsolve_core::puzzlegen::PuzzleInstance;
use jigsolve_core::scorer::{LinearScorer, OracleScorer, ScoreProvider};
use jigsolve_core::search::{solve_iterative, SolveTrace, SolverOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::config_space;

/// How each puzzle gets its score tables.
#[derive(Clone, Debug)]
pub enum ScorerSpec {
    Oracle { unary: f64, binary: f64 },
    Model(LinearScorer),
}

impl ScorerSpec {
    pub fn needs_pixels(&self) -> bool {
        matches!(self, ScorerSpec::Model(_))
    }

    pub fn describe(&self) -> String {
        match self {
            ScorerSpec::Oracle { unary, binary } if unary == binary => format!("oracle:{unary}"),
            ScorerSpec::Oracle { unary, binary } => format!("oracle:{unary}/{binary}"),
            ScorerSpec::Model(m) => m.describe(),
        }
    }

    /// A fresh provider for puzzle `index`; oracle noise comes from its own
    /// stream so results do not depend on scheduling.
    fn provider(&self, seed: u64, index: usize) -> Result<Box<dyn ScoreProvider + '_>> {
        Ok(match self {
            ScorerSpec::Oracle { unary, binary } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
                rng.set_stream(2);
                Box::new(OracleScorer::from_rng(*unary, *binary, rng)?)
            }
            ScorerSpec::Model(m) => Box::new(m.clone()),
        })
    }
}

/// Pixel-less puzzles with uniformly random truths, for oracle runs.
pub fn truth_only_puzzles(
    shape: &GridShape,
    count: usize,
    seed: u64,
) -> Result<Vec<PuzzleInstance>> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            rng.set_stream(1);
            Ok(PuzzleInstance::truth_only(
                shape.clone(),
                random_permutation(shape.n(), &mut rng),
            )?)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct PuzzleRecord {
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub index: usize,
    pub rounds_used: usize,
    pub converged: bool,
    pub solved: bool,
    pub final_hamming: usize,
    pub first_round_cost: f64,
    pub last_round_cost: f64,
    /// Solved state of the arrangement after each round up to the cap.
    #[serde(skip)]
    pub solved_after: Vec<bool>,
    #[serde(skip)]
    pub binary_disabled: bool,
}

impl PuzzleRecord {
    fn from_trace(index: usize, trace: &SolveTrace, max_rounds: usize) -> Self {
        let mut solved_after = Vec::with_capacity(max_rounds);
        for r in &trace.rounds {
            solved_after.push(r.hamming_to_truth == Some(0));
        }
        let solved = trace.solved.unwrap_or(false);
        solved_after.resize(max_rounds, solved);
        Self {
            kind: "puzzle",
            index,
            rounds_used: trace.rounds_used,
            converged: trace.converged,
            solved,
            final_hamming: trace.final_distance(),
            first_round_cost: trace.rounds[0].cost.total,
            last_round_cost: trace.rounds[trace.rounds.len() - 1].cost.total,
            solved_after,
            binary_disabled: trace.binary_disabled,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Aggregate {
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub seed: u64,
    pub grid: String,
    pub config_space: String,
    pub scorer: String,
    pub radius: usize,
    pub max_rounds: usize,
    pub use_binary: bool,
    pub binary_disabled: bool,
    pub puzzles: usize,
    pub solved: usize,
    pub exact_rate: f64,
    pub d_le_2_rate: f64,
    pub mean_rounds: f64,
    pub mean_first_round_cost: f64,
    /// Fraction solved after each round.
    pub per_round_solved: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

/// Running totals for an [`Aggregate`].
pub struct Tally {
    count: usize,
    solved: usize,
    near: usize,
    rounds: usize,
    first_cost: f64,
    per_round: Vec<usize>,
    binary_disabled: bool,
}

impl Tally {
    pub fn new(max_rounds: usize) -> Self {
        Self {
            count: 0,
            solved: 0,
            near: 0,
            rounds: 0,
            first_cost: 0.0,
            per_round: vec![0; max_rounds],
            binary_disabled: false,
        }
    }

    pub fn add(&mut self, r: &PuzzleRecord) {
        self.count += 1;
        self.solved += r.solved as usize;
        self.near += (r.final_hamming <= 2) as usize;
        self.rounds += r.rounds_used;
        self.first_cost += r.first_round_cost;
        for (acc, &s) in self.per_round.iter_mut().zip(&r.solved_after) {
            *acc += s as usize;
        }
        self.binary_disabled |= r.binary_disabled;
    }

    pub fn finish(
        &self,
        seed: u64,
        shape: &GridShape,
        scorer: &ScorerSpec,
        opts: &SolverOptions,
    ) -> Aggregate {
        let n = self.count.max(1) as f64;
        Aggregate {
            kind: "aggregate",
            seed,
            grid: shape.to_string(),
            config_space: config_space(shape),
            scorer: scorer.describe(),
            radius: opts.radius,
            max_rounds: opts.max_rounds,
            use_binary: opts.use_binary,
            binary_disabled: self.binary_disabled,
            puzzles: self.count,
            solved: self.solved,
            exact_rate: self.solved as f64 / n,
            d_le_2_rate: self.near as f64 / n,
            mean_rounds: self.rounds as f64 / n,
            mean_first_round_cost: self.first_cost / n,
            per_round_solved: self.per_round.iter().map(|&c| c as f64 / n).collect(),
            wall_time_s: None,
        }
    }
}

/// Puzzles are solved in chunks of this many, each chunk written in index
/// order before the next starts.
const CHUNK: usize = 256;

/// Solves every puzzle, handing records to `sink` in index order.
pub fn solve_all(
    puzzles: &[PuzzleInstance],
    scorer: &ScorerSpec,
    opts: &SolverOptions,
    seed: u64,
    mut sink: impl FnMut(&PuzzleRecord) -> Result<()>,
) -> Result<()> {
    for (c, chunk) in puzzles.chunks(CHUNK).enumerate() {
        let records = chunk
            .par_iter()
            .enumerate()
            .map(|(j, p)| {
                let index = c * CHUNK + j;
                let mut provider = scorer.provider(seed, index)?;
                let trace = solve_iterative(provider.as_mut(), p, opts)?;
                Ok(PuzzleRecord::from_trace(index, &trace, opts.max_rounds))
            })
            .collect::<Result<Vec<_>>>()?;
        for r in &records {
            sink(r)?;
        }
    }
    Ok(())
}

pub type LineWriter = BufWriter<Box<dyn Write>>;

pub fn open_report(path: &Path) -> Result<LineWriter> {
    let out: Box<dyn Write> = if path.as_os_str() == "-" {
        Box::new(io::stdout())
    } else {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        Box::new(File::create(path)?)
    };
    Ok(BufWriter::new(out))
}

pub fn write_line<T: Serialize>(out: &mut impl Write, record: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")?;
    Ok(())
}
