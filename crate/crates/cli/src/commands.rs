//! The five subcommands.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use jigsolve_core::grid::GridShape;
use jigsolve_core::puzzlegen::PuzzleInstance;
use jigsolve_core::scorer::{train_sgd, LinearScorer, ScoreProvider, TrainOptions};
use jigsolve_core::search::SolverOptions;
use serde::Serialize;

use crate::args::{
    BenchArgs, Command, Common, GenArgs, SelftestArgs, SolveArgs, Source, TrainArgs,
};
use crate::corpus::{self, config_space};
use crate::error::{usage, UsageError};
use crate::report::{
    open_report, solve_all, truth_only_puzzles, write_line, Aggregate, ScorerSpec, Tally,
};
use crate::selftest;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => with_pool(&a.common, || cmd_gen(&a)),
        Command::Train(a) => with_pool(&a.common, || cmd_train(&a)),
        Command::Solve(a) => with_pool(&a.common, || cmd_solve(&a)),
        Command::Bench(a) => with_pool(&a.common, || cmd_bench(&a)),
        Command::Selftest(a) => cmd_selftest(&a),
    }
}

fn with_pool<T: Send>(common: &Common, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .context("starting worker pool")?;
    pool.install(f)
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let count = corpus::generate(args)?;
    println!(
        "wrote {count} {} instances to {} (configuration space {})",
        args.grid,
        args.out.display(),
        config_space(&args.grid)
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainConfig<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    grid: String,
    samples: usize,
    feature_dim: usize,
    recipe: u32,
    unary_params: usize,
    binary_params: usize,
    learning_rate: f64,
    batch_size: usize,
    epochs: usize,
    train_rounds: usize,
    weight_init_scale: f64,
    seed: u64,
    model: &'a str,
}

#[derive(Serialize)]
struct EpochRecord {
    #[serde(rename = "type")]
    kind: &'static str,
    epoch: usize,
    loss: f64,
    mean_rounds: f64,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let opts = TrainOptions {
        learning_rate: args.lr,
        batch_size: args.batch_size,
        epochs: args.epochs,
        train_rounds: args.train_rounds,
        seed: args.common.seed,
        weight_init_scale: args.init_scale,
    };
    if let Err(e) = opts.validate() {
        return usage(e.to_string());
    }
    let corpus = corpus::load(&args.corpus, true)?;
    if let Some(g) = &args.grid {
        if *g != corpus.shape {
            return usage(format!(
                "--grid {g} does not match the {} corpus",
                corpus.shape
            ));
        }
    }
    let (model, log) = train_sgd(&corpus.puzzles, &opts)?;
    model
        .save(&args.out)
        .with_context(|| format!("writing model {}", args.out.display()))?;

    let log_path = args.log.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".log.jsonl");
        PathBuf::from(p)
    });
    let mut out = open_report(&log_path)?;
    write_line(
        &mut out,
        &TrainConfig {
            kind: "config",
            grid: corpus.shape.to_string(),
            samples: corpus.puzzles.len(),
            feature_dim: model.feature_dim(),
            recipe: model.recipe(),
            unary_params: model.unary_param_count(),
            binary_params: model.binary_param_count(),
            learning_rate: opts.learning_rate,
            batch_size: opts.batch_size,
            epochs: opts.epochs,
            train_rounds: opts.train_rounds,
            weight_init_scale: opts.weight_init_scale,
            seed: opts.seed,
            model: &args.out.to_string_lossy(),
        },
    )?;
    for (i, (&loss, &rounds)) in log.epoch_loss.iter().zip(&log.epoch_rounds).enumerate() {
        write_line(
            &mut out,
            &EpochRecord {
                kind: "epoch",
                epoch: i + 1,
                loss,
                mean_rounds: rounds,
            },
        )?;
    }
    out.flush()?;
    println!(
        "trained {} on {} puzzles: loss {:.4} -> {:.4}; model {}, log {}",
        model.describe(),
        corpus.puzzles.len(),
        log.epoch_loss[0],
        log.epoch_loss[log.epoch_loss.len() - 1],
        args.out.display(),
        log_path.display()
    );
    Ok(())
}

fn check_noise(flag: &str, eps: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) {
        return usage(format!("{flag} {eps} must be within [0, 1]"));
    }
    Ok(eps)
}

/// Resolves the puzzles and the scorer (required when `needs_scorer`).
fn resolve(
    src: &Source,
    seed: u64,
    needs_scorer: bool,
) -> Result<(GridShape, Vec<PuzzleInstance>, Option<ScorerSpec>)> {
    let scorer = match (&src.model, src.oracle) {
        (Some(path), _) => Some(ScorerSpec::Model(
            LinearScorer::load(path)
                .with_context(|| format!("loading model {}", path.display()))?,
        )),
        (None, Some(eps)) => {
            let unary = check_noise("--oracle", eps)?;
            let binary = check_noise("--binary-noise", src.binary_noise.unwrap_or(eps))?;
            Some(ScorerSpec::Oracle { unary, binary })
        }
        (None, None) if needs_scorer => return usage("give either --model or --oracle"),
        (None, None) => None,
    };
    let pixels = scorer.as_ref().is_some_and(ScorerSpec::needs_pixels);
    let (shape, puzzles) = match (&src.corpus, &src.grid) {
        (Some(dir), grid) => {
            let c = corpus::load(dir, pixels)?;
            if let Some(g) = grid {
                if *g != c.shape {
                    return usage(format!("--grid {g} does not match the {} corpus", c.shape));
                }
            }
            (c.shape, c.puzzles)
        }
        (None, Some(g)) => {
            if pixels {
                return usage("a model needs a --corpus with tiles");
            }
            if src.count == 0 {
                return usage("--count must be at least 1");
            }
            (g.clone(), truth_only_puzzles(g, src.count, seed)?)
        }
        (None, None) => return usage("give --corpus or --grid"),
    };
    if let Some(ScorerSpec::Model(m)) = &scorer {
        if m.shape() != &shape {
            return usage(format!(
                "model is for {} puzzles, corpus is {shape}",
                m.shape()
            ));
        }
    }
    if src.candidate_cap == Some(0) {
        return usage("--candidate-cap must be at least 1");
    }
    Ok((shape, puzzles, scorer))
}

pub fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let seed = args.common.seed;
    let started = Instant::now();
    let (shape, puzzles, scorer) = resolve(&args.source, seed, true)?;
    let scorer = scorer.expect("resolve requires a scorer");
    let opts = SolverOptions {
        radius: args.radius,
        max_rounds: args.rounds,
        use_binary: !args.no_binary,
        candidate_cap: args.source.candidate_cap,
    };
    if let Err(e) = opts.validate() {
        return usage(e.to_string());
    }
    let mut out = open_report(&args.report)?;
    let mut tally = Tally::new(opts.max_rounds);
    solve_all(&puzzles, &scorer, &opts, seed, |r| {
        tally.add(r);
        write_line(&mut out, r)?;
        out.flush()?;
        Ok(())
    })?;
    let mut agg = tally.finish(seed, &shape, &scorer, &opts);
    if args.timing {
        agg.wall_time_s = Some(started.elapsed().as_secs_f64());
    }
    write_line(&mut out, &agg)?;
    out.flush()?;
    if args.report.as_os_str() != "-" {
        print_summary(&[agg]);
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> Result<Vec<T>> {
    let items = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| UsageError(format!("{flag}: cannot parse {s:?}")).into())
        })
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return usage(format!("{flag} is empty; nothing to sweep"));
    }
    Ok(items)
}

fn parse_binary(text: &str) -> Result<Vec<bool>> {
    parse_list::<String>("--binary", text)?
        .iter()
        .map(|s| match s.as_str() {
            "on" | "true" => Ok(true),
            "off" | "false" => Ok(false),
            other => usage(format!("--binary: expected on or off, got {other:?}")),
        })
        .collect()
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let seed = args.common.seed;
    let radii: Vec<usize> = parse_list("--radii", &args.radii)?;
    let rounds: Vec<usize> = parse_list("--rounds", &args.rounds)?;
    let binary = parse_binary(&args.binary)?;
    let noise = match &args.noise {
        Some(text) => {
            if args.source.model.is_some() {
                return usage("--noise sweeps the oracle and cannot be combined with --model");
            }
            let levels: Vec<f64> = parse_list("--noise", text)?;
            levels
                .into_iter()
                .map(|e| check_noise("--noise", e))
                .collect::<Result<Vec<_>>>()?
        }
        None => Vec::new(),
    };
    let (shape, puzzles, scorer) = resolve(&args.source, seed, noise.is_empty())?;
    let scorers: Vec<ScorerSpec> = if noise.is_empty() {
        vec![scorer.expect("resolve requires a scorer")]
    } else {
        noise
            .iter()
            .map(|&e| {
                let b = args
                    .source
                    .binary_noise
                    .map_or(Ok(e), |b| check_noise("--binary-noise", b))?;
                Ok(ScorerSpec::Oracle {
                    unary: e,
                    binary: b,
                })
            })
            .collect::<Result<_>>()?
    };

    let mut out = open_report(&args.report)?;
    let mut all = Vec::new();
    for scorer in &scorers {
        for &radius in &radii {
            for &max_rounds in &rounds {
                for &use_binary in &binary {
                    let opts = SolverOptions {
                        radius,
                        max_rounds,
                        use_binary,
                        candidate_cap: args.source.candidate_cap,
                    };
                    if let Err(e) = opts.validate() {
                        return usage(e.to_string());
                    }
                    let mut tally = Tally::new(max_rounds);
                    solve_all(&puzzles, scorer, &opts, seed, |r| {
                        tally.add(r);
                        Ok(())
                    })?;
                    let mut agg = tally.finish(seed, &shape, scorer, &opts);
                    agg.kind = "sweep";
                    write_line(&mut out, &agg)?;
                    out.flush()?;
                    all.push(agg);
                }
            }
        }
    }
    print_summary(&all);
    Ok(())
}

fn print_summary(rows: &[Aggregate]) {
    println!(
        "{:<16} {:>6} {:>6} {:>6} {:>8} {:>8} {:>8} {:>11}",
        "scorer", "radius", "rounds", "binary", "exact", "d<=2", "mean_rd", "first_cost"
    );
    for a in rows {
        println!(
            "{:<16} {:>6} {:>6} {:>6} {:>8.4} {:>8.4} {:>8.3} {:>11.4}",
            a.scorer,
            a.radius,
            a.max_rounds,
            if a.use_binary { "on" } else { "off" },
            a.exact_rate,
            a.d_le_2_rate,
            a.mean_rounds,
            a.mean_first_round_cost
        );
    }
}

pub fn cmd_selftest(args: &SelftestArgs) -> Result<()> {
    selftest::run(args.mutate, &mut std::io::stdout().lock())
}
