//! Brute-force checks that exercise the solver against exhaustive oracles.

use std::io::Write;

use anyhow::Result;
use jigsolve_core::assign::{min_cost_assignment_with, TieBreak};
use jigsolve_core::cost::{row_softmax, softmax9, BinaryTable, UnaryMatrix};
use jigsolve_core::grid::{
    ball_size, enumerate_hamming_ball, next_permutation, random_permutation, Configuration,
    GridShape,
};
use jigsolve_core::scorer::{loss_and_grad, FeatureSet, LinearScorer};
use jigsolve_core::search::{brute_force_argmin, predict, SolverOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::args::Mutation;
use crate::error::SelftestFailed;

struct Check {
    name: &'static str,
    tolerance: &'static str,
    run: fn(&Settings) -> std::result::Result<(), String>,
}

struct Settings {
    tie: TieBreak,
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut out = vec![p.clone()];
    while next_permutation(&mut p) {
        out.push(p.clone());
    }
    out
}

fn slot_sum(n: usize, costs: &[f64], p: &[usize]) -> f64 {
    (0..n).map(|s| costs[s * n + p[s]]).sum()
}

fn assignment_optimality(s: &Settings) -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..3000 {
        let n = rng.gen_range(2..=5);
        let costs: Vec<f64> = if trial % 2 == 0 {
            (0..n * n).map(|_| rng.gen_range(0.0..10.0)).collect()
        } else {
            (0..n * n).map(|_| rng.gen_range(0..3) as f64).collect()
        };
        let got = min_cost_assignment_with(n, &costs, s.tie).map_err(|e| e.to_string())?;
        let mut best: Option<(Vec<usize>, f64)> = None;
        for p in all_permutations(n) {
            let c = slot_sum(n, &costs, &p);
            if best.as_ref().is_none_or(|b| c < b.1) {
                best = Some((p, c));
            }
        }
        let (p, c) = best.unwrap();
        if got.cost != c || got.config.as_slice() != p.as_slice() {
            return Err(format!(
                "trial {trial}: got {} ({}), expected {p:?} ({c})",
                got.config, got.cost
            ));
        }
    }
    Ok(())
}

fn uniform_tie_break(s: &Settings) -> std::result::Result<(), String> {
    for n in 1..=9 {
        let costs = vec![1.0; n * n];
        let got = min_cost_assignment_with(n, &costs, s.tie).map_err(|e| e.to_string())?;
        if !got.config.is_identity() {
            return Err(format!("n = {n}: uniform costs gave {}", got.config));
        }
    }
    Ok(())
}

fn ball_counts(_: &Settings) -> std::result::Result<(), String> {
    for n in 1..=7 {
        let center = Configuration::identity(n);
        let perms = all_permutations(n);
        for radius in 0..=n {
            let counted = enumerate_hamming_ball(&center, radius).count() as u128;
            let filtered = perms
                .iter()
                .filter(|p| p.iter().enumerate().filter(|(i, &v)| *i != v).count() <= radius)
                .count() as u128;
            let formula = ball_size(n, radius);
            if counted != formula || filtered != formula {
                return Err(format!("n = {n}, r = {radius}: {counted} enumerated, {filtered} filtered, {formula} by formula"));
            }
        }
    }
    let spot = enumerate_hamming_ball(&Configuration::identity(9), 3).count();
    if spot != 205 {
        return Err(format!("n = 9, r = 3 gave {spot}, expected 205"));
    }
    Ok(())
}

fn gradient_check(_: &Settings) -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (w, h) in [(2, 2), (3, 3)] {
        let shape = GridShape::new_2d(w, h).map_err(|e| e.to_string())?;
        let n = shape.n();
        let d = 3;
        for _ in 0..3 {
            let model = LinearScorer::random(shape.clone(), d, 1, 0.3, &mut rng)
                .map_err(|e| e.to_string())?;
            let f = FeatureSet::new(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .map_err(|e| e.to_string())?;
            let truth = random_permutation(n, &mut rng);
            let worst = max_fd_error(&model, &f, &truth, &shape)?;
            if worst >= 1e-4 {
                return Err(format!("{shape}: relative error {worst:e}"));
            }
        }
    }
    Ok(())
}

/// Largest relative error between analytic and central-difference gradients.
pub fn max_fd_error(
    model: &LinearScorer,
    f: &FeatureSet,
    truth: &Configuration,
    shape: &GridShape,
) -> std::result::Result<f64, String> {
    let loss = |m: &LinearScorer| {
        loss_and_grad(m, f, truth, shape)
            .map(|r| r.0)
            .map_err(|e| e.to_string())
    };
    let (_, grad) = loss_and_grad(model, f, truth, shape).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..model.params().len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = loss(&probe)?;
        probe.params_mut()[i] = orig - h;
        let down = loss(&probe)?;
        probe.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let a = grad.0[i];
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
    }
    Ok(worst)
}

fn search_equivalence(_: &Settings) -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let shape = GridShape::new_2d(2, 2).map_err(|e| e.to_string())?;
    let opts = SolverOptions {
        radius: 4,
        ..SolverOptions::default()
    };
    for trial in 0..200 {
        let logits: Vec<f64> = (0..16).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let u = row_softmax(4, &logits).map_err(|e| e.to_string())?;
        let mut dist = Vec::with_capacity(16 * 9);
        for _ in 0..16 {
            let l: [f64; 9] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
            dist.extend_from_slice(&softmax9(&l).map_err(|e| e.to_string())?);
        }
        let v = BinaryTable::new(4, dist).map_err(|e| e.to_string())?;
        let got = predict(&u, Some(&v), &shape, &opts)
            .map_err(|e| e.to_string())?
            .config;
        let want = brute_force_argmin(&u, Some(&v), &shape).map_err(|e| e.to_string())?;
        if got != want {
            return Err(format!("trial {trial}: predict {got}, exhaustive {want}"));
        }
    }
    let u = UnaryMatrix::uniform(9);
    let g = GridShape::new_2d(3, 3).map_err(|e| e.to_string())?;
    let c =
        brute_force_argmin(&u, Some(&BinaryTable::uniform(9)), &g).map_err(|e| e.to_string())?;
    if !c.is_identity() {
        return Err(format!("uniform 3x3 tables gave {c}"));
    }
    Ok(())
}

const CHECKS: &[Check] = &[
    Check {
        name: "assignment optimality vs exhaustive, n <= 5, 3000 matrices",
        tolerance: "exact cost and assignment",
        run: assignment_optimality,
    },
    Check {
        name: "uniform costs give the identity, n <= 9",
        tolerance: "exact",
        run: uniform_tie_break,
    },
    Check {
        name: "Hamming ball sizes, n <= 7, every radius; n = 9, r = 3 -> 205",
        tolerance: "exact",
        run: ball_counts,
    },
    Check {
        name: "loss gradients vs central differences (step 1e-5), n = 4 and 9",
        tolerance: "relative error < 1e-4",
        run: gradient_check,
    },
    Check {
        name: "full-radius search vs exhaustive argmin, 2x2, 200 instances",
        tolerance: "exact configuration",
        run: search_equivalence,
    },
];

pub fn run(mutation: Option<Mutation>, out: &mut impl Write) -> Result<()> {
    let settings = Settings {
        tie: match mutation {
            Some(Mutation::TieBreak) => TieBreak::ReverseLexicographic,
            None => TieBreak::Lexicographic,
        },
    };
    let mut failed = Vec::new();
    for check in CHECKS {
        match (check.run)(&settings) {
            Ok(()) => writeln!(out, "PASS  {} [{}]", check.name, check.tolerance)?,
            Err(why) => {
                writeln!(out, "FAIL  {} [{}]: {why}", check.name, check.tolerance)?;
                failed.push(check.name.to_string());
            }
        }
    }
    if failed.is_empty() {
        writeln!(out, "all {} checks passed", CHECKS.len())?;
        Ok(())
    } else {
        Err(SelftestFailed(failed).into())
    }
}
