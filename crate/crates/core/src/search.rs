//! The full predictor: a Hungarian seed on the unary terms, refined over a
//! Hamming ball with the binary terms, and the iterative reorganization loop
//! run at test time.

use crate::assign::unary_argmin;
use crate::cost::{BinaryTable, CostBreakdown, CostEvaluator, UnaryMatrix};
use crate::error::{domain, Error, Result};
use crate::grid::{enumerate_hamming_ball, next_permutation, Configuration, GridShape};
use crate::puzzlegen::PuzzleInstance;
use crate::scorer::{Arrangement, FeatureSet, ScoreProvider};

/// Largest grid [`brute_force_argmin`] will enumerate.
pub const BRUTE_FORCE_MAX_N: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolverOptions {
    pub radius: usize,
    pub max_rounds: usize,
    pub use_binary: bool,
    /// Stop enumerating the ball after this many candidates.
    pub candidate_cap: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            radius: 3,
            max_rounds: 20,
            use_binary: true,
            candidate_cap: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return domain("max_rounds must be at least 1");
        }
        if self.candidate_cap == Some(0) {
            return domain("candidate_cap must be at least 1 when set");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub config: Configuration,
    /// Cost under the terms actually optimized.
    pub cost: CostBreakdown,
    /// Binary terms were requested but the grid is 3D.
    pub binary_disabled: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub prediction: Configuration,
    pub cost: CostBreakdown,
    /// Hamming distance between the prediction and the arrangement's truth.
    /// Zero means this round's move solves the puzzle.
    pub hamming_to_truth: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveTrace {
    pub rounds: Vec<RoundRecord>,
    /// The last prediction was the identity.
    pub converged: bool,
    pub solved: Option<bool>,
    pub rounds_used: usize,
    pub binary_disabled: bool,
    pub initial_truth: Configuration,
    pub final_truth: Configuration,
}

impl SolveTrace {
    /// Hamming distance from the final arrangement to the solved state.
    pub fn final_distance(&self) -> usize {
        let n = self.final_truth.len();
        (0..n).filter(|&s| self.final_truth.get(s) != s).count()
    }
}

/// Strict "better than" over (cost, Hamming to seed, assign order).
fn better(a: (f64, usize, &[usize]), b: (f64, usize, &[usize])) -> bool {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => (a.1, a.2) < (b.1, b.2),
    }
}

fn refine(
    eval: &CostEvaluator,
    seed: &Configuration,
    radius: usize,
    cap: Option<usize>,
) -> (Configuration, CostBreakdown) {
    let mut best = seed.clone();
    let mut best_cost = eval.evaluate(seed.as_slice());
    let mut best_dist = 0;
    let limit = cap.unwrap_or(usize::MAX);
    // The ball yields the seed first, so the result never costs more.
    for cand in enumerate_hamming_ball(seed, radius).take(limit).skip(1) {
        let cost = eval.evaluate(cand.as_slice());
        let dist = cand.hamming(seed).unwrap_or(usize::MAX);
        if better(
            (cost.total, dist, cand.as_slice()),
            (best_cost.total, best_dist, best.as_slice()),
        ) {
            best = cand;
            best_cost = cost;
            best_dist = dist;
        }
    }
    (best, best_cost)
}

/// Lowest total cost within `radius` of `seed`; ties go to the candidate
/// closer to the seed, then to the lexicographically smaller one.
pub fn refine_with_binary(
    u: &UnaryMatrix,
    v: &BinaryTable,
    seed: &Configuration,
    shape: &GridShape,
    radius: usize,
) -> Result<Configuration> {
    refine_with_binary_capped(u, v, seed, shape, radius, None)
}

pub fn refine_with_binary_capped(
    u: &UnaryMatrix,
    v: &BinaryTable,
    seed: &Configuration,
    shape: &GridShape,
    radius: usize,
    cap: Option<usize>,
) -> Result<Configuration> {
    if seed.len() != u.n() {
        return domain("seed size does not match the tables");
    }
    let eval = CostEvaluator::new(u, Some(v), shape)?;
    Ok(refine(&eval, seed, radius, cap).0)
}

pub fn predict(
    u: &UnaryMatrix,
    v: Option<&BinaryTable>,
    shape: &GridShape,
    opts: &SolverOptions,
) -> Result<Prediction> {
    let binary_disabled = opts.use_binary && !shape.is_2d();
    let v = v.filter(|_| opts.use_binary && shape.is_2d());
    let seed = unary_argmin(u)?.config;
    let eval = CostEvaluator::new(u, v, shape)?;
    let (config, cost) = if v.is_some() {
        refine(&eval, &seed, opts.radius, opts.candidate_cap)
    } else {
        let cost = eval.evaluate(seed.as_slice());
        (seed, cost)
    };
    Ok(Prediction {
        config,
        cost,
        binary_disabled,
    })
}

/// Exhaustive minimum of the total cost; the first minimum in lexicographic
/// order wins.
pub fn brute_force_argmin(
    u: &UnaryMatrix,
    v: Option<&BinaryTable>,
    shape: &GridShape,
) -> Result<Configuration> {
    let n = u.n();
    if n > BRUTE_FORCE_MAX_N {
        return domain(format!(
            "refusing to enumerate {n}! configurations (limit n = {BRUTE_FORCE_MAX_N})"
        ));
    }
    let eval = CostEvaluator::new(u, v, shape)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = eval.evaluate(&perm).total;
    while next_permutation(&mut perm) {
        let cost = eval.evaluate(&perm).total;
        if cost < best_cost {
            best_cost = cost;
            best.copy_from_slice(&perm);
        }
    }
    Configuration::new(best)
}

/// Scores, predicts and reorganizes until the prediction is the identity or
/// `max_rounds` is reached.
pub fn solve_iterative<P: ScoreProvider + ?Sized>(
    provider: &mut P,
    puzzle: &PuzzleInstance,
    opts: &SolverOptions,
) -> Result<SolveTrace> {
    opts.validate()?;
    let shape = &puzzle.shape;
    let n = shape.n();
    if !provider.accepts(shape) {
        return domain(format!(
            "scorer {} does not accept grid {shape}",
            provider.describe()
        ));
    }
    let features = if provider.needs_features() {
        if !puzzle.has_pixels() {
            return domain("scorer needs pixels but the puzzle has none");
        }
        Some(FeatureSet::extract(&puzzle.patches)?)
    } else {
        None
    };

    let mut truth = puzzle.truth.clone();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rounds = Vec::new();
    let mut converged = false;
    let mut binary_disabled = false;

    for round in 0..opts.max_rounds {
        let current = features.as_ref().map(|f| f.select(&order));
        let view = Arrangement {
            shape,
            truth: Some(&truth),
            features: current.as_ref(),
        };
        let wrap = |e: Error| Error::Provider {
            round,
            source: Box::new(e),
        };
        let scores = provider.score(&view).map_err(wrap)?;
        let pred = predict(&scores.unary, scores.binary.as_ref(), shape, opts).map_err(wrap)?;
        binary_disabled |= pred.binary_disabled;
        rounds.push(RoundRecord {
            hamming_to_truth: Some(pred.config.hamming(&truth)?),
            prediction: pred.config.clone(),
            cost: pred.cost,
        });
        if pred.config.is_identity() {
            converged = true;
            break;
        }
        truth = truth.reorganize(&pred.config)?;
        order = pred.config.move_slots(&order);
    }

    Ok(SolveTrace {
        rounds_used: rounds.len(),
        rounds,
        converged,
        solved: Some(truth.is_identity()),
        binary_disabled,
        initial_truth: puzzle.truth.clone(),
        final_truth: truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::tests::{random_binary, random_unary};
    use crate::cost::total_cost;
    use crate::grid::random_permutation;
    use crate::scorer::OracleScorer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(w: usize, h: usize) -> GridShape {
        GridShape::new_2d(w, h).unwrap()
    }

    #[test]
    fn radius_zero_returns_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = grid(3, 3);
        let (u, v) = (random_unary(9, &mut rng), random_binary(9, &mut rng));
        let seed = random_permutation(9, &mut rng);
        assert_eq!(refine_with_binary(&u, &v, &seed, &g, 0).unwrap(), seed);
    }

    #[test]
    fn swapped_truth_is_repaired() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = grid(3, 3);
        let truth = random_permutation(9, &mut rng);
        let u = UnaryMatrix::one_hot(&truth);
        let v = BinaryTable::one_hot(&truth, &g).unwrap();
        let mut seed = truth.clone().into_vec();
        seed.swap(2, 7);
        let seed = Configuration::new(seed).unwrap();
        assert_eq!(refine_with_binary(&u, &v, &seed, &g, 2).unwrap(), truth);
    }

    #[test]
    fn full_radius_matches_brute_force_on_2x2() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = grid(2, 2);
        let opts = SolverOptions {
            radius: 4,
            ..Default::default()
        };
        for _ in 0..200 {
            let (u, v) = (random_unary(4, &mut rng), random_binary(4, &mut rng));
            let p = predict(&u, Some(&v), &g, &opts).unwrap();
            assert_eq!(p.config, brute_force_argmin(&u, Some(&v), &g).unwrap());
        }
    }

    #[test]
    fn refinement_never_costs_more_than_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grid(3, 2);
        for radius in 0..=4 {
            let (u, v) = (random_unary(6, &mut rng), random_binary(6, &mut rng));
            let seed = random_permutation(6, &mut rng);
            let out = refine_with_binary(&u, &v, &seed, &g, radius).unwrap();
            assert!(out.hamming(&seed).unwrap() <= radius);
            let before = total_cost(&u, Some(&v), &seed, &g).unwrap().total;
            let after = total_cost(&u, Some(&v), &out, &g).unwrap().total;
            assert!(after <= before);
        }
    }

    #[test]
    fn candidate_cap_truncates_in_ball_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = grid(3, 3);
        let (u, v) = (random_unary(9, &mut rng), random_binary(9, &mut rng));
        let seed = random_permutation(9, &mut rng);
        let capped = refine_with_binary_capped(&u, &v, &seed, &g, 3, Some(1)).unwrap();
        assert_eq!(capped, seed);
    }

    #[test]
    fn one_hot_prediction_and_unary_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = grid(3, 3);
        let truth = random_permutation(9, &mut rng);
        let u = UnaryMatrix::one_hot(&truth);
        let v = BinaryTable::one_hot(&truth, &g).unwrap();
        let p = predict(&u, Some(&v), &g, &SolverOptions::default()).unwrap();
        assert_eq!(p.config, truth);
        assert_eq!(p.cost.total, 0.0);

        let u = random_unary(9, &mut rng);
        let off = SolverOptions {
            use_binary: false,
            ..Default::default()
        };
        let p = predict(&u, Some(&v), &g, &off).unwrap();
        assert_eq!(p.config, unary_argmin(&u).unwrap().config);
    }

    #[test]
    fn brute_force_uniform_is_identity_and_refuses_large_grids() {
        let g = grid(3, 3);
        let c = brute_force_argmin(&UnaryMatrix::uniform(9), Some(&BinaryTable::uniform(9)), &g)
            .unwrap();
        assert!(c.is_identity());
        let g = grid(5, 2);
        assert!(brute_force_argmin(&UnaryMatrix::uniform(10), None, &g).is_err());
    }

    #[test]
    fn perfect_oracle_takes_two_rounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = grid(3, 3);
        let mut oracle = OracleScorer::new(0.0, 0).unwrap();
        for _ in 0..20 {
            let truth = random_permutation(9, &mut rng);
            let puzzle = PuzzleInstance::truth_only(g.clone(), truth.clone()).unwrap();
            let t = solve_iterative(&mut oracle, &puzzle, &SolverOptions::default()).unwrap();
            let expected = if truth.is_identity() { 1 } else { 2 };
            assert_eq!(t.rounds_used, expected);
            assert!(t.converged);
            assert_eq!(t.solved, Some(true));
            assert_eq!(t.rounds[0].prediction, truth);
        }
    }

    #[test]
    fn solved_start_takes_one_round() {
        let puzzle = PuzzleInstance::truth_only(grid(2, 2), Configuration::identity(4)).unwrap();
        let mut oracle = OracleScorer::new(0.0, 0).unwrap();
        let t = solve_iterative(&mut oracle, &puzzle, &SolverOptions::default()).unwrap();
        assert_eq!(t.rounds_used, 1);
        assert!(t.rounds[0].prediction.is_identity());
    }

    #[test]
    fn trace_bookkeeping_replays() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = grid(3, 3);
        let mut oracle = OracleScorer::new(0.6, 8).unwrap();
        let opts = SolverOptions {
            max_rounds: 6,
            ..Default::default()
        };
        for _ in 0..30 {
            let puzzle =
                PuzzleInstance::truth_only(g.clone(), random_permutation(9, &mut rng)).unwrap();
            let t = solve_iterative(&mut oracle, &puzzle, &opts).unwrap();
            assert!(t.rounds_used <= 6 && t.rounds_used == t.rounds.len());
            if t.converged {
                assert!(t.rounds.last().unwrap().prediction.is_identity());
            }
            let mut truth = t.initial_truth.clone();
            for r in &t.rounds {
                truth = truth.reorganize(&r.prediction).unwrap();
            }
            assert_eq!(truth, t.final_truth);
        }
    }

    #[test]
    fn three_d_degrades_to_unary() {
        let g = GridShape::new_3d(2, 2, 2).unwrap();
        let truth = Configuration::new(vec![1, 0, 3, 2, 5, 4, 7, 6]).unwrap();
        let u = UnaryMatrix::one_hot(&truth);
        let v = BinaryTable::uniform(8);
        let p = predict(&u, Some(&v), &g, &SolverOptions::default()).unwrap();
        assert!(p.binary_disabled);
        assert_eq!(p.config, truth);
        assert!(matches!(
            refine_with_binary(&u, &v, &truth, &g, 2),
            Err(Error::Unsupported(_))
        ));
    }

    struct Failing;

    impl ScoreProvider for Failing {
        fn accepts(&self, _: &GridShape) -> bool {
            true
        }
        fn needs_features(&self) -> bool {
            false
        }
        fn score(&mut self, _: &Arrangement<'_>) -> Result<crate::scorer::Scores> {
            Err(Error::Domain("boom".into()))
        }
        fn describe(&self) -> String {
            "failing".into()
        }
    }

    #[test]
    fn provider_errors_carry_the_round() {
        let puzzle = PuzzleInstance::truth_only(grid(2, 2), Configuration::identity(4)).unwrap();
        let err = solve_iterative(&mut Failing, &puzzle, &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Provider { round: 0, .. }));
    }
}
