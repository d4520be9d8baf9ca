//! Mini-batch SGD for [`LinearScorer`] with iterative sample augmentation.
//!
//! Each sample is scored, predicted and reorganized toward the prediction
//! for up to `train_rounds` rounds. The per-round losses and gradients are
//! averaged into one per-sample gradient, and a batch step uses the mean of
//! its samples' gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::features::{recipe_for, FeatureSet};
use super::linear::{loss_grad_scores, LinearScorer};
use super::{Arrangement, ScoreProvider, Scores};
use crate::error::{domain, Result};
use crate::grid::{Configuration, GridShape};
use crate::puzzlegen::PuzzleInstance;
use crate::search::{predict, SolverOptions};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub train_rounds: usize,
    pub seed: u64,
    pub weight_init_scale: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 10,
            train_rounds: 5,
            seed: 0,
            weight_init_scale: 0.01,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return domain("learning rate must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.train_rounds == 0 {
            return domain("batch size, epochs and train rounds must be at least 1");
        }
        if !(self.weight_init_scale >= 0.0 && self.weight_init_scale.is_finite()) {
            return domain("weight init scale must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    /// Mean round-averaged loss over all samples of each epoch.
    pub epoch_loss: Vec<f64>,
    /// Mean number of augmentation rounds per sample, per epoch.
    pub epoch_rounds: Vec<f64>,
}

/// Runs the augmentation loop for one sample. `step` scores the current
/// arrangement (given the slot order into the original patches and the
/// current truth); the loop predicts, stops on the identity, and otherwise
/// moves the patches. Returns the truths visited, starting with `truth`.
fn augment<F>(
    truth: &Configuration,
    shape: &GridShape,
    rounds: usize,
    mut step: F,
) -> Result<Vec<Configuration>>
where
    F: FnMut(&[usize], &Configuration) -> Result<Scores>,
{
    let solver = SolverOptions::default();
    let mut order: Vec<usize> = (0..truth.len()).collect();
    let mut truth = truth.clone();
    let mut visited = vec![truth.clone()];
    for _ in 0..rounds {
        let scores = step(&order, &truth)?;
        let pred = predict(&scores.unary, scores.binary.as_ref(), shape, &solver)?.config;
        if pred.is_identity() {
            break;
        }
        truth = truth.reorganize(&pred)?;
        order = pred.move_slots(&order);
        visited.push(truth.clone());
    }
    Ok(visited)
}

/// The arrangements the training loop would visit for `puzzle` if `provider`
/// replaced the model, ending where the loop stops.
pub fn augmentation_path<P: ScoreProvider + ?Sized>(
    provider: &mut P,
    puzzle: &PuzzleInstance,
    rounds: usize,
) -> Result<Vec<Configuration>> {
    let features = if provider.needs_features() {
        Some(FeatureSet::extract(&puzzle.patches)?)
    } else {
        None
    };
    augment(&puzzle.truth, &puzzle.shape, rounds, |order, truth| {
        let current = features.as_ref().map(|f| f.select(order));
        provider.score(&Arrangement {
            shape: &puzzle.shape,
            truth: Some(truth),
            features: current.as_ref(),
        })
    })
}

pub fn train_sgd(
    corpus: &[PuzzleInstance],
    opts: &TrainOptions,
) -> Result<(LinearScorer, TrainLog)> {
    opts.validate()?;
    let Some(first) = corpus.first() else {
        return domain("training corpus is empty");
    };
    let shape = first.shape.clone();
    if corpus.iter().any(|p| p.shape != shape) {
        return domain("training puzzles must share one grid shape");
    }
    if corpus.iter().any(|p| !p.has_pixels()) {
        return domain("training puzzles need pixels");
    }
    let features = corpus
        .iter()
        .map(|p| FeatureSet::extract(&p.patches))
        .collect::<Result<Vec<_>>>()?;
    let d = features[0].d();
    if features.iter().any(|f| f.d() != d) {
        return domain("training puzzles have differing feature dimensions");
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    init_rng.set_stream(1);
    let mut model = LinearScorer::random(
        shape.clone(),
        d,
        recipe_for(shape.rank()),
        opts.weight_init_scale,
        &mut init_rng,
    )?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    order_rng.set_stream(2);

    let mut log = TrainLog::default();
    let mut indices: Vec<usize> = (0..corpus.len()).collect();
    let mut batch_grad = vec![0.0; model.params().len()];
    let mut sample_grad = vec![0.0; model.params().len()];

    for _ in 0..opts.epochs {
        indices.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        let mut epoch_rounds = 0usize;
        for batch in indices.chunks(opts.batch_size) {
            batch_grad.fill(0.0);
            for &i in batch {
                sample_grad.fill(0.0);
                let mut loss = 0.0;
                let mut rounds = 0usize;
                augment(
                    &corpus[i].truth,
                    &shape,
                    opts.train_rounds,
                    |order, truth| {
                        let (l, g, scores) =
                            loss_grad_scores(&model, &features[i].select(order), truth, &shape)?;
                        loss += l;
                        rounds += 1;
                        sample_grad.iter_mut().zip(&g.0).for_each(|(a, b)| *a += b);
                        Ok(scores)
                    },
                )?;
                let scale = 1.0 / (rounds as f64 * batch.len() as f64);
                batch_grad
                    .iter_mut()
                    .zip(&sample_grad)
                    .for_each(|(a, b)| *a += b * scale);
                epoch_loss += loss / rounds as f64;
                epoch_rounds += rounds;
            }
            for (p, g) in model.params_mut().iter_mut().zip(&batch_grad) {
                *p -= opts.learning_rate * g;
            }
        }
        log.epoch_loss.push(epoch_loss / corpus.len() as f64);
        log.epoch_rounds
            .push(epoch_rounds as f64 / corpus.len() as f64);
    }
    if model.params().iter().any(|p| !p.is_finite()) {
        return domain("training diverged: non-finite weights");
    }
    model.quantize();
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::random_permutation;
    use crate::puzzlegen::{make_puzzle_2d, synth_image, PuzzleOptions, SynthKind};
    use crate::scorer::OracleScorer;

    fn corpus(count: usize, seed: u64) -> Vec<PuzzleInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|i| {
                let img = synth_image(SynthKind::Mixed, 64, seed * 10_000 + i as u64).unwrap();
                make_puzzle_2d(&img, 2, 2, &mut rng, &PuzzleOptions::testing()).unwrap()
            })
            .collect()
    }

    #[test]
    fn rejects_bad_input() {
        assert!(train_sgd(&[], &TrainOptions::default()).is_err());
        let bad = TrainOptions {
            train_rounds: 0,
            ..Default::default()
        };
        assert!(train_sgd(&corpus(2, 0), &bad).is_err());
    }

    #[test]
    fn training_is_deterministic_and_lowers_loss() {
        let data = corpus(64, 1);
        let opts = TrainOptions {
            epochs: 4,
            seed: 9,
            ..Default::default()
        };
        let (a, log) = train_sgd(&data, &opts).unwrap();
        let (b, _) = train_sgd(&data, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(log.epoch_loss.len(), 4);
        assert!(
            log.epoch_loss[3] < log.epoch_loss[0],
            "{:?}",
            log.epoch_loss
        );
    }

    #[test]
    fn perfect_oracle_path_never_moves_away() {
        let g = GridShape::new_2d(3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut oracle = OracleScorer::new(0.0, 0).unwrap();
        for _ in 0..50 {
            let p = PuzzleInstance::truth_only(g.clone(), random_permutation(9, &mut rng)).unwrap();
            let path = augmentation_path(&mut oracle, &p, 5).unwrap();
            let dist: Vec<usize> = path
                .iter()
                .map(|t| t.hamming(&Configuration::identity(9)).unwrap())
                .collect();
            assert!(dist.windows(2).all(|w| w[1] <= w[0]), "{dist:?}");
            assert_eq!(*dist.last().unwrap(), 0);
        }
    }

    #[test]
    fn noisy_oracle_paths_are_consistent() {
        let g = GridShape::new_2d(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut oracle = OracleScorer::new(0.5, 1).unwrap();
        for _ in 0..50 {
            let p = PuzzleInstance::truth_only(g.clone(), random_permutation(4, &mut rng)).unwrap();
            let path = augmentation_path(&mut oracle, &p, 3).unwrap();
            assert!(!path.is_empty() && path.len() <= 4);
            assert_eq!(path[0], p.truth);
        }
    }
}
