//! Noise-controlled ground-truth scorer.
//!
//! Each unary row is `(1 − ε)·onehot(target) + ε/n`, and each binary pair is
//! `(1 − ε)·onehot(target class) + ε/9`. The target is the truth, except that
//! with probability `ε` it is replaced by an independent uniform draw. At
//! `ε = 0` the tables are the exact one-hots of the truth; at `ε = 1` they are
//! uniform. In between, a corrupted row points confidently at a wrong
//! position, which is what gives the optimizer something to get wrong.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Arrangement, ScoreProvider, Scores};
use crate::cost::{BinaryTable, UnaryMatrix};
use crate::error::{domain, Result};
use crate::grid::{Configuration, GridShape, RelClass};

fn check_noise(eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return domain(format!("noise {eps} must be within [0, 1]"));
    }
    Ok(())
}

/// Mixes a (possibly corrupted) one-hot at `target` with the uniform
/// distribution over `len` classes.
fn blend(len: usize, target: usize, eps: f64, out: &mut [f64]) {
    let floor = eps / len as f64;
    out.fill(floor);
    out[target] = (1.0 - eps) + floor;
}

fn draw_target<R: Rng + ?Sized>(truth: usize, len: usize, eps: f64, rng: &mut R) -> usize {
    if eps > 0.0 && rng.gen::<f64>() < eps {
        rng.gen_range(0..len)
    } else {
        truth
    }
}

/// Unary matrix for `truth` at noise `eps`.
pub fn oracle_unary<R: Rng + ?Sized>(
    truth: &Configuration,
    eps: f64,
    rng: &mut R,
) -> Result<UnaryMatrix> {
    check_noise(eps)?;
    let n = truth.len();
    let mut entries = vec![0.0; n * n];
    for (s, row) in entries.chunks_mut(n).enumerate() {
        let target = draw_target(truth.get(s), n, eps, rng);
        blend(n, target, eps, row);
    }
    UnaryMatrix::new(n, entries)
}

/// Binary table for `truth` at noise `eps`; 2D grids only.
pub fn oracle_binary<R: Rng + ?Sized>(
    truth: &Configuration,
    eps: f64,
    rng: &mut R,
    shape: &GridShape,
) -> Result<BinaryTable> {
    check_noise(eps)?;
    let n = truth.len();
    if shape.n() != n {
        return domain("truth size does not match grid");
    }
    let rel = shape.relation_table()?;
    let k = RelClass::COUNT;
    let mut dist = vec![1.0 / k as f64; n * n * k];
    for p in 0..n {
        for q in 0..n {
            if p == q {
                continue;
            }
            let class = rel[truth.get(p) * n + truth.get(q)].index();
            let target = draw_target(class, k, eps, rng);
            blend(k, target, eps, &mut dist[(p * n + q) * k..][..k]);
        }
    }
    BinaryTable::new(n, dist)
}

/// Both tables at a single noise level; the binary table is omitted on 3D
/// grids.
pub fn oracle_score<R: Rng + ?Sized>(
    truth: &Configuration,
    eps: f64,
    rng: &mut R,
    shape: &GridShape,
) -> Result<Scores> {
    let unary = oracle_unary(truth, eps, rng)?;
    let binary = if shape.is_2d() {
        Some(oracle_binary(truth, eps, rng, shape)?)
    } else {
        None
    };
    Ok(Scores { unary, binary })
}

/// [`ScoreProvider`] reading the arrangement's ground truth.
#[derive(Clone, Debug)]
pub struct OracleScorer {
    unary_noise: f64,
    binary_noise: f64,
    rng: ChaCha8Rng,
}

impl OracleScorer {
    pub fn new(noise: f64, seed: u64) -> Result<Self> {
        Self::with_noise(noise, noise, seed)
    }

    pub fn with_noise(unary_noise: f64, binary_noise: f64, seed: u64) -> Result<Self> {
        check_noise(unary_noise)?;
        check_noise(binary_noise)?;
        Ok(Self {
            unary_noise,
            binary_noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn from_rng(unary_noise: f64, binary_noise: f64, rng: ChaCha8Rng) -> Result<Self> {
        check_noise(unary_noise)?;
        check_noise(binary_noise)?;
        Ok(Self {
            unary_noise,
            binary_noise,
            rng,
        })
    }
}

impl ScoreProvider for OracleScorer {
    fn accepts(&self, _shape: &GridShape) -> bool {
        true
    }

    fn needs_features(&self) -> bool {
        false
    }

    fn score(&mut self, view: &Arrangement<'_>) -> Result<Scores> {
        let Some(truth) = view.truth else {
            return domain("the oracle scorer needs the arrangement's ground truth");
        };
        let unary = oracle_unary(truth, self.unary_noise, &mut self.rng)?;
        let binary = if view.shape.is_2d() {
            Some(oracle_binary(
                truth,
                self.binary_noise,
                &mut self.rng,
                view.shape,
            )?)
        } else {
            None
        };
        Ok(Scores { unary, binary })
    }

    fn describe(&self) -> String {
        if self.unary_noise == self.binary_noise {
            format!("oracle:{}", self.unary_noise)
        } else {
            format!("oracle:{}/{}", self.unary_noise, self.binary_noise)
        }
    }
}
