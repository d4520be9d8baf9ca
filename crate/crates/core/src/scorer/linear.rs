//! Linear unary and binary heads over patch features, their softmax
//! cross-entropy loss, and the `JSW1` model file.
//!
//! The unary head maps the whole concatenated feature set (`n·d` values, in
//! slot order) to `n²` logits, so it sees every patch and depends on their
//! order. The binary head maps one ordered pair `F[p] ⊕ F[q]` to nine logits.
//!
//! All parameters live in one flat vector:
//! `[unary weights (n² × n·d) | unary biases (n²) | binary weights (9 × 2d) | binary biases (9)]`.

use std::fs;
use std::path::Path;

use rand::Rng;

use super::features::FeatureSet;
use super::{Arrangement, ScoreProvider, Scores};
use crate::cost::{row_softmax, BinaryTable};
use crate::error::{domain, Error, Result};
use crate::grid::{Configuration, GridShape, RelClass};

const MAGIC: &[u8; 4] = b"JSW1";
const VERSION: u32 = 1;
const K: usize = RelClass::COUNT;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearScorer {
    shape: GridShape,
    d: usize,
    recipe: u32,
    params: Vec<f64>,
}

/// Gradient in the same flat layout as [`LinearScorer::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl LinearScorer {
    pub fn zeros(shape: GridShape, d: usize, recipe: u32) -> Result<Self> {
        if d == 0 {
            return domain("feature dimension must be positive");
        }
        let len = Self::layout(shape.n(), d).total;
        Ok(Self {
            shape,
            d,
            recipe,
            params: vec![0.0; len],
        })
    }

    /// Weights and biases uniform in `[−scale, scale]`, rounded to f32.
    pub fn random<R: Rng + ?Sized>(
        shape: GridShape,
        d: usize,
        recipe: u32,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut m = Self::zeros(shape, d, recipe)?;
        if scale > 0.0 {
            for p in &mut m.params {
                *p = rng.gen_range(-scale..=scale) as f32 as f64;
            }
        }
        Ok(m)
    }

    fn layout(n: usize, d: usize) -> Layout {
        let unary_w = n * n * n * d;
        let unary_b = n * n;
        let binary_w = K * 2 * d;
        Layout {
            unary_b: unary_w,
            binary_w: unary_w + unary_b,
            binary_b: unary_w + unary_b + binary_w,
            total: unary_w + unary_b + binary_w + K,
        }
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn feature_dim(&self) -> usize {
        self.d
    }

    pub fn recipe(&self) -> u32 {
        self.recipe
    }

    pub fn n(&self) -> usize {
        self.shape.n()
    }

    /// `n²·(n·d) + n²`.
    pub fn unary_param_count(&self) -> usize {
        let n = self.n();
        n * n * n * self.d + n * n
    }

    /// `9·(2d) + 9`.
    pub fn binary_param_count(&self) -> usize {
        K * 2 * self.d + K
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Unary weight for logit `(slot, orig)` and input coordinate `j` of the
    /// flattened feature set.
    pub fn unary_weight_mut(&mut self, slot: usize, orig: usize, j: usize) -> &mut f64 {
        let n = self.n();
        &mut self.params[(slot * n + orig) * n * self.d + j]
    }

    pub fn unary_bias_mut(&mut self, slot: usize, orig: usize) -> &mut f64 {
        let off = Self::layout(self.n(), self.d).unary_b;
        let n = self.n();
        &mut self.params[off + slot * n + orig]
    }

    /// Binary weight for class `class` and pair-input coordinate `j < 2d`.
    pub fn binary_weight_mut(&mut self, class: RelClass, j: usize) -> &mut f64 {
        let off = Self::layout(self.n(), self.d).binary_w;
        &mut self.params[off + class.index() * 2 * self.d + j]
    }

    pub fn binary_bias_mut(&mut self, class: RelClass) -> &mut f64 {
        let off = Self::layout(self.n(), self.d).binary_b;
        &mut self.params[off + class.index()]
    }

    /// Rounds every parameter to the nearest f32, the precision of the file
    /// format.
    pub fn quantize(&mut self) {
        self.params.iter_mut().for_each(|p| *p = *p as f32 as f64);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 4 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.shape.rank() as u32).to_le_bytes());
        for &e in self.shape.extents() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        out.extend_from_slice(&self.recipe.to_le_bytes());
        for &p in &self.params {
            out.extend_from_slice(&(p as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.get(..4) != Some(MAGIC.as_slice()) {
            return Err(Error::Format(
                "not a model file: bad magic (expected JSW1)".into(),
            ));
        }
        let mut pos = 4;
        let mut word = |what: &str| -> Result<u32> {
            let b = bytes.get(pos..pos + 4).ok_or_else(|| Error::Parse {
                offset: pos,
                msg: format!("truncated model header reading {what}"),
            })?;
            pos += 4;
            Ok(u32::from_le_bytes(b.try_into().unwrap()))
        };
        let version = word("version")?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported model version {version}"
            )));
        }
        let rank = word("rank")? as usize;
        if rank != 2 && rank != 3 {
            return Err(Error::Format(format!(
                "model grid rank {rank} is not 2 or 3"
            )));
        }
        let extents = (0..rank)
            .map(|_| word("extent").map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        let d = word("feature dim")? as usize;
        let recipe = word("recipe")?;
        let shape = GridShape::new(&extents).map_err(|e| Error::Format(e.to_string()))?;
        if d == 0 || shape.n() > 64 {
            return Err(Error::Format(format!(
                "implausible model header: grid {shape}, d {d}"
            )));
        }
        let header = 4 * (5 + rank);
        let count = Self::layout(shape.n(), d).total;
        let payload = &bytes[header..];
        if payload.len() != 4 * count {
            return Err(Error::Parse {
                offset: header + payload.len().min(4 * count),
                msg: format!(
                    "model payload has {} bytes, expected {}",
                    payload.len(),
                    4 * count
                ),
            });
        }
        let params: Vec<f64> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Format("model weights must be finite".into()));
        }
        Ok(Self {
            shape,
            d,
            recipe,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    fn check_features(&self, f: &FeatureSet) -> Result<()> {
        if f.n() != self.n() || f.d() != self.d {
            return domain(format!(
                "features are {}x{}, model expects {}x{}",
                f.n(),
                f.d(),
                self.n(),
                self.d
            ));
        }
        Ok(())
    }

    fn unary_logits(&self, f: &FeatureSet) -> Vec<f64> {
        let n = self.n();
        let width = n * self.d;
        let x = f.flat();
        let lay = Self::layout(n, self.d);
        let bias = &self.params[lay.unary_b..lay.binary_w];
        self.params[..lay.unary_b]
            .chunks_exact(width)
            .zip(bias)
            .map(|(row, b)| dot(row, x) + b)
            .collect()
    }

    /// Per-slot partial logits of the binary head: (first-half, second-half).
    fn binary_partials(&self, f: &FeatureSet) -> (Vec<[f64; K]>, Vec<[f64; K]>) {
        let d = self.d;
        let lay = Self::layout(self.n(), d);
        let w = &self.params[lay.binary_w..lay.binary_b];
        let mut left = Vec::with_capacity(f.n());
        let mut right = Vec::with_capacity(f.n());
        for s in 0..f.n() {
            let x = f.row(s);
            left.push(std::array::from_fn(|c| {
                dot(&w[c * 2 * d..c * 2 * d + d], x)
            }));
            right.push(std::array::from_fn(|c| {
                dot(&w[c * 2 * d + d..(c + 1) * 2 * d], x)
            }));
        }
        (left, right)
    }

    fn binary_bias(&self) -> [f64; K] {
        let lay = Self::layout(self.n(), self.d);
        self.params[lay.binary_b..lay.total].try_into().unwrap()
    }

    fn uses_binary(&self) -> bool {
        self.shape.is_2d()
    }
}

struct Layout {
    unary_b: usize,
    binary_w: usize,
    binary_b: usize,
    total: usize,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable softmax in place; returns `ln Σ exp`.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

/// Unary and (on 2D grids) binary tables for the arrangement `f`.
pub fn linear_score(model: &LinearScorer, f: &FeatureSet) -> Result<Scores> {
    model.check_features(f)?;
    let n = model.n();
    let unary = row_softmax(n, &model.unary_logits(f))?;
    let binary = if model.uses_binary() {
        let (left, right) = model.binary_partials(f);
        let bias = model.binary_bias();
        let mut dist = vec![1.0 / K as f64; n * n * K];
        for p in 0..n {
            for q in 0..n {
                if p == q {
                    continue;
                }
                let out = &mut dist[(p * n + q) * K..][..K];
                for c in 0..K {
                    out[c] = left[p][c] + right[q][c] + bias[c];
                }
                if out.iter().any(|v| !v.is_finite()) {
                    return domain("binary logits are not finite");
                }
                softmax_in_place(out);
            }
        }
        Some(BinaryTable::new(n, dist)?)
    } else {
        None
    };
    Ok(Scores { unary, binary })
}

/// Mean unary cross-entropy over slots plus mean binary cross-entropy over
/// ordered pairs (2D only), with exact analytic gradients.
pub fn loss_and_grad(
    model: &LinearScorer,
    f: &FeatureSet,
    truth: &Configuration,
    shape: &GridShape,
) -> Result<(f64, Gradients)> {
    let (loss, grad, _) = loss_grad_scores(model, f, truth, shape)?;
    Ok((loss, grad))
}

/// As [`loss_and_grad`], also returning the tables the loss was computed on.
pub(crate) fn loss_grad_scores(
    model: &LinearScorer,
    f: &FeatureSet,
    truth: &Configuration,
    shape: &GridShape,
) -> Result<(f64, Gradients, Scores)> {
    model.check_features(f)?;
    if shape != model.shape() || truth.len() != model.n() {
        return domain("truth or grid does not match the model");
    }
    let n = model.n();
    let d = model.d;
    let lay = LinearScorer::layout(n, d);
    let mut grad = vec![0.0; lay.total];
    let x = f.flat();

    let mut probs = model.unary_logits(f);
    let mut loss = 0.0;
    for s in 0..n {
        let row = &mut probs[s * n..(s + 1) * n];
        let target = truth.get(s);
        let logit_t = row[target];
        let lse = softmax_in_place(row);
        loss += (lse - logit_t) / n as f64;
        for o in 0..n {
            let k = s * n + o;
            let g = (row[o] - (o == target) as u8 as f64) / n as f64;
            if g != 0.0 {
                let w = &mut grad[k * n * d..(k + 1) * n * d];
                for (gw, &xi) in w.iter_mut().zip(x) {
                    *gw = g * xi;
                }
            }
            grad[lay.unary_b + k] = g;
        }
    }
    let unary = crate::cost::UnaryMatrix::new(n, probs)?;

    let binary = if model.uses_binary() && n > 1 {
        let rel = shape.relation_table()?;
        let (left, right) = model.binary_partials(f);
        let bias = model.binary_bias();
        let pairs = (n * (n - 1)) as f64;
        let mut dist = vec![1.0 / K as f64; n * n * K];
        for p in 0..n {
            for q in 0..n {
                if p == q {
                    continue;
                }
                let target = rel[truth.get(p) * n + truth.get(q)].index();
                let out = &mut dist[(p * n + q) * K..][..K];
                for c in 0..K {
                    out[c] = left[p][c] + right[q][c] + bias[c];
                }
                let logit_t = out[target];
                let lse = softmax_in_place(out);
                loss += (lse - logit_t) / pairs;
                let (xp, xq) = (f.row(p), f.row(q));
                for c in 0..K {
                    let g = (out[c] - (c == target) as u8 as f64) / pairs;
                    if g == 0.0 {
                        continue;
                    }
                    let w = &mut grad[lay.binary_w + c * 2 * d..lay.binary_w + (c + 1) * 2 * d];
                    for j in 0..d {
                        w[j] += g * xp[j];
                        w[d + j] += g * xq[j];
                    }
                    grad[lay.binary_b + c] += g;
                }
            }
        }
        Some(BinaryTable::new(n, dist)?)
    } else if model.uses_binary() {
        Some(BinaryTable::uniform(n))
    } else {
        None
    };

    Ok((loss, Gradients(grad), Scores { unary, binary }))
}

impl ScoreProvider for LinearScorer {
    fn accepts(&self, shape: &GridShape) -> bool {
        shape == &self.shape
    }

    fn needs_features(&self) -> bool {
        true
    }

    fn score(&mut self, view: &Arrangement<'_>) -> Result<Scores> {
        let Some(f) = view.features else {
            return domain("the linear scorer needs patch features");
        };
        linear_score(self, f)
    }

    fn describe(&self) -> String {
        format!("linear:{}:d{}", self.shape, self.d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::random_permutation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_features(n: usize, d: usize, rng: &mut impl Rng) -> FeatureSet {
        FeatureSet::new(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_model_is_uniform() {
        let g = GridShape::new_2d(3, 3).unwrap();
        let m = LinearScorer::zeros(g, 22, 1).unwrap();
        let f = random_features(9, 22, &mut ChaCha8Rng::seed_from_u64(0));
        let s = linear_score(&m, &f).unwrap();
        assert!(s
            .unary
            .entries()
            .iter()
            .all(|&p| (p - 1.0 / 9.0).abs() < 1e-15));
        assert!(s
            .binary
            .unwrap()
            .raw()
            .iter()
            .all(|&p| (p - 1.0 / 9.0).abs() < 1e-15));
    }

    #[test]
    fn parameter_counts_for_3x3() {
        let m = LinearScorer::zeros(GridShape::new_2d(3, 3).unwrap(), 22, 1).unwrap();
        assert_eq!(m.unary_param_count(), 16_119);
        assert_eq!(m.binary_param_count(), 405);
        assert_eq!(m.params().len(), 16_119 + 405);
    }

    #[test]
    fn unary_head_is_order_sensitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = GridShape::new_2d(2, 2).unwrap();
        let m = LinearScorer::random(g, 5, 1, 0.5, &mut rng).unwrap();
        let f = random_features(4, 5, &mut rng);
        let a = linear_score(&m, &f).unwrap();
        let b = linear_score(&m, &f.select(&[1, 0, 2, 3])).unwrap();
        assert_ne!(a.unary, b.unary);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = LinearScorer::zeros(GridShape::new_2d(2, 2).unwrap(), 5, 1).unwrap();
        let f = random_features(4, 6, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(linear_score(&m, &f).is_err());
    }

    #[test]
    fn zero_model_loss_is_two_ln_nine() {
        let g = GridShape::new_2d(3, 3).unwrap();
        let m = LinearScorer::zeros(g.clone(), 4, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_features(9, 4, &mut rng);
        let t = random_permutation(9, &mut rng);
        let (loss, _) = loss_and_grad(&m, &f, &t, &g).unwrap();
        assert!((loss - 2.0 * 9f64.ln()).abs() < 1e-12);
        assert!((loss - 4.394).abs() < 1e-3);
    }

    #[test]
    fn perfect_model_has_zero_loss_and_gradient() {
        // 2×1 grid, features are one-hot slot markers.
        let g = GridShape::new_2d(2, 1).unwrap();
        let mut m = LinearScorer::zeros(g.clone(), 2, 1).unwrap();
        let f = FeatureSet::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let t = Configuration::identity(2);
        *m.unary_bias_mut(0, 0) = 1000.0;
        *m.unary_bias_mut(1, 1) = 1000.0;
        // Pair (0,1) sees F0 first: slot 0 is LEFT of slot 1.
        *m.binary_weight_mut(RelClass::Left, 0) = 1000.0;
        *m.binary_weight_mut(RelClass::Right, 1) = 1000.0;
        let (loss, grad) = loss_and_grad(&m, &f, &t, &g).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.0.iter().all(|&x| x == 0.0));
        let s = linear_score(&m, &f).unwrap();
        assert_eq!(s.unary, crate::cost::UnaryMatrix::one_hot(&t));
    }

    fn finite_difference_check(n_grid: GridShape, d: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n_grid.n();
        let m = LinearScorer::random(n_grid.clone(), d, 1, 0.3, &mut rng).unwrap();
        let f = random_features(n, d, &mut rng);
        let t = random_permutation(n, &mut rng);
        let (_, grad) = loss_and_grad(&m, &f, &t, &n_grid).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut probe = m.clone();
        for i in 0..m.params().len() {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + h;
            let up = loss_and_grad(&probe, &f, &t, &n_grid).unwrap().0;
            probe.params_mut()[i] = orig - h;
            let down = loss_and_grad(&probe, &f, &t, &n_grid).unwrap().0;
            probe.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let a = grad.0[i];
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(err);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        assert!(finite_difference_check(GridShape::new_2d(2, 2).unwrap(), 3, 7) < 1e-4);
        assert!(finite_difference_check(GridShape::new_3d(2, 2, 1).unwrap(), 3, 8) < 1e-4);
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GridShape::new_2d(2, 3).unwrap();
        let mut m = LinearScorer::random(g, 7, 1, 0.2, &mut rng).unwrap();
        m.params_mut()[0] = 0.123456789; // not representable in f32
        m.quantize();
        let f = random_features(6, 7, &mut rng);
        let back = LinearScorer::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(
            linear_score(&back, &f).unwrap(),
            linear_score(&m, &f).unwrap()
        );
    }

    #[test]
    fn corrupt_model_files() {
        let m = LinearScorer::zeros(GridShape::new_2d(2, 2).unwrap(), 3, 1).unwrap();
        let mut bytes = m.to_bytes();
        assert!(matches!(
            LinearScorer::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Parse { .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(
            LinearScorer::from_bytes(&bytes),
            Err(Error::Format(_))
        ));
    }
}
