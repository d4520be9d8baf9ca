//! Configuration cost from unary and binary score tables.
//!
//! Both terms are negative log-likelihoods, so lower is better. Probabilities
//! are clamped to [`PROB_FLOOR`] before the logarithm.

use crate::error::{domain, Error, Result};
use crate::grid::{Configuration, GridShape, RelClass};

pub const PROB_FLOOR: f64 = 1e-12;

const ROW_TOL: f64 = 1e-9;

#[inline]
pub fn neg_ln(p: f64) -> f64 {
    -p.max(PROB_FLOOR).ln()
}

/// Row-stochastic `n × n` matrix; `get(slot, orig)` is the belief that the
/// patch in `slot` comes from original position `orig`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnaryMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl UnaryMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return domain(format!(
                "unary matrix needs {n}x{n} entries, got {}",
                entries.len()
            ));
        }
        for (s, row) in entries.chunks(n).enumerate() {
            check_distribution(row, &format!("unary row {s}"))?;
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return domain("unary matrix must be square");
        }
        Self::new(n, rows.concat())
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            n,
            entries: vec![1.0 / n as f64; n * n],
        }
    }

    /// One-hot rows at `c[slot]`.
    pub fn one_hot(c: &Configuration) -> Self {
        let n = c.len();
        let mut entries = vec![0.0; n * n];
        for (s, &a) in c.as_slice().iter().enumerate() {
            entries[s * n + a] = 1.0;
        }
        Self { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, slot: usize, orig: usize) -> f64 {
        self.entries[slot * self.n + orig]
    }

    pub fn row(&self, slot: usize) -> &[f64] {
        &self.entries[slot * self.n..(slot + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Floored `−ln` of every entry, row-major.
    pub fn neg_log(&self) -> Vec<f64> {
        self.entries.iter().map(|&p| neg_ln(p)).collect()
    }
}

/// Per ordered slot pair `(p, q)`, a distribution over the nine
/// [`RelClass`] labels. Diagonal pairs are stored but never read.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryTable {
    n: usize,
    dist: Vec<f64>,
}

impl BinaryTable {
    /// `dist` holds `n·n·9` values indexed `[(p·n + q)·9 + class]`.
    pub fn new(n: usize, dist: Vec<f64>) -> Result<Self> {
        if n == 0 || dist.len() != n * n * RelClass::COUNT {
            return domain(format!(
                "binary table needs {n}*{n}*9 entries, got {}",
                dist.len()
            ));
        }
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    let i = (p * n + q) * RelClass::COUNT;
                    check_distribution(
                        &dist[i..i + RelClass::COUNT],
                        &format!("binary pair ({p},{q})"),
                    )?;
                }
            }
        }
        Ok(Self { n, dist })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            n,
            dist: vec![1.0 / RelClass::COUNT as f64; n * n * RelClass::COUNT],
        }
    }

    /// One-hot at the true relation of every pair under `c`.
    pub fn one_hot(c: &Configuration, shape: &GridShape) -> Result<Self> {
        let n = c.len();
        let rel = shape.relation_table()?;
        if shape.n() != n {
            return domain("configuration size does not match grid");
        }
        let mut dist = vec![1.0 / RelClass::COUNT as f64; n * n * RelClass::COUNT];
        for p in 0..n {
            for q in 0..n {
                if p == q {
                    continue;
                }
                let v = &mut dist[(p * n + q) * RelClass::COUNT..][..RelClass::COUNT];
                v.fill(0.0);
                v[rel[c.get(p) * n + c.get(q)].index()] = 1.0;
            }
        }
        Ok(Self { n, dist })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pair(&self, p: usize, q: usize) -> &[f64] {
        &self.dist[(p * self.n + q) * RelClass::COUNT..][..RelClass::COUNT]
    }

    pub fn get(&self, p: usize, q: usize, class: RelClass) -> f64 {
        self.pair(p, q)[class.index()]
    }

    pub fn raw(&self) -> &[f64] {
        &self.dist
    }
}

fn check_distribution(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0) {
        return domain(format!("{what} has entries outside [0, 1]"));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return domain(format!("{what} sums to {sum}, not 1"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostBreakdown {
    pub unary: f64,
    pub binary: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn new(unary: f64, binary: f64) -> Self {
        Self {
            unary,
            binary,
            total: unary + binary,
        }
    }
}

fn softmax_into(logits: &[f64], out: &mut [f64]) -> Result<()> {
    if logits.iter().any(|x| !x.is_finite()) {
        return domain("softmax input must be finite");
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    Ok(())
}

/// Softmax over every row of an `n × n` logit matrix (row-major).
pub fn row_softmax(n: usize, logits: &[f64]) -> Result<UnaryMatrix> {
    if n == 0 || logits.len() != n * n {
        return domain(format!("expected {n}x{n} logits, got {}", logits.len()));
    }
    let mut entries = vec![0.0; n * n];
    for (row, out) in logits.chunks(n).zip(entries.chunks_mut(n)) {
        softmax_into(row, out)?;
    }
    Ok(UnaryMatrix { n, entries })
}

pub fn softmax9(logits: &[f64; 9]) -> Result<[f64; 9]> {
    let mut out = [0.0; 9];
    softmax_into(logits, &mut out)?;
    Ok(out)
}

/// Precomputed `−ln` tables for repeated cost evaluation.
///
/// Every cost in the crate goes through [`CostEvaluator::evaluate`], so two
/// routes that score the same configuration agree bit for bit.
#[derive(Clone, Debug)]
pub struct CostEvaluator {
    n: usize,
    unary: Vec<f64>,
    binary: Option<BinaryTerms>,
}

#[derive(Clone, Debug)]
struct BinaryTerms {
    neg_log: Vec<f64>,
    relation: Vec<u8>,
}

impl CostEvaluator {
    pub fn new(u: &UnaryMatrix, v: Option<&BinaryTable>, shape: &GridShape) -> Result<Self> {
        let n = u.n();
        if shape.n() != n {
            return domain(format!(
                "grid {shape} has {} cells, unary matrix is {n}x{n}",
                shape.n()
            ));
        }
        let binary = match v {
            None => None,
            Some(v) => {
                if v.n() != n {
                    return domain("binary table size does not match unary matrix");
                }
                let relation = shape
                    .relation_table()?
                    .into_iter()
                    .map(|r| r.index() as u8)
                    .collect();
                Some(BinaryTerms {
                    neg_log: v.raw().iter().map(|&p| neg_ln(p)).collect(),
                    relation,
                })
            }
        };
        Ok(Self {
            n,
            unary: u.neg_log(),
            binary,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_binary(&self) -> bool {
        self.binary.is_some()
    }

    /// Floored `−ln U`, row-major.
    pub fn unary_neg_log(&self) -> &[f64] {
        &self.unary
    }

    pub fn unary(&self, c: &[usize]) -> f64 {
        let n = self.n;
        c.iter()
            .enumerate()
            .map(|(s, &a)| self.unary[s * n + a])
            .sum()
    }

    pub fn binary(&self, c: &[usize]) -> f64 {
        let Some(b) = &self.binary else {
            return 0.0;
        };
        let n = self.n;
        let mut sum = 0.0;
        for p in 0..n {
            let row = p * n;
            let rel_row = c[p] * n;
            for q in 0..n {
                if p != q {
                    let class = b.relation[rel_row + c[q]] as usize;
                    sum += b.neg_log[(row + q) * RelClass::COUNT + class];
                }
            }
        }
        sum
    }

    pub fn evaluate(&self, c: &[usize]) -> CostBreakdown {
        debug_assert_eq!(c.len(), self.n);
        CostBreakdown::new(self.unary(c), self.binary(c))
    }
}

fn check_len(n: usize, c: &Configuration) -> Result<()> {
    if c.len() != n {
        return domain(format!(
            "configuration has {} slots, tables have {n}",
            c.len()
        ));
    }
    Ok(())
}

/// `Σ_slots −ln U[slot][c[slot]]`.
pub fn unary_cost(u: &UnaryMatrix, c: &Configuration) -> Result<f64> {
    check_len(u.n(), c)?;
    Ok(c.as_slice()
        .iter()
        .enumerate()
        .map(|(s, &a)| neg_ln(u.get(s, a)))
        .sum())
}

/// `Σ_{p≠q} −ln V[p,q][rel(c[p], c[q])]` over ordered pairs.
pub fn binary_cost(v: &BinaryTable, c: &Configuration, shape: &GridShape) -> Result<f64> {
    if !shape.is_2d() {
        return Err(Error::Unsupported(
            "binary terms are only defined for 2D grids".into(),
        ));
    }
    check_len(v.n(), c)?;
    if shape.n() != v.n() {
        return domain("grid size does not match binary table");
    }
    let eval = CostEvaluator::new(&UnaryMatrix::uniform(v.n()), Some(v), shape)?;
    Ok(eval.binary(c.as_slice()))
}

pub fn total_cost(
    u: &UnaryMatrix,
    v: Option<&BinaryTable>,
    c: &Configuration,
    shape: &GridShape,
) -> Result<CostBreakdown> {
    check_len(u.n(), c)?;
    if v.is_some() && !shape.is_2d() {
        return Err(Error::Unsupported(
            "binary terms are only defined for 2D grids".into(),
        ));
    }
    Ok(CostEvaluator::new(u, v, shape)?.evaluate(c.as_slice()))
}

/// `|Σ_rows U[·][col] − 1|` per column. Diagnostic only.
pub fn column_sum_deviation(u: &UnaryMatrix) -> Vec<f64> {
    let n = u.n();
    (0..n)
        .map(|col| ((0..n).map(|s| u.get(s, col)).sum::<f64>() - 1.0).abs())
        .collect()
}
