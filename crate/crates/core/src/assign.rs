//! Minimum-cost perfect matching (Hungarian / Kuhn-Munkres), `O(n³)`.
//!
//! Among optimal assignments the lexicographically smallest `assign` array
//! is returned. After the primal-dual solve, every optimal assignment uses
//! only edges with zero reduced cost, so the tie-break walks slots in order
//! and moves each one to its smallest tight column that still admits an
//! alternating cycle through the unfixed slots.

use crate::cost::{unary_cost, UnaryMatrix};
use crate::error::{domain, Result};
use crate::grid::Configuration;

#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentResult {
    pub config: Configuration,
    /// `Σ_slots costs[slot][config[slot]]`, summed in slot order.
    pub cost: f64,
}

/// Tie-breaking rule. Only [`TieBreak::Lexicographic`] is part of the
/// contract; the others exist so the self-test can check its own sensitivity.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TieBreak {
    Lexicographic,
    ReverseLexicographic,
}

/// `costs` is `n × n`, row-major, `costs[slot * n + col]`.
pub fn min_cost_assignment(n: usize, costs: &[f64]) -> Result<AssignmentResult> {
    min_cost_assignment_with(n, costs, TieBreak::Lexicographic)
}

pub fn min_cost_assignment_rows(rows: &[Vec<f64>]) -> Result<AssignmentResult> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return domain("cost matrix must be square");
    }
    min_cost_assignment(n, &rows.concat())
}

#[doc(hidden)]
pub fn min_cost_assignment_with(
    n: usize,
    costs: &[f64],
    tie: TieBreak,
) -> Result<AssignmentResult> {
    if n == 0 || costs.len() != n * n {
        return domain(format!(
            "cost matrix must be {n}x{n} with n >= 1, got {} entries",
            costs.len()
        ));
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return domain("cost matrix must be finite");
    }

    let (mut assign, u, v) = hungarian(n, costs);
    let scale = costs.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let tol = 1e-9 * scale;
    let base = sum_cost(n, costs, &assign);

    let mut refined = assign.clone();
    refine_ties(n, costs, &u, &v, tol, &mut refined, tie);
    let refined_cost = sum_cost(n, costs, &refined);
    // The tight-edge graph is built with a tolerance; keep the refinement only
    // if it did not buy its order with a genuinely worse cost.
    let cost = if refined_cost <= base + n as f64 * tol {
        assign = refined;
        refined_cost
    } else {
        base
    };

    Ok(AssignmentResult {
        config: Configuration::from_vec_unchecked(assign),
        cost,
    })
}

/// Optimal matching under unary terms alone, on the floored `−ln U`.
pub fn unary_argmin(u: &UnaryMatrix) -> Result<AssignmentResult> {
    let mut r = min_cost_assignment(u.n(), &u.neg_log())?;
    r.cost = unary_cost(u, &r.config)?;
    Ok(r)
}

fn sum_cost(n: usize, costs: &[f64], assign: &[usize]) -> f64 {
    assign
        .iter()
        .enumerate()
        .map(|(s, &c)| costs[s * n + c])
        .sum()
}

/// Shortest augmenting path Hungarian with row/column potentials.
/// Returns (row → column, row potentials, column potentials).
fn hungarian(n: usize, costs: &[f64]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let inf = f64::INFINITY;
    // 1-based internally; index 0 is the virtual column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        minv.fill(inf);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[owner[j] - 1] = j - 1;
    }
    (assign, u[1..].to_vec(), v[1..].to_vec())
}

fn refine_ties(
    n: usize,
    costs: &[f64],
    u: &[f64],
    v: &[f64],
    tol: f64,
    assign: &mut [usize],
    tie: TieBreak,
) {
    let tight = |i: usize, j: usize| costs[i * n + j] - u[i] - v[j] <= tol;
    let mut owner = vec![0; n];
    for (i, &j) in assign.iter().enumerate() {
        owner[j] = i;
    }
    let mut parent = vec![usize::MAX; n];
    let mut queue = Vec::with_capacity(n);

    for slot in 0..n {
        let current = assign[slot];
        let candidates: Vec<usize> = match tie {
            TieBreak::Lexicographic => (0..current).collect(),
            TieBreak::ReverseLexicographic => (current + 1..n).rev().collect(),
        };
        for col in candidates {
            // Columns owned by fixed slots are off limits.
            if owner[col] < slot || !tight(slot, col) {
                continue;
            }
            // Search an alternating path from owner[col] to the column that
            // `slot` releases, through unfixed rows only.
            let start = owner[col];
            parent.fill(usize::MAX);
            queue.clear();
            queue.push(start);
            let mut seen_row = vec![false; n];
            seen_row[start] = true;
            let mut found = false;
            let mut head = 0;
            'bfs: while head < queue.len() {
                let r = queue[head];
                head += 1;
                for c in 0..n {
                    if c == col || c == assign[r] || parent[c] != usize::MAX || !tight(r, c) {
                        continue;
                    }
                    if c == current {
                        parent[c] = r;
                        found = true;
                        break 'bfs;
                    }
                    let o = owner[c];
                    if o <= slot || seen_row[o] {
                        continue;
                    }
                    parent[c] = r;
                    seen_row[o] = true;
                    queue.push(o);
                }
            }
            if !found {
                continue;
            }
            // Shift along the path: each row takes the column it reached.
            let mut c = current;
            loop {
                let r = parent[c];
                let prev = assign[r];
                assign[r] = c;
                owner[c] = r;
                if r == start {
                    break;
                }
                c = prev;
            }
            assign[slot] = col;
            owner[col] = slot;
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::next_permutation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive oracle: strict improvement only, so the first optimum in
    /// lexicographic order wins.
    fn brute(n: usize, costs: &[f64]) -> (Vec<usize>, f64) {
        let mut p: Vec<usize> = (0..n).collect();
        let mut best = (p.clone(), sum_cost(n, costs, &p));
        while next_permutation(&mut p) {
            let c = sum_cost(n, costs, &p);
            if c < best.1 {
                best = (p.clone(), c);
            }
        }
        best
    }

    #[test]
    fn single_cell() {
        let r = min_cost_assignment(1, &[4.5]).unwrap();
        assert_eq!(r.config.as_slice(), &[0]);
        assert_eq!(r.cost, 4.5);
    }

    #[test]
    fn two_by_two_log_costs() {
        let costs: Vec<f64> = [0.9f64, 0.1, 0.2, 0.8].iter().map(|p| -p.ln()).collect();
        let r = min_cost_assignment(2, &costs).unwrap();
        assert!(r.config.is_identity());
        assert!((r.cost - 0.3285).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(min_cost_assignment(2, &[1.0, 2.0, 3.0]).is_err());
        assert!(min_cost_assignment(2, &[1.0, f64::NAN, 3.0, 4.0]).is_err());
        assert!(min_cost_assignment(0, &[]).is_err());
        assert!(min_cost_assignment_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..2000 {
            let n = rng.gen_range(2..=6);
            let costs: Vec<f64> = if trial % 2 == 0 {
                (0..n * n).map(|_| rng.gen_range(0.0..10.0)).collect()
            } else {
                (0..n * n).map(|_| rng.gen_range(0..4) as f64).collect()
            };
            let got = min_cost_assignment(n, &costs).unwrap();
            let (p, c) = brute(n, &costs);
            assert_eq!(got.cost, c, "trial {trial}");
            assert_eq!(got.config.as_slice(), &p[..], "trial {trial} {costs:?}");
        }
    }

    #[test]
    fn uniform_matrix_gives_identity() {
        for n in 1..=9 {
            let r = unary_argmin(&UnaryMatrix::uniform(n)).unwrap();
            assert!(r.config.is_identity());
        }
        let r = min_cost_assignment(5, &[2.0; 25]).unwrap();
        assert!(r.config.is_identity());
    }

    #[test]
    fn reverse_tie_break_differs() {
        let r = min_cost_assignment_with(4, &[1.0; 16], TieBreak::ReverseLexicographic).unwrap();
        assert_eq!(r.config.as_slice(), &[3, 2, 1, 0]);
    }

    #[test]
    fn one_hot_unary_recovers_permutation() {
        let c = Configuration::new(vec![3, 0, 4, 1, 2]).unwrap();
        let r = unary_argmin(&UnaryMatrix::one_hot(&c)).unwrap();
        assert_eq!(r.config, c);
        assert_eq!(r.cost, 0.0);
    }

    #[test]
    fn row_shift_keeps_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..300 {
            let n = rng.gen_range(2..=6);
            let mut costs: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..5.0)).collect();
            let before = min_cost_assignment(n, &costs).unwrap();
            let row = rng.gen_range(0..n);
            let shift = rng.gen_range(-3.0..3.0);
            costs[row * n..(row + 1) * n]
                .iter_mut()
                .for_each(|c| *c += shift);
            let after = min_cost_assignment(n, &costs).unwrap();
            assert_eq!(before.config, after.config);
            assert_eq!(brute(n, &costs).0, after.config.into_vec());
        }
    }

    #[test]
    fn unary_argmin_cost_is_unary_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..=6 {
            let logits: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let u = crate::cost::row_softmax(n, &logits).unwrap();
            let r = unary_argmin(&u).unwrap();
            assert_eq!(r.cost, unary_cost(&u, &r.config).unwrap());
            let (p, _) = brute(n, &u.neg_log());
            assert_eq!(r.config.as_slice(), &p[..]);
        }
    }
}
