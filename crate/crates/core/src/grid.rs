//! Grid geometry, position identifiers and permutation algebra.
//!
//! A [`Configuration`] maps every current slot to the original-position ID of
//! the patch occupying it, so the solved puzzle is the identity permutation.
//! Positions are numbered row-major: `x + y*W` in 2D and `x + y*W + z*W*H`
//! in 3D.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{domain, Error, Result};

/// Per-axis cell counts of a puzzle grid, `(W, H)` or `(W, H, Z)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridShape {
    extents: Vec<usize>,
}

impl GridShape {
    pub fn new(extents: &[usize]) -> Result<Self> {
        if extents.len() != 2 && extents.len() != 3 {
            return domain(format!("grid must have 2 or 3 axes, got {}", extents.len()));
        }
        if extents.contains(&0) {
            return domain("every grid extent must be at least 1");
        }
        Ok(Self {
            extents: extents.to_vec(),
        })
    }

    pub fn new_2d(w: usize, h: usize) -> Result<Self> {
        Self::new(&[w, h])
    }

    pub fn new_3d(w: usize, h: usize, z: usize) -> Result<Self> {
        Self::new(&[w, h, z])
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn rank(&self) -> usize {
        self.extents.len()
    }

    pub fn is_2d(&self) -> bool {
        self.extents.len() == 2
    }

    /// Total number of cells.
    pub fn n(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn width(&self) -> usize {
        self.extents[0]
    }

    pub fn height(&self) -> usize {
        self.extents[1]
    }

    pub fn position_to_id(&self, coords: &[usize]) -> Result<PositionId> {
        if coords.len() != self.rank() {
            return domain(format!(
                "expected {} coordinates, got {}",
                self.rank(),
                coords.len()
            ));
        }
        let mut id = 0;
        let mut stride = 1;
        for (axis, (&c, &e)) in coords.iter().zip(&self.extents).enumerate() {
            if c >= e {
                return domain(format!(
                    "coordinate {c} out of range on axis {axis} (extent {e})"
                ));
            }
            id += c * stride;
            stride *= e;
        }
        Ok(PositionId(id))
    }

    pub fn id_to_position(&self, id: PositionId) -> Result<Vec<usize>> {
        if id.0 >= self.n() {
            return domain(format!(
                "position id {} out of range for {} cells",
                id.0,
                self.n()
            ));
        }
        let mut rest = id.0;
        Ok(self
            .extents
            .iter()
            .map(|&e| {
                let c = rest % e;
                rest /= e;
                c
            })
            .collect())
    }

    /// Relation of `a`'s cell relative to `b`'s cell.
    ///
    /// Only the immediate 8-neighbourhood is classified; every other pair is
    /// [`RelClass::None`]. Defined for 2D grids only.
    pub fn relative_type(&self, a: PositionId, b: PositionId) -> Result<RelClass> {
        if !self.is_2d() {
            return Err(Error::Unsupported(
                "relative position classes are only defined for 2D grids".into(),
            ));
        }
        if a == b {
            return domain("relative_type needs two distinct positions");
        }
        let w = self.width();
        let n = self.n();
        if a.0 >= n || b.0 >= n {
            return domain("position id out of range");
        }
        Ok(classify(a.0 % w, a.0 / w, b.0 % w, b.0 / w))
    }

    /// `n × n` table of relative classes indexed by `[a][b]`; the diagonal
    /// holds [`RelClass::None`] and is never read by the cost model.
    pub fn relation_table(&self) -> Result<Vec<RelClass>> {
        if !self.is_2d() {
            return Err(Error::Unsupported(
                "relative position classes are only defined for 2D grids".into(),
            ));
        }
        let n = self.n();
        let w = self.width();
        let mut out = vec![RelClass::None; n * n];
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    out[a * n + b] = classify(a % w, a / w, b % w, b / w);
                }
            }
        }
        Ok(out)
    }

    /// `(W·H…)!`, the number of distinct configurations. `None` on overflow.
    pub fn config_space_size(&self) -> Option<u128> {
        factorial(self.n())
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.extents.iter().map(|e| e.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

impl std::str::FromStr for GridShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let extents = s
            .split(['x', 'X'])
            .map(|p| {
                p.trim().parse::<usize>().map_err(|_| {
                    Error::Domain(format!("bad grid {s:?}, expected WxH or WxHxZ"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(&extents)
    }
}

fn classify(ax: usize, ay: usize, bx: usize, by: usize) -> RelClass {
    let dx = ax as isize - bx as isize;
    let dy = ay as isize - by as isize;
    match (dx, dy) {
        (0, -1) => RelClass::Top,
        (0, 1) => RelClass::Bottom,
        (-1, 0) => RelClass::Left,
        (1, 0) => RelClass::Right,
        (-1, -1) => RelClass::TopLeft,
        (1, -1) => RelClass::TopRight,
        (-1, 1) => RelClass::BottomLeft,
        (1, 1) => RelClass::BottomRight,
        _ => RelClass::None,
    }
}

pub fn factorial(n: usize) -> Option<u128> {
    (1..=n as u128).try_fold(1u128, |acc, k| acc.checked_mul(k))
}

/// Row-major cell index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PositionId(pub usize);

/// Relative position of one cell with respect to another.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum RelClass {
    Top = 0,
    Bottom = 1,
    Left = 2,
    Right = 3,
    TopLeft = 4,
    TopRight = 5,
    BottomLeft = 6,
    BottomRight = 7,
    None = 8,
}

impl RelClass {
    pub const COUNT: usize = 9;

    pub const ALL: [RelClass; 9] = [
        RelClass::Top,
        RelClass::Bottom,
        RelClass::Left,
        RelClass::Right,
        RelClass::TopLeft,
        RelClass::TopRight,
        RelClass::BottomLeft,
        RelClass::BottomRight,
        RelClass::None,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// The class of `(b, a)` given this is the class of `(a, b)`.
    pub fn mirror(self) -> Self {
        match self {
            RelClass::Top => RelClass::Bottom,
            RelClass::Bottom => RelClass::Top,
            RelClass::Left => RelClass::Right,
            RelClass::Right => RelClass::Left,
            RelClass::TopLeft => RelClass::BottomRight,
            RelClass::BottomRight => RelClass::TopLeft,
            RelClass::TopRight => RelClass::BottomLeft,
            RelClass::BottomLeft => RelClass::TopRight,
            RelClass::None => RelClass::None,
        }
    }
}

/// Permutation mapping current slot to original-position ID.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    assign: Vec<usize>,
}

impl Configuration {
    pub fn new(assign: Vec<usize>) -> Result<Self> {
        let n = assign.len();
        if n == 0 {
            return domain("configuration must not be empty");
        }
        let mut seen = vec![false; n];
        for &a in &assign {
            if a >= n || seen[a] {
                return domain(format!("{assign:?} is not a permutation of 0..{n}"));
            }
            seen[a] = true;
        }
        Ok(Self { assign })
    }

    /// Caller guarantees `assign` is a permutation.
    pub(crate) fn from_vec_unchecked(assign: Vec<usize>) -> Self {
        debug_assert!(Self::new(assign.clone()).is_ok());
        Self { assign }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            assign: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.assign.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assign.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.assign
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.assign
    }

    pub fn get(&self, slot: usize) -> usize {
        self.assign[slot]
    }

    pub fn is_identity(&self) -> bool {
        self.assign.iter().enumerate().all(|(s, &a)| s == a)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (s, &a) in self.assign.iter().enumerate() {
            inv[a] = s;
        }
        Self { assign: inv }
    }

    /// Number of slots where the two permutations disagree.
    pub fn hamming(&self, other: &Configuration) -> Result<usize> {
        if self.len() != other.len() {
            return domain(format!(
                "hamming needs equal lengths, got {} and {}",
                self.len(),
                other.len()
            ));
        }
        Ok(self
            .assign
            .iter()
            .zip(&other.assign)
            .filter(|(a, b)| a != b)
            .count())
    }

    /// Ground truth after moving the patch in slot `s` to slot
    /// `prediction[s]`: `new[prediction[s]] = self[s]`.
    pub fn reorganize(&self, prediction: &Configuration) -> Result<Configuration> {
        if self.len() != prediction.len() {
            return domain(format!(
                "reorganize needs equal lengths, got {} and {}",
                self.len(),
                prediction.len()
            ));
        }
        let mut next = vec![0; self.len()];
        for (s, &dest) in prediction.assign.iter().enumerate() {
            next[dest] = self.assign[s];
        }
        Ok(Self { assign: next })
    }

    /// Applies the same slot move as [`reorganize`](Self::reorganize) to an
    /// arbitrary per-slot payload.
    pub fn move_slots<T: Clone>(&self, items: &[T]) -> Vec<T> {
        debug_assert_eq!(items.len(), self.len());
        let mut out = items.to_vec();
        for (s, &dest) in self.assign.iter().enumerate() {
            out[dest] = items[s].clone();
        }
        out
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.assign.iter().map(|a| a.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

pub fn hamming(c1: &Configuration, c2: &Configuration) -> Result<usize> {
    c1.hamming(c2)
}

pub fn reorganize(truth: &Configuration, prediction: &Configuration) -> Result<Configuration> {
    truth.reorganize(prediction)
}

/// Uniformly random permutation of `0..n` (Fisher-Yates).
pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Configuration {
    let mut assign: Vec<usize> = (0..n).collect();
    assign.shuffle(rng);
    Configuration { assign }
}

/// Number of derangements of `k` elements.
pub fn derangements(k: usize) -> u128 {
    let (mut prev, mut cur) = (1u128, 0u128);
    if k == 0 {
        return 1;
    }
    for i in 2..=k as u128 {
        let next = (i - 1) * (prev + cur);
        prev = cur;
        cur = next;
    }
    cur
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k as u128).fold(1u128, |acc, i| acc * (n as u128 - i) / (i + 1))
}

/// `1 + Σ_{k=2..radius} C(n,k)·D_k`.
pub fn ball_size(n: usize, radius: usize) -> u128 {
    1 + (2..=radius.min(n))
        .map(|k| binomial(n, k) * derangements(k))
        .sum::<u128>()
}

/// Rearranges `v` into its lexicographic successor; false when `v` was the last.
pub fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Every permutation within Hamming distance `radius` of `center`.
///
/// The center comes first, then for each `k = 2..=radius` every `k`-subset
/// of slots in lexicographic order, and within a subset every derangement of
/// the center's values on those slots in lexicographic order.
pub fn enumerate_hamming_ball(center: &Configuration, radius: usize) -> HammingBall<'_> {
    HammingBall {
        center,
        radius: radius.min(center.len()),
        k: 0,
        combo: Vec::new(),
        sigma: Vec::new(),
        done: false,
    }
}

pub struct HammingBall<'a> {
    center: &'a Configuration,
    radius: usize,
    k: usize,
    combo: Vec<usize>,
    sigma: Vec<usize>,
    done: bool,
}

impl HammingBall<'_> {
    fn is_derangement(sigma: &[usize]) -> bool {
        sigma.iter().enumerate().all(|(i, &s)| i != s)
    }

    fn start_k(&mut self, k: usize) -> bool {
        if k > self.radius {
            return false;
        }
        self.k = k;
        self.combo = (0..k).collect();
        self.sigma = (0..k).collect();
        // The identity is never a derangement for k >= 2.
        self.advance_sigma()
    }

    /// Moves to the next derangement of the current subset, rolling over to
    /// the next subset when exhausted. Returns false at the end of this k.
    fn advance_sigma(&mut self) -> bool {
        loop {
            while next_permutation(&mut self.sigma) {
                if Self::is_derangement(&self.sigma) {
                    return true;
                }
            }
            if !next_combination(&mut self.combo, self.center.len()) {
                return false;
            }
            self.sigma = (0..self.k).collect();
        }
    }

    fn current(&self) -> Configuration {
        let mut assign = self.center.assign.clone();
        for (i, &slot) in self.combo.iter().enumerate() {
            assign[slot] = self.center.assign[self.combo[self.sigma[i]]];
        }
        Configuration { assign }
    }
}

impl Iterator for HammingBall<'_> {
    type Item = Configuration;

    fn next(&mut self) -> Option<Configuration> {
        if self.done {
            return None;
        }
        if self.k == 0 {
            self.k = 1;
            if !self.start_k(2) {
                self.done = true;
            }
            return Some(self.center.clone());
        }
        let out = self.current();
        if !self.advance_sigma() {
            let mut k = self.k + 1;
            loop {
                if k > self.radius {
                    self.done = true;
                    break;
                }
                if self.start_k(k) {
                    break;
                }
                k += 1;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(v: &[usize]) -> Configuration {
        Configuration::new(v.to_vec()).unwrap()
    }

    fn all_perms(n: usize) -> Vec<Configuration> {
        let mut v: Vec<usize> = (0..n).collect();
        let mut out = vec![cfg(&v)];
        while next_permutation(&mut v) {
            out.push(cfg(&v));
        }
        out
    }

    #[test]
    fn position_ids_are_row_major() {
        let g = GridShape::new_2d(3, 3).unwrap();
        assert_eq!(g.position_to_id(&[0, 0]).unwrap(), PositionId(0));
        assert_eq!(g.position_to_id(&[1, 2]).unwrap(), PositionId(7));
        let g3 = GridShape::new_3d(3, 3, 3).unwrap();
        assert_eq!(g3.position_to_id(&[1, 1, 1]).unwrap(), PositionId(13));
        assert!(g.position_to_id(&[3, 0]).is_err());
        assert!(g.position_to_id(&[0, 0, 0]).is_err());
    }

    #[test]
    fn position_round_trip() {
        for ext in [
            vec![1, 1],
            vec![4, 3],
            vec![4, 4],
            vec![2, 3, 4],
            vec![4, 4, 4],
        ] {
            let g = GridShape::new(&ext).unwrap();
            for id in 0..g.n() {
                let p = g.id_to_position(PositionId(id)).unwrap();
                assert_eq!(g.position_to_id(&p).unwrap(), PositionId(id));
            }
        }
    }

    #[test]
    fn shape_validation() {
        assert!(GridShape::new(&[0, 3]).is_err());
        assert!(GridShape::new(&[3]).is_err());
        assert_eq!("3x3x3".parse::<GridShape>().unwrap().n(), 27);
        assert!("3x".parse::<GridShape>().is_err());
    }

    #[test]
    fn relative_type_examples() {
        let g = GridShape::new_2d(3, 3).unwrap();
        let r = |a, b| g.relative_type(PositionId(a), PositionId(b)).unwrap();
        assert_eq!(r(0, 1), RelClass::Left);
        assert_eq!(r(0, 4), RelClass::TopLeft);
        assert_eq!(r(0, 2), RelClass::None);
        assert_eq!(r(1, 4), RelClass::Top);
        assert_eq!(r(8, 4), RelClass::BottomRight);
        assert_eq!(RelClass::None.index(), 8);
    }

    #[test]
    fn relative_type_errors() {
        let g = GridShape::new_2d(3, 3).unwrap();
        assert!(matches!(
            g.relative_type(PositionId(2), PositionId(2)),
            Err(Error::Domain(_))
        ));
        let g3 = GridShape::new_3d(2, 2, 2).unwrap();
        assert!(matches!(
            g3.relative_type(PositionId(0), PositionId(1)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn relative_type_is_mirrored() {
        let g = GridShape::new_2d(3, 3).unwrap();
        for a in 0..9 {
            for b in 0..9 {
                if a == b {
                    continue;
                }
                let ab = g.relative_type(PositionId(a), PositionId(b)).unwrap();
                let ba = g.relative_type(PositionId(b), PositionId(a)).unwrap();
                assert_eq!(ab.mirror(), ba, "{a} {b}");
            }
        }
    }

    #[test]
    fn hamming_examples() {
        let id = Configuration::identity(3);
        assert_eq!(id.hamming(&id).unwrap(), 0);
        assert_eq!(id.hamming(&cfg(&[1, 0, 2])).unwrap(), 2);
        assert_eq!(id.hamming(&cfg(&[1, 2, 0])).unwrap(), 3);
        assert!(id.hamming(&Configuration::identity(4)).is_err());
    }

    #[test]
    fn hamming_is_a_metric_on_s4() {
        let perms = all_perms(4);
        for a in &perms {
            for b in &perms {
                let ab = a.hamming(b).unwrap();
                assert_eq!(ab, b.hamming(a).unwrap());
                assert_eq!(ab == 0, a == b);
                assert_ne!(ab, 1);
                for c in &perms {
                    assert!(ab <= a.hamming(c).unwrap() + c.hamming(b).unwrap());
                }
            }
        }
    }

    #[test]
    fn reorganize_examples() {
        let t = cfg(&[2, 0, 1]);
        assert_eq!(t.reorganize(&t).unwrap(), Configuration::identity(3));
        let t2 = cfg(&[1, 0]);
        assert_eq!(t2.reorganize(&Configuration::identity(2)).unwrap(), t2);
        assert_eq!(t.reorganize(&cfg(&[0, 2, 1])).unwrap(), cfg(&[2, 1, 0]));
        assert!(t.reorganize(&Configuration::identity(2)).is_err());
    }

    #[test]
    fn reorganize_with_truth_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [4, 9, 27] {
            for _ in 0..1000 {
                let t = random_permutation(n, &mut rng);
                assert!(t.reorganize(&t).unwrap().is_identity());
            }
        }
    }

    #[test]
    fn move_slots_matches_reorganize() {
        let t = cfg(&[3, 1, 0, 2]);
        let p = cfg(&[2, 0, 3, 1]);
        assert_eq!(
            p.move_slots(t.as_slice()),
            t.reorganize(&p).unwrap().into_vec()
        );
    }

    #[test]
    fn random_permutation_is_uniform_and_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(random_permutation(1, &mut rng).as_slice(), &[0]);
        let perms = all_perms(3);
        let mut counts = vec![0usize; perms.len()];
        let draws = 60_000;
        for _ in 0..draws {
            let p = random_permutation(3, &mut rng);
            counts[perms.iter().position(|q| *q == p).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 1.0 / 6.0).abs() < 0.01);
        }
        let mut a = ChaCha8Rng::seed_from_u64(99);
        let mut b = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            assert_eq!(random_permutation(9, &mut a), random_permutation(9, &mut b));
        }
    }

    #[test]
    fn ball_counts_match_brute_force() {
        for n in 1..=7 {
            let perms = all_perms(n);
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            let center = random_permutation(n, &mut rng);
            for r in 0..=n {
                let ball: Vec<_> = enumerate_hamming_ball(&center, r).collect();
                let expect = perms
                    .iter()
                    .filter(|p| p.hamming(&center).unwrap() <= r)
                    .count();
                assert_eq!(ball.len(), expect, "n={n} r={r}");
                assert_eq!(ball.len() as u128, ball_size(n, r));
                assert_eq!(ball[0], center);
                let mut sorted = ball.clone();
                sorted.sort();
                sorted.dedup();
                assert_eq!(sorted.len(), ball.len());
            }
        }
    }

    #[test]
    fn ball_spot_values() {
        assert_eq!(
            enumerate_hamming_ball(&Configuration::identity(4), 0).count(),
            1
        );
        assert_eq!(
            enumerate_hamming_ball(&Configuration::identity(4), 2).count(),
            7
        );
        assert_eq!(
            enumerate_hamming_ball(&Configuration::identity(9), 3).count(),
            205
        );
        assert_eq!(ball_size(9, 3), 205);
    }

    #[test]
    fn ball_order_is_by_distance_then_lexicographic() {
        let c = Configuration::identity(4);
        let ball: Vec<_> = enumerate_hamming_ball(&c, 3).collect();
        assert_eq!(ball[1].as_slice(), &[1, 0, 2, 3]);
        assert_eq!(ball[2].as_slice(), &[2, 1, 0, 3]);
        let dists: Vec<usize> = ball.iter().map(|p| p.hamming(&c).unwrap()).collect();
        assert!(dists.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn combinatorics() {
        assert_eq!(
            (0..7).map(derangements).collect::<Vec<_>>(),
            vec![1, 0, 1, 2, 9, 44, 265]
        );
        assert_eq!(factorial(9), Some(362_880));
        assert_eq!(factorial(27), Some(10_888_869_450_418_352_160_768_000_000));
        assert_eq!(factorial(40), None);
    }
}
