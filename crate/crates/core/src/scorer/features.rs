//! Hand-crafted patch descriptors.
//!
//! 2D tiles (recipe [`RECIPE_2D`], `d = 6C + 16`):
//! per-channel mean and standard deviation, per-channel means of the
//! 2-pixel strips along the left, right, top and bottom edges, then a 4×4
//! average-pooled grayscale thumbnail in row-major order.
//!
//! 3D tiles (recipe [`RECIPE_3D`], `d = 8C + 8`):
//! per-channel mean and standard deviation, per-channel means of the six
//! 2-voxel face slabs (x−, x+, y−, y+, z−, z+), then 2×2×2 pooled grayscale.

use crate::error::{domain, Result};
use crate::image::Tensor;

pub const RECIPE_2D: u32 = 1;
pub const RECIPE_3D: u32 = 2;

const STRIP: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct PatchFeatures(pub Vec<f64>);

pub fn feature_dim(rank: usize, channels: usize) -> usize {
    match rank {
        2 => 6 * channels + 16,
        _ => 8 * channels + 8,
    }
}

pub fn recipe_for(rank: usize) -> u32 {
    if rank == 2 {
        RECIPE_2D
    } else {
        RECIPE_3D
    }
}

/// Bin `i` of `bins` over `len` samples; never empty.
fn bin_range(i: usize, bins: usize, len: usize) -> std::ops::Range<usize> {
    let start = (i * len / bins).min(len - 1);
    let end = ((i + 1) * len / bins).max(start + 1).min(len);
    start..end
}

pub fn extract_features(tile: &Tensor) -> Result<PatchFeatures> {
    if tile.data().is_empty() {
        return domain("cannot describe an empty patch");
    }
    if tile.data().iter().any(|v| !v.is_finite()) {
        return domain("patch samples must be finite");
    }
    match tile.dims().len() {
        2 => Ok(PatchFeatures(features_2d(tile))),
        3 => Ok(PatchFeatures(features_3d(tile))),
        r => domain(format!("patches must be 2D or 3D, got rank {r}")),
    }
}

fn mean_std(tile: &Tensor) -> Vec<f64> {
    let c = tile.channels();
    let count = tile.pixel_count() as f64;
    let means = tile.channel_means();
    let mut var = vec![0.0f64; c];
    for px in tile.data().chunks(c) {
        for ch in 0..c {
            let d = px[ch] as f64 - means[ch];
            var[ch] += d * d;
        }
    }
    means
        .iter()
        .zip(&var)
        .flat_map(|(&m, &v)| [m, (v / count).sqrt()])
        .collect()
}

/// Per-channel mean over the axis-aligned box `lo..hi` (per axis).
fn box_mean(tile: &Tensor, lo: &[usize], hi: &[usize]) -> Vec<f64> {
    let c = tile.channels();
    let mut sums = vec![0.0f64; c];
    let mut count = 0usize;
    let mut at = lo.to_vec();
    loop {
        let o = tile.offset(&at);
        for (s, &v) in sums.iter_mut().zip(&tile.data()[o..o + c]) {
            *s += v as f64;
        }
        count += 1;
        let mut axis = 0;
        loop {
            if axis == at.len() {
                return sums.iter().map(|s| s / count as f64).collect();
            }
            at[axis] += 1;
            if at[axis] < hi[axis] {
                break;
            }
            at[axis] = lo[axis];
            axis += 1;
        }
    }
}

fn pooled_gray(tile: &Tensor, bins: usize) -> Vec<f64> {
    let dims = tile.dims();
    let rank = dims.len();
    let c = tile.channels();
    let cells = bins.pow(rank as u32);
    let mut out = Vec::with_capacity(cells);
    for cell in 0..cells {
        let mut lo = vec![0; rank];
        let mut hi = vec![0; rank];
        let mut rest = cell;
        for a in 0..rank {
            let r = bin_range(rest % bins, bins, dims[a]);
            lo[a] = r.start;
            hi[a] = r.end;
            rest /= bins;
        }
        let means = box_mean(tile, &lo, &hi);
        out.push(means.iter().sum::<f64>() / c as f64);
    }
    out
}

fn face_means(tile: &Tensor) -> Vec<f64> {
    let dims = tile.dims();
    let rank = dims.len();
    let mut faces = Vec::with_capacity(2 * rank);
    for axis in 0..rank {
        let strip = STRIP.min(dims[axis]);
        let lo = vec![0; rank];
        let mut hi = dims.to_vec();
        hi[axis] = strip;
        faces.push(box_mean(tile, &lo, &hi));
        let mut lo = vec![0; rank];
        lo[axis] = dims[axis] - strip;
        faces.push(box_mean(tile, &lo, dims));
    }
    // Channel-major: for each channel, all faces in axis order.
    let c = tile.channels();
    (0..c)
        .flat_map(|ch| faces.iter().map(move |f| f[ch]).collect::<Vec<_>>())
        .collect()
}

fn features_2d(tile: &Tensor) -> Vec<f64> {
    let mut f = mean_std(tile);
    f.extend(face_means(tile));
    f.extend(pooled_gray(tile, 4));
    f
}

fn features_3d(tile: &Tensor) -> Vec<f64> {
    let mut f = mean_std(tile);
    f.extend(face_means(tile));
    f.extend(pooled_gray(tile, 2));
    f
}

/// Features of every patch, row `s` describing the patch in slot `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl FeatureSet {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 || data.len() != n * d {
            return domain(format!(
                "feature set needs {n}x{d} values, got {}",
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return domain("features must be finite");
        }
        Ok(Self { n, d, data })
    }

    pub fn from_patches(patches: &[PatchFeatures]) -> Result<Self> {
        let Some(first) = patches.first() else {
            return domain("no patches");
        };
        let d = first.0.len();
        if patches.iter().any(|p| p.0.len() != d) {
            return domain("patch feature dimensions differ");
        }
        Self::new(
            patches.len(),
            d,
            patches.iter().flat_map(|p| p.0.iter().copied()).collect(),
        )
    }

    pub fn extract(tiles: &[Tensor]) -> Result<Self> {
        let feats = tiles
            .iter()
            .map(extract_features)
            .collect::<Result<Vec<_>>>()?;
        Self::from_patches(&feats)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.d..(s + 1) * self.d]
    }

    /// All rows concatenated in slot order.
    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    /// Rows reordered so that new row `s` is old row `order[s]`.
    pub fn select(&self, order: &[usize]) -> FeatureSet {
        let data = order
            .iter()
            .flat_map(|&i| self.row(i).iter().copied())
            .collect();
        FeatureSet {
            n: order.len(),
            d: self.d,
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puzzlegen::flip_x;

    fn tile(w: usize, h: usize, f: impl Fn(usize, usize) -> f32) -> Tensor {
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(f(x, y));
            }
        }
        Tensor::new(vec![w, h], 1, data).unwrap()
    }

    #[test]
    fn constant_patch() {
        let f = extract_features(&tile(64, 64, |_, _| 0.5)).unwrap().0;
        assert_eq!(f.len(), 22);
        assert_eq!(f[0], 0.5);
        assert_eq!(f[1], 0.0);
        assert!(f[2..].iter().all(|&v| v == 0.5));
    }

    #[test]
    fn half_split_edges() {
        let f = extract_features(&tile(64, 64, |x, _| if x < 32 { 0.0 } else { 1.0 }))
            .unwrap()
            .0;
        // [mean, std, left, right, top, bottom, pooled...]
        assert_eq!(f[2], 0.0);
        assert_eq!(f[3], 1.0);
        assert_eq!(f[4], 0.5);
        assert_eq!(&f[6..10], &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn flip_swaps_left_right_and_reverses_columns() {
        let t = tile(64, 64, |x, y| ((x * 7 + y * 13) % 29) as f32 / 29.0);
        let a = extract_features(&t).unwrap().0;
        let b = extract_features(&flip_x(&t)).unwrap().0;
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        assert!((a[2] - b[3]).abs() < 1e-12 && (a[3] - b[2]).abs() < 1e-12);
        assert!((a[4] - b[4]).abs() < 1e-12 && (a[5] - b[5]).abs() < 1e-12);
        for row in 0..4 {
            for col in 0..4 {
                assert!((a[6 + row * 4 + col] - b[6 + row * 4 + 3 - col]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn multichannel_and_volume_dims() {
        let t = Tensor::new(vec![8, 8], 3, vec![0.2; 192]).unwrap();
        assert_eq!(extract_features(&t).unwrap().0.len(), feature_dim(2, 3));
        let v = Tensor::new(vec![6, 6, 6], 1, vec![0.3; 216]).unwrap();
        let f = extract_features(&v).unwrap().0;
        assert_eq!(f.len(), 16);
        assert_eq!(f.len(), feature_dim(3, 1));
        assert!(f[2..].iter().all(|&x| (x - 0.3).abs() < 1e-7));
    }

    #[test]
    fn tiny_tiles_still_work() {
        let t = tile(1, 3, |_, y| y as f32);
        let f = extract_features(&t).unwrap().0;
        assert_eq!(f.len(), 22);
        assert!(f.iter().all(|v| v.is_finite()));
        let bad = Tensor::new(vec![2, 2], 1, vec![f32::NAN; 4]).unwrap();
        assert!(extract_features(&bad).is_err());
    }

    #[test]
    fn select_reorders_rows() {
        let fs = FeatureSet::new(3, 2, vec![0.0, 0.1, 1.0, 1.1, 2.0, 2.1]).unwrap();
        let s = fs.select(&[2, 0, 1]);
        assert_eq!(s.flat(), &[2.0, 2.1, 0.0, 0.1, 1.0, 1.1]);
    }
}
