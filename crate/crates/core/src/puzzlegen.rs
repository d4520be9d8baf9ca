//! Puzzle instances from images and volumes.
//!
//! A 2D source is resized to `cell·W × cell·H`, every cell is cropped to a
//! `crop × crop` tile (randomly placed inside the cell when jittering,
//! centred otherwise), optionally mirrored and mean-subtracted, and the tiles
//! are shuffled by a uniform permutation recorded as the ground truth. A 3D
//! source first has a random `120³` region cut out, which is split into
//! `2³` or `3³` cells holding `48³` or `32³` tiles.
//!
//! Everything random is drawn into a [`PuzzleMeta`], and tiles are rendered
//! from the meta alone, so an instance can be rebuilt bit for bit.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::grid::{random_permutation, Configuration, GridShape};
use crate::image::{load_tensor, resize_bilinear, save_tensor, ImageTensor, Tensor};

pub const REGION_3D: usize = 120;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeanSubtract {
    Off,
    /// Each tile's own per-channel mean.
    PerPatch,
    /// The per-channel mean of the whole (resized or cropped) source.
    Image,
}

impl fmt::Display for MeanSubtract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeanSubtract::Off => "off",
            MeanSubtract::PerPatch => "patch",
            MeanSubtract::Image => "image",
        })
    }
}

impl FromStr for MeanSubtract {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" | "none" => Ok(MeanSubtract::Off),
            "patch" => Ok(MeanSubtract::PerPatch),
            "image" | "global" => Ok(MeanSubtract::Image),
            _ => domain(format!("unknown mean mode {s:?} (off, patch, image)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PuzzleOptions {
    /// Cell edge after resizing (2D only; 3D cells are `120 / per_axis`).
    pub cell: usize,
    /// Tile edge cropped from each cell (2D only; 3D uses 48 or 32).
    pub crop: usize,
    pub jitter: bool,
    /// Probability of a horizontal flip per tile. Ignored in 3D.
    pub mirror_p: f64,
    pub mean: MeanSubtract,
    pub scramble: bool,
}

impl Default for PuzzleOptions {
    fn default() -> Self {
        Self {
            cell: 85,
            crop: 64,
            jitter: true,
            mirror_p: 0.5,
            mean: MeanSubtract::PerPatch,
            scramble: true,
        }
    }
}

impl PuzzleOptions {
    /// Deterministic evaluation protocol: centred crops, no flips.
    pub fn testing() -> Self {
        Self {
            jitter: false,
            mirror_p: 0.0,
            ..Self::default()
        }
    }
}

/// Everything needed to re-render an instance from its source.
#[derive(Clone, Debug, PartialEq)]
pub struct PuzzleMeta {
    pub source: String,
    pub seed: Option<u64>,
    /// Source dims the cells are cut from (after resizing in 2D).
    pub canvas: Vec<usize>,
    /// Corner of the cropped region inside the source (3D), zeros in 2D.
    pub region: Vec<usize>,
    pub cell: usize,
    pub tile: usize,
    /// Crop offset inside each cell, indexed by original position ID.
    pub offsets: Vec<Vec<usize>>,
    /// Whether the tile of each original position ID was flipped.
    pub mirrored: Vec<bool>,
    pub mean: MeanSubtract,
}

#[derive(Clone, Debug)]
pub struct PuzzleInstance {
    pub shape: GridShape,
    /// Tiles in current-slot order; empty for truth-only instances.
    pub patches: Vec<Tensor>,
    pub truth: Configuration,
    pub meta: PuzzleMeta,
}

impl PuzzleInstance {
    /// An instance without pixels, usable with scorers that only read truth.
    pub fn truth_only(shape: GridShape, truth: Configuration) -> Result<Self> {
        if truth.len() != shape.n() {
            return domain("truth size does not match grid");
        }
        let rank = shape.rank();
        Ok(Self {
            meta: PuzzleMeta {
                source: "none".into(),
                seed: None,
                canvas: vec![0; rank],
                region: vec![0; rank],
                cell: 0,
                tile: 0,
                offsets: vec![vec![0; rank]; shape.n()],
                mirrored: vec![false; shape.n()],
                mean: MeanSubtract::Off,
            },
            shape,
            patches: Vec::new(),
            truth,
        })
    }

    pub fn has_pixels(&self) -> bool {
        !self.patches.is_empty()
    }

    pub fn n(&self) -> usize {
        self.shape.n()
    }
}

fn check_grid(shape: &GridShape, rank: usize) -> Result<()> {
    if shape.rank() != rank {
        return domain(format!("expected a {rank}D grid, got {shape}"));
    }
    Ok(())
}

/// Builds a 2D puzzle from `img` on a `w × h` grid.
pub fn make_puzzle_2d<R: Rng + ?Sized>(
    img: &ImageTensor,
    w: usize,
    h: usize,
    rng: &mut R,
    opts: &PuzzleOptions,
) -> Result<PuzzleInstance> {
    let shape = GridShape::new_2d(w, h)?;
    if img.dims().len() != 2 {
        return domain("make_puzzle_2d needs a 2D image");
    }
    if opts.crop == 0 || opts.crop > opts.cell {
        return domain(format!("crop {} must be in 1..={}", opts.crop, opts.cell));
    }
    if !(0.0..=1.0).contains(&opts.mirror_p) {
        return domain("mirror probability must be within [0, 1]");
    }
    let canvas = vec![opts.cell * w, opts.cell * h];
    let gap = opts.cell - opts.crop;
    let n = shape.n();
    let offsets = (0..n)
        .map(|_| {
            if opts.jitter {
                vec![rng.gen_range(0..=gap), rng.gen_range(0..=gap)]
            } else {
                vec![gap / 2, gap / 2]
            }
        })
        .collect();
    let mirrored = (0..n)
        .map(|_| opts.mirror_p > 0.0 && rng.gen_bool(opts.mirror_p))
        .collect();
    let truth = if opts.scramble {
        random_permutation(n, rng)
    } else {
        Configuration::identity(n)
    };
    let meta = PuzzleMeta {
        source: String::new(),
        seed: None,
        canvas,
        region: vec![0, 0],
        cell: opts.cell,
        tile: opts.crop,
        offsets,
        mirrored,
        mean: opts.mean,
    };
    render(img, shape, truth, meta)
}

/// Builds a 3D puzzle with `per_axis³` cells from a volume of at least `120³`.
pub fn make_puzzle_3d<R: Rng + ?Sized>(
    vol: &ImageTensor,
    per_axis: usize,
    rng: &mut R,
    opts: &PuzzleOptions,
) -> Result<PuzzleInstance> {
    let tile = match per_axis {
        2 => 48,
        3 => 32,
        _ => {
            return domain(format!(
                "3D puzzles use 2 or 3 cells per axis, got {per_axis}"
            ))
        }
    };
    if vol.dims().len() != 3 {
        return domain("make_puzzle_3d needs a 3D volume");
    }
    if vol.dims().iter().any(|&d| d < REGION_3D) {
        return domain(format!(
            "volume {:?} is smaller than {REGION_3D}^3",
            vol.dims()
        ));
    }
    let shape = GridShape::new_3d(per_axis, per_axis, per_axis)?;
    let cell = REGION_3D / per_axis;
    let gap = cell - tile;
    let region: Vec<usize> = vol
        .dims()
        .iter()
        .map(|&d| rng.gen_range(0..=d - REGION_3D))
        .collect();
    let n = shape.n();
    let offsets = (0..n)
        .map(|_| {
            (0..3)
                .map(|_| {
                    if opts.jitter {
                        rng.gen_range(0..=gap)
                    } else {
                        gap / 2
                    }
                })
                .collect()
        })
        .collect();
    let truth = if opts.scramble {
        random_permutation(n, rng)
    } else {
        Configuration::identity(n)
    };
    let meta = PuzzleMeta {
        source: String::new(),
        seed: None,
        canvas: vol.dims().to_vec(),
        region,
        cell,
        tile,
        offsets,
        mirrored: vec![false; n],
        mean: opts.mean,
    };
    render(vol, shape, truth, meta)
}

/// Rebuilds an instance from its source and recorded meta.
pub fn regenerate(
    source: &ImageTensor,
    shape: &GridShape,
    truth: &Configuration,
    meta: &PuzzleMeta,
) -> Result<PuzzleInstance> {
    render(source, shape.clone(), truth.clone(), meta.clone())
}

fn render(
    source: &ImageTensor,
    shape: GridShape,
    truth: Configuration,
    meta: PuzzleMeta,
) -> Result<PuzzleInstance> {
    let rank = shape.rank();
    check_grid(&shape, source.dims().len())?;
    let n = shape.n();
    if truth.len() != n || meta.offsets.len() != n || meta.mirrored.len() != n {
        return domain("meta does not match grid size");
    }
    // In 2D the canvas is the resized image; in 3D it is the source itself.
    let canvas = if rank == 2 {
        resize_bilinear(source, &meta.canvas)?
    } else {
        if source.dims() != meta.canvas.as_slice() {
            return domain("volume dims do not match meta");
        }
        source.clone()
    };
    let region_extent: Vec<usize> = shape.extents().iter().map(|&e| e * meta.cell).collect();
    for axis in 0..rank {
        if meta.region[axis] + region_extent[axis] > canvas.dims()[axis] {
            return domain("puzzle region exceeds the source");
        }
    }
    let image_mean = match meta.mean {
        MeanSubtract::Image => Some(region_mean(canvas.tensor(), &meta.region, &region_extent)),
        _ => None,
    };

    let mut tiles = Vec::with_capacity(n);
    for id in 0..n {
        let cell = shape.id_to_position(crate::grid::PositionId(id))?;
        let origin: Vec<usize> = (0..rank)
            .map(|a| meta.region[a] + cell[a] * meta.cell + meta.offsets[id][a])
            .collect();
        if meta.offsets[id].iter().any(|&o| o + meta.tile > meta.cell) {
            return domain(format!("crop window of cell {id} leaves the cell"));
        }
        let mut tile = crop(canvas.tensor(), &origin, meta.tile);
        if meta.mirrored[id] {
            tile = flip_x(&tile);
        }
        match (meta.mean, &image_mean) {
            (MeanSubtract::PerPatch, _) => {
                let m = tile.channel_means();
                subtract(&mut tile, &m);
            }
            (MeanSubtract::Image, Some(m)) => subtract(&mut tile, m),
            _ => {}
        }
        tiles.push(tile);
    }
    let patches = truth
        .as_slice()
        .iter()
        .map(|&id| tiles[id].clone())
        .collect();
    Ok(PuzzleInstance {
        shape,
        patches,
        truth,
        meta,
    })
}

fn for_each_pixel(extent: &[usize], mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0; extent.len()];
    let total: usize = extent.iter().product();
    for _ in 0..total {
        f(&idx);
        for (i, e) in idx.iter_mut().zip(extent) {
            *i += 1;
            if *i < *e {
                break;
            }
            *i = 0;
        }
    }
}

fn crop(src: &Tensor, origin: &[usize], edge: usize) -> Tensor {
    let rank = origin.len();
    let c = src.channels();
    let dims = vec![edge; rank];
    let mut data = Vec::with_capacity(edge.pow(rank as u32) * c);
    let mut at = vec![0; rank];
    for_each_pixel(&dims, |p| {
        for a in 0..rank {
            at[a] = origin[a] + p[a];
        }
        let o = src.offset(&at);
        data.extend_from_slice(&src.data()[o..o + c]);
    });
    Tensor::new(dims, c, data).expect("crop dims are consistent")
}

/// Reverses the x axis.
pub fn flip_x(t: &Tensor) -> Tensor {
    let c = t.channels();
    let w = t.dims()[0];
    let mut out = t.clone();
    for (src_row, dst_row) in t.data().chunks(w * c).zip(out.data_mut().chunks_mut(w * c)) {
        for x in 0..w {
            dst_row[x * c..(x + 1) * c].copy_from_slice(&src_row[(w - 1 - x) * c..(w - x) * c]);
        }
    }
    out
}

fn region_mean(t: &Tensor, origin: &[usize], extent: &[usize]) -> Vec<f64> {
    let c = t.channels();
    let mut sums = vec![0.0f64; c];
    let mut at = vec![0; origin.len()];
    for_each_pixel(extent, |p| {
        for a in 0..origin.len() {
            at[a] = origin[a] + p[a];
        }
        let o = t.offset(&at);
        for (s, &v) in sums.iter_mut().zip(&t.data()[o..o + c]) {
            *s += v as f64;
        }
    });
    let count: usize = extent.iter().product();
    sums.iter().map(|s| s / count as f64).collect()
}

fn subtract(t: &mut Tensor, means: &[f64]) {
    let c = t.channels();
    for px in t.data_mut().chunks_mut(c) {
        for (v, &m) in px.iter_mut().zip(means) {
            *v = (*v as f64 - m) as f32;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    Gradient,
    Blobs,
    Mixed,
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("synth-").unwrap_or(s) {
            "gradient" => Ok(SynthKind::Gradient),
            "blobs" => Ok(SynthKind::Blobs),
            "mixed" => Ok(SynthKind::Mixed),
            _ => domain(format!(
                "unknown synthetic kind {s:?} (gradient, blobs, mixed)"
            )),
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Gradient => "synth-gradient",
            SynthKind::Blobs => "synth-blobs",
            SynthKind::Mixed => "synth-mixed",
        })
    }
}

/// Linear ramp `Σ slope[a]·x_a/extent_a + offset`, clamped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ramp {
    pub slopes: Vec<f64>,
    pub offset: f64,
}

impl Ramp {
    fn random(rank: usize, rng: &mut impl Rng) -> Self {
        Self {
            slopes: (0..rank).map(|_| rng.gen_range(-0.6..0.6)).collect(),
            offset: rng.gen_range(0.2..0.8),
        }
    }

    fn value(&self, p: &[usize], dims: &[usize]) -> f64 {
        let v: f64 = self
            .slopes
            .iter()
            .zip(p.iter().zip(dims))
            .map(|(s, (&x, &d))| s * x as f64 / d as f64)
            .sum();
        (v + self.offset).clamp(0.0, 1.0)
    }
}

struct Bump {
    centre: Vec<f64>,
    sigma: f64,
    amp: f64,
}

fn random_bumps(rank: usize, rng: &mut impl Rng) -> Vec<Bump> {
    let count = rng.gen_range(3..=6);
    (0..count)
        .map(|_| Bump {
            // Centres lean toward the middle, so each cell sees the mass
            // from a consistent side.
            centre: (0..rank).map(|_| rng.gen_range(0.3..0.7)).collect(),
            sigma: rng.gen_range(0.12..0.3),
            amp: rng.gen_range(0.3..0.8),
        })
        .collect()
}

fn bumps_value(bumps: &[Bump], p: &[usize], dims: &[usize]) -> f64 {
    bumps
        .iter()
        .map(|b| {
            let d2: f64 = b
                .centre
                .iter()
                .zip(p.iter().zip(dims))
                .map(|(c, (&x, &d))| {
                    let t = (x as f64 + 0.5) / d as f64 - c;
                    t * t
                })
                .sum();
            b.amp * (-d2 / (2.0 * b.sigma * b.sigma)).exp()
        })
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Deterministic single-channel synthetic image (`size × size`).
pub fn synth_image(kind: SynthKind, size: usize, seed: u64) -> Result<ImageTensor> {
    synth(kind, &[size, size], seed)
}

/// Deterministic single-channel synthetic volume (`size³`).
pub fn synth_volume(kind: SynthKind, size: usize, seed: u64) -> Result<ImageTensor> {
    synth(kind, &[size, size, size], seed)
}

fn synth(kind: SynthKind, dims: &[usize], seed: u64) -> Result<ImageTensor> {
    if dims.iter().any(|&d| d < 16) {
        return domain("synthetic sources must be at least 16 on every axis");
    }
    let rank = dims.len();
    let mut ramp_rng = ChaCha8Rng::seed_from_u64(seed);
    ramp_rng.set_stream(1);
    let mut bump_rng = ChaCha8Rng::seed_from_u64(seed);
    bump_rng.set_stream(2);
    let ramp = Ramp::random(rank, &mut ramp_rng);
    let bumps = random_bumps(rank, &mut bump_rng);
    let mut data = Vec::with_capacity(dims.iter().product());
    for_each_pixel(dims, |p| {
        let v = match kind {
            SynthKind::Gradient => ramp.value(p, dims),
            SynthKind::Blobs => bumps_value(&bumps, p, dims),
            SynthKind::Mixed => 0.5 * (ramp.value(p, dims) + bumps_value(&bumps, p, dims)),
        };
        data.push(v as f32);
    });
    ImageTensor::new(dims.to_vec(), 1, data)
}

/// Renders a ramp directly; used to pin the gradient formula in tests.
pub fn ramp_image(ramp: &Ramp, w: usize, h: usize) -> Result<ImageTensor> {
    let dims = [w, h];
    let mut data = Vec::with_capacity(w * h);
    for_each_pixel(&dims, |p| data.push(ramp.value(p, &dims) as f32));
    ImageTensor::new(dims.to_vec(), 1, data)
}

fn join<T: ToString>(v: &[T], sep: &str) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

fn parse_list(s: &str, sep: char) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(sep)
        .map(|p| {
            p.parse()
                .map_err(|_| Error::Format(format!("bad number {p:?} in {s:?}")))
        })
        .collect()
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Format(format!("manifest line {} has no '='", i + 1)));
        };
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn field<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Format(format!("manifest is missing {key:?}")))
}

/// `key=value` text describing one instance.
pub fn instance_manifest(inst: &PuzzleInstance) -> String {
    let m = &inst.meta;
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        s.push_str(k);
        s.push('=');
        s.push_str(&v);
        s.push('\n');
    };
    kv("grid", inst.shape.to_string());
    kv("truth", join(inst.truth.as_slice(), ","));
    kv("source", m.source.clone());
    kv(
        "seed",
        m.seed.map_or_else(|| "none".into(), |s| s.to_string()),
    );
    kv("canvas", join(&m.canvas, "x"));
    kv("region", join(&m.region, ","));
    kv("cell", m.cell.to_string());
    kv("tile", m.tile.to_string());
    kv(
        "offsets",
        m.offsets
            .iter()
            .map(|o| join(o, ","))
            .collect::<Vec<_>>()
            .join(";"),
    );
    kv(
        "mirrored",
        m.mirrored
            .iter()
            .map(|&b| if b { "1" } else { "0" })
            .collect::<String>(),
    );
    kv("mean", m.mean.to_string());
    s
}

/// Inverse of [`instance_manifest`]; returns a pixel-less instance.
pub fn parse_instance_manifest(text: &str) -> Result<PuzzleInstance> {
    let map = parse_manifest(text)?;
    let shape: GridShape = field(&map, "grid")?.parse()?;
    let truth = Configuration::new(parse_list(field(&map, "truth")?, ',')?)
        .map_err(|e| Error::Format(e.to_string()))?;
    let seed = match field(&map, "seed")? {
        "none" => None,
        s => Some(
            s.parse()
                .map_err(|_| Error::Format(format!("bad seed {s:?}")))?,
        ),
    };
    let offsets = field(&map, "offsets")?
        .split(';')
        .map(|o| parse_list(o, ','))
        .collect::<Result<Vec<_>>>()?;
    let mirrored = field(&map, "mirrored")?.chars().map(|c| c == '1').collect();
    let meta = PuzzleMeta {
        source: field(&map, "source")?.to_string(),
        seed,
        canvas: parse_list(field(&map, "canvas")?, 'x')?,
        region: parse_list(field(&map, "region")?, ',')?,
        cell: field(&map, "cell")?
            .parse()
            .map_err(|_| Error::Format("bad cell".into()))?,
        tile: field(&map, "tile")?
            .parse()
            .map_err(|_| Error::Format("bad tile".into()))?,
        offsets,
        mirrored,
        mean: field(&map, "mean")?.parse()?,
    };
    let mut inst = PuzzleInstance::truth_only(shape, truth)?;
    if meta.offsets.len() != inst.n() || meta.mirrored.len() != inst.n() {
        return Err(Error::Format("per-cell meta does not match grid".into()));
    }
    inst.meta = meta;
    Ok(inst)
}

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const PATCHES_FILE: &str = "patches.rten";

/// Writes `manifest.txt` and, when the instance has pixels, `patches.rten`
/// (tiles stacked along a trailing slot axis).
pub fn save_instance(dir: &Path, inst: &PuzzleInstance) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(MANIFEST_FILE), instance_manifest(inst))?;
    if inst.has_pixels() {
        let first = &inst.patches[0];
        let mut dims = first.dims().to_vec();
        dims.push(inst.patches.len());
        let data: Vec<f32> = inst
            .patches
            .iter()
            .flat_map(|p| p.data().iter().copied())
            .collect();
        save_tensor(
            &Tensor::new(dims, first.channels(), data)?,
            &dir.join(PATCHES_FILE),
        )?;
    }
    Ok(())
}

pub fn load_instance(dir: &Path) -> Result<PuzzleInstance> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let mut inst = parse_instance_manifest(&text)?;
    let patches_path = dir.join(PATCHES_FILE);
    if patches_path.exists() {
        let stacked = load_tensor(&patches_path)?;
        let (&count, tile_dims) = stacked.dims().split_last().expect("rank >= 1");
        if count != inst.n() || tile_dims.len() != inst.shape.rank() {
            return Err(Error::Format(format!(
                "{} holds {count} tiles of rank {}, grid {} needs {}",
                patches_path.display(),
                tile_dims.len(),
                inst.shape,
                inst.n()
            )));
        }
        let per = stacked.data().len() / count;
        inst.patches = stacked
            .data()
            .chunks(per)
            .map(|d| Tensor::new(tile_dims.to_vec(), stacked.channels(), d.to_vec()))
            .collect::<Result<_>>()?;
    }
    Ok(inst)
}
