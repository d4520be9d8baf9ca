//! On-disk corpora: one `inst_NNNNN/` directory per instance plus a
//! corpus-level `manifest.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use jigsolve_core::grid::GridShape;
use jigsolve_core::image::{load_image, ImageTensor};
use jigsolve_core::puzzlegen::{
    load_instance, make_puzzle_2d, make_puzzle_3d, parse_instance_manifest, parse_manifest,
    save_instance, synth_image, synth_volume, PuzzleInstance, PuzzleOptions, MANIFEST_FILE,
    REGION_3D,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::args::GenArgs;
use crate::error::usage;

pub fn instance_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("inst_{index:05}"))
}

/// Exact `n!` as a decimal string.
pub fn config_space(shape: &GridShape) -> String {
    shape
        .config_space_size()
        .map_or_else(|| "overflow".to_string(), |v| v.to_string())
}

/// Geometry stream for instance `index`.
pub fn instance_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64))
}

fn load_inputs(dir: &Path) -> Result<Vec<(String, ImageTensor)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading image directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "ppm")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return usage(format!("no .pgm or .ppm images in {}", dir.display()));
    }
    paths
        .iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let img = load_image(p).with_context(|| format!("loading {}", p.display()))?;
            Ok((name, img))
        })
        .collect()
}

fn make_one(
    args: &GenArgs,
    opts: &PuzzleOptions,
    inputs: &[(String, ImageTensor)],
    i: usize,
) -> Result<PuzzleInstance> {
    let mut rng = instance_rng(args.common.seed, i);
    let image_seed = args.common.seed.wrapping_add(i as u64);
    let shape = &args.grid;
    let mut inst = if shape.is_2d() {
        let (source, img) = match inputs.get(i % inputs.len().max(1)) {
            Some((name, img)) => (name.clone(), img.clone()),
            None => (
                args.kind.to_string(),
                synth_image(args.kind, args.size, image_seed)?,
            ),
        };
        let mut inst = make_puzzle_2d(&img, shape.width(), shape.height(), &mut rng, opts)?;
        inst.meta.source = source;
        inst
    } else {
        let e = shape.extents();
        let per_axis = e[0];
        if e.iter().any(|&x| x != per_axis) || !(2..=3).contains(&per_axis) {
            return usage(format!("3D grids must be 2x2x2 or 3x3x3, got {shape}"));
        }
        let vol = synth_volume(args.volume_kind, REGION_3D, image_seed)?;
        let mut inst = make_puzzle_3d(&vol, per_axis, &mut rng, opts)?;
        inst.meta.source = args.volume_kind.to_string();
        inst
    };
    if inputs.is_empty() {
        inst.meta.seed = Some(image_seed);
    }
    Ok(inst)
}

pub fn generate(args: &GenArgs) -> Result<usize> {
    if args.count == 0 {
        return usage("--count must be at least 1");
    }
    if !(0.0..=1.0).contains(&args.mirror_p) {
        return usage("--mirror-p must be within [0, 1]");
    }
    if args.grid.is_2d() && args.size < 16 {
        return usage("--size must be at least 16");
    }
    let opts = PuzzleOptions {
        jitter: !args.testing,
        mirror_p: if args.testing || !args.grid.is_2d() {
            0.0
        } else {
            args.mirror_p
        },
        mean: args.mean,
        ..PuzzleOptions::default()
    };
    let inputs = match &args.input {
        Some(dir) if args.grid.is_2d() => load_inputs(dir)?,
        Some(_) => return usage("--input images only apply to 2D grids"),
        None => Vec::new(),
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    (0..args.count)
        .into_par_iter()
        .try_for_each(|i| -> Result<()> {
            let inst = make_one(args, &opts, &inputs, i)?;
            let dir = instance_dir(&args.out, i);
            save_instance(&dir, &inst).with_context(|| format!("writing {}", dir.display()))
        })?;
    let source = match &args.input {
        Some(dir) => dir.display().to_string(),
        None if args.grid.is_2d() => args.kind.to_string(),
        None => args.volume_kind.to_string(),
    };
    let manifest = format!(
        "grid={}\ncount={}\nseed={}\nsource={}\nsize={}\ntesting={}\nmirror_p={}\nmean={}\nconfig_space={}\n",
        args.grid,
        args.count,
        args.common.seed,
        source,
        if args.grid.is_2d() { args.size } else { REGION_3D },
        args.testing,
        opts.mirror_p,
        args.mean,
        config_space(&args.grid),
    );
    fs::write(args.out.join(MANIFEST_FILE), manifest)?;
    Ok(args.count)
}

pub struct Corpus {
    pub shape: GridShape,
    pub puzzles: Vec<PuzzleInstance>,
}

/// Loads every instance; tiles are skipped unless `pixels`.
pub fn load(root: &Path, pixels: bool) -> Result<Corpus> {
    let path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading corpus manifest {}", path.display()))?;
    let map = parse_manifest(&text).with_context(|| format!("parsing {}", path.display()))?;
    let field = |k: &str| {
        map.get(k).ok_or_else(|| {
            jigsolve_core::Error::Format(format!("{} has no {k:?} entry", path.display()))
        })
    };
    let shape: GridShape = field("grid")?.parse()?;
    let count: usize = field("count")?
        .parse()
        .map_err(|_| jigsolve_core::Error::Format(format!("bad count in {}", path.display())))?;
    let puzzles = (0..count)
        .into_par_iter()
        .map(|i| {
            let dir = instance_dir(root, i);
            let inst = if pixels {
                load_instance(&dir)
            } else {
                fs::read_to_string(dir.join(MANIFEST_FILE))
                    .map_err(Into::into)
                    .and_then(|t| parse_instance_manifest(&t))
            }
            .with_context(|| format!("loading {}", dir.display()))?;
            if inst.shape != shape {
                anyhow::bail!(jigsolve_core::Error::Format(format!(
                    "{} is a {} puzzle in a {shape} corpus",
                    dir.display(),
                    inst.shape
                )));
            }
            if pixels && !inst.has_pixels() {
                anyhow::bail!(jigsolve_core::Error::Format(format!(
                    "{} has no tiles",
                    dir.display()
                )));
            }
            Ok(inst)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus { shape, puzzles })
}
