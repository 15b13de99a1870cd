//! Tiny tinted-shape images: the class fixes a binary shape mask, the group fixes a tint.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{BiasConfig, GroupedDataset, ImageShape, Split};
use crate::{rng, Error, Result};

pub const PALETTE_SIZE: usize = 10;
const MAX_SIDE: usize = 8;

const PALETTE: [[f64; 3]; PALETTE_SIZE] = [
    [0.90, 0.10, 0.10],
    [0.10, 0.80, 0.20],
    [0.15, 0.25, 0.90],
    [0.95, 0.85, 0.10],
    [0.80, 0.20, 0.80],
    [0.10, 0.80, 0.80],
    [0.95, 0.55, 0.10],
    [0.55, 0.35, 0.15],
    [0.60, 0.60, 0.60],
    [0.45, 0.95, 0.55],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TintMode {
    Foreground,
    Background,
}

pub fn palette(group: usize) -> [f64; 3] {
    PALETTE[group]
}

fn image_shape(dim: usize) -> Result<ImageShape> {
    let side = ((dim / 3) as f64).sqrt().round() as usize;
    if !dim.is_multiple_of(3) || side * side * 3 != dim || side == 0 || side > MAX_SIDE {
        return Err(Error::config(format!(
            "dim {dim} is not 3 x H x W with square H = W <= {MAX_SIDE}"
        )));
    }
    Ok(ImageShape {
        channels: 3,
        height: side,
        width: side,
    })
}

/// Fixed binary shape of class `class` on a `side x side` grid (row-major).
pub fn shape_mask(class: usize, side: usize) -> Vec<bool> {
    shape_masks(class + 1, side).pop().expect("at least one mask")
}

/// Masks for classes `0..n`, pairwise distinct, never empty or full.
fn shape_masks(n: usize, side: usize) -> Vec<Vec<bool>> {
    let cells = side * side;
    let mut masks: Vec<Vec<bool>> = Vec::with_capacity(n);
    for class in 0..n {
        let mut attempt = 0u64;
        loop {
            let mut r = rng::stream(0x5EED_5A9E, "shape-mask", (class as u64) << 16 | attempt);
            let mask: Vec<bool> = (0..cells).map(|_| r.random_bool(0.5)).collect();
            let on = mask.iter().filter(|&&m| m).count();
            if on > 0 && on < cells && !masks.contains(&mask) {
                masks.push(mask);
                break;
            }
            attempt += 1;
        }
    }
    masks
}

pub(crate) fn render(
    config: &BiasConfig,
    mode: TintMode,
    pixel_noise: f64,
    counts: &[Vec<usize>],
    tag: &str,
) -> Result<GroupedDataset> {
    let shape = image_shape(config.dim)?;
    if config.num_groups > PALETTE_SIZE {
        return Err(Error::config(format!(
            "{} groups exceed the {PALETTE_SIZE}-color palette",
            config.num_groups
        )));
    }
    let side = shape.height;
    let mut rng = rng::stream(config.seed, tag, 0);
    let mut ds = GroupedDataset::empty(config.num_classes, config.num_groups, config.dim, Split::Train);
    ds.image = Some(shape);
    let mut x = vec![0.0; config.dim];
    let masks = shape_masks(config.num_classes, side);
    for (class, mask) in masks.iter().enumerate() {
        for (group, &count) in counts[class].iter().enumerate() {
            let tint = palette(group);
            for _ in 0..count {
                for (p, &on) in mask.iter().enumerate() {
                    let (row, col) = (p / side, p % side);
                    for c in 0..3 {
                        let base = match (mode, on) {
                            (TintMode::Foreground, true) => tint[c],
                            (TintMode::Foreground, false) => 0.0,
                            (TintMode::Background, true) => 1.0,
                            (TintMode::Background, false) => tint[c],
                        };
                        let z: f64 = StandardNormal.sample(&mut rng);
                        x[shape.index(c, row, col)] = (base + pixel_noise * z).clamp(0.0, 1.0);
                    }
                }
                ds.push(&x, class, group);
            }
        }
    }
    Ok(ds)
}

/// Skewed training set of tinted shapes; the majority tint of each class follows the
/// same assignment rule as the Gaussian generator.
pub fn gen_colored_patterns(config: &BiasConfig, mode: TintMode, pixel_noise: f64) -> Result<GroupedDataset> {
    config.validate()?;
    let counts: Vec<Vec<usize>> = (0..config.num_classes).map(|y| config.group_counts(y)).collect();
    render(config, mode, pixel_noise, &counts, "colored-train")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(g: usize, skew: f64, n: usize, seed: u64) -> BiasConfig {
        BiasConfig {
            num_classes: 3,
            num_groups: g,
            dim: 3 * 16,
            skew,
            separation: 0.0,
            n_per_class: n,
            seed,
            noise_std: 0.5,
        }
    }

    #[test]
    fn same_cell_shares_mask_and_tint() {
        let a = gen_colored_patterns(&config(2, 0.5, 4, 1), TintMode::Foreground, 0.0).unwrap();
        let b = gen_colored_patterns(&config(2, 0.5, 4, 2), TintMode::Foreground, 0.0).unwrap();
        // without pixel noise the image is a function of (class, group) alone
        assert_eq!(a.sample(0), b.sample(0));
        assert_eq!(a.sample(0), a.sample(1));
        let noisy = gen_colored_patterns(&config(2, 0.5, 4, 3), TintMode::Foreground, 0.05).unwrap();
        let diff: f64 = noisy
            .sample(0)
            .iter()
            .zip(a.sample(0))
            .map(|(p, q)| (p - q).abs())
            .sum();
        assert!(diff > 0.0 && diff / 48.0 < 0.2);
    }

    #[test]
    fn background_groups_differ_only_off_mask() {
        let ds = gen_colored_patterns(&config(2, 0.5, 2, 5), TintMode::Background, 0.0).unwrap();
        let shape = ds.image.unwrap();
        let mask = shape_mask(0, shape.height);
        let g0 = ds.cell_indices(0, 0)[0];
        let g1 = ds.cell_indices(0, 1)[0];
        for (p, &on) in mask.iter().enumerate() {
            for c in 0..3 {
                let idx = shape.index(c, p / shape.width, p % shape.width);
                let same = ds.sample(g0)[idx] == ds.sample(g1)[idx];
                if on {
                    assert!(same);
                }
            }
        }
        assert_ne!(ds.sample(g0), ds.sample(g1));
    }

    #[test]
    fn majority_color_fraction_matches_skew() {
        let ds = gen_colored_patterns(&config(10, 0.9, 100, 0), TintMode::Foreground, 0.05).unwrap();
        for y in 0..3 {
            let counts = &ds.cell_counts()[y];
            assert_eq!(counts[y % 10], 90);
            assert_eq!(counts.iter().sum::<usize>(), 100);
        }
    }

    #[test]
    fn palette_size_is_enforced() {
        let cfg = config(11, 0.5, 20, 0);
        assert!(gen_colored_patterns(&cfg, TintMode::Foreground, 0.0).is_err());
    }

    #[test]
    fn masks_are_distinct_per_class() {
        let masks: Vec<_> = (0..5).map(|c| shape_mask(c, 4)).collect();
        for i in 0..5 {
            for j in 0..i {
                assert_ne!(masks[i], masks[j]);
            }
        }
    }
}
