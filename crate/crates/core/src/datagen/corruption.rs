//! Cumulative image corruptions indexed by a severity level 0..=4. Each level applies all
//! the transformations of the lower levels first.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{GroupedDataset, ImageShape};
use crate::{rng, Error, Result};

pub const MAX_SEVERITY: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionParams {
    /// Standard deviation of the additive pixel noise at severities 3 and 4 (0 disables it).
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for CorruptionParams {
    fn default() -> Self {
        CorruptionParams {
            noise_std: 0.1,
            seed: 0,
        }
    }
}

fn channel_shuffle(img: &mut [f64], shape: ImageShape) {
    // [R, G, B] -> [G, B, R]
    let plane = shape.height * shape.width;
    let src = img.to_vec();
    for c in 0..shape.channels {
        let from = (c + 1) % shape.channels;
        img[c * plane..(c + 1) * plane].copy_from_slice(&src[from * plane..(from + 1) * plane]);
    }
}

fn diagonal(img: &mut [f64], shape: ImageShape, anti: bool) {
    let n = shape.height.min(shape.width);
    for i in 0..n {
        let col = if anti { shape.width - 1 - i } else { i };
        for c in 0..shape.channels {
            img[shape.index(c, i, col)] = 1.0;
        }
    }
}

fn noise(img: &mut [f64], std: f64, rng: &mut rng::Rng) {
    if std == 0.0 {
        return;
    }
    for p in img.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *p = (*p + std * z).clamp(0.0, 1.0);
    }
}

/// Rotation by 270 degrees counter-clockwise (90 clockwise).
fn rotate_270(img: &mut [f64], shape: ImageShape) {
    let src = img.to_vec();
    let (h, w) = (shape.height, shape.width);
    for c in 0..shape.channels {
        for i in 0..h {
            for j in 0..w {
                img[shape.index(c, i, j)] = src[shape.index(c, h - 1 - j, i)];
            }
        }
    }
}

pub(crate) fn corrupt_image(img: &mut [f64], shape: ImageShape, severity: u8, noise_std: f64, rng: &mut rng::Rng) {
    if severity >= 1 {
        channel_shuffle(img, shape);
    }
    if severity >= 2 {
        diagonal(img, shape, false);
    }
    if severity >= 3 {
        noise(img, noise_std, rng);
        diagonal(img, shape, true);
    }
    if severity >= 4 {
        rotate_270(img, shape);
        img.iter_mut().for_each(|p| *p = 1.0 - *p);
        noise(img, noise_std, rng);
    }
}

/// Corrupts every sample whose group is in `target_groups` at severity `alpha`.
pub fn apply_corruption(
    ds: &GroupedDataset,
    alpha: u8,
    target_groups: &[usize],
    params: CorruptionParams,
) -> Result<GroupedDataset> {
    let shape = ds.image.ok_or(Error::NotAnImage)?;
    if shape.height != shape.width {
        return Err(Error::config("corruption requires square images"));
    }
    if alpha > MAX_SEVERITY {
        return Err(Error::config(format!("severity {alpha} outside 0..={MAX_SEVERITY}")));
    }
    let mut out = ds.clone();
    if alpha == 0 {
        return Ok(out);
    }
    for i in 0..out.len() {
        if target_groups.contains(&out.groups[i]) {
            let mut r = rng::stream(params.seed, "corruption", i as u64);
            corrupt_image(out.sample_mut(i), shape, alpha, params.noise_std, &mut r);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_colored_patterns, gen_gaussian_groups, BiasConfig, TintMode};

    fn images() -> GroupedDataset {
        let cfg = BiasConfig {
            num_classes: 2,
            num_groups: 2,
            dim: 3 * 25,
            skew: 0.5,
            separation: 0.0,
            n_per_class: 6,
            seed: 9,
            noise_std: 0.5,
        };
        gen_colored_patterns(&cfg, TintMode::Background, 0.2).unwrap()
    }

    #[test]
    fn severity_zero_is_identity() {
        let ds = images();
        let out = apply_corruption(&ds, 0, &[0, 1], CorruptionParams::default()).unwrap();
        assert_eq!(serde_json::to_vec(&ds).unwrap(), serde_json::to_vec(&out).unwrap());
    }

    #[test]
    fn severity_two_without_noise_is_shuffle_plus_line() {
        let ds = images();
        let params = CorruptionParams {
            noise_std: 0.0,
            seed: 3,
        };
        let out = apply_corruption(&ds, 2, &[1], params).unwrap();
        let shape = ds.image.unwrap();
        let s = shape.height;
        for i in 0..ds.len() {
            let x = ds.sample(i);
            if ds.groups[i] != 1 {
                assert_eq!(out.sample(i), x);
                continue;
            }
            // independent recomputation: channel c reads channel (c + 1) mod 3, then the
            // main diagonal is painted white
            for c in 0..3 {
                for r in 0..s {
                    for col in 0..s {
                        let expected = if r == col {
                            1.0
                        } else {
                            x[((c + 1) % 3) * s * s + r * s + col]
                        };
                        assert_eq!(out.sample(i)[c * s * s + r * s + col], expected);
                    }
                }
            }
        }
    }

    #[test]
    fn corruption_is_deterministic_and_nested() {
        // interior pixel values, so no alteration can coincide with the original value
        let mut ds = images();
        let mut r = crate::rng::rng(12);
        for p in ds.samples.iter_mut() {
            *p = rand::Rng::random_range(&mut r, 0.05..0.95);
        }
        let params = CorruptionParams {
            noise_std: 0.1,
            seed: 4,
        };
        let a = apply_corruption(&ds, 4, &[0, 1], params).unwrap();
        let b = apply_corruption(&ds, 4, &[0, 1], params).unwrap();
        assert_eq!(a, b);
        let altered = |alpha: u8| -> Vec<Vec<bool>> {
            let out = apply_corruption(&ds, alpha, &[0, 1], params).unwrap();
            (0..ds.len())
                .map(|i| ds.sample(i).iter().zip(out.sample(i)).map(|(p, q)| p != q).collect())
                .collect()
        };
        let mut prev = altered(0);
        for alpha in 1..=4 {
            let cur = altered(alpha);
            for (pr, cr) in prev.iter().zip(&cur) {
                for (&p, &c) in pr.iter().zip(cr) {
                    assert!(!p || c, "severity {alpha} dropped an alteration");
                }
            }
            prev = cur;
        }
    }

    #[test]
    fn rotation_matches_rot90_k3() {
        let shape = ImageShape {
            channels: 1,
            height: 2,
            width: 2,
        };
        // [[a, b], [c, d]] -> rot90(k=3) = [[c, a], [d, b]]
        let mut img = vec![1.0, 2.0, 3.0, 4.0];
        rotate_270(&mut img, shape);
        assert_eq!(img, vec![3.0, 1.0, 4.0, 2.0]);
    }

    #[test]
    fn non_images_are_rejected() {
        let cfg = BiasConfig {
            num_classes: 2,
            num_groups: 2,
            dim: 4,
            skew: 0.5,
            separation: 0.0,
            n_per_class: 4,
            seed: 0,
            noise_std: 0.5,
        };
        let ds = gen_gaussian_groups(&cfg).unwrap();
        assert!(matches!(
            apply_corruption(&ds, 1, &[0], CorruptionParams::default()),
            Err(Error::NotAnImage)
        ));
    }
}
