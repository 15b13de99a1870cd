use rand_distr::{Distribution, StandardNormal};

use super::{BiasConfig, Generator, GroupedDataset, Split};
use crate::{rng, Error, Result};

/// Class anchor `mu_y`: a scaled basis vector, giving pairwise anchor distance `6 * noise_std`.
pub fn class_anchor(config: &BiasConfig, class: usize) -> Vec<f64> {
    let mut mu = vec![0.0; config.dim];
    mu[class] = 6.0 * config.noise_std / std::f64::consts::SQRT_2;
    mu
}

/// Unit group offset `u_a`, orthogonal to every class anchor.
pub fn group_offset(num_classes: usize, group: usize, dim: usize) -> Vec<f64> {
    let mut u = vec![0.0; dim];
    u[num_classes + group] = 1.0;
    u
}

fn check_dim(config: &BiasConfig) -> Result<()> {
    if config.dim < config.num_classes + config.num_groups {
        return Err(Error::config(format!(
            "dim {} cannot host {} class anchors and {} group offsets",
            config.dim, config.num_classes, config.num_groups
        )));
    }
    Ok(())
}

fn draw_cell(
    config: &BiasConfig,
    ds: &mut GroupedDataset,
    rng: &mut rng::Rng,
    class: usize,
    group: usize,
    count: usize,
) {
    let mut mean = class_anchor(config, class);
    mean[config.num_classes + group] += config.separation;
    let mut x = vec![0.0; config.dim];
    for _ in 0..count {
        for (xi, mi) in x.iter_mut().zip(&mean) {
            let z: f64 = StandardNormal.sample(rng);
            *xi = mi + config.noise_std * z;
        }
        ds.push(&x, class, group);
    }
}

/// Draws a skewed training set from isotropic Gaussians centred at
/// `mu_y + separation * u_a`.
pub fn gen_gaussian_groups(config: &BiasConfig) -> Result<GroupedDataset> {
    config.validate()?;
    check_dim(config)?;
    let mut rng = rng::stream(config.seed, "gaussian-train", 0);
    let mut ds = GroupedDataset::empty(config.num_classes, config.num_groups, config.dim, Split::Train);
    for class in 0..config.num_classes {
        for (group, &count) in config.group_counts(class).iter().enumerate() {
            draw_cell(config, &mut ds, &mut rng, class, group, count);
        }
    }
    Ok(ds)
}

/// Group-balanced test split with exactly `n_per_cell` samples in every (class, group) cell.
pub fn make_balanced_test(config: &BiasConfig, generator: &Generator, n_per_cell: usize) -> Result<GroupedDataset> {
    if n_per_cell == 0 {
        return Err(Error::config("n_per_cell must be at least 1"));
    }
    config.validate()?;
    match generator {
        Generator::Gaussian => {
            check_dim(config)?;
            let mut rng = rng::stream(config.seed, "gaussian-test", 0);
            let mut ds = GroupedDataset::empty(config.num_classes, config.num_groups, config.dim, Split::Test);
            for class in 0..config.num_classes {
                for group in 0..config.num_groups {
                    draw_cell(config, &mut ds, &mut rng, class, group, n_per_cell);
                }
            }
            Ok(ds)
        }
        Generator::Colored { mode, pixel_noise } => {
            let counts = vec![vec![n_per_cell; config.num_groups]; config.num_classes];
            let mut ds = super::colored::render(config, *mode, *pixel_noise, &counts, "colored-test")?;
            ds.split = Split::Test;
            Ok(ds)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::TintMode;

    fn config(c: usize, g: usize, d: usize, skew: f64, sep: f64, n: usize) -> BiasConfig {
        BiasConfig {
            num_classes: c,
            num_groups: g,
            dim: d,
            skew,
            separation: sep,
            n_per_class: n,
            seed: 11,
            noise_std: 0.5,
        }
    }

    #[test]
    fn majority_counts_match_skew() {
        let ds = gen_gaussian_groups(&config(2, 2, 4, 0.9, 1.0, 100)).unwrap();
        let counts = ds.cell_counts();
        assert_eq!(counts[0], vec![90, 10]);
        assert_eq!(counts[1], vec![10, 90]);
        ds.validate().unwrap();
    }

    #[test]
    fn zero_separation_gives_equal_group_means_in_expectation() {
        let cfg = config(2, 2, 4, 0.5, 0.0, 20_000);
        let ds = gen_gaussian_groups(&cfg).unwrap();
        for y in 0..2 {
            let counts = &ds.cell_counts()[y];
            assert_eq!(counts, &vec![10_000, 10_000]);
            let m0 = ds.mean_of(&ds.cell_indices(y, 0));
            let m1 = ds.mean_of(&ds.cell_indices(y, 1));
            // two-sample z bound per coordinate at ~4.5 sigma
            let tol = 4.5 * cfg.noise_std * (2.0 / 10_000.0f64).sqrt();
            for (a, b) in m0.iter().zip(&m1) {
                assert!((a - b).abs() < tol, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn group_mean_distance_tracks_separation() {
        let cfg = config(3, 2, 6, 0.5, 2.0, 20_000);
        let ds = gen_gaussian_groups(&cfg).unwrap();
        let expected = 2.0 * std::f64::consts::SQRT_2;
        let n = 10_000.0f64;
        for y in 0..3 {
            let m0 = ds.mean_of(&ds.cell_indices(y, 0));
            let m1 = ds.mean_of(&ds.cell_indices(y, 1));
            let dist: f64 = m0.iter().zip(&m1).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            // 3 sigma / sqrt(n) per coordinate, collected over dims
            let tol = 3.0 * cfg.noise_std * (2.0 / n).sqrt() * (cfg.dim as f64).sqrt();
            assert!((dist - expected).abs() < tol, "class {y}: {dist} vs {expected}");
        }
    }

    #[test]
    fn anchors_are_six_sigma_apart() {
        let cfg = config(3, 2, 6, 0.5, 0.0, 4);
        let a = class_anchor(&cfg, 0);
        let b = class_anchor(&cfg, 2);
        let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!((d - 3.0).abs() < 1e-12);
    }

    #[test]
    fn small_dim_is_rejected() {
        assert!(gen_gaussian_groups(&config(3, 2, 4, 0.5, 0.0, 10)).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = config(2, 2, 4, 0.7, 1.0, 30);
        assert_eq!(gen_gaussian_groups(&cfg).unwrap(), gen_gaussian_groups(&cfg).unwrap());
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(gen_gaussian_groups(&cfg).unwrap(), gen_gaussian_groups(&other).unwrap());
    }

    #[test]
    fn balanced_test_cells_are_equal() {
        let cfg = config(2, 2, 4, 0.9, 1.0, 30);
        let ds = make_balanced_test(&cfg, &Generator::Gaussian, 50).unwrap();
        assert_eq!(ds.len(), 200);
        assert!(ds.cell_counts().iter().flatten().all(|&c| c == 50));
        assert_eq!(ds.split, Split::Test);
        ds.validate().unwrap();
        let again = make_balanced_test(&cfg, &Generator::Gaussian, 50).unwrap();
        assert_eq!(serde_json::to_vec(&ds).unwrap(), serde_json::to_vec(&again).unwrap());
        let img = BiasConfig { dim: 3 * 16, ..cfg };
        let colored = make_balanced_test(
            &img,
            &Generator::Colored {
                mode: TintMode::Foreground,
                pixel_noise: 0.05,
            },
            3,
        )
        .unwrap();
        assert!(colored.cell_counts().iter().flatten().all(|&c| c == 3));
        assert!(make_balanced_test(&img, &Generator::Gaussian, 0).is_err());
    }
}
