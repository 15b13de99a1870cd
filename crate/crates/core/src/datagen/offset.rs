use super::{group_offset, GroupedDataset};

/// Adds `gamma * v_a` to every sample of group `a`. Labels and groups are untouched.
pub fn apply_semantic_offset(ds: &GroupedDataset, gamma: f64) -> crate::Result<GroupedDataset> {
    if ds.dim < ds.num_classes + ds.num_groups {
        return Err(crate::Error::config(format!(
            "dim {} cannot host {} orthogonal group offsets",
            ds.dim, ds.num_groups
        )));
    }
    let mut out = ds.clone();
    let offsets: Vec<Vec<f64>> = (0..ds.num_groups)
        .map(|a| group_offset(ds.num_classes, a, ds.dim))
        .collect();
    for i in 0..out.len() {
        let v = &offsets[out.groups[i]];
        for (x, o) in out.sample_mut(i).iter_mut().zip(v) {
            *x += gamma * o;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_gaussian_groups, BiasConfig};

    fn ds() -> GroupedDataset {
        gen_gaussian_groups(&BiasConfig {
            num_classes: 2,
            num_groups: 2,
            dim: 5,
            skew: 0.8,
            separation: 1.0,
            n_per_class: 50,
            seed: 2,
            noise_std: 0.5,
        })
        .unwrap()
    }

    #[test]
    fn zero_gamma_is_identity() {
        let d = ds();
        assert_eq!(apply_semantic_offset(&d, 0.0).unwrap(), d);
    }

    #[test]
    fn offset_is_invertible() {
        let d = ds();
        let back = apply_semantic_offset(&apply_semantic_offset(&d, 2.0).unwrap(), -2.0).unwrap();
        for (a, b) in back.samples.iter().zip(&d.samples) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(back.groups, d.groups);
    }

    #[test]
    fn group_means_shift_by_gamma_times_offset() {
        let d = ds();
        let shifted = apply_semantic_offset(&d, 1.5).unwrap();
        for y in 0..2 {
            for a in 0..2 {
                let idx = d.cell_indices(y, a);
                let before = d.mean_of(&idx);
                let after = shifted.mean_of(&idx);
                let v = group_offset(2, a, 5);
                for k in 0..5 {
                    assert!((after[k] - before[k] - 1.5 * v[k]).abs() < 1e-12);
                }
            }
        }
    }
}
