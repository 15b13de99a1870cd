use fairdistill::targets::{solve_barycenter, uniform_mean, BarycenterDiscrepancy, DiscrepancyKind};
use proptest::prelude::*;

fn phis_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..6, 1usize..4).prop_flat_map(|(g, d)| prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), g))
}

fn solve(kind: DiscrepancyKind, phis: &[Vec<f64>]) -> Vec<f64> {
    let refs: Vec<&[f64]> = phis.iter().map(Vec::as_slice).collect();
    solve_barycenter(&refs, &BarycenterDiscrepancy::new(kind))
        .unwrap()
        .target
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn barycenters_ignore_group_order(phis in phis_strategy()) {
        let mut rev = phis.clone();
        rev.reverse();
        for kind in [DiscrepancyKind::Sqnorm, DiscrepancyKind::L1, DiscrepancyKind::L2, DiscrepancyKind::Huber] {
            let a = solve(kind, &phis);
            let b = solve(kind, &rev);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-6, "{kind:?}: {a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn barycenters_follow_translations(phis in phis_strategy(), shift in -10.0f64..10.0) {
        let moved: Vec<Vec<f64>> = phis.iter().map(|p| p.iter().map(|v| v + shift).collect()).collect();
        for kind in [DiscrepancyKind::Sqnorm, DiscrepancyKind::L1, DiscrepancyKind::L2, DiscrepancyKind::Linf] {
            let a = solve(kind, &phis);
            let b = solve(kind, &moved);
            let objective = |m: &[f64], ps: &[Vec<f64>]| {
                let refs: Vec<&[f64]> = ps.iter().map(Vec::as_slice).collect();
                BarycenterDiscrepancy::new(kind).objective(&refs, m).unwrap()
            };
            let shifted: Vec<f64> = a.iter().map(|v| v + shift).collect();
            prop_assert!((objective(&shifted, &moved) - objective(&b, &moved)).abs() <= 1e-6 * (1.0 + objective(&b, &moved)));
        }
    }

    #[test]
    fn barycenters_lie_in_the_bounding_box(phis in phis_strategy()) {
        for kind in [DiscrepancyKind::Sqnorm, DiscrepancyKind::L1, DiscrepancyKind::L2, DiscrepancyKind::Huber] {
            let m = solve(kind, &phis);
            for (k, v) in m.iter().enumerate() {
                let lo = phis.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
                let hi = phis.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*v >= lo - 1e-6 && *v <= hi + 1e-6, "{kind:?} coordinate {k}: {v} outside [{lo}, {hi}]");
            }
        }
        let refs: Vec<&[f64]> = phis.iter().map(Vec::as_slice).collect();
        prop_assert_eq!(solve(DiscrepancyKind::Sqnorm, &phis), uniform_mean(&refs));
    }
}
