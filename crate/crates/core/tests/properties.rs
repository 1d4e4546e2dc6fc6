use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use rdmulti_core::datamodel::{read_dataset, write_dataset};
use rdmulti_core::multiscore::{check_treatment_region, normalized_scores};
use rdmulti_core::rdplot::{bin_index, choose_bins, BinMethod};
use rdmulti_core::{
    assign_closest_cutoff, boundary_point_estimates, build_plot_data, cumulative_estimates, cutoff_specific_estimates,
    distance_to_point, estimate_weights, generate, kernel_weight, rd_estimate, rdmc, ColumnMap, CutoffOptions, Dataset,
    DesignKind, DgpSpec, KernelKind, Observation, PerCutoffOptions, PlotFlags, PlotOptions, RdResult, ScoreRange,
};

fn kernel_strategy() -> impl Strategy<Value = KernelKind> {
    prop_oneof![
        Just(KernelKind::Triangular),
        Just(KernelKind::Uniform),
        Just(KernelKind::Epanechnikov)
    ]
}

fn sample(seed: u64, n: usize, c: f64) -> (Vec<f64>, Vec<f64>) {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| c + r.random_range(-10.0..10.0)).collect();
    let ys = xs
        .iter()
        .map(|&x| 0.5 + 0.2 * (x - c) + 0.01 * (x - c).powi(2) + if x >= c { 1.5 } else { 0.0 } + r.random_range(-1.0..1.0))
        .collect();
    (ys, xs)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn multicutoff(seed: u64, cutoffs: &[f64], n: usize) -> Dataset {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    let obs = (0..n)
        .map(|i| {
            let c = cutoffs[i % cutoffs.len()];
            let x = c + r.random_range(-15.0..15.0);
            let y = 0.1 * x + if x >= c { 2.0 } else { 0.0 } + r.random_range(-1.0..1.0);
            Observation {
                row: i,
                cutoff: Some(c),
                ..Observation::new(y, x)
            }
        })
        .collect();
    Dataset::new(DesignKind::MultiCutoff, obs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernels_symmetric_nonnegative_supported(u in -2.0f64..2.0, k in kernel_strategy()) {
        let w = kernel_weight(u, k);
        prop_assert!(w >= 0.0);
        prop_assert_eq!(w, kernel_weight(-u, k));
        if u.abs() > 1.0 {
            prop_assert_eq!(w, 0.0);
        }
    }

    #[test]
    fn outcome_affine_map_scales_effect(seed in any::<u64>(), a in 0.2f64..5.0, b in -10.0f64..10.0, k in kernel_strategy()) {
        let (ys, xs) = sample(seed, 400, 0.0);
        let opts = CutoffOptions { kernel: k, ..CutoffOptions::default() };
        let base = rd_estimate(&ys, &xs, 0.0, &opts, None).unwrap();
        let ys2: Vec<f64> = ys.iter().map(|y| a * y + b).collect();
        let moved = rd_estimate(&ys2, &xs, 0.0, &opts, None).unwrap();
        prop_assert!(rel_close(moved.tau_conventional, a * base.tau_conventional, 1e-10));
        prop_assert!(rel_close(moved.tau_bias_corrected, a * base.tau_bias_corrected, 1e-10));
        prop_assert!(rel_close(moved.se_robust, a * base.se_robust, 1e-10));
        prop_assert!(rel_close(moved.h_left, base.h_left, 1e-10));
    }

    #[test]
    fn joint_shift_of_score_and_cutoff(seed in any::<u64>(), d in -64i32..64) {
        let (ys, xs) = sample(seed, 400, 0.0);
        let d = f64::from(d);
        let shifted: Vec<f64> = xs.iter().map(|x| x + d).collect();
        let a = rd_estimate(&ys, &xs, 0.0, &CutoffOptions::default(), None).unwrap();
        let b = rd_estimate(&ys, &shifted, d, &CutoffOptions::default(), None).unwrap();
        for (u, v) in [
            (a.tau_conventional, b.tau_conventional),
            (a.tau_bias_corrected, b.tau_bias_corrected),
            (a.se_robust, b.se_robust),
            (a.h_left, b.h_left),
        ] {
            prop_assert!(rel_close(u, v, 1e-8), "{} vs {}", u, v);
        }
    }

    #[test]
    fn rows_outside_both_windows_do_not_matter(seed in any::<u64>(), h in 2.0f64..5.0, rho in 0.4f64..1.0, k in kernel_strategy()) {
        let (ys, xs) = sample(seed, 500, 0.0);
        let opts = CutoffOptions { h_left: Some(h), b_left: Some(h / rho), kernel: k, ..CutoffOptions::default() };
        let full = rd_estimate(&ys, &xs, 0.0, &opts, None).unwrap();
        let keep: Vec<usize> = (0..xs.len()).filter(|&i| xs[i].abs() <= h / rho).collect();
        let ys2: Vec<f64> = keep.iter().map(|&i| ys[i]).collect();
        let xs2: Vec<f64> = keep.iter().map(|&i| xs[i]).collect();
        let kept = rd_estimate(&ys2, &xs2, 0.0, &opts, None).unwrap();
        prop_assert_eq!(full, kept);
    }

    #[test]
    fn zero_sampling_weight_equals_deletion(seed in any::<u64>()) {
        let (ys, xs) = sample(seed, 400, 0.0);
        let ws: Vec<f64> = (0..xs.len()).map(|i| if i % 5 == 0 { 0.0 } else { 1.0 + (i % 3) as f64 }).collect();
        let opts = CutoffOptions { h_left: Some(5.0), b_left: Some(8.0), ..CutoffOptions::default() };
        let weighted = rd_estimate(&ys, &xs, 0.0, &opts, Some(&ws)).unwrap();
        let keep: Vec<usize> = (0..xs.len()).filter(|&i| ws[i] > 0.0).collect();
        let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let deleted = rd_estimate(&pick(&ys), &pick(&xs), 0.0, &opts, Some(&pick(&ws))).unwrap();
        prop_assert!(rel_close(weighted.tau_bias_corrected, deleted.tau_bias_corrected, 1e-12));
        prop_assert!(rel_close(weighted.tau_conventional, deleted.tau_conventional, 1e-12));
        prop_assert_eq!(weighted.n_left + weighted.n_right, deleted.n_left + deleted.n_right);
    }

    #[test]
    fn robust_interval_contains_estimate(seed in any::<u64>(), level in 50.0f64..99.9) {
        let (ys, xs) = sample(seed, 300, 0.0);
        let r: RdResult = rd_estimate(&ys, &xs, 0.0, &CutoffOptions { level, ..CutoffOptions::default() }, None).unwrap();
        prop_assert!(r.ci_robust[0] <= r.tau_bias_corrected && r.tau_bias_corrected <= r.ci_robust[1]);
    }

    #[test]
    fn weights_are_count_ratios_in_unit_interval(seed in any::<u64>(), h in 1.0f64..20.0, j in 1usize..5) {
        let cutoffs: Vec<f64> = (0..j).map(|k| 20.0 * k as f64).collect();
        let ds = multicutoff(seed, &cutoffs, 300);
        let w = estimate_weights(&ds, h).unwrap();
        let total = w[0].total;
        prop_assert_eq!(w.iter().map(|c| c.count).sum::<usize>(), total);
        for c in &w {
            prop_assert!((0.0..=1.0).contains(&c.weight));
            prop_assert_eq!(c.weight, c.count as f64 / total as f64);
        }
    }

    #[test]
    fn groups_partition_the_sample(seed in any::<u64>(), j in 1usize..6) {
        let cutoffs: Vec<f64> = (0..j).map(|k| 7.5 * k as f64).collect();
        let ds = multicutoff(seed, &cutoffs, 200);
        prop_assert_eq!(ds.cutoff_values(), cutoffs.clone());
        prop_assert_eq!(ds.cutoffs.iter().map(|g| g.count).sum::<usize>(), ds.len());
        let mut seen = vec![0usize; ds.len()];
        for &c in &cutoffs {
            for i in ds.group_indices(c) {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn permuting_one_group_leaves_others_untouched(seed in any::<u64>()) {
        let ds = multicutoff(seed, &[0.0, 40.0], 800);
        let opts = PerCutoffOptions::defaults(2);
        let before = cutoff_specific_estimates(&ds, &opts).unwrap();
        let mut obs = ds.observations.clone();
        let group: Vec<usize> = ds.group_indices(40.0);
        let ys: Vec<f64> = group.iter().map(|&i| obs[i].y).collect();
        for (k, &i) in group.iter().enumerate() {
            obs[i].y = ys[(k + 7) % ys.len()];
        }
        let after = cutoff_specific_estimates(&Dataset::new(DesignKind::MultiCutoff, obs).unwrap(), &opts).unwrap();
        prop_assert_eq!(&before[0], &after[0]);
    }

    #[test]
    fn bundle_covariance_is_diagonal_psd(seed in any::<u64>()) {
        let ds = multicutoff(seed, &[0.0, 40.0, 80.0], 1500);
        let out = rdmc(&ds, &PerCutoffOptions::defaults(3), &CutoffOptions::default(), None).unwrap();
        let b = &out.bundle;
        prop_assert_eq!(b.labels.len(), 5);
        for i in 0..b.dim() {
            prop_assert!(b.v[i][i] >= 0.0);
            for k in 0..b.dim() {
                prop_assert_eq!(b.v[i][k], b.v[k][i]);
                if i != k {
                    prop_assert_eq!(b.v[i][k], 0.0);
                }
            }
        }
    }

    #[test]
    fn dataset_roundtrip(seed in any::<u64>()) {
        let ds = multicutoff(seed, &[1.5, 3.25], 50);
        let schema = ColumnMap::new("y", "x").with_cutoff("c");
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds, &schema).unwrap();
        let back = read_dataset(buf.as_slice(), &schema, DesignKind::MultiCutoff).unwrap().dataset;
        prop_assert_eq!(back.observations, ds.observations);
    }

    #[test]
    fn even_bins_have_equal_widths(seed in any::<u64>(), nb in 1usize..40) {
        let (_, xs) = sample(seed, 200, 3.0);
        let e = choose_bins(&xs, BinMethod::Es, Some(nb), None).unwrap();
        let w0 = e[1] - e[0];
        for k in 1..nb {
            prop_assert!(((e[k + 1] - e[k]) - w0).abs() <= 1e-9 * w0.abs());
        }
    }

    #[test]
    fn bins_partition_scores(seed in any::<u64>(), nb in 1usize..30, qs in any::<bool>()) {
        let (_, xs) = sample(seed, 150, 0.0);
        let method = if qs { BinMethod::Qs } else { BinMethod::Es };
        let e = choose_bins(&xs, method, Some(nb), None).unwrap();
        let mut counts = vec![0usize; nb];
        for &x in &xs {
            let k = bin_index(x, &e);
            prop_assert!(k.is_some());
            counts[k.unwrap()] += 1;
        }
        prop_assert_eq!(counts.iter().sum::<usize>(), xs.len());
    }

    #[test]
    fn plot_flags_do_not_alter_surviving_columns(seed in any::<u64>()) {
        let ds = multicutoff(seed, &[0.0, 40.0], 400);
        let opts = vec![PlotOptions::default(); 2];
        let both = build_plot_data(&ds, &opts, &PlotFlags::default()).unwrap();
        let nobins = build_plot_data(&ds, &opts, &PlotFlags { nobins: true, ..PlotFlags::default() }).unwrap();
        let nopoly = build_plot_data(&ds, &opts, &PlotFlags { nopoly: true, ..PlotFlags::default() }).unwrap();
        for j in 0..2 {
            prop_assert_eq!(&both[j].hat_y, &nobins[j].hat_y);
            prop_assert!(nobins[j].mean_y.is_none());
            prop_assert!(nopoly[j].hat_y.is_none());
            prop_assert_eq!(&both[j].mean_y, &nopoly[j].mean_y);
            prop_assert_eq!(&both[j].ci_l, &nopoly[j].ci_l);
            for side in [&both[j].left, &both[j].right] {
                for b in &side.bins {
                    if let (Some(l), Some(m), Some(r)) = (b.ci_l, b.mean_y, b.ci_r) {
                        prop_assert!(l <= m && m <= r);
                    }
                }
            }
        }
    }

    #[test]
    fn plot_polynomial_reproduces_exact_data(seed in any::<u64>(), p in 0usize..5) {
        let mut r = ChaCha20Rng::seed_from_u64(seed);
        let coef: Vec<f64> = (0..=p).map(|_| r.random_range(-1.0..1.0)).collect();
        let obs: Vec<Observation> = (0..300)
            .map(|i| {
                let x: f64 = r.random_range(-1.0..1.0);
                let y = coef.iter().rev().fold(0.0, |acc, b| acc * x + b) + if x >= 0.0 { 1.0 } else { 0.0 };
                Observation { row: i, cutoff: Some(0.0), ..Observation::new(y, x) }
            })
            .collect();
        let ds = Dataset::new(DesignKind::MultiCutoff, obs).unwrap();
        let s = build_plot_data(&ds, &[PlotOptions { p, ..PlotOptions::default() }], &PlotFlags::default()).unwrap();
        let hat = s[0].hat_y.as_ref().unwrap();
        for (o, h) in ds.observations.iter().zip(hat) {
            prop_assert!((h.unwrap() - o.y).abs() <= 1e-8);
        }
    }

    #[test]
    fn closest_cutoff_minimizes_distance(x in -10.0f64..110.0, mut cs in prop::collection::vec(0.0f64..100.0, 1..6)) {
        cs.sort_by(f64::total_cmp);
        cs.dedup();
        let c = assign_closest_cutoff(x, &cs);
        for &other in &cs {
            prop_assert!((x - c).abs() <= (x - other).abs());
            if (x - c).abs() == (x - other).abs() {
                prop_assert!(c <= other);
            }
        }
    }

    #[test]
    fn midpoints_go_to_lower_cutoff(a in 0i32..50, gap in 1i32..50) {
        let (lo, hi) = (f64::from(a), f64::from(a + 2 * gap));
        prop_assert_eq!(assign_closest_cutoff(f64::from(a + gap), &[lo, hi]), lo);
    }

    #[test]
    fn point_distance_rotation_invariant(
        s in (-50.0f64..50.0, -50.0f64..50.0),
        p in (-50.0f64..50.0, -50.0f64..50.0),
        center in (-50.0f64..50.0, -50.0f64..50.0),
        theta in 0.0f64..std::f64::consts::TAU,
    ) {
        let rot = |q: (f64, f64)| {
            let (dx, dy) = (q.0 - center.0, q.1 - center.1);
            (center.0 + dx * theta.cos() - dy * theta.sin(), center.1 + dx * theta.sin() + dy * theta.cos())
        };
        let a = distance_to_point(s, p, true);
        let b = distance_to_point(rot(s), rot(p), true);
        prop_assert!((a - b).abs() <= 1e-9);
        prop_assert_eq!(distance_to_point(s, p, false), -a);
    }

    #[test]
    fn range_restriction_ignores_outside_rows(seed in 0u64..1000) {
        let g = generate(&DgpSpec::cumulative(3000, (5.0, -3.0), seed)).unwrap();
        let (ys, xs) = (g.dataset.ys(), g.dataset.x1s());
        let ranges = [ScoreRange { lo: 0.0, hi: 65.5 }, ScoreRange { lo: 33.5, hi: 100.0 }];
        let both = cumulative_estimates(&ys, &xs, &[33.0, 66.0], Some(&ranges), &PerCutoffOptions::defaults(2), None).unwrap();
        for (j, c) in [33.0, 66.0].into_iter().enumerate() {
            let keep: Vec<usize> = (0..xs.len()).filter(|&i| ranges[j].contains(xs[i])).collect();
            let ys2: Vec<f64> = keep.iter().map(|&i| ys[i]).collect();
            let xs2: Vec<f64> = keep.iter().map(|&i| xs[i]).collect();
            let alone = cumulative_estimates(&ys2, &xs2, &[c], Some(&ranges[j..=j]), &PerCutoffOptions::defaults(1), None).unwrap();
            prop_assert_eq!(&both.estimates[j].result, &alone.estimates[0].result);
        }
    }

    #[test]
    fn generated_distances_match_treatment(seed in any::<u64>()) {
        let g = generate(&DgpSpec::bivariate(500, 4.0, seed)).unwrap();
        let boundary = rdmulti_core::Boundary::Corner { a: 50.0, b: 50.0 };
        prop_assert!(check_treatment_region(&g.dataset, &boundary).is_ok());
        let xn = normalized_scores(&g.dataset, &boundary).unwrap();
        for (d, t) in xn.iter().zip(g.dataset.treats()) {
            prop_assert_eq!(*d >= 0.0, t);
        }
    }

    #[test]
    fn degenerate_bivariate_is_univariate(seed in any::<u64>(), p1 in 40.0f64..60.0) {
        let mut r = ChaCha20Rng::seed_from_u64(seed);
        let obs: Vec<Observation> = (0..600)
            .map(|i| {
                let x: f64 = r.random_range(0.0..100.0);
                let y = 0.02 * x + if x >= p1 { 3.0 } else { 0.0 } + r.random_range(-1.0..1.0);
                Observation { row: i, x2: Some(10.0), treat: Some(x >= p1), ..Observation::new(y, x) }
            })
            .collect();
        let ds = Dataset::new(DesignKind::Bivariate, obs).unwrap();
        let b = boundary_point_estimates(&ds, &[(p1, 10.0)], &PerCutoffOptions::defaults(1)).unwrap();
        let u = rd_estimate(&ds.ys(), &ds.x1s(), p1, &CutoffOptions::default(), None).unwrap();
        prop_assert!(rel_close(b[0].result.tau_bias_corrected, u.tau_bias_corrected, 1e-10));
        prop_assert!(rel_close(b[0].result.se_robust, u.se_robust, 1e-10));
    }

    #[test]
    fn generation_reproducible(seed in any::<u64>()) {
        let spec = DgpSpec::multicutoff(200, (5.0, 2.0), seed);
        prop_assert_eq!(generate(&spec).unwrap().dataset, generate(&spec).unwrap().dataset);
    }
}
