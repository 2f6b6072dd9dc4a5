use std::f64::consts::{FRAC_PI_2, TAU};

use ctbound::foj::{
    aggregate_boundary, estimate_wedge_colors, render_patch_boundary, render_patch_color, smooth_wedge_weights,
    wedge_index,
};
use ctbound::grid::local_coords;
use ctbound::metrics::{color_map_quality, mask_localization_error, select_boundaries};
use ctbound::noise::{gen_patch_dataset, poisson_noise, PatchDatasetConfig};
use ctbound::pipeline::losses::ref2_terms;
use ctbound::pipeline::{infer, InitModelConfig, InitStageModel, Ref2Settings};
use ctbound::reconstruct::PhotonInput;
use ctbound::solver::{fit_patch, SolverConfig};
use ctbound::{ColorField, JunctionParams, PatchGridSpec, ScalarField};
use proptest::prelude::*;

fn angle() -> impl Strategy<Value = f64> {
    -10.0..10.0f64
}

fn junction(spread: f64, k: usize) -> impl Strategy<Value = JunctionParams> {
    (
        (-spread..spread, -spread..spread),
        [angle(), angle(), angle()],
        [proptest::collection::vec(0.0..1.0f64, k), proptest::collection::vec(0.0..1.0f64, k), proptest::collection::vec(0.0..1.0f64, k)],
    )
        .prop_map(|(v, a, c)| JunctionParams::from_raw(v, a, c).unwrap())
}

fn is_canonical(a: &[f64; 3]) -> bool {
    a.iter().all(|&x| (0.0..TAU).contains(&x)) && a[0] <= a[1] && a[1] <= a[2]
}

/// Independent soft patch term: weights from the pointwise evaluator,
/// wedge colors as weighted means, weighted squared residuals.
fn patch_term(raw: [f64; 5], image: &ColorField, grid: &PatchGridSpec, eps_delta: f64) -> f64 {
    let r = grid.patch_size;
    let k = image.channels;
    let p = JunctionParams::from_raw((raw[0], raw[1]), [raw[2], raw[3], raw[4]], [vec![0.0; k], vec![0.0; k], vec![0.0; k]]).unwrap();
    let mut total = 0.0;
    for i in 0..grid.count() {
        let (m, n) = grid.index(i);
        let (r0, c0) = grid.origin(m, n);
        let patch = image.window(r0, c0, r);
        let weights: Vec<[f64; 3]> = (0..r * r)
            .map(|px| smooth_wedge_weights(local_coords(r, px / r, px % r), &p, eps_delta).unwrap())
            .collect();
        for j in 0..3 {
            let mass: f64 = weights.iter().map(|w| w[j]).sum();
            let color: Vec<f64> = (0..k)
                .map(|ch| (0..r * r).map(|px| weights[px][j] * patch.pixel(px / r, px % r)[ch]).sum::<f64>() / mass)
                .collect();
            for px in 0..r * r {
                let e: f64 = (0..k).map(|ch| (color[ch] - patch.pixel(px / r, px % r)[ch]).powi(2)).sum();
                total += weights[px][j] * e;
            }
        }
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn construction_canonicalizes_angles(p in junction(20.0, 2)) {
        prop_assert!(is_canonical(&p.angles));
        prop_assert_eq!(p.colors.len(), 3);
        prop_assert!(p.validate().is_ok());
    }

    #[test]
    fn grid_counts_and_coverage(h in 5usize..60, w in 5usize..60, r in 1usize..20, s in 1usize..10) {
        prop_assume!(r <= h.min(w));
        let grid = PatchGridSpec::new(h, w, r, s, 1).unwrap();
        prop_assert_eq!(grid.rows(), (h - r) / s + 1);
        prop_assert_eq!(grid.cols(), (w - r) / s + 1);
        let counts = grid.cover_counts();
        let (ih, iw) = ((grid.rows() - 1) * s + r, (grid.cols() - 1) * s + r);
        for row in 0..ih {
            for col in 0..iw {
                prop_assert_eq!(counts[row * w + col] == 0, s > r && ((row % s) >= r || (col % s) >= r));
            }
        }
    }

    #[test]
    fn boundary_maps_lie_in_unit_interval(p in junction(15.0, 1), eps in 0.05..3.0f64) {
        let b = render_patch_boundary(&p, 11, eps).unwrap();
        prop_assert!(b.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn quarter_turn_commutes_with_rendering(p in junction(8.0, 1), r in 3usize..16) {
        let eps = 0.5;
        let turned = JunctionParams::from_raw(
            (-p.vertex.1, p.vertex.0),
            p.angles.map(|a| a + FRAC_PI_2),
            p.colors.clone(),
        ).unwrap();
        let a = render_patch_boundary(&p, r, eps).unwrap();
        let b = render_patch_boundary(&turned, r, eps).unwrap();
        for row in 0..r {
            for col in 0..r {
                prop_assert!((b.get(row, col) - a.get(r - 1 - col, row)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn aggregating_restrictions_recovers_the_field(
        h in 6usize..30, w in 6usize..30, r in 2usize..7, s in 1usize..5, seed in any::<u64>()
    ) {
        prop_assume!(r <= h.min(w));
        let grid = PatchGridSpec::new(h, w, r, s, 1).unwrap();
        let values: Vec<f64> = (0..h * w).map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 / 999.0).collect();
        let global = ColorField::from_vec(h, w, 1, values).unwrap();
        let pieces: Vec<ScalarField> = (0..grid.count())
            .map(|i| {
                let (m, n) = grid.index(i);
                let (r0, c0) = grid.origin(m, n);
                ScalarField::from_vec(r, r, global.window(r0, c0, r).values).unwrap()
            })
            .collect();
        let (agg, coverage) = aggregate_boundary(&pieces, &grid).unwrap();
        for row in 0..h {
            for col in 0..w {
                if coverage.is_covered(row, col) {
                    prop_assert!((agg.get(row, col) - global.pixel(row, col)[0]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn soft_weights_partition_and_sharpen(p in junction(6.0, 1)) {
        let r = 21;
        let mut agree = 0;
        for row in 0..r {
            for col in 0..r {
                let pt = local_coords(r, row, col);
                let w = smooth_wedge_weights(pt, &p, 1e-4).unwrap();
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let soft = w.iter().enumerate().fold(0, |b, (j, &v)| if v > w[b] { j } else { b });
                agree += (soft == wedge_index(pt, &p)) as usize;
                let loose = smooth_wedge_weights(pt, &p, 0.7).unwrap();
                prop_assert!((loose.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        prop_assert!(agree as f64 >= 0.999 * (r * r) as f64 - 1.0, "{agree} of {}", r * r);
    }

    #[test]
    fn noise_is_a_pure_function_of_seed(v in 0.0..1.0f64, alpha in 0.5..50.0f64, seed in any::<u64>()) {
        let clean = ColorField::from_vec(4, 5, 2, vec![v; 40]).unwrap();
        let a = poisson_noise(&clean, alpha, seed).unwrap();
        let b = poisson_noise(&clean, alpha, seed).unwrap();
        prop_assert_eq!(&a.counts, &b.counts);
        prop_assert_eq!(a.alpha, alpha);
            }

    #[test]
    fn patch_truth_is_consistent(seed in any::<u64>(), k in 1usize..4) {
        let mut cfg = PatchDatasetConfig::new(3, 15, seed);
        cfg.channels = k;
        for s in gen_patch_dataset(&cfg).unwrap() {
            prop_assert!(s.clean.values.iter().all(|v| (0.0..=1.0).contains(v)));
            let rendered = render_patch_color(&s.truth, 15);
            prop_assert!(rendered.values.iter().zip(&s.clean.values).all(|(a, b)| (a - b).abs() <= 1e-6));
            let colors = estimate_wedge_colors(&s.clean, s.truth.vertex, s.truth.angles).unwrap();
            for j in 0..3 {
                prop_assert!(colors[j].iter().zip(&s.truth.colors[j]).all(|(a, b)| (a - b).abs() <= 1e-6));
            }
        }
    }

    #[test]
    fn predicted_subset_of_truth_has_zero_distance(bits in proptest::collection::vec(0u8..4, 1..400), w in 1usize..20) {
        let h = bits.len().div_ceil(w);
        let n = h * w;
        let mut truth: Vec<bool> = (0..n).map(|i| bits.get(i).is_some_and(|&b| b >= 2)).collect();
        truth[0] = true;
        let pred: Vec<bool> = (0..n).map(|i| truth[i] && bits.get(i) == Some(&3)).collect();
        let d = mask_localization_error(&pred, &truth, h, w).unwrap();
        prop_assert!(d.is_empty_prediction() || d.mean == 0.0);
        let other: Vec<bool> = (0..n).map(|i| bits.get(i) == Some(&1)).collect();
        let e = mask_localization_error(&other, &truth, h, w).unwrap();
        prop_assert!(e.is_empty_prediction() || e.mean >= 0.0);
    }

    #[test]
    fn selection_is_monotone(seed in any::<u64>(), t0 in 0.0..0.5f64, dt in 0.0..0.5f64) {
        let grid = PatchGridSpec::new(16, 19, 7, 3, 1).unwrap();
        let params: Vec<JunctionParams> = (0..grid.count())
            .map(|i| {
                let x = ((seed ^ (i as u64 * 0x9e37_79b9)) % 10_000) as f64 / 10_000.0;
                JunctionParams::from_raw(
                    (x * 4.0 - 2.0, 2.0 - x * 3.0),
                    [x * 7.0, x * 13.0 + 1.0, x * 3.0 + 4.0],
                    [vec![x], vec![1.0 - x], vec![(x * 5.0).fract()]],
                ).unwrap()
            })
            .collect();
        let a = select_boundaries(&params, 1.0, t0, &grid, 0.5).unwrap();
        let b = select_boundaries(&params, 1.0, t0 + dt, &grid, 0.5).unwrap();
        prop_assert!(a.values.iter().zip(&b.values).all(|(x, y)| y <= x));
    }

    #[test]
    fn color_quality_ranges(a in proptest::collection::vec(0.0..1.0f64, 144), b in proptest::collection::vec(0.0..1.0f64, 144)) {
        let pa = ColorField::from_vec(12, 12, 1, a).unwrap();
        let pb = ColorField::from_vec(12, 12, 1, b).unwrap();
        let q = color_map_quality(&pa, &pb, 1.0).unwrap();
        prop_assert!((-1.0..=1.0).contains(&q.ssim));
        prop_assert!(q.mse >= 0.0);
        prop_assert!(q.mse == 0.0 || q.psnr.is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn patch_term_matches_independent_evaluator(
        raw in (-3.0..3.0f64, -3.0..3.0f64, angle(), angle(), angle()),
        seed in any::<u64>(),
        eps_delta in 0.05..0.5f64,
    ) {
        let raw = [raw.0, raw.1, raw.2, raw.3, raw.4];
        let (h, w) = (11, 12);
        let image = ColorField::from_vec(h, w, 2, (0..h * w * 2).map(|i| ((i as u64 ^ seed) % 97) as f64 / 96.0).collect()).unwrap();
        let grid = PatchGridSpec::new(h, w, 7, 2, 2).unwrap();
        let settings = Ref2Settings { lambda_boundary: 0.0, lambda_color: 0.0, eps_delta, boundary_eps: 0.5 };
        let raws = vec![raw; grid.count()];
        let (terms, _) = ref2_terms(&raws, &image, &grid, &settings, false).unwrap();
        let want = patch_term(raw, &image, &grid, eps_delta);
        prop_assert!((terms.total(&settings) - want).abs() <= 1e-6 * want.max(1.0), "{} vs {want}", terms.total(&settings));
    }

    #[test]
    fn inference_outputs_are_canonical(seed in any::<u64>()) {
        let (h, w) = (13, 14);
        let img = ColorField::from_vec(h, w, 1, (0..h * w).map(|i| ((i as u64).wrapping_mul(seed | 1) % 11) as f64).collect()).unwrap();
        let grid = PatchGridSpec::new(h, w, 5, 2, 1).unwrap();
        let cfg = InitModelConfig { patch_size: 5, upsample: 49, channels: 1, conv: [4, 4, 4, 4, 4], fc: [8, 8] };
        let init = InitStageModel::new(cfg, seed).unwrap();
        let (rec, counters) = infer(&PhotonInput { image: img, alpha: None }, &grid, &init, None, 0.5).unwrap();
        prop_assert_eq!(counters.init_patch_evals, grid.count());
        prop_assert!(rec.params.iter().all(|p| is_canonical(&p.angles) && p.colors.iter().flatten().all(|c| c.is_finite() && *c >= 0.0)));
    }

    #[test]
    fn solver_is_deterministic(seed in any::<u64>()) {
        let cfg = PatchDatasetConfig::new(1, 9, seed);
        let s = &gen_patch_dataset(&cfg).unwrap()[0];
        let solver = SolverConfig { seed, restarts: 2, iterations: 20, ..Default::default() };
        let a = fit_patch(&s.noisy.to_field(), &solver).unwrap();
        let b = fit_patch(&s.noisy.to_field(), &solver).unwrap();
        prop_assert_eq!(a.params.geometry_vector(), b.params.geometry_vector());
    }
}
