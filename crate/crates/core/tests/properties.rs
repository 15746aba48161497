mod common;

use kernelgamma::dataset::{parse_sparse_str, write_sparse, Dataset, ScalingSpec};
use kernelgamma::dmm::{estimate, objective_curvature, stationary_gamma, weighted_objective, Variant, BALANCED_LAMBDA};
use kernelgamma::geometry::{compute_geometry, feature_diameter_sq};
use kernelgamma::kernel::gram;
use kernelgamma::kos::{ClassSubspace, KosModel, KosParams, QueryNorm, DEFAULT_EIGEN_TOL};
use kernelgamma::svm::{solve_dual, train_multiclass, SvmParams};
use kernelgamma::synth::gaussian_blobs;
use kernelgamma::tuning::{grid_search, GridSpec, Method, TuneOptions};
use proptest::prelude::*;

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, dim)
}

/// A dataset with `2..=max_classes` non-empty classes in `dim` dimensions.
fn dataset(max_classes: usize, max_n: usize) -> impl Strategy<Value = Dataset> {
    (2..=max_classes, 1usize..5).prop_flat_map(move |(p, dim)| {
        (p..=max_n.max(p)).prop_flat_map(move |n| {
            (prop::collection::vec(point(dim), n), prop::collection::vec(0..p, n)).prop_map(
                move |(rows, mut labels)| {
                    for (c, l) in labels.iter_mut().take(p).enumerate() {
                        *l = c;
                    }
                    Dataset::from_rows(rows, labels).unwrap()
                },
            )
        })
    })
}

/// Whether all classes are pairwise disjoint and no class collapses to a
/// point, i.e. the closed-form estimate is defined.
fn well_posed(ds: &Dataset) -> bool {
    compute_geometry(ds).is_ok_and(|g| g.d_max > 1e-9 && g.d_min > 1e-9)
}

/// Shuffles samples while keeping each class's label, a permutation that
/// leaves class membership unchanged.
fn permute(ds: &Dataset, seed: u64) -> Dataset {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut common::rng(seed));
    ds.subset(&idx).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sparse_round_trip(ds in dataset(4, 30)) {
        let mut buf = Vec::new();
        write_sparse(&ds, &mut buf).unwrap();
        let back = parse_sparse_str(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn class_index_partitions_samples(ds in dataset(5, 40)) {
        let mut seen = vec![0usize; ds.len()];
        for (c, members) in ds.class_index().iter().enumerate() {
            for &i in members {
                seen[i] += 1;
                prop_assert_eq!(ds.samples()[i].label, c);
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn scaling_stays_in_range(ds in dataset(3, 30), lo in -3.0f64..0.0, width in 0.5f64..4.0) {
        let hi = lo + width;
        let spec = ScalingSpec::fit(&ds, (lo, hi)).unwrap();
        let scaled = spec.apply(&ds).unwrap();
        for j in 0..ds.feature_dim() {
            let constant = ds.samples().iter().all(|s| s.features[j] == ds.samples()[0].features[j]);
            if constant {
                continue;
            }
            for s in scaled.samples() {
                prop_assert!(s.features[j] >= lo - 1e-12 && s.features[j] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn d_min_at_most_d_av(ds in dataset(6, 40)) {
        if let Ok(g) = compute_geometry(&ds) {
            prop_assert!(g.d_min <= g.d_av * (1.0 + 1e-15));
        }
    }

    #[test]
    fn geometry_ignores_sample_order(ds in dataset(4, 30), seed in any::<u64>()) {
        let a = compute_geometry(&ds);
        let b = compute_geometry(&permute(&ds, seed));
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn feature_diameter_increasing_and_below_two(d in 1e-3f64..50.0, x in 1e-4f64..20.0, f in 1.001f64..3.0) {
        // Beyond γd² ≈ 36 the exponential term rounds away entirely.
        let g = x / (d * d);
        let lo = feature_diameter_sq(g, d).unwrap();
        let hi = feature_diameter_sq(g * f, d).unwrap();
        prop_assert!(hi > lo);
        prop_assert!(lo < 2.0 && hi <= 2.0);
        prop_assert!(lo > 0.0);
    }

    #[test]
    fn estimate_scale_covariance(ds in dataset(4, 30), s in 0.1f64..10.0) {
        prop_assume!(well_posed(&ds));
        let scaled = ds.map_features(|x| x.iter().map(|v| v * s).collect()).unwrap();
        for variant in [Variant::Avg, Variant::Min] {
            let a = estimate(&compute_geometry(&ds).unwrap(), variant).unwrap();
            let b = estimate(&compute_geometry(&scaled).unwrap(), variant).unwrap();
            prop_assert!((b.gamma * s * s / a.gamma - 1.0).abs() < 1e-10);
            prop_assert!((b.sigma / (a.sigma * s) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn gamma_sigma_relation(ds in dataset(5, 30)) {
        prop_assume!(well_posed(&ds));
        let geom = compute_geometry(&ds).unwrap();
        for variant in [Variant::Avg, Variant::Min] {
            let e = estimate(&geom, variant).unwrap();
            prop_assert!((e.gamma * 2.0 * e.sigma * e.sigma - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn objective_is_convex_around_stationary_point(ds in dataset(4, 25), lambda in 0.01f64..0.99) {
        prop_assume!(well_posed(&ds));
        let geom = compute_geometry(&ds).unwrap();
        let g = stationary_gamma(lambda, &geom).unwrap();
        let at = weighted_objective(g, lambda, &geom).unwrap();
        prop_assert!(weighted_objective(1.1 * g, lambda, &geom).unwrap() > at);
        prop_assert!(weighted_objective(0.9 * g, lambda, &geom).unwrap() > at);
        prop_assert!(objective_curvature(g, lambda, &geom).unwrap() > 0.0);
    }

    #[test]
    fn gram_translation_invariant(pts in prop::collection::vec(point(3), 1..15), shift in point(3), g in 0.01f64..3.0) {
        let moved: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
        let a = gram(&pts, g).unwrap();
        let b = gram(&moved, g).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn kos_coordinates_obey_bessel(pts in prop::collection::vec(point(2), 2..20), q in point(2), g in 0.05f64..2.0) {
        let Ok(sub) = ClassSubspace::fit(pts.clone(), g, DEFAULT_EIGEN_TOL, 0, 0) else {
            return Ok(());
        };
        let alpha_sq: f64 = sub.coordinates(&q, g).unwrap().iter().map(|a| a * a).sum();
        let kx: Vec<f64> = pts.iter().map(|p| common::rbf(p, &q, g)).collect();
        let kbar = kx.iter().sum::<f64>() / kx.len() as f64;
        let centered_norm_sq = 1.0 - 2.0 * kbar + sub.grand_mean();
        prop_assert!(alpha_sq <= centered_norm_sq + 1e-9);
        let d = sub.distance(&q, g, QueryNorm::Centered).unwrap();
        prop_assert!(d >= 0.0 && d <= 2f64.sqrt() + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kos_training_coordinates_are_scaled_eigenvectors(pts in prop::collection::vec(point(3), 2..15), g in 0.05f64..2.0) {
        let Ok(sub) = ClassSubspace::fit(pts.clone(), g, DEFAULT_EIGEN_TOL, 0, 0) else {
            return Ok(());
        };
        for (l, p) in pts.iter().enumerate() {
            let alpha = sub.coordinates(p, g).unwrap();
            for ((a, v), s) in alpha.iter().zip(sub.eigvecs()).zip(sub.eigvals()) {
                prop_assert!((a - s.sqrt() * v[l]).abs() <= 1e-8, "{a} vs {}", s.sqrt() * v[l]);
            }
        }
    }

    #[test]
    fn dual_solution_is_feasible_and_optimal(
        pts in prop::collection::vec(point(2), 4..30),
        signs in prop::collection::vec(any::<bool>(), 30),
        g in 0.05f64..3.0,
        c in 0.1f64..50.0,
    ) {
        let mut y: Vec<f64> = signs[..pts.len()].iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let k = gram(&pts, g).unwrap();
        let tol = SvmParams::new(g, c).tol;
        let sol = solve_dual(&k, &y, c, tol, 1_000_000);
        prop_assert!(sol.converged);
        prop_assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        prop_assert!(sol.equality_residual() <= 1e-6);
        prop_assert!(sol.max_kkt_violation(&k) <= tol, "violation {}", sol.max_kkt_violation(&k));
    }

    #[test]
    fn kos_predict_ignores_sample_order(ds in dataset(3, 40), seed in any::<u64>(), factor in prop_oneof![Just(2.0), Just(f64::INFINITY)]) {
        let params = KosParams { imbalance_factor: factor, ..KosParams::new(0.5) };
        let a = KosModel::fit(&ds, &params);
        let b = KosModel::fit(&permute(&ds, seed), &params);
        let (Ok(a), Ok(b)) = (a, b) else { return Ok(()); };
        let xs = ds.features();
        prop_assert_eq!(a.predict_batch(&xs).unwrap(), b.predict_batch(&xs).unwrap());
    }

    #[test]
    fn svm_predict_ignores_sample_order(ds in dataset(3, 30), seed in any::<u64>()) {
        let params = SvmParams::new(0.5, 4.0);
        let a = train_multiclass(&ds, &SvmParams { accept_unconverged: true, ..params }).unwrap();
        let b = train_multiclass(&permute(&ds, seed), &SvmParams { accept_unconverged: true, ..params }).unwrap();
        let xs = ds.features();
        prop_assert_eq!(a.predict_batch(&xs).unwrap(), b.predict_batch(&xs).unwrap());
    }

    #[test]
    fn grid_search_ignores_grid_order(seed in any::<u64>(), rot in 0usize..4) {
        let ds = gaussian_blobs(&[vec![0.0, 0.0], vec![1.5, 0.5]], 0.8, 15, seed).unwrap();
        let gammas = vec![0.125, 0.5, 2.0, 8.0];
        let mut rotated = gammas.clone();
        rotated.rotate_left(rot);
        let spec = |g: Vec<f64>| GridSpec { gammas: g, cs: vec![1.0], folds: 3, seed: 1 };
        let opts = TuneOptions::default();
        for method in [Method::Kos, Method::Svm] {
            let a = grid_search(&ds, method, &spec(gammas.clone()), &opts).unwrap();
            let b = grid_search(&ds, method, &spec(rotated.clone()), &opts).unwrap();
            prop_assert_eq!((a.gamma, a.c, a.cv_score), (b.gamma, b.c, b.cv_score));
        }
    }
}

#[test]
fn balanced_lambda_is_a_critical_point_of_the_weight() {
    let w = |l: f64| 2.0 * (l * (1.0 - l)).sqrt();
    let h = 1e-6;
    let derivative = (w(BALANCED_LAMBDA + h) - w(BALANCED_LAMBDA - h)) / (2.0 * h);
    assert!(derivative.abs() < 1e-8);
    // …and it is a maximum of the weight, not a minimum.
    assert!(w(0.4) < w(0.5) && w(0.6) < w(0.5));
}

#[test]
fn splitting_is_a_no_op_on_balanced_data() {
    let ds = gaussian_blobs(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0]], 0.6, 20, 3).unwrap();
    let split = KosModel::fit(&ds, &KosParams::new(0.8)).unwrap();
    let whole = KosModel::fit(
        &ds,
        &KosParams {
            imbalance_factor: f64::INFINITY,
            ..KosParams::new(0.8)
        },
    )
    .unwrap();
    let xs = ds.features();
    assert_eq!(split.predict_batch(&xs).unwrap(), whole.predict_batch(&xs).unwrap());
}

#[test]
fn separable_blobs_fit_perfectly_with_closed_form_gamma() {
    for seed in 0..5 {
        let ds = gaussian_blobs(&[vec![0.0, 0.0], vec![6.0, 0.0]], 0.5, 40, seed).unwrap();
        let est = estimate(&compute_geometry(&ds).unwrap(), Variant::Avg).unwrap();
        let kos = KosModel::fit(&ds, &KosParams::new(est.gamma)).unwrap();
        let xs = ds.features();
        assert_eq!(kos.predict_batch(&xs).unwrap(), ds.labels());
        let svm = train_multiclass(&ds, &SvmParams::new(est.gamma, 100.0)).unwrap();
        assert_eq!(svm.predict_batch(&xs).unwrap(), ds.labels());
    }
}

#[test]
fn svm_relabeling_commutes_with_prediction() {
    let ds = gaussian_blobs(&[vec![0.0, 0.0], vec![4.0, 0.0], vec![0.0, 4.0]], 0.5, 15, 9).unwrap();
    let perm = [2usize, 0, 1];
    let relabeled = Dataset::from_rows(
        ds.features().iter().map(|x| x.to_vec()).collect(),
        ds.labels().iter().map(|&l| perm[l]).collect(),
    )
    .unwrap();
    let params = SvmParams::new(0.3, 10.0);
    let a = train_multiclass(&ds, &params).unwrap();
    let b = train_multiclass(&relabeled, &params).unwrap();
    let queries = common::random_points(&mut common::rng(4), 50, 2, 5.0);
    for q in &queries {
        let pa = a.predict(q).unwrap();
        let pb = b.predict(q).unwrap();
        // Vote ties resolve to the lowest id, which relabeling moves.
        let votes = |m: &kernelgamma::SvmMulticlassModel| {
            let mut v = vec![0; 3];
            for ((x, y), bin) in &m.pairs {
                v[if bin.decision(q).unwrap() > 0.0 { *x } else { *y }] += 1;
            }
            v
        };
        if votes(&a).iter().filter(|&&c| c == 1).count() == 3 {
            continue;
        }
        assert_eq!(perm[pa], pb, "query {q:?}");
    }
}
