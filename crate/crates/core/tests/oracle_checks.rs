//! Cross-checks of the production algorithms against deliberately naive
//! reference routes: direct normal equations, all-pairs domination,
//! enumerate-and-filter index sets, quadrature orthonormality, and
//! randomized monotonicity sweeps.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ddpce::basis::MultiIndexSet;
use ddpce::ensemble::{train_ensemble, FitSettings, SplitPlan};
use ddpce::features::{sample_uniform, Dataset, DesignPoint, Feature, FeatureSpecs};
use ddpce::optimize::pareto_filter;
use ddpce::regression::{
    build_design_matrix, condition_number, fit_ols, fit_sparse_adaptive, DesignMatrix,
    SparseAdaptiveOptions,
};
use ddpce::thermal::{heatsink_volume, synthetic_oracle};
use ddpce_oracles::{
    gauss_legendre, monotone_decreasing_violations, oracle_enumerate_set,
    oracle_normal_equations, oracle_pareto_bruteforce, quadrature_inner_product, OracleReport,
    SetKind,
};

#[test]
fn legendre_orthonormality_by_quadrature() {
    for a in 0..=8u32 {
        for b in 0..=8u32 {
            let inner = quadrature_inner_product(a, b, 32);
            let expected = if a == b { 1.0 } else { 0.0 };
            assert!(
                (inner - expected).abs() < 1e-10,
                "<psi_{a}, psi_{b}> = {inner}"
            );
        }
    }
}

#[test]
fn set_generators_match_enumerate_and_filter() {
    for dim in 1..=4usize {
        for degree in 0..=4u32 {
            let tp = MultiIndexSet::tensor_product(dim, degree).unwrap();
            let tp_oracle = oracle_enumerate_set(SetKind::TensorProduct, dim, degree);
            OracleReport::exact(
                "tensor_product",
                &format!("dim={dim} degree={degree}"),
                &tp_oracle,
                &tp,
            )
            .assert_agrees();

            let td = MultiIndexSet::total_degree(dim, degree).unwrap();
            let td_oracle = oracle_enumerate_set(SetKind::TotalDegree, dim, degree);
            OracleReport::exact(
                "total_degree",
                &format!("dim={dim} degree={degree}"),
                &td_oracle,
                &td,
            )
            .assert_agrees();

            for q in [0.25, 0.5, 0.75, 1.0] {
                let h = MultiIndexSet::hyperbolic(dim, degree, q).unwrap();
                let h_oracle = oracle_enumerate_set(SetKind::Hyperbolic { q }, dim, degree);
                OracleReport::exact(
                    "hyperbolic",
                    &format!("dim={dim} degree={degree} q={q}"),
                    &h_oracle,
                    &h,
                )
                .assert_agrees();
            }
        }
    }
}

#[test]
fn hyperbolic_enumeration_example() {
    let h = oracle_enumerate_set(SetKind::Hyperbolic { q: 0.5 }, 2, 2);
    assert_eq!(h.len(), 5);
    let direct = MultiIndexSet::hyperbolic(2, 2, 0.5).unwrap();
    assert_eq!(h, direct);
}

#[test]
fn total_degree_9_3_has_220_terms_via_oracle() {
    let by_filter = oracle_enumerate_set(SetKind::TotalDegree, 9, 3);
    assert_eq!(by_filter.len(), 220);
    assert_eq!(MultiIndexSet::total_degree(9, 3).unwrap(), by_filter);
}

#[test]
fn cardinality_formulas_hold() {
    fn binomial(n: u64, k: u64) -> u64 {
        let mut acc = 1u64;
        for i in 1..=k {
            acc = acc * (n - k + i) / i;
        }
        acc
    }
    for dim in 1..=9usize {
        for degree in 0..=5u32 {
            let td = MultiIndexSet::total_degree(dim, degree).unwrap();
            assert_eq!(
                td.len() as u64,
                binomial(dim as u64 + degree as u64, degree as u64)
            );
        }
    }
    for dim in 1..=4usize {
        for degree in 0..=3u32 {
            let tp = MultiIndexSet::tensor_product(dim, degree).unwrap();
            assert_eq!(tp.len(), (degree as usize + 1).pow(dim as u32));
        }
    }
}

#[test]
fn nesting_hyperbolic_total_degree_tensor_product() {
    for q in [0.25, 0.5, 0.75, 1.0] {
        let h = MultiIndexSet::hyperbolic(3, 3, q).unwrap();
        let td = MultiIndexSet::total_degree(3, 3).unwrap();
        let tp = MultiIndexSet::tensor_product(3, 3).unwrap();
        for idx in h.indices() {
            assert!(td.contains(idx), "q={q}: {:?} not in TD", idx.degrees());
        }
        for idx in td.indices() {
            assert!(tp.contains(idx));
        }
    }
}

/// Tiny well-conditioned systems where forming the normal equations is
/// harmless: the QR path must agree with the direct solve.
#[test]
fn ols_matches_normal_equations_on_tiny_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..100 {
        let m = rng.gen_range(8..=50);
        let k = rng.gen_range(1..=5usize);
        let mat = DMatrix::from_fn(m, k, |_, _| rng.gen_range(-1.0..1.0));
        let b = DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0));
        let design = DesignMatrix::from_matrix(mat.clone()).unwrap();
        let cond = condition_number(&design).unwrap();
        if cond > 100.0 {
            continue;
        }
        let oracle = match oracle_normal_equations(&mat, &b) {
            Some(s) => s,
            None => continue,
        };
        // production-path QR solve on the same columns
        let qr = mat.clone().qr();
        let qtb = qr.q().transpose() * &b;
        let main = qr.r().solve_upper_triangular(&qtb).unwrap();
        for j in 0..k {
            OracleReport::scalar(
                "ols_vs_normal_equations",
                &format!("case={case} m={m} k={k} coeff={j}"),
                oracle[j],
                main[j],
                1e-8,
            )
            .assert_agrees();
        }
    }
}

#[test]
fn ols_design_matrix_example_agrees_with_normal_equations() {
    let specs = FeatureSpecs::new(vec![ddpce::features::FeatureSpec::continuous(
        "x", "", -1.0, 1.0,
    )])
    .unwrap();
    let basis = MultiIndexSet::total_degree(1, 1).unwrap();
    let points = vec![
        DesignPoint::new(vec![-1.0]),
        DesignPoint::new(vec![1.0]),
        DesignPoint::new(vec![0.25]),
    ];
    let responses = vec![1.0, 3.0, 2.1];
    let design = build_design_matrix(&basis, &points, &specs).unwrap();
    let b = DVector::from_column_slice(&responses);
    let oracle = oracle_normal_equations(design.as_matrix(), &b).unwrap();
    let dataset = Dataset::new(points, responses).unwrap();
    let (model, _) = fit_ols(&basis, &dataset, &specs).unwrap();
    for j in 0..2 {
        assert!((model.coefficients()[j] - oracle[j]).abs() < 1e-10);
    }
}

#[test]
fn pareto_filter_matches_bruteforce_on_random_clouds() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for case in 0..100 {
        let n = rng.gen_range(1..=1000);
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                // duplicates and axis ties are common in real fronts
                let quantize = |v: f64| (v * 8.0).round() / 8.0;
                (quantize(rng.gen_range(0.0..4.0)), quantize(rng.gen_range(0.0..4.0)))
            })
            .collect();
        let expected: Vec<(f64, f64)> = {
            let mut kept: Vec<(f64, f64)> = oracle_pareto_bruteforce(&points)
                .into_iter()
                .map(|i| points[i])
                .collect();
            kept.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
            kept
        };
        let front = pareto_filter(
            points
                .iter()
                .map(|&(f1, f2)| (f1, f2, DesignPoint::new(vec![f1, f2])))
                .collect(),
        )
        .unwrap();
        let got: Vec<(f64, f64)> = front.entries().iter().map(|e| (e.f1, e.f2)).collect();
        OracleReport::exact(
            "pareto_filter",
            &format!("case={case} n={n}"),
            &expected,
            &got,
        )
        .assert_agrees();
    }
}

#[test]
fn volume_minimal_geometry_has_smallest_volume() {
    let specs = FeatureSpecs::heat_sink();
    let mut minimal = specs.midpoint().values().to_vec();
    for f in [
        Feature::Length,
        Feature::FinGap,
        Feature::FinWidth,
        Feature::FinHeight,
        Feature::BaseHeight,
        Feature::FinCount,
    ] {
        minimal[f.index()] = specs.get(f.index()).lower;
    }
    let v_min = heatsink_volume(&DesignPoint::new(minimal), &specs).unwrap();
    let sweep = sample_uniform(100_000, &specs, 31).unwrap();
    for p in &sweep {
        assert!(heatsink_volume(p, &specs).unwrap() >= v_min);
    }
}

#[test]
fn volume_monotone_in_each_geometric_feature() {
    let specs = FeatureSpecs::heat_sink();
    let bases = sample_uniform(20, &specs, 17).unwrap();
    let volume = |p: &DesignPoint| heatsink_volume(p, &FeatureSpecs::heat_sink()).unwrap();
    for base in &bases {
        for f in [
            Feature::Length,
            Feature::FinGap,
            Feature::FinWidth,
            Feature::FinHeight,
            Feature::BaseHeight,
            Feature::FinCount,
        ] {
            let mut last = f64::NEG_INFINITY;
            let spec = specs.get(f.index());
            for i in 0..=10 {
                let mut values = base.values().to_vec();
                values[f.index()] = spec.lower + spec.range() * i as f64 / 10.0;
                let v = volume(&DesignPoint::new(values));
                assert!(v >= last, "volume not nondecreasing in {}", spec.name);
                last = v;
            }
        }
    }
}

#[test]
fn oracle_strictly_decreasing_in_cooling_features() {
    let specs = FeatureSpecs::heat_sink();
    let f = |p: &DesignPoint| synthetic_oracle(p, &FeatureSpecs::heat_sink()).unwrap();
    let bases = sample_uniform(20, &specs, 23).unwrap();
    for base in &bases {
        for feature in [
            Feature::AirVelocity,
            Feature::FinHeight,
            Feature::FinCount,
            Feature::Length,
        ] {
            let violations =
                monotone_decreasing_violations(&f, base, &specs, feature.index(), 25, 1e-9);
            assert_eq!(
                violations,
                0,
                "oracle not strictly decreasing in feature {}",
                specs.get(feature.index()).name
            );
        }
    }
}

#[test]
fn oracle_range_sanity_over_the_box() {
    let specs = FeatureSpecs::heat_sink();
    let points = sample_uniform(100_000, &specs, 41).unwrap();
    for p in &points {
        let t_s = synthetic_oracle(p, &specs).unwrap();
        let t_a = p.get(Feature::AmbientTemperature);
        assert!(t_s > t_a && t_s < 200.0, "T_s = {t_s} at T_a = {t_a}");
    }
}

/// The spec ties the adaptive basis growth to the training-set size; a
/// small reshuffled ensemble reproduces the monotone mean-size behavior.
#[test]
fn sparse_adaptive_mean_basis_size_grows_with_data() {
    let specs = FeatureSpecs::heat_sink();
    let points = sample_uniform(935, &specs, 7).unwrap();
    let responses: Vec<f64> = points
        .iter()
        .map(|p| synthetic_oracle(p, &specs).unwrap())
        .collect();
    let dataset = Dataset::new(points, responses).unwrap();
    let settings = FitSettings::SparseAdaptive {
        options: SparseAdaptiveOptions::default(),
    };
    let mut means = Vec::new();
    for m in [100usize, 400, 800] {
        let plan = SplitPlan {
            master_seed: 5,
            reshuffles: 5,
            train_size: m,
            test_size: 135,
        };
        let e = train_ensemble(&dataset, &specs, &plan, &settings).unwrap();
        let mean = e
            .members()
            .iter()
            .map(|mm| mm.basis().len() as f64)
            .sum::<f64>()
            / e.members().len() as f64;
        means.push(mean);
        for report in e.member_reports() {
            assert!(report.condition_number < 10.0);
        }
    }
    assert!(means[0] < means[1] && means[1] < means[2], "means = {means:?}");
}

#[test]
fn sparse_adaptive_condition_checked_from_scratch() {
    let specs = FeatureSpecs::heat_sink();
    let points = sample_uniform(200, &specs, 53).unwrap();
    let responses: Vec<f64> = points
        .iter()
        .map(|p| synthetic_oracle(p, &specs).unwrap())
        .collect();
    let dataset = Dataset::new(points.clone(), responses).unwrap();
    let (model, report) =
        fit_sparse_adaptive(&dataset, &specs, &SparseAdaptiveOptions::default()).unwrap();
    let design = build_design_matrix(model.basis(), &points, &specs).unwrap();
    let cond = condition_number(&design).unwrap();
    OracleReport::scalar(
        "adaptive_condition_number",
        "M=200 oracle dataset",
        cond,
        report.condition_number,
        1e-6 * cond,
    )
    .assert_agrees();
    assert!(cond < 10.0);
}

#[test]
fn gauss_legendre_nodes_are_symmetric_and_exact() {
    let (nodes, weights) = gauss_legendre(32);
    for i in 0..16 {
        assert!((nodes[i] + nodes[31 - i]).abs() < 1e-15);
        assert!((weights[i] - weights[31 - i]).abs() < 1e-15);
    }
    // degree-62 monomial integrates exactly with 32 nodes
    let integral: f64 = nodes
        .iter()
        .zip(&weights)
        .map(|(&x, &w)| w * x.powi(62))
        .sum();
    assert!((integral - 2.0 / 63.0).abs() < 1e-12);
}
