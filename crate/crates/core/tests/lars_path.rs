use lineout::lars::{lars_path, select_outages, standardize_matrix, PathEvent, SelectionRule};
use lineout::oracle::{kkt_violation, path_cd_gap, planted_instance};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn column_index(ids: &[usize], active: &[usize]) -> Vec<usize> {
    active.iter().map(|id| ids.iter().position(|x| x == id).unwrap()).collect()
}

fn check_instance(x: &DMatrix<f64>, y: &DVector<f64>) -> (f64, f64, f64) {
    let ids: Vec<usize> = (1..=x.ncols()).collect();
    let design = standardize_matrix(x, &ids).unwrap();
    let path = lars_path(&design, y, None).unwrap();
    let yc = y.map(|v| v - y.mean());
    let cd_err = path_cd_gap(&design.columns, &yc, &path.lambdas, &path.std_betas);
    let (mut eq, mut bound) = (0.0f64, 0.0f64);
    assert!(path.lambdas.windows(2).all(|w| w[1] < w[0]));
    for q in 0..path.len() {
        let lambda = path.lambdas[q];
        let beta = &path.std_betas[q];
        let active = column_index(&ids, &path.active_sets[q]);
        let (e, b, s) = kkt_violation(&design.columns, &yc, beta, lambda, &active);
        assert_eq!(s, 0.0, "sign disagreement at point {q}");
        eq = eq.max(e);
        bound = bound.max(b);
    }
    (cd_err, eq, bound)
}

#[test]
fn path_matches_coordinate_descent_on_planted_designs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..30 {
        let k = rng.gen_range(10..=25);
        let l = rng.gen_range(20..=46);
        let a = rng.gen_range(1..=3);
        let (x, y, _) = planted_instance(&mut rng, k, l, a, 10.0);
        let (cd, eq, bound) = check_instance(&x, &y);
        assert!(cd <= 1e-6, "coordinate descent gap {cd}");
        assert!(eq <= 1e-8 && bound <= 1e-8, "KKT {eq} {bound}");
    }
}

#[test]
fn each_step_changes_one_variable() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (x, y, _) = planted_instance(&mut rng, 15, 40, 2, 10.0);
        let ids: Vec<usize> = (1..=40).collect();
        let design = standardize_matrix(&x, &ids).unwrap();
        let path = lars_path(&design, &y, None).unwrap();
        for w in path.active_sets.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let diff = a.iter().filter(|v| !b.contains(v)).count() + b.iter().filter(|v| !a.contains(v)).count();
            assert!(diff <= 1);
        }
        assert!(path.len() <= path.max_steps + 1);
        assert!(path.events.iter().all(|e| !matches!(e, PathEvent::LeastSquares)) || path.lambdas.last() == Some(&0.0));
    }
}

#[test]
fn planted_support_is_recovered_without_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (x, _, support) = planted_instance(&mut rng, 25, 30, 2, 10.0);
    let mut beta = DVector::zeros(30);
    for &j in &support {
        beta[j] = 1.0 + j as f64 / 30.0;
    }
    let y = &x * beta;
    let ids: Vec<usize> = (1..=30).collect();
    let design = standardize_matrix(&x, &ids).unwrap();
    let path = lars_path(&design, &y, None).unwrap();
    let sel = select_outages(&path, SelectionRule::TopK { k: 2 }).unwrap();
    let mut want: Vec<usize> = support.iter().map(|j| j + 1).collect();
    want.sort_unstable();
    let mut got = sel.selected_lines.clone();
    got.sort_unstable();
    assert_eq!(got, want);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scaling_measurement_scales_path(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y, _) = planted_instance(&mut rng, 12, 20, 2, 10.0);
        let ids: Vec<usize> = (1..=20).collect();
        let design = standardize_matrix(&x, &ids).unwrap();
        let p = lars_path(&design, &y, None).unwrap();
        let ps = lars_path(&design, &(&y * c), None).unwrap();
        prop_assert_eq!(&p.active_sets, &ps.active_sets);
        for (a, b) in p.lambdas.iter().zip(&ps.lambdas) {
            prop_assert!((a * c - b).abs() <= 1e-9 * b.abs().max(1e-12));
        }
        let s = select_outages(&p, SelectionRule::default()).unwrap();
        let ss = select_outages(&ps, SelectionRule::default()).unwrap();
        prop_assert_eq!(s.selected_lines, ss.selected_lines);
    }

    #[test]
    fn kkt_holds_on_random_designs(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(10..=25);
        let l = rng.gen_range(20..=46);
        let (x, y, _) = planted_instance(&mut rng, k, l, 3, 10.0);
        let ids: Vec<usize> = (1..=l).collect();
        let design = standardize_matrix(&x, &ids).unwrap();
        let path = lars_path(&design, &y, None).unwrap();
        let yc = y.map(|v| v - y.mean());
        for q in 0..path.len() {
            let active = column_index(&ids, &path.active_sets[q]);
            let (e, b, s) = kkt_violation(&design.columns, &yc, &path.std_betas[q], path.lambdas[q], &active);
            prop_assert!(e <= 1e-8 && b <= 1e-8 && s == 0.0);
        }
    }
}
