use levyac_core::metrics::{
    error_control, error_game, error_value, per_time_l2_errors, weighted_sum,
};
use levyac_core::Error;

use proptest::prelude::*;

fn reference_series(nodes: usize, m: usize) -> Vec<f64> {
    (0..nodes * m)
        .map(|i| 1.0 + 0.3 * ((i as f64) * 0.91).sin())
        .collect()
}

#[test]
fn proportional_value_offset_gives_the_scale_factor() {
    let (nodes, m) = (50, 7);
    let dt = 1.0 / nodes as f64;
    let exact = reference_series(nodes, m);
    let approx: Vec<f64> = exact.iter().map(|v| 1.01 * v).collect();
    let err = error_value(dt, &approx, &exact, nodes, m).unwrap();
    // Scale factors cancel per node, so the sum is 0.01 * T.
    assert!((err - 0.01).abs() <= 1e-12, "{err}");
}

#[test]
fn proportional_control_offset_gives_the_scale_factor() {
    let (nodes, m, dims) = (50, 5, 3);
    let dt = 1.0 / nodes as f64;
    let exact = reference_series(nodes, m * dims);
    let approx: Vec<f64> = exact.iter().map(|v| 1.05 * v).collect();
    let err = error_control(dt, &approx, &exact, nodes, m, dims).unwrap();
    assert!((err - 0.05).abs() <= 1e-12, "{err}");
}

#[test]
fn value_error_is_the_dt_weighted_fold_of_the_per_time_series() {
    let (nodes, m) = (20, 4);
    let dt = 0.05;
    let exact = reference_series(nodes, m);
    let approx: Vec<f64> = exact
        .iter()
        .enumerate()
        .map(|(i, v)| v + 0.01 * ((i as f64).cos()))
        .collect();
    let series = per_time_l2_errors(&approx, &exact, nodes, m).unwrap();
    let folded = weighted_sum(dt, &series).unwrap();
    let direct = error_value(dt, &approx, &exact, nodes, m).unwrap();
    assert_eq!(direct, folded);
}

#[test]
fn zero_reference_marks_node_absent_and_fails_the_aggregate() {
    let (nodes, m) = (4, 3);
    let mut exact = reference_series(nodes, m);
    for j in 0..m {
        exact[2 * m + j] = 0.0;
    }
    let approx = vec![1.0; nodes * m];
    let series = per_time_l2_errors(&approx, &exact, nodes, m).unwrap();
    assert!(series[0].is_some());
    assert!(series[2].is_none());
    assert_eq!(
        error_value(0.25, &approx, &exact, nodes, m),
        Err(Error::DegenerateMetric { node: 2 })
    );
}

#[test]
fn control_error_rejects_a_degenerate_dimension() {
    let (nodes, m, dims) = (3, 2, 2);
    let mut exact = reference_series(nodes, m * dims);
    for j in 0..m {
        // Zero out dimension 1 at node 1.
        exact[(m + j) * dims + 1] = 0.0;
    }
    let approx = vec![0.5; nodes * m * dims];
    assert_eq!(
        error_control(0.1, &approx, &exact, nodes, m, dims),
        Err(Error::DegenerateMetric { node: 1 })
    );
}

#[test]
fn game_error_is_the_agent_mean() {
    let (v, c) = error_game(&[0.01, 0.03], &[0.02, 0.06, 0.04]).unwrap();
    assert!((v - 0.02).abs() <= 1e-16);
    assert!((c - 0.04).abs() <= 1e-16);
    assert!(error_game(&[], &[0.1]).is_err());
}

#[test]
fn non_finite_inputs_are_rejected() {
    let exact = vec![1.0, 2.0];
    let approx = vec![f64::NAN, 0.0];
    assert_eq!(
        per_time_l2_errors(&approx, &exact, 1, 2),
        Err(Error::NonFinite("metric input series"))
    );
}

proptest! {
    #[test]
    fn power_of_two_homogeneity_is_bitwise(scale_exp in -3i32..4, seed in 0u64..100) {
        let (nodes, m) = (6, 5);
        let scale = 2.0f64.powi(scale_exp);
        let exact: Vec<f64> = (0..nodes * m)
            .map(|i| 0.5 + ((seed as f64 + i as f64) * 0.37).sin())
            .collect();
        let approx: Vec<f64> = exact
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.1 * ((i as f64) * 0.13).cos())
            .collect();
        let base = per_time_l2_errors(&approx, &exact, nodes, m).unwrap();
        let scaled_a: Vec<f64> = approx.iter().map(|v| scale * v).collect();
        let scaled_e: Vec<f64> = exact.iter().map(|v| scale * v).collect();
        let scaled = per_time_l2_errors(&scaled_a, &scaled_e, nodes, m).unwrap();
        prop_assert_eq!(base, scaled);
    }

    #[test]
    fn general_homogeneity_holds_to_machine_precision(c in 0.1f64..10.0) {
        let (nodes, m) = (5, 4);
        let exact = reference_series(nodes, m);
        let approx: Vec<f64> = exact.iter().enumerate().map(|(i, v)| v + 0.05 * (i as f64).sin()).collect();
        let base = error_value(0.2, &approx, &exact, nodes, m).unwrap();
        let scaled_a: Vec<f64> = approx.iter().map(|v| c * v).collect();
        let scaled_e: Vec<f64> = exact.iter().map(|v| c * v).collect();
        let scaled = error_value(0.2, &scaled_a, &scaled_e, nodes, m).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-12 * base.max(1.0));
    }
}
