mod common;

use common::*;

#[test]
fn crqa_matches_brute_force_plot() {
    check_crqa_oracle(200).unwrap();
}

#[test]
fn likelihood_matches_closed_form() {
    check_likelihood(1000).unwrap();
}

#[test]
fn granger_recovers_direction_and_lag() {
    check_granger(100, 0.8, 2000).unwrap();
}

#[test]
fn feature_examples_hold() {
    check_feature_examples().unwrap();
    assert_eq!(alternating_trial_mean(), Some(0.5));
}

#[test]
fn brute_force_crqa_sanity() {
    // identical alternating series: every other diagonal is a full line
    let x: Vec<f64> = (0..12).map(|i| f64::from(i % 2)).collect();
    let b = brute_crqa(&x, &x, 3, 2, 0.1, 2);
    assert_eq!(b.total, 64);
    assert_eq!(b.recurrent, 32);
    assert_eq!(b.maxl, 8);
    assert_eq!(b.det, 1.0);
}
