use serde::Deserialize;
use uala_core::calibration::{compare_groups, CalibrationError};

#[derive(Deserialize)]
struct Case {
    correct: Vec<f64>,
    incorrect: Vec<f64>,
    mean_diff: f64,
    t: f64,
    p: f64,
    d: f64,
}

#[test]
fn welch_and_cohens_d_match_reference() {
    let cases: Vec<Case> = serde_json::from_str(include_str!("data/stats_oracle.json")).unwrap();
    assert!(!cases.is_empty());
    for (i, c) in cases.iter().enumerate() {
        let s = compare_groups(&c.correct, &c.incorrect).unwrap();
        assert!(!s.degenerate);
        assert!((s.mean_diff - c.mean_diff).abs() <= 1e-6, "case {i} mean_diff");
        assert!((s.t_statistic.unwrap() - c.t).abs() <= 1e-6, "case {i} t");
        assert!((s.p_value.unwrap() - c.p).abs() <= 1e-6, "case {i} p");
        assert!((s.cohens_d.unwrap() - c.d).abs() <= 1e-6, "case {i} d");
    }
}

#[test]
fn identical_groups_have_zero_effect() {
    let g = [0.3, 0.9, 1.4, 0.2, 0.7];
    let s = compare_groups(&g, &g).unwrap();
    assert_eq!(s.mean_diff, 0.0);
    assert_eq!(s.cohens_d, Some(0.0));
    assert_eq!(s.t_statistic, Some(0.0));
    assert!((s.p_value.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn zero_variance_is_flagged() {
    let s = compare_groups(&[0.0; 4], &[1.0; 4]).unwrap();
    assert_eq!(s.mean_diff, 1.0);
    assert!(s.degenerate);
    assert_eq!(s.t_statistic, None);
    assert_eq!(s.cohens_d, None);
}

#[test]
fn tiny_groups_are_rejected() {
    assert!(matches!(compare_groups(&[1.0], &[1.0, 2.0]), Err(CalibrationError::InsufficientData { .. })));
}
