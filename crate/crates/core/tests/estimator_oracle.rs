use std::time::Instant;

use serde::Deserialize;
use uala_core::eval::normalize_answer;
use uala_core::uncertainty::{
    estimate_free_form_scoped, estimate_multi_inference, estimate_single_token, softmax_over_sequence, Method,
    WeightScope,
};

#[derive(Deserialize)]
struct FreeFormCase {
    logprobs: Vec<f64>,
    softmax: Vec<f64>,
    minimum: f64,
    average: f64,
    normalised_product: f64,
    log_sum: f64,
    entropy: f64,
    single_token: f64,
}

#[derive(Deserialize)]
struct MultiCase {
    primary: String,
    samples: Vec<String>,
    value: f64,
}

#[derive(Deserialize)]
struct Oracle {
    free_form: Vec<FreeFormCase>,
    multi_inference: Vec<MultiCase>,
}

fn oracle() -> Oracle {
    serde_json::from_str(include_str!("data/estimator_oracle.json")).unwrap()
}

const TOL: f64 = 1e-9;

#[test]
fn free_form_matches_high_precision_reference() {
    let o = oracle();
    assert_eq!(o.free_form.len(), 1000);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (i, c) in o.free_form.iter().enumerate() {
        let z = softmax_over_sequence(&c.logprobs).unwrap();
        for (a, b) in z.as_slice().iter().zip(&c.softmax) {
            worst = worst.max((a - b).abs());
        }
        for (method, want) in [
            (Method::Minimum, c.minimum),
            (Method::Average, c.average),
            (Method::NormalisedProduct, c.normalised_product),
            (Method::LogSum, c.log_sum),
            (Method::Entropy, c.entropy),
        ] {
            let got = estimate_free_form_scoped(&c.logprobs, method, WeightScope::Sequence).unwrap();
            let d = (got.value - want).abs();
            assert!(d <= TOL, "case {i} {method}: got {} want {want}", got.value);
            worst = worst.max(d);
        }
        let single = estimate_single_token(c.logprobs[0]).unwrap();
        assert!((single.value - c.single_token).abs() <= TOL, "case {i} single token");
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert!(worst <= TOL, "worst deviation {worst:e}");
}

#[test]
fn multi_inference_matches_reference() {
    let o = oracle();
    for (i, c) in o.multi_inference.iter().enumerate() {
        let u = estimate_multi_inference::<f64, _, _>(&c.primary, &c.samples, normalize_answer).unwrap();
        assert!((u.value - c.value).abs() <= TOL, "case {i}: got {} want {}", u.value, c.value);
    }
}

#[test]
fn fixed_reference_values() {
    let z = softmax_over_sequence(&[-0.1f64, -2.3]).unwrap();
    assert!((z.as_slice()[0] - 0.900_249_510_880_314_8).abs() < 1e-12);
    assert!((z.as_slice()[1] - 0.099_750_489_119_685_16).abs() < 1e-12);

    let lps = [-0.2f64, -1.0, -3.0];
    for (m, want) in [
        (Method::Minimum, 3.212_201_717_278_944_4),
        (Method::Average, 1.098_612_288_668_109_7),
        (Method::NormalisedProduct, 1.612_201_717_278_944_4),
        (Method::LogSum, 4.836_605_151_836_833_2),
        (Method::Entropy, 0.762_984_881_784_721_7),
    ] {
        let got = estimate_free_form_scoped(&lps, m, WeightScope::Sequence).unwrap().value;
        assert!((got - want).abs() < 1e-12, "{m}: {got}");
    }
}

#[test]
fn hand_counted_multi_inference() {
    let samples = ["richard nixon", "Nixon", "Richard Nixon.", "the Richard Nixon", "Gerald Ford", "Nixon", "Richard  Nixon", "R. Nixon", "richard nixon!"];
    // Normalised: 5 equal "richard nixon"; "nixon" x2, "gerald ford", "r nixon" differ.
    let u = estimate_multi_inference::<f64, _, _>("Richard Nixon", &samples, normalize_answer).unwrap();
    assert!((u.value - 4.0 / 9.0).abs() < 1e-15);
    let u = estimate_multi_inference::<f64, _, _>("yes", &["yes", "yes", "yes", "yes", "yes", "yes", "no", "no", "no"], normalize_answer).unwrap();
    assert!((u.value - 1.0 / 3.0).abs() < 1e-15);
}
