//! Answer uncertainty from token log-probabilities or from sampled answers.
//!
//! Everything here is pure and generic over the float type. Log base is
//! natural throughout; thresholds are calibrated on the same scale so the
//! base only has to be consistent.

use std::fmt;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UncertaintyError {
    #[error("empty token sequence")]
    EmptySequence,
    #[error("invalid log-probability at position {index}: {value}")]
    InvalidLogprob { index: usize, value: f64 },
    #[error("no sampled answers to compare against")]
    EmptySamples,
    #[error("tokens ({tokens}) and log-probabilities ({logprobs}) differ in length")]
    LengthMismatch { tokens: usize, logprobs: usize },
    #[error("could not parse a verbalised confidence from the completion")]
    UnparsableConfidence,
    #[error("{0:?} is not a free-form estimator")]
    NotFreeForm(Method),
}

/// Which estimator produced an [`Uncertainty`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Minimum,
    Average,
    NormalisedProduct,
    LogSum,
    Entropy,
    SingleToken,
    MultiInference,
    VerbalComplement,
}

impl Method {
    pub const FREE_FORM: [Method; 5] = [
        Method::Minimum,
        Method::Average,
        Method::NormalisedProduct,
        Method::LogSum,
        Method::Entropy,
    ];

    pub fn is_free_form(self) -> bool {
        Self::FREE_FORM.contains(&self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Minimum => "minimum",
            Method::Average => "average",
            Method::NormalisedProduct => "normalised_product",
            Method::LogSum => "log_sum",
            Method::Entropy => "entropy",
            Method::SingleToken => "single_token",
            Method::MultiInference => "multi_inference",
            Method::VerbalComplement => "verbal_complement",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Ok(match key.as_str() {
            "minimum" | "min" => Method::Minimum,
            "average" | "avg" | "mean" => Method::Average,
            "normalised_product" | "normalized_product" => Method::NormalisedProduct,
            "log_sum" | "logsum" => Method::LogSum,
            "entropy" => Method::Entropy,
            "single_token" => Method::SingleToken,
            "multi_inference" => Method::MultiInference,
            "verbal_complement" | "verbal" => Method::VerbalComplement,
            _ => return Err(format!("unknown estimator `{s}`")),
        })
    }
}

/// How token log-probabilities become the weights the free-form formulas use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScope {
    /// Softmax over the answer's own token log-probabilities.
    #[default]
    Sequence,
    /// `z_i = exp(p_i)` with no normalisation. Not the published estimator;
    /// offered because sequence softmax makes `Average` constant.
    RawProb,
}

/// An extracted answer with the log-probabilities of its tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAnswer<T> {
    pub text: String,
    pub tokens: Vec<String>,
    pub token_logprobs: Vec<T>,
}

impl<T: Float> ScoredAnswer<T> {
    pub fn new(
        text: impl Into<String>,
        tokens: Vec<String>,
        token_logprobs: Vec<T>,
    ) -> Result<Self, UncertaintyError> {
        if tokens.len() != token_logprobs.len() {
            return Err(UncertaintyError::LengthMismatch {
                tokens: tokens.len(),
                logprobs: token_logprobs.len(),
            });
        }
        validate_logprobs(&token_logprobs)?;
        Ok(Self { text: text.into(), tokens, token_logprobs })
    }

    pub fn len(&self) -> usize {
        self.token_logprobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_logprobs.is_empty()
    }
}

/// Normalised token weights; strictly positive and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxWeights<T>(Vec<T>);

impl<T: Float> SoftmaxWeights<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uncertainty<T> {
    pub value: T,
    pub method: Method,
}

impl<T> Uncertainty<T> {
    pub fn new(value: T, method: Method) -> Self {
        Self { value, method }
    }
}

fn validate_logprobs<T: Float>(logprobs: &[T]) -> Result<(), UncertaintyError> {
    for (index, &p) in logprobs.iter().enumerate() {
        if p.is_nan() || p > T::zero() || p.is_infinite() {
            return Err(UncertaintyError::InvalidLogprob {
                index,
                value: p.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    Ok(())
}

fn floor<T: Float>() -> T {
    T::from(1e-300).unwrap_or_else(T::min_positive_value).max(T::min_positive_value())
}

/// `z_i = exp(p_i) / sum_j exp(p_j)`, shifted by `max(p)` before exponentiating.
pub fn softmax_over_sequence<T: Float>(logprobs: &[T]) -> Result<SoftmaxWeights<T>, UncertaintyError> {
    if logprobs.is_empty() {
        return Err(UncertaintyError::EmptySequence);
    }
    validate_logprobs(logprobs)?;
    let max = logprobs.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logprobs.iter().map(|&p| (p - max).exp()).collect();
    let total = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    Ok(SoftmaxWeights(exps.into_iter().map(|e| e / total).collect()))
}

fn weights<T: Float>(logprobs: &[T], scope: WeightScope) -> Result<Vec<T>, UncertaintyError> {
    let z = match scope {
        WeightScope::Sequence => softmax_over_sequence(logprobs)?.into_inner(),
        WeightScope::RawProb => {
            if logprobs.is_empty() {
                return Err(UncertaintyError::EmptySequence);
            }
            validate_logprobs(logprobs)?;
            logprobs.iter().map(|p| p.exp()).collect()
        }
    };
    let lo = floor::<T>();
    Ok(z.into_iter().map(|v| v.max(lo)).collect())
}

/// One of the five free-form estimators over sequence-softmax weights.
pub fn estimate_free_form<T: Float>(
    answer: &ScoredAnswer<T>,
    method: Method,
) -> Result<Uncertainty<T>, UncertaintyError> {
    estimate_free_form_scoped(&answer.token_logprobs, method, WeightScope::Sequence)
}

pub fn estimate_free_form_scoped<T: Float>(
    logprobs: &[T],
    method: Method,
    scope: WeightScope,
) -> Result<Uncertainty<T>, UncertaintyError> {
    if !method.is_free_form() {
        return Err(UncertaintyError::NotFreeForm(method));
    }
    let z = weights(logprobs, scope)?;
    let n = T::from(z.len()).expect("token count fits the float type");
    let sum = |it: &mut dyn Iterator<Item = T>| it.fold(T::zero(), |a, b| a + b);
    let value = match method {
        Method::Minimum => -z.iter().copied().fold(T::infinity(), T::min).ln(),
        Method::Average => -(sum(&mut z.iter().copied()) / n).ln(),
        // -log(prod z)^(1/n) evaluated as a mean of logs so long answers don't underflow.
        Method::NormalisedProduct => -sum(&mut z.iter().map(|v| v.ln())) / n,
        Method::LogSum => -sum(&mut z.iter().map(|v| v.ln())),
        Method::Entropy => -sum(&mut z.iter().map(|&v| v * v.ln())),
        _ => unreachable!(),
    };
    // -0.0 and tiny negative rounding collapse to zero.
    Ok(Uncertainty::new(value.max(T::zero()), method))
}

/// `u = |p|` for a one-token answer.
pub fn estimate_single_token<T: Float>(logprob: T) -> Result<Uncertainty<T>, UncertaintyError> {
    validate_logprobs(&[logprob])?;
    Ok(Uncertainty::new(logprob.abs(), Method::SingleToken))
}

/// Fraction of sampled answers that disagree with the primary one after
/// `normalizer` is applied to both sides.
pub fn estimate_multi_inference<T, S, F>(
    primary: &str,
    samples: &[S],
    normalizer: F,
) -> Result<Uncertainty<T>, UncertaintyError>
where
    T: Float,
    S: AsRef<str>,
    F: Fn(&str) -> String,
{
    if samples.is_empty() {
        return Err(UncertaintyError::EmptySamples);
    }
    let target = normalizer(primary);
    let disagree = samples.iter().filter(|s| normalizer(s.as_ref()) != target).count();
    let value = T::from(disagree).unwrap() / T::from(samples.len()).unwrap();
    Ok(Uncertainty::new(value, Method::MultiInference))
}

/// Extract the probability from an `Answer[Probability]` line.
///
/// The last bracketed value wins when the completion repeats the pattern.
pub fn parse_verbal_confidence(completion: &str) -> Result<f64, UncertaintyError> {
    use std::sync::OnceLock;
    static PATTERN: OnceLock<regex::Regex> = OnceLock::new();
    let re = PATTERN.get_or_init(|| {
        regex::Regex::new(r"(?i)answer\s*\[\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*\]").unwrap()
    });
    let captured = re
        .captures_iter(completion)
        .last()
        .and_then(|c| c.get(1))
        .ok_or(UncertaintyError::UnparsableConfidence)?;
    let value: f64 = captured.as_str().parse().map_err(|_| UncertaintyError::UnparsableConfidence)?;
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(UncertaintyError::UnparsableConfidence)
    }
}

/// `1 - confidence`; an unparsable completion counts as zero confidence.
pub fn verbal_uncertainty(completion: &str) -> Uncertainty<f64> {
    let confidence = parse_verbal_confidence(completion).unwrap_or(0.0);
    Uncertainty::new(1.0 - confidence, Method::VerbalComplement)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_uniform_and_singleton() {
        let z = softmax_over_sequence(&[-0.5f64; 4]).unwrap();
        assert!(z.as_slice().iter().all(|&v| close(v, 0.25, 1e-15)));
        let z = softmax_over_sequence(&[-0.1f64]).unwrap();
        assert_eq!(z.as_slice(), &[1.0]);
    }

    #[test]
    fn softmax_two_tokens_matches_high_precision() {
        // mpmath, 50 digits
        let z = softmax_over_sequence(&[-0.1f64, -2.3]).unwrap();
        assert!(close(z.as_slice()[0], 0.900_249_510_880_314_8, 1e-12));
        assert!(close(z.as_slice()[1], 0.099_750_489_119_685_16, 1e-12));
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert_eq!(softmax_over_sequence::<f64>(&[]), Err(UncertaintyError::EmptySequence));
        assert!(matches!(
            softmax_over_sequence(&[-1.0, f64::NAN]),
            Err(UncertaintyError::InvalidLogprob { index: 1, .. })
        ));
        assert!(matches!(
            softmax_over_sequence(&[f64::INFINITY]),
            Err(UncertaintyError::InvalidLogprob { index: 0, .. })
        ));
        assert!(softmax_over_sequence(&[0.3f64]).is_err());
    }

    #[test]
    fn entropy_of_uniform_is_ln_n() {
        let a = ScoredAnswer::new("x", vec!["a".into(); 4], vec![-0.5f64; 4]).unwrap();
        let u = estimate_free_form(&a, Method::Entropy).unwrap();
        assert!(close(u.value, 4f64.ln(), 1e-12));
        assert_eq!(u.method, Method::Entropy);
    }

    #[test]
    fn average_is_ln_n() {
        let lp = [-0.3, -1.7, -0.01, -4.2, -2.0f64];
        let u = estimate_free_form_scoped(&lp, Method::Average, WeightScope::Sequence).unwrap();
        assert!(close(u.value, 5f64.ln(), 1e-12));
    }

    #[test]
    fn five_methods_match_reference() {
        // mpmath, 50 digits, logprobs [-0.2, -1.0, -3.0]
        let lp = [-0.2f64, -1.0, -3.0];
        let expected = [
            (Method::Minimum, 3.212_201_717_278_944_4),
            (Method::Average, 1.098_612_288_668_109_7),
            (Method::NormalisedProduct, 1.612_201_717_278_944_4),
            (Method::LogSum, 4.836_605_151_836_833_2),
            (Method::Entropy, 0.762_984_881_784_721_7),
        ];
        for (m, want) in expected {
            let got = estimate_free_form_scoped(&lp, m, WeightScope::Sequence).unwrap();
            assert!(close(got.value, want, 1e-12), "{m}: {} vs {want}", got.value);
        }
    }

    #[test]
    fn raw_prob_scope_breaks_average_degeneracy() {
        let lp = [-0.2f64, -1.0, -3.0];
        let u = estimate_free_form_scoped(&lp, Method::Average, WeightScope::RawProb).unwrap();
        let mean = lp.iter().map(|p| p.exp()).sum::<f64>() / 3.0;
        assert!(close(u.value, -mean.ln(), 1e-15));
    }

    #[test]
    fn free_form_rejects_other_methods() {
        assert_eq!(
            estimate_free_form_scoped(&[-1.0f64], Method::SingleToken, WeightScope::Sequence),
            Err(UncertaintyError::NotFreeForm(Method::SingleToken))
        );
    }

    #[test]
    fn single_token_is_abs() {
        assert_eq!(estimate_single_token(0.0f64).unwrap().value, 0.0);
        assert_eq!(estimate_single_token(-2.302585f64).unwrap().value, 2.302585);
        assert_eq!(estimate_single_token(-0.0513f64).unwrap().value, 0.0513);
        assert!(estimate_single_token(0.5f64).is_err());
    }

    #[test]
    fn multi_inference_counts_disagreement() {
        let id = |s: &str| s.to_string();
        let mut samples = vec!["yes"; 6];
        samples.extend(["no"; 3]);
        let u: Uncertainty<f64> = estimate_multi_inference("yes", &samples, id).unwrap();
        assert!(close(u.value, 3.0 / 9.0, 1e-15));
        let u: Uncertainty<f64> = estimate_multi_inference("Paris", &["Paris"; 9], id).unwrap();
        assert_eq!(u.value, 0.0);
        let none: [&str; 0] = [];
        assert_eq!(
            estimate_multi_inference::<f64, _, _>("x", &none, id),
            Err(UncertaintyError::EmptySamples)
        );
    }

    #[test]
    fn verbal_confidence_parsing() {
        assert_eq!(parse_verbal_confidence("Answer: Richard Nixon\nAnswer[0.8]").unwrap(), 0.8);
        assert_eq!(parse_verbal_confidence("Answer[1.0]").unwrap(), 1.0);
        assert_eq!(
            parse_verbal_confidence("no probability given"),
            Err(UncertaintyError::UnparsableConfidence)
        );
        assert_eq!(parse_verbal_confidence("Answer[1.5]"), Err(UncertaintyError::UnparsableConfidence));
        let u = verbal_uncertainty("garbage");
        assert_eq!(u.value, 1.0);
        assert_eq!(u.method, Method::VerbalComplement);
    }

    #[test]
    fn works_in_single_precision() {
        let u = estimate_free_form_scoped(&[-0.5f32; 4], Method::Entropy, WeightScope::Sequence).unwrap();
        assert!((u.value - 4f32.ln()).abs() < 1e-6);
    }
}
