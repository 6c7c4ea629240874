use num_traits::Float;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::CalibrationError;

/// Correct-vs-incorrect comparison of uncertainties.
///
/// `mean_diff` is `mean(incorrect) - mean(correct)`; the t statistic uses the
/// same orientation. When both groups have zero variance the test statistic,
/// p-value and effect size are undefined and `degenerate` is set instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n_correct: usize,
    pub n_incorrect: usize,
    pub mean_correct: f64,
    pub mean_incorrect: f64,
    pub mean_diff: f64,
    pub t_statistic: Option<f64>,
    pub degrees_of_freedom: Option<f64>,
    pub p_value: Option<f64>,
    pub cohens_d: Option<f64>,
    pub degenerate: bool,
    pub t_test: String,
    pub effect_size: String,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

pub fn compare_groups<T: Float>(correct: &[T], incorrect: &[T]) -> Result<GroupStats, CalibrationError> {
    if correct.len() < 2 || incorrect.len() < 2 {
        return Err(CalibrationError::InsufficientData { correct: correct.len(), incorrect: incorrect.len() });
    }
    let to_f64 = |xs: &[T]| xs.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect::<Vec<_>>();
    let (c, i) = (to_f64(correct), to_f64(incorrect));
    let (n1, n2) = (c.len() as f64, i.len() as f64);
    let (m1, v1) = mean_var(&c);
    let (m2, v2) = mean_var(&i);
    let mean_diff = m2 - m1;

    let se2 = v1 / n1 + v2 / n2;
    let pooled = (((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / (n1 + n2 - 2.0)).sqrt();
    let mut stats = GroupStats {
        n_correct: c.len(),
        n_incorrect: i.len(),
        mean_correct: m1,
        mean_incorrect: m2,
        mean_diff,
        t_statistic: None,
        degrees_of_freedom: None,
        p_value: None,
        cohens_d: None,
        degenerate: true,
        t_test: "welch".into(),
        effect_size: "cohens_d_pooled_sd".into(),
    };
    if se2 <= 0.0 || pooled <= 0.0 {
        return Ok(stats);
    }

    let t = mean_diff / se2.sqrt();
    // Welch–Satterthwaite
    let df = se2 * se2 / ((v1 / n1).powi(2) / (n1 - 1.0) + (v2 / n2).powi(2) / (n2 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);

    stats.t_statistic = Some(t);
    stats.degrees_of_freedom = Some(df);
    stats.p_value = Some(p);
    stats.cohens_d = Some(mean_diff / pooled);
    stats.degenerate = false;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_groups_have_zero_effect() {
        let g = [0.1, 0.4, 0.9, 0.3];
        let s = compare_groups(&g, &g).unwrap();
        assert_eq!(s.mean_diff, 0.0);
        assert_eq!(s.cohens_d, Some(0.0));
        assert_eq!(s.p_value, Some(1.0));
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
    fn too_small_groups() {
        assert!(matches!(
            compare_groups(&[1.0], &[1.0, 2.0]),
            Err(CalibrationError::InsufficientData { correct: 1, incorrect: 2 })
        ));
    }

    #[test]
    fn swap_negates_mean_diff() {
        let a = [0.2, 0.5, 0.1, 0.7];
        let b = [1.2, 0.9, 1.6];
        let ab = compare_groups(&a, &b).unwrap();
        let ba = compare_groups(&b, &a).unwrap();
        assert_eq!(ab.mean_diff, -ba.mean_diff);
        assert_eq!(ab.t_statistic.unwrap(), -ba.t_statistic.unwrap());
        assert_eq!(ab.p_value, ba.p_value);
    }
}
