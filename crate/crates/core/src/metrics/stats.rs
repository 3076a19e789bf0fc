//! The statistical battery: percent change, Cohen's d, paired confidence
//! intervals, one-way repeated-measures ANOVA and Pearson correlation.

use serde::{Deserialize, Serialize};

use super::special::{f_sf, t_quantile};
use super::MetricsError;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1).
pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

/// Population standard deviation (n).
pub fn population_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn need(xs: &[f64], n: usize) -> Result<(), MetricsError> {
    if xs.len() < n {
        return Err(MetricsError::TooFewSamples {
            needed: n,
            got: xs.len(),
        });
    }
    Ok(())
}

pub fn percent_change(baseline: f64, condition: f64) -> Result<f64, MetricsError> {
    if baseline == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok(100.0 * (condition - baseline) / baseline)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DVariant {
    Pooled,
    Paired,
}

/// Effect of `b` relative to `a`.
pub fn cohens_d(a: &[f64], b: &[f64], variant: DVariant) -> Result<f64, MetricsError> {
    need(a, 2)?;
    need(b, 2)?;
    let (num, den) = match variant {
        DVariant::Pooled => {
            let (sa, sb) = (sample_sd(a), sample_sd(b));
            (mean(b) - mean(a), ((sa * sa + sb * sb) / 2.0).sqrt())
        }
        DVariant::Paired => {
            if a.len() != b.len() {
                return Err(MetricsError::LengthMismatch {
                    left: a.len(),
                    right: b.len(),
                });
            }
            let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
            (mean(&diffs), sample_sd(&diffs))
        }
    };
    if !(den > 0.0) {
        return Err(MetricsError::DegenerateVariance);
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

/// Two-sided t interval for the mean of paired differences. An all-equal
/// sample is degenerate.
pub fn paired_ci(diffs: &[f64], level: f64) -> Result<Interval, MetricsError> {
    need(diffs, 2)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricsError::InvalidLevel(level));
    }
    let sd = sample_sd(diffs);
    if !(sd > 0.0) {
        return Err(MetricsError::DegenerateVariance);
    }
    let n = diffs.len() as f64;
    let half = t_quantile(0.5 + level / 2.0, n - 1.0) * sd / n.sqrt();
    let m = mean(diffs);
    Ok(Interval {
        lo: m - half,
        hi: m + half,
        level,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub f: f64,
    pub df_conditions: f64,
    pub df_error: f64,
    pub p: f64,
    pub ss_subjects: f64,
    pub ss_conditions: f64,
    pub ss_error: f64,
}

/// One-way within-subjects ANOVA on a subjects × conditions matrix.
pub fn rm_anova(matrix: &[Vec<f64>]) -> Result<Anova, MetricsError> {
    let n = matrix.len();
    let k = matrix.first().map_or(0, |r| r.len());
    if n < 2
        || k < 2
        || matrix
            .iter()
            .any(|r| r.len() != k || r.iter().any(|v| !v.is_finite()))
    {
        return Err(MetricsError::IncompleteMatrix);
    }
    let grand = matrix.iter().flatten().sum::<f64>() / (n * k) as f64;
    let ss_total: f64 = matrix.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    let ss_subjects: f64 = matrix
        .iter()
        .map(|r| k as f64 * (mean(r) - grand).powi(2))
        .sum();
    let ss_conditions: f64 = (0..k)
        .map(|j| {
            let m = matrix.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            n as f64 * (m - grand).powi(2)
        })
        .sum();
    let ss_error = ss_total - ss_subjects - ss_conditions;
    let df_conditions = (k - 1) as f64;
    let df_error = ((n - 1) * (k - 1)) as f64;
    if !(ss_error > 1e-12 * ss_total.max(f64::MIN_POSITIVE)) {
        return Err(MetricsError::ZeroErrorVariance);
    }
    let f = (ss_conditions / df_conditions) / (ss_error / df_error);
    Ok(Anova {
        f,
        df_conditions,
        df_error,
        p: f_sf(f, df_conditions, df_error),
        ss_subjects,
        ss_conditions,
        ss_error,
    })
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    need(x, 3)?;
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(MetricsError::DegenerateVariance);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_change_examples() {
        assert!((percent_change(0.088, 0.095).unwrap() - 7.954_545_454_545_454).abs() < 1e-9);
        assert_eq!(percent_change(0.3, 0.3).unwrap(), 0.0);
        assert!((percent_change(0.10, 0.05).unwrap() + 50.0).abs() < 1e-12);
        assert_eq!(percent_change(0.0, 1.0), Err(MetricsError::ZeroBaseline));
    }

    #[test]
    fn cohens_d_from_summary_statistics() {
        // Two samples with means 0.64 / 0.75 and SDs 0.29 / 0.33.
        let a = [0.64 - 0.29, 0.64 + 0.29];
        let b = [0.75 - 0.33, 0.75 + 0.33];
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        let a: Vec<f64> = a.iter().map(|v| 0.64 + (v - 0.64) * scale).collect();
        let b: Vec<f64> = b.iter().map(|v| 0.75 + (v - 0.75) * scale).collect();
        assert!((sample_sd(&a) - 0.29).abs() < 1e-12);
        let d = cohens_d(&a, &b, DVariant::Pooled).unwrap();
        assert!((d - 0.354).abs() < 5e-4, "{d}");
    }

    #[test]
    fn cohens_d_textbook_fixture() {
        // Frozen from numpy.
        let a = [2.0, 4.0, 4.0, 4.0, 5.0];
        let b = [5.0, 5.0, 7.0, 9.0, 9.0];
        assert!(
            (cohens_d(&a, &b, DVariant::Pooled).unwrap() - 1.984_555_753_427_335_3).abs() < 1e-10
        );
        assert!(
            (cohens_d(&a, &b, DVariant::Paired).unwrap() - 2.157_439_559_882_375).abs() < 1e-10
        );
        assert_eq!(cohens_d(&a, &a, DVariant::Pooled).unwrap(), 0.0);
        assert_eq!(
            cohens_d(&a, &a, DVariant::Paired),
            Err(MetricsError::DegenerateVariance)
        );
        assert!(matches!(
            cohens_d(&a, &b[..4], DVariant::Paired),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn paired_ci_fixture() {
        // Frozen from scipy.stats.t.
        let d = [0.012, -0.004, 0.021, 0.008, 0.015, -0.002, 0.010, 0.019];
        let ci = paired_ci(&d, 0.95).unwrap();
        assert!((ci.lo - 0.002_298_740_576_795_969).abs() < 1e-9);
        assert!((ci.hi - 0.017_451_259_423_204_03).abs() < 1e-9);
        assert_eq!(
            paired_ci(&[0.0; 4], 0.95),
            Err(MetricsError::DegenerateVariance)
        );
        let sym = paired_ci(&[-0.2, 0.2, -0.1, 0.1], 0.95).unwrap();
        assert!((sym.lo + sym.hi).abs() < 1e-15);
    }

    #[test]
    fn rm_anova_textbook_fixture() {
        // Frozen from statsmodels AnovaRM.
        let m = vec![
            vec![45.0, 50.0, 55.0],
            vec![42.0, 42.0, 45.0],
            vec![36.0, 41.0, 43.0],
            vec![39.0, 35.0, 40.0],
            vec![51.0, 55.0, 59.0],
            vec![44.0, 49.0, 56.0],
        ];
        let a = rm_anova(&m).unwrap();
        assert!((a.f - 12.533_980_582_524_27).abs() < 1e-9);
        assert!((a.p - 0.001_885_590_647_025_538).abs() < 1e-9);
        assert_eq!((a.df_conditions, a.df_error), (2.0, 10.0));
    }

    #[test]
    fn rm_anova_edge_cases() {
        // Equal condition means, varying subjects, nonzero interaction.
        let m = vec![
            vec![1.0, 2.0, 3.0],
            vec![3.0, 2.0, 1.0],
            vec![5.0, 5.0, 5.0],
        ];
        assert_eq!(rm_anova(&m).unwrap().f, 0.0);
        let additive = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(rm_anova(&additive), Err(MetricsError::ZeroErrorVariance));
        assert_eq!(
            rm_anova(&[vec![1.0, 2.0]]),
            Err(MetricsError::IncompleteMatrix)
        );
        assert_eq!(
            rm_anova(&[vec![1.0, 2.0], vec![1.0]]),
            Err(MetricsError::IncompleteMatrix)
        );
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_r(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(
            pearson_r(&x, &[1.0; 4]),
            Err(MetricsError::DegenerateVariance)
        );
    }

    use proptest::prelude::*;

    fn sample(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, n)
    }

    proptest! {
        #[test]
        fn effect_sizes_are_affine_invariant(
            a in sample(3..=12), b in sample(3..=12), scale in 0.1f64..10.0, shift in -5.0f64..5.0,
        ) {
            let t = |x: &[f64]| x.iter().map(|v| v * scale + shift).collect::<Vec<_>>();
            if let (Ok(d), Ok(dt)) = (cohens_d(&a, &b, DVariant::Pooled), cohens_d(&t(&a), &t(&b), DVariant::Pooled)) {
                prop_assert!((d - dt).abs() < 1e-8 * (1.0 + d.abs()));
            }
            let n = a.len().min(b.len());
            if let (Ok(d), Ok(dt)) = (
                cohens_d(&a[..n], &b[..n], DVariant::Paired),
                cohens_d(&t(&a[..n]), &t(&b[..n]), DVariant::Paired),
            ) {
                prop_assert!((d - dt).abs() < 1e-7 * (1.0 + d.abs()));
            }
        }

        #[test]
        fn anova_ignores_subject_offsets(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 3..=12),
            offsets in prop::collection::vec(-10.0f64..10.0, 12),
        ) {
            let shifted: Vec<Vec<f64>> =
                rows.iter().zip(&offsets).map(|(r, o)| r.iter().map(|v| v + o).collect()).collect();
            if let (Ok(a), Ok(b)) = (rm_anova(&rows), rm_anova(&shifted)) {
                prop_assert!((a.f - b.f).abs() < 1e-6 * (1.0 + a.f));
                prop_assert!((a.ss_error - b.ss_error).abs() < 1e-8);
                prop_assert!((0.0..=1.0).contains(&a.p));
            }
        }

        #[test]
        fn paired_ci_brackets_the_mean(d in sample(2..=12), level in 0.5f64..0.99) {
            if let Ok(ci) = paired_ci(&d, level) {
                let m = mean(&d);
                prop_assert!(ci.lo < m && m < ci.hi);
                let wider = paired_ci(&d, (level + 1.0) / 2.0).unwrap();
                prop_assert!(wider.lo < ci.lo && wider.hi > ci.hi);
            }
        }
    }
}
