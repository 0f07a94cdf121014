//! Effect sizes and mean-comparison tests.

use serde::{Deserialize, Serialize};

use super::dist::{f_sf, t_two_sided_p};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    PairedT,
    UnpairedT,
    AnovaF,
    SpearmanT,
}

/// Degrees of freedom of a test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Df {
    One(f64),
    Two(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub df: Df,
    pub p_value: f64,
    pub effect_size: Option<f64>,
}

/// How Cohen's d standardizes the mean difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DMode {
    /// Difference of group means over the pooled (n−1) standard deviation.
    #[default]
    Pooled,
    /// Mean of paired differences over their standard deviation (d_z).
    Paired,
}

impl std::str::FromStr for DMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(DMode::Pooled),
            "paired" => Ok(DMode::Paired),
            _ => Err(Error::Validation(format!("unknown d mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for DMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DMode::Pooled => "pooled",
            DMode::Paired => "paired",
        })
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with n−1 denominator.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

fn check_finite(x: &[f64], what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what} contains non-finite values")))
    }
}

fn paired_differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "paired comparison needs at least 2 pairs, got {}",
            a.len()
        )));
    }
    check_finite(a, "first sample")?;
    check_finite(b, "second sample")?;
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Ratio of a mean difference to its scale. Zero over zero is "no effect";
/// a nonzero difference with zero scale has no finite standardization.
fn standardized(diff: f64, scale: f64, what: &str) -> Result<f64> {
    if scale > 0.0 {
        Ok(diff / scale)
    } else if diff == 0.0 {
        Ok(0.0)
    } else {
        Err(Error::DegenerateVariance(format!(
            "{what} has zero spread with a nonzero mean difference"
        )))
    }
}

pub fn cohens_d(a: &[f64], b: &[f64], mode: DMode) -> Result<f64> {
    match mode {
        DMode::Pooled => {
            let (s, diff) = pooled(a, b)?;
            standardized(diff, s, "pooled sample")
        }
        DMode::Paired => {
            let d = paired_differences(a, b)?;
            standardized(mean(&d), std_dev(&d), "paired differences")
        }
    }
}

/// Pooled standard deviation and mean difference.
fn pooled(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "each group needs at least 2 values (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    check_finite(a, "first group")?;
    check_finite(b, "second group")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled_var = ((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0);
    Ok((pooled_var.sqrt(), mean(a) - mean(b)))
}

/// Paired-samples t-test on a − b, two-sided.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let d = paired_differences(a, b)?;
    let n = d.len() as f64;
    let sd = std_dev(&d);
    let t = standardized(mean(&d), sd / n.sqrt(), "paired differences")?;
    let df = n - 1.0;
    Ok(TestResult {
        kind: TestKind::PairedT,
        statistic: t,
        df: Df::One(df),
        p_value: t_two_sided_p(t, df)?,
        effect_size: Some(standardized(mean(&d), sd, "paired differences")?),
    })
}

/// Student's two-sample t-test with equal variances, two-sided.
pub fn unpaired_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let (s, diff) = pooled(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let t = standardized(diff, s * (1.0 / na + 1.0 / nb).sqrt(), "pooled sample")?;
    let df = na + nb - 2.0;
    Ok(TestResult {
        kind: TestKind::UnpairedT,
        statistic: t,
        df: Df::One(df),
        p_value: t_two_sided_p(t, df)?,
        effect_size: Some(standardized(diff, s, "pooled sample")?),
    })
}

/// One-way ANOVA across groups; effect size is eta squared.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::InsufficientData("ANOVA needs at least 2 groups".into()));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "ANOVA group {i} has {} value(s), needs at least 2",
                g.len()
            )));
        }
        check_finite(g, "ANOVA group")?;
    }
    let k = groups.len() as f64;
    let total_n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / total_n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand) * (m - grand);
        ss_within += g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    }
    if ss_within <= 0.0 {
        return Err(Error::DegenerateVariance(
            "ANOVA groups have zero within-group variance".into(),
        ));
    }
    let d1 = k - 1.0;
    let d2 = total_n as f64 - k;
    let f = (ss_between / d1) / (ss_within / d2);
    Ok(TestResult {
        kind: TestKind::AnovaF,
        statistic: f,
        df: Df::Two(d1, d2),
        p_value: f_sf(f, d1, d2)?,
        effect_size: Some(ss_between / (ss_between + ss_within)),
    })
}

/// Bonferroni-adjusted p-value for `m` comparisons, clamped to 1.
pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m.max(1) as f64).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cohens_d_identical_groups() {
        let a = [1.0, 2.0, 4.0];
        assert_eq!(cohens_d(&a, &a, DMode::Pooled).unwrap(), 0.0);
        assert_eq!(cohens_d(&a, &a, DMode::Paired).unwrap(), 0.0);
    }

    #[test]
    fn cohens_d_pooled_hand_value() {
        let d = cohens_d(&[2.0, 4.0, 6.0], &[1.0, 3.0, 5.0], DMode::Pooled).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cohens_d_degenerate() {
        let r = cohens_d(&[2.0, 3.0], &[1.0, 2.0], DMode::Paired);
        assert!(matches!(r, Err(Error::DegenerateVariance(_))));
        let r = cohens_d(&[1.0, 1.0], &[0.0, 0.0], DMode::Pooled);
        assert!(matches!(r, Err(Error::DegenerateVariance(_))));
        let r = cohens_d(&[1.0], &[0.0, 0.0], DMode::Pooled);
        assert!(matches!(r, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn paired_t_hand_values() {
        let zero = [0.0; 3];
        let r = paired_t(&[1.0, 2.0, 3.0], &zero).unwrap();
        assert!((r.statistic - 12f64.sqrt()).abs() < 1e-14);
        assert_eq!(r.df, Df::One(2.0));
        // Reference value for t = 2√3 on 2 df.
        assert!((r.p_value - 0.074_179_900_227_448_53).abs() < 1e-12, "{}", r.p_value);

        let same = paired_t(&[1.0, 5.0], &[1.0, 5.0]).unwrap();
        assert_eq!((same.statistic, same.p_value), (0.0, 1.0));

        let sym = paired_t(&[-1.0, 1.0, -1.0, 1.0], &[0.0; 4]).unwrap();
        assert_eq!(sym.statistic, 0.0);
        assert_eq!(sym.p_value, 1.0);
    }

    #[test]
    fn anova_hand_values() {
        let r = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![3.0, 4.0, 5.0]])
            .unwrap();
        assert!((r.statistic - 3.0).abs() < 1e-14);
        assert_eq!(r.df, Df::Two(2.0, 6.0));
        assert!((r.p_value - 0.125).abs() < 1e-12);

        let equal = one_way_anova(&[vec![1.0, 3.0], vec![0.0, 4.0]]).unwrap();
        assert_eq!(equal.statistic, 0.0);
        assert_eq!(equal.p_value, 1.0);

        let flat = one_way_anova(&[vec![1.0, 1.0], vec![2.0, 2.0]]);
        assert!(matches!(flat, Err(Error::DegenerateVariance(_))));
    }

    #[test]
    fn bonferroni_clamps() {
        assert!((bonferroni(0.01, 3) - 0.03).abs() < 1e-16);
        assert_eq!(bonferroni(0.5, 3), 1.0);
        assert_eq!(bonferroni(0.2, 1), 0.2);
    }
}
