//! Two-sample and paired t-tests, Pearson correlation and Student-t tail
//! probabilities. Sample variances use the n−1 denominator.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub statistic: f64,
    pub degrees_of_freedom: f64,
    /// Two-sided.
    pub p_value: f64,
}

pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::SampleTooSmall { needed: 1, got: 0 });
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Unbiased sample variance (two-pass).
pub fn sample_variance(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::SampleTooSmall {
            needed: 2,
            got: xs.len(),
        });
    }
    let m = mean(xs)?;
    Ok(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64)
}

pub fn sample_sd(xs: &[f64]) -> Result<f64> {
    sample_variance(xs).map(f64::sqrt)
}

/// Two-sided p-value of a Student t statistic, from the regularized
/// incomplete beta function: p = I_{df/(df+t²)}(df/2, 1/2).
pub fn t_p_value(t: f64, df: f64) -> Result<f64> {
    if !(df > 0.0) || !df.is_finite() {
        return Err(Error::Domain(format!("degrees of freedom must be > 0, got {df}")));
    }
    if t.is_nan() {
        return Err(Error::Domain("t statistic is NaN".into()));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    let x = df / (df + t * t);
    Ok(beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0))
}

/// Welch's unequal-variance two-sample t-test with Welch–Satterthwaite
/// degrees of freedom.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<StatResult> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::SampleTooSmall {
                needed: 2,
                got: s.len(),
            });
        }
    }
    welch_t_from_summary(
        mean(a)?,
        sample_sd(a)?,
        a.len(),
        mean(b)?,
        sample_sd(b)?,
        b.len(),
    )
}

/// Welch's test from published summary statistics (mean, sd, n) only.
pub fn welch_t_from_summary(
    mean_a: f64,
    sd_a: f64,
    n_a: usize,
    mean_b: f64,
    sd_b: f64,
    n_b: usize,
) -> Result<StatResult> {
    for n in [n_a, n_b] {
        if n < 2 {
            return Err(Error::SampleTooSmall { needed: 2, got: n });
        }
    }
    let va = sd_a * sd_a / n_a as f64;
    let vb = sd_b * sd_b / n_b as f64;
    let se2 = va + vb;
    if se2 == 0.0 {
        if mean_a == mean_b {
            // identical constant samples: no evidence of any difference
            return Ok(StatResult {
                statistic: 0.0,
                degrees_of_freedom: (n_a + n_b - 2) as f64,
                p_value: 1.0,
            });
        }
        return Err(Error::ZeroVariance(
            "both samples are constant but differ in mean".into(),
        ));
    }
    let t = (mean_a - mean_b) / se2.sqrt();
    let df = se2 * se2
        / (va * va / (n_a - 1) as f64 + vb * vb / (n_b - 1) as f64);
    Ok(StatResult {
        statistic: t,
        degrees_of_freedom: df,
        p_value: t_p_value(t, df)?,
    })
}

/// Classical pooled-variance two-sample t-test.
pub fn pooled_t(a: &[f64], b: &[f64]) -> Result<StatResult> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::SampleTooSmall {
                needed: 2,
                got: s.len(),
            });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let sp2 = ((na - 1.0) * sample_variance(a)? + (nb - 1.0) * sample_variance(b)?) / df;
    if sp2 == 0.0 {
        return Err(Error::ZeroVariance("pooled variance is zero".into()));
    }
    let t = (mean(a)? - mean(b)?) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(StatResult {
        statistic: t,
        degrees_of_freedom: df,
        p_value: t_p_value(t, df)?,
    })
}

/// One-sample t-test of paired differences against zero.
pub fn paired_t(diffs: &[f64]) -> Result<StatResult> {
    if diffs.len() < 2 {
        return Err(Error::SampleTooSmall {
            needed: 2,
            got: diffs.len(),
        });
    }
    let var = sample_variance(diffs)?;
    if var == 0.0 {
        return Err(Error::ZeroVariance("paired differences are constant".into()));
    }
    let n = diffs.len() as f64;
    let t = mean(diffs)? / (var / n).sqrt();
    let df = n - 1.0;
    Ok(StatResult {
        statistic: t,
        degrees_of_freedom: df,
        p_value: t_p_value(t, df)?,
    })
}

/// Differences `a[i] - b[i]` of two paired samples.
pub fn paired_differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Product-moment correlation from centred sums.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Domain(format!(
            "samples differ in length: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::SampleTooSmall {
            needed: 3,
            got: xs.len(),
        });
    }
    let (mx, my) = (mean(xs)?, mean(ys)?);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "one of the samples is constant".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
