//! Seed-level statistics: confidence intervals, Welch t-tests and
//! Bonferroni-corrected pairwise comparisons between preference presets.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("sample `{0}` needs at least 2 values, got {1}")]
    TooFewSamples(String, usize),
    #[error("sample `{0}` contains a non-finite value")]
    NonFinite(String),
    #[error("probability {0} outside (0, 1)")]
    BadProbability(f64),
    #[error("degrees of freedom must be positive, got {0}")]
    BadDof(f64),
}

const BETA_TOL: f64 = 1e-12;
const BETA_MAX_ITER: usize = 500;

/// `ln Γ(x)` for `x > 0`, Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)`, continued fraction via modified Lentz.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < BETA_TOL {
            break;
        }
    }
    h
}

/// CDF of Student's t with `dof` degrees of freedom.
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let x = dof / (dof + t * t);
    let tail = 0.5 * regularized_incomplete_beta(dof / 2.0, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Inverse CDF of Student's t by bisection on [`student_t_cdf`].
pub fn student_t_quantile(p: f64, dof: f64) -> Result<f64, AnalysisError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(AnalysisError::BadProbability(p));
    }
    if dof.is_nan() || dof <= 0.0 {
        return Err(AnalysisError::BadDof(dof));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    while student_t_cdf(lo, dof) > p {
        lo *= 2.0;
    }
    while student_t_cdf(hi, dof) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * mid.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub var: f64,
    pub ci95: (f64, f64),
}

impl SampleSummary {
    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }
}

fn check_sample(label: &str, xs: &[f64]) -> Result<(), AnalysisError> {
    if xs.len() < 2 {
        return Err(AnalysisError::TooFewSamples(label.to_string(), xs.len()));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(AnalysisError::NonFinite(label.to_string()));
    }
    Ok(())
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Mean with a 95% t-interval `mean ± t_{0.975, n-1} · s / √n`.
pub fn summarize(label: &str, xs: &[f64]) -> Result<SampleSummary, AnalysisError> {
    check_sample(label, xs)?;
    let (mean, var) = mean_var(xs);
    let n = xs.len();
    let mut s = SampleSummary { n, mean, var, ci95: (mean, mean) };
    s.ci95 = ci95(&s)?;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub dof: f64,
    /// Two-sided.
    pub p_value: f64,
    /// Both samples have zero variance, so no t distribution applies.
    pub degenerate: bool,
}

/// Two-sided Welch t-test with Welch–Satterthwaite degrees of freedom.
///
/// If both samples are constant the test is degenerate: equal means give
/// `p = 1`, different means give `p = 0` with an infinite statistic.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchTest, AnalysisError> {
    check_sample("a", a)?;
    check_sample("b", b)?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    welch_moments((ma, va, a.len()), (mb, vb, b.len()))
}

/// [`welch_t`] from precomputed summaries.
pub fn welch_summaries(a: &SampleSummary, b: &SampleSummary) -> Result<WelchTest, AnalysisError> {
    if a.n < 2 || b.n < 2 {
        return Err(AnalysisError::TooFewSamples("summary".into(), a.n.min(b.n)));
    }
    welch_moments((a.mean, a.var, a.n), (b.mean, b.var, b.n))
}

fn welch_moments((ma, va, na): (f64, f64, usize), (mb, vb, nb): (f64, f64, usize)) -> Result<WelchTest, AnalysisError> {
    let (na, nb) = (na as f64, nb as f64);
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    let diff = ma - mb;
    if se2 == 0.0 {
        let (t, p_value) = if diff == 0.0 { (0.0, 1.0) } else { (diff.signum() * f64::INFINITY, 0.0) };
        return Ok(WelchTest { t, dof: na + nb - 2.0, p_value, degenerate: true });
    }
    let t = diff / se2.sqrt();
    let dof = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let x = dof / (dof + t * t);
    let p_value = regularized_incomplete_beta(dof / 2.0, 0.5, x).clamp(0.0, 1.0);
    Ok(WelchTest { t, dof, p_value, degenerate: false })
}

/// 95% t-interval of a summary; zero width for a constant sample.
pub fn ci95(s: &SampleSummary) -> Result<(f64, f64), AnalysisError> {
    if s.n < 2 {
        return Err(AnalysisError::TooFewSamples("summary".into(), s.n));
    }
    let half = student_t_quantile(0.975, (s.n - 1) as f64)? * (s.var / s.n as f64).sqrt();
    Ok((s.mean - half, s.mean + half))
}

/// Bonferroni-adjusted p-value for `m` comparisons.
pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub summary_a: SampleSummary,
    pub summary_b: SampleSummary,
    pub test: WelchTest,
    pub p_adjusted: f64,
    pub significant: bool,
}

impl Comparison {
    /// `Greater` when `a` is significantly above `b`; `Equal` when not significant.
    pub fn ordering(&self) -> Ordering {
        if !self.significant {
            Ordering::Equal
        } else if self.summary_a.mean > self.summary_b.mean {
            Ordering::Greater
        } else {
            Ordering::Less
        }
    }
}

/// All pairwise Welch tests between labelled samples (one value per seed),
/// Bonferroni-corrected over the number of pairs.
pub fn compare_preferences(samples: &[(String, Vec<f64>)], alpha: f64) -> Result<Vec<Comparison>, AnalysisError> {
    let mut summaries = Vec::with_capacity(samples.len());
    for (label, xs) in samples {
        summaries.push(summarize(label, xs)?);
    }
    let m = samples.len() * samples.len().saturating_sub(1) / 2;
    let mut out = Vec::with_capacity(m);
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let test = welch_t(&samples[i].1, &samples[j].1)?;
            let p_adjusted = bonferroni(test.p_value, m);
            out.push(Comparison {
                a: samples[i].0.clone(),
                b: samples[j].0.clone(),
                summary_a: summaries[i],
                summary_b: summaries[j],
                test,
                p_adjusted,
                significant: p_adjusted < alpha,
            });
        }
    }
    Ok(out)
}

/// Group labels in ascending order of sample mean (ties keep input order).
pub fn ascending_order(samples: &[(String, Vec<f64>)]) -> Vec<String> {
    let mut means: Vec<(usize, f64)> =
        samples.iter().enumerate().map(|(i, (_, xs))| (i, xs.iter().sum::<f64>() / xs.len().max(1) as f64)).collect();
    means.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    means.into_iter().map(|(i, _)| samples[i].0.clone()).collect()
}
