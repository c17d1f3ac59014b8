//! Evaluation statistics: concordance, error, correlation, bootstrap
//! intervals and two-sample t-tests.
//!
//! Moments are population (1/n) moments throughout. Degenerate inputs
//! (constant series, zero-variance groups) produce flagged sentinel values
//! instead of errors so that batch analyses keep going.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::seed::stream_rng;
use crate::types::RunConfig;

/// Two equal-length finite series, at least two points long.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    y_true: Vec<f64>,
    y_pred: Vec<f64>,
}

impl PairedSeries {
    pub fn new(y_true: Vec<f64>, y_pred: Vec<f64>) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::Shape {
                expected: y_true.len(),
                actual: y_pred.len(),
            });
        }
        if y_true.len() < 2 {
            return Err(Error::domain("paired series needs at least 2 points"));
        }
        if y_true.iter().chain(&y_pred).any(|v| !v.is_finite()) {
            return Err(Error::domain("paired series contains non-finite values"));
        }
        Ok(PairedSeries { y_true, y_pred })
    }

    pub fn y_true(&self) -> &[f64] {
        &self.y_true
    }

    pub fn y_pred(&self) -> &[f64] {
        &self.y_pred
    }

    pub fn len(&self) -> usize {
        self.y_true.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_true.is_empty()
    }
}

/// A correlation-type statistic; `degenerate` marks the undefined case,
/// in which `value` is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub value: f64,
    pub degenerate: bool,
}

impl Coefficient {
    fn defined(value: f64) -> Self {
        Coefficient {
            value,
            degenerate: false,
        }
    }

    fn undefined() -> Self {
        Coefficient {
            value: 0.0,
            degenerate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMethod {
    Welch,
    Paired,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub method: TestMethod,
    pub t_statistic: f64,
    pub df: f64,
    pub p_value: f64,
    pub significant: bool,
    /// Zero-variance input: t and p are not defined; reported as t = 0,
    /// df = 0, p = 1, not significant.
    pub degenerate: bool,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divides by n).
fn pop_var(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Exact constancy; variance-based checks pick up rounding noise in the mean.
fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|&x| x == xs[0])
}

fn pop_cov(xs: &[f64], mx: f64, ys: &[f64], my: f64) -> f64 {
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.len() as f64
}

/// Lin's concordance correlation coefficient.
pub fn ccc(series: &PairedSeries) -> Coefficient {
    let (x, y) = (series.y_true(), series.y_pred());
    let (mx, my) = (mean(x), mean(y));
    let (vx, vy) = (pop_var(x, mx), pop_var(y, my));
    let denom = vx + vy + (mx - my) * (mx - my);
    if is_constant(x) && is_constant(y) {
        return Coefficient::undefined();
    }
    Coefficient::defined(2.0 * pop_cov(x, mx, y, my) / denom)
}

pub fn rmse(series: &PairedSeries) -> f64 {
    let sse: f64 = series
        .y_true()
        .iter()
        .zip(series.y_pred())
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    (sse / series.len() as f64).sqrt()
}

/// Pearson correlation; undefined (flagged, 0) when either input is constant.
pub fn pcc(x: &[f64], y: &[f64]) -> Result<Coefficient> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::domain("correlation needs at least 2 points"));
    }
    let (mx, my) = (mean(x), mean(y));
    let (vx, vy) = (pop_var(x, mx), pop_var(y, my));
    if is_constant(x) || is_constant(y) {
        return Ok(Coefficient::undefined());
    }
    let r = pop_cov(x, mx, y, my) / (vx.sqrt() * vy.sqrt());
    Ok(Coefficient::defined(r.clamp(-1.0, 1.0)))
}

/// Percentile of already sorted data, linear interpolation between order
/// statistics at rank `p/100 * (n - 1)`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile bootstrap of the mean, drawing from stream `("bootstrap", stream)`
/// of the run seed.
///
/// Each resample draws `n` indices with `gen_range(0..n)` and averages the
/// picked values; the interval is read off the sorted resample means at
/// `ci_lo` / `ci_hi`. The bounds are widened to include the sample mean in
/// the rare skewed case where it falls outside them.
pub fn bootstrap_ci_stream(values: &[f64], config: &RunConfig, stream: u64) -> Result<StatSummary> {
    if values.is_empty() {
        return Err(Error::domain("bootstrap of an empty sample"));
    }
    let n = values.len();
    let m = mean(values);
    let mut rng = stream_rng(config.seed, "bootstrap", stream);
    let mut means: Vec<f64> = (0..config.bootstrap_resamples)
        .map(|_| {
            let mut sum = 0.0;
            for _ in 0..n {
                sum += values[rng.gen_range(0..n)];
            }
            sum / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&means, config.ci_lo);
    let hi = percentile_sorted(&means, config.ci_hi);
    Ok(StatSummary {
        mean: m,
        ci_lo: lo.min(m),
        ci_hi: hi.max(m),
        n,
    })
}

pub fn bootstrap_ci(values: &[f64], config: &RunConfig) -> Result<StatSummary> {
    bootstrap_ci_stream(values, config, 0)
}

fn two_tailed_p(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive and finite");
    (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0)
}

fn degenerate_outcome(method: TestMethod) -> TestOutcome {
    log::warn!("t-test on a zero-variance group; reporting as not significant");
    TestOutcome {
        method,
        t_statistic: 0.0,
        df: 0.0,
        p_value: 1.0,
        significant: false,
        degenerate: true,
    }
}

/// Welch's unequal-variance two-sample t-test, two-tailed.
pub fn t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TestOutcome> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::domain("t-test needs at least 2 values per group"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    // sample (n-1) variances for the standard error
    let va = pop_var(a, ma) * na / (na - 1.0);
    let vb = pop_var(b, mb) * nb / (nb - 1.0);
    if is_constant(a) || is_constant(b) {
        return Ok(degenerate_outcome(TestMethod::Welch));
    }
    let (sa, sb) = (va / na, vb / nb);
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = two_tailed_p(t, df);
    Ok(TestOutcome {
        method: TestMethod::Welch,
        t_statistic: t,
        df,
        p_value: p,
        significant: p < alpha,
        degenerate: false,
    })
}

/// Paired-sample t-test on matched observations, two-tailed.
pub fn paired_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TestOutcome> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::domain("paired t-test needs at least 2 pairs"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let md = mean(&diffs);
    let vd = pop_var(&diffs, md) * n / (n - 1.0);
    if is_constant(&diffs) {
        return Ok(degenerate_outcome(TestMethod::Paired));
    }
    let t = md / (vd / n).sqrt();
    let df = n - 1.0;
    let p = two_tailed_p(t, df);
    Ok(TestOutcome {
        method: TestMethod::Paired,
        t_statistic: t,
        df,
        p_value: p,
        significant: p < alpha,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(t: &[f64], p: &[f64]) -> PairedSeries {
        PairedSeries::new(t.to_vec(), p.to_vec()).unwrap()
    }

    #[test]
    fn ccc_examples() {
        let x = [0.1, 0.4, 0.35, 0.9];
        assert_eq!(ccc(&series(&x, &x)).value, 1.0);
        let c = ccc(&series(&x, &[0.5; 4]));
        assert_eq!(c.value, 0.0);
        assert!(!c.degenerate);
        // 2*(1/12) / (1/6 + 8/75 + 0)
        let c = ccc(&series(&[0.0, 0.5, 1.0], &[0.1, 0.5, 0.9]));
        assert!((c.value - 0.975_609_756_097_561).abs() < 1e-12);
    }

    #[test]
    fn ccc_both_constant_is_flagged() {
        let c = ccc(&series(&[0.3, 0.3], &[0.7, 0.7]));
        assert!(c.degenerate);
        assert_eq!(c.value, 0.0);
    }

    #[test]
    fn paired_series_validation() {
        assert!(PairedSeries::new(vec![1.0], vec![1.0]).is_err());
        assert!(PairedSeries::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(PairedSeries::new(vec![1.0, f64::NAN], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&series(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0])), 0.0);
        assert!((rmse(&series(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5])) - 0.5).abs() < 1e-15);
        assert!((rmse(&series(&[0.0, 0.0], &[3.0, 4.0])) - 12.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn pcc_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pcc(&x, &y).unwrap().value - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pcc(&x, &neg).unwrap().value + 1.0).abs() < 1e-15);
        assert!((pcc(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap().value - 0.8).abs() < 1e-12);
        let flat = pcc(&x, &[2.0; 4]).unwrap();
        assert!(flat.degenerate && flat.value == 0.0);
    }

    #[test]
    fn bootstrap_degenerate_cases() {
        let cfg = RunConfig::default();
        let s = bootstrap_ci(&[0.25; 17], &cfg).unwrap();
        assert_eq!((s.mean, s.ci_lo, s.ci_hi, s.n), (0.25, 0.25, 0.25, 17));
        let s = bootstrap_ci(&[0.7], &cfg).unwrap();
        assert_eq!((s.mean, s.ci_lo, s.ci_hi), (0.7, 0.7, 0.7));
        assert!(bootstrap_ci(&[], &cfg).is_err());
    }

    #[test]
    fn bootstrap_is_seeded() {
        let cfg = RunConfig::default();
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        assert_eq!(bootstrap_ci(&xs, &cfg).unwrap(), bootstrap_ci(&xs, &cfg).unwrap());
        let other = RunConfig { seed: 9, ..cfg.clone() };
        assert_ne!(bootstrap_ci(&xs, &cfg).unwrap(), bootstrap_ci(&xs, &other).unwrap());
    }

    #[test]
    fn percentile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile_sorted(&s, 0.0), 1.0);
        assert_eq!(percentile_sorted(&s, 100.0), 5.0);
        assert_eq!(percentile_sorted(&s, 50.0), 3.0);
        assert!((percentile_sorted(&s, 5.0) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn t_test_identical_groups() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let o = t_test(&a, &a, 0.05).unwrap();
        assert_eq!(o.t_statistic, 0.0);
        assert!((o.p_value - 1.0).abs() < 1e-12);
        assert!(!o.significant);
    }

    #[test]
    fn t_test_separated_groups() {
        let a: Vec<f64> = (0..10).map(|i| 10.0 + 0.001 * i as f64).collect();
        let b: Vec<f64> = (0..10).map(|i| 0.001 * i as f64).collect();
        let o = t_test(&a, &b, 0.05).unwrap();
        assert!(o.p_value < 1e-6);
        assert!(o.significant);
    }

    #[test]
    fn t_test_shifted_by_one() {
        let o = t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0], 0.05).unwrap();
        assert!((o.t_statistic + 1.0).abs() < 1e-12);
        assert!((o.df - 8.0).abs() < 1e-12);
        // scipy.stats.ttest_ind(..., equal_var=False).pvalue
        assert!((o.p_value - 0.346_593_507_087_3).abs() < 1e-9);
    }

    #[test]
    fn t_test_zero_variance_is_flagged() {
        let o = t_test(&[0.2, 0.2, 0.2], &[0.8, 0.8, 0.8], 0.05).unwrap();
        assert!(o.degenerate && !o.significant);
        assert!(t_test(&[1.0], &[1.0, 2.0], 0.05).is_err());
    }

    #[test]
    fn paired_t_test_basic() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.5, 2.4, 3.6, 4.3];
        let o = paired_t_test(&a, &b, 0.05).unwrap();
        assert_eq!(o.method, TestMethod::Paired);
        // scipy.stats.ttest_rel
        assert!((o.t_statistic + 6.971_370_023_173_344).abs() < 1e-9);
        assert!((o.p_value - 0.006_056_848_795_908_41).abs() < 1e-9);
        assert_eq!(o.df, 3.0);
        assert!(paired_t_test(&a, &b[..3], 0.05).is_err());
    }

    proptest! {
        #[test]
        fn ccc_symmetric_and_bounded_by_pcc(
            pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40)
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let r = pcc(&x, &y).unwrap();
            prop_assume!(!r.degenerate);
            let c1 = ccc(&series(&x, &y)).value;
            let c2 = ccc(&series(&y, &x)).value;
            prop_assert!((c1 - c2).abs() < 1e-12);
            prop_assert!(c1.abs() <= r.value.abs() + 1e-12);
        }

        #[test]
        fn shared_affine_map_preserves_ccc_and_pcc(
            pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40),
            scale in 0.1f64..10.0,
            shift in -10.0f64..10.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            prop_assume!(!pcc(&x, &y).unwrap().degenerate);
            let f = |v: &Vec<f64>| v.iter().map(|a| scale * a + shift).collect::<Vec<_>>();
            let (fx, fy) = (f(&x), f(&y));
            prop_assert!((ccc(&series(&x, &y)).value - ccc(&series(&fx, &fy)).value).abs() < 1e-9);
            prop_assert!((pcc(&x, &y).unwrap().value - pcc(&fx, &fy).unwrap().value).abs() < 1e-9);
        }

        #[test]
        fn rmse_zero_iff_equal(
            x in proptest::collection::vec(-5.0f64..5.0, 2..20),
            k in 0usize..20, d in 0.001f64..1.0,
        ) {
            prop_assert_eq!(rmse(&series(&x, &x)), 0.0);
            let mut y = x.clone();
            let k = k % y.len();
            y[k] += d;
            prop_assert!(rmse(&series(&x, &y)) > 0.0);
        }

        #[test]
        fn bootstrap_bounds_bracket_mean(xs in proptest::collection::vec(-3.0f64..3.0, 1..30), seed in 0u64..100) {
            let cfg = RunConfig { seed, bootstrap_resamples: 200, ..RunConfig::default() };
            let s = bootstrap_ci(&xs, &cfg).unwrap();
            prop_assert!(s.ci_lo <= s.mean && s.mean <= s.ci_hi);
        }
    }
}
