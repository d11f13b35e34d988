//! Two-cohort feature statistics: descriptive summaries, boxplot data and
//! unpaired t-tests with exact Student-t tail probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphometrics::FeatureVector;
use crate::shaperegress::{mean_shape, LandmarkSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestVariant {
    /// Unequal variances, Welch–Satterthwaite degrees of freedom.
    #[default]
    Welch,
    /// Pooled variance, `n_a + n_b − 2` degrees of freedom.
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Natural log of the gamma function for `x > 0` (Lanczos series, g = 607/128).
#[allow(clippy::excessive_precision)]
pub fn ln_gamma(x: f64) -> f64 {
    const COF: [f64; 14] = [
        57.156_235_665_862_923_5,
        -59.597_960_355_475_491_2,
        14.136_097_974_741_747_1,
        -0.491_913_816_097_620_199_8,
        0.339_946_499_848_118_886_99e-4,
        0.465_236_289_270_485_756_65e-4,
        -0.983_744_753_048_795_646_77e-4,
        0.158_088_703_224_912_488_84e-3,
        -0.210_264_441_724_104_883_19e-3,
        0.217_439_618_115_212_643_20e-3,
        -0.164_318_106_536_763_890_22e-3,
        0.844_182_239_838_527_432_93e-4,
        -0.261_908_384_015_814_086_70e-4,
        0.368_991_826_595_316_227_04e-5,
    ];
    let tmp = x + 5.242_187_5;
    let tmp = (x + 0.5) * tmp.ln() - tmp;
    let mut ser = 0.999_999_999_999_997_092;
    let mut y = x;
    for c in COF {
        y += 1.0;
        ser += c / y;
    }
    tmp + (2.506_628_274_631_000_5 * ser / x).ln()
}

/// Regularized incomplete beta `I_x(a, b)`; `y` must equal `1 − x` and is
/// passed separately so callers can supply it without cancellation.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * y.ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, y) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
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
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Two-sided tail probability `P(|T| ≥ |t|)` for Student's t with `df`
/// degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() || !(df > 0.0) {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let t2 = t * t;
    let denom = df + t2;
    regularized_incomplete_beta(df / 2.0, 0.5, df / denom, t2 / denom).clamp(0.0, 1.0)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    t_test(a, b, TTestVariant::Welch)
}

pub fn t_test(a: &[f64], b: &[f64], variant: TTestVariant) -> Result<TTest> {
    for x in [a, b] {
        if x.len() < 2 {
            return Err(Error::InsufficientSample(x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sample contains a non-finite value".into()));
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (se2, df) = match variant {
        TTestVariant::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            (se2, se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0)))
        }
        TTestVariant::Student => {
            let df = na + nb - 2.0;
            let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            (pooled * (1.0 / na + 1.0 / nb), df)
        }
    };
    if se2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let t = (ma - mb) / se2.sqrt();
    Ok(TTest {
        t,
        df,
        p: student_t_two_sided_p(t, df),
    })
}

/// Boxplot statistics with linearly interpolated quartiles and
/// 1.5·IQR whiskers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Quantile of sorted data at probability `p`, interpolating between order
/// statistics at position `(n − 1)·p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn boxplot_summary(x: &[f64]) -> Result<BoxplotSummary> {
    if x.is_empty() {
        return Err(Error::InsufficientData("boxplot of an empty sample".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("sample contains a non-finite value".into()));
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, median, q3) = (
        quantile_sorted(&s, 0.25),
        quantile_sorted(&s, 0.5),
        quantile_sorted(&s, 0.75),
    );
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || s.iter().copied().filter(|v| (lo..=hi).contains(v));
    Ok(BoxplotSummary {
        min: s[0],
        q1,
        median,
        q3,
        max: s[s.len() - 1],
        whisker_low: inside().next().unwrap_or(q1),
        whisker_high: inside().next_back().unwrap_or(q3),
        outliers: s.iter().copied().filter(|v| !(lo..=hi).contains(v)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub label: String,
    pub feature_rows: Vec<FeatureVector>,
    /// Landmark shapes for the mean-face output; may be empty.
    pub shapes: Vec<LandmarkSet>,
}

impl Cohort {
    pub fn new(label: impl Into<String>, feature_rows: Vec<FeatureVector>) -> Self {
        Cohort {
            label: label.into(),
            feature_rows,
            shapes: Vec::new(),
        }
    }

    pub fn column(&self, feature: usize) -> Vec<f64> {
        self.feature_rows.iter().map(|r| r.to_array()[feature]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub boxplot: BoxplotSummary,
}

impl FeatureSummary {
    fn of(x: &[f64]) -> Result<Self> {
        let boxplot = boxplot_summary(x)?;
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 { mean_var(x).1.sqrt() } else { 0.0 };
        Ok(FeatureSummary { n, mean, sd, boxplot })
    }
}

/// One feature row of the report. A failed test keeps its error message and
/// leaves `test` empty; the other rows are unaffected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureComparison {
    pub feature: String,
    pub a: Option<FeatureSummary>,
    pub b: Option<FeatureSummary>,
    pub test: Option<TTest>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub label_a: String,
    pub label_b: String,
    pub variant: TTestVariant,
    pub features: Vec<FeatureComparison>,
    /// Mean shapes of the two cohorts when both supplied shapes.
    pub mean_faces: Option<(LandmarkSet, LandmarkSet)>,
}

pub fn compare_cohorts(a: &Cohort, b: &Cohort, variant: TTestVariant) -> Result<CohortReport> {
    for c in [a, b] {
        if c.feature_rows.len() < 2 {
            return Err(Error::CohortTooSmall {
                label: c.label.clone(),
                count: c.feature_rows.len(),
            });
        }
    }
    let features = FeatureVector::NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let (xa, xb) = (a.column(i), b.column(i));
            let (sa, sb) = (FeatureSummary::of(&xa), FeatureSummary::of(&xb));
            let test = t_test(&xa, &xb, variant);
            let error = [sa.as_ref().err(), sb.as_ref().err(), test.as_ref().err()]
                .into_iter()
                .flatten()
                .next()
                .map(|e| e.to_string());
            FeatureComparison {
                feature: name.to_string(),
                a: sa.ok(),
                b: sb.ok(),
                test: test.ok(),
                error,
            }
        })
        .collect();
    let mean_faces = if a.shapes.is_empty() || b.shapes.is_empty() {
        None
    } else {
        Some((mean_shape(&a.shapes)?, mean_shape(&b.shapes)?))
    };
    Ok(CohortReport {
        label_a: a.label.clone(),
        label_b: b.label.clone(),
        variant,
        features,
        mean_faces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use statrs::function::beta::beta_reg;

    fn oracle_p(t: f64, df: f64) -> f64 {
        let d = StudentsT::new(0.0, 1.0, df).unwrap();
        2.0 * d.cdf(-t.abs())
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(11.0) - 3_628_800f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn small_example_matches_reference() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 3.0, 4.0, 5.0, 6.0];
        let r = welch_t_test(&a, &b).unwrap();
        // Equal variances 2.5: se = 1, df = 8.
        assert!((r.t + 1.0).abs() < 1e-14);
        assert!((r.df - 8.0).abs() < 1e-12);
        assert!((r.p - oracle_p(-1.0, 8.0)).abs() < 1e-10);
        assert!((r.p - 0.346_593_507_087_003_7).abs() < 1e-10);
    }

    #[test]
    fn identical_samples() {
        let a = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0];
        let r = welch_t_test(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn error_cases() {
        assert!(matches!(welch_t_test(&[1.0, 1.0], &[1.0, 1.0]), Err(Error::ZeroVariance)));
        assert!(matches!(welch_t_test(&[1.0], &[1.0, 2.0]), Err(Error::InsufficientSample(1))));
    }

    #[test]
    fn ten_sd_shift_is_extremely_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, 1.0).unwrap();
        let a: Vec<f64> = (0..30).map(|_| n.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..30).map(|_| n.sample(&mut rng) + 10.0).collect();
        let r = welch_t_test(&a, &b).unwrap();
        assert!(r.p < 1e-12, "{}", r.p);
    }

    #[test]
    fn student_variant_uses_pooled_df() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 9.0];
        let r = t_test(&a, &b, TTestVariant::Student).unwrap();
        assert_eq!(r.df, 5.0);
        let pooled: f64 = (3.0 * (5.0 / 3.0) + 2.0 * 13.0) / 5.0;
        let t = (2.5 - 5.0) / (pooled * (1.0 / 4.0 + 1.0 / 3.0)).sqrt();
        assert!((r.t - t).abs() < 1e-12);
        assert!((r.p - oracle_p(t, 5.0)).abs() < 1e-10);
    }

    #[test]
    fn boxplot_examples() {
        let s: Vec<f64> = (1..=9).map(f64::from).collect();
        let b = boxplot_summary(&s).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (3.0, 5.0, 7.0));
        assert!(b.outliers.is_empty());
        assert_eq!((b.whisker_low, b.whisker_high), (1.0, 9.0));

        let c = boxplot_summary(&[4.0; 5]).unwrap();
        assert_eq!([c.min, c.q1, c.median, c.q3, c.max], [4.0; 5]);
        assert!(c.outliers.is_empty());

        let o = boxplot_summary(&[1.0, 2.0, 3.0, 100.0]).unwrap();
        assert_eq!((o.q1, o.q3), (1.75, 27.25));
        assert_eq!(o.outliers, vec![100.0]);
        assert!(boxplot_summary(&[]).is_err());
    }

    #[test]
    fn self_comparison_gives_unit_p_values() {
        let rows: Vec<FeatureVector> = (0..5)
            .map(|i| {
                let v = i as f64;
                FeatureVector::from_array([0.1 + v, 0.2 * v, 1.0 - v, 60.0 + v, 0.01 * v, 0.3 + v])
            })
            .collect();
        let c = Cohort::new("x", rows);
        let r = compare_cohorts(&c, &c, TTestVariant::Welch).unwrap();
        assert_eq!(r.features.len(), 6);
        for f in &r.features {
            assert_eq!(f.test.unwrap().p, 1.0);
        }
        assert!(r.mean_faces.is_none());
    }

    #[test]
    fn failing_feature_keeps_the_others() {
        let rows: Vec<FeatureVector> = (0..4)
            .map(|i| FeatureVector::from_array([1.0, i as f64, 2.0, 3.0, 4.0, 5.0 + i as f64]))
            .collect();
        let c = Cohort::new("a", rows);
        let r = compare_cohorts(&c, &c, TTestVariant::Welch).unwrap();
        assert!(r.features[0].test.is_none());
        assert_eq!(r.features[0].error.as_deref(), Some("zero variance"));
        assert!(r.features[1].test.is_some());
    }

    #[test]
    fn tiny_cohort_is_rejected() {
        let a = Cohort::new("a", vec![FeatureVector::from_array([1.0; 6])]);
        assert!(matches!(
            compare_cohorts(&a, &a, TTestVariant::Welch),
            Err(Error::CohortTooSmall { count: 1, .. })
        ));
    }

    #[test]
    fn null_cohorts_reject_at_nominal_rate() {
        let n = Normal::new(5.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 2000;
        let mut below = 0;
        let mut below_half = 0;
        for _ in 0..trials {
            let a: Vec<f64> = (0..71).map(|_| n.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..55).map(|_| n.sample(&mut rng)).collect();
            let p = welch_t_test(&a, &b).unwrap().p;
            below += (p < 0.05) as usize;
            below_half += (p < 0.5) as usize;
        }
        let rate = below as f64 / trials as f64;
        let half = below_half as f64 / trials as f64;
        assert!((0.035..0.065).contains(&rate), "{rate}");
        assert!((0.46..0.54).contains(&half), "{half}");
    }

    proptest! {
        #[test]
        fn p_matches_incomplete_beta_oracle(t in -50.0..50.0f64, df in 1.0..500.0f64) {
            let x = df / (df + t * t);
            let oracle = beta_reg(df / 2.0, 0.5, x);
            prop_assert!((student_t_two_sided_p(t, df) - oracle).abs() <= 1e-10);
        }

        #[test]
        fn swap_negates_t_and_keeps_p(
            a in prop::collection::vec(-100.0..100.0f64, 2..30),
            b in prop::collection::vec(-100.0..100.0f64, 2..30),
        ) {
            let (Ok(x), Ok(y)) = (welch_t_test(&a, &b), welch_t_test(&b, &a)) else {
                return Ok(());
            };
            prop_assert_eq!(x.t, -y.t);
            prop_assert_eq!(x.p, y.p);
            prop_assert!((0.0..=1.0).contains(&x.p));
        }

        #[test]
        fn shift_and_scale_leave_t_and_p(
            a in prop::collection::vec(-10.0..10.0f64, 3..20),
            b in prop::collection::vec(-10.0..10.0f64, 3..20),
            shift in -100.0..100.0f64,
            scale in 0.01..100.0f64,
        ) {
            let Ok(r) = welch_t_test(&a, &b) else { return Ok(()); };
            prop_assume!(r.t.abs() < 1e6);
            let f = |x: &[f64]| x.iter().map(|v| v * scale + shift).collect::<Vec<_>>();
            let s = welch_t_test(&f(&a), &f(&b)).unwrap();
            prop_assert!((s.t - r.t).abs() <= 1e-10 * (1.0 + r.t.abs()));
            prop_assert!((s.p - r.p).abs() <= 1e-10);
        }

        #[test]
        fn boxplot_partitions_sample(x in prop::collection::vec(-1e3..1e3f64, 1..60)) {
            let b = boxplot_summary(&x).unwrap();
            prop_assert!(b.min <= b.q1 && b.q1 <= b.median && b.median <= b.q3 && b.q3 <= b.max);
            let lo = b.q1 - 1.5 * (b.q3 - b.q1);
            let hi = b.q3 + 1.5 * (b.q3 - b.q1);
            let inside = x.iter().filter(|v| (lo..=hi).contains(*v)).count();
            prop_assert_eq!(inside + b.outliers.len(), x.len());
            prop_assert!(b.whisker_low >= lo && b.whisker_high <= hi);
        }
    }
}
