//! Four-class evaluation metrics and one-way ANOVA with exact F p-values.

use serde::Serialize;

use crate::dataio::ClassLabel;
use crate::{Error, Result};

pub const SIGNIFICANCE: f64 = 0.05;

/// Rows are true classes, columns predictions, both in C1..C4 order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    /// Fraction of samples on the diagonal.
    pub fn overall_accuracy(&self) -> Option<f64> {
        ratio(self.correct(), self.total())
    }
}

pub fn confusion(preds: &[ClassLabel], truths: &[ClassLabel]) -> Result<ConfusionMatrix> {
    if preds.len() != truths.len() {
        return Err(Error::param(format!(
            "{} predictions for {} ground-truth labels",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::param("no samples to evaluate"));
    }
    let mut cm = ConfusionMatrix::default();
    for (p, t) in preds.iter().zip(truths) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

/// One-vs-rest counts and rates. A rate is `None` when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: ClassLabel,
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn one_vs_rest_metrics(cm: &ConfusionMatrix, class: ClassLabel) -> ClassMetrics {
    let k = class.index();
    let n = cm.total();
    let tp = cm.counts[k][k];
    let fn_: u64 = cm.counts[k].iter().sum::<u64>() - tp;
    let fp: u64 = (0..4).map(|i| cm.counts[i][k]).sum::<u64>() - tp;
    let tn = n - tp - fn_ - fp;
    ClassMetrics {
        class,
        tp,
        tn,
        fp,
        fn_,
        accuracy: ratio(tp + tn, n),
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
    }
}

pub fn all_class_metrics(cm: &ConfusionMatrix) -> [ClassMetrics; 4] {
    ClassLabel::ALL.map(|c| one_vs_rest_metrics(cm, c))
}

/// Unweighted mean over classes of each defined metric.
pub fn macro_average(metrics: &[ClassMetrics]) -> (Option<f64>, Option<f64>, Option<f64>) {
    fn mean(vals: impl Iterator<Item = Option<f64>>) -> Option<f64> {
        let defined: Vec<f64> = vals.flatten().collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }
    (
        mean(metrics.iter().map(|m| m.accuracy)),
        mean(metrics.iter().map(|m| m.sensitivity)),
        mean(metrics.iter().map(|m| m.specificity)),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaResult {
    pub feature_name: String,
    pub f_stat: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub significant: bool,
}

pub fn anova_f(feature_name: &str, groups: &[Vec<f64>]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(Error::param(format!("{feature_name}: ANOVA needs at least 2 groups")));
    }
    if let Some(g) = groups.iter().position(|g| g.len() < 2) {
        return Err(Error::param(format!(
            "{feature_name}: group {} has {} samples, need at least 2",
            g + 1,
            groups[g].len()
        )));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::param(format!("{feature_name}: non-finite sample")));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let ssb: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let ssw: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    // exact zero within-group spread, or spread lost to rounding
    let scale = groups.iter().flatten().map(|v| v * v).sum::<f64>();
    if ssw <= scale * 1e-28 {
        return Err(Error::Degenerate(format!(
            "{feature_name}: zero within-group variance, F is infinite"
        )));
    }
    let f_stat = (ssb / df_between as f64) / (ssw / df_within as f64);
    let p_value = f_sf(f_stat, df_between as f64, df_within as f64);
    Ok(AnovaResult {
        feature_name: feature_name.to_string(),
        f_stat,
        p_value,
        df_between,
        df_within,
        significant: p_value < SIGNIFICANCE,
    })
}

/// Upper tail probability of the F(d1, d2) distribution.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    let x = d2 / (d2 + d1 * f);
    reg_inc_beta(x, d2 / 2.0, d1 / 2.0)
}

/// Natural log of the gamma function (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
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
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta I_x(a, b).
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x > (a + 1.0) / (a + b + 2.0) {
        1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a) / b
    } else {
        ln_front.exp() * beta_cf(x, a, b) / a
    }
}

/// Continued fraction for the incomplete beta, modified Lentz.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
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

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile with linear interpolation at position (n−1)·p of the sorted values.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Five-number summary using [`quantile_sorted`]. Fails on empty or non-finite input.
pub fn five_number(values: &[f64]) -> Result<FiveNumber> {
    if values.is_empty() {
        return Err(Error::param("empty group for quartile summary"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("non-finite value in quartile summary"));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(FiveNumber {
        min: s[0],
        q1: quantile_sorted(&s, 0.25),
        median: quantile_sorted(&s, 0.5),
        q3: quantile_sorted(&s, 0.75),
        max: s[s.len() - 1],
    })
}

pub fn quartile_summary<'a>(
    groups: impl IntoIterator<Item = (ClassLabel, &'a [f64])>,
) -> Result<Vec<(ClassLabel, FiveNumber)>> {
    groups
        .into_iter()
        .map(|(c, v)| {
            five_number(v)
                .map(|f| (c, f))
                .map_err(|e| Error::param(format!("class {c}: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ClassLabel::*;

    fn cm_from(tp: u64, fn_: u64, fp: u64, tn: u64) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::default();
        cm.counts[0][0] = tp;
        cm.counts[0][1] = fn_;
        cm.counts[1][0] = fp;
        cm.counts[1][1] = tn;
        cm
    }

    #[test]
    fn confusion_basics() {
        let cm = confusion(&[C1, C2, C3, C4], &[C1, C2, C3, C4]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(cm.counts[i][j], u64::from(i == j));
            }
        }
        let cm = confusion(&[C2], &[C1]).unwrap();
        assert_eq!(cm.counts[0][1], 1);
        assert!(matches!(confusion(&[C1], &[]), Err(Error::Param(_))));
    }

    #[test]
    fn metrics_hand_example() {
        let m = one_vs_rest_metrics(&cm_from(8, 2, 4, 6), C1);
        assert_eq!((m.tp, m.fn_, m.fp, m.tn), (8, 2, 4, 6));
        assert!((m.accuracy.unwrap() - 0.70).abs() < 1e-15);
        assert!((m.sensitivity.unwrap() - 0.80).abs() < 1e-15);
        assert!((m.specificity.unwrap() - 0.60).abs() < 1e-15);
    }

    #[test]
    fn metrics_perfect_and_undefined() {
        let cm = confusion(&[C1, C2, C3, C4, C1], &[C1, C2, C3, C4, C1]).unwrap();
        for m in all_class_metrics(&cm) {
            assert_eq!(m.accuracy, Some(1.0));
            assert_eq!(m.sensitivity, Some(1.0));
            assert_eq!(m.specificity, Some(1.0));
        }
        let cm = confusion(&[C1, C2], &[C1, C1]).unwrap();
        let m = one_vs_rest_metrics(&cm, C3);
        assert_eq!(m.sensitivity, None);
        assert_eq!(m.specificity, Some(1.0));
    }

    #[test]
    fn anova_fixtures() {
        let r = anova_f("x", &[vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap();
        assert_eq!(r.f_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
        let groups = vec![
            vec![1.0, 2.0, 3.0],
            vec![2.0, 3.0, 4.0],
            vec![3.0, 4.0, 5.0],
            vec![4.0, 5.0, 6.0],
        ];
        let r = anova_f("x", &groups).unwrap();
        assert!((r.f_stat - 5.0).abs() < 1e-9);
        assert_eq!((r.df_between, r.df_within), (3, 8));
        assert!(r.p_value > 0.025 && r.p_value < 0.05);
        assert!(r.significant);
        assert!(matches!(
            anova_f("x", &[vec![2.0, 2.0], vec![2.0, 2.0]]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(anova_f("x", &[vec![2.0], vec![1.0, 2.0]]), Err(Error::Param(_))));
        assert!(matches!(anova_f("x", &[vec![2.0, 1.0]]), Err(Error::Param(_))));
    }

    #[test]
    fn f_sf_limits() {
        assert_eq!(f_sf(0.0, 3.0, 8.0), 1.0);
        assert!(f_sf(1e9, 3.0, 8.0) < 1e-9);
        assert!(f_sf(1e9, 1.0, 1.0) < 1e-4);
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    /// Adaptive Simpson quadrature.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                return left + right + delta / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    /// F CDF from the unnormalized density, normalized by its own integral.
    /// Substituting t = s² removes the t^(d1/2−1) singularity at zero; the
    /// tail is mapped onto [0, 1) by s = v/(1−v).
    fn f_cdf_oracle(f: f64, d1: f64, d2: f64) -> f64 {
        let kernel = |s: f64| {
            if s == 0.0 {
                return if d1 == 1.0 { 2.0 } else { 0.0 };
            }
            let t = s * s;
            2.0 * s.powf(d1 - 1.0) * (1.0 + d1 * t / d2).powf(-(d1 + d2) / 2.0)
        };
        let mapped = |v: f64| {
            if v >= 1.0 {
                return 0.0;
            }
            let s = v / (1.0 - v);
            kernel(s) / ((1.0 - v) * (1.0 - v))
        };
        let v_of = |s: f64| s / (1.0 + s);
        let sf = f.sqrt();
        let head = simpson(&mapped, 0.0, v_of(sf), 1e-13);
        let tail = simpson(&mapped, v_of(sf), 1.0, 1e-13);
        head / (head + tail)
    }

    #[test]
    fn f_sf_matches_integration_oracle() {
        for &(d1, d2) in &[(1.0, 1.0), (1.0, 10.0), (2.0, 5.0), (3.0, 8.0), (3.0, 396.0), (5.0, 2.0), (10.0, 30.0)] {
            for &f in &[0.1, 0.5, 1.0, 2.0, 5.0, 8.12, 20.0] {
                let p = f_sf(f, d1, d2);
                let cdf = f_cdf_oracle(f, d1, d2);
                assert!((p + cdf - 1.0).abs() < 1e-9, "F={f} d1={d1} d2={d2}: sf {p} cdf {cdf}");
            }
        }
        let p = f_sf(5.0, 3.0, 8.0);
        assert!((p - (1.0 - f_cdf_oracle(5.0, 3.0, 8.0))).abs() < 1e-9);
    }

    #[test]
    fn quartiles() {
        let f = five_number(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!((f.min, f.q1, f.median, f.q3, f.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let f = five_number(&[7.5]).unwrap();
        assert!([f.min, f.q1, f.median, f.q3, f.max].iter().all(|v| *v == 7.5));
        let f = five_number(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((f.q1, f.median, f.q3), (1.75, 2.5, 3.25));
        assert!(five_number(&[]).is_err());
    }

    fn arb_labels(n: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
        proptest::collection::vec((0usize..4, 0usize..4), 1..n)
    }

    proptest! {
        #[test]
        fn metric_identities(pairs in arb_labels(60)) {
            let preds: Vec<_> = pairs.iter().map(|p| ClassLabel::from_index(p.0).unwrap()).collect();
            let truths: Vec<_> = pairs.iter().map(|p| ClassLabel::from_index(p.1).unwrap()).collect();
            let cm = confusion(&preds, &truths).unwrap();
            prop_assert_eq!(cm.total() as usize, pairs.len());
            for m in all_class_metrics(&cm) {
                prop_assert_eq!(m.tp + m.tn + m.fp + m.fn_, cm.total());
                prop_assert_eq!(m.accuracy.unwrap(), (m.tp + m.tn) as f64 / cm.total() as f64);
                if let Some(s) = m.sensitivity {
                    prop_assert!((s + m.fn_ as f64 / (m.tp + m.fn_) as f64 - 1.0).abs() < 1e-15);
                }
            }
            let mut rev_p = preds.clone();
            let mut rev_t = truths.clone();
            rev_p.reverse();
            rev_t.reverse();
            prop_assert_eq!(confusion(&rev_p, &rev_t).unwrap(), cm);
        }

        #[test]
        fn anova_shift_and_scale_invariant(
            groups in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 2..8), 2..5),
            shift in -100.0f64..100.0,
            scale in 0.1f64..10.0,
        ) {
            let base = match anova_f("x", &groups) { Ok(r) => r, Err(_) => return Ok(()) };
            prop_assume!(base.f_stat < 1e6);
            let moved: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|v| (v + shift) * scale).collect()).collect();
            let r = anova_f("x", &moved).unwrap();
            prop_assert!((r.f_stat - base.f_stat).abs() <= 1e-6 * base.f_stat.max(1.0));
        }

        #[test]
        fn f_sf_monotone(d1 in 1u32..20, d2 in 1u32..100, a in 0.0f64..30.0, b in 0.0f64..30.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let plo = f_sf(lo, d1 as f64, d2 as f64);
            let phi = f_sf(hi, d1 as f64, d2 as f64);
            prop_assert!(phi <= plo + 1e-12);
            prop_assert!((0.0..=1.0).contains(&plo));
        }

        #[test]
        fn quartiles_ordered(xs in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
            let f = five_number(&xs).unwrap();
            prop_assert!(f.min <= f.q1 && f.q1 <= f.median && f.median <= f.q3 && f.q3 <= f.max);
        }
    }
}
