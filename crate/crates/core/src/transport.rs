//! Earth Mover's Distance on the line and the template-based EMD features.

use serde::{Deserialize, Serialize};

use crate::dataio::Label;
use crate::spectral::{mean_spectrum, Spectrum};
use crate::{Error, Result};

/// EMD between two distributions on the same ordered grid, via the CDF
/// closed form `Σ |F_P(i) − F_Q(i)|·Δ_i`.
pub fn emd_1d(p: &Spectrum, q: &Spectrum) -> Result<f64> {
    if !p.same_grid(q) {
        return Err(Error::param("EMD operands are on different grids"));
    }
    let c = &p.centers;
    let n = c.len();
    if n == 1 {
        return Ok(0.0);
    }
    let mut cdf_p = 0.0;
    let mut cdf_q = 0.0;
    let mut total = 0.0;
    for i in 0..n {
        cdf_p += p.weights[i];
        cdf_q += q.weights[i];
        let gap = if i + 1 < n { c[i + 1] - c[i] } else { c[n - 1] - c[n - 2] };
        total += (cdf_p - cdf_q).abs() * gap;
    }
    Ok(total)
}

/// Equal-mass points on the line.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub points: Vec<f64>,
}

impl PointSet {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::param("point set must be non-empty and finite"));
        }
        Ok(Self { points })
    }
}

/// Largest set size accepted by [`emd_bruteforce`].
pub const BRUTEFORCE_MAX: usize = 8;

/// Minimum over all bijections of the summed absolute displacement, by
/// enumerating every permutation (Heap's algorithm).
pub fn emd_bruteforce(p: &PointSet, q: &PointSet) -> Result<f64> {
    let n = p.points.len();
    if n != q.points.len() {
        return Err(Error::param("point sets differ in size"));
    }
    if n > BRUTEFORCE_MAX {
        return Err(Error::param(format!("brute force limited to {BRUTEFORCE_MAX} points")));
    }
    let cost = |perm: &[usize]| -> f64 {
        p.points
            .iter()
            .zip(perm)
            .map(|(x, &j)| (x - q.points[j]).abs())
            .sum()
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = cost(&perm);
    let mut counters = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            best = best.min(cost(&perm));
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

/// Empirical distributions of two point sets on the sorted union of their
/// support, each point carrying mass `1/n`.
pub fn empirical_pair(p: &PointSet, q: &PointSet) -> Result<(Spectrum, Spectrum)> {
    let mut grid: Vec<f64> = p.points.iter().chain(&q.points).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mass = |set: &PointSet| {
        let mut w = vec![0.0; grid.len()];
        for x in &set.points {
            let i = grid.partition_point(|g| g < x);
            w[i] += 1.0 / set.points.len() as f64;
        }
        w
    };
    let wp = mass(p);
    let wq = mass(q);
    Ok((
        crate::spectral::normalize(&wp, &grid)?,
        crate::spectral::normalize(&wq, &grid)?,
    ))
}

/// Which reference templates EMD features are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmdRefs {
    /// Normal and abnormal template per modality (four values).
    #[default]
    Both,
    /// Normal template only; the abnormal-reference slots are zero.
    NormalOnly,
}

/// Per-(modality, label) mean spectra from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateBank {
    pub ecg_normal: Spectrum,
    pub ecg_abnormal: Spectrum,
    pub fundus_normal: Spectrum,
    pub fundus_abnormal: Spectrum,
    pub built_from: Vec<String>,
    pub split: String,
}

/// One training record's spectra and labels.
#[derive(Debug, Clone, Copy)]
pub struct TemplateInput<'a> {
    pub id: &'a str,
    pub ecg_label: Label,
    pub fundus_label: Label,
    pub ecg: &'a Spectrum,
    pub fundus: &'a Spectrum,
}

/// Averages spectra per (modality, label). Callers pass training records only.
pub fn build_templates<'a>(records: impl IntoIterator<Item = TemplateInput<'a>>) -> Result<TemplateBank> {
    let mut ecg_n = Vec::new();
    let mut ecg_a = Vec::new();
    let mut fun_n = Vec::new();
    let mut fun_a = Vec::new();
    let mut built_from = Vec::new();
    for r in records {
        built_from.push(r.id.to_string());
        match r.ecg_label {
            Label::Normal => ecg_n.push(r.ecg),
            Label::Abnormal => ecg_a.push(r.ecg),
        }
        match r.fundus_label {
            Label::Normal => fun_n.push(r.fundus),
            Label::Abnormal => fun_a.push(r.fundus),
        }
    }
    let mean = |group: &[&Spectrum], name: &str| -> Result<Spectrum> {
        if group.is_empty() {
            return Err(Error::Data(format!("no training records in group {name}")));
        }
        mean_spectrum(group.iter().copied())
    };
    Ok(TemplateBank {
        ecg_normal: mean(&ecg_n, "ecg/normal")?,
        ecg_abnormal: mean(&ecg_a, "ecg/abnormal")?,
        fundus_normal: mean(&fun_n, "fundus/normal")?,
        fundus_abnormal: mean(&fun_a, "fundus/abnormal")?,
        built_from,
        split: "train".into(),
    })
}

impl TemplateBank {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::format(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bank: TemplateBank = serde_json::from_str(text).map_err(|e| Error::format(e.to_string()))?;
        for s in [&bank.ecg_normal, &bank.ecg_abnormal, &bank.fundus_normal, &bank.fundus_abnormal] {
            Spectrum::new(s.weights.clone(), s.centers.clone()).map_err(|e| Error::format(e.to_string()))?;
        }
        Ok(bank)
    }
}

/// Column names of the four EMD features, in emission order.
pub const EMD_COLUMNS: [&str; 4] = [
    "emd_ecg_normal",
    "emd_ecg_abnormal",
    "emd_fundus_normal",
    "emd_fundus_abnormal",
];

/// `[EMD(ecg, ecg_normal), EMD(ecg, ecg_abnormal), EMD(fundus, fundus_normal),
/// EMD(fundus, fundus_abnormal)]`.
pub fn emd_features(ecg: &Spectrum, fundus: &Spectrum, bank: &TemplateBank, refs: EmdRefs) -> Result<[f64; 4]> {
    let mut out = [
        emd_1d(ecg, &bank.ecg_normal)?,
        emd_1d(ecg, &bank.ecg_abnormal)?,
        emd_1d(fundus, &bank.fundus_normal)?,
        emd_1d(fundus, &bank.fundus_abnormal)?,
    ];
    if refs == EmdRefs::NormalOnly {
        out[1] = 0.0;
        out[3] = 0.0;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    fn spec(w: &[f64], c: &[f64]) -> Spectrum {
        crate::spectral::normalize(w, c).unwrap()
    }

    #[test]
    fn identity_and_single_move() {
        let p = spec(&[0.2, 0.3, 0.5], &[0.0, 0.5, 1.0]);
        assert_eq!(emd_1d(&p, &p).unwrap(), 0.0);
        let c = [0.0, 0.25, 1.0, 3.0];
        let a = Spectrum::one_hot(1, c.to_vec()).unwrap();
        let b = Spectrum::one_hot(3, c.to_vec()).unwrap();
        assert!((emd_1d(&a, &b).unwrap() - 2.75).abs() < 1e-15);
    }

    #[test]
    fn shifted_uniform_pair() {
        let p = spec(&[0.5, 0.5, 0.0], &grid(3));
        let q = spec(&[0.0, 0.5, 0.5], &grid(3));
        assert!((emd_1d(&p, &q).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let p = spec(&[1.0, 1.0], &[0.0, 1.0]);
        let q = spec(&[1.0, 1.0], &[0.0, 2.0]);
        assert!(matches!(emd_1d(&p, &q), Err(Error::Param(_))));
        let r = spec(&[1.0, 1.0, 1.0], &grid(3));
        assert!(matches!(emd_1d(&p, &r), Err(Error::Param(_))));
    }

    #[test]
    fn bruteforce_fixtures() {
        let a = PointSet::new(vec![1.0, 2.0, 3.0]).unwrap();
        let b = PointSet::new(vec![2.0, 3.0, 4.0]).unwrap();
        assert_eq!(emd_bruteforce(&a, &b).unwrap(), 3.0);
        assert_eq!(emd_bruteforce(&a, &a).unwrap(), 0.0);
        let z = PointSet::new(vec![0.0]).unwrap();
        let f = PointSet::new(vec![5.0]).unwrap();
        assert_eq!(emd_bruteforce(&z, &f).unwrap(), 5.0);
        let big = PointSet::new(vec![0.0; 9]).unwrap();
        assert!(matches!(emd_bruteforce(&big, &big), Err(Error::Param(_))));
        assert!(matches!(emd_bruteforce(&a, &z), Err(Error::Param(_))));
    }

    fn labels<'a>(ecg: Label, fundus: Label, id: &'a str, e: &'a Spectrum, f: &'a Spectrum) -> TemplateInput<'a> {
        TemplateInput {
            id,
            ecg_label: ecg,
            fundus_label: fundus,
            ecg: e,
            fundus: f,
        }
    }

    #[test]
    fn templates_from_one_hots() {
        let c = grid(4);
        let e1 = &Spectrum::one_hot(0, c.clone()).unwrap();
        let e2 = &Spectrum::one_hot(2, c.clone()).unwrap();
        let bank = build_templates([
            labels(Label::Normal, Label::Normal, "a", e1, e1),
            labels(Label::Normal, Label::Abnormal, "b", e2, e2),
            labels(Label::Abnormal, Label::Abnormal, "c", e1, e1),
        ])
        .unwrap();
        assert_eq!(bank.ecg_normal.weights, vec![0.5, 0.0, 0.5, 0.0]);
        assert_eq!(bank.ecg_abnormal, *e1);
        assert_eq!(bank.fundus_normal, *e1);
        assert_eq!(bank.fundus_abnormal.weights, vec![0.5, 0.0, 0.5, 0.0]);
        assert_eq!(bank.built_from, vec!["a", "b", "c"]);

        let f = emd_features(e1, e1, &bank, EmdRefs::Both).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-15);
        assert_eq!(f[1], 0.0);
        assert_eq!(f[2], 0.0);
        assert!((f[3] - 1.0).abs() < 1e-15);
        let g = emd_features(e2, e2, &bank, EmdRefs::NormalOnly).unwrap();
        assert_eq!(g[1], 0.0);
        assert_eq!(g[3], 0.0);
        assert!((g[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_group_named_in_error() {
        let c = grid(2);
        let e = &Spectrum::one_hot(0, c).unwrap();
        match build_templates([labels(Label::Normal, Label::Normal, "a", e, e)]) {
            Err(Error::Data(msg)) => assert!(msg.contains("ecg/abnormal")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identical_spectra_give_zero_features() {
        let s = &spec(&[1.0, 2.0, 3.0], &grid(3));
        let bank = build_templates([
            labels(Label::Normal, Label::Normal, "a", s, s),
            labels(Label::Abnormal, Label::Abnormal, "b", s, s),
            labels(Label::Abnormal, Label::Abnormal, "c", s, s),
        ])
        .unwrap();
        assert_eq!(bank.ecg_abnormal, *s);
        assert_eq!(emd_features(s, s, &bank, EmdRefs::Both).unwrap(), [0.0; 4]);
        let back = TemplateBank::from_json(&bank.to_json().unwrap()).unwrap();
        assert_eq!(back, bank);
    }

    fn arb_spectrum(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, n).prop_filter("mass", |w| w.iter().sum::<f64>() > 1e-3)
    }

    proptest! {
        #[test]
        fn metric_axioms(a in arb_spectrum(12), b in arb_spectrum(12), c in arb_spectrum(12)) {
            let g = grid(12);
            let (p, q, r) = (spec(&a, &g), spec(&b, &g), spec(&c, &g));
            let pq = emd_1d(&p, &q).unwrap();
            prop_assert!(pq >= 0.0);
            prop_assert!((pq - emd_1d(&q, &p).unwrap()).abs() < 1e-12);
            prop_assert!(emd_1d(&p, &p).unwrap() == 0.0);
            prop_assert!(pq <= emd_1d(&p, &r).unwrap() + emd_1d(&r, &q).unwrap() + 1e-9);
        }

        #[test]
        fn matches_bruteforce(
            (xs, ys) in (1usize..=7).prop_flat_map(|n| (
                proptest::collection::vec(-10.0f64..10.0, n),
                proptest::collection::vec(-10.0f64..10.0, n),
            ))
        ) {
            let p = PointSet::new(xs.clone()).unwrap();
            let q = PointSet::new(ys.clone()).unwrap();
            let (sp, sq) = empirical_pair(&p, &q).unwrap();
            let closed = emd_1d(&sp, &sq).unwrap() * xs.len() as f64;
            let brute = emd_bruteforce(&p, &q).unwrap();
            prop_assert!((closed - brute).abs() < 1e-9, "{} vs {}", closed, brute);

            let mut a = xs.clone();
            let mut b = ys.clone();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            let sorted: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
            prop_assert!((sorted - brute).abs() < 1e-9);
        }

        #[test]
        fn scale_equivariant(a in arb_spectrum(8), b in arb_spectrum(8), k in 0.01f64..100.0) {
            let g = grid(8);
            let gs: Vec<f64> = g.iter().map(|x| x * k).collect();
            let base = emd_1d(&spec(&a, &g), &spec(&b, &g)).unwrap();
            let scaled = emd_1d(&spec(&a, &gs), &spec(&b, &gs)).unwrap();
            prop_assert!((scaled - k * base).abs() <= 1e-9 * (1.0 + k * base));
        }
    }
}
