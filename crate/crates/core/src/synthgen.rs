//! Deterministic synthetic ECG records and fundus-like images for all four
//! classes, with ground truth kept alongside.
//!
//! ECG morphology is a sum of Gaussians per beat and is not physiological;
//! it only needs to exercise every stage of the pipeline.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng as _, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::{
    ecg_to_csv, encode_pgm, save_manifest, write_bytes, ClassLabel, EcgRecord, GrayImage, Label, ManifestFile,
    ManifestRecord, Split,
};
use crate::par::map_indices;
use crate::rng::{record_stream, stream, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub n_per_class: usize,
    pub seed: u64,
    pub fs: f64,
    pub duration: f64,
    pub image_size: usize,
    pub tortuosity_normal: (f64, f64),
    pub tortuosity_abnormal: (f64, f64),
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_per_class: 100,
            seed: 42,
            fs: 500.0,
            duration: 10.0,
            image_size: 256,
            tortuosity_normal: (1.0, 2.0),
            tortuosity_abnormal: (2.0, 3.5),
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(Error::param("n_per_class must be at least 1"));
        }
        if !(self.fs >= 100.0 && self.fs.is_finite()) {
            return Err(Error::param(format!("sampling rate {} Hz is too low", self.fs)));
        }
        if !(self.duration >= 2.0 && self.duration.is_finite()) {
            return Err(Error::param("duration must be at least 2 s"));
        }
        if self.image_size < 32 {
            return Err(Error::param("image_size must be at least 32"));
        }
        for (lo, hi) in [self.tortuosity_normal, self.tortuosity_abnormal] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::param(format!("invalid tortuosity range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    fn tortuosity_range(&self, label: Label) -> (f64, f64) {
        match label {
            Label::Normal => self.tortuosity_normal,
            Label::Abnormal => self.tortuosity_abnormal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EcgAnomaly {
    /// R wave 60% wider.
    WideQrs,
    /// +0.15 mV plateau between S and T.
    StElevation,
    /// RR jitter σ = 80 ms instead of 10 ms.
    IrregularRr,
}

impl EcgAnomaly {
    pub const ALL: [EcgAnomaly; 3] = [EcgAnomaly::WideQrs, EcgAnomaly::StElevation, EcgAnomaly::IrregularRr];

    pub fn as_str(self) -> &'static str {
        match self {
            EcgAnomaly::WideQrs => "wide-qrs",
            EcgAnomaly::StElevation => "st-elevation",
            EcgAnomaly::IrregularRr => "irregular-rr",
        }
    }
}

const PURPOSE_RECORD: u8 = 0;
const PURPOSE_ECG: u8 = 1;
const PURPOSE_FUNDUS: u8 = 2;
const SPLIT_STREAM: u64 = u64::MAX - 1;

const NOISE_MV: f64 = 0.02;
const RR_JITTER_S: f64 = 0.010;
const RR_JITTER_IRREGULAR_S: f64 = 0.080;
const MIN_RR_S: f64 = 0.35;
const FIRST_PEAK_S: f64 = 0.25;
const LAST_PEAK_MARGIN_S: f64 = 0.15;
const ECG_QUANTUM_MV: f64 = 1e-4;

/// (offset from R in s, amplitude in mV, σ in s)
const WAVES: [(f64, f64, f64); 5] = [
    (-0.20, 0.15, 0.025),  // P
    (-0.035, -0.12, 0.010), // Q
    (0.0, 1.0, 0.011),     // R
    (0.035, -0.25, 0.010), // S
    (0.28, 0.30, 0.045),   // T
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthEcg {
    pub record: EcgRecord,
    pub true_peaks_s: Vec<f64>,
    pub anomaly: Option<EcgAnomaly>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// ECG for a label; an abnormal record draws its anomaly from the seed.
pub fn gen_ecg(label: Label, params: &SynthParams, record_seed: u64) -> SynthEcg {
    let mut r = stream(record_seed, u64::from(PURPOSE_ECG));
    let pick = r.random_range(0..EcgAnomaly::ALL.len());
    let anomaly = match label {
        Label::Normal => None,
        Label::Abnormal => Some(EcgAnomaly::ALL[pick]),
    };
    ecg_from_stream(anomaly, params, &mut r)
}

/// ECG with a chosen anomaly (or none), otherwise drawn like [`gen_ecg`].
pub fn gen_ecg_variant(anomaly: Option<EcgAnomaly>, params: &SynthParams, record_seed: u64) -> SynthEcg {
    let mut r = stream(record_seed, u64::from(PURPOSE_ECG));
    let _ = r.random_range(0..EcgAnomaly::ALL.len());
    ecg_from_stream(anomaly, params, &mut r)
}

fn ecg_from_stream(anomaly: Option<EcgAnomaly>, params: &SynthParams, r: &mut Rng) -> SynthEcg {
    let fs = params.fs;
    let n = (params.duration * fs).round() as usize;
    let hr = r.random_range(55.0..95.0);
    let mean_rr = 60.0 / hr;
    let r_amp = r.random_range(0.8..1.4);
    let wander_amp = r.random_range(0.02..0.1);
    let wander_hz = r.random_range(0.1..0.3);
    let wander_phase = r.random_range(0.0..2.0 * PI);
    let jitter = if anomaly == Some(EcgAnomaly::IrregularRr) {
        RR_JITTER_IRREGULAR_S
    } else {
        RR_JITTER_S
    };
    let jitter = Normal::new(0.0, jitter).expect("positive σ");

    let last = params.duration - LAST_PEAK_MARGIN_S;
    let mut peaks = Vec::new();
    let mut t = FIRST_PEAK_S + r.random_range(0.0..mean_rr);
    while t <= last {
        peaks.push(t);
        t += (mean_rr + jitter.sample(r)).max(MIN_RR_S);
    }

    let mut waves = WAVES;
    for w in &mut waves {
        w.1 *= r_amp;
    }
    if anomaly == Some(EcgAnomaly::WideQrs) {
        waves[2].2 *= 1.6;
    }
    let st = anomaly == Some(EcgAnomaly::StElevation);

    let mut x = vec![0.0; n];
    for &p in &peaks {
        // each beat only touches ±0.6 s around its R wave
        let lo = (((p - 0.6) * fs).floor().max(0.0)) as usize;
        let hi = (((p + 0.6) * fs).ceil() as usize).min(n);
        for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
            let dt = i as f64 / fs - p;
            for &(off, amp, sigma) in &waves {
                let z = (dt - off) / sigma;
                *v += amp * (-0.5 * z * z).exp();
            }
            if st {
                *v += 0.15 * (logistic((dt - 0.05) / 0.008) - logistic((dt - 0.22) / 0.02));
            }
        }
    }
    let noise = Normal::new(0.0, NOISE_MV).expect("positive σ");
    for (i, v) in x.iter_mut().enumerate() {
        let t = i as f64 / fs;
        *v += wander_amp * (2.0 * PI * wander_hz * t + wander_phase).sin() + noise.sample(r);
        *v = (*v / ECG_QUANTUM_MV).round() * ECG_QUANTUM_MV;
    }
    let record = EcgRecord::new("synthetic", fs, x, None).expect("generator emits valid records");
    SynthEcg {
        record,
        true_peaks_s: peaks,
        anomaly,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFundus {
    pub image: GrayImage,
    pub tortuosity: f64,
}

struct Canvas {
    size: usize,
    vessels: Vec<f64>,
}

impl Canvas {
    /// Anti-aliased capsule from `a` to `b` with half-widths `ha`, `hb`.
    fn segment(&mut self, a: (f64, f64), b: (f64, f64), ha: f64, hb: f64) {
        let pad = ha.max(hb) + 1.0;
        let x0 = (a.0.min(b.0) - pad).floor().max(0.0) as usize;
        let y0 = (a.1.min(b.1) - pad).floor().max(0.0) as usize;
        let x1 = ((a.0.max(b.0) + pad).ceil().max(0.0) as usize).min(self.size);
        let y1 = ((a.1.max(b.1) + pad).ceil().max(0.0) as usize).min(self.size);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        for y in y0..y1 {
            for x in x0..x1 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let t = if len2 > 0.0 {
                    (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let d = (px - a.0 - t * dx).hypot(py - a.1 - t * dy);
                let h = ha + (hb - ha) * t;
                let cover = (h + 0.5 - d).clamp(0.0, 1.0);
                let cell = &mut self.vessels[y * self.size + x];
                *cell = cell.max(cover);
            }
        }
    }
}

struct Walker<'a> {
    turn_sigma: f64,
    beading: Option<(f64, f64)>,
    centre: (f64, f64),
    radius: f64,
    rng: &'a mut Rng,
}

const STEP_PX: f64 = 3.0;

impl Walker<'_> {
    fn grow(&mut self, canvas: &mut Canvas, start: (f64, f64), heading: f64, width: f64, depth: u32) {
        let turn = Normal::new(0.0, self.turn_sigma).expect("positive σ");
        let (mut pos, mut h) = (start, heading);
        let mut drift = 0.0;
        let mut arc = 0.0;
        let max_steps = (self.radius * 2.0 / STEP_PX) as usize;
        let half_width = |s: f64, beading: Option<(f64, f64)>| match beading {
            Some((lambda, phase)) => 0.5 * width * (1.0 + 0.4 * (2.0 * PI * s / lambda + phase).sin()),
            None => 0.5 * width,
        };
        for _ in 0..max_steps {
            drift = 0.9 * drift + 0.1 * turn.sample(self.rng);
            h += turn.sample(self.rng) + drift;
            let next = (pos.0 + STEP_PX * h.cos(), pos.1 + STEP_PX * h.sin());
            if (next.0 - self.centre.0).hypot(next.1 - self.centre.1) > self.radius {
                break;
            }
            let ha = half_width(arc, self.beading);
            let hb = half_width(arc + STEP_PX, self.beading);
            canvas.segment(pos, next, ha, hb);
            arc += STEP_PX;
            pos = next;
            if depth < 3 && width > 1.4 && self.rng.random_bool(0.035) {
                let side = if self.rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let angle = h + side * self.rng.random_range(0.4..0.9);
                self.grow(canvas, pos, angle, width * 0.7, depth + 1);
            }
        }
    }
}

/// Fundus-like image: dark disc, bright optic disc and a branching vessel
/// tree whose curvature follows the sampled tortuosity. Abnormal images add
/// bright microaneurysm-like blobs and beaded vessel widths.
pub fn gen_fundus(label: Label, params: &SynthParams, record_seed: u64) -> SynthFundus {
    let mut r = stream(record_seed, u64::from(PURPOSE_FUNDUS));
    let (lo, hi) = params.tortuosity_range(label);
    let tortuosity = if hi > lo { r.random_range(lo..hi) } else { lo };
    let size = params.image_size;
    let s = size as f64;
    let centre = (s / 2.0, s / 2.0);
    let radius = 0.47 * s;
    let disc = (s * r.random_range(0.28..0.34), s * r.random_range(0.45..0.55));
    let abnormal = label == Label::Abnormal;

    let mut canvas = Canvas {
        size,
        vessels: vec![0.0; size * size],
    };
    let beading = abnormal.then(|| (r.random_range(10.0..16.0), r.random_range(0.0..2.0 * PI)));
    let trunks = r.random_range(4..=6);
    for k in 0..trunks {
        let base = 2.0 * PI * k as f64 / trunks as f64;
        let heading = base + r.random_range(-0.3..0.3);
        let width = r.random_range(3.0..4.5);
        let mut walker = Walker {
            turn_sigma: 0.06 * tortuosity,
            beading,
            centre,
            radius,
            rng: &mut r,
        };
        walker.grow(&mut canvas, disc, heading, width, 0);
    }

    let blobs: Vec<(f64, f64, f64)> = if abnormal {
        let count = r.random_range(3..=8);
        (0..count)
            .map(|_| {
                let rho = radius * r.random_range(0.0f64..0.85).sqrt();
                let phi = r.random_range(0.0..2.0 * PI);
                (centre.0 + rho * phi.cos(), centre.1 + rho * phi.sin(), r.random_range(1.5..3.5))
            })
            .collect()
    } else {
        Vec::new()
    };

    let noise = Normal::new(0.0, 0.01).expect("positive σ");
    let mut pixels = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let rho = (px - centre.0).hypot(py - centre.1) / radius;
            // soft-edged fundus disc with mild vignetting
            let field = 0.18 * (1.0 - 0.35 * rho * rho) * logistic((1.0 - rho) * 40.0);
            let dd = (px - disc.0).hypot(py - disc.1) / (0.06 * s);
            let optic = 0.35 * (-0.5 * dd * dd).exp();
            let mut v = field + optic + 0.35 * canvas.vessels[y * size + x];
            for &(bx, by, br) in &blobs {
                let d2 = ((px - bx).powi(2) + (py - by).powi(2)) / (br * br);
                v += 0.45 * (-0.5 * d2).exp();
            }
            v += noise.sample(&mut r);
            pixels.push((v.clamp(0.0, 1.0) * 255.0).round() / 255.0);
        }
    }
    let image = GrayImage::new("synthetic", size, size, pixels).expect("pixels in [0,1]");
    SynthFundus { image, tortuosity }
}

/// Ground-truth sidecar stored next to each synthetic record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub true_peaks_s: Vec<f64>,
    /// Tortuosity of the OD image.
    pub tortuosity: f64,
    pub tortuosity_os: f64,
    pub anomaly_kind: String,
}

pub fn read_truth(path: &Path) -> Result<TruthSidecar> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

/// Per-record seed derived from the dataset seed and the record index.
pub fn record_seed(seed: u64, index: usize) -> u64 {
    stream(seed, record_stream(index as u64, PURPOSE_RECORD)).next_u64()
}

pub fn record_id(class: ClassLabel, k: usize) -> String {
    format!("{}-{:04}", class.as_str().to_lowercase(), k + 1)
}

/// 75/25 split within each class; at least one record per class trains.
pub fn stratified_split(params: &SynthParams, class: ClassLabel) -> Vec<Split> {
    let n = params.n_per_class;
    let n_train = ((n as f64 * 0.75).round() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = stream(params.seed, SPLIT_STREAM - class.index() as u64);
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut r);
    let mut split = vec![Split::Test; n];
    for &i in &order[..n_train] {
        split[i] = Split::Train;
    }
    split
}

struct Generated {
    id: String,
    class: ClassLabel,
    ecg: SynthEcg,
    od: SynthFundus,
    os: SynthFundus,
}

/// Writes `ecg/`, `fundus/`, `truth/` and `manifest.json` under `out`.
pub fn gen_dataset(params: &SynthParams, out: &Path) -> Result<ManifestFile> {
    params.validate()?;
    let n = params.n_per_class;
    let total = 4 * n;
    let generated = map_indices(total, |idx| {
        let class = ClassLabel::ALL[idx / n];
        let k = idx % n;
        let id = record_id(class, k);
        let seed = record_seed(params.seed, idx);
        let mut ecg = gen_ecg(class.ecg(), params, seed);
        ecg.record.id = id.clone();
        // the two eyes get independent streams of the same label
        let mut od = gen_fundus(class.fundus(), params, seed);
        let mut os = gen_fundus(class.fundus(), params, seed ^ 0x9E37_79B9_7F4A_7C15);
        od.image.id = format!("{id}_od");
        os.image.id = format!("{id}_os");
        Generated { id, class, ecg, od, os }
    });

    let splits: Vec<Vec<Split>> = ClassLabel::ALL.iter().map(|&c| stratified_split(params, c)).collect();
    let mut records = Vec::with_capacity(total);
    for (idx, g) in generated.iter().enumerate() {
        let ecg_rel = format!("ecg/{}.csv", g.id);
        let od_rel = format!("fundus/{}_od.pgm", g.id);
        let os_rel = format!("fundus/{}_os.pgm", g.id);
        let truth_rel = format!("truth/{}.json", g.id);
        write_bytes(&out.join(&ecg_rel), ecg_to_csv(&g.ecg.record).as_bytes())?;
        write_bytes(&out.join(&od_rel), &encode_pgm(&g.od.image, 255, true))?;
        write_bytes(&out.join(&os_rel), &encode_pgm(&g.os.image, 255, true))?;
        let truth = TruthSidecar {
            true_peaks_s: g.ecg.true_peaks_s.clone(),
            tortuosity: g.od.tortuosity,
            tortuosity_os: g.os.tortuosity,
            anomaly_kind: g.ecg.anomaly.map_or("none", EcgAnomaly::as_str).to_string(),
        };
        let mut text = serde_json::to_string_pretty(&truth).map_err(|e| Error::format(e.to_string()))?;
        text.push('\n');
        write_bytes(&out.join(&truth_rel), text.as_bytes())?;

        let fundus_label = g.class.fundus().as_str().to_string();
        records.push(ManifestRecord {
            id: g.id.clone(),
            ecg_path: ecg_rel,
            fundus_od_path: od_rel,
            fundus_os_path: Some(os_rel),
            ecg_label: g.class.ecg().as_str().to_string(),
            fundus_od_label: fundus_label.clone(),
            fundus_os_label: Some(fundus_label),
            split: splits[g.class.index()][idx % n].as_str().to_string(),
            truth_path: Some(truth_rel),
        });
    }
    let manifest = ManifestFile {
        seed: Some(params.seed),
        records,
    };
    save_manifest(&manifest, &out.join("manifest.json"))?;
    Ok(manifest)
}
