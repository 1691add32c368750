//! ECG preprocessing: FIR bandpass, R-peak detection, beat segmentation and
//! timing features.

use std::f64::consts::PI;

use crate::dataio::EcgRecord;
use crate::{Error, Result};

/// Passband edges applied to every record, in Hz.
pub const BAND_LO_HZ: f64 = 0.5;
pub const BAND_HI_HZ: f64 = 50.0;

/// Samples per resampled beat window.
pub const BEAT_LEN: usize = 256;
/// Beat window relative to the R peak, seconds.
pub const BEAT_PRE_S: f64 = 0.3;
pub const BEAT_POST_S: f64 = 0.5;

const INTEGRATION_S: f64 = 0.150;
const REFRACTORY_S: f64 = 0.200;
const THRESHOLD_FACTOR: f64 = 0.5;
const PEAK_DECAY_S: f64 = 2.0;
/// Learning phase used to seed the running peak estimate.
const LEARNING_S: f64 = 2.0;

/// Symmetric linear-phase FIR bandpass.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterKernel {
    pub taps: Vec<f64>,
    pub fs: f64,
    pub lo: f64,
    pub hi: f64,
}

impl FilterKernel {
    /// Magnitude of the frequency response at `freq` Hz.
    pub fn response(&self, freq: f64) -> f64 {
        let w = 2.0 * PI * freq / self.fs;
        let (mut re, mut im) = (0.0, 0.0);
        for (n, h) in self.taps.iter().enumerate() {
            re += h * (w * n as f64).cos();
            im -= h * (w * n as f64).sin();
        }
        re.hypot(im)
    }

    pub fn delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }
}

/// Hamming-windowed sinc lowpass with unit DC gain.
fn lowpass(cutoff: f64, fs: f64, ntaps: usize) -> Vec<f64> {
    let mid = (ntaps - 1) as f64 / 2.0;
    let fc = cutoff / fs;
    let mut taps: Vec<f64> = (0..ntaps)
        .map(|n| {
            let t = n as f64 - mid;
            let sinc = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * t).sin() / (PI * t)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * n as f64 / (ntaps - 1) as f64).cos();
            sinc * window
        })
        .collect();
    let gain: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|h| *h /= gain);
    taps
}

/// Windowed-sinc bandpass `[lo, hi]` with the smallest odd tap count ≥ `fs`.
pub fn design_bandpass(fs: f64, lo: f64, hi: f64) -> Result<FilterKernel> {
    if !(fs.is_finite() && lo > 0.0 && lo < hi && hi < fs / 2.0) {
        return Err(Error::param(format!(
            "invalid band [{lo}, {hi}] Hz at fs = {fs} Hz"
        )));
    }
    let mut ntaps = fs.ceil() as usize;
    if ntaps % 2 == 0 {
        ntaps += 1;
    }
    let high = lowpass(hi, fs, ntaps);
    let low = lowpass(lo, fs, ntaps);
    let mut taps: Vec<f64> = high.iter().zip(&low).map(|(a, b)| a - b).collect();
    // enforce exact symmetry against rounding in the window evaluation
    for i in 0..ntaps / 2 {
        let avg = 0.5 * (taps[i] + taps[ntaps - 1 - i]);
        taps[i] = avg;
        taps[ntaps - 1 - i] = avg;
    }
    Ok(FilterKernel { taps, fs, lo, hi })
}

/// Reflects an out-of-range index back into `0..len` (no edge repeat).
fn reflect(mut i: isize, len: usize) -> usize {
    let n = len as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Zero-phase FIR filtering with reflection padding; output length equals input.
pub fn apply_filter(record: &EcgRecord, kernel: &FilterKernel) -> Result<EcgRecord> {
    if (record.fs - kernel.fs).abs() > 1e-9 * kernel.fs {
        return Err(Error::param(format!(
            "record sampled at {} Hz, kernel designed for {} Hz",
            record.fs, kernel.fs
        )));
    }
    let x = &record.samples;
    let len = x.len();
    let delay = kernel.delay() as isize;
    let out = (0..len)
        .map(|n| {
            let mut acc = 0.0;
            for (k, h) in kernel.taps.iter().enumerate() {
                acc += h * x[reflect(n as isize + k as isize - delay, len)];
            }
            acc
        })
        .collect();
    Ok(record.with_samples(out))
}

/// Bandpass with the standard 0.5–50 Hz passband.
pub fn bandpass(record: &EcgRecord) -> Result<EcgRecord> {
    let kernel = design_bandpass(record.fs, BAND_LO_HZ, BAND_HI_HZ)?;
    apply_filter(record, &kernel)
}

/// Squared first difference averaged over a centred 150 ms window.
pub fn integrated_energy(samples: &[f64], fs: f64) -> Vec<f64> {
    let n = samples.len();
    let mut sq = vec![0.0; n];
    for i in 1..n {
        let d = samples[i] - samples[i - 1];
        sq[i] = d * d;
    }
    let win = ((INTEGRATION_S * fs).round() as usize).max(1);
    let before = win / 2;
    let after = win - 1 - before;
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + sq[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after + 1).min(n);
            (prefix[hi] - prefix[lo]) / win as f64
        })
        .collect()
}

/// Pan–Tompkins-style R-peak detector on an already bandpassed record.
///
/// Candidate regions are runs where the integrated energy exceeds half of a
/// running peak estimate that decays exponentially (τ = 2 s). The running peak
/// is seeded from the first 2 s (the whole record if those are silent). Inside each region the maximum of the
/// filtered signal is reported; detections within 200 ms of the previous one
/// are discarded.
pub fn detect_r_peaks(record: &EcgRecord) -> Vec<usize> {
    let x = &record.samples;
    let fs = record.fs;
    let energy = integrated_energy(x, fs);
    let n = energy.len();
    let learn = ((LEARNING_S * fs) as usize).clamp(1, n);
    let mut running = energy[..learn].iter().cloned().fold(0.0, f64::max);
    if running <= 0.0 {
        // silent opening stretch: fall back to the whole record
        running = energy.iter().cloned().fold(0.0, f64::max);
        if running <= 0.0 {
            return Vec::new();
        }
    }
    let decay = (-1.0 / (PEAK_DECAY_S * fs)).exp();
    let refractory = (REFRACTORY_S * fs).round() as usize;

    let mut peaks: Vec<usize> = Vec::new();
    let mut region_start: Option<usize> = None;
    for i in 0..=n {
        let above = if i < n {
            running = (running * decay).max(energy[i]);
            energy[i] > THRESHOLD_FACTOR * running
        } else {
            false
        };
        match (above, region_start) {
            (true, None) => region_start = Some(i),
            (false, Some(start)) => {
                region_start = None;
                let peak = (start..i)
                    .max_by(|&a, &b| x[a].total_cmp(&x[b]).then(b.cmp(&a)))
                    .expect("non-empty region");
                match peaks.last() {
                    Some(&last) if peak < last + refractory => {}
                    _ => peaks.push(peak),
                }
            }
            _ => {}
        }
    }
    peaks
}

/// Fixed-length, amplitude-normalized beat windows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BeatSet {
    pub beats: Vec<Vec<f64>>,
    /// Peaks the set was built from (all of them, sorted).
    pub peak_indices: Vec<usize>,
    /// Intervals between consecutive peaks, seconds.
    pub rr_intervals: Vec<f64>,
    /// The peak each emitted beat is centred on.
    pub beat_peaks: Vec<usize>,
}

impl BeatSet {
    pub fn len(&self) -> usize {
        self.beats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beats.is_empty()
    }
}

fn resample_linear(x: &[f64], len: usize) -> Vec<f64> {
    if x.len() == 1 {
        return vec![x[0]; len];
    }
    let scale = (x.len() - 1) as f64 / (len - 1) as f64;
    (0..len)
        .map(|j| {
            let pos = j as f64 * scale;
            let i = (pos.floor() as usize).min(x.len() - 2);
            let t = pos - i as f64;
            x[i] * (1.0 - t) + x[i + 1] * t
        })
        .collect()
}

/// Cuts `[peak − 0.3 s, peak + 0.5 s)` around every peak, drops windows that
/// leave the record or are flat, resamples to 256 samples and normalizes to
/// zero mean and unit max-abs.
pub fn segment_beats(record: &EcgRecord, peaks: &[usize]) -> BeatSet {
    let fs = record.fs;
    let pre = (BEAT_PRE_S * fs).round() as usize;
    let post = (BEAT_POST_S * fs).round() as usize;
    let len = record.samples.len();

    let mut peak_indices = peaks.to_vec();
    peak_indices.sort_unstable();
    peak_indices.dedup();
    let rr_intervals = peak_indices
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / fs)
        .collect();

    let mut beats = Vec::new();
    let mut beat_peaks = Vec::new();
    for &p in &peak_indices {
        if p < pre || p + post > len {
            continue;
        }
        let mut w = resample_linear(&record.samples[p - pre..p + post], BEAT_LEN);
        let mean = w.iter().sum::<f64>() / BEAT_LEN as f64;
        w.iter_mut().for_each(|v| *v -= mean);
        let peak_abs = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak_abs < 1e-12 {
            continue;
        }
        w.iter_mut().for_each(|v| *v /= peak_abs);
        beats.push(w);
        beat_peaks.push(p);
    }
    BeatSet {
        beats,
        peak_indices,
        rr_intervals,
        beat_peaks,
    }
}

/// Timing features; `None` marks a feature that is undefined for the record.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EcgScalarFeatures {
    /// Population standard deviation of RR intervals, s.
    pub hrv_sdnn: Option<f64>,
    /// Population variance of per-beat QRS energy widths, s².
    pub qrs_width_var: Option<f64>,
    /// Beats per minute from the mean RR interval.
    pub mean_hr: Option<f64>,
}

fn population_variance(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64
}

/// Width (s) of the contiguous run around the energy maximum near `peak`
/// where the integrated energy stays above half that maximum.
fn qrs_energy_width(energy: &[f64], peak: usize, fs: f64) -> Option<f64> {
    let pre = (BEAT_PRE_S * fs).round() as usize;
    let post = (BEAT_POST_S * fs).round() as usize;
    let lo = peak.saturating_sub(pre);
    let hi = (peak + post).min(energy.len());
    let (argmax, &max) = energy[lo..hi]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if max <= 0.0 {
        return None;
    }
    let centre = lo + argmax;
    let half = 0.5 * max;
    let mut start = centre;
    while start > lo && energy[start - 1] > half {
        start -= 1;
    }
    let mut end = centre;
    while end + 1 < hi && energy[end + 1] > half {
        end += 1;
    }
    Some((end - start + 1) as f64 / fs)
}

pub fn ecg_scalar_features(record: &EcgRecord, peaks: &[usize]) -> EcgScalarFeatures {
    let mut sorted = peaks.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let fs = record.fs;
    let rr: Vec<f64> = sorted.windows(2).map(|w| (w[1] - w[0]) as f64 / fs).collect();

    let mean_hr = (!rr.is_empty()).then(|| 60.0 / (rr.iter().sum::<f64>() / rr.len() as f64));
    if sorted.len() < 3 {
        return EcgScalarFeatures {
            mean_hr,
            ..Default::default()
        };
    }
    let hrv_sdnn = Some(population_variance(&rr).sqrt());
    let energy = integrated_energy(&record.samples, fs);
    let widths: Vec<f64> = sorted
        .iter()
        .filter_map(|&p| qrs_energy_width(&energy, p, fs))
        .collect();
    let qrs_width_var = (widths.len() >= 3).then(|| population_variance(&widths));
    EcgScalarFeatures {
        hrv_sdnn,
        qrs_width_var,
        mean_hr,
    }
}

/// Filter, detect and segment in one pass.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub filtered: EcgRecord,
    pub peaks: Vec<usize>,
    pub beats: BeatSet,
    pub scalars: EcgScalarFeatures,
}

pub fn preprocess(record: &EcgRecord) -> Result<Preprocessed> {
    let filtered = bandpass(record)?;
    let peaks = detect_r_peaks(&filtered);
    let beats = segment_beats(&filtered, &peaks);
    let scalars = ecg_scalar_features(&filtered, &peaks);
    Ok(Preprocessed {
        filtered,
        peaks,
        beats,
        scalars,
    })
}
