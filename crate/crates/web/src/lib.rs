//! WebAssembly bindings for the browser demo. Each export returns a JSON
//! string; the `*_json` functions underneath are plain Rust so they can be
//! tested natively.

use cardiofuse::dataio::Label;
use cardiofuse::ecg_prep::preprocess;
use cardiofuse::pipeline::beat_sample_rate;
use cardiofuse::spectral::{beat_avg_spectrum, fft2, normalize, radial_spectrum, ECG_BINS, FUNDUS_BINS};
use cardiofuse::synthgen::{gen_ecg_variant, gen_fundus, EcgAnomaly, SynthParams};
use cardiofuse::transport::emd_1d;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn parse_anomaly(name: &str) -> Result<Option<EcgAnomaly>, String> {
    if name == "none" {
        return Ok(None);
    }
    EcgAnomaly::ALL
        .into_iter()
        .find(|a| a.as_str() == name)
        .map(Some)
        .ok_or_else(|| format!("unknown anomaly {name:?}"))
}

/// Synthetic ECG through bandpass, R-peak detection and the beat-averaged
/// spectrum.
pub fn ecg_chain_json(seed: u64, anomaly: &str) -> Result<String, String> {
    let params = SynthParams::default();
    let ecg = gen_ecg_variant(parse_anomaly(anomaly)?, &params, seed);
    let pre = preprocess(&ecg.record).map_err(|e| e.to_string())?;
    let spectrum = beat_avg_spectrum(&pre.beats, ECG_BINS).map_err(|e| e.to_string())?;
    let rate = beat_sample_rate();
    let fs = ecg.record.fs;
    Ok(json!({
        "fs": fs,
        "raw": ecg.record.samples,
        "filtered": pre.filtered.samples,
        "peaks_s": pre.peaks.iter().map(|&i| i as f64 / fs).collect::<Vec<_>>(),
        "true_peaks_s": ecg.true_peaks_s,
        "beats": pre.beats.len(),
        "freq_hz": spectrum.centers.iter().map(|c| c * rate).collect::<Vec<_>>(),
        "spectrum": spectrum.weights,
        "hrv_sdnn": pre.scalars.hrv_sdnn,
        "mean_hr": pre.scalars.mean_hr,
    })
    .to_string())
}

/// EMD between two histograms on the bins `0..n`, with both CDFs.
pub fn emd_json(p: &[f64], q: &[f64]) -> Result<String, String> {
    if p.len() != q.len() {
        return Err("histograms differ in length".into());
    }
    let centers: Vec<f64> = (0..p.len()).map(|i| i as f64).collect();
    let sp = normalize(p, &centers).map_err(|e| e.to_string())?;
    let sq = normalize(q, &centers).map_err(|e| e.to_string())?;
    let d = emd_1d(&sp, &sq).map_err(|e| e.to_string())?;
    let cdf = |w: &[f64]| {
        w.iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect::<Vec<f64>>()
    };
    Ok(json!({
        "emd": d,
        "p": sp.weights,
        "q": sq.weights,
        "cdf_p": cdf(&sp.weights),
        "cdf_q": cdf(&sq.weights),
    })
    .to_string())
}

/// Synthetic fundus image, its centred log-magnitude spectrum (both as 8-bit
/// grey) and the radial spectrum.
pub fn fundus_json(seed: u64, abnormal: bool) -> Result<String, String> {
    let params = SynthParams::default();
    let label = if abnormal { Label::Abnormal } else { Label::Normal };
    let f = gen_fundus(label, &params, seed);
    let img = &f.image;
    let grid = fft2(img).map_err(|e| e.to_string())?;
    let (w, h) = (grid.width, grid.height);
    let logmag: Vec<f64> = grid.magnitude().iter().map(|m| m.ln_1p()).collect();
    let peak = logmag.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
    // shift DC to the centre for display
    let mut spectrum_px = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = logmag[((y + h / 2) % h) * w + (x + w / 2) % w];
            spectrum_px[y * w + x] = (255.0 * v / peak).round() as u8;
        }
    }
    let radial = radial_spectrum(img, FUNDUS_BINS).map_err(|e| e.to_string())?;
    Ok(json!({
        "width": img.width,
        "height": img.height,
        "pixels": img.pixels.iter().map(|v| (v * 255.0).round() as u8).collect::<Vec<u8>>(),
        "spectrum_pixels": spectrum_px,
        "tortuosity": f.tortuosity,
        "radius": radial.spectrum.centers,
        "radial": radial.spectrum.weights,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn ecg_chain(seed: u32, anomaly: &str) -> Result<String, JsError> {
    ecg_chain_json(seed.into(), anomaly).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn emd(p: &[f64], q: &[f64]) -> Result<String, JsError> {
    emd_json(p, q).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fundus(seed: u32, abnormal: bool) -> Result<String, JsError> {
    fundus_json(seed.into(), abnormal).map_err(|e| JsError::new(&e))
}
