//! Comparison feature extractors: Haar wavelet band energies for ECG beats
//! and a histogram of oriented gradients for fundus images.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::dataio::GrayImage;
use crate::ecg_prep::BeatSet;
use crate::spectral::CANONICAL_SIDE;
use crate::{Error, Result};

pub const WT_LEVELS: usize = 5;
pub const HOG_CELL: usize = 32;
pub const HOG_BINS: usize = 9;
const HOG_EPS: f64 = 1e-6;

/// Orthonormal Haar analysis: details per level (finest first) plus the
/// final approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarDecomposition {
    pub details: Vec<Vec<f64>>,
    pub approx: Vec<f64>,
}

pub fn haar_dwt(x: &[f64], levels: usize) -> Result<HaarDecomposition> {
    if x.is_empty() || !x.len().is_power_of_two() {
        return Err(Error::param(format!("Haar transform needs a power-of-two length, got {}", x.len())));
    }
    if levels > 8 || (1usize << levels) > x.len() {
        return Err(Error::param(format!("{levels} levels do not fit length {}", x.len())));
    }
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let half = approx.len() / 2;
        let mut a = Vec::with_capacity(half);
        let mut d = Vec::with_capacity(half);
        for i in 0..half {
            a.push((approx[2 * i] + approx[2 * i + 1]) * FRAC_1_SQRT_2);
            d.push((approx[2 * i] - approx[2 * i + 1]) * FRAC_1_SQRT_2);
        }
        details.push(d);
        approx = a;
    }
    Ok(HaarDecomposition { details, approx })
}

/// Inverse of [`haar_dwt`].
pub fn haar_idwt(dec: &HaarDecomposition) -> Vec<f64> {
    let mut x = dec.approx.clone();
    for d in dec.details.iter().rev() {
        let mut next = Vec::with_capacity(2 * x.len());
        for (a, b) in x.iter().zip(d) {
            next.push((a + b) * FRAC_1_SQRT_2);
            next.push((a - b) * FRAC_1_SQRT_2);
        }
        x = next;
    }
    x
}

/// Relative wavelet energies: one slot per detail level, then the approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct WtFeatures {
    pub level_energies: Vec<f64>,
}

pub fn wt_features(beats: &BeatSet, levels: usize) -> Result<WtFeatures> {
    if beats.is_empty() {
        return Err(Error::param("no beats for wavelet features"));
    }
    let mut acc = vec![0.0; levels + 1];
    for beat in &beats.beats {
        let dec = haar_dwt(beat, levels)?;
        let mut energies: Vec<f64> = dec.details.iter().map(|d| d.iter().map(|v| v * v).sum()).collect();
        energies.push(dec.approx.iter().map(|v| v * v).sum());
        let total: f64 = energies.iter().sum();
        if total <= 0.0 {
            return Err(Error::param("beat has zero energy"));
        }
        acc.iter_mut().zip(&energies).for_each(|(a, e)| *a += e / total);
    }
    let total: f64 = acc.iter().sum();
    Ok(WtFeatures {
        level_energies: acc.iter().map(|a| a / total).collect(),
    })
}

/// Block-normalized HOG descriptor over the 256×256 resampled image.
///
/// Layout: 7×7 overlapping 2×2-cell blocks in row-major order; each block is
/// its four cells (row-major) × 9 orientation bins, L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct HogFeatures {
    pub descriptor: Vec<f64>,
    pub cells_x: usize,
    pub cells_y: usize,
    pub bins: usize,
}

impl HogFeatures {
    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.descriptor.chunks(4 * self.bins)
    }
}

/// Orientation histograms per cell, before block normalization.
pub fn cell_histograms(img: &GrayImage, cell: usize, bins: usize) -> (Vec<f64>, usize, usize) {
    let (w, h) = (img.width, img.height);
    let cells_x = w / cell;
    let cells_y = h / cell;
    let mut hist = vec![0.0; cells_x * cells_y * bins];
    let bin_width = 180.0 / bins as f64;
    for y in 0..cells_y * cell {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..cells_x * cell {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let gx = img.get(right, y) - img.get(left, y);
            let gy = img.get(x, down) - img.get(x, up);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            if angle >= 180.0 {
                angle -= 180.0;
            }
            // bin k is centred on k·bin_width; votes split linearly between neighbours
            let pos = angle / bin_width;
            let lower = pos.floor();
            let frac = pos - lower;
            let b0 = lower as usize % bins;
            let b1 = (b0 + 1) % bins;
            let base = ((y / cell) * cells_x + x / cell) * bins;
            hist[base + b0] += mag * (1.0 - frac);
            if frac > 0.0 {
                hist[base + b1] += mag * frac;
            }
        }
    }
    (hist, cells_x, cells_y)
}

pub fn hog_features(img: &GrayImage, cell: usize, bins: usize) -> Result<HogFeatures> {
    img.ensure_analysable()?;
    if cell == 0 || bins == 0 || cell * 2 > CANONICAL_SIDE {
        return Err(Error::param("invalid HOG cell or bin count"));
    }
    let canon = img.resample(CANONICAL_SIDE, CANONICAL_SIDE);
    let (hist, cells_x, cells_y) = cell_histograms(&canon, cell, bins);
    let mut descriptor = Vec::with_capacity((cells_x - 1) * (cells_y - 1) * 4 * bins);
    for by in 0..cells_y - 1 {
        for bx in 0..cells_x - 1 {
            let start = descriptor.len();
            for (cy, cx) in [(by, bx), (by, bx + 1), (by + 1, bx), (by + 1, bx + 1)] {
                let base = (cy * cells_x + cx) * bins;
                descriptor.extend_from_slice(&hist[base..base + bins]);
            }
            let block = &mut descriptor[start..];
            let norm = (block.iter().map(|v| v * v).sum::<f64>() + HOG_EPS * HOG_EPS).sqrt();
            block.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(HogFeatures {
        descriptor,
        cells_x,
        cells_y,
        bins,
    })
}
