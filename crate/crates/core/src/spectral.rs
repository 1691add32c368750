//! Discrete Fourier transforms and the spectral distributions built on them.
//!
//! All forward transforms use the unnormalized negative-exponent convention
//! `X[k] = Σ x[n]·exp(-2πi·kn/N)`. Power-of-two lengths run an iterative
//! radix-2 kernel; every other length goes through Bluestein's chirp-z
//! identity, so the output is always the exact length-N DFT.

use std::f64::consts::PI;

use crate::dataio::GrayImage;
use crate::ecg_prep::BeatSet;
use crate::{Error, Result};

/// Side length every image is resampled to before spectral analysis.
pub const CANONICAL_SIDE: usize = 256;
/// Number of positive-frequency bins kept from each beat spectrum.
pub const ECG_BINS: usize = 128;
/// Number of radial bins in the image spectrum.
pub const FUNDUS_BINS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSeries {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexSeries {
    pub fn new(re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::param("real and imaginary parts differ in length"));
        }
        if re.iter().chain(&im).any(|v| !v.is_finite()) {
            return Err(Error::param("non-finite value in complex series"));
        }
        Ok(Self { re, im })
    }

    pub fn from_real(x: &[f64]) -> Self {
        Self {
            re: x.to_vec(),
            im: vec![0.0; x.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(a, b)| a.hypot(*b)).collect()
    }

    pub fn energy(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(a, b)| a * a + b * b).sum()
    }
}

/// Row-major 2D complex array.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    pub width: usize,
    pub height: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexGrid {
    pub fn magnitude(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(a, b)| a.hypot(*b)).collect()
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> (f64, f64) {
        let i = v * self.width + u;
        (self.re[i], self.im[i])
    }
}

/// Forward DFT of a complex series.
pub fn fft(x: &ComplexSeries) -> Result<ComplexSeries> {
    if x.is_empty() {
        return Err(Error::param("cannot transform an empty series"));
    }
    let mut re = x.re.clone();
    let mut im = x.im.clone();
    transform(&mut re, &mut im, false);
    Ok(ComplexSeries { re, im })
}

pub fn fft_real(x: &[f64]) -> Result<ComplexSeries> {
    fft(&ComplexSeries::from_real(x))
}

/// Inverse DFT, including the `1/N` factor.
pub fn ifft(x: &ComplexSeries) -> Result<ComplexSeries> {
    if x.is_empty() {
        return Err(Error::param("cannot transform an empty series"));
    }
    let mut re = x.re.clone();
    let mut im = x.im.clone();
    transform(&mut re, &mut im, true);
    let n = re.len() as f64;
    re.iter_mut().chain(im.iter_mut()).for_each(|v| *v /= n);
    Ok(ComplexSeries { re, im })
}

/// Direct O(N²) evaluation of the DFT sum.
pub fn naive_dft(x: &ComplexSeries) -> ComplexSeries {
    let n = x.len();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for k in 0..n {
        let (mut sr, mut si) = (0.0, 0.0);
        for j in 0..n {
            // reduce kj mod n before scaling so the angle stays small
            let angle = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
            let (s, c) = angle.sin_cos();
            sr += x.re[j] * c - x.im[j] * s;
            si += x.re[j] * s + x.im[j] * c;
        }
        re[k] = sr;
        im[k] = si;
    }
    ComplexSeries { re, im }
}

fn transform(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        radix2(re, im, inverse);
    } else {
        bluestein(re, im, inverse);
    }
}

fn radix2(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let twiddles: Vec<(f64, f64)> = (0..n / 2)
        .map(|k| {
            let (s, c) = (sign * 2.0 * PI * k as f64 / n as f64).sin_cos();
            (c, s)
        })
        .collect();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let (wr, wi) = twiddles[k * step];
                let a = start + k;
                let b = a + half;
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}

fn bluestein(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    let m = (2 * n - 1).next_power_of_two();
    let sign = if inverse { 1.0 } else { -1.0 };
    // chirp w[k] = exp(sign·iπk²/n); k² is reduced mod 2n to keep the angle exact
    let chirp: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let k2 = (k as u128 * k as u128 % (2 * n as u128)) as f64;
            let (s, c) = (sign * PI * k2 / n as f64).sin_cos();
            (c, s)
        })
        .collect();

    let mut ar = vec![0.0; m];
    let mut ai = vec![0.0; m];
    for k in 0..n {
        let (c, s) = chirp[k];
        ar[k] = re[k] * c - im[k] * s;
        ai[k] = re[k] * s + im[k] * c;
    }
    let mut br = vec![0.0; m];
    let mut bi = vec![0.0; m];
    br[0] = chirp[0].0;
    bi[0] = -chirp[0].1;
    for k in 1..n {
        let (c, s) = chirp[k];
        br[k] = c;
        bi[k] = -s;
        br[m - k] = c;
        bi[m - k] = -s;
    }

    radix2(&mut ar, &mut ai, false);
    radix2(&mut br, &mut bi, false);
    for k in 0..m {
        let r = ar[k] * br[k] - ai[k] * bi[k];
        let i = ar[k] * bi[k] + ai[k] * br[k];
        ar[k] = r;
        ai[k] = i;
    }
    radix2(&mut ar, &mut ai, true);
    let scale = 1.0 / m as f64;
    for k in 0..n {
        let (c, s) = chirp[k];
        let (xr, xi) = (ar[k] * scale, ai[k] * scale);
        re[k] = xr * c - xi * s;
        im[k] = xr * s + xi * c;
    }
}

/// 2D DFT of a real row-major grid by row/column decomposition.
pub fn fft2_real(width: usize, height: usize, data: &[f64]) -> Result<ComplexGrid> {
    if width == 0 || height == 0 || data.len() != width * height {
        return Err(Error::param(format!(
            "grid of {} values is not {width}x{height}",
            data.len()
        )));
    }
    let mut re = data.to_vec();
    let mut im = vec![0.0; data.len()];
    for row in 0..height {
        let span = row * width..(row + 1) * width;
        transform(&mut re[span.clone()], &mut im[span], false);
    }
    let mut col_re = vec![0.0; height];
    let mut col_im = vec![0.0; height];
    for col in 0..width {
        for row in 0..height {
            col_re[row] = re[row * width + col];
            col_im[row] = im[row * width + col];
        }
        transform(&mut col_re, &mut col_im, false);
        for row in 0..height {
            re[row * width + col] = col_re[row];
            im[row * width + col] = col_im[row];
        }
    }
    Ok(ComplexGrid { width, height, re, im })
}

/// 2D DFT of an image at its native size.
pub fn fft2(img: &GrayImage) -> Result<ComplexGrid> {
    img.ensure_analysable()?;
    fft2_real(img.width, img.height, &img.pixels)
}

/// Direct double-sum 2D DFT.
pub fn naive_dft2(width: usize, height: usize, data: &[f64]) -> ComplexGrid {
    let mut re = vec![0.0; width * height];
    let mut im = vec![0.0; width * height];
    for v in 0..height {
        for u in 0..width {
            let (mut sr, mut si) = (0.0, 0.0);
            for y in 0..height {
                for x in 0..width {
                    let phase = ((u * x) % width) as f64 / width as f64 + ((v * y) % height) as f64 / height as f64;
                    let (s, c) = (-2.0 * PI * phase).sin_cos();
                    let p = data[y * width + x];
                    sr += p * c;
                    si += p * s;
                }
            }
            re[v * width + u] = sr;
            im[v * width + u] = si;
        }
    }
    ComplexGrid { width, height, re, im }
}

/// A discrete probability distribution over ordered bin centres.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Spectrum {
    pub weights: Vec<f64>,
    pub centers: Vec<f64>,
}

impl Spectrum {
    /// Validates an already-normalized distribution.
    pub fn new(weights: Vec<f64>, centers: Vec<f64>) -> Result<Self> {
        check_centers(&weights, &centers)?;
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::param("spectrum weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!("spectrum weights sum to {total}, not 1")));
        }
        Ok(Self { weights, centers })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Unit mass at bin `index`.
    pub fn one_hot(index: usize, centers: Vec<f64>) -> Result<Self> {
        let mut w = vec![0.0; centers.len()];
        *w.get_mut(index).ok_or_else(|| Error::param("one-hot index out of range"))? = 1.0;
        Self::new(w, centers)
    }

    pub fn same_grid(&self, other: &Spectrum) -> bool {
        self.centers.len() == other.centers.len()
            && self
                .centers
                .iter()
                .zip(&other.centers)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0))
    }
}

fn check_centers(weights: &[f64], centers: &[f64]) -> Result<()> {
    if weights.len() != centers.len() {
        return Err(Error::param(format!(
            "{} weights for {} centres",
            weights.len(),
            centers.len()
        )));
    }
    if weights.is_empty() {
        return Err(Error::param("empty spectrum"));
    }
    if centers.iter().any(|c| !c.is_finite()) || centers.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("spectrum centres must be finite and strictly increasing"));
    }
    Ok(())
}

/// Divides non-negative weights by their sum.
pub fn normalize(weights: &[f64], centers: &[f64]) -> Result<Spectrum> {
    check_centers(weights, centers)?;
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::param("weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::param("weights have zero mass"));
    }
    Ok(Spectrum {
        weights: weights.iter().map(|w| w / total).collect(),
        centers: centers.to_vec(),
    })
}

/// Element-wise mean of spectra on a shared grid, renormalized.
pub fn mean_spectrum<'a>(spectra: impl IntoIterator<Item = &'a Spectrum>) -> Result<Spectrum> {
    let mut iter = spectra.into_iter();
    let first = iter.next().ok_or_else(|| Error::param("no spectra to average"))?;
    let mut acc = first.weights.clone();
    let mut count = 1usize;
    for s in iter {
        if !s.same_grid(first) {
            return Err(Error::param("spectra are on different grids"));
        }
        acc.iter_mut().zip(&s.weights).for_each(|(a, w)| *a += w);
        count += 1;
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    normalize(&acc, &first.centers)
}

/// Centres `k / window` for `k = 1..=nbins`, in cycles per sample.
pub fn beat_centers(window: usize, nbins: usize) -> Vec<f64> {
    (1..=nbins).map(|k| k as f64 / window as f64).collect()
}

/// Average of per-beat normalized magnitude spectra, DC excluded.
pub fn beat_avg_spectrum(beats: &BeatSet, nbins: usize) -> Result<Spectrum> {
    let first = beats.beats.first().ok_or_else(|| Error::param("no beats to transform"))?;
    let window = first.len();
    if nbins == 0 || nbins > window / 2 {
        return Err(Error::param(format!("{nbins} bins do not fit a {window}-sample window")));
    }
    let centers = beat_centers(window, nbins);
    let mut per_beat = Vec::with_capacity(beats.beats.len());
    for beat in &beats.beats {
        if beat.len() != window {
            return Err(Error::param("beats differ in length"));
        }
        let mag = fft_real(beat)?.magnitude();
        per_beat.push(normalize(&mag[1..=nbins], &centers)?);
    }
    mean_spectrum(&per_beat)
}

/// Radial spectrum of an image, with a flag for images that carry no energy
/// outside DC.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSpectrum {
    pub spectrum: Spectrum,
    pub degenerate: bool,
}

/// Bin midpoints in cycles per canonical image.
pub fn radial_centers(nbins: usize) -> Vec<f64> {
    let r_max = (CANONICAL_SIDE / 2) as f64 * std::f64::consts::SQRT_2;
    (0..nbins).map(|b| (b as f64 + 0.5) * r_max / nbins as f64).collect()
}

/// Annular sums of the centred magnitude spectrum of the 256×256 resampled
/// image, normalized to a distribution.
pub fn radial_spectrum(img: &GrayImage, nbins: usize) -> Result<RadialSpectrum> {
    img.ensure_analysable()?;
    if nbins == 0 {
        return Err(Error::param("need at least one radial bin"));
    }
    let canon = img.resample(CANONICAL_SIDE, CANONICAL_SIDE);
    let grid = fft2(&canon)?;
    let mag = grid.magnitude();
    let n = CANONICAL_SIDE;
    let half = (n / 2) as isize;
    let r_max = half as f64 * std::f64::consts::SQRT_2;
    let centers = radial_centers(nbins);

    let mut sums = vec![0.0; nbins];
    for v in 0..n {
        let fv = if (v as isize) < half { v as isize } else { v as isize - n as isize };
        for u in 0..n {
            if u == 0 && v == 0 {
                continue;
            }
            let fu = if (u as isize) < half { u as isize } else { u as isize - n as isize };
            let r = ((fu * fu + fv * fv) as f64).sqrt();
            let bin = ((nbins as f64 * r / r_max).floor() as usize).min(nbins - 1);
            sums[bin] += mag[v * n + u];
        }
    }
    let total: f64 = sums.iter().sum();
    if total <= 1e-9 * mag[0] + 1e-12 {
        return Ok(RadialSpectrum {
            spectrum: Spectrum::one_hot(0, centers)?,
            degenerate: true,
        });
    }
    Ok(RadialSpectrum {
        spectrum: normalize(&sums, &centers)?,
        degenerate: false,
    })
}
