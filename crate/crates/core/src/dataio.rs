//! On-disk artifacts: ECG CSV records, PGM images, dataset manifests and
//! report tables.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Records shorter than this are rejected at ingest.
pub const MIN_RECORD_SECONDS: f64 = 2.0;

/// Binary clinical annotation of one modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Label::Normal),
            "abnormal" => Ok(Label::Abnormal),
            other => Err(Error::Schema(format!("unknown label token {other:?}"))),
        }
    }
}

/// Joint ECG × fundus class.
///
/// | class | ECG      | fundus   |
/// |-------|----------|----------|
/// | C1    | normal   | normal   |
/// | C2    | normal   | abnormal |
/// | C3    | abnormal | normal   |
/// | C4    | abnormal | abnormal |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    C1,
    C2,
    C3,
    C4,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 4] = [ClassLabel::C1, ClassLabel::C2, ClassLabel::C3, ClassLabel::C4];

    pub fn from_labels(ecg: Label, fundus: Label) -> Self {
        match (ecg, fundus) {
            (Label::Normal, Label::Normal) => ClassLabel::C1,
            (Label::Normal, Label::Abnormal) => ClassLabel::C2,
            (Label::Abnormal, Label::Normal) => ClassLabel::C3,
            (Label::Abnormal, Label::Abnormal) => ClassLabel::C4,
        }
    }

    pub fn ecg(self) -> Label {
        match self {
            ClassLabel::C1 | ClassLabel::C2 => Label::Normal,
            ClassLabel::C3 | ClassLabel::C4 => Label::Abnormal,
        }
    }

    pub fn fundus(self) -> Label {
        match self {
            ClassLabel::C1 | ClassLabel::C3 => Label::Normal,
            ClassLabel::C2 | ClassLabel::C4 => Label::Abnormal,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::C1 => "C1",
            ClassLabel::C2 => "C2",
            ClassLabel::C3 => "C3",
            ClassLabel::C4 => "C4",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "C1" => Ok(ClassLabel::C1),
            "C2" => Ok(ClassLabel::C2),
            "C3" => Ok(ClassLabel::C3),
            "C4" => Ok(ClassLabel::C4),
            other => Err(Error::Data(format!("unknown class {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(Error::Schema(format!("unknown split {other:?}"))),
        }
    }
}

/// A uniformly sampled single-lead ECG in millivolts.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub id: String,
    pub fs: f64,
    pub samples: Vec<f64>,
    pub label: Option<Label>,
}

impl EcgRecord {
    pub fn new(id: impl Into<String>, fs: f64, samples: Vec<f64>, label: Option<Label>) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::param(format!("sampling rate must be positive, got {fs}")));
        }
        if samples.len() < 2 {
            return Err(Error::param("an ECG record needs at least two samples"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            id: id.into(),
            fs,
            samples,
            label,
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Same metadata, new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            id: self.id.clone(),
            fs: self.fs,
            samples,
            label: self.label,
        }
    }
}

/// Reads an ECG CSV file. The record id is the file stem.
pub fn parse_ecg_csv(path: &Path) -> Result<EcgRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_ecg_str(&text, &id)
}

/// Parses the ECG CSV body: `# key=value` header lines (`fs_hz` required,
/// optional `units` and `label`) followed by one decimal sample per line.
pub fn parse_ecg_str(text: &str, id: &str) -> Result<EcgRecord> {
    let mut fs_hz: Option<f64> = None;
    let mut label = None;
    let mut samples = Vec::new();
    let mut in_header = true;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if in_header {
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                let (key, value) = rest
                    .split_once('=')
                    .ok_or_else(|| Error::format_at(lineno, format!("malformed header line {line:?}")))?;
                match key.trim() {
                    "fs_hz" => {
                        let fs: f64 = value
                            .trim()
                            .parse()
                            .map_err(|_| Error::format_at(lineno, format!("invalid fs_hz {value:?}")))?;
                        if !(fs.is_finite() && fs > 0.0) {
                            return Err(Error::format_at(lineno, format!("fs_hz must be positive, got {fs}")));
                        }
                        fs_hz = Some(fs);
                    }
                    "units" => {
                        if value.trim() != "mV" {
                            return Err(Error::format_at(lineno, format!("unsupported units {value:?}")));
                        }
                    }
                    "label" => {
                        label = Some(
                            value
                                .trim()
                                .parse::<Label>()
                                .map_err(|_| Error::format_at(lineno, format!("invalid label {value:?}")))?,
                        );
                    }
                    _ => {}
                }
                continue;
            }
            in_header = false;
        }
        if line.trim().is_empty() {
            continue;
        }
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|_| Error::format_at(lineno, format!("non-numeric sample {line:?}")))?;
        if !v.is_finite() {
            return Err(Error::format_at(lineno, "non-finite sample"));
        }
        samples.push(v);
    }

    let fs = fs_hz.ok_or_else(|| Error::format("missing `# fs_hz=` header"))?;
    if (samples.len() as f64) < MIN_RECORD_SECONDS * fs {
        return Err(Error::TooShort {
            samples: samples.len(),
            fs,
            min_seconds: MIN_RECORD_SECONDS,
        });
    }
    EcgRecord::new(id, fs, samples, label)
}

/// Serializes a record; samples use the shortest round-tripping decimal.
pub fn ecg_to_csv(record: &EcgRecord) -> String {
    let mut out = String::with_capacity(record.samples.len() * 10 + 32);
    out.push_str(&format!("# fs_hz={}\n# units=mV\n", record.fs));
    if let Some(label) = record.label {
        out.push_str(&format!("# label={label}\n"));
    }
    for v in &record.samples {
        out.push_str(&format!("{v}\n"));
    }
    out
}

pub fn write_ecg_csv(record: &EcgRecord, path: &Path) -> Result<()> {
    write_bytes(path, ecg_to_csv(record).as_bytes())
}

/// Grayscale image with row-major intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    /// Minimum side length for spectral and gradient analysis.
    pub const MIN_SIDE: usize = 16;

    pub fn new(id: impl Into<String>, width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("image dimensions must be non-zero"));
        }
        if pixels.len() != width * height {
            return Err(Error::param(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::param(format!("pixel {i} outside [0,1]: {}", pixels[i])));
        }
        Ok(Self {
            id: id.into(),
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(id: impl Into<String>, width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(id, width, height, pixels)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Fails unless both sides are at least [`Self::MIN_SIDE`].
    pub fn ensure_analysable(&self) -> Result<()> {
        if self.width < Self::MIN_SIDE || self.height < Self::MIN_SIDE {
            return Err(Error::param(format!(
                "image {}x{} smaller than {}x{}",
                self.width,
                self.height,
                Self::MIN_SIDE,
                Self::MIN_SIDE
            )));
        }
        Ok(())
    }

    /// Bilinear resample onto a `width` × `height` grid (pixel-centre aligned).
    pub fn resample(&self, width: usize, height: usize) -> GrayImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
                let bottom = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
                pixels.push((top * (1.0 - ty) + bottom * ty).clamp(0.0, 1.0));
            }
        }
        GrayImage {
            id: self.id.clone(),
            width,
            height,
            pixels,
        }
    }

    /// Rotates by 90° counter-clockwise.
    pub fn rotate90(&self) -> GrayImage {
        let (w, h) = (self.height, self.width);
        let mut pixels = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                pixels[y * w + x] = self.get(self.width - 1 - y, x);
            }
        }
        GrayImage {
            id: self.id.clone(),
            width: w,
            height: h,
            pixels,
        }
    }

    pub fn transpose(&self) -> GrayImage {
        let (w, h) = (self.height, self.width);
        let mut pixels = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                pixels[y * w + x] = self.get(y, x);
            }
        }
        GrayImage {
            id: self.id.clone(),
            width: w,
            height: h,
            pixels,
        }
    }
}

pub fn parse_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_pgm(&bytes, &id)
}

struct PgmCursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl PgmCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&[u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() && self.data[self.pos] != b'#' {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.data[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u64> {
        let tok = self
            .token()
            .ok_or_else(|| Error::format(format!("truncated PGM: missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(format!("invalid PGM {what} {:?}", String::from_utf8_lossy(tok))))
    }
}

/// Decodes P2 (ASCII) or P5 (binary) PGM. Intensities are divided by maxval.
pub fn decode_pgm(bytes: &[u8], id: &str) -> Result<GrayImage> {
    let mut cur = PgmCursor { data: bytes, pos: 0 };
    let magic = cur.token().ok_or_else(|| Error::format("empty PGM"))?;
    let binary = match magic {
        b"P2" => false,
        b"P5" => true,
        other => {
            return Err(Error::format(format!(
                "unsupported magic {:?} (expected P2 or P5)",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(format!("maxval {maxval} outside [1, 65535]")));
    }
    let n = width
        .checked_mul(height)
        .filter(|n| *n <= 1 << 28)
        .ok_or_else(|| Error::format("image dimensions too large"))?;
    let scale = maxval as f64;
    let mut pixels = Vec::with_capacity(n);

    if binary {
        // exactly one whitespace byte separates maxval from the raster
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(Error::format("truncated PGM: missing raster"));
        }
        let raster = &bytes[cur.pos + 1..];
        let wide = maxval > 255;
        let need = if wide { 2 * n } else { n };
        if raster.len() < need {
            return Err(Error::format(format!(
                "truncated PGM raster: {} of {need} bytes",
                raster.len()
            )));
        }
        for i in 0..n {
            let v = if wide {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as u64
            } else {
                raster[i] as u64
            };
            if v > maxval {
                return Err(Error::format(format!("sample {v} exceeds maxval {maxval}")));
            }
            pixels.push(v as f64 / scale);
        }
    } else {
        for _ in 0..n {
            let v = cur.number("sample")?;
            if v > maxval {
                return Err(Error::format(format!("sample {v} exceeds maxval {maxval}")));
            }
            pixels.push(v as f64 / scale);
        }
    }
    GrayImage::new(id, width, height, pixels).map_err(|e| Error::format(e.to_string()))
}

/// Encodes as P5 (`binary`) or P2, quantizing to integers in `[0, maxval]`.
pub fn encode_pgm(img: &GrayImage, maxval: u16, binary: bool) -> Vec<u8> {
    let maxval = maxval.max(1);
    let q = |p: f64| (p * maxval as f64).round().clamp(0.0, maxval as f64) as u16;
    let mut out = format!("{}\n{} {}\n{}\n", if binary { "P5" } else { "P2" }, img.width, img.height, maxval).into_bytes();
    if binary {
        for &p in &img.pixels {
            if maxval > 255 {
                out.extend_from_slice(&q(p).to_be_bytes());
            } else {
                out.push(q(p) as u8);
            }
        }
    } else {
        for row in img.pixels.chunks(img.width) {
            let line: Vec<String> = row.iter().map(|&p| q(p).to_string()).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    out
}

pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    write_bytes(path, &encode_pgm(img, 255, true))
}

/// Fundus label of a patient: abnormal if either eye is abnormal.
pub fn combine_eye_labels(od: Label, os: Option<Label>) -> Label {
    if od == Label::Abnormal || os == Some(Label::Abnormal) {
        Label::Abnormal
    } else {
        Label::Normal
    }
}

/// Manifest JSON schema as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub records: Vec<ManifestRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub ecg_path: String,
    pub fundus_od_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fundus_os_path: Option<String>,
    pub ecg_label: String,
    pub fundus_od_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fundus_os_label: Option<String>,
    pub split: String,
    /// Optional ground-truth sidecar written by the synthetic generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_path: Option<String>,
}

/// One validated dataset entry with paths resolved against the manifest directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub ecg_path: PathBuf,
    pub fundus_od_path: PathBuf,
    pub fundus_os_path: Option<PathBuf>,
    pub ecg_label: Label,
    pub fundus_od_label: Label,
    pub fundus_os_label: Option<Label>,
    pub fundus_label: Label,
    pub split: Split,
    pub truth_path: Option<PathBuf>,
}

impl ManifestEntry {
    pub fn class(&self) -> ClassLabel {
        ClassLabel::from_labels(self.ecg_label, self.fundus_label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub seed: Option<u64>,
    pub records: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&text, base)
}

/// Validates a manifest document; relative paths resolve against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<DatasetManifest> {
    let file: ManifestFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    if file.records.is_empty() {
        return Err(Error::Schema("manifest has no records".into()));
    }
    let mut seen = HashSet::new();
    let resolve = |p: &str| -> Result<PathBuf> {
        let path = base.join(p);
        if path.exists() {
            Ok(path)
        } else {
            Err(Error::MissingFile(path))
        }
    };
    let mut records = Vec::with_capacity(file.records.len());
    for r in &file.records {
        if r.id.is_empty() || r.id.contains([',', '\n', '"']) {
            return Err(Error::Schema(format!("invalid record id {:?}", r.id)));
        }
        if !seen.insert(r.id.clone()) {
            return Err(Error::Schema(format!("duplicate record id {:?}", r.id)));
        }
        let ecg_label: Label = r.ecg_label.parse()?;
        let fundus_od_label: Label = r.fundus_od_label.parse()?;
        let fundus_os_label = r.fundus_os_label.as_deref().map(str::parse).transpose()?;
        if fundus_os_label.is_some() != r.fundus_os_path.is_some() {
            return Err(Error::Schema(format!(
                "record {:?}: fundus_os_path and fundus_os_label must appear together",
                r.id
            )));
        }
        let split: Split = r.split.parse()?;
        records.push(ManifestEntry {
            id: r.id.clone(),
            ecg_path: resolve(&r.ecg_path)?,
            fundus_od_path: resolve(&r.fundus_od_path)?,
            fundus_os_path: r.fundus_os_path.as_deref().map(resolve).transpose()?,
            ecg_label,
            fundus_od_label,
            fundus_os_label,
            fundus_label: combine_eye_labels(fundus_od_label, fundus_os_label),
            split,
            truth_path: r.truth_path.as_deref().map(resolve).transpose()?,
        });
    }
    Ok(DatasetManifest {
        seed: file.seed,
        records,
    })
}

pub fn save_manifest(manifest: &ManifestFile, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Schema(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Formats `v` with `digits` significant digits, trailing zeros trimmed.
/// Plain decimal notation is used for exponents in `[-5, digits)`.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v.is_nan() {
        return "NA".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..digits as i32).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Rounds to `digits` significant digits.
pub fn round_sig(v: f64, digits: usize) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", digits.max(1) - 1, v).parse().unwrap_or(v)
}

/// Significant digits used for every report float.
pub const REPORT_DIGITS: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    /// Absent or undefined value, rendered `NA`.
    Missing,
    /// Pre-formatted numeric text, emitted verbatim (e.g. one-decimal percentages).
    Fixed(String),
}

impl Cell {
    pub fn opt(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }

    pub fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_sig(*v, REPORT_DIGITS),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) | Cell::Fixed(s) => s.clone(),
            Cell::Missing => "NA".into(),
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Cell::Num(v) if v.is_finite() => serde_json::json!(round_sig(*v, REPORT_DIGITS)),
            Cell::Num(v) => serde_json::Value::String(format_sig(*v, REPORT_DIGITS)),
            Cell::Int(i) => serde_json::json!(i),
            Cell::Text(s) | Cell::Fixed(s) => serde_json::Value::String(s.clone()),
            Cell::Missing => serde_json::Value::Null,
        }
    }
}

/// Rectangular report table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        check_csv_field(self.columns.iter().map(String::as_str))?;
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(Error::param(format!(
                    "row {i} has {} cells, expected {}",
                    row.len(),
                    self.columns.len()
                )));
            }
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            check_csv_field(cells.iter().map(String::as_str))?;
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        Ok(out)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "columns": self.columns,
            "rows": self
                .rows
                .iter()
                .map(|r| r.iter().map(Cell::to_json).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        })
    }
}

fn check_csv_field<'a>(fields: impl Iterator<Item = &'a str>) -> Result<()> {
    for f in fields {
        if f.contains([',', '\n', '"']) {
            return Err(Error::param(format!("CSV field {f:?} needs quoting")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Table(Table),
    Json(serde_json::Value),
}

/// Rounds every float in a JSON tree to [`REPORT_DIGITS`] significant digits.
pub fn round_json(value: &serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::Number(n) if n.is_f64() => serde_json::json!(round_sig(n.as_f64().unwrap_or(0.0), REPORT_DIGITS)),
        Value::Array(items) => Value::Array(items.iter().map(round_json).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, v)| (k.clone(), round_json(v))).collect()),
        other => other.clone(),
    }
}

pub fn render_report(report: &Report, format: ReportFormat) -> Result<String> {
    match (report, format) {
        (Report::Table(t), ReportFormat::Csv) => t.to_csv(),
        (Report::Table(t), ReportFormat::Json) => json_text(&t.to_json()),
        (Report::Json(v), ReportFormat::Json) => json_text(&round_json(v)),
        (Report::Json(_), ReportFormat::Csv) => Err(Error::param("a JSON document cannot be written as CSV")),
    }
}

fn json_text(v: &serde_json::Value) -> Result<String> {
    // serde_json's map is ordered by key, so output is stable
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::param(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn emit_report(report: &Report, path: &Path, format: ReportFormat) -> Result<()> {
    let text = render_report(report, format)?;
    write_bytes(path, text.as_bytes())
}

/// A CSV table read back as strings.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

pub fn parse_csv_table(text: &str) -> Result<CsvTable> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::format("empty CSV"))?;
    let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if row.len() != columns.len() {
            return Err(Error::format_at(
                i + 1,
                format!("expected {} fields, found {}", columns.len(), row.len()),
            ));
        }
        rows.push(row);
    }
    Ok(CsvTable { columns, rows })
}

pub fn read_csv_table(path: &Path) -> Result<CsvTable> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_table(&text)
}

/// Parses a report cell: `NA` is missing, `inf`/`-inf` are infinities.
pub fn parse_cell(s: &str) -> Result<Option<f64>> {
    match s {
        "NA" | "" => Ok(None),
        "inf" => Ok(Some(f64::INFINITY)),
        "-inf" => Ok(Some(f64::NEG_INFINITY)),
        _ => s
            .parse()
            .map(Some)
            .map_err(|_| Error::format(format!("non-numeric cell {s:?}"))),
    }
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
