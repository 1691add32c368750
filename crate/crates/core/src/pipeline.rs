//! Per-record feature extraction over a dataset manifest, the feature-table
//! interchange format, and the plot-data files.

use std::collections::BTreeMap;
use std::path::Path;

use crate::baselines::{hog_features, wt_features, HogFeatures, WtFeatures, HOG_BINS, HOG_CELL, WT_LEVELS};
use crate::dataio::{
    parse_cell, parse_ecg_csv, parse_pgm, ClassLabel, CsvTable, DatasetManifest, EcgRecord, ManifestEntry, Split, Table,
    Cell,
};
use crate::ecg_prep::{preprocess, EcgScalarFeatures, BEAT_LEN, BEAT_POST_S, BEAT_PRE_S};
use crate::model::{assemble_input, FeatureVector, PipelineMode};
use crate::par::map_indices;
use crate::spectral::{beat_avg_spectrum, mean_spectrum, radial_spectrum, Spectrum, ECG_BINS, FUNDUS_BINS};
use crate::synthgen::read_truth;
use crate::transport::{build_templates, emd_features, EmdRefs, TemplateBank, TemplateInput, EMD_COLUMNS};
use crate::{Error, Result};

/// Scalar columns appended to every feature table, in order.
pub const SCALAR_COLUMNS: [&str; 5] = ["hrv_sdnn", "qrs_width_var", "mean_hr", "hf_ratio", "tortuosity"];

/// Lower edge of the band counted by `hf_ratio`, Hz.
pub const HF_CUTOFF_HZ: f64 = 10.0;

/// Beat windows are resampled to 256 points spanning 0.8 s.
pub fn beat_sample_rate() -> f64 {
    BEAT_LEN as f64 / (BEAT_PRE_S + BEAT_POST_S)
}

/// Everything extracted from one manifest record.
#[derive(Debug, Clone)]
pub struct RecordFeatures {
    pub id: String,
    pub class: ClassLabel,
    pub split: Split,
    pub ecg_spectrum: Spectrum,
    /// Radial spectrum averaged over the available eyes.
    pub fundus_spectrum: Spectrum,
    pub scalars: EcgScalarFeatures,
    pub hf_ratio: f64,
    pub tortuosity: Option<f64>,
    pub wt: Option<WtFeatures>,
    pub hog: Option<HogFeatures>,
    /// Bandpassed record, kept only when plots are requested.
    pub filtered: Option<EcgRecord>,
}

/// Fraction of spectral mass at or above [`HF_CUTOFF_HZ`].
pub fn hf_ratio(ecg_spectrum: &Spectrum) -> f64 {
    let rate = beat_sample_rate();
    ecg_spectrum
        .weights
        .iter()
        .zip(&ecg_spectrum.centers)
        .filter(|(_, c)| **c * rate >= HF_CUTOFF_HZ)
        .map(|(w, _)| w)
        .sum()
}

fn extract_one(entry: &ManifestEntry, mode: PipelineMode, keep_filtered: bool) -> Result<RecordFeatures> {
    let mut record = parse_ecg_csv(&entry.ecg_path)?;
    record.id = entry.id.clone();
    let pre = preprocess(&record)?;
    if pre.beats.is_empty() {
        return Err(Error::Data(format!("no complete beats among {} detected peaks", pre.peaks.len())));
    }
    let ecg_spectrum = beat_avg_spectrum(&pre.beats, ECG_BINS)?;

    let mut eyes = vec![parse_pgm(&entry.fundus_od_path)?];
    if let Some(os) = &entry.fundus_os_path {
        eyes.push(parse_pgm(os)?);
    }
    let radial = eyes
        .iter()
        .map(|img| radial_spectrum(img, FUNDUS_BINS).map(|r| r.spectrum))
        .collect::<Result<Vec<_>>>()?;
    let fundus_spectrum = mean_spectrum(&radial)?;

    let wt = match mode {
        PipelineMode::Wt => Some(wt_features(&pre.beats, WT_LEVELS)?),
        _ => None,
    };
    let hog = match mode {
        PipelineMode::Hog => {
            let per_eye = eyes
                .iter()
                .map(|img| hog_features(img, HOG_CELL, HOG_BINS))
                .collect::<Result<Vec<_>>>()?;
            let mut mean = per_eye[0].clone();
            for other in &per_eye[1..] {
                mean.descriptor.iter_mut().zip(&other.descriptor).for_each(|(a, b)| *a += b);
            }
            let n = per_eye.len() as f64;
            mean.descriptor.iter_mut().for_each(|v| *v /= n);
            Some(mean)
        }
        _ => None,
    };
    let tortuosity = match &entry.truth_path {
        Some(p) => Some(read_truth(p)?.tortuosity),
        None => None,
    };
    Ok(RecordFeatures {
        id: entry.id.clone(),
        class: entry.class(),
        split: entry.split,
        hf_ratio: hf_ratio(&ecg_spectrum),
        ecg_spectrum,
        fundus_spectrum,
        scalars: pre.scalars,
        tortuosity,
        wt,
        hog,
        filtered: keep_filtered.then_some(pre.filtered),
    })
}

/// Extracts features for every record, in manifest order. A failure names
/// the first record (in manifest order) that could not be processed.
pub fn extract_all(manifest: &DatasetManifest, mode: PipelineMode, keep_filtered: bool) -> Result<Vec<RecordFeatures>> {
    map_indices(manifest.records.len(), |i| {
        let entry = &manifest.records[i];
        extract_one(entry, mode, keep_filtered).map_err(|e| e.in_record(&entry.id))
    })
    .into_iter()
    .collect()
}

/// Class templates from the training records.
pub fn templates_from(records: &[RecordFeatures]) -> Result<TemplateBank> {
    let mut bank = build_templates(records.iter().filter(|r| r.split == Split::Train).map(|r| TemplateInput {
        id: &r.id,
        ecg_label: r.class.ecg(),
        fundus_label: r.class.fundus(),
        ecg: &r.ecg_spectrum,
        fundus: &r.fundus_spectrum,
    }))?;
    bank.split = Split::Train.as_str().to_string();
    Ok(bank)
}

pub fn feature_columns(mode: PipelineMode) -> Vec<String> {
    match mode {
        PipelineMode::FftEmd => (1..=ECG_BINS)
            .map(|k| format!("ecg_f{k:03}"))
            .chain((0..FUNDUS_BINS).map(|k| format!("fundus_r{k:02}")))
            .chain(EMD_COLUMNS.iter().map(|c| c.to_string()))
            .collect(),
        PipelineMode::Wt => (1..=WT_LEVELS)
            .map(|l| format!("wt_d{l}"))
            .chain(std::iter::once(format!("wt_a{WT_LEVELS}")))
            .collect(),
        PipelineMode::Hog => (0..hog_len()).map(|i| format!("hog_{i:04}")).collect(),
    }
}

fn hog_len() -> usize {
    let cells = crate::spectral::CANONICAL_SIDE / HOG_CELL;
    (cells - 1) * (cells - 1) * 4 * HOG_BINS
}

/// Feature table: `id,class,split`, the mode's feature columns, then [`SCALAR_COLUMNS`].
pub fn feature_table(
    records: &[RecordFeatures],
    mode: PipelineMode,
    bank: Option<&TemplateBank>,
    refs: EmdRefs,
) -> Result<Table> {
    let mut columns = vec!["id".to_string(), "class".to_string(), "split".to_string()];
    columns.extend(feature_columns(mode));
    columns.extend(SCALAR_COLUMNS.iter().map(|c| c.to_string()));
    let mut table = Table::new(columns);
    for r in records {
        let mut row = vec![
            Cell::Text(r.id.clone()),
            Cell::Text(r.class.as_str().to_string()),
            Cell::Text(r.split.as_str().to_string()),
        ];
        let features: Vec<f64> = match mode {
            PipelineMode::FftEmd => {
                let bank = bank.ok_or_else(|| Error::param("fft-emd features need a template bank"))?;
                let emd = emd_features(&r.ecg_spectrum, &r.fundus_spectrum, bank, refs).map_err(|e| e.in_record(&r.id))?;
                r.ecg_spectrum
                    .weights
                    .iter()
                    .chain(&r.fundus_spectrum.weights)
                    .chain(&emd)
                    .copied()
                    .collect()
            }
            PipelineMode::Wt => r.wt.as_ref().ok_or_else(|| Error::param("wavelet features missing"))?.level_energies.clone(),
            PipelineMode::Hog => r.hog.as_ref().ok_or_else(|| Error::param("HOG features missing"))?.descriptor.clone(),
        };
        row.extend(features.into_iter().map(Cell::Num));
        row.extend([
            Cell::opt(r.scalars.hrv_sdnn),
            Cell::opt(r.scalars.qrs_width_var),
            Cell::opt(r.scalars.mean_hr),
            Cell::Num(r.hf_ratio),
            Cell::opt(r.tortuosity),
        ]);
        table.push(row);
    }
    Ok(table)
}

/// One parsed feature-table row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub id: String,
    pub class: ClassLabel,
    pub split: Split,
    pub vector: FeatureVector,
}

/// A feature table read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub mode: PipelineMode,
    pub rows: Vec<FeatureRow>,
    /// Every numeric column by name, `None` for `NA` cells.
    pub columns: BTreeMap<String, Vec<Option<f64>>>,
}

impl FeatureTable {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &FeatureRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.columns.get(name).map(Vec::as_slice)
    }
}

fn detect_mode(columns: &[String]) -> Result<PipelineMode> {
    let first = columns.get(3).map(String::as_str).unwrap_or("");
    if first.starts_with("ecg_f") {
        Ok(PipelineMode::FftEmd)
    } else if first.starts_with("wt_") {
        Ok(PipelineMode::Wt)
    } else if first.starts_with("hog_") {
        Ok(PipelineMode::Hog)
    } else {
        Err(Error::Schema(format!("cannot tell the pipeline from column {first:?}")))
    }
}

pub fn parse_feature_table(csv: &CsvTable) -> Result<FeatureTable> {
    if csv.columns.len() < 3 || csv.columns[..3] != ["id", "class", "split"] {
        return Err(Error::Schema("feature table must start with id,class,split".into()));
    }
    let mode = detect_mode(&csv.columns)?;
    let feature_names = feature_columns(mode);
    let idx: Vec<usize> = feature_names
        .iter()
        .map(|name| csv.column(name).ok_or_else(|| Error::Schema(format!("missing feature column {name}"))))
        .collect::<Result<_>>()?;
    let mut columns: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    let mut rows = Vec::with_capacity(csv.rows.len());
    for (line, raw) in csv.rows.iter().enumerate() {
        let id = raw[0].clone();
        let at = |e: Error| match e {
            Error::Format { msg, .. } => Error::format_at(line + 2, format!("record {id}: {msg}")),
            other => other.in_record(&id),
        };
        let class: ClassLabel = raw[1].parse().map_err(at)?;
        let split: Split = raw[2].parse().map_err(at)?;
        let mut numeric = Vec::with_capacity(raw.len() - 3);
        for (name, cell) in csv.columns.iter().zip(raw).skip(3) {
            let v = parse_cell(cell).map_err(at)?;
            columns.entry(name.clone()).or_default().push(v);
            numeric.push(v);
        }
        let values: Vec<f64> = idx
            .iter()
            .map(|&i| numeric[i - 3].ok_or_else(|| at(Error::format("missing feature value"))))
            .collect::<Result<_>>()?;
        let vector = vector_from_features(mode, &values).map_err(at)?;
        rows.push(FeatureRow { id, class, split, vector });
    }
    if rows.is_empty() {
        return Err(Error::Schema("feature table has no rows".into()));
    }
    Ok(FeatureTable { mode, rows, columns })
}

pub fn read_feature_table(path: &Path) -> Result<FeatureTable> {
    parse_feature_table(&crate::dataio::read_csv_table(path)?)
}

/// Classifier input from the raw feature columns of one row.
pub fn vector_from_features(mode: PipelineMode, values: &[f64]) -> Result<FeatureVector> {
    match mode {
        PipelineMode::FftEmd => FeatureVector::new(mode, values.to_vec()),
        PipelineMode::Wt => assemble_input(
            mode,
            None,
            None,
            None,
            Some(&WtFeatures {
                level_energies: values.to_vec(),
            }),
            None,
        ),
        PipelineMode::Hog => {
            let cells = crate::spectral::CANONICAL_SIDE / HOG_CELL;
            let hog = HogFeatures {
                descriptor: values.to_vec(),
                cells_x: cells,
                cells_y: cells,
                bins: HOG_BINS,
            };
            assemble_input(mode, None, None, None, None, Some(&hog))
        }
    }
}

/// Plot-data tables for one record: filtered waveform, beat spectrum and
/// fundus radial spectrum, keyed by file suffix.
pub fn plot_tables(r: &RecordFeatures) -> Result<Vec<(String, Table)>> {
    let filtered = r
        .filtered
        .as_ref()
        .ok_or_else(|| Error::param("plots need the filtered waveform"))?;
    let mut wave = Table::new(["time", "voltage"]);
    for (i, v) in filtered.samples.iter().enumerate() {
        wave.push(vec![Cell::Num(i as f64 / filtered.fs), Cell::Num(*v)]);
    }
    let rate = beat_sample_rate();
    let mut fft = Table::new(["freq", "magnitude"]);
    for (c, w) in r.ecg_spectrum.centers.iter().zip(&r.ecg_spectrum.weights) {
        fft.push(vec![Cell::Num(c * rate), Cell::Num(*w)]);
    }
    let mut radial = Table::new(["radius", "weight"]);
    for (c, w) in r.fundus_spectrum.centers.iter().zip(&r.fundus_spectrum.weights) {
        radial.push(vec![Cell::Num(*c), Cell::Num(*w)]);
    }
    Ok(vec![
        (format!("{}_ecg_wave.csv", r.id), wave),
        (format!("{}_ecg_fft.csv", r.id), fft),
        (format!("{}_fundus_radial.csv", r.id), radial),
    ])
}
