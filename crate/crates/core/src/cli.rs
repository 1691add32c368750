//! Command-line front end. Stages hand off through files: a manifest, a
//! feature table, a model file and the reports.
//!
//! Exit codes: 0 ok, 2 usage or bad parameter, 3 io or missing file,
//! 4 malformed data, 5 degenerate statistics.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dataio::{
    emit_report, load_manifest, parse_csv_table, write_bytes, Cell, ClassLabel, Report, ReportFormat, Split, Table,
};
use crate::evalstat::{all_class_metrics, anova_f, confusion, five_number, macro_average, ConfusionMatrix};
use crate::model::{Classifier, PipelineMode, TrainConfig, TrainedModel};
use crate::pipeline::{
    extract_all, feature_table, parse_feature_table, plot_tables, read_feature_table, templates_from, FeatureTable,
    SCALAR_COLUMNS,
};
use crate::synthgen::{gen_dataset, SynthParams};
use crate::transport::{EmdRefs, TemplateBank};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "cardiofuse", version, about = "ECG and fundus spectral feature fusion classifier")]
pub struct Cli {
    /// TOML or JSON file with a table per subcommand; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic dataset.
    Synth(SynthArgs),
    /// Extract a feature table from a manifest.
    Featurize(FeaturizeArgs),
    /// Train a classifier on the train split of a feature table.
    Train(TrainArgs),
    /// Score a model on one split and write per-class metrics.
    Eval(EvalArgs),
    /// Run every feature pipeline on one split and tabulate the results.
    Compare(CompareArgs),
    /// One-way ANOVA across the four classes plus per-class quartiles.
    Anova(AnovaArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Records per class.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub fs: Option<f64>,
    /// Seconds per ECG record.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub image_size: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<PipelineMode>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-record waveform, spectrum and radial-profile CSVs.
    #[arg(long)]
    pub emit_plots: bool,
    /// Reuse a template bank instead of building one from the train split.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// `both` or `normal-only`.
    #[arg(long, value_parser = parse_refs)]
    pub emd_refs: Option<EmdRefs>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// `default` (the CNN) or `emd-mlp`.
    #[arg(long, visible_alias = "classifier")]
    pub spec: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// `train`, `test`, `unassigned` or `all`.
    #[arg(long)]
    pub split: Option<String>,
    /// Report stem; `<out>.json` and `<out>.csv` are written.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<PipelineMode>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnovaArgs {
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    /// Restrict to one split; all rows by default.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    synth: SynthArgs,
    featurize: FeaturizeArgs,
    train: TrainArgs,
    eval: EvalArgs,
    compare: CompareArgs,
    anova: AnovaArgs,
}

fn parse_refs(s: &str) -> std::result::Result<EmdRefs, String> {
    match s {
        "both" => Ok(EmdRefs::Both),
        "normal-only" => Ok(EmdRefs::NormalOnly),
        _ => Err(format!("expected both or normal-only, got {s:?}")),
    }
}

// flags win over the config file, field by field
macro_rules! overlay {
    ($cli:expr, $file:expr; $($field:ident),*) => {{
        let mut c = $cli;
        let f = $file;
        $( if c.$field.is_none() { c.$field = f.$field; } )*
        c
    }};
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| Error::param(format!("config {}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Error::param(format!("config {}: {e}", path.display())))
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::param(format!("missing required flag --{flag}")))
}

/// `dir/name.ext` becomes `dir/name.<suffix>`; paths without a json/csv
/// extension keep their whole name as the stem.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let has_known_ext = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv") || e.eq_ignore_ascii_case("json"));
    let stem = if has_known_ext { path.file_stem() } else { path.file_name() };
    let stem = stem.map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn provenance(command: &str, config: &impl Serialize) -> serde_json::Value {
    json!({
        "tool": "cardiofuse",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    emit_report(&Report::Json(value.clone()), path, ReportFormat::Json)
}

fn write_csv(path: &Path, table: Table) -> Result<()> {
    emit_report(&Report::Table(table), path, ReportFormat::Csv)
}

fn percent(v: Option<f64>) -> Cell {
    v.map_or(Cell::Missing, |x| Cell::Fixed(format!("{:.1}", 100.0 * x)))
}

fn parse_split(s: &str) -> Result<Option<Split>> {
    if s == "all" {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| Error::param(format!("unknown split {s:?}")))
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Param(_) | Error::Spec(_) => 2,
        Error::Io { .. } | Error::MissingFile(_) => 3,
        Error::Degenerate(_) => 5,
        Error::Format { .. }
        | Error::TooShort { .. }
        | Error::Schema(_)
        | Error::Data(_)
        | Error::Train(_)
        | Error::Version(_) => 4,
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            if code == 2 {
                eprintln!("run with --help for usage");
            }
            code
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let file = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => cmd_synth(overlay!(a, file.synth; out, n, seed, fs, duration, image_size)),
        Command::Featurize(a) => {
            let plots = a.emit_plots || file.featurize.emit_plots;
            let mut a = overlay!(a, file.featurize; manifest, mode, out, templates, emd_refs);
            a.emit_plots = plots;
            cmd_featurize(a)
        }
        Command::Train(a) => cmd_train(overlay!(a, file.train; features, spec, epochs, seed, batch_size, lr, out)),
        Command::Eval(a) => cmd_eval(overlay!(a, file.eval; model, features, split, out)),
        Command::Compare(a) => {
            cmd_compare(overlay!(a, file.compare; manifest, methods, seed, epochs, batch_size, lr, out))
        }
        Command::Anova(a) => cmd_anova(overlay!(a, file.anova; features, columns, split, out)),
    }
}

#[derive(Serialize)]
struct SynthResolved<'a> {
    out: &'a Path,
    params: &'a SynthParams,
}

pub fn cmd_synth(a: SynthArgs) -> Result<()> {
    let out = required(a.out, "out")?;
    let d = SynthParams::default();
    let params = SynthParams {
        n_per_class: a.n.unwrap_or(d.n_per_class),
        seed: a.seed.unwrap_or(d.seed),
        fs: a.fs.unwrap_or(d.fs),
        duration: a.duration.unwrap_or(d.duration),
        image_size: a.image_size.unwrap_or(d.image_size),
        ..d
    };
    params.validate()?;
    let manifest = gen_dataset(&params, &out)?;
    let cfg = SynthResolved { out: &out, params: &params };
    write_json(&out.join("synth.meta.json"), &provenance("synth", &cfg))?;
    println!("wrote {} records to {}", manifest.records.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct FeaturizeResolved<'a> {
    manifest: &'a Path,
    manifest_seed: Option<u64>,
    mode: PipelineMode,
    out: &'a Path,
    emit_plots: bool,
    templates: Option<PathBuf>,
    templates_built: bool,
    emd_refs: EmdRefs,
}

pub fn cmd_featurize(a: FeaturizeArgs) -> Result<()> {
    let manifest_path = required(a.manifest, "manifest")?;
    let mode = required(a.mode, "mode")?;
    let out = required(a.out, "out")?;
    let refs = a.emd_refs.unwrap_or_default();
    let manifest = load_manifest(&manifest_path)?;
    let records = extract_all(&manifest, mode, a.emit_plots)?;

    let mut templates_path = a.templates.clone();
    let mut built = false;
    let bank = match (mode, &a.templates) {
        (PipelineMode::FftEmd, Some(p)) => {
            if !p.exists() {
                return Err(Error::MissingFile(p.clone()));
            }
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Some(TemplateBank::from_json(&text)?)
        }
        (PipelineMode::FftEmd, None) => {
            let bank = templates_from(&records)?;
            let p = sibling(&out, "templates.json");
            write_bytes(&p, bank.to_json()?.as_bytes())?;
            templates_path = Some(p);
            built = true;
            Some(bank)
        }
        _ => None,
    };

    let table = feature_table(&records, mode, bank.as_ref(), refs)?;
    let n_cols = table.columns.len();
    write_csv(&out, table)?;
    if a.emit_plots {
        let dir = out.parent().unwrap_or(Path::new(".")).join("plots");
        for r in &records {
            for (name, t) in plot_tables(r)? {
                write_csv(&dir.join(name), t)?;
            }
        }
    }
    let cfg = FeaturizeResolved {
        manifest: &manifest_path,
        manifest_seed: manifest.seed,
        mode,
        out: &out,
        emit_plots: a.emit_plots,
        templates: templates_path,
        templates_built: built,
        emd_refs: refs,
    };
    write_json(&sibling(&out, "meta.json"), &provenance("featurize", &cfg))?;
    println!("wrote {} rows x {} columns to {}", records.len(), n_cols, out.display());
    Ok(())
}

fn parse_classifier(s: &str) -> Result<Classifier> {
    match s {
        "default" => Ok(Classifier::Cnn),
        other => other.parse(),
    }
}

fn training_rows(table: &FeatureTable) -> Result<Vec<(crate::model::FeatureVector, ClassLabel)>> {
    let rows: Vec<_> = table.split(Split::Train).map(|r| (r.vector.clone(), r.class)).collect();
    if rows.is_empty() {
        return Err(Error::Data("feature table has no train rows".into()));
    }
    Ok(rows)
}

fn train_config(epochs: Option<usize>, seed: Option<u64>, batch_size: Option<usize>, lr: Option<f64>) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        epochs: epochs.unwrap_or(d.epochs),
        seed: seed.unwrap_or(d.seed),
        batch_size: batch_size.unwrap_or(d.batch_size),
        lr: lr.unwrap_or(d.lr),
        ..d
    }
}

/// EMD reference choice recorded by `featurize`, if its sidecar is present.
fn featurize_refs(features: &Path) -> EmdRefs {
    let meta = sibling(features, "meta.json");
    std::fs::read_to_string(meta)
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| serde_json::from_value(v["config"]["emd_refs"].clone()).ok())
        .unwrap_or_default()
}

#[derive(Serialize)]
struct TrainResolved<'a> {
    features: &'a Path,
    spec: &'a str,
    out: &'a Path,
    train: TrainConfig,
    train_rows: usize,
}

pub fn cmd_train(a: TrainArgs) -> Result<()> {
    let features = required(a.features, "features")?;
    let out = required(a.out, "out")?;
    let spec_name = a.spec.unwrap_or_else(|| "default".into());
    let classifier = parse_classifier(&spec_name)?;
    let config = train_config(a.epochs, a.seed, a.batch_size, a.lr);
    config.validate()?;
    let table = read_feature_table(&features)?;
    let data = training_rows(&table)?;
    let (mut model, history) = TrainedModel::fit(table.mode, classifier, &data, &config)?;
    model.emd_refs = featurize_refs(&features);
    let templates = sibling(&features, "templates.json");
    if table.mode == PipelineMode::FftEmd && templates.exists() {
        model.templates_path = Some(templates.to_string_lossy().into_owned());
    }
    model.save(&out)?;

    let mut hist = Table::new(["epoch", "loss", "train_acc"]);
    for h in &history {
        hist.push(vec![Cell::Int(h.epoch as i64), Cell::Num(h.loss), Cell::Num(h.train_acc)]);
    }
    write_csv(&sibling(&out, "history.csv"), hist)?;
    let cfg = TrainResolved {
        features: &features,
        spec: &spec_name,
        out: &out,
        train: config,
        train_rows: data.len(),
    };
    write_json(&sibling(&out, "meta.json"), &provenance("train", &cfg))?;
    match history.last() {
        Some(h) => println!("trained {} epochs, final loss {:.4}, train accuracy {:.3}", h.epoch, h.loss, h.train_acc),
        None => println!("wrote untrained model ({} epochs)", config.epochs),
    }
    Ok(())
}

/// Table with four class rows and an `overall` row, rates as percentages.
/// The overall row carries the overall accuracy and macro-averaged
/// sensitivity and specificity.
pub fn metrics_table(cm: &ConfusionMatrix) -> Table {
    let per_class = all_class_metrics(cm);
    let mut t = Table::new(["class", "accuracy", "sensitivity", "specificity"]);
    for m in &per_class {
        t.push(vec![
            Cell::Text(m.class.as_str().into()),
            percent(m.accuracy),
            percent(m.sensitivity),
            percent(m.specificity),
        ]);
    }
    let (_, sens, spec) = macro_average(&per_class);
    t.push(vec![
        Cell::Text("overall".into()),
        percent(cm.overall_accuracy()),
        percent(sens),
        percent(spec),
    ]);
    t
}

#[derive(Serialize)]
struct EvalResolved<'a> {
    model: &'a Path,
    features: &'a Path,
    split: &'a str,
    out: &'a Path,
    train_seed: u64,
}

pub fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model_path = required(a.model, "model")?;
    let features = required(a.features, "features")?;
    let out = required(a.out, "out")?;
    let split_name = a.split.unwrap_or_else(|| "test".into());
    let split = parse_split(&split_name)?;
    let model = TrainedModel::load(&model_path)?;
    let table = read_feature_table(&features)?;
    if table.mode != model.pipeline {
        return Err(Error::Data(format!(
            "model expects {} features, table holds {}",
            model.pipeline, table.mode
        )));
    }
    let rows: Vec<_> = table.rows.iter().filter(|r| split.is_none_or(|s| r.split == s)).collect();
    if rows.is_empty() {
        return Err(Error::Data(format!("no rows in split {split_name}")));
    }
    let mut preds = Vec::with_capacity(rows.len());
    let mut per_record = Vec::with_capacity(rows.len());
    for r in &rows {
        let (p, probs) = model.predict(&r.vector).map_err(|e| e.in_record(&r.id))?;
        preds.push(p);
        per_record.push(json!({ "id": r.id, "class": r.class, "predicted": p, "probs": probs }));
    }
    let truths: Vec<ClassLabel> = rows.iter().map(|r| r.class).collect();
    let cm = confusion(&preds, &truths)?;
    let per_class = all_class_metrics(&cm);
    let (macro_acc, macro_sens, macro_spec) = macro_average(&per_class);
    let cfg = EvalResolved {
        model: &model_path,
        features: &features,
        split: &split_name,
        out: &out,
        train_seed: model.train_seed,
    };
    let report = json!({
        "provenance": provenance("eval", &cfg),
        "pipeline": model.pipeline,
        "classifier": model.classifier,
        "n": rows.len(),
        "confusion": { "classes": ClassLabel::ALL, "counts": cm.counts },
        "classes": per_class,
        "overall": {
            "accuracy": cm.overall_accuracy(),
            "macro_accuracy": macro_acc,
            "macro_sensitivity": macro_sens,
            "macro_specificity": macro_spec,
        },
        "predictions": per_record,
    });
    write_json(&sibling(&out, "json"), &report)?;
    write_csv(&sibling(&out, "csv"), metrics_table(&cm))?;
    println!(
        "{} rows, overall accuracy {:.3}",
        rows.len(),
        cm.overall_accuracy().unwrap_or(f64::NAN)
    );
    Ok(())
}

/// Featurize, train and score one pipeline; the feature table goes through
/// its CSV form so results match the file-based stages exactly.
fn run_method(
    manifest: &crate::dataio::DatasetManifest,
    mode: PipelineMode,
    config: &TrainConfig,
) -> Result<ConfusionMatrix> {
    let records = extract_all(manifest, mode, false)?;
    let bank = match mode {
        PipelineMode::FftEmd => Some(templates_from(&records)?),
        _ => None,
    };
    let csv = feature_table(&records, mode, bank.as_ref(), EmdRefs::Both)?.to_csv()?;
    let table = parse_feature_table(&parse_csv_table(&csv)?)?;
    let (model, _) = TrainedModel::fit(mode, Classifier::Cnn, &training_rows(&table)?, config)?;
    let test: Vec<_> = table.split(Split::Test).collect();
    if test.is_empty() {
        return Err(Error::Data("manifest has no test records".into()));
    }
    let mut preds = Vec::with_capacity(test.len());
    for r in &test {
        preds.push(model.predict(&r.vector).map_err(|e| e.in_record(&r.id))?.0);
    }
    let truths: Vec<ClassLabel> = test.iter().map(|r| r.class).collect();
    confusion(&preds, &truths)
}

#[derive(Serialize)]
struct CompareResolved<'a> {
    manifest: &'a Path,
    manifest_seed: Option<u64>,
    methods: &'a [PipelineMode],
    classifier: Classifier,
    out: &'a Path,
    train: TrainConfig,
}

pub fn cmd_compare(a: CompareArgs) -> Result<()> {
    let manifest_path = required(a.manifest, "manifest")?;
    let out = required(a.out, "out")?;
    let methods = a.methods.unwrap_or_else(|| PipelineMode::ALL.to_vec());
    if methods.is_empty() {
        return Err(Error::param("--methods is empty"));
    }
    let config = train_config(a.epochs, a.seed, a.batch_size, a.lr);
    config.validate()?;
    let manifest = load_manifest(&manifest_path)?;

    let mut table = Table::new(["method", "accuracy", "sensitivity", "specificity"]);
    let mut results = BTreeMap::new();
    for &mode in &methods {
        let cm = run_method(&manifest, mode, &config)?;
        let per_class = all_class_metrics(&cm);
        let (_, sens, spec) = macro_average(&per_class);
        let acc = cm.overall_accuracy();
        table.push(vec![Cell::Text(mode.as_str().into()), percent(acc), percent(sens), percent(spec)]);
        results.insert(
            mode.as_str(),
            json!({ "accuracy": acc, "sensitivity": sens, "specificity": spec, "confusion": cm.counts }),
        );
        println!("{mode}: accuracy {:.3}", acc.unwrap_or(f64::NAN));
    }
    write_csv(&out, table)?;
    let cfg = CompareResolved {
        manifest: &manifest_path,
        manifest_seed: manifest.seed,
        methods: &methods,
        classifier: Classifier::Cnn,
        out: &out,
        train: config,
    };
    let mut meta = provenance("compare", &cfg);
    meta["results"] = json!(results);
    write_json(&sibling(&out, "meta.json"), &meta)
}

#[derive(Serialize)]
struct AnovaResolved<'a> {
    features: &'a Path,
    columns: &'a [String],
    split: &'a str,
    out: &'a Path,
}

pub fn cmd_anova(a: AnovaArgs) -> Result<()> {
    let features = required(a.features, "features")?;
    let out = required(a.out, "out")?;
    let split_name = a.split.unwrap_or_else(|| "all".into());
    let split = parse_split(&split_name)?;
    let table = read_feature_table(&features)?;
    let columns = a
        .columns
        .unwrap_or_else(|| SCALAR_COLUMNS.iter().map(|c| c.to_string()).collect());
    if columns.is_empty() {
        return Err(Error::param("--columns is empty"));
    }

    let mut stats = Table::new(["feature", "f_stat", "p_value", "significant"]);
    let mut quart = Table::new(["feature", "class", "min", "q1", "median", "q3", "max"]);
    let mut degenerate = Vec::new();
    for name in &columns {
        let col = table
            .column(name)
            .ok_or_else(|| Error::param(format!("feature table has no column {name:?}")))?;
        let mut groups: Vec<Vec<f64>> = vec![Vec::new(); 4];
        for (row, v) in table.rows.iter().zip(col) {
            if split.is_some_and(|s| row.split != s) {
                continue;
            }
            if let Some(v) = v.filter(|v| v.is_finite()) {
                groups[row.class.index()].push(v);
            }
        }
        match anova_f(name, &groups) {
            Ok(r) => stats.push(vec![
                Cell::Text(name.clone()),
                Cell::Num(r.f_stat),
                Cell::Num(r.p_value),
                Cell::Text(r.significant.to_string()),
            ]),
            Err(Error::Degenerate(_)) => {
                stats.push(vec![
                    Cell::Text(name.clone()),
                    Cell::Fixed("inf".into()),
                    Cell::Missing,
                    Cell::Missing,
                ]);
                degenerate.push(name.clone());
            }
            Err(e) => return Err(e),
        }
        for (class, g) in ClassLabel::ALL.iter().zip(&groups) {
            let mut row = vec![Cell::Text(name.clone()), Cell::Text(class.as_str().into())];
            match five_number(g) {
                Ok(f) => row.extend([f.min, f.q1, f.median, f.q3, f.max].map(Cell::Num)),
                Err(_) => row.extend(std::iter::repeat_n(Cell::Missing, 5)),
            }
            quart.push(row);
        }
    }
    let main = if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        out.clone()
    } else {
        sibling(&out, "csv")
    };
    write_csv(&main, stats)?;
    write_csv(&sibling(&out, "quartiles.csv"), quart)?;
    let cfg = AnovaResolved {
        features: &features,
        columns: &columns,
        split: &split_name,
        out: &out,
    };
    write_json(&sibling(&out, "meta.json"), &provenance("anova", &cfg))?;
    if degenerate.is_empty() {
        println!("tested {} columns", columns.len());
        Ok(())
    } else {
        Err(Error::Degenerate(format!(
            "zero within-class variance in {}",
            degenerate.join(", ")
        )))
    }
}
