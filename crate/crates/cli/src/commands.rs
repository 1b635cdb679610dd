use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hst_core::checksum::sha256_hex;
use hst_core::data::{
    fit_preparation, generate_synthetic, generate_synthetic_records, load_ujiindoorloc_csv, read_cache, write_cache,
    Dataset, SyntheticConfig, UjiRole,
};
use hst_core::eval::{evaluate, format_table, Estimate, ErrorModel, ErrorStats, EvalReport};
use hst_core::experiment::{run_experiment, ExperimentConfig, ExperimentRun, Timing};
use hst_core::models::{BundleManifest, ModelBundle, ModelKind, BUNDLE_FILE};
use hst_core::Scalar;
use serde::{Deserialize, Serialize};

use crate::config::{resolve_data, DataSource, Dtype, RunConfig};
use crate::error::{CliError, CliResult};

pub const RUN_FILE: &str = "run.json";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const TIMING_FILE: &str = "timing.json";
pub const TRACE_FILE: &str = "loss_trace.csv";

fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<D> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Builds a directory next to `out` and moves it into place only once
/// `fill` succeeds, so a failed command leaves no partial output.
fn publish_dir(out: &Path, force: bool, fill: impl FnOnce(&Path) -> CliResult<()>) -> CliResult<()> {
    if out.exists() && !force {
        return Err(CliError::config(format!("{} already exists; pass --force to replace it", out.display())));
    }
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent)?;
    let staging = tempfile::Builder::new().prefix(".hst-staging-").tempdir_in(&parent)?;
    fill(staging.path())?;
    if out.exists() {
        std::fs::remove_dir_all(out)?;
    }
    std::fs::rename(staging.keep(), out)?;
    Ok(())
}

pub fn prepare_data(train_csv: &Path, test_csv: &Path, out: &Path, force: bool) -> CliResult<(usize, usize)> {
    let train = load_ujiindoorloc_csv(train_csv, UjiRole::Train)?;
    let test = load_ujiindoorloc_csv(test_csv, UjiRole::Test)?;
    let (site, scaler) = fit_preparation(&train, &test)?;
    let source = format!(
        "ujiindoorloc train={} test={}",
        train_csv.file_name().unwrap_or_default().to_string_lossy(),
        test_csv.file_name().unwrap_or_default().to_string_lossy()
    );
    publish_dir(out, force, |dir| {
        write_cache(dir, &source, &site, &scaler, &train, &test)?;
        Ok(())
    })?;
    Ok((train.len(), test.len()))
}

pub fn synth(site: Option<&Path>, seed: u64, out: &Path, force: bool) -> CliResult<(usize, usize)> {
    let cfg: SyntheticConfig = match site {
        Some(p) => read_json(p).map_err(|e| CliError::config(e.message))?,
        None => SyntheticConfig::default(),
    };
    cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
    let (train, test) = generate_synthetic_records(&cfg, seed)?;
    let scaler = hst_core::data::ScalerParams::fit(&train)?;
    let site = cfg.site()?;
    publish_dir(out, force, |dir| {
        write_cache(dir, &format!("synthetic seed={seed}"), &site, &scaler, &train, &test)?;
        write_json(&dir.join("synthetic.json"), &cfg)
    })?;
    Ok((train.len(), test.len()))
}

struct LoadedData {
    train: Dataset,
    test: Dataset,
    /// Identifies the evaluated split.
    test_id: String,
}

fn load_data(source: &DataSource) -> CliResult<LoadedData> {
    match source {
        DataSource::Cache(dir) => {
            let prepared = read_cache(dir)?;
            let test_id = prepared
                .manifest
                .files
                .get(hst_core::data::cache::TEST_FILE)
                .map(|d| format!("sha256:{d}"))
                .unwrap_or_default();
            Ok(LoadedData { train: prepared.train_dataset()?, test: prepared.test_dataset()?, test_id })
        }
        DataSource::Synthetic { config, seed } => {
            let s = generate_synthetic(config, *seed)?;
            let id = sha256_hex(serde_json::to_string(config)?.as_bytes());
            Ok(LoadedData { train: s.train, test: s.test, test_id: format!("synthetic:{seed}:{id}") })
        }
    }
}

fn truths(ds: &Dataset) -> Vec<Estimate> {
    (0..ds.len())
        .map(|i| Estimate { building: ds.buildings[i], floor: ds.floors[i], coords: ds.coords[i] })
        .collect()
}

fn report_for<T: Scalar>(bundle: &ModelBundle<T>, data: &Dataset, id: &str, model: &ErrorModel) -> CliResult<EvalReport> {
    if bundle.site != data.site {
        return Err(CliError::data(format!(
            "model was trained for site {:?}, data has {:?}",
            bundle.site, data.site
        )));
    }
    let mut r = evaluate(&bundle.predict_dataset(data)?, &truths(data), model)?;
    r.label = bundle.kind.label().to_string();
    r.dataset_id = id.to_string();
    Ok(r)
}

fn write_report(dir: &Path, report: &EvalReport) -> CliResult<()> {
    write_json(&dir.join(REPORT_FILE), report)?;
    std::fs::write(dir.join(REPORT_TEXT), format_table(std::slice::from_ref(report)))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Hst,
    Reference,
}

/// Written next to the bundle; `report` reads it back.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: ModelKind,
    pub seed: u64,
    pub dtype: Dtype,
    pub dataset_id: String,
    pub experiment: ExperimentConfig,
    pub error_model: ErrorModel,
    pub validation_records: usize,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub epochs: usize,
    pub steps: usize,
    pub best_epoch: Option<usize>,
    pub best_loss: Option<f64>,
    pub stopped_early: bool,
    pub checksum: String,
}

pub struct TrainArgs<'a> {
    pub config: &'a Path,
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub out: Option<&'a Path>,
    pub data: Option<&'a Path>,
}

pub struct TrainSummary {
    pub out: PathBuf,
    pub report: EvalReport,
    pub timing: Timing,
}

pub fn train(args: &TrainArgs) -> CliResult<TrainSummary> {
    let mut rc = RunConfig::load(args.config)?;
    if let Some(s) = args.seed {
        rc.seed = Some(s);
    }
    if let Some(mode) = args.mode {
        let linked = rc.model.is_linked();
        if linked != (mode == Mode::Hst) {
            return Err(CliError::config(format!(
                "--mode {} does not fit model {}",
                if mode == Mode::Hst { "hst" } else { "reference" },
                rc.model
            )));
        }
    }
    let cfg = rc.experiment()?;
    let out = args
        .out
        .map(Path::to_path_buf)
        .or_else(|| rc.output_dir.clone())
        .ok_or_else(|| CliError::config("no output directory: pass --out or set `output_dir`"))?;
    let data = load_data(&resolve_data(args.data, rc.data.as_ref())?)?;
    std::fs::create_dir_all(&out)?;
    match rc.dtype {
        Dtype::F32 => finish_training::<f32>(&rc, &cfg, &data, &out),
        Dtype::F64 => finish_training::<f64>(&rc, &cfg, &data, &out),
    }
}

fn finish_training<T: Scalar>(rc: &RunConfig, cfg: &ExperimentConfig, data: &LoadedData, out: &Path) -> CliResult<TrainSummary> {
    let run: ExperimentRun<T> = run_experiment(cfg, &data.train, out)?;
    write_trace(&out.join(TRACE_FILE), &run)?;
    write_json(&out.join(TIMING_FILE), &run.timing)?;
    let record = RunRecord {
        model: cfg.kind,
        seed: cfg.seed,
        dtype: rc.dtype,
        dataset_id: data.test_id.clone(),
        experiment: cfg.clone(),
        error_model: rc.error_model,
        validation_records: run.validation_records,
        stages: run
            .stages
            .iter()
            .map(|s| StageRecord {
                stage: s.stage,
                epochs: s.outcome.trace.len(),
                steps: s.outcome.steps,
                best_epoch: s.outcome.best_epoch,
                best_loss: s.outcome.best_loss,
                stopped_early: s.outcome.stopped_early,
                checksum: s.checksum.clone(),
            })
            .collect(),
    };
    write_json(&out.join(RUN_FILE), &record)?;
    let report = report_for(&run.bundle, &data.test, &data.test_id, &rc.error_model)?;
    write_report(out, &report)?;
    Ok(TrainSummary { out: out.to_path_buf(), report, timing: run.timing })
}

fn write_trace<T>(path: &Path, run: &ExperimentRun<T>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["stage", "epoch", "train_loss", "val_loss", "learning_rate"])?;
    let sae = run.sae.iter().map(|s| (0, &s.outcome));
    let stages = run.stages.iter().map(|s| (s.stage, &s.outcome));
    for (stage, outcome) in sae.chain(stages) {
        for e in &outcome.trace {
            w.write_record([
                stage.to_string(),
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.map(|v| v.to_string()).unwrap_or_default(),
                e.learning_rate.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub struct EvaluateArgs<'a> {
    pub weights: &'a Path,
    pub data: Option<&'a Path>,
    pub error_model: ErrorModel,
    pub out: &'a Path,
    pub use_train_split: bool,
}

pub fn evaluate_bundle(args: &EvaluateArgs) -> CliResult<EvalReport> {
    args.error_model.validate().map_err(|e| CliError::config(e.to_string()))?;
    let source = resolve_data(args.data, None)?;
    let data = load_data(&source)?;
    let manifest: BundleManifest = read_json(&args.weights.join(BUNDLE_FILE))?;
    let (split, id) = if args.use_train_split {
        (&data.train, format!("{}:train", data.test_id))
    } else {
        (&data.test, data.test_id.clone())
    };
    let report = match manifest.dtype.as_str() {
        "f64" => report_for(&ModelBundle::<f64>::load(args.weights)?, split, &id, &args.error_model)?,
        _ => report_for(&ModelBundle::<f32>::load(args.weights)?, split, &id, &args.error_model)?,
    };
    std::fs::create_dir_all(args.out)?;
    write_report(args.out, &report)?;
    Ok(report)
}

/// Mean over runs of one model kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KindSummary {
    pub model: ModelKind,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub report: EvalReport,
    pub mean_training_seconds: f64,
    /// Population std over runs; absent for a single run.
    pub std_training_seconds: Option<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn report(runs: &[PathBuf]) -> CliResult<Vec<KindSummary>> {
    if runs.is_empty() {
        return Err(CliError::config("report needs at least one run directory"));
    }
    let mut groups: BTreeMap<ModelKind, Vec<(RunRecord, EvalReport, Timing)>> = BTreeMap::new();
    let mut error_model: Option<ErrorModel> = None;
    for dir in runs {
        let rec: RunRecord = read_json(&dir.join(RUN_FILE))?;
        let rep: EvalReport = read_json(&dir.join(REPORT_FILE))?;
        let timing: Timing = read_json(&dir.join(TIMING_FILE))?;
        match error_model {
            Some(m) if m != rep.error_model => {
                return Err(CliError::config(format!(
                    "{} uses error model {:?}, earlier runs use {:?}; refusing to aggregate",
                    dir.display(),
                    rep.error_model,
                    m
                )))
            }
            _ => error_model = Some(rep.error_model),
        }
        groups.entry(rec.model).or_default().push((rec, rep, timing));
    }
    let mut out = Vec::new();
    for (kind, rows) in groups {
        let ids: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.1.dataset_id.as_str()).collect();
        if ids.len() > 1 {
            log::warn!("{kind} runs were evaluated on different datasets: {ids:?}");
        }
        let pick = |f: &dyn Fn(&EvalReport) -> f64| mean(&rows.iter().map(|r| f(&r.1)).collect::<Vec<_>>());
        let report = EvalReport {
            label: kind.label().to_string(),
            dataset_id: rows[0].1.dataset_id.clone(),
            error_model: rows[0].1.error_model,
            count: rows.iter().map(|r| r.1.count).sum(),
            building_hit_rate: pick(&|r| r.building_hit_rate),
            floor_hit_rate: pick(&|r| r.floor_hit_rate),
            error: ErrorStats {
                mean: pick(&|r| r.error.mean),
                std: pick(&|r| r.error.std),
                min: pick(&|r| r.error.min),
                median: pick(&|r| r.error.median),
                max: pick(&|r| r.error.max),
            },
        };
        let times: Vec<f64> = rows.iter().map(|r| r.2.total_seconds).collect();
        let m = mean(&times);
        let std = (times.len() > 1).then(|| (times.iter().map(|t| (t - m).powi(2)).sum::<f64>() / times.len() as f64).sqrt());
        out.push(KindSummary {
            model: kind,
            runs: rows.len(),
            seeds: rows.iter().map(|r| r.0.seed).collect(),
            report,
            mean_training_seconds: m,
            std_training_seconds: std,
        });
    }
    Ok(out)
}

/// Accuracy table followed by the training-time table.
pub fn format_summary(summaries: &[KindSummary]) -> String {
    let reports: Vec<EvalReport> = summaries.iter().map(|s| s.report.clone()).collect();
    let mut text = format_table(&reports);
    text.push('\n');
    let width = summaries.iter().map(|s| s.report.label.len()).max().unwrap_or(0).max(5);
    let _ = writeln!(text, "{:<width$}  {:>4}  {:>14}  {:>10}", "Model", "Runs", "Mean time (s)", "Std (s)");
    for s in summaries {
        let std = s.std_training_seconds.map(|v| format!("{v:.1}")).unwrap_or_default();
        let _ = writeln!(text, "{:<width$}  {:>4}  {:>14.1}  {:>10}", s.report.label, s.runs, s.mean_training_seconds, std);
    }
    text
}

pub fn write_summary(out: &Path, summaries: &[KindSummary]) -> CliResult<()> {
    std::fs::create_dir_all(out)?;
    write_json(&out.join("summary.json"), &summaries)?;
    std::fs::write(out.join("summary.txt"), format_summary(summaries))?;
    Ok(())
}

pub const UJI_SOURCE: &str = "https://archive.ics.uci.edu/dataset/310/ujiindoorloc";

/// `{"files": {"trainingData.csv": "<sha256 hex>", ...}}`; names are relative
/// to the data directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksumConfig {
    pub files: BTreeMap<String, String>,
}

/// Digest of every listed file, or the first mismatch.
pub fn verify_checksums(dir: &Path, config: &Path) -> CliResult<Vec<(String, String)>> {
    let cfg: ChecksumConfig = read_json(config).map_err(|e| CliError::config(e.message))?;
    let mut out = Vec::new();
    for (name, want) in &cfg.files {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
        let got = sha256_hex(&bytes);
        if !got.eq_ignore_ascii_case(want.trim()) {
            return Err(hst_core::Error::Checksum { expected: want.clone(), computed: got }.into());
        }
        out.push((name.clone(), got));
    }
    Ok(out)
}
