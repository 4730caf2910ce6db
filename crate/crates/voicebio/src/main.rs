//! Command-line orchestration: extract, select, train, evaluate, loocv,
//! predict, synth, stats. Every artifact embeds the tool version, the
//! resolved config, and the seed; reruns with identical inputs produce
//! byte-identical outputs. Errors exit with code 1 and a machine-readable
//! JSON payload on stderr (usage errors exit 2 via clap).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use voicebio::audio::{self, AudioError, SectionId};
use voicebio::config::{derive_seed, PipelineConfig, SeedDomain, TOOL_VERSION};
use voicebio::eval::{self, EvalError, GroupVariable};
use voicebio::features::{self, FeatureError, FeatureMatrix};
use voicebio::model::{ModelError, PredictionRecord};
use voicebio::pipeline::{fit_pipeline, FittedPipeline, PipelineError};
use voicebio::selection::{run_selection, SelectionError};
use voicebio::synth::{self, ClassSpec, CohortSpec, SynthError};

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad JSON in {path}: {reason}")]
    BadJson { path: PathBuf, reason: String },
    #[error("bad flag value {0:?}: expected name=value")]
    BadKeyValue(String),
    #[error("no SectionN.wav files found in {0}")]
    NoSections(PathBuf),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Audio(_) => "AudioError",
            CliError::Feature(_) => "FeatureError",
            CliError::Selection(_) => "SelectionError",
            CliError::Model(ModelError::UnknownFeature(_)) => "UnknownFeature",
            CliError::Model(_) => "ModelError",
            CliError::Pipeline(PipelineError::Model(ModelError::UnknownFeature(_))) => {
                "UnknownFeature"
            }
            CliError::Pipeline(_) => "PipelineError",
            CliError::Eval(_) => "EvalError",
            CliError::Synth(_) => "SynthError",
            CliError::Io { .. } => "IoError",
            CliError::BadJson { .. } => "BadJson",
            CliError::BadKeyValue(_) => "BadKeyValue",
            CliError::NoSections(_) => "NoSections",
        }
    }
}

#[derive(Parser)]
#[command(name = "voicebio", version, about = "Voice-biomarker risk prediction pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Run seed; all randomness derives from it deterministically.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for extraction and folds (0 = all cores). Results do
    /// not depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// JSON config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the feature matrix from a cohort manifest into a CSV.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run two-stage feature selection on a matrix CSV.
    Select {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the full pipeline on a matrix CSV and save the model artifact.
    Train {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep this clinical column (e.g. nt_probnp); it bypasses selection.
        #[arg(long)]
        clinical: Option<String>,
    },
    /// Evaluate a saved model artifact on a matrix CSV.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leave-one-out cross-validation with per-fold pipeline refits.
    Loocv {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep this clinical column; it bypasses selection.
        #[arg(long)]
        clinical: Option<String>,
        /// Reuse one whole-matrix selection across folds (leaky; comparison only).
        #[arg(long)]
        leaky: bool,
    },
    /// Score one patient directory of SectionN.wav files with a model artifact.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Directory containing Section1.wav .. Section4.wav.
        #[arg(long)]
        dir: PathBuf,
        /// Clinical values as name=value (repeatable), e.g. nt_probnp=1200.
        #[arg(long = "clinical")]
        clinical: Vec<String>,
        #[arg(long)]
        patient_id: Option<String>,
    },
    /// Generate a synthetic cohort: WAV files plus a JSONL manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 29)]
        n: usize,
        /// Make class 1 acoustically distinct from class 0.
        #[arg(long)]
        separated: bool,
        /// Plant an NT-proBNP-like clinical column (mean0,sd0,mean1,sd1).
        #[arg(long, num_args = 4, value_names = ["M0", "S0", "M1", "S1"])]
        nt_probnp: Option<Vec<f64>>,
        /// Section durations in seconds (four values, sections 1-4).
        #[arg(long, num_args = 4, value_names = ["S1", "S2", "S3", "S4"])]
        durations: Option<Vec<f64>>,
    },
    /// Two-group cohort table from a matrix CSV plus LOOCV/test predictions.
    Stats {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if cli.global.jobs > 0 {
        // Ignore failure: the pool may already exist under `cargo test`.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.jobs)
            .build_global();
    }
    if let Err(e) = run(cli) {
        let payload = json!({ "kind": e.kind(), "error": e.to_string() });
        eprintln!("{payload}");
        std::process::exit(1);
    }
}

fn load_config(global: &GlobalArgs) -> Result<PipelineConfig, CliError> {
    let base = match &global.config {
        Some(path) => {
            let text = read(path)?;
            serde_json::from_str(&text).map_err(|e| CliError::BadJson {
                path: path.clone(),
                reason: e.to_string(),
            })?
        }
        None => PipelineConfig::default(),
    };
    let cfg = base.with_seed(global.seed);
    // Echo the resolved config for reproducibility.
    eprintln!("{}", json!({ "resolved_config": &cfg, "tool_version": TOOL_VERSION }));
    Ok(cfg)
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.into(), source })
}

fn load_matrix(path: &Path) -> Result<FeatureMatrix, CliError> {
    Ok(features::from_csv(&read(path)?)?)
}

/// Wrap a payload in the standard artifact envelope.
fn artifact<T: serde::Serialize>(
    kind: &str,
    cfg: &PipelineConfig,
    payload: &T,
) -> Result<String, CliError> {
    let value = json!({
        "tool_version": TOOL_VERSION,
        "kind": kind,
        "seed": cfg.seed,
        "config": cfg,
        "payload": payload,
    });
    Ok(format!("{}\n", serde_json::to_string_pretty(&value).unwrap()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Drop clinical columns, keeping only `keep` (verified present) if named.
fn restrict_clinical(
    matrix: &mut FeatureMatrix,
    keep: Option<&str>,
) -> Result<(), CliError> {
    if let Some(name) = keep {
        let full = format!("clinical/{name}");
        if !matrix.names.contains(&full) {
            return Err(CliError::Model(ModelError::UnknownFeature(full)));
        }
        let drop: Vec<String> = matrix
            .names
            .iter()
            .filter(|n| n.starts_with("clinical/") && **n != full)
            .cloned()
            .collect();
        for n in drop {
            features::remove_column(matrix, &n)?;
        }
    } else {
        let drop: Vec<String> = matrix
            .names
            .iter()
            .filter(|n| n.starts_with("clinical/"))
            .cloned()
            .collect();
        for n in drop {
            features::remove_column(matrix, &n)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Extract { manifest, out } => {
            let cohort = audio::load_cohort(&manifest)?;
            let mut matrix = features::extract_matrix(&cohort, &cfg.f0)?;
            // Manifest-borne NT-proBNP becomes a clinical column when present.
            if cohort.patients.iter().any(|p| p.nt_probnp.is_some()) {
                let vals: Vec<f64> = cohort
                    .patients
                    .iter()
                    .map(|p| p.nt_probnp.unwrap_or(f64::NAN))
                    .collect();
                matrix.names.push("clinical/nt_probnp".into());
                for (row, v) in matrix.rows.iter_mut().zip(vals) {
                    row.push(v);
                }
            }
            write(&out, &features::to_csv(&matrix))
        }
        Command::Select { matrix, out } => {
            let mut m = load_matrix(&matrix)?;
            restrict_clinical(&mut m, None)?;
            features::Imputer::fit(&m, None).apply(&mut m);
            let report = run_selection(&m, &cfg.selection)?;
            write(&out, &artifact("selection_report", &cfg, &report)?)
        }
        Command::Train { matrix, out, clinical } => {
            let mut m = load_matrix(&matrix)?;
            restrict_clinical(&mut m, clinical.as_deref())?;
            let fitted = fit_pipeline(&m, &cfg)?;
            let metrics = eval::evaluate(&fitted, &m.rows, &m.labels)?;
            let payload = json!({ "pipeline": fitted, "train_metrics": metrics });
            write(&out, &artifact("model", &cfg, &payload)?)
        }
        Command::Evaluate { model, matrix, out } => {
            let fitted = load_model(&model)?;
            let m = load_matrix(&matrix)?;
            let metrics = eval::evaluate(&fitted, &align_rows(&m, &fitted)?, &m.labels)?;
            emit(out.as_deref(), &artifact("metrics", &cfg, &metrics)?)
        }
        Command::Loocv { matrix, out, clinical, leaky } => {
            let mut m = load_matrix(&matrix)?;
            restrict_clinical(&mut m, clinical.as_deref())?;
            let summary = eval::loocv(&m, &cfg, leaky)?;
            emit(out.as_deref(), &artifact("cv_summary", &cfg, &summary)?)
        }
        Command::Predict { model, dir, clinical, patient_id } => {
            let fitted = load_model(&model)?;
            let clinical = parse_key_values(&clinical)?;
            let id = patient_id.unwrap_or_else(|| {
                dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            });
            let record = load_patient_dir(&dir, &id)?;
            let mut row = features::extract_patient(&record, &fitted.config.f0);
            for name in fitted.input_names.iter().skip(row.len()) {
                let short = name.strip_prefix("clinical/").unwrap_or(name);
                let v = clinical
                    .get(short)
                    .copied()
                    .ok_or_else(|| CliError::Model(ModelError::UnknownFeature(name.clone())))?;
                row.push(v);
            }
            let z = fitted.acoustic_predictor(&row).map_err(PipelineError::Model)?;
            let p = voicebio::model::sigmoid(z);
            let rec = PredictionRecord {
                patient_id: id,
                z,
                p,
                label_hat: (p >= fitted.model.decision_threshold) as u8,
            };
            emit(None, &artifact("prediction", &cfg, &rec)?)
        }
        Command::Synth { out, n, separated, nt_probnp, durations } => {
            let mut class0 = ClassSpec::baseline();
            let mut class1 =
                if separated { ClassSpec::separated() } else { ClassSpec::baseline() };
            if let Some(v) = nt_probnp {
                class0.nt_probnp = Some(synth::ParamDist { mean: v[0], sd: v[1] });
                class1.nt_probnp = Some(synth::ParamDist { mean: v[2], sd: v[3] });
            }
            let seed = derive_seed(cfg.seed, SeedDomain::Synth);
            let mut spec = CohortSpec::new(n, class0, class1, seed);
            if let Some(d) = durations {
                spec.section_durations_s = [d[0], d[1], d[2], d[3]];
            }
            let manifest = synth::write_cohort(&spec, &out)?;
            println!("{}", json!({ "manifest": manifest, "n_patients": n, "seed": seed }));
            Ok(())
        }
        Command::Stats { matrix, predictions, out } => {
            let m = load_matrix(&matrix)?;
            let text = read(&predictions)?;
            let preds = parse_predictions(&predictions, &text)?;
            let by_id: BTreeMap<&str, f64> =
                preds.iter().map(|r| (r.patient_id.as_str(), r.z)).collect();
            let z: Vec<f64> = m
                .patient_ids
                .iter()
                .map(|id| by_id.get(id.as_str()).copied().unwrap_or(f64::NAN))
                .collect();
            let mut vars =
                vec![("acoustic predictor".to_string(), GroupVariable::Continuous(z))];
            for (j, name) in m.names.iter().enumerate() {
                if name.starts_with("clinical/") {
                    vars.push((name.clone(), GroupVariable::Continuous(m.column(j))));
                }
            }
            let rows = eval::cohort_table(&m.labels, &vars)?;
            let mut csv = String::from("variable,group0,group1,p\n");
            for r in &rows {
                csv.push_str(&format!("{},{},{},{}\n", r.variable, r.group0, r.group1, r.p));
            }
            emit(out.as_deref(), &csv)
        }
    }
}

fn load_model(path: &Path) -> Result<FittedPipeline, CliError> {
    let text = read(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::BadJson { path: path.into(), reason: e.to_string() })?;
    let pipeline = value
        .pointer("/payload/pipeline")
        .cloned()
        .ok_or_else(|| CliError::BadJson {
            path: path.into(),
            reason: "missing payload.pipeline".into(),
        })?;
    serde_json::from_value(pipeline)
        .map_err(|e| CliError::BadJson { path: path.into(), reason: e.to_string() })
}

/// Reorder matrix columns to the model's training layout.
fn align_rows(m: &FeatureMatrix, fitted: &FittedPipeline) -> Result<Vec<Vec<f64>>, CliError> {
    let idx: Vec<usize> = fitted
        .input_names
        .iter()
        .map(|n| {
            m.names
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| CliError::Model(ModelError::UnknownFeature(n.clone())))
        })
        .collect::<Result<_, _>>()?;
    Ok(m.rows.iter().map(|r| idx.iter().map(|&j| r[j]).collect()).collect())
}

fn load_patient_dir(dir: &Path, id: &str) -> Result<voicebio::PatientRecord, CliError> {
    let mut sections = BTreeMap::new();
    for section in SectionId::ALL {
        let path = dir.join(section.file_name());
        if path.exists() {
            sections.insert(section, audio::load_wav(&path, section)?);
        }
    }
    if sections.is_empty() {
        return Err(CliError::NoSections(dir.into()));
    }
    Ok(voicebio::PatientRecord {
        patient_id: id.to_string(),
        sections,
        label: 0,
        nt_probnp: None,
    })
}

fn parse_key_values(pairs: &[String]) -> Result<BTreeMap<String, f64>, CliError> {
    pairs
        .iter()
        .map(|p| {
            let (k, v) = p.split_once('=').ok_or_else(|| CliError::BadKeyValue(p.clone()))?;
            let v: f64 = v.parse().map_err(|_| CliError::BadKeyValue(p.clone()))?;
            Ok((k.to_string(), v))
        })
        .collect()
}

fn parse_predictions(path: &Path, text: &str) -> Result<Vec<PredictionRecord>, CliError> {
    let bad = |reason: String| CliError::BadJson { path: path.into(), reason };
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    // Accept a bare list, a prediction artifact, or a cv_summary artifact.
    let list = if value.is_array() {
        value
    } else if let Some(folds) = value.pointer("/payload/folds") {
        let mut all = Vec::new();
        for f in folds.as_array().ok_or_else(|| bad("folds not a list".into()))? {
            if let Some(p) = f.get("predictions").and_then(|p| p.as_array()) {
                all.extend(p.iter().cloned());
            }
        }
        serde_json::Value::Array(all)
    } else if let Some(p) = value.pointer("/payload") {
        serde_json::Value::Array(vec![p.clone()])
    } else {
        return Err(bad("unrecognized predictions format".into()));
    };
    serde_json::from_value(list).map_err(|e| bad(e.to_string()))
}
