//! Offline training and evaluation, and the online detection loop.
//!
//! `train` fits the encoder, PCA and network on a labeled split and writes a
//! model file. `eval` scores a labeled split with a saved model. `detect`
//! classifies a stream of records: normal traffic goes to one sink and
//! suspicious records are appended, with their class probabilities, to a
//! report that stands in for the security-control hand-off. `project`
//! exports 3-component PCA coordinates for plotting.

mod config;

pub use config::{ConfigError, RunConfig};

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Axis;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    self, build_schema, encode, fit_encoder, parse_unlabeled, read_records, DatasetError, DatasetKind, FeatureRecord,
    LabelTaxonomy,
};
use crate::dbn::{self, argmax, DbnError, DbnModel, LayerSpec, Network, TrainReport};
use crate::metrics::{confusion, MetricsError, MetricsReport};
use crate::pca::{self, PcaError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage}: {source}")]
    Data {
        stage: &'static str,
        #[source]
        source: DatasetError,
    },
    #[error("{stage}: {source}")]
    Pca {
        stage: &'static str,
        #[source]
        source: PcaError,
    },
    #[error("{stage}: {source}")]
    Model {
        stage: &'static str,
        #[source]
        source: DbnError,
    },
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("model was trained on {model} data but the input is {data}")]
    SchemaMismatch { model: String, data: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit status: 1 usage, 2 data, 3 model.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data { .. }
            | PipelineError::Pca { .. }
            | PipelineError::Metrics(_)
            | PipelineError::SchemaMismatch { .. }
            | PipelineError::Io { .. } => 2,
            PipelineError::Model { .. } => 3,
        }
    }
}

fn data_err(stage: &'static str) -> impl FnOnce(DatasetError) -> PipelineError {
    move |source| PipelineError::Data { stage, source }
}

fn pca_err(stage: &'static str) -> impl FnOnce(PcaError) -> PipelineError {
    move |source| PipelineError::Pca { stage, source }
}

fn model_err(stage: &'static str) -> impl FnOnce(DbnError) -> PipelineError {
    move |source| PipelineError::Model { stage, source }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn taxonomy_for(cfg: &RunConfig, kind: DatasetKind) -> Result<LabelTaxonomy, PipelineError> {
    match &cfg.taxonomy {
        Some(path) => LabelTaxonomy::load(path).map_err(data_err("taxonomy")),
        None => Ok(LabelTaxonomy::builtin(kind)),
    }
}

/// Keeps `limit` rows chosen uniformly under `seed`, in file order.
fn subsample(records: Vec<FeatureRecord>, limit: Option<usize>, seed: u64) -> Vec<FeatureRecord> {
    match limit {
        Some(limit) if limit < records.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = rand::seq::index::sample(&mut rng, records.len(), limit).into_vec();
            keep.sort_unstable();
            let mut records: Vec<Option<FeatureRecord>> = records.into_iter().map(Some).collect();
            keep.into_iter().map(|i| records[i].take().expect("indices are distinct")).collect()
        }
        _ => records,
    }
}

pub fn default_report_path(model: &Path) -> PathBuf {
    let mut name = model.as_os_str().to_owned();
    name.push(".report.json");
    PathBuf::from(name)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DbnModel,
    pub report: TrainReport,
    pub model_path: PathBuf,
    pub report_path: PathBuf,
}

/// Fits encoder, PCA, pretraining and fine-tuning on the training split,
/// then writes the model and its training report.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome, PipelineError> {
    let kind = cfg.dataset.ok_or(ConfigError::Missing("dataset"))?;
    let train_path = cfg.require(&cfg.train, "train")?;
    let model_path = cfg.require(&cfg.model, "model")?.to_path_buf();
    let taxonomy = taxonomy_for(cfg, kind)?;

    let (layout, records) = read_records(train_path, &build_schema(kind)).map_err(data_err("reading training data"))?;
    let records = subsample(records, cfg.max_train_rows, cfg.seed);
    let encoder = fit_encoder(&records, &layout, &taxonomy).map_err(data_err("fitting encoder"))?;
    let encoded = encode(&records, &encoder, &taxonomy).map_err(data_err("encoding"))?;
    drop(records);

    let pca = pca::fit(encoded.data.view(), cfg.alpha).map_err(pca_err("PCA"))?;
    let x = pca.transform(encoded.data.view()).map_err(pca_err("PCA"))?;
    drop(encoded.data);

    let mut sizes = vec![pca.rank];
    sizes.extend(&cfg.layers);
    let spec = LayerSpec::new(sizes).map_err(model_err("layer spec"))?;
    let pre = dbn::pretrain(x.view(), &spec, &cfg.cd_config()).map_err(model_err("pretraining"))?;
    let mut network = Network::new(pre.grbm, pre.rbms, taxonomy.num_classes()).map_err(model_err("assembling"))?;
    let (loss, accuracy) = dbn::fine_tune(&mut network, x.view(), &encoded.label_ids, &cfg.fine_tune_config())
        .map_err(model_err("fine-tuning"))?;

    let report = TrainReport {
        pretrain_reconstruction: pre.reconstruction,
        fine_tune_loss: loss,
        fine_tune_accuracy: accuracy,
    };
    let model = DbnModel {
        encoder,
        taxonomy,
        pca,
        network,
    };
    model.save(&model_path).map_err(model_err("saving model"))?;
    let report_path = cfg.report.clone().unwrap_or_else(|| default_report_path(&model_path));
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&report_path, json).map_err(io_err(&report_path))?;
    Ok(TrainOutcome {
        model,
        report,
        model_path,
        report_path,
    })
}

fn load_model(cfg: &RunConfig) -> Result<DbnModel, PipelineError> {
    let path = cfg.require(&cfg.model, "model")?;
    let model = DbnModel::load(path).map_err(model_err("loading model"))?;
    if let Some(kind) = cfg.dataset {
        if kind != model.dataset_kind() {
            return Err(PipelineError::SchemaMismatch {
                model: model.dataset_kind().to_string(),
                data: kind.to_string(),
            });
        }
    }
    Ok(model)
}

/// One line of an experiment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub layers: Vec<usize>,
    pub seed: u64,
    pub samples: u64,
    pub acc_macro: f64,
    pub acc_standard: f64,
    pub ppv: f64,
    pub tpr: f64,
    pub ppv_macro: f64,
    pub tpr_macro: f64,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub metrics: MetricsReport,
    pub predictions: Vec<usize>,
    pub truth: Vec<usize>,
    pub record: RunRecord,
}

/// Scores a labeled split with a saved model.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalOutcome, PipelineError> {
    let model = load_model(cfg)?;
    let test_path = cfg.require(&cfg.test, "test")?;
    let schema = &model.encoder.schema;
    let (_, records) = read_records(test_path, schema).map_err(|e| match e {
        DatasetError::ArityMismatch { line, .. } if line <= 2 => PipelineError::SchemaMismatch {
            model: model.dataset_kind().to_string(),
            data: format!("a {}-column layout", line_arity(test_path, line).unwrap_or(0)),
        },
        other => data_err("reading test data")(other),
    })?;
    let encoded = encode(&records, &model.encoder, &model.taxonomy).map_err(data_err("encoding"))?;
    let x = model.pca.transform(encoded.data.view()).map_err(pca_err("PCA"))?;
    let predictions = model.network.predict_batch(x.view()).map_err(model_err("predicting"))?;
    let cm = confusion(&predictions, &encoded.label_ids, &model.taxonomy.class_names)?;
    let metrics = MetricsReport::from_confusion(cm)?;
    if let Some(path) = &cfg.report {
        let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
        std::fs::write(path, json).map_err(io_err(path))?;
    }
    let record = RunRecord {
        dataset: model.dataset_kind().to_string(),
        layers: model.network.layer_sizes(),
        seed: cfg.seed,
        samples: metrics.samples,
        acc_macro: metrics.acc_macro,
        acc_standard: metrics.acc_standard,
        ppv: metrics.ppv,
        tpr: metrics.tpr,
        ppv_macro: metrics.ppv_macro,
        tpr_macro: metrics.tpr_macro,
    };
    Ok(EvalOutcome {
        metrics,
        predictions,
        truth: encoded.label_ids,
        record,
    })
}

fn line_arity(path: &Path, line: usize) -> Option<usize> {
    let file = File::open(path).ok()?;
    let text = BufReader::new(file).lines().nth(line - 1)?.ok()?;
    Some(text.split(',').count())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Disposition {
    Normal,
    Suspicious,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub record_index: usize,
    pub predicted_class: String,
    pub class_id: usize,
    pub probabilities: Vec<f64>,
    pub disposition: Disposition,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DetectSummary {
    pub processed: usize,
    pub normal: usize,
    pub suspicious: usize,
    pub skipped: usize,
}

/// Records are classified in blocks of this many lines.
const DETECT_BLOCK: usize = 1024;

/// Classifies a record stream with a loaded model.
pub struct Detector<'m> {
    model: &'m DbnModel,
}

impl<'m> Detector<'m> {
    pub fn new(model: &'m DbnModel) -> Self {
        Detector { model }
    }

    /// Verdicts for `records`, numbered by the paired indices.
    pub fn classify(&self, records: &[(usize, FeatureRecord)]) -> Result<Vec<Verdict>, PipelineError> {
        let batch: Vec<FeatureRecord> = records.iter().map(|(_, r)| r.clone()).collect();
        let encoded = self.model.encoder.encode_features(&batch);
        let x = self.model.pca.transform(encoded.view()).map_err(pca_err("PCA"))?;
        let probs = self.model.network.forward_batch(x.view()).map_err(model_err("predicting"))?;
        Ok(records
            .iter()
            .zip(probs.axis_iter(Axis(0)))
            .map(|((index, _), p)| {
                let class_id = argmax(p);
                Verdict {
                    record_index: *index,
                    predicted_class: self.model.taxonomy.class_names[class_id].clone(),
                    class_id,
                    probabilities: p.to_vec(),
                    disposition: if class_id == 0 {
                        Disposition::Normal
                    } else {
                        Disposition::Suspicious
                    },
                }
            })
            .collect())
    }

    /// Reads newline-delimited records from `input` and writes one JSON
    /// verdict per line, in input order, to `normal` or `suspicious`.
    /// Malformed lines are passed to `on_skip` and counted, never fatal.
    pub fn run<R: BufRead>(
        &self,
        input: R,
        normal: &mut dyn Write,
        suspicious: &mut dyn Write,
        mut on_skip: impl FnMut(usize, &DatasetError),
    ) -> Result<DetectSummary, PipelineError> {
        let schema = &self.model.encoder.schema;
        let mut summary = DetectSummary::default();
        let mut pending: Vec<(usize, FeatureRecord)> = Vec::with_capacity(DETECT_BLOCK);
        let mut index = 0usize;
        let mut emit = |pending: &mut Vec<(usize, FeatureRecord)>, summary: &mut DetectSummary| {
            if pending.is_empty() {
                return Ok(());
            }
            for verdict in self.classify(pending)? {
                let line = serde_json::to_string(&verdict).expect("verdict serializes");
                let sink: &mut dyn Write = match verdict.disposition {
                    Disposition::Normal => {
                        summary.normal += 1;
                        normal
                    }
                    Disposition::Suspicious => {
                        summary.suspicious += 1;
                        suspicious
                    }
                };
                writeln!(sink, "{line}").map_err(|source| PipelineError::Io {
                    path: "verdict sink".into(),
                    source,
                })?;
                summary.processed += 1;
            }
            pending.clear();
            Ok::<(), PipelineError>(())
        };

        for (line_idx, line) in input.lines().enumerate() {
            let line = line.map_err(|source| PipelineError::Io {
                path: "input stream".into(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            if line_idx == 0 && schema.detect_header(&line).is_some() {
                continue;
            }
            match parse_unlabeled(&line, line_idx + 1, schema) {
                Ok(record) => pending.push((index, record)),
                Err(e) => {
                    summary.skipped += 1;
                    on_skip(line_idx + 1, &e);
                }
            }
            index += 1;
            if pending.len() >= DETECT_BLOCK {
                emit(&mut pending, &mut summary)?;
            }
        }
        emit(&mut pending, &mut summary)?;
        normal.flush().ok();
        suspicious.flush().ok();
        Ok(summary)
    }
}

/// Online detection from `--input` (or stdin). Normal verdicts go to
/// `--out` (or stdout); suspicious ones are appended to `--report`.
pub fn cmd_detect(
    cfg: &RunConfig,
    on_skip: impl FnMut(usize, &DatasetError),
) -> Result<DetectSummary, PipelineError> {
    let model = load_model(cfg)?;
    let report_path = cfg.require(&cfg.report, "report")?;
    let report = OpenOptions::new()
        .create(true)
        .append(true)
        .open(report_path)
        .map_err(io_err(report_path))?;
    let mut suspicious = BufWriter::new(report);
    let mut normal: Box<dyn Write> = match &cfg.out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(io_err(path))?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let detector = Detector::new(&model);
    match &cfg.input {
        Some(path) => {
            let file = File::open(path).map_err(io_err(path))?;
            detector.run(BufReader::new(file), &mut normal, &mut suspicious, on_skip)
        }
        None => detector.run(std::io::stdin().lock(), &mut normal, &mut suspicious, on_skip),
    }
}

pub const PROJECTION_HEADER: &str = "pc1,pc2,pc3,class_id,class_name";

/// Writes `pc1,pc2,pc3,class_id,class_name` rows for the records of
/// `--input` (or `--train`). With `--model` the model's encoder and PCA are
/// used; otherwise both are fit on the input itself, keeping every component.
/// Returns the number of rows written.
pub fn cmd_project(cfg: &RunConfig) -> Result<usize, PipelineError> {
    let input = cfg
        .input
        .as_deref()
        .or(cfg.train.as_deref())
        .ok_or(ConfigError::Missing("input"))?;
    let (encoder, taxonomy, fitted_pca, records) = match &cfg.model {
        Some(_) => {
            let model = load_model(cfg)?;
            let (_, records) = read_records(input, &model.encoder.schema).map_err(data_err("reading input"))?;
            (model.encoder, model.taxonomy, Some(model.pca), records)
        }
        None => {
            let kind = cfg.dataset.ok_or(ConfigError::Missing("dataset"))?;
            let taxonomy = taxonomy_for(cfg, kind)?;
            let (layout, records) = read_records(input, &build_schema(kind)).map_err(data_err("reading input"))?;
            if records.is_empty() {
                write_projection(cfg, &[])?;
                return Ok(0);
            }
            let encoder = fit_encoder(&records, &layout, &taxonomy).map_err(data_err("fitting encoder"))?;
            (encoder, taxonomy, None, records)
        }
    };
    let encoded = dataset::encode(&records, &encoder, &taxonomy).map_err(data_err("encoding"))?;
    let pca = match fitted_pca {
        Some(p) => p,
        None => {
            if encoded.data.ncols() < 3 {
                return Err(PipelineError::Pca {
                    stage: "projection",
                    source: PcaError::DimensionMismatch {
                        expected: 3,
                        found: encoded.data.ncols(),
                    },
                });
            }
            pca::fit(encoded.data.view(), 1.0).map_err(pca_err("PCA"))?
        }
    };
    let coords = pca.project3(encoded.data.view()).map_err(pca_err("projection"))?;
    let rows: Vec<String> = coords
        .rows()
        .into_iter()
        .zip(&encoded.label_ids)
        .map(|(p, &c)| format!("{},{},{},{},{}", p[0], p[1], p[2], c, taxonomy.class_names[c]))
        .collect();
    write_projection(cfg, &rows)?;
    Ok(rows.len())
}

fn write_projection(cfg: &RunConfig, rows: &[String]) -> Result<(), PipelineError> {
    let mut out: Box<dyn Write> = match &cfg.out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(io_err(path))?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let path = cfg.out.clone().unwrap_or_else(|| PathBuf::from("stdout"));
    writeln!(out, "{PROJECTION_HEADER}").map_err(io_err(&path))?;
    for row in rows {
        writeln!(out, "{row}").map_err(io_err(&path))?;
    }
    out.flush().map_err(io_err(&path))
}
