use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::dataset::DatasetKind;
use crate::dbn::FineTuneConfig;
use crate::energy::CdConfig;
use crate::pca::DEFAULT_ALPHA;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown option `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("`--{0}` is required for this command")]
    Missing(&'static str),
    #[error("config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config file {path}, line {line}: expected `key = value`")]
    Syntax { path: String, line: usize },
}

/// Every knob of a run. Keys accepted by [`RunConfig::set`] match the
/// command-line flag names.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset: Option<DatasetKind>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub alpha: f64,
    /// Hidden widths; the input width comes from PCA.
    pub layers: Vec<usize>,
    pub pretrain_lr: f64,
    pub pretrain_epochs: usize,
    pub cd_k: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub max_train_rows: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let cd = CdConfig::default();
        let ft = FineTuneConfig::default();
        RunConfig {
            dataset: None,
            train: None,
            test: None,
            input: None,
            model: None,
            report: None,
            out: None,
            taxonomy: None,
            alpha: DEFAULT_ALPHA,
            layers: vec![64, 32],
            pretrain_lr: cd.learning_rate,
            pretrain_epochs: cd.epochs,
            cd_k: cd.k,
            lr: ft.learning_rate,
            epochs: ft.epochs,
            batch: ft.batch_size,
            seed: 0,
            max_train_rows: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn positive(key: &str, value: &str) -> Result<usize, ConfigError> {
    let n: usize = parse(key, value)?;
    if n == 0 {
        return Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "must be at least 1".into(),
        });
    }
    Ok(n)
}

fn rate(key: &str, value: &str) -> Result<f64, ConfigError> {
    let r: f64 = parse(key, value)?;
    if !(r >= 0.0 && r.is_finite()) {
        return Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "must be a finite number >= 0".into(),
        });
    }
    Ok(r)
}

fn path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    /// Applies one `key = value` setting. A leading `--` on the key is allowed.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().trim_start_matches("--");
        match key {
            "dataset" => {
                self.dataset = Some(value.parse().map_err(|e: crate::dataset::DatasetError| ConfigError::BadValue {
                    key: key.into(),
                    value: value.into(),
                    reason: e.to_string(),
                })?)
            }
            "train" => self.train = path(value),
            "test" => self.test = path(value),
            "input" => self.input = path(value),
            "model" => self.model = path(value),
            "report" => self.report = path(value),
            "out" => self.out = path(value),
            "taxonomy" => self.taxonomy = path(value),
            "alpha" => {
                let a: f64 = parse(key, value)?;
                if !(a > 0.0 && a <= 1.0) {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        value: value.into(),
                        reason: "must lie in (0, 1]".into(),
                    });
                }
                self.alpha = a;
            }
            "layers" => {
                let layers = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| positive(key, s))
                    .collect::<Result<Vec<_>, _>>()?;
                if layers.is_empty() {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        value: value.into(),
                        reason: "need at least one hidden width".into(),
                    });
                }
                self.layers = layers;
            }
            "pretrain-lr" => self.pretrain_lr = rate(key, value)?,
            "pretrain-epochs" => self.pretrain_epochs = parse(key, value)?,
            "cd-k" => self.cd_k = positive(key, value)?,
            "lr" => self.lr = rate(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch" => self.batch = positive(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "max-train-rows" => self.max_train_rows = Some(positive(key, value)?),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies every `key = value` line of a config file. Blank lines and
    /// `#` comments are skipped.
    pub fn apply_file(&mut self, file: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(file).map_err(|source| ConfigError::Io {
            path: file.display().to_string(),
            source,
        })?;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: file.display().to_string(),
                line: idx + 1,
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn cd_config(&self) -> CdConfig {
        CdConfig {
            learning_rate: self.pretrain_lr,
            k: self.cd_k,
            batch_size: self.batch,
            epochs: self.pretrain_epochs,
            rng_seed: self.seed,
        }
    }

    pub fn fine_tune_config(&self) -> FineTuneConfig {
        FineTuneConfig {
            learning_rate: self.lr,
            batch_size: self.batch,
            epochs: self.epochs,
            rng_seed: self.seed.wrapping_add(0x5EED),
        }
    }

    pub(crate) fn require<'a>(&self, value: &'a Option<PathBuf>, name: &'static str) -> Result<&'a Path, ConfigError> {
        value.as_deref().ok_or(ConfigError::Missing(name))
    }
}
