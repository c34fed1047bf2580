//! Training configuration: a small `key = value` text format.
//!
//! ```text
//! layer_sizes = 20,32,4
//! lambda = 100
//! t = 10             # epochs between re-clusterings
//! k = 8              # clusters per weight row
//! lr_schedule = cosine
//! lr_start = 0.05
//! lr_end = 0.01
//! epochs = 60
//! batch_size = 32
//! seed = 1
//! dataset = synthetic          # or csv:path/to/data.csv
//! test_fraction = 0.25         # csv only
//! # presence of epsilon enables the robust (TRADES) objective:
//! epsilon = 0.25
//! gamma = 3.0
//! pgd_steps = 10
//! pgd_step_size = 0.0625       # defaults to epsilon / 4
//! pgd_random_start = true
//! ```
//!
//! `#` starts a comment; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use super::data::{load_csv_dataset, synthetic_dataset, Dataset, SYNTHETIC_DATA_SEED};
use super::TrainError;

/// Learning-rate schedule over epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant { rate: f64 },
    /// Cosine annealing from `start` (epoch 0) to `end` (last epoch).
    Cosine { start: f64, end: f64 },
}

impl LrSchedule {
    pub fn rate_at(&self, epoch: usize, total_epochs: usize) -> f64 {
        match *self {
            LrSchedule::Constant { rate } => rate,
            LrSchedule::Cosine { start, end } => {
                if total_epochs <= 1 {
                    return start;
                }
                let progress = epoch as f64 / (total_epochs - 1) as f64;
                end + 0.5 * (start - end) * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

/// Parameters of the TRADES-style robust objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustSpec {
    /// Weight of the clean/adversarial consistency term.
    pub gamma: f64,
    /// Radius of the L-inf perturbation ball.
    pub epsilon: f64,
    pub pgd_steps: usize,
    pub pgd_step_size: f64,
    /// Start the inner maximization from a random point of the ball instead
    /// of the clean input (needed during training: the consistency term has
    /// zero gradient exactly at the clean input).
    pub pgd_random_start: bool,
}

/// Where the training data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic,
    Csv { path: String, test_fraction: f64 },
}

/// Everything one training run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub layer_sizes: Vec<usize>,
    pub lambda: f64,
    /// Epochs between re-clusterings of the codebooks.
    pub t: usize,
    pub k: usize,
    pub lr: LrSchedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub dataset: DataSource,
    pub robust: Option<RobustSpec>,
}

impl TrainSpec {
    pub fn parse(text: &str) -> Result<Self, TrainError> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                TrainError::Config(format!("line {}: expected key = value", line_no + 1))
            })?;
            kv.insert(key.trim().to_string(), value.trim().to_string());
        }

        fn take<T: std::str::FromStr>(
            kv: &mut BTreeMap<String, String>,
            key: &str,
        ) -> Result<Option<T>, TrainError>
        where
            T::Err: std::fmt::Display,
        {
            match kv.remove(key) {
                None => Ok(None),
                Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                    TrainError::Config(format!("bad value for {key}: {e}"))
                }),
            }
        }

        let layer_sizes = match kv.remove("layer_sizes") {
            None => return Err(TrainError::Config("layer_sizes is required".into())),
            Some(raw) => raw
                .split(',')
                .map(|d| d.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| TrainError::Config(format!("bad layer_sizes: {e}")))?,
        };
        let lambda = take::<f64>(&mut kv, "lambda")?.unwrap_or(0.0);
        let epochs = take::<usize>(&mut kv, "epochs")?.unwrap_or(50);
        let t = take::<usize>(&mut kv, "t")?.unwrap_or(10);
        let k = take::<usize>(&mut kv, "k")?.unwrap_or(8);
        let batch_size = take::<usize>(&mut kv, "batch_size")?.unwrap_or(32);
        let seed = take::<u64>(&mut kv, "seed")?.unwrap_or(0);

        let lr_start = take::<f64>(&mut kv, "lr_start")?.unwrap_or(0.05);
        let lr_end = take::<f64>(&mut kv, "lr_end")?.unwrap_or(0.01);
        let lr = match kv.remove("lr_schedule").as_deref() {
            None | Some("cosine") => LrSchedule::Cosine { start: lr_start, end: lr_end },
            Some("constant") => LrSchedule::Constant { rate: lr_start },
            Some(other) => {
                return Err(TrainError::Config(format!("unknown lr_schedule {other}")))
            }
        };

        let test_fraction = take::<f64>(&mut kv, "test_fraction")?.unwrap_or(0.25);
        let dataset = match kv.remove("dataset").as_deref() {
            None | Some("synthetic") => DataSource::Synthetic,
            Some(spec) => match spec.strip_prefix("csv:") {
                Some(path) => DataSource::Csv { path: path.to_string(), test_fraction },
                None => {
                    return Err(TrainError::Config(format!(
                        "unknown dataset {spec} (use synthetic or csv:<path>)"
                    )))
                }
            },
        };

        let epsilon = take::<f64>(&mut kv, "epsilon")?;
        let gamma = take::<f64>(&mut kv, "gamma")?;
        let pgd_steps = take::<usize>(&mut kv, "pgd_steps")?;
        let pgd_step_size = take::<f64>(&mut kv, "pgd_step_size")?;
        let pgd_random_start = take::<bool>(&mut kv, "pgd_random_start")?;
        let robust = match epsilon {
            Some(epsilon) => Some(RobustSpec {
                gamma: gamma.unwrap_or(1.0),
                epsilon,
                pgd_steps: pgd_steps.unwrap_or(10),
                pgd_step_size: pgd_step_size.unwrap_or(epsilon / 4.0),
                pgd_random_start: pgd_random_start.unwrap_or(true),
            }),
            None => {
                if gamma.is_some() || pgd_steps.is_some() || pgd_step_size.is_some() {
                    return Err(TrainError::Config(
                        "robust settings given without epsilon".into(),
                    ));
                }
                None
            }
        };

        if let Some(unknown) = kv.keys().next() {
            return Err(TrainError::Config(format!("unknown key {unknown}")));
        }

        let spec = TrainSpec {
            layer_sizes,
            lambda,
            t,
            k,
            lr,
            epochs,
            batch_size,
            seed,
            dataset,
            robust,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self, TrainError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.iter().any(|&d| d == 0) {
            return Err(TrainError::Config(format!(
                "layer_sizes needs at least input and output dims, got {:?}",
                self.layer_sizes
            )));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be positive".into()));
        }
        if self.t == 0 || self.t > self.epochs {
            return Err(TrainError::Config(format!(
                "t must be in 1..=epochs ({}), got {}",
                self.epochs, self.t
            )));
        }
        if self.k < 2 {
            return Err(TrainError::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(TrainError::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if let Some(robust) = &self.robust {
            if robust.epsilon < 0.0 || !robust.epsilon.is_finite() {
                return Err(TrainError::Config(format!(
                    "epsilon must be >= 0, got {}",
                    robust.epsilon
                )));
            }
            if robust.pgd_steps == 0 {
                return Err(TrainError::Config("pgd_steps must be positive".into()));
            }
            if robust.pgd_step_size < 0.0 {
                return Err(TrainError::Config("pgd_step_size must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// Load the dataset this spec trains on. The synthetic task always uses
    /// the fixed data seed so paired runs compare on identical data.
    pub fn load_dataset(&self) -> Result<Dataset, TrainError> {
        match &self.dataset {
            DataSource::Synthetic => Ok(synthetic_dataset(SYNTHETIC_DATA_SEED)),
            DataSource::Csv { path, test_fraction } => {
                load_csv_dataset(Path::new(path), *test_fraction)
            }
        }
    }
}
