//! Datasets for the training demos.
//!
//! The bundled task is a seeded Gaussian-mixture classification problem:
//! four classes, two clusters per class laid out on a circle in 2-D, then
//! lifted to 20 features by a fixed random projection. Opposite clusters
//! share a class, so the task is not linearly separable and actually needs
//! the hidden layer. A loader for plain numeric CSV files
//! (`f_1,...,f_d,label` per line) covers external data.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::TrainError;

/// Seed of the bundled synthetic task (fixed so paired training runs see
/// the same data).
pub const SYNTHETIC_DATA_SEED: u64 = 0xD5;

const SYNTHETIC_POINTS: usize = 2000;
const SYNTHETIC_TRAIN: usize = 1200;
const SYNTHETIC_CLASSES: usize = 4;
const SYNTHETIC_CLUSTERS_PER_CLASS: usize = 2;
const SYNTHETIC_DIM: usize = 20;

/// A labeled classification dataset split into train and test parts.
/// Features are row-major `n x feature_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_dim: usize,
    pub classes: usize,
    pub train_x: Vec<f64>,
    pub train_y: Vec<usize>,
    pub test_x: Vec<f64>,
    pub test_y: Vec<usize>,
}

impl Dataset {
    pub fn train_len(&self) -> usize {
        self.train_y.len()
    }

    pub fn test_len(&self) -> usize {
        self.test_y.len()
    }
}

/// Box-Muller standard normal.
pub(crate) fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(1e-12..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// The bundled synthetic task (~2000 points, 4 classes, 20 features).
/// Deterministic given the seed; use [`SYNTHETIC_DATA_SEED`] for the
/// bundled split.
pub fn synthetic_dataset(seed: u64) -> Dataset {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Fixed random projection from the 2-D blob plane up to 20 features.
    let projection: Vec<f64> =
        (0..SYNTHETIC_DIM * 2).map(|_| normal(&mut rng) / 2f64.sqrt()).collect();

    let blob_count = SYNTHETIC_CLASSES * SYNTHETIC_CLUSTERS_PER_CLASS;
    let centers: Vec<(f64, f64)> = (0..blob_count)
        .map(|b| {
            let angle = 2.0 * std::f64::consts::PI * b as f64 / blob_count as f64;
            (2.5 * angle.cos(), 2.5 * angle.sin())
        })
        .collect();

    let mut train_x = Vec::with_capacity(SYNTHETIC_TRAIN * SYNTHETIC_DIM);
    let mut train_y = Vec::with_capacity(SYNTHETIC_TRAIN);
    let mut test_x = Vec::with_capacity((SYNTHETIC_POINTS - SYNTHETIC_TRAIN) * SYNTHETIC_DIM);
    let mut test_y = Vec::with_capacity(SYNTHETIC_POINTS - SYNTHETIC_TRAIN);
    for i in 0..SYNTHETIC_POINTS {
        // Round-robin over blobs keeps both splits class-balanced; blobs b
        // and b + classes share a class, so classes face each other across
        // the circle.
        let blob = i % blob_count;
        let class = blob % SYNTHETIC_CLASSES;
        let (cx, cy) = centers[blob];
        let px = cx + 0.35 * normal(&mut rng);
        let py = cy + 0.35 * normal(&mut rng);
        let (x, y) = if i < SYNTHETIC_TRAIN {
            (&mut train_x, &mut train_y)
        } else {
            (&mut test_x, &mut test_y)
        };
        for d in 0..SYNTHETIC_DIM {
            x.push(projection[d * 2] * px + projection[d * 2 + 1] * py);
        }
        y.push(class);
    }
    Dataset {
        feature_dim: SYNTHETIC_DIM,
        classes: SYNTHETIC_CLASSES,
        train_x,
        train_y,
        test_x,
        test_y,
    }
}

/// Load a plain numeric CSV dataset: one sample per line as
/// `f_1,...,f_d,label`, `#` comments and an optional header line allowed.
/// Every `test_fraction` of rows (spread evenly) goes to the test split.
pub fn load_csv_dataset(path: &Path, test_fraction: f64) -> Result<Dataset, TrainError> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(TrainError::Config(format!(
            "test_fraction must be in [0, 1), got {test_fraction}"
        )));
    }
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::new();
    let mut feature_dim = None;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(TrainError::Data(format!(
                "line {}: need at least one feature and a label",
                line_no + 1
            )));
        }
        let parsed: Result<Vec<f64>, _> =
            fields[..fields.len() - 1].iter().map(|f| f.parse::<f64>()).collect();
        let features = match parsed {
            Ok(values) => values,
            // A single unparsable leading line is a header.
            Err(_) if rows.is_empty() && feature_dim.is_none() => continue,
            Err(e) => {
                return Err(TrainError::Data(format!("line {}: {e}", line_no + 1)));
            }
        };
        let label: usize = fields[fields.len() - 1].parse().map_err(|e| {
            TrainError::Data(format!("line {}: bad label: {e}", line_no + 1))
        })?;
        if let Some(dim) = feature_dim {
            if features.len() != dim {
                return Err(TrainError::Data(format!(
                    "line {}: {} features, expected {dim}",
                    line_no + 1,
                    features.len()
                )));
            }
        } else {
            feature_dim = Some(features.len());
        }
        rows.push((features, label));
    }
    let feature_dim = feature_dim.ok_or_else(|| TrainError::Data("no samples".into()))?;
    let classes = rows.iter().map(|(_, label)| label + 1).max().unwrap_or(0);

    let mut data = Dataset {
        feature_dim,
        classes,
        train_x: Vec::new(),
        train_y: Vec::new(),
        test_x: Vec::new(),
        test_y: Vec::new(),
    };
    for (i, (features, label)) in rows.into_iter().enumerate() {
        let to_test = ((i + 1) as f64 * test_fraction).floor()
            > (i as f64 * test_fraction).floor();
        if to_test {
            data.test_x.extend_from_slice(&features);
            data.test_y.push(label);
        } else {
            data.train_x.extend_from_slice(&features);
            data.train_y.push(label);
        }
    }
    if data.train_y.is_empty() {
        return Err(TrainError::Data("no training samples after split".into()));
    }
    Ok(data)
}
