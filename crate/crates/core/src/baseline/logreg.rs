use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    /// Mini-batch size; 0 means full batch.
    pub batch: usize,
    /// Weight of positive examples in the loss.
    pub pos_weight: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            lr: 0.1,
            epochs: 30,
            l2: 1e-4,
            batch: 256,
            pos_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub features: FeatureVector,
    pub label: bool,
    pub item_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub feature_order: Vec<String>,
    pub config: LogRegConfig,
    pub seed: u64,
    #[serde(default)]
    pub loss_trace: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl BaselineModel {
    fn standardized(&self, f: &FeatureVector) -> [f64; FEATURE_COUNT] {
        let mut z = [0.0; FEATURE_COUNT];
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = (f.0[i] - self.means[i]) / self.stds[i];
        }
        z
    }

    pub fn logit(&self, f: &FeatureVector) -> f64 {
        let z = self.standardized(f);
        self.bias + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn probability(&self, f: &FeatureVector) -> f64 {
        sigmoid(self.logit(f))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: BaselineModel = io::read_json(path)?;
        for (what, len) in [("weights", m.weights.len()), ("means", m.means.len()), ("stds", m.stds.len())] {
            if len != FEATURE_COUNT {
                return Err(Error::Checkpoint(format!("baseline {what} has {len} entries, expected {FEATURE_COUNT}")));
            }
        }
        if m.feature_order.iter().map(String::as_str).ne(FEATURE_NAMES) {
            return Err(Error::Checkpoint("baseline feature order differs from this build".into()));
        }
        Ok(m)
    }
}

/// Weighted mean cross-entropy plus `l2 / 2 * |w|^2`.
fn objective(model: &BaselineModel, rows: &[([f64; FEATURE_COUNT], bool)], pos_weight: f64) -> f64 {
    let (mut total, mut weight) = (0.0, 0.0);
    for (z, y) in rows {
        let r = model.bias + z.iter().zip(&model.weights).map(|(a, b)| a * b).sum::<f64>();
        if *y {
            total += pos_weight * softplus(-r);
            weight += pos_weight;
        } else {
            total += softplus(r);
            weight += 1.0;
        }
    }
    let reg: f64 = model.weights.iter().map(|w| w * w).sum::<f64>() * model.config.l2 / 2.0;
    total / weight + reg
}

/// Standardizes features (zero-variance columns keep std 1) and fits by
/// mini-batch gradient descent. `loss_trace` holds the full objective after
/// each epoch.
pub fn train_logreg(examples: &[TrainingExample], cfg: &LogRegConfig, seed: u64) -> Result<BaselineModel> {
    let positives = examples.iter().filter(|e| e.label).count();
    if positives == 0 || positives == examples.len() {
        return Err(Error::DegenerateTrainingSet(format!(
            "{positives} positives among {} examples",
            examples.len()
        )));
    }
    if !(cfg.lr.is_finite() && cfg.lr >= 0.0 && cfg.pos_weight > 0.0 && cfg.l2 >= 0.0) {
        return Err(Error::InvalidConfig(format!("logistic regression settings {cfg:?}")));
    }
    let n = examples.len() as f64;
    let mut means = vec![0.0; FEATURE_COUNT];
    for e in examples {
        for (m, x) in means.iter_mut().zip(e.features.0) {
            *m += x / n;
        }
    }
    let mut stds = vec![0.0; FEATURE_COUNT];
    for e in examples {
        for i in 0..FEATURE_COUNT {
            stds[i] += (e.features.0[i] - means[i]).powi(2) / n;
        }
    }
    for s in &mut stds {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    let mut model = BaselineModel {
        weights: vec![0.0; FEATURE_COUNT],
        bias: 0.0,
        means,
        stds,
        feature_order: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        config: cfg.clone(),
        seed,
        loss_trace: Vec::new(),
    };
    let rows: Vec<([f64; FEATURE_COUNT], bool)> = examples
        .iter()
        .map(|e| (model.standardized(&e.features), e.label))
        .collect();
    if rows.iter().flat_map(|(z, _)| z).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("baseline features".into()));
    }
    let batch = if cfg.batch == 0 { rows.len() } else { cfg.batch.min(rows.len()) };
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut gw = [0.0; FEATURE_COUNT];
            let (mut gb, mut weight) = (0.0, 0.0);
            for &i in chunk {
                let (z, y) = &rows[i];
                let r = model.bias + z.iter().zip(&model.weights).map(|(a, b)| a * b).sum::<f64>();
                let (w, target) = if *y { (cfg.pos_weight, 1.0) } else { (1.0, 0.0) };
                let g = w * (sigmoid(r) - target);
                for (gj, zj) in gw.iter_mut().zip(z) {
                    *gj += g * zj;
                }
                gb += g;
                weight += w;
            }
            for (wj, gj) in model.weights.iter_mut().zip(gw) {
                *wj -= cfg.lr * (gj / weight + cfg.l2 * *wj);
            }
            model.bias -= cfg.lr * gb / weight;
        }
        model.loss_trace.push(objective(&model, &rows, cfg.pos_weight));
    }
    Ok(model)
}
