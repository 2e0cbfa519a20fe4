//! Adam training with early stopping, and the fitted [`Forecaster`].
//!
//! Per-sample gradients are computed in fixed chunks and summed in chunk
//! order, so a run is reproducible for a given seed whichever
//! [`Execution`] policy evaluates the chunks.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ensemble::IssuedForecasts;
use super::features::{FeatureTable, Split, WindowSet};
use super::model::{ModelConfig, Transformer};
use super::{mae, persistence_forecast, rmse, ForecastError, Normalizer, Target, HORIZON, WINDOW};
use crate::par::Execution;

const CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            execution: Execution::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), ForecastError> {
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(ForecastError::Config("learning rate must be positive, weight decay non-negative".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(ForecastError::Config("batch size and epoch count must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the metrics history. Validation errors are in target units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-window MSE on the normalised training targets.
    pub train_mse: f64,
    pub val_rmse: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub test_rmse: f64,
    pub test_mae: f64,
    pub persistence_test_rmse: f64,
    pub persistence_test_mae: f64,
    pub train_windows: usize,
    pub val_windows: usize,
    pub test_windows: usize,
}

pub fn write_metrics_csv<W: Write>(history: &[EpochMetrics], writer: W) -> Result<(), ForecastError> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| ForecastError::Data(e.to_string());
    w.write_record(["epoch", "train_mse", "val_rmse", "val_mae"]).map_err(err)?;
    for m in history {
        w.serialize((m.epoch, m.train_mse, m.val_rmse, m.val_mae)).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One step; weight decay is added to the gradient (L2 form).
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, wd: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i] + wd * params[i];
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Mean gradient and mean loss of a batch.
fn batch_gradient(
    model: &Transformer,
    data: &WindowSet,
    batch: &[usize],
    seed: Option<u64>,
    exec: Execution,
) -> (Vec<f64>, f64) {
    let chunks: Vec<&[usize]> = batch.chunks(CHUNK).collect();
    let weight = 1.0 / batch.len() as f64;
    let parts = exec.map(&chunks, |chunk| {
        let mut g = vec![0.0; model.n_params()];
        let mut loss = 0.0;
        for &s in *chunk {
            let ds = seed.map(|k| splitmix(k ^ s as u64));
            loss += model.loss_and_grad(data.input(s), data.output(s), ds, weight, &mut g);
        }
        (g, loss)
    });
    let mut grad = vec![0.0; model.n_params()];
    let mut loss = 0.0;
    for (g, l) in parts {
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        loss += l;
    }
    (grad, loss * weight)
}

/// Denormalised predictions and actuals over `starts`, flattened.
fn evaluate(model: &Transformer, data: &WindowSet, norm: &Normalizer, starts: &[usize], exec: Execution) -> (f64, f64) {
    let preds = exec.map(starts, |&s| model.forward(data.input(s), None).output.to_vec());
    let mut p = Vec::with_capacity(starts.len() * HORIZON);
    let mut a = Vec::with_capacity(starts.len() * HORIZON);
    for (&s, out) in starts.iter().zip(preds) {
        p.extend(out.iter().map(|&z| norm.denormalize(0, z)));
        a.extend(data.output(s).iter().map(|&z| norm.denormalize(0, z)));
    }
    (rmse(&p, &a), mae(&p, &a))
}

/// Trains in place on `split.train`, early-stopping on validation RMSE, and
/// leaves the best-validation parameters in `model`.
pub fn train(
    model: &mut Transformer,
    data: &WindowSet,
    norm: &Normalizer,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<Vec<EpochMetrics>, ForecastError> {
    cfg.check()?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(ForecastError::Data(format!(
            "need training and validation windows, got {} and {}",
            split.train.len(),
            split.val.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.n_params());
    let mut order = split.train.clone();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, model.params.clone());
    let mut stale = 0;
    let dropout = model.config.dropout > 0.0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let seed = dropout.then(|| splitmix(cfg.seed ^ ((epoch as u64) << 40) ^ ((b as u64) << 20)));
            let (grad, loss) = batch_gradient(model, data, batch, seed, cfg.execution);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ForecastError::Diverged { epoch, batch: b, loss });
            }
            total += loss * batch.len() as f64;
            adam.step(&mut model.params, &grad, cfg.learning_rate, cfg.weight_decay);
        }
        let (val_rmse, val_mae) = evaluate(model, data, norm, &split.val, cfg.execution);
        if !val_rmse.is_finite() {
            return Err(ForecastError::Diverged {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
                loss: val_rmse,
            });
        }
        history.push(EpochMetrics {
            epoch,
            train_mse: total / order.len() as f64,
            val_rmse,
            val_mae,
        });
        if val_rmse < best.0 {
            best = (val_rmse, model.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    model.params = best.1;
    Ok(history)
}

/// A trained model with its feature schema and normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecaster {
    pub target: Target,
    pub names: Vec<String>,
    pub normalizer: Normalizer,
    pub model: Transformer,
}

impl Forecaster {
    /// Normalises on the training days, trains, and scores the test days
    /// against persistence.
    pub fn fit(table: &FeatureTable, mut config: ModelConfig, cfg: &TrainConfig) -> Result<(Self, TrainReport), ForecastError> {
        config.n_features = table.n_features();
        config.window = WINDOW;
        config.horizon = HORIZON;
        let split = table.split();
        let norm = Normalizer::fit(&table.columns, 0..split.boundaries[0]);
        let data = WindowSet::new(table, &norm);
        let mut model = Transformer::new(config, cfg.seed)?;
        let history = train(&mut model, &data, &norm, &split, cfg)?;
        let best_epoch = history
            .iter()
            .min_by(|a, b| a.val_rmse.total_cmp(&b.val_rmse))
            .map_or(0, |m| m.epoch);
        let (test_rmse, test_mae) = evaluate(&model, &data, &norm, &split.test, cfg.execution);
        let (persistence_test_rmse, persistence_test_mae) = persistence_scores(table, &split.test)?;
        let report = TrainReport {
            history,
            best_epoch,
            test_rmse,
            test_mae,
            persistence_test_rmse,
            persistence_test_mae,
            train_windows: split.train.len(),
            val_windows: split.val.len(),
            test_windows: split.test.len(),
        };
        let forecaster = Self {
            target: table.target,
            names: table.names.clone(),
            normalizer: norm,
            model,
        };
        Ok((forecaster, report))
    }

    fn check_table(&self, table: &FeatureTable) -> Result<(), ForecastError> {
        if table.names != self.names {
            return Err(ForecastError::Data(format!(
                "feature columns {:?} do not match the model's {:?}",
                table.names, self.names
            )));
        }
        Ok(())
    }

    /// Forecast for rows `k..k+24` from rows `k-24..k`.
    pub fn issue(&self, table: &FeatureTable, k: usize) -> Result<Vec<f64>, ForecastError> {
        self.check_table(table)?;
        if k < WINDOW || k > table.rows() {
            return Err(ForecastError::Data(format!("cannot issue at row {k} of {}", table.rows())));
        }
        let f = table.n_features();
        let mut x = Vec::with_capacity(WINDOW * f);
        for i in k - WINDOW..k {
            x.extend((0..f).map(|j| self.normalizer.normalize(j, table.columns[j][i])));
        }
        let z = self.model.predict(&x)?;
        Ok(z.into_iter().map(|v| self.normalizer.denormalize(0, v)).collect())
    }

    /// Forecasts issued at every row in `rows`.
    pub fn issue_all(
        &self,
        table: &FeatureTable,
        rows: std::ops::Range<usize>,
        exec: Execution,
    ) -> Result<IssuedForecasts, ForecastError> {
        self.check_table(table)?;
        let ks: Vec<usize> = rows.clone().collect();
        let values = exec.map(&ks, |&k| self.issue(table, k));
        Ok(IssuedForecasts {
            first_issue: rows.start,
            values: values.into_iter().collect::<Result<_, _>>()?,
        })
    }
}

/// Persistence RMSE and MAE over the windows starting at `starts`.
pub fn persistence_scores(table: &FeatureTable, starts: &[usize]) -> Result<(f64, f64), ForecastError> {
    let y = table.target_values();
    let mut p = Vec::with_capacity(starts.len() * HORIZON);
    let mut a = Vec::with_capacity(starts.len() * HORIZON);
    for &s in starts {
        p.extend(persistence_forecast(&y[s..s + WINDOW])?);
        a.extend_from_slice(&y[s + WINDOW..s + WINDOW + HORIZON]);
    }
    Ok((rmse(&p, &a), mae(&p, &a)))
}
