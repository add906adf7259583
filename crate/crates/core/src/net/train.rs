use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{backward, objective, Architecture, NetworkWeights, Targets};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f32,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub gradient_clip_norm: f32,
    pub seed: u64,
    pub target_widen_frames: usize,
    /// Optional per-class loss multipliers (beat, downbeat, non-beat). Off by default.
    pub class_weights: Option<[f32; 3]>,
    pub beta1: f32,
    pub beta2: f32,
    /// Cut training sequences into consecutive chunks of at most this many
    /// frames; `None` trains on whole sequences.
    pub chunk_frames: Option<usize>,
    /// Train on per-dimension standardized inputs; the scaling is folded into
    /// the first layer of the returned weights.
    pub standardize_inputs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 1,
            max_epochs: 100,
            patience: 20,
            gradient_clip_norm: 5.0,
            seed: 42,
            target_widen_frames: 1,
            class_weights: None,
            beta1: 0.9,
            beta2: 0.999,
            chunk_frames: Some(200),
            standardize_inputs: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train config: {m}")));
        if !(self.learning_rate > 0.0) || !(self.gradient_clip_norm > 0.0) {
            return bad("learning_rate and gradient_clip_norm must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive");
        }
        if self.patience > self.max_epochs {
            return bad("patience cannot exceed max_epochs");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.chunk_frames == Some(0) {
            return bad("chunk_frames must be positive");
        }
        if let Some(cw) = self.class_weights {
            if cw.iter().any(|w| !(*w > 0.0)) {
                return bad("class weights must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub features: FeatureMatrix,
    pub targets: Targets,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn best_val_loss(&self) -> f64 {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .map_or(self.initial_val_loss, |e| e.val_loss)
    }

    /// UTF-8 CSV with header `epoch,train_loss,val_loss`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:.8},{:.8}\n", e.epoch, e.train_loss, e.val_loss));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a new best loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    pub fn update(&mut self, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.stale = 0;
            StopDecision::Continue
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    step: i32,
    lr: f32,
    beta1: f32,
    beta2: f32,
}

impl Adam {
    const EPS: f32 = 1e-8;

    fn new(n: usize, config: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
        }
    }

    fn apply(&mut self, params: &mut [f32], grad: &[f32]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

fn chunked(set: &[TrainingExample], chunk: Option<usize>) -> Vec<(Vec<f32>, usize, Targets)> {
    let mut out = Vec::new();
    for ex in set {
        let dims = ex.features.dims();
        let frames = ex.features.frames();
        let len = chunk.unwrap_or(frames).max(1);
        let mut start = 0;
        while start < frames {
            let end = (start + len).min(frames);
            out.push((
                ex.features.values.as_slice()[start * dims..end * dims].to_vec(),
                end - start,
                Targets {
                    labels: ex.targets.labels[start..end].to_vec(),
                    weights: ex.targets.weights[start..end].to_vec(),
                },
            ));
            start = end;
        }
    }
    out
}

fn mean_objective(weights: &NetworkWeights<f32>, set: &[TrainingExample]) -> Result<f64> {
    let losses = set
        .par_iter()
        .map(|ex| objective(weights, ex.features.values.as_slice(), ex.features.frames(), &ex.targets))
        .collect::<Result<Vec<f32>>>()?;
    Ok(losses.iter().map(|&l| l as f64).sum::<f64>() / losses.len() as f64)
}

/// Trains a standard-architecture network from a seeded initialization.
///
/// Minibatch gradients are computed in parallel and summed in a fixed order,
/// so results are identical for a given seed regardless of thread count.
/// Returns the weights from the epoch with the lowest validation loss.
pub fn train(
    train_set: &[TrainingExample],
    val_set: &[TrainingExample],
    config: &TrainConfig,
) -> Result<(NetworkWeights<f32>, TrainingLog)> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyInput("training and validation sets must be non-empty".into()));
    }
    let dims = train_set[0].features.dims();
    for ex in train_set.iter().chain(val_set) {
        if ex.features.dims() != dims {
            return Err(Error::Shape(format!(
                "inconsistent feature dims: {} vs {dims}",
                ex.features.dims()
            )));
        }
        ex.targets.check(ex.features.frames())?;
    }

    let affine = if config.standardize_inputs {
        Some(input_statistics(train_set))
    } else {
        None
    };
    let standardized = |set: &[TrainingExample]| -> Vec<TrainingExample> {
        match &affine {
            Some((mean, scale)) => set.iter().map(|ex| standardize(ex, mean, scale)).collect(),
            None => set.to_vec(),
        }
    };
    let (train_set, val_set) = (&standardized(train_set)[..], &standardized(val_set)[..]);

    let train_items = chunked(train_set, config.chunk_frames);
    let mut weights = NetworkWeights::<f32>::init(Architecture::standard(dims), config.seed);
    let mut adam = Adam::new(weights.params().len(), config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_items.len()).collect();
    let mut stopper = EarlyStopping::new(config.patience);

    let initial_val_loss = mean_objective(&weights, val_set)?;
    log::info!("initial validation loss {initial_val_loss:.5}");
    let mut log = TrainingLog {
        initial_val_loss,
        epochs: Vec::new(),
        best_epoch: 0,
    };
    let mut best = (f64::INFINITY, weights.clone());

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for batch in order.chunks(config.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| {
                    let (x, frames, targets) = &train_items[i];
                    backward(&weights, x, *frames, targets)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grad = vec![0.0f32; weights.params().len()];
            for (loss, g) in &results {
                loss_sum += *loss as f64;
                for (acc, &v) in grad.iter_mut().zip(g.params()) {
                    *acc += v;
                }
            }
            let inv = 1.0 / batch.len() as f32;
            let mut norm_sq = 0.0f64;
            for g in grad.iter_mut() {
                *g *= inv;
                norm_sq += (*g as f64) * (*g as f64);
            }
            if !norm_sq.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            let norm = norm_sq.sqrt() as f32;
            if norm > config.gradient_clip_norm {
                let s = config.gradient_clip_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            adam.apply(weights.params_mut(), &grad);
        }
        let train_loss = loss_sum / train_items.len() as f64;
        let val_loss = mean_objective(&weights, val_set)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        log::info!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, weights.clone());
            log.best_epoch = epoch;
        }
        if stopper.update(val_loss) == StopDecision::Stop {
            break;
        }
    }
    let mut weights = best.1;
    if let Some((mean, scale)) = &affine {
        weights.fold_input_affine(mean, scale)?;
    }
    Ok((weights, log))
}

/// Per-dimension mean and standard deviation over every training frame.
/// Dimensions with (near) zero spread keep scale 1.
fn input_statistics(set: &[TrainingExample]) -> (Vec<f32>, Vec<f32>) {
    let dims = set[0].features.dims();
    let mut sum = vec![0.0f64; dims];
    let mut sq = vec![0.0f64; dims];
    let mut n = 0usize;
    for ex in set {
        for t in 0..ex.features.frames() {
            for (d, &v) in ex.features.values.row(t).iter().enumerate() {
                sum[d] += v as f64;
                sq[d] += (v as f64) * (v as f64);
            }
            n += 1;
        }
    }
    let n = n.max(1) as f64;
    let mean: Vec<f32> = sum.iter().map(|s| (s / n) as f32).collect();
    let scale = sum
        .iter()
        .zip(&sq)
        .map(|(s, q)| {
            let var = (q / n - (s / n).powi(2)).max(0.0);
            if var.sqrt() > 1e-4 {
                var.sqrt() as f32
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

fn standardize(ex: &TrainingExample, mean: &[f32], scale: &[f32]) -> TrainingExample {
    let mut out = ex.clone();
    let dims = mean.len();
    for (i, v) in out.features.values.as_mut_slice().iter_mut().enumerate() {
        let d = i % dims;
        *v = (*v - mean[d]) / scale[d];
    }
    out
}
