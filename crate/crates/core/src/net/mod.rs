//! Stacked bidirectional LSTM that maps feature frames to per-frame
//! probabilities over {beat, downbeat, non-beat}, with training from scratch.

mod checkpoint;
mod loss;
mod lstm;
mod train;

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use checkpoint::{load_weights, save_weights, weights_from_bytes, weights_to_bytes};
pub use loss::{loss, Targets, BEAT, DOWNBEAT, NON_BEAT};
pub use train::{train, EarlyStopping, EpochRecord, StopDecision, TrainConfig, TrainingExample, TrainingLog};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Hidden units per direction.
pub const HIDDEN_SIZE: usize = 25;
/// Number of stacked bidirectional layers.
pub const NUM_LAYERS: usize = 3;
/// Output classes: beat (not downbeat), downbeat, non-beat.
pub const NUM_CLASSES: usize = 3;

/// Floating point type the network can run in.
pub trait Scalar: Float + FromPrimitive + Default + Debug + Sum + Send + Sync + 'static {}
impl<T: Float + FromPrimitive + Default + Debug + Sum + Send + Sync + 'static> Scalar for T {}

#[inline]
pub(crate) fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("representable constant")
}

/// Shape of the network. Production networks always use [`Architecture::standard`];
/// smaller shapes exist for gradient checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
}

#[derive(Debug, Clone, Copy)]
struct LstmBlock {
    offset: usize,
    input_dim: usize,
}

impl Architecture {
    pub fn standard(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: HIDDEN_SIZE,
            layers: NUM_LAYERS,
        }
    }

    pub fn is_standard(&self) -> bool {
        self.hidden == HIDDEN_SIZE && self.layers == NUM_LAYERS
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            2 * self.hidden
        }
    }

    fn lstm_size(&self, layer: usize) -> usize {
        let h = self.hidden;
        4 * h * (self.layer_input(layer) + h + 1)
    }

    /// Parameter block of `(layer, direction)`; direction 0 runs forward in time.
    fn block(&self, layer: usize, direction: usize) -> LstmBlock {
        let mut offset = 0;
        for l in 0..layer {
            offset += 2 * self.lstm_size(l);
        }
        offset += direction * self.lstm_size(layer);
        LstmBlock {
            offset,
            input_dim: self.layer_input(layer),
        }
    }

    fn output_offset(&self) -> usize {
        (0..self.layers).map(|l| 2 * self.lstm_size(l)).sum()
    }

    pub fn param_count(&self) -> usize {
        self.output_offset() + NUM_CLASSES * 2 * self.hidden + NUM_CLASSES
    }
}

/// All network parameters in one flat vector.
///
/// Layout: for each layer, the forward then the backward direction, each as
/// `W (4H x in)`, `U (4H x H)`, `b (4H)`; then the output map `V (3 x 2H)` and
/// its bias `(3)`. Every layer after the first reads the concatenated
/// forward/backward outputs of the layer below.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights<T = f32> {
    arch: Architecture,
    params: Vec<T>,
}

impl<T: Scalar> NetworkWeights<T> {
    pub fn zeros(arch: Architecture) -> Self {
        Self {
            arch,
            params: vec![T::zero(); arch.param_count()],
        }
    }

    pub fn from_params(arch: Architecture, params: Vec<T>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::Shape(format!(
                "{} parameters given, architecture needs {}",
                params.len(),
                arch.param_count()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Input("non-finite network parameter".into()));
        }
        Ok(Self { arch, params })
    }

    /// Seeded initialization: orthogonal recurrent blocks (per gate),
    /// uniform(-0.08, 0.08) input and output weights, forget-gate bias 1.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Self::zeros(arch);
        let h = arch.hidden;
        for layer in 0..arch.layers {
            for dir in 0..2 {
                let blk = arch.block(layer, dir);
                let (wi, rest) = w.params[blk.offset..].split_at_mut(4 * h * blk.input_dim);
                for v in wi.iter_mut() {
                    *v = lit(rng.gen_range(-0.08..0.08));
                }
                let (u, rest) = rest.split_at_mut(4 * h * h);
                for gate in 0..4 {
                    let q = random_orthogonal(h, &mut rng);
                    for r in 0..h {
                        for c in 0..h {
                            u[(gate * h + r) * h + c] = lit(q[r * h + c]);
                        }
                    }
                }
                for v in &mut rest[h..2 * h] {
                    *v = T::one();
                }
            }
        }
        let out = arch.output_offset();
        for v in &mut w.params[out..out + NUM_CLASSES * 2 * h] {
            *v = lit(rng.gen_range(-0.08..0.08));
        }
        w
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> NetworkWeights<U> {
        NetworkWeights {
            arch: self.arch,
            params: self.params.iter().map(|p| U::from(*p).expect("castable")).collect(),
        }
    }

    fn lstm(&self, layer: usize, dir: usize) -> lstm::LstmParams<'_, T> {
        let blk = self.arch.block(layer, dir);
        let h = self.arch.hidden;
        let s = &self.params[blk.offset..];
        let (w, s) = s.split_at(4 * h * blk.input_dim);
        let (u, s) = s.split_at(4 * h * h);
        lstm::LstmParams {
            hidden: h,
            input_dim: blk.input_dim,
            w,
            u,
            b: &s[..4 * h],
        }
    }

    fn lstm_grads(&mut self, layer: usize, dir: usize) -> lstm::LstmGrads<'_, T> {
        let blk = self.arch.block(layer, dir);
        let h = self.arch.hidden;
        let s = &mut self.params[blk.offset..];
        let (w, s) = s.split_at_mut(4 * h * blk.input_dim);
        let (u, s) = s.split_at_mut(4 * h * h);
        lstm::LstmGrads {
            w,
            u,
            b: &mut s[..4 * h],
        }
    }

    fn output(&self) -> (&[T], &[T]) {
        let off = self.arch.output_offset();
        self.params[off..].split_at(NUM_CLASSES * 2 * self.arch.hidden)
    }

    /// Index of the bias of output class `class` in [`Self::params`].
    pub fn output_bias_index(&self, class: usize) -> usize {
        self.arch.output_offset() + NUM_CLASSES * 2 * self.arch.hidden + class
    }

    pub fn norm(&self) -> T {
        self.params.iter().map(|&p| p * p).sum::<T>().sqrt()
    }

    /// Rewrites the first layer so that feeding raw inputs `x` gives what the
    /// current weights give for `(x - mean) / scale`.
    pub fn fold_input_affine(&mut self, mean: &[T], scale: &[T]) -> Result<()> {
        let n = self.arch.input_dim;
        if mean.len() != n || scale.len() != n {
            return Err(Error::Shape(format!("input affine of length {}/{} for {n} inputs", mean.len(), scale.len())));
        }
        let rows = 4 * self.arch.hidden;
        for dir in 0..2 {
            let blk = self.arch.block(0, dir);
            let (w, rest) = self.params[blk.offset..].split_at_mut(rows * n);
            let b = &mut rest[rows * self.arch.hidden..rows * self.arch.hidden + rows];
            for r in 0..rows {
                let row = &mut w[r * n..(r + 1) * n];
                let mut shift = T::zero();
                for c in 0..n {
                    row[c] = row[c] / scale[c];
                    shift = shift + row[c] * mean[c];
                }
                b[r] = b[r] - shift;
            }
        }
        Ok(())
    }
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Modified Gram-Schmidt on the rows of a Gaussian matrix.
    let mut m: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    for r in 0..n {
        for p in 0..r {
            let d: f64 = (0..n).map(|c| m[r * n + c] * m[p * n + c]).sum();
            for c in 0..n {
                m[r * n + c] -= d * m[p * n + c];
            }
        }
        let norm = (0..n).map(|c| m[r * n + c].powi(2)).sum::<f64>().sqrt();
        for c in 0..n {
            m[r * n + c] /= norm;
        }
    }
    m
}

/// Per-frame class probabilities, columns ordered (beat, downbeat, non-beat).
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSequence {
    pub rows: Vec<[f32; 3]>,
    pub frame_rate: f32,
}

impl ActivationSequence {
    /// Validates rows (entries in [0, 1], rows summing to 1 within 1e-4).
    pub fn new(rows: Vec<[f32; 3]>, frame_rate: f32) -> Result<Self> {
        for (t, r) in rows.iter().enumerate() {
            let sum: f32 = r.iter().sum();
            if r.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-4 {
                return Err(Error::Input(format!("activation row {t} is not a distribution: {r:?}")));
            }
        }
        Ok(Self { rows, frame_rate })
    }

    pub fn frames(&self) -> usize {
        self.rows.len()
    }
}

/// Everything the backward pass needs from a forward pass.
struct ForwardPass<T> {
    /// Inputs of every layer (layer 0 is the feature matrix itself is not stored).
    layer_outputs: Vec<Vec<T>>,
    caches: Vec<[lstm::LstmCache<T>; 2]>,
    probs: Vec<[T; 3]>,
}

fn run_forward<T: Scalar>(weights: &NetworkWeights<T>, input: &[T], frames: usize) -> ForwardPass<T> {
    let arch = weights.arch;
    let h = arch.hidden;
    let mut layer_outputs: Vec<Vec<T>> = Vec::with_capacity(arch.layers);
    let mut caches = Vec::with_capacity(arch.layers);
    for layer in 0..arch.layers {
        let x: &[T] = if layer == 0 { input } else { &layer_outputs[layer - 1] };
        let fwd = lstm::forward(&weights.lstm(layer, 0), x, frames, false);
        let bwd = lstm::forward(&weights.lstm(layer, 1), x, frames, true);
        let mut y = vec![T::zero(); frames * 2 * h];
        for t in 0..frames {
            y[t * 2 * h..t * 2 * h + h].copy_from_slice(&fwd.hidden[t * h..(t + 1) * h]);
            y[t * 2 * h + h..(t + 1) * 2 * h].copy_from_slice(&bwd.hidden[t * h..(t + 1) * h]);
        }
        layer_outputs.push(y);
        caches.push([fwd, bwd]);
    }
    let (v, c) = weights.output();
    let top = layer_outputs.last().map(Vec::as_slice).unwrap_or(input);
    let width = 2 * h;
    let probs = (0..frames)
        .map(|t| {
            let y = &top[t * width..(t + 1) * width];
            let mut z = [T::zero(); 3];
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = c[k] + y.iter().zip(&v[k * width..(k + 1) * width]).fold(T::zero(), |a, (&p, &q)| a + p * q);
            }
            softmax(z)
        })
        .collect();
    ForwardPass {
        layer_outputs,
        caches,
        probs,
    }
}

fn softmax<T: Scalar>(z: [T; 3]) -> [T; 3] {
    let m = z[0].max(z[1]).max(z[2]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp(), (z[2] - m).exp()];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

fn check_input(arch: Architecture, input_len: usize, frames: usize) -> Result<()> {
    if frames == 0 || input_len != frames * arch.input_dim {
        return Err(Error::Shape(format!(
            "network expects {} input dims, got {} values over {frames} frames",
            arch.input_dim, input_len
        )));
    }
    Ok(())
}

/// Class probabilities for raw row-major input.
pub fn predict<T: Scalar>(weights: &NetworkWeights<T>, input: &[T], frames: usize) -> Result<Vec<[T; 3]>> {
    check_input(weights.arch, input.len(), frames)?;
    Ok(run_forward(weights, input, frames).probs)
}

/// Runs the network over a feature matrix.
pub fn forward(features: &FeatureMatrix, weights: &NetworkWeights<f32>) -> Result<ActivationSequence> {
    if features.dims() != weights.arch.input_dim {
        return Err(Error::Shape(format!(
            "features have {} dims, network expects {}",
            features.dims(),
            weights.arch.input_dim
        )));
    }
    let rows = predict(weights, features.values.as_slice(), features.frames())?;
    Ok(ActivationSequence {
        rows,
        frame_rate: features.frame_rate,
    })
}

/// Weighted cross-entropy objective used for training:
/// `sum_t w_t * -log p_t[label_t] / frames`.
pub fn objective<T: Scalar>(weights: &NetworkWeights<T>, input: &[T], frames: usize, targets: &Targets) -> Result<T> {
    check_input(weights.arch, input.len(), frames)?;
    targets.check(frames)?;
    let probs = run_forward(weights, input, frames).probs;
    Ok(cross_entropy(&probs, targets))
}

fn cross_entropy<T: Scalar>(probs: &[[T; 3]], targets: &Targets) -> T {
    let floor = T::min_positive_value();
    let total = probs
        .iter()
        .zip(targets.labels.iter().zip(&targets.weights))
        .fold(T::zero(), |acc, (p, (&label, &w))| {
            acc - lit::<T>(w as f64) * p[label as usize].max(floor).ln()
        });
    total / lit(probs.len() as f64)
}

/// Loss and its gradient with respect to every parameter (same layout as the weights).
pub fn backward<T: Scalar>(
    weights: &NetworkWeights<T>,
    input: &[T],
    frames: usize,
    targets: &Targets,
) -> Result<(T, NetworkWeights<T>)> {
    check_input(weights.arch, input.len(), frames)?;
    targets.check(frames)?;
    let arch = weights.arch;
    let h = arch.hidden;
    let width = 2 * h;
    let pass = run_forward(weights, input, frames);
    let loss = cross_entropy(&pass.probs, targets);
    let mut grad = NetworkWeights::zeros(arch);
    let scale = T::one() / lit(frames as f64);

    // Softmax + cross-entropy: dz = w_t / T * (p - onehot).
    let top = pass.layer_outputs.last().map(Vec::as_slice).unwrap_or(input);
    let mut d_top = vec![T::zero(); frames * width];
    {
        let (v, _) = weights.output();
        let off = arch.output_offset();
        let (dv, dc) = grad.params[off..].split_at_mut(NUM_CLASSES * width);
        for t in 0..frames {
            let wt = lit::<T>(targets.weights[t] as f64) * scale;
            let label = targets.labels[t] as usize;
            let y = &top[t * width..(t + 1) * width];
            let dy = &mut d_top[t * width..(t + 1) * width];
            for k in 0..NUM_CLASSES {
                let onehot = if k == label { T::one() } else { T::zero() };
                let dz = wt * (pass.probs[t][k] - onehot);
                dc[k] = dc[k] + dz;
                for j in 0..width {
                    dv[k * width + j] = dv[k * width + j] + dz * y[j];
                    dy[j] = dy[j] + dz * v[k * width + j];
                }
            }
        }
    }

    let mut d_out = d_top;
    for layer in (0..arch.layers).rev() {
        let x: &[T] = if layer == 0 { input } else { &pass.layer_outputs[layer - 1] };
        let in_dim = arch.layer_input(layer);
        let mut d_in = (layer > 0).then(|| vec![T::zero(); frames * in_dim]);
        for dir in 0..2 {
            let mut dh = vec![T::zero(); frames * h];
            for t in 0..frames {
                dh[t * h..(t + 1) * h].copy_from_slice(&d_out[t * width + dir * h..t * width + (dir + 1) * h]);
            }
            let params = weights.lstm(layer, dir);
            let mut g = grad.lstm_grads(layer, dir);
            lstm::backward(
                &params,
                &mut g,
                x,
                frames,
                dir == 1,
                &pass.caches[layer][dir],
                &dh,
                d_in.as_deref_mut(),
            );
        }
        if let Some(d) = d_in {
            d_out = d;
        }
    }
    Ok((loss, grad))
}
