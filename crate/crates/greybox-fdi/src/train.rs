//! Training of grey-box recurrent networks on nominal data: mean-square
//! prediction error, gradients by backpropagation through time over
//! full-length batches, an Adam optimizer with a stepped decay schedule, and
//! ensembles of independently initialized members.

use rayon::prelude::*;
use thiserror::Error;

use crate::causal::Arg;
use crate::rnn::{GreyBoxRnn, MlpCache, MlpGrads, NetConfig, RnnError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty series")]
    EmptySeries,
    #[error("series lengths differ")]
    LengthMismatch,
    #[error("no training batches")]
    NoBatches,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("forward pass diverged at step {t}")]
    DivergentForward { t: usize },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("ensemble members have different structures")]
    StructureMismatch,
    #[error(transparent)]
    Rnn(#[from] RnnError),
}

/// Training hyperparameters. Defaults follow the reference schedule: 2000
/// epochs, learning rate 5e-4 cut by 3% every 10th epoch, batches of 600
/// samples.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub batch_len: usize,
    pub batch_count: Option<usize>,
    pub seed: u64,
    pub hidden_widths: Vec<usize>,
    /// Epochs between progress reports (CLI only).
    pub report_every: usize,
    /// Reshuffle batch order each epoch from the seed; off by default.
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            initial_lr: 5e-4,
            decay_factor: 0.97,
            decay_every: 10,
            batch_len: 600,
            batch_count: None,
            seed: 0,
            hidden_widths: vec![256, 256],
            report_every: 100,
            shuffle: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.initial_lr <= 0.0 {
            return Err(TrainError::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(TrainError::InvalidConfig("decay factor must be in (0, 1]".into()));
        }
        if self.decay_every == 0 || self.batch_len == 0 {
            return Err(TrainError::InvalidConfig("lengths must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate at a zero-based epoch index: the initial rate decayed
    /// once per completed `decay_every` block.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.initial_lr * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

/// One contiguous training batch: aligned input columns and the measured
/// output to predict.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Vec<Vec<f64>>,
    pub measured: Vec<f64>,
}

/// Splits series into equally sized contiguous batches; a trailing partial
/// chunk is dropped.
pub fn make_batches(
    inputs: &[Vec<f64>],
    measured: &[f64],
    batch_len: usize,
    batch_count: Option<usize>,
) -> Result<Vec<Batch>, TrainError> {
    if measured.is_empty() {
        return Err(TrainError::EmptySeries);
    }
    if inputs.iter().any(|col| col.len() != measured.len()) {
        return Err(TrainError::LengthMismatch);
    }
    let full = measured.len() / batch_len;
    let n = batch_count.map_or(full, |c| c.min(full));
    if n == 0 {
        return Err(TrainError::NoBatches);
    }
    Ok((0..n)
        .map(|b| {
            let range = b * batch_len..(b + 1) * batch_len;
            Batch {
                inputs: inputs.iter().map(|col| col[range.clone()].to_vec()).collect(),
                measured: measured[range.clone()].to_vec(),
            }
        })
        .collect())
}

/// Mean square prediction error.
pub fn mse_loss(predicted: &[f64], target: &[f64]) -> Result<f64, TrainError> {
    if predicted.is_empty() {
        return Err(TrainError::EmptySeries);
    }
    if predicted.len() != target.len() {
        return Err(TrainError::LengthMismatch);
    }
    let sum: f64 = predicted
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / predicted.len() as f64)
}

/// Gradients of every network parameter of a grey-box RNN.
#[derive(Debug, Clone)]
pub struct RnnGrads {
    pub g: Vec<MlpGrads>,
    pub h: MlpGrads,
}

/// Exact gradients of the batch MSE with respect to every parameter,
/// unrolled through all time steps of the batch.
pub fn bptt_gradients(rnn: &GreyBoxRnn, batch: &Batch) -> Result<(RnnGrads, f64), TrainError> {
    let n_states = rnn.state_count();
    let len = batch.measured.len();
    if len == 0 {
        return Err(TrainError::EmptySeries);
    }
    if batch.inputs.len() != rnn.structure.inputs.len()
        || batch.inputs.iter().any(|c| c.len() != len)
    {
        return Err(TrainError::LengthMismatch);
    }

    // Forward pass, caching per-step activations of every network.
    let mut g_caches: Vec<Vec<MlpCache>> = Vec::with_capacity(len);
    let mut h_caches: Vec<MlpCache> = Vec::with_capacity(len);
    let mut predictions = Vec::with_capacity(len);
    let mut x = rnn.initial_state.clone();
    let mut u = vec![0.0; batch.inputs.len()];
    for t in 0..len {
        for (k, col) in batch.inputs.iter().enumerate() {
            u[k] = col[t];
        }
        let mut step_caches = Vec::with_capacity(n_states);
        let mut next = Vec::with_capacity(n_states);
        for (i, net) in rnn.g_nets.iter().enumerate() {
            let v = GreyBoxRnn::gather(&rnn.structure.g_args[i], &x, &u);
            let (out, cache) = net.forward_cached(&v);
            next.push(x[i] + rnn.sampling_time * out);
            step_caches.push(cache);
        }
        if next.iter().any(|v| !v.is_finite() || v.abs() > rnn.state_clamp) {
            return Err(TrainError::DivergentForward { t });
        }
        let hv = GreyBoxRnn::gather(&rnn.structure.h_args, &x, &u);
        let (y_hat, h_cache) = rnn.h_net.forward_cached(&hv);
        predictions.push(y_hat);
        g_caches.push(step_caches);
        h_caches.push(h_cache);
        x = next;
    }
    let loss = mse_loss(&predictions, &batch.measured)?;

    // Backward pass: the state adjoint carries dLoss/dx[t+1] into step t.
    let mut grads = RnnGrads {
        g: rnn.g_nets.iter().map(|n| n.zero_grads()).collect(),
        h: rnn.h_net.zero_grads(),
    };
    let mut adjoint = vec![0.0; n_states];
    for t in (0..len).rev() {
        // identity part of d x[t+1] / d x[t]
        let mut adj_t = adjoint.clone();
        for (j, net) in rnn.g_nets.iter().enumerate() {
            let upstream = rnn.sampling_time * adjoint[j];
            let input_grad = net.backward(&g_caches[t][j], upstream, &mut grads.g[j]);
            for (pos, arg) in rnn.structure.g_args[j].iter().enumerate() {
                if let Arg::State(i) = arg {
                    adj_t[*i] += input_grad[pos];
                }
            }
        }
        let dy = 2.0 * (predictions[t] - batch.measured[t]) / len as f64;
        let h_input_grad = rnn.h_net.backward(&h_caches[t], dy, &mut grads.h);
        for (pos, arg) in rnn.structure.h_args.iter().enumerate() {
            if let Arg::State(i) = arg {
                adj_t[*i] += h_input_grad[pos];
            }
        }
        adjoint = adj_t;
    }
    Ok((grads, loss))
}

/// Flattens all parameters in a fixed order (g-nets then h, each layer's
/// weights row-major then biases).
pub fn collect_params(rnn: &GreyBoxRnn) -> Vec<f64> {
    let mut out = Vec::with_capacity(rnn.param_count());
    for net in rnn.g_nets.iter().chain(std::iter::once(&rnn.h_net)) {
        for layer in net.layers() {
            out.extend(layer.weights.iter());
            out.extend(layer.biases.iter());
        }
    }
    out
}

/// Writes a flat parameter vector back in `collect_params` order.
pub fn apply_params(rnn: &mut GreyBoxRnn, params: &[f64]) {
    let mut it = params.iter();
    for net in rnn.g_nets.iter_mut().chain(std::iter::once(&mut rnn.h_net)) {
        for layer in net.layers_mut() {
            for w in layer.weights.iter_mut() {
                *w = *it.next().expect("parameter vector too short");
            }
            for b in layer.biases.iter_mut() {
                *b = *it.next().expect("parameter vector too short");
            }
        }
    }
    assert!(it.next().is_none(), "parameter vector too long");
}

/// Flattens gradients in `collect_params` order.
pub fn collect_grads(grads: &RnnGrads) -> Vec<f64> {
    let mut out = Vec::new();
    for g in grads.g.iter().chain(std::iter::once(&grads.h)) {
        for (w, b) in g.weights.iter().zip(&g.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
    }
    out
}

/// First/second moment state of the Adam optimizer.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: usize,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(param_count: usize) -> AdamState {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }
}

/// One Adam update with bias correction:
/// `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let b1t = 1.0 - state.beta1.powi(state.step as i32);
    let b2t = 1.0 - state.beta2.powi(state.step as i32);
    for i in 0..params.len() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / b1t;
        let v_hat = state.v[i] / b2t;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
}

/// Per-epoch averaged training loss.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub loss_curve: Vec<f64>,
}

/// Trains in place: one Adam update per batch, every batch restarted from
/// the shared initial state, loss reported as the epoch average.
pub fn train(
    rnn: &mut GreyBoxRnn,
    batches: &[Batch],
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if batches.is_empty() {
        return Err(TrainError::NoBatches);
    }
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut adam = AdamState::new(rnn.param_count());
    let mut order: Vec<usize> = (0..batches.len()).collect();
    let mut shuffle_rng = {
        use rand::SeedableRng;
        rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5851_f42d_4c95_7f2d)
    };
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            use rand::seq::SliceRandom;
            order.shuffle(&mut shuffle_rng);
        }
        let lr = cfg.learning_rate_at(epoch);
        let mut epoch_loss = 0.0;
        for &b in &order {
            let (grads, loss) = bptt_gradients(rnn, &batches[b])?;
            epoch_loss += loss;
            let mut params = collect_params(rnn);
            adam_step(&mut params, &collect_grads(&grads), &mut adam, lr);
            apply_params(rnn, &params);
        }
        epoch_loss /= batches.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        loss_curve.push(epoch_loss);
    }
    Ok(TrainReport { loss_curve })
}

/// Trains one member per seed, in parallel; members differ only in their
/// parameter-initialization seed.
pub fn train_ensemble(
    structure: &crate::causal::StateSpaceStructure,
    batches: &[Batch],
    net_cfg: &NetConfig,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<(GreyBoxRnn, TrainReport)>, TrainError> {
    seeds
        .par_iter()
        .map(|&seed| {
            let member_cfg = NetConfig {
                seed,
                ..net_cfg.clone()
            };
            let mut rnn = GreyBoxRnn::new(structure.clone(), &member_cfg)?;
            let report = train(&mut rnn, batches, cfg)?;
            Ok((rnn, report))
        })
        .collect()
}

/// Pointwise mean, sample standard deviation, and the residual of the mean
/// prediction across ensemble members, with a three-sigma band.
#[derive(Debug, Clone)]
pub struct EnsemblePrediction {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub band_lower: Vec<f64>,
    pub band_upper: Vec<f64>,
    pub residual: Vec<f64>,
}

/// Identically structured networks treated as one predictor.
#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<GreyBoxRnn>,
}

impl Ensemble {
    pub fn new(members: Vec<GreyBoxRnn>) -> Result<Ensemble, TrainError> {
        if members.len() < 2 {
            return Err(TrainError::InvalidConfig("an ensemble needs at least two members".into()));
        }
        let hash = members[0].structure.structure_hash();
        if members[1..].iter().any(|m| m.structure.structure_hash() != hash) {
            return Err(TrainError::StructureMismatch);
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[GreyBoxRnn] {
        &self.members
    }

    pub fn predict(
        &self,
        inputs: &[Vec<f64>],
        measured: &[f64],
    ) -> Result<EnsemblePrediction, TrainError> {
        let trajectories: Vec<_> = self
            .members
            .iter()
            .map(|m| m.simulate(inputs, measured))
            .collect::<Result<_, _>>()?;
        let n = measured.len();
        let k = self.members.len() as f64;
        let mut mean = vec![0.0; n];
        let mut std = vec![0.0; n];
        for t in 0..n {
            let sum: f64 = trajectories.iter().map(|tr| tr.predicted[t]).sum();
            mean[t] = sum / k;
            let ss: f64 = trajectories
                .iter()
                .map(|tr| (tr.predicted[t] - mean[t]).powi(2))
                .sum();
            std[t] = (ss / (k - 1.0)).sqrt();
        }
        let band_lower = mean.iter().zip(&std).map(|(m, s)| m - 3.0 * s).collect();
        let band_upper = mean.iter().zip(&std).map(|(m, s)| m + 3.0 * s).collect();
        let residual = measured.iter().zip(&mean).map(|(y, m)| y - m).collect();
        Ok(EnsemblePrediction {
            mean,
            std,
            band_lower,
            band_upper,
            residual,
        })
    }
}
