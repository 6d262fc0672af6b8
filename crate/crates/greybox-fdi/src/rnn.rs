//! Grey-box recurrent networks: one scalar-output MLP per state update and
//! one for the output map, wired according to a state-space structure and
//! stepped forward with explicit Euler,
//! `x[t+1] = x[t] + T * g(x[t], u[t])`, `y_hat[t] = h(x[t], u[t])`.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::causal::{Arg, StateSpaceStructure};

#[derive(Debug, Error)]
pub enum RnnError {
    #[error("input has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("structure has no states")]
    EmptyStates,
    #[error("input and measurement series lengths differ")]
    LengthMismatch,
    #[error("state exceeded the saturation guard at step {t}")]
    Divergence { t: usize },
    #[error("weights were saved for structure hash {file}, model has {expected}")]
    StructureHashMismatch { file: String, expected: String },
    #[error("weights file: {0}")]
    WeightsFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// max(0, x); subgradient at zero taken as zero.
    Rectifier,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Rectifier => z.max(0.0),
            Activation::Linear => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Rectifier => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    /// (outputs, inputs)
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

/// Fully connected network with rectifier hidden layers and an affine scalar
/// output.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer values cached by a forward pass, for backpropagation.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input of each layer.
    pub inputs: Vec<Array1<f64>>,
    /// Pre-activation of each layer.
    pub pre: Vec<Array1<f64>>,
}

/// Parameter gradients with the same shapes as the network.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Mlp {
    /// All-zero network of the given shape; `hidden` may be empty, giving a
    /// single affine layer.
    pub fn zeros(input_width: usize, hidden: &[usize]) -> Mlp {
        let mut layers = Vec::new();
        let mut prev = input_width;
        for &w in hidden {
            layers.push(Layer {
                weights: Array2::zeros((w, prev)),
                biases: Array1::zeros(w),
                activation: Activation::Rectifier,
            });
            prev = w;
        }
        layers.push(Layer {
            weights: Array2::zeros((1, prev)),
            biases: Array1::zeros(1),
            activation: Activation::Linear,
        });
        Mlp { layers }
    }

    /// Fan-in-scaled uniform weights, zero biases.
    pub fn seeded(input_width: usize, hidden: &[usize], rng: &mut impl Rng) -> Mlp {
        let mut net = Mlp::zeros(input_width, hidden);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.weights.ncols() as f64).sqrt();
            for w in layer.weights.iter_mut() {
                *w = rng.gen_range(-bound..bound);
            }
        }
        net
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<f64, RnnError> {
        if input.len() != self.input_width() {
            return Err(RnnError::DimensionMismatch {
                expected: self.input_width(),
                got: input.len(),
            });
        }
        let mut a = Array1::from_vec(input.to_vec());
        for layer in &self.layers {
            let z = layer.weights.dot(&a) + &layer.biases;
            a = z.mapv(|v| layer.activation.apply(v));
        }
        Ok(a[0])
    }

    /// Forward pass keeping everything backpropagation needs.
    pub fn forward_cached(&self, input: &[f64]) -> (f64, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = Array1::from_vec(input.to_vec());
        for layer in &self.layers {
            inputs.push(a.clone());
            let z = layer.weights.dot(&a) + &layer.biases;
            a = z.mapv(|v| layer.activation.apply(v));
            pre.push(z);
        }
        (a[0], MlpCache { inputs, pre })
    }

    /// Backpropagates a scalar upstream gradient, accumulating parameter
    /// gradients and returning the gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache, upstream: f64, grads: &mut MlpGrads) -> Array1<f64> {
        let mut delta = Array1::from_vec(vec![upstream]);
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let dz: Array1<f64> = delta
                .iter()
                .zip(cache.pre[idx].iter())
                .map(|(&d, &z)| d * layer.activation.derivative(z))
                .collect();
            let a_in = &cache.inputs[idx];
            for (r, &dz_r) in dz.iter().enumerate() {
                grads.biases[idx][r] += dz_r;
                for (c, &a_c) in a_in.iter().enumerate() {
                    grads.weights[idx][(r, c)] += dz_r * a_c;
                }
            }
            delta = layer.weights.t().dot(&dz);
        }
        delta
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            weights: self
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.raw_dim()))
                .collect(),
            biases: self
                .layers
                .iter()
                .map(|l| Array1::zeros(l.biases.raw_dim()))
                .collect(),
        }
    }
}

/// Network hyperparameters. The default mirrors the reference setup: two
/// rectifier hidden layers of 256 units and an affine scalar output.
#[derive(Debug, Clone)]
pub struct NetConfig {
    pub hidden_widths: Vec<usize>,
    pub seed: u64,
    pub sampling_time: f64,
    /// Shared initial state; zeros when absent.
    pub initial_state: Option<Vec<f64>>,
    /// Saturation guard: simulation aborts when any |state| exceeds this.
    pub state_clamp: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden_widths: vec![256, 256],
            seed: 0,
            sampling_time: 0.05,
            initial_state: None,
            state_clamp: 1e6,
        }
    }
}

/// The generated recurrent network: per-state update MLPs sized from the
/// structure's argument lists plus one output MLP.
#[derive(Debug, Clone)]
pub struct GreyBoxRnn {
    pub structure: StateSpaceStructure,
    pub g_nets: Vec<Mlp>,
    pub h_net: Mlp,
    pub sampling_time: f64,
    pub initial_state: Vec<f64>,
    pub seed: u64,
    pub state_clamp: f64,
}

/// Simulation record: aligned series of inputs, measurement, prediction,
/// states, and the residual `r = y - y_hat`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// One column per structure input.
    pub inputs: Vec<Vec<f64>>,
    pub measured: Vec<f64>,
    pub predicted: Vec<f64>,
    /// State vector at each step, before the update.
    pub states: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
}

impl GreyBoxRnn {
    /// Builds a network for the structure; each g-net's input width equals
    /// its argument list length.
    pub fn new(structure: StateSpaceStructure, cfg: &NetConfig) -> Result<GreyBoxRnn, RnnError> {
        if structure.states.is_empty() {
            return Err(RnnError::EmptyStates);
        }
        // an empty argument list is legal and gives a constant function
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let g_nets = structure
            .g_args
            .iter()
            .map(|args| Mlp::seeded(args.len(), &cfg.hidden_widths, &mut rng))
            .collect();
        let h_net = Mlp::seeded(structure.h_args.len(), &cfg.hidden_widths, &mut rng);
        let initial_state = match &cfg.initial_state {
            Some(x0) => {
                if x0.len() != structure.states.len() {
                    return Err(RnnError::DimensionMismatch {
                        expected: structure.states.len(),
                        got: x0.len(),
                    });
                }
                x0.clone()
            }
            None => vec![0.0; structure.states.len()],
        };
        Ok(GreyBoxRnn {
            structure,
            g_nets,
            h_net,
            sampling_time: cfg.sampling_time,
            initial_state,
            seed: cfg.seed,
            state_clamp: cfg.state_clamp,
        })
    }

    pub fn state_count(&self) -> usize {
        self.structure.states.len()
    }

    pub fn param_count(&self) -> usize {
        self.g_nets.iter().map(Mlp::param_count).sum::<usize>() + self.h_net.param_count()
    }

    pub fn gather(args: &[Arg], x: &[f64], u: &[f64]) -> Vec<f64> {
        args.iter()
            .map(|&a| match a {
                Arg::State(i) => x[i],
                Arg::Input(i) => u[i],
            })
            .collect()
    }

    /// One Euler step: returns the next state and the current prediction.
    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<(Vec<f64>, f64), RnnError> {
        if x.len() != self.state_count() {
            return Err(RnnError::DimensionMismatch {
                expected: self.state_count(),
                got: x.len(),
            });
        }
        if u.len() != self.structure.inputs.len() {
            return Err(RnnError::DimensionMismatch {
                expected: self.structure.inputs.len(),
                got: u.len(),
            });
        }
        let mut next = Vec::with_capacity(x.len());
        for (i, net) in self.g_nets.iter().enumerate() {
            let v = Self::gather(&self.structure.g_args[i], x, u);
            next.push(x[i] + self.sampling_time * net.forward(&v)?);
        }
        let hv = Self::gather(&self.structure.h_args, x, u);
        let y_hat = self.h_net.forward(&hv)?;
        Ok((next, y_hat))
    }

    /// Simulates from the shared initial state over aligned series.
    /// `inputs[k]` is the series of the k-th structure input.
    pub fn simulate(&self, inputs: &[Vec<f64>], measured: &[f64]) -> Result<Trajectory, RnnError> {
        if inputs.len() != self.structure.inputs.len() {
            return Err(RnnError::DimensionMismatch {
                expected: self.structure.inputs.len(),
                got: inputs.len(),
            });
        }
        let n = measured.len();
        if inputs.iter().any(|col| col.len() != n) {
            return Err(RnnError::LengthMismatch);
        }
        let mut x = self.initial_state.clone();
        let mut states = Vec::with_capacity(n);
        let mut predicted = Vec::with_capacity(n);
        let mut residual = Vec::with_capacity(n);
        let mut u = vec![0.0; inputs.len()];
        for t in 0..n {
            for (k, col) in inputs.iter().enumerate() {
                u[k] = col[t];
            }
            states.push(x.clone());
            let (next, y_hat) = self.step(&x, &u)?;
            if next.iter().any(|v| !v.is_finite() || v.abs() > self.state_clamp) {
                return Err(RnnError::Divergence { t });
            }
            predicted.push(y_hat);
            residual.push(measured[t] - y_hat);
            x = next;
        }
        Ok(Trajectory {
            inputs: inputs.to_vec(),
            measured: measured.to_vec(),
            predicted,
            states,
            residual,
        })
    }

    /// Serializes weights, shapes, and the structure hash to the versioned
    /// key-value text format.
    pub fn save_weights(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("greybox-rnn-weights v1\n");
        let _ = writeln!(out, "structure_hash = {}", self.structure.structure_hash());
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "sampling_time = {}", self.sampling_time);
        let _ = writeln!(out, "state_clamp = {}", self.state_clamp);
        let _ = writeln!(
            out,
            "x0 = {}",
            self.initial_state
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(" ")
        );
        let mut write_net = |name: &str, net: &Mlp| {
            let mut widths = vec![net.input_width()];
            widths.extend(net.layers.iter().map(|l| l.weights.nrows()));
            let _ = writeln!(
                out,
                "net {} widths = {}",
                name,
                widths.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
            );
            for (i, layer) in net.layers.iter().enumerate() {
                let ws: Vec<String> = layer.weights.iter().map(f64::to_string).collect();
                let _ = writeln!(out, "net {name} layer {i} weights = {}", ws.join(" "));
                let bs: Vec<String> = layer.biases.iter().map(f64::to_string).collect();
                let _ = writeln!(out, "net {name} layer {i} biases = {}", bs.join(" "));
            }
        };
        for (i, net) in self.g_nets.iter().enumerate() {
            write_net(&format!("g{i}"), net);
        }
        write_net("h", &self.h_net);
        out
    }

    /// Loads weights saved by `save_weights`; the structure hash must match.
    pub fn load_weights(text: &str, structure: StateSpaceStructure) -> Result<GreyBoxRnn, RnnError> {
        let bad = |msg: &str| RnnError::WeightsFormat(msg.to_string());
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("greybox-rnn-weights v1") {
            return Err(bad("missing version header"));
        }
        let mut seed = 0u64;
        let mut sampling_time = None;
        let mut state_clamp = 1e6;
        let mut x0: Option<Vec<f64>> = None;
        let mut hash: Option<String> = None;
        struct NetBuf {
            widths: Vec<usize>,
            weights: Vec<Vec<f64>>,
            biases: Vec<Vec<f64>>,
        }
        let mut nets: Vec<(String, NetBuf)> = Vec::new();
        let parse_floats = |s: &str| -> Result<Vec<f64>, RnnError> {
            s.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| bad(&format!("bad float: {e}"))))
                .collect()
        };
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(&format!("malformed line `{line}`")))?;
            let key_tokens: Vec<&str> = key.split_whitespace().collect();
            let value = value.trim();
            match key_tokens.as_slice() {
                ["structure_hash"] => hash = Some(value.to_string()),
                ["seed"] => seed = value.parse().map_err(|e| bad(&format!("seed: {e}")))?,
                ["sampling_time"] => {
                    sampling_time =
                        Some(value.parse().map_err(|e| bad(&format!("sampling_time: {e}")))?)
                }
                ["state_clamp"] => {
                    state_clamp = value.parse().map_err(|e| bad(&format!("state_clamp: {e}")))?
                }
                ["x0"] => x0 = Some(parse_floats(value)?),
                ["net", name, "widths"] => {
                    let widths = value
                        .split_whitespace()
                        .map(|t| t.parse::<usize>().map_err(|e| bad(&format!("width: {e}"))))
                        .collect::<Result<Vec<_>, _>>()?;
                    nets.push((
                        name.to_string(),
                        NetBuf {
                            widths,
                            weights: Vec::new(),
                            biases: Vec::new(),
                        },
                    ));
                }
                ["net", name, "layer", _idx, "weights"] => {
                    let buf = nets
                        .iter_mut()
                        .find(|(n, _)| n == name)
                        .ok_or_else(|| bad(&format!("weights before widths for `{name}`")))?;
                    buf.1.weights.push(parse_floats(value)?);
                }
                ["net", name, "layer", _idx, "biases"] => {
                    let buf = nets
                        .iter_mut()
                        .find(|(n, _)| n == name)
                        .ok_or_else(|| bad(&format!("biases before widths for `{name}`")))?;
                    buf.1.biases.push(parse_floats(value)?);
                }
                other => return Err(bad(&format!("unknown key {other:?}"))),
            }
        }
        let file_hash = hash.ok_or_else(|| bad("missing structure_hash"))?;
        let expected_hash = structure.structure_hash();
        if file_hash != expected_hash {
            return Err(RnnError::StructureHashMismatch {
                file: file_hash,
                expected: expected_hash,
            });
        }
        let build_net = |buf: &NetBuf| -> Result<Mlp, RnnError> {
            let depth = buf.widths.len().checked_sub(1).ok_or_else(|| bad("empty widths"))?;
            if buf.weights.len() != depth || buf.biases.len() != depth {
                return Err(bad("layer count does not match widths"));
            }
            let mut layers = Vec::with_capacity(depth);
            for i in 0..depth {
                let (rows, cols) = (buf.widths[i + 1], buf.widths[i]);
                if buf.weights[i].len() != rows * cols || buf.biases[i].len() != rows {
                    return Err(bad("layer size mismatch"));
                }
                layers.push(Layer {
                    weights: Array2::from_shape_vec((rows, cols), buf.weights[i].clone())
                        .map_err(|e| bad(&e.to_string()))?,
                    biases: Array1::from_vec(buf.biases[i].clone()),
                    activation: if i + 1 == depth {
                        Activation::Linear
                    } else {
                        Activation::Rectifier
                    },
                });
            }
            Ok(Mlp { layers })
        };
        let mut g_nets = Vec::new();
        for i in 0..structure.states.len() {
            let name = format!("g{i}");
            let buf = nets
                .iter()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| bad(&format!("missing net `{name}`")))?;
            g_nets.push(build_net(&buf.1)?);
        }
        let h_buf = nets
            .iter()
            .find(|(n, _)| n == "h")
            .ok_or_else(|| bad("missing net `h`"))?;
        let h_net = build_net(&h_buf.1)?;
        let initial_state = x0.unwrap_or_else(|| vec![0.0; structure.states.len()]);
        Ok(GreyBoxRnn {
            structure,
            g_nets,
            h_net,
            sampling_time: sampling_time.ok_or_else(|| bad("missing sampling_time"))?,
            initial_state,
            seed,
            state_clamp,
        })
    }
}


#[cfg(test)]
mod tests {
    use super::test_structures::*;
    use super::*;
    use crate::causal::Arg;
    use rand::Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(3, &[4, 4]);
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn single_layer_rectifier_behaviour() {
        // One rectifier unit with identity weight feeding the affine output.
        let mut net = Mlp::zeros(1, &[1]);
        net.layers_mut()[0].weights[(0, 0)] = 1.0;
        net.layers_mut()[1].weights[(0, 0)] = 1.0;
        assert_eq!(net.forward(&[-1.0]).unwrap(), 0.0);
        assert_eq!(net.forward(&[2.0]).unwrap(), 2.0);
    }

    #[test]
    fn forward_matches_straight_line_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let net = Mlp::seeded(3, &[5, 4], &mut rng);
            let input: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let got = net.forward(&input).unwrap();

            // independent recomputation with plain loops
            let mut a = input.clone();
            for (li, layer) in net.layers().iter().enumerate() {
                let rows = layer.weights.nrows();
                let mut next = vec![0.0; rows];
                for r in 0..rows {
                    let mut z = layer.biases[r];
                    for (c, &ac) in a.iter().enumerate() {
                        z += layer.weights[(r, c)] * ac;
                    }
                    next[r] = if li + 1 == net.layers().len() {
                        z
                    } else {
                        z.max(0.0)
                    };
                }
                a = next;
            }
            assert!((got - a[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = Mlp::zeros(2, &[3]);
        assert!(matches!(
            net.forward(&[1.0]),
            Err(RnnError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn build_sizes_follow_argument_lists() {
        let s = StateSpaceStructure {
            mso_id: 0,
            residual_eq: "e3".into(),
            output_sensor: "y".into(),
            states: vec!["x1".into(), "x2".into()],
            inputs: vec!["u".into()],
            g_args: vec![vec![Arg::Input(0)], vec![Arg::State(0)]],
            h_args: vec![Arg::State(1)],
        };
        let rnn = GreyBoxRnn::new(s, &NetConfig::default()).unwrap();
        assert_eq!(rnn.g_nets.len(), 2);
        assert_eq!(rnn.g_nets[0].input_width(), 1);
        assert_eq!(rnn.g_nets[1].input_width(), 1);
        assert_eq!(rnn.h_net.input_width(), 1);
    }

    #[test]
    fn empty_state_list_rejected() {
        let s = StateSpaceStructure {
            mso_id: 0,
            residual_eq: "e".into(),
            output_sensor: "y".into(),
            states: vec![],
            inputs: vec!["u".into()],
            g_args: vec![],
            h_args: vec![Arg::Input(0)],
        };
        assert!(matches!(
            GreyBoxRnn::new(s, &NetConfig::default()),
            Err(RnnError::EmptyStates)
        ));
    }

    #[test]
    fn param_count_matches_closed_form() {
        let hidden = [4usize, 4];
        let input = 3usize;
        let net = Mlp::zeros(input, &hidden);
        let mut expected = 0;
        let mut prev = input;
        for &w in hidden.iter().chain(std::iter::once(&1)) {
            expected += prev * w + w;
            prev = w;
        }
        assert_eq!(net.param_count(), expected);
    }

    #[test]
    fn zero_parameters_keep_state_constant() {
        let cfg = NetConfig {
            hidden_widths: vec![4],
            ..NetConfig::default()
        };
        let mut rnn = GreyBoxRnn::new(scalar_structure(), &cfg).unwrap();
        rnn.g_nets = vec![Mlp::zeros(2, &[4])];
        rnn.h_net = Mlp::zeros(1, &[4]);
        let (next, y_hat) = rnn.step(&[0.7], &[0.3]).unwrap();
        assert_eq!(next, vec![0.7]);
        assert_eq!(y_hat, 0.0);
    }

    #[test]
    fn zero_sampling_time_freezes_states() {
        let cfg = NetConfig {
            hidden_widths: vec![8],
            sampling_time: 0.0,
            seed: 3,
            ..NetConfig::default()
        };
        let rnn = GreyBoxRnn::new(scalar_structure(), &cfg).unwrap();
        let (next, _) = rnn.step(&[0.4], &[1.0]).unwrap();
        assert_eq!(next, vec![0.4]);
    }

    #[test]
    fn linear_decay_matches_closed_form() {
        // g(x) = -x, h(x) = x, T = 0.1, x0 = 1: x follows 0.9^t.
        let cfg = NetConfig {
            hidden_widths: vec![],
            sampling_time: 0.1,
            initial_state: Some(vec![1.0]),
            ..NetConfig::default()
        };
        let mut rnn = GreyBoxRnn::new(decay_structure(), &cfg).unwrap();
        set_affine(&mut rnn.g_nets[0], &[-1.0], 0.0);
        set_affine(&mut rnn.h_net, &[1.0], 0.0);
        let mut x = vec![1.0];
        for _ in 0..10 {
            let (next, _) = rnn.step(&x, &[]).unwrap();
            x = next;
        }
        assert!((x[0] - 0.9f64.powi(10)).abs() < 1e-12);
        assert!((x[0] - 0.3487).abs() < 1e-4);
    }

    #[test]
    fn self_consistent_measurement_gives_zero_residual() {
        let cfg = NetConfig {
            hidden_widths: vec![6],
            seed: 11,
            ..NetConfig::default()
        };
        let rnn = GreyBoxRnn::new(scalar_structure(), &cfg).unwrap();
        let u: Vec<f64> = (0..50).map(|t| (t as f64 * 0.1).sin()).collect();
        let first = rnn.simulate(&[u.clone()], &vec![0.0; 50]).unwrap();
        let traj = rnn.simulate(&[u], &first.predicted).unwrap();
        assert!(traj.residual.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn length_mismatch_detected() {
        let cfg = NetConfig {
            hidden_widths: vec![4],
            ..NetConfig::default()
        };
        let rnn = GreyBoxRnn::new(scalar_structure(), &cfg).unwrap();
        assert!(matches!(
            rnn.simulate(&[vec![0.0; 3]], &[0.0; 4]),
            Err(RnnError::LengthMismatch)
        ));
    }

    #[test]
    fn divergence_reports_time_index() {
        // g(x) = 100 x grows without bound.
        let cfg = NetConfig {
            hidden_widths: vec![],
            sampling_time: 1.0,
            initial_state: Some(vec![1.0]),
            state_clamp: 1e3,
            ..NetConfig::default()
        };
        let mut rnn = GreyBoxRnn::new(decay_structure(), &cfg).unwrap();
        set_affine(&mut rnn.g_nets[0], &[100.0], 0.0);
        set_affine(&mut rnn.h_net, &[1.0], 0.0);
        match rnn.simulate(&[], &vec![0.0; 20]) {
            Err(RnnError::Divergence { t }) => assert!(t < 20),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn unused_input_perturbation_leaves_trajectory_bit_identical() {
        // Structure with two inputs where only the first is an argument.
        let s = StateSpaceStructure {
            mso_id: 0,
            residual_eq: "e_y".into(),
            output_sensor: "y".into(),
            states: vec!["x".into()],
            inputs: vec!["u1".into(), "u2".into()],
            g_args: vec![vec![Arg::State(0), Arg::Input(0)]],
            h_args: vec![Arg::State(0)],
        };
        let cfg = NetConfig {
            hidden_widths: vec![8, 8],
            seed: 5,
            ..NetConfig::default()
        };
        let rnn = GreyBoxRnn::new(s, &cfg).unwrap();
        let u1: Vec<f64> = (0..40).map(|t| (t as f64 * 0.2).cos()).collect();
        let y = vec![0.5; 40];
        let base = rnn.simulate(&[u1.clone(), vec![0.0; 40]], &y).unwrap();
        let pert = rnn.simulate(&[u1, vec![123.0; 40]], &y).unwrap();
        assert_eq!(base.predicted, pert.predicted);
        assert_eq!(base.states, pert.states);
    }

    #[test]
    fn weights_roundtrip_exactly() {
        let cfg = NetConfig {
            hidden_widths: vec![5, 3],
            seed: 42,
            ..NetConfig::default()
        };
        let rnn = GreyBoxRnn::new(scalar_structure(), &cfg).unwrap();
        let text = rnn.save_weights();
        let loaded = GreyBoxRnn::load_weights(&text, scalar_structure()).unwrap();
        assert_eq!(text, loaded.save_weights());
        let u: Vec<f64> = (0..10).map(|t| t as f64 * 0.1).collect();
        let a = rnn.simulate(&[u.clone()], &vec![0.0; 10]).unwrap();
        let b = loaded.simulate(&[u], &vec![0.0; 10]).unwrap();
        assert_eq!(a.predicted, b.predicted);
    }

    #[test]
    fn weights_refuse_wrong_structure() {
        let cfg = NetConfig {
            hidden_widths: vec![4],
            ..NetConfig::default()
        };
        let rnn = GreyBoxRnn::new(scalar_structure(), &cfg).unwrap();
        let text = rnn.save_weights();
        let err = GreyBoxRnn::load_weights(&text, decay_structure()).unwrap_err();
        assert!(matches!(err, RnnError::StructureHashMismatch { .. }));
    }
}
