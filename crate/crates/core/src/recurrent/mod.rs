//! Stacked LSTM / GRU forecasters.
//!
//! Each window value is one scalar timestep. Layer `k` consumes the hidden sequence of
//! layer `k-1`; the top layer's final hidden state feeds a single linear neuron. States
//! start at zero for every window.

pub mod gru;
pub mod lstm;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::mlp::DenseLayer;
use crate::nn::{check_dim, glorot_uniform, Activation, Matrix, Network, NnError, Result, TrainOptions};

pub use gru::{GruCell, GruStep};
pub use lstm::{LstmCell, LstmState};

/// Gate equations as printed (`Literal`) or in the conventional form (`Standard`).
///
/// The literal LSTM subtracts the input, output and candidate biases and emits
/// `h = o * tanh(g)`; the literal GRU subtracts the update-gate bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CellForm {
    #[default]
    Standard,
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

/// One gate's affine map: `W x + U h + sign * b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl Gate {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self { w: Matrix::zeros(hidden, inputs), u: Matrix::zeros(hidden, hidden), b: vec![0.0; hidden] }
    }

    pub fn glorot(rng: &mut ChaCha8Rng, inputs: usize, hidden: usize) -> Self {
        let mut g = Self::zeros(inputs, hidden);
        glorot_uniform(rng, inputs, hidden, g.w.as_mut_slice());
        glorot_uniform(rng, hidden, hidden, g.u.as_mut_slice());
        g
    }

    pub fn hidden(&self) -> usize {
        self.w.rows()
    }

    pub fn inputs(&self) -> usize {
        self.w.cols()
    }

    pub fn pre_activation(&self, x: &[f64], h: &[f64], bias_sign: f64) -> Vec<f64> {
        let mut a: Vec<f64> = self.b.iter().map(|b| bias_sign * b).collect();
        self.w.mul_vec_add(x, &mut a);
        self.u.mul_vec_add(h, &mut a);
        a
    }

    /// Accumulates parameter gradients for pre-activation gradient `da`, and adds the
    /// input and recurrent gradients into `dx` and `dh`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        x: &[f64],
        h: &[f64],
        da: &[f64],
        bias_sign: f64,
        grad: &mut Gate,
        dx: &mut [f64],
        dh: &mut [f64],
    ) {
        grad.w.add_outer(da, x);
        grad.u.add_outer(da, h);
        for (gb, d) in grad.b.iter_mut().zip(da) {
            *gb += bias_sign * d;
        }
        self.w.tr_mul_vec_add(da, dx);
        self.u.tr_mul_vec_add(da, dh);
    }

    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(self.w.as_slice());
        f(self.u.as_slice());
        f(&self.b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.w.as_mut_slice());
        f(self.u.as_mut_slice());
        f(&mut self.b);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnnConfig {
    /// Hidden width per stacked layer, bottom first.
    pub hidden_sizes: Vec<usize>,
    pub lag: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub learning_rate: f64,
    #[serde(default)]
    pub form: CellForm,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![10],
            lag: 3,
            batch_size: 32,
            epochs: 50,
            seed: 42,
            learning_rate: 1e-2,
            form: CellForm::Standard,
        }
    }
}

impl RnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lag == 0 {
            return Err(NnError::InvalidConfig("lag must be at least 1".into()));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(NnError::InvalidConfig("hidden sizes must be non-empty and positive".into()));
        }
        self.train_options().validate()
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions { epochs: self.epochs, batch_size: self.batch_size, learning_rate: self.learning_rate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cell", rename_all = "lowercase")]
pub enum RecurrentLayer {
    Lstm(LstmCell),
    Gru(GruCell),
}

impl RecurrentLayer {
    fn hidden(&self) -> usize {
        match self {
            Self::Lstm(c) => c.hidden(),
            Self::Gru(c) => c.hidden(),
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            Self::Lstm(c) => Self::Lstm(LstmCell::zeros(c.inputs(), c.hidden())),
            Self::Gru(c) => Self::Gru(GruCell::zeros(c.inputs(), c.hidden())),
        }
    }

    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        match self {
            Self::Lstm(c) => c.gates().into_iter().for_each(|g| g.visit(f)),
            Self::Gru(c) => c.gates().into_iter().for_each(|g| g.visit(f)),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        match self {
            Self::Lstm(c) => c.gates_mut().into_iter().for_each(|g| g.visit_mut(f)),
            Self::Gru(c) => c.gates_mut().into_iter().for_each(|g| g.visit_mut(f)),
        }
    }
}

enum LayerCache {
    Lstm(Vec<LstmState>),
    Gru(Vec<GruStep>),
}

impl LayerCache {
    fn hidden_sequence(&self) -> Vec<Vec<f64>> {
        match self {
            Self::Lstm(s) => s.iter().map(|st| st.h.clone()).collect(),
            Self::Gru(s) => s.iter().map(|st| st.h.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnModel {
    pub kind: CellKind,
    pub form: CellForm,
    pub lag: usize,
    pub layers: Vec<RecurrentLayer>,
    pub readout: DenseLayer,
}

impl RnnModel {
    pub fn new(kind: CellKind, config: &RnnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut inputs = 1;
        let mut layers = Vec::with_capacity(config.hidden_sizes.len());
        for &hidden in &config.hidden_sizes {
            layers.push(match kind {
                CellKind::Lstm => RecurrentLayer::Lstm(LstmCell::glorot(&mut rng, inputs, hidden)),
                CellKind::Gru => RecurrentLayer::Gru(GruCell::glorot(&mut rng, inputs, hidden)),
            });
            inputs = hidden;
        }
        let readout = DenseLayer::glorot(&mut rng, inputs, 1, Activation::Linear);
        Ok(Self { kind, form: config.form, lag: config.lag, layers, readout })
    }

    /// Same architecture, every parameter zero.
    pub fn zeroed(kind: CellKind, config: &RnnConfig) -> Result<Self> {
        Ok(Self::new(kind, config)?.zeros_like())
    }

    fn forward_cached(&self, window: &[f64]) -> Result<(Vec<Vec<Vec<f64>>>, Vec<LayerCache>, f64)> {
        check_dim(self.lag, window.len())?;
        let mut inputs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut seq: Vec<Vec<f64>> = window.iter().map(|&v| vec![v]).collect();
        for layer in &self.layers {
            let cache = match layer {
                RecurrentLayer::Lstm(c) => LayerCache::Lstm(c.run(&seq, self.form)?),
                RecurrentLayer::Gru(c) => LayerCache::Gru(c.run(&seq, self.form)?),
            };
            let next = cache.hidden_sequence();
            inputs.push(seq);
            caches.push(cache);
            seq = next;
        }
        let last = seq.last().ok_or(NnError::Empty)?;
        let out = self.readout.forward(last)?.1[0];
        Ok((inputs, caches, out))
    }
}

impl Network for RnnModel {
    fn lag(&self) -> usize {
        self.lag
    }

    fn predict(&self, window: &[f64]) -> Result<f64> {
        Ok(self.forward_cached(window)?.2)
    }

    fn accumulate_gradient(
        &self,
        window: &[f64],
        seed: &mut dyn FnMut(f64) -> f64,
        grad: &mut Self,
    ) -> Result<f64> {
        let (inputs, caches, output) = self.forward_cached(window)?;
        let d_out = seed(output);
        let top_seq = caches.last().ok_or(NnError::Empty)?.hidden_sequence();
        let last_h = top_seq.last().ok_or(NnError::Empty)?;
        let d_last = self.readout.backward(last_h, &[output], &[output], &[d_out], &mut grad.readout);

        let steps = window.len();
        let mut dh_ext: Vec<Vec<f64>> = vec![vec![0.0; last_h.len()]; steps];
        dh_ext[steps - 1] = d_last;
        for (k, layer) in self.layers.iter().enumerate().rev() {
            dh_ext = match (layer, &caches[k], &mut grad.layers[k]) {
                (RecurrentLayer::Lstm(c), LayerCache::Lstm(st), RecurrentLayer::Lstm(g)) => {
                    c.backward(&inputs[k], st, &dh_ext, self.form, g)
                }
                (RecurrentLayer::Gru(c), LayerCache::Gru(st), RecurrentLayer::Gru(g)) => {
                    c.backward(&inputs[k], st, &dh_ext, self.form, g)
                }
                _ => unreachable!("gradient buffer mirrors the model"),
            };
        }
        Ok(output)
    }

    fn zeros_like(&self) -> Self {
        Self {
            kind: self.kind,
            form: self.form,
            lag: self.lag,
            layers: self.layers.iter().map(RecurrentLayer::zeros_like).collect(),
            readout: DenseLayer::zeros(self.readout.inputs(), 1, Activation::Linear),
        }
    }

    fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        for l in &self.layers {
            l.visit(f);
        }
        f(self.readout.weights.as_slice());
        f(&self.readout.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for l in &mut self.layers {
            l.visit_mut(f);
        }
        f(self.readout.weights.as_mut_slice());
        f(&mut self.readout.bias);
    }
}

impl RnnModel {
    pub fn top_hidden(&self) -> usize {
        self.layers.last().map_or(0, RecurrentLayer::hidden)
    }
}
