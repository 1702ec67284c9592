//! Fully connected forecaster: ReLU hidden layers and one linear output neuron.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, glorot_uniform, Activation, Matrix, Network, NnError, Result, TrainOptions};

/// `h = act(W x + b)` with `W` stored as out × in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Self {
        assert_eq!(weights.rows(), bias.len());
        Self { weights, bias, activation }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self::new(Matrix::zeros(outputs, inputs), vec![0.0; outputs], activation)
    }

    pub fn glorot(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize, activation: Activation) -> Self {
        let mut layer = Self::zeros(inputs, outputs, activation);
        glorot_uniform(rng, inputs, outputs, layer.weights.as_mut_slice());
        layer
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    /// Returns `(pre_activation, output)`.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim(self.inputs(), input.len())?;
        let mut pre = self.bias.clone();
        self.weights.mul_vec_add(input, &mut pre);
        let out = pre.iter().map(|&a| self.activation.apply(a)).collect();
        Ok((pre, out))
    }

    /// Given dLoss/dOutput, accumulates parameter gradients into `grad` and returns
    /// dLoss/dInput.
    pub fn backward(
        &self,
        input: &[f64],
        pre: &[f64],
        out: &[f64],
        d_out: &[f64],
        grad: &mut DenseLayer,
    ) -> Vec<f64> {
        let d_pre: Vec<f64> = d_out
            .iter()
            .zip(pre.iter().zip(out))
            .map(|(g, (&a, &h))| g * self.activation.derivative(a, h))
            .collect();
        grad.weights.add_outer(&d_pre, input);
        super::linalg::add_assign(&mut grad.bias, &d_pre);
        let mut d_in = vec![0.0; self.inputs()];
        self.weights.tr_mul_vec_add(&d_pre, &mut d_in);
        d_in
    }
}

pub fn dense_forward(layer: &DenseLayer, input: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    layer.forward(input)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    /// Hidden layer widths, input side first.
    pub layer_sizes: Vec<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    pub lag: usize,
    pub seed: u64,
    pub learning_rate: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { layer_sizes: vec![10], batch_size: 32, epochs: 50, lag: 2, seed: 42, learning_rate: 1e-2 }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lag == 0 {
            return Err(NnError::InvalidConfig("lag must be at least 1".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(NnError::InvalidConfig("layer widths must be positive".into()));
        }
        self.train_options().validate()
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions { epochs: self.epochs, batch_size: self.batch_size, learning_rate: self.learning_rate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    /// Glorot-uniform weights drawn in layer order from `seed`; zero biases.
    pub fn new(config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut layers = Vec::with_capacity(config.layer_sizes.len() + 1);
        let mut fan_in = config.lag;
        for &width in &config.layer_sizes {
            layers.push(DenseLayer::glorot(&mut rng, fan_in, width, Activation::Relu));
            fan_in = width;
        }
        layers.push(DenseLayer::glorot(&mut rng, fan_in, 1, Activation::Linear));
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        let last = layers.last().ok_or(NnError::InvalidConfig("no layers".into()))?;
        check_dim(1, last.outputs())?;
        for pair in layers.windows(2) {
            check_dim(pair[0].outputs(), pair[1].inputs())?;
        }
        Ok(Self { layers })
    }
}

impl Network for Mlp {
    fn lag(&self) -> usize {
        self.layers[0].inputs()
    }

    fn predict(&self, window: &[f64]) -> Result<f64> {
        let mut h = window.to_vec();
        for layer in &self.layers {
            h = layer.forward(&h)?.1;
        }
        Ok(h[0])
    }

    fn accumulate_gradient(
        &self,
        window: &[f64],
        seed: &mut dyn FnMut(f64) -> f64,
        grad: &mut Self,
    ) -> Result<f64> {
        // cache (input, pre, out) per layer
        let mut cache = Vec::with_capacity(self.layers.len());
        let mut h = window.to_vec();
        for layer in &self.layers {
            let (pre, out) = layer.forward(&h)?;
            cache.push((h, pre, out.clone()));
            h = out;
        }
        let output = h[0];
        let mut delta = vec![seed(output)];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (input, pre, out) = &cache[i];
            delta = layer.backward(input, pre, out, &delta, &mut grad.layers[i]);
        }
        Ok(output)
    }

    fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs(), l.outputs(), l.activation))
                .collect(),
        }
    }

    fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        for l in &self.layers {
            f(l.weights.as_slice());
            f(&l.bias);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for l in &mut self.layers {
            f(l.weights.as_mut_slice());
            f(&mut l.bias);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::window_values;
    use crate::nn::{flat_params, loss_and_gradient, train};

    fn single(w: f64, b: f64, act: Activation) -> DenseLayer {
        DenseLayer::new(Matrix::from_rows(&[vec![w]]), vec![b], act)
    }

    #[test]
    fn dense_forward_examples() {
        let (pre, out) = dense_forward(&single(1.0, -0.5, Activation::Relu), &[2.0]).unwrap();
        assert_eq!((pre, out), (vec![1.5], vec![1.5]));
        let (_, out) = dense_forward(&single(1.0, -0.5, Activation::Relu), &[0.0]).unwrap();
        assert_eq!(out, vec![0.0]);
        let (_, out) = dense_forward(&single(2.0, 0.0, Activation::Linear), &[1.5]).unwrap();
        assert_eq!(out, vec![3.0]);
        assert!(matches!(
            dense_forward(&single(2.0, 0.0, Activation::Linear), &[1.0, 2.0]),
            Err(NnError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_neuron_gradient_by_hand() {
        let net = Mlp::from_layers(vec![single(1.0, 0.0, Activation::Linear)]).unwrap();
        let data = window_values(&[1.0, 0.0], 1).unwrap();
        let (loss, grad) = loss_and_gradient(&net, &data).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(flat_params(&grad), vec![2.0, 2.0]);
    }

    #[test]
    fn dead_relu_gives_zero_first_layer_gradient() {
        let hidden = DenseLayer::new(
            Matrix::from_rows(&[vec![0.7, -0.2], vec![0.1, 0.4]]),
            vec![-0.5, -1.0],
            Activation::Relu,
        );
        let out = DenseLayer::new(Matrix::from_rows(&[vec![1.0, 1.0]]), vec![0.3], Activation::Linear);
        let net = Mlp::from_layers(vec![hidden, out]).unwrap();
        let data = window_values(&[0.0, 0.0, 0.0, 0.0], 2).unwrap();
        let (_, grad) = loss_and_gradient(&net, &data).unwrap();
        assert!(grad.layers[0].weights.as_slice().iter().all(|g| *g == 0.0));
        assert!(grad.layers[0].bias.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn prediction_examples() {
        let zero = Mlp::new(&MlpConfig::default()).unwrap().zeros_like();
        assert_eq!(zero.predict(&[0.3, 0.9]).unwrap(), 0.0);
        let identity = Mlp::from_layers(vec![single(1.0, 0.0, Activation::Linear)]).unwrap();
        assert_eq!(identity.predict(&[0.4]).unwrap(), 0.4);
        assert!(identity.predict(&[0.4, 0.1]).is_err());
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let cfg = MlpConfig { learning_rate: 0.0, epochs: 3, ..Default::default() };
        let net = Mlp::new(&cfg).unwrap();
        let series: Vec<f64> = (0..40).map(|t| (t as f64 * 0.3).sin() * 0.5 + 0.5).collect();
        let tr = window_values(&series[..30], 2).unwrap();
        let va = window_values(&series[30..], 2).unwrap();
        let (trained, trace) = train(net.clone(), &tr, &va, &cfg.train_options()).unwrap();
        assert_eq!(trained, net);
        assert_eq!(trace.train_loss_per_epoch.len(), 3);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = MlpConfig { layer_sizes: vec![5, 5], epochs: 5, ..Default::default() };
        let series: Vec<f64> = (0..60).map(|t| (t as f64 * 0.2).cos() * 0.4 + 0.5).collect();
        let tr = window_values(&series[..40], 2).unwrap();
        let va = window_values(&series[40..], 2).unwrap();
        let a = train(Mlp::new(&cfg).unwrap(), &tr, &va, &cfg.train_options()).unwrap();
        let b = train(Mlp::new(&cfg).unwrap(), &tr, &va, &cfg.train_options()).unwrap();
        let bits = |m: &Mlp| flat_params(m).iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.0), bits(&b.0));
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn invalid_configs() {
        assert!(Mlp::new(&MlpConfig { lag: 0, ..Default::default() }).is_err());
        assert!(Mlp::new(&MlpConfig { epochs: 0, ..Default::default() }).is_err());
        assert!(Mlp::new(&MlpConfig { layer_sizes: vec![3, 0], ..Default::default() }).is_err());
    }
}
