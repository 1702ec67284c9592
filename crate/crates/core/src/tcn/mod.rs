//! Temporal convolutional network forecaster.
//!
//! The window is a one-channel sequence of length `lag`. It passes through a chain of
//! residual blocks, each two causal dilated convolutions with an activation after each,
//! and `out = act(skip(x) + F(x))` where `skip` is a 1×1 projection when the channel
//! count changes. The last timestep's channel vector feeds one linear neuron.
//!
//! Block schedule: block `b` of a stack uses `dilations[b % dilations.len()]`, there are
//! `blocks` blocks per stack, and `stacks` copies of that chain run in series.

pub mod conv;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::mlp::DenseLayer;
use crate::nn::{check_dim, Activation, Network, NnError, Result, TrainOptions};

pub use conv::{causal_pad, DilatedConv, Signal};

pub const CONVS_PER_BLOCK: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcnConfig {
    /// Repetitions of the block chain.
    pub stacks: usize,
    pub filters: usize,
    pub kernel_size: usize,
    /// Residual blocks per stack.
    pub blocks: usize,
    pub dilations: Vec<usize>,
    pub lag: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub learning_rate: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for TcnConfig {
    fn default() -> Self {
        Self {
            stacks: 1,
            filters: 64,
            kernel_size: 4,
            blocks: 3,
            dilations: vec![1, 3, 6, 12, 24],
            lag: 2,
            epochs: 30,
            batch_size: 32,
            seed: 42,
            learning_rate: 1e-2,
            activation: Activation::Relu,
        }
    }
}

impl TcnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NnError::InvalidConfig(m.into()));
        if self.stacks == 0 || self.blocks == 0 || self.filters == 0 {
            return bad("stacks, blocks and filters must be positive");
        }
        if self.kernel_size == 0 {
            return bad("kernel_size must be positive");
        }
        if self.lag == 0 {
            return bad("lag must be at least 1");
        }
        if self.dilations.first() != Some(&1) || self.dilations.windows(2).any(|w| w[1] <= w[0]) {
            return bad("dilations must start at 1 and strictly increase");
        }
        self.train_options().validate()
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions { epochs: self.epochs, batch_size: self.batch_size, learning_rate: self.learning_rate }
    }

    /// Dilation of every residual block, input side first.
    pub fn block_dilations(&self) -> Vec<usize> {
        let per_stack: Vec<usize> =
            (0..self.blocks).map(|b| self.dilations[b % self.dilations.len()]).collect();
        per_stack.repeat(self.stacks)
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(self.kernel_size, &self.block_dilations(), CONVS_PER_BLOCK)
    }
}

/// Trailing input positions that can reach the last output:
/// `1 + convs_per_level * (k - 1) * sum(dilations)`.
pub fn receptive_field(kernel_size: usize, dilations: &[usize], convs_per_level: usize) -> usize {
    1 + convs_per_level * kernel_size.saturating_sub(1) * dilations.iter().sum::<usize>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBlock {
    pub conv1: DilatedConv,
    pub conv2: DilatedConv,
    pub projection: Option<DilatedConv>,
    pub activation: Activation,
}

struct BlockCache {
    a1: Signal,
    h1: Signal,
    a2: Signal,
    h2: Signal,
    z: Signal,
    out: Signal,
}

fn map(sig: &Signal, f: impl Fn(f64) -> f64) -> Signal {
    Signal { channels: sig.channels, len: sig.len, data: sig.data.iter().map(|&v| f(v)).collect() }
}

impl ResidualBlock {
    pub fn zeros(in_channels: usize, filters: usize, kernel_size: usize, dilation: usize, act: Activation) -> Self {
        Self {
            conv1: DilatedConv::zeros(in_channels, filters, kernel_size, dilation),
            conv2: DilatedConv::zeros(filters, filters, kernel_size, dilation),
            projection: (in_channels != filters).then(|| DilatedConv::zeros(in_channels, filters, 1, 1)),
            activation: act,
        }
    }

    pub fn glorot(
        rng: &mut ChaCha8Rng,
        in_channels: usize,
        filters: usize,
        kernel_size: usize,
        dilation: usize,
        act: Activation,
    ) -> Self {
        let conv1 = DilatedConv::glorot(rng, in_channels, filters, kernel_size, dilation);
        let conv2 = DilatedConv::glorot(rng, filters, filters, kernel_size, dilation);
        let projection = (in_channels != filters).then(|| DilatedConv::glorot(rng, in_channels, filters, 1, 1));
        Self { conv1, conv2, projection, activation: act }
    }

    pub fn in_channels(&self) -> usize {
        self.conv1.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(
            self.in_channels(),
            self.out_channels(),
            self.conv1.kernel_size,
            self.conv1.dilation,
            self.activation,
        )
    }

    fn forward_cached(&self, x: &Signal) -> Result<BlockCache> {
        let act = self.activation;
        let a1 = self.conv1.forward(x)?;
        let h1 = map(&a1, |v| act.apply(v));
        let a2 = self.conv2.forward(&h1)?;
        let h2 = map(&a2, |v| act.apply(v));
        let skip = match &self.projection {
            Some(p) => p.forward(x)?,
            None => x.clone(),
        };
        check_dim(h2.channels, skip.channels)?;
        let z = Signal {
            channels: h2.channels,
            len: h2.len,
            data: skip.data.iter().zip(&h2.data).map(|(a, b)| a + b).collect(),
        };
        let out = map(&z, |v| act.apply(v));
        Ok(BlockCache { a1, h1, a2, h2, z, out })
    }

    pub fn forward(&self, x: &Signal) -> Result<Signal> {
        Ok(self.forward_cached(x)?.out)
    }

    fn backward(&self, x: &Signal, cache: &BlockCache, d_out: &Signal, grad: &mut ResidualBlock) -> Signal {
        let act = self.activation;
        let mul_deriv = |d: &Signal, pre: &Signal, post: &Signal| Signal {
            channels: d.channels,
            len: d.len,
            data: d
                .data
                .iter()
                .zip(pre.data.iter().zip(&post.data))
                .map(|(g, (&a, &h))| g * act.derivative(a, h))
                .collect(),
        };
        let dz = mul_deriv(d_out, &cache.z, &cache.out);
        let da2 = mul_deriv(&dz, &cache.a2, &cache.h2);
        let dh1 = self.conv2.backward(&cache.h1, &da2, &mut grad.conv2);
        let da1 = mul_deriv(&dh1, &cache.a1, &cache.h1);
        let mut dx = self.conv1.backward(x, &da1, &mut grad.conv1);
        let d_skip = match (&self.projection, &mut grad.projection) {
            (Some(p), Some(gp)) => p.backward(x, &dz, gp),
            _ => dz,
        };
        for (a, b) in dx.data.iter_mut().zip(&d_skip.data) {
            *a += b;
        }
        dx
    }

    fn convs(&self) -> impl Iterator<Item = &DilatedConv> {
        [&self.conv1, &self.conv2].into_iter().chain(self.projection.as_ref())
    }

    fn convs_mut(&mut self) -> impl Iterator<Item = &mut DilatedConv> {
        [&mut self.conv1, &mut self.conv2].into_iter().chain(self.projection.as_mut())
    }
}

pub fn residual_block_forward(block: &ResidualBlock, sequence: &Signal) -> Result<Signal> {
    block.forward(sequence)
}

pub fn dilated_conv(layer: &DilatedConv, sequence: &Signal) -> Result<Signal> {
    layer.forward(sequence)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tcn {
    pub lag: usize,
    pub blocks: Vec<ResidualBlock>,
    pub readout: DenseLayer,
}

impl Tcn {
    pub fn new(config: &TcnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut channels = 1;
        let mut blocks = Vec::new();
        for d in config.block_dilations() {
            blocks.push(ResidualBlock::glorot(
                &mut rng,
                channels,
                config.filters,
                config.kernel_size,
                d,
                config.activation,
            ));
            channels = config.filters;
        }
        let readout = DenseLayer::glorot(&mut rng, channels, 1, Activation::Linear);
        Ok(Self { lag: config.lag, blocks, readout })
    }

    pub fn from_parts(lag: usize, blocks: Vec<ResidualBlock>, readout: DenseLayer) -> Result<Self> {
        let mut channels = 1;
        for b in &blocks {
            check_dim(channels, b.in_channels())?;
            channels = b.out_channels();
        }
        check_dim(channels, readout.inputs())?;
        Ok(Self { lag, blocks, readout })
    }

    /// Output sequence of the last residual block for an arbitrary-length input.
    pub fn sequence_forward(&self, input: &[f64]) -> Result<Signal> {
        let mut x = Signal::from_channel(input);
        for b in &self.blocks {
            x = b.forward(&x)?;
        }
        Ok(x)
    }
}

impl Network for Tcn {
    fn lag(&self) -> usize {
        self.lag
    }

    fn predict(&self, window: &[f64]) -> Result<f64> {
        check_dim(self.lag, window.len())?;
        let seq = self.sequence_forward(window)?;
        Ok(self.readout.forward(&seq.at(seq.len - 1))?.1[0])
    }

    fn accumulate_gradient(
        &self,
        window: &[f64],
        seed: &mut dyn FnMut(f64) -> f64,
        grad: &mut Self,
    ) -> Result<f64> {
        check_dim(self.lag, window.len())?;
        let mut inputs = Vec::with_capacity(self.blocks.len());
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut x = Signal::from_channel(window);
        for b in &self.blocks {
            let cache = b.forward_cached(&x)?;
            let next = cache.out.clone();
            inputs.push(x);
            caches.push(cache);
            x = next;
        }
        let last = x.len - 1;
        let features = x.at(last);
        let output = self.readout.forward(&features)?.1[0];
        let d_out = seed(output);
        let d_features = self.readout.backward(&features, &[output], &[output], &[d_out], &mut grad.readout);

        let mut d = Signal::zeros(x.channels, x.len);
        for (c, g) in d_features.into_iter().enumerate() {
            d.data[c * x.len + last] = g;
        }
        for (k, b) in self.blocks.iter().enumerate().rev() {
            d = b.backward(&inputs[k], &caches[k], &d, &mut grad.blocks[k]);
        }
        Ok(output)
    }

    fn zeros_like(&self) -> Self {
        Self {
            lag: self.lag,
            blocks: self.blocks.iter().map(ResidualBlock::zeros_like).collect(),
            readout: DenseLayer::zeros(self.readout.inputs(), 1, Activation::Linear),
        }
    }

    fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        for b in &self.blocks {
            for c in b.convs() {
                f(&c.weight);
                f(&c.bias);
            }
        }
        f(self.readout.weights.as_slice());
        f(&self.readout.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for b in &mut self.blocks {
            for c in b.convs_mut() {
                f(&mut c.weight);
                f(&mut c.bias);
            }
        }
        f(self.readout.weights.as_mut_slice());
        f(&mut self.readout.bias);
    }
}
