use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{check_dim, glorot_uniform, Result};

/// Multi-channel sequence, channel-major: `data[c * len + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl Signal {
    pub fn zeros(channels: usize, len: usize) -> Self {
        Self { channels, len, data: vec![0.0; channels * len] }
    }

    pub fn from_channel(values: &[f64]) -> Self {
        Self { channels: 1, len: values.len(), data: values.to_vec() }
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    /// Value of every channel at timestep `t`.
    pub fn at(&self, t: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.data[c * self.len + t]).collect()
    }
}

/// Prepends `(k - 1) * d` zeros.
pub fn causal_pad(sequence: &[f64], kernel_size: usize, dilation: usize) -> Vec<f64> {
    let pad = kernel_size.saturating_sub(1) * dilation;
    let mut out = vec![0.0; pad];
    out.extend_from_slice(sequence);
    out
}

/// Causal dilated 1-D convolution:
/// `out[o][s] = bias[o] + sum_c sum_i w[o][c][i] * x[c][s - d*i]`, with `x` zero before 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilatedConv {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub dilation: usize,
    /// `[out][in][tap]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DilatedConv {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel_size: usize, dilation: usize) -> Self {
        assert!(kernel_size >= 1 && dilation >= 1);
        Self {
            in_channels,
            out_channels,
            kernel_size,
            dilation,
            weight: vec![0.0; out_channels * in_channels * kernel_size],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn glorot(
        rng: &mut ChaCha8Rng,
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        dilation: usize,
    ) -> Self {
        let mut conv = Self::zeros(in_channels, out_channels, kernel_size, dilation);
        glorot_uniform(
            rng,
            in_channels * kernel_size,
            out_channels * kernel_size,
            &mut conv.weight,
        );
        conv
    }

    #[inline]
    fn w(&self, o: usize, c: usize, i: usize) -> f64 {
        self.weight[(o * self.in_channels + c) * self.kernel_size + i]
    }

    pub fn forward(&self, x: &Signal) -> Result<Signal> {
        check_dim(self.in_channels, x.channels)?;
        let len = x.len;
        let mut out = Signal::zeros(self.out_channels, len);
        for o in 0..self.out_channels {
            let row = &mut out.data[o * len..(o + 1) * len];
            row.fill(self.bias[o]);
            for c in 0..self.in_channels {
                let xc = x.channel(c);
                for i in 0..self.kernel_size {
                    let shift = self.dilation * i;
                    if shift >= len {
                        break;
                    }
                    let w = self.w(o, c, i);
                    for s in shift..len {
                        row[s] += w * xc[s - shift];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Accumulates weight and bias gradients and returns dLoss/dInput.
    pub fn backward(&self, x: &Signal, d_out: &Signal, grad: &mut DilatedConv) -> Signal {
        let len = x.len;
        let mut d_in = Signal::zeros(self.in_channels, len);
        for o in 0..self.out_channels {
            let go = d_out.channel(o);
            grad.bias[o] += go.iter().sum::<f64>();
            for c in 0..self.in_channels {
                let xc = x.channel(c);
                let base = (o * self.in_channels + c) * self.kernel_size;
                for i in 0..self.kernel_size {
                    let shift = self.dilation * i;
                    if shift >= len {
                        break;
                    }
                    let w = self.weight[base + i];
                    let mut gw = 0.0;
                    let dic = &mut d_in.data[c * len..(c + 1) * len];
                    for s in shift..len {
                        gw += go[s] * xc[s - shift];
                        dic[s - shift] += go[s] * w;
                    }
                    grad.weight[base + i] += gw;
                }
            }
        }
        d_in
    }
}
