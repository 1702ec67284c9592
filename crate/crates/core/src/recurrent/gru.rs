use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CellForm, Gate};
use crate::nn::activation::sigmoid;
use crate::nn::{check_dim, Result};

/// GRU cell: update gate `z`, reset gate `r`, candidate `g`, and
/// `h = z*h' + (1-z)*g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruCell {
    pub update_gate: Gate,
    pub reset_gate: Gate,
    pub candidate: Gate,
}

/// Cached activations of one GRU step.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStep {
    pub h: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub g: Vec<f64>,
}

impl GruCell {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            update_gate: Gate::zeros(inputs, hidden),
            reset_gate: Gate::zeros(inputs, hidden),
            candidate: Gate::zeros(inputs, hidden),
        }
    }

    pub fn glorot(rng: &mut ChaCha8Rng, inputs: usize, hidden: usize) -> Self {
        Self {
            update_gate: Gate::glorot(rng, inputs, hidden),
            reset_gate: Gate::glorot(rng, inputs, hidden),
            candidate: Gate::glorot(rng, inputs, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.update_gate.hidden()
    }

    pub fn inputs(&self) -> usize {
        self.update_gate.inputs()
    }

    pub(super) fn gates(&self) -> [&Gate; 3] {
        [&self.update_gate, &self.reset_gate, &self.candidate]
    }

    pub(super) fn gates_mut(&mut self) -> [&mut Gate; 3] {
        [&mut self.update_gate, &mut self.reset_gate, &mut self.candidate]
    }

    /// The literal form subtracts the update-gate bias.
    fn update_sign(form: CellForm) -> f64 {
        match form {
            CellForm::Standard => 1.0,
            CellForm::Literal => -1.0,
        }
    }

    pub fn step_full(&self, x: &[f64], h_prev: &[f64], form: CellForm) -> Result<GruStep> {
        let hidden = self.hidden();
        check_dim(self.inputs(), x.len())?;
        check_dim(hidden, h_prev.len())?;
        let z: Vec<f64> = self
            .update_gate
            .pre_activation(x, h_prev, Self::update_sign(form))
            .into_iter()
            .map(sigmoid)
            .collect();
        let r: Vec<f64> = self.reset_gate.pre_activation(x, h_prev, 1.0).into_iter().map(sigmoid).collect();
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let g: Vec<f64> = self.candidate.pre_activation(x, &rh, 1.0).into_iter().map(f64::tanh).collect();
        let h = (0..hidden).map(|k| z[k] * h_prev[k] + (1.0 - z[k]) * g[k]).collect();
        Ok(GruStep { h, z, r, g })
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64], form: CellForm) -> Result<Vec<f64>> {
        Ok(self.step_full(x, h_prev, form)?.h)
    }

    pub fn run(&self, xs: &[Vec<f64>], form: CellForm) -> Result<Vec<GruStep>> {
        let mut steps: Vec<GruStep> = Vec::with_capacity(xs.len());
        let zeros = vec![0.0; self.hidden()];
        for x in xs {
            let prev = steps.last().map_or(&zeros, |s| &s.h);
            let next = self.step_full(x, prev, form)?;
            steps.push(next);
        }
        Ok(steps)
    }

    pub fn backward(
        &self,
        xs: &[Vec<f64>],
        steps: &[GruStep],
        dh_ext: &[Vec<f64>],
        form: CellForm,
        grad: &mut GruCell,
    ) -> Vec<Vec<f64>> {
        let hidden = self.hidden();
        let zeros = vec![0.0; hidden];
        let mut dh_next = vec![0.0; hidden];
        let mut dxs = vec![vec![0.0; self.inputs()]; xs.len()];
        for t in (0..xs.len()).rev() {
            let s = &steps[t];
            let h_prev = if t == 0 { &zeros } else { &steps[t - 1].h };
            let mut dh_prev = vec![0.0; hidden];
            let mut da_z = vec![0.0; hidden];
            let mut da_g = vec![0.0; hidden];
            for k in 0..hidden {
                let dh = dh_ext[t][k] + dh_next[k];
                let dz = dh * (h_prev[k] - s.g[k]);
                let dg = dh * (1.0 - s.z[k]);
                dh_prev[k] += dh * s.z[k];
                da_z[k] = dz * s.z[k] * (1.0 - s.z[k]);
                da_g[k] = dg * (1.0 - s.g[k] * s.g[k]);
            }
            // candidate sees r*h_prev in place of h_prev
            let rh: Vec<f64> = s.r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
            let mut d_rh = vec![0.0; hidden];
            self.candidate.backward(&xs[t], &rh, &da_g, 1.0, &mut grad.candidate, &mut dxs[t], &mut d_rh);
            let mut da_r = vec![0.0; hidden];
            for k in 0..hidden {
                dh_prev[k] += d_rh[k] * s.r[k];
                let dr = d_rh[k] * h_prev[k];
                da_r[k] = dr * s.r[k] * (1.0 - s.r[k]);
            }
            self.update_gate.backward(
                &xs[t],
                h_prev,
                &da_z,
                Self::update_sign(form),
                &mut grad.update_gate,
                &mut dxs[t],
                &mut dh_prev,
            );
            self.reset_gate.backward(&xs[t], h_prev, &da_r, 1.0, &mut grad.reset_gate, &mut dxs[t], &mut dh_prev);
            dh_next = dh_prev;
        }
        dxs
    }
}
