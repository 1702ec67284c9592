use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CellForm, Gate};
use crate::nn::activation::sigmoid;
use crate::nn::{check_dim, Result};

/// LSTM cell with input, forget, output gates and a tanh candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub input_gate: Gate,
    pub forget_gate: Gate,
    pub output_gate: Gate,
    pub candidate: Gate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    /// Gate activations of the step that produced this state; empty for an initial state.
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self::with_cell(vec![0.0; hidden], vec![0.0; hidden])
    }

    pub fn with_cell(h: Vec<f64>, c: Vec<f64>) -> Self {
        Self { h, c, i: Vec::new(), f: Vec::new(), o: Vec::new(), g: Vec::new() }
    }
}

impl LstmCell {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            input_gate: Gate::zeros(inputs, hidden),
            forget_gate: Gate::zeros(inputs, hidden),
            output_gate: Gate::zeros(inputs, hidden),
            candidate: Gate::zeros(inputs, hidden),
        }
    }

    pub fn glorot(rng: &mut ChaCha8Rng, inputs: usize, hidden: usize) -> Self {
        Self {
            input_gate: Gate::glorot(rng, inputs, hidden),
            forget_gate: Gate::glorot(rng, inputs, hidden),
            output_gate: Gate::glorot(rng, inputs, hidden),
            candidate: Gate::glorot(rng, inputs, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.input_gate.hidden()
    }

    pub fn inputs(&self) -> usize {
        self.input_gate.inputs()
    }

    pub(super) fn gates(&self) -> [&Gate; 4] {
        [&self.input_gate, &self.forget_gate, &self.output_gate, &self.candidate]
    }

    pub(super) fn gates_mut(&mut self) -> [&mut Gate; 4] {
        [&mut self.input_gate, &mut self.forget_gate, &mut self.output_gate, &mut self.candidate]
    }

    /// Bias signs for (input, forget, output, candidate).
    fn bias_signs(form: CellForm) -> [f64; 4] {
        match form {
            CellForm::Standard => [1.0; 4],
            CellForm::Literal => [-1.0, 1.0, -1.0, -1.0],
        }
    }

    /// One timestep.
    ///
    /// Standard form: `c = f*c' + i*g`, `h = o*tanh(c)`, all biases added.
    /// Literal form: input, output and candidate biases subtracted and `h = o*tanh(g)`.
    pub fn step(&self, x: &[f64], prev: &LstmState, form: CellForm) -> Result<LstmState> {
        let hidden = self.hidden();
        check_dim(self.inputs(), x.len())?;
        check_dim(hidden, prev.h.len())?;
        check_dim(hidden, prev.c.len())?;
        let signs = Self::bias_signs(form);
        let [ig, fg, og, cg] = self.gates();
        let i: Vec<f64> = ig.pre_activation(x, &prev.h, signs[0]).into_iter().map(sigmoid).collect();
        let f: Vec<f64> = fg.pre_activation(x, &prev.h, signs[1]).into_iter().map(sigmoid).collect();
        let o: Vec<f64> = og.pre_activation(x, &prev.h, signs[2]).into_iter().map(sigmoid).collect();
        let g: Vec<f64> = cg.pre_activation(x, &prev.h, signs[3]).into_iter().map(f64::tanh).collect();
        let c: Vec<f64> = (0..hidden).map(|k| f[k] * prev.c[k] + i[k] * g[k]).collect();
        let h: Vec<f64> = match form {
            CellForm::Standard => (0..hidden).map(|k| o[k] * c[k].tanh()).collect(),
            CellForm::Literal => (0..hidden).map(|k| o[k] * g[k].tanh()).collect(),
        };
        Ok(LstmState { h, c, i, f, o, g })
    }

    /// Unrolls over `xs` from a zero state and returns every state (without the initial one).
    pub fn run(&self, xs: &[Vec<f64>], form: CellForm) -> Result<Vec<LstmState>> {
        let mut states = Vec::with_capacity(xs.len());
        let mut prev = LstmState::zeros(self.hidden());
        for x in xs {
            let next = self.step(x, &prev, form)?;
            states.push(next.clone());
            prev = next;
        }
        Ok(states)
    }

    /// Backpropagation through time. `dh_ext[t]` is the loss gradient arriving at `h_t`
    /// from above. Accumulates into `grad` and returns the gradient for every input `x_t`.
    pub fn backward(
        &self,
        xs: &[Vec<f64>],
        states: &[LstmState],
        dh_ext: &[Vec<f64>],
        form: CellForm,
        grad: &mut LstmCell,
    ) -> Vec<Vec<f64>> {
        let hidden = self.hidden();
        let signs = Self::bias_signs(form);
        let zeros = LstmState::zeros(hidden);
        let mut dh_next = vec![0.0; hidden];
        let mut dc_next = vec![0.0; hidden];
        let mut dxs = vec![vec![0.0; self.inputs()]; xs.len()];
        for t in (0..xs.len()).rev() {
            let s = &states[t];
            let prev = if t == 0 { &zeros } else { &states[t - 1] };
            let mut da = [vec![0.0; hidden], vec![0.0; hidden], vec![0.0; hidden], vec![0.0; hidden]];
            for k in 0..hidden {
                let dh = dh_ext[t][k] + dh_next[k];
                let (d_o, dc, dg_from_h) = match form {
                    CellForm::Standard => {
                        let tc = s.c[k].tanh();
                        (dh * tc, dc_next[k] + dh * s.o[k] * (1.0 - tc * tc), 0.0)
                    }
                    CellForm::Literal => {
                        let tg = s.g[k].tanh();
                        (dh * tg, dc_next[k], dh * s.o[k] * (1.0 - tg * tg))
                    }
                };
                let d_i = dc * s.g[k];
                let d_g = dc * s.i[k] + dg_from_h;
                let d_f = dc * prev.c[k];
                dc_next[k] = dc * s.f[k];
                da[0][k] = d_i * s.i[k] * (1.0 - s.i[k]);
                da[1][k] = d_f * s.f[k] * (1.0 - s.f[k]);
                da[2][k] = d_o * s.o[k] * (1.0 - s.o[k]);
                da[3][k] = d_g * (1.0 - s.g[k] * s.g[k]);
            }
            let mut dh_prev = vec![0.0; hidden];
            for (((gate, ggrad), d), sign) in
                self.gates().into_iter().zip(grad.gates_mut()).zip(&da).zip(signs)
            {
                gate.backward(&xs[t], &prev.h, d, sign, ggrad, &mut dxs[t], &mut dh_prev);
            }
            dh_next = dh_prev;
        }
        dxs
    }
}
