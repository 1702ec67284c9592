#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsforecast::data::{window_values, WindowedDataset};
use tsforecast::nn::mlp::{DenseLayer, Mlp};
use tsforecast::nn::{dataset_loss, flat_params, loss_and_gradient, set_flat_params, Activation, Network};
use tsforecast::recurrent::{CellForm, CellKind, RnnConfig, RnnModel};
use tsforecast::tcn::{Tcn, TcnConfig};

pub const EPS: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Keeps the relative error meaningful for gradients that are zero up to rounding.
pub const DENOM_FLOOR: f64 = 1e-6;

pub const ACTIVATIONS: [Activation; 4] =
    [Activation::Relu, Activation::Sigmoid, Activation::Tanh, Activation::Linear];

#[derive(Debug)]
pub struct GradReport {
    pub params: usize,
    pub worst_rel: f64,
    pub worst_index: usize,
}

impl GradReport {
    pub fn passes(&self) -> bool {
        self.worst_rel < REL_TOL
    }
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(DENOM_FLOOR)
}

/// Central differences of the dataset MSE against the analytic gradient, every parameter.
pub fn check_gradient<N: Network>(net: &N, data: &WindowedDataset) -> GradReport {
    let (_, grad) = loss_and_gradient(net, data).expect("analytic gradient");
    let analytic = flat_params(&grad);
    let theta = flat_params(net);
    let mut probe = net.clone();
    let mut worst_rel = 0.0;
    let mut worst_index = 0;
    for k in 0..theta.len() {
        let mut t = theta.clone();
        t[k] = theta[k] + EPS;
        set_flat_params(&mut probe, &t);
        let up = dataset_loss(&probe, data).unwrap();
        t[k] = theta[k] - EPS;
        set_flat_params(&mut probe, &t);
        let down = dataset_loss(&probe, data).unwrap();
        let numeric = (up - down) / (2.0 * EPS);
        let rel = rel_error(analytic[k], numeric);
        if rel > worst_rel || rel.is_nan() {
            worst_rel = if rel.is_nan() { f64::INFINITY } else { rel };
            worst_index = k;
        }
    }
    GradReport { params: theta.len(), worst_rel, worst_index }
}

pub fn random_dataset(rng: &mut ChaCha8Rng, lag: usize, rows: usize) -> WindowedDataset {
    let values: Vec<f64> = (0..lag + rows).map(|_| rng.random_range(0.0..1.0)).collect();
    window_values(&values, lag).unwrap()
}

/// Overwrites every parameter (biases included) with uniform draws.
pub fn randomize<N: Network>(net: &mut N, rng: &mut ChaCha8Rng, scale: f64) {
    let n = net.num_params();
    let values: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    set_flat_params(net, &values);
}

pub fn random_mlp(seed: u64) -> (Mlp, WindowedDataset, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lag = rng.random_range(1..=4);
    let depth = rng.random_range(1..=2);
    let act = ACTIVATIONS[seed as usize % ACTIVATIONS.len()];
    let mut layers = Vec::new();
    let mut inputs = lag;
    for _ in 0..depth {
        let width = rng.random_range(1..=5);
        layers.push(DenseLayer::glorot(&mut rng, inputs, width, act));
        inputs = width;
    }
    layers.push(DenseLayer::glorot(&mut rng, inputs, 1, Activation::Linear));
    let mut net = Mlp::from_layers(layers).unwrap();
    randomize(&mut net, &mut rng, 0.8);
    let data = random_dataset(&mut rng, lag, 6);
    (net, data, format!("mlp seed={seed} lag={lag} depth={depth} act={act:?}"))
}

pub fn random_rnn(kind: CellKind, form: CellForm, seed: u64) -> (RnnModel, WindowedDataset, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lag = rng.random_range(1..=4);
    let depth = rng.random_range(1..=2);
    let hidden_sizes: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=4)).collect();
    let config = RnnConfig { hidden_sizes: hidden_sizes.clone(), lag, seed, form, ..Default::default() };
    let mut net = RnnModel::new(kind, &config).unwrap();
    randomize(&mut net, &mut rng, 0.8);
    let data = random_dataset(&mut rng, lag, 5);
    (net, data, format!("{kind:?}/{form:?} seed={seed} lag={lag} hidden={hidden_sizes:?}"))
}

pub fn random_tcn_config(rng: &mut ChaCha8Rng, seed: u64) -> TcnConfig {
    let dilation_sets: [&[usize]; 3] = [&[1], &[1, 2], &[1, 2, 4]];
    TcnConfig {
        stacks: rng.random_range(1..=2),
        filters: rng.random_range(1..=4),
        kernel_size: rng.random_range(1..=3),
        blocks: rng.random_range(1..=3),
        dilations: dilation_sets[rng.random_range(0..dilation_sets.len())].to_vec(),
        lag: rng.random_range(2..=6),
        seed,
        activation: ACTIVATIONS[seed as usize % ACTIVATIONS.len()],
        ..Default::default()
    }
}

pub fn random_tcn(seed: u64) -> (Tcn, WindowedDataset, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = random_tcn_config(&mut rng, seed);
    let mut net = Tcn::new(&config).unwrap();
    randomize(&mut net, &mut rng, 0.8);
    let data = random_dataset(&mut rng, config.lag, 5);
    let desc = format!(
        "tcn seed={seed} stacks={} filters={} k={} blocks={} dil={:?} lag={} act={:?}",
        config.stacks, config.filters, config.kernel_size, config.blocks, config.dilations, config.lag,
        config.activation
    );
    (net, data, desc)
}

pub struct FamilyOutcome {
    pub configs: usize,
    pub failures: Vec<String>,
    pub worst_rel: f64,
}

pub fn run_family<N: Network>(configs: impl Iterator<Item = (N, WindowedDataset, String)>) -> FamilyOutcome {
    let mut outcome = FamilyOutcome { configs: 0, failures: Vec::new(), worst_rel: 0.0 };
    for (net, data, desc) in configs {
        let report = check_gradient(&net, &data);
        outcome.configs += 1;
        outcome.worst_rel = outcome.worst_rel.max(report.worst_rel);
        if !report.passes() {
            outcome.failures.push(format!("{desc}: rel {:.3e} at param {}", report.worst_rel, report.worst_index));
        }
    }
    outcome
}

pub const GRAD_CONFIGS: u64 = 24;

pub fn mlp_family() -> FamilyOutcome {
    run_family((0..GRAD_CONFIGS).map(random_mlp))
}

pub fn rnn_family(kind: CellKind, form: CellForm) -> FamilyOutcome {
    run_family((0..GRAD_CONFIGS).map(|s| random_rnn(kind, form, 100 + s)))
}

pub fn tcn_family() -> FamilyOutcome {
    run_family((0..GRAD_CONFIGS).map(|s| random_tcn(200 + s)))
}

/// Seeded AR(p) sample path with intercept `c` and unit-variance Gaussian noise.
pub fn ar_series(phi: &[f64], c: f64, n: usize, seed: u64) -> Vec<f64> {
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let burn = 200;
    let mut y = vec![0.0; phi.len()];
    for _ in 0..n + burn {
        let t = y.len();
        let ar: f64 = phi.iter().enumerate().map(|(i, p)| p * y[t - 1 - i]).sum();
        y.push(c + ar + noise.sample(&mut rng));
    }
    y.split_off(phi.len() + burn)
}

/// Least-squares regression of `y[t]` on `[1, y[t-1], ..., y[t-p]]`, via Gaussian
/// elimination with partial pivoting on the normal equations. Returns `[c, phi...]`.
pub fn ols_ar(y: &[f64], p: usize) -> Vec<f64> {
    let k = p + 1;
    let mut a = vec![vec![0.0; k + 1]; k];
    for t in p..y.len() {
        let mut row = vec![1.0];
        row.extend((1..=p).map(|i| y[t - i]));
        for i in 0..k {
            for j in 0..k {
                a[i][j] += row[i] * row[j];
            }
            a[i][k] += row[i] * y[t];
        }
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..k).map(|i| a[i][k] / a[i][i]).collect()
}

/// Earliest input position whose perturbation changes the final output, measured by
/// perturbing each position in turn. Returns the count of trailing positions that matter.
pub fn brute_force_receptive_field(net: &Tcn, len: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let reference = net.sequence_forward(&base).unwrap();
    let last = |s: &tsforecast::tcn::Signal| s.at(s.len - 1);
    let mut earliest = len;
    for pos in (0..len).rev() {
        let mut x = base.clone();
        x[pos] += 0.5;
        if last(&net.sequence_forward(&x).unwrap()) != last(&reference) {
            earliest = pos;
        }
    }
    len - earliest
}

/// Perturbs every input position and checks no earlier output moved, bit for bit.
pub fn causality_violation(net: &Tcn, len: usize, seed: u64) -> Option<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let reference = net.sequence_forward(&base).unwrap();
    for pos in 0..len {
        let mut x = base.clone();
        x[pos] += rng.random_range(0.1..2.0);
        let out = net.sequence_forward(&x).unwrap();
        for s in 0..pos {
            if out.at(s) != reference.at(s) {
                return Some((pos, s));
            }
        }
    }
    None
}

/// A smooth-activation TCN with random weights, biases included, for perturbation studies.
pub fn random_probe_tcn(seed: u64) -> (Tcn, TcnConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut config = random_tcn_config(&mut rng, seed);
    config.activation = Activation::Tanh;
    let mut net = Tcn::new(&config).unwrap();
    randomize(&mut net, &mut rng, 0.8);
    (net, config)
}
