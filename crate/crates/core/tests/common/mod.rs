//! Test-only oracles that do not go through the library's matrix code.

#![allow(dead_code)]

use gwmlp::network::{Activation, MlpModel};
use gwmlp::numerics::{Matrix, RngState};

/// Plain nested-Vec copy of a model's parameters.
#[derive(Clone, Debug)]
pub struct NaiveNet {
    /// weights[l][i][j]: input i -> output j of layer l.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub relu_output: bool,
}

impl NaiveNet {
    pub fn from_model(model: &MlpModel) -> Self {
        let weights = model
            .weights()
            .iter()
            .map(|w| (0..w.rows()).map(|i| w.row(i).to_vec()).collect())
            .collect();
        let biases = model.biases().iter().map(|b| b.data().to_vec()).collect();
        NaiveNet {
            weights,
            biases,
            relu_output: model.output_activation() == Activation::Relu,
        }
    }

    /// Pre-activations of every layer for one input row.
    pub fn pre_activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut a = input.to_vec();
        let mut zs = Vec::new();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z: Vec<f64> = (0..b.len())
                .map(|j| b[j] + (0..a.len()).map(|i| a[i] * w[i][j]).sum::<f64>())
                .collect();
            let relu = l < last || self.relu_output;
            a = z
                .iter()
                .map(|&v| if relu && v <= 0.0 { 0.0 } else { v })
                .collect();
            zs.push(z);
        }
        zs
    }

    pub fn output(&self, input: &[f64]) -> f64 {
        let zs = self.pre_activations(input);
        let z = zs.last().unwrap()[0];
        if self.relu_output && z <= 0.0 {
            0.0
        } else {
            z
        }
    }

    pub fn loss(&self, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        xs.iter()
            .zip(ys)
            .map(|(x, y)| (self.output(x) - y).powi(2))
            .sum::<f64>()
            / n
    }

    /// Parameters flattened in optimizer order (W0, b0, W1, b1, ...), row-major.
    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() * w[0].len() + b.len())
            .sum()
    }

    pub fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let nw = w.len() * w[0].len();
            if k < nw {
                let cols = w[0].len();
                return &mut w[k / cols][k % cols];
            }
            k -= nw;
            if k < b.len() {
                return &mut b[k];
            }
            k -= b.len();
        }
        panic!("parameter index out of range");
    }

    /// Central difference of the loss for every parameter.
    pub fn numeric_gradient(&self, xs: &[Vec<f64>], ys: &[f64], h: f64) -> Vec<f64> {
        let mut net = self.clone();
        (0..self.param_count())
            .map(|k| {
                let orig = *net.param_mut(k);
                *net.param_mut(k) = orig + h;
                let up = net.loss(xs, ys);
                *net.param_mut(k) = orig - h;
                let down = net.loss(xs, ys);
                *net.param_mut(k) = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }
}

/// `|a - n| / max(|a|, |n|)`, with the denominator floored at `1e-8`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub struct GradCase {
    pub model: MlpModel,
    pub x: Matrix,
    pub y: Matrix,
}

/// Random small model and batch whose pre-activations all stay at least
/// `margin` away from zero. Depth (weight layers) 2 or 3, widths up to 10.
pub fn random_grad_case(rng: &mut RngState, margin: f64) -> GradCase {
    loop {
        let n_in = rng.int_range(2, 5);
        let depth = rng.int_range(2, 3);
        let mut sizes = vec![n_in];
        for _ in 1..depth {
            sizes.push(rng.int_range(3, 10));
        }
        sizes.push(1);
        let output = if rng.uniform() < 0.25 {
            Activation::Relu
        } else {
            Activation::Linear
        };
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            let std = (2.0 / pair[0] as f64).sqrt();
            weights.push(rng.standard_normal_matrix(pair[0], pair[1]).scale(std));
            biases.push(rng.standard_normal_matrix(1, pair[1]).scale(0.2));
        }
        let model =
            MlpModel::from_parts(sizes.clone(), weights, biases, Activation::Relu, output).unwrap();
        let batch = rng.int_range(1, 6);
        let xd: Vec<f64> = (0..batch * n_in)
            .map(|_| rng.uniform_range(-1.0, 1.0))
            .collect();
        let yd: Vec<f64> = (0..batch).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let x = Matrix::new(batch, n_in, xd).unwrap();
        let naive = NaiveNet::from_model(&model);
        let clear = (0..batch).all(|i| {
            naive
                .pre_activations(x.row(i))
                .iter()
                .flatten()
                .all(|z| z.abs() >= margin)
        });
        if clear {
            return GradCase {
                model,
                x,
                y: Matrix::column(&yd).unwrap(),
            };
        }
    }
}

pub fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Max relative error between `mlp_backward` and central differences for one case.
pub fn grad_check_case(case: &GradCase, h: f64) -> f64 {
    use gwmlp::network::{mlp_backward, mlp_forward};
    let trace = mlp_forward(&case.model, &case.x).unwrap();
    let grads = mlp_backward(&case.model, &trace, &case.y).unwrap();
    let analytic: Vec<f64> = grads
        .as_list()
        .iter()
        .flat_map(|g| g.data().to_vec())
        .collect();
    let naive = NaiveNet::from_model(&case.model);
    let numeric = naive.numeric_gradient(&rows_of(&case.x), case.y.data(), h);
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}
