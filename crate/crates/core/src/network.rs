//! Fully connected feed-forward network with ReLU hidden layers.
//!
//! Layer `l` maps a `B x n_l` activation batch to `B x n_{l+1}` through
//! `z = a · W_l + b_l` followed by the layer activation. The training
//! objective is the batch-mean squared error.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => relu(x),
            Activation::Linear => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => relu_grad(x),
            Activation::Linear => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::Config(format!(
                "unknown activation '{other}' (expected relu or linear)"
            ))),
        }
    }
}

/// `x` for positive inputs, otherwise `0`.
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Subgradient of [`relu`]; the kink at `0` maps to `0`.
pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Matrix>,
    hidden_activation: Activation,
    output_activation: Activation,
}

impl MlpModel {
    /// Assembles a model from explicit parameters, checking every shape.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Matrix>,
        biases: Vec<Matrix>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        validate_sizes(&layer_sizes)?;
        let n_layers = layer_sizes.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::Config(format!(
                "{} layers need {n_layers} weight and bias blocks, got {} and {}",
                layer_sizes.len(),
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..n_layers {
            let want_w = (layer_sizes[l], layer_sizes[l + 1]);
            if weights[l].shape() != want_w {
                return Err(Error::shape(
                    "MlpModel weights",
                    format!("{}x{}", want_w.0, want_w.1),
                    weights[l].shape_str(),
                ));
            }
            if biases[l].shape() != (1, want_w.1) {
                return Err(Error::shape(
                    "MlpModel biases",
                    format!("1x{}", want_w.1),
                    biases[l].shape_str(),
                ));
            }
        }
        Ok(MlpModel {
            layer_sizes,
            weights,
            biases,
            hidden_activation,
            output_activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Matrix] {
        &self.biases
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn layer_activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Parameters in optimizer order: `W_0, b_0, W_1, b_1, ...`.
    pub fn params(&self) -> Vec<&Matrix> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.params().iter().map(|p| p.shape()).collect()
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.data().len()).sum()
    }

    /// Replaces layer `l`'s weight block, keeping its shape.
    pub fn set_weights(&mut self, layer: usize, w: Matrix) -> Result<()> {
        if w.shape() != self.weights[layer].shape() {
            return Err(Error::shape(
                "set_weights",
                self.weights[layer].shape_str(),
                w.shape_str(),
            ));
        }
        self.weights[layer] = w;
        Ok(())
    }

    pub fn set_biases(&mut self, layer: usize, b: Matrix) -> Result<()> {
        if b.shape() != self.biases[layer].shape() {
            return Err(Error::shape(
                "set_biases",
                self.biases[layer].shape_str(),
                b.shape_str(),
            ));
        }
        self.biases[layer] = b;
        Ok(())
    }
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config(format!(
            "need at least input and output layer sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Config(format!(
            "layer sizes must be positive, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

/// He-initialized model: weights `N(0, 2 / fan_in)`, zero biases, ReLU hidden layers.
pub fn init_mlp(
    layer_sizes: &[usize],
    output_activation: Activation,
    rng: &mut RngState,
) -> Result<MlpModel> {
    validate_sizes(layer_sizes)?;
    let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
    let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
    for pair in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let std = (2.0 / fan_in as f64).sqrt();
        weights.push(rng.standard_normal_matrix(fan_in, fan_out).scale(std));
        biases.push(Matrix::zeros(1, fan_out));
    }
    MlpModel::from_parts(
        layer_sizes.to_vec(),
        weights,
        biases,
        Activation::Relu,
        output_activation,
    )
}

/// Intermediates retained by [`mlp_forward`] for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `z` of every layer.
    pub pre_activations: Vec<Matrix>,
    /// `activations[0]` is the input batch; `activations[l + 1] = φ(pre_activations[l])`.
    pub activations: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("trace holds the input")
    }
}

pub fn mlp_forward(model: &MlpModel, x_batch: &Matrix) -> Result<ForwardTrace> {
    if x_batch.cols() != model.input_size() {
        return Err(Error::shape(
            "mlp_forward",
            format!("input width {}", model.input_size()),
            x_batch.shape_str(),
        ));
    }
    let mut pre_activations = Vec::with_capacity(model.num_layers());
    let mut activations = Vec::with_capacity(model.num_layers() + 1);
    activations.push(x_batch.clone());
    for l in 0..model.num_layers() {
        let z = activations[l]
            .matmul(&model.weights[l])?
            .add_row_broadcast(&model.biases[l])?;
        let act = model.layer_activation(l);
        activations.push(z.map(|v| act.apply(v)));
        pre_activations.push(z);
    }
    Ok(ForwardTrace {
        pre_activations,
        activations,
    })
}

pub fn mlp_predict(model: &MlpModel, x_batch: &Matrix) -> Result<Matrix> {
    let trace = mlp_forward(model, x_batch)?;
    Ok(trace
        .activations
        .into_iter()
        .last()
        .expect("trace holds the input"))
}

/// `(1/B) Σ (pred - target)²`.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "mse_loss",
            pred.shape_str(),
            target.shape_str(),
        ));
    }
    let n = pred.data().len();
    if n == 0 {
        return Err(Error::EmptyData("mse_loss on an empty batch".into()));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub d_weights: Vec<Matrix>,
    pub d_biases: Vec<Matrix>,
}

impl Gradients {
    /// Same ordering as [`MlpModel::params`].
    pub fn as_list(&self) -> Vec<&Matrix> {
        self.d_weights
            .iter()
            .zip(&self.d_biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }
}

/// Exact gradient of [`mse_loss`] with respect to every weight and bias.
pub fn mlp_backward(model: &MlpModel, trace: &ForwardTrace, target: &Matrix) -> Result<Gradients> {
    let n_layers = model.num_layers();
    if trace.pre_activations.len() != n_layers || trace.activations.len() != n_layers + 1 {
        return Err(Error::shape(
            "mlp_backward",
            format!("{n_layers} layers"),
            format!("trace of {} layers", trace.pre_activations.len()),
        ));
    }
    for (l, z) in trace.pre_activations.iter().enumerate() {
        if z.cols() != model.layer_sizes[l + 1] {
            return Err(Error::shape(
                "mlp_backward",
                format!("layer {l} width {}", model.layer_sizes[l + 1]),
                z.shape_str(),
            ));
        }
    }
    let pred = trace.output();
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "mlp_backward",
            pred.shape_str(),
            target.shape_str(),
        ));
    }
    let inv_batch = 1.0 / pred.rows() as f64;

    // delta_l = ∂(B·loss)/∂z_l; the 1/B factor is applied once per gradient block.
    let mut delta = pred.sub(target)?.scale(2.0);
    let mut d_weights = vec![None; n_layers];
    let mut d_biases = vec![None; n_layers];
    for l in (0..n_layers).rev() {
        let act = model.layer_activation(l);
        let dphi = trace.pre_activations[l].map(|v| act.derivative(v));
        delta = delta.hadamard(&dphi)?;
        let dw = trace.activations[l]
            .transpose()
            .matmul(&delta)?
            .scale(inv_batch);
        let db = delta.sum_rows().scale(inv_batch);
        d_weights[l] = Some(dw);
        d_biases[l] = Some(db);
        if l > 0 {
            delta = delta.matmul(&model.weights[l].transpose())?;
        }
    }
    Ok(Gradients {
        d_weights: d_weights.into_iter().map(Option::unwrap).collect(),
        d_biases: d_biases.into_iter().map(Option::unwrap).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single_neuron(w: [f64; 2], b: f64, out: Activation) -> MlpModel {
        MlpModel::from_parts(
            vec![2, 1],
            vec![Matrix::from_rows(&[[w[0]], [w[1]]]).unwrap()],
            vec![Matrix::new(1, 1, vec![b]).unwrap()],
            Activation::Relu,
            out,
        )
        .unwrap()
    }

    #[test]
    fn relu_branches() {
        assert_eq!(relu(3.5), 3.5);
        assert_eq!(relu(-2.0), 0.0);
        assert_eq!(relu(0.0), 0.0);
        assert_eq!(relu_grad(5.0), 1.0);
        assert_eq!(relu_grad(-5.0), 0.0);
        assert_eq!(relu_grad(0.0), 0.0);
    }

    #[test]
    fn single_neuron_forward() {
        let x = Matrix::from_rows(&[[3.0, 4.0]]).unwrap();
        let out = mlp_predict(&single_neuron([1.0, 2.0], 0.0, Activation::Relu), &x).unwrap();
        assert_eq!(out.data(), &[11.0]);
        let out = mlp_predict(&single_neuron([1.0, 2.0], -12.0, Activation::Relu), &x).unwrap();
        assert_eq!(out.data(), &[0.0]);
    }

    #[test]
    fn zero_model_outputs_zero() {
        let model = MlpModel::from_parts(
            vec![3, 4, 1],
            vec![Matrix::zeros(3, 4), Matrix::zeros(4, 1)],
            vec![Matrix::zeros(1, 4), Matrix::zeros(1, 1)],
            Activation::Relu,
            Activation::Linear,
        )
        .unwrap();
        let x = Matrix::from_rows(&[[1.0, -7.0, 2.5], [100.0, 3.0, -1.0]]).unwrap();
        assert_eq!(mlp_predict(&model, &x).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn forward_shape_error() {
        let model = single_neuron([1.0, 2.0], 0.0, Activation::Linear);
        let x = Matrix::zeros(2, 3);
        assert!(matches!(mlp_forward(&model, &x), Err(Error::Shape { .. })));
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = init_mlp(&[3, 500, 1], Activation::Linear, &mut RngState::new(42)).unwrap();
        let b = init_mlp(&[3, 500, 1], Activation::Linear, &mut RngState::new(42)).unwrap();
        assert_eq!(a, b);
        assert!(a
            .biases()
            .iter()
            .all(|b| b.data().iter().all(|&v| v == 0.0)));
        assert_eq!(a.weights()[0].shape(), (3, 500));
        assert_eq!(a.weights()[1].shape(), (500, 1));
    }

    #[test]
    fn init_rejects_bad_sizes() {
        let mut rng = RngState::new(0);
        assert!(matches!(
            init_mlp(&[3], Activation::Linear, &mut rng),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            init_mlp(&[3, 0, 1], Activation::Linear, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn he_init_spread() {
        let model = init_mlp(&[500, 500, 1], Activation::Linear, &mut RngState::new(3)).unwrap();
        let w = model.weights()[0].data();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let expected = (2.0f64 / 500.0).sqrt();
        assert!((std - expected).abs() / expected < 0.1, "std {std}");
    }

    #[test]
    fn mse_examples() {
        let col = |v: &[f64]| Matrix::column(v).unwrap();
        assert_eq!(mse_loss(&col(&[1.0, 2.0]), &col(&[1.0, 2.0])).unwrap(), 0.0);
        let l = mse_loss(&col(&[2.0, 2.0, 2.0]), &col(&[1.0, 2.0, 3.0])).unwrap();
        assert!((l - 2.0 / 3.0).abs() < 1e-15);
        let l = mse_loss(&col(&[1.0, 2.0, 4.0]), &col(&[1.0, 2.0, 3.0])).unwrap();
        assert!((l - 1.0 / 3.0).abs() < 1e-15);
        assert!(mse_loss(&col(&[1.0]), &col(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn backward_linear_scalar_by_hand() {
        // y = w x, x = 2, target 0, w = 1: dL/dw = 2 (w x - t) x = 8.
        let model = MlpModel::from_parts(
            vec![1, 1],
            vec![Matrix::new(1, 1, vec![1.0]).unwrap()],
            vec![Matrix::zeros(1, 1)],
            Activation::Relu,
            Activation::Linear,
        )
        .unwrap();
        let x = Matrix::new(1, 1, vec![2.0]).unwrap();
        let trace = mlp_forward(&model, &x).unwrap();
        let g = mlp_backward(&model, &trace, &Matrix::zeros(1, 1)).unwrap();
        assert_eq!(g.d_weights[0].data(), &[8.0]);
        assert_eq!(g.d_biases[0].data(), &[4.0]);
    }

    #[test]
    fn backward_zero_residual_gives_zero_gradients() {
        let model = init_mlp(&[3, 6, 1], Activation::Linear, &mut RngState::new(5)).unwrap();
        let x = RngState::new(6).standard_normal_matrix(4, 3);
        let trace = mlp_forward(&model, &x).unwrap();
        let target = trace.output().clone();
        let g = mlp_backward(&model, &trace, &target).unwrap();
        for m in g.as_list() {
            assert!(m.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let a = init_mlp(&[3, 6, 1], Activation::Linear, &mut RngState::new(5)).unwrap();
        let b = init_mlp(&[3, 4, 4, 1], Activation::Linear, &mut RngState::new(5)).unwrap();
        let x = Matrix::zeros(2, 3);
        let trace = mlp_forward(&b, &x).unwrap();
        assert!(matches!(
            mlp_backward(&a, &trace, &Matrix::zeros(2, 1)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn predict_matches_trace_and_batches() {
        let model = init_mlp(&[3, 8, 1], Activation::Linear, &mut RngState::new(11)).unwrap();
        let x = RngState::new(12).standard_normal_matrix(5, 3);
        let trace = mlp_forward(&model, &x).unwrap();
        let pred = mlp_predict(&model, &x).unwrap();
        assert_eq!(&pred, trace.output());
        assert_eq!(pred.shape(), (5, 1));
        for i in 0..5 {
            let row = x.select_rows(&[i]).unwrap();
            let single = mlp_predict(&model, &row).unwrap();
            assert_eq!(single.data()[0].to_bits(), pred.data()[i].to_bits());
        }
        let perm = [3, 0, 4, 1, 2];
        let permuted = mlp_predict(&model, &x.select_rows(&perm).unwrap()).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(permuted.data()[k].to_bits(), pred.data()[i].to_bits());
        }
    }

    #[test]
    fn positive_homogeneity_of_hidden_layer() {
        let mut rng = RngState::new(77);
        for _ in 0..20 {
            let mut model = init_mlp(&[4, 7, 1], Activation::Linear, &mut rng).unwrap();
            model
                .set_biases(0, rng.standard_normal_matrix(1, 7).scale(0.3))
                .unwrap();
            let x = rng.standard_normal_matrix(6, 4);
            let before = mlp_predict(&model, &x).unwrap();
            let alpha = rng.uniform_range(0.1, 10.0);
            let w0 = model.weights()[0].scale(alpha);
            let b0 = model.biases()[0].scale(alpha);
            let w1 = model.weights()[1].scale(1.0 / alpha);
            model.set_weights(0, w0).unwrap();
            model.set_biases(0, b0).unwrap();
            model.set_weights(1, w1).unwrap();
            let after = mlp_predict(&model, &x).unwrap();
            for (a, b) in before.data().iter().zip(after.data()) {
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-12), "{a} vs {b}");
            }
        }
    }

    proptest! {
        #[test]
        fn mse_nonnegative_and_zero_iff_equal(
            pred in proptest::collection::vec(-100.0f64..100.0, 1..20),
            shift in proptest::collection::vec(-1.0f64..1.0, 20),
        ) {
            let p = Matrix::column(&pred).unwrap();
            prop_assert_eq!(mse_loss(&p, &p).unwrap(), 0.0);
            let t: Vec<f64> = pred.iter().zip(&shift).map(|(a, s)| a + s).collect();
            let t = Matrix::column(&t).unwrap();
            let loss = mse_loss(&p, &t).unwrap();
            prop_assert!(loss >= 0.0);
            prop_assert_eq!(loss == 0.0, p == t);
        }
    }
}
