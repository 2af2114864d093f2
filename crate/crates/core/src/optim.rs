//! Adam and plain gradient descent.
//!
//! Parameters are handled as an ordered list of matrices, matching
//! [`MlpModel::params`](crate::network::MlpModel::params). Step functions
//! validate every input before touching any parameter, so a failed step
//! leaves both the parameters and the optimizer state untouched.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::network::{Gradients, MlpModel};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            eta: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn with_eta(eta: f64) -> Self {
        AdamHyper {
            eta,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if !in_unit(self.beta1) {
            return Err(Error::Config(format!(
                "beta1 must be in [0, 1), got {}",
                self.beta1
            )));
        }
        if !in_unit(self.beta2) {
            return Err(Error::Config(format!(
                "beta2 must be in [0, 1), got {}",
                self.beta2
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// First/second moment accumulators and the completed step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
}

impl AdamState {
    /// Rebuilds a state from stored moments, e.g. from a checkpoint.
    pub fn from_parts(m: Vec<Matrix>, v: Vec<Matrix>, t: u64) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::shape(
                "AdamState",
                format!("{} first moments", m.len()),
                format!("{} second moments", v.len()),
            ));
        }
        for (a, b) in m.iter().zip(&v) {
            if a.shape() != b.shape() {
                return Err(Error::shape("AdamState", a.shape_str(), b.shape_str()));
            }
            if b.data().iter().any(|&x| x < 0.0) {
                return Err(Error::Numeric("negative second moment".into()));
            }
        }
        Ok(AdamState { m, v, t })
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.m.iter().map(Matrix::shape).collect()
    }
}

pub fn adam_init(hyper: &AdamHyper, param_shapes: &[(usize, usize)]) -> Result<AdamState> {
    hyper.validate()?;
    if param_shapes.is_empty() {
        return Err(Error::Config(
            "Adam needs at least one parameter tensor".into(),
        ));
    }
    if let Some(&(r, c)) = param_shapes.iter().find(|&&(r, c)| r == 0 || c == 0) {
        return Err(Error::Config(format!("invalid parameter shape {r}x{c}")));
    }
    let zeros = || {
        param_shapes
            .iter()
            .map(|&(r, c)| Matrix::zeros(r, c))
            .collect()
    };
    Ok(AdamState {
        m: zeros(),
        v: zeros(),
        t: 0,
    })
}

fn check_congruent(op: &'static str, params: &[&mut Matrix], grads: &[&Matrix]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(
            op,
            format!("{} parameter tensors", params.len()),
            format!("{} gradient tensors", grads.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::shape(
                op,
                format!("param {i} {}", p.shape_str()),
                format!("grad {i} {}", g.shape_str()),
            ));
        }
        if !g.is_finite() {
            return Err(Error::Numeric(format!(
                "{op}: gradient tensor {i} is not finite"
            )));
        }
    }
    Ok(())
}

/// One Adam update, in place.
///
/// Per element, with `t` the step count after increment:
/// `m = β1 m + (1-β1) g`, `v = β2 v + (1-β2) g²`,
/// `m̂ = m / (1-β1^t)`, `v̂ = v / (1-β2^t)`,
/// `θ = θ - η m̂ / (√v̂ + ε)`.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [&mut Matrix],
    grads: &[&Matrix],
    hyper: &AdamHyper,
) -> Result<()> {
    check_congruent("adam_step", params, grads)?;
    if state.m.len() != params.len() {
        return Err(Error::shape(
            "adam_step",
            format!("state for {} tensors", state.m.len()),
            format!("{} parameter tensors", params.len()),
        ));
    }
    for (i, (m, p)) in state.m.iter().zip(params.iter()).enumerate() {
        if m.shape() != p.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("state {i} {}", m.shape_str()),
                format!("param {i} {}", p.shape_str()),
            ));
        }
    }

    let t = state.t + 1;
    // libm keeps the correction factors identical across platforms.
    let c1 = 1.0 - libm::pow(hyper.beta1, t as f64);
    let c2 = 1.0 - libm::pow(hyper.beta2, t as f64);
    let (b1, b2) = (hyper.beta1, hyper.beta2);

    // Compute into scratch first so that a non-finite result leaves everything untouched.
    let mut new_m = state.m.clone();
    let mut new_v = state.v.clone();
    let mut new_p: Vec<Vec<f64>> = Vec::with_capacity(params.len());
    for (i, g) in grads.iter().enumerate() {
        let m = new_m[i].data_mut();
        let v = new_v[i].data_mut();
        let mut theta = params[i].data().to_vec();
        for (j, &gj) in g.data().iter().enumerate() {
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            theta[j] -= hyper.eta * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "adam_step: update of parameter tensor {i} is not finite"
            )));
        }
        new_p.push(theta);
    }
    for (p, theta) in params.iter_mut().zip(new_p) {
        p.data_mut().copy_from_slice(&theta);
    }
    state.m = new_m;
    state.v = new_v;
    state.t = t;
    Ok(())
}

/// `θ = θ - η g`, in place.
pub fn sgd_step(params: &mut [&mut Matrix], grads: &[&Matrix], eta: f64) -> Result<()> {
    check_congruent("sgd_step", params, grads)?;
    let mut updated = Vec::with_capacity(params.len());
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        let theta: Vec<f64> = p
            .data()
            .iter()
            .zip(g.data())
            .map(|(&th, &gj)| th - eta * gj)
            .collect();
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "sgd_step: update of parameter tensor {i} is not finite"
            )));
        }
        updated.push(theta);
    }
    for (p, theta) in params.iter_mut().zip(updated) {
        p.data_mut().copy_from_slice(&theta);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Config(format!(
                "unknown optimizer '{other}' (expected adam or sgd)"
            ))),
        }
    }
}

/// An optimizer bound to one model's parameter layout.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam { hyper: AdamHyper, state: AdamState },
    Sgd { eta: f64 },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, hyper: AdamHyper, model: &MlpModel) -> Result<Self> {
        match kind {
            OptimizerKind::Adam => Ok(Optimizer::Adam {
                hyper,
                state: adam_init(&hyper, &model.param_shapes())?,
            }),
            OptimizerKind::Sgd => {
                hyper.validate()?;
                Ok(Optimizer::Sgd { eta: hyper.eta })
            }
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            Optimizer::Adam { .. } => OptimizerKind::Adam,
            Optimizer::Sgd { .. } => OptimizerKind::Sgd,
        }
    }

    pub fn adam_state(&self) -> Option<&AdamState> {
        match self {
            Optimizer::Adam { state, .. } => Some(state),
            Optimizer::Sgd { .. } => None,
        }
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) -> Result<()> {
        let g = grads.as_list();
        let mut params = model.params_mut();
        match self {
            Optimizer::Adam { hyper, state } => adam_step(state, &mut params, &g, hyper),
            Optimizer::Sgd { eta } => sgd_step(&mut params, &g, *eta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> Matrix {
        Matrix::new(1, 1, vec![x]).unwrap()
    }

    fn step_scalar(state: &mut AdamState, theta: &mut Matrix, g: f64, hyper: &AdamHyper) {
        let g = scalar(g);
        adam_step(state, &mut [theta], &[&g], hyper).unwrap();
    }

    #[test]
    fn init_is_zero() {
        let h = AdamHyper::default();
        let s = adam_init(&h, &[(2, 3), (1, 3)]).unwrap();
        assert_eq!(s.t, 0);
        assert_eq!(s.m.len(), 2);
        assert_eq!(s.v.len(), 2);
        assert!(s
            .m
            .iter()
            .chain(&s.v)
            .all(|x| x.data().iter().all(|&v| v == 0.0)));
        assert_eq!(s, adam_init(&h, &[(2, 3), (1, 3)]).unwrap());
        assert!(matches!(adam_init(&h, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn hyper_validation() {
        assert!(AdamHyper::default().validate().is_ok());
        for bad in [
            AdamHyper {
                beta1: 1.0,
                ..Default::default()
            },
            AdamHyper {
                beta2: -0.1,
                ..Default::default()
            },
            AdamHyper {
                eta: 0.0,
                ..Default::default()
            },
            AdamHyper {
                epsilon: 0.0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn zero_gradient_first_step_is_identity() {
        let h = AdamHyper::default();
        let mut s = adam_init(&h, &[(1, 2)]).unwrap();
        let mut theta = Matrix::from_rows(&[[0.5, -3.0]]).unwrap();
        let before = theta.clone();
        let g = Matrix::zeros(1, 2);
        adam_step(&mut s, &mut [&mut theta], &[&g], &h).unwrap();
        assert_eq!(theta, before);
        assert!(s.m[0].data().iter().chain(s.v[0].data()).all(|&v| v == 0.0));
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_by_hand() {
        let h = AdamHyper::default();
        let mut s = adam_init(&h, &[(1, 1)]).unwrap();
        let mut theta = scalar(1.0);
        step_scalar(&mut s, &mut theta, 1.0, &h);
        assert!((s.m[0].data()[0] - 0.1).abs() < 1e-15);
        assert!((s.v[0].data()[0] - 0.001).abs() < 1e-15);
        let expected = 1.0 - 0.001 / (1.0 + 1e-8);
        assert!((theta.data()[0] - expected).abs() < 1e-12);
        assert!((theta.data()[0] - 0.999000000009999).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_bias_correction_identity() {
        let h = AdamHyper::default();
        for g in [1.0, -0.37, 250.0] {
            let mut s = adam_init(&h, &[(1, 1)]).unwrap();
            let mut theta = scalar(0.0);
            // Brute-force recurrence alongside the closed form.
            let (mut m, mut v) = (0.0f64, 0.0f64);
            for t in 1..=100u64 {
                let prev = theta.data()[0];
                step_scalar(&mut s, &mut theta, g, &h);
                m = h.beta1 * m + (1.0 - h.beta1) * g;
                v = h.beta2 * v + (1.0 - h.beta2) * g * g;
                let closed_m = (1.0 - h.beta1.powi(t as i32)) * g;
                let closed_v = (1.0 - h.beta2.powi(t as i32)) * g * g;
                assert!((m - closed_m).abs() <= 1e-12 * closed_m.abs());
                assert!((v - closed_v).abs() <= 1e-12 * closed_v.abs());
                let m_hat = s.m[0].data()[0] / (1.0 - h.beta1.powi(t as i32));
                let v_hat = s.v[0].data()[0] / (1.0 - h.beta2.powi(t as i32));
                assert!((m_hat - g).abs() <= 1e-12 * g.abs(), "t={t} m_hat={m_hat}");
                assert!(
                    (v_hat - g * g).abs() <= 1e-12 * g * g,
                    "t={t} v_hat={v_hat}"
                );
                let update = (prev - theta.data()[0]).abs();
                let expected = h.eta * g.abs() / (g.abs() + h.epsilon);
                assert!((update - expected).abs() <= 1e-9 * expected);
            }
            assert_eq!(s.t, 100);
        }
    }

    #[test]
    fn update_magnitude_bounds() {
        let h = AdamHyper::default();
        for g in [1e-4, -1e-3, 0.5, 7.0, -1e6] {
            let mut s = adam_init(&h, &[(1, 1)]).unwrap();
            let mut theta = scalar(0.0);
            for _ in 0..20 {
                let prev = theta.data()[0];
                step_scalar(&mut s, &mut theta, g, &h);
                let d = (theta.data()[0] - prev).abs();
                assert!(
                    d >= 0.999 * h.eta && d <= h.eta * (1.0 + 1e-12),
                    "g={g} d={d}"
                );
            }
        }
    }

    #[test]
    fn converges_on_quadratic() {
        let h = AdamHyper::with_eta(0.05);
        let dim = 10;
        let init: Vec<f64> = (0..dim)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let norm = init.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut theta = Matrix::new(1, dim, init.iter().map(|x| x / norm).collect()).unwrap();
        let mut s = adam_init(&h, &[(1, dim)]).unwrap();
        let mut reached = None;
        for step in 1..=2000 {
            let g = theta.clone();
            adam_step(&mut s, &mut [&mut theta], &[&g], &h).unwrap();
            let n = theta.data().iter().map(|x| x * x).sum::<f64>().sqrt();
            if n < 1e-3 {
                reached = Some(step);
                break;
            }
        }
        assert!(reached.is_some());
    }

    #[test]
    fn non_finite_gradient_is_rejected_untouched() {
        let h = AdamHyper::default();
        let mut s = adam_init(&h, &[(1, 1), (1, 2)]).unwrap();
        let mut a = scalar(1.0);
        let mut b = Matrix::zeros(1, 2);
        let ga = scalar(1.0);
        // Matrix::new refuses NaN, so a NaN gradient can only come from a raw buffer.
        let mut gb = Matrix::zeros(1, 2);
        gb.data_mut()[1] = f64::NAN;
        let err = adam_step(&mut s, &mut [&mut a, &mut b], &[&ga, &gb], &h).unwrap_err();
        assert!(err.to_string().contains("tensor 1"), "{err}");
        assert_eq!(s.t, 0);
        assert_eq!(a.data(), &[1.0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let h = AdamHyper::default();
        let mut s = adam_init(&h, &[(1, 1)]).unwrap();
        let mut a = Matrix::zeros(1, 2);
        let g = Matrix::zeros(1, 2);
        assert!(matches!(
            adam_step(&mut s, &mut [&mut a], &[&g], &h),
            Err(Error::Shape { .. })
        ));
        let g1 = scalar(0.0);
        assert!(matches!(
            sgd_step(&mut [&mut a], &[&g1], 0.1),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn sgd_examples() {
        let mut theta = scalar(1.0);
        sgd_step(&mut [&mut theta], &[&scalar(0.0)], 0.1).unwrap();
        assert_eq!(theta.data(), &[1.0]);
        sgd_step(&mut [&mut theta], &[&scalar(2.0)], 0.1).unwrap();
        assert!((theta.data()[0] - 0.8).abs() < 1e-15);

        let mut twice = scalar(3.0);
        let mut once = scalar(3.0);
        let g = scalar(0.25);
        sgd_step(&mut [&mut twice], &[&g], 0.5).unwrap();
        sgd_step(&mut [&mut twice], &[&g], 0.5).unwrap();
        sgd_step(&mut [&mut once], &[&g], 1.0).unwrap();
        assert_eq!(twice, once);
    }
}
