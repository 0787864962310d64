//! Small differentiable models with closed-form gradients.
//!
//! The communication schemes treat the model as an opaque parameter vector,
//! so a handful of desk-scale models is enough to drive full training runs:
//! linear regression, binary logistic regression (soft labels allowed), and
//! a one-hidden-layer tanh MLP.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vector::DenseVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    LinearRegression,
    LogisticRegression,
    Mlp1Hidden,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::LinearRegression => "linear-regression",
            ModelKind::LogisticRegression => "logistic-regression",
            ModelKind::Mlp1Hidden => "mlp-1hidden",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-regression" => Ok(ModelKind::LinearRegression),
            "logistic-regression" => Ok(ModelKind::LogisticRegression),
            "mlp-1hidden" => Ok(ModelKind::Mlp1Hidden),
            other => Err(Error::invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Shape metadata; `hidden_dim` is only meaningful for the MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

impl ModelShape {
    pub fn vector(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim: 0,
            output_dim: 1,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            output_dim: 1,
        }
    }
}

pub fn param_count(kind: ModelKind, shape: ModelShape) -> usize {
    match kind {
        ModelKind::LinearRegression | ModelKind::LogisticRegression => shape.input_dim,
        // W1 (h x d), b1 (h), w2 (h), b2 (1)
        ModelKind::Mlp1Hidden => shape.hidden_dim * shape.input_dim + 2 * shape.hidden_dim + 1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<F> {
    kind: ModelKind,
    shape: ModelShape,
    params: DenseVector<F>,
    weight_decay: F,
}

impl<F: Scalar> Model<F> {
    pub fn new(
        kind: ModelKind,
        shape: ModelShape,
        params: DenseVector<F>,
        weight_decay: F,
    ) -> Result<Self> {
        let expected = param_count(kind, shape);
        if params.dim() != expected {
            return Err(Error::invalid(format!(
                "param count {} does not match shape (expected {expected})",
                params.dim()
            )));
        }
        Ok(Self {
            kind,
            shape,
            params,
            weight_decay,
        })
    }

    pub fn zeros(kind: ModelKind, shape: ModelShape, weight_decay: F) -> Self {
        Self {
            kind,
            shape,
            params: DenseVector::zeros(param_count(kind, shape)),
            weight_decay,
        }
    }

    /// Seeded uniform init in +-1/sqrt(fan_in); required for the MLP, harmless
    /// for the convex models.
    pub fn seeded_init(kind: ModelKind, shape: ModelShape, weight_decay: F, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = param_count(kind, shape);
        let bound = 1.0 / (shape.input_dim.max(1) as f64).sqrt();
        let data = (0..n)
            .map(|_| F::from_config(rng.random_range(-bound..bound)))
            .collect();
        Self {
            kind,
            shape,
            params: DenseVector::from_vec(data),
            weight_decay,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn params(&self) -> &DenseVector<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut DenseVector<F> {
        &mut self.params
    }

    pub fn weight_decay(&self) -> F {
        self.weight_decay
    }

    fn check_batch(&self, data: &Dataset<F>, batch: &[usize]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        if data.input_dim() != self.shape.input_dim {
            return Err(Error::invalid(format!(
                "dataset input dim {} does not match model input dim {}",
                data.input_dim(),
                self.shape.input_dim
            )));
        }
        if let Some(&i) = batch.iter().find(|&&i| i >= data.len()) {
            return Err(Error::invalid(format!("batch index {i} out of range")));
        }
        Ok(())
    }

    /// Mean loss over `batch`, including the L2 penalty matching the
    /// weight-decay term added to the gradient.
    pub fn loss(&self, data: &Dataset<F>, batch: &[usize]) -> Result<F> {
        self.check_batch(data, batch)?;
        let n = F::from_config(batch.len() as f64);
        let data_loss = match self.kind {
            ModelKind::LinearRegression => {
                let mut acc = F::zero();
                for &i in batch {
                    let r = dot(data.row(i), self.params.as_slice()) - data.target(i);
                    acc += r * r;
                }
                acc / n
            }
            ModelKind::LogisticRegression => {
                let mut acc = F::zero();
                for &i in batch {
                    let z = dot(data.row(i), self.params.as_slice());
                    let y = data.target(i);
                    // ln(1+e^z) - y*z, evaluated stably for either sign of z
                    let softplus = if z > F::zero() {
                        z + (-z).exp().ln_1p()
                    } else {
                        z.exp().ln_1p()
                    };
                    acc += softplus - y * z;
                }
                acc / n
            }
            ModelKind::Mlp1Hidden => {
                let mut acc = F::zero();
                for &i in batch {
                    let (pred, _) = self.mlp_forward(data.row(i));
                    let r = pred - data.target(i);
                    acc += r * r;
                }
                acc / n
            }
        };
        let half = F::from_config(0.5);
        let penalty = half * self.weight_decay * self.params.dot(&self.params)?;
        Ok(data_loss + penalty)
    }

    /// Mean data loss only (no regularization penalty); used for reporting.
    pub fn data_loss(&self, data: &Dataset<F>, batch: &[usize]) -> Result<F> {
        let full = self.loss(data, batch)?;
        let half = F::from_config(0.5);
        Ok(full - half * self.weight_decay * self.params.dot(&self.params)?)
    }

    /// Gradient of `loss` over `batch`, weight decay included as an additive
    /// `lambda * theta` term.
    pub fn gradient(&self, data: &Dataset<F>, batch: &[usize]) -> Result<DenseVector<F>> {
        self.check_batch(data, batch)?;
        let mut grad = vec![F::zero(); self.dim()];
        let n = F::from_config(batch.len() as f64);
        match self.kind {
            ModelKind::LinearRegression => {
                let two = F::from_config(2.0);
                for &i in batch {
                    let x = data.row(i);
                    let r = two * (dot(x, self.params.as_slice()) - data.target(i)) / n;
                    for (g, &xi) in grad.iter_mut().zip(x) {
                        *g += r * xi;
                    }
                }
            }
            ModelKind::LogisticRegression => {
                for &i in batch {
                    let x = data.row(i);
                    let z = dot(x, self.params.as_slice());
                    let sigma = F::one() / (F::one() + (-z).exp());
                    let r = (sigma - data.target(i)) / n;
                    for (g, &xi) in grad.iter_mut().zip(x) {
                        *g += r * xi;
                    }
                }
            }
            ModelKind::Mlp1Hidden => {
                let h = self.shape.hidden_dim;
                let d = self.shape.input_dim;
                let two = F::from_config(2.0);
                let w2 = &self.params.as_slice()[h * d + h..h * d + 2 * h];
                for &i in batch {
                    let x = data.row(i);
                    let (pred, hidden) = self.mlp_forward(x);
                    let r = two * (pred - data.target(i)) / n;
                    let (gw1, grest) = grad.split_at_mut(h * d);
                    let (gb1, grest) = grest.split_at_mut(h);
                    let (gw2, gb2) = grest.split_at_mut(h);
                    for j in 0..h {
                        gw2[j] += r * hidden[j];
                        // d tanh(z)/dz = 1 - tanh(z)^2
                        let dz = r * w2[j] * (F::one() - hidden[j] * hidden[j]);
                        gb1[j] += dz;
                        for (g, &xi) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                            *g += dz * xi;
                        }
                    }
                    gb2[0] += r;
                }
            }
        }
        for (g, p) in grad.iter_mut().zip(self.params.iter()) {
            *g += self.weight_decay * *p;
        }
        Ok(DenseVector::from_vec(grad))
    }

    fn mlp_forward(&self, x: &[F]) -> (F, Vec<F>) {
        let h = self.shape.hidden_dim;
        let d = self.shape.input_dim;
        let (w1, rest) = self.params.as_slice().split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let hidden: Vec<F> = (0..h)
            .map(|j| (dot(&w1[j * d..(j + 1) * d], x) + b1[j]).tanh())
            .collect();
        let pred = dot(w2, &hidden) + b2[0];
        (pred, hidden)
    }
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}
