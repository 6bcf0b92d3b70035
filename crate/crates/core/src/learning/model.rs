use rand::Rng;
use rand_distr::StandardNormal;

use super::data::Dataset;
use crate::error::{Error, Result};

/// Predictor architecture: softmax regression when `hidden == 0`, otherwise
/// one tanh hidden layer followed by softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub inputs: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl ModelShape {
    pub fn num_params(&self) -> usize {
        if self.hidden == 0 {
            self.classes * self.inputs + self.classes
        } else {
            self.hidden * self.inputs + self.hidden + self.classes * self.hidden + self.classes
        }
    }
}

/// Flat parameter vector. Layout: `[W (classes x inputs), b]` or
/// `[W1 (hidden x inputs), b1, W2 (classes x hidden), b2]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub shape: ModelShape,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(shape: ModelShape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.num_params()],
        }
    }

    /// Gaussian weights (std 0.01 for softmax regression, 1/sqrt(fan_in)
    /// for the hidden layer), zero biases.
    pub fn init<R: Rng + ?Sized>(shape: ModelShape, rng: &mut R) -> Self {
        let mut m = Self::zeros(shape);
        let s = shape;
        let mut fill = |range: std::ops::Range<usize>, std: f64, v: &mut [f64]| {
            for x in &mut v[range] {
                *x = std * rng.sample::<f64, _>(StandardNormal);
            }
        };
        if s.hidden == 0 {
            fill(0..s.classes * s.inputs, 0.01, &mut m.values);
        } else {
            let w1 = s.hidden * s.inputs;
            fill(0..w1, 1.0 / (s.inputs as f64).sqrt(), &mut m.values);
            let w2 = w1 + s.hidden;
            fill(w2..w2 + s.classes * s.hidden, 1.0 / (s.hidden as f64).sqrt(), &mut m.values);
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn distance(&self, other: &ModelParams) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.dim() != self.shape.inputs || data.num_classes() != self.shape.classes {
            return Err(Error::Shape(format!(
                "model expects {} inputs / {} classes, dataset has {} / {}",
                self.shape.inputs,
                self.shape.classes,
                data.dim(),
                data.num_classes()
            )));
        }
        Ok(())
    }

    /// Class scores for one sample. `hidden` receives the tanh activations
    /// when the model has a hidden layer.
    pub(crate) fn logits(&self, x: &[f64], hidden: &mut Vec<f64>, out: &mut Vec<f64>) {
        let s = self.shape;
        let v = &self.values;
        out.clear();
        hidden.clear();
        if s.hidden == 0 {
            let bias = s.classes * s.inputs;
            for c in 0..s.classes {
                let w = &v[c * s.inputs..(c + 1) * s.inputs];
                out.push(v[bias + c] + dot(w, x));
            }
        } else {
            let b1 = s.hidden * s.inputs;
            for j in 0..s.hidden {
                let w = &v[j * s.inputs..(j + 1) * s.inputs];
                hidden.push((v[b1 + j] + dot(w, x)).tanh());
            }
            let w2 = b1 + s.hidden;
            let b2 = w2 + s.classes * s.hidden;
            for c in 0..s.classes {
                let w = &v[w2 + c * s.hidden..w2 + (c + 1) * s.hidden];
                out.push(v[b2 + c] + dot(w, hidden));
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let (mut h, mut z) = (Vec::new(), Vec::new());
        self.logits(x, &mut h, &mut z);
        argmax(&z)
    }

    /// Adds the gradient of the cross-entropy of one sample, scaled by
    /// `scale`, into `grad`. Returns the sample's loss.
    pub(crate) fn accumulate_grad(&self, x: &[f64], y: usize, scale: f64, grad: &mut [f64], hidden: &mut Vec<f64>, z: &mut Vec<f64>) -> f64 {
        self.logits(x, hidden, z);
        let loss = softmax_in_place(z, y);
        // z now holds softmax - onehot
        let s = self.shape;
        if s.hidden == 0 {
            let bias = s.classes * s.inputs;
            for c in 0..s.classes {
                let g = scale * z[c];
                for (gw, xi) in grad[c * s.inputs..(c + 1) * s.inputs].iter_mut().zip(x) {
                    *gw += g * xi;
                }
                grad[bias + c] += g;
            }
        } else {
            let v = &self.values;
            let b1 = s.hidden * s.inputs;
            let w2 = b1 + s.hidden;
            let b2 = w2 + s.classes * s.hidden;
            let mut dh = vec![0.0; s.hidden];
            for c in 0..s.classes {
                let g = scale * z[c];
                for j in 0..s.hidden {
                    grad[w2 + c * s.hidden + j] += g * hidden[j];
                    dh[j] += g * v[w2 + c * s.hidden + j];
                }
                grad[b2 + c] += g;
            }
            for j in 0..s.hidden {
                let da = dh[j] * (1.0 - hidden[j] * hidden[j]);
                for (gw, xi) in grad[j * s.inputs..(j + 1) * s.inputs].iter_mut().zip(x) {
                    *gw += da * xi;
                }
                grad[b1 + j] += da;
            }
        }
        loss
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// First index of the maximum.
fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Replaces logits with softmax minus the one-hot target; returns -log p_y.
fn softmax_in_place(z: &mut [f64], y: usize) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    let loss = -(z[y] / sum).ln();
    for v in z.iter_mut() {
        *v /= sum;
    }
    z[y] -= 1.0;
    loss
}

/// Fraction of validation samples whose argmax prediction is correct.
pub fn validation_accuracy(model: &ModelParams, val: &Dataset) -> Result<f64> {
    model.check_data(val)?;
    let (mut h, mut z) = (Vec::new(), Vec::new());
    let correct = (0..val.len())
        .filter(|&i| {
            model.logits(val.sample(i), &mut h, &mut z);
            argmax(&z) == val.label(i)
        })
        .count();
    Ok(correct as f64 / val.len() as f64)
}
