use rand::seq::SliceRandom;
use rand::Rng;

use super::data::Dataset;
use super::model::ModelParams;
use crate::error::{Error, Result};
use crate::world::TrainingConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    /// Proximal coefficient mu.
    pub prox_mu: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl From<&TrainingConfig> for TrainOptions {
    fn from(c: &TrainingConfig) -> Self {
        Self {
            prox_mu: c.prox_mu,
            learning_rate: c.learning_rate,
            momentum: c.momentum,
            batch_size: c.batch_size,
            epochs: c.epochs,
        }
    }
}

/// Mean cross-entropy over `idx` plus (mu/2)||w - w_global||^2, and its
/// gradient.
fn batch_objective(
    model: &ModelParams,
    data: &Dataset,
    idx: &[usize],
    prox: Option<(f64, &ModelParams)>,
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 1.0 / idx.len() as f64;
    let (mut h, mut z) = (Vec::new(), Vec::new());
    let mut loss = 0.0;
    for &i in idx {
        loss += model.accumulate_grad(data.sample(i), data.label(i), scale, grad, &mut h, &mut z);
    }
    loss *= scale;
    if let Some((mu, global)) = prox {
        let mut sq = 0.0;
        for ((g, w), w0) in grad.iter_mut().zip(&model.values).zip(&global.values) {
            let d = w - w0;
            *g += mu * d;
            sq += d * d;
        }
        loss += 0.5 * mu * sq;
    }
    loss
}

/// Full-batch local objective (cross-entropy plus proximal term) and its
/// analytic gradient.
pub fn local_objective(model: &ModelParams, global: &ModelParams, data: &Dataset, mu: f64) -> Result<(f64, Vec<f64>)> {
    model.check_data(data)?;
    if model.shape != global.shape {
        return Err(Error::Shape("local and global models differ in shape".into()));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; model.values.len()];
    let loss = batch_objective(model, data, &idx, Some((mu, global)), &mut grad);
    Ok((loss, grad))
}

fn run_sgd<R: Rng + ?Sized>(
    start: &ModelParams,
    prox: Option<(f64, &ModelParams)>,
    data: &Dataset,
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<ModelParams> {
    start.check_data(data)?;
    if opts.batch_size == 0 {
        return Err(Error::Shape("batch size must be >= 1".into()));
    }
    let mut model = start.clone();
    let mut velocity = vec![0.0; model.values.len()];
    let mut grad = vec![0.0; model.values.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut first = true;
    for epoch in 0..opts.epochs {
        order.shuffle(rng);
        for batch in order.chunks(opts.batch_size) {
            let loss = batch_objective(&model, data, batch, prox, &mut grad);
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss {loss} in epoch {epoch}"
                )));
            }
            // heavy-ball momentum; the buffer starts at the first gradient
            for ((v, g), w) in velocity.iter_mut().zip(&grad).zip(model.values.iter_mut()) {
                *v = if first { *g } else { opts.momentum * *v + g };
                *w -= opts.learning_rate * *v;
            }
            first = false;
        }
    }
    if !model.is_finite() {
        return Err(Error::Divergence("parameters became non-finite".into()));
    }
    Ok(model)
}

/// Plain mini-batch SGD with momentum on the mean cross-entropy.
pub fn sgd_momentum<R: Rng + ?Sized>(model: &ModelParams, data: &Dataset, opts: &TrainOptions, rng: &mut R) -> Result<ModelParams> {
    run_sgd(model, None, data, opts, rng)
}

/// FedProx local update: SGD with momentum on the local loss plus
/// (mu/2)||w - w_global||^2, starting from `model`.
pub fn local_train_fedprox<R: Rng + ?Sized>(
    model: &ModelParams,
    global: &ModelParams,
    data: &Dataset,
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<ModelParams> {
    if model.shape != global.shape {
        return Err(Error::Shape("local and global models differ in shape".into()));
    }
    if !(opts.prox_mu >= 0.0) {
        return Err(Error::Shape(format!("proximal coefficient {} < 0", opts.prox_mu)));
    }
    let prox = (opts.prox_mu > 0.0).then_some((opts.prox_mu, global));
    run_sgd(model, prox, data, opts, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub device: usize,
    pub params: ModelParams,
    /// Validation accuracy of the broadcast model on the device.
    pub accuracy: f64,
}

/// Weighted average of the received models; weights are renormalised over
/// the updates present (uniform if they sum to zero).
pub fn aggregate(updates: &[LocalUpdate], weights: &[f64]) -> Result<ModelParams> {
    let first = updates.first().ok_or(Error::EmptyAggregation)?;
    if weights.len() != updates.len() {
        return Err(Error::Shape(format!(
            "{} weights for {} updates",
            weights.len(),
            updates.len()
        )));
    }
    if updates.iter().any(|u| u.params.shape != first.params.shape) {
        return Err(Error::Shape("updates differ in model shape".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Shape("aggregation weights must be finite and >= 0".into()));
    }
    let total: f64 = weights.iter().sum();
    let norm: Vec<f64> = if total > 0.0 {
        weights.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / updates.len() as f64; updates.len()]
    };
    let mut out = ModelParams::zeros(first.params.shape);
    for (u, w) in updates.iter().zip(&norm) {
        for (o, v) in out.values.iter_mut().zip(&u.params.values) {
            *o += w * v;
        }
    }
    Ok(out)
}
