use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::autodiff::{Model, ParamGrads};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub seed: u64,
}

fn default_momentum() -> f64 {
    0.9
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            learning_rate: 0.01,
            batch_size: 32,
            momentum: 0.9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean cross-entropy seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch SGD with momentum on softmax cross-entropy.
pub fn train_sgd(model: &Model, dataset: &Dataset, config: &TrainConfig) -> Result<(Model, TrainReport)> {
    if model.classes() != dataset.classes() {
        return Err(Error::config(format!(
            "model has {} outputs but dataset has {} classes",
            model.classes(),
            dataset.classes()
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut grads = ParamGrads::zeros_like(&model);
    let mut velocity: Vec<Tensor> = model.params().map(|p| Tensor::zeros(p.shape())).collect();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            for &i in batch {
                let (logits, tape) = model.forward(&dataset.image(i))?;
                let (loss, dlogits) = cross_entropy(&logits, dataset.label(i));
                total += loss;
                model.backward_with_params(&tape, dlogits, &mut grads)?;
            }
            let scale = 1.0 / batch.len() as f64;
            for ((p, v), g) in model.params_mut().zip(&mut velocity).zip(grads.tensors()) {
                for ((pi, vi), gi) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                    *vi = config.momentum * *vi + gi * scale;
                    *pi -= config.learning_rate * *vi;
                }
            }
        }
        let mean = total / dataset.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Training { epoch, loss: mean });
        }
        epoch_losses.push(mean);
    }
    Ok((model, TrainReport { epoch_losses }))
}

/// Loss and its gradient with respect to the logits.
fn cross_entropy(logits: &Tensor, label: usize) -> (f64, Tensor) {
    let max = logits.max();
    let exp: Vec<f64> = logits.data().iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    let loss = z.ln() - (logits.data()[label] - max);
    let mut grad: Vec<f64> = exp.iter().map(|e| e / z).collect();
    grad[label] -= 1.0;
    (loss, Tensor::new(logits.shape().to_vec(), grad).expect("logit shape"))
}

/// Fraction of images whose argmax logit equals the label.
pub fn accuracy(model: &Model, dataset: &Dataset) -> Result<f64> {
    let mut correct = 0;
    for i in 0..dataset.len() {
        if model.predict(&dataset.image(i))? == dataset.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}
