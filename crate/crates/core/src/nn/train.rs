use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::nn::forward::{argmax, logits_into};
use crate::nn::grad::grad_loss;
use crate::nn::model::ModelSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 coefficient applied to weights (not biases).
    pub weight_decay: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.05,
            epochs: 20,
            batch_size: 32,
            weight_decay: 0.0,
            momentum: 0.9,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,train_accuracy\n");
        for r in &self.epochs {
            s.push_str(&format!("{},{},{}\n", r.epoch, r.loss, r.train_accuracy));
        }
        s
    }
}

/// Fraction of `data` classified correctly.
pub fn accuracy(model: &ModelSpec, data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    use rayon::prelude::*;
    let correct: usize = data
        .inputs
        .par_iter()
        .zip(&data.labels)
        .map_init(
            || (Vec::new(), Vec::new()),
            |scratch, (x, &y)| usize::from(argmax(&logits_into(model, x, scratch)) == y),
        )
        .sum();
    correct as f64 / data.len() as f64
}

/// Mini-batch SGD with optional momentum and weight decay on the mean
/// cross-entropy. The model is copied; the input is left untouched.
pub fn train_sgd(model: &ModelSpec, train: &Dataset, cfg: &TrainConfig) -> Result<(ModelSpec, TrainLog)> {
    if train.is_empty() {
        return invalid("training set is empty");
    }
    if cfg.batch_size == 0 {
        return invalid("batch size must be positive");
    }
    if !(cfg.weight_decay >= 0.0) || !(cfg.lr >= 0.0) || !(0.0..1.0).contains(&cfg.momentum) {
        return invalid("lr and weight decay must be >= 0 and momentum in [0, 1)");
    }
    let mut m = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut vel_w: Vec<Vec<f64>> = m.layers.iter().map(|l| vec![0.0; l.weight.len()]).collect();
    let mut vel_b: Vec<Vec<f64>> = m.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect();
    let mut log = TrainLog::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train.subset(chunk);
            let (loss, g) = match grad_loss(&m, &batch) {
                Ok(r) => r,
                Err(Error::NumericOverflow(_)) => return Err(Error::TrainingDiverged { epoch, loss: f64::NAN }),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || !g.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss });
            }
            loss_sum += loss;
            batches += 1;
            for (k, layer) in m.layers.iter_mut().enumerate() {
                for ((w, gw), v) in layer.weight.iter_mut().zip(&g.weights[k]).zip(vel_w[k].iter_mut()) {
                    *v = cfg.momentum * *v + gw + cfg.weight_decay * *w;
                    *w -= cfg.lr * *v;
                }
                for ((b, gb), v) in layer.bias.iter_mut().zip(&g.biases[k]).zip(vel_b[k].iter_mut()) {
                    *v = cfg.momentum * *v + gb;
                    *b -= cfg.lr * *v;
                }
            }
        }
        let loss = loss_sum / batches as f64;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss });
        }
        log.epochs.push(EpochRecord {
            epoch,
            loss,
            train_accuracy: accuracy(&m, train),
        });
    }
    Ok((m, log))
}
