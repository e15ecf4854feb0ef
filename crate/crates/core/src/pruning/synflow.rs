//! Iterative data-free synaptic-flow scoring.

use serde::{Deserialize, Serialize};

use super::{Method, PruneMask, ScoreSet};
use crate::error::{invalid, Error, Result};
use crate::nn::forward::forward;
use crate::nn::grad::{backward, GradientSet};
use crate::nn::model::ModelSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynflowConfig {
    pub iterations: usize,
    /// Fraction of weights still kept after the last iteration.
    pub final_density: f64,
}

impl Default for SynflowConfig {
    fn default() -> Self {
        SynflowConfig {
            iterations: 100,
            final_density: 0.01,
        }
    }
}

/// `|w * dR/dw|` for `R = sum of outputs` of the absolute-valued, masked
/// network on an all-ones input.
fn flow_scores(model: &ModelSpec, mask: &PruneMask) -> Result<Vec<f64>> {
    let mut lin = mask.apply(model);
    for l in lin.layers.iter_mut() {
        l.weight.iter_mut().for_each(|w| *w = w.abs());
        l.bias.iter_mut().for_each(|b| *b = b.abs());
    }
    let ones = vec![1.0; lin.input_dims];
    let (out, trace) = forward(&lin, &ones)?;
    let mut g = GradientSet::zeros_like(&lin);
    backward(&lin, &trace, &vec![1.0; out.len()], &mut g);
    let scores: Vec<f64> = lin
        .flat_weights()
        .iter()
        .zip(g.flat_weights())
        .map(|(w, gw)| (w * gw).abs())
        .collect();
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NumericOverflow("synaptic flow score overflowed".into()));
    }
    Ok(scores)
}

/// Runs the exponential schedule `density_k = final^(k / iterations)`. Returns
/// the final-iteration scores and the full removal order: weights in the order
/// they were dropped (lowest score first within an iteration), then the
/// survivors by ascending final score.
pub fn score_synflow(model: &ModelSpec, cfg: &SynflowConfig) -> Result<(ScoreSet, Vec<usize>)> {
    if cfg.iterations == 0 || !(cfg.final_density > 0.0 && cfg.final_density <= 1.0) {
        return invalid("synflow needs iterations >= 1 and final density in (0, 1]");
    }
    let n = model.weight_count();
    let weights = model.flat_weights();
    let mut mask = PruneMask::full(n);
    let mut order = Vec::with_capacity(n);
    let by_score = |scores: &[f64], ids: &mut Vec<usize>| {
        ids.sort_by(|&a, &b| {
            scores[a]
                .total_cmp(&scores[b])
                .then(weights[a].abs().total_cmp(&weights[b].abs()))
                .then(a.cmp(&b))
        })
    };
    let mut scores = vec![0.0; n];
    for k in 1..=cfg.iterations {
        scores = flow_scores(model, &mask)?;
        let density = cfg.final_density.powf(k as f64 / cfg.iterations as f64);
        let target = ((n as f64) * density).ceil() as usize;
        let mut alive: Vec<usize> = (0..n).filter(|&p| mask.keep[p]).collect();
        if alive.len() <= target {
            continue;
        }
        by_score(&scores, &mut alive);
        for &p in &alive[..alive.len() - target] {
            mask.keep[p] = false;
            order.push(p);
        }
    }
    let mut rest: Vec<usize> = (0..n).filter(|&p| mask.keep[p]).collect();
    by_score(&scores, &mut rest);
    order.extend(rest);
    Ok((
        ScoreSet {
            method: Method::Synflow,
            scores,
        },
        order,
    ))
}
