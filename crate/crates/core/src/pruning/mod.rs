//! Weight-removal sweeps and baseline importance scores.

pub mod ablation;
pub mod synflow;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::nn::grad::grad_loss;
use crate::nn::model::ModelSpec;
use crate::nn::train::accuracy;

pub use ablation::{run_ablation, AblationInputs, AblationKind, AblationReport};
pub use synflow::{score_synflow, SynflowConfig};

/// Keep flag per trainable weight (global parameter ids).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PruneMask {
    pub keep: Vec<bool>,
}

impl PruneMask {
    pub fn full(n: usize) -> Self {
        PruneMask { keep: vec![true; n] }
    }

    /// Removes the first `count` ids of `order`.
    pub fn from_order(n: usize, order: &[usize], count: usize) -> Self {
        let mut m = Self::full(n);
        for &p in &order[..count.min(order.len())] {
            m.keep[p] = false;
        }
        m
    }

    pub fn removed(&self) -> usize {
        self.keep.iter().filter(|k| !**k).count()
    }

    /// Copy of `model` with removed weights set to exactly zero.
    pub fn apply(&self, model: &ModelSpec) -> ModelSpec {
        let layout = model.param_layout();
        let mut out = model.clone();
        for (k, layer) in out.layers.iter_mut().enumerate() {
            let base = layout.offsets[k];
            for (i, w) in layer.weight.iter_mut().enumerate() {
                if !self.keep[base + i] {
                    *w = 0.0;
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Curvature,
    Magnitude,
    Snip,
    Synflow,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Curvature => "curvature",
            Method::Magnitude => "magnitude",
            Method::Snip => "snip",
            Method::Synflow => "synflow",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "curvature" => Ok(Method::Curvature),
            "magnitude" => Ok(Method::Magnitude),
            "snip" => Ok(Method::Snip),
            "synflow" => Ok(Method::Synflow),
            _ => Err(format!("unknown method '{s}'")),
        }
    }
}

/// Importance per trainable weight; larger means more important.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSet {
    pub method: Method,
    pub scores: Vec<f64>,
}

pub fn score_magnitude(model: &ModelSpec) -> ScoreSet {
    ScoreSet {
        method: Method::Magnitude,
        scores: model.flat_weights().iter().map(|w| w.abs()).collect(),
    }
}

/// `|w * dL/dw|` of the mean cross-entropy on `batch`.
pub fn score_snip(model: &ModelSpec, batch: &Dataset) -> Result<ScoreSet> {
    let (_, g) = grad_loss(model, batch)?;
    let scores = model
        .flat_weights()
        .iter()
        .zip(g.flat_weights())
        .map(|(w, gw)| (w * gw).abs())
        .collect();
    Ok(ScoreSet {
        method: Method::Snip,
        scores,
    })
}

/// Removal order by ascending score, ties by ascending |w| then id.
pub fn ascending_order(scores: &[f64], model: &ModelSpec) -> Vec<usize> {
    let w = model.flat_weights();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .total_cmp(&scores[b])
            .then(w[a].abs().total_cmp(&w[b].abs()))
            .then(a.cmp(&b))
    });
    order
}

/// Removal order by descending score (most important first).
pub fn descending_order(scores: &[f64], model: &ModelSpec) -> Vec<usize> {
    let w = model.flat_weights();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(w[a].abs().total_cmp(&w[b].abs()))
            .then(a.cmp(&b))
    });
    order
}

/// `0, 0.02, ..., 0.50, 0.55, ..., 1.00`.
pub fn default_fractions() -> Vec<f64> {
    (0..=25)
        .map(|k| k as f64 * 0.02)
        .chain((11..=20).map(|k| k as f64 * 0.05))
        .collect()
}

/// Number of weights removed at fraction `f` of `total`.
pub fn removal_count(f: f64, total: usize) -> usize {
    ((f * total as f64) + 1e-9).floor() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityCurve {
    pub method: String,
    /// `positive-first`, `negative-first`, `score-ascending`, ...
    pub order: String,
    pub model_hash: String,
    pub points: Vec<(f64, f64)>,
}

impl SparsityCurve {
    pub fn accuracy_at(&self, f: f64) -> Option<f64> {
        self.points.iter().find(|p| (p.0 - f).abs() < 1e-12).map(|p| p.1)
    }

    /// Trapezoid area under accuracy over removed fraction.
    pub fn auc(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
            .sum()
    }

    pub fn csv_rows(&self, out: &mut String) {
        for (f, a) in &self.points {
            writeln!(out, "{f},{a},{},{}", self.method, self.order).unwrap();
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CURVE_HEADER);
        self.csv_rows(&mut s);
        s
    }
}

pub const CURVE_HEADER: &str = "fraction,accuracy,method,order\n";

pub fn curves_csv(curves: &[SparsityCurve]) -> String {
    let mut s = String::from(CURVE_HEADER);
    for c in curves {
        c.csv_rows(&mut s);
    }
    s
}

pub fn check_fractions(fractions: &[f64]) -> Result<()> {
    if fractions.is_empty() {
        return invalid("fraction grid is empty");
    }
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || fractions.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("fractions must be strictly increasing within [0, 1]");
    }
    Ok(())
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return invalid(format!("order has {} ids for {n} parameters", order.len()));
    }
    let mut seen = vec![false; n];
    for &p in order {
        if p >= n || seen[p] {
            return invalid("order is not a permutation of parameter ids");
        }
        seen[p] = true;
    }
    Ok(())
}

/// Accuracy after cumulatively removing the first `floor(f * P)` weights of
/// `order`, for each `f`. No retraining.
pub fn sweep(
    model: &ModelSpec,
    order: &[usize],
    fractions: &[f64],
    test: &Dataset,
    method: &str,
    order_label: &str,
) -> Result<SparsityCurve> {
    check_permutation(order, model.weight_count())?;
    sweep_subset(model, order, fractions, test, method, order_label)
}

/// Like [`sweep`] but `order` may cover only part of the weights; fractions
/// are relative to `order.len()`.
pub fn sweep_subset(
    model: &ModelSpec,
    order: &[usize],
    fractions: &[f64],
    test: &Dataset,
    method: &str,
    order_label: &str,
) -> Result<SparsityCurve> {
    check_fractions(fractions)?;
    if test.is_empty() {
        return invalid("test set is empty");
    }
    let n = model.weight_count();
    let points = fractions
        .iter()
        .map(|&f| {
            let mask = PruneMask::from_order(n, order, removal_count(f, order.len()));
            (f, accuracy(&mask.apply(model), test))
        })
        .collect();
    Ok(SparsityCurve {
        method: method.to_string(),
        order: order_label.to_string(),
        model_hash: model.hash_hex(),
        points,
    })
}

/// Copy of `model` with every bias set to zero.
pub fn zero_biases(model: &ModelSpec) -> ModelSpec {
    let mut m = model.clone();
    for l in m.layers.iter_mut() {
        l.bias.iter_mut().for_each(|b| *b = 0.0);
    }
    m
}
