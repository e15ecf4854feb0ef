//! Aggregates per-example edge curvature into one value per weight and
//! orders the weights for removal.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{CostMode, CurvatureConfig, CurvatureEngine, ExampleContext, NeighborMode};
use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::graph::{EdgeRef, NeuralGraph};
use crate::nn::model::ModelSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub param_id: usize,
    /// Model layer holding the weight.
    pub layer: usize,
    pub kappa_min: f64,
    pub sentinel: bool,
    /// Calibration example attaining the minimum.
    pub example_id: usize,
    /// Index (within the weight's induced edges) attaining the minimum.
    pub edge_id: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub config: CurvatureConfig,
    pub model_hash: String,
    pub calibration: String,
    pub calibration_size: usize,
}

/// One row per trainable weight, in parameter-id order.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureTable {
    pub entries: Vec<TableEntry>,
    pub meta: TableMeta,
}

/// Per-edge, per-example curvature record for optional dumps.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeRecord {
    pub param_id: usize,
    pub layer: usize,
    pub example_id: usize,
    pub kappa: f64,
    pub sentinel: bool,
}

/// Weight ids ordered by curvature, highest first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedEdgeSet {
    pub order: Vec<usize>,
}

impl RankedEdgeSet {
    pub fn positive_first(&self) -> Vec<usize> {
        self.order.clone()
    }

    pub fn negative_first(&self) -> Vec<usize> {
        self.order.iter().rev().copied().collect()
    }
}

/// Sorts by curvature descending, then |weight| ascending, then id.
pub fn rank_by_curvature(table: &CurvatureTable, model: &ModelSpec) -> RankedEdgeSet {
    let weights = model.flat_weights();
    let mut order: Vec<usize> = table.entries.iter().map(|e| e.param_id).collect();
    let kappa: Vec<f64> = table.entries.iter().map(|e| e.kappa_min).collect();
    order.sort_by(|&a, &b| {
        kappa[b]
            .total_cmp(&kappa[a])
            .then(weights[a].abs().total_cmp(&weights[b].abs()))
            .then(a.cmp(&b))
    });
    RankedEdgeSet { order }
}

#[derive(Clone, Copy, Debug)]
struct Best {
    kappa: f64,
    sentinel: bool,
    example: usize,
    edge: usize,
}

impl Best {
    fn better_than(&self, other: &Best) -> bool {
        match self.kappa.total_cmp(&other.kappa) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => (self.example, self.edge) < (other.example, other.edge),
        }
    }
}

/// Curvature of one edge on every calibration example. With static
/// neighbors the result depends on the example only through the edge cost,
/// so values are reused across equal costs.
fn edge_over_examples(
    engine: &CurvatureEngine,
    contexts: &[ExampleContext],
    edge: EdgeRef,
    cfg: &CurvatureConfig,
) -> Result<Vec<(f64, bool)>> {
    let reuse = cfg.neighbors == NeighborMode::Static;
    let mut cache: Vec<(u64, f64, bool)> = Vec::new();
    let mut out = Vec::with_capacity(contexts.len());
    for ctx in contexts {
        let d = engine.edge_cost(ctx, edge, cfg.cost);
        if reuse {
            if let Some(&(_, k, s)) = cache.iter().find(|c| c.0 == d.to_bits()) {
                out.push((k, s));
                continue;
            }
        }
        let k = engine.curvature_at_cost(ctx, edge, d, cfg)?;
        if reuse {
            cache.push((d.to_bits(), k.value, k.sentinel));
        }
        out.push((k.value, k.sentinel));
        if reuse && cfg.cost == CostMode::Static {
            // Example-independent: fill the rest directly.
            out.resize(contexts.len(), (k.value, k.sentinel));
            break;
        }
    }
    Ok(out)
}

/// Full evaluation: per-weight minimum over calibration examples and over
/// the edges a weight induces, plus (optionally) every per-edge value.
pub fn curvature_table(
    model: &ModelSpec,
    graph: &NeuralGraph,
    calib: &Dataset,
    cfg: &CurvatureConfig,
    keep_edges: bool,
) -> Result<(CurvatureTable, Vec<EdgeRecord>)> {
    if calib.is_empty() {
        return invalid("calibration set is empty");
    }
    let engine = CurvatureEngine::new(graph, model.activation);
    let contexts: Vec<ExampleContext> = calib
        .inputs
        .par_iter()
        .map(|x| engine.context(model, x))
        .collect::<Result<_>>()?;
    let layout = model.param_layout();
    let per_param: Vec<Result<(TableEntry, Vec<EdgeRecord>)>> = (0..layout.total)
        .into_par_iter()
        .map(|p| {
            let (layer, _) = layout.locate(p);
            let mut best: Option<Best> = None;
            let mut records = Vec::new();
            for (edge_id, &edge) in graph.param_edges[p].iter().enumerate() {
                let values = edge_over_examples(&engine, &contexts, edge, cfg)?;
                for (example, &(kappa, sentinel)) in values.iter().enumerate() {
                    let cand = Best {
                        kappa,
                        sentinel,
                        example,
                        edge: edge_id,
                    };
                    if best.as_ref().is_none_or(|b| cand.better_than(b)) {
                        best = Some(cand);
                    }
                    if keep_edges {
                        records.push(EdgeRecord {
                            param_id: p,
                            layer,
                            example_id: example,
                            kappa,
                            sentinel,
                        });
                    }
                }
            }
            let b = best.expect("every weight induces an edge");
            Ok((
                TableEntry {
                    param_id: p,
                    layer,
                    kappa_min: b.kappa,
                    sentinel: b.sentinel,
                    example_id: b.example,
                    edge_id: b.edge,
                },
                records,
            ))
        })
        .collect();
    let mut entries = Vec::with_capacity(layout.total);
    let mut records = Vec::new();
    for r in per_param {
        let (e, mut rec) = r?;
        entries.push(e);
        records.append(&mut rec);
    }
    let meta = TableMeta {
        config: *cfg,
        model_hash: model.hash_hex(),
        calibration: format!("{} examples", calib.len()),
        calibration_size: calib.len(),
    };
    Ok((CurvatureTable { entries, meta }, records))
}

/// Table and ranking in one step.
pub fn rank_parameters(
    model: &ModelSpec,
    graph: &NeuralGraph,
    calib: &Dataset,
    cfg: &CurvatureConfig,
) -> Result<(CurvatureTable, RankedEdgeSet)> {
    let (table, _) = curvature_table(model, graph, calib, cfg, false)?;
    let ranked = rank_by_curvature(&table, model);
    Ok((table, ranked))
}

/// Parameter ids with negative curvature and with non-negative curvature.
pub fn split_by_sign(table: &CurvatureTable) -> (Vec<usize>, Vec<usize>) {
    table
        .entries
        .iter()
        .map(|e| e.param_id)
        .partition(|&p| table.entries[p].kappa_min < 0.0)
}

impl CurvatureTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("param_id,layer,kappa_min,example_id\n");
        for e in &self.entries {
            writeln!(s, "{},{},{:e},{}", e.param_id, e.layer, e.kappa_min, e.example_id).unwrap();
        }
        s
    }

    pub fn meta_json(&self) -> String {
        let negative = self.entries.iter().filter(|e| e.kappa_min < 0.0).count();
        let sentinels = self.entries.iter().filter(|e| e.sentinel).count();
        let v = serde_json::json!({
            "alpha": self.meta.config.alpha,
            "ground_metric": self.meta.config.ground,
            "neighbors": self.meta.config.neighbors,
            "edge_cost": self.meta.config.cost,
            "model_hash": self.meta.model_hash,
            "calibration": self.meta.calibration,
            "calibration_size": self.meta.calibration_size,
            "parameters": self.entries.len(),
            "negative": negative,
            "nonnegative": self.entries.len() - negative,
            "sentinel_minima": sentinels,
        });
        serde_json::to_string_pretty(&v).unwrap() + "\n"
    }

    /// Parses the CSV written by [`CurvatureTable::to_csv`]; the metadata
    /// is taken as given.
    pub fn from_csv(text: &str, meta: TableMeta) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || crate::error::Error::Format(format!("curvature csv line {}: '{line}'", n + 1));
            if f.len() != 4 {
                return Err(bad());
            }
            let kappa_min: f64 = f[2].parse().map_err(|_| bad())?;
            entries.push(TableEntry {
                param_id: f[0].parse().map_err(|_| bad())?,
                layer: f[1].parse().map_err(|_| bad())?,
                kappa_min,
                sentinel: false,
                example_id: f[3].parse().map_err(|_| bad())?,
                edge_id: 0,
            });
        }
        if entries.iter().enumerate().any(|(i, e)| e.param_id != i) {
            return Err(crate::error::Error::Format(
                "curvature csv rows must be in parameter order".into(),
            ));
        }
        Ok(CurvatureTable { entries, meta })
    }
}

pub fn edge_records_csv(records: &[EdgeRecord]) -> String {
    let mut s = String::from("param_id,layer,example_id,kappa,sentinel\n");
    for r in records {
        writeln!(
            s,
            "{},{},{},{:e},{}",
            r.param_id,
            r.layer,
            r.example_id,
            r.kappa,
            u8::from(r.sentinel)
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(kappas: &[f64]) -> CurvatureTable {
        CurvatureTable {
            entries: kappas
                .iter()
                .enumerate()
                .map(|(i, &k)| TableEntry {
                    param_id: i,
                    layer: 0,
                    kappa_min: k,
                    sentinel: k == 2.0,
                    example_id: 0,
                    edge_id: 0,
                })
                .collect(),
            meta: TableMeta::default(),
        }
    }

    #[test]
    fn ties_break_by_magnitude_then_id() {
        let mut m = ModelSpec::mlp(&[2, 2], crate::nn::model::Activation::Relu, 0).unwrap();
        m.layers[0].weight = vec![0.5, -0.1, 0.3, 0.1];
        let t = table(&[2.0, 2.0, -1.0, 2.0]);
        let r = rank_by_curvature(&t, &m);
        assert_eq!(r.order, vec![1, 3, 0, 2]);
        assert_eq!(r.negative_first(), vec![2, 0, 3, 1]);
    }

    #[test]
    fn split_partitions() {
        let (neg, non) = split_by_sign(&table(&[2.0; 5]));
        assert!(neg.is_empty() && non.len() == 5);
        let (neg, non) = split_by_sign(&table(&[-0.5, 0.0, 1.0, -2.0]));
        assert_eq!(neg, vec![0, 3]);
        assert_eq!(non, vec![1, 2]);
    }

    #[test]
    fn csv_round_trip() {
        let t = table(&[0.25, -1.5e-7, 2.0]);
        let back = CurvatureTable::from_csv(&t.to_csv(), TableMeta::default()).unwrap();
        let k: Vec<f64> = back.entries.iter().map(|e| e.kappa_min).collect();
        assert_eq!(k, vec![0.25, -1.5e-7, 2.0]);
    }
}
