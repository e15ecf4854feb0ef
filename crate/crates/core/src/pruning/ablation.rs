use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sweep, sweep_subset, SparsityCurve};
use crate::curvature::{CostMode, CurvatureConfig, NeighborMode};
use crate::data::{calibration_subset, Dataset};
use crate::error::Result;
use crate::graph::NeuralGraph;
use crate::nn::model::ModelSpec;
use crate::ranking::rank_parameters;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationKind {
    PerLayer,
    NeuralModules,
    CalibSize,
}

impl std::str::FromStr for AblationKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "per-layer" => Ok(AblationKind::PerLayer),
            "neural-modules" => Ok(AblationKind::NeuralModules),
            "calib-size" => Ok(AblationKind::CalibSize),
            _ => Err(format!("unknown ablation '{s}'")),
        }
    }
}

pub const DEFAULT_CALIB_SIZES: [usize; 6] = [1, 5, 10, 20, 50, 100];

pub struct AblationInputs<'a> {
    pub model: &'a ModelSpec,
    pub graph: &'a NeuralGraph,
    /// Pool the calibration subsets are drawn from.
    pub pool: &'a Dataset,
    pub calibration_size: usize,
    pub test: &'a Dataset,
    pub curvature: CurvatureConfig,
    pub fractions: &'a [f64],
    pub calib_sizes: &'a [usize],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub name: String,
    pub curve: SparsityCurve,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub kind: AblationKind,
    pub model_hash: String,
    pub variants: Vec<AblationVariant>,
}

fn variant(name: String, curve: SparsityCurve) -> AblationVariant {
    AblationVariant {
        auc: curve.auc(),
        name,
        curve,
    }
}

pub fn run_ablation(kind: AblationKind, inp: &AblationInputs) -> Result<AblationReport> {
    let variants = match kind {
        AblationKind::PerLayer => per_layer(inp)?,
        AblationKind::NeuralModules => neural_modules(inp)?,
        AblationKind::CalibSize => calib_size(inp)?,
    };
    Ok(AblationReport {
        kind,
        model_hash: inp.model.hash_hex(),
        variants,
    })
}

/// Restricts both curvature and magnitude orders to one layer at a time.
fn per_layer(inp: &AblationInputs) -> Result<Vec<AblationVariant>> {
    let calib = calibration_subset(inp.pool, inp.calibration_size)?;
    let (_, ranked) = rank_parameters(inp.model, inp.graph, &calib, &inp.curvature)?;
    let magnitude = super::ascending_order(&super::score_magnitude(inp.model).scores, inp.model);
    let layout = inp.model.param_layout();
    let mut out = Vec::new();
    for l in 0..inp.model.layers.len() {
        let range = layout.layer_range(l);
        if range.is_empty() {
            continue;
        }
        let only = |order: &[usize]| -> Vec<usize> { order.iter().copied().filter(|p| range.contains(p)).collect() };
        let c = sweep_subset(
            inp.model,
            &only(&ranked.order),
            inp.fractions,
            inp.test,
            "curvature",
            "positive-first",
        )?;
        out.push(variant(format!("layer{l}-curvature"), c));
        let m = sweep_subset(
            inp.model,
            &only(&magnitude),
            inp.fractions,
            inp.test,
            "magnitude",
            "score-ascending",
        )?;
        out.push(variant(format!("layer{l}-magnitude"), m));
    }
    Ok(out)
}

/// Switches activation-derived neighbor masses and edge costs on and off.
fn neural_modules(inp: &AblationInputs) -> Result<Vec<AblationVariant>> {
    let calib = calibration_subset(inp.pool, inp.calibration_size)?;
    let modes = [
        ("static", NeighborMode::Static, CostMode::Static),
        ("neural-neighbors", NeighborMode::Neural, CostMode::Static),
        ("neural-cost", NeighborMode::Static, CostMode::Neural),
        ("full", NeighborMode::Neural, CostMode::Neural),
    ];
    let mut out = Vec::new();
    for (name, neighbors, cost) in modes {
        let cfg = CurvatureConfig {
            neighbors,
            cost,
            ..inp.curvature
        };
        let (_, ranked) = rank_parameters(inp.model, inp.graph, &calib, &cfg)?;
        let c = sweep(
            inp.model,
            &ranked.order,
            inp.fractions,
            inp.test,
            "curvature",
            "positive-first",
        )?;
        out.push(variant(name.to_string(), c));
    }
    Ok(out)
}

fn calib_size(inp: &AblationInputs) -> Result<Vec<AblationVariant>> {
    let mut out = Vec::new();
    for &s in inp.calib_sizes {
        let calib = calibration_subset(inp.pool, s)?;
        let (_, ranked) = rank_parameters(inp.model, inp.graph, &calib, &inp.curvature)?;
        let c = sweep(
            inp.model,
            &ranked.order,
            inp.fractions,
            inp.test,
            "curvature",
            "positive-first",
        )?;
        out.push(variant(format!("calib{s}"), c));
    }
    Ok(out)
}

impl AblationReport {
    /// Writes one curve CSV per variant and `manifest.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for v in &self.variants {
            let file = format!("{}.csv", v.name);
            std::fs::write(dir.join(&file), v.curve.to_csv())?;
            files.push(serde_json::json!({ "variant": v.name, "file": file, "auc": v.auc }));
        }
        let manifest = serde_json::json!({
            "ablation": self.kind,
            "model_hash": self.model_hash,
            "variants": files,
        });
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
        Ok(())
    }
}
