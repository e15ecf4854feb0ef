//! Optimal transport, generic graph curvature and neural curvature.

pub mod generic;
pub mod neural;
pub mod transport;

use serde::{Deserialize, Serialize};

pub use generic::{orc_generic, ricci_limit_generic, WeightedDigraph};
pub use neural::{
    neural_curvature, neural_edge_cost, neural_neighbor_distribution, prop1_asymptotics, CurvatureEngine, Direction,
    ExampleContext, Prop1Point,
};
pub use transport::{solve_transport, wasserstein, Distribution, TransportPlan};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureValue {
    pub value: f64,
    /// The edge cost was infinite and `value` is the closed-form limit.
    pub sentinel: bool,
    pub alpha: f64,
    /// `value` has been divided by `1 - alpha`.
    pub scaled: bool,
}

/// Ground distances used inside the neural Wasserstein term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundMetric {
    /// Static graph weights, except the evaluated edge which costs `d_sigma`.
    #[default]
    StaticOverride,
    /// Static graph weights everywhere.
    StaticPure,
}

/// How neighbor masses are formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborMode {
    /// Activation-derived masses.
    #[default]
    Neural,
    /// Masses proportional to graph weights.
    Static,
}

/// Denominator of the curvature ratio.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMode {
    /// Graph weight divided by the activation pass-through factor.
    #[default]
    Neural,
    /// Plain graph weight.
    Static,
}

macro_rules! kebab_from_str {
    ($t:ty) => {
        impl std::str::FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                serde_json::from_value(serde_json::Value::String(s.to_string()))
                    .map_err(|_| format!("unknown value '{s}'"))
            }
        }
    };
}
kebab_from_str!(GroundMetric);
kebab_from_str!(NeighborMode);
kebab_from_str!(CostMode);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurvatureConfig {
    pub alpha: f64,
    pub ground: GroundMetric,
    pub neighbors: NeighborMode,
    pub cost: CostMode,
}

impl Default for CurvatureConfig {
    fn default() -> Self {
        CurvatureConfig {
            alpha: 0.9,
            ground: GroundMetric::StaticOverride,
            neighbors: NeighborMode::Neural,
            cost: CostMode::Neural,
        }
    }
}

impl CurvatureConfig {
    /// The graph-only variant: static masses and static edge cost.
    pub fn static_baseline(alpha: f64) -> Self {
        CurvatureConfig {
            alpha,
            neighbors: NeighborMode::Static,
            cost: CostMode::Static,
            ..Default::default()
        }
    }
}
