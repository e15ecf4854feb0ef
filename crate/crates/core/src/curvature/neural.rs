//! Data-dependent curvature of the edges of a neural graph.

use super::transport::{solve_transport, Distribution};
use super::{CostMode, CurvatureConfig, CurvatureValue, GroundMetric, NeighborMode};
use crate::error::{invalid, Error, Result};
use crate::graph::paths::OverrideView;
use crate::graph::{EdgeRef, NeuralGraph, PathTables};
use crate::nn::forward::{forward, ActivationTrace};
use crate::nn::model::{Activation, ModelSpec, NeuronKind};

/// Lower end of the per-layer normalized activation range.
pub const NORM_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Over the in-neighbors of the vertex (previous layer).
    In,
    /// Over the out-neighbors of the vertex (next layer).
    Out,
}

/// Log of the unnormalized neighbor mass of every neuron in a layer, or
/// `None` when all activation magnitudes in the layer coincide.
fn layer_log_weights(acts: &[f64]) -> Option<Vec<f64>> {
    let (lo, hi) = acts
        .iter()
        .map(|a| a.abs())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(a), hi.max(a)));
    if !(hi > lo) {
        return None;
    }
    Some(
        acts.iter()
            .map(|a| {
                let norm = NORM_EPS + (1.0 - NORM_EPS) * (a.abs() - lo) / (hi - lo);
                let inv = 1.0 / norm;
                -inv * inv
            })
            .collect(),
    )
}

/// Normalizes `exp(logw)` over `ids`, dropping exact zeros. `None` weights
/// mean uniform.
fn softmax_over(ids: &[usize], logw: Option<&[f64]>, local: impl Fn(usize) -> usize) -> Distribution {
    match logw {
        None => Distribution {
            support: ids.to_vec(),
            mass: vec![1.0 / ids.len() as f64; ids.len()],
        },
        Some(lw) => {
            let max = ids.iter().map(|&i| lw[local(i)]).fold(f64::NEG_INFINITY, f64::max);
            let raw: Vec<f64> = ids.iter().map(|&i| (lw[local(i)] - max).exp()).collect();
            let total: f64 = raw.iter().sum();
            let (support, mass) = ids
                .iter()
                .zip(raw)
                .filter(|(_, r)| *r > 0.0)
                .map(|(&i, r)| (i, r / total))
                .unzip();
            Distribution { support, mass }
        }
    }
}

/// Per-example quantities shared by every edge evaluation.
#[derive(Clone, Debug)]
pub struct ExampleContext {
    pub trace: ActivationTrace,
    log_weights: Vec<Option<Vec<f64>>>,
    /// Neural distribution over each entire layer (global vertex ids).
    full_layer: Vec<Distribution>,
}

impl ExampleContext {
    pub fn new(graph: &NeuralGraph, model: &ModelSpec, x: &[f64]) -> Result<Self> {
        let (_, trace) = forward(model, x)?;
        Ok(Self::from_trace(graph, trace))
    }

    pub fn from_trace(graph: &NeuralGraph, trace: ActivationTrace) -> Self {
        let offsets = vertex_offsets(graph);
        let log_weights: Vec<Option<Vec<f64>>> = trace.activations.iter().map(|a| layer_log_weights(a)).collect();
        let full_layer = (0..graph.layer_sizes.len())
            .map(|l| {
                let ids: Vec<usize> = (0..graph.layer_sizes[l]).map(|i| offsets[l] + i).collect();
                softmax_over(&ids, log_weights[l].as_deref(), |g| g - offsets[l])
            })
            .collect();
        ExampleContext {
            trace,
            log_weights,
            full_layer,
        }
    }
}

fn vertex_offsets(graph: &NeuralGraph) -> Vec<usize> {
    let mut off = Vec::with_capacity(graph.layer_sizes.len());
    let mut acc = 0;
    for &s in &graph.layer_sizes {
        off.push(acc);
        acc += s;
    }
    off
}

/// Neural neighbor distribution of vertex `i` in graph layer `layer`, over
/// global vertex ids. Input-layer `In` and output-layer `Out` give a point
/// mass on the vertex itself.
pub fn neural_neighbor_distribution(
    graph: &NeuralGraph,
    ctx: &ExampleContext,
    layer: usize,
    i: usize,
    dir: Direction,
) -> Distribution {
    let offsets = vertex_offsets(graph);
    neighbor_measure(graph, &offsets, ctx, layer, i, dir, NeighborMode::Neural)
}

fn neighbor_measure(
    graph: &NeuralGraph,
    offsets: &[usize],
    ctx: &ExampleContext,
    layer: usize,
    i: usize,
    dir: Direction,
    mode: NeighborMode,
) -> Distribution {
    let depth = graph.depth();
    let (nl, edges): (usize, Vec<(usize, f64)>) = match dir {
        Direction::In if layer == 0 => return Distribution::point(offsets[0] + i),
        Direction::Out if layer == depth => return Distribution::point(offsets[depth] + i),
        Direction::In => (
            layer - 1,
            graph.layers[layer - 1]
                .in_edges(i)
                .map(|e| (e.src as usize, e.weight))
                .collect(),
        ),
        Direction::Out => (
            layer + 1,
            graph.layers[layer]
                .out_edges(i)
                .map(|e| (e.dst as usize, e.weight))
                .collect(),
        ),
    };
    match mode {
        NeighborMode::Neural => {
            if edges.len() == graph.layer_sizes[nl] {
                return ctx.full_layer[nl].clone();
            }
            let ids: Vec<usize> = edges.iter().map(|&(k, _)| offsets[nl] + k).collect();
            softmax_over(&ids, ctx.log_weights[nl].as_deref(), |g| g - offsets[nl])
        }
        NeighborMode::Static => {
            let total: f64 = edges.iter().map(|&(_, w)| w).sum();
            Distribution {
                support: edges.iter().map(|&(k, _)| offsets[nl] + k).collect(),
                mass: edges.iter().map(|&(_, w)| w / total).collect(),
            }
        }
    }
}

/// Fraction of a signal that survives a neuron of the given kind.
pub fn beta(kind: NeuronKind, logit: f64) -> f64 {
    match kind {
        NeuronKind::Identity => 1.0,
        NeuronKind::Relu => {
            if logit > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        NeuronKind::Tanh => {
            if logit == 0.0 {
                1.0
            } else {
                logit.tanh() / logit
            }
        }
    }
}

/// `d_sigma` of an edge for one example; `+inf` when the activation blocks it.
pub fn neural_edge_cost(graph: &NeuralGraph, edge: EdgeRef, trace: &ActivationTrace, activation: Activation) -> f64 {
    let e = graph.edge(edge);
    let l = edge.layer;
    let b_tgt = beta(graph.kinds[l + 1], trace.logit(l + 1, e.dst as usize));
    let b = match activation {
        Activation::Tanh => b_tgt,
        Activation::Relu => {
            let b_src = if l == 0 {
                1.0
            } else {
                beta(graph.kinds[l], trace.logit(l, e.src as usize))
            };
            b_src.min(b_tgt)
        }
    };
    e.weight / b
}

/// Precomputed path tables for curvature queries on one graph.
pub struct CurvatureEngine<'g> {
    pub graph: &'g NeuralGraph,
    pub tables: PathTables,
    pub activation: Activation,
    offsets: Vec<usize>,
}

impl<'g> CurvatureEngine<'g> {
    pub fn new(graph: &'g NeuralGraph, activation: Activation) -> Self {
        CurvatureEngine {
            graph,
            tables: PathTables::build(graph),
            activation,
            offsets: vertex_offsets(graph),
        }
    }

    pub fn context(&self, model: &ModelSpec, x: &[f64]) -> Result<ExampleContext> {
        ExampleContext::new(self.graph, model, x)
    }

    /// Closed-form value for an infinite edge cost.
    pub fn sentinel(&self, layer: usize) -> f64 {
        if layer == 0 || layer + 1 == self.graph.depth() {
            1.0
        } else {
            2.0
        }
    }

    pub fn edge_cost(&self, ctx: &ExampleContext, edge: EdgeRef, mode: CostMode) -> f64 {
        match mode {
            CostMode::Static => self.graph.edge(edge).weight,
            CostMode::Neural => neural_edge_cost(self.graph, edge, &ctx.trace, self.activation),
        }
    }

    pub fn curvature(&self, ctx: &ExampleContext, edge: EdgeRef, cfg: &CurvatureConfig) -> Result<CurvatureValue> {
        let d = self.edge_cost(ctx, edge, cfg.cost);
        self.curvature_at_cost(ctx, edge, d, cfg)
    }

    /// Curvature with the evaluated edge costing `d`.
    pub fn curvature_at_cost(
        &self,
        ctx: &ExampleContext,
        edge: EdgeRef,
        d: f64,
        cfg: &CurvatureConfig,
    ) -> Result<CurvatureValue> {
        let alpha = cfg.alpha;
        if !(0.0..1.0).contains(&alpha) {
            return invalid("alpha must lie in [0, 1)");
        }
        if d == f64::INFINITY {
            return Ok(CurvatureValue {
                value: self.sentinel(edge.layer),
                sentinel: true,
                alpha,
                scaled: true,
            });
        }
        let w = self.transport_cost(ctx, edge, d, cfg)?;
        Ok(CurvatureValue {
            value: (1.0 - w / d) / (1.0 - alpha),
            sentinel: false,
            alpha,
            scaled: true,
        })
    }

    /// Source and target measures of an edge after blending with `alpha`.
    pub fn edge_measures(
        &self,
        ctx: &ExampleContext,
        edge: EdgeRef,
        alpha: f64,
        mode: NeighborMode,
    ) -> (Distribution, Distribution) {
        let e = self.graph.edge(edge);
        let l = edge.layer;
        let (u, v) = (e.src as usize, e.dst as usize);
        let gu = self.offsets[l] + u;
        let gv = self.offsets[l + 1] + v;
        let src = if l == 0 {
            Distribution::point(gu)
        } else {
            neighbor_measure(self.graph, &self.offsets, ctx, l, u, Direction::In, mode).blend(gu, alpha)
        };
        let tgt = if l + 1 == self.graph.depth() {
            Distribution::point(gv)
        } else {
            neighbor_measure(self.graph, &self.offsets, ctx, l + 1, v, Direction::Out, mode).blend(gv, alpha)
        };
        (src.trimmed(), tgt.trimmed())
    }

    /// `W(m_u, m_v)` with ground distances where edge `u -> v` costs `d`.
    fn transport_between(
        &self,
        edge: EdgeRef,
        d: f64,
        pure: bool,
        src: &Distribution,
        tgt: &Distribution,
    ) -> Result<f64> {
        let e = self.graph.edge(edge);
        let l = edge.layer;
        let (u, v) = (e.src as usize, e.dst as usize);
        let gu = self.offsets[l] + u;
        let gv = self.offsets[l + 1] + v;
        let view = OverrideView::new(self.graph, &self.tables, l, u, v, d, pure);
        let rows: Vec<Option<usize>> = src
            .support
            .iter()
            .map(|&g| if g == gu { None } else { Some(g - self.offsets[l - 1]) })
            .collect();
        let cols: Vec<Option<usize>> = tgt
            .support
            .iter()
            .map(|&g| if g == gv { None } else { Some(g - self.offsets[l + 2]) })
            .collect();
        let mut c = Vec::with_capacity(rows.len() * cols.len());
        for r in &rows {
            let s_v = r.map(|s| view.s_to_v(s));
            for col in &cols {
                c.push(match (r, col) {
                    (None, None) => view.u_to_v(),
                    (None, Some(t)) => view.u_to_t(*t),
                    (Some(_), None) => s_v.unwrap(),
                    (Some(s), Some(t)) => view.s_to_t(*s, *t, s_v.unwrap()),
                });
            }
        }
        Ok(solve_transport(&src.mass, &tgt.mass, &c)?.cost)
    }

    /// The Wasserstein term of the curvature for edge cost `d`.
    pub fn transport_cost(&self, ctx: &ExampleContext, edge: EdgeRef, d: f64, cfg: &CurvatureConfig) -> Result<f64> {
        let (src, tgt) = self.edge_measures(ctx, edge, cfg.alpha, cfg.neighbors);
        self.transport_between(edge, d, cfg.ground == GroundMetric::StaticPure, &src, &tgt)
    }

    /// Largest finite distance between the two measures' supports over
    /// routes that avoid the edge, or an error if some pair needs the edge.
    fn alternative_bound(&self, edge: EdgeRef, src: &Distribution, tgt: &Distribution) -> Result<f64> {
        let e = self.graph.edge(edge);
        let l = edge.layer;
        let (u, v) = (e.src as usize, e.dst as usize);
        let (gu, gv) = (self.offsets[l] + u, self.offsets[l + 1] + v);
        let view = OverrideView::new(self.graph, &self.tables, l, u, v, f64::INFINITY, false);
        let mut bound = 0.0f64;
        for &x in &src.support {
            let s_v = (x != gu).then(|| view.s_to_v(x - self.offsets[l - 1]));
            for &y in &tgt.support {
                if x == gu && y == gv {
                    continue;
                }
                let dist = match (x == gu, y == gv) {
                    (true, false) => view.u_to_t(y - self.offsets[l + 2]),
                    (false, true) => s_v.unwrap(),
                    (false, false) => view.s_to_t(x - self.offsets[l - 1], y - self.offsets[l + 2], s_v.unwrap()),
                    (true, true) => unreachable!(),
                };
                if dist == f64::INFINITY {
                    return Err(Error::Precondition(format!(
                        "vertex pair ({x}, {y}) has no route avoiding the edge"
                    )));
                }
                bound = bound.max(dist);
            }
        }
        Ok(bound)
    }
}

/// One rung of the large-cost ladder: computed curvature and closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prop1Point {
    pub cost: f64,
    pub kappa: CurvatureValue,
    pub closed_form: f64,
    /// `r` (boundary edges) or `r1 + r2` (hidden edges).
    pub r: f64,
}

/// Evaluates the curvature of `edge` along increasing edge costs and the
/// closed forms `1 - r/d` (input- or output-adjacent edges) or
/// `2 - (r1 + r2)/d` (hidden edges) they should match.
pub fn prop1_asymptotics(
    engine: &CurvatureEngine,
    ctx: &ExampleContext,
    edge: EdgeRef,
    ladder: &[f64],
    cfg: &CurvatureConfig,
) -> Result<Vec<Prop1Point>> {
    if ladder.is_empty() || ladder.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::Precondition("ladder entries must be finite and positive".into()));
    }
    if ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("ladder must be strictly increasing".into()));
    }
    let cfg = CurvatureConfig {
        ground: GroundMetric::StaticOverride,
        ..*cfg
    };
    let l = edge.layer;
    let depth = engine.graph.depth();
    let (input_edge, output_edge) = (l == 0, l + 1 == depth);
    if input_edge && output_edge {
        return Err(Error::Precondition(
            "a single-layer edge has no alternative routes".into(),
        ));
    }
    if !input_edge && !output_edge && cfg.alpha < 0.5 {
        return Err(Error::Precondition("hidden-edge closed form needs alpha >= 0.5".into()));
    }
    // Unblended neighbor measures (point masses on the boundary layers).
    let (src0, tgt0) = engine.edge_measures(ctx, edge, 0.0, cfg.neighbors);
    let e = engine.graph.edge(edge);
    let point_u = Distribution::point(engine.offsets[l] + e.src as usize);
    let point_v = Distribution::point(engine.offsets[l + 1] + e.dst as usize);
    // r1 = W(delta_u, m_v), r2 = W(m_u, delta_v), both on routes avoiding the edge.
    let r1 = if output_edge {
        0.0
    } else {
        engine.transport_between(edge, f64::INFINITY, false, &point_u, &tgt0)?
    };
    let r2 = if input_edge {
        0.0
    } else {
        engine.transport_between(edge, f64::INFINITY, false, &src0, &point_v)?
    };
    let r = r1 + r2;
    let (blend_src, blend_tgt) = engine.edge_measures(ctx, edge, cfg.alpha, cfg.neighbors);
    let threshold = 2.0 * engine.alternative_bound(edge, &blend_src, &blend_tgt)?;
    let mut out = Vec::with_capacity(ladder.len());
    for &d in ladder {
        if d <= threshold {
            return Err(Error::Precondition(format!(
                "cost {d} does not exceed the alternative-route threshold {threshold}"
            )));
        }
        let kappa = engine.curvature_at_cost(ctx, edge, d, &cfg)?;
        let closed_form = if input_edge || output_edge {
            1.0 - r / d
        } else {
            2.0 - r / d
        };
        out.push(Prop1Point {
            cost: d,
            kappa,
            closed_form,
            r,
        });
    }
    Ok(out)
}

/// One-off evaluation: builds the path tables, runs the model on `x` and
/// returns the curvature of `edge`.
pub fn neural_curvature(
    model: &ModelSpec,
    graph: &NeuralGraph,
    x: &[f64],
    edge: EdgeRef,
    cfg: &CurvatureConfig,
) -> Result<CurvatureValue> {
    let engine = CurvatureEngine::new(graph, model.activation);
    let ctx = engine.context(model, x)?;
    engine.curvature(&ctx, edge, cfg)
}
