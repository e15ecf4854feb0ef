//! The weighted layered digraph induced by a model, and shortest paths on it.
//!
//! Graph layer 0 holds the input vertices; graph layer `k + 1` holds the
//! outputs of model layer `k`. Each edge has weight `1 / max(|W|, 1e-12)`.

pub mod paths;

use std::fmt::Write as _;

use crate::error::{invalid, Result};
use crate::nn::conv::unroll_layer;
use crate::nn::model::{ModelSpec, NeuronKind};

pub use paths::{layered_shortest_paths, EdgeOverride, PathTables, Top2};

/// Smallest weight magnitude before inversion.
pub const WEIGHT_EPS: f64 = 1e-12;

pub fn edge_weight(w: f64) -> f64 {
    1.0 / w.abs().max(WEIGHT_EPS)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphEdge {
    pub src: u32,
    pub dst: u32,
    pub weight: f64,
    /// Global weight id, or `None` on structural (pooling) layers.
    pub param: Option<usize>,
}

/// Edges from graph layer `l` to `l + 1`, with adjacency by endpoint.
#[derive(Clone, Debug)]
pub struct GraphLayer {
    pub model_layer: usize,
    pub structural: bool,
    pub edges: Vec<GraphEdge>,
    /// Edge indices grouped by source vertex, ascending.
    pub by_src: Vec<Vec<u32>>,
    /// Edge indices grouped by destination vertex, ascending.
    pub by_dst: Vec<Vec<u32>>,
}

impl GraphLayer {
    pub fn out_edges(&self, src: usize) -> impl Iterator<Item = &GraphEdge> {
        self.by_src[src].iter().map(move |&e| &self.edges[e as usize])
    }

    pub fn in_edges(&self, dst: usize) -> impl Iterator<Item = &GraphEdge> {
        self.by_dst[dst].iter().map(move |&e| &self.edges[e as usize])
    }

    /// Weight of edge `src -> dst`, if present.
    pub fn weight(&self, src: usize, dst: usize) -> Option<f64> {
        let list = &self.by_src[src];
        list.binary_search_by_key(&(dst as u32), |&e| self.edges[e as usize].dst)
            .ok()
            .map(|k| self.edges[list[k] as usize].weight)
    }
}

/// Location of an edge: graph layer of its source and index in that layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeRef {
    pub layer: usize,
    pub index: usize,
}

#[derive(Clone, Debug)]
pub struct NeuralGraph {
    /// Vertices per graph layer, `[n, K_1, ..., K_L]`.
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<GraphLayer>,
    /// Neuron kind per graph layer.
    pub kinds: Vec<NeuronKind>,
    /// Edges induced by each global weight id.
    pub param_edges: Vec<Vec<EdgeRef>>,
}

impl NeuralGraph {
    pub fn build(model: &ModelSpec) -> Result<Self> {
        model.validate()?;
        let layout = model.param_layout();
        let mut layers = Vec::with_capacity(model.layers.len());
        let mut param_edges = vec![Vec::new(); layout.total];
        for (k, spec) in model.layers.iter().enumerate() {
            let map = unroll_layer(&spec.kind, &spec.weight, None)?;
            let base = layout.offsets[k];
            let mut edges: Vec<GraphEdge> = map
                .entries
                .iter()
                .map(|e| GraphEdge {
                    src: e.inp as u32,
                    dst: e.out as u32,
                    weight: edge_weight(e.value),
                    param: e.param.map(|p| base + p),
                })
                .collect();
            edges.sort_by_key(|e| (e.dst, e.src));
            let mut by_src = vec![Vec::new(); map.cols];
            let mut by_dst = vec![Vec::new(); map.rows];
            for (idx, e) in edges.iter().enumerate() {
                by_dst[e.dst as usize].push(idx as u32);
                if let Some(p) = e.param {
                    param_edges[p].push(EdgeRef { layer: k, index: idx });
                }
            }
            // Ascending destinations within each source list.
            for (idx, e) in edges.iter().enumerate() {
                by_src[e.src as usize].push(idx as u32);
            }
            for list in by_src.iter_mut() {
                list.sort_by_key(|&i| edges[i as usize].dst);
            }
            layers.push(GraphLayer {
                model_layer: k,
                structural: !spec.kind.is_trainable(),
                edges,
                by_src,
                by_dst,
            });
        }
        Ok(NeuralGraph {
            layer_sizes: model.layer_sizes(),
            layers,
            kinds: model.neuron_kinds(),
            param_edges,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.layer_sizes.iter().sum()
    }

    pub fn edge_count(&self) -> usize {
        self.layers.iter().map(|l| l.edges.len()).sum()
    }

    /// Number of edge layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn edge(&self, r: EdgeRef) -> &GraphEdge {
        &self.layers[r.layer].edges[r.index]
    }

    /// Edge from vertex `src` of layer `layer` to vertex `dst` of the next.
    pub fn find_edge(&self, layer: usize, src: usize, dst: usize) -> Option<EdgeRef> {
        let gl = self.layers.get(layer)?;
        let list = gl.by_src.get(src)?;
        list.binary_search_by_key(&(dst as u32), |&e| gl.edges[e as usize].dst)
            .ok()
            .map(|k| EdgeRef {
                layer,
                index: list[k] as usize,
            })
    }

    /// Edge-list dump, one `layer src dst weight param_id` line per edge
    /// (`-` as param id on structural layers).
    pub fn dump_edges(&self) -> String {
        let mut s = String::new();
        for (l, gl) in self.layers.iter().enumerate() {
            for e in &gl.edges {
                match e.param {
                    Some(p) => writeln!(s, "{l} {} {} {:e} {p}", e.src, e.dst, e.weight),
                    None => writeln!(s, "{l} {} {} {:e} -", e.src, e.dst, e.weight),
                }
                .unwrap();
            }
        }
        s
    }
}

/// Dense row-major matrix of path costs, `+inf` where no edge or path exists.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// `C^(l)` for `l = 1..=L`, stored at index `l - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrixStack {
    pub matrices: Vec<DenseMatrix>,
}

impl CostMatrixStack {
    /// `C^(l)`, mapping graph layer `l - 1` to `l`.
    pub fn c(&self, l: usize) -> &DenseMatrix {
        &self.matrices[l - 1]
    }

    pub fn layer_count(&self) -> usize {
        self.matrices.len()
    }

    pub fn from_matrices(matrices: Vec<DenseMatrix>) -> Result<Self> {
        for (k, w) in matrices.windows(2).enumerate() {
            if w[0].cols != w[1].rows {
                return invalid(format!("cost matrices {} and {} do not compose", k + 1, k + 2));
            }
        }
        if matrices.iter().flat_map(|m| &m.data).any(|&v| !(v > 0.0)) {
            return invalid("cost entries must lie in (0, +inf]");
        }
        Ok(CostMatrixStack { matrices })
    }
}

pub fn cost_matrices(graph: &NeuralGraph) -> CostMatrixStack {
    let matrices = graph
        .layers
        .iter()
        .enumerate()
        .map(|(l, gl)| {
            let mut m = DenseMatrix::filled(graph.layer_sizes[l], graph.layer_sizes[l + 1], f64::INFINITY);
            for e in &gl.edges {
                m.set(e.src as usize, e.dst as usize, e.weight);
            }
            m
        })
        .collect();
    CostMatrixStack { matrices }
}
