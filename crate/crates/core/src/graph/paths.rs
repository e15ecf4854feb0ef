//! Layered min-plus shortest paths and the per-hop tables used to evaluate
//! single-edge overrides without rerunning the full recursion.

use super::{CostMatrixStack, DenseMatrix, NeuralGraph};
use crate::error::{invalid, Result};

/// Substitutes `cost` for the edge `src -> dst` of `C^(layer)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeOverride {
    /// 1-based index of the cost matrix holding the edge.
    pub layer: usize,
    pub src: usize,
    pub dst: usize,
    pub cost: f64,
}

/// `D^(k,l)` via `D^(k,m) = minplus(D^(k,m-1), C^(m))`, starting from
/// `D^(k,k+1) = C^(k+1)`, with an optional single-edge override.
pub fn layered_shortest_paths(
    stack: &CostMatrixStack,
    k: usize,
    l: usize,
    ov: Option<EdgeOverride>,
) -> Result<DenseMatrix> {
    if k >= l {
        return invalid(format!("need k < l, got k = {k}, l = {l}"));
    }
    if l > stack.layer_count() {
        return invalid(format!("layer {l} beyond the stack depth {}", stack.layer_count()));
    }
    if let Some(o) = ov {
        let ok = o.layer >= 1
            && o.layer <= stack.layer_count()
            && o.src < stack.c(o.layer).rows
            && o.dst < stack.c(o.layer).cols
            && stack.c(o.layer).get(o.src, o.dst).is_finite();
        if !ok {
            return invalid("override names an edge that does not exist");
        }
        if !(o.cost > 0.0) {
            return invalid("override cost must lie in (0, +inf]");
        }
    }
    let cost_at = |m: usize, i: usize, j: usize| -> f64 {
        match ov {
            Some(o) if o.layer == m && o.src == i && o.dst == j => o.cost,
            _ => stack.c(m).get(i, j),
        }
    };
    let first = stack.c(k + 1);
    let mut d = DenseMatrix::filled(first.rows, first.cols, f64::INFINITY);
    for i in 0..first.rows {
        for j in 0..first.cols {
            d.set(i, j, cost_at(k + 1, i, j));
        }
    }
    for m in k + 2..=l {
        let c = stack.c(m);
        let mut next = DenseMatrix::filled(d.rows, c.cols, f64::INFINITY);
        for i in 0..d.rows {
            let out = &mut next.data[i * c.cols..(i + 1) * c.cols];
            for (mid, &dim) in d.row(i).iter().enumerate() {
                if dim == f64::INFINITY {
                    continue;
                }
                for (j, slot) in out.iter_mut().enumerate() {
                    let cand = dim + cost_at(m, mid, j);
                    if cand < *slot {
                        *slot = cand;
                    }
                }
            }
        }
        d = next;
    }
    Ok(d)
}

/// Best and second-best path cost between a vertex pair, over distinct
/// choices of the last intermediate vertex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Top2 {
    pub best: f64,
    pub arg: u32,
    pub second: f64,
}

impl Top2 {
    const EMPTY: Top2 = Top2 {
        best: f64::INFINITY,
        arg: u32::MAX,
        second: f64::INFINITY,
    };

    fn push(&mut self, cost: f64, via: u32) {
        if cost < self.best {
            self.second = self.best;
            self.best = cost;
            self.arg = via;
        } else if cost < self.second {
            self.second = cost;
        }
    }

    /// Best cost over paths whose last intermediate is not `via`.
    pub fn excluding(&self, via: u32) -> f64 {
        if self.arg == via {
            self.second
        } else {
            self.best
        }
    }
}

/// Sparse table: for each source vertex, reachable targets in ascending
/// order with their [`Top2`] record.
#[derive(Clone, Debug, Default)]
pub struct HopTable {
    rows: Vec<(Vec<u32>, Vec<Top2>)>,
}

impl HopTable {
    pub fn get(&self, src: usize, dst: usize) -> Option<&Top2> {
        let (cols, vals) = &self.rows[src];
        cols.binary_search(&(dst as u32)).ok().map(|k| &vals[k])
    }

    fn from_dense_rows(rows: Vec<Vec<Top2>>) -> Self {
        HopTable {
            rows: rows
                .into_iter()
                .map(|r| {
                    let mut cols = Vec::new();
                    let mut vals = Vec::new();
                    for (j, t) in r.into_iter().enumerate() {
                        if t.best < f64::INFINITY {
                            cols.push(j as u32);
                            vals.push(t);
                        }
                    }
                    (cols, vals)
                })
                .collect(),
        }
    }
}

/// Two- and three-hop distance tables for every layer offset.
///
/// `two_hop[l]` maps graph layer `l` to `l + 2` (last intermediate in
/// `l + 1`); `three_hop[l]` maps layer `l` to `l + 3` (last intermediate in
/// `l + 2`).
#[derive(Clone, Debug)]
pub struct PathTables {
    pub two_hop: Vec<HopTable>,
    pub three_hop: Vec<HopTable>,
}

impl PathTables {
    pub fn build(graph: &NeuralGraph) -> Self {
        use rayon::prelude::*;
        let depth = graph.depth();
        let two_hop: Vec<HopTable> = (0..depth.saturating_sub(1))
            .map(|l| {
                let (a, b) = (&graph.layers[l], &graph.layers[l + 1]);
                let width = graph.layer_sizes[l + 2];
                let rows: Vec<Vec<Top2>> = (0..graph.layer_sizes[l])
                    .into_par_iter()
                    .map(|s| {
                        let mut row = vec![Top2::EMPTY; width];
                        for e1 in a.out_edges(s) {
                            for e2 in b.out_edges(e1.dst as usize) {
                                row[e2.dst as usize].push(e1.weight + e2.weight, e1.dst);
                            }
                        }
                        row
                    })
                    .collect();
                HopTable::from_dense_rows(rows)
            })
            .collect();
        let three_hop: Vec<HopTable> = (0..depth.saturating_sub(2))
            .map(|l| {
                let c = &graph.layers[l + 2];
                let width = graph.layer_sizes[l + 3];
                let rows: Vec<Vec<Top2>> = (0..graph.layer_sizes[l])
                    .into_par_iter()
                    .map(|s| {
                        let mut row = vec![Top2::EMPTY; width];
                        let (cols, vals) = &two_hop[l].rows[s];
                        for (&m2, t) in cols.iter().zip(vals) {
                            for e in c.out_edges(m2 as usize) {
                                row[e.dst as usize].push(t.best + e.weight, m2);
                            }
                        }
                        row
                    })
                    .collect();
                HopTable::from_dense_rows(rows)
            })
            .collect();
        PathTables { two_hop, three_hop }
    }
}

/// Distances between the endpoints' neighborhoods when edge `u -> v` (from
/// graph layer `l`) costs `d` instead of its static weight. Requires
/// `d >= w(u, v)`.
pub struct OverrideView<'a> {
    graph: &'a NeuralGraph,
    tables: &'a PathTables,
    l: usize,
    u: usize,
    v: usize,
    d: f64,
    pure: bool,
}

impl<'a> OverrideView<'a> {
    /// With `pure`, the override is ignored for path lengths (every edge
    /// keeps its static weight, including `u -> v`).
    pub fn new(
        graph: &'a NeuralGraph,
        tables: &'a PathTables,
        l: usize,
        u: usize,
        v: usize,
        d: f64,
        pure: bool,
    ) -> Self {
        OverrideView {
            graph,
            tables,
            l,
            u,
            v,
            d,
            pure,
        }
    }

    fn static_uv(&self) -> f64 {
        self.graph.layers[self.l]
            .weight(self.u, self.v)
            .unwrap_or(f64::INFINITY)
    }

    fn d_eff(&self) -> f64 {
        if self.pure {
            self.static_uv()
        } else {
            self.d
        }
    }

    pub fn u_to_v(&self) -> f64 {
        self.d_eff()
    }

    /// `u` (layer `l`) to `t` (layer `l + 2`).
    pub fn u_to_t(&self, t: usize) -> f64 {
        let via_v = self.d_eff() + self.graph.layers[self.l + 1].weight(self.v, t).unwrap_or(f64::INFINITY);
        match self.tables.two_hop[self.l].get(self.u, t) {
            Some(rec) => rec.excluding(self.v as u32).min(via_v),
            None => via_v,
        }
    }

    /// `s` (layer `l - 1`) to `v` (layer `l + 1`).
    pub fn s_to_v(&self, s: usize) -> f64 {
        let via_u = self.graph.layers[self.l - 1].weight(s, self.u).unwrap_or(f64::INFINITY) + self.d_eff();
        match self.tables.two_hop[self.l - 1].get(s, self.v) {
            Some(rec) => rec.excluding(self.u as u32).min(via_u),
            None => via_u,
        }
    }

    /// `s` (layer `l - 1`) to `t` (layer `l + 2`), given `s_to_v(s)`.
    pub fn s_to_t(&self, s: usize, t: usize, s_v: f64) -> f64 {
        let via_v = s_v + self.graph.layers[self.l + 1].weight(self.v, t).unwrap_or(f64::INFINITY);
        match self.tables.three_hop[self.l - 1].get(s, t) {
            Some(rec) => rec.excluding(self.v as u32).min(via_v),
            None => via_v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::cost_matrices;
    use crate::nn::model::{Activation, ModelSpec};

    #[test]
    fn two_unit_hops() {
        let ones = DenseMatrix::filled(3, 3, 1.0);
        let stack = CostMatrixStack::from_matrices(vec![ones.clone(), ones]).unwrap();
        let d = layered_shortest_paths(&stack, 0, 2, None).unwrap();
        assert!(d.data.iter().all(|&v| v == 2.0));
        assert!(layered_shortest_paths(&stack, 1, 1, None).is_err());
    }

    #[test]
    fn cutting_the_only_route() {
        let inf = f64::INFINITY;
        let c1 = DenseMatrix {
            rows: 2,
            cols: 2,
            data: vec![1.0, inf, inf, 1.0],
        };
        let c2 = DenseMatrix {
            rows: 2,
            cols: 1,
            data: vec![1.0, 1.0],
        };
        let stack = CostMatrixStack::from_matrices(vec![c1, c2]).unwrap();
        let ov = EdgeOverride {
            layer: 1,
            src: 0,
            dst: 0,
            cost: inf,
        };
        let d = layered_shortest_paths(&stack, 0, 2, Some(ov)).unwrap();
        assert_eq!(d.data, vec![inf, 2.0]);
        let missing = EdgeOverride { src: 0, dst: 1, ..ov };
        assert!(layered_shortest_paths(&stack, 0, 2, Some(missing)).is_err());
    }

    #[test]
    fn override_view_matches_full_recursion() {
        let m = ModelSpec::mlp(&[5, 4, 4, 3, 2], Activation::Tanh, 21).unwrap();
        let g = crate::graph::NeuralGraph::build(&m).unwrap();
        let stack = cost_matrices(&g);
        let tables = PathTables::build(&g);
        for l in 1..3 {
            for u in 0..g.layer_sizes[l] {
                for v in 0..g.layer_sizes[l + 1] {
                    let w = stack.c(l + 1).get(u, v);
                    for d in [w, w * 1.7, w * 40.0, f64::INFINITY] {
                        let ov = EdgeOverride {
                            layer: l + 1,
                            src: u,
                            dst: v,
                            cost: d,
                        };
                        let view = OverrideView::new(&g, &tables, l, u, v, d, false);
                        let d_ut = layered_shortest_paths(&stack, l, l + 2, Some(ov)).unwrap();
                        let d_sv = layered_shortest_paths(&stack, l - 1, l + 1, Some(ov)).unwrap();
                        let d_st = layered_shortest_paths(&stack, l - 1, l + 2, Some(ov)).unwrap();
                        for t in 0..g.layer_sizes[l + 2] {
                            assert_eq!(view.u_to_t(t), d_ut.get(u, t));
                        }
                        for s in 0..g.layer_sizes[l - 1] {
                            let sv = view.s_to_v(s);
                            assert_eq!(sv, d_sv.get(s, v));
                            for t in 0..g.layer_sizes[l + 2] {
                                assert_eq!(view.s_to_t(s, t, sv), d_st.get(s, t));
                            }
                        }
                    }
                }
            }
        }
    }
}
