//! Shared oracles and generators for the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use neural_ricci::graph::{CostMatrixStack, DenseMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Minimum cost over all vertices of the transportation polytope
/// `{x >= 0 : row sums = a, column sums = b}` with row-major finite costs `c`.
///
/// Every vertex has a spanning-tree basis, and a tree can be dismantled by
/// repeatedly removing a leaf line (a row or column with a single basic
/// cell), which ships its whole residual to its partner. The search branches
/// over (leaf, partner) pairs, so it reaches every basic feasible solution.
/// It only follows the dismantling that always removes the lowest-indexed
/// leaf: when line `l` leaves, every active line `k < l` other than the
/// partner was not a leaf, so it must still serve as a partner before it
/// leaves itself ("pending"). States reached along different orders are
/// merged.
pub fn ot_vertex_oracle(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let mut s = Search {
        m,
        n,
        c,
        memo: HashMap::new(),
    };
    assert!(m + n <= MAX_LINES);
    let mut res = [0.0; MAX_LINES];
    for (r, &v) in res.iter_mut().zip(a.iter().chain(b)) {
        *r = v;
    }
    s.best_from((1u32 << (m + n)) - 1, 0, &res)
}

struct Search<'a> {
    m: usize,
    n: usize,
    c: &'a [f64],
    memo: HashMap<(u32, u32, [i64; MAX_LINES]), f64>,
}

const SLACK: f64 = 1e-12;
const MAX_LINES: usize = 12;

impl Search<'_> {
    fn cost(&self, x: usize, y: usize) -> f64 {
        let (i, j) = if x < self.m { (x, y - self.m) } else { (y, x - self.m) };
        self.c[i * self.n + j]
    }

    /// Cheapest completion from the active lines `mask` with residuals `res`.
    fn best_from(&mut self, mask: u32, pending: u32, res: &[f64; MAX_LINES]) -> f64 {
        let row_bits = (1u32 << self.m) - 1;
        let rows = mask & row_bits;
        let cols = mask & !row_bits;
        if rows.count_ones() == 1 && cols.count_ones() == 1 {
            if pending != 0 {
                return f64::INFINITY;
            }
            let r = rows.trailing_zeros() as usize;
            return self.cost(r, cols.trailing_zeros() as usize) * res[r];
        }
        let mut key = [0i64; MAX_LINES];
        for (k, &r) in key.iter_mut().zip(res) {
            *k = (r * 1e12).round() as i64;
        }
        let key = (mask, pending, key);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let mut best = f64::INFINITY;
        let mut next = *res;
        for (same, other) in [(rows, cols), (cols, rows)] {
            if same.count_ones() < 2 {
                continue;
            }
            for l in bits(same & !pending) {
                for p in bits(other) {
                    let x = res[l];
                    if x > res[p] + SLACK {
                        continue;
                    }
                    let rest = mask & !(1 << l);
                    let lower = rest & ((1u32 << l) - 1) & !(1 << p);
                    let next_pending = (pending & !(1 << p)) | lower;
                    next[l] = 0.0;
                    next[p] = (res[p] - x).max(0.0);
                    let v = self.cost(l, p) * x + self.best_from(rest, next_pending, &next);
                    best = best.min(v);
                    next[l] = res[l];
                    next[p] = res[p];
                }
            }
        }
        self.memo.insert(key, best);
        best
    }
}

fn bits(mut x: u32) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        (x != 0).then(|| {
            let i = x.trailing_zeros() as usize;
            x &= x - 1;
            i
        })
    })
}

/// A random transportation problem with `m x n` support. Half of the draws
/// use masses on a coarse grid so that degenerate bases are common.
pub fn random_ot_problem(rng: &mut ChaCha8Rng, m: usize, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let coarse = rng.gen_bool(0.5);
    let draw = |k: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let raw: Vec<f64> = if coarse {
            (0..k).map(|_| rng.gen_range(0..4) as f64).collect()
        } else {
            (0..k).map(|_| rng.gen_range(0.01..1.0)).collect()
        };
        let total: f64 = raw.iter().sum();
        if total == 0.0 {
            return vec![1.0 / k as f64; k];
        }
        raw.iter().map(|x| x / total).collect()
    };
    let a = draw(m, rng);
    let b = draw(n, rng);
    let integer_costs = rng.gen_bool(0.5);
    let c = (0..m * n)
        .map(|_| {
            if integer_costs {
                rng.gen_range(0..5) as f64
            } else {
                rng.gen_range(0.0..10.0)
            }
        })
        .collect();
    (a, b, c)
}

/// Random layered cost matrices with the given layer sizes. Each edge exists
/// with probability `density`; weights are drawn from a few small integers
/// or from a continuous range, so ties and unreachable pairs both occur.
pub fn random_layered(rng: &mut ChaCha8Rng, sizes: &[usize], density: f64) -> CostMatrixStack {
    let integer = rng.gen_bool(0.5);
    let matrices = sizes
        .windows(2)
        .map(|w| {
            let mut m = DenseMatrix::filled(w[0], w[1], f64::INFINITY);
            for i in 0..w[0] {
                for j in 0..w[1] {
                    if rng.gen_bool(density) {
                        let v = if integer {
                            rng.gen_range(1..4) as f64
                        } else {
                            rng.gen_range(0.05..5.0)
                        };
                        m.set(i, j, v);
                    }
                }
            }
            m
        })
        .collect();
    CostMatrixStack::from_matrices(matrices).unwrap()
}
