//! Exact optimal transport between discrete distributions by the
//! transportation simplex on a spanning-tree basis.
//!
//! Costs may be `+inf`; they are handled as the lexicographic pair
//! `(1, 0)` against `(0, c)` for finite `c`, so an infinite cell is only ever
//! used when no finite plan exists, which is then reported as an error.

use crate::error::{invalid, Error, Result};

/// Masses on distinct vertex ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    pub support: Vec<usize>,
    pub mass: Vec<f64>,
}

impl Distribution {
    pub fn new(support: Vec<usize>, mass: Vec<f64>) -> Result<Self> {
        if support.len() != mass.len() || support.is_empty() {
            return invalid("distribution needs one mass per support vertex");
        }
        if mass.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return invalid("masses must be finite and non-negative");
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("masses sum to {total}, not 1"));
        }
        let mut ids = support.clone();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return invalid("support ids must be unique");
        }
        Ok(Distribution { support, mass })
    }

    pub fn point(v: usize) -> Self {
        Distribution {
            support: vec![v],
            mass: vec![1.0],
        }
    }

    /// `alpha` on `center`, `(1 - alpha)` spread according to `self`.
    pub fn blend(&self, center: usize, alpha: f64) -> Distribution {
        let mut support = Vec::with_capacity(self.support.len() + 1);
        let mut mass = Vec::with_capacity(self.support.len() + 1);
        support.push(center);
        mass.push(alpha);
        for (&s, &m) in self.support.iter().zip(&self.mass) {
            let scaled = (1.0 - alpha) * m;
            if s == center {
                mass[0] += scaled;
            } else {
                support.push(s);
                mass.push(scaled);
            }
        }
        Distribution { support, mass }
    }

    /// Copy with zero-mass vertices removed.
    pub fn trimmed(&self) -> Distribution {
        let (support, mass) = self
            .support
            .iter()
            .zip(&self.mass)
            .filter(|(_, &m)| m > 0.0)
            .map(|(&s, &m)| (s, m))
            .unzip();
        Distribution { support, mass }
    }
}

/// An optimal plan: total cost and the basic cells `(row, col, flow)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub cost: f64,
    pub flows: Vec<(usize, usize, f64)>,
}

/// Flow below this on an infinite-cost cell is treated as rounding residue.
const INF_FLOW_TOL: f64 = 1e-13;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_RUN: usize = 8;
const NO_PARENT: usize = usize::MAX;

fn check_inputs(a: &[f64], b: &[f64], c: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return invalid("transport needs non-empty supply and demand");
    }
    if c.len() != a.len() * b.len() {
        return invalid("cost matrix shape does not match the marginals");
    }
    if a.iter().chain(b).any(|&m| !(m >= 0.0) || !m.is_finite()) {
        return invalid("marginals must be finite and non-negative");
    }
    if c.iter().any(|&x| !(x >= 0.0)) {
        return invalid("costs must be non-negative (or +inf)");
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (sa - sb).abs() > 1e-9 * sa.max(sb).max(1.0) {
        return invalid(format!("unbalanced marginals: {sa} vs {sb}"));
    }
    Ok(())
}

fn finish(flows: Vec<(usize, usize, f64)>, c: &[f64], n: usize) -> Result<TransportPlan> {
    let mut cost = 0.0;
    for &(i, j, x) in &flows {
        let cij = c[i * n + j];
        if cij == f64::INFINITY {
            if x > INF_FLOW_TOL {
                return Err(Error::InfeasibleTransport);
            }
        } else if x > 0.0 {
            cost += x * cij;
        }
    }
    Ok(TransportPlan { cost, flows })
}

/// Minimum-cost plan moving supply `a` (rows) onto demand `b` (columns)
/// under row-major costs `c`.
pub fn solve_transport(a: &[f64], b: &[f64], c: &[f64]) -> Result<TransportPlan> {
    check_inputs(a, b, c)?;
    let (m, n) = (a.len(), b.len());
    if m == 1 {
        return finish((0..n).map(|j| (0, j, b[j])).collect(), c, n);
    }
    if n == 1 {
        return finish((0..m).map(|i| (i, 0, a[i])).collect(), c, n);
    }
    Simplex::new(a, b, c).run()
}

struct Simplex<'a> {
    m: usize,
    n: usize,
    c: &'a [f64],
    /// Cost split into (count of infinite terms, finite part), row-major.
    c_inf: Vec<i64>,
    c_fin: Vec<f64>,
    /// Basic cells as `(row, col)`; always `m + n - 1` of them.
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    is_basic: Vec<bool>,
    /// Basis tree over nodes `0..m` (rows) and `m..m+n` (columns); entries
    /// are `(neighbor, cell index)`.
    adj: Vec<Vec<(usize, usize)>>,
    pot_inf: Vec<i64>,
    pot_fin: Vec<f64>,
    /// Parent `(node, cell)` in the basis tree rooted at row 0.
    parent: Vec<(usize, usize)>,
    depth: Vec<usize>,
    stack: Vec<usize>,
    tol: f64,
    all_finite: bool,
    cursor: usize,
}

impl<'a> Simplex<'a> {
    fn new(a: &[f64], b: &[f64], c: &'a [f64]) -> Self {
        let (m, n) = (a.len(), b.len());
        let max_fin = c.iter().filter(|x| x.is_finite()).fold(0.0f64, |acc, &x| acc.max(x));
        // Least-cost start: visit cells by ascending cost and saturate each
        // one whose row and column are still open, closing exactly one line
        // per allocation (both at the last). This yields a spanning tree of
        // m + n - 1 cells, possibly degenerate.
        let mut order: Vec<usize> = (0..m * n).collect();
        let key = |k: usize| (c[k] == f64::INFINITY, if c[k].is_finite() { c[k] } else { 0.0 });
        order.sort_by(|&p, &q| {
            let (kp, kq) = (key(p), key(q));
            kp.0.cmp(&kq.0).then(kp.1.total_cmp(&kq.1)).then(p.cmp(&q))
        });
        let mut ra = a.to_vec();
        let mut rb = b.to_vec();
        let mut row_open = vec![true; m];
        let mut col_open = vec![true; n];
        let (mut rows_left, mut cols_left) = (m, n);
        let mut cells = Vec::with_capacity(m + n - 1);
        let mut flow = Vec::with_capacity(m + n - 1);
        for k in order {
            let (i, j) = (k / n, k % n);
            if !row_open[i] || !col_open[j] {
                continue;
            }
            let x = ra[i].min(rb[j]).max(0.0);
            cells.push((i, j));
            flow.push(x);
            ra[i] -= x;
            rb[j] -= x;
            if rows_left == 1 && cols_left == 1 {
                break;
            }
            if (ra[i] <= rb[j] && rows_left > 1) || cols_left == 1 {
                row_open[i] = false;
                rows_left -= 1;
            } else {
                col_open[j] = false;
                cols_left -= 1;
            }
        }
        debug_assert_eq!(cells.len(), m + n - 1);
        let mut is_basic = vec![false; m * n];
        let mut adj = vec![Vec::new(); m + n];
        for (k, &(i, j)) in cells.iter().enumerate() {
            is_basic[i * n + j] = true;
            adj[i].push((m + j, k));
            adj[m + j].push((i, k));
        }
        let c_inf = c.iter().map(|&x| i64::from(x == f64::INFINITY)).collect();
        let c_fin = c.iter().map(|&x| if x.is_finite() { x } else { 0.0 }).collect();
        Simplex {
            m,
            n,
            c,
            c_inf,
            c_fin,
            cells,
            flow,
            is_basic,
            adj,
            pot_inf: vec![0; m + n],
            pot_fin: vec![0.0; m + n],
            parent: vec![(NO_PARENT, 0); m + n],
            depth: vec![0; m + n],
            stack: Vec::with_capacity(m + n),
            tol: 1e-12 * max_fin,
            all_finite: c.iter().all(|x| x.is_finite()),
            cursor: 0,
        }
    }

    /// Hangs the subtree reachable from `x` (without crossing to `y`) below
    /// `y` through basic cell `k`, refreshing parents, depths and the dual
    /// potentials `u_i + v_j = c_ij` inside it.
    fn hang(&mut self, x: usize, y: usize, k: usize) {
        self.parent[x] = (y, k);
        self.stack.clear();
        self.stack.push(x);
        while let Some(z) = self.stack.pop() {
            let (p, cell) = self.parent[z];
            if p == NO_PARENT {
                self.depth[z] = 0;
                self.pot_inf[z] = 0;
                self.pot_fin[z] = 0.0;
            } else {
                let (i, j) = self.cells[cell];
                let c = i * self.n + j;
                self.depth[z] = self.depth[p] + 1;
                self.pot_inf[z] = self.c_inf[c] - self.pot_inf[p];
                self.pot_fin[z] = self.c_fin[c] - self.pot_fin[p];
            }
            for idx in 0..self.adj[z].len() {
                let (w, kw) = self.adj[z][idx];
                if w != p {
                    self.parent[w] = (z, kw);
                    self.stack.push(w);
                }
            }
        }
    }

    /// Cell indices on the tree path from column `j` to row `i`, ordered from
    /// the column end; returns how many of them lie on the column's side of
    /// the common ancestor.
    fn path(&self, i: usize, j: usize, out: &mut Vec<usize>) -> usize {
        out.clear();
        let mut tail = Vec::new();
        let (mut a, mut b) = (self.m + j, i);
        while a != b {
            if self.depth[a] >= self.depth[b] {
                let (p, k) = self.parent[a];
                out.push(k);
                a = p;
            } else {
                let (p, k) = self.parent[b];
                tail.push(k);
                b = p;
            }
        }
        let column_side = out.len();
        out.extend(tail.iter().rev());
        column_side
    }

    fn unlink(&mut self, node: usize, cell: usize) {
        let list = &mut self.adj[node];
        let pos = list.iter().position(|&(_, k)| k == cell).expect("cell is in the tree");
        list.swap_remove(pos);
    }

    /// Entering cell by lexicographic reduced cost: most negative (ties to
    /// the lowest cell), or the first negative one under Bland's rule.
    fn price_lex(&self, bland: bool) -> Option<(usize, usize, (i64, f64))> {
        let (m, n) = (self.m, self.n);
        let mut enter: Option<(usize, usize, (i64, f64))> = None;
        for i in 0..m {
            let (ui, uf) = (self.pot_inf[i], self.pot_fin[i]);
            let row = i * n;
            for j in 0..n {
                if self.is_basic[row + j] {
                    continue;
                }
                let r = (
                    self.c_inf[row + j] - ui - self.pot_inf[m + j],
                    self.c_fin[row + j] - uf - self.pot_fin[m + j],
                );
                let negative = r.0 < 0 || (r.0 == 0 && r.1 < -self.tol);
                if !negative {
                    continue;
                }
                let better = match enter {
                    None => true,
                    Some((_, _, best)) => r.0 < best.0 || (r.0 == best.0 && r.1 < best.1),
                };
                if better {
                    enter = Some((i, j, r));
                    if bland {
                        return enter;
                    }
                }
            }
        }
        enter
    }

    /// Block pricing for all-finite costs: scan whole rows cyclically from
    /// `cursor` and stop at the end of the first block of rows (about
    /// `sqrt(m n)` cells) that contains a negative reduced cost, returning
    /// the most negative one seen. Under Bland's rule, the first negative
    /// cell in row-major order. Basic cells have reduced cost zero up to
    /// rounding far below `tol`.
    fn price_finite(&mut self, bland: bool) -> Option<(usize, usize, (i64, f64))> {
        let (m, n) = (self.m, self.n);
        let block_rows = (((m * n) as f64).sqrt() / n as f64).ceil().max(1.0) as usize;
        let start = if bland { 0 } else { self.cursor };
        let mut best = -self.tol;
        let mut at = None;
        for step in 0..m {
            let i = (start + step) % m;
            let ui = self.pot_fin[i];
            let row = &self.c_fin[i * n..(i + 1) * n];
            for (j, (&c, &vj)) in row.iter().zip(&self.pot_fin[m..m + n]).enumerate() {
                let r = c - ui - vj;
                if r < best && !self.is_basic[i * n + j] {
                    best = r;
                    at = Some((i, j));
                    if bland {
                        return Some((i, j, (0, r)));
                    }
                }
            }
            if at.is_some() && (step + 1) % block_rows == 0 {
                self.cursor = (i + 1) % m;
                break;
            }
        }
        at.map(|(i, j)| (i, j, (0, best)))
    }

    fn run(mut self) -> Result<TransportPlan> {
        let (m, n) = (self.m, self.n);
        let limit = 50 * (m + n) * (m + n) + 1000;
        let mut degenerate = 0usize;
        let mut path = Vec::with_capacity(m + n);
        self.hang(0, NO_PARENT, 0);
        for _ in 0..limit {
            let bland = degenerate >= DEGENERATE_RUN;
            let enter = if self.all_finite {
                self.price_finite(bland)
            } else {
                self.price_lex(bland)
            };
            let Some((ei, ej, _)) = enter else {
                let flows = self
                    .cells
                    .iter()
                    .zip(&self.flow)
                    .map(|(&(i, j), &x)| (i, j, x))
                    .collect();
                return finish(flows, self.c, n);
            };
            let column_side = self.path(ei, ej, &mut path);
            // Alternating signs along the cycle, starting with '-' next to
            // the entering column.
            let mut theta = f64::INFINITY;
            let mut leave = usize::MAX;
            let mut leave_pos = 0;
            for (pos, &k) in path.iter().enumerate().step_by(2) {
                let x = self.flow[k];
                if x < theta || (x == theta && self.cells[k] < self.cells[leave]) {
                    theta = x;
                    leave = k;
                    leave_pos = pos;
                }
            }
            for (pos, &k) in path.iter().enumerate() {
                if pos % 2 == 0 {
                    self.flow[k] -= theta;
                } else {
                    self.flow[k] += theta;
                }
            }
            let (li, lj) = self.cells[leave];
            self.unlink(li, leave);
            self.unlink(m + lj, leave);
            self.is_basic[li * n + lj] = false;
            self.is_basic[ei * n + ej] = true;
            self.cells[leave] = (ei, ej);
            self.flow[leave] = theta;
            self.adj[ei].push((m + ej, leave));
            self.adj[m + ej].push((ei, leave));
            // The endpoint on the leaving cell's side of the cycle is cut off
            // from the root; re-hang it below the other endpoint.
            if leave_pos < column_side {
                self.hang(m + ej, ei, leave);
            } else {
                self.hang(ei, m + ej, leave);
            }
            if theta > 0.0 {
                degenerate = 0;
            } else {
                degenerate += 1;
            }
        }
        Err(Error::PivotLimit(limit))
    }
}

/// Exact Wasserstein distance between `mu` and `mv` under `ground(x, y)`.
pub fn wasserstein(mu: &Distribution, mv: &Distribution, ground: impl Fn(usize, usize) -> f64) -> Result<f64> {
    Ok(transport_plan(mu, mv, ground)?.cost)
}

/// Like [`wasserstein`], also returning the plan (indices refer to the
/// zero-trimmed supports).
pub fn transport_plan(
    mu: &Distribution,
    mv: &Distribution,
    ground: impl Fn(usize, usize) -> f64,
) -> Result<TransportPlan> {
    let (p, q) = (mu.trimmed(), mv.trimmed());
    if p.support.is_empty() || q.support.is_empty() {
        return invalid("distribution has no positive mass");
    }
    let mut c = Vec::with_capacity(p.support.len() * q.support.len());
    for &x in &p.support {
        for &y in &q.support {
            c.push(ground(x, y));
        }
    }
    solve_transport(&p.mass, &q.mass, &c)
}
