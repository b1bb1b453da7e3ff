//! Primal network simplex for the uncapacitated transportation problem.
//!
//! Supply nodes `0..m`, demand nodes `m..m+n`, and an artificial root `m+n`
//! joined to every node by a big-M arc. The spanning tree is kept strongly
//! feasible (zero-flow tree arcs point towards the root), which rules out
//! cycling under degenerate pivots.

use crate::error::{Error, Result};

const UP: i8 = 1;
const DOWN: i8 = -1;

/// Optimal flow and tree potentials of a transportation problem.
#[derive(Debug, Clone)]
pub struct FlowSolution {
    /// Nonzero flows `(i, j, mass)`, row-major.
    pub flows: Vec<(usize, usize, f64)>,
    pub cost: f64,
    /// Potentials `u_i` with `u_i + v_j <= c_ij`, equality on tree arcs.
    pub row_prices: Vec<f64>,
    pub col_prices: Vec<f64>,
    pub pivots: usize,
}

struct Network<'a> {
    m: usize,
    n: usize,
    cost: &'a [f64],
    art_cost: f64,
    flow: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    dir: Vec<i8>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    children: Vec<Vec<usize>>,
}

impl Network<'_> {
    fn root(&self) -> usize {
        self.m + self.n
    }

    fn real_arcs(&self) -> usize {
        self.m * self.n
    }

    fn source(&self, e: usize) -> usize {
        if e < self.real_arcs() {
            e / self.n
        } else {
            let u = e - self.real_arcs();
            if u < self.m {
                u
            } else {
                self.root()
            }
        }
    }

    fn target(&self, e: usize) -> usize {
        if e < self.real_arcs() {
            self.m + e % self.n
        } else {
            let u = e - self.real_arcs();
            if u < self.m {
                self.root()
            } else {
                u
            }
        }
    }

    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.real_arcs() {
            self.cost[e]
        } else {
            self.art_cost
        }
    }

    fn reduced_cost(&self, e: usize) -> f64 {
        self.arc_cost(e) - self.pi[self.source(e)] + self.pi[self.target(e)]
    }

    fn join(&self, mut a: usize, mut b: usize) -> usize {
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        a
    }

    fn detach(&mut self, child: usize) {
        let p = self.parent[child];
        let list = &mut self.children[p];
        let pos = list.iter().position(|&c| c == child).expect("tree child lists consistent");
        list.swap_remove(pos);
    }

    /// Push flow around the cycle closed by `e_in` and rotate the tree.
    fn pivot(&mut self, e_in: usize) {
        let first = self.source(e_in);
        let second = self.target(e_in);
        let join = self.join(first, second);

        let mut delta = f64::INFINITY;
        let mut u_out = usize::MAX;
        let mut from_first = true;
        let mut u = first;
        while u != join {
            let d = if self.dir[u] == DOWN { f64::INFINITY } else { self.flow[self.pred[u]] };
            if d < delta {
                delta = d;
                u_out = u;
            }
            u = self.parent[u];
        }
        u = second;
        while u != join {
            let d = if self.dir[u] == UP { f64::INFINITY } else { self.flow[self.pred[u]] };
            if d <= delta {
                delta = d;
                u_out = u;
                from_first = false;
            }
            u = self.parent[u];
        }
        debug_assert!(delta.is_finite(), "uncapacitated cycle with negative cost");

        if delta > 0.0 {
            self.flow[e_in] += delta;
            let mut u = first;
            while u != join {
                let e = self.pred[u];
                if self.dir[u] == UP {
                    self.flow[e] -= delta;
                } else {
                    self.flow[e] += delta;
                }
                u = self.parent[u];
            }
            u = second;
            while u != join {
                let e = self.pred[u];
                if self.dir[u] == UP {
                    self.flow[e] += delta;
                } else {
                    self.flow[e] -= delta;
                }
                u = self.parent[u];
            }
        }

        let (u_in, v_in) = if from_first { (first, second) } else { (second, first) };

        // reverse the tree path u_in -> ... -> u_out and hang it below v_in
        let mut path = vec![u_in];
        while *path.last().unwrap() != u_out {
            path.push(self.parent[*path.last().unwrap()]);
        }
        for &w in path.iter().rev() {
            self.detach(w);
        }
        let old_pred: Vec<usize> = path.iter().map(|&w| self.pred[w]).collect();
        let old_dir: Vec<i8> = path.iter().map(|&w| self.dir[w]).collect();
        self.parent[u_in] = v_in;
        self.pred[u_in] = e_in;
        self.dir[u_in] = if self.source(e_in) == u_in { UP } else { DOWN };
        self.children[v_in].push(u_in);
        for k in 1..path.len() {
            let w = path[k];
            self.parent[w] = path[k - 1];
            self.pred[w] = old_pred[k - 1];
            self.dir[w] = -old_dir[k - 1];
            self.children[path[k - 1]].push(w);
        }

        // recompute potentials from the parent arc so rounding does not accumulate
        self.depth[u_in] = self.depth[v_in] + 1;
        let mut stack = vec![u_in];
        while let Some(w) = stack.pop() {
            let p = self.parent[w];
            let c = self.arc_cost(self.pred[w]);
            self.pi[w] = if self.dir[w] == UP { c + self.pi[p] } else { self.pi[p] - c };
            for k in 0..self.children[w].len() {
                let ch = self.children[w][k];
                self.depth[ch] = self.depth[w] + 1;
                stack.push(ch);
            }
        }
    }
}

/// Solve `min sum c_ij g_ij` over couplings of `supply` and `demand`.
///
/// `cost` is row-major `m x n`. Both marginals must be nonnegative with equal
/// totals up to rounding.
pub fn transport_simplex(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<FlowSolution> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 || cost.len() != m * n {
        return Err(Error::InvalidParameter(format!("cost matrix has {} entries for a {m} x {n} problem", cost.len())));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter("non-finite transport cost".into()));
    }
    let cmax = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let nodes = m + n + 1;
    let root = m + n;
    let art_cost = (cmax + 1.0) * nodes as f64;
    let arcs = m * n;

    let mut net = Network {
        m,
        n,
        cost,
        art_cost,
        flow: vec![0.0; arcs + m + n],
        parent: vec![root; nodes],
        pred: (0..nodes).map(|u| arcs + u).collect(),
        dir: vec![DOWN; nodes],
        depth: vec![1; nodes],
        pi: vec![0.0; nodes],
        children: vec![Vec::new(); nodes],
    };
    net.depth[root] = 0;
    net.parent[root] = usize::MAX;
    net.children[root] = (0..m + n).collect();
    for i in 0..m {
        net.flow[arcs + i] = supply[i];
        net.dir[i] = UP;
        net.pi[i] = art_cost;
    }
    for j in 0..n {
        net.flow[arcs + m + j] = demand[j];
        net.pi[m + j] = -art_cost;
    }

    let tol = 1e-11 * (cmax + 1.0);
    let block = ((arcs as f64).sqrt().ceil() as usize).max(10).min(arcs);
    let max_pivots = 50 * (arcs + nodes) + 10_000;
    let mut next = 0usize;
    let mut pivots = 0usize;
    loop {
        // block search: most negative reduced cost within the first improving block
        let mut best = None;
        let mut best_rc = -tol;
        let mut scanned = 0;
        while scanned < arcs {
            let end = (scanned + block).min(arcs);
            for _ in scanned..end {
                let e = next;
                next += 1;
                if next == arcs {
                    next = 0;
                }
                let rc = net.reduced_cost(e);
                if rc < best_rc {
                    best_rc = rc;
                    best = Some(e);
                }
            }
            scanned = end;
            if best.is_some() {
                break;
            }
        }
        let Some(e_in) = best else { break };
        if pivots == max_pivots {
            return Err(Error::SolverNonConvergence(pivots));
        }
        net.pivot(e_in);
        pivots += 1;
    }

    let leftover: f64 = net.flow[arcs..].iter().sum();
    let total: f64 = supply.iter().sum::<f64>().max(demand.iter().sum());
    if leftover > 1e-9 * total.max(1e-300) {
        return Err(Error::Precondition(format!(
            "marginals are unbalanced: {leftover:e} mass left on artificial arcs"
        )));
    }

    let mut flows = Vec::new();
    let mut total_cost = 0.0;
    for e in 0..arcs {
        let f = net.flow[e];
        if f > 0.0 {
            flows.push((e / n, e % n, f));
            total_cost += f * cost[e];
        }
    }
    Ok(FlowSolution {
        flows,
        cost: total_cost,
        row_prices: net.pi[..m].to_vec(),
        col_prices: net.pi[m..m + n].iter().map(|p| -p).collect(),
        pivots,
    })
}
