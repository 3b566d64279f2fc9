//! Exact discrete optimal transport by the transportation (network) simplex.
//!
//! The bipartite supply/demand problem is solved on a spanning-tree basis
//! seeded by the north-west corner rule. Entering and leaving cells follow
//! Bland's smallest-index rule, which rules out cycling on degenerate
//! bases.

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

const MAX_PIVOTS: usize = 100_000;
const REDUCED_COST_TOL: f64 = 1e-12;

/// Optimal plan for `min Σ T·cost` with row sums `supply` and column sums
/// `demand`. Returns the optimal value and the full `|supply| × |demand|` plan.
pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &Matrix) -> Result<(f64, Matrix)> {
    if cost.shape() != (supply.len(), demand.len()) {
        return Err(Error::Shape {
            op: "solve_transport",
            lhs: cost.shape(),
            rhs: (supply.len(), demand.len()),
        });
    }
    if supply.iter().chain(demand).any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::invalid("transport weights must be finite and non-negative"));
    }
    let (ts, td): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    if (ts - td).abs() > 1e-9 * ts.max(td).max(1.0) {
        return Err(Error::invalid(format!("unbalanced transport: {ts} vs {td}")));
    }

    let rows: Vec<usize> = (0..supply.len()).filter(|&i| supply[i] > 0.0).collect();
    let cols: Vec<usize> = (0..demand.len()).filter(|&j| demand[j] > 0.0).collect();
    let mut plan = Matrix::zeros(supply.len(), demand.len());
    if rows.is_empty() || cols.is_empty() {
        return Ok((0.0, plan));
    }
    for &i in &rows {
        for &j in &cols {
            if !cost.get(i, j).is_finite() {
                return Err(Error::Disconnected(format!(
                    "infinite cost between support entries {i} and {j}"
                )));
            }
        }
    }

    let a: Vec<f64> = rows.iter().map(|&i| supply[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| demand[j]).collect();
    let c = Matrix::from_vec(
        rows.len(),
        cols.len(),
        rows.iter()
            .flat_map(|&i| cols.iter().map(move |&j| (i, j)))
            .map(|(i, j)| cost.get(i, j))
            .collect(),
    )?;
    let x = TransportSimplex::new(&a, &b, &c).solve()?;

    let mut total = 0.0;
    for (ri, &i) in rows.iter().enumerate() {
        for (cj, &j) in cols.iter().enumerate() {
            let f = x.get(ri, cj);
            plan.set(i, j, f);
            total += f * c.get(ri, cj);
        }
    }
    Ok((total, plan))
}

struct TransportSimplex<'a> {
    m: usize,
    n: usize,
    cost: &'a Matrix,
    flow: Matrix,
    basic: Vec<bool>,
}

impl<'a> TransportSimplex<'a> {
    fn new(supply: &[f64], demand: &[f64], cost: &'a Matrix) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let mut flow = Matrix::zeros(m, n);
        let mut basic = vec![false; m * n];
        let mut ra = supply.to_vec();
        let mut rb = demand.to_vec();
        let (mut i, mut j) = (0, 0);
        // north-west corner: exactly m + n - 1 basic cells, some possibly zero
        while i < m && j < n {
            let x = ra[i].min(rb[j]);
            flow.set(i, j, x);
            basic[i * n + j] = true;
            ra[i] -= x;
            rb[j] -= x;
            if i == m - 1 {
                j += 1;
            } else if j == n - 1 || ra[i] <= rb[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        TransportSimplex {
            m,
            n,
            cost,
            flow,
            basic,
        }
    }

    /// Tree adjacency over m row-nodes followed by n column-nodes.
    fn tree(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for i in 0..self.m {
            for j in 0..self.n {
                if self.basic[i * self.n + j] {
                    adj[i].push(self.m + j);
                    adj[self.m + j].push(i);
                }
            }
        }
        adj
    }

    fn potentials(&self, adj: &[Vec<usize>]) -> Result<(Vec<f64>, Vec<f64>)> {
        let total = self.m + self.n;
        let mut pot = vec![f64::NAN; total];
        pot[0] = 0.0;
        let mut stack = vec![0usize];
        let mut seen = 1;
        while let Some(u) = stack.pop() {
            for &w in &adj[u] {
                if pot[w].is_nan() {
                    let (i, j) = if u < self.m { (u, w - self.m) } else { (w, u - self.m) };
                    // u_i + v_j = c_ij
                    pot[w] = self.cost.get(i, j) - pot[u];
                    seen += 1;
                    stack.push(w);
                }
            }
        }
        if seen != total {
            return Err(Error::invalid("transport basis is not a spanning tree"));
        }
        Ok((pot[..self.m].to_vec(), pot[self.m..].to_vec()))
    }

    /// Tree path from `from` to `to`, as a node sequence.
    fn tree_path(adj: &[Vec<usize>], from: usize, to: usize) -> Vec<usize> {
        let mut parent = vec![usize::MAX; adj.len()];
        parent[from] = from;
        let mut queue = std::collections::VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            if u == to {
                break;
            }
            for &w in &adj[u] {
                if parent[w] == usize::MAX {
                    parent[w] = u;
                    queue.push_back(w);
                }
            }
        }
        let mut path = vec![to];
        let mut cur = to;
        while cur != from {
            cur = parent[cur];
            path.push(cur);
        }
        path.reverse();
        path
    }

    fn solve(mut self) -> Result<Matrix> {
        for _ in 0..MAX_PIVOTS {
            let adj = self.tree();
            let (u, v) = self.potentials(&adj)?;
            let entering = (0..self.m * self.n).find(|&k| {
                let (i, j) = (k / self.n, k % self.n);
                !self.basic[k] && self.cost.get(i, j) - u[i] - v[j] < -REDUCED_COST_TOL
            });
            let Some(enter) = entering else {
                return Ok(self.flow);
            };
            let (ei, ej) = (enter / self.n, enter % self.n);

            // cycle: entering cell (+), then the tree path from column ej back to row ei
            let path = Self::tree_path(&adj, self.m + ej, ei);
            let cells: Vec<usize> = path
                .windows(2)
                .map(|w| {
                    let (a, b) = (w[0], w[1]);
                    let (i, j) = if a < self.m { (a, b - self.m) } else { (b, a - self.m) };
                    i * self.n + j
                })
                .collect();
            let minus: Vec<usize> = cells.iter().step_by(2).copied().collect();
            let plus: Vec<usize> = cells.iter().skip(1).step_by(2).copied().collect();

            let theta = minus
                .iter()
                .map(|&k| self.flow.data()[k])
                .fold(f64::INFINITY, f64::min);
            let leave = *minus
                .iter()
                .filter(|&&k| self.flow.data()[k] == theta)
                .min()
                .expect("cycle has at least one decreasing cell");

            let data = self.flow.data_mut();
            for &k in &plus {
                data[k] += theta;
            }
            for &k in &minus {
                data[k] -= theta;
            }
            data[enter] += theta;
            data[leave] = 0.0;
            self.basic[leave] = false;
            self.basic[enter] = true;
        }
        Err(Error::invalid("transport simplex exceeded pivot limit"))
    }
}
