//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's transport or curvature code.

#![allow(dead_code)]

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense two-phase simplex with Bland's rule for
/// `min c·x  s.t.  A x = b, x ≥ 0`. Returns the optimal value.
pub fn dense_lp(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> f64 {
    let m = a.len();
    let n = c.len();
    // tableau columns: n structural, m artificial, rhs
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][width - 1] = sign * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // phase 1: minimize the sum of artificials
    let mut phase1 = vec![0.0; n + m];
    for v in &mut phase1[n..] {
        *v = 1.0;
    }
    run_simplex(&mut t, &mut basis, &phase1, n + m);
    let infeasibility: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= n)
        .map(|(i, _)| t[i][width - 1])
        .sum();
    assert!(infeasibility.abs() < 1e-9, "LP infeasible: {infeasibility}");

    // drive zero-level artificials out of the basis; drop redundant rows
    let mut i = 0;
    while i < t.len() {
        if basis[i] >= n {
            match (0..n).find(|&j| t[i][j].abs() > 1e-10) {
                Some(j) => pivot(&mut t, &mut basis, i, j),
                None => {
                    t.remove(i);
                    basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }

    // phase 2 over structural columns only
    for row in &mut t {
        for v in &mut row[n..n + m] {
            *v = 0.0;
        }
    }
    let mut cost = c.to_vec();
    cost.extend(std::iter::repeat_n(0.0, m));
    run_simplex(&mut t, &mut basis, &cost, n);
    basis
        .iter()
        .enumerate()
        .map(|(i, &v)| cost[v] * t[i][width - 1])
        .sum()
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let pr = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i != row {
            let f = r[col];
            if f != 0.0 {
                for (v, &q) in r.iter_mut().zip(&pr) {
                    *v -= f * q;
                }
            }
        }
    }
    basis[row] = col;
}

fn run_simplex(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) {
    let rhs = t.first().map_or(0, |r| r.len() - 1);
    for _ in 0..100_000 {
        let entering = (0..allowed).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let reduced = cost[j] - basis.iter().enumerate().map(|(i, &v)| cost[v] * t[i][j]).sum::<f64>();
            reduced < -1e-12
        });
        let Some(j) = entering else { return };
        let mut best: Option<(usize, f64)> = None;
        for i in 0..t.len() {
            if t[i][j] > 1e-12 {
                let ratio = t[i][rhs] / t[i][j];
                let better = match best {
                    None => true,
                    Some((bi, br)) => ratio < br - 1e-15 || (ratio <= br + 1e-15 && basis[i] < basis[bi]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
        }
        let (i, _) = best.expect("LP unbounded");
        pivot(t, basis, i, j);
    }
    panic!("simplex did not terminate");
}

/// Transport LP over the full `|mu| × |nu|` polytope, solved densely.
pub fn transport_lp(mu: &[f64], nu: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (m, n) = (mu.len(), nu.len());
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..m {
        let mut row = vec![0.0; m * n];
        for j in 0..n {
            row[i * n + j] = 1.0;
        }
        a.push(row);
        b.push(mu[i]);
    }
    for j in 0..n {
        let mut row = vec![0.0; m * n];
        for i in 0..m {
            row[i * n + j] = 1.0;
        }
        a.push(row);
        b.push(nu[j]);
    }
    let c: Vec<f64> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| cost[i][j]).collect();
    dense_lp(&a, &b, &c)
}

/// Minimum transport cost over every vertex of the transport polytope:
/// each choice of `m + n − 1` cells whose equality system has a unique
/// non-negative solution. Only for tiny instances.
pub fn transport_enumeration(mu: &[f64], nu: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (m, n) = (mu.len(), nu.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = m + n - 1;
    assert!(cells.len() <= 20, "enumeration oracle is for tiny instances");
    let mut best = f64::INFINITY;
    for subset in combinations(cells.len(), k) {
        // equations: all row sums, column sums except the last (redundant)
        let mut sys: Vec<Vec<f64>> = Vec::new();
        for i in 0..m {
            let mut r: Vec<f64> = subset.iter().map(|&s| f64::from(cells[s].0 == i)).collect();
            r.push(mu[i]);
            sys.push(r);
        }
        for j in 0..n - 1 {
            let mut r: Vec<f64> = subset.iter().map(|&s| f64::from(cells[s].1 == j)).collect();
            r.push(nu[j]);
            sys.push(r);
        }
        let Some(x) = solve_square(sys) else { continue };
        if x.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let value: f64 = subset.iter().zip(&x).map(|(&s, &v)| v * cost[cells[s].0][cells[s].1]).sum();
        best = best.min(value);
    }
    best
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Gaussian elimination with partial pivoting on an augmented square
/// system; `None` when singular.
fn solve_square(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[p][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, p);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// Adjacency lists of a simple undirected graph.
pub fn adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    adj
}

pub fn bfs(adj: &[Vec<usize>], src: usize) -> Vec<Option<usize>> {
    let mut d = vec![None; adj.len()];
    d[src] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if d[v].is_none() {
                d[v] = Some(d[u].unwrap() + 1);
                q.push_back(v);
            }
        }
    }
    d
}

/// Dense neighborhood measure over all `n` nodes.
pub fn lazy_measure(adj: &[Vec<usize>], u: usize, alpha: f64) -> Vec<f64> {
    let mut m = vec![0.0; adj.len()];
    if adj[u].is_empty() {
        m[u] = 1.0;
        return m;
    }
    m[u] = alpha;
    for &v in &adj[u] {
        m[v] += (1.0 - alpha) / adj[u].len() as f64;
    }
    m
}

/// Reference curvature of edge `(i, j)`: dense measures, BFS costs,
/// transport LP on the union of the two supports.
pub fn curvature_lp(adj: &[Vec<usize>], i: usize, j: usize, alpha: f64) -> f64 {
    let mi = lazy_measure(adj, i, alpha);
    let mj = lazy_measure(adj, j, alpha);
    let si: Vec<usize> = (0..adj.len()).filter(|&v| mi[v] > 0.0).collect();
    let sj: Vec<usize> = (0..adj.len()).filter(|&v| mj[v] > 0.0).collect();
    let cost: Vec<Vec<f64>> = si
        .iter()
        .map(|&x| {
            let d = bfs(adj, x);
            sj.iter().map(|&y| d[y].expect("supports connected") as f64).collect()
        })
        .collect();
    let a: Vec<f64> = si.iter().map(|&v| mi[v]).collect();
    let b: Vec<f64> = sj.iter().map(|&v| mj[v]).collect();
    1.0 - transport_lp(&a, &b, &cost)
}

/// Same as [`curvature_lp`] with the enumeration oracle.
pub fn curvature_enumeration(adj: &[Vec<usize>], i: usize, j: usize, alpha: f64) -> f64 {
    let mi = lazy_measure(adj, i, alpha);
    let mj = lazy_measure(adj, j, alpha);
    let si: Vec<usize> = (0..adj.len()).filter(|&v| mi[v] > 0.0).collect();
    let sj: Vec<usize> = (0..adj.len()).filter(|&v| mj[v] > 0.0).collect();
    let cost: Vec<Vec<f64>> = si
        .iter()
        .map(|&x| {
            let d = bfs(adj, x);
            sj.iter().map(|&y| d[y].unwrap() as f64).collect()
        })
        .collect();
    let a: Vec<f64> = si.iter().map(|&v| mi[v]).collect();
    let b: Vec<f64> = sj.iter().map(|&v| mj[v]).collect();
    1.0 - transport_enumeration(&a, &b, &cost)
}

/// Erdős–Rényi graph with a spanning path so it is connected; edge
/// probability drawn per graph.
pub fn random_connected_edges(seed: u64, n: usize) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: f64 = rng.random_range(0.15..0.6);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut edges: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0].min(w[1]), w[0].max(w[1]))).collect();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Random probability vector of length `n` with strictly positive entries.
pub fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}
