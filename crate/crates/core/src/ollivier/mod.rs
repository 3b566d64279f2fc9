//! Exact Ollivier-Ricci curvature.
//!
//! For an edge `(i, j)` the curvature is `κ = 1 − W₁(m_i, m_j) / d(i, j)`
//! where `m_u` puts mass `α` on `u` and `(1 − α)/deg(u)` on each neighbor,
//! and `W₁` is the exact 1-Wasserstein distance under hop-count costs.
//! On edges `d(i, j) = 1`.

mod transport;

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::graph::{check_alpha, hop_distance, Edge, Graph};

pub use transport::solve_transport;

/// Default laziness of the neighborhood measures.
pub const DEFAULT_ALPHA: f64 = 0.5;
/// Two 1-hop neighborhoods of adjacent nodes are always within 3 hops.
pub const DEFAULT_RADIUS_CAP: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct MassDistribution {
    pub support: Vec<usize>,
    pub weights: Vec<f64>,
}

impl MassDistribution {
    pub fn weight_of(&self, node: usize) -> f64 {
        self.support
            .iter()
            .position(|&s| s == node)
            .map_or(0.0, |k| self.weights[k])
    }
}

/// `m_u^α`, supported on `u` and its neighbors in ascending node order.
/// An isolated node carries a point mass.
pub fn mass_distribution(g: &Graph, u: usize, alpha: f64) -> Result<MassDistribution> {
    check_alpha(alpha)?;
    if u >= g.node_count() {
        return Err(Error::NodeOutOfRange {
            index: u,
            node_count: g.node_count(),
        });
    }
    let nbrs = g.neighbors(u);
    if nbrs.is_empty() {
        return Ok(MassDistribution {
            support: vec![u],
            weights: vec![1.0],
        });
    }
    let w = (1.0 - alpha) / nbrs.len() as f64;
    let mut support: Vec<usize> = nbrs.to_vec();
    let pos = support.partition_point(|&x| x < u);
    support.insert(pos, u);
    let weights = support
        .iter()
        .map(|&s| if s == u { alpha } else { w })
        .collect();
    Ok(MassDistribution { support, weights })
}

/// Hop-distance costs between two supports, `+∞` where farther than `radius_cap`.
pub fn support_costs(
    g: &Graph,
    mu: &MassDistribution,
    nu: &MassDistribution,
    radius_cap: usize,
) -> Matrix {
    let mut c = Matrix::filled(mu.support.len(), nu.support.len(), f64::INFINITY);
    for (a, &x) in mu.support.iter().enumerate() {
        let d = hop_distance(g, x, &nu.support, radius_cap);
        for (b, y) in nu.support.iter().enumerate() {
            if let Some(&h) = d.get(y) {
                c.set(a, b, h as f64);
            }
        }
    }
    c
}

/// Exact `W₁(mu, nu)` for a cost matrix indexed by the two supports.
pub fn wasserstein1(mu: &MassDistribution, nu: &MassDistribution, cost: &Matrix) -> Result<f64> {
    Ok(solve_transport(&mu.weights, &nu.weights, cost)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvatureMethod {
    Exact,
    Surrogate,
}

impl CurvatureMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CurvatureMethod::Exact => "exact",
            CurvatureMethod::Surrogate => "surrogate",
        }
    }
}

/// Per-edge curvature in canonical edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureMap {
    pub alpha: f64,
    pub method: CurvatureMethod,
    pub edges: Vec<Edge>,
    pub values: Vec<f64>,
}

impl CurvatureMap {
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        let e = crate::graph::canonical(a, b);
        self.edges.binary_search(&e).ok().map(|k| self.values[k])
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Edge, f64)> + '_ {
        self.edges.iter().copied().zip(self.values.iter().copied())
    }
}

/// Curvature of one adjacent pair.
pub fn edge_curvature(g: &Graph, i: usize, j: usize, alpha: f64, radius_cap: usize) -> Result<f64> {
    let mi = mass_distribution(g, i, alpha)?;
    let mj = mass_distribution(g, j, alpha)?;
    let cost = support_costs(g, &mi, &mj, radius_cap);
    let w = wasserstein1(&mi, &mj, &cost).map_err(|e| match e {
        Error::Disconnected(msg) => Error::Disconnected(format!(
            "edge ({i}, {j}) with radius cap {radius_cap}: {msg}"
        )),
        other => other,
    })?;
    Ok(1.0 - w)
}

/// Exact curvature of every edge; edges are solved in parallel and
/// assembled in canonical order.
pub fn ollivier_ricci(g: &Graph, alpha: f64, radius_cap: usize) -> Result<CurvatureMap> {
    check_alpha(alpha)?;
    if g.edge_count() == 0 {
        return Err(Error::invalid("curvature needs at least one edge"));
    }
    if radius_cap < 1 {
        return Err(Error::invalid("radius_cap must be at least 1"));
    }
    let values = g
        .edges()
        .par_iter()
        .map(|&(i, j)| edge_curvature(g, i, j, alpha, radius_cap))
        .collect::<Result<Vec<f64>>>()?;
    Ok(CurvatureMap {
        alpha,
        method: CurvatureMethod::Exact,
        edges: g.edges().to_vec(),
        values,
    })
}

/// Memoizes per-edge curvature for one graph, keyed by `(edge, α)`.
#[derive(Debug)]
pub struct CurvatureCache<'g> {
    graph: &'g Graph,
    radius_cap: usize,
    memo: Mutex<HashMap<(Edge, u64), f64>>,
}

impl<'g> CurvatureCache<'g> {
    pub fn new(graph: &'g Graph, radius_cap: usize) -> Self {
        CurvatureCache {
            graph,
            radius_cap,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, a: usize, b: usize, alpha: f64) -> Result<f64> {
        let e = crate::graph::canonical(a, b);
        if !self.graph.has_edge(e.0, e.1) {
            return Err(Error::invalid(format!("({a}, {b}) is not an edge")));
        }
        let key = (e, alpha.to_bits());
        if let Some(&v) = self.memo.lock().expect("cache lock").get(&key) {
            return Ok(v);
        }
        let v = edge_curvature(self.graph, e.0, e.1, alpha, self.radius_cap)?;
        self.memo.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }

    pub fn cached_len(&self) -> usize {
        self.memo.lock().expect("cache lock").len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_distribution_examples() {
        let k2 = Graph::new(2, [(0, 1)]).unwrap();
        let m = mass_distribution(&k2, 0, 0.5).unwrap();
        assert_eq!(m.support, vec![0, 1]);
        assert_eq!(m.weights, vec![0.5, 0.5]);

        let p3 = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        let m = mass_distribution(&p3, 1, 0.0).unwrap();
        assert_eq!((m.weight_of(0), m.weight_of(1), m.weight_of(2)), (0.5, 0.0, 0.5));

        let star = Graph::new(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
        let m = mass_distribution(&star, 0, 0.25).unwrap();
        assert_eq!(m.weights, vec![0.25; 4]);

        let iso = Graph::new(2, []).unwrap();
        let m = mass_distribution(&iso, 1, 0.2).unwrap();
        assert_eq!((m.support, m.weights), (vec![1], vec![1.0]));
    }

    #[test]
    fn identical_measures_have_zero_distance() {
        let p3 = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        let m = mass_distribution(&p3, 1, 0.3).unwrap();
        let c = support_costs(&p3, &m, &m, 3);
        assert_eq!(wasserstein1(&m, &m, &c).unwrap(), 0.0);
    }

    #[test]
    fn k2_is_flat_at_half_laziness() {
        let k2 = Graph::new(2, [(0, 1)]).unwrap();
        let k = ollivier_ricci(&k2, 0.5, 3).unwrap();
        assert_eq!(k.get(0, 1), Some(1.0));
    }

    #[test]
    fn too_small_radius_is_reported() {
        let p4 = Graph::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        assert!(matches!(ollivier_ricci(&p4, 0.0, 2), Err(Error::Disconnected(_))));
        assert!(ollivier_ricci(&p4, 0.0, 3).is_ok());
    }

    #[test]
    fn edgeless_graph_is_rejected() {
        assert!(ollivier_ricci(&Graph::new(3, []).unwrap(), 0.5, 3).is_err());
    }

    #[test]
    fn cache_memoizes_by_edge_and_alpha() {
        let p3 = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        let cache = CurvatureCache::new(&p3, 3);
        let a = cache.get(1, 0, 0.0).unwrap();
        assert_eq!(a, cache.get(0, 1, 0.0).unwrap());
        cache.get(0, 1, 0.5).unwrap();
        assert_eq!(cache.cached_len(), 2);
        assert!(cache.get(0, 2, 0.5).is_err());
    }
}
