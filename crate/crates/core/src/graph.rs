//! Undirected simple graphs and the data that rides along with them.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Matrix, SparseMatrix};
use crate::error::{Error, Result};
use crate::rng::{chacha, stream};

/// Canonical undirected edge `(min, max)`.
pub type Edge = (usize, usize);

pub fn canonical(a: usize, b: usize) -> Edge {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Simple undirected graph.
///
/// Edges are stored once as `(i, j)` with `i < j`, sorted lexicographically;
/// neighbor lists are sorted and symmetric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Symmetrizes, deduplicates and drops self-loops.
    pub fn new(node_count: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if node_count < 1 {
            return Err(Error::invalid("graph needs at least one node"));
        }
        let mut edges = Vec::new();
        for (a, b) in pairs {
            for x in [a, b] {
                if x >= node_count {
                    return Err(Error::NodeOutOfRange {
                        index: x,
                        node_count,
                    });
                }
            }
            if a != b {
                edges.push(canonical(a, b));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let mut neighbors = vec![Vec::new(); node_count];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Ok(Graph {
            node_count,
            edges,
            neighbors,
        })
    }

    pub fn empty(node_count: usize) -> Result<Self> {
        Self::new(node_count, std::iter::empty())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors[u].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.node_count && self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Position of `(a, b)` in the canonical edge list.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edges.binary_search(&canonical(a, b)).ok()
    }

    pub fn is_isolated(&self, u: usize) -> bool {
        self.neighbors[u].is_empty()
    }
}

pub fn build_graph(pairs: &[(usize, usize)], node_count: usize) -> Result<Graph> {
    Graph::new(node_count, pairs.iter().copied())
}

/// Dense `N × M` node features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Matrix,
}

impl FeatureMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if !values.all_finite() {
            return Err(Error::Data("feature matrix contains non-finite entries".into()));
        }
        Ok(FeatureMatrix { values })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn node_count(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split token {other:?}"))),
        }
    }
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Node labels plus disjoint train/val/test masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<usize>,
    class_count: usize,
    train_mask: Vec<bool>,
    val_mask: Vec<bool>,
    test_mask: Vec<bool>,
}

impl LabelSet {
    pub fn new(
        labels: Vec<usize>,
        train_mask: Vec<bool>,
        val_mask: Vec<bool>,
        test_mask: Vec<bool>,
    ) -> Result<Self> {
        let n = labels.len();
        if train_mask.len() != n || val_mask.len() != n || test_mask.len() != n {
            return Err(Error::Data("label masks must match the label count".into()));
        }
        for i in 0..n {
            if [train_mask[i], val_mask[i], test_mask[i]].iter().filter(|&&b| b).count() > 1 {
                return Err(Error::Data(format!("node {i} is in more than one split")));
            }
        }
        let class_count = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; class_count];
        for i in (0..n).filter(|&i| train_mask[i]) {
            seen[labels[i]] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::Data(format!("class {c} has no training node")));
        }
        Ok(LabelSet {
            labels,
            class_count,
            train_mask,
            val_mask,
            test_mask,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn mask(&self, split: Split) -> &[bool] {
        match split {
            Split::Train => &self.train_mask,
            Split::Val => &self.val_mask,
            Split::Test => &self.test_mask,
        }
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.mask(split)
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn split_of(&self, node: usize) -> Option<Split> {
        [Split::Train, Split::Val, Split::Test]
            .into_iter()
            .find(|&s| self.mask(s)[node])
    }
}

/// Row-stochastic lazy random-walk matrix `αI + (1-α)D⁻¹A`.
///
/// Isolated nodes get an identity row.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix {
    alpha: f64,
    rows: Arc<SparseMatrix>,
}

impl MassMatrix {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sparse(&self) -> &Arc<SparseMatrix> {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        self.rows.row(i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows.get(i, j)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.row_sums()
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

pub fn mass_matrix(g: &Graph, alpha: f64) -> Result<MassMatrix> {
    check_alpha(alpha)?;
    let rows = (0..g.node_count())
        .map(|i| {
            let nbrs = g.neighbors(i);
            if nbrs.is_empty() {
                return vec![(i, 1.0)];
            }
            let w = (1.0 - alpha) / nbrs.len() as f64;
            let mut row = Vec::with_capacity(nbrs.len() + 1);
            let mut self_done = false;
            for &j in nbrs {
                if !self_done && j > i {
                    row.push((i, alpha));
                    self_done = true;
                }
                row.push((j, w));
            }
            if !self_done {
                row.push((i, alpha));
            }
            row
        })
        .collect();
    Ok(MassMatrix {
        alpha,
        rows: Arc::new(SparseMatrix::new(g.node_count(), rows)?),
    })
}

/// Breadth-first hop counts from `source` to each of `targets`, exploring at
/// most `radius_cap` hops. Targets that are farther away are absent.
pub fn hop_distance(
    g: &Graph,
    source: usize,
    targets: &[usize],
    radius_cap: usize,
) -> BTreeMap<usize, usize> {
    let wanted: HashSet<usize> = targets.iter().copied().collect();
    let mut out = BTreeMap::new();
    if wanted.is_empty() || source >= g.node_count() {
        return out;
    }
    let mut dist = vec![usize::MAX; g.node_count()];
    let mut queue = VecDeque::from([source]);
    dist[source] = 0;
    while let Some(u) = queue.pop_front() {
        if wanted.contains(&u) {
            out.insert(u, dist[u]);
            if out.len() == wanted.len() {
                break;
            }
        }
        if dist[u] == radius_cap {
            continue;
        }
        for &v in g.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    out
}

/// Nodes at hop distance exactly two from `u`, ascending.
pub fn two_hop(g: &Graph, u: usize) -> Vec<usize> {
    let mut seen: HashSet<usize> = g.neighbors(u).iter().copied().collect();
    seen.insert(u);
    let mut out = Vec::new();
    for &v in g.neighbors(u) {
        for &w in g.neighbors(v) {
            if seen.insert(w) {
                out.push(w);
            }
        }
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Add,
    Remove,
    Mixed,
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(NoiseMode::Add),
            "remove" => Ok(NoiseMode::Remove),
            "mixed" => Ok(NoiseMode::Mixed),
            other => Err(Error::invalid(format!("unknown noise mode {other:?}"))),
        }
    }
}

impl NoiseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseMode::Add => "add",
            NoiseMode::Remove => "remove",
            NoiseMode::Mixed => "mixed",
        }
    }
}

/// Removes and/or adds `⌊ratio·|E|⌋` uniformly chosen edges.
///
/// `Mixed` removes half the budget (rounded down) and adds the rest. When
/// fewer non-edges exist than requested, all of them are added.
pub fn inject_noise(g: &Graph, ratio: f64, mode: NoiseMode, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::invalid(format!("noise ratio must lie in [0, 1], got {ratio}")));
    }
    let budget = (ratio * g.edge_count() as f64).floor() as usize;
    let (n_remove, n_add) = match mode {
        NoiseMode::Add => (0, budget),
        NoiseMode::Remove => (budget, 0),
        NoiseMode::Mixed => (budget / 2, budget - budget / 2),
    };
    let mut rng = chacha(seed, &[stream::NOISE]);

    let mut keep = vec![true; g.edge_count()];
    if n_remove > 0 {
        for k in sample(&mut rng, g.edge_count(), n_remove.min(g.edge_count())) {
            keep[k] = false;
        }
    }
    let mut edges: Vec<Edge> = g
        .edges()
        .iter()
        .zip(&keep)
        .filter_map(|(&e, &k)| k.then_some(e))
        .collect();

    let n = g.node_count();
    let total_pairs = n * (n - 1) / 2;
    let non_edges = total_pairs - g.edge_count();
    let n_add = n_add.min(non_edges);
    if n_add > 0 {
        if total_pairs <= 4_000_000 {
            let candidates: Vec<Edge> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| !g.has_edge(i, j))
                .collect();
            for k in sample(&mut rng, candidates.len(), n_add) {
                edges.push(candidates[k]);
            }
        } else {
            let mut added = HashSet::new();
            while added.len() < n_add {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                if a != b && !g.has_edge(a, b) {
                    added.insert(canonical(a, b));
                }
            }
            let mut added: Vec<Edge> = added.into_iter().collect();
            added.sort_unstable();
            edges.extend(added);
        }
    }
    Graph::new(n, edges)
}

/// Stochastic block model with block-indicator features.
///
/// Features are the one-hot block indicator (first `blocks` columns) plus
/// isotropic Gaussian noise of scale `feature_noise`; labels are block
/// indices; masks are stratified (see [`crate::io::sbm_splits`]).
pub fn sbm_generate(
    block_sizes: &[usize],
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    feature_noise: f64,
    seed: u64,
) -> Result<(Graph, FeatureMatrix, LabelSet)> {
    if block_sizes.is_empty() || block_sizes.contains(&0) {
        return Err(Error::invalid("stochastic block model needs non-empty blocks"));
    }
    for p in [p_in, p_out] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
    }
    if feature_dim < block_sizes.len() {
        return Err(Error::invalid(format!(
            "feature_dim {feature_dim} smaller than block count {}",
            block_sizes.len()
        )));
    }
    if !(feature_noise >= 0.0 && feature_noise.is_finite()) {
        return Err(Error::invalid("feature_noise must be finite and non-negative"));
    }
    let labels: Vec<usize> = block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();
    let n = labels.len();

    let mut rng = chacha(seed, &[stream::SBM, 0]);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let graph = Graph::new(n, edges)?;

    let mut frng = chacha(seed, &[stream::SBM, 1]);
    let mut x = Matrix::zeros(n, feature_dim);
    for i in 0..n {
        for c in 0..feature_dim {
            let noise: f64 = StandardNormal.sample(&mut frng);
            let base = if c == labels[i] { 1.0 } else { 0.0 };
            x.set(i, c, base + feature_noise * noise);
        }
    }
    let masks = crate::io::sbm_splits(&labels, seed)?;
    Ok((graph, FeatureMatrix::new(x)?, masks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p3() -> Graph {
        Graph::new(3, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn build_dedupes_and_drops_self_loops() {
        let g = build_graph(&[(0, 1), (1, 0), (1, 1)], 2).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn build_allows_isolated_nodes() {
        let g = build_graph(&[], 3).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.degrees(), vec![0, 0, 0]);
    }

    #[test]
    fn path_degrees() {
        assert_eq!(p3().degrees(), vec![1, 2, 1]);
    }

    #[test]
    fn build_rejects_bad_input() {
        assert!(matches!(
            build_graph(&[(0, 3)], 3),
            Err(Error::NodeOutOfRange { index: 3, .. })
        ));
        assert!(build_graph(&[], 0).is_err());
    }

    #[test]
    fn mass_matrix_examples() {
        let m = mass_matrix(&p3(), 1.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
        let m = mass_matrix(&p3(), 0.5).unwrap();
        assert_eq!([m.get(1, 0), m.get(1, 1), m.get(1, 2)], [0.25, 0.5, 0.25]);
        let k2 = Graph::new(2, [(0, 1)]).unwrap();
        let m = mass_matrix(&k2, 0.0).unwrap();
        assert_eq!([m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1)], [0.0, 1.0, 1.0, 0.0]);
        assert!(mass_matrix(&k2, 1.5).is_err());
        assert!(mass_matrix(&k2, -0.1).is_err());
    }

    #[test]
    fn isolated_node_has_identity_row() {
        let g = Graph::new(3, [(0, 1)]).unwrap();
        let m = mass_matrix(&g, 0.3).unwrap();
        assert_eq!(m.row(2), &[(2, 1.0)]);
    }

    #[test]
    fn hop_distance_examples() {
        let g = p3();
        assert_eq!(hop_distance(&g, 0, &[2], 3).get(&2), Some(&2));
        assert_eq!(hop_distance(&g, 1, &[1], 1).get(&1), Some(&0));
        assert_eq!(hop_distance(&g, 0, &[2], 1).get(&2), None);
        let two = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        assert!(hop_distance(&two, 0, &[3], 10).is_empty());
    }

    #[test]
    fn noise_examples() {
        let g = p3();
        assert_eq!(inject_noise(&g, 0.0, NoiseMode::Mixed, 1).unwrap(), g);
        for seed in 0..5 {
            assert_eq!(inject_noise(&g, 0.5, NoiseMode::Remove, seed).unwrap().edge_count(), 1);
        }
        let k4 = Graph::new(4, (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j)))).unwrap();
        assert_eq!(inject_noise(&k4, 0.5, NoiseMode::Add, 3).unwrap().edge_count(), 6);
        assert!(inject_noise(&g, 1.5, NoiseMode::Add, 0).is_err());
    }

    #[test]
    fn mixed_noise_splits_budget() {
        let g = Graph::new(10, (0..9).map(|i| (i, i + 1))).unwrap();
        let noisy = inject_noise(&g, 0.5, NoiseMode::Mixed, 9).unwrap();
        // budget 4: 2 removed, 2 added
        let kept = noisy.edges().iter().filter(|&&(a, b)| g.has_edge(a, b)).count();
        assert_eq!(kept, 7);
        assert_eq!(noisy.edge_count(), 9);
    }

    #[test]
    fn sbm_deterministic_extremes() {
        let (g, x, y) = sbm_generate(&[3, 3], 1.0, 0.0, 2, 0.0, 0).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]);
        assert_eq!(y.labels(), &[0, 0, 0, 1, 1, 1]);
        assert_eq!(x.values().row(4), &[0.0, 1.0]);
    }

    #[test]
    fn sbm_is_deterministic_per_seed() {
        let a = sbm_generate(&[50, 50], 0.2, 0.02, 4, 1.0, 11).unwrap();
        let b = sbm_generate(&[50, 50], 0.2, 0.02, 4, 1.0, 11).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn sbm_intra_edge_count_matches_binomial_mean() {
        // intra-pairs: 2·C(50,2) = 2450, mean 490, per-seed variance 2450·0.2·0.8 = 392
        let seeds = 20;
        let total: usize = (0..seeds)
            .map(|s| {
                let (g, _, y) = sbm_generate(&[50, 50], 0.2, 0.02, 2, 1.0, s).unwrap();
                g.edges().iter().filter(|&&(a, b)| y.labels()[a] == y.labels()[b]).count()
            })
            .sum();
        let mean = total as f64 / seeds as f64;
        let sd_mean = (392.0f64 / seeds as f64).sqrt();
        assert!((mean - 490.0).abs() <= 4.0 * sd_mean, "mean {mean}");
    }

    #[test]
    fn sbm_rejects_empty_blocks() {
        assert!(sbm_generate(&[], 0.5, 0.1, 2, 1.0, 0).is_err());
    }

    fn random_graph() -> impl Strategy<Value = Graph> {
        (2usize..20).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 0..60)
                .prop_map(move |pairs| Graph::new(n, pairs).unwrap())
        })
    }

    fn all_pairs_bfs(g: &Graph) -> Vec<Vec<Option<usize>>> {
        (0..g.node_count())
            .map(|s| {
                let mut d = vec![None; g.node_count()];
                d[s] = Some(0);
                let mut q = VecDeque::from([s]);
                while let Some(u) = q.pop_front() {
                    for &v in g.neighbors(u) {
                        if d[v].is_none() {
                            d[v] = Some(d[u].unwrap() + 1);
                            q.push_back(v);
                        }
                    }
                }
                d
            })
            .collect()
    }

    proptest! {
        #[test]
        fn mass_rows_sum_to_one(g in random_graph(), alpha in 0.0f64..=1.0) {
            for s in mass_matrix(&g, alpha).unwrap().row_sums() {
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn rebuild_is_idempotent(g in random_graph()) {
            let again = Graph::new(g.node_count(), g.edges().iter().copied()).unwrap();
            prop_assert_eq!(again, g);
        }

        #[test]
        fn removal_keeps_graph_invariants(g in random_graph(), ratio in 0.0f64..=1.0, seed in 0u64..100) {
            let h = inject_noise(&g, ratio, NoiseMode::Remove, seed).unwrap();
            let expected = g.edge_count() - (ratio * g.edge_count() as f64).floor() as usize;
            prop_assert_eq!(h.edge_count(), expected);
            for &(a, b) in h.edges() {
                prop_assert!(a < b && g.has_edge(a, b));
                prop_assert!(h.neighbors(b).contains(&a));
            }
        }

        #[test]
        fn hop_distance_is_symmetric_and_matches_bfs(g in random_graph()) {
            let oracle = all_pairs_bfs(&g);
            let n = g.node_count();
            let all: Vec<usize> = (0..n).collect();
            for u in 0..n {
                let d = hop_distance(&g, u, &all, n);
                for v in 0..n {
                    prop_assert_eq!(d.get(&v).copied(), oracle[u][v]);
                    prop_assert_eq!(oracle[u][v], oracle[v][u]);
                }
            }
        }
    }
}
