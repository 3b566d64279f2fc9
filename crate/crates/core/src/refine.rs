//! Structure refinement: flow weights `K = (1 − κ)·d` on candidate pairs,
//! edge probabilities `π = sigmoid(K)`, binary-concrete relaxed samples,
//! straight-through hardening and the Bernoulli likelihood of the original
//! adjacency.

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{canonical, two_hop, Edge, Graph};
use crate::ib_curvature::IbCurvature;
use crate::rng::{chacha, counter_uniform, stream};

pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_CANDIDATE_K: usize = 5;
/// Largest graph for which the all-pairs candidate mode is allowed.
pub const DENSE_CANDIDATE_LIMIT: usize = 300;

/// Node pairs eligible for the refined structure, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    node_count: usize,
    pairs: Vec<Edge>,
    /// Whether each pair is an edge of the original graph.
    original: Vec<bool>,
}

impl CandidateSet {
    /// Original edges plus at most `k` two-hop partners per node, sampled
    /// without replacement from the seeded stream.
    pub fn two_hop(g: &Graph, k: usize, seed: u64) -> Self {
        let mut pairs: Vec<Edge> = g.edges().to_vec();
        for u in 0..g.node_count() {
            let far = two_hop(g, u);
            let mut rng = chacha(seed, &[stream::CANDIDATES, u as u64]);
            pairs.extend(far.choose_multiple(&mut rng, k).map(|&v| canonical(u, v)));
        }
        Self::assemble(g, pairs)
    }

    /// Every unordered pair of distinct nodes.
    pub fn dense(g: &Graph) -> Result<Self> {
        let n = g.node_count();
        if n > DENSE_CANDIDATE_LIMIT {
            return Err(Error::invalid(format!(
                "dense candidates are limited to {DENSE_CANDIDATE_LIMIT} nodes, graph has {n}"
            )));
        }
        let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Ok(Self::assemble(g, pairs))
    }

    /// Explicit pairs; original edges are always added.
    pub fn from_pairs(g: &Graph, pairs: &[Edge]) -> Result<Self> {
        let n = g.node_count();
        let mut all = g.edges().to_vec();
        for &(a, b) in pairs {
            if a.max(b) >= n {
                return Err(Error::NodeOutOfRange {
                    index: a.max(b),
                    node_count: n,
                });
            }
            if a != b {
                all.push(canonical(a, b));
            }
        }
        Ok(Self::assemble(g, all))
    }

    /// Rebuilds a set from stored pairs and original-edge flags.
    pub fn from_parts(node_count: usize, pairs: Vec<Edge>, original: Vec<bool>) -> Result<Self> {
        if pairs.len() != original.len() {
            return Err(Error::invalid("candidate pairs and flags differ in length"));
        }
        for (i, &(a, b)) in pairs.iter().enumerate() {
            if a >= b || b >= node_count {
                return Err(Error::invalid(format!("candidate ({a}, {b}) is not a canonical pair")));
            }
            if i > 0 && pairs[i - 1] >= (a, b) {
                return Err(Error::invalid("candidate pairs are not sorted"));
            }
        }
        Ok(CandidateSet {
            node_count,
            pairs,
            original,
        })
    }

    fn assemble(g: &Graph, mut pairs: Vec<Edge>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        let original = pairs.iter().map(|&(a, b)| g.has_edge(a, b)).collect();
        CandidateSet {
            node_count: g.node_count(),
            pairs,
            original,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn pairs(&self) -> &[Edge] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_original(&self, idx: usize) -> bool {
        self.original[idx]
    }

    pub fn original_mask(&self) -> &[bool] {
        &self.original
    }

    pub fn index_of(&self, a: usize, b: usize) -> Option<usize> {
        self.pairs.binary_search(&canonical(a, b)).ok()
    }
}

/// `K = (1 − κ)·d` on every pair of `kappa` (P×1).
pub fn ricci_flow_step(tape: &mut Tape, kappa: &IbCurvature) -> Result<Var> {
    let gap = tape.scale(kappa.kappa, -1.0)?;
    let gap = tape.add_scalar(gap, 1.0)?;
    tape.mul(gap, kappa.distance)
}

/// `π = sigmoid(K)`.
pub fn edge_probabilities(tape: &mut Tape, flow: Var) -> Result<Var> {
    tape.sigmoid(flow)
}

/// Uniform noise in (0, 1) for each pair, keyed by `(seed, key, a, b)` so
/// that a pair draws the same value regardless of its position in the list.
pub fn concrete_noise(seed: u64, key: &[u64], pairs: &[Edge]) -> Vec<f64> {
    let mut parts = Vec::with_capacity(key.len() + 3);
    parts.push(stream::CONCRETE);
    parts.extend_from_slice(key);
    let base = parts.len();
    parts.extend([0, 0]);
    pairs
        .iter()
        .map(|&(a, b)| {
            parts[base] = a as u64;
            parts[base + 1] = b as u64;
            counter_uniform(seed, &parts)
        })
        .collect()
}

fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

fn check_relaxation(tape: &Tape, x: Var, tau: f64, noise: &[f64]) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if tape.shape(x) != (noise.len(), 1) {
        return Err(Error::Shape {
            op: "concrete_sample",
            lhs: tape.shape(x),
            rhs: (noise.len(), 1),
        });
    }
    if noise.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::invalid("concrete noise must lie strictly inside (0, 1)"));
    }
    Ok(())
}

/// Relaxed Bernoulli sample `sigmoid((log(π/(1−π)) + log(ε/(1−ε))) / τ)`.
pub fn concrete_sample(tape: &mut Tape, pi: Var, tau: f64, noise: &[f64]) -> Result<Var> {
    check_relaxation(tape, pi, tau, noise)?;
    let log_pi = tape.log(pi)?;
    let neg = tape.scale(pi, -1.0)?;
    let one_minus = tape.add_scalar(neg, 1.0)?;
    let log_rest = tape.log(one_minus)?;
    let logits = tape.sub(log_pi, log_rest)?;
    concrete_sample_from_logits(tape, logits, tau, noise)
}

/// [`concrete_sample`] from `log(π/(1−π))` directly, which for `π =
/// sigmoid(K)` is `K` itself.
pub fn concrete_sample_from_logits(tape: &mut Tape, logits: Var, tau: f64, noise: &[f64]) -> Result<Var> {
    check_relaxation(tape, logits, tau, noise)?;
    let eps = tape.constant(Matrix::column(noise.iter().map(|&e| logit(e)).collect()))?;
    let shifted = tape.add(logits, eps)?;
    let scaled = tape.scale(shifted, 1.0 / tau)?;
    tape.sigmoid(scaled)
}

/// Discretized structure.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedStructure {
    pub soft: Vec<f64>,
    pub kept: Vec<bool>,
    pub graph: Graph,
    pub tau: f64,
}

/// Keeps candidate `p` iff `soft[p] ≥ 0.5`. When `guard` is given, a guarded
/// node that would lose every candidate keeps its highest-`priority` one.
pub fn harden(
    soft: &[f64],
    candidates: &CandidateSet,
    tau: f64,
    guard: Option<(&[bool], &[f64])>,
) -> Result<RefinedStructure> {
    if soft.len() != candidates.len() {
        return Err(Error::Shape {
            op: "harden",
            lhs: (soft.len(), 1),
            rhs: (candidates.len(), 1),
        });
    }
    if soft.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("soft adjacency"));
    }
    let n = candidates.node_count();
    let mut kept: Vec<bool> = soft.iter().map(|&v| v >= 0.5).collect();
    if let Some((protect, priority)) = guard {
        if protect.len() != n || priority.len() != candidates.len() {
            return Err(Error::invalid("guard mask or priorities have the wrong length"));
        }
        let mut covered = vec![false; n];
        let mut best: Vec<Option<usize>> = vec![None; n];
        for (p, &(a, b)) in candidates.pairs().iter().enumerate() {
            for u in [a, b] {
                covered[u] |= kept[p];
                if best[u].is_none_or(|q| priority[p] > priority[q]) {
                    best[u] = Some(p);
                }
            }
        }
        for u in 0..n {
            if protect[u] && !covered[u] {
                if let Some(p) = best[u] {
                    kept[p] = true;
                    let (a, b) = candidates.pairs()[p];
                    covered[a] = true;
                    covered[b] = true;
                }
            }
        }
    }
    let graph = Graph::new(
        n,
        candidates
            .pairs()
            .iter()
            .zip(&kept)
            .filter(|(_, &k)| k)
            .map(|(&e, _)| e),
    )?;
    Ok(RefinedStructure {
        soft: soft.to_vec(),
        kept,
        graph,
        tau,
    })
}

/// Records `kept` as the forward value of `soft` with identity gradient.
pub fn straight_through_hard(tape: &mut Tape, soft: Var, kept: &[bool]) -> Result<Var> {
    let hard = Matrix::column(kept.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect());
    tape.straight_through(soft, hard)
}

fn original_column(tape: &mut Tape, candidates: &CandidateSet, x: Var) -> Result<Var> {
    if tape.shape(x) != (candidates.len(), 1) {
        return Err(Error::Shape {
            op: "structure_likelihood",
            lhs: tape.shape(x),
            rhs: (candidates.len(), 1),
        });
    }
    if candidates.is_empty() {
        return Err(Error::invalid("structure likelihood over an empty candidate set"));
    }
    tape.constant(Matrix::column(
        candidates.original_mask().iter().map(|&o| if o { 1.0 } else { 0.0 }).collect(),
    ))
}

/// Mean over candidates of `−[A log π + (1 − A) log(1 − π)]`.
pub fn structure_likelihood(tape: &mut Tape, pi: Var, candidates: &CandidateSet) -> Result<Var> {
    let a = original_column(tape, candidates, pi)?;
    let log_pi = tape.log(pi)?;
    let neg = tape.scale(pi, -1.0)?;
    let rest = tape.add_scalar(neg, 1.0)?;
    let log_rest = tape.log(rest)?;
    let on = tape.mul(a, log_pi)?;
    let not_a = tape.scale(a, -1.0)?;
    let not_a = tape.add_scalar(not_a, 1.0)?;
    let off = tape.mul(not_a, log_rest)?;
    let ll = tape.add(on, off)?;
    let mean = tape.mean_all(ll)?;
    tape.scale(mean, -1.0)
}

/// [`structure_likelihood`] for `π = sigmoid(logits)`, written as
/// `A·softplus(−K) + (1 − A)·softplus(K)` so it stays finite when π
/// saturates.
pub fn structure_likelihood_from_logits(tape: &mut Tape, logits: Var, candidates: &CandidateSet) -> Result<Var> {
    let a = original_column(tape, candidates, logits)?;
    let neg = tape.scale(logits, -1.0)?;
    let on = tape.softplus(neg)?;
    let off = tape.softplus(logits)?;
    let on = tape.mul(a, on)?;
    let not_a = tape.scale(a, -1.0)?;
    let not_a = tape.add_scalar(not_a, 1.0)?;
    let off = tape.mul(not_a, off)?;
    let nll = tape.add(on, off)?;
    tape.mean_all(nll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, ParamStore};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(pi: f64, tau: f64, eps: f64) -> f64 {
        let mut t = Tape::new();
        let p = t.constant(Matrix::scalar(pi)).unwrap();
        let s = concrete_sample(&mut t, p, tau, &[eps]).unwrap();
        t.scalar(s).unwrap()
    }

    fn flow(k: f64, d: f64) -> f64 {
        let mut t = Tape::new();
        let kappa = t.constant(Matrix::scalar(k)).unwrap();
        let distance = t.constant(Matrix::scalar(d)).unwrap();
        let ib = IbCurvature {
            pairs: vec![(0, 1)],
            kappa,
            numerator: kappa,
            distance,
        };
        let f = ricci_flow_step(&mut t, &ib).unwrap();
        t.scalar(f).unwrap()
    }

    #[test]
    fn flow_examples() {
        assert_eq!(flow(1.0, 3.7), 0.0);
        assert_eq!(flow(0.0, 2.0), 2.0);
        assert_eq!(flow(-1.0, 0.5), 1.0);
    }

    #[test]
    fn concrete_examples() {
        for tau in [0.01, 0.5, 3.0] {
            assert_eq!(sample(0.5, tau, 0.5), 0.5);
        }
        for eps in [0.01, 0.3, 0.9] {
            assert!(sample(1.0 - 1e-12, 0.5, eps) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn concrete_from_logits_matches_probability_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let k: f64 = rng.random_range(-6.0..6.0);
            let eps: f64 = rng.random_range(0.001..0.999);
            let tau = rng.random_range(0.1..2.0);
            let pi = 1.0 / (1.0 + (-k).exp());
            let mut t = Tape::new();
            let kv = t.constant(Matrix::scalar(k)).unwrap();
            let s = concrete_sample_from_logits(&mut t, kv, tau, &[eps]).unwrap();
            assert!((t.scalar(s).unwrap() - sample(pi, tau, eps)).abs() < 1e-12);
        }
    }

    #[test]
    fn concrete_rejects_bad_arguments() {
        let mut t = Tape::new();
        let p = t.constant(Matrix::column(vec![0.5, 0.5])).unwrap();
        assert!(concrete_sample(&mut t, p, 0.0, &[0.5, 0.5]).is_err());
        assert!(concrete_sample(&mut t, p, 0.5, &[0.5]).is_err());
        assert!(concrete_sample(&mut t, p, 0.5, &[0.0, 0.5]).is_err());
    }

    #[test]
    fn lower_temperature_sharpens_samples() {
        for &pi in &[0.2, 0.45, 0.6, 0.85] {
            for &eps in &[0.1, 0.4, 0.55, 0.9] {
                let mut prev = f64::INFINITY;
                for tau in [1.0, 0.5, 0.2, 0.1, 0.05, 0.01] {
                    let v = sample(pi, tau, eps);
                    let gap = (v - v.round()).abs();
                    assert!(gap <= prev + 1e-15, "pi={pi} eps={eps} tau={tau}");
                    prev = gap;
                }
            }
        }
    }

    #[test]
    fn noise_is_keyed_by_pair() {
        let a = concrete_noise(5, &[2, 1], &[(0, 1), (3, 7), (2, 9)]);
        let b = concrete_noise(5, &[2, 1], &[(3, 7)]);
        assert_eq!(a[1], b[0]);
        assert_ne!(a, concrete_noise(5, &[2, 2], &[(0, 1), (3, 7), (2, 9)]));
        assert!(a.iter().all(|&e| e > 0.0 && e < 1.0));
    }

    #[test]
    fn harden_thresholds() {
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let c = CandidateSet::from_pairs(&g, &[(0, 2)]).unwrap();
        let all = harden(&vec![0.9; c.len()], &c, 0.5, None).unwrap();
        assert_eq!(all.graph.edges(), c.pairs());
        let none = harden(&vec![0.1; c.len()], &c, 0.5, None).unwrap();
        assert_eq!(none.graph.edge_count(), 0);
        let tie = harden(&vec![0.5; c.len()], &c, 0.5, None).unwrap();
        assert_eq!(tie.graph.edge_count(), c.len());
    }

    #[test]
    fn guard_keeps_best_candidate_of_protected_nodes() {
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let c = CandidateSet::from_pairs(&g, &[]).unwrap();
        let soft = vec![0.1, 0.9, 0.1];
        let priority = vec![0.3, 0.9, 0.6];
        let protect = [true, false, false, true];
        let r = harden(&soft, &c, 0.5, Some((&protect, &priority))).unwrap();
        assert_eq!(r.graph.edges(), &[(0, 1), (1, 2), (2, 3)]);
        let r = harden(&soft, &c, 0.5, Some((&[false; 4], &priority))).unwrap();
        assert_eq!(r.graph.edges(), &[(1, 2)]);
    }

    #[test]
    fn straight_through_passes_gradient() {
        let mut ps = ParamStore::new();
        let id = ps.add("s", Matrix::column(vec![0.2, 0.7])).unwrap();
        let mut t = Tape::new();
        let s = t.param(&ps, id).unwrap();
        let h = straight_through_hard(&mut t, s, &[false, true]).unwrap();
        assert_eq!(t.value(h).data(), &[0.0, 1.0]);
        let w = t.constant(Matrix::column(vec![3.0, -2.0])).unwrap();
        let y = t.mul(h, w).unwrap();
        let y = t.sum_all(y).unwrap();
        t.backward(y, &mut ps).unwrap();
        assert_eq!(ps.grad(id).data(), &[3.0, -2.0]);
    }

    #[test]
    fn candidate_sets() {
        let g = Graph::new(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
        let c = CandidateSet::two_hop(&g, 5, 1);
        for &(a, b) in g.edges() {
            assert!(c.index_of(a, b).is_some_and(|i| c.is_original(i)));
        }
        // every extra pair is exactly two hops apart on a path
        for (i, &(a, b)) in c.pairs().iter().enumerate() {
            assert!(c.is_original(i) || b - a == 2);
        }
        assert_eq!(c.len(), 5 + 4);
        assert!(c.pairs().windows(2).all(|w| w[0] < w[1]));
        let small = CandidateSet::two_hop(&g, 0, 1);
        assert_eq!(small.len(), 5);
        assert_eq!(CandidateSet::dense(&g).unwrap().len(), 15);
        assert!(CandidateSet::dense(&Graph::empty(301).unwrap()).is_err());
    }

    #[test]
    fn likelihood_examples() {
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let c = CandidateSet::from_pairs(&g, &[]).unwrap();
        let mut t = Tape::new();
        let pi = t.constant(Matrix::filled(3, 1, 1.0 - 1e-9)).unwrap();
        let l = structure_likelihood(&mut t, pi, &c).unwrap();
        assert!(t.scalar(l).unwrap() < 1e-8);

        let c = CandidateSet::dense(&g).unwrap();
        let pi = t.constant(Matrix::filled(c.len(), 1, 0.5)).unwrap();
        let l = structure_likelihood(&mut t, pi, &c).unwrap();
        assert!((t.scalar(l).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn likelihood_matches_direct_sum_and_logit_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(4..10);
            let pairs: Vec<Edge> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect::<Vec<_>>()
                .into_iter()
                .filter(|_| rng.random_bool(0.4))
                .collect();
            let g = Graph::new(n, pairs).unwrap();
            let c = CandidateSet::dense(&g).unwrap();
            let k: Vec<f64> = (0..c.len()).map(|_| rng.random_range(-5.0..5.0)).collect();
            let pi: Vec<f64> = k.iter().map(|&x| 1.0 / (1.0 + (-x).exp())).collect();
            let direct = (0..c.len())
                .map(|p| if c.is_original(p) { -pi[p].ln() } else { -(1.0 - pi[p]).ln() })
                .sum::<f64>()
                / c.len() as f64;
            let mut t = Tape::new();
            let pv = t.constant(Matrix::column(pi)).unwrap();
            let l = structure_likelihood(&mut t, pv, &c).unwrap();
            assert!((t.scalar(l).unwrap() - direct).abs() <= 1e-12);
            let kv = t.constant(Matrix::column(k)).unwrap();
            let l = structure_likelihood_from_logits(&mut t, kv, &c).unwrap();
            assert!((t.scalar(l).unwrap() - direct).abs() <= 1e-12);
        }
    }

    #[test]
    fn extra_half_probability_pair_adds_log_two() {
        let g = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        let summed = |c: &CandidateSet, pi: Vec<f64>| {
            let mut t = Tape::new();
            let p = t.constant(Matrix::column(pi)).unwrap();
            let l = structure_likelihood(&mut t, p, c).unwrap();
            t.scalar(l).unwrap() * c.len() as f64
        };
        let c0 = CandidateSet::from_pairs(&g, &[]).unwrap();
        let c1 = CandidateSet::from_pairs(&g, &[(1, 2)]).unwrap();
        let base = summed(&c0, vec![0.8, 0.6]);
        let more = summed(&c1, vec![0.8, 0.5, 0.6]);
        assert!((more - base - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn sample_and_likelihood_gradients() {
        let g = Graph::new(5, [(0, 1), (1, 2), (3, 4)]).unwrap();
        let c = CandidateSet::dense(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ps = ParamStore::new();
        let kid = ps.add("k", Matrix::column((0..c.len()).map(|_| rng.random_range(0.0..3.0)).collect())).unwrap();
        let noise = concrete_noise(1, &[0], c.pairs());
        let probe = Matrix::column((0..c.len()).map(|_| rng.random_range(-1.0..1.0)).collect());
        let err = grad_check(&mut ps, 1e-5, |t, ps| {
            let k = t.param(ps, kid)?;
            let pi = edge_probabilities(t, k)?;
            let s = concrete_sample(t, pi, 0.5, &noise)?;
            let w = t.constant(probe.clone())?;
            let s = t.mul(s, w)?;
            let s = t.sum_all(s)?;
            let l = structure_likelihood(t, pi, &c)?;
            t.add(s, l)
        })
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    proptest! {
        #[test]
        fn concrete_is_monotone(
            p1 in 0.001f64..0.999, p2 in 0.001f64..0.999,
            e1 in 0.001f64..0.999, e2 in 0.001f64..0.999,
            tau in 0.05f64..2.0,
        ) {
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            prop_assert!(sample(lo, tau, e1) <= sample(hi, tau, e1));
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(sample(p1, tau, lo) <= sample(p1, tau, hi));
        }

        #[test]
        fn hardened_graph_matches_threshold(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(3..9);
            let pairs: Vec<Edge> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            let g = Graph::new(n, pairs.iter().copied().filter(|_| rng.random_bool(0.4))).unwrap();
            let c = CandidateSet::dense(&g).unwrap();
            let soft: Vec<f64> = (0..c.len()).map(|_| rng.random::<f64>()).collect();
            let r = harden(&soft, &c, 0.5, None).unwrap();
            for (p, &(a, b)) in c.pairs().iter().enumerate() {
                prop_assert_eq!(r.graph.has_edge(a, b), soft[p] >= 0.5);
            }
        }
    }
}
