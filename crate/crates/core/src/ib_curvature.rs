//! Differentiable curvature surrogate.
//!
//! With node codes `Z` and an affine head `f(Z) = Z·w + b`, the score vector
//! `s = L^α · f(Z)` transports the head output through the lazy random-walk
//! matrix, and each pair gets
//!
//! ```text
//! κ_IB(i, j) = 1 − |s_i − s_j| / d(z_i, z_j)
//! ```
//!
//! with `d` the Euclidean distance floored at `floor_epsilon`.
//! `Σ (1 − κ_IB)·d` over edges is the IBCurv objective.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{glorot_uniform, Matrix, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Edge, MassMatrix};

pub const DEFAULT_FLOOR_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentMetricConfig {
    pub floor_epsilon: f64,
    /// Use the signed difference `s_i − s_j` instead of its absolute value.
    pub signed_numerator: bool,
}

impl Default for LatentMetricConfig {
    fn default() -> Self {
        LatentMetricConfig {
            floor_epsilon: DEFAULT_FLOOR_EPSILON,
            signed_numerator: false,
        }
    }
}

impl LatentMetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.floor_epsilon > 0.0 && self.floor_epsilon.is_finite()) {
            return Err(Error::invalid("floor_epsilon must be positive"));
        }
        Ok(())
    }
}

/// `f: R^{N×H} → R^N`, `f(Z) = Z·w + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AffineHead {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl AffineHead {
    /// Glorot-uniform weight scaled by `init_scale`, zero bias.
    pub fn init<R: Rng>(
        params: &mut ParamStore,
        prefix: &str,
        hidden: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let w = glorot_uniform(rng, hidden, 1).map(|x| x * init_scale);
        Ok(AffineHead {
            weight: params.add(format!("{prefix}.weight"), w)?,
            bias: params.add(format!("{prefix}.bias"), Matrix::scalar(0.0))?,
        })
    }

    pub fn lookup(params: &ParamStore, prefix: &str) -> Result<Self> {
        let get = |n: &str| {
            params
                .id(&format!("{prefix}.{n}"))
                .ok_or_else(|| Error::invalid(format!("missing parameter {prefix}.{n}")))
        };
        Ok(AffineHead {
            weight: get("weight")?,
            bias: get("bias")?,
        })
    }

    pub fn ids(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamStore, z: Var) -> Result<Var> {
        let w = tape.param(params, self.weight)?;
        let b = tape.param(params, self.bias)?;
        let zw = tape.matmul(z, w)?;
        tape.add_row(zw, b)
    }

    /// Like [`AffineHead::forward`], with the head weights recorded as
    /// constants so no gradient reaches them.
    pub fn forward_frozen(&self, tape: &mut Tape, params: &ParamStore, z: Var) -> Result<Var> {
        let w = tape.constant(params.value(self.weight).clone())?;
        let b = tape.constant(params.value(self.bias).clone())?;
        let zw = tape.matmul(z, w)?;
        tape.add_row(zw, b)
    }
}

/// How the mass matrix acts on the head output.
#[derive(Debug, Clone, Copy)]
pub enum MassOperator<'a> {
    /// A fixed structure.
    Fixed(&'a MassMatrix),
    /// A structure whose candidate pairs carry recorded weights (P×1), usually
    /// straight-through hard samples; a node with zero total weight keeps
    /// all its mass.
    Weighted {
        pairs: &'a [Edge],
        weights: Var,
        alpha: f64,
        node_count: usize,
    },
}

pub fn apply_mass(tape: &mut Tape, mass: MassOperator<'_>, f: Var) -> Result<Var> {
    match mass {
        MassOperator::Fixed(m) => tape.spmm(Arc::clone(m.sparse()), f),
        MassOperator::Weighted {
            pairs,
            weights,
            alpha,
            node_count,
        } => {
            let p = pairs.len();
            if tape.shape(weights) != (p, 1) {
                return Err(Error::Shape {
                    op: "apply_mass",
                    lhs: tape.shape(weights),
                    rhs: (p, 1),
                });
            }
            // both directions of every pair: row `target` receives from `source`
            let targets: Vec<usize> = pairs.iter().map(|e| e.0).chain(pairs.iter().map(|e| e.1)).collect();
            let sources: Vec<usize> = pairs.iter().map(|e| e.1).chain(pairs.iter().map(|e| e.0)).collect();
            let dup: Vec<usize> = (0..p).chain(0..p).collect();
            let w2 = tape.gather_rows(weights, dup)?;
            let deg = tape.scatter_add_rows(w2, targets.clone(), node_count)?;
            let iso: Vec<f64> = tape
                .value(deg)
                .data()
                .iter()
                .map(|&d| if d == 0.0 { 1.0 } else { 0.0 })
                .collect();
            let iso_c = tape.constant(Matrix::column(iso.clone()))?;
            let denom = tape.add(deg, iso_c)?;
            let fs = tape.gather_rows(f, sources)?;
            let msg = tape.mul(w2, fs)?;
            let msg = tape.scatter_add_rows(msg, targets, node_count)?;
            let avg = tape.div(msg, denom)?;
            let avg = tape.scale(avg, 1.0 - alpha)?;
            let self_w = tape.constant(Matrix::column(
                iso.iter().map(|&z| alpha + (1.0 - alpha) * z).collect(),
            ))?;
            let own = tape.mul(self_w, f)?;
            tape.add(own, avg)
        }
    }
}

/// `d(z_i, z_j) = max(‖z_i − z_j‖, ε)` for each pair, as a P×1 column.
pub fn latent_distance(tape: &mut Tape, z: Var, pairs: &[Edge], cfg: &LatentMetricConfig) -> Result<Var> {
    tape.pair_distance(z, pairs.to_vec(), cfg.floor_epsilon * cfg.floor_epsilon)
}

/// Recorded surrogate curvature over a list of node pairs.
#[derive(Debug, Clone)]
pub struct IbCurvature {
    pub pairs: Vec<Edge>,
    /// P×1 curvature values.
    pub kappa: Var,
    /// P×1 transport numerators `|s_i − s_j|`.
    pub numerator: Var,
    /// P×1 latent distances.
    pub distance: Var,
}

impl IbCurvature {
    pub fn values(&self, tape: &Tape) -> Vec<f64> {
        tape.value(self.kappa).data().to_vec()
    }
}

/// Curvature from precomputed scores `s` (N×1).
pub fn curvature_from_scores(
    tape: &mut Tape,
    s: Var,
    z: Var,
    pairs: &[Edge],
    cfg: &LatentMetricConfig,
) -> Result<IbCurvature> {
    cfg.validate()?;
    if tape.shape(s).0 != tape.shape(z).0 || tape.shape(s).1 != 1 {
        return Err(Error::Shape {
            op: "ib_curvature",
            lhs: tape.shape(s),
            rhs: tape.shape(z),
        });
    }
    let si = tape.gather_rows(s, pairs.iter().map(|e| e.0).collect::<Vec<_>>())?;
    let sj = tape.gather_rows(s, pairs.iter().map(|e| e.1).collect::<Vec<_>>())?;
    let diff = tape.sub(si, sj)?;
    let numerator = if cfg.signed_numerator {
        diff
    } else {
        tape.abs(diff)?
    };
    let distance = latent_distance(tape, z, pairs, cfg)?;
    let ratio = tape.div(numerator, distance)?;
    let neg = tape.scale(ratio, -1.0)?;
    let kappa = tape.add_scalar(neg, 1.0)?;
    Ok(IbCurvature {
        pairs: pairs.to_vec(),
        kappa,
        numerator,
        distance,
    })
}

/// `κ_IB` on `pairs` for codes `z` (N×H) under `mass` and `head`.
pub fn ib_curvature(
    tape: &mut Tape,
    mass: MassOperator<'_>,
    z: Var,
    head: &AffineHead,
    params: &ParamStore,
    cfg: &LatentMetricConfig,
    pairs: &[Edge],
) -> Result<IbCurvature> {
    let n = tape.shape(z).0;
    let mass_n = match mass {
        MassOperator::Fixed(m) => m.sparse().rows(),
        MassOperator::Weighted { node_count, .. } => node_count,
    };
    if mass_n != n {
        return Err(Error::Shape {
            op: "ib_curvature",
            lhs: (mass_n, mass_n),
            rhs: tape.shape(z),
        });
    }
    let f = head.forward(tape, params, z)?;
    let s = apply_mass(tape, mass, f)?;
    curvature_from_scores(tape, s, z, pairs, cfg)
}

/// [`ib_curvature`] with the head held fixed.
pub fn ib_curvature_frozen_head(
    tape: &mut Tape,
    mass: MassOperator<'_>,
    z: Var,
    head: &AffineHead,
    params: &ParamStore,
    cfg: &LatentMetricConfig,
    pairs: &[Edge],
) -> Result<IbCurvature> {
    let f = head.forward_frozen(tape, params, z)?;
    let s = apply_mass(tape, mass, f)?;
    curvature_from_scores(tape, s, z, pairs, cfg)
}

/// `Σ (1 − κ_IB)·d`.
pub fn ibcurv_objective(tape: &mut Tape, k: &IbCurvature) -> Result<Var> {
    let gap = tape.scale(k.kappa, -1.0)?;
    let gap = tape.add_scalar(gap, 1.0)?;
    let t = tape.mul(gap, k.distance)?;
    tape.sum_all(t)
}

/// `Σ w·(1 − κ_IB)·d` with per-pair weights (P×1).
pub fn ibcurv_objective_weighted(tape: &mut Tape, k: &IbCurvature, weights: Var) -> Result<Var> {
    let gap = tape.scale(k.kappa, -1.0)?;
    let gap = tape.add_scalar(gap, 1.0)?;
    let t = tape.mul(gap, k.distance)?;
    let t = tape.mul(t, weights)?;
    tape.sum_all(t)
}

/// Untracked evaluation of `κ_IB` for the given (ordered) pairs.
pub fn ib_curvature_values(
    mass: &MassMatrix,
    z: &Matrix,
    head: &AffineHead,
    params: &ParamStore,
    cfg: &LatentMetricConfig,
    pairs: &[Edge],
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone())?;
    let k = ib_curvature(&mut tape, MassOperator::Fixed(mass), zv, head, params, cfg, pairs)?;
    Ok(k.values(&tape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::graph::{mass_matrix, Graph};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn setup(seed: u64, n: usize, h: usize) -> (Graph, ParamStore, AffineHead, ParamId) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<Edge> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let edges: Vec<Edge> = pairs.into_iter().filter(|_| rng.random_bool(0.5)).collect();
        let g = Graph::new(n, edges.into_iter().chain((0..n - 1).map(|i| (i, i + 1)))).unwrap();
        let mut ps = ParamStore::new();
        let z = ps.add("z", random(&mut rng, n, h)).unwrap();
        let head = AffineHead::init(&mut ps, "head", h, 1.0, &mut rng).unwrap();
        (g, ps, head, z)
    }

    #[test]
    fn latent_distance_examples() {
        let cfg = LatentMetricConfig::default();
        let mut t = Tape::new();
        let z = t.constant(Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0], vec![0.0, 0.0]]).unwrap()).unwrap();
        let d = latent_distance(&mut t, z, &[(0, 1), (0, 2)], &cfg).unwrap();
        assert_eq!(t.value(d).data(), &[5.0, 1e-6]);
    }

    #[test]
    fn latent_distance_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ps = ParamStore::new();
        let id = ps.add("z", random(&mut rng, 2, 3)).unwrap();
        let cfg = LatentMetricConfig::default();
        let err = grad_check(&mut ps, 1e-6, |t, ps| {
            let z = t.param(ps, id)?;
            let d = latent_distance(t, z, &[(0, 1)], &cfg)?;
            t.sum_all(d)
        })
        .unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn constant_head_gives_flat_curvature() {
        let (g, mut ps, head, z) = setup(1, 6, 3);
        ps.get_mut(head.weight).value = Matrix::zeros(3, 1);
        ps.get_mut(head.bias).value = Matrix::scalar(2.5);
        let m = mass_matrix(&g, 0.5).unwrap();
        let k = ib_curvature_values(&m, ps.value(z), &head, &ps, &Default::default(), g.edges()).unwrap();
        assert!(k.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn colliding_codes_hit_the_floor() {
        let mut t = Tape::new();
        let z = t.constant(Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap()).unwrap();
        let s = t.constant(Matrix::column(vec![0.3, 0.1])).unwrap();
        let k = curvature_from_scores(&mut t, s, z, &[(0, 1)], &Default::default()).unwrap();
        let expected = 1.0 - 0.2 / 1e-6;
        let got = k.values(&t)[0];
        assert!((got - expected).abs() <= 1e-6 * expected.abs(), "{got}");
        assert!(got.is_finite());
    }

    #[test]
    fn objective_examples() {
        let mut t = Tape::new();
        let kappa = t.constant(Matrix::column(vec![1.0, 1.0])).unwrap();
        let d = t.constant(Matrix::column(vec![0.7, 2.0])).unwrap();
        let k = IbCurvature {
            pairs: vec![(0, 1), (1, 2)],
            kappa,
            numerator: kappa,
            distance: d,
        };
        let o = ibcurv_objective(&mut t, &k).unwrap();
        assert_eq!(t.scalar(o).unwrap(), 0.0);

        let kappa = t.constant(Matrix::column(vec![0.0])).unwrap();
        let d = t.constant(Matrix::column(vec![2.0])).unwrap();
        let k = IbCurvature {
            pairs: vec![(0, 1)],
            kappa,
            numerator: kappa,
            distance: d,
        };
        let o = ibcurv_objective(&mut t, &k).unwrap();
        assert_eq!(t.scalar(o).unwrap(), 2.0);
    }

    #[test]
    fn objective_reduces_to_score_differences() {
        for seed in 0..10 {
            let (g, ps, head, z) = setup(seed, 8, 4);
            let m = mass_matrix(&g, 0.5).unwrap();
            let mut t = Tape::new();
            let zv = t.param(&ps, z).unwrap();
            let k = ib_curvature(&mut t, MassOperator::Fixed(&m), zv, &head, &ps, &Default::default(), g.edges()).unwrap();
            let o = ibcurv_objective(&mut t, &k).unwrap();
            // Σ|s_i − s_j| computed directly
            let f = ps.value(z).matmul(ps.value(head.weight)).unwrap().map(|x| x + ps.value(head.bias).data()[0]);
            let s = m.sparse().mul_dense(&f).unwrap();
            let direct: f64 = g.edges().iter().map(|&(i, j)| (s.data()[i] - s.data()[j]).abs()).sum();
            assert!((t.scalar(o).unwrap() - direct).abs() <= 1e-10);
        }
    }

    #[test]
    fn weighted_operator_matches_fixed_mass_on_hard_weights() {
        let (g, ps, head, z) = setup(3, 7, 3);
        let alpha = 0.3;
        // candidates = all pairs, weight 1 on g's edges, 0 elsewhere
        let pairs: Vec<Edge> = (0..7).flat_map(|i| (i + 1..7).map(move |j| (i, j))).collect();
        let w: Vec<f64> = pairs.iter().map(|&(i, j)| if g.has_edge(i, j) { 1.0 } else { 0.0 }).collect();
        let mut t = Tape::new();
        let zv = t.param(&ps, z).unwrap();
        let f = head.forward(&mut t, &ps, zv).unwrap();
        let wv = t.constant(Matrix::column(w)).unwrap();
        let soft = apply_mass(&mut t, MassOperator::Weighted { pairs: &pairs, weights: wv, alpha, node_count: 7 }, f).unwrap();
        let m = mass_matrix(&g, alpha).unwrap();
        let fixed = apply_mass(&mut t, MassOperator::Fixed(&m), f).unwrap();
        assert!(t.value(soft).max_abs_diff(t.value(fixed)) < 1e-14);
    }

    #[test]
    fn weighted_operator_keeps_isolated_mass() {
        let mut t = Tape::new();
        let f = t.constant(Matrix::column(vec![1.0, 2.0, 3.0])).unwrap();
        let w = t.constant(Matrix::column(vec![0.0])).unwrap();
        let s = apply_mass(&mut t, MassOperator::Weighted { pairs: &[(0, 1)], weights: w, alpha: 0.5, node_count: 3 }, f).unwrap();
        assert_eq!(t.value(s).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn gradients_wrt_codes_match_finite_differences() {
        for seed in 0..3 {
            let (g, full, head, _) = setup(seed, 8, 3);
            let mut ps = ParamStore::new();
            let z = ps.add("z", full.value(ParamId(0)).clone()).unwrap();
            let m = mass_matrix(&g, 0.5).unwrap();
            let cfg = LatentMetricConfig::default();
            let edges = g.edges().to_vec();
            let err = grad_check(&mut ps, 1e-5, |t, ps| {
                let zv = t.param(ps, z)?;
                let f = head.forward_frozen(t, &full, zv)?;
                let s = apply_mass(t, MassOperator::Fixed(&m), f)?;
                let k = curvature_from_scores(t, s, zv, &edges, &cfg)?;
                t.sum_all(k.kappa)
            })
            .unwrap();
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn bias_shift_leaves_curvature_unchanged() {
        let (g, mut ps, head, z) = setup(5, 8, 3);
        let m = mass_matrix(&g, 0.5).unwrap();
        let cfg = LatentMetricConfig::default();
        let base = ib_curvature_values(&m, ps.value(z), &head, &ps, &cfg, g.edges()).unwrap();
        ps.get_mut(head.bias).value = Matrix::scalar(17.0);
        let shifted = ib_curvature_values(&m, ps.value(z), &head, &ps, &cfg, g.edges()).unwrap();
        for (a, b) in base.iter().zip(&shifted) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn scaling_codes_leaves_curvature_unchanged() {
        let (g, ps, head, z) = setup(6, 8, 3);
        let m = mass_matrix(&g, 0.5).unwrap();
        let cfg = LatentMetricConfig::default();
        let base = ib_curvature_values(&m, ps.value(z), &head, &ps, &cfg, g.edges()).unwrap();
        for lambda in [0.5, 2.0, 10.0] {
            let zs = ps.value(z).map(|x| x * lambda);
            let k = ib_curvature_values(&m, &zs, &head, &ps, &cfg, g.edges()).unwrap();
            for (a, b) in base.iter().zip(&k) {
                assert!((a - b).abs() <= 1e-10, "λ={lambda}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn curvature_is_symmetric_and_bounded() {
        for seed in 0..5 {
            let (g, ps, head, z) = setup(seed, 9, 4);
            let m = mass_matrix(&g, 0.5).unwrap();
            let cfg = LatentMetricConfig::default();
            let fwd = ib_curvature_values(&m, ps.value(z), &head, &ps, &cfg, g.edges()).unwrap();
            let rev: Vec<Edge> = g.edges().iter().map(|&(a, b)| (b, a)).collect();
            let bwd = ib_curvature_values(&m, ps.value(z), &head, &ps, &cfg, &rev).unwrap();
            assert_eq!(fwd, bwd);
            assert!(fwd.iter().all(|&k| k <= 1.0));
        }
    }

    #[test]
    fn signed_variant_is_antisymmetric() {
        let (g, ps, head, z) = setup(2, 6, 3);
        let m = mass_matrix(&g, 0.5).unwrap();
        let cfg = LatentMetricConfig { signed_numerator: true, ..Default::default() };
        let fwd = ib_curvature_values(&m, ps.value(z), &head, &ps, &cfg, g.edges()).unwrap();
        let rev: Vec<Edge> = g.edges().iter().map(|&(a, b)| (b, a)).collect();
        let bwd = ib_curvature_values(&m, ps.value(z), &head, &ps, &cfg, &rev).unwrap();
        for (a, b) in fwd.iter().zip(&bwd) {
            assert!(((1.0 - a) + (1.0 - b)).abs() < 1e-12);
        }
    }
}
