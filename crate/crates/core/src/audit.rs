//! Finite-difference audits of the differentiable pieces on small seeded
//! instances. Used by the `gradcheck` command and the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, Matrix, ParamStore, Tape, Var};
use crate::error::Result;
use crate::gnn::{forward, CurvGnn, CurvGnnConfig, ForwardMode, Messages};
use crate::graph::{mass_matrix, Graph};
use crate::ib_curvature::{apply_mass, curvature_from_scores, ibcurv_objective_weighted, IbCurvature, LatentMetricConfig, MassOperator};
use crate::refine::{
    concrete_noise, concrete_sample_from_logits, ricci_flow_step, structure_likelihood_from_logits, CandidateSet,
};
use crate::vib::{compression_loss, prediction_loss, vib_loss};

pub const AUDIT_NODES: usize = 10;
const HIDDEN: usize = 4;
const FEATURES: usize = 3;
const CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientCase {
    /// Surrogate curvature of every edge, weighted by a random probe.
    IbCurvature,
    /// `Σ w·(1 − κ)·d` with relaxed edge weights, as in the refinement phase.
    IbCurvObjective,
    /// Encoder forward pass with dropout and sampling, bottleneck loss.
    EncoderObjective,
    /// Flow weights, relaxed sample and structure likelihood.
    RefinementComposite,
}

impl GradientCase {
    pub const ALL: [GradientCase; 4] = [
        GradientCase::IbCurvature,
        GradientCase::IbCurvObjective,
        GradientCase::EncoderObjective,
        GradientCase::RefinementComposite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GradientCase::IbCurvature => "ib_curvature",
            GradientCase::IbCurvObjective => "ibcurv_objective",
            GradientCase::EncoderObjective => "encoder_vib_loss",
            GradientCase::RefinementComposite => "concrete_sample_structure_likelihood",
        }
    }
}

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

/// Connected random graph: a path plus each other pair with probability 0.3.
pub fn audit_graph(rng: &mut ChaCha8Rng, n: usize) -> Result<Graph> {
    let extra: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 2..n).map(move |j| (i, j)))
        .collect::<Vec<_>>()
        .into_iter()
        .filter(|_| rng.random_bool(0.3))
        .collect();
    Graph::new(n, (0..n - 1).map(|i| (i, i + 1)).chain(extra))
}

/// Surrogate curvature with the head's bias left out: a constant shift of
/// the scores cancels in every difference, so the bias has no gradient.
fn latent_curvature(tape: &mut Tape, ps: &ParamStore, g: &Graph, alpha: f64, pairs: &[(usize, usize)]) -> Result<IbCurvature> {
    let z = tape.param(ps, ps.id("z").expect("z"))?;
    let w = tape.param(ps, ps.id("w").expect("w"))?;
    let f = tape.matmul(z, w)?;
    let mass = mass_matrix(g, alpha)?;
    let s = apply_mass(tape, MassOperator::Fixed(&mass), f)?;
    curvature_from_scores(tape, s, z, pairs, &LatentMetricConfig::default())
}

fn probe_sum(tape: &mut Tape, v: Var, probe: &Matrix) -> Result<Var> {
    let p = tape.constant(probe.clone())?;
    let y = tape.mul(v, p)?;
    tape.sum_all(y)
}

/// Worst relative error between reverse-mode and central-difference
/// gradients for `case` on the instance drawn from `seed`.
pub fn gradient_audit(case: GradientCase, seed: u64, step: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = audit_graph(&mut rng, AUDIT_NODES)?;
    let n = AUDIT_NODES;
    match case {
        GradientCase::IbCurvature | GradientCase::IbCurvObjective | GradientCase::RefinementComposite => {
            let mut ps = ParamStore::new();
            ps.add("z", random(&mut rng, n, HIDDEN))?;
            ps.add("w", random(&mut rng, HIDDEN, 1))?;
            let alpha = rng.random_range(0.0..0.9);
            match case {
                GradientCase::IbCurvature => {
                    let probe = random(&mut rng, g.edge_count(), 1);
                    let edges = g.edges().to_vec();
                    grad_check(&mut ps, step, |t, ps| {
                        let k = latent_curvature(t, ps, &g, alpha, &edges)?;
                        probe_sum(t, k.kappa, &probe)
                    })
                }
                GradientCase::IbCurvObjective => {
                    // With unit weights the sum telescopes along sorted scores and
                    // some entries have an exactly zero gradient, which the
                    // relative error cannot score; relaxed weights avoid that.
                    let edges = g.edges().to_vec();
                    let weights = Matrix::column((0..edges.len()).map(|_| rng.random_range(0.05..1.0)).collect());
                    grad_check(&mut ps, step, |t, ps| {
                        let k = latent_curvature(t, ps, &g, alpha, &edges)?;
                        let w = t.constant(weights.clone())?;
                        ibcurv_objective_weighted(t, &k, w)
                    })
                }
                _ => {
                    let candidates = CandidateSet::two_hop(&g, 3, seed);
                    let pairs = candidates.pairs().to_vec();
                    let noise = concrete_noise(seed, &[0], &pairs);
                    let probe = random(&mut rng, pairs.len(), 1);
                    let tau = rng.random_range(0.3..1.0);
                    grad_check(&mut ps, step, |t, ps| {
                        let k = latent_curvature(t, ps, &g, alpha, &pairs)?;
                        let flow = ricci_flow_step(t, &k)?;
                        let soft = concrete_sample_from_logits(t, flow, tau, &noise)?;
                        let s = probe_sum(t, soft, &probe)?;
                        let l = structure_likelihood_from_logits(t, flow, &candidates)?;
                        t.add(s, l)
                    })
                }
            }
        }
        GradientCase::EncoderObjective => {
            let cfg = CurvGnnConfig {
                dropout_rate: 0.5,
                ..CurvGnnConfig::new(2, HIDDEN, CLASSES)
            };
            let mut ps = ParamStore::new();
            let m = CurvGnn::init(&mut ps, FEATURES, &cfg, &mut rng)?;
            // nonzero biases keep pre-activations off the relu kink
            for l in [m.input, m.mu, m.log_var, m.classifier].iter().chain(&m.layers) {
                let c = ps.value(l.bias).cols();
                ps.get_mut(l.bias).value = random(&mut rng, 1, c);
            }
            let x = random(&mut rng, n, FEATURES);
            let kappa = random(&mut rng, g.edge_count(), 1);
            let labels: Vec<usize> = (0..n).map(|i| i % CLASSES).collect();
            let mask: Vec<bool> = (0..n).map(|i| i < 7).collect();
            let msgs = Messages::from_graph(&g);
            grad_check(&mut ps, step, |t, ps| {
                let xv = t.constant(x.clone())?;
                let k = t.constant(kappa.clone())?;
                let out = forward(t, &m, ps, &cfg, xv, k, &msgs, ForwardMode::Train { seed })?;
                let pred = prediction_loss(t, out.logits, &labels, &mask)?;
                let comp = compression_loss(t, &out.posterior, &mask)?;
                Ok(vib_loss(t, pred, comp, 0.1)?.total)
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_case_passes_on_a_few_seeds() {
        for case in GradientCase::ALL {
            for seed in 0..2 {
                let err = gradient_audit(case, seed, 1e-5).unwrap();
                assert!(err <= 1e-4, "{} seed {seed}: {err}", case.name());
            }
        }
    }

    #[test]
    fn audit_graph_is_connected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = audit_graph(&mut rng, 10).unwrap();
        assert!((0..10).all(|u| g.degree(u) > 0));
    }
}
