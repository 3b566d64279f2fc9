//! Bi-level training: alternating representation steps with curvature held
//! fixed, structure-refinement steps with codes held fixed, and one joint
//! step per outer epoch.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{stable_sigmoid, Adam, Matrix, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::gnn::{self, mean_aggregation_matrix, CurvGnn, CurvGnnConfig, ForwardMode, Messages, PlainGcn};
use crate::graph::{mass_matrix, FeatureMatrix, Graph, Split};
use crate::ib_curvature::{
    ib_curvature, ib_curvature_values, ibcurv_objective, ibcurv_objective_weighted, AffineHead, LatentMetricConfig,
    MassOperator,
};
use crate::io::DatasetBundle;
use crate::refine::{
    concrete_noise, concrete_sample_from_logits, harden, ricci_flow_step, straight_through_hard,
    structure_likelihood_from_logits, CandidateSet,
};
use crate::rng::{chacha, derive_seed, stream};
use crate::vib::{compression_loss, prediction_loss, vib_loss};

/// Lower bound applied to curvature before it enters the encoder's edge
/// weights, so `softplus(scale·κ + shift)` cannot underflow to zero.
pub const ENCODER_KAPPA_FLOOR: f64 = -10.0;

/// Keys a config file must set.
pub const REQUIRED_KEYS: [&str; 12] = [
    "dataset",
    "outer_epochs",
    "inner_repr_epochs",
    "inner_struct_epochs",
    "beta",
    "alpha",
    "tau",
    "learning_rate",
    "depth",
    "hidden_dim",
    "seed",
    "candidate_k",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateMode {
    TwoHop,
    Dense,
}

mod defaults {
    use super::CandidateMode;

    pub fn lambda_curv() -> f64 {
        0.01
    }
    pub fn dropout() -> f64 {
        0.5
    }
    pub fn patience() -> usize {
        20
    }
    pub fn candidate_mode() -> CandidateMode {
        CandidateMode::TwoHop
    }
    pub fn yes() -> bool {
        true
    }
    pub fn floor_epsilon() -> f64 {
        crate::ib_curvature::DEFAULT_FLOOR_EPSILON
    }
    pub fn head_init_scale() -> f64 {
        1e-3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset: String,
    pub outer_epochs: usize,
    pub inner_repr_epochs: usize,
    pub inner_struct_epochs: usize,
    pub beta: f64,
    pub alpha: f64,
    pub tau: f64,
    pub learning_rate: f64,
    pub depth: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    pub candidate_k: usize,
    /// Weight of the curvature objective in the joint and refinement steps.
    #[serde(default = "defaults::lambda_curv")]
    pub lambda_curv: f64,
    #[serde(default = "defaults::dropout")]
    pub dropout: f64,
    /// Outer epochs without validation improvement before stopping; 0 never stops.
    #[serde(default = "defaults::patience")]
    pub patience: usize,
    #[serde(default = "defaults::candidate_mode")]
    pub candidate_mode: CandidateMode,
    #[serde(default = "defaults::yes")]
    pub normalize_weights: bool,
    #[serde(default)]
    pub signed_numerator: bool,
    #[serde(default = "defaults::floor_epsilon")]
    pub floor_epsilon: f64,
    /// Multiplier on the Glorot init of the curvature head.
    #[serde(default = "defaults::head_init_scale")]
    pub head_init_scale: f64,
    /// Keep one candidate edge for training nodes that hardening would isolate.
    #[serde(default = "defaults::yes")]
    pub guard_train_nodes: bool,
}

impl TrainConfig {
    /// Default hyperparameters for `dataset`.
    pub fn new(dataset: impl Into<String>) -> Self {
        TrainConfig {
            dataset: dataset.into(),
            outer_epochs: 50,
            inner_repr_epochs: 5,
            inner_struct_epochs: 5,
            beta: 1e-3,
            alpha: 0.5,
            tau: 0.5,
            learning_rate: 1e-3,
            depth: 2,
            hidden_dim: 64,
            seed: 0,
            candidate_k: 5,
            lambda_curv: defaults::lambda_curv(),
            dropout: defaults::dropout(),
            patience: defaults::patience(),
            candidate_mode: defaults::candidate_mode(),
            normalize_weights: true,
            signed_numerator: false,
            floor_epsilon: defaults::floor_epsilon(),
            head_init_scale: defaults::head_init_scale(),
            guard_train_nodes: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.outer_epochs == 0 || self.inner_repr_epochs == 0 || self.inner_struct_epochs == 0 {
            return bad("outer_epochs, inner_repr_epochs and inner_struct_epochs must be at least 1".into());
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if !(self.lambda_curv >= 0.0 && self.lambda_curv.is_finite()) {
            return bad(format!("lambda_curv must be >= 0, got {}", self.lambda_curv));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.depth == 0 || self.hidden_dim == 0 {
            return bad("depth and hidden_dim must be at least 1".into());
        }
        if !(self.floor_epsilon > 0.0) || !(self.head_init_scale >= 0.0) {
            return bad("floor_epsilon must be > 0 and head_init_scale >= 0".into());
        }
        Ok(())
    }

    /// Parses a TOML config, applying `key = value` overrides first. Override
    /// values are read as TOML values, falling back to plain strings.
    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        for (key, raw) in overrides {
            let value = format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.clone()));
            table.insert(key.clone(), value);
        }
        let missing: Vec<&str> = REQUIRED_KEYS
            .iter()
            .copied()
            .filter(|k| !table.contains_key(*k))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!("missing config keys: {}", missing.join(", "))));
        }
        let cfg: TrainConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn metric(&self) -> LatentMetricConfig {
        LatentMetricConfig {
            floor_epsilon: self.floor_epsilon,
            signed_numerator: self.signed_numerator,
        }
    }

    pub fn gnn(&self, class_count: usize) -> CurvGnnConfig {
        CurvGnnConfig {
            depth: self.depth,
            hidden_dim: self.hidden_dim,
            class_count,
            dropout_rate: self.dropout,
            normalize_weights: self.normalize_weights,
        }
    }
}

/// Loss of one inner step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    /// 1 for representation steps, 2 for refinement steps.
    pub phase: u8,
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based outer epoch.
    pub epoch: usize,
    pub prediction: f64,
    pub compression: f64,
    pub structure: f64,
    pub ibcurv: f64,
    pub total: f64,
    pub accuracy_val: f64,
    pub macro_f1_val: f64,
    pub accuracy_test: f64,
    pub macro_f1_test: f64,
    pub refined_edges: usize,
    /// Seconds since the run (or resumed segment) started. Not reproducible.
    pub wall_time: f64,
}

impl EpochMetrics {
    /// Equality of every field except wall time.
    pub fn same_numbers(&self, other: &EpochMetrics) -> bool {
        EpochMetrics {
            wall_time: 0.0,
            ..*self
        } == EpochMetrics {
            wall_time: 0.0,
            ..*other
        }
    }
}

/// Append-only per-epoch log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    rows: Vec<EpochMetrics>,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: EpochMetrics) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.epoch <= last.epoch {
                return Err(Error::invalid(format!(
                    "metrics epoch {} after {}",
                    row.epoch, last.epoch
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[EpochMetrics] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.rows.last()
    }

    pub fn same_numbers(&self, other: &MetricsLog) -> bool {
        self.rows.len() == other.rows.len() && self.rows.iter().zip(&other.rows).all(|(a, b)| a.same_numbers(b))
    }
}

/// Best-validation state kept for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub accuracy_val: f64,
    pub params: ParamStore,
    pub refined: Graph,
    pub kappa: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ParamStore,
    pub model: CurvGnn,
    pub head: AffineHead,
    pub candidates: CandidateSet,
    /// Current refined structure; its edges are a subset of `candidates`.
    pub refined: Graph,
    /// Surrogate curvature on every candidate pair.
    pub kappa: Vec<f64>,
    /// Codes the curvature was last computed from.
    pub codes: Matrix,
    /// Edge probabilities and kept flags from the latest refinement step.
    pub probabilities: Vec<f64>,
    pub kept: Vec<bool>,
    pub optim_repr: Adam,
    pub optim_struct: Adam,
    pub optim_joint: Adam,
    /// Completed outer epochs.
    pub epoch: usize,
    pub metrics: MetricsLog,
    pub steps: Vec<StepRecord>,
    pub last_structure_loss: f64,
    pub best: Option<Snapshot>,
    pub stale_epochs: usize,
    pub stopped: bool,
}

impl TrainState {
    /// Curvature of the current encoder head on the candidate pairs.
    pub fn kappa_map(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.candidates.pairs().iter().copied().zip(self.kappa.iter().copied())
    }

    /// Curvature of the refined structure's edges, in edge order.
    pub fn refined_kappa(&self) -> Result<Vec<f64>> {
        self.refined
            .edges()
            .iter()
            .map(|&(a, b)| {
                self.candidates
                    .index_of(a, b)
                    .map(|i| self.kappa[i])
                    .ok_or_else(|| Error::invalid(format!("refined edge ({a}, {b}) is not a candidate")))
            })
            .collect()
    }

    /// Recomputes the surrogate curvature for arbitrary ordered pairs with the
    /// current head, codes and refined structure.
    pub fn surrogate_curvature(&self, cfg: &TrainConfig, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        let mass = mass_matrix(&self.refined, cfg.alpha)?;
        ib_curvature_values(&mass, &self.codes, &self.head, &self.params, &cfg.metric(), pairs)
    }

    pub fn is_finished(&self, cfg: &TrainConfig) -> bool {
        self.stopped || self.epoch >= cfg.outer_epochs
    }

    /// A copy with the best-validation snapshot restored, if any.
    pub fn best_state(&self) -> TrainState {
        let mut s = self.clone();
        if let Some(b) = &self.best {
            s.params = b.params.clone();
            s.refined = b.refined.clone();
            s.kappa = b.kappa.clone();
        }
        s
    }
}

/// Accuracy and unweighted mean of per-class F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Accuracy and macro-F1 of `predicted` against `truth` over `class_count`
/// classes. A class with no true and no predicted members scores F1 = 0.
pub fn classification_scores(truth: &[usize], predicted: &[usize], class_count: usize) -> Result<Scores> {
    if truth.len() != predicted.len() {
        return Err(Error::invalid("truth and predictions differ in length"));
    }
    if truth.is_empty() {
        return Err(Error::invalid("cannot score an empty split"));
    }
    let mut tp = vec![0usize; class_count];
    let mut fp = vec![0usize; class_count];
    let mut fn_ = vec![0usize; class_count];
    let mut correct = 0;
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= class_count || p >= class_count {
            return Err(Error::invalid(format!("class index outside {class_count} classes")));
        }
        if t == p {
            tp[t] += 1;
            correct += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let f1_sum: f64 = (0..class_count)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok(Scores {
        accuracy: correct as f64 / truth.len() as f64,
        macro_f1: f1_sum / class_count as f64,
    })
}

fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            let row = m.row(i);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn score_logits(logits: &Matrix, data: &DatasetBundle, split: Split) -> Result<Scores> {
    let idx = data.labels.indices(split);
    if idx.is_empty() {
        return Err(Error::invalid(format!("{} split is empty", split.as_str())));
    }
    let pred = argmax_rows(logits);
    let truth: Vec<usize> = idx.iter().map(|&i| data.labels.labels()[i]).collect();
    let guess: Vec<usize> = idx.iter().map(|&i| pred[i]).collect();
    classification_scores(&truth, &guess, data.labels.class_count())
}

/// Converts tape-level numeric failures into a training abort.
fn numeric(stage: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(what) => Error::NumericAbort {
            stage: stage.into(),
            detail: format!("non-finite {what}"),
        },
        Error::Domain { op, detail } => Error::NumericAbort {
            stage: stage.into(),
            detail: format!("{op}: {detail}"),
        },
        other => other,
    }
}

fn check_data(cfg: &TrainConfig, data: &DatasetBundle) -> Result<()> {
    cfg.validate()?;
    if data.graph.edge_count() == 0 {
        return Err(Error::Data("training graph has no edges".into()));
    }
    for split in [Split::Train, Split::Val, Split::Test] {
        if data.labels.indices(split).is_empty() {
            return Err(Error::Data(format!("{} split is empty", split.as_str())));
        }
    }
    Ok(())
}

fn build_candidates(cfg: &TrainConfig, g: &Graph) -> Result<CandidateSet> {
    match cfg.candidate_mode {
        CandidateMode::TwoHop => Ok(CandidateSet::two_hop(g, cfg.candidate_k, cfg.seed)),
        CandidateMode::Dense => CandidateSet::dense(g),
    }
}

/// Runs the encoder over the refined structure with the stored curvature.
fn encode(
    tape: &mut Tape,
    state: &TrainState,
    params: &ParamStore,
    cfg: &TrainConfig,
    features: &FeatureMatrix,
    kappa: &[f64],
    mode: ForwardMode,
) -> Result<gnn::EncoderOutput> {
    let classes = params.value(state.model.classifier.weight).cols();
    let gcfg = cfg.gnn(classes);
    let x = tape.constant(features.values().clone())?;
    let k = tape.constant(Matrix::column(
        kappa.iter().map(|&v| v.max(ENCODER_KAPPA_FLOOR)).collect(),
    ))?;
    let msgs = Messages::from_graph(&state.refined);
    gnn::forward(tape, &state.model, params, &gcfg, x, k, &msgs, mode)
}

fn posterior_mean(state: &TrainState, cfg: &TrainConfig, data: &DatasetBundle) -> Result<Matrix> {
    posterior_codes(state, cfg, &data.features)
}

/// Posterior means of the encoder for `features`, aggregated over the
/// refined structure with its stored curvature.
pub fn posterior_codes(state: &TrainState, cfg: &TrainConfig, features: &FeatureMatrix) -> Result<Matrix> {
    if features.node_count() != state.refined.node_count() {
        return Err(Error::Data(format!(
            "{} feature rows for a {}-node model",
            features.node_count(),
            state.refined.node_count()
        )));
    }
    let mut tape = Tape::new();
    let out = encode(&mut tape, state, &state.params, cfg, features, &state.refined_kappa()?, ForwardMode::Eval)?;
    Ok(tape.value(out.posterior.mu).clone())
}

/// Initial parameters, candidate set and curvature. The refined structure
/// starts as the original graph and curvature is computed from the codes of
/// an encoder pass with uniform edge weights.
pub fn initialize(cfg: &TrainConfig, data: &DatasetBundle) -> Result<TrainState> {
    check_data(cfg, data)?;
    let gcfg = cfg.gnn(data.labels.class_count());
    let mut rng = chacha(cfg.seed, &[stream::INIT]);
    let mut params = ParamStore::new();
    let model = CurvGnn::init(&mut params, data.features.dim(), &gcfg, &mut rng)?;
    let head = AffineHead::init(&mut params, "curvature_head", cfg.hidden_dim, cfg.head_init_scale, &mut rng)?;
    let candidates = build_candidates(cfg, &data.graph)?;
    let model_ids = model.param_ids();
    let all_ids: Vec<ParamId> = params.ids().collect();
    let optim_repr = Adam::new(&params, model_ids, cfg.learning_rate);
    let optim_struct = Adam::new(&params, head.ids().to_vec(), cfg.learning_rate);
    let optim_joint = Adam::new(&params, all_ids, cfg.learning_rate);
    let n = data.node_count();
    let kept = candidates.original_mask().to_vec();
    let mut state = TrainState {
        params,
        model,
        head,
        kappa: vec![1.0; candidates.len()],
        probabilities: vec![0.5; candidates.len()],
        kept,
        candidates,
        refined: data.graph.clone(),
        codes: Matrix::zeros(n, cfg.hidden_dim),
        optim_repr,
        optim_struct,
        optim_joint,
        epoch: 0,
        metrics: MetricsLog::new(),
        steps: Vec::new(),
        last_structure_loss: 0.0,
        best: None,
        stale_epochs: 0,
        stopped: false,
    };
    state.codes = posterior_mean(&state, cfg, data)?;
    state.kappa = state.surrogate_curvature(cfg, state.candidates.pairs())?;
    state.probabilities = flow_probabilities(&state, cfg)?;
    Ok(state)
}

fn flow_probabilities(state: &TrainState, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let z = tape.constant(state.codes.clone())?;
    let mass = mass_matrix(&state.refined, cfg.alpha)?;
    let k = ib_curvature(
        &mut tape,
        MassOperator::Fixed(&mass),
        z,
        &state.head,
        &state.params,
        &cfg.metric(),
        state.candidates.pairs(),
    )?;
    let flow = ricci_flow_step(&mut tape, &k)?;
    Ok(tape.value(flow).data().iter().map(|&x| stable_sigmoid(x)).collect())
}

fn optimize(tape: &Tape, loss: Var, params: &mut ParamStore, optim: &mut Adam) -> Result<()> {
    params.zero_grad();
    tape.backward(loss, params)?;
    optim.step(params);
    for &id in optim.targets() {
        if !params.value(id).all_finite() {
            return Err(Error::NonFinite("parameter update"));
        }
    }
    Ok(())
}

/// `inner_repr_epochs` steps on the bottleneck loss with curvature fixed;
/// only encoder parameters move.
pub fn phase1_representation(state: &mut TrainState, cfg: &TrainConfig, data: &DatasetBundle) -> Result<()> {
    let kappa = state.refined_kappa()?;
    let labels = data.labels.labels();
    let mask = data.labels.mask(Split::Train);
    for s in 0..cfg.inner_repr_epochs {
        let seed = derive_seed(cfg.seed, &[1, state.epoch as u64, s as u64]);
        let mut tape = Tape::new();
        let step = (|| {
            let out = encode(&mut tape, state, &state.params, cfg, &data.features, &kappa, ForwardMode::Train { seed })?;
            let pred = prediction_loss(&mut tape, out.logits, labels, mask)?;
            let comp = compression_loss(&mut tape, &out.posterior, mask)?;
            vib_loss(&mut tape, pred, comp, cfg.beta)
        })()
        .map_err(numeric("representation phase"))?;
        let loss = tape.scalar(step.total)?;
        optimize(&tape, step.total, &mut state.params, &mut state.optim_repr).map_err(numeric("representation phase"))?;
        state.steps.push(StepRecord {
            epoch: state.epoch + 1,
            phase: 1,
            step: s,
            loss,
        });
    }
    Ok(())
}

/// Runs one refinement step on fixed codes and returns its loss.
pub fn refinement_step(
    state: &mut TrainState,
    cfg: &TrainConfig,
    data: &DatasetBundle,
    z: &Matrix,
    step: usize,
) -> Result<f64> {
    let metric = cfg.metric();
    let n = data.node_count();
    let pairs = state.candidates.pairs().to_vec();
    let mut tape = Tape::new();
    let zc = tape.constant(z.clone())?;
    let mass = mass_matrix(&state.refined, cfg.alpha)?;
    let k = ib_curvature(&mut tape, MassOperator::Fixed(&mass), zc, &state.head, &state.params, &metric, &pairs)?;
    let flow = ricci_flow_step(&mut tape, &k)?;
    let noise = concrete_noise(cfg.seed, &[state.epoch as u64, step as u64], &pairs);
    let soft = concrete_sample_from_logits(&mut tape, flow, cfg.tau, &noise)?;
    let pi: Vec<f64> = tape.value(flow).data().iter().map(|&x| stable_sigmoid(x)).collect();
    let protect = data.labels.mask(Split::Train);
    let guard = cfg.guard_train_nodes.then_some((protect, pi.as_slice()));
    let refined = harden(tape.value(soft).data(), &state.candidates, cfg.tau, guard)?;
    let hard = straight_through_hard(&mut tape, soft, &refined.kept)?;
    let on_refined = ib_curvature(
        &mut tape,
        MassOperator::Weighted {
            pairs: &pairs,
            weights: hard,
            alpha: cfg.alpha,
            node_count: n,
        },
        zc,
        &state.head,
        &state.params,
        &metric,
        &pairs,
    )?;
    let ib = ibcurv_objective_weighted(&mut tape, &on_refined, hard)?;
    let structure = structure_likelihood_from_logits(&mut tape, flow, &state.candidates)?;
    let ib = tape.scale(ib, cfg.lambda_curv)?;
    let loss = tape.add(structure, ib)?;
    let value = tape.scalar(loss)?;
    optimize(&tape, loss, &mut state.params, &mut state.optim_struct)?;
    state.last_structure_loss = tape.scalar(structure)?;
    state.refined = refined.graph;
    state.kept = refined.kept;
    state.probabilities = pi;
    Ok(value)
}

/// Codes are recomputed once, then `inner_struct_epochs` refinement steps
/// update the curvature head and the refined structure.
pub fn phase2_refinement(state: &mut TrainState, cfg: &TrainConfig, data: &DatasetBundle) -> Result<()> {
    let z = posterior_mean(state, cfg, data).map_err(numeric("refinement phase"))?;
    state.codes = z.clone();
    for s in 0..cfg.inner_struct_epochs {
        let loss = refinement_step(state, cfg, data, &z, s).map_err(numeric("refinement phase"))?;
        state.steps.push(StepRecord {
            epoch: state.epoch + 1,
            phase: 2,
            step: s,
            loss,
        });
    }
    Ok(())
}

/// Deterministic scores of the current state on `split`.
pub fn evaluate(state: &TrainState, cfg: &TrainConfig, data: &DatasetBundle, split: Split) -> Result<Scores> {
    let mut tape = Tape::new();
    let out = encode(&mut tape, state, &state.params, cfg, &data.features, &state.refined_kappa()?, ForwardMode::Eval)?;
    score_logits(tape.value(out.logits), data, split)
}

/// Recomputes curvature on the refined structure, takes one joint step on
/// the bottleneck loss plus `lambda_curv` times the curvature objective, and
/// logs one metrics row.
pub fn outer_step(
    state: &mut TrainState,
    cfg: &TrainConfig,
    data: &DatasetBundle,
    started: Instant,
) -> Result<EpochMetrics> {
    state.kappa = state
        .surrogate_curvature(cfg, state.candidates.pairs())
        .map_err(numeric("curvature update"))?;
    let kappa = state.refined_kappa()?;
    let labels = data.labels.labels();
    let mask = data.labels.mask(Split::Train);
    let seed = derive_seed(cfg.seed, &[3, state.epoch as u64]);
    let mass = mass_matrix(&state.refined, cfg.alpha)?;
    let mut tape = Tape::new();
    let (parts, ib, total) = (|| {
        let out = encode(&mut tape, state, &state.params, cfg, &data.features, &kappa, ForwardMode::Train { seed })?;
        let pred = prediction_loss(&mut tape, out.logits, labels, mask)?;
        let comp = compression_loss(&mut tape, &out.posterior, mask)?;
        let parts = vib_loss(&mut tape, pred, comp, cfg.beta)?;
        let ib = if state.refined.edge_count() > 0 {
            let k = ib_curvature(
                &mut tape,
                MassOperator::Fixed(&mass),
                out.posterior.mu,
                &state.head,
                &state.params,
                &cfg.metric(),
                state.refined.edges(),
            )?;
            ibcurv_objective(&mut tape, &k)?
        } else {
            tape.constant(Matrix::scalar(0.0))?
        };
        let weighted = tape.scale(ib, cfg.lambda_curv)?;
        let total = tape.add(parts.total, weighted)?;
        Ok::<_, Error>((parts, ib, total))
    })()
    .map_err(numeric("joint step"))?;
    optimize(&tape, total, &mut state.params, &mut state.optim_joint).map_err(numeric("joint step"))?;
    state.epoch += 1;
    let val = evaluate(state, cfg, data, Split::Val)?;
    let test = evaluate(state, cfg, data, Split::Test)?;
    let row = EpochMetrics {
        epoch: state.epoch,
        prediction: tape.scalar(parts.prediction)?,
        compression: tape.scalar(parts.compression)?,
        structure: state.last_structure_loss,
        ibcurv: tape.scalar(ib)?,
        total: tape.scalar(total)?,
        accuracy_val: val.accuracy,
        macro_f1_val: val.macro_f1,
        accuracy_test: test.accuracy,
        macro_f1_test: test.macro_f1,
        refined_edges: state.refined.edge_count(),
        wall_time: started.elapsed().as_secs_f64(),
    };
    state.metrics.push(row)?;
    if state.best.as_ref().is_none_or(|b| val.accuracy > b.accuracy_val) {
        state.best = Some(Snapshot {
            epoch: state.epoch,
            accuracy_val: val.accuracy,
            params: state.params.clone(),
            refined: state.refined.clone(),
            kappa: state.kappa.clone(),
        });
        state.stale_epochs = 0;
    } else {
        state.stale_epochs += 1;
        if cfg.patience > 0 && state.stale_epochs >= cfg.patience {
            state.stopped = true;
        }
    }
    Ok(row)
}

/// One full outer epoch.
pub fn train_epoch(state: &mut TrainState, cfg: &TrainConfig, data: &DatasetBundle, started: Instant) -> Result<EpochMetrics> {
    phase1_representation(state, cfg, data)?;
    phase2_refinement(state, cfg, data)?;
    outer_step(state, cfg, data, started)
}

/// Summary of one finished run, scored at the best-validation epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub accuracy_val: f64,
    pub accuracy_test: f64,
    pub macro_f1_test: f64,
    /// Compression term of the last logged epoch.
    pub final_compression: f64,
    pub final_total: f64,
}

pub fn outcome(state: &TrainState, cfg: &TrainConfig, data: &DatasetBundle) -> Result<RunOutcome> {
    let best = state.best_state();
    let val = evaluate(&best, cfg, data, Split::Val)?;
    let test = evaluate(&best, cfg, data, Split::Test)?;
    let last = state.metrics.last();
    Ok(RunOutcome {
        seed: cfg.seed,
        epochs_run: state.epoch,
        best_epoch: state.best.as_ref().map_or(0, |b| b.epoch),
        accuracy_val: val.accuracy,
        accuracy_test: test.accuracy,
        macro_f1_test: test.macro_f1,
        final_compression: last.map_or(f64::NAN, |m| m.compression),
        final_total: last.map_or(f64::NAN, |m| m.total),
    })
}

/// Trains `state` until the epoch budget or early stopping ends the run,
/// calling `observer` after every outer epoch.
pub fn continue_training(
    state: &mut TrainState,
    cfg: &TrainConfig,
    data: &DatasetBundle,
    observer: &mut dyn FnMut(&TrainState, &EpochMetrics) -> Result<()>,
) -> Result<()> {
    let started = Instant::now();
    while !state.is_finished(cfg) {
        let row = train_epoch(state, cfg, data, started)?;
        observer(state, &row)?;
    }
    Ok(())
}

pub fn train(cfg: &TrainConfig, data: &DatasetBundle) -> Result<(TrainState, RunOutcome)> {
    train_with_observer(cfg, data, &mut |_, _| Ok(()))
}

pub fn train_with_observer(
    cfg: &TrainConfig,
    data: &DatasetBundle,
    observer: &mut dyn FnMut(&TrainState, &EpochMetrics) -> Result<()>,
) -> Result<(TrainState, RunOutcome)> {
    let mut state = initialize(cfg, data)?;
    continue_training(&mut state, cfg, data, observer)?;
    let out = outcome(&state, cfg, data)?;
    Ok((state, out))
}

/// Plain residual mean-aggregation GCN on the original graph, trained on
/// cross-entropy with the same optimizer, dropout and step budget as the
/// representation and joint steps, and the same early stopping.
pub fn train_gcn(cfg: &TrainConfig, data: &DatasetBundle) -> Result<RunOutcome> {
    check_data(cfg, data)?;
    let gcfg = cfg.gnn(data.labels.class_count());
    let mut rng = chacha(cfg.seed, &[stream::INIT]);
    let mut params = ParamStore::new();
    let model = PlainGcn::init(&mut params, data.features.dim(), &gcfg, &mut rng)?;
    let mut optim = Adam::new(&params, params.ids().collect(), cfg.learning_rate);
    let adj = std::sync::Arc::new(mean_aggregation_matrix(&data.graph));
    let labels = data.labels.labels();
    let mask = data.labels.mask(Split::Train);
    let eval = |params: &ParamStore| -> Result<(Scores, Scores)> {
        let mut tape = Tape::new();
        let x = tape.constant(data.features.values().clone())?;
        let out = model.forward(&mut tape, params, &gcfg, x, &adj, ForwardMode::Eval)?;
        let logits = tape.value(out.logits);
        Ok((score_logits(logits, data, Split::Val)?, score_logits(logits, data, Split::Test)?))
    };
    let mut best: Option<(usize, Scores, Scores)> = None;
    let mut stale = 0;
    let mut epochs_run = 0;
    let mut last_loss = f64::NAN;
    for epoch in 0..cfg.outer_epochs {
        for s in 0..=cfg.inner_repr_epochs {
            let seed = derive_seed(cfg.seed, &[4, epoch as u64, s as u64]);
            let mut tape = Tape::new();
            let loss = (|| {
                let x = tape.constant(data.features.values().clone())?;
                let out = model.forward(&mut tape, &params, &gcfg, x, &adj, ForwardMode::Train { seed })?;
                prediction_loss(&mut tape, out.logits, labels, mask)
            })()
            .map_err(numeric("control training"))?;
            last_loss = tape.scalar(loss)?;
            optimize(&tape, loss, &mut params, &mut optim).map_err(numeric("control training"))?;
        }
        epochs_run = epoch + 1;
        let (val, test) = eval(&params)?;
        if best.is_none_or(|(_, b, _)| val.accuracy > b.accuracy) {
            best = Some((epochs_run, val, test));
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                break;
            }
        }
    }
    let (best_epoch, val, test) = best.expect("at least one epoch");
    Ok(RunOutcome {
        seed: cfg.seed,
        epochs_run,
        best_epoch,
        accuracy_val: val.accuracy,
        accuracy_test: test.accuracy,
        macro_f1_test: test.macro_f1,
        final_compression: 0.0,
        final_total: last_loss,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    CurvGib,
    Gcn,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::CurvGib => "curvgib",
            Method::Gcn => "gcn",
        }
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub method: Method,
    pub runs: Vec<RunOutcome>,
    /// `(seed, message)` of every failed replicate.
    pub failures: Vec<(u64, String)>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
    pub compression_mean: f64,
    pub compression_std: f64,
}

impl ExperimentSummary {
    pub fn from_runs(method: Method, runs: Vec<RunOutcome>, failures: Vec<(u64, String)>) -> Self {
        let col = |f: fn(&RunOutcome) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
        let (accuracy_mean, accuracy_std) = col(|r| r.accuracy_test);
        let (macro_f1_mean, macro_f1_std) = col(|r| r.macro_f1_test);
        let (compression_mean, compression_std) = col(|r| r.final_compression);
        ExperimentSummary {
            method,
            runs,
            failures,
            accuracy_mean,
            accuracy_std,
            macro_f1_mean,
            macro_f1_std,
            compression_mean,
            compression_std,
        }
    }
}

/// Independent runs of `method` for each seed, in parallel. Failed seeds are
/// reported in the summary instead of aborting the others.
pub fn run_experiment(cfg: &TrainConfig, data: &DatasetBundle, seeds: &[u64], method: Method) -> Result<ExperimentSummary> {
    if seeds.is_empty() {
        return Err(Error::invalid("run_experiment needs at least one seed"));
    }
    let results: Vec<(u64, Result<RunOutcome>)> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = TrainConfig { seed, ..cfg.clone() };
            let r = match method {
                Method::CurvGib => train(&cfg, data).map(|(_, o)| o),
                Method::Gcn => train_gcn(&cfg, data),
            };
            (seed, r)
        })
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(o) => runs.push(o),
            Err(e) => failures.push((seed, e.to_string())),
        }
    }
    Ok(ExperimentSummary::from_runs(method, runs, failures))
}
