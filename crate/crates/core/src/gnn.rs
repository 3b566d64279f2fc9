//! Curvature-weighted message-passing encoder and a plain mean-aggregation
//! GCN used as the comparison model.
//!
//! Each layer computes `relu(h_i + (Σ_j w_ij h_j)·W + b)` where the edge
//! weights `w_ij` come from `softplus(scale·κ_ij + shift)`, normalized over
//! the neighbors of the receiving node `i`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{glorot_uniform, Matrix, ParamId, ParamStore, SparseMatrix, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::rng::{chacha, stream};
use crate::vib::{reparameterize, GaussianPosterior};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvGnnConfig {
    pub depth: usize,
    pub hidden_dim: usize,
    pub class_count: usize,
    pub dropout_rate: f64,
    /// Divide edge weights by their per-node sum.
    pub normalize_weights: bool,
}

impl CurvGnnConfig {
    pub fn new(depth: usize, hidden_dim: usize, class_count: usize) -> Self {
        CurvGnnConfig {
            depth,
            hidden_dim,
            class_count,
            dropout_rate: 0.5,
            normalize_weights: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.hidden_dim == 0 {
            return Err(Error::invalid("depth and hidden_dim must be at least 1"));
        }
        if self.class_count < 2 {
            return Err(Error::invalid("at least two classes are required"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Maps curvature to a positive raw edge weight, `softplus(scale·κ + shift)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeWeightTransform {
    pub scale: ParamId,
    pub shift: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    fn init<R: Rng>(params: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Result<Self> {
        Ok(Linear {
            weight: params.add(format!("{name}.weight"), glorot_uniform(rng, fan_in, fan_out))?,
            bias: params.add(format!("{name}.bias"), Matrix::zeros(1, fan_out))?,
        })
    }

    fn lookup(params: &ParamStore, name: &str) -> Result<Self> {
        Ok(Linear {
            weight: lookup(params, &format!("{name}.weight"))?,
            bias: lookup(params, &format!("{name}.bias"))?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(params, self.weight)?;
        let b = tape.param(params, self.bias)?;
        let xw = tape.matmul(x, w)?;
        tape.add_row(xw, b)
    }

    pub fn ids(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

fn lookup(params: &ParamStore, name: &str) -> Result<ParamId> {
    params
        .id(name)
        .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))
}

/// Parameter handles of the encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurvGnn {
    pub input: Linear,
    pub layers: Vec<Linear>,
    pub mu: Linear,
    pub log_var: Linear,
    pub classifier: Linear,
    pub transform: EdgeWeightTransform,
}

impl CurvGnn {
    pub fn init<R: Rng>(params: &mut ParamStore, feature_dim: usize, cfg: &CurvGnnConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.hidden_dim;
        let input = Linear::init(params, "encoder.input", feature_dim, h, rng)?;
        let layers = (0..cfg.depth)
            .map(|l| Linear::init(params, &format!("encoder.layer{l}"), h, h, rng))
            .collect::<Result<Vec<_>>>()?;
        let mu = Linear::init(params, "encoder.mu", h, h, rng)?;
        let log_var = Linear::init(params, "encoder.log_var", h, h, rng)?;
        let classifier = Linear::init(params, "encoder.classifier", h, cfg.class_count, rng)?;
        let transform = EdgeWeightTransform {
            scale: params.add("edge_transform.scale", Matrix::scalar(1.0))?,
            shift: params.add("edge_transform.shift", Matrix::scalar(0.0))?,
        };
        Ok(CurvGnn {
            input,
            layers,
            mu,
            log_var,
            classifier,
            transform,
        })
    }

    pub fn lookup(params: &ParamStore, depth: usize) -> Result<Self> {
        Ok(CurvGnn {
            input: Linear::lookup(params, "encoder.input")?,
            layers: (0..depth)
                .map(|l| Linear::lookup(params, &format!("encoder.layer{l}")))
                .collect::<Result<_>>()?,
            mu: Linear::lookup(params, "encoder.mu")?,
            log_var: Linear::lookup(params, "encoder.log_var")?,
            classifier: Linear::lookup(params, "encoder.classifier")?,
            transform: EdgeWeightTransform {
                scale: lookup(params, "edge_transform.scale")?,
                shift: lookup(params, "edge_transform.shift")?,
            },
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.input.ids().into();
        for l in &self.layers {
            ids.extend(l.ids());
        }
        ids.extend(self.mu.ids());
        ids.extend(self.log_var.ids());
        ids.extend(self.classifier.ids());
        ids.extend([self.transform.scale, self.transform.shift]);
        ids
    }
}

/// Directed message routes of an undirected edge list: every edge `(a, b)`
/// sends `b → a` (slot `e`) and `a → b` (slot `E + e`).
#[derive(Debug, Clone)]
pub struct Messages {
    pub node_count: usize,
    pub edge_count: usize,
    pub targets: Arc<[usize]>,
    pub sources: Arc<[usize]>,
    /// Slot → edge index.
    pub edge_of: Arc<[usize]>,
}

impl Messages {
    pub fn new(node_count: usize, edges: &[Edge]) -> Result<Self> {
        for &(a, b) in edges {
            let bad = a.max(b);
            if bad >= node_count {
                return Err(Error::NodeOutOfRange {
                    index: bad,
                    node_count,
                });
            }
        }
        let e = edges.len();
        Ok(Messages {
            node_count,
            edge_count: e,
            targets: edges.iter().map(|x| x.0).chain(edges.iter().map(|x| x.1)).collect(),
            sources: edges.iter().map(|x| x.1).chain(edges.iter().map(|x| x.0)).collect(),
            edge_of: (0..e).chain(0..e).collect(),
        })
    }

    pub fn from_graph(g: &Graph) -> Self {
        Messages::new(g.node_count(), g.edges()).expect("graph edges are in range")
    }
}

/// Directed message weights (2E×1) from per-edge curvature `kappa` (E×1).
pub fn edge_weights(
    tape: &mut Tape,
    kappa: Var,
    transform: &EdgeWeightTransform,
    params: &ParamStore,
    messages: &Messages,
    normalize: bool,
) -> Result<Var> {
    if tape.shape(kappa) != (messages.edge_count, 1) {
        return Err(Error::Shape {
            op: "edge_weights",
            lhs: tape.shape(kappa),
            rhs: (messages.edge_count, 1),
        });
    }
    let scale = tape.param(params, transform.scale)?;
    let shift = tape.param(params, transform.shift)?;
    let scaled = tape.matmul(kappa, scale)?;
    let shifted = tape.add_row(scaled, shift)?;
    let raw = tape.softplus(shifted)?;
    let directed = tape.gather_rows(raw, Arc::clone(&messages.edge_of))?;
    if !normalize {
        return Ok(directed);
    }
    let sums = tape.scatter_add_rows(directed, Arc::clone(&messages.targets), messages.node_count)?;
    let per_slot = tape.gather_rows(sums, Arc::clone(&messages.targets))?;
    tape.div(directed, per_slot)
}

/// `relu(h + (Σ_j w_ij h_j)·W + b)`.
pub fn aggregate(
    tape: &mut Tape,
    h: Var,
    weights: Var,
    messages: &Messages,
    layer: &Linear,
    params: &ParamStore,
) -> Result<Var> {
    if tape.shape(h).0 != messages.node_count {
        return Err(Error::Shape {
            op: "aggregate",
            lhs: tape.shape(h),
            rhs: (messages.node_count, tape.shape(h).1),
        });
    }
    let from = tape.gather_rows(h, Arc::clone(&messages.sources))?;
    let weighted = tape.mul_col(from, weights)?;
    let msg = tape.scatter_add_rows(weighted, Arc::clone(&messages.targets), messages.node_count)?;
    let lin = layer.forward(tape, params, msg)?;
    let res = tape.add(h, lin)?;
    tape.relu(res)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Dropout on, logits from a sampled code; both streams keyed by `seed`.
    Train { seed: u64 },
    /// No dropout, logits from the posterior mean.
    Eval,
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderOutput {
    pub posterior: GaussianPosterior,
    /// Code fed to the classifier: a sample in training mode, `mu` in eval.
    pub z: Var,
    pub logits: Var,
    /// Output of the last message-passing layer.
    pub hidden: Var,
}

fn dropout(tape: &mut Tape, h: Var, rate: f64, seed: u64, site: u64) -> Result<Var> {
    if rate == 0.0 {
        return Ok(h);
    }
    let (r, c) = tape.shape(h);
    let mut rng = chacha(seed, &[stream::DROPOUT, site]);
    let keep = 1.0 / (1.0 - rate);
    let mask = (0..r * c)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mask = tape.constant(Matrix::from_vec(r, c, mask)?)?;
    tape.mul(h, mask)
}

/// Runs the encoder on node features `x` (N×F) over the structure described
/// by `messages`, with per-edge curvature `kappa` (E×1).
pub fn forward(
    tape: &mut Tape,
    model: &CurvGnn,
    params: &ParamStore,
    cfg: &CurvGnnConfig,
    x: Var,
    kappa: Var,
    messages: &Messages,
    mode: ForwardMode,
) -> Result<EncoderOutput> {
    if model.layers.len() != cfg.depth {
        return Err(Error::invalid(format!(
            "model has {} layers, config says {}",
            model.layers.len(),
            cfg.depth
        )));
    }
    let weights = edge_weights(tape, kappa, &model.transform, params, messages, cfg.normalize_weights)?;
    let h = model.input.forward(tape, params, x)?;
    let mut h = tape.relu(h)?;
    for (l, layer) in model.layers.iter().enumerate() {
        if let ForwardMode::Train { seed } = mode {
            h = dropout(tape, h, cfg.dropout_rate, seed, l as u64)?;
        }
        h = aggregate(tape, h, weights, messages, layer, params)?;
    }
    let hidden = h;
    if let ForwardMode::Train { seed } = mode {
        h = dropout(tape, h, cfg.dropout_rate, seed, cfg.depth as u64)?;
    }
    let mu = model.mu.forward(tape, params, h)?;
    let raw_lv = model.log_var.forward(tape, params, h)?;
    let posterior = GaussianPosterior::new(tape, mu, raw_lv)?;
    let z = match mode {
        ForwardMode::Train { seed } => reparameterize(tape, &posterior, seed)?,
        ForwardMode::Eval => mu,
    };
    let logits = model.classifier.forward(tape, params, z)?;
    Ok(EncoderOutput {
        posterior,
        z,
        logits,
        hidden,
    })
}

/// Row-normalized adjacency `D⁻¹A`; isolated nodes get an empty row.
pub fn mean_aggregation_matrix(g: &Graph) -> SparseMatrix {
    let rows = (0..g.node_count())
        .map(|u| {
            let nb = g.neighbors(u);
            let w = 1.0 / nb.len().max(1) as f64;
            nb.iter().map(|&v| (v, w)).collect()
        })
        .collect();
    SparseMatrix::new(g.node_count(), rows).expect("neighbors are in range")
}

/// Plain GCN control: `relu(X·W_in + b)`, then residual mean-aggregation
/// layers `relu(h + (D⁻¹A h)·W + b)`, then a linear classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlainGcn {
    pub input: Linear,
    pub layers: Vec<Linear>,
    pub classifier: Linear,
}

#[derive(Debug, Clone, Copy)]
pub struct GcnOutput {
    pub hidden: Var,
    pub logits: Var,
}

impl PlainGcn {
    pub fn init<R: Rng>(params: &mut ParamStore, feature_dim: usize, cfg: &CurvGnnConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.hidden_dim;
        Ok(PlainGcn {
            input: Linear::init(params, "gcn.input", feature_dim, h, rng)?,
            layers: (0..cfg.depth)
                .map(|l| Linear::init(params, &format!("gcn.layer{l}"), h, h, rng))
                .collect::<Result<_>>()?,
            classifier: Linear::init(params, "gcn.classifier", h, cfg.class_count, rng)?,
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        cfg: &CurvGnnConfig,
        x: Var,
        adjacency: &Arc<SparseMatrix>,
        mode: ForwardMode,
    ) -> Result<GcnOutput> {
        let h = self.input.forward(tape, params, x)?;
        let mut h = tape.relu(h)?;
        for (l, layer) in self.layers.iter().enumerate() {
            if let ForwardMode::Train { seed } = mode {
                h = dropout(tape, h, cfg.dropout_rate, seed, l as u64)?;
            }
            let msg = tape.spmm(Arc::clone(adjacency), h)?;
            let lin = layer.forward(tape, params, msg)?;
            let res = tape.add(h, lin)?;
            h = tape.relu(res)?;
        }
        let hidden = h;
        if let ForwardMode::Train { seed } = mode {
            h = dropout(tape, h, cfg.dropout_rate, seed, cfg.depth as u64)?;
        }
        let logits = self.classifier.forward(tape, params, h)?;
        Ok(GcnOutput { hidden, logits })
    }
}
