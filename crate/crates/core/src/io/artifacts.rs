//! Run directories: checkpoint, state counters, curvature and probability
//! CSVs, refined edge list, metrics CSV and a manifest with content hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{content_hash, fmt_sig12, write_edge_list, Provenance};
use crate::autodiff::checkpoint::{read_tensors, write_tensors};
use crate::autodiff::{Adam, Matrix, ParamStore};
use crate::error::{Error, Result};
use crate::gnn::CurvGnn;
use crate::graph::{Edge, Graph};
use crate::ib_curvature::AffineHead;
use crate::refine::CandidateSet;
use crate::trainer::{EpochMetrics, MetricsLog, Snapshot, StepRecord, TrainConfig, TrainState};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const STATE_FILE: &str = "state.json";
pub const CURVATURE_FILE: &str = "curvature.csv";
pub const CURVATURE_META_FILE: &str = "curvature.meta.json";
pub const REFINED_FILE: &str = "refined_edges.txt";
pub const PROBABILITIES_FILE: &str = "probabilities.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Files written by [`save_artifacts`], manifest last.
pub const ARTIFACT_FILES: [&str; 8] = [
    CHECKPOINT_FILE,
    STATE_FILE,
    CURVATURE_FILE,
    CURVATURE_META_FILE,
    REFINED_FILE,
    PROBABILITIES_FILE,
    METRICS_FILE,
    MANIFEST_FILE,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Complete,
    Aborted,
}

/// Record of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub status: RunStatus,
    /// Echo of the effective configuration.
    pub config: serde_json::Value,
    pub inputs: Vec<Provenance>,
    /// Output file name → content hash.
    pub outputs: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    /// Free-form result summary.
    #[serde(default)]
    pub summary: serde_json::Value,
    /// Failure message of an aborted run.
    #[serde(default)]
    pub error: Option<String>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: impl Into<String>, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            status: RunStatus::Running,
            config,
            inputs: Vec::new(),
            outputs: BTreeMap::new(),
            started_unix: unix_now(),
            finished_unix: None,
            summary: serde_json::Value::Null,
            error: None,
        }
    }

    /// Hashes `name` inside `dir` and records it as an output.
    pub fn record_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        let hash = content_hash(&fs::read(dir.join(name))?);
        self.outputs.insert(name.to_string(), hash);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(MANIFEST_FILE), self.to_json()?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(dir.join(MANIFEST_FILE))?)
    }

    /// Checks every recorded output against its hash.
    pub fn verify_outputs(&self, dir: &Path) -> Result<()> {
        for (name, expected) in &self.outputs {
            let path = dir.join(name);
            let found = content_hash(&fs::read(&path)?);
            if &found != expected {
                return Err(Error::HashMismatch {
                    path,
                    expected: expected.clone(),
                    found,
                });
            }
        }
        Ok(())
    }
}

/// `src,dst,kappa` rows with 12 significant digits.
pub fn write_curvature_csv(path: &Path, rows: impl IntoIterator<Item = (Edge, f64)>) -> Result<()> {
    let mut s = String::from("src,dst,kappa\n");
    for ((a, b), k) in rows {
        s.push_str(&format!("{a},{b},{}\n", fmt_sig12(k)));
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_curvature_csv(path: &Path) -> Result<Vec<(Edge, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("expected src,dst,kappa, got {line:?}"),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(bad());
        }
        let a = f[0].trim().parse().map_err(|_| bad())?;
        let b = f[1].trim().parse().map_err(|_| bad())?;
        let k = f[2].trim().parse().map_err(|_| bad())?;
        rows.push(((a, b), k));
    }
    Ok(rows)
}

const METRICS_HEADER: &str = "epoch,prediction,compression,structure,ibcurv,total,accuracy_val,macro_f1_val,accuracy_test,macro_f1_test,refined_edges,wall_time";

pub fn write_metrics_csv(path: &Path, log: &MetricsLog) -> Result<()> {
    let mut s = format!("{METRICS_HEADER}\n");
    for m in log.rows() {
        let reals = [
            m.prediction,
            m.compression,
            m.structure,
            m.ibcurv,
            m.total,
            m.accuracy_val,
            m.macro_f1_val,
            m.accuracy_test,
            m.macro_f1_test,
        ];
        let reals: Vec<String> = reals.iter().map(|&v| fmt_sig12(v)).collect();
        s.push_str(&format!(
            "{},{},{},{}\n",
            m.epoch,
            reals.join(","),
            m.refined_edges,
            fmt_sig12(m.wall_time)
        ));
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<MetricsLog> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == METRICS_HEADER => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "unexpected metrics header".into(),
            })
        }
    }
    let mut log = MetricsLog::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 12 {
            return Err(bad("expected 12 columns"));
        }
        let r = |k: usize| f[k].parse::<f64>().map_err(|_| bad("bad number"));
        log.push(EpochMetrics {
            epoch: f[0].parse().map_err(|_| bad("bad epoch"))?,
            prediction: r(1)?,
            compression: r(2)?,
            structure: r(3)?,
            ibcurv: r(4)?,
            total: r(5)?,
            accuracy_val: r(6)?,
            macro_f1_val: r(7)?,
            accuracy_test: r(8)?,
            macro_f1_test: r(9)?,
            refined_edges: f[10].parse().map_err(|_| bad("bad edge count"))?,
            wall_time: r(11)?,
        })
        .map_err(|e| bad(&e.to_string()))?;
    }
    Ok(log)
}

/// Counters and logs that are not tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateRecord {
    node_count: usize,
    depth: usize,
    learning_rate: f64,
    epoch: usize,
    adam_steps: [u64; 3],
    metrics: MetricsLog,
    steps: Vec<StepRecord>,
    last_structure_loss: f64,
    stale_epochs: usize,
    stopped: bool,
    best: Option<(usize, f64)>,
}

fn pairs_tensor(pairs: &[Edge]) -> Matrix {
    Matrix::from_vec(pairs.len(), 2, pairs.iter().flat_map(|&(a, b)| [a as f64, b as f64]).collect())
        .expect("two columns per pair")
}

fn tensor_pairs(m: &Matrix) -> Result<Vec<Edge>> {
    if m.cols() != 2 && !m.is_empty() {
        return Err(Error::Checkpoint("pair tensor must have two columns".into()));
    }
    (0..m.rows())
        .map(|i| {
            let (a, b) = (m.get(i, 0), m.get(i, 1));
            if a < 0.0 || b < 0.0 || a.fract() != 0.0 || b.fract() != 0.0 {
                return Err(Error::Checkpoint(format!("bad node index in pair {i}")));
            }
            Ok((a as usize, b as usize))
        })
        .collect()
}

fn flags_tensor(flags: &[bool]) -> Matrix {
    Matrix::column(flags.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect())
}

fn adam_tensors(out: &mut Vec<(String, Matrix)>, tag: &str, adam: &Adam) {
    let (first, second) = adam.moments();
    for (k, (m, v)) in first.iter().zip(second).enumerate() {
        out.push((format!("adam/{tag}/first/{k}"), m.clone()));
        out.push((format!("adam/{tag}/second/{k}"), v.clone()));
    }
}

fn state_tensors(state: &TrainState) -> Vec<(String, Matrix)> {
    let mut out: Vec<(String, Matrix)> = state
        .params
        .iter()
        .map(|(_, p)| (format!("param/{}", p.name), p.value.clone()))
        .collect();
    adam_tensors(&mut out, "repr", &state.optim_repr);
    adam_tensors(&mut out, "struct", &state.optim_struct);
    adam_tensors(&mut out, "joint", &state.optim_joint);
    out.push(("state/candidates".into(), pairs_tensor(state.candidates.pairs())));
    out.push(("state/candidate_original".into(), flags_tensor(state.candidates.original_mask())));
    out.push(("state/refined".into(), pairs_tensor(state.refined.edges())));
    out.push(("state/kappa".into(), Matrix::column(state.kappa.clone())));
    out.push(("state/codes".into(), state.codes.clone()));
    out.push(("state/probabilities".into(), Matrix::column(state.probabilities.clone())));
    out.push(("state/kept".into(), flags_tensor(&state.kept)));
    if let Some(b) = &state.best {
        for (_, p) in b.params.iter() {
            out.push((format!("best/param/{}", p.name), p.value.clone()));
        }
        out.push(("best/refined".into(), pairs_tensor(b.refined.edges())));
        out.push(("best/kappa".into(), Matrix::column(b.kappa.clone())));
    }
    out
}

/// Writes the full run directory and the manifest (with output hashes).
pub fn save_artifacts(dir: &Path, state: &TrainState, cfg: &TrainConfig, manifest: &mut RunManifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut bytes = Vec::new();
    write_tensors(&mut bytes, &state_tensors(state))?;
    fs::write(dir.join(CHECKPOINT_FILE), bytes)?;

    let record = StateRecord {
        node_count: state.refined.node_count(),
        depth: cfg.depth,
        learning_rate: cfg.learning_rate,
        epoch: state.epoch,
        adam_steps: [state.optim_repr.step, state.optim_struct.step, state.optim_joint.step],
        metrics: state.metrics.clone(),
        steps: state.steps.clone(),
        last_structure_loss: state.last_structure_loss,
        stale_epochs: state.stale_epochs,
        stopped: state.stopped,
        best: state.best.as_ref().map(|b| (b.epoch, b.accuracy_val)),
    };
    fs::write(dir.join(STATE_FILE), serde_json::to_string_pretty(&record)? + "\n")?;

    write_curvature_csv(&dir.join(CURVATURE_FILE), state.kappa_map())?;
    let meta = serde_json::json!({
        "method": "surrogate",
        "alpha": cfg.alpha,
        "floor_epsilon": cfg.floor_epsilon,
        "signed_numerator": cfg.signed_numerator,
        "pairs": "candidates",
        "epoch": state.epoch,
    });
    fs::write(dir.join(CURVATURE_META_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
    write_edge_list(&dir.join(REFINED_FILE), &state.refined)?;

    let mut probs = String::from("src,dst,pi,kept\n");
    for (p, &(a, b)) in state.candidates.pairs().iter().enumerate() {
        probs.push_str(&format!(
            "{a},{b},{},{}\n",
            fmt_sig12(state.probabilities[p]),
            u8::from(state.kept[p])
        ));
    }
    fs::write(dir.join(PROBABILITIES_FILE), probs)?;
    write_metrics_csv(&dir.join(METRICS_FILE), &state.metrics)?;

    manifest.config = serde_json::to_value(cfg)?;
    for name in &ARTIFACT_FILES[..ARTIFACT_FILES.len() - 1] {
        manifest.record_output(dir, name)?;
    }
    manifest.write(dir)
}

struct TensorMap(BTreeMap<String, Matrix>);

impl TensorMap {
    fn take(&mut self, name: &str) -> Result<Matrix> {
        self.0
            .remove(name)
            .ok_or_else(|| Error::Checkpoint(format!("checkpoint has no tensor {name}")))
    }

    fn take_column(&mut self, name: &str) -> Result<Vec<f64>> {
        Ok(self.take(name)?.into_data())
    }

    fn take_flags(&mut self, name: &str) -> Result<Vec<bool>> {
        Ok(self.take_column(name)?.into_iter().map(|v| v != 0.0).collect())
    }

    fn take_adam(&mut self, tag: &str, params: &ParamStore, targets: Vec<crate::autodiff::ParamId>, lr: f64, step: u64) -> Result<Adam> {
        let mut adam = Adam::new(params, targets, lr);
        let n = adam.targets().len();
        let mut first = Vec::with_capacity(n);
        let mut second = Vec::with_capacity(n);
        for k in 0..n {
            first.push(self.take(&format!("adam/{tag}/first/{k}"))?);
            second.push(self.take(&format!("adam/{tag}/second/{k}"))?);
        }
        adam.set_moments(first, second, step);
        Ok(adam)
    }
}

/// Restores a run directory, verifying every output hash first.
pub fn load_artifacts(dir: &Path) -> Result<(TrainState, TrainConfig, RunManifest)> {
    let manifest = RunManifest::read(dir)?;
    manifest.verify_outputs(dir)?;
    let cfg: TrainConfig = serde_json::from_value(manifest.config.clone())?;
    let record: StateRecord = serde_json::from_str(&fs::read_to_string(dir.join(STATE_FILE))?)?;
    let tensors = read_tensors(&fs::read(dir.join(CHECKPOINT_FILE))?[..])?;
    let order: Vec<String> = tensors.iter().map(|(n, _)| n.clone()).collect();
    let mut map = TensorMap(tensors.into_iter().collect());

    // parameters in their stored (registration) order
    let mut params = ParamStore::new();
    for name in order.iter().filter(|n| n.starts_with("param/")) {
        params.add(name["param/".len()..].to_string(), map.take(name)?)?;
    }
    let model = CurvGnn::lookup(&params, record.depth)?;
    let head = AffineHead::lookup(&params, "curvature_head")?;
    let lr = record.learning_rate;
    let [s_repr, s_struct, s_joint] = record.adam_steps;
    let optim_repr = map.take_adam("repr", &params, model.param_ids(), lr, s_repr)?;
    let optim_struct = map.take_adam("struct", &params, head.ids().to_vec(), lr, s_struct)?;
    let optim_joint = map.take_adam("joint", &params, params.ids().collect(), lr, s_joint)?;

    let n = record.node_count;
    let pairs = tensor_pairs(&map.take("state/candidates")?)?;
    let original = map.take_flags("state/candidate_original")?;
    let candidates = CandidateSet::from_parts(n, pairs, original)?;
    let refined = Graph::new(n, tensor_pairs(&map.take("state/refined")?)?)?;
    let kappa = map.take_column("state/kappa")?;
    let codes = map.take("state/codes")?;
    let probabilities = map.take_column("state/probabilities")?;
    let kept = map.take_flags("state/kept")?;

    let best = match record.best {
        Some((epoch, accuracy_val)) => {
            let mut best_params = ParamStore::new();
            for name in order.iter().filter(|n| n.starts_with("best/param/")) {
                best_params.add(name["best/param/".len()..].to_string(), map.take(name)?)?;
            }
            Some(Snapshot {
                epoch,
                accuracy_val,
                params: best_params,
                refined: Graph::new(n, tensor_pairs(&map.take("best/refined")?)?)?,
                kappa: map.take_column("best/kappa")?,
            })
        }
        None => None,
    };
    if let Some(name) = map.0.keys().next() {
        return Err(Error::Checkpoint(format!("unexpected tensor {name}")));
    }
    if kappa.len() != candidates.len() || probabilities.len() != candidates.len() || kept.len() != candidates.len() {
        return Err(Error::Checkpoint("per-candidate tensors disagree with the candidate set".into()));
    }
    let state = TrainState {
        params,
        model,
        head,
        candidates,
        refined,
        kappa,
        codes,
        probabilities,
        kept,
        optim_repr,
        optim_struct,
        optim_joint,
        epoch: record.epoch,
        metrics: record.metrics,
        steps: record.steps,
        last_structure_loss: record.last_structure_loss,
        best,
        stale_epochs: record.stale_epochs,
        stopped: record.stopped,
    };
    Ok((state, cfg, manifest))
}
