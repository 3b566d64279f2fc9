//! Dataset files, splits, numeric formatting and content hashes.
//!
//! File formats:
//!
//! - edge list: one edge per line, two whitespace-separated 0-based node ids;
//!   blank lines and lines starting with `#` are ignored.
//! - features: CSV without header, one row per node.
//! - labels: CSV `node_id,label,split` (header optional), `split` is one of
//!   `train`, `val`, `test`; every node must appear exactly once.
//!
//! Content hashes are git blob ids (SHA-1, 40 lowercase hex digits), so
//! `git hash-object <file>` reproduces them.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, Graph, LabelSet, Split};
use crate::rng::{chacha, stream};

mod artifacts;

pub use artifacts::{
    load_artifacts, read_curvature_csv, read_metrics_csv, save_artifacts, unix_now, write_curvature_csv,
    write_metrics_csv, RunManifest, RunStatus, ARTIFACT_FILES, CHECKPOINT_FILE, CURVATURE_FILE,
    CURVATURE_META_FILE, MANIFEST_FILE, METRICS_FILE, PROBABILITIES_FILE, REFINED_FILE, STATE_FILE,
};

/// Git blob id of `bytes`: SHA-1 over `blob <len>\0` followed by the content.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(content_hash(&fs::read(path)?))
}

/// Formats with 12 significant digits, `%g` style.
pub fn fmt_sig12(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { format!("{v}") };
    }
    let sci = format!("{:.11e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, v);
        trim_zeros(&fixed)
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: PathBuf,
    pub hash: String,
}

/// Graph, features and labels that agree on the node count.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub labels: LabelSet,
    pub provenance: Vec<Provenance>,
}

impl DatasetBundle {
    pub fn new(
        name: impl Into<String>,
        graph: Graph,
        features: FeatureMatrix,
        labels: LabelSet,
    ) -> Result<Self> {
        let n = graph.node_count();
        if features.node_count() != n || labels.node_count() != n {
            return Err(Error::Data(format!(
                "node count mismatch: graph {n}, features {}, labels {}",
                features.node_count(),
                labels.node_count()
            )));
        }
        Ok(DatasetBundle {
            name: name.into(),
            graph,
            features,
            labels,
            provenance: Vec::new(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    /// Same features and labels on a different edge set.
    pub fn with_graph(&self, graph: Graph) -> Result<Self> {
        let mut b = Self::new(self.name.clone(), graph, self.features.clone(), self.labels.clone())?;
        b.provenance = self.provenance.clone();
        Ok(b)
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn parse_edge_list(path: &Path, text: &str) -> Result<Vec<(usize, usize, usize)>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(path, k + 1, "expected two node ids"));
        };
        let a = a
            .parse::<usize>()
            .map_err(|e| parse_err(path, k + 1, format!("bad node id {a:?}: {e}")))?;
        let b = b
            .parse::<usize>()
            .map_err(|e| parse_err(path, k + 1, format!("bad node id {b:?}: {e}")))?;
        out.push((k + 1, a, b));
    }
    Ok(out)
}

pub fn read_edge_list(path: &Path, node_count: usize) -> Result<Graph> {
    let text = fs::read_to_string(path)?;
    let edges = parse_edge_list(path, &text)?;
    for &(line, a, b) in &edges {
        if let Some(bad) = [a, b].into_iter().find(|&x| x >= node_count) {
            return Err(parse_err(
                path,
                line,
                format!("node {bad} out of range for {node_count} nodes"),
            ));
        }
    }
    Graph::new(node_count, edges.into_iter().map(|(_, a, b)| (a, b)))
}

pub fn write_edge_list(path: &Path, g: &Graph) -> Result<()> {
    let mut s = format!("# nodes {} edges {}\n", g.node_count(), g.edge_count());
    for &(a, b) in g.edges() {
        s.push_str(&format!("{a} {b}\n"));
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(path, k + 1, format!("bad number {c:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(parse_err(
                    path,
                    k + 1,
                    format!("expected {first} columns, found {}", row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no feature rows", path.display())));
    }
    FeatureMatrix::new(Matrix::from_rows(&rows)?)
}

pub fn write_features(path: &Path, x: &FeatureMatrix) -> Result<()> {
    let m = x.values();
    let mut s = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|&v| fmt_sig12(v)).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_labels(path: &Path, node_count: usize) -> Result<LabelSet> {
    let text = fs::read_to_string(path)?;
    let mut labels = vec![None; node_count];
    let mut splits = vec![None; node_count];
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (k == 0 && line.starts_with("node_id")) {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(parse_err(path, k + 1, "expected node_id,label,split"));
        }
        let node: usize = cols[0]
            .parse()
            .map_err(|e| parse_err(path, k + 1, format!("bad node id: {e}")))?;
        let label: usize = cols[1]
            .parse()
            .map_err(|e| parse_err(path, k + 1, format!("bad label: {e}")))?;
        let split: Split = cols[2]
            .parse()
            .map_err(|e: Error| parse_err(path, k + 1, e.to_string()))?;
        if node >= node_count {
            return Err(parse_err(
                path,
                k + 1,
                format!("node {node} out of range for {node_count} nodes"),
            ));
        }
        if labels[node].is_some() {
            return Err(parse_err(path, k + 1, format!("node {node} listed twice")));
        }
        labels[node] = Some(label);
        splits[node] = Some(split);
    }
    if let Some(missing) = labels.iter().position(Option::is_none) {
        return Err(Error::Data(format!(
            "{}: node {missing} has no label",
            path.display()
        )));
    }
    let labels: Vec<usize> = labels.into_iter().map(Option::unwrap).collect();
    let mask = |s: Split| splits.iter().map(|x| *x == Some(s)).collect::<Vec<bool>>();
    LabelSet::new(labels, mask(Split::Train), mask(Split::Val), mask(Split::Test))
}

pub fn write_labels(path: &Path, y: &LabelSet) -> Result<()> {
    let mut s = String::from("node_id,label,split\n");
    for (i, &l) in y.labels().iter().enumerate() {
        let split = y
            .split_of(i)
            .ok_or_else(|| Error::Data(format!("node {i} belongs to no split")))?;
        s.push_str(&format!("{i},{l},{}\n", split.as_str()));
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn load_dataset(edge_path: &Path, feature_path: &Path, label_path: &Path) -> Result<DatasetBundle> {
    let features = read_features(feature_path)?;
    let n = features.node_count();
    let graph = read_edge_list(edge_path, n)?;
    let labels = read_labels(label_path, n)?;
    let name = edge_path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let mut bundle = DatasetBundle::new(name, graph, features, labels)?;
    bundle.provenance = [edge_path, feature_path, label_path]
        .into_iter()
        .map(|p| {
            Ok(Provenance {
                path: p.to_path_buf(),
                hash: file_hash(p)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(bundle)
}

/// Directory layout used by `load_dataset_dir`/`save_dataset_dir`.
pub const DATASET_FILES: [&str; 3] = ["edges.txt", "features.csv", "labels.csv"];

pub fn load_dataset_dir(dir: &Path) -> Result<DatasetBundle> {
    let mut b = load_dataset(
        &dir.join(DATASET_FILES[0]),
        &dir.join(DATASET_FILES[1]),
        &dir.join(DATASET_FILES[2]),
    )?;
    if let Some(name) = dir.file_name() {
        b.name = name.to_string_lossy().into_owned();
    }
    Ok(b)
}

pub fn save_dataset_dir(dir: &Path, b: &DatasetBundle) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_edge_list(&dir.join(DATASET_FILES[0]), &b.graph)?;
    write_features(&dir.join(DATASET_FILES[1]), &b.features)?;
    write_labels(&dir.join(DATASET_FILES[2]), &b.labels)?;
    Ok(())
}

/// Where a run's data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    /// `sbm:<block sizes>:<p_in>:<p_out>:<feature_dim>:<feature_noise>[:<seed>]`,
    /// e.g. `sbm:100,100:0.2:0.05:8:1.0`.
    Sbm {
        block_sizes: Vec<usize>,
        p_in: f64,
        p_out: f64,
        feature_dim: usize,
        feature_noise: f64,
        seed: u64,
    },
    /// A directory holding [`DATASET_FILES`].
    Directory(PathBuf),
}

impl DatasetSource {
    pub fn parse(reference: &str) -> Result<Self> {
        let Some(spec) = reference.strip_prefix("sbm:") else {
            if reference.trim().is_empty() {
                return Err(Error::Config("empty dataset reference".into()));
            }
            return Ok(DatasetSource::Directory(PathBuf::from(reference)));
        };
        let bad = |what: &str| Error::Config(format!("dataset reference {reference:?}: bad {what}"));
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 5 && parts.len() != 6 {
            return Err(Error::Config(format!(
                "dataset reference {reference:?}: expected sbm:<sizes>:<p_in>:<p_out>:<dim>:<noise>[:<seed>]"
            )));
        }
        let block_sizes = parts[0]
            .split(',')
            .map(|b| b.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("block sizes"))?;
        Ok(DatasetSource::Sbm {
            block_sizes,
            p_in: parts[1].parse().map_err(|_| bad("p_in"))?,
            p_out: parts[2].parse().map_err(|_| bad("p_out"))?,
            feature_dim: parts[3].parse().map_err(|_| bad("feature dimension"))?,
            feature_noise: parts[4].parse().map_err(|_| bad("feature noise"))?,
            seed: match parts.get(5) {
                Some(s) => s.parse().map_err(|_| bad("seed"))?,
                None => 0,
            },
        })
    }

    pub fn load(&self) -> Result<DatasetBundle> {
        match self {
            DatasetSource::Sbm {
                block_sizes,
                p_in,
                p_out,
                feature_dim,
                feature_noise,
                seed,
            } => {
                let (g, x, y) = crate::graph::sbm_generate(block_sizes, *p_in, *p_out, *feature_dim, *feature_noise, *seed)?;
                let sizes: Vec<String> = block_sizes.iter().map(|b| b.to_string()).collect();
                DatasetBundle::new(format!("sbm-{}", sizes.join("-")), g, x, y)
            }
            DatasetSource::Directory(dir) => load_dataset_dir(dir),
        }
    }
}

/// Parses and loads a dataset reference.
pub fn resolve_dataset(reference: &str) -> Result<DatasetBundle> {
    DatasetSource::parse(reference)?.load()
}

/// Planetoid-style split: `per_class_train` nodes of every class, then
/// `val_size` and `test_size` nodes drawn from the remainder.
pub fn make_planetoid_splits(
    labels: &[usize],
    per_class_train: usize,
    val_size: usize,
    test_size: usize,
    seed: u64,
) -> Result<LabelSet> {
    if per_class_train == 0 {
        return Err(Error::invalid("per_class_train must be at least 1"));
    }
    let n = labels.len();
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = chacha(seed, &[stream::SPLITS]);
    let mut train = vec![false; n];
    for c in 0..class_count {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        if members.len() < per_class_train {
            return Err(Error::Data(format!(
                "class {c} has {} nodes, fewer than per_class_train {per_class_train}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for &i in &members[..per_class_train] {
            train[i] = true;
        }
    }
    let mut rest: Vec<usize> = (0..n).filter(|&i| !train[i]).collect();
    if rest.len() < val_size + test_size {
        return Err(Error::Data(format!(
            "{} nodes remain after training split, need {}",
            rest.len(),
            val_size + test_size
        )));
    }
    rest.shuffle(&mut rng);
    let mut val = vec![false; n];
    let mut test = vec![false; n];
    for &i in &rest[..val_size] {
        val[i] = true;
    }
    for &i in &rest[val_size..val_size + test_size] {
        test[i] = true;
    }
    LabelSet::new(labels.to_vec(), train, val, test)
}

/// Stratified split for synthetic graphs: `min(20, max(1, smallest/5))`
/// training nodes per class, a third of the remainder for validation and
/// the rest for testing.
pub fn sbm_splits(labels: &[usize], seed: u64) -> Result<LabelSet> {
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    let smallest = (0..class_count)
        .map(|c| labels.iter().filter(|&&l| l == c).count())
        .min()
        .unwrap_or(0);
    let per_class = (smallest / 5).clamp(1, 20);
    let rest = labels.len() - per_class * class_count;
    let val = rest / 3;
    make_planetoid_splits(labels, per_class, val, rest - val, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_references() {
        let src = DatasetSource::parse("sbm:3,3:1.0:0.0:2:0.5").unwrap();
        assert_eq!(
            src,
            DatasetSource::Sbm {
                block_sizes: vec![3, 3],
                p_in: 1.0,
                p_out: 0.0,
                feature_dim: 2,
                feature_noise: 0.5,
                seed: 0
            }
        );
        let b = src.load().unwrap();
        assert_eq!(b.graph.edge_count(), 6);
        assert_eq!(b.labels.class_count(), 2);
        assert!(matches!(DatasetSource::parse("data/cora").unwrap(), DatasetSource::Directory(_)));
        assert!(DatasetSource::parse("sbm:3,x:1:0:2:0.5").is_err());
        assert!(DatasetSource::parse("sbm:3,3:1").is_err());
        assert!(DatasetSource::parse("").is_err());
    }

    #[test]
    fn content_hash_matches_git_blob_ids() {
        assert_eq!(content_hash(b""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
        assert_eq!(content_hash(b"hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
    }

    #[test]
    fn sig12_formatting() {
        assert_eq!(fmt_sig12(1.0), "1");
        assert_eq!(fmt_sig12(0.5), "0.5");
        assert_eq!(fmt_sig12(-0.333333333333333), "-0.333333333333");
        assert_eq!(fmt_sig12(1e-300), "1e-300");
        assert_eq!(fmt_sig12(123456789012345.0), "1.23456789012e14");
        assert_eq!(fmt_sig12(0.0), "0");
    }

    #[test]
    fn sig12_reparse_is_stable() {
        for &v in &[1e-300, 1e300, 0.1, -2.5e-7, 123.456789012345678, std::f64::consts::E] {
            let s = fmt_sig12(v);
            let back: f64 = s.parse().unwrap();
            assert!(((back - v) / v).abs() <= 5e-12, "{v} -> {s}");
            assert_eq!(fmt_sig12(back), s);
        }
    }

    #[test]
    fn planetoid_split_sizes() {
        let labels: Vec<usize> = (0..100).map(|i| i / 50).collect();
        let y = make_planetoid_splits(&labels, 20, 30, 30, 5).unwrap();
        assert_eq!(y.indices(Split::Train).len(), 40);
        assert_eq!(y.indices(Split::Val).len(), 30);
        assert_eq!(y.indices(Split::Test).len(), 30);
        for c in 0..2 {
            assert_eq!(y.indices(Split::Train).iter().filter(|&&i| labels[i] == c).count(), 20);
        }
        assert_eq!(y, make_planetoid_splits(&labels, 20, 30, 30, 5).unwrap());
    }

    #[test]
    fn planetoid_split_rejects_small_class() {
        let labels = vec![0, 0, 1];
        assert!(make_planetoid_splits(&labels, 2, 0, 0, 0).is_err());
    }

    #[test]
    fn sbm_split_on_two_triangles() {
        let y = sbm_splits(&[0, 0, 0, 1, 1, 1], 0).unwrap();
        assert_eq!(y.indices(Split::Train).len(), 2);
        assert_eq!(y.indices(Split::Val).len(), 1);
        assert_eq!(y.indices(Split::Test).len(), 3);
    }
}
