use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use ricci_ib::graph::Graph;
use ricci_ib::io::{
    fmt_sig12, load_artifacts, resolve_dataset, save_artifacts, unix_now, write_edge_list, DatasetBundle, RunManifest,
    RunStatus, PROBABILITIES_FILE, REFINED_FILE,
};
use ricci_ib::trainer::{continue_training, initialize, mean_std, outcome, RunOutcome, TrainConfig};
use ricci_ib::Error;
use serde_json::json;

use crate::{RewireArgs, TrainArgs};

pub const RUNS_FILE: &str = "runs.csv";
pub const CHANGES_FILE: &str = "changes.csv";

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

/// Reads a TOML config, or the echoed config of a manifest, then applies
/// `overrides` in order (later entries win).
pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<TrainConfig, Error> {
    let text = crate::read_input(path)?;
    let text = match RunManifest::from_json(&text) {
        Ok(m) => serde_json::from_value::<TrainConfig>(m.config)?.to_toml()?,
        Err(_) => text,
    };
    TrainConfig::from_toml_with_overrides(&text, overrides)
}

fn parse_set(entry: &str) -> Result<(String, String), Error> {
    let (k, v) = entry
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {entry:?}")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// Precedence, lowest first: config file, `--set` entries, typed flags.
fn overrides(a: &TrainArgs) -> Result<Vec<(String, String)>, Error> {
    let mut o = a.set.iter().map(|s| parse_set(s)).collect::<Result<Vec<_>, _>>()?;
    let mut flag = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            o.push((key.to_string(), v));
        }
    };
    flag("dataset", a.dataset.as_ref().map(|d| serde_json::Value::from(d.as_str()).to_string()));
    flag("seed", a.seed.map(|v| v.to_string()));
    flag("outer_epochs", a.epochs.map(|v| v.to_string()));
    flag("beta", a.beta.map(|v| format!("{v:?}")));
    flag("alpha", a.alpha.map(|v| format!("{v:?}")));
    flag("tau", a.tau.map(|v| format!("{v:?}")));
    flag("learning_rate", a.lr.map(|v| format!("{v:?}")));
    flag("depth", a.depth.map(|v| v.to_string()));
    flag("hidden_dim", a.hidden.map(|v| v.to_string()));
    Ok(o)
}

/// Trains one seed into `dir`. An aborted run still leaves its artifacts,
/// with the manifest marked aborted.
pub fn train_into(cfg: &TrainConfig, data: &DatasetBundle, dir: &Path) -> Result<RunOutcome, Error> {
    fs::create_dir_all(dir)?;
    let mut manifest = RunManifest::new("train", serde_json::to_value(cfg)?);
    manifest.inputs = data.provenance.clone();
    manifest.write(dir)?;
    let mut state = initialize(cfg, data)?;
    let seed = cfg.seed;
    let result = continue_training(&mut state, cfg, data, &mut |_, row| {
        eprintln!(
            "seed {seed} epoch {:>3}  total {:.4}  val {:.3}  test {:.3}",
            row.epoch, row.total, row.accuracy_val, row.accuracy_test
        );
        Ok(())
    })
    .and_then(|()| outcome(&state, cfg, data));
    manifest.finished_unix = Some(unix_now());
    match result {
        Ok(out) => {
            manifest.status = RunStatus::Complete;
            manifest.summary = serde_json::to_value(out)?;
            save_artifacts(dir, &state, cfg, &mut manifest)?;
            Ok(out)
        }
        Err(e) => {
            manifest.status = RunStatus::Aborted;
            manifest.error = Some(e.to_string());
            manifest.summary = json!({ "epochs_completed": state.metrics.len() });
            if save_artifacts(dir, &state, cfg, &mut manifest).is_err() {
                manifest.outputs.clear();
                manifest.write(dir)?;
            }
            Err(e)
        }
    }
}

pub fn run(a: TrainArgs) -> Result<(), Error> {
    if a.seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    let cfg = load_config(&a.config, &overrides(&a)?)?;
    let data = resolve_dataset(&cfg.dataset)?;
    if a.seeds == 1 {
        let out = train_into(&cfg, &data, &a.out)?;
        println!(
            "seed {}: test accuracy {:.4} at epoch {} -> {}",
            out.seed,
            out.accuracy_test,
            out.best_epoch,
            a.out.display()
        );
        return Ok(());
    }

    fs::create_dir_all(&a.out)?;
    let mut manifest = RunManifest::new("train", serde_json::to_value(&cfg)?);
    manifest.inputs = data.provenance.clone();
    manifest.write(&a.out)?;
    let seeds: Vec<u64> = (0..a.seeds as u64).map(|k| cfg.seed + k).collect();
    let results: Vec<(u64, Result<RunOutcome, Error>)> = seeds
        .par_iter()
        .map(|&seed| {
            let c = TrainConfig { seed, ..cfg.clone() };
            (seed, train_into(&c, &data, &seed_dir(&a.out, seed)))
        })
        .collect();

    let mut csv = String::from(
        "seed,status,epochs_run,best_epoch,accuracy_val,accuracy_test,macro_f1_test,final_compression,final_total\n",
    );
    let mut accs = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in &results {
        match r {
            Ok(o) => {
                accs.push(o.accuracy_test);
                csv.push_str(&format!(
                    "{seed},complete,{},{},{},{},{},{},{}\n",
                    o.epochs_run,
                    o.best_epoch,
                    fmt_sig12(o.accuracy_val),
                    fmt_sig12(o.accuracy_test),
                    fmt_sig12(o.macro_f1_test),
                    fmt_sig12(o.final_compression),
                    fmt_sig12(o.final_total)
                ));
            }
            Err(e) => {
                failures.push(json!({ "seed": seed, "error": e.to_string() }));
                csv.push_str(&format!("{seed},aborted,,,,,,,\n"));
            }
        }
    }
    fs::write(a.out.join(RUNS_FILE), csv)?;
    let (mean, std) = mean_std(&accs);
    manifest.record_output(&a.out, RUNS_FILE)?;
    manifest.summary = json!({
        "seeds": seeds,
        "accuracy_test_mean": mean,
        "accuracy_test_std": std,
        "failures": failures,
    });
    manifest.finished_unix = Some(unix_now());
    let first_error = results.into_iter().find_map(|(_, r)| r.err());
    manifest.status = if first_error.is_some() { RunStatus::Aborted } else { RunStatus::Complete };
    manifest.error = first_error.as_ref().map(|e| e.to_string());
    manifest.write(&a.out)?;
    println!("{} seeds: test accuracy {:.4} ± {:.4} -> {}", accs.len(), mean, std, a.out.display());
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn rewire(a: RewireArgs) -> Result<(), Error> {
    if let Some(t) = a.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("--threshold must lie in [0, 1], got {t}")));
        }
    }
    let (state, cfg, source) = load_artifacts(&a.run)?;
    if source.status != RunStatus::Complete {
        eprintln!("warning: {} holds an incomplete run", a.run.display());
    }
    let cands = &state.candidates;
    let kept: Vec<bool> = match a.threshold {
        Some(t) => state.probabilities.iter().map(|&p| p >= t).collect(),
        None => state.kept.clone(),
    };
    let pairs = cands.pairs();
    let graph = Graph::new(
        cands.node_count(),
        pairs.iter().zip(&kept).filter(|(_, &k)| k).map(|(&e, _)| e),
    )?;

    fs::create_dir_all(&a.out)?;
    write_edge_list(&a.out.join(REFINED_FILE), &graph)?;
    let mut probs = String::from("src,dst,pi,kept\n");
    let mut changes = String::from("src,dst,change\n");
    let (mut added, mut removed) = (0usize, 0usize);
    for (p, &(u, v)) in pairs.iter().enumerate() {
        probs.push_str(&format!("{u},{v},{},{}\n", fmt_sig12(state.probabilities[p]), u8::from(kept[p])));
        match (cands.is_original(p), kept[p]) {
            (true, false) => {
                removed += 1;
                changes.push_str(&format!("{u},{v},removed\n"));
            }
            (false, true) => {
                added += 1;
                changes.push_str(&format!("{u},{v},added\n"));
            }
            _ => {}
        }
    }
    fs::write(a.out.join(PROBABILITIES_FILE), probs)?;
    fs::write(a.out.join(CHANGES_FILE), changes)?;

    let mut manifest = RunManifest::new("rewire", json!({ "run": a.run, "threshold": a.threshold, "train": cfg }));
    manifest.inputs = source
        .outputs
        .iter()
        .map(|(name, hash)| ricci_ib::io::Provenance {
            path: a.run.join(name),
            hash: hash.clone(),
        })
        .collect();
    for name in [REFINED_FILE, PROBABILITIES_FILE, CHANGES_FILE] {
        manifest.record_output(&a.out, name)?;
    }
    manifest.summary = json!({
        "candidates": pairs.len(),
        "edges": graph.edge_count(),
        "added": added,
        "removed": removed,
    });
    manifest.status = RunStatus::Complete;
    manifest.finished_unix = Some(unix_now());
    manifest.write(&a.out)?;
    println!("{} edges ({added} added, {removed} removed) -> {}", graph.edge_count(), a.out.display());
    Ok(())
}
