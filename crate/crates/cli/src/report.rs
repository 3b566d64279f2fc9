use std::fs;
use std::path::{Path, PathBuf};

use ricci_ib::io::{fmt_sig12, read_metrics_csv, unix_now, RunManifest, RunStatus, METRICS_FILE};
use ricci_ib::trainer::{mean_std, EpochMetrics};
use ricci_ib::Error;
use serde_json::json;

use crate::ReportArgs;

pub const CURVE_FILE: &str = "learning_curve.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_TXT: &str = "summary.txt";

struct SeedRun {
    seed: u64,
    dir: PathBuf,
    manifest: RunManifest,
    rows: Vec<EpochMetrics>,
}

impl SeedRun {
    /// First epoch with the highest validation accuracy.
    fn best(&self) -> Option<&EpochMetrics> {
        self.rows
            .iter()
            .fold(None, |best: Option<&EpochMetrics>, r| match best {
                Some(b) if b.accuracy_val >= r.accuracy_val => Some(b),
                _ => Some(r),
            })
    }
}

/// `seed-<n>` subdirectories in seed order, or the directory itself.
fn seed_dirs(run: &Path) -> Result<Vec<(Option<u64>, PathBuf)>, Error> {
    let mut found = Vec::new();
    for entry in fs::read_dir(run)? {
        let entry = entry?;
        let name = entry.file_name();
        if let Some(seed) = name.to_str().and_then(|n| n.strip_prefix("seed-")).and_then(|s| s.parse().ok()) {
            if entry.path().is_dir() {
                found.push((Some(seed), entry.path()));
            }
        }
    }
    if found.is_empty() {
        found.push((None, run.to_path_buf()));
    }
    found.sort_by_key(|(s, _)| *s);
    Ok(found)
}

fn load_seed(seed: Option<u64>, dir: &Path) -> Result<SeedRun, Error> {
    let manifest = RunManifest::read(dir)?;
    if manifest.command != "train" {
        return Err(Error::Data(format!("{} is not a train run", dir.display())));
    }
    manifest.verify_outputs(dir)?;
    let seed = seed
        .or_else(|| manifest.config.get("seed").and_then(|v| v.as_u64()))
        .unwrap_or(0);
    let metrics = dir.join(METRICS_FILE);
    let rows = if metrics.exists() {
        read_metrics_csv(&metrics)?.rows().to_vec()
    } else {
        Vec::new()
    };
    Ok(SeedRun {
        seed,
        dir: dir.to_path_buf(),
        manifest,
        rows,
    })
}

fn status_str(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Running => "running",
        RunStatus::Complete => "complete",
        RunStatus::Aborted => "aborted",
    }
}

pub fn run(a: ReportArgs) -> Result<(), Error> {
    let same = match (a.run.canonicalize(), a.out.canonicalize()) {
        (Ok(r), Ok(o)) => r == o,
        _ => false,
    };
    if same {
        return Err(Error::Config("--out must differ from --run".into()));
    }
    let runs = seed_dirs(&a.run)?
        .into_iter()
        .map(|(s, d)| load_seed(s, &d))
        .collect::<Result<Vec<_>, _>>()?;

    let mut curve = String::from("seed,epoch,total,prediction,compression,structure,ibcurv,accuracy_val,accuracy_test\n");
    let mut table = String::from("seed,status,epochs,best_epoch,accuracy_val,accuracy_test,final_total\n");
    let mut text = String::new();
    let mut accs = Vec::new();
    let mut incomplete = Vec::new();
    for r in &runs {
        for m in &r.rows {
            curve.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.seed,
                m.epoch,
                fmt_sig12(m.total),
                fmt_sig12(m.prediction),
                fmt_sig12(m.compression),
                fmt_sig12(m.structure),
                fmt_sig12(m.ibcurv),
                fmt_sig12(m.accuracy_val),
                fmt_sig12(m.accuracy_test)
            ));
        }
        let status = r.manifest.status;
        let best = r.best();
        let cell = |f: fn(&EpochMetrics) -> f64| best.map_or(String::new(), |b| fmt_sig12(f(b)));
        table.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.seed,
            status_str(status),
            r.rows.len(),
            best.map_or(String::new(), |b| b.epoch.to_string()),
            cell(|b| b.accuracy_val),
            cell(|b| b.accuracy_test),
            r.rows.last().map_or(String::new(), |l| fmt_sig12(l.total)),
        ));
        text.push_str(&format!(
            "seed {:>4}  {:<8}  epochs {:>4}  best {:>4}  test {}\n",
            r.seed,
            status_str(status),
            r.rows.len(),
            best.map_or("-".to_string(), |b| b.epoch.to_string()),
            best.map_or("-".to_string(), |b| format!("{:.4}", b.accuracy_test)),
        ));
        match (status, best) {
            (RunStatus::Complete, Some(b)) => accs.push(b.accuracy_test),
            _ => {
                let why = r.manifest.error.clone().unwrap_or_else(|| status_str(status).to_string());
                incomplete.push(json!({ "seed": r.seed, "status": status_str(status), "reason": why }));
                text.push_str(&format!("INCOMPLETE: seed {} did not finish ({why})\n", r.seed));
            }
        }
    }
    let (mean, std) = mean_std(&accs);
    text.push_str(&format!("test accuracy {:.4} ± {:.4} over {} complete seed(s)\n", mean, std, accs.len()));
    if !incomplete.is_empty() {
        text.push_str(&format!("INCOMPLETE: {} of {} seed(s) missing from the mean\n", incomplete.len(), runs.len()));
    }

    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join(CURVE_FILE), curve)?;
    fs::write(a.out.join(SUMMARY_CSV), table)?;
    fs::write(a.out.join(SUMMARY_TXT), &text)?;
    let mut manifest = RunManifest::new("report", json!({ "run": a.run }));
    manifest.inputs = runs
        .iter()
        .flat_map(|r| {
            r.manifest.outputs.iter().map(|(n, h)| ricci_ib::io::Provenance {
                path: r.dir.join(n),
                hash: h.clone(),
            })
        })
        .collect();
    for name in [CURVE_FILE, SUMMARY_CSV, SUMMARY_TXT] {
        manifest.record_output(&a.out, name)?;
    }
    manifest.summary = json!({
        "seeds": runs.iter().map(|r| r.seed).collect::<Vec<_>>(),
        "accuracy_test_mean": mean,
        "accuracy_test_std": std,
        "complete": incomplete.is_empty(),
        "incomplete": incomplete,
    });
    manifest.status = RunStatus::Complete;
    manifest.finished_unix = Some(unix_now());
    manifest.write(&a.out)?;
    print!("{text}");
    Ok(())
}
