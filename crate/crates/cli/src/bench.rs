use std::fs;

use rayon::prelude::*;
use ricci_ib::audit::{gradient_audit, GradientCase};
use ricci_ib::graph::{inject_noise, NoiseMode};
use ricci_ib::io::{fmt_sig12, resolve_dataset, unix_now, RunManifest, RunStatus};
use ricci_ib::trainer::{run_experiment, ExperimentSummary, Method, TrainConfig};
use ricci_ib::Error;
use serde_json::json;

use crate::train::{load_config, RUNS_FILE};
use crate::{BenchArgs, GradcheckArgs};

pub const COMPARISON_FILE: &str = "comparison.csv";
pub const GRADCHECK_FILE: &str = "gradcheck.csv";

fn bench_config(a: &BenchArgs) -> Result<TrainConfig, Error> {
    match (&a.config, &a.dataset) {
        (Some(path), dataset) => {
            let o: Vec<(String, String)> = dataset
                .iter()
                .map(|d| ("dataset".to_string(), serde_json::Value::from(d.as_str()).to_string()))
                .collect();
            load_config(path, &o)
        }
        (None, Some(d)) => {
            let cfg = TrainConfig::new(d.clone());
            cfg.validate()?;
            Ok(cfg)
        }
        (None, None) => Err(Error::Config("denoise-bench needs --dataset or --config".into())),
    }
}

pub fn run(a: BenchArgs) -> Result<(), Error> {
    if a.seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    if let Some(r) = a.ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::Config(format!("noise ratio {r} outside [0, 1]")));
    }
    let modes = a
        .modes
        .iter()
        .map(|m| m.parse::<NoiseMode>())
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = bench_config(&a)?;
    let data = resolve_dataset(&cfg.dataset)?;
    let seeds: Vec<u64> = (0..a.seeds as u64).map(|k| cfg.seed + k).collect();
    let methods = [Method::CurvGib, Method::Gcn];

    // the noiseless cell is shared by every mode
    let mut clean: Option<Vec<ExperimentSummary>> = None;
    let mut cells = Vec::new();
    for &ratio in &a.ratios {
        for &mode in &modes {
            let summaries = if ratio == 0.0 && clean.is_some() {
                clean.clone().expect("checked")
            } else {
                let noisy = if ratio == 0.0 {
                    data.clone()
                } else {
                    data.with_graph(inject_noise(&data.graph, ratio, mode, a.noise_seed)?)?
                };
                let s = methods
                    .iter()
                    .map(|&m| run_experiment(&cfg, &noisy, &seeds, m))
                    .collect::<Result<Vec<_>, _>>()?;
                for x in &s {
                    eprintln!(
                        "ratio {ratio} {} {}: {:.4} ± {:.4}",
                        mode.as_str(),
                        x.method.as_str(),
                        x.accuracy_mean,
                        x.accuracy_std
                    );
                }
                if ratio == 0.0 {
                    clean = Some(s.clone());
                }
                s
            };
            cells.push((ratio, mode, summaries));
        }
    }

    fs::create_dir_all(&a.out)?;
    let mut comparison = String::from("ratio,mode,method,accuracy_mean,accuracy_std,macro_f1_mean,macro_f1_std,runs,failures\n");
    let mut runs = String::from("ratio,mode,method,seed,accuracy_test,macro_f1_test,best_epoch\n");
    let mut failures = Vec::new();
    for (ratio, mode, summaries) in &cells {
        for s in summaries {
            let tag = format!("{},{},{}", fmt_sig12(*ratio), mode.as_str(), s.method.as_str());
            comparison.push_str(&format!(
                "{tag},{},{},{},{},{},{}\n",
                fmt_sig12(s.accuracy_mean),
                fmt_sig12(s.accuracy_std),
                fmt_sig12(s.macro_f1_mean),
                fmt_sig12(s.macro_f1_std),
                s.runs.len(),
                s.failures.len()
            ));
            for r in &s.runs {
                runs.push_str(&format!(
                    "{tag},{},{},{},{}\n",
                    r.seed,
                    fmt_sig12(r.accuracy_test),
                    fmt_sig12(r.macro_f1_test),
                    r.best_epoch
                ));
            }
            failures.extend(s.failures.iter().map(|(seed, e)| json!({ "cell": tag, "seed": seed, "error": e })));
        }
    }
    fs::write(a.out.join(COMPARISON_FILE), comparison)?;
    fs::write(a.out.join(RUNS_FILE), runs)?;

    let mut manifest = RunManifest::new(
        "denoise-bench",
        json!({
            "train": cfg,
            "ratios": a.ratios,
            "modes": modes.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
            "seeds": seeds,
            "baseline": "gcn",
            "noise_seed": a.noise_seed,
        }),
    );
    manifest.inputs = data.provenance.clone();
    manifest.record_output(&a.out, COMPARISON_FILE)?;
    manifest.record_output(&a.out, RUNS_FILE)?;
    manifest.summary = json!({ "cells": cells.len() * methods.len(), "failures": failures });
    manifest.status = RunStatus::Complete;
    manifest.finished_unix = Some(unix_now());
    manifest.write(&a.out)?;
    println!("{} rows -> {}", cells.len() * methods.len(), a.out.join(COMPARISON_FILE).display());
    Ok(())
}

fn parse_case(name: &str) -> Result<GradientCase, Error> {
    GradientCase::ALL
        .into_iter()
        .find(|c| c.name() == name)
        .ok_or_else(|| {
            let known: Vec<&str> = GradientCase::ALL.iter().map(|c| c.name()).collect();
            Error::Config(format!("unknown gradient case {name:?}; known: {}", known.join(", ")))
        })
}

pub fn gradcheck(a: GradcheckArgs) -> Result<(), Error> {
    if !(a.step > 0.0) || !(a.tol > 0.0) || a.seeds == 0 {
        return Err(Error::Config("--step and --tol must be positive and --seeds at least 1".into()));
    }
    let cases = if a.cases.is_empty() {
        GradientCase::ALL.to_vec()
    } else {
        a.cases.iter().map(|c| parse_case(c)).collect::<Result<Vec<_>, _>>()?
    };
    let jobs: Vec<(GradientCase, u64)> = cases.iter().flat_map(|&c| (0..a.seeds).map(move |s| (c, s))).collect();
    let errors = jobs
        .par_iter()
        .map(|&(c, s)| gradient_audit(c, s, a.step))
        .collect::<Result<Vec<_>, _>>()?;

    fs::create_dir_all(&a.out)?;
    let mut csv = String::from("case,seed,max_rel_error,pass\n");
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for (&(c, s), &e) in jobs.iter().zip(&errors) {
        let pass = e <= a.tol;
        worst = worst.max(e);
        if !pass {
            failed.push(format!("{} seed {s}", c.name()));
        }
        csv.push_str(&format!("{},{s},{},{}\n", c.name(), fmt_sig12(e), u8::from(pass)));
        println!("{:<40} seed {s}  {:.3e}  {}", c.name(), e, if pass { "ok" } else { "FAIL" });
    }
    fs::write(a.out.join(GRADCHECK_FILE), csv)?;
    let mut manifest = RunManifest::new(
        "gradcheck",
        json!({
            "cases": cases.iter().map(|c| c.name()).collect::<Vec<_>>(),
            "seeds": a.seeds,
            "step": a.step,
            "tol": a.tol,
        }),
    );
    manifest.record_output(&a.out, GRADCHECK_FILE)?;
    manifest.summary = json!({ "max_rel_error": worst, "failed": failed });
    manifest.status = RunStatus::Complete;
    manifest.finished_unix = Some(unix_now());
    manifest.write(&a.out)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::NumericAbort {
            stage: "gradient check".into(),
            detail: format!("above tolerance {}: {}", a.tol, failed.join(", ")),
        })
    }
}
