use std::fs;
use std::path::Path;

use ricci_ib::graph::{mass_matrix, Graph};
use ricci_ib::ib_curvature::ib_curvature_values;
use ricci_ib::io::{
    file_hash, fmt_sig12, load_artifacts, parse_edge_list, read_features, unix_now, write_curvature_csv, Provenance,
    RunManifest, RunStatus, CURVATURE_FILE,
};
use ricci_ib::ollivier::ollivier_ricci;
use ricci_ib::trainer::posterior_codes;
use ricci_ib::Error;
use serde_json::json;

use crate::{CurvatureArgs, CurvatureKind};

pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const BINS: usize = 40;

/// Equal-width counts over `[min, 1]`, right edge closed. A range that
/// collapses to the single value 1 is widened to `[0, 1]`.
pub fn histogram(values: &[f64]) -> Vec<(f64, f64, usize)> {
    let mut lo = values.iter().copied().fold(1.0, f64::min);
    if lo >= 1.0 {
        lo = 0.0;
    }
    let width = (1.0 - lo) / BINS as f64;
    let mut counts = vec![0usize; BINS];
    for &v in values {
        let b = (((v - lo) / width).floor() as usize).min(BINS - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| {
            let right = if b + 1 == BINS { 1.0 } else { lo + (b + 1) as f64 * width };
            (lo + b as f64 * width, right, c)
        })
        .collect()
}

fn provenance(path: &Path) -> Result<Provenance, Error> {
    Ok(Provenance {
        path: path.to_path_buf(),
        hash: file_hash(path)?,
    })
}

pub fn run(a: CurvatureArgs) -> Result<(), Error> {
    let text = crate::read_input(&a.edges)?;
    let pairs = parse_edge_list(&a.edges, &text)?;
    let features = a.features.as_deref().map(read_features).transpose()?;
    let node_count = match &features {
        Some(x) => x.node_count(),
        None => pairs.iter().map(|&(_, u, v)| u.max(v) + 1).max().unwrap_or(0),
    };
    if let Some(&(line, u, v)) = pairs.iter().find(|&&(_, u, v)| u.max(v) >= node_count) {
        return Err(Error::Parse {
            path: a.edges.clone(),
            line,
            message: format!("edge {u} {v} out of range for {node_count} nodes"),
        });
    }
    let g = Graph::new(node_count, pairs.iter().map(|&(_, u, v)| (u, v)))?;
    let mut inputs = vec![provenance(&a.edges)?];

    let kappa = match a.method {
        CurvatureKind::Exact => ollivier_ricci(&g, a.alpha, a.radius_cap)?.values,
        CurvatureKind::Surrogate => {
            let (Some(x), Some(run)) = (&features, &a.checkpoint) else {
                return Err(Error::Config("the surrogate method needs --features and --checkpoint".into()));
            };
            inputs.push(provenance(a.features.as_deref().expect("checked"))?);
            let (state, cfg, manifest) = load_artifacts(run)?;
            inputs.extend(manifest.outputs.iter().map(|(name, hash)| Provenance {
                path: run.join(name),
                hash: hash.clone(),
            }));
            let z = posterior_codes(&state, &cfg, x)?;
            let mass = mass_matrix(&g, a.alpha)?;
            ib_curvature_values(&mass, &z, &state.head, &state.params, &cfg.metric(), g.edges())?
        }
    };

    fs::create_dir_all(&a.out)?;
    write_curvature_csv(&a.out.join(CURVATURE_FILE), g.edges().iter().copied().zip(kappa.iter().copied()))?;
    let bins = histogram(&kappa);
    let mut s = String::from("bin_left,bin_right,count\n");
    for (l, r, c) in &bins {
        s.push_str(&format!("{},{},{c}\n", fmt_sig12(*l), fmt_sig12(*r)));
    }
    fs::write(a.out.join(HISTOGRAM_FILE), s)?;

    let mut manifest = RunManifest::new(
        "curvature",
        json!({
            "edges": a.edges,
            "alpha": a.alpha,
            "method": match a.method { CurvatureKind::Exact => "exact", CurvatureKind::Surrogate => "surrogate" },
            "features": a.features,
            "checkpoint": a.checkpoint,
            "radius_cap": a.radius_cap,
        }),
    );
    manifest.inputs = inputs;
    manifest.record_output(&a.out, CURVATURE_FILE)?;
    manifest.record_output(&a.out, HISTOGRAM_FILE)?;
    let (min, max) = kappa.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| (lo.min(k), hi.max(k)));
    manifest.summary = json!({
        "nodes": node_count,
        "edges": g.edge_count(),
        "kappa_min": min,
        "kappa_max": max,
        "kappa_mean": kappa.iter().sum::<f64>() / kappa.len() as f64,
    });
    manifest.status = RunStatus::Complete;
    manifest.finished_unix = Some(unix_now());
    manifest.write(&a.out)?;
    println!("{} edges, kappa in [{}, {}] -> {}", g.edge_count(), fmt_sig12(min), fmt_sig12(max), a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_conserves_counts_and_covers_range() {
        let v = [-0.5, -0.5, 0.0, 0.25, 0.999, 1.0];
        let h = histogram(&v);
        assert_eq!(h.len(), BINS);
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), v.len());
        assert_eq!(h[0].0, -0.5);
        assert_eq!(h[0].2, 2);
        assert_eq!(h[BINS - 1].1, 1.0);
        assert_eq!(h[BINS - 1].2, 2);
    }

    #[test]
    fn all_ones_fall_in_the_last_bin() {
        let h = histogram(&[1.0]);
        assert_eq!(h[0].0, 0.0);
        assert_eq!(h[BINS - 1].2, 1);
    }
}
