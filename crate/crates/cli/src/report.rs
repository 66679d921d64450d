//! `report`: gather finished runs into CSV tables and SVG charts.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use doccontrast::persist::read_json;

use crate::config::ExperimentConfig;
use crate::run::RunDir;
use crate::stages::{EvalSummary, SWEEP_HEADER};
use crate::svg::{heatmap, line_chart, Series};

pub const OUTPUTS: &[&str] = &[
    "summary.csv",
    "loss_traces.csv",
    "accuracy_vs_alpha.svg",
    "accuracy_heatmap.svg",
    "loss_vs_epoch.svg",
    "tv_vs_alpha.svg",
];

/// One recovery result: a single run or one sweep row.
#[derive(Clone, Debug, PartialEq)]
struct Point {
    run: String,
    alpha: f64,
    rate: f64,
    width: usize,
    seed: u64,
    accuracy: Option<f64>,
    oracle: Option<f64>,
    tv: Option<f64>,
}

struct Trace {
    run: String,
    rows: Vec<(usize, f64, Option<f64>)>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    Ok(if s.is_empty() { None } else { Some(s.parse()?) })
}

fn read_sweep(path: &Path, run: &str) -> Result<Vec<Point>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some(SWEEP_HEADER) {
        bail!("{} has an unexpected header", path.display());
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 9 {
                bail!("{}: malformed row {l}", path.display());
            }
            Ok(Point {
                run: run.to_string(),
                alpha: f[0].parse()?,
                rate: f[1].parse()?,
                width: f[2].parse()?,
                seed: f[3].parse()?,
                accuracy: Some(f[4].parse()?),
                oracle: Some(f[5].parse()?),
                tv: Some(f[6].parse()?),
            })
        })
        .collect()
}

fn read_trace(path: &Path, run: &str) -> Result<Trace> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = text
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                bail!("{}: malformed row {l}", path.display());
            }
            Ok((f[0].parse()?, f[1].parse()?, parse_opt(f[2])?))
        })
        .collect::<Result<_>>()?;
    Ok(Trace { run: run.to_string(), rows })
}

/// Mean of `value` per distinct key, keys in ascending order.
fn group_mean<K: PartialOrd + Clone>(items: impl Iterator<Item = (K, f64)>) -> Vec<(K, f64)> {
    let mut groups: Vec<(K, f64, usize)> = Vec::new();
    for (k, v) in items {
        match groups.iter_mut().find(|g| g.0 == k) {
            Some(g) => {
                g.1 += v;
                g.2 += 1;
            }
            None => groups.push((k, v, 1)),
        }
    }
    groups.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite keys"));
    groups.into_iter().map(|(k, s, n)| (k, s / n as f64)).collect()
}

fn label(v: f64) -> String {
    let s = format!("{v}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

pub fn report(cfg: &ExperimentConfig, run: &mut RunDir, config_dir: &Path) -> Result<Option<String>> {
    if cfg.report.runs.is_empty() {
        bail!("report.runs must list at least one completed run directory");
    }
    let mut points = Vec::new();
    let mut traces = Vec::new();
    for rel in &cfg.report.runs {
        let dir: PathBuf = if rel.is_absolute() { rel.clone() } else { config_dir.join(rel) };
        let name = rel.to_string_lossy().replace('\\', "/");
        let eval_path = dir.join("eval.json");
        if !eval_path.exists() {
            bail!("missing artifact: {} (run `eval` first)", eval_path.display());
        }
        let summary: EvalSummary = read_json(&eval_path)?;
        if summary.sweep_rows > 0 {
            points.extend(read_sweep(&dir.join("sweep.csv"), &name)?);
        } else {
            points.push(Point {
                run: name.clone(),
                alpha: summary.alpha,
                rate: summary.rate,
                width: summary.width,
                seed: summary.seed,
                accuracy: summary.map_accuracy,
                oracle: summary.oracle_accuracy,
                tv: summary.tv_separation,
            });
        }
        let trace = dir.join("loss_trace.csv");
        if trace.exists() {
            traces.push(read_trace(&trace, &name)?);
        }
    }

    let mut summary = String::from("run,alpha,rate,width,seed,accuracy,oracle_accuracy,tv_separation\n");
    for p in &points {
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            p.run, p.alpha, p.rate, p.width, p.seed, opt(p.accuracy), opt(p.oracle), opt(p.tv)
        ));
    }
    run.write_text("summary.csv", &summary)?;
    let mut loss = String::from("run,epoch,train_loss,holdout_loss\n");
    for t in &traces {
        for (e, tr, h) in &t.rows {
            loss.push_str(&format!("{},{},{:.10e},{}\n", t.run, e, tr, h.map(|v| format!("{v:.10e}")).unwrap_or_default()));
        }
    }
    run.write_text("loss_traces.csv", &loss)?;

    // accuracy against alpha, one curve per (width, rate)
    let mut combos: Vec<(usize, f64)> = Vec::new();
    for p in &points {
        if !combos.contains(&(p.width, p.rate)) {
            combos.push((p.width, p.rate));
        }
    }
    combos.sort_by(|a, b| a.partial_cmp(b).expect("finite rates"));
    let curves: Vec<Series> = combos
        .iter()
        .map(|&(w, r)| Series {
            name: format!("width {w}, r = {}", label(r)),
            points: group_mean(
                points.iter().filter(|p| p.width == w && p.rate == r).filter_map(|p| p.accuracy.map(|a| (p.alpha, a))),
            ),
        })
        .collect();
    run.write_text("accuracy_vs_alpha.svg", &line_chart("Topic recovery accuracy", "alpha", "MAP accuracy", &curves))?;

    let mut alphas: Vec<f64> = points.iter().map(|p| p.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let mut rates: Vec<f64> = points.iter().map(|p| p.rate).collect();
    rates.sort_by(f64::total_cmp);
    rates.dedup();
    let cells: Vec<Vec<Option<f64>>> = rates
        .iter()
        .map(|&r| {
            alphas
                .iter()
                .map(|&a| {
                    let v: Vec<f64> = points.iter().filter(|p| p.alpha == a && p.rate == r).filter_map(|p| p.accuracy).collect();
                    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                })
                .collect()
        })
        .collect();
    let col_labels: Vec<String> = alphas.iter().map(|&a| label(a)).collect();
    let row_labels: Vec<String> = rates.iter().map(|&r| label(r)).collect();
    run.write_text(
        "accuracy_heatmap.svg",
        &heatmap("Mean MAP accuracy", "alpha", "resampling rate", &col_labels, &row_labels, &cells),
    )?;

    let loss_series: Vec<Series> = traces
        .iter()
        .map(|t| Series {
            name: t.run.clone(),
            points: t.rows.iter().map(|&(e, tr, h)| (e as f64, h.unwrap_or(tr))).collect(),
        })
        .collect();
    run.write_text("loss_vs_epoch.svg", &line_chart("Holdout contrastive loss", "epoch", "loss", &loss_series))?;

    let tv = Series {
        name: "mean pairwise TV".into(),
        points: group_mean(points.iter().filter_map(|p| p.tv.map(|t| (p.alpha, t)))),
    };
    run.write_text("tv_vs_alpha.svg", &line_chart("Topic separation", "alpha", "TV distance", &[tv]))?;
    Ok(None)
}
