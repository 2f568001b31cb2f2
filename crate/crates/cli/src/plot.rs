//! SVG figures from run and sweep directories.
//!
//! A run directory gets `plots/curve-<metric>.svg` for every metric with
//! values and `plots/scatter-step-N.svg` for every checkpoint. A train or
//! sweep directory plots each of its runs; a sweep also gets
//! `plots/sweep-<metric>.svg`, the seed mean per strategy against the
//! swept value.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sc_gan_core::corpus::load_corpus;
use sc_gan_core::eval::{EvalConfig, Evaluator, MetricsReport, PrdConfig};
use sc_gan_core::trainer::load_checkpoint;
use sc_gan_core::{Corpus, Strategy, TrainConfig};

use crate::commands::{sweep_dir, Axis};
use crate::error::{corpus_input, write_err, CliError, CliResult};
use crate::runner::SUMMARY_COLUMNS;
use crate::spec::{read_json, run_dir};
use crate::svg::{color, extent, Chart};

/// Real and generated points drawn per class in a scatter.
const SCATTER_PER_CLASS: usize = 200;

/// Written next to a sweep's `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepInfo {
    pub axis: String,
    pub values: Vec<f64>,
}

pub fn plot(dir: &Path) -> CliResult<Vec<PathBuf>> {
    if dir.join("metrics.jsonl").is_file() {
        plot_run(dir)
    } else if dir.join("summary.csv").is_file() {
        plot_summary(dir)
    } else {
        Err(CliError::config(format!(
            "{}: no metrics.jsonl or summary.csv to plot",
            dir.display()
        )))
    }
}

fn write_svg(path: PathBuf, svg: String, written: &mut Vec<PathBuf>) -> CliResult<()> {
    fs::write(&path, svg).map_err(|e| write_err(&path, e))?;
    written.push(path);
    Ok(())
}

fn read_reports(path: &Path) -> CliResult<Vec<MetricsReport>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("reading {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::config(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Nearest `corpus.jsonl` in `dir` or an ancestor.
fn find_corpus(dir: &Path) -> CliResult<Corpus> {
    let path = dir
        .ancestors()
        .map(|a| a.join("corpus.jsonl"))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            CliError::config(format!(
                "{}: no corpus.jsonl in this or a parent directory",
                dir.display()
            ))
        })?;
    load_corpus(&path).map_err(|e| corpus_input(e).context(path.display()))
}

fn checkpoints(dir: &Path) -> Vec<(u64, PathBuf)> {
    let mut out: Vec<(u64, PathBuf)> = fs::read_dir(dir.join("checkpoints"))
        .into_iter()
        .flatten()
        .filter_map(Result::ok)
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let step = name.strip_prefix("step-")?.parse().ok()?;
            e.path().join("state.json").is_file().then(|| (step, e.path()))
        })
        .collect();
    out.sort();
    out
}

fn plot_run(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let reports = read_reports(&dir.join("metrics.jsonl"))?;
    let out = dir.join("plots");
    fs::create_dir_all(&out).map_err(|e| write_err(&out, e))?;
    let mut written = Vec::new();

    for col in MetricsReport::COLUMNS {
        let pts: Vec<(f64, f64)> = reports
            .iter()
            .filter_map(|r| Some((r.step as f64, r.metric(col)?)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let mut c = Chart::new(
            col,
            "generator step",
            col,
            extent(pts.iter().map(|p| p.0)),
            extent(pts.iter().map(|p| p.1)),
        );
        c.line(&pts, color(0), None);
        write_svg(out.join(format!("curve-{col}.svg")), c.render(), &mut written)?;
    }

    let ckpts = checkpoints(dir);
    if ckpts.is_empty() {
        return Ok(written);
    }
    let corpus = find_corpus(dir)?;
    let config: serde_json::Value = read_json(&dir.join("config.json"))?;
    let cfg: TrainConfig = serde_json::from_value(config.get("train").cloned().unwrap_or_default())
        .map_err(|e| CliError::config(format!("{}: train: {e}", dir.join("config.json").display())))?;
    let k = corpus.num_classes();
    let ev = Evaluator::new(
        &corpus,
        EvalConfig {
            num_generated: SCATTER_PER_CLASS * k,
            reference_per_class: SCATTER_PER_CLASS,
            oracle_per_class: SCATTER_PER_CLASS,
            prd: PrdConfig::default(),
            seed: 0,
        },
    )
    .map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?;
    let reference = ev.reference();
    let xy = |row: ndarray::ArrayView1<f64>| (row[0], row.get(1).copied().unwrap_or(0.0));
    for (step, path) in ckpts {
        let state = load_checkpoint::<f64>(&path, corpus.view(), &cfg)?;
        let gen = ev.generate(&state.models).map_err(CliError::runtime)?;
        let layers = |set: &sc_gan_core::eval::FeatureSet<f64>| -> Vec<Vec<(f64, f64)>> {
            let labels = set.labels.as_ref().expect("labeled sets");
            let mut by_class = vec![Vec::new(); k];
            for (row, &l) in set.x.rows().into_iter().zip(labels) {
                by_class[l].push(xy(row));
            }
            by_class
        };
        let real = layers(reference);
        let fake = layers(&gen);
        let all = real.iter().chain(&fake).flatten();
        let (xr, yr) = (extent(all.clone().map(|p| p.0)), extent(all.map(|p| p.1)));
        let mut c = Chart::new(
            &format!("step {step}: real (rings) vs generated (dots)"),
            "x0",
            "x1",
            xr,
            yr,
        );
        for (class, pts) in real.iter().enumerate() {
            c.points(pts, color(class), true, None);
        }
        for (class, pts) in fake.iter().enumerate() {
            c.points(pts, color(class), false, Some(format!("class {class}")));
        }
        write_svg(out.join(format!("scatter-step-{step}.svg")), c.render(), &mut written)?;
    }
    Ok(written)
}

struct SummaryRow {
    strategy: String,
    seed: u64,
    axis_value: Option<f64>,
    metrics: Vec<Option<f64>>,
}

fn read_summary(path: &Path) -> CliResult<Vec<SummaryRow>> {
    let bad = |e: &dyn std::fmt::Display| CliError::config(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(&e))?;
    let headers = r.headers().map_err(|e| bad(&e))?.clone();
    if headers.iter().ne(SUMMARY_COLUMNS) {
        return Err(bad(&"unexpected columns"));
    }
    let num = |s: &str| -> CliResult<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| bad(&format!("bad number {s:?}")))
        }
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(&e))?;
        rows.push(SummaryRow {
            strategy: rec[0].to_string(),
            seed: rec[1].parse().map_err(|_| bad(&format!("bad seed {:?}", &rec[1])))?,
            axis_value: num(&rec[2])?,
            metrics: rec.iter().skip(3).map(num).collect::<CliResult<_>>()?,
        });
    }
    Ok(rows)
}

fn plot_summary(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let rows = read_summary(&dir.join("summary.csv"))?;
    let sweep_path = dir.join("sweep.json");
    let sweep: Option<(Axis, SweepInfo)> = if sweep_path.is_file() {
        let info: SweepInfo = read_json(&sweep_path)?;
        let axis = <Axis as clap::ValueEnum>::from_str(&info.axis, false)
            .map_err(|e| CliError::config(format!("{}: axis: {e}", sweep_path.display())))?;
        Some((axis, info))
    } else {
        None
    };
    let mut written = Vec::new();
    for row in &rows {
        let strategy: Strategy = row
            .strategy
            .parse()
            .map_err(|e: String| CliError::config(format!("summary.csv: {e}")))?;
        let root = match (&sweep, row.axis_value) {
            (Some((axis, _)), Some(v)) => sweep_dir(dir, *axis, v),
            (None, None) => dir.to_path_buf(),
            _ => return Err(CliError::config("summary.csv: axis_value does not match sweep.json")),
        };
        written.extend(plot(&run_dir(&root, strategy, row.seed))?);
    }

    let Some((axis, _)) = sweep else {
        return Ok(written);
    };
    let out = dir.join("plots");
    fs::create_dir_all(&out).map_err(|e| write_err(&out, e))?;
    let mut strategies: Vec<&str> = Vec::new();
    for r in &rows {
        if !strategies.contains(&r.strategy.as_str()) {
            strategies.push(&r.strategy);
        }
    }
    for (m, col) in SUMMARY_COLUMNS[3..].iter().enumerate() {
        let mut series = Vec::new();
        for s in &strategies {
            let mut values: Vec<f64> = Vec::new();
            for r in rows.iter().filter(|r| r.strategy == *s) {
                let v = r.axis_value.expect("sweep rows carry a value");
                if !values.contains(&v) {
                    values.push(v);
                }
            }
            values.sort_by(f64::total_cmp);
            let pts: Vec<(f64, f64)> = values
                .iter()
                .filter_map(|&v| {
                    let xs: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.strategy == *s && r.axis_value == Some(v))
                        .filter_map(|r| r.metrics[m])
                        .collect();
                    (!xs.is_empty()).then(|| (v, xs.iter().sum::<f64>() / xs.len() as f64))
                })
                .collect();
            if !pts.is_empty() {
                series.push((*s, pts));
            }
        }
        if series.is_empty() {
            continue;
        }
        let all = series.iter().flat_map(|(_, p)| p.iter());
        let mut c = Chart::new(
            &format!("{col} (mean over seeds)"),
            axis.name(),
            col,
            extent(all.clone().map(|p| p.0)),
            extent(all.map(|p| p.1)),
        );
        for (i, (s, pts)) in series.iter().enumerate() {
            c.line(pts, color(i), Some(s.to_string()));
        }
        write_svg(out.join(format!("sweep-{col}.svg")), c.render(), &mut written)?;
    }
    Ok(written)
}
