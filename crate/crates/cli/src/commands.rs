use std::fs;
use std::path::Path;

use clap::ValueEnum;

use sc_gan_core::corpus::save_corpus;
use sc_gan_core::Corpus;

use crate::error::{write_err, CliError, CliResult};
use crate::plot::SweepInfo;
use crate::runner::{evaluator, run_cells, write_summary, Cell, RunLog};
use crate::spec::{read_json, run_dir, Experiment, ForgeConfig};

pub fn forge(config: Option<&Path>, out: &Path) -> CliResult<()> {
    let cfg: ForgeConfig = match config {
        Some(p) => read_json(p)?,
        None => ForgeConfig::default(),
    };
    let corpus = cfg.build()?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| write_err(parent, e))?;
    }
    save_corpus(&corpus, out).map_err(|e| write_err(out, e))?;
    let v = corpus.view();
    println!(
        "wrote {} ({} labeled, {} unlabeled, {} classes)",
        out.display(),
        v.num_labeled(),
        v.num_unlabeled(),
        v.num_classes
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunFlags {
    pub resume: bool,
    pub dry_run: bool,
    /// Checkpoint and stop each run after this many generator steps.
    pub stop_after: Option<u64>,
}

fn prepare_root(root: &Path) -> CliResult<RunLog> {
    fs::create_dir_all(root).map_err(|e| write_err(root, e))?;
    RunLog::open(root)
}

fn save_copy(corpus: &Corpus, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| write_err(dir, e))?;
    let p = dir.join("corpus.jsonl");
    save_corpus(corpus, &p).map_err(|e| write_err(&p, e))
}

fn finish(exp: &Experiment, cells: &[Cell<'_>], flags: RunFlags, log: &RunLog) -> CliResult<()> {
    let results = run_cells(cells, flags.resume, flags.stop_after, log)?;
    let summary = exp.out_dir.join("summary.csv");
    if results.iter().all(|r| r.last.is_some()) {
        write_summary(&summary, &results)?;
        println!("{} runs finished; summary in {}", results.len(), summary.display());
    } else {
        println!("runs stopped early; continue with --resume");
    }
    Ok(())
}

pub fn train(spec: &Path, flags: RunFlags) -> CliResult<()> {
    let exp = Experiment::load(spec)?;
    let corpus = exp.spec.corpus.load(&exp.base)?;
    let ev = evaluator(&corpus, &exp.spec.eval)?;
    let n = exp.strategies.len() * exp.spec.seeds.len();
    if flags.dry_run {
        println!("configuration ok: {n} runs into {}", exp.out_dir.display());
        return Ok(());
    }
    let log = prepare_root(&exp.out_dir)?;
    save_copy(&corpus, &exp.out_dir)?;
    let mut cells = Vec::with_capacity(n);
    for &strategy in &exp.strategies {
        for &seed in &exp.spec.seeds {
            cells.push(Cell {
                corpus: &corpus,
                evaluator: ev.as_ref(),
                cfg: exp.train_config(strategy, seed),
                dir: run_dir(&exp.out_dir, strategy, seed),
                axis_value: None,
            });
        }
    }
    finish(&exp, &cells, flags, &log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    #[value(name = "noise_ratio")]
    NoiseRatio,
    #[value(name = "labeled_ratio")]
    LabeledRatio,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::NoiseRatio => "noise_ratio",
            Axis::LabeledRatio => "labeled_ratio",
        }
    }
}

/// Subdirectory of one sweep value.
pub fn sweep_dir(root: &Path, axis: Axis, value: f64) -> std::path::PathBuf {
    root.join(format!("{}-{value}", axis.name()))
}

pub fn sweep(spec: &Path, axis: Axis, values: &[f64], flags: RunFlags) -> CliResult<()> {
    if values.is_empty() {
        return Err(CliError::config("--values: at least one value is required"));
    }
    for (i, v) in values.iter().enumerate() {
        if values[..i].contains(v) {
            return Err(CliError::config(format!("--values: {v} listed twice")));
        }
    }
    let exp = Experiment::load(spec)?;
    let base = exp
        .spec
        .corpus
        .forge_config()?
        .ok_or_else(|| CliError::config("corpus: a sweep needs `mixture` and `corruption`, not a path"))?;
    let mut points = Vec::with_capacity(values.len());
    for &v in values {
        let mut f = base.clone();
        match axis {
            Axis::NoiseRatio => f.corruption.noise_ratio = v,
            Axis::LabeledRatio => f.corruption.labeled_ratio = v,
        }
        let corpus = f.build().map_err(|e| e.context(format!("{} = {v}", axis.name())))?;
        let ev = evaluator(&corpus, &exp.spec.eval)?;
        points.push((v, corpus, ev));
    }
    let n = values.len() * exp.strategies.len() * exp.spec.seeds.len();
    if flags.dry_run {
        println!("configuration ok: {n} runs into {}", exp.out_dir.display());
        return Ok(());
    }
    let log = prepare_root(&exp.out_dir)?;
    let info = SweepInfo {
        axis: axis.name().into(),
        values: values.to_vec(),
    };
    let info_path = exp.out_dir.join("sweep.json");
    let text = serde_json::to_string_pretty(&info).expect("plain data") + "\n";
    fs::write(&info_path, text).map_err(|e| write_err(&info_path, e))?;
    let mut cells = Vec::with_capacity(n);
    for (v, corpus, ev) in &points {
        let dir = sweep_dir(&exp.out_dir, axis, *v);
        save_copy(corpus, &dir)?;
        for &strategy in &exp.strategies {
            for &seed in &exp.spec.seeds {
                cells.push(Cell {
                    corpus,
                    evaluator: ev.as_ref(),
                    cfg: exp.train_config(strategy, seed),
                    dir: run_dir(&dir, strategy, seed),
                    axis_value: Some(*v),
                });
            }
        }
    }
    finish(&exp, &cells, flags, &log)
}
