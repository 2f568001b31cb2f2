//! Runs a matrix of training cells on a small thread pool and writes the
//! summary table.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use sc_gan_core::eval::{EvalConfig, Evaluator, MetricsReport};
use sc_gan_core::trainer::{run_experiment, EvalHook, NoEval, RunOptions};
use sc_gan_core::{Corpus, Strategy, TrainConfig};

use crate::error::{write_err, CliError, CliResult};

pub const THREADS_ENV: &str = "SC_GAN_THREADS";

pub const SUMMARY_COLUMNS: [&str; 11] = [
    "strategy",
    "seed",
    "axis_value",
    "fid",
    "ifid",
    "f8",
    "f_eighth",
    "is_analogue",
    "cls_accuracy",
    "correction_accuracy",
    "confidence_auc",
];

/// One training run and where it writes.
pub struct Cell<'a> {
    pub corpus: &'a Corpus,
    pub evaluator: Option<&'a Evaluator>,
    pub cfg: TrainConfig,
    pub dir: PathBuf,
    pub axis_value: Option<f64>,
}

pub struct CellResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub axis_value: Option<f64>,
    /// Last evaluation row; `None` when the run stopped early.
    pub last: Option<MetricsReport>,
}

/// Worker count: `SC_GAN_THREADS` if set, else the available cores.
pub fn worker_count() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::config(format!(
                "{THREADS_ENV}: expected a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Appends timestamped lines to `<root>/sc-gan.log`, the only file whose
/// contents depend on wall-clock time.
pub struct RunLog {
    file: Mutex<fs::File>,
}

impl RunLog {
    pub fn open(root: &Path) -> CliResult<Self> {
        let path = root.join("sc-gan.log");
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| write_err(&path, e))?;
        Ok(Self { file: Mutex::new(file) })
    }

    pub fn line(&self, msg: &str) {
        let t = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        // Logging is best effort.
        let _ = writeln!(f, "{}.{:03} {msg}", t.as_secs(), t.subsec_millis());
    }
}

fn run_cell(cell: &Cell<'_>, resume: bool, stop_after: Option<u64>) -> CliResult<CellResult> {
    let mut eval_hook;
    let mut no_eval = NoEval;
    let hook: &mut dyn EvalHook<f64> = match cell.evaluator {
        Some(ev) => {
            eval_hook = ev.clone();
            &mut eval_hook
        }
        None => &mut no_eval,
    };
    let opts = RunOptions {
        dir: Some(&cell.dir),
        resume,
        stop_after,
    };
    let out = run_experiment::<f64>(cell.corpus.view(), &cell.cfg, hook, &opts)?;
    Ok(CellResult {
        strategy: cell.cfg.strategy,
        seed: cell.cfg.seed,
        axis_value: cell.axis_value,
        last: out.completed.then(|| out.reports.last().cloned()).flatten(),
    })
}

/// Runs every cell; results come back in input order. The first failure
/// is returned after all workers stop.
pub fn run_cells(
    cells: &[Cell<'_>],
    resume: bool,
    stop_after: Option<u64>,
    log: &RunLog,
) -> CliResult<Vec<CellResult>> {
    let workers = worker_count()?.min(cells.len()).max(1);
    let next = AtomicUsize::new(0);
    let failed = std::sync::atomic::AtomicBool::new(false);
    let slots: Vec<Mutex<Option<CliResult<CellResult>>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = cells.get(i) else { break };
                log.line(&format!("start {}", cell.dir.display()));
                let r = run_cell(cell, resume, stop_after).map_err(|e| e.context(cell.dir.display()));
                match &r {
                    Ok(_) => log.line(&format!("done {}", cell.dir.display())),
                    Err(e) => {
                        log.line(&format!("failed {}: {e}", cell.dir.display()));
                        failed.store(true, Ordering::SeqCst);
                    }
                }
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    let mut out = Vec::with_capacity(cells.len());
    for slot in slots {
        if let Some(r) = slot.into_inner().unwrap() {
            out.push(r?);
        }
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary(path: &Path, rows: &[CellResult]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record(SUMMARY_COLUMNS).map_err(|e| write_err(path, e))?;
    for r in rows {
        let last = r.last.as_ref().expect("summary rows come from completed runs");
        let mut rec = vec![r.strategy.to_string(), r.seed.to_string(), fmt_opt(r.axis_value)];
        rec.extend(SUMMARY_COLUMNS[3..].iter().map(|c| fmt_opt(last.metric(c))));
        w.write_record(&rec).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

pub fn evaluator(corpus: &Corpus, cfg: &Option<EvalConfig>) -> CliResult<Option<Evaluator>> {
    cfg.as_ref()
        .map(|c| Evaluator::new(corpus, c.clone()).map_err(|e| CliError::config(format!("eval: {e}"))))
        .transpose()
}
