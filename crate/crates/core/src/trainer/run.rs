use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{train_step, BatchSampler, RunningLosses, TrainConfig, TrainError, TrainState};
use crate::corpus::CorpusView;
use crate::eval::MetricsReport;
use crate::models::{ArchConfig, ModelSet};
use crate::numerics::{load_params, save_params};
use crate::Scalar;

/// Called on a read-only model snapshot at every evaluation step.
pub trait EvalHook<T> {
    fn evaluate(&mut self, step: u64, models: &ModelSet<T>) -> Result<MetricsReport, String>;
}

/// Emits rows that carry only the step and running losses.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoEval;

impl<T> EvalHook<T> for NoEval {
    fn evaluate(&mut self, step: u64, _models: &ModelSet<T>) -> Result<MetricsReport, String> {
        Ok(MetricsReport::empty(step))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a> {
    /// Run directory; nothing is written when absent.
    pub dir: Option<&'a Path>,
    /// Continue from the latest checkpoint in `dir` if there is one.
    pub resume: bool,
    /// Checkpoint and return once this many generator steps are done.
    pub stop_after: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub reports: Vec<MetricsReport>,
    pub state: TrainState<T>,
    pub completed: bool,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct DataShape {
    num_classes: usize,
    dim: usize,
    num_labeled: usize,
    num_unlabeled: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct ResolvedConfig {
    train: TrainConfig,
    arch: ArchConfig,
    data: DataShape,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateRecord {
    g_step: u64,
    d_step: u64,
    rng_seed: Vec<u8>,
    rng_stream: u64,
    /// Decimal string; exceeds the JSON-safe integer range.
    rng_word_pos: String,
    sampler: BatchSampler,
    running: RunningLosses,
}

#[derive(Debug, Serialize)]
struct FinalReport<'a> {
    strategy: String,
    seed: u64,
    g_steps: u64,
    running: &'a RunningLosses,
    metrics: &'a MetricsReport,
}

fn is_eval_step(cfg: &TrainConfig, step: u64) -> bool {
    step == 0 || step == cfg.total_g_steps || (cfg.eval_every > 0 && step.is_multiple_of(cfg.eval_every))
}

/// Saves `state` under `dir/step-N`, replacing an older copy.
pub fn save_checkpoint<T: Scalar>(state: &TrainState<T>, dir: &Path) -> Result<PathBuf, TrainError> {
    let final_dir = dir.join(format!("step-{}", state.g_step));
    let tmp = dir.join(format!(".step-{}.tmp", state.g_step));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    save_params(&state.models.gen, &tmp.join("generator.json"))?;
    save_params(&state.models.disc, &tmp.join("discriminator.json"))?;
    let record = StateRecord {
        g_step: state.g_step,
        d_step: state.d_step,
        rng_seed: state.rng.get_seed().to_vec(),
        rng_stream: state.rng.get_stream(),
        rng_word_pos: state.rng.get_word_pos().to_string(),
        sampler: state.sampler.clone(),
        running: state.running,
    };
    fs::write(tmp.join("state.json"), serde_json::to_string_pretty(&record)?)?;
    if final_dir.exists() {
        fs::remove_dir_all(&final_dir)?;
    }
    fs::rename(&tmp, &final_dir)?;
    Ok(final_dir)
}

/// Highest-step complete checkpoint in `dir`.
pub fn latest_checkpoint(dir: &Path) -> Option<(u64, PathBuf)> {
    let entries = fs::read_dir(dir).ok()?;
    entries
        .filter_map(Result::ok)
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let step: u64 = name.strip_prefix("step-")?.parse().ok()?;
            e.path().join("state.json").is_file().then(|| (step, e.path()))
        })
        .max_by_key(|(s, _)| *s)
}

/// Rebuilds a training state from a checkpoint directory.
pub fn load_checkpoint<T: Scalar>(
    path: &Path,
    view: &CorpusView,
    cfg: &TrainConfig,
) -> Result<TrainState<T>, TrainError> {
    let mut state = TrainState::new(view, cfg)?;
    state
        .models
        .gen
        .restore_from(&load_params::<T>(&path.join("generator.json"))?)?;
    state
        .models
        .disc
        .restore_from(&load_params::<T>(&path.join("discriminator.json"))?)?;
    let record: StateRecord = serde_json::from_str(&fs::read_to_string(path.join("state.json"))?)?;
    let seed: [u8; 32] = record
        .rng_seed
        .as_slice()
        .try_into()
        .map_err(|_| TrainError::Config("checkpoint rng seed must have 32 bytes".into()))?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(record.rng_stream);
    rng.set_word_pos(
        record
            .rng_word_pos
            .parse()
            .map_err(|_| TrainError::Config("checkpoint rng position is not an integer".into()))?,
    );
    if record.sampler.labeled.len() != view.num_labeled() || record.sampler.unlabeled.len() != view.num_unlabeled() {
        return Err(TrainError::Config(
            "checkpoint was written for a different corpus".into(),
        ));
    }
    state.g_step = record.g_step;
    state.d_step = record.d_step;
    state.rng = rng;
    state.sampler = record.sampler;
    state.running = record.running;
    Ok(state)
}

fn read_reports(path: &Path, up_to: u64) -> Result<Vec<MetricsReport>, TrainError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for line in fs::read_to_string(path)?.lines().filter(|l| !l.trim().is_empty()) {
        let r: MetricsReport = serde_json::from_str(line)?;
        if r.step <= up_to {
            out.push(r);
        }
    }
    Ok(out)
}

fn write_reports(path: &Path, reports: &[MetricsReport]) -> Result<(), TrainError> {
    let mut s = String::new();
    for r in reports {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

fn append_report(path: &Path, r: &MetricsReport) -> Result<(), TrainError> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(r)?)?;
    Ok(())
}

/// Trains for `cfg.total_g_steps` generator steps, evaluating at step 0,
/// every `eval_every` steps and at the end.
///
/// With a run directory the layout is `config.json`, `metrics.jsonl` (one
/// row per evaluation), `checkpoints/step-N/` (written at each evaluation
/// and when stopping early) and `final_report.json`.
pub fn run_experiment<T: Scalar>(
    view: &CorpusView,
    cfg: &TrainConfig,
    hook: &mut dyn EvalHook<T>,
    opts: &RunOptions<'_>,
) -> Result<RunOutcome<T>, TrainError> {
    cfg.validate()?;
    let resolved = ResolvedConfig {
        train: cfg.clone(),
        arch: cfg.arch(view),
        data: DataShape {
            num_classes: view.num_classes,
            dim: view.dim,
            num_labeled: view.num_labeled(),
            num_unlabeled: view.num_unlabeled(),
        },
    };
    let mut state = TrainState::<T>::new(view, cfg)?;
    let mut reports = Vec::new();

    let paths = opts
        .dir
        .map(|d| (d.join("config.json"), d.join("metrics.jsonl"), d.join("checkpoints")));
    if let (Some(dir), Some((config_path, metrics_path, ckpt_dir))) = (opts.dir, &paths) {
        fs::create_dir_all(dir)?;
        let resumed = if opts.resume { latest_checkpoint(ckpt_dir) } else { None };
        match resumed {
            Some((step, path)) => {
                let on_disk: ResolvedConfig = serde_json::from_str(&fs::read_to_string(config_path)?)?;
                if on_disk != resolved {
                    return Err(TrainError::Config(format!(
                        "{} does not match the requested configuration",
                        config_path.display()
                    )));
                }
                state = load_checkpoint(&path, view, cfg)?;
                reports = read_reports(metrics_path, step)?;
                write_reports(metrics_path, &reports)?;
            }
            None => {
                fs::write(config_path, serde_json::to_string_pretty(&resolved)? + "\n")?;
                fs::write(metrics_path, "")?;
                if ckpt_dir.exists() {
                    fs::remove_dir_all(ckpt_dir)?;
                }
                let final_path = dir.join("final_report.json");
                if final_path.exists() {
                    fs::remove_file(final_path)?;
                }
            }
        }
    }

    let mut evaluate = |state: &TrainState<T>, reports: &mut Vec<MetricsReport>| -> Result<(), TrainError> {
        let step = state.g_step;
        let mut r = hook
            .evaluate(step, &state.models)
            .map_err(|message| TrainError::Eval { step, message })?;
        r.step = step;
        if state.running.updates > 0 {
            r.d_loss = Some(state.running.d_total);
            r.g_loss = Some(state.running.g);
        }
        if let Some((_, metrics_path, ckpt_dir)) = &paths {
            append_report(metrics_path, &r)?;
            fs::create_dir_all(ckpt_dir)?;
            save_checkpoint(state, ckpt_dir)?;
        }
        reports.push(r);
        Ok(())
    };

    if reports.is_empty() {
        evaluate(&state, &mut reports)?;
    }
    while state.g_step < cfg.total_g_steps {
        if opts.stop_after.is_some_and(|s| state.g_step >= s) {
            if let Some((_, _, ckpt_dir)) = &paths {
                fs::create_dir_all(ckpt_dir)?;
                save_checkpoint(&state, ckpt_dir)?;
            }
            return Ok(RunOutcome {
                reports,
                state,
                completed: false,
            });
        }
        train_step(&mut state, view, cfg)?;
        if is_eval_step(cfg, state.g_step) {
            evaluate(&state, &mut reports)?;
        }
    }

    if let Some(dir) = opts.dir {
        let last = reports.last().expect("step-0 evaluation always runs");
        let report = FinalReport {
            strategy: cfg.strategy.to_string(),
            seed: cfg.seed,
            g_steps: state.g_step,
            running: &state.running,
            metrics: last,
        };
        fs::write(
            dir.join("final_report.json"),
            serde_json::to_string_pretty(&report)? + "\n",
        )?;
    }
    Ok(RunOutcome {
        reports,
        state,
        completed: true,
    })
}
