//! JSON inputs of the `forge`, `train` and `sweep` commands. Unknown keys
//! are rejected everywhere.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sc_gan_core::corpus::{build_corpus, load_corpus, MixtureConfig};
use sc_gan_core::eval::EvalConfig;
use sc_gan_core::{Corpus, CorruptionConfig, Layout, Strategy, TrainConfig};

use crate::error::{corpus_input, CliError, CliResult};

/// Clean mixture plus corruption protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForgeConfig {
    pub mixture: MixtureConfig,
    pub corruption: CorruptionConfig,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            mixture: MixtureConfig {
                k_total: 10,
                per_class: 1000,
                dim: 2,
                layout: Layout::Ring,
                seed: 0,
            },
            corruption: CorruptionConfig {
                noise_ratio: 0.5,
                closed_class_count: 8,
                labeled_ratio: 0.2,
                usage_ratio: 1.0,
                seed: 0,
            },
        }
    }
}

impl ForgeConfig {
    pub fn build(&self) -> CliResult<Corpus> {
        let clean = self.mixture.generate().map_err(corpus_input)?;
        build_corpus(&clean, &self.corruption).map_err(corpus_input)
    }
}

/// Where the training corpus comes from: a forged file or a forge config.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub mixture: Option<MixtureConfig>,
    #[serde(default)]
    pub corruption: Option<CorruptionConfig>,
}

impl CorpusSource {
    pub fn forge_config(&self) -> CliResult<Option<ForgeConfig>> {
        match (&self.path, &self.mixture, &self.corruption) {
            (Some(_), None, None) => Ok(None),
            (None, Some(m), Some(c)) => Ok(Some(ForgeConfig {
                mixture: m.clone(),
                corruption: c.clone(),
            })),
            _ => Err(CliError::config(
                "corpus: give either `path` or both `mixture` and `corruption`",
            )),
        }
    }

    /// `base` resolves a relative `path`.
    pub fn load(&self, base: &Path) -> CliResult<Corpus> {
        match self.forge_config()? {
            Some(f) => f.build(),
            None => {
                let p = base.join(self.path.as_ref().expect("checked by forge_config"));
                load_corpus(&p).map_err(|e| corpus_input(e).context(p.display()))
            }
        }
    }
}

fn default_eval() -> Option<EvalConfig> {
    Some(EvalConfig::default())
}

/// A matrix of training runs over strategies and seeds. The `strategy`
/// and `seed` fields inside `train` are replaced per run. `eval: null`
/// turns evaluation off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub corpus: CorpusSource,
    #[serde(default)]
    pub train: TrainConfig,
    pub strategies: Vec<String>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    #[serde(default = "default_eval")]
    pub eval: Option<EvalConfig>,
}

/// Checked experiment with paths resolved against the directory holding its
/// JSON file.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub strategies: Vec<Strategy>,
    pub out_dir: PathBuf,
    pub base: PathBuf,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

impl Experiment {
    pub fn load(path: &Path) -> CliResult<Self> {
        let spec: ExperimentSpec = read_json(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(spec, base)
    }

    pub fn new(spec: ExperimentSpec, base: PathBuf) -> CliResult<Self> {
        if spec.strategies.is_empty() {
            return Err(CliError::config("strategies: at least one strategy is required"));
        }
        if spec.seeds.is_empty() {
            return Err(CliError::config("seeds: at least one seed is required"));
        }
        let strategies = spec
            .strategies
            .iter()
            .map(|s| {
                s.parse::<Strategy>()
                    .map_err(|e| CliError::config(format!("strategies: {e}")))
            })
            .collect::<CliResult<Vec<_>>>()?;
        for (i, s) in strategies.iter().enumerate() {
            if strategies[..i].contains(s) {
                return Err(CliError::config(format!("strategies: {s} listed twice")));
            }
        }
        for (i, s) in spec.seeds.iter().enumerate() {
            if spec.seeds[..i].contains(s) {
                return Err(CliError::config(format!("seeds: {s} listed twice")));
            }
        }
        spec.corpus.forge_config()?;
        for &strategy in &strategies {
            let cfg = TrainConfig {
                strategy,
                ..spec.train.clone()
            };
            cfg.validate()?;
        }
        let out_dir = base.join(&spec.out_dir);
        check_writable(&out_dir)?;
        Ok(Self {
            spec,
            strategies,
            out_dir,
            base,
        })
    }

    pub fn train_config(&self, strategy: Strategy, seed: u64) -> TrainConfig {
        TrainConfig {
            strategy,
            seed,
            ..self.spec.train.clone()
        }
    }
}

/// `dir` exists as a writable directory, or its nearest existing ancestor
/// does.
pub fn check_writable(dir: &Path) -> CliResult<()> {
    let mut p = Some(dir);
    while let Some(cur) = p {
        if let Ok(meta) = fs::metadata(cur) {
            if !meta.is_dir() {
                return Err(CliError::config(format!(
                    "out_dir: {} is not a directory",
                    cur.display()
                )));
            }
            if meta.permissions().readonly() {
                return Err(CliError::config(format!("out_dir: {} is read-only", cur.display())));
            }
            return Ok(());
        }
        p = cur.parent().filter(|q| !q.as_os_str().is_empty());
    }
    Ok(())
}

/// Directory name of a run; `:` from parameterized strategies becomes `-`.
pub fn strategy_dir(s: Strategy) -> String {
    s.to_string().replace(':', "-")
}

pub fn run_dir(root: &Path, strategy: Strategy, seed: u64) -> PathBuf {
    root.join(strategy_dir(strategy)).join(format!("seed-{seed}"))
}
