//! Experiment configuration files (TOML).
//!
//! Every table rejects unknown keys. Parse failures and failed checks are
//! reported with the dotted path of the offending field.

use std::path::{Path, PathBuf};

use fedleak_core::attack::{AttackConfig, DifferenceSpace, Scheme, Task};
use fedleak_core::corpus::{CorpusSpec, IngestFormat};
use fedleak_core::defense::DefenseConfig;
use fedleak_core::fed::FedConfig;
use fedleak_core::lm::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Master seed; every random stream derives from it.
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub corpus: CorpusSection,
    pub model: ModelSection,
    pub fed: FedSection,
    #[serde(default)]
    pub defense: DefenseConfig,
    #[serde(default, rename = "attack")]
    pub attacks: Vec<AttackSpec>,
    #[serde(default)]
    pub perturb: Option<PerturbSection>,
    /// Alternative defense settings; each runs into `<out>/<name>/`.
    #[serde(default, rename = "variant")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub report: ReportSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    #[default]
    Synthetic,
    /// Unannotated text, one document per line or per JSON record.
    Text,
    /// Records written by `gen-corpus` (`{id, text, pii}`).
    Annotated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    #[serde(default)]
    pub source: CorpusSource,
    #[serde(default)]
    pub n_docs: Option<usize>,
    #[serde(default)]
    pub pii_density: Option<f64>,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<IngestFormat>,
    #[serde(default = "default_max_vocab")]
    pub max_vocab: usize,
}

fn default_max_vocab() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub context_len: usize,
    pub embed_dim: usize,
    pub hidden_dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedSection {
    pub n_clients: usize,
    pub n_rounds: usize,
    #[serde(default = "default_local_iters")]
    pub local_iters: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default = "default_true")]
    pub cosine_schedule: bool,
}

fn default_local_iters() -> usize {
    200
}

fn default_batch_size() -> usize {
    8
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartialPool {
    /// Documents trained on in the attacked round (round 1 for round 0).
    #[default]
    Round,
    /// The whole corpus.
    Corpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub task: Task,
    pub scheme: Scheme,
    /// Rounds to attack; every round when absent.
    #[serde(default)]
    pub rounds: Option<Vec<usize>>,
    #[serde(default)]
    pub top_p: Option<f64>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub sampling_temperature: Option<f64>,
    /// Zero-input generations per round.
    #[serde(default)]
    pub n_samples: Option<usize>,
    /// Documents prompted per round by the partial-input tasks.
    #[serde(default = "default_n_docs")]
    pub n_docs: usize,
    #[serde(default)]
    pub pool: PartialPool,
    #[serde(default)]
    pub prefix_fraction: Option<f64>,
    #[serde(default)]
    pub max_len: Option<usize>,
    #[serde(default)]
    pub difference_space: Option<DifferenceSpace>,
}

fn default_n_docs() -> usize {
    100
}

impl AttackSpec {
    pub fn attack_config(&self) -> AttackConfig {
        let d = AttackConfig::new(self.scheme);
        AttackConfig {
            scheme: self.scheme,
            top_p: self.top_p.unwrap_or(d.top_p),
            temperature: self.temperature.unwrap_or(d.temperature),
            sampling_temperature: self.sampling_temperature.unwrap_or(d.sampling_temperature),
            n_samples: self.n_samples.unwrap_or(d.n_samples),
            prefix_fraction: self.prefix_fraction.unwrap_or(d.prefix_fraction),
            max_len: self.max_len.unwrap_or(d.max_len),
            difference_space: self.difference_space.unwrap_or(d.difference_space),
        }
    }

    pub fn scheduled(&self, round: usize) -> bool {
        match &self.rounds {
            Some(r) => r.contains(&round),
            None => self.scheme == Scheme::Basic || round >= 1,
        }
    }

    /// `<task>_<scheme>`, the stem of this attack's output files.
    pub fn stem(&self) -> String {
        format!("{}_{}", self.task.as_str(), self.scheme.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSection {
    pub p_sub: f64,
    #[serde(default = "default_neighbors")]
    pub neighbor_count: usize,
    /// Word vectors, POS lexicon and stoplist. When all three are absent
    /// the synthetic lexicon is written to `<out>/lexicon/` and used.
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    #[serde(default)]
    pub pos_lexicon: Option<PathBuf>,
    #[serde(default)]
    pub stoplist: Option<PathBuf>,
}

fn default_neighbors() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub defense: DefenseConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_svg")]
    pub svg: bool,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            thresholds: default_thresholds(),
            svg: true,
        }
    }
}

fn default_thresholds() -> Vec<f64> {
    (10..=19).map(|i| i as f64 / 20.0).collect()
}

fn default_svg() -> bool {
    true
}

fn core_err(path: &str) -> impl Fn(fedleak_core::Error) -> CliError + '_ {
    move |e| match e {
        fedleak_core::Error::Config(msg) => CliError::config(path, msg),
        other => CliError::Core(other),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(path, e.into_inner().message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.check_paths()?;
        Ok(cfg)
    }

    /// Makes relative input paths relative to the config file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.corpus.path);
        if let Some(p) = &mut self.perturb {
            fix(&mut p.embeddings);
            fix(&mut p.pos_lexicon);
            fix(&mut p.stoplist);
        }
    }

    fn check_paths(&self) -> Result<()> {
        let mut inputs = vec![("corpus.path", self.corpus.path.as_ref())];
        if let Some(p) = &self.perturb {
            inputs.push(("perturb.embeddings", p.embeddings.as_ref()));
            inputs.push(("perturb.pos_lexicon", p.pos_lexicon.as_ref()));
            inputs.push(("perturb.stoplist", p.stoplist.as_ref()));
        }
        for (field, path) in inputs {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(CliError::config(field, format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        let c = &self.corpus;
        match c.source {
            CorpusSource::Synthetic => {
                if c.path.is_some() || c.format.is_some() {
                    return Err(CliError::config("corpus.path", "not used by the synthetic source"));
                }
                self.corpus_spec()?.expect("synthetic").validate().map_err(core_err("corpus"))?;
            }
            CorpusSource::Text | CorpusSource::Annotated => {
                if c.path.is_none() {
                    return Err(CliError::config("corpus.path", "required for file sources"));
                }
                if c.n_docs.is_some() || c.pii_density.is_some() {
                    return Err(CliError::config("corpus.n_docs", "only the synthetic source is generated"));
                }
            }
        }
        if c.max_vocab < 5 {
            return Err(CliError::config("corpus.max_vocab", "must be >= 5"));
        }
        self.model_config(5).validate().map_err(core_err("model"))?;
        self.fed_config(&self.defense).validate().map_err(core_err("fed"))?;
        for (i, v) in self.variants.iter().enumerate() {
            let path = format!("variant[{i}]");
            if v.name.is_empty() || !v.name.chars().all(|ch| ch.is_ascii_alphanumeric() || "_-.".contains(ch)) {
                return Err(CliError::config(
                    format!("{path}.name"),
                    "must be non-empty and use only letters, digits, '_', '-', '.'",
                ));
            }
            if self.variants[..i].iter().any(|o| o.name == v.name) {
                return Err(CliError::config(format!("{path}.name"), format!("duplicate name {:?}", v.name)));
            }
            v.defense.validate().map_err(core_err(&path))?;
        }
        for (i, a) in self.attacks.iter().enumerate() {
            let path = format!("attack[{i}]");
            a.attack_config().validate().map_err(core_err(&path))?;
            if self.attacks[..i].iter().any(|o| o.stem() == a.stem()) {
                return Err(CliError::config(path, format!("duplicate attack {}", a.stem())));
            }
            if let Some(rounds) = &a.rounds {
                if let Some(r) = rounds.iter().find(|r| **r > self.fed.n_rounds) {
                    return Err(CliError::config(
                        format!("{path}.rounds"),
                        format!("round {r} exceeds fed.n_rounds = {}", self.fed.n_rounds),
                    ));
                }
                if a.scheme == Scheme::Enhanced && rounds.contains(&0) {
                    return Err(CliError::config(
                        format!("{path}.rounds"),
                        "the enhanced scheme needs a previous round; round 0 has none",
                    ));
                }
            }
            if a.task != Task::ZeroInput && a.n_docs == 0 {
                return Err(CliError::config(format!("{path}.n_docs"), "must be >= 1"));
            }
            if a.task == Task::DisturbedInput && self.perturb.is_none() {
                return Err(CliError::config(format!("{path}.task"), "disturbed_input requires a [perturb] table"));
            }
        }
        if let Some(p) = &self.perturb {
            if !(0.0..=1.0).contains(&p.p_sub) {
                return Err(CliError::config("perturb.p_sub", "must be in [0, 1]"));
            }
            if p.neighbor_count == 0 {
                return Err(CliError::config("perturb.neighbor_count", "must be >= 1"));
            }
            let given = [&p.embeddings, &p.pos_lexicon, &p.stoplist].iter().filter(|x| x.is_some()).count();
            if given != 0 && given != 3 {
                return Err(CliError::config(
                    "perturb.embeddings",
                    "give all of embeddings, pos_lexicon and stoplist, or none",
                ));
            }
        }
        if let Some(t) = self.report.thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(CliError::config("report.thresholds", format!("{t} is outside [0, 1]")));
        }
        Ok(())
    }

    /// The synthetic corpus request; `None` for file sources.
    pub fn corpus_spec(&self) -> Result<Option<CorpusSpec>> {
        if self.corpus.source != CorpusSource::Synthetic {
            return Ok(None);
        }
        let n_docs = self
            .corpus
            .n_docs
            .ok_or_else(|| CliError::config("corpus.n_docs", "required for the synthetic source"))?;
        Ok(Some(CorpusSpec {
            n_docs,
            pii_density: self.corpus.pii_density.unwrap_or(0.5),
            seed: self.seed,
        }))
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            context_len: self.model.context_len,
            embed_dim: self.model.embed_dim,
            hidden_dims: self.model.hidden_dims.clone(),
            vocab_size,
            seed: self.seed,
        }
    }

    pub fn fed_config(&self, defense: &DefenseConfig) -> FedConfig {
        FedConfig {
            n_clients: self.fed.n_clients,
            n_rounds: self.fed.n_rounds,
            local_iters: self.fed.local_iters,
            batch_size: self.fed.batch_size,
            lr: self.fed.lr,
            cosine_schedule: self.fed.cosine_schedule,
            defense: defense.clone(),
        }
    }
}

/// Annotated reference of every key, printed by `--print-schema`.
pub const SCHEMA: &str = r#"# fedleak experiment config, schema_version 1 (TOML)
schema_version = 1          # required, must be 1
seed = 11                   # required master seed (u64); --seed overrides
output = "out"              # optional output directory; --out overrides

[corpus]
source = "synthetic"        # synthetic | text | annotated
n_docs = 200                # synthetic only (required there)
pii_density = 0.5           # synthetic only, in [0, 1]; default 0.5
# path = "docs.txt"         # text / annotated only; relative to this file
# format = "plain_lines"    # text only: plain_lines | jsonl (records with "text")
max_vocab = 1000            # vocabulary cap including the 4 special tokens

[model]
context_len = 8             # K previous tokens
embed_dim = 32
hidden_dims = [128]

[fed]
n_clients = 4
n_rounds = 12
local_iters = 200           # default 200
batch_size = 8              # default 8
lr = 1e-3
cosine_schedule = true      # false = constant learning rate

[defense]                   # all optional
# dp = { noise_multiplier = 0.8, max_grad_norm = 1.0, delta = 1e-5 }
# kl = { mu = 0.01, reference = "round_zero" }      # or "round_start"
# lora = { rank = 4, alpha = 8.0, dropout = 0.1 }   # layers = [0, 1] optional

[[attack]]                  # repeatable
task = "zero_input"         # zero_input | partial_input | disturbed_input
scheme = "basic"            # basic | enhanced
# rounds = [0, 6, 12]       # default: every round (enhanced: from round 1)
# n_samples = 30            # zero-input generations per round
# n_docs = 100              # partial/disturbed: documents per round
# pool = "round"            # round | corpus: where partial documents come from
# top_p = 0.9
# temperature = 0.5         # softmax temperature of the round difference
# sampling_temperature = 1.0
# prefix_fraction = 0.8
# max_len = 64
# difference_space = "probability"   # or "logit"

# [perturb]                 # required by disturbed_input
# p_sub = 0.4
# neighbor_count = 10
# embeddings = "vectors.txt"  # all three files, or none for the
# pos_lexicon = "pos.tsv"     # built-in synthetic lexicon
# stoplist = "stop.txt"

# [[variant]]               # optional; each runs into <out>/<name>/
# name = "dp_0.8"
# defense = { dp = { noise_multiplier = 0.8 } }

[report]
thresholds = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95]
svg = true
"#;
