//! `gen-corpus` and `run`: corpus files, federated training with
//! scheduled attacks, checkpoints, attack JSONL, run log and reports.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fedleak_core::attack::{
    partial_input_attack, select_documents, zero_input_attack, ModelAt, PartialTarget, PerturbConfig, Perturber,
    Target, Task,
};
use fedleak_core::corpus::{
    generate_synthetic_corpus, ingest_corpus, load_annotated, partition, save_annotated, synthetic_lexicon, Corpus,
    IngestFormat, PiiKind, TokenId, Vocab,
};
use fedleak_core::defense::DefenseConfig;
use fedleak_core::fed::{run_training, GlobalModel, RoundRecord};
use fedleak_core::lm::{init_model, write_checkpoint, Checkpoint, ModelParams};
use fedleak_core::metrics::LeakageReport;
use serde::Serialize;

use crate::config::{AttackSpec, CorpusSource, ExperimentConfig, PartialPool};
use crate::error::{CliError, Result};
use crate::report;

const LEXICON_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub n_docs: usize,
    pub pii_total: usize,
    pub pii_by_kind: BTreeMap<String, usize>,
    pub vocab_size: usize,
    pub total_tokens: usize,
}

impl CorpusSummary {
    fn new(corpus: &Corpus, vocab: &Vocab) -> Self {
        let mut pii_by_kind: BTreeMap<String, usize> = PiiKind::ALL.iter().map(|k| (k.as_str().into(), 0)).collect();
        for span in corpus.iter().flat_map(|d| &d.pii_spans) {
            *pii_by_kind.entry(span.kind.as_str().into()).or_default() += 1;
        }
        Self {
            n_docs: corpus.len(),
            pii_total: corpus.pii_count(),
            pii_by_kind,
            vocab_size: vocab.len(),
            total_tokens: corpus.iter().map(|d| vocab.encode(&d.text).len()).sum(),
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Loads or generates the corpus, builds the vocabulary, and writes
/// `corpus.jsonl` and `vocab.txt` under `out`.
pub fn prepare_corpus(cfg: &ExperimentConfig, out: &Path) -> Result<(Corpus, Vocab)> {
    let corpus = match cfg.corpus.source {
        CorpusSource::Synthetic => generate_synthetic_corpus(&cfg.corpus_spec()?.expect("synthetic source"))?,
        CorpusSource::Text => ingest_corpus(
            cfg.corpus.path.as_deref().expect("validated"),
            cfg.corpus.format.unwrap_or(IngestFormat::PlainLines),
        )?,
        CorpusSource::Annotated => load_annotated(cfg.corpus.path.as_deref().expect("validated"))?,
    };
    let vocab = Vocab::build(&corpus, cfg.corpus.max_vocab)?;
    create_dir(out)?;
    save_annotated(&corpus, &out.join("corpus.jsonl"))?;
    vocab.save(&out.join("vocab.txt"))?;
    Ok((corpus, vocab))
}

pub fn cmd_gen_corpus(cfg: &ExperimentConfig, out: &Path) -> Result<CorpusSummary> {
    let (corpus, vocab) = prepare_corpus(cfg, out)?;
    let summary = CorpusSummary::new(&corpus, &vocab);
    fs::write(out.join("corpus_summary.json"), serde_json::to_string_pretty(&summary)? + "\n")
        .map_err(|e| CliError::io(out.join("corpus_summary.json"), e))?;
    Ok(summary)
}

fn perturber(cfg: &ExperimentConfig, out: &Path) -> Result<Option<Perturber>> {
    let Some(p) = &cfg.perturb else {
        return Ok(None);
    };
    let (embeddings, pos_lexicon, stoplist) = match (&p.embeddings, &p.pos_lexicon, &p.stoplist) {
        (Some(e), Some(pos), Some(s)) => (e.clone(), pos.clone(), s.clone()),
        _ => {
            let dir = out.join("lexicon");
            create_dir(&dir)?;
            let lex = synthetic_lexicon(LEXICON_DIM, cfg.seed);
            let files = [
                (dir.join("embeddings.txt"), lex.embeddings),
                (dir.join("pos.tsv"), lex.pos),
                (dir.join("stoplist.txt"), lex.stoplist),
            ];
            for (path, body) in &files {
                fs::write(path, body).map_err(|e| CliError::io(path, e))?;
            }
            let [e, pos, s] = files.map(|f| f.0);
            (e, pos, s)
        }
    };
    Ok(Some(Perturber::from_config(&PerturbConfig {
        p_sub: p.p_sub,
        embeddings,
        pos_lexicon,
        stoplist,
        neighbor_count: p.neighbor_count,
        seed: cfg.seed,
    })?))
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub name: Option<String>,
    pub out: PathBuf,
    pub log: Vec<RoundRecord>,
    pub reports: Vec<LeakageReport>,
    /// Base parameters before round 1.
    pub initial_base: ModelParams,
    pub final_model: GlobalModel,
}

impl RunSummary {
    pub fn report(&self, task: Task, scheme: &str, round: usize) -> Option<&LeakageReport> {
        self.reports
            .iter()
            .find(|r| r.task == task.as_str() && r.scheme == scheme && r.round == round)
    }

    /// `(round, column)` series for one attack.
    pub fn series(&self, task: Task, scheme: &str, column: fn(&LeakageReport) -> f64) -> Vec<(usize, f64)> {
        self.reports
            .iter()
            .filter(|r| r.task == task.as_str() && r.scheme == scheme)
            .map(|r| (r.round, column(r)))
            .collect()
    }

    pub fn final_cross_entropy(&self) -> Option<f64> {
        self.log.last().and_then(|r| r.global_cross_entropy)
    }
}

/// Runs the base configuration, or every variant into `<out>/<name>/`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RunSummary>> {
    if cfg.variants.is_empty() {
        return Ok(vec![run_single(cfg, &cfg.defense, out, None)?]);
    }
    cfg.variants
        .iter()
        .map(|v| run_single(cfg, &v.defense, &out.join(&v.name), Some(v.name.clone())))
        .collect()
}

struct AttackSinks {
    files: Vec<(PathBuf, BufWriter<File>)>,
}

impl AttackSinks {
    fn create(dir: &Path, specs: &[AttackSpec]) -> Result<Self> {
        create_dir(dir)?;
        let files = specs
            .iter()
            .map(|s| {
                let path = dir.join(format!("{}.jsonl", s.stem()));
                let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
                Ok((path, BufWriter::new(f)))
            })
            .collect::<Result<_>>()?;
        Ok(Self { files })
    }

    fn finish(self) -> Result<Vec<PathBuf>> {
        self.files
            .into_iter()
            .map(|(path, mut w)| {
                w.flush().map_err(|e| CliError::io(&path, e))?;
                Ok(path)
            })
            .collect()
    }
}

pub fn run_single(
    cfg: &ExperimentConfig,
    defense: &DefenseConfig,
    out: &Path,
    name: Option<String>,
) -> Result<RunSummary> {
    let (corpus, vocab) = prepare_corpus(cfg, out)?;
    let docs: Vec<Vec<TokenId>> = corpus.iter().map(|d| vocab.encode(&d.text)).collect();
    let fed = cfg.fed_config(defense);
    let plan = partition(&corpus, fed.n_clients, fed.n_rounds, cfg.seed)?;
    let base = init_model(&cfg.model_config(vocab.len()))?;
    let initial = GlobalModel::new(base.clone(), defense, cfg.seed)?;
    let perturber = perturber(cfg, out)?;
    let mut sinks = AttackSinks::create(&out.join("attacks"), &cfg.attacks)?;
    log::info!(
        "{}: {} docs, vocab {}, {} clients x {} rounds, defense {}",
        out.display(),
        corpus.len(),
        vocab.len(),
        fed.n_clients,
        fed.n_rounds,
        defense.label()
    );

    let outcome = run_training(&docs, &plan, &fed, initial, cfg.seed, Some(2), |round, series| {
        let entry = series.latest().expect("series has the current round");
        write_checkpoint(
            &out.join(format!("ckpt_round_{round}")),
            &Checkpoint {
                round,
                params: entry.params.clone(),
            },
        )?;
        let current = ModelAt {
            round,
            params: &entry.params,
        };
        let previous = round
            .checked_sub(1)
            .and_then(|r| series.get(r))
            .map(|p| ModelAt {
                round: p.round,
                params: &p.params,
            });
        let target = Target { current, previous };
        for (spec, (_, sink)) in cfg.attacks.iter().zip(sinks.files.iter_mut()) {
            if !spec.scheduled(round) {
                continue;
            }
            let acfg = spec.attack_config();
            let samples = match spec.task {
                Task::ZeroInput => zero_input_attack(target, &docs, &acfg, cfg.seed)?,
                Task::PartialInput | Task::DisturbedInput => {
                    let pool: Vec<usize> = match spec.pool {
                        PartialPool::Round => plan.round_docs(round.max(1)),
                        PartialPool::Corpus => (0..docs.len()).collect(),
                    };
                    let ids = select_documents(&pool, spec.n_docs, cfg.seed, round);
                    let targets: Vec<PartialTarget> = ids
                        .iter()
                        .map(|&id| PartialTarget {
                            doc_id: id,
                            tokens: &docs[id],
                        })
                        .collect();
                    let disturb = match spec.task {
                        Task::DisturbedInput => perturber.as_ref().map(|p| (p, &vocab)),
                        _ => None,
                    };
                    partial_input_attack(target, &targets, &acfg, disturb, cfg.seed)?
                }
            };
            for s in &samples {
                serde_json::to_writer(&mut *sink, &s.to_record(&vocab)?)?;
                sink.write_all(b"\n")?;
            }
            log::info!("round {round}: {} produced {} samples", spec.stem(), samples.len());
        }
        Ok(())
    })?;

    let attack_files = sinks.finish()?;
    write_log(cfg, defense, &outcome.log, &out.join("run.log.jsonl"))?;
    let failures: Vec<String> = outcome
        .log
        .iter()
        .flat_map(|r| r.observer_errors.iter().map(move |e| format!("round {}: {e}", r.round)))
        .collect();
    if !failures.is_empty() {
        return Err(CliError::Attack(failures.join("; ")));
    }
    let reports = report::cmd_report(&attack_files, Some(&corpus), &cfg.report, out)?;
    Ok(RunSummary {
        name,
        out: out.to_path_buf(),
        log: outcome.log,
        reports,
        initial_base: base,
        final_model: outcome.final_model,
    })
}

#[derive(Serialize)]
struct RunHeader<'a> {
    event: &'static str,
    seed: u64,
    defense: String,
    n_clients: usize,
    n_rounds: usize,
    local_iters: usize,
    lr: f64,
    cosine_schedule: bool,
    attacks: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    corpus_path: Option<&'a Path>,
}

#[derive(Serialize)]
struct RoundEvent<'a> {
    event: &'static str,
    #[serde(flatten)]
    record: &'a RoundRecord,
}

fn write_log(cfg: &ExperimentConfig, defense: &DefenseConfig, log: &[RoundRecord], path: &Path) -> Result<()> {
    let header = RunHeader {
        event: "start",
        seed: cfg.seed,
        defense: defense.label(),
        n_clients: cfg.fed.n_clients,
        n_rounds: cfg.fed.n_rounds,
        local_iters: cfg.fed.local_iters,
        lr: cfg.fed.lr,
        cosine_schedule: cfg.fed.cosine_schedule,
        attacks: cfg.attacks.iter().map(|a| a.stem()).collect(),
        corpus_path: cfg.corpus.path.as_deref(),
    };
    let mut body = serde_json::to_string(&header)? + "\n";
    for record in log {
        body += &serde_json::to_string(&RoundEvent { event: "round", record })?;
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| CliError::io(path, e))
}
