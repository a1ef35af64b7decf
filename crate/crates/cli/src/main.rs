use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedleak_cli::config::ReportSection;
use fedleak_cli::{cmd_gen_corpus, cmd_report, cmd_run, cmd_ttest, with_jobs, CliError, ExperimentConfig, Result, SCHEMA};
use fedleak_core::corpus::load_annotated;

#[derive(Parser)]
#[command(name = "fedleak", version, about = "Training-data leakage in federated language-model training")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print the annotated config schema and exit.
    #[arg(long)]
    print_schema: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the corpus and vocabulary and print summary counts.
    GenCorpus,
    /// Train with scheduled attacks; write checkpoints, attacks, log and reports.
    Run,
    /// Aggregate attack JSONL files into report tables and charts.
    Report {
        /// Attack JSONL files; defaults to `<out>/attacks/*.jsonl`.
        inputs: Vec<PathBuf>,
        /// Annotated corpus for PII recovery columns.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Paired t-test of one column between two report CSVs, paired by round.
    Ttest {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "top10")]
        column: String,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config", "this command needs a config file"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn default_inputs(out: &Path) -> Result<Vec<PathBuf>> {
    let dir = out.join("attacks");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| CliError::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        None => Err(CliError::config("command", "expected a subcommand (see --help)")),
        Some(Command::GenCorpus) => {
            let cfg = load_config(cli)?;
            let out = out_dir(cli, Some(&cfg));
            let s = cmd_gen_corpus(&cfg, &out)?;
            println!(
                "{} documents, {} tokens, vocabulary {}, {} PII spans ({})",
                s.n_docs,
                s.total_tokens,
                s.vocab_size,
                s.pii_total,
                s.pii_by_kind
                    .iter()
                    .map(|(k, v)| format!("{k} {v}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            Ok(())
        }
        Some(Command::Run) => {
            let cfg = load_config(cli)?;
            let out = out_dir(cli, Some(&cfg));
            let runs = with_jobs(cli.jobs, || cmd_run(&cfg, &out))??;
            for run in runs {
                let last = run.log.last().expect("round 0 is always logged");
                println!(
                    "{}: {} rounds, final loss {}",
                    run.out.display(),
                    last.round,
                    last.global_loss.map_or("n/a".into(), |l| format!("{l:.4}"))
                );
                for r in run.reports.iter().filter(|r| r.round == last.round) {
                    println!(
                        "  {}/{}: top10 {:.4}  top100 {:.4}  PII {}/{}",
                        r.task, r.scheme, r.top10, r.top100, r.pii_recovered, r.pii_total
                    );
                }
            }
            Ok(())
        }
        Some(Command::Report { inputs, corpus }) => {
            let cfg = cli.config.as_ref().map(|_| load_config(cli)).transpose()?;
            let out = out_dir(cli, cfg.as_ref());
            let inputs = if inputs.is_empty() { default_inputs(&out)? } else { inputs.clone() };
            let corpus = corpus.as_deref().map(load_annotated).transpose()?;
            let settings = cfg.map(|c| c.report).unwrap_or_else(ReportSection::default);
            let reports = cmd_report(&inputs, corpus.as_ref(), &settings, &out)?;
            println!("{} report rows from {} files", reports.len(), inputs.len());
            Ok(())
        }
        Some(Command::Ttest { a, b, column }) => {
            let result = cmd_ttest(a, b, column)?;
            let json = serde_json::to_string_pretty(&result)?;
            println!("{json}");
            if let Some(out) = &cli.out {
                let path = out.join(format!("ttest_{column}.json"));
                std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
                std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.print_schema {
        print!("{SCHEMA}");
        return ExitCode::SUCCESS;
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
