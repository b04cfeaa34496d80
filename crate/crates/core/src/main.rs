use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use metarag::bm25::{build_function_index, file_mode_localize, function_mode_localize, Bm25Params, IdfVariant};
use metarag::config::{BackendMode, RunConfig};
use metarag::eval::{self, Level, MatchMode};
use metarag::llm::LlmClient;
use metarag::meta_rag::{ControlAgent, RetrievalLists, RetrievalTranscript};
use metarag::repo::Snapshot;
use metarag::summarizer::{Summarizer, SummarizerConfig};
use metarag::summary::{render, RenderLevel, SummaryStore};
use metarag::tasks::{ingest_tasks, TaskRecord};
use metarag::tokens::TokenCounter;
use metarag::updater::{self, RepoStatsRow};

#[derive(Parser)]
#[command(name = "metarag", version, about = "Summary-driven bug localisation for Python repositories")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replay recorded LLM transcripts from this directory.
    #[arg(long, global = true, conflicts_with_all = ["record", "live"])]
    replay: Option<PathBuf>,
    /// Call the live endpoint and record transcripts into this directory.
    #[arg(long, global = true, conflicts_with = "live")]
    record: Option<PathBuf>,
    /// Call the live endpoint without recording.
    #[arg(long, global = true)]
    live: bool,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    File,
    Function,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Rsj,
    Plus,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    File,
    Function,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchArg {
    Covering,
    Exact,
}

#[derive(Subcommand)]
enum Command {
    /// Parse every Python file and write the code-unit trees.
    Index {
        repo: PathBuf,
        #[arg(long, default_value = "trees.json")]
        out: PathBuf,
    },
    /// Summarise a whole repository into a summary store.
    Summarize {
        repo: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Apply a diff to the pre-change repository and update the store.
    Update {
        repo: PathBuf,
        diff: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Run the control agent over benchmark tasks.
    Localize {
        tasks: PathBuf,
        /// Only this task.
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        store: Option<PathBuf>,
        /// Predictions, one JSON document per line.
        #[arg(long, default_value = "predictions.jsonl")]
        out: PathBuf,
        /// Directory for per-task retrieval transcripts.
        #[arg(long)]
        transcripts: Option<PathBuf>,
    },
    /// BM25 baselines.
    Bm25 {
        tasks: PathBuf,
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        repo: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "function")]
        mode: Mode,
        #[arg(long, value_enum, default_value = "rsj")]
        variant: Variant,
        /// Context budget for file mode, in tokens.
        #[arg(long, default_value_t = 13_000)]
        budget: usize,
        #[arg(long, default_value = "predictions.jsonl")]
        out: PathBuf,
    },
    /// Score predictions against the tasks' gold patches.
    Eval {
        predictions: PathBuf,
        tasks: PathBuf,
        /// Pre-change repository shared by all tasks.
        #[arg(long, conflicts_with = "snapshots")]
        repo: Option<PathBuf>,
        /// Directory holding one pre-change snapshot per task id.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "function")]
        level: LevelArg,
        #[arg(long, value_enum)]
        mode: Option<MatchArg>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Token accounting report, from a summarised repository or a counts CSV.
    Stats {
        #[arg(required_unless_present = "counts")]
        repo: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        /// CSV rows: repo,instances,code,summary,new_commit,updated_summary.
        #[arg(long, conflicts_with = "repo")]
        counts: Option<PathBuf>,
    },
    /// Cost report from retrieval transcripts.
    Cost {
        transcripts: PathBuf,
        /// Task file mapping task ids to repositories.
        #[arg(long)]
        tasks: Option<PathBuf>,
    },
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Prediction {
    task_id: String,
    lists: RetrievalLists,
}

struct Context_ {
    config: RunConfig,
    counter: Box<dyn TokenCounter>,
}

impl Context_ {
    fn client(&self) -> Result<Box<dyn LlmClient>> {
        Ok(self.config.client()?)
    }

    fn store_dir(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| self.config.store.clone())
            .context("no summary store given (--store or `store` in the config)")
    }

    fn repo_dir(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| self.config.repo.clone())
            .context("no repository given (--repo or `repo` in the config)")
    }

    fn summarizer_config(&self) -> SummarizerConfig {
        SummarizerConfig {
            model: self.config.model.clone(),
            ..SummarizerConfig::default()
        }
    }
}

fn select_tasks(path: &Path, only: &Option<String>) -> Result<Vec<TaskRecord>> {
    let mut tasks = ingest_tasks(path)?;
    if let Some(id) = only {
        tasks.retain(|t| &t.task_id == id);
        if tasks.is_empty() {
            bail!("task {id} is not in {}", path.display());
        }
    }
    tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    Ok(tasks)
}

fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let mut out = String::new();
    for p in predictions {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.replay {
        config.backend.mode = BackendMode::Replay;
        config.backend.replay_dir = Some(dir.clone());
    }
    if let Some(dir) = &cli.record {
        config.backend.mode = BackendMode::Record;
        config.backend.record_dir = Some(dir.clone());
    }
    if cli.live {
        config.backend.mode = BackendMode::Live;
    }
    let ctx = Context_ {
        counter: config.counter.build(),
        config,
    };

    match &cli.command {
        Command::Index { repo, out } => {
            let snapshot = Snapshot::load_dir(repo)?;
            let trees: Vec<_> = snapshot.iter().map(|(_, f)| &f.tree).collect();
            fs::write(out, serde_json::to_vec_pretty(&trees)?)?;
            let degraded = trees.iter().filter(|t| t.degraded).count();
            println!("indexed {} files ({degraded} degraded) into {}", trees.len(), out.display());
        }
        Command::Summarize { repo, store } => {
            let store_dir = ctx.store_dir(store)?;
            let snapshot = Snapshot::load_dir(repo)?;
            let llm = ctx.client()?;
            let summarizer = Summarizer::new(llm.as_ref(), ctx.counter.as_ref(), ctx.summarizer_config());
            let files: Vec<_> = snapshot.iter().collect();
            let trees = files
                .par_iter()
                .map(|(path, file)| {
                    summarizer
                        .summarize_file(&file.text, &file.tree)
                        .with_context(|| format!("summarising {path}"))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut out = SummaryStore::default();
            trees.into_iter().for_each(|t| {
                out.insert(t);
            });
            out.save_dir(&store_dir)?;
            println!("summarised {} files into {}", out.len(), store_dir.display());
        }
        Command::Update { repo, diff, store } => {
            let store_dir = ctx.store_dir(store)?;
            let pre = Snapshot::load_dir(repo)?;
            let patch = fs::read_to_string(diff)?;
            let post = pre.apply(&metarag::diff::parse_patch(&patch)?)?;
            let changes = updater::diff_units(&pre, &post, &patch)?;
            let mut summaries = SummaryStore::load_dir(&store_dir)?;
            let llm = ctx.client()?;
            let summarizer = Summarizer::new(llm.as_ref(), ctx.counter.as_ref(), ctx.summarizer_config());
            let report = updater::apply_update(&mut summaries, &changes, &summarizer)?;
            summaries.save_dir(&store_dir)?;
            println!(
                "updated {} units; summarised {} files, removed {}, moved {}",
                report.unit_calls.len(),
                report.files_summarized.len(),
                report.files_removed.len(),
                report.files_relocated.len()
            );
        }
        Command::Localize { tasks, task, store, out, transcripts } => {
            let summaries = SummaryStore::load_dir(&ctx.store_dir(store)?)?;
            let tasks = select_tasks(tasks, task)?;
            let llm = ctx.client()?;
            let agent = ControlAgent::new(llm.as_ref(), ctx.counter.as_ref(), ctx.config.retrieval.clone());
            let results = tasks
                .par_iter()
                .map(|t| {
                    agent
                        .localize(&t.task_id, &t.problem_statement, &summaries)
                        .with_context(|| format!("localising {}", t.task_id))
                })
                .collect::<Result<Vec<(RetrievalLists, RetrievalTranscript)>>>()?;
            if let Some(dir) = transcripts {
                fs::create_dir_all(dir)?;
                for (_, transcript) in &results {
                    let path = dir.join(format!("{}.json", transcript.task_id));
                    fs::write(path, serde_json::to_vec_pretty(transcript)?)?;
                }
            }
            let predictions: Vec<Prediction> = results
                .into_iter()
                .map(|(lists, transcript)| Prediction { task_id: transcript.task_id, lists })
                .collect();
            write_predictions(out, &predictions)?;
            println!("wrote {} predictions to {}", predictions.len(), out.display());
        }
        Command::Bm25 { tasks, task, repo, mode, variant, budget, out } => {
            let snapshot = Snapshot::load_dir(&ctx.repo_dir(repo)?)?;
            let tasks = select_tasks(tasks, task)?;
            let params = Bm25Params {
                idf_variant: match variant {
                    Variant::Rsj => IdfVariant::Rsj,
                    Variant::Plus => IdfVariant::RobertsonWalker,
                },
                ..ctx.config.bm25
            };
            let mut predictions = Vec::new();
            match mode {
                Mode::Function => {
                    let index = build_function_index(&snapshot);
                    for t in &tasks {
                        let found = function_mode_localize(&t.problem_statement, &index, &params)?;
                        predictions.push(Prediction {
                            task_id: t.task_id.clone(),
                            lists: RetrievalLists { write: vec![found], ..RetrievalLists::default() },
                        });
                    }
                }
                Mode::File => {
                    let llm = ctx.client()?;
                    for t in &tasks {
                        let outcome = file_mode_localize(
                            &t.problem_statement,
                            &snapshot,
                            *budget,
                            &params,
                            llm.as_ref(),
                            ctx.counter.as_ref(),
                            &ctx.config.model,
                        )?;
                        predictions.push(Prediction { task_id: t.task_id.clone(), lists: outcome.lists });
                    }
                }
            }
            write_predictions(out, &predictions)?;
            println!("wrote {} predictions to {}", predictions.len(), out.display());
        }
        Command::Eval { predictions, tasks, repo, snapshots, level, mode, out } => {
            let tasks = select_tasks(tasks, &None)?;
            let text = fs::read_to_string(predictions)?;
            let mut by_id = std::collections::BTreeMap::new();
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let p: Prediction = serde_json::from_str(line)
                    .with_context(|| format!("prediction line {}", i + 1))?;
                by_id.insert(p.task_id, p.lists);
            }
            let shared = match (repo, snapshots) {
                (Some(dir), _) => Some(Snapshot::load_dir(dir)?),
                (None, None) => ctx.config.repo.as_ref().map(|d| Snapshot::load_dir(d)).transpose()?,
                _ => None,
            };
            let mode = match mode {
                Some(MatchArg::Covering) => MatchMode::Covering,
                Some(MatchArg::Exact) => MatchMode::Exact,
                None => ctx.config.matching_mode,
            };
            let level = match level {
                LevelArg::File => Level::File,
                LevelArg::Function => Level::Function,
            };
            let mut results = Vec::new();
            for t in &tasks {
                let owned;
                let pre = match (&shared, snapshots) {
                    (Some(s), _) => s,
                    (None, Some(root)) => {
                        owned = Snapshot::load_dir(&root.join(&t.task_id))?;
                        &owned
                    }
                    (None, None) => bail!("no pre-change repository given (--repo or --snapshots)"),
                };
                let gold = eval::parse_gold_patch(&t.gold_patch, pre)
                    .with_context(|| format!("gold patch of {}", t.task_id))?;
                let empty = RetrievalLists::default();
                let lists = by_id.get(&t.task_id).unwrap_or(&empty);
                results.push(eval::evaluate(&t.task_id, lists, &gold, pre, mode));
            }
            let report = eval::results_report(&results, level)?;
            match out {
                Some(path) => fs::write(path, &report)?,
                None => print!("{report}"),
            }
        }
        Command::Stats { repo, store, counts } => {
            let rows = match (repo, counts) {
                (_, Some(csv)) => read_counts(csv)?,
                (Some(repo), None) => {
                    let snapshot = Snapshot::load_dir(repo)?;
                    let summaries = SummaryStore::load_dir(&ctx.store_dir(store)?)?;
                    let code: u64 = snapshot.iter().map(|(_, f)| ctx.counter.count(&f.text) as u64).sum();
                    let summary = ctx.counter.count(&render(&summaries, RenderLevel::FullFile, None)?) as u64;
                    let name = repo
                        .file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_else(|| repo.display().to_string());
                    vec![RepoStatsRow { repo: name, instances: 1, stats: updater::compute_stats(code, summary, 0, 0)? }]
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            print!("{}", updater::stats_report(&rows));
        }
        Command::Cost { transcripts, tasks } => {
            let repos: std::collections::HashMap<String, String> = match tasks {
                Some(path) => ingest_tasks(path)?.into_iter().map(|t| (t.task_id, t.repo)).collect(),
                None => Default::default(),
            };
            let mut entries = Vec::new();
            let mut paths: Vec<_> = fs::read_dir(transcripts)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            for path in paths {
                let transcript: RetrievalTranscript = serde_json::from_slice(&fs::read(&path)?)
                    .with_context(|| format!("reading {}", path.display()))?;
                let repo = repos.get(&transcript.task_id).cloned().unwrap_or_else(|| "all".into());
                entries.push((repo, transcript));
            }
            let table = eval::cost_report(&entries, ctx.config.prices.as_ref())?;
            print!("{table}");
        }
    }
    std::io::stdout().flush()?;
    Ok(())
}

fn read_counts(path: &Path) -> Result<Vec<RepoStatsRow>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("repo")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            bail!("{}:{}: expected 6 fields, found {}", path.display(), i + 1, fields.len());
        }
        let num = |k: usize| -> Result<u64> {
            fields[k]
                .replace('_', "")
                .parse()
                .with_context(|| format!("{}:{}: field {}", path.display(), i + 1, k + 1))
        };
        rows.push(RepoStatsRow {
            repo: fields[0].to_string(),
            instances: num(1)? as usize,
            stats: updater::compute_stats(num(2)?, num(3)?, num(4)?, num(5)?)?,
        });
    }
    Ok(rows)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
