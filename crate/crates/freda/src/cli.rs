//! The `freda` command line. Each subcommand wraps one library module and
//! writes its report to the given writer, so tests can run it in-process.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use freda_core::corpus::{parse_corpus, tag_dates, AnnotatedSentence};
use freda_core::engine::{
    read_events, replay, speed_report, AnnotationEngine, AnnotationResponse, JournaledEngine,
    SentenceVerdict, DEFAULT_APPROACH,
};
use freda_core::evaluation::{evaluate, Averaging, Prediction};
use freda_core::export::{build_datasets, write_datasets};
use freda_core::facts::{corpus_statistics, facts_for_verdicts, Fact};
use freda_core::filtering::{
    load_schema_registry, parse_kb_pairs, select_candidates, Candidate, KbPair, Provenance,
    RelationSchema,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::api::{self, AppState};
use crate::config::{require, Config};
use crate::error::{ApiError, CliError};

#[derive(Debug, Parser)]
#[command(name = "freda", version, about = "Relation-extraction dataset construction pipeline")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SchemaArgs {
    /// Relation schema registry (JSON array).
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LogArgs {
    /// Annotation event log (JSON lines).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a `.wexea` corpus, tag dates and write canonical JSON lines.
    Ingest {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Keep the corpus entities as they are.
        #[arg(long)]
        no_date_tagger: bool,
    },
    /// Select candidate sentences per relation.
    Filter {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        schema: SchemaArgs,
        #[arg(long)]
        kb_pairs_dir: Option<PathBuf>,
        /// Maximum candidates per relation.
        #[arg(long)]
        quota: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also queue the candidates for annotation in this event log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Submit annotation responses (JSON lines) to the event log.
    Respond {
        #[command(flatten)]
        schema: SchemaArgs,
        #[command(flatten)]
        log: LogArgs,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Run the annotation HTTP server.
    Serve {
        #[command(flatten)]
        schema: SchemaArgs,
        #[command(flatten)]
        log: LogArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long)]
        lease_minutes: Option<u64>,
    },
    /// Expand verdicts into facts and print dataset statistics.
    Facts {
        #[command(flatten)]
        schema: SchemaArgs,
        /// Verdicts as JSON lines; defaults to the verdicts of the event log.
        #[arg(long = "in", conflicts_with = "log")]
        input: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the verdicts used.
        #[arg(long)]
        verdicts_out: Option<PathBuf>,
    },
    /// Write train/test datasets for every annotated relation.
    Export {
        #[command(flatten)]
        schema: SchemaArgs,
        #[command(flatten)]
        log: LogArgs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Inter-annotator agreement per relation and overall.
    Kappa {
        #[command(flatten)]
        schema: SchemaArgs,
        #[command(flatten)]
        log: LogArgs,
        #[arg(long)]
        json: bool,
    },
    /// Score predictions against gold facts.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Relations pooled into the "Interim" row.
        #[arg(long, value_delimiter = ',')]
        interim: Vec<String>,
        /// Average aggregates per relation instead of pooling counts.
        #[arg(long = "macro")]
        macro_average: bool,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Mean annotation seconds per annotator and approach.
    Speed {
        #[command(flatten)]
        schema: SchemaArgs,
        #[command(flatten)]
        log: LogArgs,
        #[arg(long)]
        json: bool,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::invalid(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| CliError::io(path, e))?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads either `.wexea` markup or canonical JSON lines, whichever the file
/// holds.
pub fn read_sentences(path: &Path) -> Result<Vec<AnnotatedSentence>, CliError> {
    let text = read(path)?;
    let json = text.lines().find(|l| !l.trim().is_empty()).is_some_and(|l| l.trim_start().starts_with('{'));
    if !json {
        return parse_corpus(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())));
    }
    let sentences: Vec<AnnotatedSentence> = read_jsonl(path)?;
    for s in &sentences {
        s.validate().map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    }
    Ok(sentences)
}

fn load_schemas(path: &Path) -> Result<Vec<RelationSchema>, CliError> {
    load_schema_registry(&read(path)?).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// KB pairs for one relation: its `kb_pairs_path` (relative to the KB
/// directory, or the schema file's directory), else `<dir>/<name>.tsv` if
/// present, else none.
fn load_kb_pairs(schema: &RelationSchema, kb_dir: Option<&Path>, schema_path: &Path) -> Result<Vec<KbPair>, CliError> {
    let base = kb_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| schema_path.parent().unwrap_or(Path::new(".")).to_path_buf());
    let path = match &schema.kb_pairs_path {
        Some(p) => base.join(p),
        None => {
            let p = base.join(format!("{}.tsv", schema.name));
            if kb_dir.is_none() || !p.exists() {
                return Ok(Vec::new());
            }
            p
        }
    };
    parse_kb_pairs(&read(&path)?).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

struct Context {
    config: Config,
}

impl Context {
    fn schema_path(&self, flag: &SchemaArgs) -> Result<PathBuf, CliError> {
        require(flag.schema.clone(), &self.config.schema_path, "schema_path")
    }

    fn log_path(&self, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        require(flag, &self.config.event_log_path, "event_log_path")
    }

    fn engine(&self, schema: &SchemaArgs) -> Result<AnnotationEngine, CliError> {
        let schemas = load_schemas(&self.schema_path(schema)?)?;
        Ok(AnnotationEngine::new(schemas)
            .with_lease_duration(self.config.lease())
            .with_default_approach(DEFAULT_APPROACH))
    }

    /// Engine state as of the end of the log, read without opening it for
    /// writing.
    fn replayed(&self, schema: &SchemaArgs, log: Option<PathBuf>) -> Result<AnnotationEngine, CliError> {
        let path = self.log_path(log)?;
        let engine = self.engine(schema)?;
        if !path.exists() {
            return Err(CliError::io(&path, "event log not found"));
        }
        let events = read_events(&path)?;
        Ok(replay(engine, &events)?)
    }
}

fn w(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<(), CliError> {
    write!(out, "{text}").map_err(|e| CliError::Io(format!("output: {e}")))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let ctx = Context { config };
    match cli.command {
        Command::Ingest { corpus, out: dest, no_date_tagger } => {
            let path = require(corpus, &ctx.config.corpus_path, "corpus_path")?;
            let sentences = read_sentences(&path)?;
            let before: usize = sentences.iter().map(|s| s.entities.len()).sum();
            let tagged: Vec<AnnotatedSentence> = if no_date_tagger {
                sentences
            } else {
                sentences.iter().map(tag_dates).collect()
            };
            let after: usize = tagged.iter().map(|s| s.entities.len()).sum();
            write_jsonl(&dest, &tagged)?;
            w(out, format_args!("ingested {} sentences, {} date clusters added\n", tagged.len(), after - before))
        }
        Command::Filter { corpus, schema, kb_pairs_dir, quota, out: dest, log } => {
            let corpus_path = require(corpus, &ctx.config.corpus_path, "corpus_path")?;
            let schema_path = ctx.schema_path(&schema)?;
            let kb_dir = kb_pairs_dir.or_else(|| ctx.config.kb_pairs_dir.clone());
            let quota = quota.unwrap_or(usize::MAX);
            if quota == 0 {
                return Err(CliError::invalid("quota must be at least 1"));
            }
            let sentences = read_sentences(&corpus_path)?;
            let schemas = load_schemas(&schema_path)?;
            let mut all: Vec<Candidate> = Vec::new();
            let mut report = String::new();
            for s in &schemas {
                let pairs = load_kb_pairs(s, kb_dir.as_deref(), &schema_path)?;
                let picked = select_candidates(&sentences, s, &pairs, quota);
                let count = |p: Provenance| picked.iter().filter(|c| c.provenance == p).count();
                report.push_str(&format!(
                    "{:<28}{:>8} candidates (keyword {}, distant {}, both {})\n",
                    s.name,
                    picked.len(),
                    count(Provenance::Keyword),
                    count(Provenance::Distant),
                    count(Provenance::Both)
                ));
                all.extend(picked);
            }
            write_jsonl(&dest, &all)?;
            if let Some(log) = log {
                let by_id: BTreeMap<&str, &AnnotatedSentence> =
                    sentences.iter().map(|s| (s.sentence_id.as_str(), s)).collect();
                let mut engine = JournaledEngine::open(AnnotationEngine::new(schemas), &log)?;
                let mut queued = 0;
                for c in &all {
                    if engine.engine().state(&c.sentence_id, &c.relation_name).is_some() {
                        continue;
                    }
                    engine.add_candidate(&c.relation_name, by_id[c.sentence_id.as_str()].clone())?;
                    queued += 1;
                }
                report.push_str(&format!("queued {queued} new candidates in {}\n", log.display()));
            }
            w(out, report)
        }
        Command::Respond { schema, log, input } => {
            let path = ctx.log_path(log.log)?;
            let responses: Vec<AnnotationResponse> = read_jsonl(&input)?;
            let mut engine = JournaledEngine::open(ctx.engine(&schema)?, &path)?;
            let mut report = String::new();
            for (i, r) in responses.into_iter().enumerate() {
                let label = format!("{} {} round {}", r.sentence_id, r.relation_name, r.round);
                let state = engine.submit_response(r).map_err(|e| match CliError::from(e) {
                    CliError::Validation(api) => CliError::Validation(ApiError::new(
                        api.code,
                        format!("{}:{}: {}", input.display(), i + 1, api.message),
                    )),
                    io => io,
                })?;
                let status = serde_json::to_value(state.status).expect("status serializes");
                report.push_str(&format!("{label}: {}\n", status.as_str().unwrap_or_default()));
            }
            w(out, report)
        }
        Command::Serve { schema, log, addr, lease_minutes } => {
            let mut ctx = ctx;
            if lease_minutes.is_some() {
                ctx.config.lease_minutes = lease_minutes;
            }
            let path = ctx.log_path(log.log)?;
            let engine = JournaledEngine::open(ctx.engine(&schema)?, &path)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
            runtime
                .block_on(api::serve(AppState::new(engine), addr))
                .map_err(|e| CliError::Io(format!("{addr}: {e}")))
        }
        Command::Facts { schema, input, log, out: dest, verdicts_out } => {
            let schemas: BTreeMap<String, RelationSchema> = load_schemas(&ctx.schema_path(&schema)?)?
                .into_iter()
                .map(|s| (s.name.clone(), s))
                .collect();
            let (verdicts, kappa): (Vec<SentenceVerdict>, Option<f64>) = match input {
                Some(p) => (read_jsonl(&p)?, None),
                None => {
                    let engine = ctx.replayed(&schema, log)?;
                    let names: Vec<String> = schemas.keys().cloned().collect();
                    let k = freda_core::agreement::agreement_report(engine.states(), &names).overall.kappa;
                    (engine.verdicts(), k)
                }
            };
            let facts = facts_for_verdicts(&verdicts, &schemas).map_err(|e| CliError::invalid(e.to_string()))?;
            write_jsonl(&dest, &facts)?;
            if let Some(p) = verdicts_out {
                write_jsonl(&p, &verdicts)?;
            }
            w(out, corpus_statistics(&verdicts, &facts).with_kappa(kappa))
        }
        Command::Export { schema, log, out_dir, ratio, seed } => {
            let dir = require(out_dir, &ctx.config.export_dir, "export_dir")?;
            let ratio = ratio.unwrap_or(ctx.config.split_ratio());
            let seed = seed.unwrap_or(ctx.config.split_seed());
            let engine = ctx.replayed(&schema, log.log)?;
            let schemas: BTreeMap<String, RelationSchema> =
                engine.schemas().map(|s| (s.name.clone(), s.clone())).collect();
            let sentences: BTreeMap<String, AnnotatedSentence> = engine
                .snapshot()
                .sentences
                .into_iter()
                .map(|s| (s.sentence_id.clone(), s))
                .collect();
            let (datasets, manifest) = build_datasets(&schemas, &engine.verdicts(), &sentences, ratio, seed)
                .map_err(|e| CliError::invalid(e.to_string()))?;
            write_datasets(&dir, &datasets, &manifest).map_err(|e| CliError::io(&dir, e))?;
            let mut report = format!(
                "{:<28}{:>8}{:>8}{:>10}{:>10}{:>10}\n",
                "relation", "train", "test", "train+", "train-", "weight+"
            );
            for (name, c) in &manifest.relations {
                report.push_str(&format!(
                    "{:<28}{:>8}{:>8}{:>10}{:>10}{:>10.4}\n",
                    name,
                    c.train_sentences,
                    c.test_sentences,
                    c.train_positive_examples,
                    c.train_negative_examples,
                    c.positive_weight
                ));
            }
            for (name, reason) in &manifest.skipped {
                report.push_str(&format!("skipped {name}: {reason}\n"));
            }
            w(out, report)
        }
        Command::Kappa { schema, log, json } => {
            let engine = ctx.replayed(&schema, log.log)?;
            let names: Vec<String> = engine.schemas().map(|s| s.name.clone()).collect();
            let report = freda_core::agreement::agreement_report(engine.states(), &names);
            if json {
                w(out, format_args!("{}\n", serde_json::to_string_pretty(&report).expect("report serializes")))
            } else {
                w(out, report)
            }
        }
        Command::Eval { gold, pred, interim, macro_average, json } => {
            let gold: Vec<Fact> = read_jsonl(&gold)?;
            let preds: Vec<Prediction> = read_jsonl(&pred)?;
            let averaging = if macro_average { Averaging::Macro } else { Averaging::Micro };
            let invalid = |e: freda_core::evaluation::EvalError| CliError::invalid(e.to_string());
            let mut report = evaluate(&preds, &gold).map_err(invalid)?;
            if !interim.is_empty() {
                report.add_aggregate(&interim, "Interim", averaging).map_err(invalid)?;
            }
            let all = report.relations();
            if !all.is_empty() {
                report.add_aggregate(&all, "Total", averaging).map_err(invalid)?;
            }
            if let Some(p) = json {
                let text = serde_json::to_string_pretty(&report).expect("report serializes");
                fs::write(&p, text + "\n").map_err(|e| CliError::io(&p, e))?;
            }
            w(out, report.render_table())
        }
        Command::Speed { schema, log, json } => {
            let engine = ctx.replayed(&schema, log.log)?;
            let rows = speed_report(&engine.timing_records());
            if json {
                return w(out, format_args!("{}\n", serde_json::to_string_pretty(&rows).expect("rows serialize")));
            }
            let mut report = format!("{:<16} {:<16} {:>6} {:>8}\n", "annotator", "approach", "n", "seconds");
            for r in rows {
                report.push_str(&format!("{r}\n"));
            }
            w(out, report)
        }
    }
}

/// Runs the CLI on process arguments and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
