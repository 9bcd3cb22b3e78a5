use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use chrono::Utc;
use clap::{Parser, Subcommand};
use datanav::api::{self, AppState};
use datanav::config::STORE_ENV;
use datanav::{AppError, Config, Engine};
use datanav_core::dedup::report_lines;
use datanav_core::ingest::InputFormat;
use datanav_core::store::Store;
use datanav_core::ExecMode;

#[derive(Parser, Debug)]
#[command(name = "datanav", version, about = "Dataset catalog: ingest, deduplicate, tag, monitor and search")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Store file (overrides the environment and the config file).
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Run batch stages on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read one source into the store.
    Ingest {
        #[arg(long)]
        source: String,
        #[arg(long)]
        input: PathBuf,
        /// Guessed from file extensions when omitted.
        #[arg(long, value_parser = parse_format)]
        format: Option<InputFormat>,
    },
    /// Merge duplicate records and elect canonical ones.
    Dedup {
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Annotate untagged datasets with two selected tags each.
    Tag {
        /// File with one verified platform tag per line; other platform
        /// tags are ignored when building the vocabulary.
        #[arg(long)]
        seed_tags: Option<PathBuf>,
    },
    /// Sample and probe dataset links, gating unreachable sites.
    Linkcheck {
        /// Total number of probes across all sites.
        #[arg(long)]
        budget: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Fetch `scheme://host/path` as `{base-url}/host/path` instead.
        #[arg(long)]
        base_url: Option<String>,
    },
    /// Print `id<TAB>score<TAB>name` for the top hits.
    Search {
        query: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        tag: Option<String>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Default rebase target for admin link checks.
        #[arg(long)]
        probe_base_url: Option<String>,
    },
    /// Manage source entity cards.
    Entities {
        #[command(subcommand)]
        action: EntitiesAction,
    },
}

#[derive(Subcommand, Debug)]
enum EntitiesAction {
    /// Add or replace cards from a JSON array or JSON-lines file.
    Load { file: PathBuf },
}

fn parse_format(s: &str) -> Result<InputFormat, String> {
    match s {
        "record_dump" | "dump" | "json" => Ok(InputFormat::RecordDump),
        "html_pages" | "html" => Ok(InputFormat::HtmlPages),
        "text_corpus" | "text" => Ok(InputFormat::TextCorpus),
        other => Err(format!("unknown format {other:?} (record_dump, html_pages, text_corpus)")),
    }
}

fn read_allow_list(path: &Path) -> Result<BTreeSet<String>, AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_string).collect())
}

/// Prints lines to stdout, stopping quietly if the reader has gone away
/// (for example when piped into `head`).
fn emit(lines: impl IntoIterator<Item = String>) -> Result<(), AppError> {
    let mut out = std::io::stdout().lock();
    for line in lines {
        if let Err(e) = writeln!(out, "{line}") {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                return Ok(());
            }
            return Err(AppError::Io(e.to_string()));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), AppError> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let env = std::env::var(STORE_ENV).ok();
    let store_path = config.store_path(cli.store.as_deref(), env.as_deref());
    let mode = if cli.sequential { ExecMode::Sequential } else { ExecMode::Parallel };
    let engine = Engine::new(config)?.with_mode(mode);
    let mut store = Store::load_or_default(&store_path)?;
    let now = Utc::now();

    match cli.command {
        Command::Ingest { source, input, format } => {
            let s = engine.ingest(&mut store, &source, &input, format, now)?;
            store.save(&store_path)?;
            emit([format!(
                "{}\t{}\tinserted={}\tupdated={}\tunchanged={}\tnot_datasets={}\terrors={}",
                s.source,
                s.format,
                s.counts.inserted,
                s.counts.updated,
                s.counts.skipped,
                s.not_datasets,
                s.errors.len()
            )])?;
        }
        Command::Dedup { theta } => {
            let outcome = engine.dedup(&mut store, theta)?;
            store.save(&store_path)?;
            emit(report_lines(&outcome.clusters))?;
            eprintln!(
                "{} records, {} candidate pairs, {} relations, {} clusters",
                outcome.input_len,
                outcome.candidate_pairs,
                outcome.relations.len(),
                outcome.clusters.len()
            );
        }
        Command::Tag { seed_tags } => {
            let allow = seed_tags.as_deref().map(read_allow_list).transpose()?;
            let summary = engine.tag(&mut store, allow.as_ref())?;
            store.save(&store_path)?;
            emit(summary.assignments.iter().map(|a| format!("{}\t{}", a.dataset_id, a.selected_labels().join("|"))))?;
            eprintln!("{} datasets annotated, vocabulary of {} tags", summary.annotated, summary.vocabulary);
        }
        Command::Linkcheck { budget, seed, base_url } => {
            let report = engine.linkcheck(&mut store, Some(budget), seed, base_url, now)?;
            store.save(&store_path)?;
            emit(report.lines())?;
        }
        Command::Search { query, k, tag } => {
            let catalog = engine.catalog(&store);
            let hits = match tag {
                Some(t) => catalog.refine_by_tag(&query, &t, k)?,
                None => catalog.search(&query, k),
            };
            emit(hits.iter().map(|h| {
                let name = catalog.record(&h.dataset_id).map_or("", |r| r.dataset_name.as_str());
                format!("{}\t{:.6}\t{}", h.dataset_id, h.score, name)
            }))?;
        }
        Command::Serve { port, host, probe_base_url } => {
            let state = Arc::new(AppState::new(engine, store, store_path, probe_base_url));
            let rt = tokio::runtime::Runtime::new().map_err(|e| AppError::Io(e.to_string()))?;
            rt.block_on(async move {
                let addr = format!("{host}:{port}");
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .map_err(|e| AppError::Bind { addr: addr.clone(), reason: e.to_string() })?;
                let local = listener.local_addr().map_err(|e| AppError::Io(e.to_string()))?;
                println!("listening on http://{local}");
                api::serve(listener, state).await
            })?;
        }
        Command::Entities { action: EntitiesAction::Load { file } } => {
            let n = engine.load_entities(&mut store, &file)?;
            store.save(&store_path)?;
            emit([format!("loaded {n} entity cards")])?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("DATANAV_LOG").unwrap_or_else(|_| "warn".into()))
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
