use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use epochflow_core::fixtures::{cifar_scenario_document, random_document, WORKED_RUN_DOCUMENT};
use epochflow_core::flow::compute_flow;
use epochflow_core::ingest::{parse_run_document, RunDocument, RunStore};
use epochflow_core::metrics::score_all;
use epochflow_core::table::{confusion_summary, resolve_range, resolve_selection};
use epochflow_server::{Config, DEFAULT_BODY_LIMIT, DEFAULT_CACHE_RUNS};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "epochflow", version, about = "Per-instance classification history across training epochs")]
struct Cli {
    /// Run store directory.
    #[arg(long, global = true, env = "EPOCHFLOW_STORE", default_value = "epochflow-store")]
    store: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP query API.
    Serve {
        #[arg(long, env = "EPOCHFLOW_LISTEN", default_value = "127.0.0.1:7878")]
        listen: SocketAddr,
        /// Largest accepted request body in bytes.
        #[arg(long, env = "EPOCHFLOW_BODY_LIMIT", default_value_t = DEFAULT_BODY_LIMIT)]
        body_limit: usize,
        /// Parsed runs kept in memory.
        #[arg(long, env = "EPOCHFLOW_CACHE_RUNS", default_value_t = DEFAULT_CACHE_RUNS)]
        cache_runs: usize,
    },
    /// Validate a run file and add it to the store; prints the run id.
    Ingest { file: PathBuf },
    /// Print S, V and F for every instance as CSV.
    Metrics {
        run: String,
        /// First epoch (1-based, inclusive).
        #[arg(long)]
        from: Option<usize>,
        /// Last epoch (1-based, inclusive).
        #[arg(long)]
        to: Option<usize>,
    },
    /// Print the flow frame for a class selection as JSON.
    Flow {
        run: String,
        /// Selected class labels; all classes when omitted.
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<String>>,
        #[arg(long)]
        from: Option<usize>,
        #[arg(long)]
        to: Option<usize>,
    },
    /// Print the epoch-summed confusion matrix.
    ExportConfusion {
        run: String,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        from: Option<usize>,
        #[arg(long)]
        to: Option<usize>,
    },
    /// Write a generated run file.
    Fixture {
        #[arg(value_enum)]
        name: FixtureName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Instances, classes and epochs for `random`.
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 6)]
        epochs: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureName {
    Worked,
    Random,
    Cifar,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut out = io::stdout().lock();

    match cli.command {
        Command::Serve {
            listen,
            body_limit,
            cache_runs,
        } => {
            let config = Config {
                listen,
                store_root: cli.store,
                body_limit,
                cache_runs,
            };
            tokio::runtime::Runtime::new()?.block_on(epochflow_server::serve(config))?;
        }
        Command::Ingest { file } => {
            let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let doc = parse_run_document(&text)?;
            let run_id = RunStore::open(&cli.store)?.store_run(&doc)?;
            writeln!(out, "{run_id}")?;
        }
        Command::Metrics { run, from, to } => {
            let run = RunStore::open(&cli.store)?.load_run(&run)?;
            let range = resolve_range(&run, from, to)?;
            let scores = score_all(&run, range);
            writeln!(out, "instance_id,true_class,S,V,F")?;
            for (inst, s) in run.instances().iter().zip(scores.scores()) {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    inst.instance_id,
                    run.label(inst.true_class),
                    s.misclassification,
                    s.variability,
                    s.frequency
                )?;
            }
        }
        Command::Flow { run, classes, from, to } => {
            let run = RunStore::open(&cli.store)?.load_run(&run)?;
            let sel = resolve_selection(&run, classes.as_deref())?;
            let frame = compute_flow(&run, &sel, resolve_range(&run, from, to)?, None)?;
            serde_json::to_writer_pretty(&mut out, &frame)?;
            writeln!(out)?;
        }
        Command::ExportConfusion { run, format, from, to } => {
            let run = RunStore::open(&cli.store)?.load_run(&run)?;
            let summary = confusion_summary(&run, resolve_range(&run, from, to)?)?;
            match format {
                Format::Json => {
                    serde_json::to_writer_pretty(&mut out, &summary)?;
                    writeln!(out)?;
                }
                Format::Csv => {
                    writeln!(out, "true\\predicted,{}", summary.labels.join(","))?;
                    for (label, row) in summary.labels.iter().zip(&summary.counts) {
                        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
                        writeln!(out, "{label},{}", cells.join(","))?;
                    }
                }
            }
        }
        Command::Fixture {
            name,
            seed,
            out: path,
            instances,
            classes,
            epochs,
        } => {
            let doc = match name {
                FixtureName::Worked => parse_run_document(WORKED_RUN_DOCUMENT)?,
                FixtureName::Random => {
                    if instances == 0 || classes < 2 || epochs == 0 {
                        bail!("random fixtures need at least 1 instance, 2 classes and 1 epoch");
                    }
                    random_document(seed, instances, classes, epochs)
                }
                FixtureName::Cifar => cifar_scenario_document(seed),
            };
            write_document(&doc, path, &mut out)?;
        }
    }
    Ok(())
}

fn write_document(doc: &RunDocument, path: Option<PathBuf>, out: &mut impl Write) -> Result<()> {
    let bytes = doc.canonical_bytes();
    match path {
        Some(path) => {
            fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
            tracing::info!(run_id = %doc.run_id(), path = %path.display(), "fixture written");
        }
        None => {
            out.write_all(&bytes)?;
            writeln!(out)?;
        }
    }
    Ok(())
}
