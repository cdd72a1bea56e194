//! `riskclust` command line.

use std::fs::File;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use riskclust::pipeline::{load_tags, run_prepared, sensitivity_sweep, write_artifact, write_sweep, PreparedCorpus, SweepParam};
use riskclust::synth::{generate, SynthConfig};
use riskclust::{PipelineConfig, PipelineError, RunArtifact};
use riskclust_service::{router, ServiceError, SessionStore, DEFAULT_ADDR};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "riskclust", version, about = "Cluster operational-risk loss descriptions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipeline and write run.json, projection.csv and silhouette.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// `event_id,tag` CSV; overrides `tags_path` in the config.
        #[arg(long)]
        tags: Option<PathBuf>,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-run with one parameter varied and print `value,accuracy`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        tags: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic corpus with planted topics and a config for it.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 300)]
        docs: usize,
        /// Share of verbose outlier reports.
        #[arg(long, default_value_t = 0.0)]
        outliers: f64,
    },
    /// Serve the tagging API, and the workbench assets if given.
    Serve {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value = DEFAULT_ADDR)]
        addr: SocketAddr,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, tags, out, seed } => run(config, tags, out, seed),
        Command::Sweep {
            config,
            param,
            values,
            tags,
            seed,
            out,
        } => sweep(config, param, &values, tags, seed, out),
        Command::Synth { out, seed, docs, outliers } => synth(out, seed, docs, outliers),
        Command::Serve { data_dir, addr, static_dir } => serve(data_dir, addr, static_dir),
    }
}

fn load_config(path: PathBuf, tags: Option<PathBuf>, seed: Option<u64>) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(t) = tags {
        cfg.tags_path = Some(t);
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(config: PathBuf, tags: Option<PathBuf>, out: Option<PathBuf>, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg = load_config(config, tags, seed)?;
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    let prepared = PreparedCorpus::load(&cfg)?;
    let tags = cfg.tags_path.as_ref().map(|p| load_tags(p, prepared.doc_ids())).transpose()?;
    let artifact = run_prepared(&cfg, &prepared, tags.as_ref())?;
    write_artifact(&artifact, &cfg.output_dir)?;
    print_summary(&artifact, &cfg).map_err(io_err("stdout"))
}

fn print_summary(artifact: &RunArtifact, cfg: &PipelineConfig) -> io::Result<()> {
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "{} documents, {} terms ({:?}), {} linked word pairs",
        artifact.matrix.n_docs, artifact.matrix.n_terms, artifact.matrix.weighting, artifact.matrix.linked_pairs
    )?;
    for o in &artifact.results {
        write!(out, "{:<16} k={} objective={:.6}", o.id, o.result.k, o.result.objective)?;
        match (&o.report, &o.report_error) {
            (Some(r), _) => write!(out, " accuracy={:.4} silhouette={:.4}", r.accuracy, r.silhouette_index)?,
            (None, Some(e)) => write!(out, " (not validated: {e})")?,
            (None, None) => {}
        }
        writeln!(out)?;
    }
    writeln!(out, "wrote {}", cfg.output_dir.join("run.json").display())
}

fn sweep(
    config: PathBuf,
    param: SweepParam,
    values: &[f64],
    tags: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = load_config(config, tags, seed)?;
    let tags_path = cfg
        .tags_path
        .clone()
        .ok_or_else(|| CliError::Usage("sweep needs tags: pass --tags or set tags_path".into()))?;
    let prepared = PreparedCorpus::load(&cfg)?;
    let tags = load_tags(&tags_path, prepared.doc_ids())?;
    let rows = sensitivity_sweep(&cfg, &prepared, &tags, param, values)?;
    match out {
        Some(path) => {
            let file = File::create(&path).map_err(io_err(path.display().to_string()))?;
            write_sweep(file, &rows)?;
        }
        None => write_sweep(io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn synth(out: PathBuf, seed: u64, docs: usize, outliers: f64) -> Result<(), CliError> {
    if !(0.0..1.0).contains(&outliers) {
        return Err(CliError::Usage(format!("--outliers {outliers} outside [0, 1)")));
    }
    let corpus = generate(&SynthConfig {
        n_docs: docs,
        outlier_rate: outliers,
        seed,
        ..SynthConfig::default()
    });
    let cfg_path = corpus.write_to(&out)?;
    println!("{}", cfg_path.display());
    Ok(())
}

fn serve(data_dir: PathBuf, addr: SocketAddr, static_dir: Option<PathBuf>) -> Result<(), CliError> {
    let store = Arc::new(SessionStore::open(data_dir)?);
    let runtime = tokio::runtime::Runtime::new().map_err(io_err("runtime"))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(io_err(format!("bind {addr}")))?;
        let local = listener.local_addr().map_err(io_err("listener"))?;
        // scripts wait for this line, so print it only once bound
        println!("listening on http://{local}");
        let _ = io::stdout().flush();
        riskclust_service::serve(listener, router(store, static_dir.as_deref()))
            .await
            .map_err(io_err("serve"))
    })
}
