use std::collections::BTreeMap;
use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sudnli::corpus::{self, DatasetSchema};
use sudnli::entail::{classify, BackendRegistry};
use sudnli::experiments::{read_table, Experiment, ExperimentSpec};
use sudnli::hypothesis::{builtin_templates, load_templates, resolve_template, validate_template, CandidateLabelSet, HypothesisTemplate};
use sudnli::masking::{load_embeddings, mask_text, MaskingPolicy, DEFAULT_MAX_FRACTION};
use sudnli::ClassDistribution;
use sudnli_service::Session;

#[derive(Parser)]
#[command(name = "sudnli", version, about = "Zero-shot SUD classification with NLI models")]
struct Cli {
    /// TOML file of extra `[[backend]]` configurations.
    #[arg(long, global = true)]
    backends: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    #[command(subcommand)]
    Corpus(CorpusCmd),
    #[command(subcommand)]
    Templates(TemplatesCmd),
    /// Classify one text and print the distribution as JSON.
    Classify {
        #[arg(long)]
        backend: String,
        /// Template id or a pattern with one `{}` slot.
        #[arg(long)]
        template: String,
        /// Comma-separated candidate labels.
        #[arg(long, value_delimiter = ',', required = true)]
        labels: Vec<String>,
        #[arg(long)]
        text: String,
        /// Surface form for a label, as `label=phrase`. Repeatable.
        #[arg(long = "surface", value_parser = parse_pair)]
        surface: Vec<(String, String)>,
    },
    #[command(subcommand)]
    Mask(MaskCmd),
    #[command(subcommand)]
    Experiment(ExperimentCmd),
    /// Run the HTTP API. There is no authentication.
    Serve {
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        bind: IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// TOML file of extra templates.
        #[arg(long)]
        templates: Option<PathBuf>,
        /// GloVe text file to load as the active embedding table.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Read a source file under a manifest and write canonical JSONL.
    Ingest {
        /// Manifest file, or the id of a bundled dataset.
        #[arg(long)]
        manifest: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print per-label counts of a canonical JSONL file.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        manifest: Option<String>,
    },
}

#[derive(Subcommand)]
enum TemplatesCmd {
    /// Print the built-in templates (plus those of `--file`).
    List {
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Check a pattern; with labels, print the hypotheses it yields.
    Validate {
        #[arg(long)]
        pattern: String,
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
    },
}

#[derive(Subcommand)]
enum MaskCmd {
    /// Show which tokens would be masked for a label.
    Preview {
        #[arg(long)]
        label: String,
        #[arg(long)]
        text: String,
        #[arg(long, default_value_t = sudnli::masking::DEFAULT_TAU, allow_hyphen_values = true)]
        tau: f64,
        /// Mask the k most similar tokens instead of thresholding.
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_MAX_FRACTION)]
        max_fraction: f64,
        /// GloVe text file.
        #[arg(long, env = "SUDNLI_GLOVE_PATH")]
        embeddings: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Run (or resume) the experiment a spec file describes.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Rescore every cell, ignoring persisted predictions.
        #[arg(long)]
        fresh: bool,
    },
    /// Print the table of a finished run.
    Report {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
}

/// `println!` that reports a closed stdout as an error instead of panicking.
macro_rules! outln {
    ($($t:tt)*) => { writeln!(std::io::stdout(), $($t)*)? };
}

macro_rules! out {
    ($($t:tt)*) => { write!(std::io::stdout(), $($t)*)? };
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    s.split_once('=').map(|(a, b)| (a.to_string(), b.to_string())).ok_or_else(|| format!("expected label=phrase, got {s:?}"))
}

fn registry(path: Option<&Path>) -> Result<BackendRegistry> {
    let mut r = BackendRegistry::default();
    if let Some(p) = path {
        r.load_file(p)?;
    }
    Ok(r)
}

fn manifest(name: &str) -> Result<DatasetSchema> {
    if let Some(s) = corpus::builtin_manifest(name) {
        if !Path::new(name).is_file() {
            return Ok(s);
        }
    }
    corpus::load_manifest(name).with_context(|| format!("loading manifest {name}"))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    outln!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Corpus(CorpusCmd::Ingest { manifest: m, input, out }) => {
            let schema = manifest(&m)?;
            let loaded = corpus::load_dataset(&input, &schema)?;
            for row in &loaded.malformed {
                eprintln!("skipped row {}: {}", row.row, row.reason);
            }
            corpus::write_jsonl(&loaded.corpus, &out)?;
            print_json(&corpus::stats(&loaded.corpus))?;
        }
        Command::Corpus(CorpusCmd::Stats { input, manifest: m }) => {
            let schema = m.as_deref().map(manifest).transpose()?;
            let c = corpus::read_canonical(&input, schema.as_ref())?;
            print_json(&corpus::stats(&c))?;
        }
        Command::Templates(TemplatesCmd::List { file }) => {
            let mut ts = builtin_templates();
            if let Some(f) = file {
                ts.extend(load_templates(f)?);
            }
            for t in ts {
                outln!("{}\t{}", t.id(), t.pattern());
            }
        }
        Command::Templates(TemplatesCmd::Validate { pattern, labels }) => {
            if let Err(d) = validate_template(&pattern) {
                outln!("invalid: {d}");
                return Ok(ExitCode::from(1));
            }
            outln!("ok");
            if !labels.is_empty() {
                let t = HypothesisTemplate::adhoc(&pattern)?;
                for h in CandidateLabelSet::new(labels)?.hypotheses(&t)? {
                    outln!("{h}");
                }
            }
        }
        Command::Classify { backend, template, labels, text, surface } => {
            let b = registry(cli.backends.as_deref())?.build::<f64>(&backend)?;
            let t = resolve_template(&template)?;
            let labels = CandidateLabelSet::with_surface_forms(labels, surface.into_iter().collect::<BTreeMap<_, _>>())?;
            let d: ClassDistribution = classify(&b, &text, &t, &labels)?;
            print_json(&d)?;
        }
        Command::Mask(MaskCmd::Preview { label, text, tau, top_k, max_fraction, embeddings, json }) => {
            let table = load_embeddings::<f64>(&embeddings)?.table;
            let policy = match top_k {
                Some(k) => MaskingPolicy::top_k(k),
                None => MaskingPolicy::threshold(tau),
            }
            .with_max_fraction(max_fraction);
            let m = mask_text(&text, &label, &table, &policy)?;
            if json {
                print_json(&m)?;
            } else {
                outln!("{}", m.masked_text);
                for (i, (tok, sim)) in m.tokens.iter().zip(&m.similarities).enumerate() {
                    let mark = if m.masked_positions.contains(&i) { "*" } else { " " };
                    match sim {
                        Some(s) => outln!("{mark} {tok}\t{s:.4}"),
                        None => outln!("{mark} {tok}\t-"),
                    }
                }
            }
        }
        Command::Experiment(ExperimentCmd::Run { spec, fresh }) => {
            let spec = ExperimentSpec::load(&spec)?;
            let out = Experiment::new(spec)
                .with_registry(registry(cli.backends.as_deref())?)
                .resume(!fresh)
                .on_cell(|c| eprintln!("{} / {}: {}", c.row, c.column, c.value.value().map_or("failed".into(), |v| format!("{v:.1}"))))
                .run()?;
            out!("{}", out.table.to_markdown());
            eprintln!(
                "wrote {} (cache hit rate {:.2}, {} failed cells)",
                out.dir.display(),
                out.metadata.cache_hit_rate,
                out.metadata.failed_cells
            );
            if out.metadata.failed_cells > 0 {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Experiment(ExperimentCmd::Report { spec, format }) => {
            let spec = ExperimentSpec::load(&spec)?;
            let table = read_table(&spec).context("no finished run for this spec; run `experiment run` first")?;
            match format {
                Format::Md => out!("{}", table.to_markdown()),
                Format::Csv => out!("{}", table.to_csv()),
                Format::Json => print_json(&table)?,
            }
        }
        Command::Serve { bind, port, templates, embeddings } => {
            let mut session = Session::new(registry(cli.backends.as_deref())?);
            if let Some(f) = templates {
                session = session.with_templates(load_templates(f)?);
            }
            if let Some(e) = embeddings {
                let loaded = load_embeddings::<f64>(&e)?;
                session = session.with_embeddings(loaded.table, e.display().to_string());
            }
            if !bind.is_loopback() {
                eprintln!("warning: binding {bind} exposes an unauthenticated API");
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(SocketAddr::new(bind, port)).await?;
                outln!("listening on http://{}", listener.local_addr()?);
                sudnli_service::serve(listener, Arc::new(session)).await
            })?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) if e.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            // library errors already append their source to their message
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.ends_with(&cause) {
                    msg = if msg.is_empty() { cause } else { format!("{msg}: {cause}") };
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
