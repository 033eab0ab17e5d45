//! `neuroaudit` command-line front end.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data error.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neuroaudit::config::{ConfigError, Issue, Loaded, PipelineConfig};
use neuroaudit::eval::{build_standard, content_terms, other_recode_report, score, StandardKind};
use neuroaudit::pipeline::Pipeline;
use neuroaudit::record::{ingest_admissions, AuditCategory, CodeTable};
use neuroaudit::results::{read_results, write_results, ResultRecord};
use neuroaudit::starter;
use neuroaudit::synth::{generate, GeneratorSpec};
use neuroaudit_review::decision::{metrics_from_history, read_jsonl, ReviewDecision};
use neuroaudit_review::ReviewState;

#[derive(Parser)]
#[command(name = "neuroaudit", version, about = "Suggest audit categories for neurosurgical admission notes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify an admissions file and write one result per line.
    Classify {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to $AUDIT_CONFIG.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score results against a reference standard.
    Evaluate {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "A")]
        standard: StandardKind,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use exported review decisions as ground truth instead of diagnosis codes.
        #[arg(long)]
        decisions: Option<PathBuf>,
        /// Also write the report as JSON.
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// List admission ids whose results hold a category or a descendant of it.
    Query {
        #[arg(long)]
        category: String,
        /// Results file from `classify`.
        #[arg(long, conflicts_with = "input")]
        results: Option<PathBuf>,
        /// Admissions file, classified on the fly.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic corpus and its ground truth.
    Generate {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Number of records coded OTHER whose note describes a specific category.
        #[arg(long, default_value_t = 0)]
        mislabeled_other: usize,
        /// Corpus output; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Rules, lexicon and code table to build from; the bundled starter set when absent.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Load every file a config names and report all problems.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the review service over a corpus.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn data(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

fn config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    Ok(PipelineConfig::load(&PipelineConfig::resolve(path)?)?)
}

fn load(path: Option<&Path>) -> Result<Loaded, Failure> {
    Ok(config(path)?.load_all()?)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
}

fn classify(input: &Path, cfg: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let pipeline = config(cfg)?.pipeline()?;
    let records = ingest_admissions(input).map_err(data)?;
    let (results, summary) = pipeline.classify_corpus(&records);
    let rows: Vec<ResultRecord> = results.iter().map(|r| r.to_record()).collect();
    write_results(create(out)?, &rows).map_err(data)?;
    let v = pipeline.versions();
    println!("records\t{}", summary.records);
    println!("failed\t{}", summary.failed);
    println!("uncategorized\t{}", summary.uncategorized);
    for (category, n) in &summary.by_category {
        println!("category\t{category}\t{n}");
    }
    println!(
        "unresolved\t{} / {} content tokens ({:.1}%)",
        summary.unresolved_tokens,
        summary.content_tokens,
        100.0 * summary.unresolved_rate()
    );
    println!("versions\t{} {} {}", v.lexicon, v.rules, v.tunables);
    for (id, message) in &summary.diagnostics {
        eprintln!("{id}: {message}");
    }
    Ok(())
}

fn evaluate(
    results: &Path,
    corpus: &Path,
    kind: StandardKind,
    cfg: Option<&Path>,
    decisions: Option<&Path>,
    report_out: Option<&Path>,
) -> Result<(), Failure> {
    let loaded = load(cfg)?;
    let records = ingest_admissions(corpus).map_err(data)?;
    let results = read_results(results).map_err(data)?;
    let json = match decisions {
        Some(path) => {
            let file = File::open(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
            let history: Vec<ReviewDecision> = read_jsonl(BufReader::new(file), &path.display().to_string()).map_err(data)?;
            let m = metrics_from_history(
                kind,
                &history,
                &records,
                &results,
                &loaded.pipeline,
                &loaded.alternatives,
                &loaded.approvals,
            )
            .map_err(data)?;
            println!("decided\t{}", m.decided);
            print!("{}", m.report.render());
            serde_json::json!({ "decided": m.decided, "report": m.report })
        }
        None => {
            let pipeline = &loaded.pipeline;
            let standard = build_standard(&records, &loaded.code_table, kind, |r| content_terms(&r.note, pipeline));
            let report = score(&standard, &results, &loaded.alternatives, &loaded.approvals).map_err(data)?;
            let other = other_recode_report(&standard, &results, &loaded.approvals).map_err(data)?;
            println!("standard\t{} records", standard.len());
            print!("{}", report.render());
            println!(
                "OTHER\t{} records, {} given a specific category, {} approved",
                other.other_total, other.with_specific, other.approved
            );
            serde_json::json!({ "standard_records": standard.len(), "report": report, "other": other })
        }
    };
    if let Some(path) = report_out {
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, &json).map_err(data)?;
        out.write_all(b"\n").and_then(|_| out.flush()).map_err(data)?;
    }
    Ok(())
}

fn query(category: &str, results: Option<&Path>, input: Option<&Path>, cfg: Option<&Path>) -> Result<(), Failure> {
    let category: AuditCategory = category.parse().map_err(|e| Failure::Usage(format!("--category: {e}")))?;
    let rows = match (results, input) {
        (Some(path), _) => read_results(path).map_err(data)?,
        (None, Some(path)) => {
            let pipeline = config(cfg)?.pipeline()?;
            let records = ingest_admissions(path).map_err(data)?;
            pipeline.classify_corpus(&records).0.iter().map(|r| r.to_record()).collect()
        }
        (None, None) => return Err(Failure::Usage("query needs --results or --input".into())),
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for r in rows.iter().filter(|r| r.has_category_under(&category)) {
        writeln!(out, "{}", r.admission_id).map_err(data)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn generate_cmd(
    seed: u64,
    size: usize,
    noise: f64,
    mislabeled_other: usize,
    out: Option<&Path>,
    truth: Option<&Path>,
    cfg: Option<&Path>,
) -> Result<(), Failure> {
    if size == 0 {
        return Err(Failure::Usage("--size must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Failure::Usage("--noise must be within 0-1".into()));
    }
    let (pipeline, table): (Pipeline, CodeTable) = if cfg.is_some() || std::env::var_os(neuroaudit::config::CONFIG_ENV).is_some() {
        let l = load(cfg)?;
        (l.pipeline, l.code_table)
    } else {
        (Pipeline::starter().map_err(data)?, starter::code_table())
    };
    let spec = GeneratorSpec {
        seed,
        size,
        noise,
        mislabeled_other,
    };
    let corpus = generate(&spec, &pipeline.rules, &pipeline.store, &table);
    match out {
        Some(path) => corpus.write_corpus(create(path)?).map_err(data)?,
        None => corpus.write_corpus(io::stdout().lock()).map_err(data)?,
    }
    if let Some(path) = truth {
        corpus.write_truth(create(path)?).map_err(data)?;
    }
    Ok(())
}

fn validate(cfg: Option<&Path>) -> Result<(), Failure> {
    let config = config(cfg)?;
    let issues = config.validate();
    let mut errors = 0;
    for issue in &issues {
        match issue {
            Issue::Error(m) => {
                errors += 1;
                println!("error: {m}");
            }
            Issue::Warning(m) => println!("warning: {m}"),
        }
    }
    let warnings = issues.len() - errors;
    if errors > 0 {
        return Err(Failure::Usage(format!("{errors} error(s), {warnings} warning(s)")));
    }
    println!("OK: {} ({warnings} warning(s))", config.source.display());
    Ok(())
}

fn serve(host: &str, port: u16, state: &Path, corpus: &Path, cfg: Option<&Path>) -> Result<(), Failure> {
    let loaded = load(cfg)?;
    let records = ingest_admissions(corpus).map_err(data)?;
    let state = ReviewState::open(state, loaded.pipeline, records, loaded.alternatives, loaded.approvals).map_err(data)?;
    let runtime = tokio::runtime::Runtime::new().map_err(data)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await.map_err(data)?;
        eprintln!("listening on {}", listener.local_addr().map_err(data)?);
        neuroaudit_review::serve(listener, state).await.map_err(data)
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Classify { input, config, out } => classify(&input, config.as_deref(), &out),
        Command::Evaluate {
            results,
            corpus,
            standard,
            config,
            decisions,
            report_out,
        } => evaluate(&results, &corpus, standard, config.as_deref(), decisions.as_deref(), report_out.as_deref()),
        Command::Query {
            category,
            results,
            input,
            config,
        } => query(&category, results.as_deref(), input.as_deref(), config.as_deref()),
        Command::Generate {
            seed,
            size,
            noise,
            mislabeled_other,
            out,
            truth,
            config,
        } => generate_cmd(seed, size, noise, mislabeled_other, out.as_deref(), truth.as_deref(), config.as_deref()),
        Command::Validate { config } => validate(config.as_deref()),
        Command::Serve {
            port,
            state,
            corpus,
            config,
            host,
        } => serve(&host, port, &state, &corpus, config.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
