use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use tracing_subscriber::EnvFilter;

use sfs_core::generators::openai::API_KEY_ENV;
use sfs_core::generators::synthetic::{estimate_conductance, Kernel};
use sfs_core::generators::SyntheticLandscape;
use sfs_core::harness::{
    self, BenchmarkConfig, BenchmarkSummary, DatasetFormat, GeneratorChoice, GivenTests, SyntheticConfig,
};
use sfs_core::metrics::{EmbeddingProvider, HashingEmbedder, HttpEmbedder};
use sfs_core::{Method, Policy, SeedTheme};

#[derive(Parser)]
#[command(
    name = "sfs",
    version,
    about = "Search over candidate programs with scattered forest search and baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Run methods over a dataset and write records plus reports.
    Run(RunArgs),
    /// Recompute the report files from the records in a run directory.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embedding: EmbeddingArgs,
    },
    /// Conductance of each cluster under both synthetic kernels.
    Conductance {
        /// Landscape JSON; the bundled default when omitted.
        #[arg(long)]
        landscape: Option<PathBuf>,
    },
    /// Print the default synthetic benchmark config.
    SynthConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum EmbeddingChoice {
    #[default]
    None,
    Hashing,
    Http,
}

#[derive(Args, Default)]
struct EmbeddingArgs {
    /// Embedding provider for the embedding-similarity metric.
    #[arg(long, value_enum)]
    embedding: Option<EmbeddingChoice>,
    #[arg(long)]
    embedding_model: Option<String>,
    /// Defaults to --base-url.
    #[arg(long)]
    embedding_url: Option<String>,
}

#[derive(Args, Default)]
struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// humaneval-jsonl | synthetic
    #[arg(long)]
    format: Option<DatasetFormat>,
    /// sfs | line | bon | tree | genetic (repeatable)
    #[arg(long = "method")]
    methods: Vec<Method>,
    #[arg(long)]
    budget: Option<u32>,
    #[arg(long)]
    seeds: Option<u32>,
    #[arg(long)]
    branching: Option<u32>,
    /// uct | puct
    #[arg(long)]
    policy: Option<Policy>,
    /// Exploration constant.
    #[arg(long)]
    c: Option<f64>,
    /// Seed theme for sfs: none | role | style | jabberwocky
    #[arg(long)]
    theme: Option<SeedTheme>,
    /// Theme for best-of-N sampling.
    #[arg(long)]
    bon_theme: Option<SeedTheme>,
    /// openai-compat | synthetic
    #[arg(long)]
    generator: Option<GeneratorChoice>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    rng_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    validation_tests: Option<u32>,
    /// 0 | N | all
    #[arg(long)]
    given_tests: Option<GivenTests>,
    /// Sandbox runner command, whitespace separated.
    #[arg(long)]
    runner: Option<String>,
    #[arg(long)]
    test_timeout: Option<f64>,
    #[command(flatten)]
    embedding: EmbeddingArgs,
}

/// Config file: the same settings as the flags, snake_case keys.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dataset: Option<PathBuf>,
    format: Option<String>,
    methods: Option<Vec<String>>,
    budget: Option<u32>,
    seeds: Option<u32>,
    branching: Option<u32>,
    policy: Option<String>,
    c: Option<f64>,
    theme: Option<String>,
    bon_theme: Option<String>,
    generator: Option<String>,
    model: Option<String>,
    base_url: Option<String>,
    rng_seed: Option<u64>,
    out: Option<PathBuf>,
    workers: Option<usize>,
    validation_tests: Option<u32>,
    given_tests: Option<String>,
    runner: Option<Vec<String>>,
    test_timeout: Option<f64>,
    embedding: Option<EmbeddingChoice>,
    embedding_model: Option<String>,
    embedding_url: Option<String>,
}

fn parse<T: std::str::FromStr<Err = String>>(key: &str, v: Option<String>) -> Result<Option<T>> {
    v.map(|s| s.parse::<T>().map_err(|e| anyhow::anyhow!("config {key}: {e}")))
        .transpose()
}

struct Resolved {
    dataset: PathBuf,
    format: DatasetFormat,
    out: PathBuf,
    bench: BenchmarkConfig,
    embedding: EmbeddingChoice,
    embedding_model: String,
    embedding_url: String,
}

fn resolve(args: RunArgs) -> Result<Resolved> {
    let file: FileConfig = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => FileConfig::default(),
    };
    let mut bench = BenchmarkConfig::default();
    let run = &mut bench.run;

    let methods = if !args.methods.is_empty() {
        args.methods
    } else if let Some(ms) = file.methods {
        ms.iter()
            .map(|m| m.parse::<Method>().map_err(|e| anyhow::anyhow!("config methods: {e}")))
            .collect::<Result<_>>()?
    } else {
        vec![Method::Sfs]
    };
    bench.methods = methods;

    if let Some(v) = args.budget.or(file.budget) {
        run.budget = v;
    }
    if let Some(v) = args.seeds.or(file.seeds) {
        run.seed_count = v;
    }
    if let Some(v) = args.branching.or(file.branching) {
        run.branching = v;
    }
    if let Some(v) = args.policy.or(parse("policy", file.policy)?) {
        run.selection_policy = v;
    }
    if let Some(v) = args.c.or(file.c) {
        run.exploration = v;
    }
    if let Some(v) = args.theme.or(parse("theme", file.theme)?) {
        run.seed_theme = v;
    }
    if let Some(v) = args.bon_theme.or(parse("bon_theme", file.bon_theme)?) {
        run.bon_theme = v;
    }
    if let Some(v) = args.rng_seed.or(file.rng_seed) {
        run.rng_seed = v;
    }
    if let Some(v) = args.validation_tests.or(file.validation_tests) {
        run.validation_test_count = v;
    }
    if let Some(v) = args.generator.or(parse("generator", file.generator)?) {
        bench.generator = v;
    }
    if let Some(v) = args.model.or(file.model) {
        bench.openai.model = v;
    }
    if let Some(v) = args.base_url.or(file.base_url) {
        bench.openai.base_url = v;
    }
    if let Some(v) = args.workers.or(file.workers) {
        bench.workers = v;
    }
    if let Some(v) = args.given_tests.or(parse("given_tests", file.given_tests)?) {
        bench.given_tests = v;
    }
    let runner = args
        .runner
        .map(|r| r.split_whitespace().map(String::from).collect::<Vec<_>>())
        .or(file.runner);
    if let Some(v) = runner {
        if v.is_empty() {
            bail!("runner command is empty");
        }
        bench.sandbox.command = v;
    }
    if let Some(v) = args.test_timeout.or(file.test_timeout) {
        bench.sandbox.test_timeout_s = v;
    }

    let dataset = args.dataset.or(file.dataset).context("--dataset is required")?;
    let format = match args.format.or(parse("format", file.format)?) {
        Some(f) => f,
        None if dataset.extension().is_some_and(|e| e == "jsonl") => DatasetFormat::HumanevalJsonl,
        None => DatasetFormat::Synthetic,
    };
    let out = args.out.or(file.out).unwrap_or_else(|| PathBuf::from("runs/latest"));
    let embedding_url = args
        .embedding
        .embedding_url
        .or(file.embedding_url)
        .unwrap_or_else(|| bench.openai.base_url.clone());
    Ok(Resolved {
        dataset,
        format,
        out,
        embedding: args.embedding.embedding.or(file.embedding).unwrap_or_default(),
        embedding_model: args
            .embedding
            .embedding_model
            .or(file.embedding_model)
            .unwrap_or_else(|| "text-embedding-3-small".into()),
        embedding_url,
        bench,
    })
}

fn embedder(choice: EmbeddingChoice, url: &str, model: &str) -> Option<Box<dyn EmbeddingProvider>> {
    match choice {
        EmbeddingChoice::None => None,
        EmbeddingChoice::Hashing => Some(Box::new(HashingEmbedder::default())),
        EmbeddingChoice::Http => {
            let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.trim().is_empty());
            Some(Box::new(HttpEmbedder::new(url, model, key, 60.0)))
        }
    }
}

fn print_summary(s: &BenchmarkSummary, out: &Path) {
    println!(
        "{} tasks, {} jobs, {} records written, {} failed",
        s.tasks,
        s.jobs,
        s.written.len(),
        s.failures.len()
    );
    for f in &s.failures {
        println!("  failed {} [{}]: {}", f.task_id, f.method, f.message);
    }
    if let Some(r) = &s.report {
        println!("{:<8} {:>9} {:>9} {:>11}", "method", "pass@1", "pass@any", "iters");
        for m in &r.methods {
            let iters = m.iterations.iters_incl.map_or("-".to_string(), |v| format!("{v:.2}"));
            println!(
                "{:<8} {:>9.4} {:>9.4} {:>11}",
                m.method.as_str(),
                m.pass_at_1.value,
                m.pass_any.value,
                iters
            );
        }
    }
    println!("output: {}", out.display());
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let r = resolve(args)?;
    let tasks = harness::load_dataset(&r.dataset, r.format)?;
    let mut emb = embedder(r.embedding, &r.embedding_url, &r.embedding_model);
    let summary = harness::run_benchmark(
        &tasks,
        &r.bench,
        &r.out,
        emb.as_mut().map(|b| &mut **b as &mut dyn EmbeddingProvider),
    )?;
    print_summary(&summary, &r.out);
    if summary.violations > 0 {
        eprintln!("error: {} runs broke a record invariant", summary.violations);
    }
    if !summary.success() {
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn report(out: &Path, e: EmbeddingArgs) -> Result<ExitCode> {
    let url = e
        .embedding_url
        .unwrap_or_else(|| sfs_core::generators::OpenAiConfig::default().base_url);
    let model = e.embedding_model.unwrap_or_else(|| "text-embedding-3-small".into());
    let mut emb = embedder(e.embedding.unwrap_or_default(), &url, &model);
    let r = harness::emit_report(out, emb.as_mut().map(|b| &mut **b as &mut dyn EmbeddingProvider))?;
    println!("report for {} methods written to {}", r.methods.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn conductance(path: Option<PathBuf>) -> Result<ExitCode> {
    let l = match path {
        Some(p) => {
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            let l: SyntheticLandscape =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            l.validate()?;
            l
        }
        None => SyntheticLandscape::default(),
    };
    println!("subset,concentrated,scattered");
    for c in 0..l.clusters {
        let s = l.cluster_points(c);
        let conc = estimate_conductance(&l, Kernel::Concentrated, &s)?;
        let scat = estimate_conductance(&l, Kernel::Scattered, &s)?;
        println!("{},{:.6},{:.6}", conc.subset, conc.conductance, scat.conductance);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Report { out, embedding } => report(&out, embedding),
        Command::Conductance { landscape } => conductance(landscape),
        Command::SynthConfig => {
            println!(
                "{}",
                serde_json::to_string_pretty(&SyntheticConfig::default()).expect("config serializes")
            );
            Ok(ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
