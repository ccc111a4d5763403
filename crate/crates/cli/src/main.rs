//! `pecan`: build, search, evaluate and inspect PECAN graphs.

mod config;
mod stats;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{BuildOverrides, CliConfig, Overrides, ProviderKind, SearchOverrides};
use pecan_core::eval::{self, GraphStore, SweepParam};
use pecan_core::graph::{self, validate, validate_tokens};
use pecan_core::ingest::{load_jsonl, load_text};
use pecan_core::{build_graph, run_search, SimpleTokenizer, Tokenizer};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Error caused by how the tool was invoked; exits with status 1.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser, Debug)]
#[command(name = "pecan", version, about = "Long-document QA over hierarchical Information Point graphs")]
#[command(after_help = "Exit status: 0 on success, 1 on usage errors, 2 on runtime errors.")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML config file with optional [provider], [build] and [search] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// LLM provider backend.
    #[arg(long, global = true, value_enum)]
    provider: Option<ProviderKind>,
    /// Base URL of the http provider.
    #[arg(long, global = true, env = "PECAN_ENDPOINT")]
    endpoint: Option<String>,
    /// Bearer token for the http provider.
    #[arg(long, global = true, env = "PECAN_TOKEN", hide_env_values = true)]
    token: Option<String>,
    /// Mock decisions, e.g. `no,no,yes` or `0.7:0.2,yes`.
    #[arg(long, global = true)]
    script: Option<String>,
    /// Seed of the mock's stochastic decision rule.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Named settings: narrativeqa, qasper, hotpotqa, musique.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Raise log verbosity; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a graph from a .txt document, or one graph per line of a .jsonl corpus.
    Build {
        #[arg(long)]
        input: PathBuf,
        /// Graph file, or a directory when the input is .jsonl.
        #[arg(long)]
        out: PathBuf,
        /// Write the build trace here (a directory for .jsonl input).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        build: BuildOverrides,
    },
    /// Answer a query and print the full search result as JSON.
    Search(QueryArgs),
    /// Answer a query and print only the answer text.
    Answer(QueryArgs),
    /// Evaluate a dataset and write report.json and histogram.csv.
    Eval(EvalArgs),
    /// Evaluate a dataset once per parameter value and write sweep.csv and sweep.json.
    Sweep {
        #[command(flatten)]
        eval: EvalArgs,
        /// Comma-separated stop patience values.
        #[arg(long, value_delimiter = ',', conflicts_with = "t_p_values", required_unless_present = "t_p_values")]
        t_n_values: Vec<usize>,
        /// Comma-separated confidence thresholds.
        #[arg(long, value_delimiter = ',')]
        t_p_values: Vec<f64>,
    },
    /// Inspect a stored graph.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    query: String,
    #[command(flatten)]
    search: SearchOverrides,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// JSONL of {id, doc_id, query, answers}.
    #[arg(long)]
    dataset: PathBuf,
    /// JSONL of {doc_id, text}; documents are built on demand.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Directory of stored graphs, read first and written after builds.
    #[arg(long)]
    graphs_dir: Option<PathBuf>,
    /// Report directory.
    #[arg(long, default_value = "eval-out")]
    out: PathBuf,
    /// Worker threads for running queries.
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    build: BuildOverrides,
    #[command(flatten)]
    search: SearchOverrides,
}

#[derive(Subcommand, Debug)]
enum GraphCommand {
    /// Print level sizes, the edge-weight distribution and degeneracy flags.
    Stats {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Check every structural invariant; exits 2 if any is violated.
    Validate { file: PathBuf },
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            provider: self.provider,
            endpoint: self.endpoint.clone(),
            token: self.token.clone(),
            script: self.script.clone(),
            seed: self.seed,
            preset: self.preset.clone(),
            ..Default::default()
        }
    }

    fn load(&self, o: Overrides) -> Result<CliConfig> {
        let cfg = CliConfig::load(self.config.as_deref(), o)?;
        eprintln!("effective config:\n{}", cfg.redacted().trim_end());
        Ok(cfg)
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(anyhow!("{what} not found: {}", path.display()));
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn build(g: &GlobalArgs, input: &Path, out: &Path, trace: Option<&Path>, b: BuildOverrides) -> Result<()> {
    let cfg = g.load(Overrides { build: b, ..g.overrides() })?;
    require_file(input, "input file")?;
    let provider = cfg.provider()?;
    let jsonl = input.extension().is_some_and(|e| e == "jsonl");
    let docs = if jsonl { load_jsonl(input)? } else { vec![load_text(input)?] };
    if jsonl {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        if let Some(t) = trace {
            std::fs::create_dir_all(t).with_context(|| format!("creating {}", t.display()))?;
        }
    }
    for doc in &docs {
        let (graph_path, trace_path) = if jsonl {
            let name = eval::graph_file_name(&doc.doc_id);
            (out.join(&name), trace.map(|t| t.join(name.replace(".json", ".trace.json"))))
        } else {
            (out.to_path_buf(), trace.map(Path::to_path_buf))
        };
        let (graph, tr) = match build_graph(doc, provider.as_ref(), &cfg.build, &SimpleTokenizer) {
            Ok(ok) => ok,
            Err(e) => {
                if let Some(p) = &trace_path {
                    write_json(p, &e.trace)?;
                    eprintln!("partial trace written to {}", p.display());
                }
                return Err(anyhow!(e).context(format!("document {}", doc.doc_id)));
            }
        };
        graph::save(&graph, &graph_path)?;
        if let Some(p) = &trace_path {
            write_json(p, &tr)?;
        }
        for w in &graph.meta().warnings {
            log::warn!("{}: {w}", doc.doc_id);
        }
        println!(
            "{}: {} nodes, {} levels, {} edges -> {}",
            doc.doc_id,
            graph.len(),
            graph.num_levels(),
            graph.edges().len(),
            graph_path.display()
        );
    }
    Ok(())
}

fn query(g: &GlobalArgs, args: QueryArgs, answer_only: bool) -> Result<()> {
    let cfg = g.load(Overrides {
        search: args.search,
        ..g.overrides()
    })?;
    require_file(&args.graph, "graph file")?;
    let graph = graph::load(&args.graph)?;
    let provider = cfg.provider()?;
    let result = run_search(&graph, &args.query, provider.as_ref(), &cfg.search)?;
    if answer_only {
        println!("{}", result.answer);
    } else {
        println!("{}", serde_json::to_string_pretty(&result)?);
    }
    Ok(())
}

struct EvalSetup {
    cfg: CliConfig,
    examples: Vec<eval::EvalExample>,
    store: GraphStore,
}

fn eval_setup(g: &GlobalArgs, a: &EvalArgs) -> Result<EvalSetup> {
    let cfg = g.load(Overrides {
        workers: a.workers,
        build: a.build.clone(),
        search: a.search.clone(),
        ..g.overrides()
    })?;
    require_file(&a.dataset, "dataset")?;
    let corpus = match &a.corpus {
        Some(p) => {
            require_file(p, "corpus")?;
            load_jsonl(p)?
        }
        None => Vec::new(),
    };
    if a.corpus.is_none() && a.graphs_dir.is_none() {
        log::warn!("neither --corpus nor --graphs-dir given; every example will be skipped");
    }
    let examples = eval::load_dataset(&a.dataset)?;
    let store = GraphStore::new(corpus, cfg.build.clone(), a.graphs_dir.clone());
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    Ok(EvalSetup { cfg, examples, store })
}

fn run_eval(g: &GlobalArgs, a: EvalArgs) -> Result<()> {
    let mut s = eval_setup(g, &a)?;
    let provider = s.cfg.provider()?;
    let report = eval::run_benchmark(
        &s.examples,
        &mut s.store,
        provider.as_ref(),
        &SimpleTokenizer,
        &s.cfg.search,
        s.cfg.workers,
    )?;
    write_json(&a.out.join("report.json"), &report)?;
    std::fs::write(a.out.join("histogram.csv"), eval::histogram_csv(&report))?;
    let ag = &report.aggregates;
    println!(
        "{} evaluated, {} skipped: F1 {:.4}, ROUGE-L {:.4}, {:.2} nodes, {:.2} TFLOPs per query",
        ag.count,
        report.skipped.len(),
        ag.mean_f1,
        ag.mean_rouge_l,
        ag.mean_nodes_retrieved,
        ag.mean_tflops
    );
    Ok(())
}

fn run_sweep_cmd(g: &GlobalArgs, a: EvalArgs, t_n: Vec<usize>, t_p: Vec<f64>) -> Result<()> {
    let param = if t_n.is_empty() { SweepParam::Threshold(t_p) } else { SweepParam::StopPatience(t_n) };
    let mut s = eval_setup(g, &a)?;
    let provider = s.cfg.provider()?;
    let rows = eval::run_sweep(
        &s.examples,
        &mut s.store,
        provider.as_ref(),
        &SimpleTokenizer,
        &s.cfg.search,
        &param,
        s.cfg.workers,
    )?;
    write_json(&a.out.join("sweep.json"), &rows)?;
    let csv = eval::sweep_csv(&rows);
    std::fs::write(a.out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn graph_cmd(cmd: GraphCommand) -> Result<()> {
    match cmd {
        GraphCommand::Stats { file, json } => {
            require_file(&file, "graph file")?;
            let s = stats::compute(&graph::load(&file)?);
            if json {
                println!("{}", serde_json::to_string_pretty(&s)?);
            } else {
                print!("{}", stats::render(&s));
            }
        }
        GraphCommand::Validate { file } => {
            require_file(&file, "graph file")?;
            let g = graph::load(&file)?;
            let mut report = validate(&g);
            if g.meta().tokenizer_id == SimpleTokenizer.id() {
                report.violations.extend(validate_tokens(&g, &SimpleTokenizer).violations);
            } else {
                log::warn!("token counts not checked: graph uses tokenizer {}", g.meta().tokenizer_id);
            }
            if !report.is_valid() {
                return Err(anyhow!("{} is invalid:\n{report}", file.display()));
            }
            println!("{}: valid ({} nodes, {} levels, {} edges)", file.display(), g.len(), g.num_levels(), g.edges().len());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Build { input, out, trace, build: b } => build(g, &input, &out, trace.as_deref(), b),
        Command::Search(args) => query(g, args, false),
        Command::Answer(args) => query(g, args, true),
        Command::Eval(a) => run_eval(g, a),
        Command::Sweep {
            eval,
            t_n_values,
            t_p_values,
        } => run_sweep_cmd(g, eval, t_n_values, t_p_values),
        Command::Graph { command } => graph_cmd(command),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
