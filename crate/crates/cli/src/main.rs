use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use programl_cli::generate::{generate_corpus, ProgramKind};
use programl_cli::pipeline::{
    build_files, collect_ll_files, make_dataset, metrics_csv, metrics_table, run_eval, run_train, summary_table,
    write_build, write_dataset, RunError, GRAPH_FILE,
};
use programl_cli::records::{read_graphs, write_json, Checkpoint, TOOL_VERSION};
use programl_core::analysis::AnalysisTask;
use programl_core::dataset::Split;
use programl_core::graph::{export_dot, stats, verify, ProgramGraph};
use programl_core::model::ModelConfig;
use serde::Serialize;
use serde_json::json;

#[derive(Parser, Serialize)]
#[command(name = "programl", version, about = "Program graphs, analysis datasets and graph-network training")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for per-file work; 0 uses every core.
    #[arg(long, global = true, env = "PROGRAML_THREADS", default_value_t = 0)]
    threads: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Graph output format for `build`.
    #[arg(long, global = true, value_enum, default_value_t = Format::Jsonl)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Jsonl,
    Dot,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Parse IR files and write one graph record per parseable file.
    Build {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Split a graph corpus and write labelled instances per task.
    Dataset {
        /// Graph file, or a directory holding graphs.jsonl.
        graphs: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "reachability,domtree,datadep,liveness,subexpressions")]
        tasks: Vec<AnalysisTask>,
        #[arg(long, default_value_t = 30)]
        timesteps: u32,
        /// Minimum training-set frequency for a vocabulary token.
        #[arg(long, default_value_t = 1)]
        min_count: u64,
    },
    /// Train a model on one task of a dataset directory.
    Train {
        dataset: PathBuf,
        #[arg(long)]
        task: AnalysisTask,
        #[command(flatten)]
        model: ModelFlags,
        /// Stop at the first checkpoint after this many minutes.
        #[arg(long)]
        max_minutes: Option<f64>,
    },
    /// Score a checkpoint on one split of a dataset directory.
    Eval {
        checkpoint: PathBuf,
        dataset: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Size statistics and invariant checks for a graph file.
    Stats { graphs: PathBuf },
    /// Write one DOT file per graph.
    ExportDot {
        graphs: PathBuf,
        /// Only export the graph with this source path.
        #[arg(long)]
        path: Option<String>,
    },
    /// Write a synthetic IR corpus.
    Generate {
        #[arg(long, default_value_t = 5000)]
        count: usize,
        #[arg(long, value_enum, default_value_t = ProgramKind::Structured)]
        kind: ProgramKind,
    },
}

#[derive(Args, Serialize)]
struct ModelFlags {
    #[arg(long, default_value_t = 32)]
    embed_dim: usize,
    #[arg(long, default_value_t = 30)]
    timesteps: u32,
    #[arg(long, default_value_t = 0.001)]
    learning_rate: f64,
    #[arg(long, default_value_t = 512)]
    batch_vertices: usize,
    #[arg(long)]
    max_epoch_graphs: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    checkpoint_every: usize,
    #[arg(long, default_value_t = 100_000)]
    max_train_graphs: usize,
    #[arg(long, default_value_t = 50.0)]
    selector_scale: f64,
}

impl ModelFlags {
    fn config(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            embed_dim: self.embed_dim,
            timesteps: self.timesteps,
            learning_rate: self.learning_rate,
            batch_vertices: self.batch_vertices,
            max_epoch_graphs: self.max_epoch_graphs.unwrap_or(usize::MAX),
            checkpoint_every: self.checkpoint_every,
            max_train_graphs: self.max_train_graphs,
            selector_scale: self.selector_scale,
            seed,
            ..ModelConfig::default()
        }
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn graph_file(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(GRAPH_FILE)
    } else {
        p.to_path_buf()
    }
}

fn dot_name(index: usize, g: &ProgramGraph) -> String {
    let stem: String = g.source_path.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    format!("{index:05}_{stem}.dot")
}

fn write_dots<'a>(dir: &Path, graphs: impl IntoIterator<Item = (usize, &'a ProgramGraph)>) -> Result<usize> {
    std::fs::create_dir_all(dir)?;
    let mut n = 0;
    for (i, g) in graphs {
        std::fs::write(dir.join(dot_name(i, g)), export_dot(g))?;
        n += 1;
    }
    Ok(n)
}

fn run(cli: &Cli) -> Result<serde_json::Value, RunError> {
    let out = &cli.out;
    match &cli.command {
        Command::Build { paths } => {
            let files = collect_ll_files(paths)?;
            let result = build_files(&files);
            for (_, msg) in &result.failures {
                eprintln!("{msg}");
            }
            if result.graphs.is_empty() {
                return Err(anyhow::anyhow!("no input file produced a graph ({} failed)", result.failures.len()).into());
            }
            match cli.format {
                Format::Jsonl => write_build(out, &result)?,
                Format::Dot => {
                    write_dots(out, result.graphs.iter().enumerate())?;
                }
            }
            let median = result.median_ms().unwrap_or(0.0);
            println!(
                "built {} graphs, {} failures, median construction {:.3} ms",
                result.graphs.len(),
                result.failures.len(),
                median
            );
            Ok(json!({
                "graphs": result.graphs.len(),
                "failures": result.failures.len(),
                "median_ms": median,
                "timings_ms": result.timings_ms.iter().map(|(p, t)| json!({"path": p, "ms": t})).collect::<Vec<_>>(),
            }))
        }
        Command::Dataset { graphs, tasks, timesteps, min_count } => {
            if tasks.is_empty() {
                return Err(anyhow::anyhow!("no tasks requested").into());
            }
            let mut tasks = tasks.clone();
            tasks.sort();
            tasks.dedup();
            let corpus = read_graphs(&graph_file(graphs))?;
            let data = make_dataset(&corpus, &tasks, cli.seed, *timesteps, *min_count)?;
            write_dataset(out, &corpus, &data)?;
            let (tr, va, te) = data.manifest.sizes();
            println!("splits: train {tr}, val {va}, test {te} files; vocabulary {} tokens", data.vocab.size());
            print!("{}", summary_table(&data));
            Ok(json!({ "splits": [tr, va, te], "vocab_size": data.vocab.size() }))
        }
        Command::Train { dataset, task, model, max_minutes } => {
            let config = model.config(cli.seed);
            let deadline = max_minutes.map(|m| Instant::now() + Duration::from_secs_f64(m * 60.0));
            let outcome = run_train(dataset, *task, &config, out, deadline, |r| {
                eprintln!(
                    "checkpoint {} after {} graphs: loss {:.4}, val P {:.4} R {:.4} F1 {:.4}{}",
                    r.checkpoint,
                    r.graphs_seen,
                    r.loss,
                    r.val.precision,
                    r.val.recall,
                    r.val.f1,
                    if r.best { " (best)" } else { "" }
                );
            })?;
            println!("best checkpoint {} of {}", outcome.best_checkpoint, outcome.log.len());
            Ok(json!({
                "config": config,
                "best_checkpoint": outcome.best_checkpoint,
                "checkpoints": outcome.log.len(),
                "stopped_early": outcome.stopped_early,
            }))
        }
        Command::Eval { checkpoint, dataset, split } => {
            let ckpt = Checkpoint::load(checkpoint)?;
            let m = run_eval(&ckpt, dataset, *split)?;
            print!("{}", metrics_table(ckpt.task, *split, &m));
            std::fs::create_dir_all(out).map_err(anyhow::Error::from)?;
            std::fs::write(out.join("metrics.csv"), metrics_csv(ckpt.task, *split, &m)).map_err(anyhow::Error::from)?;
            Ok(json!({ "metrics": m }))
        }
        Command::Stats { graphs } => {
            let corpus = read_graphs(&graph_file(graphs))?;
            let mut csv = String::from("path,vertices,edges,instructions,variables,constants,control,data,call,functions,max_position,violations\n");
            let mut violations = 0;
            let (mut v_total, mut e_total) = (0usize, 0usize);
            for g in &corpus {
                let s = stats(g);
                let bad = verify(g);
                for v in &bad {
                    eprintln!("{}: {}: {}", g.source_path, v.rule, v.detail);
                }
                violations += bad.len();
                v_total += s.vertices;
                e_total += s.edges;
                use programl_core::graph::{Flow, VertexKind};
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    g.source_path,
                    s.vertices,
                    s.edges,
                    s.kind_count(VertexKind::Instruction),
                    s.kind_count(VertexKind::Variable),
                    s.kind_count(VertexKind::Constant),
                    s.flow_count(Flow::Control),
                    s.flow_count(Flow::Data),
                    s.flow_count(Flow::Call),
                    s.functions,
                    s.max_position,
                    bad.len()
                ));
            }
            std::fs::create_dir_all(out).map_err(anyhow::Error::from)?;
            std::fs::write(out.join("stats.csv"), csv).map_err(anyhow::Error::from)?;
            let n = corpus.len().max(1) as f64;
            println!(
                "{} graphs, mean {:.1} vertices, mean {:.1} edges, {} invariant violations",
                corpus.len(),
                v_total as f64 / n,
                e_total as f64 / n,
                violations
            );
            if violations > 0 {
                return Err(anyhow::anyhow!("{violations} invariant violations").into());
            }
            Ok(json!({ "graphs": corpus.len(), "violations": violations }))
        }
        Command::ExportDot { graphs, path } => {
            let corpus = read_graphs(&graph_file(graphs))?;
            let selected = corpus.iter().enumerate().filter(|(_, g)| path.as_ref().is_none_or(|p| &g.source_path == p));
            let n = write_dots(out, selected)?;
            if n == 0 {
                return Err(anyhow::anyhow!("no graph matched").into());
            }
            println!("wrote {n} DOT files to {}", out.display());
            Ok(json!({ "exported": n }))
        }
        Command::Generate { count, kind } => {
            let files = generate_corpus(out, *count, cli.seed, *kind)?;
            println!("wrote {} programs to {}", files.len(), out.display());
            Ok(json!({ "programs": files.len() }))
        }
    }
}

fn write_run_json(cli: &Cli, started: f64, outcome: &serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let record = json!({
        "tool_version": TOOL_VERSION,
        "started_unix": started,
        "finished_unix": unix_now(),
        "config": cli,
        "result": outcome,
    });
    write_json(&cli.out.join("run.json"), &record)
}

fn init_threads(n: usize) -> Result<()> {
    if n > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            bail!("configuring {n} threads: {e}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // usage errors are input errors; exit code 2 is reserved for divergence
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let started = unix_now();
    if let Err(e) = init_threads(cli.threads) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    let result = run(&cli);
    let summary = match &result {
        Ok(v) => v.clone(),
        Err(e) => json!({ "error": e.to_string() }),
    };
    if let Err(e) = write_run_json(&cli, started, &summary) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(RunError::Diverged(e)) => {
            eprintln!("error: {e}; the last good checkpoint is kept");
            ExitCode::from(2)
        }
        Err(RunError::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
