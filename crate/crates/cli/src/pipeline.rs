//! The stages behind each subcommand, callable in-process.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use programl_core::analysis::{AnalysisTask, Analyzer};
use programl_core::dataset::{
    class_balance, exclusion_report, filter_by_steps, label_mask, make_instances_with, split_corpus, CorpusManifest,
    DatasetError, ExclusionReport, LabeledInstance, Split,
};
use programl_core::graph::{build_graph, ProgramGraph};
use programl_core::ir::{parse_ir, ParseError, Severity};
use programl_core::model::{
    evaluate, train, CheckpointRecord, Control, EncodedGraph, Example, Metrics, ModelConfig, ModelParameters,
    TrainError, TrainOutcome, TrainingData,
};
use programl_core::vocab::{build_vocab, encode_graph, Vocabulary};
use rayon::prelude::*;

use crate::records::{
    read_graphs, read_json, read_jsonl, read_vocab, write_graphs, write_json, write_jsonl, write_train_log,
    write_vocab, Checkpoint, InstanceRecord, ManifestFile, ManifestRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
    TOOL_VERSION,
};

pub const GRAPH_FILE: &str = "graphs.jsonl";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";

/// `.ll` files under the given paths, sorted. Directories are walked
/// recursively; explicit files are taken whatever their extension.
pub fn collect_ll_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            for entry in walkdir::WalkDir::new(p).sort_by_file_name() {
                let entry = entry?;
                if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "ll") {
                    out.push(entry.into_path());
                }
            }
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            bail!("{}: no such file or directory", p.display());
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Parse, validate and build one IR text. Errors come back as rendered
/// diagnostics.
pub fn graph_from_source(path: &str, source: &str) -> Result<ProgramGraph, String> {
    let module = parse_ir(source).map_err(|e| match e {
        ParseError::Syntax(s) => format!("{path}:{}:{}: error: {}", s.line, s.col, s.message),
        ParseError::Validation(ds) => ds
            .iter()
            .filter(|d| d.severity == Severity::Error)
            .map(|d| d.render(path))
            .collect::<Vec<_>>()
            .join("\n"),
    })?;
    let mut g = build_graph(&module).map_err(|e| format!("{path}: error: {e}"))?;
    g.source_path = path.to_string();
    Ok(g)
}

#[derive(Debug, Default)]
pub struct BuildResult {
    pub graphs: Vec<ProgramGraph>,
    /// `(path, rendered diagnostics)`
    pub failures: Vec<(String, String)>,
    /// Milliseconds from text to graph, per successful file.
    pub timings_ms: Vec<(String, f64)>,
}

impl BuildResult {
    pub fn median_ms(&self) -> Option<f64> {
        let mut t: Vec<f64> = self.timings_ms.iter().map(|x| x.1).collect();
        if t.is_empty() {
            return None;
        }
        t.sort_by(f64::total_cmp);
        Some(if t.len() % 2 == 1 { t[t.len() / 2] } else { (t[t.len() / 2 - 1] + t[t.len() / 2]) / 2.0 })
    }
}

pub fn build_files(files: &[PathBuf]) -> BuildResult {
    let results: Vec<_> = files
        .par_iter()
        .map(|f| {
            let name = f.display().to_string();
            let source = match std::fs::read_to_string(f) {
                Ok(s) => s,
                Err(e) => return (name.clone(), Err(format!("{name}: error: {e}"))),
            };
            let t = Instant::now();
            let r = graph_from_source(&name, &source);
            let ms = t.elapsed().as_secs_f64() * 1e3;
            (name, r.map(|g| (g, ms)))
        })
        .collect();
    let mut out = BuildResult::default();
    for (name, r) in results {
        match r {
            Ok((g, ms)) => {
                out.timings_ms.push((name, ms));
                out.graphs.push(g);
            }
            Err(msg) => out.failures.push((name, msg)),
        }
    }
    out
}

pub fn write_build(dir: &Path, result: &BuildResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_graphs(&dir.join(GRAPH_FILE), &result.graphs)?;
    let mut failures = String::new();
    for (path, msg) in &result.failures {
        failures.push_str(&format!("{path}\t{}\n", msg.replace('\n', " | ")));
    }
    std::fs::write(dir.join("failures.tsv"), failures)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TaskSummary {
    pub task: AnalysisTask,
    pub kept: usize,
    pub exclusion: ExclusionReport,
    /// Positive share of eligible labels per split.
    pub balance: BTreeMap<Split, Option<f64>>,
}

#[derive(Debug)]
pub struct DatasetBuild {
    pub manifest: CorpusManifest,
    pub vocab: Vocabulary,
    pub instances: BTreeMap<AnalysisTask, Vec<LabeledInstance>>,
    pub summaries: Vec<TaskSummary>,
    pub timesteps: u32,
}

/// Split the corpus, build the vocabulary from training graphs, sample and
/// label instances per task, and drop those needing more than `timesteps`
/// steps.
pub fn make_dataset(
    graphs: &[ProgramGraph],
    tasks: &[AnalysisTask],
    seed: u64,
    timesteps: u32,
    min_count: u64,
) -> Result<DatasetBuild> {
    let mut sorted: Vec<&ProgramGraph> = graphs.iter().collect();
    sorted.sort_by(|a, b| a.source_path.cmp(&b.source_path));
    if sorted.windows(2).any(|w| w[0].source_path == w[1].source_path) {
        bail!("graph paths must be unique");
    }
    let manifest = split_corpus(
        sorted.iter().map(|g| (g.source_path.clone(), g.num_vertices(), g.edges.len())).collect(),
        seed,
    )?;
    let split_of: BTreeMap<&str, Split> = manifest.entries.iter().map(|e| (e.path.as_str(), e.split)).collect();
    let vocab = build_vocab(sorted.iter().copied().filter(|g| split_of[g.source_path.as_str()] == Split::Train), min_count)?;

    let per_graph: Vec<Vec<LabeledInstance>> = sorted
        .par_iter()
        .map(|g| {
            let a = Analyzer::new(g);
            tasks.iter().flat_map(|&t| make_instances_with(&a, t, seed)).collect()
        })
        .collect();
    let by_path: BTreeMap<&str, &ProgramGraph> = sorted.iter().map(|g| (g.source_path.as_str(), *g)).collect();
    let mut instances = BTreeMap::new();
    let mut summaries = Vec::new();
    for &task in tasks {
        let all: Vec<LabeledInstance> = per_graph
            .iter()
            .flatten()
            .filter(|i| i.task == task)
            .cloned()
            .map(|mut i| {
                i.split = Some(split_of[i.path.as_str()]);
                i
            })
            .collect();
        let (kept, excluded) = filter_by_steps(all, timesteps);
        let exclusion = exclusion_report(&kept, &excluded);
        let balance = Split::ALL
            .into_iter()
            .map(|s| {
                let items = kept.iter().filter(|i| i.split == Some(s)).map(|i| (i, by_path[i.path.as_str()]));
                (s, class_balance(items))
            })
            .collect();
        summaries.push(TaskSummary { task, kept: kept.len(), exclusion, balance });
        instances.insert(task, kept);
    }
    Ok(DatasetBuild { manifest, vocab, instances, summaries, timesteps })
}

pub fn write_dataset(dir: &Path, graphs: &[ProgramGraph], data: &DatasetBuild) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut sorted: Vec<ProgramGraph> = graphs.to_vec();
    sorted.sort_by(|a, b| a.source_path.cmp(&b.source_path));
    write_graphs(&dir.join(GRAPH_FILE), &sorted)?;
    write_vocab(&dir.join(VOCAB_FILE), &data.vocab)?;
    let record = ManifestRecord {
        tool_version: TOOL_VERSION.into(),
        seed: data.manifest.seed,
        ratios: [data.manifest.ratios.0, data.manifest.ratios.1, data.manifest.ratios.2],
        timesteps: data.timesteps,
        tasks: data.instances.keys().copied().collect(),
        graph_file: GRAPH_FILE.into(),
        vocab_file: VOCAB_FILE.into(),
        files: data
            .manifest
            .entries
            .iter()
            .map(|e| ManifestFile { path: e.path.clone(), vertices: e.vertices, edges: e.edges, split: e.split })
            .collect(),
    };
    write_json(&dir.join(MANIFEST_FILE), &record)?;
    for (task, inst) in &data.instances {
        write_jsonl(&dir.join(format!("{task}.jsonl")), inst.iter().map(InstanceRecord::from_instance))?;
    }
    Ok(())
}

pub fn summary_table(data: &DatasetBuild) -> String {
    let mut out = format!(
        "{:<15} {:>9} {:>10} {:>10} {:>10} {:>10} {:>11} {:>11}\n",
        "task", "instances", "pos:train", "pos:val", "pos:test", "excluded", "excl/inst", "excl/graph"
    );
    let fmt = |b: Option<f64>| b.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    for s in &data.summaries {
        out.push_str(&format!(
            "{:<15} {:>9} {:>10} {:>10} {:>10} {:>10} {:>11.4} {:>11.4}\n",
            s.task.as_str(),
            s.kept,
            fmt(s.balance[&Split::Train]),
            fmt(s.balance[&Split::Val]),
            fmt(s.balance[&Split::Test]),
            s.exclusion.excluded_instances,
            s.exclusion.instance_ratio(),
            s.exclusion.graph_ratio(),
        ));
    }
    out
}

/// A dataset directory loaded back into memory.
pub struct Dataset {
    pub manifest: ManifestRecord,
    pub graphs: Vec<ProgramGraph>,
    pub vocab: Vocabulary,
    index: BTreeMap<String, usize>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: ManifestRecord = read_json(&dir.join(MANIFEST_FILE))?;
        let graphs = read_graphs(&dir.join(&manifest.graph_file))?;
        let vocab = read_vocab(&dir.join(&manifest.vocab_file), 1)?;
        let index = graphs.iter().enumerate().map(|(i, g)| (g.source_path.clone(), i)).collect();
        Ok(Dataset { manifest, graphs, vocab, index })
    }

    pub fn graph(&self, path: &str) -> Option<&ProgramGraph> {
        self.index.get(path).map(|&i| &self.graphs[i])
    }

    pub fn instances(&self, dir: &Path, task: AnalysisTask) -> Result<Vec<InstanceRecord>> {
        read_jsonl(&dir.join(format!("{task}.jsonl")))
    }

    /// Encode every graph with `vocab`.
    pub fn encode(&self, vocab: &Vocabulary) -> Vec<EncodedGraph> {
        self.graphs.iter().map(|g| EncodedGraph::new(g, encode_graph(g, vocab))).collect()
    }

    pub fn examples(&self, records: &[InstanceRecord], split: Split) -> Result<Vec<Example>> {
        records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| {
                let gi = *self.index.get(&r.path).with_context(|| format!("instance refers to unknown graph {}", r.path))?;
                let g = &self.graphs[gi];
                let n = g.num_vertices();
                if r.root >= n || r.labels.iter().any(|&v| v >= n) {
                    bail!("instance for {} refers to a vertex outside the graph", r.path);
                }
                let mut labels = fixedbitset::FixedBitSet::with_capacity(n);
                r.labels.iter().for_each(|&v| labels.insert(v));
                Ok(Example { graph: gi, root: r.root, labels, scored: label_mask(g, r.task) })
            })
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Input(#[from] anyhow::Error),
    #[error("training diverged: {0}")]
    Diverged(TrainError),
}

impl From<DatasetError> for RunError {
    fn from(e: DatasetError) -> Self {
        RunError::Input(e.into())
    }
}

/// Train on a dataset directory, writing the best checkpoint whenever it
/// improves and the log after every checkpoint. `deadline` caps wall-clock
/// time at checkpoint granularity.
pub fn run_train(
    dataset_dir: &Path,
    task: AnalysisTask,
    config: &ModelConfig,
    out: &Path,
    deadline: Option<Instant>,
    mut progress: impl FnMut(&CheckpointRecord),
) -> Result<TrainOutcome, RunError> {
    let ds = Dataset::load(dataset_dir)?;
    let records = ds.instances(dataset_dir, task)?;
    let train_ex = ds.examples(&records, Split::Train)?;
    let val_ex = ds.examples(&records, Split::Val)?;
    if train_ex.is_empty() {
        return Err(anyhow::anyhow!("dataset has no {task} training instances").into());
    }
    let encoded = ds.encode(&ds.vocab);
    std::fs::create_dir_all(out).map_err(anyhow::Error::from)?;
    let mut log: Vec<CheckpointRecord> = Vec::new();
    let mut io_error: Option<anyhow::Error> = None;
    let result = train(
        TrainingData { graphs: &encoded, train: &train_ex, val: &val_ex },
        ds.vocab.size(),
        config,
        |rec, params| {
            log.push(rec.clone());
            progress(rec);
            let saved = (|| -> Result<()> {
                if rec.best {
                    save_checkpoint(&out.join(CHECKPOINT_FILE), task, rec, config, &ds.vocab, params)?;
                }
                write_train_log(&out.join(TRAIN_LOG_FILE), &log)
            })();
            if let Err(e) = saved {
                io_error = Some(e);
                return Control::Stop;
            }
            if deadline.is_some_and(|d| Instant::now() >= d) {
                Control::Stop
            } else {
                Control::Continue
            }
        },
    );
    if let Some(e) = io_error {
        return Err(e.into());
    }
    result.map_err(|e| match e {
        TrainError::Model(m) => RunError::Input(m.into()),
        TrainError::EmptyTrain => RunError::Input(anyhow::anyhow!("no training instances")),
        d @ TrainError::NonFiniteLoss { .. } => RunError::Diverged(d),
    })
}

fn save_checkpoint(
    path: &Path,
    task: AnalysisTask,
    rec: &CheckpointRecord,
    config: &ModelConfig,
    vocab: &Vocabulary,
    params: &ModelParameters,
) -> Result<()> {
    let c = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        task,
        checkpoint: rec.checkpoint,
        graphs_seen: rec.graphs_seen,
        config: config.clone(),
        vocab: vocab.clone(),
        params: params.clone(),
    };
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_vec(&c)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Metrics of a checkpoint on one split of a dataset directory.
pub fn run_eval(checkpoint: &Checkpoint, dataset_dir: &Path, split: Split) -> Result<Metrics> {
    let ds = Dataset::load(dataset_dir)?;
    let records = ds.instances(dataset_dir, checkpoint.task)?;
    let examples = ds.examples(&records, split)?;
    let encoded = ds.encode(&checkpoint.vocab);
    Ok(evaluate(&encoded, &examples, &checkpoint.params, &checkpoint.config)?)
}

pub fn metrics_table(task: AnalysisTask, split: Split, m: &Metrics) -> String {
    let [tn, fp, fnr, tp] = m.confusion_ratios();
    let mut s = format!("{:<15} {:<6} {:>9} {:>9} {:>9} {:>9}\n", "task", "split", "precision", "recall", "f1", "accuracy");
    s.push_str(&format!(
        "{:<15} {:<6} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
        task.as_str(),
        split.as_str(),
        m.precision,
        m.recall,
        m.f1,
        m.accuracy
    ));
    s.push_str("\nconfusion (fraction of scored vertices)\n");
    s.push_str(&format!("{:<12} {:>12} {:>12}\n", "", "pred false", "pred true"));
    s.push_str(&format!("{:<12} {:>12.4} {:>12.4}\n", "true false", tn, fp));
    s.push_str(&format!("{:<12} {:>12.4} {:>12.4}\n", "true true", fnr, tp));
    if m.undefined {
        s.push_str("\nnote: a metric had a zero denominator and is reported as 0\n");
    }
    s
}

pub fn metrics_csv(task: AnalysisTask, split: Split, m: &Metrics) -> String {
    let [tn, fp, fnr, tp] = m.confusion_ratios();
    format!(
        "task,split,precision,recall,f1,accuracy,tn,fp,fn,tp,tn_ratio,fp_ratio,fn_ratio,tp_ratio,undefined\n\
         {},{},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{}\n",
        task, split, m.precision, m.recall, m.f1, m.accuracy, m.tn, m.fp, m.fn_, m.tp, tn, fp, fnr, tp, m.undefined
    )
}
