//! On-disk formats: graph and instance JSON lines, manifest, vocabulary TSV,
//! checkpoints and the training log.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use programl_core::analysis::AnalysisTask;
use programl_core::dataset::{CorpusManifest, LabeledInstance, ManifestEntry, Split};
use programl_core::graph::{Edge, ProgramGraph, Vertex};
use programl_core::model::{CheckpointRecord, ModelConfig, ModelParameters};
use programl_core::vocab::Vocabulary;
use serde::{Deserialize, Serialize};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CHECKPOINT_FORMAT: &str = "programl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
pub struct GraphRecord {
    pub path: String,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
}

impl GraphRecord {
    pub fn from_graph(g: &ProgramGraph) -> Self {
        GraphRecord { path: g.source_path.clone(), vertices: g.vertices.clone(), edges: g.edges.clone() }
    }

    pub fn into_graph(self) -> Result<ProgramGraph> {
        let path = self.path.clone();
        ProgramGraph::from_parts(self.path, self.vertices, self.edges).with_context(|| format!("graph {path}"))
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
pub struct InstanceRecord {
    pub path: String,
    pub task: AnalysisTask,
    pub root: usize,
    pub selector_root: usize,
    pub labels: Vec<usize>,
    pub steps: u32,
    pub split: Split,
}

impl InstanceRecord {
    pub fn from_instance(i: &LabeledInstance) -> Self {
        InstanceRecord {
            path: i.path.clone(),
            task: i.task,
            root: i.root,
            selector_root: i.root,
            labels: i.labels.clone(),
            steps: i.steps,
            split: i.split.expect("instances are split before they are written"),
        }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
pub struct ManifestFile {
    pub path: String,
    pub vertices: usize,
    pub edges: usize,
    pub split: Split,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub tool_version: String,
    pub seed: u64,
    pub ratios: [u32; 3],
    pub timesteps: u32,
    pub tasks: Vec<AnalysisTask>,
    pub graph_file: String,
    pub vocab_file: String,
    pub files: Vec<ManifestFile>,
}

impl ManifestRecord {
    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest {
            entries: self
                .files
                .iter()
                .map(|f| ManifestEntry { path: f.path.clone(), vertices: f.vertices, edges: f.edges, split: f.split })
                .collect(),
            seed: self.seed,
            ratios: (self.ratios[0], self.ratios[1], self.ratios[2]),
        }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub task: AnalysisTask,
    pub checkpoint: usize,
    pub graphs_seen: usize,
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ModelParameters,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let c: Checkpoint = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            bail!("{} is not a version {CHECKPOINT_VERSION} checkpoint", path.display());
        }
        if c.params.vocab_size() != c.vocab.size() || c.params.embed_dim() != c.config.embed_dim {
            bail!("{}: parameter shapes disagree with the embedded configuration", path.display());
        }
        Ok(c)
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_graphs(path: &Path) -> Result<Vec<ProgramGraph>> {
    read_jsonl::<GraphRecord>(path)?.into_iter().map(GraphRecord::into_graph).collect()
}

pub fn write_graphs(path: &Path, graphs: &[ProgramGraph]) -> Result<()> {
    write_jsonl(path, graphs.iter().map(GraphRecord::from_graph))
}

/// `token<TAB>id<TAB>count`, reserved tokens first.
pub fn write_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    let mut out = String::new();
    for (id, (tok, count)) in vocab.tokens.iter().zip(&vocab.counts).enumerate() {
        if tok.contains(['\t', '\n']) {
            bail!("token {tok:?} cannot be stored in a TSV vocabulary");
        }
        out.push_str(&format!("{tok}\t{id}\t{count}\n"));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_vocab(path: &Path, min_count: u64) -> Result<Vocabulary> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut cols = line.split('\t');
        let (Some(tok), Some(id), Some(count), None) = (cols.next(), cols.next(), cols.next(), cols.next()) else {
            bail!("{}:{}: expected three tab-separated columns", path.display(), i + 1);
        };
        let id: usize = id.parse().with_context(|| format!("{}:{}", path.display(), i + 1))?;
        let count: u64 = count.parse().with_context(|| format!("{}:{}", path.display(), i + 1))?;
        if id != i {
            bail!("{}:{}: ids must be consecutive from 0", path.display(), i + 1);
        }
        entries.push((tok.to_string(), count));
    }
    let reserved = programl_core::vocab::RESERVED;
    if entries.len() < reserved.len() || entries.iter().zip(reserved).any(|((t, _), r)| t != r) {
        bail!("{}: reserved tokens missing or out of order", path.display());
    }
    Ok(Vocabulary::from_entries(entries.split_off(reserved.len()), min_count)?)
}

pub fn write_train_log(path: &Path, log: &[CheckpointRecord]) -> Result<()> {
    let mut out = String::from("checkpoint,graphs_seen,loss,val_precision,val_recall,val_f1\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}\n",
            r.checkpoint, r.graphs_seen, r.loss, r.val.precision, r.val.recall, r.val.f1
        ));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}
