//! Labelled instances, corpus splits and step filtering.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{AnalysisTask, Analyzer};
use crate::graph::{Fnv, ProgramGraph};

/// `min(ceil(n / 10), 10)`
pub fn root_count(num_vertices: usize) -> usize {
    num_vertices.div_ceil(10).min(10)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Split::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| alloc::format!("unknown split {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledInstance {
    pub path: String,
    pub graph_hash: u64,
    pub task: AnalysisTask,
    pub root: usize,
    /// Vertex ids labelled 1, ascending.
    pub labels: Vec<usize>,
    pub steps: u32,
    /// Assigned once the corpus has been split.
    pub split: Option<Split>,
}

impl LabeledInstance {
    /// One-hot root mark over `num_vertices` vertices.
    pub fn selector(&self, num_vertices: usize) -> FixedBitSet {
        let mut s = FixedBitSet::with_capacity(num_vertices);
        s.insert(self.root);
        s
    }

    pub fn label_set(&self, num_vertices: usize) -> FixedBitSet {
        let mut s = FixedBitSet::with_capacity(num_vertices);
        for &v in &self.labels {
            s.insert(v);
        }
        s
    }
}

fn instance_seed(seed: u64, graph_hash: u64, task: AnalysisTask) -> u64 {
    let mut h = Fnv::new();
    h.write(&seed.to_le_bytes());
    h.write(&graph_hash.to_le_bytes());
    h.write(task.as_str().as_bytes());
    h.finish()
}

/// Label up to `root_count(|V|)` distinct roots drawn uniformly from the
/// task's eligible roots. Roots are returned in ascending order.
pub fn make_instances(graph: &ProgramGraph, task: AnalysisTask, seed: u64) -> Vec<LabeledInstance> {
    make_instances_with(&Analyzer::new(graph), task, seed)
}

pub fn make_instances_with(analyzer: &Analyzer<'_>, task: AnalysisTask, seed: u64) -> Vec<LabeledInstance> {
    let graph = analyzer.graph();
    let eligible = analyzer.eligible_roots(task);
    let k = root_count(graph.num_vertices()).min(eligible.len());
    let hash = graph.content_hash();
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(seed, hash, task));
    let mut roots: Vec<usize> =
        rand::seq::index::sample(&mut rng, eligible.len(), k).into_iter().map(|i| eligible[i]).collect();
    roots.sort_unstable();
    roots
        .into_iter()
        .map(|root| {
            let r = analyzer.run(task, root).expect("eligible roots satisfy every precondition");
            LabeledInstance {
                path: graph.source_path.clone(),
                graph_hash: hash,
                task,
                root,
                labels: r.positives(),
                steps: r.steps,
                split: None,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub vertices: usize,
    pub edges: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
    pub ratios: (u32, u32, u32),
}

impl CorpusManifest {
    pub fn split_of(&self, path: &str) -> Option<Split> {
        self.entries.iter().find(|e| e.path == path).map(|e| e.split)
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        let count = |s| self.entries.iter().filter(|e| e.split == s).count();
        (count(Split::Train), count(Split::Val), count(Split::Test))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("corpus has {found} files; at least 5 are needed for a 3:1:1 split")]
    CorpusTooSmall { found: usize },
}

/// Shuffle files with `seed` and cut 3:1:1. Validation and test each get
/// `n / 5` files rounded to nearest; the remainder goes to training.
pub fn split_corpus(entries: Vec<(String, usize, usize)>, seed: u64) -> Result<CorpusManifest, DatasetError> {
    let n = entries.len();
    if n < 5 {
        return Err(DatasetError::CorpusTooSmall { found: n });
    }
    let mut entries = entries;
    entries.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    entries.shuffle(&mut rng);
    let held = (n + 2) / 5;
    let train = n - 2 * held;
    let entries = entries
        .into_iter()
        .enumerate()
        .map(|(i, (path, vertices, edges))| {
            let split = if i < train {
                Split::Train
            } else if i < train + held {
                Split::Val
            } else {
                Split::Test
            };
            ManifestEntry { path, vertices, edges, split }
        })
        .collect();
    Ok(CorpusManifest { entries, seed, ratios: (3, 1, 1) })
}

/// Split instances into those solvable within `t` steps and the rest.
pub fn filter_by_steps(instances: Vec<LabeledInstance>, t: u32) -> (Vec<LabeledInstance>, Vec<LabeledInstance>) {
    instances.into_iter().partition(|i| i.steps <= t)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExclusionReport {
    pub instances: usize,
    pub excluded_instances: usize,
    pub graphs: usize,
    pub graphs_with_exclusions: usize,
}

impl ExclusionReport {
    pub fn instance_ratio(&self) -> f64 {
        ratio(self.excluded_instances, self.instances)
    }

    pub fn graph_ratio(&self) -> f64 {
        ratio(self.graphs_with_exclusions, self.graphs)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn exclusion_report(kept: &[LabeledInstance], excluded: &[LabeledInstance]) -> ExclusionReport {
    let mut all: Vec<&str> = kept.iter().chain(excluded).map(|i| i.path.as_str()).collect();
    all.sort_unstable();
    all.dedup();
    let mut bad: Vec<&str> = excluded.iter().map(|i| i.path.as_str()).collect();
    bad.sort_unstable();
    bad.dedup();
    ExclusionReport {
        instances: kept.len() + excluded.len(),
        excluded_instances: excluded.len(),
        graphs: all.len(),
        graphs_with_exclusions: bad.len(),
    }
}

/// Vertices whose labels count for a task: instructions, or variables for
/// liveness. Dummy callee vertices are never scored.
pub fn label_mask(graph: &ProgramGraph, task: AnalysisTask) -> FixedBitSet {
    let mut m = FixedBitSet::with_capacity(graph.num_vertices());
    for v in &graph.vertices {
        if v.kind == task.label_kind() && !graph.is_dummy_vertex(v.id) {
            m.insert(v.id);
        }
    }
    m
}

/// Positive labels over eligible vertex labels, or `None` when nothing is
/// eligible.
pub fn class_balance<'a>(items: impl IntoIterator<Item = (&'a LabeledInstance, &'a ProgramGraph)>) -> Option<f64> {
    let (mut pos, mut total) = (0usize, 0usize);
    for (inst, graph) in items {
        let mask = label_mask(graph, inst.task);
        total += mask.count_ones(..);
        pos += inst.labels.iter().filter(|&&v| mask.contains(v)).count();
    }
    if total == 0 {
        None
    } else {
        Some(pos as f64 / total as f64)
    }
}
