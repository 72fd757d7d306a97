//! Adam, mini-batch training with validation checkpoints, and metrics.

use alloc::vec;
use alloc::vec::Vec;

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batch::{Batch, EncodedGraph};
use super::net::{loss_and_grads, predict};
use super::params::ModelParameters;
use super::{ModelConfig, ModelError};

/// One labelled instance over a shared encoded graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub graph: usize,
    pub root: usize,
    pub labels: FixedBitSet,
    pub scored: FixedBitSet,
}

#[derive(Clone, Copy, Debug)]
pub struct TrainingData<'a> {
    pub graphs: &'a [EncodedGraph],
    pub train: &'a [Example],
    pub val: &'a [Example],
}

/// Greedy packing in the given order; a batch is closed once the next
/// instance would push it past `batch_vertices`.
pub fn pack_batches(graphs: &[EncodedGraph], examples: &[Example], order: &[usize], batch_vertices: usize) -> Vec<Batch> {
    let mut out = Vec::new();
    let mut cur = Batch::new();
    for &i in order {
        let ex = &examples[i];
        let g = &graphs[ex.graph];
        if cur.num_graphs() > 0 && cur.num_vertices() + g.num_vertices() > batch_vertices {
            out.push(core::mem::take(&mut cur));
        }
        cur.push(g, Some(ex.root), Some(&ex.labels), Some(&ex.scored));
    }
    if cur.num_graphs() > 0 {
        out.push(cur);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], config: &ModelConfig) {
        self.t += 1;
        let (b1, b2) = (config.beta1, config.beta2);
        let c1 = 1.0 - libm::pow(b1, self.t as f64);
        let c2 = 1.0 - libm::pow(b2, self.t as f64);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g;
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g;
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= config.learning_rate * mh / (libm::sqrt(vh) + config.epsilon);
        }
    }
}

/// Positive-class metrics over scored vertices. Confusion entries are also
/// given as fractions of all scored predictions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// A ratio had a zero denominator and was reported as 0.
    pub undefined: bool,
}

impl Metrics {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let mut undefined = false;
        let mut div = |a: u64, b: u64| {
            if b == 0 {
                undefined = true;
                0.0
            } else {
                a as f64 / b as f64
            }
        };
        let precision = div(tp, tp + fp);
        let recall = div(tp, tp + fn_);
        let accuracy = div(tp + tn, tp + fp + tn + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            undefined = true;
            0.0
        };
        Metrics { tp, fp, tn, fn_, precision, recall, f1, accuracy, undefined }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `[tn, fp, fn, tp]` as fractions of all predictions.
    pub fn confusion_ratios(&self) -> [f64; 4] {
        let t = self.total().max(1) as f64;
        [self.tn as f64 / t, self.fp as f64 / t, self.fn_ as f64 / t, self.tp as f64 / t]
    }
}

/// Count predictions on scored vertices; positive when score 1 beats score 0.
pub fn count_predictions(batch: &Batch, scores: &[f64], counts: &mut [u64; 4]) {
    for v in 0..batch.num_vertices() {
        if !batch.scored[v] {
            continue;
        }
        let pred = scores[2 * v + 1] > scores[2 * v];
        let idx = match (pred, batch.labels[v]) {
            (true, true) => 0,
            (true, false) => 1,
            (false, false) => 2,
            (false, true) => 3,
        };
        counts[idx] += 1;
    }
}

pub fn evaluate(
    graphs: &[EncodedGraph],
    examples: &[Example],
    params: &ModelParameters,
    config: &ModelConfig,
) -> Result<Metrics, ModelError> {
    let order: Vec<usize> = (0..examples.len()).collect();
    let mut counts = [0u64; 4];
    for b in pack_batches(graphs, examples, &order, config.batch_vertices) {
        let scores = predict(&b, params, config)?;
        count_predictions(&b, &scores, &mut counts);
    }
    Ok(Metrics::from_counts(counts[0], counts[1], counts[2], counts[3]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointRecord {
    pub checkpoint: usize,
    pub graphs_seen: usize,
    /// Mean training batch loss since the previous checkpoint.
    pub loss: f64,
    pub val: Metrics,
    pub best: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the checkpoint with the highest validation F1.
    pub params: ModelParameters,
    pub log: Vec<CheckpointRecord>,
    pub best_checkpoint: usize,
    pub stopped_early: bool,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training diverged after {graphs_seen} graphs (checkpoint {checkpoint})")]
    NonFiniteLoss { checkpoint: usize, graphs_seen: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no training instances")]
    EmptyTrain,
}

/// Adam over shuffled mini-batches, validating every `checkpoint_every`
/// training instances. `observer` sees each checkpoint (with the current
/// parameters) and may stop training.
pub fn train(
    data: TrainingData<'_>,
    vocab_size: usize,
    config: &ModelConfig,
    mut observer: impl FnMut(&CheckpointRecord, &ModelParameters) -> Control,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let mut params = ModelParameters::init(vocab_size, config);
    let mut adam = Adam::new(params.data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut log: Vec<CheckpointRecord> = Vec::new();
    let mut best: Option<(f64, usize, ModelParameters)> = None;
    let (mut seen, mut since, mut loss_sum, mut loss_batches) = (0usize, 0usize, 0.0, 0usize);
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    let mut checkpoint = |params: &ModelParameters,
                          seen: usize,
                          loss: f64,
                          log: &mut Vec<CheckpointRecord>,
                          best: &mut Option<(f64, usize, ModelParameters)>|
     -> Result<Control, TrainError> {
        let val = evaluate(data.graphs, data.val, params, config)?;
        let index = log.len();
        let is_best = best.as_ref().is_none_or(|(f1, _, _)| val.f1 > *f1);
        if is_best {
            *best = Some((val.f1, index, params.clone()));
        }
        let rec = CheckpointRecord { checkpoint: index, graphs_seen: seen, loss, val, best: is_best };
        let c = observer(&rec, params);
        log.push(rec);
        Ok(c)
    };

    'outer: while seen < config.max_train_graphs {
        order.shuffle(&mut rng);
        let take = order.len().min(config.max_epoch_graphs).min(config.max_train_graphs - seen);
        for b in pack_batches(data.graphs, data.train, &order[..take], config.batch_vertices) {
            let (l, g) = match loss_and_grads(&b, &params, config) {
                Ok(x) => x,
                Err(ModelError::NonFiniteLoss) => {
                    return Err(TrainError::NonFiniteLoss { checkpoint: log.len(), graphs_seen: seen })
                }
                Err(e) => return Err(e.into()),
            };
            adam.step(&mut params.data, &g, config);
            if !params.is_finite() {
                return Err(TrainError::NonFiniteLoss { checkpoint: log.len(), graphs_seen: seen });
            }
            seen += b.num_graphs();
            since += b.num_graphs();
            loss_sum += l;
            loss_batches += 1;
            if since >= config.checkpoint_every {
                since = 0;
                let mean = loss_sum / loss_batches as f64;
                (loss_sum, loss_batches) = (0.0, 0);
                if checkpoint(&params, seen, mean, &mut log, &mut best)? == Control::Stop {
                    stopped_early = true;
                    break 'outer;
                }
            }
        }
    }
    if since > 0 && !stopped_early {
        let mean = loss_sum / loss_batches.max(1) as f64;
        checkpoint(&params, seen, mean, &mut log, &mut best)?;
    }
    let (_, best_checkpoint, params) = best.expect("at least one checkpoint ran");
    Ok(TrainOutcome { params, log, best_checkpoint, stopped_early })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_edge_cases() {
        let m = Metrics::from_counts(5, 0, 7, 0);
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (1.0, 1.0, 1.0, 1.0));
        assert!(!m.undefined);
        let m = Metrics::from_counts(0, 0, 9, 1);
        assert_eq!((m.recall, m.f1), (0.0, 0.0));
        assert!(m.undefined);
        assert_eq!(m.confusion_ratios(), [0.9, 0.0, 0.1, 0.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let c = ModelConfig::default();
        let mut p = vec![1.0, -1.0];
        let mut a = Adam::new(2);
        a.step(&mut p, &[0.5, -3.0], &c);
        assert!((p[0] - (1.0 - 0.001)).abs() < 1e-9);
        assert!((p[1] - (-1.0 + 0.001)).abs() < 1e-9);
    }
}
