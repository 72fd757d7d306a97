use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError, SELECTOR_DIM};

/// Number of typed message matrices: three flows, two directions.
pub const EDGE_TYPES: usize = 6;

/// Offsets of every parameter group inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub embedding: Range<usize>,
    /// Six stacked hidden×hidden blocks indexed by `2 * flow + direction`,
    /// backward direction = 1.
    pub message: Range<usize>,
    /// hidden × 3·hidden, columns ordered update | reset | candidate.
    pub gru_w: Range<usize>,
    pub gru_u: Range<usize>,
    pub gru_b: Range<usize>,
    pub i1_w: Range<usize>,
    pub i1_b: Range<usize>,
    pub i2_w: Range<usize>,
    pub i2_b: Range<usize>,
    pub j1_w: Range<usize>,
    pub j1_b: Range<usize>,
    pub j2_w: Range<usize>,
    pub j2_b: Range<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(vocab_size: usize, embed_dim: usize) -> Self {
        let h = embed_dim + SELECTOR_DIM;
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let embedding = take(vocab_size * embed_dim);
        let message = take(EDGE_TYPES * h * h);
        let gru_w = take(h * 3 * h);
        let gru_u = take(h * 3 * h);
        let gru_b = take(3 * h);
        let i1_w = take(2 * h * h);
        let i1_b = take(h);
        let i2_w = take(h * 2);
        let i2_b = take(2);
        let j1_w = take(h * h);
        let j1_b = take(h);
        let j2_w = take(h * 2);
        let j2_b = take(2);
        Layout {
            vocab_size,
            embed_dim,
            hidden: h,
            embedding,
            message,
            gru_w,
            gru_u,
            gru_b,
            i1_w,
            i1_b,
            i2_w,
            i2_b,
            j1_w,
            j1_b,
            j2_w,
            j2_b,
            total: at,
        }
    }

    pub fn message_block(&self, k: usize) -> Range<usize> {
        let s = self.hidden * self.hidden;
        self.message.start + k * s..self.message.start + (k + 1) * s
    }

    /// Named groups in storage order.
    pub fn groups(&self) -> Vec<(String, Range<usize>)> {
        let mut g = vec![(String::from("embedding"), self.embedding.clone())];
        const EDGE: [&str; EDGE_TYPES] =
            ["control_fwd", "control_bwd", "data_fwd", "data_bwd", "call_fwd", "call_bwd"];
        for (k, name) in EDGE.iter().enumerate() {
            g.push((alloc::format!("message_{name}"), self.message_block(k)));
        }
        for (name, r) in [
            ("gru_w", &self.gru_w),
            ("gru_u", &self.gru_u),
            ("gru_b", &self.gru_b),
            ("readout_i1_w", &self.i1_w),
            ("readout_i1_b", &self.i1_b),
            ("readout_i2_w", &self.i2_w),
            ("readout_i2_b", &self.i2_b),
            ("readout_j1_w", &self.j1_w),
            ("readout_j1_b", &self.j1_b),
            ("readout_j2_w", &self.j2_w),
            ("readout_j2_b", &self.j2_b),
        ] {
            g.push((String::from(name), r.clone()));
        }
        g
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "ParamsRecord", into = "ParamsRecord"))]
pub struct ModelParameters {
    layout: Layout,
    pub data: Vec<f64>,
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct ParamsRecord {
    vocab_size: usize,
    embed_dim: usize,
    data: Vec<f64>,
}

#[cfg(feature = "serde")]
impl TryFrom<ParamsRecord> for ModelParameters {
    type Error = ModelError;

    fn try_from(r: ParamsRecord) -> Result<Self, ModelError> {
        ModelParameters::from_data(r.vocab_size, r.embed_dim, r.data)
    }
}

#[cfg(feature = "serde")]
impl From<ModelParameters> for ParamsRecord {
    fn from(p: ModelParameters) -> Self {
        ParamsRecord { vocab_size: p.layout.vocab_size, embed_dim: p.layout.embed_dim, data: p.data }
    }
}

impl ModelParameters {
    pub fn zeros(vocab_size: usize, embed_dim: usize) -> Self {
        let layout = Layout::new(vocab_size, embed_dim);
        let data = vec![0.0; layout.total];
        ModelParameters { layout, data }
    }

    pub fn from_data(vocab_size: usize, embed_dim: usize, data: Vec<f64>) -> Result<Self, ModelError> {
        let layout = Layout::new(vocab_size, embed_dim);
        if data.len() != layout.total {
            return Err(ModelError::Shape(alloc::format!(
                "expected {} parameters for vocab {vocab_size} and d {embed_dim}, found {}",
                layout.total,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::Shape(String::from("parameters contain non-finite values")));
        }
        Ok(ModelParameters { layout, data })
    }

    /// Uniform embeddings with unit variance, Glorot-uniform matrices, zero biases.
    pub fn init(vocab_size: usize, config: &ModelConfig) -> Self {
        let mut p = Self::zeros(vocab_size, config.embed_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let l = p.layout.clone();
        let h = l.hidden;
        let s3 = libm::sqrt(3.0);
        let mut fill = |data: &mut [f64], r: &Range<usize>, limit: f64| {
            let u = Uniform::new_inclusive(-limit, limit);
            for x in &mut data[r.clone()] {
                *x = u.sample(&mut rng);
            }
        };
        let glorot = |fan_in: usize, fan_out: usize| libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        fill(&mut p.data, &l.embedding, s3);
        fill(&mut p.data, &l.message, glorot(h, h));
        fill(&mut p.data, &l.gru_w, glorot(h, h));
        fill(&mut p.data, &l.gru_u, glorot(h, h));
        fill(&mut p.data, &l.i1_w, glorot(2 * h, h));
        fill(&mut p.data, &l.i2_w, glorot(h, 2));
        fill(&mut p.data, &l.j1_w, glorot(h, h));
        fill(&mut p.data, &l.j2_w, glorot(h, 2));
        p
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn vocab_size(&self) -> usize {
        self.layout.vocab_size
    }

    pub fn embed_dim(&self) -> usize {
        self.layout.embed_dim
    }

    pub fn hidden(&self) -> usize {
        self.layout.hidden
    }

    pub fn slice(&self, r: &Range<usize>) -> &[f64] {
        &self.data[r.clone()]
    }

    pub fn embedding_row(&self, token: usize) -> &[f64] {
        let d = self.layout.embed_dim;
        let start = self.layout.embedding.start + token * d;
        &self.data[start..start + d]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
