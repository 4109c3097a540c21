//! Skip-gram embeddings of assets learned from per-user interaction sequences.
//!
//! Each user's sequence plays the role of a sentence. For a center asset at
//! position `t`, every asset at `t + j` with `0 < |j| <= window` (truncated at
//! the sequence ends) is a context, and
//!
//! ```text
//! p(context | center) = exp(u_context · v_center) / Σ_k exp(u_k · v_center)
//! J = -(1/T) Σ_t Σ_j log p(w_{t+j} | w_t)
//! ```
//!
//! where `v` are the input vectors (the exported representation), `u` the
//! context vectors, and `T` the number of center positions.

mod objective;
mod query;
mod train;

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::event_log::AssetSequence;
use crate::matrix::Matrix;
use crate::vectors::AssetVectors;

pub use objective::{skipgram_gradient, skipgram_loss, softmax_prob, SkipGramGradient};
pub use query::{cosine_similarity, nearest_neighbors, partner_query, Neighbor};
pub use train::{initial_embeddings, train_embeddings, train_skipgram, SkipGramModel};

/// Asset ids in ascending order with their occurrence counts in the sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetVocabulary {
    asset_ids: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
}

impl AssetVocabulary {
    pub fn build(sequences: &[AssetSequence]) -> Result<Self> {
        let mut tally: BTreeMap<&str, u64> = BTreeMap::new();
        for asset in sequences.iter().flat_map(|s| s.assets.iter()) {
            *tally.entry(asset.as_str()).or_default() += 1;
        }
        if tally.is_empty() {
            return Err(Error::invalid("no assets in any sequence"));
        }
        let (asset_ids, counts): (Vec<String>, Vec<u64>) =
            tally.into_iter().map(|(a, c)| (a.to_string(), c)).unzip();
        let index = asset_ids
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        Ok(Self {
            asset_ids,
            index,
            counts,
        })
    }

    pub fn len(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.asset_ids.is_empty()
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn index_of(&self, asset_id: &str) -> Option<usize> {
        self.index.get(asset_id).copied()
    }

    pub fn count_of(&self, asset_id: &str) -> Option<u64> {
        self.index_of(asset_id).map(|i| self.counts[i])
    }

    /// Maps sequences to vocabulary indices.
    pub fn encode(&self, sequences: &[AssetSequence]) -> Result<Vec<Vec<usize>>> {
        sequences
            .iter()
            .map(|s| {
                s.assets
                    .iter()
                    .map(|a| {
                        self.index_of(a).ok_or_else(|| {
                            Error::invalid(format!("asset {a:?} is not in the vocabulary"))
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn build_vocab(sequences: &[AssetSequence]) -> Result<AssetVocabulary> {
    AssetVocabulary::build(sequences)
}

/// Input (`v`) and context (`u`) vectors, one row per vocabulary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    input: Matrix,
    context: Matrix,
}

impl EmbeddingMatrix {
    pub fn new(input: Matrix, context: Matrix) -> Result<Self> {
        if input.rows() != context.rows() || input.cols() != context.cols() {
            return Err(Error::invalid(format!(
                "input {}x{} and context {}x{} shapes differ",
                input.rows(),
                input.cols(),
                context.rows(),
                context.cols()
            )));
        }
        if input.cols() == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        if !input.is_finite() || !context.is_finite() {
            return Err(Error::numerical("embedding contains non-finite entries"));
        }
        Ok(Self { input, context })
    }

    pub fn dim(&self) -> usize {
        self.input.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.input.rows()
    }

    pub fn input(&self) -> &Matrix {
        &self.input
    }

    pub fn context(&self) -> &Matrix {
        &self.context
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Matrix, &mut Matrix) {
        (&mut self.input, &mut self.context)
    }

    /// Input vectors labelled with vocabulary ids.
    pub fn to_asset_vectors(&self, vocab: &AssetVocabulary) -> Result<AssetVectors> {
        AssetVectors::new(vocab.asset_ids().to_vec(), self.input.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Exact softmax over the whole vocabulary.
    FullSoftmax,
    /// Logistic loss against `negatives` draws from the unigram^0.75 distribution.
    NegativeSampling { negatives: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    /// Context positions on each side of the center.
    pub window: usize,
    pub epochs: usize,
    /// Initial SGD step; decays linearly to `learning_rate * 1e-4`.
    pub learning_rate: f64,
    pub objective: Objective,
    pub seed: u64,
    /// Evaluate the exact loss after every epoch (full softmax cost per epoch).
    pub track_loss: bool,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 50,
            window: 3,
            epochs: 5,
            learning_rate: 0.025,
            objective: Objective::FullSoftmax,
            seed: 0,
            track_loss: false,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(Error::config("dim must be at least 1"));
        }
        if self.window < 1 {
            return Err(Error::config("window must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if let Objective::NegativeSampling { negatives } = self.objective {
            if negatives < 1 {
                return Err(Error::config("negative sampling needs at least one negative"));
            }
        }
        Ok(())
    }
}

/// Iterates the context indices of position `t` in `seq`.
#[inline]
pub(crate) fn contexts(seq: &[usize], t: usize, window: usize) -> impl Iterator<Item = usize> + '_ {
    let lo = t.saturating_sub(window);
    let hi = (t + window).min(seq.len().saturating_sub(1));
    (lo..=hi).filter(move |&j| j != t).map(move |j| seq[j])
}
