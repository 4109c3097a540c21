use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::event_log::AssetSequence;
use crate::matrix::{dot, Matrix};
use crate::vectors::AssetVectors;

use super::{contexts, skipgram_loss, AssetVocabulary, EmbeddingMatrix, Objective, SkipGramConfig};

const MIN_LR_RATIO: f64 = 1e-4;
const UNIGRAM_POWER: f64 = 0.75;

/// A trained model: vocabulary, both vector matrices and optional per-epoch losses.
#[derive(Debug, Clone)]
pub struct SkipGramModel {
    pub vocab: AssetVocabulary,
    pub embeddings: EmbeddingMatrix,
    /// Exact loss after each epoch, filled only when `track_loss` is set.
    pub epoch_losses: Vec<f64>,
}

impl SkipGramModel {
    /// The exported representation (input vectors).
    pub fn asset_vectors(&self) -> Result<AssetVectors> {
        self.embeddings.to_asset_vectors(&self.vocab)
    }
}

/// Input vectors uniform in `[-0.5/d, 0.5/d]`, context vectors zero.
pub fn initial_embeddings(vocab_size: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.5 / dim as f64;
    let data = (0..vocab_size * dim)
        .map(|_| rng.random_range(-half..=half))
        .collect();
    EmbeddingMatrix::new(
        Matrix::from_vec(vocab_size, dim, data).expect("shape"),
        Matrix::zeros(vocab_size, dim),
    )
    .expect("finite init")
}

pub fn train_skipgram(sequences: &[AssetSequence], config: &SkipGramConfig) -> Result<SkipGramModel> {
    config.validate()?;
    let vocab = AssetVocabulary::build(sequences)?;
    let encoded = vocab.encode(sequences)?;
    let init = initial_embeddings(vocab.len(), config.dim, config.seed);
    let (embeddings, epoch_losses) = train_embeddings(&encoded, vocab.counts(), init, config)?;
    Ok(SkipGramModel {
        vocab,
        embeddings,
        epoch_losses,
    })
}

/// Runs SGD from explicit initial vectors over index-encoded sequences.
///
/// `counts` are vocabulary occurrence counts, used only for the negative
/// sampling noise distribution. Returns the trained matrices and the exact
/// per-epoch losses when `config.track_loss` is set.
pub fn train_embeddings(
    sequences: &[Vec<usize>],
    counts: &[u64],
    init: EmbeddingMatrix,
    config: &SkipGramConfig,
) -> Result<(EmbeddingMatrix, Vec<f64>)> {
    config.validate()?;
    if init.dim() != config.dim {
        return Err(Error::config(format!(
            "initial embeddings have dim {}, config asks for {}",
            init.dim(),
            config.dim
        )));
    }
    if counts.len() != init.vocab_size() {
        return Err(Error::invalid("counts length differs from vocabulary size"));
    }
    if sequences.iter().flatten().any(|&i| i >= init.vocab_size()) {
        return Err(Error::invalid("sequence index outside the vocabulary"));
    }
    let positions: usize = sequences.iter().map(Vec::len).sum();
    if positions == 0 {
        return Err(Error::invalid("no positions to train on"));
    }

    let mut emb = init;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let noise = match config.objective {
        Objective::NegativeSampling { .. } => Some(NoiseTable::new(counts)),
        Objective::FullSoftmax => None,
    };
    let total_steps = (config.epochs * positions).max(1) as f64;
    let mut step = 0usize;
    let mut losses = Vec::new();
    let mut scratch = Scratch::new(emb.vocab_size(), emb.dim());

    for epoch in 0..config.epochs {
        for seq in sequences {
            for t in 0..seq.len() {
                let lr = config.learning_rate * (1.0 - step as f64 / total_steps).max(MIN_LR_RATIO);
                step += 1;
                scratch.ctx.clear();
                scratch.ctx.extend(contexts(seq, t, config.window));
                if scratch.ctx.is_empty() {
                    continue;
                }
                let ok = match (&config.objective, &noise) {
                    (Objective::NegativeSampling { negatives }, Some(table)) => {
                        negative_step(&mut emb, seq[t], *negatives, table, lr, &mut rng, &mut scratch)
                    }
                    _ => softmax_step(&mut emb, seq[t], lr, &mut scratch),
                };
                if !ok {
                    return Err(Error::numerical(format!(
                        "non-finite embedding at epoch {epoch}, step {step}"
                    )));
                }
            }
        }
        if config.track_loss {
            losses.push(skipgram_loss(sequences, &emb, config.window)?);
        }
    }
    Ok((emb, losses))
}

struct Scratch {
    ctx: Vec<usize>,
    scores: Vec<f64>,
    grad: Vec<f64>,
    center: Vec<f64>,
}

impl Scratch {
    fn new(w: usize, d: usize) -> Self {
        Self {
            ctx: Vec::new(),
            scores: vec![0.0; w],
            grad: vec![0.0; d],
            center: vec![0.0; d],
        }
    }
}

/// One exact-gradient step on the terms of a single center position.
fn softmax_step(emb: &mut EmbeddingMatrix, center: usize, lr: f64, s: &mut Scratch) -> bool {
    let (input, context) = emb.parts_mut();
    s.center.copy_from_slice(input.row(center));
    let v = &s.center;

    let mut max = f64::NEG_INFINITY;
    for (k, u) in context.iter_rows().enumerate() {
        let score = dot(u, v);
        s.scores[k] = score;
        max = max.max(score);
    }
    let mut z = 0.0;
    for score in s.scores.iter_mut() {
        *score = (*score - max).exp();
        z += *score;
    }
    let m = s.ctx.len() as f64;
    // scores now hold coefficients m p_k - count_k
    for score in s.scores.iter_mut() {
        *score *= m / z;
    }
    for &c in &s.ctx {
        s.scores[c] -= 1.0;
    }

    s.grad.iter_mut().for_each(|g| *g = 0.0);
    let mut finite = true;
    let w = context.rows();
    for k in 0..w {
        let coef = s.scores[k];
        let u = context.row_mut(k);
        for ((g, x), vi) in s.grad.iter_mut().zip(u.iter_mut()).zip(v) {
            *g += coef * *x;
            *x -= lr * coef * vi;
        }
        finite &= u.iter().all(|x| x.is_finite());
    }
    let row = input.row_mut(center);
    for (x, g) in row.iter_mut().zip(&s.grad) {
        *x -= lr * g;
    }
    finite && row.iter().all(|x| x.is_finite())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn negative_step(
    emb: &mut EmbeddingMatrix,
    center: usize,
    negatives: usize,
    noise: &NoiseTable,
    lr: f64,
    rng: &mut ChaCha8Rng,
    s: &mut Scratch,
) -> bool {
    let (input, context) = emb.parts_mut();
    let mut finite = true;
    for ci in 0..s.ctx.len() {
        let target = s.ctx[ci];
        s.center.copy_from_slice(input.row(center));
        s.grad.iter_mut().for_each(|g| *g = 0.0);
        for n in 0..=negatives {
            let (k, label) = if n == 0 {
                (target, 1.0)
            } else {
                let k = noise.sample(rng);
                if k == target {
                    continue;
                }
                (k, 0.0)
            };
            let u = context.row_mut(k);
            let g = lr * (label - sigmoid(dot(u, &s.center)));
            for ((acc, x), vi) in s.grad.iter_mut().zip(u.iter_mut()).zip(&s.center) {
                *acc += g * *x;
                *x += g * vi;
            }
            finite &= u.iter().all(|x| x.is_finite());
        }
        let row = input.row_mut(center);
        for (x, g) in row.iter_mut().zip(&s.grad) {
            *x += g;
        }
        finite &= row.iter().all(|x| x.is_finite());
    }
    finite
}

/// Cumulative unigram^0.75 distribution for drawing negatives.
struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(UNIGRAM_POWER);
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let x = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= x)
            .min(self.cumulative.len() - 1)
    }
}
