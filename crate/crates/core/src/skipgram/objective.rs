use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

use super::{contexts, EmbeddingMatrix};

/// Scores `u_k · v_center` for every k, then the log-sum-exp of those scores.
fn scores_and_lse(emb: &EmbeddingMatrix, center: usize, scores: &mut Vec<f64>) -> f64 {
    let v = emb.input().row(center);
    scores.clear();
    scores.extend(emb.context().iter_rows().map(|u| dot(u, v)));
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    max + sum.ln()
}

fn check_index(emb: &EmbeddingMatrix, i: usize) -> Result<()> {
    if i >= emb.vocab_size() {
        return Err(Error::invalid(format!(
            "index {i} out of range for vocabulary of {}",
            emb.vocab_size()
        )));
    }
    Ok(())
}

/// Softmax probability of `context_index` given `center_index`, computed with
/// max-subtraction.
pub fn softmax_prob(center_index: usize, context_index: usize, emb: &EmbeddingMatrix) -> Result<f64> {
    check_index(emb, center_index)?;
    check_index(emb, context_index)?;
    if !emb.input().row(center_index).iter().all(|x| x.is_finite()) || !emb.context().is_finite() {
        return Err(Error::numerical("non-finite embedding entries"));
    }
    let mut scores = Vec::with_capacity(emb.vocab_size());
    let lse = scores_and_lse(emb, center_index, &mut scores);
    Ok((scores[context_index] - lse).exp())
}

fn check_sequences(sequences: &[Vec<usize>], emb: &EmbeddingMatrix) -> Result<usize> {
    let mut positions = 0;
    for s in sequences {
        for &i in s {
            check_index(emb, i)?;
        }
        positions += s.len();
    }
    if positions == 0 {
        return Err(Error::invalid("no center positions in the sequences"));
    }
    Ok(positions)
}

/// Average negative log-likelihood over center positions.
pub fn skipgram_loss(sequences: &[Vec<usize>], emb: &EmbeddingMatrix, window: usize) -> Result<f64> {
    let positions = check_sequences(sequences, emb)?;
    let mut scores = Vec::with_capacity(emb.vocab_size());
    let mut total = 0.0;
    for seq in sequences {
        for t in 0..seq.len() {
            let mut ctx = contexts(seq, t, window).peekable();
            if ctx.peek().is_none() {
                continue;
            }
            let lse = scores_and_lse(emb, seq[t], &mut scores);
            for c in ctx {
                let logp = scores[c] - lse;
                if !logp.is_finite() || logp.exp() == 0.0 {
                    return Err(Error::numerical(format!(
                        "probability underflow at center position {t} (log p = {logp})"
                    )));
                }
                total -= logp;
            }
        }
    }
    Ok(total / positions as f64)
}

/// Loss and its exact gradient with respect to both matrices.
#[derive(Debug, Clone)]
pub struct SkipGramGradient {
    pub loss: f64,
    pub input: Matrix,
    pub context: Matrix,
}

pub fn skipgram_gradient(
    sequences: &[Vec<usize>],
    emb: &EmbeddingMatrix,
    window: usize,
) -> Result<SkipGramGradient> {
    let positions = check_sequences(sequences, emb)?;
    let (w, d) = (emb.vocab_size(), emb.dim());
    let scale = 1.0 / positions as f64;
    let mut g_in = Matrix::zeros(w, d);
    let mut g_ctx = Matrix::zeros(w, d);
    let mut scores = Vec::with_capacity(w);
    let mut coef = vec![0.0; w];
    let mut loss = 0.0;
    for seq in sequences {
        for t in 0..seq.len() {
            let center = seq[t];
            let ctx: Vec<usize> = contexts(seq, t, window).collect();
            if ctx.is_empty() {
                continue;
            }
            let lse = scores_and_lse(emb, center, &mut scores);
            let m = ctx.len() as f64;
            for (k, s) in scores.iter().enumerate() {
                coef[k] = m * (s - lse).exp();
            }
            for &c in &ctx {
                coef[c] -= 1.0;
                loss -= scores[c] - lse;
            }
            // dJ/du_k = coef_k v ; dJ/dv = Σ_k coef_k u_k
            let v = emb.input().row(center);
            for k in 0..w {
                let a = coef[k] * scale;
                let gk = g_ctx.row_mut(k);
                for (g, x) in gk.iter_mut().zip(v) {
                    *g += a * x;
                }
            }
            let gv = g_in.row_mut(center);
            for (k, u) in emb.context().iter_rows().enumerate() {
                let a = coef[k] * scale;
                for (g, x) in gv.iter_mut().zip(u) {
                    *g += a * x;
                }
            }
        }
    }
    Ok(SkipGramGradient {
        loss: loss * scale,
        input: g_in,
        context: g_ctx,
    })
}
