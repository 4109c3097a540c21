use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, norm};
use crate::vectors::AssetVectors;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub asset_id: String,
    pub similarity: f64,
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid(format!(
            "vector lengths differ: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Ranks rows by cosine to `query`, skipping excluded rows and zero vectors.
/// Ties are broken by row order.
fn rank(query: &[f64], vectors: &AssetVectors, exclude: &[usize], k: usize) -> Result<Vec<Neighbor>> {
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(vectors.len());
    for (i, row) in vectors.matrix().iter_rows().enumerate() {
        if exclude.contains(&i) || norm(row) == 0.0 {
            continue;
        }
        scored.push((i, cosine_similarity(query, row)?));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(i, similarity)| Neighbor {
            asset_id: vectors.asset_ids()[i].clone(),
            similarity,
        })
        .collect())
}

fn lookup(vectors: &AssetVectors, asset_id: &str) -> Result<usize> {
    vectors
        .index_of(asset_id)
        .ok_or_else(|| Error::invalid(format!("asset {asset_id:?} is not in the vector table")))
}

/// The `k` assets most cosine-similar to `asset_id`, excluding itself.
pub fn nearest_neighbors(asset_id: &str, vectors: &AssetVectors, k: usize) -> Result<Vec<Neighbor>> {
    let i = lookup(vectors, asset_id)?;
    rank(vectors.matrix().row(i), vectors, &[i], k)
}

/// Assets whose vectors best complete `v_a1 + v_partner = v_beacon`, i.e. the
/// nearest (cosine) rows to `v_beacon - v_a1`, excluding both inputs.
pub fn partner_query(a1: &str, beacon: &str, vectors: &AssetVectors, k: usize) -> Result<Vec<Neighbor>> {
    let i = lookup(vectors, a1)?;
    let b = lookup(vectors, beacon)?;
    let target: Vec<f64> = vectors
        .matrix()
        .row(b)
        .iter()
        .zip(vectors.matrix().row(i))
        .map(|(vb, va)| vb - va)
        .collect();
    if target.iter().all(|&x| x == 0.0) {
        return Err(Error::invalid(format!(
            "beacon {beacon:?} and {a1:?} have identical vectors; no partner direction"
        )));
    }
    rank(&target, vectors, &[i, b], k)
}
