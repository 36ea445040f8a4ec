use super::StaticEmbeddings;
use crate::error::{Error, Result};

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let mut dot = 0.0f64;
    let mut nu = 0.0f64;
    let mut nv = 0.0f64;
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Mean of the in-vocabulary token vectors; zero vector if there are none.
pub fn avg_embedding(tokens: &[String], table: &StaticEmbeddings) -> Vec<f32> {
    let mut acc = vec![0.0f64; table.dim()];
    let mut n = 0usize;
    for t in tokens {
        if let Some(v) = table.vector(t) {
            for (a, &x) in acc.iter_mut().zip(v) {
                *a += x as f64;
            }
            n += 1;
        }
    }
    if n == 0 {
        return vec![0.0; table.dim()];
    }
    acc.into_iter().map(|a| (a / n as f64) as f32).collect()
}
