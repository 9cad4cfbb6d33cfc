//! Scaled dot-product attention for a single query over a cached context.

use crate::error::{Error, Result};
use crate::math::softmax;

/// One attention evaluation.
///
/// `logit_adjust` is added to the scaled dot-product logits before the
/// softmax (the additive amplification path). `weight_multiplier` scales the
/// softmax weights per position *without renormalization* before the value
/// sum (the recalibration reference path). The returned `weights` are the
/// plain softmax, i.e. what the trace records; multipliers only affect
/// `output`.
pub fn attention_step(
    query: &[f64],
    keys: &[Vec<f64>],
    values: &[Vec<f64>],
    logit_adjust: Option<&[f64]>,
    weight_multiplier: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if keys.is_empty() {
        return Err(Error::EmptyContext);
    }
    if keys.len() != values.len() {
        return Err(Error::Shape(format!(
            "{} keys vs {} values",
            keys.len(),
            values.len()
        )));
    }
    for opt in [logit_adjust, weight_multiplier].into_iter().flatten() {
        if opt.len() != keys.len() {
            return Err(Error::Shape(format!(
                "adjuster length {} vs context length {}",
                opt.len(),
                keys.len()
            )));
        }
    }
    let d = query.len();
    let scale = 1.0 / (d as f64).sqrt();
    let mut logits = Vec::with_capacity(keys.len());
    for (j, k) in keys.iter().enumerate() {
        if k.len() != d {
            return Err(Error::Shape(format!(
                "key {j} has dimension {}, query has {d}",
                k.len()
            )));
        }
        let dot: f64 = query.iter().zip(k.iter()).map(|(a, b)| a * b).sum();
        let mut logit = dot * scale;
        if let Some(adj) = logit_adjust {
            logit += adj[j];
        }
        logits.push(logit);
    }
    let weights = softmax(&logits);

    let mut output = vec![0.0; values[0].len()];
    for (j, v) in values.iter().enumerate() {
        let m = weight_multiplier.map_or(1.0, |mult| mult[j]);
        let w = m * weights[j];
        for (o, &vv) in output.iter_mut().zip(v.iter()) {
            *o += w * vv;
        }
    }
    Ok((weights, output))
}

/// Raw scaled dot-product logits for a query over keys, before any
/// adjustment. Exposed for instrumentation.
pub fn attention_logits(query: &[f64], keys: &[Vec<f64>]) -> Vec<f64> {
    let scale = 1.0 / (query.len() as f64).sqrt();
    keys.iter()
        .map(|k| query.iter().zip(k.iter()).map(|(a, b)| a * b).sum::<f64>() * scale)
        .collect()
}
