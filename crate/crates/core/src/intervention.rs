//! The selective progressive recalibration state machine, plus the additive
//! amplification baseline.
//!
//! Per generation step the decoder hands this module the head-averaged
//! attention row observed at the selection layer. The state tracks an EMA of
//! the image-token slice, scores each image token by its relative jump over
//! that trend, thresholds the scores into a selection set, and accumulates
//! per-token selection counts. The counts drive either cached-value scaling
//! (fast path) or explicit post-softmax weight multipliers (reference path).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv_cache::KVCache;
use crate::layout::SequenceLayout;

/// Default denominator floor for the relative score.
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Recalibration hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparcConfig {
    /// Value scale factor applied once per selection. Must be > 0; > 1
    /// amplifies.
    pub alpha: f64,
    /// EMA smoothing factor in [0, 1]; weight on the historical trend.
    pub beta: f64,
    /// Selection threshold on the relative activation score (strict).
    pub tau: f64,
    /// Layer whose head-averaged attention drives selection.
    pub select_layer: usize,
    /// Denominator floor for the relative score.
    pub epsilon: f64,
    /// When set, a step whose selection set is nonempty is re-evaluated so
    /// the new selections already influence that step's own output. The
    /// default keeps selections effective from the following step only.
    pub rescore_current_step: bool,
}

impl Default for SparcConfig {
    fn default() -> Self {
        Self {
            alpha: 1.1,
            beta: 0.1,
            tau: 1.5,
            select_layer: 2,
            epsilon: DEFAULT_EPSILON,
            rescore_current_step: false,
        }
    }
}

impl SparcConfig {
    pub fn validate(&self, num_layers: usize) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Value(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Value(format!("beta must be in [0, 1], got {}", self.beta)));
        }
        if !self.tau.is_finite() {
            return Err(Error::Value("tau must be finite".into()));
        }
        if self.select_layer >= num_layers {
            return Err(Error::Range(format!(
                "select_layer {} out of range for {} layers",
                self.select_layer, num_layers
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Value(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Image positions selected at one step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionSet {
    indices: Vec<usize>,
}

impl SelectionSet {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn empty() -> Self {
        Self { indices: Vec::new() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.indices.binary_search(&idx).is_ok()
    }
}

/// Per-generation mutable selection state.
#[derive(Debug, Clone)]
pub struct SparcState {
    ema: Vec<f64>,
    counts: Vec<u32>,
    step: usize,
    initialized: bool,
    epsilon: f64,
    score_op_count: u64,
}

impl SparcState {
    pub fn new(n_image: usize, epsilon: f64) -> Self {
        Self {
            ema: vec![0.0; n_image],
            counts: vec![0; n_image],
            step: 0,
            initialized: false,
            epsilon,
            score_op_count: 0,
        }
    }

    pub fn ema(&self) -> &[f64] {
        &self.ema
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Generation steps observed so far.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn initialized(&self) -> bool {
        self.initialized
    }

    /// Score-arithmetic operations performed, for overhead accounting.
    pub fn score_op_count(&self) -> u64 {
        self.score_op_count
    }

    /// Relative activation score per image token: the jump of the current
    /// attention over its EMA trend, normalized by the trend (floored at
    /// epsilon). Both readings at or below the floor count as no signal.
    pub fn relative_scores(&mut self, a: &[f64]) -> Result<Vec<f64>> {
        if !self.initialized {
            return Err(Error::State(
                "relative scores need an initialized EMA (no step observed yet)".into(),
            ));
        }
        if a.len() != self.ema.len() {
            return Err(Error::Shape(format!(
                "attention length {} vs EMA length {}",
                a.len(),
                self.ema.len()
            )));
        }
        self.score_op_count += a.len() as u64;
        Ok(a.iter()
            .zip(self.ema.iter())
            .map(|(&aj, &ej)| {
                if aj <= self.epsilon && ej <= self.epsilon {
                    0.0
                } else {
                    (aj - ej) / ej.max(self.epsilon)
                }
            })
            .collect())
    }

    /// Fold one attention observation into the EMA. The first observation
    /// initializes the trend directly; later ones blend with weight `beta`
    /// on the trend. Entries are floored at epsilon.
    pub fn update_ema(&mut self, a: &[f64], beta: f64) -> Result<()> {
        if a.len() != self.ema.len() {
            return Err(Error::Shape(format!(
                "attention length {} vs EMA length {}",
                a.len(),
                self.ema.len()
            )));
        }
        if self.initialized {
            for (e, &aj) in self.ema.iter_mut().zip(a.iter()) {
                *e = (beta * *e + (1.0 - beta) * aj).max(self.epsilon);
            }
        } else {
            for (e, &aj) in self.ema.iter_mut().zip(a.iter()) {
                *e = aj.max(self.epsilon);
            }
            self.initialized = true;
        }
        Ok(())
    }

    /// Record one step's selections and advance the step counter.
    pub fn bump_counts(&mut self, selected: &SelectionSet) -> Result<()> {
        for &idx in selected.indices() {
            if idx >= self.counts.len() {
                return Err(Error::Shape(format!(
                    "selected index {idx} out of range for {} image tokens",
                    self.counts.len()
                )));
            }
        }
        for &idx in selected.indices() {
            self.counts[idx] += 1;
        }
        self.step += 1;
        Ok(())
    }

    /// Post-softmax multipliers for the reference path: `alpha^count` on
    /// image positions, 1 elsewhere.
    pub fn reference_multipliers(&self, alpha: f64, context_len: usize) -> Vec<f64> {
        let mut m = vec![1.0; context_len];
        for (j, &c) in self.counts.iter().enumerate() {
            if j >= context_len {
                break;
            }
            if c > 0 {
                m[j] = alpha.powi(c as i32);
            }
        }
        m
    }

    /// Run one full selection step: score, threshold, update the trend,
    /// record counts. Returns the step's selection set (always empty on the
    /// initializing first step).
    pub fn advance(&mut self, image_attention: &[f64], config: &SparcConfig) -> Result<SelectionSet> {
        let selected = if self.initialized {
            let scores = self.relative_scores(image_attention)?;
            select_tokens(&scores, config.tau)
        } else {
            SelectionSet::empty()
        };
        self.update_ema(image_attention, config.beta)?;
        self.bump_counts(&selected)?;
        Ok(selected)
    }
}

/// Slice the image-token portion out of a full attention row. The slice is
/// raw softmax mass, not renormalized.
pub fn observe_attention(row: &[f64], n_image: usize) -> Result<Vec<f64>> {
    if row.len() < n_image {
        return Err(Error::Shape(format!(
            "attention row length {} shorter than n_image {}",
            row.len(),
            n_image
        )));
    }
    Ok(row[..n_image].to_vec())
}

/// Threshold scores into a selection set (strict inequality).
pub fn select_tokens(scores: &[f64], tau: f64) -> SelectionSet {
    SelectionSet::new(
        scores
            .iter()
            .enumerate()
            .filter(|(_, &r)| r > tau)
            .map(|(j, _)| j)
            .collect(),
    )
}

/// Scale the cached value vectors of every selected image position by
/// `alpha`, at all layers and heads.
pub fn scale_cached_values(cache: &mut KVCache, selected: &SelectionSet, alpha: f64) -> Result<()> {
    for &idx in selected.indices() {
        cache.scale_position_values(idx, alpha)?;
    }
    Ok(())
}

/// Additive amplification of image-position logits: `A += alpha * |A|`.
/// Non-image positions are untouched.
pub fn naive_adjust(logits: &mut [f64], alpha: f64, layout: &SequenceLayout) {
    debug_assert!(alpha >= 0.0);
    let n = layout.n_image.min(logits.len());
    for l in &mut logits[..n] {
        *l += alpha * l.abs();
    }
}
