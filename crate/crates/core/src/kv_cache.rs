//! Per-layer, per-head key/value history with mutable value scaling.
//!
//! The value lists are the interposition point for the fast recalibration
//! path: selected image positions get their cached value vectors scaled in
//! place, and `value_scales` tracks the cumulative factor applied to each
//! image position so tests can audit it against the selection counts.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
struct HeadCache {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct KVCache {
    num_layers: usize,
    num_heads: usize,
    head_dim: usize,
    max_seq_len: usize,
    n_image: usize,
    /// `[layer][head]`
    heads: Vec<Vec<HeadCache>>,
    /// Cumulative value-scale factor per image position.
    value_scales: Vec<f64>,
    scale_op_count: u64,
}

impl KVCache {
    pub fn new(
        num_layers: usize,
        num_heads: usize,
        head_dim: usize,
        max_seq_len: usize,
        n_image: usize,
    ) -> Self {
        let heads = (0..num_layers)
            .map(|_| (0..num_heads).map(|_| HeadCache::default()).collect())
            .collect();
        Self {
            num_layers,
            num_heads,
            head_dim,
            max_seq_len,
            n_image,
            heads,
            value_scales: vec![1.0; n_image],
            scale_op_count: 0,
        }
    }

    /// Number of positions consumed so far.
    pub fn len(&self) -> usize {
        self.heads[0][0].keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_image(&self) -> usize {
        self.n_image
    }

    pub fn at_capacity(&self) -> bool {
        self.len() >= self.max_seq_len
    }

    /// Append one position's key/value at a single (layer, head).
    ///
    /// The caller appends across all layers and heads within one forward
    /// pass; `assert_consistent` checks the bookkeeping afterwards.
    pub fn append(&mut self, layer: usize, head: usize, key: Vec<f64>, value: Vec<f64>) -> Result<()> {
        debug_assert_eq!(key.len(), self.head_dim);
        debug_assert_eq!(value.len(), self.head_dim);
        let slot = &mut self.heads[layer][head];
        if slot.keys.len() >= self.max_seq_len {
            return Err(Error::Capacity(format!(
                "cache at maximum sequence length {}",
                self.max_seq_len
            )));
        }
        slot.keys.push(key);
        slot.values.push(value);
        Ok(())
    }

    pub fn keys(&self, layer: usize, head: usize) -> &[Vec<f64>] {
        &self.heads[layer][head].keys
    }

    pub fn values(&self, layer: usize, head: usize) -> &[Vec<f64>] {
        &self.heads[layer][head].values
    }

    /// Cumulative scale factor applied to each image position's values.
    pub fn value_scales(&self) -> &[f64] {
        &self.value_scales
    }

    /// Number of single-vector scale operations performed so far. Used by
    /// the overhead accounting tests.
    pub fn scale_op_count(&self) -> u64 {
        self.scale_op_count
    }

    /// Multiply the cached value vectors of image position `pos` by `factor`
    /// at every layer and head, and fold the factor into the cumulative
    /// per-position scale.
    pub fn scale_position_values(&mut self, pos: usize, factor: f64) -> Result<()> {
        if pos >= self.n_image {
            return Err(Error::Shape(format!(
                "position {pos} is not an image position (n_image = {})",
                self.n_image
            )));
        }
        if pos >= self.len() {
            return Err(Error::State(format!(
                "position {pos} not yet cached (cache length {})",
                self.len()
            )));
        }
        for layer in 0..self.num_layers {
            for head in 0..self.num_heads {
                for v in &mut self.heads[layer][head].values[pos] {
                    *v *= factor;
                }
                self.scale_op_count += 1;
            }
        }
        self.value_scales[pos] *= factor;
        Ok(())
    }

    /// Every (layer, head) list must hold the same number of positions.
    pub fn assert_consistent(&self) {
        let n = self.len();
        for layer in &self.heads {
            for head in layer {
                debug_assert_eq!(head.keys.len(), n);
                debug_assert_eq!(head.values.len(), n);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn filled_cache() -> KVCache {
        let mut c = KVCache::new(2, 2, 4, 16, 3);
        for pos in 0..5 {
            for layer in 0..2 {
                for head in 0..2 {
                    c.append(layer, head, vec![pos as f64; 4], vec![1.0; 4]).unwrap();
                }
            }
        }
        c
    }

    #[test]
    fn lengths_track_appends() {
        let c = filled_cache();
        assert_eq!(c.len(), 5);
        c.assert_consistent();
    }

    #[test]
    fn scaling_touches_all_layers_and_heads() {
        let mut c = filled_cache();
        c.scale_position_values(1, 1.1).unwrap();
        for layer in 0..2 {
            for head in 0..2 {
                assert_abs_diff_eq!(c.values(layer, head)[1][0], 1.1, epsilon = 1e-15);
                assert_abs_diff_eq!(c.values(layer, head)[0][0], 1.0, epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(c.value_scales()[1], 1.1, epsilon = 1e-15);
        assert_eq!(c.scale_op_count(), 4);
    }

    #[test]
    fn scaling_non_image_position_is_shape_error() {
        let mut c = filled_cache();
        assert!(matches!(c.scale_position_values(3, 1.1), Err(Error::Shape(_))));
    }

    #[test]
    fn scaling_uncached_position_is_state_error() {
        let mut c = KVCache::new(1, 1, 4, 16, 8);
        c.append(0, 0, vec![0.0; 4], vec![0.0; 4]).unwrap();
        assert!(matches!(c.scale_position_values(5, 1.1), Err(Error::State(_))));
    }

    #[test]
    fn capacity_is_enforced() {
        let mut c = KVCache::new(1, 1, 2, 2, 0);
        c.append(0, 0, vec![0.0; 2], vec![0.0; 2]).unwrap();
        c.append(0, 0, vec![0.0; 2], vec![0.0; 2]).unwrap();
        assert!(matches!(
            c.append(0, 0, vec![0.0; 2], vec![0.0; 2]),
            Err(Error::Capacity(_))
        ));
    }
}
