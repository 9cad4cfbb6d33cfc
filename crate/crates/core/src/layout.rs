//! Sequence position bookkeeping.
//!
//! Positions are laid out as: image embeddings `[0, n_image)`, instruction
//! tokens `[n_image, n_image + n_inst)`, then generated tokens.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceLayout {
    pub n_image: usize,
    pub n_inst: usize,
    pub n_generated: usize,
}

impl SequenceLayout {
    pub fn new(n_image: usize, n_inst: usize) -> Self {
        Self { n_image, n_inst, n_generated: 0 }
    }

    /// Total positions currently in the sequence.
    pub fn total(&self) -> usize {
        self.n_image + self.n_inst + self.n_generated
    }

    /// Prompt length (image + instruction positions).
    pub fn prompt_len(&self) -> usize {
        self.n_image + self.n_inst
    }

    pub fn is_image(&self, pos: usize) -> bool {
        pos < self.n_image
    }

    /// Context length visible when generating token `i` (1-based):
    /// `n_image + n_inst + (i - 1)`.
    pub fn context_len_at_step(&self, step: usize) -> usize {
        self.n_image + self.n_inst + step - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partitions_are_consistent() {
        let mut l = SequenceLayout::new(16, 4);
        assert_eq!(l.total(), 20);
        assert!(l.is_image(15));
        assert!(!l.is_image(16));
        l.n_generated = 3;
        assert_eq!(l.total(), 23);
        assert_eq!(l.context_len_at_step(1), 20);
        assert_eq!(l.context_len_at_step(4), 23);
    }
}
