//! Model configuration and weights for the desk-scale decoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::rng::SplitMix64;

/// Dimensions of the toy decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    pub model_dim: usize,
    pub mlp_hidden: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("head_dim", self.head_dim),
            ("model_dim", self.model_dim),
            ("mlp_hidden", self.mlp_hidden),
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Shape(format!("{name} must be >= 1")));
            }
        }
        if self.model_dim != self.num_heads * self.head_dim {
            return Err(Error::Shape(format!(
                "model_dim {} != num_heads {} * head_dim {}",
                self.model_dim, self.num_heads, self.head_dim
            )));
        }
        Ok(())
    }
}

/// Per-layer parameter block: attention projections plus a two-layer MLP,
/// each with its pre-norm gain.
#[derive(Debug, Clone)]
pub struct LayerWeights {
    pub attn_norm: Vec<f64>,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub mlp_norm: Vec<f64>,
    pub mlp_in: Matrix,
    pub mlp_out: Matrix,
}

#[derive(Debug, Clone)]
pub struct ModelWeights {
    pub token_embedding: Matrix,
    pub layers: Vec<LayerWeights>,
    pub final_norm: Vec<f64>,
    pub unembedding: Matrix,
}

impl ModelWeights {
    /// Check every tensor against `config` and reject non-finite values.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        config.validate()?;
        let d = config.model_dim;

        fn check_matrix(name: String, rows: usize, cols: usize, m: &Matrix) -> Result<()> {
            if m.rows != rows || m.cols != cols {
                return Err(Error::Shape(format!(
                    "{name}: expected {rows}x{cols}, found {}x{}",
                    m.rows, m.cols
                )));
            }
            if !m.is_finite() {
                return Err(Error::Value(format!("{name}: non-finite value")));
            }
            Ok(())
        }

        fn check_vector(name: String, len: usize, v: &[f64]) -> Result<()> {
            if v.len() != len {
                return Err(Error::Shape(format!(
                    "{name}: expected length {len}, found {}",
                    v.len()
                )));
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::Value(format!("{name}: non-finite value")));
            }
            Ok(())
        }

        if self.layers.len() != config.num_layers {
            return Err(Error::Shape(format!(
                "expected {} layers, found {}",
                config.num_layers,
                self.layers.len()
            )));
        }
        check_matrix("token_embedding".into(), config.vocab_size, d, &self.token_embedding)?;
        for (i, layer) in self.layers.iter().enumerate() {
            check_vector(format!("layers.{i}.attn_norm"), d, &layer.attn_norm)?;
            check_matrix(format!("layers.{i}.w_q"), d, d, &layer.w_q)?;
            check_matrix(format!("layers.{i}.w_k"), d, d, &layer.w_k)?;
            check_matrix(format!("layers.{i}.w_v"), d, d, &layer.w_v)?;
            check_matrix(format!("layers.{i}.w_o"), d, d, &layer.w_o)?;
            check_vector(format!("layers.{i}.mlp_norm"), d, &layer.mlp_norm)?;
            check_matrix(format!("layers.{i}.mlp_in"), d, config.mlp_hidden, &layer.mlp_in)?;
            check_matrix(format!("layers.{i}.mlp_out"), config.mlp_hidden, d, &layer.mlp_out)?;
        }
        check_vector("final_norm".into(), d, &self.final_norm)?;
        check_matrix("unembedding".into(), d, config.vocab_size, &self.unembedding)?;
        Ok(())
    }

    /// Draw a full weight set from a SplitMix64 stream keyed by `seed`.
    ///
    /// Values are uniform in `[-scale, scale]`, drawn in the container's
    /// canonical tensor order so the result is bit-reproducible.
    pub fn generate(seed: u64, config: &ModelConfig, scale: f64) -> Result<Self> {
        if scale < 0.0 || !scale.is_finite() {
            return Err(Error::Value(format!("scale must be finite and >= 0, got {scale}")));
        }
        config.validate()?;
        let mut rng = SplitMix64::new(seed);
        let mut draw_matrix = |rows: usize, cols: usize| -> Matrix {
            let data = (0..rows * cols)
                .map(|_| rng.next_symmetric_f32(scale) as f64)
                .collect();
            Matrix { rows, cols, data }
        };
        let token_embedding = draw_matrix(config.vocab_size, config.model_dim);
        let mut layers = Vec::with_capacity(config.num_layers);
        for _ in 0..config.num_layers {
            let attn_norm = draw_matrix(1, config.model_dim).data;
            let w_q = draw_matrix(config.model_dim, config.model_dim);
            let w_k = draw_matrix(config.model_dim, config.model_dim);
            let w_v = draw_matrix(config.model_dim, config.model_dim);
            let w_o = draw_matrix(config.model_dim, config.model_dim);
            let mlp_norm = draw_matrix(1, config.model_dim).data;
            let mlp_in = draw_matrix(config.model_dim, config.mlp_hidden);
            let mlp_out = draw_matrix(config.mlp_hidden, config.model_dim);
            layers.push(LayerWeights {
                attn_norm,
                w_q,
                w_k,
                w_v,
                w_o,
                mlp_norm,
                mlp_in,
                mlp_out,
            });
        }
        let final_norm = draw_matrix(1, config.model_dim).data;
        let unembedding = draw_matrix(config.model_dim, config.vocab_size);
        Ok(Self { token_embedding, layers, final_norm, unembedding })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ModelConfig {
        ModelConfig {
            num_layers: 2,
            num_heads: 2,
            head_dim: 4,
            model_dim: 8,
            mlp_hidden: 16,
            vocab_size: 32,
            max_seq_len: 64,
        }
    }

    #[test]
    fn config_validation_catches_factorization() {
        let mut c = small_config();
        c.model_dim = 30;
        c.num_heads = 4;
        c.head_dim = 8;
        assert!(matches!(c.validate(), Err(Error::Shape(_))));
    }

    #[test]
    fn config_rejects_zero_fields() {
        let mut c = small_config();
        c.vocab_size = 0;
        assert!(matches!(c.validate(), Err(Error::Shape(_))));
    }

    #[test]
    fn generate_is_deterministic() {
        let c = small_config();
        let a = ModelWeights::generate(9, &c, 0.5).unwrap();
        let b = ModelWeights::generate(9, &c, 0.5).unwrap();
        assert_eq!(a.token_embedding, b.token_embedding);
        assert_eq!(a.layers[1].w_v, b.layers[1].w_v);
        assert_eq!(a.unembedding, b.unembedding);
    }

    #[test]
    fn generate_zero_scale_gives_zero_weights() {
        let c = small_config();
        let w = ModelWeights::generate(1, &c, 0.0).unwrap();
        assert!(w.token_embedding.data.iter().all(|&v| v == 0.0));
        assert!(w.layers[0].w_q.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn generated_weights_validate() {
        let c = small_config();
        let w = ModelWeights::generate(3, &c, 0.25).unwrap();
        w.validate(&c).unwrap();
    }

    #[test]
    fn validate_rejects_non_finite() {
        let c = small_config();
        let mut w = ModelWeights::generate(3, &c, 0.25).unwrap();
        w.layers[0].w_k.data[5] = f64::NAN;
        assert!(matches!(w.validate(&c), Err(Error::Value(_))));
    }

    #[test]
    fn validate_rejects_wrong_layer_count() {
        let c = small_config();
        let mut w = ModelWeights::generate(3, &c, 0.25).unwrap();
        w.layers.pop();
        assert!(matches!(w.validate(&c), Err(Error::Shape(_))));
    }
}
