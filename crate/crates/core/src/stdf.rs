//! STDF-v1 weights container.
//!
//! Layout (all integers little-endian, exact byte layout in
//! `docs/stdf_v1.md`):
//!
//! ```text
//! magic     5 bytes            "STDF1"
//! meta_len  u32
//! metadata  meta_len bytes     UTF-8 JSON: version + ModelConfig fields
//! n_tensors u32
//! tensor*   name_len u32, name bytes, rank u32, dims u32*rank, f32 data
//! ```
//!
//! Tensors appear in a fixed canonical order; the reader enforces it so a
//! container is valid in exactly one arrangement.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::model::{LayerWeights, ModelConfig, ModelWeights};

pub const MAGIC: &[u8; 5] = b"STDF1";
pub const FORMAT_VERSION: u32 = 1;

const MAX_METADATA_LEN: u32 = 1 << 20;
const MAX_TENSOR_ELEMS: u64 = 1 << 28;

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    version: u32,
    #[serde(flatten)]
    config: ModelConfig,
}

/// The canonical tensor sequence for a given config: (name, dims).
fn canonical_tensor_list(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = config.model_dim;
    let mut list = vec![("token_embedding".to_string(), vec![config.vocab_size, d])];
    for i in 0..config.num_layers {
        list.push((format!("layers.{i}.attn_norm"), vec![d]));
        list.push((format!("layers.{i}.w_q"), vec![d, d]));
        list.push((format!("layers.{i}.w_k"), vec![d, d]));
        list.push((format!("layers.{i}.w_v"), vec![d, d]));
        list.push((format!("layers.{i}.w_o"), vec![d, d]));
        list.push((format!("layers.{i}.mlp_norm"), vec![d]));
        list.push((format!("layers.{i}.mlp_in"), vec![d, config.mlp_hidden]));
        list.push((format!("layers.{i}.mlp_out"), vec![config.mlp_hidden, d]));
    }
    list.push(("final_norm".to_string(), vec![d]));
    list.push(("unembedding".to_string(), vec![d, config.vocab_size]));
    list
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_tensor<W: Write>(w: &mut W, name: &str, dims: &[usize], data: &[f64]) -> Result<()> {
    write_u32(w, name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    write_u32(w, dims.len() as u32)?;
    for &d in dims {
        write_u32(w, d as u32)?;
    }
    let expected: usize = dims.iter().product();
    debug_assert_eq!(expected, data.len());
    for &v in data {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Serialize config + weights into an STDF-v1 stream.
pub fn write_weights<W: Write>(w: &mut W, config: &ModelConfig, weights: &ModelWeights) -> Result<()> {
    weights.validate(config)?;
    w.write_all(MAGIC)?;
    let meta = Metadata { version: FORMAT_VERSION, config: *config };
    let meta_json = serde_json::to_string(&meta)?;
    write_u32(w, meta_json.len() as u32)?;
    w.write_all(meta_json.as_bytes())?;

    let list = canonical_tensor_list(config);
    write_u32(w, list.len() as u32)?;
    let mut tensors: Vec<(&str, &[usize], &[f64])> = Vec::with_capacity(list.len());
    tensors.push((&list[0].0, &list[0].1, &weights.token_embedding.data));
    let mut idx = 1;
    for layer in &weights.layers {
        let fields: [&[f64]; 8] = [
            &layer.attn_norm,
            &layer.w_q.data,
            &layer.w_k.data,
            &layer.w_v.data,
            &layer.w_o.data,
            &layer.mlp_norm,
            &layer.mlp_in.data,
            &layer.mlp_out.data,
        ];
        for data in fields {
            tensors.push((&list[idx].0, &list[idx].1, data));
            idx += 1;
        }
    }
    tensors.push((&list[idx].0, &list[idx].1, &weights.final_norm));
    tensors.push((&list[idx + 1].0, &list[idx + 1].1, &weights.unembedding.data));
    for (name, dims, data) in tensors {
        write_tensor(w, name, dims, data)?;
    }
    Ok(())
}

pub fn write_weights_to_path<P: AsRef<Path>>(
    path: P,
    config: &ModelConfig,
    weights: &ModelWeights,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_weights(&mut w, config, weights)?;
    w.flush()?;
    Ok(())
}

struct StreamReader<R: Read> {
    inner: R,
}

impl<R: Read> StreamReader<R> {
    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|_| Error::Format("unexpected end of stream".into()))
    }

    fn read_u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_f32(&mut self) -> Result<f32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(f32::from_le_bytes(b))
    }
}

/// Parse an STDF-v1 stream into a validated `(ModelConfig, ModelWeights)`.
pub fn load_weights<R: Read>(reader: R) -> Result<(ModelConfig, ModelWeights)> {
    let mut r = StreamReader { inner: reader };

    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(MAGIC)
        )));
    }

    let meta_len = r.read_u32()?;
    if meta_len > MAX_METADATA_LEN {
        return Err(Error::Format(format!("metadata length {meta_len} exceeds limit")));
    }
    let mut meta_buf = vec![0u8; meta_len as usize];
    r.read_exact(&mut meta_buf)?;
    let meta_str = std::str::from_utf8(&meta_buf)
        .map_err(|_| Error::Format("metadata is not valid UTF-8".into()))?;
    let meta: Metadata =
        serde_json::from_str(meta_str).map_err(|e| Error::Format(format!("metadata JSON: {e}")))?;
    if meta.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported container version {} (expected {FORMAT_VERSION})",
            meta.version
        )));
    }
    let config = meta.config;
    config.validate()?;

    let expected = canonical_tensor_list(&config);
    let n_tensors = r.read_u32()? as usize;
    if n_tensors != expected.len() {
        return Err(Error::Format(format!(
            "tensor count {n_tensors} does not match the {} required by the config",
            expected.len()
        )));
    }

    let mut tensors: Vec<Vec<f64>> = Vec::with_capacity(expected.len());
    for (name, dims) in &expected {
        let name_len = r.read_u32()? as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)?;
        let found_name = String::from_utf8(name_buf)
            .map_err(|_| Error::Format("tensor name is not valid UTF-8".into()))?;
        if &found_name != name {
            return Err(Error::Format(format!(
                "tensor out of order: expected {name}, found {found_name}"
            )));
        }
        let rank = r.read_u32()? as usize;
        if rank != dims.len() {
            return Err(Error::Shape(format!(
                "{name}: rank {rank}, expected {}",
                dims.len()
            )));
        }
        let mut found_dims = Vec::with_capacity(rank);
        let mut elems: u64 = 1;
        for _ in 0..rank {
            let d = r.read_u32()? as usize;
            elems = elems.saturating_mul(d as u64);
            found_dims.push(d);
        }
        if elems > MAX_TENSOR_ELEMS {
            return Err(Error::Format(format!("{name}: tensor too large")));
        }
        if &found_dims != dims {
            return Err(Error::Shape(format!(
                "{name}: dims {found_dims:?}, expected {dims:?}"
            )));
        }
        let mut data = Vec::with_capacity(elems as usize);
        for _ in 0..elems {
            let v = r.read_f32()?;
            if !v.is_finite() {
                return Err(Error::Value(format!("{name}: non-finite value")));
            }
            data.push(v as f64);
        }
        tensors.push(data);
    }

    let mut it = tensors.into_iter();
    let d = config.model_dim;
    let mut next_matrix = |rows: usize, cols: usize| -> Matrix {
        Matrix { rows, cols, data: it.next().expect("tensor list length checked") }
    };
    let token_embedding = next_matrix(config.vocab_size, d);
    let mut layers = Vec::with_capacity(config.num_layers);
    for _ in 0..config.num_layers {
        let attn_norm = next_matrix(1, d).data;
        let w_q = next_matrix(d, d);
        let w_k = next_matrix(d, d);
        let w_v = next_matrix(d, d);
        let w_o = next_matrix(d, d);
        let mlp_norm = next_matrix(1, d).data;
        let mlp_in = next_matrix(d, config.mlp_hidden);
        let mlp_out = next_matrix(config.mlp_hidden, d);
        layers.push(LayerWeights { attn_norm, w_q, w_k, w_v, w_o, mlp_norm, mlp_in, mlp_out });
    }
    let final_norm = next_matrix(1, d).data;
    let unembedding = next_matrix(d, config.vocab_size);

    let weights = ModelWeights { token_embedding, layers, final_norm, unembedding };
    weights.validate(&config)?;
    Ok((config, weights))
}

pub fn load_weights_from_path<P: AsRef<Path>>(path: P) -> Result<(ModelConfig, ModelWeights)> {
    load_weights(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_config() -> ModelConfig {
        ModelConfig {
            num_layers: 4,
            num_heads: 4,
            head_dim: 8,
            model_dim: 32,
            mlp_hidden: 64,
            vocab_size: 128,
            max_seq_len: 640,
        }
    }

    fn container_bytes(seed: u64) -> Vec<u8> {
        let config = desk_config();
        let weights = ModelWeights::generate(seed, &config, 0.5).unwrap();
        let mut buf = Vec::new();
        write_weights(&mut buf, &config, &weights).unwrap();
        buf
    }

    #[test]
    fn round_trip_preserves_everything() {
        let config = desk_config();
        let weights = ModelWeights::generate(42, &config, 0.5).unwrap();
        let mut buf = Vec::new();
        write_weights(&mut buf, &config, &weights).unwrap();
        let (config2, weights2) = load_weights(buf.as_slice()).unwrap();
        assert_eq!(config, config2);
        assert_eq!(weights.token_embedding, weights2.token_embedding);
        assert_eq!(weights.layers[3].mlp_out, weights2.layers[3].mlp_out);
        assert_eq!(weights.final_norm, weights2.final_norm);
    }

    #[test]
    fn writes_are_byte_identical() {
        assert_eq!(container_bytes(42), container_bytes(42));
        assert_ne!(container_bytes(42), container_bytes(43));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut buf = container_bytes(1);
        buf[0] = b'X';
        match load_weights(buf.as_slice()) {
            Err(Error::Format(_)) => {}
            other => panic!("expected Format error, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_config_is_shape_error() {
        // Rewrite the metadata so model_dim disagrees with heads*head_dim.
        let buf = container_bytes(1);
        let meta_len = u32::from_le_bytes(buf[5..9].try_into().unwrap()) as usize;
        let meta = std::str::from_utf8(&buf[9..9 + meta_len]).unwrap();
        let patched = meta.replace("\"model_dim\":32", "\"model_dim\":30");
        assert_ne!(meta, patched);
        let mut out = Vec::new();
        out.extend_from_slice(&buf[..5]);
        out.extend_from_slice(&(patched.len() as u32).to_le_bytes());
        out.extend_from_slice(patched.as_bytes());
        out.extend_from_slice(&buf[9 + meta_len..]);
        match load_weights(out.as_slice()) {
            Err(Error::Shape(_)) => {}
            other => panic!("expected Shape error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_value_is_value_error() {
        let config = desk_config();
        let weights = ModelWeights::generate(5, &config, 0.5).unwrap();
        let mut buf = Vec::new();
        write_weights(&mut buf, &config, &weights).unwrap();
        // First data bytes of token_embedding live right after its header.
        let meta_len = u32::from_le_bytes(buf[5..9].try_into().unwrap()) as usize;
        let header = 9 + meta_len + 4; // magic+len+meta+count
        let tensor_data = header + 4 + "token_embedding".len() + 4 + 8;
        buf[tensor_data..tensor_data + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        match load_weights(buf.as_slice()) {
            Err(Error::Value(_)) => {}
            other => panic!("expected Value error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_stream_is_format_error() {
        let buf = container_bytes(1);
        let cut = &buf[..buf.len() / 2];
        assert!(matches!(load_weights(cut), Err(Error::Format(_))));
    }
}
