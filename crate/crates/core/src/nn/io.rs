//! Model persistence.
//!
//! Binary container layout (all integers little-endian):
//!
//! | bytes      | content                                              |
//! |------------|------------------------------------------------------|
//! | 8          | magic `NRMODEL\0`                                    |
//! | 4          | `u32` length `h` of the JSON header                  |
//! | h          | UTF-8 JSON header: format version, activation, dims, seed, layer kinds |
//! | 8 per f64  | for each layer in order: weights, then biases        |
//! | 4          | CRC32 (IEEE) of every preceding byte                 |
//!
//! The JSON interchange variant is `{"format_version": 1, "model": {...}}`
//! with parameters as plain arrays.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::model::{Activation, LayerKind, LayerSpec, ModelSpec};

pub const MAGIC: &[u8; 8] = b"NRMODEL\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    activation: Activation,
    input_dims: usize,
    output_dims: usize,
    seed: u64,
    layers: Vec<LayerKind>,
}

#[derive(Serialize, Deserialize)]
struct JsonModel {
    format_version: u32,
    model: ModelSpec,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn encode_binary(model: &ModelSpec) -> Result<Vec<u8>> {
    model.validate()?;
    let header = Header {
        format_version: FORMAT_VERSION,
        activation: model.activation,
        input_dims: model.input_dims,
        output_dims: model.output_dims,
        seed: model.seed,
        layers: model.layers.iter().map(|l| l.kind.clone()).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * (model.weight_count() + 64));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for l in &model.layers {
        for v in l.weight.iter().chain(&l.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode_binary(bytes: &[u8]) -> Result<ModelSpec> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(format_err("missing NRMODEL magic (truncated or not a model file)"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let hend = 12usize
        .checked_add(hlen)
        .ok_or_else(|| format_err("header length overflow"))?;
    if bytes.len() < hend {
        return Err(format_err("truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[12..hend]).map_err(|e| format_err(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: header.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let n_values: usize = header.layers.iter().map(|k| k.weight_len() + k.bias_len()).sum();
    let body_end = hend + 8 * n_values;
    if bytes.len() < body_end + 4 {
        return Err(format_err(format!(
            "truncated: {} bytes, expected {}",
            bytes.len(),
            body_end + 4
        )));
    }
    if bytes.len() > body_end + 4 {
        return Err(format_err("trailing bytes after checksum"));
    }
    let stored = u32::from_le_bytes(bytes[body_end..body_end + 4].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut values = bytes[hend..body_end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut layers = Vec::with_capacity(header.layers.len());
    for kind in header.layers {
        let weight: Vec<f64> = values.by_ref().take(kind.weight_len()).collect();
        let bias: Vec<f64> = values.by_ref().take(kind.bias_len()).collect();
        layers.push(LayerSpec { kind, weight, bias });
    }
    let model = ModelSpec {
        layers,
        activation: header.activation,
        input_dims: header.input_dims,
        output_dims: header.output_dims,
        seed: header.seed,
    };
    model.validate()?;
    Ok(model)
}

pub fn encode_json(model: &ModelSpec) -> Result<Vec<u8>> {
    model.validate()?;
    let wrapped = JsonModel {
        format_version: FORMAT_VERSION,
        model: model.clone(),
    };
    let mut out = serde_json::to_vec(&wrapped)?;
    out.push(b'\n');
    Ok(out)
}

pub fn decode_json(bytes: &[u8]) -> Result<ModelSpec> {
    let v: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| format_err(format!("json: {e}")))?;
    let found = v.get("format_version").and_then(|x| x.as_u64()).unwrap_or(0) as u32;
    if found != FORMAT_VERSION {
        return Err(Error::Version {
            found,
            expected: FORMAT_VERSION,
        });
    }
    let wrapped: JsonModel = serde_json::from_value(v).map_err(|e| format_err(format!("json: {e}")))?;
    wrapped.model.validate()?;
    Ok(wrapped.model)
}

/// Writes `model` to `path`; a `.json` extension selects the JSON variant.
pub fn save_model(model: &ModelSpec, path: &Path) -> Result<()> {
    let bytes = if path.extension().is_some_and(|e| e == "json") {
        encode_json(model)?
    } else {
        encode_binary(model)?
    };
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads either format, detected from the leading bytes.
pub fn load_model(path: &Path) -> Result<ModelSpec> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"NRMODEL") {
        decode_binary(&bytes)
    } else if bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{') {
        decode_json(&bytes)
    } else {
        Err(format_err(format!("{}: unrecognized model file", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::forward::forward;

    fn sample() -> ModelSpec {
        let mut m = ModelSpec::lenet_lite(Activation::Relu, 9).unwrap();
        m.layers[0].bias[3] = -0.125;
        m.layers[5].weight[7] = 1e-300;
        m
    }

    #[test]
    fn binary_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.nrm"), dir.path().join("b.nrm"));
        let m = sample();
        save_model(&m, &a).unwrap();
        let back = load_model(&a).unwrap();
        assert_eq!(back, m);
        save_model(&back, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn truncated_and_corrupted_files_are_rejected() {
        let bytes = encode_binary(&sample()).unwrap();
        for cut in [0, 5, 11, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(decode_binary(&bytes[..cut]), Err(Error::Format(_))),
                "cut at {cut}"
            );
        }
        let mut flipped = bytes.clone();
        let mid = bytes.len() - 100;
        flipped[mid] ^= 0x40;
        assert!(matches!(decode_binary(&flipped), Err(Error::Checksum { .. })));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let m = ModelSpec::mlp(&[2, 2], Activation::Tanh, 0).unwrap();
        let json = String::from_utf8(encode_json(&m).unwrap()).unwrap();
        let bumped = json.replacen("\"format_version\":1", "\"format_version\":7", 1);
        assert!(matches!(
            decode_json(bumped.as_bytes()),
            Err(Error::Version { found: 7, expected: 1 })
        ));

        let bin = encode_binary(&m).unwrap();
        let text = String::from_utf8_lossy(&bin).into_owned();
        assert!(text.contains("\"format_version\":1"));
        let pos = bin.windows(17).position(|w| w == b"\"format_version\":").unwrap() + 17;
        let mut bad = bin.clone();
        bad[pos] = b'2';
        assert!(matches!(decode_binary(&bad), Err(Error::Version { found: 2, .. })));
    }

    #[test]
    fn json_variant_predicts_identically() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let m = ModelSpec::mlp(&[6, 5, 3], Activation::Tanh, 4).unwrap();
        save_model(&m, &p).unwrap();
        let back = load_model(&p).unwrap();
        for i in 0..100 {
            let x: Vec<f64> = (0..6).map(|j| ((i * 7 + j * 13) as f64 * 0.1).sin()).collect();
            assert_eq!(forward(&m, &x).unwrap().0, forward(&back, &x).unwrap().0);
        }
        assert_eq!(back, m);
    }
}
