//! Weight container: an 8-byte little-endian header length, a JSON header
//! ending in a newline, then every tensor as contiguous little-endian `f32`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::weights::{BlockWeights, ModelWeights, NormGains};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: u64,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightHeader {
    pub version: u32,
    pub config: ModelConfig,
    pub rope_base: f64,
    pub tensors: BTreeMap<String, TensorEntry>,
}

fn named_tensors<T: Scalar>(w: &ModelWeights<T>) -> Vec<(String, Vec<usize>, &[T])> {
    let mut out = Vec::new();
    let blocks = w.prelude.iter().chain(&w.recurrent).chain(&w.coda);
    for (i, b) in blocks.enumerate() {
        for (name, m) in b.tensors() {
            out.push((format!("layers.{i}.{name}"), vec![m.rows(), m.cols()], m.as_slice()));
        }
        for (site, g) in b.norms.sites() {
            if let Some(g) = g {
                out.push((format!("layers.{i}.norm.{site}"), vec![g.len()], g.as_slice()));
            }
        }
    }
    for (name, m) in [("injection", &w.injection), ("embedding", &w.embedding)] {
        if let Some(m) = m {
            out.push((name.to_string(), vec![m.rows(), m.cols()], m.as_slice()));
        }
    }
    if let Some(g) = &w.loop_norm {
        out.push(("loop_norm".into(), vec![g.len()], g.as_slice()));
    }
    out
}

/// Serialize `weights` to `out`. Fails if any value would not survive the
/// narrowing to `f32` unchanged.
pub fn write_weights<T: Scalar, W: Write>(mut out: W, config: &ModelConfig, weights: &ModelWeights<T>) -> Result<()> {
    weights.check_against(config)?;
    let mut tensors = named_tensors(weights);
    tensors.sort_by(|a, b| a.0.cmp(&b.0));
    let mut index = BTreeMap::new();
    let mut offset = 0u64;
    for (name, shape, data) in &tensors {
        index.insert(
            name.clone(),
            TensorEntry {
                shape: shape.clone(),
                offset,
                dtype: "f32".into(),
            },
        );
        offset += 4 * data.len() as u64;
    }
    let header = WeightHeader {
        version: FORMAT_VERSION,
        config: config.clone(),
        rope_base: weights.rope_base,
        tensors: index,
    };
    let mut json = serde_json::to_vec(&header)?;
    json.push(b'\n');
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;

    let mut buf = Vec::with_capacity(offset as usize);
    for (name, _, data) in &tensors {
        for &v in *data {
            let narrow = v.to_f32().unwrap_or(f32::NAN);
            if T::lit(f64::from(narrow)).to_bits_f64() != v.to_bits_f64() {
                return Err(Error::WeightFormat(format!(
                    "tensor {name} holds {v}, which is not exactly representable as f32"
                )));
            }
            buf.extend_from_slice(&narrow.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

trait Bits {
    fn to_bits_f64(self) -> u64;
}

impl<T: Scalar> Bits for T {
    fn to_bits_f64(self) -> u64 {
        self.as_f64().to_bits()
    }
}

pub fn read_weights<T: Scalar, R: Read>(mut input: R) -> Result<(ModelConfig, ModelWeights<T>)> {
    let header = read_header(&mut input)?;
    if header.version != FORMAT_VERSION {
        return Err(Error::WeightFormat(format!("unsupported version {}", header.version)));
    }
    header.config.validate()?;
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;

    let take = |name: &str| -> Result<Option<(Vec<usize>, Vec<T>)>> {
        let Some(e) = header.tensors.get(name) else {
            return Ok(None);
        };
        if e.dtype != "f32" {
            return Err(Error::WeightFormat(format!("{name}: dtype {} unsupported", e.dtype)));
        }
        let count: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + 4 * count;
        let bytes = payload
            .get(start..end)
            .ok_or_else(|| Error::WeightFormat(format!("{name}: payload truncated")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| T::lit(f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))))
            .collect();
        Ok(Some((e.shape.clone(), data)))
    };
    let matrix = |name: &str| -> Result<Option<Matrix<T>>> {
        match take(name)? {
            None => Ok(None),
            Some((shape, data)) if shape.len() == 2 => Ok(Some(Matrix::from_vec(shape[0], shape[1], data)?)),
            Some(_) => Err(Error::WeightFormat(format!("{name}: expected a matrix"))),
        }
    };
    let required = |m: Option<Matrix<T>>, name: &str| m.ok_or_else(|| Error::WeightFormat(format!("missing tensor {name}")));

    let c = &header.config;
    let mut blocks = Vec::with_capacity(c.unique_layers());
    for i in 0..c.unique_layers() {
        let name = |t: &str| format!("layers.{i}.{t}");
        let mut b = BlockWeights {
            wq: required(matrix(&name("wq"))?, &name("wq"))?,
            wk: required(matrix(&name("wk"))?, &name("wk"))?,
            wv: required(matrix(&name("wv"))?, &name("wv"))?,
            wo: required(matrix(&name("wo"))?, &name("wo"))?,
            mlp_in: required(matrix(&name("mlp_in"))?, &name("mlp_in"))?,
            mlp_gate: matrix(&name("mlp_gate"))?,
            mlp_out: required(matrix(&name("mlp_out"))?, &name("mlp_out"))?,
            norms: NormGains {
                attn_in: None,
                attn_out: None,
                mlp_in: None,
                mlp_out: None,
            },
        };
        for site in ["attn_in", "attn_out", "mlp_in", "mlp_out"] {
            let gain = take(&name(&format!("norm.{site}")))?.map(|(_, d)| d);
            *b.norms.site_mut(site).expect("known site") = gain;
        }
        blocks.push(b);
    }
    let coda = blocks.split_off(c.prelude_layers + c.recurrent_layers);
    let recurrent = blocks.split_off(c.prelude_layers);
    let weights = ModelWeights {
        prelude: blocks,
        recurrent,
        coda,
        injection: matrix("injection")?,
        loop_norm: take("loop_norm")?.map(|(_, d)| d),
        embedding: matrix("embedding")?,
        rope_base: header.rope_base,
    };
    weights.check_against(c)?;
    Ok((header.config, weights))
}

pub fn save_weights<T: Scalar>(path: impl AsRef<Path>, config: &ModelConfig, weights: &ModelWeights<T>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_weights(&mut file, config, weights)?;
    file.flush()?;
    Ok(())
}

pub fn load_weights<T: Scalar>(path: impl AsRef<Path>) -> Result<(ModelConfig, ModelWeights<T>)> {
    read_weights(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Parse only the header of a weight file.
pub fn read_header<R: Read>(mut input: R) -> Result<WeightHeader> {
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len == 0 || len > 1 << 30 {
        return Err(Error::WeightFormat(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len as usize];
    input.read_exact(&mut json)?;
    let body = json
        .strip_suffix(b"\n")
        .ok_or_else(|| Error::WeightFormat("header is not newline terminated".into()))?;
    Ok(serde_json::from_slice(body)?)
}
