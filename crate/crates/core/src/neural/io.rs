//! Model file layout:
//!
//! ```text
//! "IPPSM"  version:u8  meta_len:u32 LE  meta:JSON  params:f32 LE ...
//! ```
//!
//! The JSON metadata holds the model config, its layer list, the alphabet,
//! provenance, and the name and shape of every parameter tensor in the order
//! the blob stores them.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{LayerSpec, ModelConfig};
use super::{NeuralModel, Provenance};
use crate::corpus::Alphabet;
use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Tensor};

pub const MAGIC: &[u8; 5] = b"IPPSM";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: ModelConfig,
    layers: Vec<LayerSpec>,
    alphabet: Alphabet,
    provenance: Provenance,
    params: Vec<(String, Vec<usize>)>,
}

impl NeuralModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = Metadata {
            config: self.config.clone(),
            layers: self.config.layers(),
            alphabet: self.alphabet.clone(),
            provenance: self.provenance.clone(),
            params: self.params.iter().map(|(n, t)| (n.to_owned(), t.shape().to_vec())).collect(),
        };
        let json = serde_json::to_vec(&meta)?;
        let mut out = Vec::with_capacity(MAGIC.len() + 5 + json.len() + 4 * self.params.scalar_count());
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.params.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes
            .strip_prefix(MAGIC.as_slice())
            .ok_or_else(|| Error::Format("missing IPPSM magic".into()))?;
        let (&version, rest) = rest
            .split_first()
            .ok_or_else(|| Error::Format("truncated header".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let (len, rest) = rest
            .split_first_chunk::<4>()
            .ok_or_else(|| Error::Format("truncated header".into()))?;
        let len = u32::from_le_bytes(*len) as usize;
        if rest.len() < len {
            return Err(Error::Format("truncated metadata".into()));
        }
        let meta: Metadata = serde_json::from_slice(&rest[..len])?;
        let mut blob = &rest[len..];
        if meta.layers != meta.config.layers() {
            return Err(Error::Format("layer list does not match the stored config".into()));
        }
        let mut params = ParamSet::new();
        for (name, shape) in meta.params {
            let n: usize = shape.iter().product();
            if blob.len() < 4 * n {
                return Err(Error::Format(format!("parameter blob truncated at {name}")));
            }
            let (head, tail) = blob.split_at(4 * n);
            let data = head
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            params.push(name, Tensor::new(shape, data)?);
            blob = tail;
        }
        if !blob.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after parameters", blob.len())));
        }
        let model = NeuralModel::from_parts(meta.config, meta.alphabet, params, meta.provenance)?;
        // Parameter layout must be exactly what the config implies.
        let expected = NeuralModel::init(model.config.clone(), model.alphabet.clone(), 0)?;
        let same_layout = expected.params.len() == model.params.len()
            && expected
                .params
                .iter()
                .zip(model.params.iter())
                .all(|((n1, t1), (n2, t2))| n1 == n2 && t1.shape() == t2.shape());
        if !same_layout {
            return Err(Error::Format("parameter layout does not match the config".into()));
        }
        Ok(model)
    }
}

pub fn save_model(model: &NeuralModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NeuralModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    NeuralModel::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Preset;

    fn model() -> NeuralModel {
        let a = Alphabet::new("abcdef".chars().collect()).unwrap();
        NeuralModel::init(ModelConfig::preset(Preset::Desk, 6, a.cardinality()), a, 9).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ippsm");
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes().unwrap(), m.to_bytes().unwrap());
    }

    #[test]
    fn corrupted_header_reports_version() {
        let mut bytes = model().to_bytes().unwrap();
        bytes[5] = 42;
        assert!(matches!(
            NeuralModel::from_bytes(&bytes),
            Err(Error::Version { found: 42, expected: FORMAT_VERSION })
        ));
        bytes[0] = b'X';
        assert!(matches!(NeuralModel::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let bytes = model().to_bytes().unwrap();
        assert!(matches!(
            NeuralModel::from_bytes(&bytes[..bytes.len() - 7]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn alphabet_mismatch_is_explicit() {
        let m = model();
        let other = Alphabet::new("abcdeg".chars().collect()).unwrap();
        assert!(matches!(m.check_alphabet(&other), Err(Error::IncompatibleAlphabet(_))));
        assert!(m.check_alphabet(&Alphabet::new("abcdef".chars().collect()).unwrap()).is_ok());
    }
}
