//! Binary checkpoint: a magic line, a JSON header line, then little-endian f64
//! payload (the eval loss followed by every tensor in header order).

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{ModelConfig, TransformerModel};
use crate::tensor::Tensor;

const MAGIC: &str = "VOCABFLIP-CKPT 1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: TransformerModel,
    pub epoch: usize,
    pub step: usize,
    pub eval_loss: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    epoch: usize,
    step: usize,
    tensors: Vec<(String, Vec<usize>)>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let header = Header {
            config: self.model.config().clone(),
            epoch: self.epoch,
            step: self.step,
            tensors: self
                .model
                .param_names()
                .iter()
                .zip(self.model.params())
                .map(|(n, t)| (n.clone(), t.shape().to_vec()))
                .collect(),
        };
        let mut buf = Vec::new();
        writeln!(buf, "{MAGIC}")?;
        serde_json::to_writer(&mut buf, &header)?;
        buf.push(b'\n');
        buf.extend_from_slice(&self.eval_loss.to_le_bytes());
        for t in self.model.params() {
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &buf)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let mut r = BufReader::new(fs::File::open(path)?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(ModelError::Checkpoint("missing magic line".into()));
        }
        line.clear();
        r.read_line(&mut line)?;
        let header: Header = serde_json::from_str(&line)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        let mut floats = rest.chunks_exact(8);
        if !floats.remainder().is_empty() {
            return Err(ModelError::Checkpoint("truncated payload".into()));
        }
        let mut next = || {
            floats
                .next()
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .ok_or_else(|| ModelError::Checkpoint("payload too short".into()))
        };
        let eval_loss = next()?;
        let mut named = Vec::with_capacity(header.tensors.len());
        for (name, shape) in header.tensors {
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| next()).collect::<Result<Vec<_>, _>>()?;
            named.push((name, Tensor::new(shape, data)?));
        }
        if next().is_ok() {
            return Err(ModelError::Checkpoint("trailing payload".into()));
        }
        Ok(Checkpoint {
            model: TransformerModel::from_parts(header.config, named)?,
            epoch: header.epoch,
            step: header.step,
            eval_loss,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            enc_layers: 1,
            dec_layers: 1,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = Checkpoint {
            model: TransformerModel::new(tiny(), 9).unwrap(),
            epoch: 3,
            step: 120,
            eval_loss: 0.123_456_789_012_345_67,
        };
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.epoch, 3);
        assert_eq!(back.step, 120);
        assert_eq!(back.eval_loss.to_bits(), ck.eval_loss.to_bits());
        assert_eq!(back.model.params(), ck.model.params());
        assert_eq!(back.model.config(), ck.model.config());
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = Checkpoint {
            model: TransformerModel::new(tiny(), 1).unwrap(),
            epoch: 0,
            step: 0,
            eval_loss: 1.0,
        };
        ck.save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(Checkpoint::load(&path).is_err());
        fs::write(&path, b"nope\n").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
