//! Model file: `DLG1`, config, label index, then the input and output
//! matrices as little-endian f32.

use std::fs;
use std::path::Path;

use super::{ClassifierError, ModelConfig, TrainedModel};

const MAGIC: &[u8; 4] = b"DLG1";
// magic + 4 small ints + buckets + dim + lr + epochs + seed + label count
const HEADER: u64 = 4 + 4 + 4 + 4 + 8 + 4 + 8 + 4;

pub fn serialized_size(config: &ModelConfig, labels: &[String]) -> u64 {
    let label_bytes: u64 = labels.iter().map(|l| 4 + l.len() as u64).sum();
    let floats = u64::from(config.embedding_dim) * (u64::from(config.hash_buckets) + labels.len() as u64);
    HEADER + label_bytes + 4 * floats
}

impl TrainedModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::with_capacity(self.byte_size() as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[c.char_ngram_min, c.char_ngram_max, c.word_ngram_max, 0]);
        out.extend_from_slice(&c.hash_buckets.to_le_bytes());
        out.extend_from_slice(&c.embedding_dim.to_le_bytes());
        out.extend_from_slice(&c.learning_rate.to_le_bytes());
        out.extend_from_slice(&c.epochs.to_le_bytes());
        out.extend_from_slice(&c.seed.to_le_bytes());
        out.extend_from_slice(&(self.label_index.len() as u32).to_le_bytes());
        for l in &self.label_index {
            out.extend_from_slice(&(l.len() as u32).to_le_bytes());
            out.extend_from_slice(l.as_bytes());
        }
        for w in self.input.iter().chain(&self.output) {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ClassifierError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(ClassifierError::ModelFormat("bad magic".into()));
        }
        let small = r.take(4)?;
        let hash_buckets = r.u32()?;
        let embedding_dim = r.u32()?;
        let learning_rate = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let epochs = r.u32()?;
        let seed = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let config = ModelConfig {
            char_ngram_min: small[0],
            char_ngram_max: small[1],
            word_ngram_max: small[2],
            hash_buckets,
            embedding_dim,
            learning_rate,
            epochs,
            seed,
        };
        config.validate()?;
        let n_labels = r.u32()? as usize;
        let mut label_index = Vec::with_capacity(n_labels.min(1 << 16));
        for _ in 0..n_labels {
            let len = r.u32()? as usize;
            let s = std::str::from_utf8(r.take(len)?)
                .map_err(|_| ClassifierError::ModelFormat("label is not utf-8".into()))?;
            label_index.push(s.to_string());
        }
        let dim = embedding_dim as usize;
        let input = r.floats(hash_buckets as usize * dim)?;
        let output = r.floats(n_labels * dim)?;
        if r.pos != bytes.len() {
            return Err(ClassifierError::ModelFormat("trailing bytes".into()));
        }
        Ok(Self { config, label_index, input, output })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ClassifierError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| ClassifierError::ModelFormat("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ClassifierError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f32>, ClassifierError> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| ClassifierError::ModelFormat("size overflow".into()))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_matches_bytes() {
        let labels = vec!["zh".to_string(), "be".to_string(), "vs".to_string()];
        let m = TrainedModel::zeros(ModelConfig::minimal(7), labels);
        let bytes = m.to_bytes();
        assert_eq!(bytes.len() as u64, m.byte_size());
        assert_eq!(&bytes[..4], b"DLG1");
        assert_eq!(TrainedModel::from_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn rejects_garbage() {
        assert!(TrainedModel::from_bytes(b"DLG0").is_err());
        let m = TrainedModel::zeros(ModelConfig::minimal(1), vec!["a".into(), "b".into()]);
        let bytes = m.to_bytes();
        assert!(TrainedModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(TrainedModel::from_bytes(&long).is_err());
    }
}
