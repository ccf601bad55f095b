//! Named parameter store with deterministic ordering and a bit-exact binary
//! checkpoint encoding.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "MFCP" | u32 version | u32 tag_len | tag bytes (utf-8)
//! | u32 n_records | records...
//! record: u32 name_len | name bytes | u32 rows | u32 cols | rows*cols f64
//! ```
//!
//! The tag carries the config hash of the run that produced the checkpoint.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::tensor::Tensor;
use super::{NumericsError, Result};

const MAGIC: &[u8; 4] = b"MFCP";
const VERSION: u32 = 1;

/// Ordered collection of named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    entries: Vec<(String, Tensor)>,
    index: BTreeMap<String, usize>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(NumericsError::DuplicateParam(name.to_string()));
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push((name.to_string(), tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].1)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.entries[i].1),
            None => Err(NumericsError::UnknownParam(name.to_string())),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Insertion-ordered iteration; this is also the serialization order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar coordinates across all tensors.
    pub fn coordinate_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Sum of squared entries over every tensor whose name matches the
    /// given prefix filter (used for weight-decay terms).
    pub fn l2_sq_matching(&self, prefix: &str) -> f64 {
        self.entries
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, t)| t.l2_sq())
            .sum()
    }

    pub fn to_bytes(&self, tag: &str) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(tag.len() as u32).to_le_bytes());
        out.extend_from_slice(tag.as_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, tensor) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(tensor.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(tensor.cols() as u32).to_le_bytes());
            for v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Decodes a checkpoint, returning the store and its tag.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, String)> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(NumericsError::Corrupt("bad magic"));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(NumericsError::Corrupt("unsupported version"));
        }
        let tag_len = cur.u32()? as usize;
        let tag = core::str::from_utf8(cur.take(tag_len)?)
            .map_err(|_| NumericsError::Corrupt("tag not utf-8"))?
            .to_string();
        let n = cur.u32()? as usize;
        let mut params = ModelParams::new();
        for _ in 0..n {
            let name_len = cur.u32()? as usize;
            let name = core::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| NumericsError::Corrupt("name not utf-8"))?
                .to_string();
            let rows = cur.u32()? as usize;
            let cols = cur.u32()? as usize;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(f64::from_le_bytes(
                    cur.take(8)?.try_into().expect("8 bytes"),
                ));
            }
            params.insert(&name, Tensor::from_vec(rows, cols, data)?)?;
        }
        if cur.pos != bytes.len() {
            return Err(NumericsError::Corrupt("trailing bytes"));
        }
        Ok((params, tag))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(NumericsError::Corrupt("truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = Rng::new(9);
        let mut p = ModelParams::new();
        p.insert("w1", Tensor::xavier(3, 4, &mut rng)).unwrap();
        p.insert("b1", Tensor::zeros(1, 4)).unwrap();
        p.insert("scalar", Tensor::scalar(-0.125)).unwrap();
        let bytes = p.to_bytes("abc123");
        let (q, tag) = ModelParams::from_bytes(&bytes).unwrap();
        assert_eq!(tag, "abc123");
        assert_eq!(p, q);
        // Serializing again yields identical bytes.
        assert_eq!(bytes, q.to_bytes("abc123"));
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut p = ModelParams::new();
        p.insert("w", Tensor::zeros(1, 1)).unwrap();
        assert!(matches!(
            p.insert("w", Tensor::zeros(1, 1)),
            Err(NumericsError::DuplicateParam(_))
        ));
    }

    #[test]
    fn corrupt_inputs_rejected() {
        assert!(ModelParams::from_bytes(b"nope").is_err());
        let mut p = ModelParams::new();
        p.insert("w", Tensor::zeros(2, 2)).unwrap();
        let mut bytes = p.to_bytes("t");
        bytes.truncate(bytes.len() - 3);
        assert!(ModelParams::from_bytes(&bytes).is_err());
    }

    #[test]
    fn preserves_insertion_order() {
        let mut p = ModelParams::new();
        p.insert("z", Tensor::zeros(1, 1)).unwrap();
        p.insert("a", Tensor::zeros(1, 1)).unwrap();
        let names: Vec<&str> = p.iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["z", "a"]);
    }
}
