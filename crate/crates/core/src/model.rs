//! Model file: the trained codebooks plus one frequency table per layer.
//!
//! Little-endian layout:
//!
//! ```text
//! "MLRQMDL1"  n: u32  L: u16
//! per layer:  k: u32  k*n f64 codewords (row-major)  k: u32  k u32 counts
//! ```
//!
//! Bitstreams refer to a model by the 64-bit FNV-1a hash of these bytes.

use std::fs;
use std::path::Path;

use crate::entropy::FreqTable;
use crate::error::{Error, Result};
use crate::vq::{Codebook, LayerStack};

pub const MODEL_MAGIC: &[u8; 8] = b"MLRQMDL1";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    stack: LayerStack,
    tables: Vec<FreqTable>,
}

impl Model {
    pub fn new(stack: LayerStack, tables: Vec<FreqTable>) -> Result<Self> {
        if tables.len() != stack.depth() {
            return Err(Error::DimensionMismatch {
                expected: stack.depth(),
                found: tables.len(),
            });
        }
        for (i, (cb, t)) in stack.layers().iter().zip(&tables).enumerate() {
            if cb.size() != t.symbol_count() {
                return Err(Error::invalid(format!(
                    "layer {} has {} codewords but its table has {} symbols",
                    i + 1,
                    cb.size(),
                    t.symbol_count()
                )));
            }
        }
        if stack.depth() > u16::MAX as usize || stack.dim() > u32::MAX as usize {
            return Err(Error::invalid("model too large for the file format"));
        }
        Ok(Model { stack, tables })
    }

    pub fn stack(&self) -> &LayerStack {
        &self.stack
    }

    pub fn tables(&self) -> &[FreqTable] {
        &self.tables
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.stack.dim();
        let mut out = Vec::with_capacity(14 + self.stack.layers().iter().map(|c| 8 + c.size() * (8 * n + 4)).sum::<usize>());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(self.stack.depth() as u16).to_le_bytes());
        for (cb, table) in self.stack.layers().iter().zip(&self.tables) {
            out.extend_from_slice(&(cb.size() as u32).to_le_bytes());
            for v in cb.rows() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&(table.symbol_count() as u32).to_le_bytes());
            for c in table.counts() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MODEL_MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let n = r.u32()? as usize;
        let depth = r.u16()? as usize;
        if n == 0 || depth == 0 {
            return Err(Error::Format(format!("empty model: n={n}, L={depth}")));
        }
        let mut layers = Vec::with_capacity(depth);
        let mut tables = Vec::with_capacity(depth);
        for _ in 0..depth {
            let k = r.u32()? as usize;
            let raw = r.take(k.checked_mul(n).and_then(|m| m.checked_mul(8)).ok_or_else(|| {
                Error::Format("codebook size overflows".into())
            })?)?;
            let rows = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            layers.push(Codebook::new(k, n, rows).map_err(|e| Error::Format(e.to_string()))?);
            let symbols = r.u32()? as usize;
            let raw = r.take(symbols.checked_mul(4).ok_or_else(|| Error::Format("table size overflows".into()))?)?;
            let counts = raw
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tables.push(FreqTable::from_counts(counts).map_err(|e| Error::Format(e.to_string()))?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after model",
                bytes.len() - r.pos
            )));
        }
        let stack = LayerStack::new(layers).map_err(|e| Error::Format(e.to_string()))?;
        let model = Model::new(stack, tables).map_err(|e| Error::Format(e.to_string()))?;
        // Rescaled tables would re-serialize differently; reject them so the hash is stable.
        if model.to_bytes() != bytes {
            return Err(Error::Format("model does not re-serialize canonically".into()));
        }
        Ok(model)
    }

    /// Identity of the model: FNV-1a over its serialized bytes.
    pub fn hash(&self) -> u64 {
        fnv1a64(&self.to_bytes())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Model::from_bytes(&fs::read(path)?)
    }
}

pub(crate) struct Reader<'a> {
    pub(crate) bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Truncated(format!(
                    "needed {len} bytes at offset {}, only {} available",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model() -> Model {
        let a = Codebook::new(2, 3, vec![1.0, 2.0, 3.0, -0.5, 0.25, 1e-300]).unwrap();
        let b = Codebook::new(1, 3, vec![0.0, 0.0, 7.5]).unwrap();
        let stack = LayerStack::new(vec![a, b]).unwrap();
        let tables = vec![
            FreqTable::from_counts(vec![3, 1]).unwrap(),
            FreqTable::from_counts(vec![1]).unwrap(),
        ];
        Model::new(stack, tables).unwrap()
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn layout_is_exact() {
        let bytes = small_model().to_bytes();
        assert_eq!(&bytes[..8], b"MLRQMDL1");
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..14], &2u16.to_le_bytes());
        assert_eq!(&bytes[14..18], &2u32.to_le_bytes());
        assert_eq!(&bytes[18..26], &1.0f64.to_le_bytes());
        // 14 header + layer 1 (4 + 48 + 4 + 8) + layer 2 (4 + 24 + 4 + 4)
        assert_eq!(bytes.len(), 14 + 64 + 36);
    }

    #[test]
    fn roundtrip_preserves_model_and_hash() {
        let m = small_model();
        let back = Model::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.hash(), m.hash());
    }

    #[test]
    fn rejects_damaged_files() {
        let bytes = small_model().to_bytes();
        assert!(matches!(Model::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Truncated(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Model::from_bytes(&bad), Err(Error::Format(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Model::from_bytes(&extra).is_err());
        // Table size disagreeing with the codebook.
        let mut wrong = bytes;
        let at = 14 + 4 + 48;
        wrong[at..at + 4].copy_from_slice(&1u32.to_le_bytes());
        assert!(Model::from_bytes(&wrong).is_err());
    }

    #[test]
    fn table_count_must_match_layers() {
        let m = small_model();
        assert!(Model::new(m.stack().clone(), m.tables()[..1].to_vec()).is_err());
        assert!(Model::new(
            m.stack().clone(),
            vec![FreqTable::uniform(3).unwrap(), FreqTable::uniform(1).unwrap()]
        )
        .is_err());
    }
}
