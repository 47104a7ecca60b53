//! Container for an encoded image.
//!
//! ```text
//! "MLRQ"  version: u8 = 1  width: u32  height: u32  block: u8  layers: u8  model hash: u64
//! per layer: payload_len: u32, payload bytes
//! ```
//!
//! Layer payloads are independent arithmetic-coded index streams, so dropping
//! trailing records leaves a valid, coarser stream.

use crate::error::{Error, Result};
use crate::model::Reader;

pub const STREAM_MAGIC: &[u8; 4] = b"MLRQ";
pub const STREAM_VERSION: u8 = 1;
/// Size of the fixed header in bytes.
pub const HEADER_LEN: usize = 4 + 1 + 4 + 4 + 1 + 1 + 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub width: u32,
    pub height: u32,
    pub block: u8,
    pub model_hash: u64,
    pub payloads: Vec<Vec<u8>>,
}

impl Bitstream {
    /// Number of layers `J` carried by the stream.
    pub fn layers(&self) -> usize {
        self.payloads.len()
    }

    /// Number of blocks per layer.
    pub fn block_count(&self) -> usize {
        let b = self.block as usize;
        (self.width as usize).div_ceil(b) * (self.height as usize).div_ceil(b)
    }

    pub fn payload_bytes(&self) -> usize {
        self.payloads.iter().map(Vec::len).sum()
    }

    /// The same stream keeping only the first `j` layers.
    pub fn truncated(&self, j: usize) -> Result<Bitstream> {
        if j > self.layers() {
            return Err(Error::invalid(format!(
                "cannot keep {j} layers of a {}-layer stream",
                self.layers()
            )));
        }
        Ok(Bitstream {
            payloads: self.payloads[..j].to_vec(),
            ..self.clone()
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.layers() + self.payload_bytes());
        out.extend_from_slice(STREAM_MAGIC);
        out.push(STREAM_VERSION);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.push(self.block);
        out.push(self.layers() as u8);
        out.extend_from_slice(&self.model_hash.to_le_bytes());
        for p in &self.payloads {
            out.extend_from_slice(&(p.len() as u32).to_le_bytes());
            out.extend_from_slice(p);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Bitstream> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != STREAM_MAGIC {
            return Err(Error::Format("not an mlrq bitstream (bad magic)".into()));
        }
        let version = r.u8()?;
        if version != STREAM_VERSION {
            return Err(Error::Format(format!("unsupported bitstream version {version}")));
        }
        let width = r.u32()?;
        let height = r.u32()?;
        let block = r.u8()?;
        let layers = r.u8()? as usize;
        let model_hash = r.u64()?;
        if width == 0 || height == 0 || block == 0 {
            return Err(Error::Format(format!(
                "invalid geometry {width}x{height}, block {block}"
            )));
        }
        let mut payloads = Vec::with_capacity(layers);
        for _ in 0..layers {
            let len = r.u32()? as usize;
            payloads.push(r.take(len)?.to_vec());
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after the last layer",
                bytes.len() - r.pos
            )));
        }
        Ok(Bitstream {
            width,
            height,
            block,
            model_hash,
            payloads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Bitstream {
        Bitstream {
            width: 10,
            height: 7,
            block: 4,
            model_hash: 0x0123_4567_89ab_cdef,
            payloads: vec![vec![1, 2, 3], vec![], vec![9; 5]],
        }
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], b"MLRQ");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &10u32.to_le_bytes());
        assert_eq!(&bytes[9..13], &7u32.to_le_bytes());
        assert_eq!(bytes[13], 4);
        assert_eq!(bytes[14], 3);
        assert_eq!(&bytes[15..23], &0x0123_4567_89ab_cdefu64.to_le_bytes());
        assert_eq!(&bytes[23..27], &3u32.to_le_bytes());
        assert_eq!(bytes.len(), HEADER_LEN + 12 + 8);
        assert_eq!(sample().block_count(), 6);
    }

    #[test]
    fn roundtrip_and_truncation() {
        let s = sample();
        assert_eq!(Bitstream::from_bytes(&s.to_bytes()).unwrap(), s);
        let t = s.truncated(1).unwrap();
        assert_eq!(t.payloads, vec![vec![1, 2, 3]]);
        assert!(s.truncated(4).is_err());
        assert_eq!(s.truncated(0).unwrap().to_bytes().len(), HEADER_LEN);
    }

    #[test]
    fn rejects_damage() {
        let bytes = sample().to_bytes();
        assert!(matches!(
            Bitstream::from_bytes(&bytes[..bytes.len() - 2]),
            Err(Error::Truncated(_))
        ));
        let mut v = bytes.clone();
        v[4] = 2;
        assert!(Bitstream::from_bytes(&v).is_err());
        let mut v = bytes.clone();
        v.push(0);
        assert!(Bitstream::from_bytes(&v).is_err());
        assert!(Bitstream::from_bytes(b"MLR").is_err());
    }
}
