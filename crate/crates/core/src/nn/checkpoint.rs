//! Network checkpoints.
//!
//! ```text
//! "PRNW" | version: u32 | layer count L: u32 | widths: (L+1) × u32
//! | per layer: row-major weights (f64 LE), then biases (f64 LE)
//! ```
//!
//! A JSON sidecar carries human-readable metadata.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{MlpNet, NnError};

pub const NET_MAGIC: &[u8; 4] = b"PRNW";
pub const NET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetMetadata {
    pub widths: Vec<usize>,
    pub seed: u64,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

impl MlpNet {
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        w.write_all(NET_MAGIC)?;
        w.write_all(&NET_VERSION.to_le_bytes())?;
        w.write_all(&(self.layers() as u32).to_le_bytes())?;
        for &width in self.widths() {
            w.write_all(&(width as u32).to_le_bytes())?;
        }
        for v in self.params() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self, NnError> {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if &b4 != NET_MAGIC {
            return Err(NnError::Checkpoint(format!("bad magic {b4:?}")));
        }
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != NET_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        r.read_exact(&mut b4)?;
        let layers = u32::from_le_bytes(b4) as usize;
        if layers == 0 || layers > 1024 {
            return Err(NnError::Checkpoint(format!("implausible layer count {layers}")));
        }
        let mut widths = Vec::with_capacity(layers + 1);
        for _ in 0..=layers {
            r.read_exact(&mut b4)?;
            widths.push(u32::from_le_bytes(b4) as usize);
        }
        let shape = MlpNet::zeros(&widths)?;
        let mut params = Vec::with_capacity(shape.num_params());
        let mut b8 = [0u8; 8];
        for _ in 0..shape.num_params() {
            r.read_exact(&mut b8)?;
            params.push(f64::from_le_bytes(b8));
        }
        MlpNet::from_params(&widths, params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_and_layout() {
        let net = MlpNet::init(&[2, 3, 1], 4).unwrap();
        let bytes = net.to_bytes();
        assert_eq!(&bytes[..4], b"PRNW");
        assert_eq!(bytes.len(), 4 + 4 + 4 + 3 * 4 + 8 * net.num_params());
        let back = MlpNet::read_checkpoint(&bytes[..]).unwrap();
        assert_eq!(back, net);
        assert!(MlpNet::read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn metadata_is_json() {
        let meta = NetMetadata { widths: vec![2, 3, 1], seed: 4, provenance: serde_json::json!({"problem": "sqrt1d"}) };
        let s = serde_json::to_string(&meta).unwrap();
        assert_eq!(serde_json::from_str::<NetMetadata>(&s).unwrap(), meta);
    }
}
