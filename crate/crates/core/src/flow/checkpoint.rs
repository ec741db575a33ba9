//! Model container.
//!
//! ```text
//! "PRNM" | version: u32 | header length: u32 | header (UTF-8 JSON)
//! | h1 length: u64 | h1 network checkpoint | g1 length: u64 | g1 network checkpoint
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{FlowError, PrnfModel, Standardization};
use crate::nn::MlpNet;

pub const MODEL_MAGIC: &[u8; 4] = b"PRNM";
pub const MODEL_VERSION: u32 = 1;

/// Everything about a trained model except its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub d: usize,
    pub standardization: Standardization,
    /// Catalog name of the problem the model was trained on, if any.
    #[serde(default)]
    pub problem: Option<String>,
    /// Domain the training initial states were drawn from.
    #[serde(default)]
    pub domain_lower: Vec<f64>,
    #[serde(default)]
    pub domain_upper: Vec<f64>,
    #[serde(default)]
    pub t_final: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub train_config: serde_json::Value,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

impl ModelHeader {
    pub fn for_model(model: &PrnfModel) -> Self {
        Self {
            d: model.dim(),
            standardization: model.standardization.clone(),
            problem: None,
            domain_lower: Vec::new(),
            domain_upper: Vec::new(),
            t_final: None,
            lambda: None,
            train_config: serde_json::Value::Null,
            provenance: serde_json::Value::Null,
        }
    }
}

impl PrnfModel {
    /// Writes the container; `header.d` and `header.standardization` are taken
    /// from the model.
    pub fn write_container<W: Write>(&self, header: &ModelHeader, mut w: W) -> Result<(), FlowError> {
        let mut header = header.clone();
        header.d = self.dim();
        header.standardization = self.standardization.clone();
        let json = serde_json::to_vec(&header).map_err(|e| FlowError::Checkpoint(e.to_string()))?;
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        for net in [&self.h1, &self.g1] {
            let bytes = net.to_bytes();
            w.write_all(&(bytes.len() as u64).to_le_bytes())?;
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn read_container<R: Read>(mut r: R) -> Result<(Self, ModelHeader), FlowError> {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if &b4 != MODEL_MAGIC {
            return Err(FlowError::Checkpoint(format!("bad magic {b4:?}")));
        }
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != MODEL_VERSION {
            return Err(FlowError::Checkpoint(format!("unsupported version {version}")));
        }
        r.read_exact(&mut b4)?;
        let len = u32::from_le_bytes(b4) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: ModelHeader = serde_json::from_slice(&json).map_err(|e| FlowError::Checkpoint(e.to_string()))?;
        let mut nets = Vec::with_capacity(2);
        for _ in 0..2 {
            let mut b8 = [0u8; 8];
            r.read_exact(&mut b8)?;
            let len = u64::from_le_bytes(b8) as usize;
            let mut blob = vec![0u8; len];
            r.read_exact(&mut blob)?;
            nets.push(MlpNet::read_checkpoint(&blob[..])?);
        }
        let g1 = nets.pop().unwrap();
        let h1 = nets.pop().unwrap();
        let model = PrnfModel::new(h1, g1, header.standardization.clone())?;
        if model.dim() != header.d {
            return Err(FlowError::Checkpoint(format!("header says d = {}, networks say {}", header.d, model.dim())));
        }
        Ok((model, header))
    }
}
