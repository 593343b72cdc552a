//! `model.bin` layout: the 8-byte magic `LSRNN\0\0\0`, a little-endian u32
//! format version, a u64 header length, a JSON header, then every tensor as
//! little-endian f64 in the order the header lists them. Tensors are stored
//! in binary so values survive the round trip bit for bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::{ModelConfig, RnnError, RnnModel};
use crate::frames::SettingId;
use crate::normalize::NormStats;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"LSRNN\0\0\0";

/// A trained model with everything needed to apply it to new audio.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub model: RnnModel,
    pub setting: SettingId,
    pub norm: NormStats,
    /// Free-form string metadata (task name, class names, ...).
    pub metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    setting: SettingId,
    /// NormStats in their own exact text form.
    norm: String,
    metadata: BTreeMap<String, String>,
    tensors: Vec<TensorInfo>,
}

impl ModelBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = &self.model.config;
        let params = &self.model.params;
        let mut tensors: Vec<TensorInfo> = ParamSet::names(cfg)
            .into_iter()
            .zip(params.shapes())
            .map(|(name, (rows, cols))| TensorInfo { name, rows, cols })
            .collect();
        let n = cfg.n_features;
        tensors.push(TensorInfo { name: "bn.running_mean".into(), rows: n, cols: 1 });
        tensors.push(TensorInfo { name: "bn.running_var".into(), rows: n, cols: 1 });
        let header = Header {
            config: cfg.clone(),
            setting: self.setting,
            norm: String::from_utf8(self.norm.to_bytes()).expect("stats text is UTF-8"),
            metadata: self.metadata.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + json.len() + 8 * (params.len() + 2 * n));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let data = params.tensors().into_iter().chain([self.model.running_mean.as_slice(), &self.model.running_var]);
        for t in data {
            for x in t {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RnnError> {
        let bad = |m: &str| RnnError::Malformed(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a model file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if body.len() < header_len {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..header_len]).map_err(|e| bad(&e.to_string()))?;
        let config = header.config;
        config.validate()?;
        let norm = NormStats::from_bytes(header.norm.as_bytes()).map_err(|e| bad(&e.to_string()))?;

        let mut model = RnnModel::zeros(config.clone())?;
        let mut expected: Vec<(usize, usize)> = model.params.shapes();
        expected.extend([(config.n_features, 1); 2]);
        let found: Vec<(usize, usize)> = header.tensors.iter().map(|t| (t.rows, t.cols)).collect();
        if found != expected {
            return Err(bad("tensor shapes do not match the configuration"));
        }
        let total: usize = expected.iter().map(|(r, c)| r * c).sum();
        let data = &body[header_len..];
        if data.len() != 8 * total {
            return Err(bad(&format!("expected {} data bytes, found {}", 8 * total, data.len())));
        }
        let mut values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let RnnModel { params, running_mean, running_var, .. } = &mut model;
        for t in params.tensors_mut().into_iter().chain([running_mean.as_mut_slice(), running_var.as_mut_slice()]) {
            t.iter_mut().for_each(|x| *x = values.next().expect("length checked"));
        }
        Ok(Self { model, setting: header.setting, norm, metadata: header.metadata })
    }
}
