use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::flow::{FlowConfig, FlowModel};
use super::pcl::{PclConfig, PclModel};
use super::vae::{VaeConfig, VaeModel};
use crate::error::{Error, Result};
use crate::gradcore::{ParamStore, Tensor};

pub const TENSOR_MAGIC: &[u8; 4] = b"TSNT";
pub const TENSOR_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TENSOR_FILE: &str = "tensors.tsnt";

/// Encodes named tensors: magic `TSNT`, version u32, count u32, then per
/// tensor a u32-length UTF-8 name, u32 rank, u64 dims and little-endian f64 data.
pub fn encode_tensors<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let items: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&(items.len() as u32).to_le_bytes());
    for (name, t) in items {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated tensor archive".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != TENSOR_MAGIC {
        return Err(Error::Format("missing TSNT header".into()));
    }
    let version = c.u32()?;
    if version != TENSOR_VERSION {
        return Err(Error::Format(format!("unsupported TSNT version {version}")));
    }
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = c.u32()? as usize;
        let shape = (0..rank)
            .map(|_| c.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format("tensor shape overflows".into()))?;
        let raw = c.take(
            numel
                .checked_mul(8)
                .ok_or_else(|| Error::Format("tensor too large".into()))?,
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    if c.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after tensor archive".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub kind: String,
    pub config: serde_json::Value,
    pub dim: usize,
    pub seed: u64,
    pub step: usize,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Flow(FlowModel),
    Vae(VaeModel),
    Pcl(PclModel),
}

impl TrainedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::Flow(_) => "flow",
            TrainedModel::Vae(_) => "vae",
            TrainedModel::Pcl(_) => "pcl",
        }
    }

    pub fn store(&self) -> &ParamStore {
        match self {
            TrainedModel::Flow(m) => &m.store,
            TrainedModel::Vae(m) => &m.store,
            TrainedModel::Pcl(m) => &m.store,
        }
    }

    fn dim(&self) -> usize {
        match self {
            TrainedModel::Flow(m) => m.dim,
            TrainedModel::Vae(m) => m.obs_dim,
            TrainedModel::Pcl(m) => m.dim,
        }
    }

    fn config_json(&self) -> Result<serde_json::Value> {
        Ok(match self {
            TrainedModel::Flow(m) => serde_json::to_value(&m.config)?,
            TrainedModel::Vae(m) => serde_json::to_value(&m.config)?,
            TrainedModel::Pcl(m) => serde_json::to_value(&m.config)?,
        })
    }

    /// Latent codes (posterior means for the VAE).
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            TrainedModel::Flow(m) => m.encode(x),
            TrainedModel::Vae(m) => m.encode_mean(x),
            TrainedModel::Pcl(m) => m.encode(x),
        }
    }
}

pub fn save_checkpoint(
    dir: &Path,
    model: &TrainedModel,
    seed: u64,
    step: usize,
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let store = model.store();
    let manifest = Manifest {
        kind: model.kind().to_string(),
        config: model.config_json()?,
        dim: model.dim(),
        seed,
        step,
        tensors: store
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let tpath = dir.join(TENSOR_FILE);
    let mut f = fs::File::create(&tpath).map_err(|e| Error::io(&tpath, e))?;
    f.write_all(&encode_tensors(store.iter()))
        .map_err(|e| Error::io(&tpath, e))?;
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(TrainedModel, Manifest)> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let tpath = dir.join(TENSOR_FILE);
    let bytes = fs::read(&tpath).map_err(|e| Error::io(&tpath, e))?;
    let mut store = ParamStore::new();
    for (name, t) in decode_tensors(&bytes)? {
        store.insert(name, t);
    }
    let listed: Vec<TensorEntry> = store
        .iter()
        .map(|(n, t)| TensorEntry {
            name: n.to_string(),
            shape: t.shape().to_vec(),
        })
        .collect();
    if listed != manifest.tensors {
        return Err(Error::Format(
            "manifest tensor list does not match the archive".into(),
        ));
    }
    let dim = manifest.dim;
    let model = match manifest.kind.as_str() {
        "flow" => {
            let config: FlowConfig = serde_json::from_value(manifest.config.clone())?;
            TrainedModel::Flow(FlowModel { config, dim, store })
        }
        "vae" => {
            let config: VaeConfig = serde_json::from_value(manifest.config.clone())?;
            TrainedModel::Vae(VaeModel {
                config,
                obs_dim: dim,
                store,
            })
        }
        "pcl" => {
            let config: PclConfig = serde_json::from_value(manifest.config.clone())?;
            TrainedModel::Pcl(PclModel { config, dim, store })
        }
        other => return Err(Error::Format(format!("unknown checkpoint kind `{other}`"))),
    };
    Ok((model, manifest))
}
