//! Checkpoint directories.
//!
//! `model.bin` holds the parameters, `model.json` the architecture and run
//! state, and `optimizer.bin` (optional) the Adam moments stored as tensors
//! named `m/<param>` and `v/<param>`.
//!
//! Tensor blob layout, all integers little-endian `u32`:
//! magic `P2DTENS1`, tensor count, then per tensor the name length, UTF-8
//! name, rows, cols and `rows * cols` little-endian `f32` values in row-major
//! order.

use std::path::Path;

use plane2depth::autodiff::{Adam, ParamStore, Tensor};
use plane2depth::objectives::{LossWeights, SuperviseLayers};
use plane2depth::planenet::{NetConfig, PlaneNet};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ToolError};

pub const MAGIC: &[u8; 8] = b"P2DTENS1";
pub const FORMAT_VERSION: u32 = 1;
pub const MODEL_FILE: &str = "model.bin";
pub const META_FILE: &str = "model.json";
pub const OPTIMIZER_FILE: &str = "optimizer.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub model: NetConfig,
    pub width: usize,
    pub height: usize,
    /// Depth range the network was trained for, in meters.
    pub max_depth: f64,
    pub iteration: u64,
    pub optimizer_state: bool,
    pub optimizer_step: u64,
    pub seed: u64,
    pub loss: LossWeights,
    pub supervise_layers: SuperviseLayers,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ParamStore<f32>,
    pub optimizer: Option<Adam<f32>>,
}

impl Checkpoint {
    pub fn network(&self) -> Result<PlaneNet<f32>> {
        Ok(PlaneNet::from_params(self.meta.model.clone(), &self.params)?)
    }
}

pub fn encode_tensors<'a>(tensors: impl Iterator<Item = (&'a str, &'a Tensor<f32>)>) -> Vec<u8> {
    let tensors: Vec<_> = tensors.collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(ToolError::Checkpoint(format!(
                "{}: truncated at byte {}",
                self.path.display(),
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_tensors(bytes: &[u8], path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(ToolError::Checkpoint(format!("{}: not a tensor blob", path.display())));
    }
    let count = r.u32()?;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| ToolError::Checkpoint(format!("{}: tensor name is not UTF-8", path.display())))?
            .to_string();
        let (rows, cols) = (r.u32()?, r.u32()?);
        let raw = r.take(rows * cols * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((name, Tensor::from_vec(rows, cols, data)));
    }
    if r.pos != bytes.len() {
        return Err(ToolError::Checkpoint(format!("{}: trailing bytes", path.display())));
    }
    Ok(out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| ToolError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| ToolError::io(path, e))
}

pub fn save(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| ToolError::io(dir, e))?;
    write_atomic(&dir.join(MODEL_FILE), &encode_tensors(ckpt.params.iter()))?;
    if let Some(opt) = &ckpt.optimizer {
        let m: Vec<(String, &Tensor<f32>)> = opt.m.iter().map(|(n, t)| (format!("m/{n}"), t)).collect();
        let v: Vec<(String, &Tensor<f32>)> = opt.v.iter().map(|(n, t)| (format!("v/{n}"), t)).collect();
        let blob = encode_tensors(m.iter().chain(&v).map(|(n, t)| (n.as_str(), *t)));
        write_atomic(&dir.join(OPTIMIZER_FILE), &blob)?;
    } else {
        let p = dir.join(OPTIMIZER_FILE);
        if p.exists() {
            std::fs::remove_file(&p).map_err(|e| ToolError::io(&p, e))?;
        }
    }
    let meta = serde_json::to_vec_pretty(&ckpt.meta).expect("checkpoint metadata serializes");
    write_atomic(&dir.join(META_FILE), &meta)
}

fn store_from(tensors: Vec<(String, Tensor<f32>)>) -> ParamStore<f32> {
    let mut store = ParamStore::new();
    for (n, t) in tensors {
        store.add(n, t);
    }
    store
}

pub fn load(dir: &Path) -> Result<Checkpoint> {
    let meta_path = dir.join(META_FILE);
    let text = std::fs::read(&meta_path).map_err(|e| ToolError::io(&meta_path, e))?;
    let meta: CheckpointMeta = serde_json::from_slice(&text)
        .map_err(|e| ToolError::Checkpoint(format!("{}: {e}", meta_path.display())))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(ToolError::Checkpoint(format!(
            "{}: unsupported format version {}",
            meta_path.display(),
            meta.format_version
        )));
    }
    let model_path = dir.join(MODEL_FILE);
    let bytes = std::fs::read(&model_path).map_err(|e| ToolError::io(&model_path, e))?;
    let tensors = decode_tensors(&bytes, &model_path)?;
    let mut seen = std::collections::HashSet::new();
    if let Some((dup, _)) = tensors.iter().find(|(n, _)| !seen.insert(n.clone())) {
        return Err(ToolError::Checkpoint(format!("{}: duplicate tensor `{dup}`", model_path.display())));
    }
    let params = store_from(tensors);
    let optimizer = if meta.optimizer_state {
        let p = dir.join(OPTIMIZER_FILE);
        let bytes = std::fs::read(&p).map_err(|e| ToolError::io(&p, e))?;
        let mut m = params.zeros_like();
        let mut v = params.zeros_like();
        for (name, t) in decode_tensors(&bytes, &p)? {
            let (target, key) = match name.split_once('/') {
                Some(("m", k)) => (&mut m, k),
                Some(("v", k)) => (&mut v, k),
                _ => return Err(ToolError::Checkpoint(format!("{}: unexpected tensor `{name}`", p.display()))),
            };
            let id = target
                .id(key)
                .ok_or_else(|| ToolError::Checkpoint(format!("{}: unknown parameter `{key}`", p.display())))?;
            if target.get(id).shape() != t.shape() {
                return Err(ToolError::Checkpoint(format!("{}: shape mismatch for `{name}`", p.display())));
            }
            *target.get_mut(id) = t;
        }
        let mut adam = Adam::new(&params, 0.9, 0.999);
        adam.m = m;
        adam.v = v;
        adam.step = meta.optimizer_step;
        Some(adam)
    } else {
        None
    };
    Ok(Checkpoint {
        meta,
        params,
        optimizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(model: NetConfig) -> CheckpointMeta {
        CheckpointMeta {
            format_version: FORMAT_VERSION,
            model,
            width: 32,
            height: 32,
            max_depth: 10.0,
            iteration: 7,
            optimizer_state: true,
            optimizer_step: 7,
            seed: 3,
            loss: LossWeights::default(),
            supervise_layers: SuperviseLayers::All,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let cfg = NetConfig {
            num_queries: 4,
            channels: 8,
            query_dim: 8,
            backbone_width: 8,
            ..NetConfig::default()
        };
        let net = PlaneNet::<f32>::new(cfg.clone(), 5).unwrap();
        let mut adam = Adam::new(&net.params, 0.9, 0.999);
        adam.step = 7;
        let first = adam.m.ids().next().unwrap();
        adam.m.get_mut(first).data_mut()[0] = 0.25;
        let ckpt = Checkpoint {
            meta: meta(cfg),
            params: net.params.clone(),
            optimizer: Some(adam.clone()),
        };
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &ckpt).unwrap();
        let back = load(dir.path()).unwrap();
        assert_eq!(back.meta, ckpt.meta);
        assert_eq!(back.params, ckpt.params);
        assert_eq!(back.network().unwrap().params, net.params);
        let opt = back.optimizer.unwrap();
        assert_eq!((opt.m, opt.v, opt.step), (adam.m, adam.v, adam.step));
    }

    #[test]
    fn corrupt_blobs_are_rejected() {
        let p = Path::new("x.bin");
        assert!(decode_tensors(b"NOTMAGIC", p).is_err());
        let mut store = ParamStore::<f32>::new();
        store.add("a", Tensor::from_vec(1, 2, vec![1.0, 2.0]));
        let blob = encode_tensors(store.iter());
        assert_eq!(decode_tensors(&blob, p).unwrap()[0].1.data(), &[1.0, 2.0]);
        assert!(decode_tensors(&blob[..blob.len() - 1], p).is_err());
        let mut longer = blob.clone();
        longer.push(0);
        assert!(decode_tensors(&longer, p).is_err());
    }
}
