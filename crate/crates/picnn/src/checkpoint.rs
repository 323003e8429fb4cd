//! Per-step weight files plus a JSON manifest.
//!
//! `ckpt_{k:04}.bin` layout (little endian):
//!
//! ```text
//! b"PFCK" | u32 version | u32 step | u32 n_tensors
//! n_tensors x ( u64 len | len x f32 )
//! [u8; 32] SHA-256 of every preceding byte
//! ```
//!
//! Tensors appear in the order listed in `manifest.json`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::input::{ControlBounds, ScalingParams};
use crate::net::{NetworkSpec, PicNet, TensorInfo};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"PFCK";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct StepCheckpoint {
    pub step: usize,
    pub params: Vec<f32>,
    pub final_loss: f64,
    pub epochs_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSet {
    pub spec: NetworkSpec,
    pub spec_hash: String,
    pub scaling: ScalingParams,
    pub bounds: ControlBounds,
    pub tensors: Vec<TensorInfo>,
    pub steps: Vec<StepCheckpoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestTensor {
    name: String,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestStep {
    step: usize,
    file: String,
    sha256: String,
    final_loss: f64,
    epochs_used: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    spec: NetworkSpec,
    spec_hash: String,
    parameter_count: usize,
    scaling: ScalingParams,
    bounds: ControlBounds,
    tensors: Vec<ManifestTensor>,
    steps: Vec<ManifestStep>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn checkpoint_file_name(step: usize) -> String {
    format!("ckpt_{step:04}.bin")
}

/// Writes through a temporary sibling and renames over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl CheckpointSet {
    pub fn new(net: &PicNet, scaling: ScalingParams, bounds: ControlBounds, steps: Vec<StepCheckpoint>) -> Self {
        CheckpointSet {
            spec: *net.spec(),
            spec_hash: net.spec().hash(),
            scaling,
            bounds,
            tensors: net.tensors().to_vec(),
            steps,
        }
    }

    pub fn step(&self, k: usize) -> Option<&StepCheckpoint> {
        self.steps.iter().find(|s| s.step == k)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len).sum()
    }

    pub(crate) fn check_hash(&self) -> Result<()> {
        let expected = self.spec.hash();
        if self.spec_hash != expected {
            return Err(Error::SpecHashMismatch { expected, found: self.spec_hash.clone() });
        }
        Ok(())
    }

    fn encode_step(&self, s: &StepCheckpoint) -> Vec<u8> {
        let mut buf = Vec::with_capacity(16 + 8 * self.tensors.len() + 4 * s.params.len() + 32);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(s.step as u32).to_le_bytes());
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            buf.extend_from_slice(&(t.len as u64).to_le_bytes());
            for v in &s.params[t.offset..t.offset + t.len] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        buf
    }
}

/// Writes every step file, then the manifest.
pub fn save_checkpoints(set: &CheckpointSet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = set.parameter_count();
    let mut steps = Vec::with_capacity(set.steps.len());
    for s in &set.steps {
        if s.params.len() != n {
            return Err(Error::ShapeMismatch { expected: format!("{n} parameters"), found: format!("{}", s.params.len()) });
        }
        let bytes = set.encode_step(s);
        let file = checkpoint_file_name(s.step);
        write_atomic(&dir.join(&file), &bytes)?;
        steps.push(ManifestStep {
            step: s.step,
            file,
            sha256: hex(&bytes[bytes.len() - 32..]),
            final_loss: s.final_loss,
            epochs_used: s.epochs_used,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        spec: set.spec,
        spec_hash: set.spec_hash.clone(),
        parameter_count: n,
        scaling: set.scaling,
        bounds: set.bounds,
        tensors: set.tensors.iter().map(|t| ManifestTensor { name: t.name.clone(), len: t.len }).collect(),
        steps,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    write_atomic(&dir.join(MANIFEST), json.as_bytes())
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CorruptCheckpoint { path: path.display().to_string(), reason: reason.into() }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

fn decode_step(path: &Path, bytes: &[u8], tensors: &[TensorInfo]) -> Result<(usize, Vec<f32>)> {
    if bytes.len() < 16 + 32 {
        return Err(corrupt(path, "truncated"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt(path, "checksum mismatch"));
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(4) != Some(MAGIC.as_slice()) {
        return Err(corrupt(path, "bad magic"));
    }
    let version = r.u32().ok_or_else(|| corrupt(path, "truncated header"))?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let step = r.u32().ok_or_else(|| corrupt(path, "truncated header"))? as usize;
    let count = r.u32().ok_or_else(|| corrupt(path, "truncated header"))? as usize;
    if count != tensors.len() {
        return Err(corrupt(path, format!("{count} tensors, manifest lists {}", tensors.len())));
    }
    let mut params = Vec::with_capacity(tensors.iter().map(|t| t.len).sum());
    for t in tensors {
        let len = r.u64().ok_or_else(|| corrupt(path, "truncated tensor header"))? as usize;
        if len != t.len {
            return Err(corrupt(path, format!("tensor {} has {len} values, expected {}", t.name, t.len)));
        }
        let data = r.take(4 * len).ok_or_else(|| corrupt(path, "truncated tensor"))?;
        params.extend(data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))));
    }
    if r.pos != body.len() {
        return Err(corrupt(path, "trailing bytes"));
    }
    Ok((step, params))
}

/// Loads a set written by [`save_checkpoints`]. With `expected` given, the
/// stored spec must hash identically.
pub fn load_checkpoints(dir: &Path, expected: Option<&NetworkSpec>) -> Result<CheckpointSet> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| corrupt(&mpath, e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: manifest.format_version, expected: FORMAT_VERSION });
    }
    let net = PicNet::new(manifest.spec)?;
    let own_hash = manifest.spec.hash();
    if manifest.spec_hash != own_hash {
        return Err(Error::SpecHashMismatch { expected: own_hash, found: manifest.spec_hash });
    }
    if let Some(spec) = expected {
        if spec.hash() != manifest.spec_hash {
            return Err(Error::SpecHashMismatch { expected: spec.hash(), found: manifest.spec_hash });
        }
    }
    let layout = net.tensors();
    let listed_ok = layout.len() == manifest.tensors.len()
        && layout.iter().zip(&manifest.tensors).all(|(a, b)| a.name == b.name && a.len == b.len);
    if !listed_ok || manifest.parameter_count != net.n_params() {
        return Err(corrupt(&mpath, "tensor list does not match the network spec"));
    }
    let mut steps = Vec::with_capacity(manifest.steps.len());
    for ms in &manifest.steps {
        let path = dir.join(&ms.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let (step, params) = decode_step(&path, &bytes, layout)?;
        if step != ms.step {
            return Err(corrupt(&path, format!("holds step {step}, manifest says {}", ms.step)));
        }
        if hex(&bytes[bytes.len() - 32..]) != ms.sha256 {
            return Err(corrupt(&path, "checksum differs from manifest"));
        }
        steps.push(StepCheckpoint { step, params, final_loss: ms.final_loss, epochs_used: ms.epochs_used });
    }
    Ok(CheckpointSet {
        spec: manifest.spec,
        spec_hash: manifest.spec_hash,
        scaling: manifest.scaling,
        bounds: manifest.bounds,
        tensors: layout.to_vec(),
        steps,
    })
}
