//! Binary checkpoints holding parameters, Adam state and training metadata.
//!
//! Little-endian:
//!
//! ```text
//! "DGCK" | version u16
//! arch:  kind u8 | grid u32 | latent u32 | width u32 | depth u32 | resnet u8 | op_init u8
//! meta:  seed u64 | epoch u64 | best_val f64 | phase u8 | lr f64 | config_hash [u8; 32]
//! adam step u64 | n_tensors u32
//! per tensor: name_len u16 | name | decay u8 | rank u8 | dims u32[rank] |
//!             value f64[] | m f64[] | v f64[]
//! ```

use std::fs;
use std::path::Path;

use super::arch::{ArchKind, Architecture, Model, OperatorInit};
use super::loss::Phase;
use crate::autodiff::Tensor;
use crate::datagen::io::Cursor;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DGCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: u64,
    pub best_val: f64,
    pub phase: Phase,
    pub lr: f64,
    pub config_hash: [u8; 32],
}

impl CheckpointMeta {
    pub fn untrained(seed: u64) -> Self {
        Self { seed, epoch: 0, best_val: f64::INFINITY, phase: Phase::AeOnly, lr: 0.0, config_hash: [0; 32] }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: CheckpointMeta,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidInput(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let a = &ck.model.arch;
    let m = &ck.meta;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(match a.kind {
        ArchKind::Dense => 0,
        ArchKind::Conv => 1,
    });
    for v in [a.grid, a.latent, a.width, a.depth] {
        put_u32(&mut out, v)?;
    }
    out.push(a.resnet as u8);
    out.push(a.operator_init.code());
    out.extend_from_slice(&m.seed.to_le_bytes());
    out.extend_from_slice(&m.epoch.to_le_bytes());
    out.extend_from_slice(&m.best_val.to_le_bytes());
    out.push(m.phase.code());
    out.extend_from_slice(&m.lr.to_le_bytes());
    out.extend_from_slice(&m.config_hash);
    let store = &ck.model.store;
    out.extend_from_slice(&store.step_count().to_le_bytes());
    put_u32(&mut out, store.len())?;
    for p in store.params() {
        let name = p.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(p.decay as u8);
        out.push(p.value.shape().len() as u8);
        for &d in p.value.shape() {
            put_u32(&mut out, d)?;
        }
        put_f64s(&mut out, p.value.data());
        put_f64s(&mut out, &p.m);
        put_f64s(&mut out, &p.v);
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut c = Cursor::new(bytes);
    let magic = c.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(c.bad(0, "not a checkpoint file (bad magic)"));
    }
    let version = c.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version { found: version, expected: CHECKPOINT_VERSION });
    }
    let at = c.offset();
    let kind = match c.u8("architecture kind")? {
        0 => ArchKind::Dense,
        1 => ArchKind::Conv,
        k => return Err(c.bad(at, format!("unknown architecture kind {k}"))),
    };
    let grid = c.u32("grid")? as usize;
    let latent = c.u32("latent")? as usize;
    let width = c.u32("width")? as usize;
    let depth = c.u32("depth")? as usize;
    let resnet = c.u8("resnet flag")? != 0;
    let at = c.offset();
    let operator_init = OperatorInit::from_code(c.u8("operator init")?)
        .ok_or_else(|| c.bad(at, "unknown operator init"))?;
    let arch = Architecture { kind, grid, latent, width, depth, resnet, operator_init };
    let seed = c.u64("seed")?;
    let epoch = c.u64("epoch")?;
    let best_val = c.f64("best validation loss")?;
    let at = c.offset();
    let phase = Phase::from_code(c.u8("phase")?).ok_or_else(|| c.bad(at, "unknown phase"))?;
    let lr = c.f64("learning rate")?;
    let mut config_hash = [0u8; 32];
    config_hash.copy_from_slice(c.take(32, "config hash")?);
    let step = c.u64("adam step")?;
    let at = c.offset();
    let count = c.u32("tensor count")? as usize;

    let mut model = Model::new(arch, seed).map_err(|e| c.bad(at, format!("architecture: {e}")))?;
    if count != model.store.len() {
        return Err(c.bad(at, format!("{count} tensors, architecture has {}", model.store.len())));
    }
    model.store.set_step_count(step);
    for _ in 0..count {
        let at = c.offset();
        let nlen = c.u16("name length")? as usize;
        let name = std::str::from_utf8(c.take(nlen, "tensor name")?)
            .map_err(|_| c.bad(at, "tensor name is not UTF-8"))?
            .to_string();
        let id = model.store.find(&name).ok_or_else(|| c.bad(at, format!("unexpected tensor '{name}'")))?;
        let decay = c.u8("decay flag")? != 0;
        let rank = c.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32("dimension")? as usize);
        }
        let p = model.store.get_mut(id);
        if shape != p.value.shape() || decay != p.decay {
            return Err(c.bad(at, format!("tensor '{name}' has shape {shape:?}, expected {:?}", p.value.shape())));
        }
        let len = p.value.len();
        p.value = Tensor::new(&shape, c.f64s(len, "tensor values")?)?;
        p.m = c.f64s(len, "first moments")?;
        p.v = c.f64s(len, "second moments")?;
    }
    if !c.finished() {
        return Err(c.bad(c.offset(), "trailing bytes"));
    }
    Ok(Checkpoint { model, meta: CheckpointMeta { seed, epoch, best_val, phase, lr, config_hash } })
}

/// Writes through a temporary sibling so a crash never leaves a torn file.
pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(ck)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
