//! Versioned little-endian model checkpoints. Layout in `docs/checkpoint.md`.

use crate::error::{Error, Result};
use crate::io::bytes::{ByteReader, ByteWriter};
use crate::io::FORMAT_VERSION;
use crate::model::{ForwardModel, ModelMeta, Normalization, INPUT_WIDTH, OUTPUT_WIDTH};
use crate::neural::{NetShape, WeightSet};
use crate::transforms::Condition;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"ARCKPT";
/// Largest hidden width a checkpoint may declare.
pub const MAX_HIDDEN: u32 = 4096;

pub fn encode_checkpoint(model: &ForwardModel) -> Vec<u8> {
    let shape = model.weights.shape();
    let mut w = ByteWriter::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u16(FORMAT_VERSION);
    w.u32(shape.input as u32);
    w.u32(shape.hidden as u32);
    w.u32(shape.output as u32);
    w.f64(model.norm.pos_scale);
    w.f64(model.norm.action_scale);
    w.f64(model.norm.delta_scale);
    w.u8(model.meta.condition.code());
    w.u64(model.meta.corpus_size as u64);
    w.u64(model.meta.seed);
    w.u64(model.meta.root_seed);
    w.u64(model.meta.config_hash);
    w.u64(shape.param_count() as u64);
    for v in model.weights.as_slice() {
        w.f64(*v);
    }
    w.finish_with_digest()
}

pub fn decode_checkpoint(data: &[u8]) -> Result<ForwardModel> {
    let mut r = ByteReader::with_digest(data, "checkpoint")?;
    if r.take(6)? != CHECKPOINT_MAGIC {
        return Err(r.err("bad magic"));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let (input, hidden, output) = (r.u32()?, r.u32()?, r.u32()?);
    if input as usize != INPUT_WIDTH || output as usize != OUTPUT_WIDTH {
        return Err(r.err(format!("expected {INPUT_WIDTH} inputs and {OUTPUT_WIDTH} outputs, got {input} and {output}")));
    }
    if hidden == 0 || hidden > MAX_HIDDEN {
        return Err(r.err(format!("hidden width {hidden} out of range")));
    }
    let norm = Normalization {
        pos_scale: r.finite("pos_scale")?,
        action_scale: r.finite("action_scale")?,
        delta_scale: r.finite("delta_scale")?,
    };
    if norm.pos_scale <= 0.0 || norm.action_scale <= 0.0 || norm.delta_scale <= 0.0 {
        return Err(r.err("normalization scales must be positive"));
    }
    let code = r.u8()?;
    let condition = Condition::from_code(code).ok_or_else(|| r.err(format!("unknown condition code {code}")))?;
    let corpus_size = r.u64()?;
    let meta = ModelMeta {
        condition,
        corpus_size: usize::try_from(corpus_size).map_err(|_| r.err("corpus size overflows"))?,
        seed: r.u64()?,
        root_seed: r.u64()?,
        config_hash: r.u64()?,
    };
    let shape = NetShape::new(INPUT_WIDTH, hidden as usize, OUTPUT_WIDTH);
    let count = r.u64()?;
    if count != shape.param_count() as u64 {
        return Err(r.err(format!("parameter count {count} does not match shape ({})", shape.param_count())));
    }
    r.expect_remaining(shape.param_count().checked_mul(8))?;
    let mut params = Vec::with_capacity(shape.param_count());
    for _ in 0..shape.param_count() {
        params.push(r.finite("parameter")?);
    }
    r.finish()?;
    let weights = WeightSet::from_flat(shape, params)?;
    ForwardModel::new(weights, norm, meta).map_err(|e| Error::format("checkpoint", e.to_string()))
}
