//! Versioned binary checkpoints for a full learner state.
//!
//! Layout: a 4-byte magic, a little-endian `u32` format version, the
//! payload, then a trailing FNV-1a digest of the payload. The payload holds
//! the deep-memory state (config, ordered member models, optional general
//! model, storage window, generator state, counters) and an optional
//! fast-memory section (kernel basis plus per-class regressor state). Deep
//! parameters serialize as raw `f32` words and fast-memory state as raw
//! `f64` words, so a save/load cycle is bit-exact.

use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledExample;
use crate::ensemble::{DeepConfig, EnsembleState, MethodKind, StateCounters, WeakModel};
use crate::error::{Error, Result};
use crate::kernels::{FeatureBlock, KernelBasis};
use crate::mhn::MhnModel;
use crate::mlp::{Layer, LrSchedule, Mlp};
use crate::rls::RlsState;
use crate::window::StorageWindow;

pub const MAGIC: [u8; 4] = *b"DMCK";
pub const VERSION: u32 = 1;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Serializes the learner to `path`.
pub fn save_checkpoint(
    path: &Path,
    deep: &EnsembleState<f32>,
    fast: Option<&MhnModel<f64>>,
) -> Result<()> {
    std::fs::write(path, serialize_checkpoint(deep, fast)?)?;
    Ok(())
}

/// Loads a learner saved by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(EnsembleState<f32>, Option<MhnModel<f64>>)> {
    let bytes = std::fs::read(path)?;
    deserialize_checkpoint(&bytes).map_err(|e| match e {
        // Attach the path to magic failures so the CLI diagnostic names it.
        Error::BadMagic { got, expected, .. } => Error::BadMagic {
            path: path.to_path_buf(),
            got,
            expected,
        },
        other => other,
    })
}

pub fn serialize_checkpoint(
    deep: &EnsembleState<f32>,
    fast: Option<&MhnModel<f64>>,
) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    write_deep(&mut payload, deep)?;
    match fast {
        Some(model) => {
            payload.write_u8(1)?;
            write_fast(&mut payload, model)?;
        }
        None => payload.write_u8(0)?,
    }

    let mut out = Vec::with_capacity(payload.len() + 16);
    out.extend_from_slice(&MAGIC);
    out.write_u32::<LittleEndian>(VERSION)?;
    let digest = fnv1a(&payload);
    out.extend_from_slice(&payload);
    out.write_u64::<LittleEndian>(digest)?;
    Ok(out)
}

pub fn deserialize_checkpoint(
    bytes: &[u8],
) -> Result<(EnsembleState<f32>, Option<MhnModel<f64>>)> {
    if bytes.len() < 16 {
        return Err(Error::CorruptCheckpoint {
            reason: format!("file of {} bytes is too short to be a checkpoint", bytes.len()),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: "<bytes>".into(),
            got: u32::from_be_bytes(bytes[..4].try_into().unwrap()),
            expected: u32::from_be_bytes(MAGIC),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion { got: version, supported: VERSION });
    }
    let payload = &bytes[8..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    let digest = fnv1a(payload);
    if digest != stored {
        return Err(Error::CorruptCheckpoint {
            reason: format!("digest mismatch: stored {stored:#018x}, computed {digest:#018x}"),
        });
    }

    let mut r = Reader { buf: payload };
    let deep = read_deep(&mut r)?;
    let fast = match r.u8()? {
        0 => None,
        1 => Some(read_fast(&mut r)?),
        other => {
            return Err(Error::CorruptCheckpoint {
                reason: format!("invalid fast-memory flag {other}"),
            })
        }
    };
    if !r.buf.is_empty() {
        return Err(Error::CorruptCheckpoint {
            reason: format!("{} unexpected trailing payload bytes", r.buf.len()),
        });
    }
    Ok((deep, fast))
}

// ---- writing ----

fn write_usize_vec(out: &mut Vec<u8>, v: &[usize]) -> Result<()> {
    out.write_u32::<LittleEndian>(v.len() as u32)?;
    for &x in v {
        out.write_u64::<LittleEndian>(x as u64)?;
    }
    Ok(())
}

fn write_f32_slice(out: &mut Vec<u8>, v: &[f32]) -> Result<()> {
    for &x in v {
        out.write_f32::<LittleEndian>(x)?;
    }
    Ok(())
}

fn write_f64_slice(out: &mut Vec<u8>, v: &[f64]) -> Result<()> {
    for &x in v {
        out.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn write_schedule(out: &mut Vec<u8>, s: &LrSchedule<f32>) -> Result<()> {
    match s {
        LrSchedule::InvSqrt { base } => {
            out.write_u8(0)?;
            out.write_f32::<LittleEndian>(*base)?;
        }
        LrSchedule::StepDecay { base, factor, drops } => {
            out.write_u8(1)?;
            out.write_f32::<LittleEndian>(*base)?;
            out.write_f32::<LittleEndian>(*factor)?;
            write_usize_vec(out, drops)?;
        }
    }
    Ok(())
}

fn write_mlp(out: &mut Vec<u8>, net: &Mlp<f32>) -> Result<()> {
    write_usize_vec(out, &net.layer_dims)?;
    out.write_u64::<LittleEndian>(net.steps_seen)?;
    for layer in &net.layers {
        write_f32_slice(out, &layer.weights)?;
        write_f32_slice(out, &layer.bias)?;
        write_f32_slice(out, &layer.momentum_w)?;
        write_f32_slice(out, &layer.momentum_b)?;
    }
    Ok(())
}

fn write_deep(out: &mut Vec<u8>, deep: &EnsembleState<f32>) -> Result<()> {
    let method_idx = MethodKind::ALL
        .iter()
        .position(|&m| m == deep.method())
        .expect("method is one of the fixed enumeration") as u8;
    out.write_u8(method_idx)?;

    let cfg = deep.config();
    write_usize_vec(out, &cfg.layer_dims)?;
    write_schedule(out, &cfg.chunk_schedule)?;
    out.write_f32::<LittleEndian>(cfg.online_rate_base)?;
    out.write_f32::<LittleEndian>(cfg.momentum)?;
    out.write_u64::<LittleEndian>(cfg.batch_size as u64)?;
    out.write_u64::<LittleEndian>(cfg.weak_epochs as u64)?;
    out.write_u64::<LittleEndian>(cfg.n_subset as u64)?;
    out.write_u64::<LittleEndian>(cfg.n_new as u64)?;

    out.write_u32::<LittleEndian>(deep.members().len() as u32)?;
    for member in deep.members() {
        out.write_u64::<LittleEndian>(member.id)?;
        write_mlp(out, &member.net)?;
    }
    match deep.general() {
        Some(net) => {
            out.write_u8(1)?;
            write_mlp(out, net)?;
        }
        None => out.write_u8(0)?,
    }

    let window = deep.window();
    out.write_u64::<LittleEndian>(window.capacity() as u64)?;
    out.write_u64::<LittleEndian>(cfg.layer_dims[0] as u64)?;
    out.write_u64::<LittleEndian>(window.items().len() as u64)?;
    for item in window.items() {
        out.write_u32::<LittleEndian>(item.label)?;
        write_f32_slice(out, &item.features)?;
    }

    let rng = deep.rng();
    out.extend_from_slice(&rng.get_seed());
    let wp = rng.get_word_pos();
    out.write_u64::<LittleEndian>(wp as u64)?;
    out.write_u64::<LittleEndian>((wp >> 64) as u64)?;
    out.write_u64::<LittleEndian>(rng.get_stream())?;

    let c = deep.counters();
    out.write_u64::<LittleEndian>(c.next_model_id)?;
    out.write_u64::<LittleEndian>(c.instances_seen)?;
    out.write_u64::<LittleEndian>(c.steps_taken)?;
    out.write_u64::<LittleEndian>(c.online_updates)?;
    out.write_u64::<LittleEndian>(c.slides_since_spawn)?;
    match c.prev_spawn_marker {
        Some(v) => {
            out.write_u8(1)?;
            out.write_u64::<LittleEndian>(v)?;
        }
        None => out.write_u8(0)?,
    }
    Ok(())
}

fn write_fast(out: &mut Vec<u8>, model: &MhnModel<f64>) -> Result<()> {
    let basis = &model.basis;
    out.write_u64::<LittleEndian>(basis.feature_dim as u64)?;
    out.write_u32::<LittleEndian>(basis.kernels.len() as u32)?;
    for kernel in &basis.kernels {
        write_usize_vec(out, kernel)?;
    }
    out.write_u32::<LittleEndian>(basis.blocks.len() as u32)?;
    for block in &basis.blocks {
        out.write_u64::<LittleEndian>(block.model_id)?;
        out.write_u64::<LittleEndian>(block.start as u64)?;
        out.write_u64::<LittleEndian>(block.len as u64)?;
    }
    out.write_u32::<LittleEndian>(model.classes.len() as u32)?;
    for class in &model.classes {
        out.write_u64::<LittleEndian>(class.dim() as u64)?;
        write_f64_slice(out, class.inverse_gram())?;
        write_f64_slice(out, class.moments())?;
        write_f64_slice(out, class.weights())?;
        out.write_u64::<LittleEndian>(class.updates_seen)?;
    }
    Ok(())
}

// ---- reading ----

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn short(&self, what: &str) -> Error {
        Error::CorruptCheckpoint {
            reason: format!("payload truncated while reading {what}"),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        ReadBytesExt::read_u8(&mut self.buf).map_err(|_| self.short("byte"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.buf
            .read_u32::<LittleEndian>()
            .map_err(|_| self.short("u32"))
    }

    fn u64(&mut self) -> Result<u64> {
        self.buf
            .read_u64::<LittleEndian>()
            .map_err(|_| self.short("u64"))
    }

    fn size(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::CorruptCheckpoint {
            reason: format!("size {v} does not fit this platform"),
        })
    }

    fn f32(&mut self) -> Result<f32> {
        self.buf
            .read_f32::<LittleEndian>()
            .map_err(|_| self.short("f32"))
    }

    /// Element count guarded against the remaining payload, so corrupt
    /// headers cannot demand absurd allocations.
    fn checked_len(&self, count: usize, elem_bytes: usize, what: &str) -> Result<usize> {
        if count.checked_mul(elem_bytes).is_none_or(|need| need > self.buf.len()) {
            return Err(Error::CorruptCheckpoint {
                reason: format!("{what} count {count} exceeds the remaining payload"),
            });
        }
        Ok(count)
    }

    fn usize_vec(&mut self) -> Result<Vec<usize>> {
        let count = self.u32()? as usize;
        let count = self.checked_len(count, 8, "index vector")?;
        (0..count).map(|_| self.size()).collect()
    }

    fn f32_vec(&mut self, count: usize) -> Result<Vec<f32>> {
        let count = self.checked_len(count, 4, "f32 vector")?;
        (0..count).map(|_| self.f32()).collect()
    }

    fn f64_vec(&mut self, count: usize) -> Result<Vec<f64>> {
        let count = self.checked_len(count, 8, "f64 vector")?;
        (0..count)
            .map(|_| {
                self.buf
                    .read_f64::<LittleEndian>()
                    .map_err(|_| self.short("f64"))
            })
            .collect()
    }

    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.buf.len() < N {
            return Err(self.short("byte array"));
        }
        let (head, rest) = self.buf.split_at(N);
        self.buf = rest;
        Ok(head.try_into().unwrap())
    }
}

fn read_schedule(r: &mut Reader) -> Result<LrSchedule<f32>> {
    match r.u8()? {
        0 => LrSchedule::inv_sqrt(r.f32()?),
        1 => {
            let base = r.f32()?;
            let factor = r.f32()?;
            let drops = r.usize_vec()?;
            LrSchedule::step_decay(base, factor, drops)
        }
        other => Err(Error::CorruptCheckpoint {
            reason: format!("unknown schedule tag {other}"),
        }),
    }
}

fn read_mlp(r: &mut Reader) -> Result<Mlp<f32>> {
    let layer_dims = r.usize_vec()?;
    if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::CorruptCheckpoint {
            reason: format!("invalid stored layer dims {layer_dims:?}"),
        });
    }
    let steps_seen = r.u64()?;
    let mut layers = Vec::with_capacity(layer_dims.len() - 1);
    for pair in layer_dims.windows(2) {
        let (in_dim, out_dim) = (pair[0], pair[1]);
        let weights = r.f32_vec(in_dim * out_dim)?;
        let bias = r.f32_vec(out_dim)?;
        let momentum_w = r.f32_vec(in_dim * out_dim)?;
        let momentum_b = r.f32_vec(out_dim)?;
        layers.push(Layer { weights, bias, momentum_w, momentum_b, in_dim, out_dim });
    }
    Ok(Mlp { layers, layer_dims, steps_seen })
}

fn read_deep(r: &mut Reader) -> Result<EnsembleState<f32>> {
    let method_idx = r.u8()? as usize;
    let method = *MethodKind::ALL.get(method_idx).ok_or(Error::CorruptCheckpoint {
        reason: format!("invalid method index {method_idx}"),
    })?;

    let layer_dims = r.usize_vec()?;
    let chunk_schedule = read_schedule(r)?;
    let online_rate_base = r.f32()?;
    let momentum = r.f32()?;
    let batch_size = r.size()?;
    let weak_epochs = r.size()?;
    let n_subset = r.size()?;
    let n_new = r.size()?;
    let cfg = DeepConfig {
        layer_dims,
        chunk_schedule,
        online_rate_base,
        momentum,
        batch_size,
        weak_epochs,
        n_subset,
        n_new,
    };

    let member_count = r.u32()? as usize;
    let mut weak_models = Vec::with_capacity(r.checked_len(member_count, 16, "member")?);
    for _ in 0..member_count {
        let id = r.u64()?;
        let net = read_mlp(r)?;
        weak_models.push(WeakModel { id, net });
    }
    let general_model = match r.u8()? {
        0 => None,
        1 => Some(read_mlp(r)?),
        other => {
            return Err(Error::CorruptCheckpoint {
                reason: format!("invalid general-model flag {other}"),
            })
        }
    };

    let capacity = r.size()?;
    let feature_dim = r.size()?;
    let item_count = r.size()?;
    let item_count = r.checked_len(item_count, 4 + 4 * feature_dim.max(1), "window item")?;
    let mut items = Vec::with_capacity(item_count);
    for _ in 0..item_count {
        let label = r.u32()?;
        let features = r.f32_vec(feature_dim)?;
        items.push(LabeledExample::new(features, label));
    }
    let window = StorageWindow::from_parts(capacity, items)?;

    let seed: [u8; 32] = r.bytes()?;
    let wp_lo = r.u64()?;
    let wp_hi = r.u64()?;
    let stream = r.u64()?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(((wp_hi as u128) << 64) | wp_lo as u128);

    let next_model_id = r.u64()?;
    let instances_seen = r.u64()?;
    let steps_taken = r.u64()?;
    let online_updates = r.u64()?;
    let slides_since_spawn = r.u64()?;
    let prev_spawn_marker = match r.u8()? {
        0 => None,
        1 => Some(r.u64()?),
        other => {
            return Err(Error::CorruptCheckpoint {
                reason: format!("invalid spawn-marker flag {other}"),
            })
        }
    };
    let counters = StateCounters {
        next_model_id,
        instances_seen,
        steps_taken,
        online_updates,
        slides_since_spawn,
        prev_spawn_marker,
    };

    EnsembleState::from_parts(method, cfg, weak_models, general_model, window, rng, counters)
}

fn read_fast(r: &mut Reader) -> Result<MhnModel<f64>> {
    let feature_dim = r.size()?;
    let kernel_count = r.u32()? as usize;
    let kernel_count = r.checked_len(kernel_count, 4, "kernel")?;
    let mut kernels = Vec::with_capacity(kernel_count);
    for _ in 0..kernel_count {
        let kernel = r.usize_vec()?;
        if kernel.iter().any(|&i| i >= feature_dim) {
            return Err(Error::CorruptCheckpoint {
                reason: format!("kernel index out of range in {kernel:?} (dim {feature_dim})"),
            });
        }
        kernels.push(kernel);
    }
    let block_count = r.u32()? as usize;
    let block_count = r.checked_len(block_count, 24, "feature block")?;
    let mut blocks = Vec::with_capacity(block_count);
    for _ in 0..block_count {
        let model_id = r.u64()?;
        let start = r.size()?;
        let len = r.size()?;
        blocks.push(FeatureBlock { model_id, start, len });
    }
    if blocks.iter().map(|b| b.len).sum::<usize>() != feature_dim {
        return Err(Error::CorruptCheckpoint {
            reason: "feature blocks do not tile the feature dimension".into(),
        });
    }
    let basis = KernelBasis { kernels, feature_dim, blocks };

    let class_count = r.u32()? as usize;
    let class_count = r.checked_len(class_count, 16, "regressor class")?;
    if class_count == 0 {
        return Err(Error::CorruptCheckpoint {
            reason: "fast-memory section holds zero classes".into(),
        });
    }
    let expect_dim = basis.output_len();
    let mut classes = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        let dim = r.size()?;
        if dim != expect_dim {
            return Err(Error::CorruptCheckpoint {
                reason: format!("regressor dim {dim} does not match basis output {expect_dim}"),
            });
        }
        let p = r.f64_vec(dim * dim)?;
        let b = r.f64_vec(dim)?;
        let w = r.f64_vec(dim)?;
        let updates_seen = r.u64()?;
        classes.push(RlsState::from_parts(dim, p, b, w, updates_seen)?);
    }
    Ok(MhnModel { basis, classes })
}
