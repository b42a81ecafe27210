//! Checkpoint directories:
//!
//! * `meta.json`: schema version, model id, network specs, loss weights
//! * `params.bin`: named f32 tensors (`g_xy/…`, `g_yx/…`, `d_y/…`, `d_x/…`)
//! * `optimizer.bin`, `train_state.json`: present when saved from training
//!
//! `params.bin` layout, little endian: `b"MPXT"`, `u32` version, `u32`
//! count, then per tensor `u32` name length, name bytes, `u32` rank (4),
//! four `u64` dims, and the `f32` data.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::step::{Cursor, Rolling, TrainState};
use super::TrainConfig;
use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::losses::{LossWeights, Networks};
use crate::model::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec, Params};

pub const SCHEMA_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"MPXT";
const CONTAINER_VERSION: u32 = 1;

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn encode_tensors<'a>(entries: impl IntoIterator<Item = (String, &'a Tensor<f32>)>) -> Vec<u8> {
    let entries: Vec<_> = entries.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&4u32.to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.0.len() < n {
            return Err(corrupt("truncated tensor container"));
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut r = Reader(bytes);
    if r.take(4)? != MAGIC {
        return Err(corrupt("not a tensor container"));
    }
    let version = r.u32()?;
    if version != CONTAINER_VERSION {
        return Err(corrupt(format!("tensor container version {version} is not supported")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| corrupt("tensor name is not utf-8"))?;
        if r.u32()? != 4 {
            return Err(corrupt(format!("tensor {name} is not rank 4")));
        }
        let mut shape = [0usize; 4];
        for d in shape.iter_mut() {
            *d = usize::try_from(r.u64()?).map_err(|_| corrupt("dimension overflow"))?;
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| corrupt("dimension overflow"))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| corrupt("dimension overflow"))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        out.push((name, Tensor::from_vec(shape, data)));
    }
    if !r.0.is_empty() {
        return Err(corrupt("trailing bytes after tensor container"));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub schema_version: u32,
    pub model_id: String,
    pub preset_name: String,
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
    pub bidirectional: bool,
    pub seed: u64,
    pub step: u64,
    pub epoch: usize,
    pub weights: LossWeights,
}

/// Trained networks with their metadata.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub nets: Networks<f32>,
}

fn net_params(n: &Networks<f32>) -> Vec<(&'static str, &Params<f32>)> {
    let mut v = vec![("g_xy", n.g_xy.params())];
    if let Some(g) = &n.g_yx {
        v.push(("g_yx", g.params()));
    }
    v.push(("d_y", n.d_y.params()));
    if let Some(d) = &n.d_x {
        v.push(("d_x", d.params()));
    }
    v
}

fn prefixed<'a>(sets: &[(String, &'a Params<f32>)]) -> Vec<(String, &'a Tensor<f32>)> {
    sets.iter()
        .flat_map(|(prefix, p)| p.iter().map(move |(n, t)| (format!("{prefix}/{n}"), t)))
        .collect()
}

/// Splits `prefix/name` entries into per-prefix parameter sets.
fn group(entries: Vec<(String, Tensor<f32>)>) -> Result<Vec<(String, Params<f32>)>> {
    let mut out: Vec<(String, Params<f32>)> = Vec::new();
    for (full, t) in entries {
        let (prefix, name) = full.rsplit_once('/').ok_or_else(|| corrupt(format!("unprefixed tensor {full}")))?;
        if !t.all_finite() {
            return Err(corrupt(format!("tensor {full} holds non-finite values")));
        }
        match out.iter_mut().find(|(p, _)| p == prefix) {
            Some((_, params)) => {
                if params.get(name).is_some() {
                    return Err(corrupt(format!("duplicate tensor {full}")));
                }
                params.insert(name, t);
            }
            None => {
                let mut params = Params::new();
                params.insert(name, t);
                out.push((prefix.to_string(), params));
            }
        }
    }
    Ok(out)
}

fn take_group(groups: &mut Vec<(String, Params<f32>)>, prefix: &str) -> Option<Params<f32>> {
    let i = groups.iter().position(|(p, _)| p == prefix)?;
    Some(groups.remove(i).1)
}

fn read_meta(dir: &Path) -> Result<CheckpointMeta> {
    let path = dir.join("meta.json");
    let bytes = std::fs::read(&path).map_err(|e| corrupt(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| corrupt(format!("malformed meta.json: {e}")))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(corrupt(format!(
                "checkpoint schema version {v} does not match supported version {SCHEMA_VERSION}"
            )))
        }
        None => return Err(corrupt("meta.json has no schema_version")),
    }
    serde_json::from_value(value).map_err(|e| corrupt(format!("invalid meta.json: {e}")))
}

/// Loads and validates the networks of a checkpoint directory.
pub fn load_networks(dir: &Path) -> Result<(CheckpointMeta, Networks<f32>)> {
    let meta = read_meta(dir)?;
    let path = dir.join("params.bin");
    let bytes = std::fs::read(&path).map_err(|e| corrupt(format!("cannot read {}: {e}", path.display())))?;
    let mut groups = group(decode_tensors(&bytes)?)?;
    let mut need = |name: &str| take_group(&mut groups, name).ok_or_else(|| corrupt(format!("missing network {name}")));
    let g_xy = Generator::from_params(meta.generator.clone(), need("g_xy")?)?;
    let d_y = Discriminator::from_params(meta.discriminator.clone(), need("d_y")?)?;
    let (g_yx, d_x) = if meta.bidirectional {
        (
            Some(Generator::from_params(meta.generator.clone(), need("g_yx")?)?),
            Some(Discriminator::from_params(meta.discriminator.clone(), need("d_x")?)?),
        )
    } else {
        (None, None)
    };
    if let Some((extra, _)) = groups.first() {
        return Err(corrupt(format!("unexpected network {extra}")));
    }
    Ok((meta, Networks { g_xy, g_yx, d_y, d_x }))
}

impl Checkpoint {
    pub fn params_bytes(&self) -> Vec<u8> {
        let sets: Vec<(String, &Params<f32>)> =
            net_params(&self.nets).into_iter().map(|(n, p)| (n.to_string(), p)).collect();
        encode_tensors(prefixed(&sets))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        if self.meta.bidirectional != self.nets.is_bidirectional() {
            return Err(corrupt("metadata and networks disagree on bidirectional"));
        }
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("params.bin"), self.params_bytes())?;
        std::fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (meta, nets) = load_networks(dir)?;
        Ok(Checkpoint { meta, nets })
    }

    pub fn from_state(state: &TrainState, cfg: &TrainConfig, model_id: &str) -> Self {
        Checkpoint {
            meta: CheckpointMeta {
                schema_version: SCHEMA_VERSION,
                model_id: model_id.to_string(),
                preset_name: cfg.preset_name.clone(),
                generator: cfg.generator.clone(),
                discriminator: cfg.discriminator.clone(),
                bidirectional: cfg.bidirectional,
                seed: cfg.seed,
                step: state.step,
                epoch: state.epoch,
                weights: cfg.weights,
            },
            nets: state.nets.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    schema_version: u32,
    step: u64,
    epoch: usize,
    rng_seed: String,
    rng_stream: u64,
    /// `u128` word position, as a decimal string.
    rng_word_pos: String,
    adam_steps: Vec<u64>,
    cursor: Cursor,
    rolling: Rolling,
    config: TrainConfig,
}

impl TrainState {
    /// Writes networks, optimizer moments, rng position, and config.
    pub fn save(&self, cfg: &TrainConfig, model_id: &str, dir: &Path) -> Result<()> {
        Checkpoint::from_state(self, cfg, model_id).save(dir)?;
        let names: Vec<&str> = net_params(&self.nets).iter().map(|(n, _)| *n).collect();
        let opts: Vec<&Adam> = self.opt_g.iter().chain(&self.opt_d).collect();
        let mut sets = Vec::new();
        for (name, o) in names.iter().zip(&opts) {
            sets.push((format!("{name}/m"), &o.m));
            sets.push((format!("{name}/v"), &o.v));
        }
        std::fs::write(dir.join("optimizer.bin"), encode_tensors(prefixed(&sets)))?;
        let file = StateFile {
            schema_version: SCHEMA_VERSION,
            step: self.step,
            epoch: self.epoch,
            rng_seed: hex::encode(self.rng.get_seed()),
            rng_stream: self.rng.get_stream(),
            rng_word_pos: self.rng.get_word_pos().to_string(),
            adam_steps: opts.iter().map(|o| o.t).collect(),
            cursor: self.cursor.clone(),
            rolling: self.rolling.clone(),
            config: cfg.clone(),
        };
        std::fs::write(dir.join("train_state.json"), serde_json::to_vec_pretty(&file)?)?;
        Ok(())
    }

    /// Restores a state saved by [`TrainState::save`]; all files are
    /// validated before anything is returned.
    pub fn load(dir: &Path) -> Result<(TrainState, TrainConfig)> {
        let (meta, nets) = load_networks(dir)?;
        let path = dir.join("train_state.json");
        let bytes = std::fs::read(&path).map_err(|e| corrupt(format!("cannot read {}: {e}", path.display())))?;
        let file: StateFile =
            serde_json::from_slice(&bytes).map_err(|e| corrupt(format!("invalid train_state.json: {e}")))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(corrupt(format!("train state schema version {} is not supported", file.schema_version)));
        }
        if file.step != meta.step || file.config.bidirectional != meta.bidirectional {
            return Err(corrupt("train_state.json does not match meta.json"));
        }
        let seed: [u8; 32] = hex::decode(&file.rng_seed)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| corrupt("bad rng seed"))?;
        let word_pos: u128 = file.rng_word_pos.parse().map_err(|_| corrupt("bad rng word position"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(file.rng_stream);
        rng.set_word_pos(word_pos);

        let opt_bytes = std::fs::read(dir.join("optimizer.bin")).map_err(|e| corrupt(format!("cannot read optimizer.bin: {e}")))?;
        let mut groups = group(decode_tensors(&opt_bytes)?)?;
        let names: Vec<&str> = net_params(&nets).iter().map(|(n, _)| *n).collect();
        if file.adam_steps.len() != names.len() {
            return Err(corrupt("optimizer step count does not match networks"));
        }
        let mut adams = Vec::new();
        for ((name, params), t) in names.iter().zip(net_params(&nets).iter().map(|(_, p)| *p)).zip(&file.adam_steps) {
            let m = take_group(&mut groups, &format!("{name}/m")).ok_or_else(|| corrupt(format!("missing moments for {name}")))?;
            let v = take_group(&mut groups, &format!("{name}/v")).ok_or_else(|| corrupt(format!("missing moments for {name}")))?;
            for mom in [&m, &v] {
                let same = mom.names() == params.names()
                    && mom.tensors().iter().zip(params.tensors()).all(|(a, b)| a.shape() == b.shape());
                if !same {
                    return Err(corrupt(format!("moments for {name} do not match its parameters")));
                }
            }
            adams.push(Adam { m, v, t: *t });
        }
        let n_g = 1 + nets.g_yx.is_some() as usize;
        let mut state = TrainState::from_parts(nets, rng);
        state.opt_d = adams.split_off(n_g);
        state.opt_g = adams;
        state.step = file.step;
        state.epoch = file.epoch;
        state.cursor = file.cursor;
        state.rolling = file.rolling;
        Ok((state, file.config))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip() {
        let a = Tensor::from_fn([2, 1, 3, 1], |[n, _, h, _]| (n * 3 + h) as f32 - 2.5);
        let b = Tensor::scalar(f32::MIN_POSITIVE);
        let bytes = encode_tensors([("x/a".to_string(), &a), ("y/b".to_string(), &b)]);
        let back = decode_tensors(&bytes).unwrap();
        assert_eq!(back, vec![("x/a".to_string(), a), ("y/b".to_string(), b)]);
        assert_eq!(encode_tensors(back.iter().map(|(n, t)| (n.clone(), t))), bytes);
    }

    #[test]
    fn truncated_or_foreign_bytes_fail() {
        let t = Tensor::zeros([1, 1, 2, 2]);
        let bytes = encode_tensors([("a/w".to_string(), &t)]);
        for cut in [0, 3, 10, bytes.len() - 1] {
            assert!(matches!(decode_tensors(&bytes[..cut]), Err(Error::Checkpoint(_))));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_tensors(&extra).is_err());
        assert!(decode_tensors(b"PNG\0....").is_err());
    }
}
