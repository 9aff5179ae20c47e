//! Checkpoint files: magic, version, a JSON header, then raw little-endian f64 tensors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{StepLosses, TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::netdisc::build_discriminator;
use crate::netgen::{build_generator, Generator};
use crate::nn::{Adam, Tensor, TensorStore};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"BGMCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    group: String,
    name: String,
    shape: [usize; 4],
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config_text: String,
    config: TrainConfig,
    step: u64,
    epoch: u64,
    seed: u64,
    adam_g_step: u64,
    adam_d_step: u64,
    history: Vec<StepLosses>,
    tensors: Vec<TensorEntry>,
}

/// A loaded checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub state: TrainState,
    pub config: TrainConfig,
    /// Configuration file text as given to the run.
    pub config_text: String,
}

fn groups(state: &TrainState) -> [(&'static str, &TensorStore); 8] {
    [
        ("generator.params", &state.generator.params),
        ("generator.buffers", &state.generator.buffers),
        ("generator.adam_m", &state.opt_g.first_moment),
        ("generator.adam_v", &state.opt_g.second_moment),
        ("discriminator.params", &state.discriminator.params),
        ("discriminator.buffers", &state.discriminator.buffers),
        ("discriminator.adam_m", &state.opt_d.first_moment),
        ("discriminator.adam_v", &state.opt_d.second_moment),
    ]
}

pub fn save_checkpoint(state: &TrainState, cfg: &TrainConfig, config_text: &str, path: &Path) -> Result<()> {
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for (group, store) in groups(state) {
        for (name, t) in store.iter() {
            tensors.push(TensorEntry {
                group: group.to_string(),
                name: name.to_string(),
                shape: t.shape(),
            });
            for v in t.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let header = Header {
        config_text: config_text.to_string(),
        config: cfg.clone(),
        step: state.step,
        epoch: state.epoch,
        seed: state.seed,
        adam_g_step: state.opt_g.step,
        adam_d_step: state.opt_d.step,
        history: state.history.clone(),
        tensors,
    };
    let header = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(20 + header.len() + payload.len());
    bytes.extend_from_slice(&CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header);
    bytes.extend_from_slice(&payload);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = at
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
    let out = &bytes[*at..end];
    *at = end;
    Ok(out)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut at = 0;
    if take(&bytes, &mut at, 8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("{} is not a checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(take(&bytes, &mut at, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let header_len = u64::from_le_bytes(take(&bytes, &mut at, 8)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(&bytes, &mut at, header_len)?)?;

    let mut stores: Vec<(String, TensorStore)> = Vec::new();
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        let raw = take(&bytes, &mut at, n * 8)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let t = Tensor::from_vec(entry.shape, data)?;
        match stores.last_mut() {
            Some((g, s)) if *g == entry.group => {
                s.insert(entry.name.clone(), t);
            }
            _ => {
                let mut s = TensorStore::new();
                s.insert(entry.name.clone(), t);
                stores.push((entry.group.clone(), s));
            }
        }
    }
    if at != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint payload".into()));
    }
    let group = |name: &str| -> Result<TensorStore> {
        Ok(stores
            .iter()
            .find(|(g, _)| g == name)
            .map(|(_, s)| s.clone())
            .unwrap_or_default())
    };

    let cfg = header.config;
    let mut generator = build_generator(&cfg.generator)?;
    generator.params.load_from(&group("generator.params")?)?;
    generator.buffers.load_from(&group("generator.buffers")?)?;
    let mut discriminator = build_discriminator(&cfg.discriminator)?;
    discriminator.params.load_from(&group("discriminator.params")?)?;
    discriminator.buffers.load_from(&group("discriminator.buffers")?)?;
    let mut opt_g = Adam::new(cfg.adam(), &generator.params);
    opt_g.step = header.adam_g_step;
    opt_g.first_moment.load_from(&group("generator.adam_m")?)?;
    opt_g.second_moment.load_from(&group("generator.adam_v")?)?;
    let mut opt_d = Adam::new(cfg.adam(), &discriminator.params);
    opt_d.step = header.adam_d_step;
    opt_d.first_moment.load_from(&group("discriminator.adam_m")?)?;
    opt_d.second_moment.load_from(&group("discriminator.adam_v")?)?;

    Ok(Checkpoint {
        state: TrainState {
            step: header.step,
            epoch: header.epoch,
            seed: header.seed,
            generator,
            discriminator,
            opt_g,
            opt_d,
            history: header.history,
        },
        config: cfg,
        config_text: header.config_text,
    })
}

/// Generator weights and statistics from a checkpoint.
pub fn load_generator(path: &Path) -> Result<Generator> {
    load_checkpoint(path).map(|c| c.state.generator)
}
