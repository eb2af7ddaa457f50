//! Checkpoints are a directory holding `manifest.txt`, a line-oriented index,
//! and `state.bin`, a little-endian blob of every tensor.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::curriculum::Stage;
use crate::error::{Error, Result};
use crate::model::Module;
use crate::objectives::{Adam, TrainConfig, TrainState};
use crate::tensor::Tensor;

pub const MANIFEST_MAGIC: &str = "textgan-checkpoint v1";
pub const BLOB_MAGIC: &[u8; 8] = b"TGANCKPT";
const BLOB_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const BLOB_FILE: &str = "state.bin";
const LATEST_FILE: &str = "latest";

/// Run-level counters stored next to the training state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunCounters {
    pub novel: u64,
    pub total: u64,
}

struct Entry<'a> {
    name: String,
    shape: Vec<usize>,
    data: &'a [f64],
}

fn module_entries<'a>(prefix: &str, m: &'a impl Module, opt: &'a Adam, out: &mut Vec<Entry<'a>>) {
    let params = m.named_params();
    for (name, t) in &params {
        out.push(Entry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            data: t.data(),
        });
    }
    for (moment, store) in [("m", &opt.m), ("v", &opt.v)] {
        for ((name, t), data) in params.iter().zip(store) {
            out.push(Entry {
                name: format!("adam.{prefix}.{moment}.{name}"),
                shape: t.shape().to_vec(),
                data,
            });
        }
    }
}

fn entries(state: &TrainState) -> Vec<Entry<'_>> {
    let mut out = Vec::new();
    module_entries("gen", &state.generator, &state.gen_opt, &mut out);
    module_entries("critic", &state.critic, &state.critic_opt, &mut out);
    out
}

fn shape_text(shape: &[usize]) -> String {
    shape.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Option<Vec<u8>> {
    if s.len() % 2 != 0 {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok())
        .collect()
}

/// Serializes `state` into manifest text and blob bytes.
pub fn encode(state: &TrainState, counters: RunCounters) -> (String, Vec<u8>) {
    let entries = entries(state);
    let total: usize = entries.iter().map(|e| e.data.len()).sum();
    let mut blob = Vec::with_capacity(HEADER_LEN + 8 * total);
    blob.extend_from_slice(BLOB_MAGIC);
    blob.extend_from_slice(&BLOB_VERSION.to_le_bytes());
    blob.extend_from_slice(&(total as u64).to_le_bytes());

    let mut m = String::new();
    let _ = writeln!(m, "{MANIFEST_MAGIC}");
    let _ = writeln!(m, "blob_len {}", HEADER_LEN + 8 * total);
    let _ = writeln!(m, "iteration {}", state.iteration);
    let _ = writeln!(m, "stage.current_max {}", state.stage.current_max);
    let _ = writeln!(m, "stage.teacher_ratio {}", state.stage.teacher_ratio);
    let _ = writeln!(m, "rng.seed {}", hex(&state.rng.get_seed()));
    let _ = writeln!(m, "rng.stream {}", state.rng.get_stream());
    let _ = writeln!(m, "rng.word_pos {}", state.rng.get_word_pos());
    let _ = writeln!(m, "gen_opt.t {}", state.gen_opt.t);
    let _ = writeln!(m, "critic_opt.t {}", state.critic_opt.t);
    let _ = writeln!(m, "novelty.novel {}", counters.novel);
    let _ = writeln!(m, "novelty.total {}", counters.total);
    let mut offset = 0;
    for e in &entries {
        let _ = writeln!(m, "tensor {} {} f64 {offset}", e.name, shape_text(&e.shape));
        offset += e.data.len();
        for v in e.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    (m, blob)
}

fn field<T: std::str::FromStr>(fields: &HashMap<&str, &str>, name: &str) -> Result<T> {
    let v = fields
        .get(name)
        .ok_or_else(|| Error::checkpoint(name, "missing from manifest"))?;
    v.parse()
        .map_err(|_| Error::checkpoint(name, format!("cannot parse {v:?}")))
}

fn restore_tensor(t: &mut Tensor, name: &str, line: Option<&(&str, &str, usize)>, values: &[f64]) -> Result<Vec<f64>> {
    let &(found, shape, offset) = line.ok_or_else(|| Error::checkpoint(name, "missing from manifest"))?;
    if found != name {
        return Err(Error::checkpoint(
            name,
            format!("manifest lists {found:?} in its place"),
        ));
    }
    if shape != shape_text(t.shape()) {
        return Err(Error::checkpoint(
            name,
            format!("shape {shape} does not match model {}", shape_text(t.shape())),
        ));
    }
    let data = values
        .get(offset..offset + t.len())
        .ok_or_else(|| Error::checkpoint(name, "offset runs past the end of the blob"))?;
    Ok(data.to_vec())
}

fn restore_module(
    prefix: &str,
    m: &mut impl Module,
    opt: &mut Adam,
    lines: &mut std::slice::Iter<'_, (&str, &str, usize)>,
    values: &[f64],
) -> Result<()> {
    let names: Vec<String> = m.named_params().into_iter().map(|(n, _)| n).collect();
    for (t, name) in m.params_mut().into_iter().zip(&names) {
        let data = restore_tensor(t, name, lines.next(), values)?;
        t.data_mut().copy_from_slice(&data);
        t.grad = None;
    }
    let shapes: Vec<Tensor> = m.named_params().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
    for (moment, store) in [("m", &mut opt.m), ("v", &mut opt.v)] {
        store.clear();
        for (t, name) in shapes.iter().zip(&names) {
            let mut scratch = t.clone();
            store.push(restore_tensor(
                &mut scratch,
                &format!("adam.{prefix}.{moment}.{name}"),
                lines.next(),
                values,
            )?);
        }
    }
    Ok(())
}

/// Rebuilds a training state for `config` from checkpoint bytes.
pub fn decode(manifest: &str, blob: &[u8], config: TrainConfig) -> Result<(TrainState, RunCounters)> {
    let mut lines = manifest.lines();
    if lines.next() != Some(MANIFEST_MAGIC) {
        return Err(Error::checkpoint("manifest.magic", "bad magic line"));
    }
    let mut fields: HashMap<&str, &str> = HashMap::new();
    let mut tensors: Vec<(&str, &str, usize)> = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        if let Some(rest) = line.strip_prefix("tensor ") {
            let parts: Vec<&str> = rest.split(' ').collect();
            let [name, shape, dtype, offset] = parts[..] else {
                return Err(Error::checkpoint("manifest.tensor", format!("malformed line {line:?}")));
            };
            if dtype != "f64" {
                return Err(Error::checkpoint(name, format!("unsupported dtype {dtype}")));
            }
            let offset = offset
                .parse()
                .map_err(|_| Error::checkpoint(name, format!("bad offset {offset:?}")))?;
            tensors.push((name, shape, offset));
        } else {
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| Error::checkpoint("manifest", format!("malformed line {line:?}")))?;
            fields.insert(k, v);
        }
    }

    if blob.len() < HEADER_LEN || &blob[..8] != BLOB_MAGIC {
        return Err(Error::checkpoint("blob.magic", "bad magic bytes"));
    }
    let version = u32::from_le_bytes(blob[8..12].try_into().expect("4 bytes"));
    if version != BLOB_VERSION {
        return Err(Error::checkpoint(
            "blob.version",
            format!("unsupported version {version}"),
        ));
    }
    let expected: usize = field(&fields, "blob_len")?;
    let count = u64::from_le_bytes(blob[12..20].try_into().expect("8 bytes")) as usize;
    if blob.len() != expected || blob.len() != HEADER_LEN + 8 * count {
        return Err(Error::checkpoint(
            "blob.length",
            format!("size mismatch: {} bytes, manifest says {expected}", blob.len()),
        ));
    }
    let values: Vec<f64> = blob[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();

    let seed_hex: String = field(&fields, "rng.seed")?;
    let seed: [u8; 32] = unhex(&seed_hex)
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| Error::checkpoint("rng.seed", "expected 64 hex digits"))?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(field(&fields, "rng.stream")?);
    rng.set_word_pos(field(&fields, "rng.word_pos")?);

    let mut state = TrainState::new(config, 0)?;
    state.rng = rng;
    state.iteration = field(&fields, "iteration")?;
    state.stage = Stage {
        current_max: field(&fields, "stage.current_max")?,
        teacher_ratio: field(&fields, "stage.teacher_ratio")?,
    };
    state.gen_opt.t = field(&fields, "gen_opt.t")?;
    state.critic_opt.t = field(&fields, "critic_opt.t")?;
    let counters = RunCounters {
        novel: field(&fields, "novelty.novel")?,
        total: field(&fields, "novelty.total")?,
    };

    let mut it = tensors.iter();
    restore_module("gen", &mut state.generator, &mut state.gen_opt, &mut it, &values)?;
    restore_module("critic", &mut state.critic, &mut state.critic_opt, &mut it, &values)?;
    if let Some((extra, _, _)) = it.next() {
        return Err(Error::checkpoint(*extra, "not part of the model"));
    }
    Ok((state, counters))
}

/// Writes `manifest.txt` and `state.bin` into `dir`, creating it.
pub fn save_checkpoint(dir: &Path, state: &TrainState, counters: RunCounters) -> Result<()> {
    let (manifest, blob) = encode(state, counters);
    fs::create_dir_all(dir)?;
    fs::write(dir.join(BLOB_FILE), blob)?;
    fs::write(dir.join(MANIFEST_FILE), manifest)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path, config: TrainConfig) -> Result<(TrainState, RunCounters)> {
    let manifest =
        fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(|e| Error::checkpoint("manifest", e.to_string()))?;
    let blob = fs::read(dir.join(BLOB_FILE)).map_err(|e| Error::checkpoint("blob", e.to_string()))?;
    decode(&manifest, &blob, config)
}

/// Atomically adds `checkpoints/ckpt_<iteration>` under `run_dir` and points
/// `checkpoints/latest` at it.
pub fn write_checkpoint(run_dir: &Path, state: &TrainState, counters: RunCounters) -> Result<PathBuf> {
    let root = run_dir.join("checkpoints");
    fs::create_dir_all(&root)?;
    let name = format!("ckpt_{:08}", state.iteration);
    let tmp = root.join(format!(".tmp_{name}"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    save_checkpoint(&tmp, state, counters)?;
    let dest = root.join(&name);
    if dest.exists() {
        fs::remove_dir_all(&dest)?;
    }
    fs::rename(&tmp, &dest)?;
    let pointer = root.join(".tmp_latest");
    fs::write(&pointer, format!("{name}\n"))?;
    fs::rename(&pointer, root.join(LATEST_FILE))?;
    Ok(dest)
}

/// The checkpoint `checkpoints/latest` points at, if any.
pub fn latest_checkpoint(run_dir: &Path) -> Result<Option<PathBuf>> {
    let root = run_dir.join("checkpoints");
    match fs::read_to_string(root.join(LATEST_FILE)) {
        Ok(name) => Ok(Some(root.join(name.trim()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}
