//! Little-endian binary checkpoints.
//!
//! Layout: 8-byte magic, `u32` version, `u32`-length-prefixed `key=value` metadata,
//! `u32` record count, then records of `u32` name length, name bytes, `u32` rank,
//! `u64` dims and raw `f64` values. Records are parameters (`param:<name>`), the
//! canonical shape, then Adam moments (`adam.m:<name>`, `adam.v:<name>`).

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::config::KeyValues;
use crate::geometry::Shape;
use crate::model::{ModelConfig, ModelParams};
use crate::numgrad::{AdamMoments, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EDANCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Epoch, best validation total, bad epochs, stopped, config digest, RNG, Adam steps.
type Meta = (usize, Option<f64>, usize, bool, String, RngState, Vec<u64>);

/// Position of the shuffling generator, enough to continue its stream exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Complete training state after `epoch` finished epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// One entry per parameter tensor, same order.
    pub moments: Vec<AdamMoments>,
    pub epoch: usize,
    pub rng: RngState,
    /// Lowest validation total seen in phase B so far.
    pub best_val: Option<f64>,
    /// Phase-B epochs since `best_val` last improved.
    pub bad_epochs: usize,
    /// Early stopping fired; resuming does nothing more.
    pub stopped: bool,
    pub config_digest: String,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let meta = self.meta_text();
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());

        let tensors = self.params.tensors();
        let count = tensors.len() * 3 + 1;
        out.extend_from_slice(&(count as u32).to_le_bytes());
        for (name, t) in tensors {
            write_record(&mut out, &format!("param:{name}"), t.shape(), t.values());
        }
        let canonical = self.params.canonical.to_flat();
        write_record(&mut out, "canonical", &[canonical.len() / 2, 2], &canonical);
        for ((name, t), m) in tensors.iter().zip(&self.moments) {
            write_record(&mut out, &format!("adam.m:{name}"), t.shape(), &m.m);
            write_record(&mut out, &format!("adam.v:{name}"), t.shape(), &m.v);
        }
        out
    }

    fn meta_text(&self) -> String {
        let mut s = self.params.config.to_kv_text();
        let best = self
            .best_val
            .map_or_else(|| "none".to_string(), |b| format!("{:016x}", b.to_bits()));
        let steps: Vec<String> = self.moments.iter().map(|m| m.t.to_string()).collect();
        s.push_str(&format!(
            "params_version={}\nepoch={}\nbest_val={best}\nbad_epochs={}\nstopped={}\n\
             config_digest={}\nrng_seed={}\nrng_stream={}\nrng_word_pos={}\nadam_t={}\n",
            self.params.version,
            self.epoch,
            self.bad_epochs,
            self.stopped,
            self.config_digest,
            hex::encode(self.rng.seed),
            self.rng.stream,
            self.rng.word_pos,
            steps.join(","),
        ));
        s
    }

    /// Parses checkpoint bytes; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader {
            bytes,
            pos: 0,
            path,
        };
        let magic = r.take(8)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(r.err_at(0, "not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(r.err_at(
                8,
                format!("unsupported checkpoint version {version} (this build reads {CHECKPOINT_VERSION})"),
            ));
        }
        let meta_at = r.pos;
        let meta_len = r.u32()? as usize;
        let meta = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| r.err_at(meta_at, "metadata is not UTF-8"))?;
        let meta_err = |e: Error| r.err_at(meta_at, format!("metadata: {e}"));
        let kv = KeyValues::parse(meta, None).map_err(meta_err)?;
        let mut config = ModelConfig::default();
        config.update_from(&kv).map_err(meta_err)?;
        let field = |key: &str| -> Result<&str> {
            kv.raw(key)
                .ok_or_else(|| Error::invalid(format!("missing `{key}`")))
        };
        let parse_meta = || -> Result<Meta> {
            let int = |key: &str| -> Result<u128> {
                field(key)?
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad `{key}`")))
            };
            let best = match field("best_val")? {
                "none" => None,
                h => Some(f64::from_bits(
                    u64::from_str_radix(h, 16).map_err(|_| Error::invalid("bad `best_val`"))?,
                )),
            };
            let stopped = match field("stopped")? {
                "true" => true,
                "false" => false,
                _ => return Err(Error::invalid("bad `stopped`")),
            };
            let seed: [u8; 32] = hex::decode(field("rng_seed")?)
                .ok()
                .and_then(|v| v.try_into().ok())
                .ok_or_else(|| Error::invalid("bad `rng_seed`"))?;
            let steps = match field("adam_t")? {
                "" => Vec::new(),
                list => list
                    .split(',')
                    .map(|s| s.parse().map_err(|_| Error::invalid("bad `adam_t`")))
                    .collect::<Result<Vec<u64>>>()?,
            };
            let rng = RngState {
                seed,
                stream: int("rng_stream")? as u64,
                word_pos: int("rng_word_pos")?,
            };
            if int("params_version")? != crate::model::PARAMS_VERSION as u128 {
                return Err(Error::invalid("unsupported parameter layout version"));
            }
            Ok((
                int("epoch")? as usize,
                best,
                int("bad_epochs")? as usize,
                stopped,
                field("config_digest")?.to_string(),
                rng,
                steps,
            ))
        };
        let (epoch, best_val, bad_epochs, stopped, config_digest, rng, steps) =
            parse_meta().map_err(meta_err)?;

        let count_at = r.pos;
        let count = r.u32()? as usize;
        let mut records = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            records.push(r.record()?);
        }
        if r.pos != bytes.len() {
            return Err(r.err_at(r.pos, "trailing bytes after last record"));
        }
        let n_params = (count.saturating_sub(1)) / 3;
        if count != n_params * 3 + 1 || steps.len() != n_params {
            return Err(r.err_at(count_at, format!("unexpected record count {count}")));
        }
        let mut it = records.into_iter();
        let mut tensors = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let (at, name, t) = it.next().expect("counted");
            let Some(name) = name.strip_prefix("param:") else {
                return Err(r.err_at(at, format!("expected a parameter record, found `{name}`")));
            };
            tensors.push((name.to_string(), t.with_grad()));
        }
        let (at, name, t) = it.next().expect("counted");
        if name != "canonical" {
            return Err(r.err_at(at, format!("expected the canonical shape, found `{name}`")));
        }
        let canonical = Shape::from_flat(t.values()).map_err(|e| r.err_at(at, e.to_string()))?;
        let mut moments = Vec::with_capacity(n_params);
        for ((pname, p), t_steps) in tensors.iter().zip(&steps) {
            let mut pair = Vec::with_capacity(2);
            for kind in ["adam.m", "adam.v"] {
                let (at, name, t) = it.next().expect("counted");
                if name != format!("{kind}:{pname}") || t.shape() != p.shape() {
                    return Err(r.err_at(at, format!("expected `{kind}:{pname}`, found `{name}`")));
                }
                pair.push(t.into_values());
            }
            let v = pair.pop().expect("two");
            let m = pair.pop().expect("two");
            moments.push(AdamMoments { m, v, t: *t_steps });
        }
        let params = ModelParams::from_parts(config, tensors, canonical)
            .map_err(|e| r.err_at(count_at, e.to_string()))?;
        Ok(Checkpoint {
            params,
            moments,
            epoch,
            rng,
            best_val,
            bad_epochs,
            stopped,
            config_digest,
        })
    }

    /// Hex SHA-256 of the serialised checkpoint.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

fn write_record(out: &mut Vec<u8>, name: &str, dims: &[usize], values: &[f64]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn err_at(&self, offset: usize, msg: impl Into<String>) -> Error {
        Error::Checkpoint {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(self.err_at(
                self.bytes.len(),
                format!("truncated: needed {n} bytes at offset {}", self.pos),
            ));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    /// One tensor record with the offset it started at.
    fn record(&mut self) -> Result<(usize, String, Tensor)> {
        let at = self.pos;
        let len = self.u32()? as usize;
        let name = std::str::from_utf8(self.take(len)?)
            .map_err(|_| self.err_at(at, "record name is not UTF-8"))?
            .to_string();
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(self.err_at(at, format!("record `{name}` has implausible rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u64()? as usize);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= self.bytes.len()))
            .ok_or_else(|| {
                self.err_at(at, format!("record `{name}` has implausible dims {dims:?}"))
            })?;
        let raw = self.take(n * 8)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(dims, values).map_err(|e| self.err_at(at, e.to_string()))?;
        Ok((at, name, t))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // Write then rename so a crash never leaves a half-written checkpoint behind.
    let tmp = path.with_extension("ckpt.tmp");
    std::fs::write(&tmp, ckpt.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}
