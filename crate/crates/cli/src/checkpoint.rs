//! Binary checkpoint formats.
//!
//! Parameter checkpoint (`SCOTI1`): the magic bytes, a header of five
//! little-endian u32 (semantic vocab, scene vocab, prompt vocab,
//! embedding width, hidden width), then every parameter as little-endian
//! IEEE-754 f64 in flat order - embeddings row-major, hidden weights,
//! hidden bias, output weights, output bias. Byte-identical across
//! platforms for identical parameters.
//!
//! Trainer checkpoint (`SCOTT1`): the magic, the epoch (u32 LE), the
//! optimizer step (u64 LE), the current parameter block, the frozen
//! reference parameter block, then the first and second optimizer
//! moments as f64 LE in the same flat order. Used by `ckpt_<epoch>.bin`
//! for bit-exact resumption.
//!
//! Files are written to a temporary sibling and atomically renamed, so a
//! checkpoint is either fully present or absent.

use std::fs;
use std::io::Write;
use std::path::Path;

use shortcot_core::grpo::AdamState;
use shortcot_core::policy::{PolicyParams, VocabSpec, EMBED_DIM, HIDDEN_DIM, PARAMS_VERSION};

use crate::error::{CliError, Result};

pub const PARAMS_MAGIC: &[u8; 6] = b"SCOTI1";
pub const TRAINER_MAGIC: &[u8; 6] = b"SCOTT1";

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    context: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(CliError::Data(format!(
                "{}: truncated at offset {} (need {} more bytes)",
                self.context,
                self.bytes.len(),
                self.offset + n - self.bytes.len()
            )));
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn magic(&mut self, want: &[u8; 6]) -> Result<()> {
        let at = self.offset;
        let got = self.take(6)?;
        if got != want {
            return Err(CliError::Data(format!(
                "{}: bad magic at offset {at} (expected {:?})",
                self.context,
                String::from_utf8_lossy(want)
            )));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Serializes a parameter block.
pub fn params_to_bytes(params: &PolicyParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 20 + params.values.len() * 8);
    out.extend_from_slice(PARAMS_MAGIC);
    push_u32(&mut out, params.vocab.semantic as u32);
    push_u32(&mut out, params.vocab.scene as u32);
    push_u32(&mut out, params.vocab.prompt as u32);
    push_u32(&mut out, EMBED_DIM as u32);
    push_u32(&mut out, HIDDEN_DIM as u32);
    push_f64s(&mut out, &params.values);
    out
}

fn params_from_reader(r: &mut Reader) -> Result<PolicyParams> {
    r.magic(PARAMS_MAGIC)?;
    let semantic = r.u32()? as usize;
    let scene = r.u32()? as usize;
    let prompt = r.u32()? as usize;
    let d = r.u32()? as usize;
    let h = r.u32()? as usize;
    if d != EMBED_DIM || h != HIDDEN_DIM {
        return Err(CliError::Data(format!(
            "{}: unsupported layer sizes d={d}, h={h} (this build uses {EMBED_DIM}/{HIDDEN_DIM})",
            r.context
        )));
    }
    let vocab = VocabSpec {
        prompt,
        semantic,
        scene,
    };
    vocab.validate().map_err(CliError::from)?;
    let values = r.f64s(PolicyParams::param_count(&vocab))?;
    Ok(PolicyParams {
        vocab,
        version: PARAMS_VERSION,
        values,
    })
}

/// Restored trainer state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerCheckpoint {
    pub epoch: u32,
    pub params: PolicyParams,
    pub ref_params: PolicyParams,
    pub adam: AdamState,
}

/// Serializes a trainer checkpoint (parameters, frozen reference,
/// optimizer state, epoch).
pub fn trainer_to_bytes(
    epoch: u32,
    params: &PolicyParams,
    ref_params: &PolicyParams,
    adam: &AdamState,
) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(TRAINER_MAGIC);
    push_u32(&mut out, epoch);
    push_u64(&mut out, adam.step);
    out.extend_from_slice(&params_to_bytes(params));
    out.extend_from_slice(&params_to_bytes(ref_params));
    push_f64s(&mut out, &adam.m);
    push_f64s(&mut out, &adam.v);
    out
}

fn expect_eof(r: &Reader) -> Result<()> {
    if r.offset != r.bytes.len() {
        return Err(CliError::Data(format!(
            "{}: {} unexpected trailing bytes at offset {}",
            r.context,
            r.bytes.len() - r.offset,
            r.offset
        )));
    }
    Ok(())
}

/// Parses a standalone parameter checkpoint.
pub fn params_from_bytes(bytes: &[u8], context: &str) -> Result<PolicyParams> {
    let mut r = Reader {
        bytes,
        offset: 0,
        context,
    };
    let params = params_from_reader(&mut r)?;
    expect_eof(&r)?;
    Ok(params)
}

/// Parses a trainer checkpoint.
pub fn trainer_from_bytes(bytes: &[u8], context: &str) -> Result<TrainerCheckpoint> {
    let mut r = Reader {
        bytes,
        offset: 0,
        context,
    };
    r.magic(TRAINER_MAGIC)?;
    let epoch = r.u32()?;
    let step = r.u64()?;
    let params = params_from_reader(&mut r)?;
    let ref_params = params_from_reader(&mut r)?;
    if ref_params.vocab != params.vocab {
        return Err(CliError::Data(format!(
            "{context}: reference block vocabulary differs from the parameter block"
        )));
    }
    let n = params.values.len();
    let m = r.f64s(n)?;
    let v = r.f64s(n)?;
    expect_eof(&r)?;
    Ok(TrainerCheckpoint {
        epoch,
        params,
        ref_params,
        adam: AdamState { m, v, step },
    })
}

/// Writes `bytes` to `path` via a temporary sibling plus atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp_path = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp_path)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp_path, path)?;
    Ok(())
}

/// Loads parameters from either checkpoint kind (sniffed by magic);
/// a trainer checkpoint yields its current parameters.
pub fn load_params(path: &Path) -> Result<PolicyParams> {
    let bytes = fs::read(path).map_err(|e| {
        CliError::Data(format!("cannot read checkpoint {}: {e}", path.display()))
    })?;
    let context = path.display().to_string();
    if bytes.len() >= 6 && &bytes[..6] == TRAINER_MAGIC {
        Ok(trainer_from_bytes(&bytes, &context)?.params)
    } else {
        params_from_bytes(&bytes, &context)
    }
}

/// Loads a trainer checkpoint file.
pub fn load_trainer(path: &Path) -> Result<TrainerCheckpoint> {
    let bytes = fs::read(path).map_err(|e| {
        CliError::Data(format!("cannot read checkpoint {}: {e}", path.display()))
    })?;
    trainer_from_bytes(&bytes, &path.display().to_string())
}
