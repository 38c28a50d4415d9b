//! Binary parameter checkpoints.
//!
//! Layout (little-endian): magic `CFLPCKPT`, format version `u32`, the
//! architecture name as `u32` length + UTF-8, entry count `u32`, then per
//! entry: name length `u32`, UTF-8 name, rows `u32`, cols `u32`, and
//! `rows * cols` `f64` values in row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::{Arch, Decoder, ModelParams, ENCODER_LAYERS};

const MAGIC: &[u8; 8] = b"CFLPCKPT";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Capacity(format!("{v} does not fit the checkpoint format")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    put_u32(out, s.len())?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub fn encode(params: &ModelParams) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut out, params.arch.as_str())?;
    let blocks = params.named_blocks();
    put_u32(&mut out, blocks.len())?;
    for (name, m) in blocks {
        put_str(&mut out, &name)?;
        put_u32(&mut out, m.rows())?;
        put_u32(&mut out, m.cols())?;
        for x in m.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    fs::write(path, encode(params)?).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Value(format!("checkpoint truncated at byte {} (wanted {n} more)", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Value("checkpoint name is not UTF-8".into()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Value("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Value(format!("unsupported checkpoint version {version}")));
    }
    let arch: Arch = r.string()?.parse()?;
    let count = r.u32()?;
    let mut blocks = std::collections::BTreeMap::new();
    for _ in 0..count {
        let name = r.string()?;
        let rows = r.u32()?;
        let cols = r.u32()?;
        let len = rows.checked_mul(cols).ok_or_else(|| Error::Value("checkpoint block too large".into()))?;
        let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Value("checkpoint block too large".into()))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        blocks.insert(name, Matrix::from_vec(rows, cols, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Value(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
    }
    let mut get = |name: String| blocks.remove(&name).ok_or_else(|| Error::Value(format!("checkpoint lacks {name}")));
    let encoder = (0..ENCODER_LAYERS).map(|l| get(format!("enc.w{l}"))).collect::<Result<Vec<_>>>()?;
    let decoder = Decoder {
        w: [get("dec.w0".into())?, get("dec.w1".into())?, get("dec.w2".into())?],
        b: [get("dec.b0".into())?, get("dec.b1".into())?, get("dec.b2".into())?],
    };
    if let Some(extra) = blocks.keys().next() {
        return Err(Error::Value(format!("unexpected checkpoint entry {extra}")));
    }
    let params = ModelParams { arch, encoder, decoder };
    validate(&params)?;
    Ok(params)
}

/// Checks that layer shapes chain.
fn validate(p: &ModelParams) -> Result<()> {
    let fan = if p.arch == Arch::Sage { 2 } else { 1 };
    for l in 1..ENCODER_LAYERS {
        if p.encoder[l].rows() != fan * p.encoder[l - 1].cols() {
            return Err(Error::Shape(format!("encoder layer {l} does not chain with layer {}", l - 1)));
        }
    }
    let d = &p.decoder;
    let chained = d.w[0].rows() == p.repr_dim() + 1
        && d.w[1].rows() == d.w[0].cols()
        && d.w[2].rows() == d.w[1].cols()
        && d.w[2].cols() == 1
        && (0..3).all(|k| d.b[k].shape() == (1, d.w[k].cols()));
    if !chained {
        return Err(Error::Shape("decoder layers do not chain".into()));
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode(&bytes)
}
