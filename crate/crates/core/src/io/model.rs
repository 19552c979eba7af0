use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::lds::{LdsModel, DECODER_SIZES, ENCODER_SIZES, ESTIMATOR_HIDDEN, LATENT_DIM};
use crate::nn::Parameterized;
use crate::recognition::RecognitionHead;

pub const MODEL_MAGIC: &[u8; 8] = b"KOOPGAIT";
pub const MODEL_VERSION: u32 = 1;

/// An LDS with an optional recognition head, as stored in one model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub lds: LdsModel,
    pub head: Option<RecognitionHead>,
}

fn lds_descriptor(m: &LdsModel) -> Vec<u32> {
    let mut d = Vec::new();
    let enc = m.encoder.sizes();
    d.push(enc.len() as u32);
    d.extend(enc.iter().map(|v| *v as u32));
    let dec = m.decoder.sizes();
    d.push(dec.len() as u32);
    d.extend(dec.iter().map(|v| *v as u32));
    d.extend([m.estimator.input_dim() as u32, m.estimator.hidden_dim() as u32]);
    d.extend([m.readout.input_dim() as u32, m.readout.output_dim() as u32]);
    d
}

fn contract_descriptor() -> Vec<u32> {
    let mut d = vec![ENCODER_SIZES.len() as u32];
    d.extend(ENCODER_SIZES.iter().map(|v| *v as u32));
    d.push(DECODER_SIZES.len() as u32);
    d.extend(DECODER_SIZES.iter().map(|v| *v as u32));
    d.extend([LATENT_DIM as u32, ESTIMATOR_HIDDEN as u32, ESTIMATOR_HIDDEN as u32, LATENT_DIM as u32]);
    d
}

/// Named blocks of a head that are not trained but must survive a round trip.
fn head_statistics(head: &RecognitionHead) -> Vec<(&'static str, &[f64])> {
    let mut out = Vec::new();
    for (name, b) in [("shape_branch", &head.shape), ("motion_branch", &head.motion), ("fusion", &head.fusion)] {
        out.push((name, b.norm.running_mean.as_slice().expect("standard layout")));
        out.push((name, b.norm.running_var.as_slice().expect("standard layout")));
    }
    out
}

fn head_statistics_mut(head: &mut RecognitionHead) -> Vec<(&'static str, &mut [f64])> {
    let mut out = Vec::new();
    for (name, b) in [("shape_branch", &mut head.shape), ("motion_branch", &mut head.motion), ("fusion", &mut head.fusion)] {
        out.push((name, b.norm.running_mean.as_slice_mut().expect("standard layout")));
        out.push((name, b.norm.running_var.as_slice_mut().expect("standard layout")));
    }
    out
}

fn put_block(out: &mut Vec<u8>, name: &str, values: &[f64]) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Binary layout: magic, version, architecture descriptor, head flag (and head
/// widths), every parameter tensor as a named block of little-endian f64 in
/// declaration order, head running statistics, then a CRC-32 of all prior bytes.
pub fn encode_model(bundle: &ModelBundle) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    let desc = lds_descriptor(&bundle.lds);
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    for d in desc {
        out.extend_from_slice(&d.to_le_bytes());
    }
    match &bundle.head {
        Some(h) => {
            out.push(1);
            out.extend_from_slice(&(h.embedding_dim() as u32).to_le_bytes());
            out.extend_from_slice(&(h.hidden_dim() as u32).to_le_bytes());
        }
        None => out.push(0),
    }
    for (name, values) in bundle.lds.param_slices() {
        put_block(&mut out, name, values);
    }
    if let Some(h) = &bundle.head {
        for (name, values) in h.param_slices() {
            put_block(&mut out, name, values);
        }
        for (name, values) in head_statistics(h) {
            put_block(&mut out, name, values);
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::CorruptModel(format!("unexpected end of data at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn block_into(&mut self, name: &str, dst: &mut [f64]) -> Result<()> {
        let len = self.u16()? as usize;
        let found = self.take(len)?;
        if found != name.as_bytes() {
            return Err(Error::CorruptModel(format!("expected block {name:?}, found {:?}", String::from_utf8_lossy(found))));
        }
        let count = self.u64()?;
        if count != dst.len() as u64 {
            return Err(Error::CorruptModel(format!("block {name:?} holds {count} values, expected {}", dst.len())));
        }
        let raw = self.take(8 * dst.len())?;
        for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(8)) {
            *d = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        Ok(())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelBundle> {
    if bytes.len() < MODEL_MAGIC.len() + 8 {
        return Err(Error::CorruptModel(format!("file of {} bytes is too short", bytes.len())));
    }
    if &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
        return Err(Error::CorruptModel("not a model file (bad magic)".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::CorruptModel(format!("checksum mismatch: stored {stored:08x}, computed {actual:08x}")));
    }
    let mut r = Reader { bytes: body, pos: MODEL_MAGIC.len() };
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::CorruptModel(format!("unsupported format version {version}")));
    }
    let n = r.u32()? as usize;
    if n > 64 {
        return Err(Error::CorruptModel(format!("architecture descriptor of {n} entries")));
    }
    let desc = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let expected = contract_descriptor();
    if desc != expected {
        return Err(Error::ArchitectureMismatch { expected: format!("{expected:?}"), found: format!("{desc:?}") });
    }
    let head_dims = match r.u8()? {
        0 => None,
        1 => Some((r.u32()? as usize, r.u32()? as usize)),
        flag => return Err(Error::CorruptModel(format!("bad head flag {flag}"))),
    };
    let mut lds = LdsModel::new(0);
    for (name, dst) in lds.param_slices_mut() {
        r.block_into(name, dst)?;
    }
    let head = match head_dims {
        None => None,
        Some((e, h)) => {
            let params = (e as u128) * (h as u128) * 4 + (h as u128) * (MOTION_BOUND as u128);
            if e == 0 || h == 0 || params * 8 > body.len() as u128 {
                return Err(Error::CorruptModel(format!("head widths {e}×{h} do not fit the file")));
            }
            let mut head = RecognitionHead::new(0, e, h)?;
            for (name, dst) in head.param_slices_mut() {
                r.block_into(name, dst)?;
            }
            for (name, dst) in head_statistics_mut(&mut head) {
                r.block_into(name, dst)?;
            }
            Some(head)
        }
    };
    if r.pos != body.len() {
        return Err(Error::CorruptModel(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(ModelBundle { lds, head })
}

const MOTION_BOUND: usize = crate::recognition::MOTION_INPUT_DIM + crate::pose::SHAPE_DIM;

pub fn write_model(path: &Path, bundle: &ModelBundle) -> Result<()> {
    write_atomic(path, &encode_model(bundle))
}

pub fn read_model(path: &Path) -> Result<ModelBundle> {
    decode_model(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
