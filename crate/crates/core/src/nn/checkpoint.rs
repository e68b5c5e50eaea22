//! `RMDL` v1 checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "RMDL" | u32 version | u32 height | u32 width | u32 channels | u32 layer_count
//! per layer: u32 kind | u32 record_len | record bytes | f32 parameters
//! ```
//!
//! Records hold the layer hyperparameters as u32/f32 fields. Parameters
//! follow in a fixed order: conv and dense weights then bias; batch norm
//! scale, shift, running mean, running variance.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::layers::{BatchNorm, Conv2d, Dense, Dropout, MaxPool, Padding};
use super::network::{Layer, Network};
use super::NnError;

pub const MAGIC: &[u8; 4] = b"RMDL";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

const KIND_CONV: u32 = 1;
const KIND_BATCHNORM: u32 = 2;
const KIND_RELU: u32 = 3;
const KIND_MAXPOOL: u32 = 4;
const KIND_DROPOUT: u32 = 5;
const KIND_DENSE: u32 = 6;
const KIND_SOFTMAX: u32 = 7;

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<(), NnError> {
    let v = u32::try_from(v).map_err(|_| NnError::Format(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32s(buf: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_model<W: Write>(model: &Network<f32>, mut out: W) -> Result<(), NnError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for d in model.input_shape() {
        put_u32(&mut buf, d)?;
    }
    put_u32(&mut buf, model.layers().len())?;
    for layer in model.layers() {
        let mut record = Vec::new();
        let mut params = Vec::new();
        let kind = match layer {
            Layer::Conv2d(c) => {
                put_u32(&mut record, c.kernel)?;
                put_u32(&mut record, c.stride)?;
                put_u32(&mut record, matches!(c.padding, Padding::Valid) as usize)?;
                put_u32(&mut record, c.in_channels)?;
                put_u32(&mut record, c.out_channels)?;
                put_f32s(&mut params, &c.weights);
                put_f32s(&mut params, &c.bias);
                KIND_CONV
            }
            Layer::BatchNorm(b) => {
                put_u32(&mut record, b.channels)?;
                record.extend_from_slice(&b.momentum.to_le_bytes());
                record.extend_from_slice(&b.eps.to_le_bytes());
                put_f32s(&mut params, &b.gamma);
                put_f32s(&mut params, &b.beta);
                put_f32s(&mut params, &b.running_mean);
                put_f32s(&mut params, &b.running_var);
                KIND_BATCHNORM
            }
            Layer::Relu => KIND_RELU,
            Layer::MaxPool(p) => {
                put_u32(&mut record, p.size)?;
                put_u32(&mut record, p.stride)?;
                KIND_MAXPOOL
            }
            Layer::Dropout(d) => {
                record.extend_from_slice(&d.rate.to_le_bytes());
                KIND_DROPOUT
            }
            Layer::Dense(d) => {
                put_u32(&mut record, d.inputs)?;
                put_u32(&mut record, d.units)?;
                put_f32s(&mut params, &d.weights);
                put_f32s(&mut params, &d.bias);
                KIND_DENSE
            }
            Layer::Softmax => KIND_SOFTMAX,
        };
        buf.extend_from_slice(&kind.to_le_bytes());
        put_u32(&mut buf, record.len())?;
        buf.extend_from_slice(&record);
        buf.extend_from_slice(&params);
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(NnError::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                format!("checkpoint truncated at byte {}", self.pos),
            )));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f32(&mut self) -> Result<f32, NnError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, NnError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| NnError::Format("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }
}

fn expect_record(kind: u32, len: usize, expected: usize) -> Result<(), NnError> {
    if len != expected {
        return Err(NnError::Format(format!(
            "layer kind {kind} has a {len}-byte record, expected {expected}"
        )));
    }
    Ok(())
}

pub fn read_model<R: Read>(mut input: R) -> Result<Network<f32>, NnError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(NnError::Format("bad magic, not an RMDL checkpoint".into()));
    }
    let version = cur.u32()?;
    if version != VERSION as usize {
        return Err(NnError::Format(format!("unsupported RMDL version {version}")));
    }
    let shape = [cur.u32()?, cur.u32()?, cur.u32()?];
    let count = cur.u32()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let kind = cur.u32()? as u32;
        let len = cur.u32()?;
        let layer = match kind {
            KIND_CONV => {
                expect_record(kind, len, 20)?;
                let kernel = cur.u32()?;
                let stride = cur.u32()?;
                let padding = match cur.u32()? {
                    0 => Padding::Same,
                    1 => Padding::Valid,
                    p => return Err(NnError::Format(format!("unknown padding {p}"))),
                };
                let (cin, cout) = (cur.u32()?, cur.u32()?);
                let mut conv = Conv2d::new(cin, cout, kernel, stride, padding);
                conv.weights = cur.f32s(kernel * kernel * cin * cout)?;
                conv.bias = cur.f32s(cout)?;
                Layer::Conv2d(conv)
            }
            KIND_BATCHNORM => {
                expect_record(kind, len, 12)?;
                let channels = cur.u32()?;
                let mut bn = BatchNorm::new(channels);
                bn.momentum = cur.f32()?;
                bn.eps = cur.f32()?;
                bn.gamma = cur.f32s(channels)?;
                bn.beta = cur.f32s(channels)?;
                bn.running_mean = cur.f32s(channels)?;
                bn.running_var = cur.f32s(channels)?;
                Layer::BatchNorm(bn)
            }
            KIND_RELU => {
                expect_record(kind, len, 0)?;
                Layer::Relu
            }
            KIND_MAXPOOL => {
                expect_record(kind, len, 8)?;
                Layer::MaxPool(MaxPool {
                    size: cur.u32()?,
                    stride: cur.u32()?,
                })
            }
            KIND_DROPOUT => {
                expect_record(kind, len, 4)?;
                Layer::Dropout(Dropout { rate: cur.f32()? })
            }
            KIND_DENSE => {
                expect_record(kind, len, 8)?;
                let (inputs, units) = (cur.u32()?, cur.u32()?);
                let mut dense = Dense::new(inputs, units);
                dense.weights = cur.f32s(inputs * units)?;
                dense.bias = cur.f32s(units)?;
                Layer::Dense(dense)
            }
            KIND_SOFTMAX => {
                expect_record(kind, len, 0)?;
                Layer::Softmax
            }
            other => return Err(NnError::Format(format!("unknown layer kind {other}"))),
        };
        layers.push(layer);
    }
    if cur.pos != bytes.len() {
        return Err(NnError::Format(format!(
            "{} trailing bytes after the last layer",
            bytes.len() - cur.pos
        )));
    }
    Network::new(shape, layers).map_err(|e| NnError::Format(e.to_string()))
}

pub fn save_model(model: &Network<f32>, path: impl AsRef<Path>) -> Result<(), NnError> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network<f32>, NnError> {
    read_model(BufReader::new(File::open(path)?))
}
