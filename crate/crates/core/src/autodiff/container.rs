//! The `ATTB` binary container for model weights and named tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "ATTB" | version: u8 | record count: u32 | record*
//! record = kind tag: u8 | name length: u32 | name: utf-8
//!        | hyper count: u32 | hyper: u32*
//!        | tensor count: u32 | tensor*
//! tensor = rank: u32 | extents: u32* | payload: f64*
//! ```
//!
//! A model file holds one `INPUT` record (hyper = input extents) followed by one
//! record per layer. A tensor store holds `NAMED` records whose hyper is `[class]`.

use std::fs;
use std::path::Path;

use super::layer::Layer;
use super::model::Model;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"ATTB";
pub const VERSION: u8 = 1;

const TAG_INPUT: u8 = 0;
const TAG_DENSE: u8 = 1;
const TAG_CONV2D: u8 = 2;
const TAG_RELU: u8 = 3;
const TAG_MAXPOOL2D: u8 = 4;
const TAG_FLATTEN: u8 = 5;
const TAG_NAMED: u8 = 16;

#[derive(Debug, Clone, PartialEq)]
struct Record {
    tag: u8,
    name: String,
    hyper: Vec<u32>,
    tensors: Vec<Tensor>,
}

/// A tensor stored under a string key together with an integer class id.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub key: String,
    pub class: u32,
    pub tensor: Tensor,
}

pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut records = vec![Record {
        tag: TAG_INPUT,
        name: String::new(),
        hyper: model.input_shape().iter().map(|&e| e as u32).collect(),
        tensors: vec![],
    }];
    for layer in model.layers() {
        let (tag, hyper, tensors) = match layer {
            Layer::Dense { weight, bias } => (TAG_DENSE, vec![], vec![weight.clone(), bias.clone()]),
            Layer::Conv2d {
                weight,
                bias,
                stride,
                padding,
            } => (
                TAG_CONV2D,
                vec![*stride as u32, *padding as u32],
                vec![weight.clone(), bias.clone()],
            ),
            Layer::Relu => (TAG_RELU, vec![], vec![]),
            Layer::MaxPool2d { size, stride } => {
                (TAG_MAXPOOL2D, vec![*size as u32, *stride as u32], vec![])
            }
            Layer::Flatten => (TAG_FLATTEN, vec![], vec![]),
        };
        records.push(Record {
            tag,
            name: String::new(),
            hyper,
            tensors,
        });
    }
    encode(&records)
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let records = decode(bytes)?;
    let (first, rest) = records
        .split_first()
        .ok_or_else(|| format_err(9, "model file has no records"))?;
    if first.tag != TAG_INPUT {
        return Err(format_err(9, "model file must start with an input record"));
    }
    let input: Vec<usize> = first.hyper.iter().map(|&e| e as usize).collect();
    let mut layers = Vec::with_capacity(rest.len());
    for rec in rest {
        let bad = |what: &str| Error::Format {
            offset: 0,
            message: format!("malformed {what} record"),
        };
        let layer = match rec.tag {
            TAG_DENSE => {
                let [w, b] = rec.tensors.as_slice() else {
                    return Err(bad("dense"));
                };
                Layer::Dense {
                    weight: w.clone(),
                    bias: b.clone(),
                }
            }
            TAG_CONV2D => match (rec.hyper.as_slice(), rec.tensors.as_slice()) {
                ([stride, padding], [w, b]) => Layer::Conv2d {
                    weight: w.clone(),
                    bias: b.clone(),
                    stride: *stride as usize,
                    padding: *padding as usize,
                },
                _ => return Err(bad("conv2d")),
            },
            TAG_RELU => Layer::Relu,
            TAG_MAXPOOL2D => match rec.hyper.as_slice() {
                [size, stride] => Layer::MaxPool2d {
                    size: *size as usize,
                    stride: *stride as usize,
                },
                _ => return Err(bad("maxpool2d")),
            },
            TAG_FLATTEN => Layer::Flatten,
            other => {
                return Err(Error::Format {
                    offset: 0,
                    message: format!("unknown layer tag {other}"),
                })
            }
        };
        layers.push(layer);
    }
    Model::new(input, layers)
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

pub fn encode_tensors(entries: &[NamedTensor]) -> Vec<u8> {
    let records: Vec<Record> = entries
        .iter()
        .map(|e| Record {
            tag: TAG_NAMED,
            name: e.key.clone(),
            hyper: vec![e.class],
            tensors: vec![e.tensor.clone()],
        })
        .collect();
    encode(&records)
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    decode(bytes)?
        .into_iter()
        .map(|rec| match (rec.tag, rec.hyper.as_slice(), rec.tensors.as_slice()) {
            (TAG_NAMED, [class], [t]) => Ok(NamedTensor {
                key: rec.name,
                class: *class,
                tensor: t.clone(),
            }),
            _ => Err(Error::Format {
                offset: 0,
                message: format!("record '{}' is not a named tensor", rec.name),
            }),
        })
        .collect()
}

fn encode(records: &[Record]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for rec in records {
        out.push(rec.tag);
        out.extend_from_slice(&(rec.name.len() as u32).to_le_bytes());
        out.extend_from_slice(rec.name.as_bytes());
        out.extend_from_slice(&(rec.hyper.len() as u32).to_le_bytes());
        for h in &rec.hyper {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out.extend_from_slice(&(rec.tensors.len() as u32).to_le_bytes());
        for t in &rec.tensors {
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &e in t.shape() {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

fn decode(bytes: &[u8]) -> Result<Vec<Record>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(format_err(0, "bad magic, expected \"ATTB\""));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let tag = r.u8()?;
        let name_len = r.u32()? as usize;
        let name_at = r.pos;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| format_err(name_at, "record name is not utf-8"))?;
        let hyper_count = r.u32()? as usize;
        let hyper = (0..hyper_count).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let tensor_count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(tensor_count.min(16));
        for _ in 0..tensor_count {
            let at = r.pos;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|e| e as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let t = Tensor::new(shape, data).map_err(|e| format_err(at, e.to_string()))?;
            tensors.push(t);
        }
        records.push(Record {
            tag,
            name,
            hyper,
            tensors,
        });
    }
    if r.pos != bytes.len() {
        return Err(format_err(r.pos, "trailing bytes after last record"));
    }
    Ok(records)
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| format_err(self.pos, format!("truncated payload, wanted {n} bytes")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
