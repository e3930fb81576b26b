//! On-disk formats.
//!
//! TSR1 stores one tensor: an ASCII header line
//! `TSR1 <ndim> <d1> ... <dn> <f32|f64>\n` followed by the little-endian,
//! row-major payload.
//!
//! CKPT1 stores an ordered list of named tensors: a header line
//! `CKPT1 <count>\n`, then one manifest line `<name> <offset> <length>\n` per
//! tensor, then the concatenated TSR1 records. Offsets are in bytes from the
//! start of the record area.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::module::Module;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Encodes one TSR1 record. Values are rounded to the nearest `f32` for [`Dtype::F32`].
pub fn encode_tsr1(t: &Tensor, dtype: Dtype) -> Vec<u8> {
    let mut header = format!("TSR1 {}", t.ndim());
    for d in t.shape() {
        header.push_str(&format!(" {d}"));
    }
    header.push_str(&format!(" {}\n", dtype.name()));
    let mut out = header.into_bytes();
    out.reserve(t.len() * dtype.width());
    for &v in t.data() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

/// Decodes one TSR1 record from the start of `bytes`; returns the tensor, its
/// storage type and the number of bytes consumed.
pub fn decode_tsr1(bytes: &[u8]) -> Result<(Tensor, Dtype, usize)> {
    let bad = |reason: String| Error::format("TSR1", reason);
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not ASCII".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.first() != Some(&"TSR1") || fields.len() < 3 {
        return Err(bad(format!("bad header `{header}`")));
    }
    let ndim: usize = fields[1].parse().map_err(|_| bad(format!("bad ndim `{}`", fields[1])))?;
    if fields.len() != ndim + 3 {
        return Err(bad(format!("header `{header}` does not list {ndim} extents and a dtype")));
    }
    let shape = fields[2..2 + ndim]
        .iter()
        .map(|f| f.parse::<usize>().map_err(|_| bad(format!("bad extent `{f}`"))))
        .collect::<Result<Vec<_>>>()?;
    let dtype = match fields[ndim + 2] {
        "f32" => Dtype::F32,
        "f64" => Dtype::F64,
        other => return Err(bad(format!("unknown dtype `{other}`"))),
    };
    let count: usize = shape.iter().product();
    let start = end + 1;
    let len = count * dtype.width();
    let payload = bytes
        .get(start..start + len)
        .ok_or_else(|| bad(format!("payload truncated: need {len} bytes")))?;
    let data: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    Ok((Tensor::new(shape, data)?, dtype, start + len))
}

pub fn write_tsr1(path: impl AsRef<Path>, t: &Tensor, dtype: Dtype) -> Result<()> {
    fs::write(path, encode_tsr1(t, dtype))?;
    Ok(())
}

pub fn read_tsr1(path: impl AsRef<Path>) -> Result<Tensor> {
    let bytes = fs::read(path)?;
    let (t, _, used) = decode_tsr1(&bytes)?;
    if used != bytes.len() {
        return Err(Error::format("TSR1", format!("{} trailing bytes", bytes.len() - used)));
    }
    Ok(t)
}

/// Writes named tensors (at full `f64` precision) as a CKPT1 file.
pub fn write_checkpoint(path: impl AsRef<Path>, entries: &[(String, &Tensor)]) -> Result<()> {
    let mut records = Vec::new();
    let mut manifest = format!("CKPT1 {}\n", entries.len());
    for (name, t) in entries {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::format("CKPT1", format!("tensor name `{name}` is empty or has whitespace")));
        }
        let rec = encode_tsr1(t, Dtype::F64);
        manifest.push_str(&format!("{name} {} {}\n", records.len(), rec.len()));
        records.extend_from_slice(&rec);
    }
    let mut file = fs::File::create(path)?;
    file.write_all(manifest.as_bytes())?;
    file.write_all(&records)?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>> {
    let bad = |reason: String| Error::format("CKPT1", reason);
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let count: usize = line
        .trim_end_matches('\n')
        .strip_prefix("CKPT1 ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| bad(format!("bad header `{}`", line.trim_end())))?;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        line.clear();
        reader.read_line(&mut line)?;
        let parts: Vec<&str> = line.trim_end_matches('\n').split(' ').collect();
        let [name, offset, len] = parts[..] else {
            return Err(bad(format!("bad manifest line `{}`", line.trim_end())));
        };
        let offset: usize = offset.parse().map_err(|_| bad(format!("bad offset in `{}`", line.trim_end())))?;
        let len: usize = len.parse().map_err(|_| bad(format!("bad length in `{}`", line.trim_end())))?;
        manifest.push((name.to_string(), offset, len));
    }
    let mut records = Vec::new();
    reader.read_to_end(&mut records)?;
    manifest
        .into_iter()
        .map(|(name, offset, len)| {
            let rec = records
                .get(offset..offset + len)
                .ok_or_else(|| bad(format!("record `{name}` out of bounds")))?;
            let (t, _, used) = decode_tsr1(rec)?;
            if used != len {
                return Err(bad(format!("record `{name}` length mismatch")));
            }
            Ok((name, t))
        })
        .collect()
}

/// Saves every parameter and buffer of `m`.
pub fn save_module<M: Module + ?Sized>(path: impl AsRef<Path>, m: &M) -> Result<()> {
    write_checkpoint(path, &m.state())
}

/// Loads a checkpoint into `m`, requiring identical names, order and shapes.
pub fn load_module<M: Module + ?Sized>(path: impl AsRef<Path>, m: &mut M) -> Result<()> {
    let entries = read_checkpoint(path)?;
    let names: Vec<String> = m.state().into_iter().map(|(n, _)| n).collect();
    if entries.len() != names.len() {
        return Err(Error::format(
            "CKPT1",
            format!("checkpoint has {} tensors, model expects {}", entries.len(), names.len()),
        ));
    }
    for ((name, _), want) in entries.iter().zip(&names) {
        if name != want {
            return Err(Error::format("CKPT1", format!("found `{name}` where `{want}` was expected")));
        }
    }
    for ((name, t), slot) in entries.into_iter().zip(m.state_mut()) {
        if t.shape() != slot.shape() {
            return Err(Error::format(
                "CKPT1",
                format!("`{name}` has shape {:?}, model expects {:?}", t.shape(), slot.shape()),
            ));
        }
        *slot = t;
    }
    Ok(())
}
