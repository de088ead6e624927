//! Binary checkpoints: a text header and manifest followed by raw
//! little-endian f32 data in registration order.
//!
//! ```text
//! GLNET-CHECKPOINT 1
//! spec {"name":"micro",...}
//! tensors 3
//! stem.proj.weight 16x3x4x4 0 768
//! ...
//! data 12345
//! <data bytes>
//! ```
//!
//! Offsets and lengths count f32 elements from the start of the data block.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::model::GlNetModel;
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::tensor::Element;

const MAGIC: &str = "GLNET-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint<T: Element, W: Write>(model: &GlNetModel<T>, mut out: W) -> Result<()> {
    let mut header = format!("{MAGIC} {CHECKPOINT_VERSION}\n");
    header.push_str(&format!("spec {}\n", serde_json::to_string(model.spec())?));
    header.push_str(&format!("tensors {}\n", model.params.len()));
    let mut offset = 0usize;
    for (_, name, t) in model.params.iter() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        header.push_str(&format!(
            "{name} {} {offset} {}\n",
            dims.join("x"),
            t.numel()
        ));
        offset += t.numel();
    }
    header.push_str(&format!("data {}\n", offset * 4));
    out.write_all(header.as_bytes())?;
    let mut bytes = Vec::with_capacity(offset * 4);
    for (_, _, t) in model.params.iter() {
        for v in t.data().iter() {
            bytes.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
    }
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

pub fn save<T: Element>(model: &GlNetModel<T>, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(model, std::io::BufWriter::new(file))
}

fn line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut s = String::new();
    if r.read_line(&mut s)? == 0 {
        return Err(bad("unexpected end of header"));
    }
    Ok(s.trim_end_matches('\n').to_string())
}

fn field<'a>(text: &'a str, key: &str) -> Result<&'a str> {
    text.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| bad(format!("expected `{key} ...`, got `{text}`")))
}

fn number(text: &str) -> Result<usize> {
    text.parse()
        .map_err(|_| bad(format!("bad number `{text}`")))
}

pub fn read_checkpoint<T: Element, R: Read>(input: R) -> Result<GlNetModel<T>> {
    let mut r = BufReader::new(input);
    let magic = line(&mut r)?;
    let version = field(&magic, MAGIC)?;
    if version != CHECKPOINT_VERSION.to_string() {
        return Err(bad(format!("unsupported version `{version}`")));
    }
    let spec: ModelSpec = serde_json::from_str(field(&line(&mut r)?, "spec")?)?;
    let mut model = GlNetModel::<T>::build(&spec, 0)?;
    let count = number(field(&line(&mut r)?, "tensors")?)?;
    if count != model.params.len() {
        return Err(bad(format!(
            "{count} tensors stored, model has {}",
            model.params.len()
        )));
    }
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let text = line(&mut r)?;
        let parts: Vec<&str> = text.split(' ').collect();
        if parts.len() != 4 {
            return Err(bad(format!("bad manifest line `{text}`")));
        }
        let shape = parts[1]
            .split('x')
            .map(number)
            .collect::<Result<Vec<_>>>()?;
        entries.push((
            parts[0].to_string(),
            shape,
            number(parts[2])?,
            number(parts[3])?,
        ));
    }
    let total = number(field(&line(&mut r)?, "data")?)?;
    let mut bytes = Vec::with_capacity(total);
    r.read_to_end(&mut bytes)?;
    if bytes.len() != total {
        return Err(bad(format!(
            "data block is {} bytes, header says {total}",
            bytes.len()
        )));
    }
    for (name, shape, offset, len) in entries {
        let id = model
            .params
            .id_of(&name)
            .ok_or_else(|| bad(format!("unknown parameter `{name}`")))?;
        if model.params.get(id).shape() != shape.as_slice() {
            return Err(bad(format!(
                "`{name}` has shape {shape:?}, model expects {:?}",
                model.params.get(id).shape()
            )));
        }
        let end = (offset + len) * 4;
        if end > bytes.len() || len != shape.iter().product::<usize>() {
            return Err(bad(format!("`{name}` lies outside the data block")));
        }
        let data: Vec<T> = bytes[offset * 4..end]
            .chunks_exact(4)
            .map(|b| T::from_f64_lossy(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        model.params.set(id, data)?;
    }
    Ok(model)
}

pub fn load<T: Element>(path: &Path) -> Result<GlNetModel<T>> {
    read_checkpoint(std::fs::File::open(path)?)
}
