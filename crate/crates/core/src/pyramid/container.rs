//! `HPX1` layer container.
//!
//! ```text
//! "HPX1"
//! repeated until EOF:
//!   u16 image_id length, image_id bytes (UTF-8)
//!   u16 layer_index
//!   u32 width, u32 height      (decoded dimensions of the layer)
//!   u32 payload length, payload bytes
//! ```
//! All integers are big-endian.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::LayerBitstream;

pub const MAGIC: &[u8; 4] = b"HPX1";

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("missing HPX1 magic")]
    BadMagic,
    #[error("truncated record at byte {0}")]
    Truncated(usize),
    #[error("image id is not UTF-8")]
    BadImageId,
    #[error("field does not fit the container format: {0}")]
    Oversize(&'static str),
}

pub fn write_container<W: Write>(
    mut out: W,
    layers: &[LayerBitstream],
) -> Result<(), ContainerError> {
    out.write_all(MAGIC)?;
    for layer in layers {
        let id = layer.image_id.as_bytes();
        let id_len = u16::try_from(id.len()).map_err(|_| ContainerError::Oversize("image_id"))?;
        let idx = u16::try_from(layer.layer_index)
            .map_err(|_| ContainerError::Oversize("layer_index"))?;
        let len =
            u32::try_from(layer.payload.len()).map_err(|_| ContainerError::Oversize("payload"))?;
        out.write_all(&id_len.to_be_bytes())?;
        out.write_all(id)?;
        out.write_all(&idx.to_be_bytes())?;
        out.write_all(&(layer.decoded_dims.0 as u32).to_be_bytes())?;
        out.write_all(&(layer.decoded_dims.1 as u32).to_be_bytes())?;
        out.write_all(&len.to_be_bytes())?;
        out.write_all(&layer.payload)?;
    }
    Ok(())
}

pub fn to_bytes(layers: &[LayerBitstream]) -> Result<Vec<u8>, ContainerError> {
    let mut buf = Vec::new();
    write_container(&mut buf, layers)?;
    Ok(buf)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or(ContainerError::Truncated(self.pos))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ContainerError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn from_bytes(data: &[u8]) -> Result<Vec<LayerBitstream>, ContainerError> {
    if data.len() < 4 || &data[..4] != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let mut cur = Cursor { data, pos: 4 };
    let mut layers = Vec::new();
    while cur.pos < data.len() {
        let id_len = cur.u16()? as usize;
        let image_id = std::str::from_utf8(cur.take(id_len)?)
            .map_err(|_| ContainerError::BadImageId)?
            .to_string();
        let layer_index = cur.u16()? as usize;
        let w = cur.u32()? as usize;
        let h = cur.u32()? as usize;
        let len = cur.u32()? as usize;
        let payload = cur.take(len)?.to_vec();
        layers.push(LayerBitstream {
            image_id,
            layer_index,
            decoded_dims: (w, h),
            payload,
        });
    }
    Ok(layers)
}

pub fn write_file(path: &Path, layers: &[LayerBitstream]) -> Result<(), ContainerError> {
    fs::write(path, to_bytes(layers)?)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<LayerBitstream>, ContainerError> {
    from_bytes(&fs::read(path)?)
}
