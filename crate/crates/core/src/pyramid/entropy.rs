//! Per-layer payload serialization.
//!
//! Payload layout:
//!
//! ```text
//! u8  version (1)
//! u8  n_levels
//! u8  layer_index
//! u8  channels
//! u32 image width  (big-endian)
//! u32 image height (big-endian)
//! ... deflate stream of zigzag LEB128 varints, channel after channel
//! ```
//!
//! Layer 0 stores median-edge-detector prediction residuals of the LL plane;
//! detail layers store their coefficients directly.

use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use super::{detail_len, layer_dims, CodecError, Layer};

const VERSION: u8 = 1;
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerHeader {
    pub n_levels: usize,
    pub layer_index: usize,
    pub channels: usize,
    pub image_width: usize,
    pub image_height: usize,
}

impl LayerHeader {
    pub fn same_image(&self, other: &LayerHeader) -> bool {
        self.n_levels == other.n_levels
            && self.channels == other.channels
            && self.image_width == other.image_width
            && self.image_height == other.image_height
    }

    pub fn parse(payload: &[u8]) -> Result<Self, CodecError> {
        if payload.len() < HEADER_LEN {
            return Err(CodecError::MalformedPayload("truncated header".into()));
        }
        if payload[0] != VERSION {
            return Err(CodecError::MalformedPayload(format!(
                "unknown version {}",
                payload[0]
            )));
        }
        let header = LayerHeader {
            n_levels: payload[1] as usize,
            layer_index: payload[2] as usize,
            channels: payload[3] as usize,
            image_width: u32::from_be_bytes(payload[4..8].try_into().unwrap()) as usize,
            image_height: u32::from_be_bytes(payload[8..12].try_into().unwrap()) as usize,
        };
        if header.n_levels < 2
            || header.layer_index >= header.n_levels
            || !(header.channels == 1 || header.channels == 3)
            || header.image_width == 0
            || header.image_height == 0
            || header.n_levels > 24
        {
            return Err(CodecError::MalformedPayload("implausible header".into()));
        }
        Ok(header)
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.push(VERSION);
        out.push(self.n_levels as u8);
        out.push(self.layer_index as u8);
        out.push(self.channels as u8);
        out.extend_from_slice(&(self.image_width as u32).to_be_bytes());
        out.extend_from_slice(&(self.image_height as u32).to_be_bytes());
    }
}

fn zigzag(v: i32) -> u32 {
    ((v << 1) ^ (v >> 31)) as u32
}

fn unzigzag(u: u32) -> i32 {
    ((u >> 1) as i32) ^ -((u & 1) as i32)
}

fn put_varint(out: &mut Vec<u8>, mut u: u32) {
    while u >= 0x80 {
        out.push((u as u8) | 0x80);
        u >>= 7;
    }
    out.push(u as u8);
}

fn get_varint(data: &[u8], pos: &mut usize) -> Result<u32, CodecError> {
    let mut value = 0u32;
    for shift in (0..35).step_by(7) {
        let byte = *data
            .get(*pos)
            .ok_or_else(|| CodecError::MalformedPayload("truncated coefficient stream".into()))?;
        *pos += 1;
        value |= ((byte & 0x7f) as u32) << shift;
        if byte & 0x80 == 0 {
            return Ok(value);
        }
    }
    Err(CodecError::MalformedPayload("varint overflow".into()))
}

fn med_predict(plane: &[i32], w: usize, x: usize, y: usize) -> i32 {
    match (x, y) {
        (0, 0) => 0,
        (_, 0) => plane[x - 1],
        (0, _) => plane[(y - 1) * w],
        _ => {
            let a = plane[y * w + x - 1];
            let b = plane[(y - 1) * w + x];
            let c = plane[(y - 1) * w + x - 1];
            if c >= a.max(b) {
                a.min(b)
            } else if c <= a.min(b) {
                a.max(b)
            } else {
                a + b - c
            }
        }
    }
}

pub fn encode_layer(header: &LayerHeader, layer: &Layer) -> Vec<u8> {
    let mut raw = Vec::new();
    for plane in &layer.coeffs {
        if header.layer_index == 0 {
            let w = layer.width;
            for (i, &v) in plane.iter().enumerate() {
                let pred = med_predict(plane, w, i % w, i / w);
                put_varint(&mut raw, zigzag(v - pred));
            }
        } else {
            for &v in plane {
                put_varint(&mut raw, zigzag(v));
            }
        }
    }
    let mut out = Vec::with_capacity(HEADER_LEN + raw.len() / 2);
    header.write(&mut out);
    let mut enc = DeflateEncoder::new(out, Compression::default());
    enc.write_all(&raw).expect("in-memory write");
    enc.finish().expect("in-memory write")
}

pub fn decode_layer(payload: &[u8]) -> Result<(LayerHeader, Layer), CodecError> {
    let header = LayerHeader::parse(payload)?;
    let (w, h) = layer_dims(
        header.image_width,
        header.image_height,
        header.n_levels,
        header.layer_index,
    );
    let per_channel = if header.layer_index == 0 {
        w * h
    } else {
        detail_len(w, h)
    };
    let mut raw = Vec::new();
    DeflateDecoder::new(&payload[HEADER_LEN..])
        .read_to_end(&mut raw)
        .map_err(|e| CodecError::MalformedPayload(format!("deflate: {e}")))?;

    let mut pos = 0;
    let mut coeffs = Vec::with_capacity(header.channels);
    for _ in 0..header.channels {
        let mut plane = Vec::with_capacity(per_channel);
        for i in 0..per_channel {
            let v = unzigzag(get_varint(&raw, &mut pos)?);
            if header.layer_index == 0 {
                let pred = med_predict(&plane, w, i % w, i / w);
                plane.push(v + pred);
            } else {
                plane.push(v);
            }
        }
        coeffs.push(plane);
    }
    if pos != raw.len() {
        return Err(CodecError::MalformedPayload(
            "trailing coefficient data".into(),
        ));
    }
    Ok((
        header,
        Layer {
            width: w,
            height: h,
            coeffs,
        },
    ))
}
