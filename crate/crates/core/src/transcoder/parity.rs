//! XOR parity groups and the layer → block framing.
//!
//! A layer payload is framed as `u32 length | u32 CRC-32 | bytes`, zero-padded
//! to whole blocks, and cut into data blocks `0..D`. Data block `d` belongs
//! to parity group `(d / (g·B))·B + d % B`, where `g` is the group size and
//! `B` the number of blocks per molecule: members of a group are `B` apart,
//! so they sit in different molecules. The parity block of group `j` carries
//! block index [`PARITY_INDEX_BASE`]` + j`.

use crc::{Crc, CRC_32_ISO_HDLC};

use super::{
    encode_block, ConstraintConfig, HeaderFields, OligoBlock, TranscodeError, PAYLOAD_BYTES,
};

pub const PARITY_INDEX_BASE: u32 = 1 << 23;
const FRAME_HEADER: usize = 8;

const CRC32: Crc<u32> = Crc::<u32>::new(&CRC_32_ISO_HDLC);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParityLayout {
    /// Data blocks per parity group.
    pub group_size: usize,
    /// Distance between consecutive members (blocks per molecule).
    pub stride: usize,
}

impl Default for ParityLayout {
    fn default() -> Self {
        Self {
            group_size: 8,
            stride: 7,
        }
    }
}

impl ParityLayout {
    pub fn new(group_size: usize, stride: usize) -> Self {
        assert!(group_size >= 1 && stride >= 1);
        Self { group_size, stride }
    }

    fn stripe_len(&self) -> usize {
        self.group_size * self.stride
    }

    pub fn group_of(&self, data_index: usize) -> usize {
        (data_index / self.stripe_len()) * self.stride + data_index % self.stride
    }

    /// Data block indices of group `j` among `n_data` data blocks.
    pub fn members(&self, group: usize, n_data: usize) -> Vec<usize> {
        let stripe = group / self.stride;
        let slot = group % self.stride;
        (0..self.group_size)
            .map(|t| stripe * self.stripe_len() + t * self.stride + slot)
            .filter(|&d| d < n_data)
            .collect()
    }

    /// Ids of every non-empty group for `n_data` data blocks, ascending.
    pub fn groups(&self, n_data: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..n_data).map(|d| self.group_of(d)).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// XOR of zero-padded member payloads.
pub fn parity_payload(members: &[&[u8]], g: usize) -> Result<[u8; PAYLOAD_BYTES], TranscodeError> {
    if members.is_empty() {
        return Err(TranscodeError::EmptyGroup);
    }
    if members.len() > g {
        return Err(TranscodeError::GroupTooLarge {
            members: members.len(),
            limit: g,
        });
    }
    let mut out = [0u8; PAYLOAD_BYTES];
    for m in members {
        if m.len() > PAYLOAD_BYTES {
            return Err(TranscodeError::PayloadTooLarge(m.len()));
        }
        for (o, b) in out.iter_mut().zip(m.iter()) {
            *o ^= b;
        }
    }
    Ok(out)
}

/// Parity block for a group, with the parity flag set.
pub fn build_parity(
    members: &[&[u8]],
    g: usize,
    layer_tag: u8,
    block_index: u32,
    cfg: &ConstraintConfig,
) -> Result<OligoBlock, TranscodeError> {
    let payload = parity_payload(members, g)?;
    encode_block(
        &payload,
        HeaderFields {
            layer_tag,
            block_index,
            parity: true,
        },
        cfg,
    )
}

/// Restores the single missing member of a group from the others and the
/// parity payload.
pub fn recover_with_parity(present: &[&[u8]], parity: &[u8; PAYLOAD_BYTES]) -> [u8; PAYLOAD_BYTES] {
    let mut out = *parity;
    for m in present {
        for (o, b) in out.iter_mut().zip(m.iter()) {
            *o ^= b;
        }
    }
    out
}

/// Frames a layer payload and splits it into block payloads.
pub fn frame_layer(payload: &[u8]) -> Vec<[u8; PAYLOAD_BYTES]> {
    let mut framed = Vec::with_capacity(payload.len() + FRAME_HEADER + PAYLOAD_BYTES);
    framed.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    framed.extend_from_slice(&CRC32.checksum(payload).to_be_bytes());
    framed.extend_from_slice(payload);
    framed
        .chunks(PAYLOAD_BYTES)
        .map(|c| {
            let mut b = [0u8; PAYLOAD_BYTES];
            b[..c.len()].copy_from_slice(c);
            b
        })
        .collect()
}

/// Number of data blocks for a framed layer, read from the first block.
pub fn data_block_count(first_block: &[u8; PAYLOAD_BYTES]) -> usize {
    let len = u32::from_be_bytes(first_block[..4].try_into().unwrap()) as usize;
    (len + FRAME_HEADER).div_ceil(PAYLOAD_BYTES)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameError {
    Truncated,
    Checksum,
}

/// Inverse of [`frame_layer`] given all data blocks in order.
pub fn decode_layer_frame(blocks: &[[u8; PAYLOAD_BYTES]]) -> Result<Vec<u8>, FrameError> {
    let flat: Vec<u8> = blocks.iter().flatten().copied().collect();
    if flat.len() < FRAME_HEADER {
        return Err(FrameError::Truncated);
    }
    let len = u32::from_be_bytes(flat[..4].try_into().unwrap()) as usize;
    let crc = u32::from_be_bytes(flat[4..8].try_into().unwrap());
    let body = flat
        .get(FRAME_HEADER..FRAME_HEADER + len)
        .ok_or(FrameError::Truncated)?;
    if CRC32.checksum(body) != crc {
        return Err(FrameError::Checksum);
    }
    Ok(body.to_vec())
}

/// Data blocks followed by parity blocks for one layer, in block order.
pub fn encode_layer_blocks(
    layer_tag: u8,
    payload: &[u8],
    layout: ParityLayout,
    cfg: &ConstraintConfig,
) -> Result<Vec<OligoBlock>, TranscodeError> {
    let data = frame_layer(payload);
    let mut blocks = Vec::with_capacity(data.len() + data.len() / layout.group_size + 1);
    for (i, chunk) in data.iter().enumerate() {
        blocks.push(encode_block(
            chunk,
            HeaderFields {
                layer_tag,
                block_index: i as u32,
                parity: false,
            },
            cfg,
        )?);
    }
    for group in layout.groups(data.len()) {
        let members: Vec<&[u8]> = layout
            .members(group, data.len())
            .into_iter()
            .map(|d| &data[d][..])
            .collect();
        blocks.push(build_parity(
            &members,
            layout.group_size,
            layer_tag,
            PARITY_INDEX_BASE + group as u32,
            cfg,
        )?);
    }
    Ok(blocks)
}
