//! Constrained nucleotide blocks.
//!
//! A block is 148 nt carrying a 64-bit header and a 160-bit payload. The
//! frame is laid out as
//!
//! ```text
//! bit   0..8    layer_tag
//! bit   8..32   block_index
//! bit  32       parity_flag
//! bit  33..41   scrambler_seed   (never scrambled)
//! bit  41..48   reserved (zero)
//! bit  48..64   CRC-16/CCITT-FALSE over bits 0..48 and the payload
//! bit  64..224  payload (20 bytes, MSB first)
//! bit 224..228  zero check bits
//! ```
//!
//! Frame bits other than the seed are XORed with a mask derived from the
//! seed. Bits `0..221` become 13 groups of 17 bits → 11 trits and the last 7
//! bits become 5 trits, for 148 trits in total. The rotation code turns those
//! into 148 nt with no two equal neighbours. Seeds are tried in order until
//! every GC window of the result is inside the configured band.

pub mod parity;
pub mod trits;

use crc::{Crc, CRC_16_IBM_3740};
use thiserror::Error;

pub use parity::{
    build_parity, data_block_count, decode_layer_frame, encode_layer_blocks, frame_layer,
    parity_payload, recover_with_parity, FrameError, ParityLayout, PARITY_INDEX_BASE,
};
pub use trits::{bits_to_trits, nt_to_trits, trits_to_bits, trits_to_nt};

/// Nucleotides per block.
pub const BLOCK_NT: usize = 148;
pub const HEADER_BITS: usize = 64;
pub const PAYLOAD_BYTES: usize = 20;
/// Payload capacity of one block.
pub const PAYLOAD_BITS: usize = PAYLOAD_BYTES * 8;
const CHECK_BITS: usize = 4;
const FRAME_BITS: usize = HEADER_BITS + PAYLOAD_BITS + CHECK_BITS;
const FULL_GROUPS: usize = 13;
const TAIL_BITS: usize = FRAME_BITS - FULL_GROUPS * trits::GROUP_BITS;
const TAIL_TRITS: usize = BLOCK_NT - FULL_GROUPS * trits::GROUP_TRITS;
const SEED_BITS: std::ops::Range<usize> = 33..41;
/// Nucleotide assumed before the first base of a block when applying the
/// rotation code.
pub const BLOCK_PREV_NT: u8 = b'A';
/// Largest value of the 24-bit block index.
pub const MAX_BLOCK_INDEX: u32 = (1 << 24) - 1;
/// Layer tag reserved for padding blocks.
pub const PAD_LAYER_TAG: u8 = 255;

const CRC16: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranscodeError {
    #[error("invalid trit symbol {0}")]
    InvalidTrit(u8),
    #[error("invalid nucleotide {0:#04x}")]
    InvalidNucleotide(u8),
    #[error("rotation code does not allow repeated nucleotides")]
    RepeatedNucleotide,
    #[error("ternary group exceeds its binary range")]
    GroupOverflow,
    #[error("expected length {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("payload of {0} bytes exceeds block capacity of {PAYLOAD_BYTES} bytes")]
    PayloadTooLarge(usize),
    #[error("block index {0} does not fit in 24 bits")]
    IndexOverflow(u32),
    #[error("no scrambler seed in 0..=255 satisfies the GC window constraint")]
    NoValidSeed,
    #[error("block checksum mismatch")]
    CrcMismatch,
    #[error("malformed block alphabet or structure")]
    MalformedAlphabet,
    #[error("parity group is empty")]
    EmptyGroup,
    #[error("parity group has {members} members, limit is {limit}")]
    GroupTooLarge { members: usize, limit: usize },
    #[error("invalid constraint configuration: {0}")]
    BadConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintConfig {
    pub homopolymer_max: usize,
    pub gc_window: usize,
    pub gc_min: f64,
    pub gc_max: f64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            homopolymer_max: 3,
            gc_window: 50,
            gc_min: 0.40,
            gc_max: 0.60,
        }
    }
}

impl ConstraintConfig {
    pub fn new(
        homopolymer_max: usize,
        gc_window: usize,
        gc_min: f64,
        gc_max: f64,
    ) -> Result<Self, TranscodeError> {
        if !(0.0 < gc_min && gc_min < gc_max && gc_max < 1.0) {
            return Err(TranscodeError::BadConfig("need 0 < gc_min < gc_max < 1"));
        }
        if gc_window < 10 {
            return Err(TranscodeError::BadConfig("gc_window must be at least 10"));
        }
        if homopolymer_max == 0 {
            return Err(TranscodeError::BadConfig(
                "homopolymer_max must be positive",
            ));
        }
        Ok(Self {
            homopolymer_max,
            gc_window,
            gc_min,
            gc_max,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintReport {
    /// (position, run length) of every homopolymer run longer than allowed.
    pub homopolymers: Vec<(usize, usize)>,
    /// (window start, GC fraction) of every window outside the GC band.
    pub gc_windows: Vec<(usize, f64)>,
    /// GC fraction of the whole sequence.
    pub gc_fraction: f64,
    /// Symbols outside `ACGT`.
    pub invalid_symbols: usize,
}

impl ConstraintReport {
    pub fn is_clean(&self) -> bool {
        self.homopolymers.is_empty() && self.gc_windows.is_empty() && self.invalid_symbols == 0
    }
}

fn is_gc(c: u8) -> bool {
    c == b'G' || c == b'C'
}

/// Lists homopolymer and GC-window violations. Sequences shorter than the
/// window have no complete window and are only checked for homopolymers.
pub fn validate_constraints(seq: &[u8], cfg: &ConstraintConfig) -> ConstraintReport {
    let mut report = ConstraintReport {
        invalid_symbols: seq.iter().filter(|c| !b"ACGT".contains(c)).count(),
        ..Default::default()
    };
    let mut i = 0;
    while i < seq.len() {
        let run = seq[i..].iter().take_while(|&&c| c == seq[i]).count();
        if run > cfg.homopolymer_max {
            report.homopolymers.push((i, run));
        }
        i += run;
    }
    let total_gc = seq.iter().filter(|&&c| is_gc(c)).count();
    report.gc_fraction = if seq.is_empty() {
        0.0
    } else {
        total_gc as f64 / seq.len() as f64
    };
    let w = cfg.gc_window;
    if seq.len() >= w {
        let lo = (cfg.gc_min * w as f64 - 1e-9).ceil() as usize;
        let hi = (cfg.gc_max * w as f64 + 1e-9).floor() as usize;
        let mut count = seq[..w].iter().filter(|&&c| is_gc(c)).count();
        for start in 0..=seq.len() - w {
            if start > 0 {
                count = count + usize::from(is_gc(seq[start + w - 1]))
                    - usize::from(is_gc(seq[start - 1]));
            }
            if count < lo || count > hi {
                report.gc_windows.push((start, count as f64 / w as f64));
            }
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HeaderFields {
    pub layer_tag: u8,
    pub block_index: u32,
    pub parity: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockHeader {
    pub layer_tag: u8,
    pub block_index: u32,
    pub parity: bool,
    pub scrambler_seed: u8,
    pub crc: u16,
}

impl BlockHeader {
    pub fn fields(&self) -> HeaderFields {
        HeaderFields {
            layer_tag: self.layer_tag,
            block_index: self.block_index,
            parity: self.parity,
        }
    }

    pub fn is_pad(&self) -> bool {
        self.layer_tag == PAD_LAYER_TAG
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OligoBlock {
    pub header: BlockHeader,
    pub payload: [u8; PAYLOAD_BYTES],
    pub nt: Vec<u8>,
}

/// First 6 bytes of the header (everything but the CRC).
fn header_prefix(f: &HeaderFields, seed: u8) -> [u8; 6] {
    let idx = f.block_index.to_be_bytes();
    // parity(1) | seed(8) | reserved(7) packed into bytes 4..6
    let packed: u16 = (u16::from(f.parity) << 15) | (u16::from(seed) << 7);
    let p = packed.to_be_bytes();
    [f.layer_tag, idx[1], idx[2], idx[3], p[0], p[1]]
}

fn block_crc(prefix: &[u8; 6], payload: &[u8; PAYLOAD_BYTES]) -> u16 {
    let mut digest = CRC16.digest();
    digest.update(prefix);
    digest.update(payload);
    digest.finalize()
}

fn bytes_to_bits(bytes: &[u8], out: &mut Vec<bool>) {
    for &b in bytes {
        trits::push_bits(out, b as u32, 8);
    }
}

fn bits_to_bytes(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | u8::from(b)))
        .collect()
}

/// Deterministic scrambling mask for a seed.
fn scramble_mask(seed: u8) -> Vec<bool> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64 ^ (u64::from(seed) << 32 | u64::from(seed));
    let mut bits = Vec::with_capacity(FRAME_BITS + 64);
    while bits.len() < FRAME_BITS {
        // splitmix64
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        for i in (0..64).rev() {
            bits.push((z >> i) & 1 == 1);
        }
    }
    bits.truncate(FRAME_BITS);
    for b in &mut bits[SEED_BITS] {
        *b = false;
    }
    bits
}

fn frame_to_nt(frame: &[bool]) -> Vec<u8> {
    let mut trit_buf = trits::bits_to_trits(&frame[..FULL_GROUPS * trits::GROUP_BITS]);
    let tail = frame[FULL_GROUPS * trits::GROUP_BITS..]
        .iter()
        .fold(0u32, |acc, &b| (acc << 1) | u32::from(b));
    trits::push_base3(&mut trit_buf, tail, TAIL_TRITS);
    trits::trits_to_nt(&trit_buf, BLOCK_PREV_NT).expect("trits are in range")
}

fn nt_to_frame(seq: &[u8]) -> Result<Vec<bool>, TranscodeError> {
    let trit_buf =
        trits::nt_to_trits(seq, BLOCK_PREV_NT).map_err(|_| TranscodeError::MalformedAlphabet)?;
    let split = FULL_GROUPS * trits::GROUP_TRITS;
    let mut frame = trits::trits_to_bits(&trit_buf[..split], FULL_GROUPS * trits::GROUP_BITS)
        .map_err(|_| TranscodeError::CrcMismatch)?;
    let tail = trits::read_base3(&trit_buf[split..])?;
    if tail >= 1 << TAIL_BITS {
        return Err(TranscodeError::CrcMismatch);
    }
    trits::push_bits(&mut frame, tail, TAIL_BITS);
    Ok(frame)
}

/// Transcodes one payload into a 148-nt block that satisfies `cfg`.
///
/// Payloads shorter than [`PAYLOAD_BYTES`] are zero-padded.
pub fn encode_block(
    payload: &[u8],
    fields: HeaderFields,
    cfg: &ConstraintConfig,
) -> Result<OligoBlock, TranscodeError> {
    if payload.len() > PAYLOAD_BYTES {
        return Err(TranscodeError::PayloadTooLarge(payload.len()));
    }
    if fields.block_index > MAX_BLOCK_INDEX {
        return Err(TranscodeError::IndexOverflow(fields.block_index));
    }
    let mut body = [0u8; PAYLOAD_BYTES];
    body[..payload.len()].copy_from_slice(payload);

    for seed in 0..=u8::MAX {
        let prefix = header_prefix(&fields, seed);
        let crc = block_crc(&prefix, &body);
        let mut frame = Vec::with_capacity(FRAME_BITS);
        bytes_to_bits(&prefix, &mut frame);
        bytes_to_bits(&crc.to_be_bytes(), &mut frame);
        bytes_to_bits(&body, &mut frame);
        frame.extend([false; CHECK_BITS]);
        for (bit, m) in frame.iter_mut().zip(scramble_mask(seed)) {
            *bit ^= m;
        }
        let nt = frame_to_nt(&frame);
        let report = validate_constraints(&nt, cfg);
        if report.is_clean() {
            return Ok(OligoBlock {
                header: BlockHeader {
                    layer_tag: fields.layer_tag,
                    block_index: fields.block_index,
                    parity: fields.parity,
                    scrambler_seed: seed,
                    crc,
                },
                payload: body,
                nt,
            });
        }
    }
    Err(TranscodeError::NoValidSeed)
}

/// Decodes a 148-nt block, verifying its checksum.
pub fn decode_block(seq: &[u8]) -> Result<(BlockHeader, [u8; PAYLOAD_BYTES]), TranscodeError> {
    if seq.len() != BLOCK_NT {
        return Err(TranscodeError::Length {
            expected: BLOCK_NT,
            got: seq.len(),
        });
    }
    let mut frame = nt_to_frame(seq)?;
    let seed = frame[SEED_BITS]
        .iter()
        .fold(0u8, |acc, &b| (acc << 1) | u8::from(b));
    for (bit, m) in frame.iter_mut().zip(scramble_mask(seed)) {
        *bit ^= m;
    }
    if frame[HEADER_BITS + PAYLOAD_BITS..].iter().any(|&b| b) {
        return Err(TranscodeError::CrcMismatch);
    }
    let bytes = bits_to_bytes(&frame[..HEADER_BITS + PAYLOAD_BITS]);
    let prefix: [u8; 6] = bytes[..6].try_into().unwrap();
    let crc = u16::from_be_bytes([bytes[6], bytes[7]]);
    let payload: [u8; PAYLOAD_BYTES] = bytes[8..].try_into().unwrap();
    if prefix[5] & 0x7f != 0 || block_crc(&prefix, &payload) != crc {
        return Err(TranscodeError::CrcMismatch);
    }
    let header = BlockHeader {
        layer_tag: prefix[0],
        block_index: u32::from_be_bytes([0, prefix[1], prefix[2], prefix[3]]),
        parity: prefix[4] & 0x80 != 0,
        scrambler_seed: seed,
        crc,
    };
    Ok((header, payload))
}
