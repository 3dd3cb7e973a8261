//! Binary → ternary packing and the rotating ternary nucleotide code.

use super::TranscodeError;

/// Bits per fixed-width group.
pub const GROUP_BITS: usize = 17;
/// Trits per fixed-width group (3^11 = 177147 ≥ 2^17 = 131072).
pub const GROUP_TRITS: usize = 11;

pub const NUCLEOTIDES: [u8; 4] = *b"ACGT";

/// Packs bits into trits, 17 bits to 11 trits, most significant first. The
/// last group is zero-padded on the right; callers record the true bit
/// length themselves.
pub fn bits_to_trits(bits: &[bool]) -> Vec<u8> {
    let mut out = Vec::with_capacity(bits.len().div_ceil(GROUP_BITS) * GROUP_TRITS);
    for chunk in bits.chunks(GROUP_BITS) {
        let mut value = 0u32;
        for i in 0..GROUP_BITS {
            value = (value << 1) | u32::from(chunk.get(i).copied().unwrap_or(false));
        }
        push_base3(&mut out, value, GROUP_TRITS);
    }
    out
}

/// Inverse of [`bits_to_trits`], returning exactly `n_bits` bits.
pub fn trits_to_bits(trits: &[u8], n_bits: usize) -> Result<Vec<bool>, TranscodeError> {
    if !trits.len().is_multiple_of(GROUP_TRITS) || trits.len() / GROUP_TRITS * GROUP_BITS < n_bits {
        return Err(TranscodeError::Length {
            expected: n_bits.div_ceil(GROUP_BITS) * GROUP_TRITS,
            got: trits.len(),
        });
    }
    let mut bits = Vec::with_capacity(trits.len() / GROUP_TRITS * GROUP_BITS);
    for group in trits.chunks(GROUP_TRITS) {
        let value = read_base3(group)?;
        if value >= 1 << GROUP_BITS {
            return Err(TranscodeError::GroupOverflow);
        }
        push_bits(&mut bits, value, GROUP_BITS);
    }
    bits.truncate(n_bits);
    Ok(bits)
}

pub(crate) fn push_base3(out: &mut Vec<u8>, mut value: u32, width: usize) {
    let start = out.len();
    out.resize(start + width, 0);
    for slot in out[start..].iter_mut().rev() {
        *slot = (value % 3) as u8;
        value /= 3;
    }
}

pub(crate) fn read_base3(trits: &[u8]) -> Result<u32, TranscodeError> {
    trits.iter().try_fold(0u32, |acc, &t| {
        if t > 2 {
            Err(TranscodeError::InvalidTrit(t))
        } else {
            Ok(acc * 3 + t as u32)
        }
    })
}

pub(crate) fn push_bits(out: &mut Vec<bool>, value: u32, width: usize) {
    for i in (0..width).rev() {
        out.push((value >> i) & 1 == 1);
    }
}

fn nt_index(nt: u8) -> Option<usize> {
    NUCLEOTIDES.iter().position(|&c| c == nt)
}

/// Rotation code: each trit picks one of the three nucleotides that differ
/// from the previous one. From `A`, trits 0/1/2 give `C`/`G`/`T`; the table
/// for the other predecessors is the same rotation shifted along `ACGT`.
pub fn trits_to_nt(trits: &[u8], prev: u8) -> Result<Vec<u8>, TranscodeError> {
    let mut p = nt_index(prev).ok_or(TranscodeError::InvalidNucleotide(prev))?;
    trits
        .iter()
        .map(|&t| {
            if t > 2 {
                return Err(TranscodeError::InvalidTrit(t));
            }
            p = (p + 1 + t as usize) % 4;
            Ok(NUCLEOTIDES[p])
        })
        .collect()
}

/// Inverse of [`trits_to_nt`].
pub fn nt_to_trits(seq: &[u8], prev: u8) -> Result<Vec<u8>, TranscodeError> {
    let mut p = nt_index(prev).ok_or(TranscodeError::InvalidNucleotide(prev))?;
    seq.iter()
        .map(|&c| {
            let q = nt_index(c).ok_or(TranscodeError::InvalidNucleotide(c))?;
            if q == p {
                return Err(TranscodeError::RepeatedNucleotide);
            }
            let t = ((q + 4 - p) % 4 - 1) as u8;
            p = q;
            Ok(t)
        })
        .collect()
}
