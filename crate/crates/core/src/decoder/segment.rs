use crate::align::semiglobal;
use crate::pool::MoleculeLayout;
use crate::transcoder::{decode_block, BlockHeader, BLOCK_NT, PAYLOAD_BYTES};

use super::DecodeError;

/// One block-sized slice of a read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockObservation {
    pub read_id: usize,
    /// Position of the block within its molecule.
    pub slot: usize,
    pub candidate: Vec<u8>,
    /// Header and payload when the candidate decodes with a valid CRC.
    pub decoded: Option<(BlockHeader, [u8; PAYLOAD_BYTES])>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentConfig {
    /// Allowed deviation of a candidate from the block length.
    pub tol: usize,
    /// Largest adapter edit distance, as a fraction of the adapter length.
    pub adapter_threshold: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            tol: 8,
            adapter_threshold: 0.25,
        }
    }
}

/// Finds `pattern` near `expected` in `read`, returning `(start, end)` of
/// the hit.
fn locate(
    read: &[u8],
    pattern: &[u8],
    expected: usize,
    slack: usize,
    max_dist: usize,
) -> Option<(usize, usize)> {
    if read.get(expected..expected + pattern.len()) == Some(pattern) {
        return Some((expected, expected + pattern.len()));
    }
    let lo = expected.saturating_sub(slack);
    let hi = (expected + pattern.len() + slack).min(read.len());
    if lo >= hi {
        return None;
    }
    semiglobal(pattern, &read[lo..hi])
        .filter(|h| h.distance <= max_dist)
        .map(|h| (lo + h.start, lo + h.end))
}

/// Cuts a read into block candidates using the adapters as anchors.
///
/// Adapters are searched one after another, each within `tol` of where the
/// previous block should have ended. A missing adapter is bridged by
/// assuming no drift. Candidates outside `148 ± tol` are dropped.
pub fn segment_read(
    read: &[u8],
    read_id: usize,
    reference: &[u8],
    layout: &MoleculeLayout,
    cfg: &SegmentConfig,
) -> Result<Vec<BlockObservation>, DecodeError> {
    let adapter = &layout.adapter;
    let max_dist = (cfg.adapter_threshold * adapter.len() as f64).floor() as usize;
    let ref_max = (cfg.adapter_threshold * reference.len() as f64).floor() as usize;
    let slack = cfg.tol;

    let mut cursor = locate(read, reference, 0, slack, ref_max).map_or(reference.len(), |h| h.1);
    // (block start, start of the following adapter if it was seen)
    let mut starts = Vec::with_capacity(layout.blocks_per_molecule);
    let mut found = 0;
    for _ in 0..layout.blocks_per_molecule {
        if cursor >= read.len() {
            break;
        }
        let start = match locate(read, adapter, cursor, slack, max_dist) {
            Some((a_start, a_end)) => {
                found += 1;
                if let Some(prev) = starts.last_mut() {
                    let (_, next): &mut (usize, Option<usize>) = prev;
                    *next = Some(a_start);
                }
                a_end
            }
            None => cursor + adapter.len(),
        };
        starts.push((start, None));
        cursor = start + BLOCK_NT;
    }
    if found == 0 {
        return Err(DecodeError::NoAdapterFound);
    }
    let lo = BLOCK_NT - cfg.tol;
    let hi = BLOCK_NT + cfg.tol;
    Ok(starts
        .iter()
        .enumerate()
        .filter_map(|(slot, &(start, next))| {
            let end = next
                .unwrap_or_else(|| {
                    if slot + 1 == layout.blocks_per_molecule {
                        read.len().min(start + hi)
                    } else {
                        start + BLOCK_NT
                    }
                })
                .min(read.len());
            let len = end.checked_sub(start)?;
            if !(lo..=hi).contains(&len) {
                return None;
            }
            let candidate = read[start..end].to_vec();
            let decoded = decode_block(&candidate).ok();
            Some(BlockObservation {
                read_id,
                slot,
                candidate,
                decoded,
            })
        })
        .collect())
}
