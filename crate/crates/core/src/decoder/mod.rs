//! Layer recovery from accepted noisy reads.
//!
//! Reads are cut into block candidates at the adapters, attributed to the
//! molecule they came from, and each molecule slot is rebuilt by consensus.
//! Decoded blocks are placed by their headers, single gaps per parity group
//! are filled by XOR, and the framed layer payload is checked before being
//! returned.

mod consensus;
mod segment;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::pool::MoleculeLayout;
use crate::pyramid::{
    layer_dims, psnr, reconstruct, reconstruct_full_size, CodecError, Image, LayerBitstream,
    LayerHeader,
};
use crate::transcoder::parity::{
    data_block_count, decode_layer_frame, recover_with_parity, FrameError, ParityLayout,
    PARITY_INDEX_BASE,
};
use crate::transcoder::{decode_block, BlockHeader, PAYLOAD_BYTES};

pub use consensus::{consensus, consensus_checked};
pub use segment::{segment_read, BlockObservation, SegmentConfig};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("no adapter found in read")]
    NoAdapterFound,
    #[error("no usable reads")]
    NoReads,
    #[error("layer cannot be recovered; missing data blocks {missing:?}")]
    IrrecoverableLayer { missing: Vec<usize> },
    #[error("layer payload failed its checksum")]
    LayerChecksum,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockStatus {
    Ok,
    ParityRecovered,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerDecode {
    pub payload: Vec<u8>,
    /// Status of each data block.
    pub statuses: Vec<BlockStatus>,
    /// Reads that yielded at least one block candidate.
    pub reads_used: usize,
}

/// What the decoder needs to know about a layer besides its reads.
#[derive(Debug, Clone)]
pub struct LayerSpec<'a> {
    pub reference: &'a [u8],
    pub layout: &'a MoleculeLayout,
    pub parity: ParityLayout,
    pub layer_tag: u8,
    /// Molecules the layer was assembled into.
    pub molecules: usize,
    pub segment: SegmentConfig,
}

const KMER: usize = 16;
const MIN_KMER_HITS: usize = 12;
const AMBIGUOUS: u32 = u32::MAX;

fn kmers(seq: &[u8]) -> impl Iterator<Item = u32> + '_ {
    let mask = if KMER == 16 {
        u32::MAX
    } else {
        (1u32 << (2 * KMER)) - 1
    };
    let mut v = 0u32;
    seq.iter().enumerate().filter_map(move |(i, &c)| {
        let code = match c {
            b'A' => 0,
            b'C' => 1,
            b'G' => 2,
            _ => 3,
        };
        v = ((v << 2) | code) & mask;
        (i + 1 >= KMER).then_some(v)
    })
}

fn index_read(index: &mut HashMap<u32, u32>, obs: &[BlockObservation], owner: u32) {
    for o in obs {
        for k in kmers(&o.candidate) {
            let e = index.entry(k).or_insert(owner);
            if *e != owner {
                *e = AMBIGUOUS;
            }
        }
    }
}

/// Best owner of a read's k-mers, when it is clearly ahead of the rest.
fn lookup_owner(index: &HashMap<u32, u32>, obs: &[BlockObservation]) -> Option<u32> {
    let mut hits: HashMap<u32, usize> = HashMap::new();
    for o in obs {
        for k in kmers(&o.candidate) {
            match index.get(&k) {
                Some(&owner) if owner != AMBIGUOUS => *hits.entry(owner).or_insert(0) += 1,
                _ => {}
            }
        }
    }
    let mut ranked: Vec<(usize, u32)> = hits.into_iter().map(|(o, n)| (n, o)).collect();
    ranked.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let (best, owner) = *ranked.first()?;
    let second = ranked.get(1).map_or(0, |r| r.0);
    (best >= MIN_KMER_HITS && best >= 3 * second).then_some(owner)
}

/// Position of a block within the layer's block sequence (data, parity,
/// pads), if it can be told.
fn sequence_position(h: &BlockHeader, n_data: Option<usize>) -> Option<usize> {
    if h.is_pad() || !h.parity {
        Some(h.block_index as usize)
    } else {
        n_data.map(|d| d + (h.block_index - PARITY_INDEX_BASE) as usize)
    }
}

fn header_ok(h: &BlockHeader, tag: u8) -> bool {
    h.is_pad() || (h.layer_tag == tag && (!h.parity || h.block_index >= PARITY_INDEX_BASE))
}

type BlockKey = (bool, u32);

/// Rebuilds one layer payload from reads accepted for its reference.
pub fn decode_layer(reads: &[&[u8]], spec: &LayerSpec) -> Result<LayerDecode, DecodeError> {
    let b = spec.layout.blocks_per_molecule;

    // identical reads are segmented once and weighted by multiplicity
    let mut uniq: BTreeMap<&[u8], usize> = BTreeMap::new();
    for r in reads {
        *uniq.entry(r).or_insert(0) += 1;
    }
    let uniq: Vec<(&[u8], usize)> = uniq.into_iter().collect();
    let segmented: Vec<(usize, Vec<BlockObservation>)> = uniq
        .par_iter()
        .enumerate()
        .filter_map(|(id, (read, _))| {
            segment_read(read, id, spec.reference, spec.layout, &spec.segment)
                .ok()
                .filter(|obs| !obs.is_empty())
                .map(|obs| (id, obs))
        })
        .collect();
    if segmented.is_empty() {
        return Err(DecodeError::NoReads);
    }
    let weight = |id: usize| uniq[id].1;
    let reads_used = segmented.iter().map(|(id, _)| weight(*id)).sum();

    // data block count from block 0, by weighted vote
    let mut d_votes: BTreeMap<usize, usize> = BTreeMap::new();
    let max_blocks = spec.molecules * b;
    let mut note_block0 = |h: &BlockHeader, p: &[u8; PAYLOAD_BYTES], w: usize| {
        if h.layer_tag == spec.layer_tag && !h.parity && h.block_index == 0 {
            let d = data_block_count(p);
            if d <= max_blocks {
                *d_votes.entry(d).or_insert(0) += w;
            }
        }
    };
    for (id, obs) in &segmented {
        for o in obs {
            if let Some((h, p)) = &o.decoded {
                note_block0(h, p, weight(*id));
            }
        }
    }
    let mut n_data = d_votes
        .iter()
        .max_by_key(|(d, n)| (**n, std::cmp::Reverse(**d)))
        .map(|(d, _)| *d);
    if n_data.is_none() {
        n_data = block_count_from_parity(&segmented, spec);
    }

    // molecule of each read from its checksummed headers
    let mut owner: Vec<Option<u32>> = vec![None; uniq.len()];
    for (id, obs) in &segmented {
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for o in obs {
            let Some((h, _)) = &o.decoded else { continue };
            if !header_ok(h, spec.layer_tag) {
                continue;
            }
            if let Some(pos) = sequence_position(h, n_data) {
                if pos % b == o.slot && pos / b < spec.molecules {
                    *votes.entry(pos / b).or_insert(0) += 1;
                }
            }
        }
        owner[*id] = votes
            .into_iter()
            .max_by_key(|(m, n)| (*n, std::cmp::Reverse(*m)))
            .map(|(m, _)| m as u32);
    }

    // remaining reads by shared k-mers, first with known molecules, then
    // among themselves
    let mut index = HashMap::new();
    for (id, obs) in &segmented {
        if let Some(m) = owner[*id] {
            index_read(&mut index, obs, m);
        }
    }
    let unassigned: Vec<usize> = (0..segmented.len())
        .filter(|&i| owner[segmented[i].0].is_none())
        .collect();
    let found: Vec<Option<u32>> = unassigned
        .par_iter()
        .map(|&i| lookup_owner(&index, &segmented[i].1))
        .collect();
    let mut next_cluster = spec.molecules as u32;
    let mut cluster_index = HashMap::new();
    for (&i, f) in unassigned.iter().zip(found) {
        let (id, obs) = &segmented[i];
        owner[*id] = Some(match f {
            Some(m) => m,
            None => match lookup_owner(&cluster_index, obs) {
                Some(c) => c,
                None => {
                    let c = next_cluster;
                    next_cluster += 1;
                    index_read(&mut cluster_index, obs, c);
                    c
                }
            },
        });
    }

    // consensus per (group, slot)
    let mut slots: BTreeMap<(u32, usize), Vec<&BlockObservation>> = BTreeMap::new();
    for (id, obs) in &segmented {
        let g = owner[*id].expect("every read is placed");
        for o in obs {
            slots.entry((g, o.slot)).or_default().push(o);
        }
    }
    let decoded: Vec<Option<(BlockHeader, [u8; PAYLOAD_BYTES], usize)>> = slots
        .par_iter()
        .map(|(&(g, slot), obs)| {
            let mut expanded: Vec<&[u8]> = Vec::new();
            for o in obs {
                for _ in 0..weight(o.read_id) {
                    expanded.push(&o.candidate);
                }
            }
            let support = expanded.len();
            let expected = (g as usize) < spec.molecules;
            let fits = |h: &BlockHeader| {
                header_ok(h, spec.layer_tag)
                    && (!expected
                        || sequence_position(h, n_data).is_none_or(|p| p == g as usize * b + slot))
            };
            let accept = |s: &[u8]| decode_block(s).is_ok_and(|(h, _)| fits(&h));
            if let Some(cons) = consensus_checked(&expanded, spec.segment.tol, accept) {
                let (h, p) = decode_block(&cons).expect("accepted");
                return Some((h, p, support));
            }
            // fall back to the most supported checksummed observation
            let mut tally: BTreeMap<(u32, bool, [u8; PAYLOAD_BYTES]), (BlockHeader, usize)> =
                BTreeMap::new();
            for o in obs {
                if let Some((h, p)) = &o.decoded {
                    if header_ok(h, spec.layer_tag) {
                        tally
                            .entry((h.block_index, h.parity, *p))
                            .or_insert((*h, 0))
                            .1 += weight(o.read_id);
                    }
                }
            }
            tally
                .into_iter()
                .max_by_key(|(_, (_, n))| *n)
                .map(|((_, _, p), (h, n))| (h, p, n))
        })
        .collect();

    let mut blocks: HashMap<BlockKey, ([u8; PAYLOAD_BYTES], usize)> = HashMap::new();
    for (h, p, support) in decoded.into_iter().flatten() {
        if h.is_pad() {
            continue;
        }
        let e = blocks.entry((h.parity, h.block_index)).or_insert((p, 0));
        if support > e.1 {
            *e = (p, support);
        }
    }

    if let Some((p, _)) = blocks.get(&(false, 0)) {
        let d = data_block_count(p);
        if d <= max_blocks {
            n_data = Some(d);
        }
    }
    let n_data = match n_data {
        Some(d) => d,
        None => recover_block_count(&blocks, spec)
            .ok_or(DecodeError::IrrecoverableLayer { missing: vec![0] })?,
    };
    let (data, statuses) = assemble_data(&blocks, n_data, spec.parity);
    let missing: Vec<usize> = statuses
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == BlockStatus::Missing)
        .map(|(i, _)| i)
        .collect();
    if !missing.is_empty() {
        return Err(DecodeError::IrrecoverableLayer { missing });
    }
    let data: Vec<[u8; PAYLOAD_BYTES]> = data.into_iter().map(|d| d.expect("no gaps")).collect();
    let payload = decode_layer_frame(&data).map_err(|e| match e {
        FrameError::Checksum | FrameError::Truncated => DecodeError::LayerChecksum,
    })?;
    Ok(LayerDecode {
        payload,
        statuses,
        reads_used,
    })
}

fn assemble_data(
    blocks: &HashMap<BlockKey, ([u8; PAYLOAD_BYTES], usize)>,
    n_data: usize,
    layout: ParityLayout,
) -> (Vec<Option<[u8; PAYLOAD_BYTES]>>, Vec<BlockStatus>) {
    let mut data: Vec<Option<[u8; PAYLOAD_BYTES]>> = (0..n_data)
        .map(|d| blocks.get(&(false, d as u32)).map(|(p, _)| *p))
        .collect();
    let mut statuses: Vec<BlockStatus> = data
        .iter()
        .map(|d| {
            if d.is_some() {
                BlockStatus::Ok
            } else {
                BlockStatus::Missing
            }
        })
        .collect();
    for group in layout.groups(n_data) {
        let members = layout.members(group, n_data);
        let gaps: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&d| data[d].is_none())
            .collect();
        if gaps.len() != 1 {
            continue;
        }
        let Some((parity, _)) = blocks.get(&(true, PARITY_INDEX_BASE + group as u32)) else {
            continue;
        };
        let present: Vec<&[u8]> = members
            .iter()
            .filter_map(|&d| data[d].as_ref().map(|p| &p[..]))
            .collect();
        data[gaps[0]] = Some(recover_with_parity(&present, parity));
        statuses[gaps[0]] = BlockStatus::ParityRecovered;
    }
    (data, statuses)
}

/// Data block counts whose layout fills exactly the known molecule count.
fn compatible_counts<'a>(spec: &'a LayerSpec<'a>) -> impl Iterator<Item = usize> + 'a {
    let b = spec.layout.blocks_per_molecule;
    (1..=spec.molecules * b)
        .filter(move |&d| (d + spec.parity.groups(d).len()).div_ceil(b) == spec.molecules)
}

/// Block 0 unreadable from any single read: pick the compatible count that
/// puts the most parity headers in the slots they were read from.
fn block_count_from_parity(
    segmented: &[(usize, Vec<BlockObservation>)],
    spec: &LayerSpec,
) -> Option<usize> {
    let b = spec.layout.blocks_per_molecule;
    let mut residues = vec![0usize; b];
    for (_, obs) in segmented {
        for o in obs {
            if let Some((h, _)) = &o.decoded {
                if h.parity && header_ok(h, spec.layer_tag) && !h.is_pad() {
                    let k = (h.block_index - PARITY_INDEX_BASE) as usize % b;
                    residues[(o.slot + b - k) % b] += 1;
                }
            }
        }
    }
    compatible_counts(spec)
        .map(|d| (residues[d % b], d))
        .filter(|(n, _)| *n > 0)
        .max_by_key(|(n, d)| (*n, std::cmp::Reverse(*d)))
        .map(|(_, d)| d)
}

/// Block 0 was not seen: try every data block count compatible with the
/// molecule count and keep the one whose parity-recovered block 0 agrees.
fn recover_block_count(
    blocks: &HashMap<BlockKey, ([u8; PAYLOAD_BYTES], usize)>,
    spec: &LayerSpec,
) -> Option<usize> {
    compatible_counts(spec).find(|&d| {
        let (data, _) = assemble_data(blocks, d, spec.parity);
        data[0].is_some_and(|p| data_block_count(&p) == d)
    })
}

/// Turns a decoded payload back into a layer bitstream.
pub fn to_bitstream(image_id: &str, payload: Vec<u8>) -> Result<LayerBitstream, DecodeError> {
    let h = LayerHeader::parse(&payload)?;
    Ok(LayerBitstream {
        image_id: image_id.to_string(),
        layer_index: h.layer_index,
        decoded_dims: layer_dims(h.image_width, h.image_height, h.n_levels, h.layer_index),
        payload,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Image at the resolution of the last decoded layer.
    pub image: Image,
    /// PSNR of the full-size upsampling against the original, if given.
    pub psnr_db: Option<f64>,
}

/// Reconstructs from a decoded prefix `0..=K` and scores it.
pub fn progressive_reconstruct(
    layers: &[LayerBitstream],
    original: Option<&Image>,
) -> Result<Reconstruction, DecodeError> {
    let image = reconstruct(layers)?;
    let psnr_db = match original {
        Some(o) => Some(psnr(&reconstruct_full_size(layers)?, o)?),
        None => None,
    };
    Ok(Reconstruction { image, psnr_db })
}
