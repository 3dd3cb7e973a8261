//! Reference design, molecule assembly and the molecule pool.
//!
//! Every `(image, layer)` pair gets its own reference sequence. A layer's
//! blocks are ligated `B` at a time behind that reference, each block
//! preceded by a fixed adapter:
//!
//! ```text
//! reference | adapter block_0 | adapter block_1 | ... | adapter block_{B-1}
//! ```
//!
//! The last molecule of a layer is filled up with pad blocks so all
//! molecules have the same length.

mod dictionary;
mod fasta;

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;
use uuid::Uuid;

use crate::align::levenshtein_within;
use crate::pyramid::LayerBitstream;
use crate::transcoder::parity::{encode_layer_blocks, ParityLayout};
use crate::transcoder::{
    encode_block, validate_constraints, ConstraintConfig, HeaderFields, OligoBlock, TranscodeError,
    BLOCK_NT, MAX_BLOCK_INDEX, PAD_LAYER_TAG,
};

pub use dictionary::ReferenceDictionary;
pub use fasta::{read_pool, write_pool};

/// Adapter between ligated blocks. Ends in `A`, the predecessor every block
/// is rotation-coded against.
pub const DEFAULT_ADAPTER: &[u8; 20] = b"GTCAGGTTCAGCATTCGACA";
/// Molecules shorter than this cannot be placed reliably by adaptive sampling.
pub const MIN_MOLECULE_NT: usize = 1000;

const MOLECULE_NAMESPACE: Uuid = Uuid::from_u128(0x6f1c_2b7e_94d3_4c5a_8e21_d0a7_53b9_e64f);

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("could not design {wanted} references within {attempts} attempts (d_min too large?)")]
    DesignExhausted { wanted: usize, attempts: usize },
    #[error("reference design from seed material is not supported")]
    SeedMaterialUnsupported,
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("({image_id}, {layer}) is already registered")]
    DuplicateEntry { image_id: String, layer: usize },
    #[error("({image_id}, {layer}) is not registered")]
    NotFound { image_id: String, layer: usize },
    #[error("reference {0} is already assigned to another layer")]
    ReferenceReused(String),
    #[error("molecule would be {length} nt; at least {min} nt are required")]
    MoleculeTooShort { length: usize, min: usize },
    #[error("image id {0:?} must be non-empty and free of whitespace")]
    InvalidImageId(String),
    #[error("layer {0} cannot be tagged (tags 0..255 are available)")]
    LayerTagOverflow(usize),
    #[error("{0} blocks exceed the addressable block range")]
    TooManyBlocks(usize),
    #[error("non-ACGT symbol in record {0}")]
    Alphabet(String),
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error(transparent)]
    Transcode(#[from] TranscodeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Knobs for [`design_references`].
#[derive(Debug, Clone, PartialEq)]
pub struct DesignConfig {
    pub length: usize,
    /// Minimum pairwise edit distance between references.
    pub d_min: usize,
    pub gc_min: f64,
    pub gc_max: f64,
    pub homopolymer_max: usize,
    /// Candidates drawn before giving up.
    pub max_attempts: usize,
    /// Reserved for deriving references from image content. Must be `None`.
    pub seed_material: Option<Vec<u8>>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            length: 40,
            d_min: 15,
            gc_min: 0.40,
            gc_max: 0.60,
            homopolymer_max: 3,
            max_attempts: 20_000,
            seed_material: None,
        }
    }
}

fn reference_ok(seq: &[u8], cfg: &DesignConfig) -> bool {
    let gc = seq.iter().filter(|&&c| c == b'G' || c == b'C').count() as f64 / seq.len() as f64;
    if gc < cfg.gc_min || gc > cfg.gc_max {
        return false;
    }
    let mut run = 1;
    for w in seq.windows(2) {
        run = if w[0] == w[1] { run + 1 } else { 1 };
        if run > cfg.homopolymer_max {
            return false;
        }
    }
    true
}

/// Draws `n` references that satisfy the composition constraints and keep
/// `d_min` edit distance from each other and from everything in `existing`.
pub fn design_references(
    n: usize,
    existing: &ReferenceDictionary,
    seed: u64,
    cfg: &DesignConfig,
) -> Result<Vec<Vec<u8>>, PoolError> {
    if cfg.seed_material.is_some() {
        return Err(PoolError::SeedMaterialUnsupported);
    }
    if n == 0 || cfg.length == 0 {
        return Err(PoolError::BadConfig(
            "need n >= 1 and a non-zero length".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taken: Vec<&[u8]> = existing.references().collect();
    let mut out: Vec<Vec<u8>> = Vec::with_capacity(n);
    for _ in 0..cfg.max_attempts {
        let cand: Vec<u8> = (0..cfg.length)
            .map(|_| b"ACGT"[rng.random_range(0..4)])
            .collect();
        if !reference_ok(&cand, cfg) {
            continue;
        }
        let too_close = |other: &[u8]| levenshtein_within(&cand, other, cfg.d_min - 1).is_some();
        if taken.iter().any(|r| too_close(r)) || out.iter().any(|r| too_close(r)) {
            continue;
        }
        out.push(cand);
        if out.len() == n {
            return Ok(out);
        }
    }
    Err(PoolError::DesignExhausted {
        wanted: n,
        attempts: cfg.max_attempts,
    })
}

/// Geometry shared by all molecules of a pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoleculeLayout {
    pub adapter: Vec<u8>,
    pub blocks_per_molecule: usize,
}

impl Default for MoleculeLayout {
    fn default() -> Self {
        Self {
            adapter: DEFAULT_ADAPTER.to_vec(),
            blocks_per_molecule: 7,
        }
    }
}

impl MoleculeLayout {
    pub fn molecule_len(&self, reference_len: usize) -> usize {
        reference_len + self.blocks_per_molecule * (self.adapter.len() + BLOCK_NT)
    }

    /// Offset of block slot `s` within a molecule.
    pub fn block_offset(&self, reference_len: usize, slot: usize) -> usize {
        reference_len + slot * (self.adapter.len() + BLOCK_NT) + self.adapter.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledMolecule {
    pub image_id: String,
    pub layer: usize,
    pub reference: Vec<u8>,
    pub blocks: Vec<OligoBlock>,
    pub sequence: Vec<u8>,
}

/// Chunks `blocks` in order into molecules behind `reference`, padding the
/// last one.
pub fn assemble(
    image_id: &str,
    layer: usize,
    blocks: &[OligoBlock],
    reference: &[u8],
    layout: &MoleculeLayout,
    cfg: &ConstraintConfig,
) -> Result<Vec<AssembledMolecule>, PoolError> {
    let length = layout.molecule_len(reference.len());
    if length < MIN_MOLECULE_NT || layout.blocks_per_molecule == 0 {
        return Err(PoolError::MoleculeTooShort {
            length,
            min: MIN_MOLECULE_NT,
        });
    }
    let b = layout.blocks_per_molecule;
    let n_pads = (b - blocks.len() % b) % b;
    let mut all = blocks.to_vec();
    for i in 0..n_pads {
        let index = (blocks.len() + i) as u32;
        if index > MAX_BLOCK_INDEX {
            return Err(PoolError::TooManyBlocks(blocks.len()));
        }
        all.push(encode_block(
            &[],
            HeaderFields {
                layer_tag: PAD_LAYER_TAG,
                block_index: index,
                parity: false,
            },
            cfg,
        )?);
    }
    Ok(all
        .chunks(b)
        .map(|chunk| {
            let mut sequence = Vec::with_capacity(length);
            sequence.extend_from_slice(reference);
            for block in chunk {
                sequence.extend_from_slice(&layout.adapter);
                sequence.extend_from_slice(&block.nt);
            }
            AssembledMolecule {
                image_id: image_id.to_string(),
                layer,
                reference: reference.to_vec(),
                blocks: chunk.to_vec(),
                sequence,
            }
        })
        .collect())
}

pub fn molecule_id(sequence: &[u8]) -> Uuid {
    Uuid::new_v5(&MOLECULE_NAMESPACE, sequence)
}

/// One distinct molecule species in a pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolEntry {
    pub id: Uuid,
    pub image_id: String,
    pub layer: usize,
    pub sequence: Vec<u8>,
    pub abundance: u64,
}

/// Multiset of molecules keyed by content id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pool {
    entries: BTreeMap<Uuid, PoolEntry>,
}

impl Pool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `abundance` copies; copies of a molecule already present are
    /// summed.
    pub fn insert(
        &mut self,
        image_id: &str,
        layer: usize,
        sequence: Vec<u8>,
        abundance: u64,
    ) -> Result<Uuid, PoolError> {
        if abundance == 0 {
            return Err(PoolError::BadConfig("abundance must be at least 1".into()));
        }
        let id = molecule_id(&sequence);
        match self.entries.get_mut(&id) {
            Some(e) => {
                if e.image_id != image_id || e.layer != layer {
                    return Err(PoolError::Malformed(format!(
                        "molecule {id} is labelled both {}/{} and {image_id}/{layer}",
                        e.image_id, e.layer
                    )));
                }
                e.abundance += abundance;
            }
            None => {
                self.entries.insert(
                    id,
                    PoolEntry {
                        id,
                        image_id: image_id.to_string(),
                        layer,
                        sequence,
                        abundance,
                    },
                );
            }
        }
        Ok(id)
    }

    /// Multiset union.
    pub fn merge(&mut self, other: &Pool) -> Result<(), PoolError> {
        for e in other.entries.values() {
            self.insert(&e.image_id, e.layer, e.sequence.clone(), e.abundance)?;
        }
        Ok(())
    }

    /// Number of distinct molecules.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_abundance(&self) -> u64 {
        self.entries.values().map(|e| e.abundance).sum()
    }

    pub fn get(&self, id: &Uuid) -> Option<&PoolEntry> {
        self.entries.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PoolEntry> {
        self.entries.values()
    }

    /// `(id, abundance)` for every molecule, sorted by id.
    pub fn abundances(&self) -> Vec<(Uuid, u64)> {
        self.entries.values().map(|e| (e.id, e.abundance)).collect()
    }

    /// Distinct molecule count per `(image, layer)`.
    pub fn catalog(&self) -> BTreeMap<(String, usize), usize> {
        let mut out = BTreeMap::new();
        for e in self.entries.values() {
            *out.entry((e.image_id.clone(), e.layer)).or_insert(0) += 1;
        }
        out
    }

    pub fn molecule_count(&self, image_id: &str, layer: usize) -> usize {
        self.entries
            .values()
            .filter(|e| e.image_id == image_id && e.layer == layer)
            .count()
    }

    pub fn save(&self, path: &Path) -> Result<(), PoolError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        write_pool(self, &mut w)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PoolError> {
        let file = std::fs::File::open(path)?;
        read_pool(std::io::BufReader::new(file))
    }
}

/// How many copies of each molecule a freshly built pool holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbundancePolicy {
    /// Every molecule gets the same count.
    Uniform(u64),
    /// Every reference gets roughly the same total count, so each layer is
    /// equally likely to be drawn whatever its size. The largest layer's
    /// molecules get `base` copies each.
    Equimolar { base: u64 },
}

impl Default for AbundancePolicy {
    fn default() -> Self {
        Self::Equimolar { base: 4 }
    }
}

#[derive(Debug, Clone)]
pub struct PoolConfig {
    pub design: DesignConfig,
    pub layout: MoleculeLayout,
    pub parity: ParityLayout,
    pub constraints: ConstraintConfig,
    pub abundance: AbundancePolicy,
    pub seed: u64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        let layout = MoleculeLayout::default();
        Self {
            design: DesignConfig::default(),
            parity: ParityLayout::new(8, layout.blocks_per_molecule),
            layout,
            constraints: ConstraintConfig::default(),
            abundance: AbundancePolicy::default(),
            seed: 0,
        }
    }
}

/// Pool and dictionary produced by [`PoolBuilder`].
#[derive(Debug, Clone)]
pub struct BuiltPool {
    pub pool: Pool,
    pub dictionary: ReferenceDictionary,
}

/// Accumulates images layer by layer and seals them into a pool.
pub struct PoolBuilder {
    config: PoolConfig,
    dictionary: ReferenceDictionary,
    molecules: Vec<AssembledMolecule>,
    images_added: u64,
}

impl PoolBuilder {
    pub fn new(config: PoolConfig) -> Result<Self, PoolError> {
        let len = config.layout.molecule_len(config.design.length);
        if len < MIN_MOLECULE_NT {
            return Err(PoolError::MoleculeTooShort {
                length: len,
                min: MIN_MOLECULE_NT,
            });
        }
        if config.parity.stride != config.layout.blocks_per_molecule {
            return Err(PoolError::BadConfig(
                "parity stride must equal blocks per molecule".into(),
            ));
        }
        if !validate_constraints(&config.layout.adapter, &config.constraints)
            .homopolymers
            .is_empty()
        {
            return Err(PoolError::BadConfig(
                "adapter has a long homopolymer".into(),
            ));
        }
        Ok(Self {
            config,
            dictionary: ReferenceDictionary::new(),
            molecules: Vec::new(),
            images_added: 0,
        })
    }

    pub fn dictionary(&self) -> &ReferenceDictionary {
        &self.dictionary
    }

    /// Registers references for every layer of one image and assembles its
    /// molecules. `layers` must be the image's full layer list.
    pub fn add_image(
        &mut self,
        image_id: &str,
        layers: &[LayerBitstream],
    ) -> Result<(), PoolError> {
        if image_id.is_empty() || image_id.chars().any(char::is_whitespace) {
            return Err(PoolError::InvalidImageId(image_id.to_string()));
        }
        if let Some(l) = layers
            .iter()
            .find(|l| l.layer_index >= PAD_LAYER_TAG as usize)
        {
            return Err(PoolError::LayerTagOverflow(l.layer_index));
        }
        let refs = design_references(
            layers.len(),
            &self.dictionary,
            self.config.seed.wrapping_add(self.images_added),
            &self.config.design,
        )?;
        self.images_added += 1;

        let cfg = &self.config;
        let assembled: Vec<Vec<AssembledMolecule>> = layers
            .par_iter()
            .zip(refs.par_iter())
            .map(|(layer, reference)| {
                let blocks = encode_layer_blocks(
                    layer.layer_index as u8,
                    &layer.payload,
                    cfg.parity,
                    &cfg.constraints,
                )?;
                assemble(
                    image_id,
                    layer.layer_index,
                    &blocks,
                    reference,
                    &cfg.layout,
                    &cfg.constraints,
                )
            })
            .collect::<Result<_, PoolError>>()?;

        for (layer, reference) in layers.iter().zip(refs) {
            self.dictionary
                .register(image_id, layer.layer_index, reference)?;
        }
        self.molecules.extend(assembled.into_iter().flatten());
        Ok(())
    }

    pub fn finish(self) -> Result<BuiltPool, PoolError> {
        let mut counts: BTreeMap<(&str, usize), u64> = BTreeMap::new();
        for m in &self.molecules {
            *counts.entry((m.image_id.as_str(), m.layer)).or_insert(0) += 1;
        }
        let largest = counts.values().copied().max().unwrap_or(1);
        let mut pool = Pool::new();
        for m in &self.molecules {
            let abundance = match self.config.abundance {
                AbundancePolicy::Uniform(n) => n,
                AbundancePolicy::Equimolar { base } => {
                    let count = counts[&(m.image_id.as_str(), m.layer)];
                    ((base * largest) as f64 / count as f64).round().max(1.0) as u64
                }
            };
            pool.insert(&m.image_id, m.layer, m.sequence.clone(), abundance)?;
        }
        Ok(BuiltPool {
            pool,
            dictionary: self.dictionary,
        })
    }
}
