//! Progressive retrieval of images stored in DNA.
//!
//! Images are split into resolution layers ([`pyramid`]), each layer is
//! transcoded into constrained 148-nt blocks ([`transcoder`]) and ligated
//! behind a layer-specific reference sequence ([`pool`]). A simulated
//! adaptive-sampling sequencer ([`sim`]) selects molecules by reference, the
//! decoder ([`decoder`]) rebuilds layers from noisy reads, and [`cost`]
//! accounts for the nucleotides read. [`retrieval`] ties these together into
//! layer-by-layer sessions with early stopping.

pub mod align;
pub mod cost;
pub mod decoder;
pub mod pool;
pub mod pyramid;
pub mod raster;
pub mod retrieval;
pub mod sim;
pub mod synthetic;
pub mod transcoder;
