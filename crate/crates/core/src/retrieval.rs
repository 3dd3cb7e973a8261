//! Layer-by-layer retrieval sessions with early stopping.
//!
//! A session targets layer 0 of one image, sequences until the layer
//! decodes, emits a preview, and waits. [`RetrievalSession::advance`]
//! switches the sequencer to the next layer's reference;
//! [`RetrievalSession::stop`] ends sequencing for good.

use thiserror::Error;

use crate::cost::{CostError, CostInputs, ImageInput, LayerInput};
use crate::decoder::{
    decode_layer, progressive_reconstruct, to_bitstream, DecodeError, LayerSpec, SegmentConfig,
};
use crate::pool::{
    BuiltPool, MoleculeLayout, Pool, PoolBuilder, PoolConfig, PoolError, ReferenceDictionary,
};
use crate::pyramid::{build_pyramid, encode_layers, CodecError, Image, LayerBitstream};
use crate::sim::{ErrorModel, SamplingParams, Sequencer, SimError, TargetRef};
use crate::transcoder::parity::ParityLayout;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("image {0} is not registered")]
    UnknownImage(String),
    #[error("all layers are already retrieved")]
    SessionComplete,
    #[error("session is stopped")]
    SessionStopped,
    #[error("layer {layer} not recovered within the read budget: {source}")]
    Budget { layer: usize, source: DecodeError },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Running,
    AwaitingDecision,
    Stopped,
    Complete,
}

#[derive(Debug, Clone)]
pub struct RetrievalConfig {
    pub params: SamplingParams,
    pub model: ErrorModel,
    pub seed: u64,
    /// Accepted reads allowed per layer, as a multiple of its coverage quota.
    pub budget_factor: f64,
    pub layout: MoleculeLayout,
    pub parity: ParityLayout,
    pub segment: SegmentConfig,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        let layout = MoleculeLayout::default();
        Self {
            params: SamplingParams::default(),
            model: ErrorModel::default(),
            seed: 0,
            budget_factor: 50.0,
            parity: ParityLayout::new(8, layout.blocks_per_molecule),
            layout,
            segment: SegmentConfig::default(),
        }
    }
}

/// What a session reports after each layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEvent {
    pub layer: usize,
    /// Reconstruction at the resolution of `layer`.
    pub preview: Image,
    pub psnr_db: Option<f64>,
    /// Nucleotides sequenced so far in the session.
    pub cost_nt: u64,
    /// Projected full-read cost over the cost so far, assuming equal
    /// coverage for every layer.
    pub gain_estimate: f64,
    pub state: SessionState,
}

pub struct RetrievalSession<'p> {
    image_id: String,
    dict: &'p ReferenceDictionary,
    molecules: Vec<usize>,
    sequencer: Sequencer<'p>,
    config: RetrievalConfig,
    decoded: Vec<LayerBitstream>,
    original: Option<Image>,
    state: SessionState,
    events: Vec<LayerEvent>,
}

impl<'p> RetrievalSession<'p> {
    /// Opens a session without sequencing anything yet.
    pub fn open(
        pool: &'p Pool,
        dict: &'p ReferenceDictionary,
        image_id: &str,
        config: RetrievalConfig,
        original: Option<Image>,
    ) -> Result<Self, RetrievalError> {
        let layers = dict.layers_of(image_id);
        if layers.is_empty() {
            return Err(RetrievalError::UnknownImage(image_id.to_string()));
        }
        let molecules: Vec<usize> = (0..layers.len())
            .map(|k| pool.molecule_count(image_id, k))
            .collect();
        if layers.iter().copied().ne(0..layers.len()) || molecules.contains(&0) {
            return Err(RetrievalError::UnknownImage(image_id.to_string()));
        }
        let sequencer = Sequencer::new(pool, dict, config.params, config.model, config.seed)?;
        Ok(Self {
            image_id: image_id.to_string(),
            dict,
            molecules,
            sequencer,
            config,
            decoded: Vec::new(),
            original,
            state: SessionState::Running,
            events: Vec::new(),
        })
    }

    /// Opens a session and retrieves layer 0.
    pub fn start(
        pool: &'p Pool,
        dict: &'p ReferenceDictionary,
        image_id: &str,
        config: RetrievalConfig,
        original: Option<Image>,
    ) -> Result<Self, RetrievalError> {
        let mut s = Self::open(pool, dict, image_id, config, original)?;
        s.retrieve_next()?;
        Ok(s)
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn n_levels(&self) -> usize {
        self.molecules.len()
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn events(&self) -> &[LayerEvent] {
        &self.events
    }

    pub fn decoded_layers(&self) -> &[LayerBitstream] {
        &self.decoded
    }

    pub fn cost_nt(&self) -> u64 {
        self.sequencer.telemetry().total_nt
    }

    pub fn sequencer(&self) -> &Sequencer<'p> {
        &self.sequencer
    }

    /// Gain of stopping after layer `k` if every layer is read at the same
    /// coverage per molecule.
    pub fn theoretical_gain(&self, k: usize) -> f64 {
        let total: usize = self.molecules.iter().sum();
        let prefix: usize = self.molecules[..=k].iter().sum();
        total as f64 / prefix as f64
    }

    /// Retrieves the next layer.
    pub fn advance(&mut self) -> Result<&LayerEvent, RetrievalError> {
        match self.state {
            SessionState::Stopped => return Err(RetrievalError::SessionStopped),
            SessionState::Complete => return Err(RetrievalError::SessionComplete),
            _ => {}
        }
        self.retrieve_next()?;
        Ok(self.events.last().expect("event recorded"))
    }

    /// Ends sequencing. Cost counters are frozen from here on.
    pub fn stop(&mut self) -> Result<&LayerEvent, RetrievalError> {
        match self.state {
            SessionState::Stopped => return Err(RetrievalError::SessionStopped),
            SessionState::Complete => return Err(RetrievalError::SessionComplete),
            _ => {}
        }
        self.sequencer.early_stop()?;
        self.state = SessionState::Stopped;
        if let Some(last) = self.events.last() {
            let mut ev = last.clone();
            ev.state = SessionState::Stopped;
            self.events.push(ev);
        }
        self.events.last().ok_or(RetrievalError::SessionStopped)
    }

    /// Retrieves layers until `max_layer` (or the last) and stops there.
    pub fn run_to(&mut self, max_layer: Option<usize>) -> Result<(), RetrievalError> {
        let last = self.n_levels() - 1;
        let target = max_layer.unwrap_or(last).min(last);
        while self.decoded.len() <= target {
            self.retrieve_next()?;
        }
        if self.state == SessionState::AwaitingDecision {
            self.stop()?;
        }
        Ok(())
    }

    fn retrieve_next(&mut self) -> Result<(), RetrievalError> {
        let k = self.decoded.len();
        let target = TargetRef::new(self.image_id.clone(), k);
        self.state = SessionState::Running;
        self.sequencer.switch_target(&target)?;
        let quota = self.sequencer.coverage_quota(&target).max(1);
        let budget = (quota as f64 * self.config.budget_factor).ceil() as usize;
        let reference = self.dict.lookup(&self.image_id, k)?.to_vec();
        let spec = LayerSpec {
            reference: &reference,
            layout: &self.config.layout,
            parity: self.config.parity,
            layer_tag: k as u8,
            molecules: self.molecules[k],
            segment: self.config.segment,
        };
        let mut goal = quota;
        let payload = loop {
            while self.sequencer.telemetry().accepted_for(&target) < goal {
                self.sequencer.step()?;
            }
            let reads: Vec<&[u8]> = self.sequencer.telemetry().reads_for(&target).collect();
            match decode_layer(&reads, &spec) {
                Ok(out) => break out.payload,
                Err(
                    e @ (DecodeError::IrrecoverableLayer { .. }
                    | DecodeError::LayerChecksum
                    | DecodeError::NoReads),
                ) => {
                    if goal >= budget {
                        self.sequencer.early_stop()?;
                        self.state = SessionState::Stopped;
                        return Err(RetrievalError::Budget {
                            layer: k,
                            source: e,
                        });
                    }
                    goal = (goal + quota).min(budget);
                }
                Err(e) => return Err(e.into()),
            }
        };
        let bitstream = to_bitstream(&self.image_id, payload)?;
        if bitstream.layer_index != k {
            return Err(CodecError::InconsistentLayers.into());
        }
        self.decoded.push(bitstream);
        let rec = progressive_reconstruct(&self.decoded, self.original.as_ref())?;
        self.state = if k + 1 == self.n_levels() {
            SessionState::Complete
        } else {
            SessionState::AwaitingDecision
        };
        self.events.push(LayerEvent {
            layer: k,
            preview: rec.image,
            psnr_db: rec.psnr_db,
            cost_nt: self.cost_nt(),
            gain_estimate: self.theoretical_gain(k),
            state: self.state,
        });
        Ok(())
    }
}

/// Splits an image into `n_levels` layer bitstreams.
pub fn encode_image(
    image_id: &str,
    image: &Image,
    n_levels: usize,
) -> Result<Vec<LayerBitstream>, CodecError> {
    Ok(encode_layers(image_id, &build_pyramid(image, n_levels)?))
}

/// Builds one pool holding every given image.
pub fn build_pool(
    images: &[(String, Vec<LayerBitstream>)],
    config: PoolConfig,
) -> Result<BuiltPool, PoolError> {
    let mut builder = PoolBuilder::new(config)?;
    for (id, layers) in images {
        builder.add_image(id, layers)?;
    }
    builder.finish()
}

/// Cost inputs for images in a pool, with every layer read at
/// `coverage_nt` nucleotides per molecule.
pub fn theoretical_inputs(
    pool: &Pool,
    images: &[(String, u64)],
    coverage_nt: f64,
) -> Result<CostInputs, RetrievalError> {
    let catalog = pool.catalog();
    let inputs = images
        .iter()
        .map(|(id, pixels)| {
            let layers: Vec<LayerInput> = catalog
                .iter()
                .filter(|((img, _), _)| img == id)
                .map(|(_, &n)| LayerInput {
                    oligos: n as u64,
                    coverage: coverage_nt,
                })
                .collect();
            if layers.is_empty() {
                return Err(RetrievalError::UnknownImage(id.clone()));
            }
            Ok(ImageInput {
                id: id.clone(),
                pixels: *pixels,
                layers,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CostInputs::new(inputs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::scene;

    fn small_pool() -> (BuiltPool, Image) {
        let img = scene(64, 64, 9);
        let layers = encode_image("s", &img, 3).unwrap();
        let other = encode_image("o", &scene(64, 64, 10), 3).unwrap();
        let built = build_pool(
            &[("s".into(), layers), ("o".into(), other)],
            PoolConfig::default(),
        )
        .unwrap();
        (built, img)
    }

    fn clean() -> RetrievalConfig {
        RetrievalConfig {
            model: ErrorModel::error_free(),
            params: SamplingParams {
                coverage_target: 2.0,
                ..SamplingParams::default()
            },
            ..RetrievalConfig::default()
        }
    }

    #[test]
    fn full_session_is_lossless() {
        let (built, img) = small_pool();
        let mut s = RetrievalSession::start(
            &built.pool,
            &built.dictionary,
            "s",
            clean(),
            Some(img.clone()),
        )
        .unwrap();
        assert_eq!(s.state(), SessionState::AwaitingDecision);
        let first = &s.events()[0];
        assert_eq!((first.preview.width(), first.preview.height()), (16, 16));
        assert!(first.cost_nt > 0);
        s.advance().unwrap();
        let last = s.advance().unwrap().clone();
        assert_eq!(last.state, SessionState::Complete);
        assert_eq!(last.preview, img);
        assert_eq!(last.psnr_db, Some(f64::INFINITY));
        assert!(matches!(s.advance(), Err(RetrievalError::SessionComplete)));
        let costs: Vec<u64> = s.events().iter().map(|e| e.cost_nt).collect();
        assert!(costs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn stop_freezes_cost() {
        let (built, _) = small_pool();
        let mut s =
            RetrievalSession::start(&built.pool, &built.dictionary, "s", clean(), None).unwrap();
        let before = s.cost_nt();
        let ev = s.stop().unwrap();
        assert_eq!(ev.state, SessionState::Stopped);
        assert_eq!(ev.cost_nt, before);
        assert!(matches!(s.advance(), Err(RetrievalError::SessionStopped)));
        assert!(matches!(s.stop(), Err(RetrievalError::SessionStopped)));
        assert_eq!(s.cost_nt(), before);
    }

    #[test]
    fn unknown_image() {
        let (built, _) = small_pool();
        assert!(matches!(
            RetrievalSession::start(&built.pool, &built.dictionary, "zzz", clean(), None),
            Err(RetrievalError::UnknownImage(_))
        ));
    }

    #[test]
    fn replay_is_identical() {
        let (built, _) = small_pool();
        let run = || {
            let mut s = RetrievalSession::start(
                &built.pool,
                &built.dictionary,
                "o",
                RetrievalConfig {
                    seed: 4,
                    ..RetrievalConfig::default()
                },
                None,
            )
            .unwrap();
            s.run_to(None).unwrap();
            s.events().to_vec()
        };
        assert_eq!(run(), run());
    }
}
