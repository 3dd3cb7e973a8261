//! Dyadic resolution pyramid over a reversible 5/3 wavelet.
//!
//! An image decomposed with `n_levels` layers yields layer 0, the coarsest
//! approximation, followed by one layer of detail subbands per doubling of
//! resolution. Layer `k` decodes to dimensions
//! `(ceil(W / 2^(n-1-k)), ceil(H / 2^(n-1-k)))`, so the last layer is the full
//! image. Every layer is serialized into its own payload; any prefix of
//! payloads starting at layer 0 reconstructs a lower-resolution image and the
//! full set reconstructs the input bit-exactly.

pub mod container;
mod entropy;
mod lifting;

use thiserror::Error;

pub use entropy::LayerHeader;

/// Smallest image edge accepted by [`build_pyramid`].
pub const MIN_IMAGE_DIM: usize = 8;
/// Smallest edge the coarsest layer may have.
pub const MIN_COARSE_DIM: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("image must have 1 or 3 channels, got {0}")]
    BadChannels(usize),
    #[error("sample buffer has {got} values, expected {expected}")]
    BadSampleCount { got: usize, expected: usize },
    #[error("image is {width}x{height}; both edges must be at least {MIN_IMAGE_DIM}")]
    ImageTooSmall { width: usize, height: usize },
    #[error("n_levels must be at least 2, got {0}")]
    TooFewLevels(usize),
    #[error(
        "{n_levels} layers need min(width, height) >= {required} so the coarsest layer keeps \
         {MIN_COARSE_DIM} pixels per edge; image min edge is {min_edge}"
    )]
    TooManyLevels {
        n_levels: usize,
        min_edge: usize,
        required: usize,
    },
    #[error("no layers supplied")]
    NoLayers,
    #[error("layer prefix has a gap: expected layer {expected}, found {found}")]
    PrefixGap { expected: usize, found: usize },
    #[error("layer payloads disagree on image geometry")]
    InconsistentLayers,
    #[error("malformed layer payload: {0}")]
    MalformedPayload(String),
    #[error("images differ in shape: {a:?} vs {b:?}")]
    ShapeMismatch {
        a: (usize, usize, usize),
        b: (usize, usize, usize),
    },
}

/// An 8-bit raster, interleaved row-major when it has 3 channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<u8>,
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        samples: Vec<u8>,
    ) -> Result<Self, CodecError> {
        if channels != 1 && channels != 3 {
            return Err(CodecError::BadChannels(channels));
        }
        let expected = width * height * channels;
        if samples.len() != expected {
            return Err(CodecError::BadSampleCount {
                got: samples.len(),
                expected,
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
        .expect("valid geometry")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    fn plane(&self, c: usize) -> Vec<i32> {
        self.samples
            .iter()
            .skip(c)
            .step_by(self.channels)
            .map(|&v| v as i32)
            .collect()
    }

    fn from_planes(width: usize, height: usize, planes: &[Vec<i32>]) -> Self {
        let channels = planes.len();
        let mut samples = vec![0u8; width * height * channels];
        for (c, plane) in planes.iter().enumerate() {
            for (i, &v) in plane.iter().enumerate() {
                samples[i * channels + c] = v.clamp(0, 255) as u8;
            }
        }
        Self {
            width,
            height,
            channels,
            samples,
        }
    }
}

/// Coefficients of one resolution layer, one vector per channel.
///
/// Layer 0 holds the LL plane. Higher layers hold the HL, LH and HH subbands
/// of the level that doubles resolution from the previous layer, concatenated
/// in that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub width: usize,
    pub height: usize,
    pub coeffs: Vec<Vec<i32>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSet {
    pub image_width: usize,
    pub image_height: usize,
    pub channels: usize,
    /// Total layer count of the decomposition; `layers` may hold a prefix.
    pub n_levels: usize,
    pub layers: Vec<Layer>,
}

/// One serialized resolution layer of one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerBitstream {
    pub image_id: String,
    pub layer_index: usize,
    pub decoded_dims: (usize, usize),
    pub payload: Vec<u8>,
}

/// Dimensions of layer `k` out of `n_levels` for a `width x height` image.
pub fn layer_dims(width: usize, height: usize, n_levels: usize, k: usize) -> (usize, usize) {
    let shift = n_levels - 1 - k;
    (width.div_ceil(1 << shift), height.div_ceil(1 << shift))
}

pub fn build_pyramid(img: &Image, n_levels: usize) -> Result<LayerSet, CodecError> {
    let (w, h) = (img.width, img.height);
    if w < MIN_IMAGE_DIM || h < MIN_IMAGE_DIM {
        return Err(CodecError::ImageTooSmall {
            width: w,
            height: h,
        });
    }
    if n_levels < 2 {
        return Err(CodecError::TooFewLevels(n_levels));
    }
    let required = MIN_COARSE_DIM << (n_levels - 1);
    if w.min(h) < required {
        return Err(CodecError::TooManyLevels {
            n_levels,
            min_edge: w.min(h),
            required,
        });
    }

    let mut layers: Vec<Layer> = (0..n_levels)
        .map(|k| {
            let (lw, lh) = layer_dims(w, h, n_levels, k);
            Layer {
                width: lw,
                height: lh,
                coeffs: Vec::with_capacity(img.channels),
            }
        })
        .collect();

    for c in 0..img.channels {
        let mut plane = img.plane(c);
        for k in (1..n_levels).rev() {
            let (cw, ch) = (layers[k].width, layers[k].height);
            lifting::analyze_2d(&mut plane, w, cw, ch);
            let details = extract_details(&plane, w, cw, ch);
            layers[k].coeffs.push(details);
        }
        let (lw, lh) = (layers[0].width, layers[0].height);
        let ll = (0..lh)
            .flat_map(|y| plane[y * w..y * w + lw].iter().copied())
            .collect();
        layers[0].coeffs.push(ll);
    }

    Ok(LayerSet {
        image_width: w,
        image_height: h,
        channels: img.channels,
        n_levels,
        layers,
    })
}

fn subband_rects(cw: usize, ch: usize) -> [(usize, usize, usize, usize); 3] {
    let (lw, lh) = (cw.div_ceil(2), ch.div_ceil(2));
    // (x0, y0, x1, y1) for HL, LH, HH
    [(lw, 0, cw, lh), (0, lh, lw, ch), (lw, lh, cw, ch)]
}

fn extract_details(plane: &[i32], stride: usize, cw: usize, ch: usize) -> Vec<i32> {
    let mut out = Vec::with_capacity(cw * ch - cw.div_ceil(2) * ch.div_ceil(2));
    for (x0, y0, x1, y1) in subband_rects(cw, ch) {
        for y in y0..y1 {
            out.extend_from_slice(&plane[y * stride + x0..y * stride + x1]);
        }
    }
    out
}

fn insert_details(plane: &mut [i32], stride: usize, cw: usize, ch: usize, details: &[i32]) {
    let mut it = details.iter();
    for (x0, y0, x1, y1) in subband_rects(cw, ch) {
        for y in y0..y1 {
            for v in &mut plane[y * stride + x0..y * stride + x1] {
                *v = *it.next().expect("detail length checked by caller");
            }
        }
    }
}

fn detail_len(cw: usize, ch: usize) -> usize {
    cw * ch - cw.div_ceil(2) * ch.div_ceil(2)
}

/// Inverse transform of layers `0..=k` of a layer set. When `upsample_to` is
/// set, synthesis continues past `k` with zero detail up to that layer.
fn synthesize(set: &LayerSet, upsample_to: Option<usize>) -> Image {
    let k = set.layers.len() - 1;
    let top = upsample_to.unwrap_or(k).max(k);
    let n_levels = set.n_levels;
    let (tw, th) = layer_dims(set.image_width, set.image_height, n_levels, top);
    let l0 = &set.layers[0];
    let planes: Vec<Vec<i32>> = (0..set.channels)
        .map(|c| {
            let mut plane = vec![0i32; tw * th];
            for y in 0..l0.height {
                plane[y * tw..y * tw + l0.width]
                    .copy_from_slice(&l0.coeffs[c][y * l0.width..(y + 1) * l0.width]);
            }
            for j in 1..=top {
                let (cw, ch) = layer_dims(set.image_width, set.image_height, n_levels, j);
                if let Some(layer) = set.layers.get(j) {
                    insert_details(&mut plane, tw, cw, ch, &layer.coeffs[c]);
                }
                lifting::synthesize_2d(&mut plane, tw, cw, ch);
            }
            plane
        })
        .collect();
    Image::from_planes(tw, th, &planes)
}

/// Serializes every layer into an independent payload.
pub fn encode_layers(image_id: &str, set: &LayerSet) -> Vec<LayerBitstream> {
    set.layers
        .iter()
        .enumerate()
        .map(|(k, layer)| {
            let header = LayerHeader {
                n_levels: set.n_levels,
                layer_index: k,
                channels: set.channels,
                image_width: set.image_width,
                image_height: set.image_height,
            };
            LayerBitstream {
                image_id: image_id.to_string(),
                layer_index: k,
                decoded_dims: (layer.width, layer.height),
                payload: entropy::encode_layer(&header, layer),
            }
        })
        .collect()
}

fn decode_prefix(payloads: &[LayerBitstream]) -> Result<(LayerHeader, LayerSet), CodecError> {
    let first = payloads.first().ok_or(CodecError::NoLayers)?;
    let mut layers = Vec::with_capacity(payloads.len());
    let mut header0: Option<LayerHeader> = None;
    for (expected, bs) in payloads.iter().enumerate() {
        if bs.layer_index != expected {
            return Err(CodecError::PrefixGap {
                expected,
                found: bs.layer_index,
            });
        }
        let (header, layer) = entropy::decode_layer(&bs.payload)?;
        if header.layer_index != expected || bs.image_id != first.image_id {
            return Err(CodecError::InconsistentLayers);
        }
        if let Some(h0) = &header0 {
            if !h0.same_image(&header) {
                return Err(CodecError::InconsistentLayers);
            }
        } else {
            header0 = Some(header.clone());
        }
        let (cw, ch) = layer_dims(
            header.image_width,
            header.image_height,
            header.n_levels,
            expected,
        );
        let expected_len = if expected == 0 {
            cw * ch
        } else {
            detail_len(cw, ch)
        };
        if layer.coeffs.iter().any(|c| c.len() != expected_len) {
            return Err(CodecError::MalformedPayload(format!(
                "layer {expected} coefficient count mismatch"
            )));
        }
        layers.push(layer);
    }
    let header = header0.expect("at least one layer");
    if payloads.len() > header.n_levels {
        return Err(CodecError::InconsistentLayers);
    }
    let set = LayerSet {
        image_width: header.image_width,
        image_height: header.image_height,
        channels: header.channels,
        n_levels: header.n_levels,
        layers,
    };
    Ok((header, set))
}

/// Reconstructs the image at the resolution of the last supplied layer.
///
/// `payloads` must be the contiguous prefix `0..=K` in layer order.
pub fn reconstruct(payloads: &[LayerBitstream]) -> Result<Image, CodecError> {
    let (_, set) = decode_prefix(payloads)?;
    Ok(synthesize(&set, None))
}

/// Like [`reconstruct`], but keeps running the inverse wavelet with zero
/// detail until full resolution, so the result can be compared pixel for
/// pixel with the original.
pub fn reconstruct_full_size(payloads: &[LayerBitstream]) -> Result<Image, CodecError> {
    let (header, set) = decode_prefix(payloads)?;
    Ok(synthesize(&set, Some(header.n_levels - 1)))
}

/// Inverse of [`build_pyramid`] on an in-memory layer set (any prefix).
pub fn synthesize_layers(set: &LayerSet) -> Image {
    synthesize(set, None)
}

/// Peak signal-to-noise ratio for 8-bit samples. Identical images give
/// `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, CodecError> {
    let shape = |i: &Image| (i.width, i.height, i.channels);
    if shape(a) != shape(b) {
        return Err(CodecError::ShapeMismatch {
            a: shape(a),
            b: shape(b),
        });
    }
    let sse: u64 = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    if sse == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse as f64 / a.samples.len() as f64;
    Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, c: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..w * h * c).map(|_| rng.random()).collect();
        Image::new(w, h, c, samples).unwrap()
    }

    #[test]
    fn kodak_geometry_four_levels() {
        let img = Image::filled(512, 768, 1, 90);
        let set = build_pyramid(&img, 4).unwrap();
        let dims: Vec<_> = set.layers.iter().map(|l| (l.width, l.height)).collect();
        assert_eq!(dims, vec![(64, 96), (128, 192), (256, 384), (512, 768)]);
    }

    #[test]
    fn odd_geometry_uses_ceiling() {
        let img = random_image(37, 21, 1, 3);
        let set = build_pyramid(&img, 3).unwrap();
        let dims: Vec<_> = set.layers.iter().map(|l| (l.width, l.height)).collect();
        assert_eq!(dims, vec![(10, 6), (19, 11), (37, 21)]);
        assert_eq!(synthesize_layers(&set), img);
    }

    #[test]
    fn constant_image_has_no_detail() {
        let img = Image::filled(8, 8, 1, 200);
        let set = build_pyramid(&img, 2).unwrap();
        assert!(set.layers[1].coeffs[0].iter().all(|&c| c == 0));
        assert!(set.layers[0].coeffs[0].iter().all(|&c| c == 200));
    }

    #[test]
    fn random_image_roundtrips_exactly() {
        let img = random_image(16, 16, 1, 11);
        let set = build_pyramid(&img, 2).unwrap();
        assert_eq!(synthesize_layers(&set), img);
    }

    #[test]
    fn rejects_too_many_levels() {
        let img = Image::filled(32, 64, 1, 0);
        assert!(build_pyramid(&img, 4).is_ok());
        let err = build_pyramid(&img, 5).unwrap_err();
        assert!(matches!(
            err,
            CodecError::TooManyLevels { required: 64, .. }
        ));
        assert!(err.to_string().contains("min(width, height) >= 64"));
        assert_eq!(build_pyramid(&img, 1), Err(CodecError::TooFewLevels(1)));
        let tiny = Image::filled(7, 8, 1, 0);
        assert!(matches!(
            build_pyramid(&tiny, 2),
            Err(CodecError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn encode_reconstruct_color() {
        let img = random_image(40, 24, 3, 5);
        let set = build_pyramid(&img, 3).unwrap();
        let streams = encode_layers("x", &set);
        assert_eq!(streams.len(), 3);
        for (k, s) in streams.iter().enumerate() {
            assert_eq!(s.layer_index, k);
            assert!(!s.payload.is_empty());
        }
        assert_eq!(reconstruct(&streams).unwrap(), img);
        let coarse = reconstruct(&streams[..1]).unwrap();
        assert_eq!((coarse.width(), coarse.height()), (10, 6));
        let full = reconstruct_full_size(&streams[..2]).unwrap();
        assert_eq!((full.width(), full.height()), (40, 24));
    }

    #[test]
    fn reconstruct_rejects_gaps() {
        let img = random_image(32, 32, 1, 8);
        let streams = encode_layers("x", &build_pyramid(&img, 3).unwrap());
        let gap = vec![streams[0].clone(), streams[2].clone()];
        assert_eq!(
            reconstruct(&gap),
            Err(CodecError::PrefixGap {
                expected: 1,
                found: 2
            })
        );
        assert_eq!(
            reconstruct(&streams[1..]).unwrap_err(),
            CodecError::PrefixGap {
                expected: 0,
                found: 1
            }
        );
        assert_eq!(reconstruct(&[]), Err(CodecError::NoLayers));
    }

    #[test]
    fn encoding_is_deterministic() {
        let img = random_image(24, 24, 3, 9);
        let a = encode_layers("x", &build_pyramid(&img, 2).unwrap());
        let b = encode_layers("x", &build_pyramid(&img, 2).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn psnr_reference_values() {
        let a = Image::filled(4, 4, 1, 0);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = Image::filled(4, 4, 1, 255);
        assert!(psnr(&a, &b).unwrap().abs() < 1e-12);
        // MSE = 1/4 on a 2x2 plane
        let c = Image::new(2, 2, 1, vec![10, 10, 10, 10]).unwrap();
        let d = Image::new(2, 2, 1, vec![10, 11, 10, 10]).unwrap();
        let expected = 10.0 * (255.0f64 * 255.0 / 0.25).log10();
        assert!((psnr(&c, &d).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 54.15).abs() < 0.01);
        assert!(matches!(
            psnr(&a, &c),
            Err(CodecError::ShapeMismatch { .. })
        ));
    }
}
