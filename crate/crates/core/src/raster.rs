//! PNG input and output for [`Image`].

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};
use thiserror::Error;

use crate::pyramid::Image;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error("{0}")]
    Unsupported(String),
}

fn to_dynamic(img: &Image) -> DynamicImage {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let samples = img.samples().to_vec();
    if img.channels() == 3 {
        DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, samples).expect("buffer matches"))
    } else {
        DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, samples).expect("buffer matches"))
    }
}

fn from_dynamic(d: DynamicImage) -> Result<Image, RasterError> {
    let (w, h) = (d.width() as usize, d.height() as usize);
    let (channels, samples) = match d {
        DynamicImage::ImageLuma8(g) => (1, g.into_raw()),
        DynamicImage::ImageRgb8(c) => (3, c.into_raw()),
        DynamicImage::ImageRgba8(_) | DynamicImage::ImageLumaA8(_) => {
            return Err(RasterError::Unsupported(
                "images with an alpha channel are not supported".into(),
            ))
        }
        other => {
            return Err(RasterError::Unsupported(format!(
                "only 8-bit images are supported, got {:?}",
                other.color()
            )))
        }
    };
    Image::new(w, h, channels, samples).map_err(|e| RasterError::Unsupported(e.to_string()))
}

pub fn png_bytes(img: &Image) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    to_dynamic(img)
        .write_to(&mut out, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

pub fn decode_png(bytes: &[u8]) -> Result<Image, RasterError> {
    from_dynamic(image::load_from_memory_with_format(
        bytes,
        ImageFormat::Png,
    )?)
}

pub fn load(path: &Path) -> Result<Image, RasterError> {
    from_dynamic(image::open(path)?)
}

pub fn save_png(img: &Image, path: &Path) -> Result<(), RasterError> {
    to_dynamic(img).save_with_format(path, ImageFormat::Png)?;
    Ok(())
}
