//! Image file I/O: grayscale loading (PNG, PGM, anything the decoder
//! recognizes), deterministic PNG encoding, and separator overlays.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, ImageReader, Luma, Rgb};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::preprocess::GrayImage;
use crate::types::Axis;

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// Decodes any supported image and converts it to 8-bit luminance.
pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let luma = reader.decode().map_err(|e| image_err(path, e))?.into_luma8();
    let (w, h) = luma.dimensions();
    GrayImage::new(w as usize, h as usize, luma.into_raw())
}

pub fn encode_png(img: &GrayImage) -> Vec<u8> {
    let buf = image::ImageBuffer::<Luma<u8>, _>::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.data().to_vec(),
    )
    .expect("buffer matches dims");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).expect("in-memory png encoding");
    out.into_inner()
}

pub fn save_png(path: &Path, img: &GrayImage) -> Result<()> {
    fsutil::write_atomic(path, &encode_png(img))
}

/// Writes `img` as RGB with separators drawn as 1-px red (rows) and blue
/// (columns) lines, positions in image coordinates.
pub fn save_overlay(path: &Path, img: &GrayImage, separators: &[(Axis, Vec<usize>)]) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let mut rgb = image::RgbImage::from_fn(w, h, |x, y| {
        let v = img.get(x as usize, y as usize);
        Rgb([v, v, v])
    });
    for (axis, positions) in separators {
        for &p in positions {
            let p = p as u32;
            match axis {
                Axis::Row if p < h => (0..w).for_each(|x| rgb.put_pixel(x, p, Rgb([220, 0, 0]))),
                Axis::Column if p < w => (0..h).for_each(|y| rgb.put_pixel(p, y, Rgb([0, 0, 220]))),
                _ => {}
            }
        }
    }
    let mut out = Cursor::new(Vec::new());
    rgb.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| image_err(path, e))?;
    fsutil::write_atomic(path, out.get_ref())
}
