//! PNG and PGM/PPM reading and writing.
//!
//! Intensities map linearly to `[0, 1]` on load and are rounded to the
//! nearest 8-bit level on save. Color files are either kept as three planes
//! ([`load_rgb`]) or reduced to BT.601 luminance ([`load_gray`]).

use std::path::Path;

use ::image::{DynamicImage, GrayImage, ImageBuffer, Rgb, RgbImage};

use super::{rgb_to_ycbcr, ImagePlane};
use crate::error::{Error, Result};

/// Red, green and blue planes of a color image.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbPlanes {
    pub r: ImagePlane,
    pub g: ImagePlane,
    pub b: ImagePlane,
}

impl RgbPlanes {
    pub fn luminance(&self) -> Result<ImagePlane> {
        Ok(rgb_to_ycbcr(&self.r, &self.g, &self.b)?.0)
    }
}

/// Decoded image: either a single plane or three color planes.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedImage {
    Gray(ImagePlane),
    Rgb(RgbPlanes),
}

fn open(path: &Path) -> Result<DynamicImage> {
    ::image::ImageReader::open(path)?.with_guessed_format()?.decode().map_err(Error::from)
}

pub fn load(path: impl AsRef<Path>) -> Result<LoadedImage> {
    let path = path.as_ref();
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let buf = img.to_rgb16();
        let mut planes = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
        for (i, px) in buf.pixels().enumerate() {
            for c in 0..3 {
                planes[c][i] = f64::from(px.0[c]) / 65535.0;
            }
        }
        let [r, g, b] = planes;
        Ok(LoadedImage::Rgb(RgbPlanes {
            r: ImagePlane::new(h, w, r)?,
            g: ImagePlane::new(h, w, g)?,
            b: ImagePlane::new(h, w, b)?,
        }))
    } else {
        let buf = img.to_luma16();
        let data = buf.pixels().map(|p| f64::from(p.0[0]) / 65535.0).collect();
        Ok(LoadedImage::Gray(ImagePlane::new(h, w, data)?))
    }
}

/// Loads any supported file as a single plane; color files are reduced to
/// luminance.
pub fn load_gray(path: impl AsRef<Path>) -> Result<ImagePlane> {
    match load(path)? {
        LoadedImage::Gray(p) => Ok(p),
        LoadedImage::Rgb(rgb) => rgb.luminance(),
    }
}

pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbPlanes> {
    match load(path)? {
        LoadedImage::Rgb(rgb) => Ok(rgb),
        LoadedImage::Gray(p) => Ok(RgbPlanes { r: p.clone(), g: p.clone(), b: p }),
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn check_savable(path: &Path, img: &ImagePlane) -> Result<()> {
    if img.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("refusing to save non-finite image to {}", path.display())))
    }
}

/// Writes an 8-bit grayscale file; the format follows the extension
/// (`.png`, `.pgm`).
pub fn save_gray(path: impl AsRef<Path>, img: &ImagePlane) -> Result<()> {
    let path = path.as_ref();
    check_savable(path, img)?;
    let data: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let buf: GrayImage = ImageBuffer::from_raw(img.width() as u32, img.height() as u32, data)
        .expect("buffer length matches dimensions");
    buf.save(path)?;
    Ok(())
}

/// Writes an 8-bit RGB file (`.png`, `.ppm`).
pub fn save_rgb(path: impl AsRef<Path>, rgb: &RgbPlanes) -> Result<()> {
    let path = path.as_ref();
    for p in [&rgb.r, &rgb.g, &rgb.b] {
        check_savable(path, p)?;
        rgb.r.check_same_dims(p, "rgb planes")?;
    }
    let (h, w) = rgb.r.dims();
    let mut buf: RgbImage = ImageBuffer::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            buf.put_pixel(
                x as u32,
                y as u32,
                Rgb([quantize(rgb.r.get(y, x)), quantize(rgb.g.get(y, x)), quantize(rgb.b.get(y, x))]),
            );
        }
    }
    buf.save(path)?;
    Ok(())
}
