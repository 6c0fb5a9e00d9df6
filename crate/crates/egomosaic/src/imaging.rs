//! Conversions between the core rasters and image files.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use egomosaic_core::compositor::FrameSource;
use egomosaic_core::{FrameRef, RgbImage, RgbaImage};
use image::{ImageFormat, RgbImage as ImgRgb, RgbaImage as ImgRgba};

/// Decodes any supported image into 8-bit RGB.
pub fn load_rgb(path: &Path) -> Result<RgbImage, String> {
    let img = image::open(path).map_err(|e| format!("{}: {e}", path.display()))?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok(RgbImage::from_raw(w, h, img.into_raw()).expect("decoder buffer matches its dimensions"))
}

pub fn encode_png_rgba(img: &RgbaImage) -> Vec<u8> {
    let buf = ImgRgba::from_raw(img.width(), img.height(), img.as_raw().to_vec()).expect("raster size");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).expect("PNG encoding to memory");
    out.into_inner()
}

pub fn encode_png_rgb(img: &RgbImage) -> Vec<u8> {
    let buf = ImgRgb::from_raw(img.width(), img.height(), img.as_raw().to_vec()).expect("raster size");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).expect("PNG encoding to memory");
    out.into_inner()
}

/// Decodes a PNG into RGBA.
pub fn decode_png_rgba(bytes: &[u8]) -> Result<RgbaImage, String> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| e.to_string())?
        .to_rgba8();
    let (w, h) = img.dimensions();
    Ok(RgbaImage::from_raw(w, h, img.into_raw()).expect("decoder buffer matches its dimensions"))
}

/// Frames read from `root.join(image_path)`.
#[derive(Debug, Clone)]
pub struct DiskFrames {
    pub root: PathBuf,
}

impl FrameSource for DiskFrames {
    fn load(&self, frame: &FrameRef) -> Result<RgbImage, String> {
        load_rgb(&self.root.join(&frame.image_path))
    }
}
