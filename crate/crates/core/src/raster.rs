//! Minimal owned 8-bit rasters (gray, RGB, RGBA), interleaved row-major.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{floor, round};

/// Interleaved 8-bit raster with `C` channels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Raster<const C: usize> {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

pub type GrayImage = Raster<1>;
pub type RgbImage = Raster<3>;
pub type RgbaImage = Raster<4>;

impl<const C: usize> Raster<C> {
    pub fn new(width: u32, height: u32) -> Self {
        Raster {
            width,
            height,
            data: vec![0; width as usize * height as usize * C],
        }
    }

    pub fn filled(width: u32, height: u32, px: [u8; C]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * C);
        for _ in 0..(width as usize * height as usize) {
            data.extend_from_slice(&px);
        }
        Raster {
            width,
            height,
            data,
        }
    }

    /// Wraps raw interleaved bytes; `None` if the length does not match.
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Option<Self> {
        if data.len() != width as usize * height as usize * C {
            return None;
        }
        Some(Raster {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * C
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; C] {
        let o = self.offset(x, y);
        let mut px = [0u8; C];
        px.copy_from_slice(&self.data[o..o + C]);
        px
    }

    #[inline]
    pub fn put_pixel(&mut self, x: u32, y: u32, px: [u8; C]) {
        let o = self.offset(x, y);
        self.data[o..o + C].copy_from_slice(&px);
    }

    /// Bilinear sample at real coordinates (pixel centres on integers).
    /// `None` outside `[0, w-1] × [0, h-1]` (with a 1e-9 slack).
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<[f64; C]> {
        const SLACK: f64 = 1e-9;
        let wmax = self.width as f64 - 1.0;
        let hmax = self.height as f64 - 1.0;
        if self.is_empty() || !(x >= -SLACK && y >= -SLACK && x <= wmax + SLACK && y <= hmax + SLACK)
        {
            return None;
        }
        let x = x.clamp(0.0, wmax);
        let y = y.clamp(0.0, hmax);
        let x0 = floor(x) as u32;
        let y0 = floor(y) as u32;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let p00 = self.pixel(x0, y0);
        let p10 = self.pixel(x1, y0);
        let p01 = self.pixel(x0, y1);
        let p11 = self.pixel(x1, y1);
        let mut out = [0.0; C];
        for c in 0..C {
            let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
            let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
            out[c] = top * (1.0 - fy) + bottom * fy;
        }
        Some(out)
    }
}

impl RgbImage {
    /// Luma conversion `round(0.299 R + 0.587 G + 0.114 B)`.
    pub fn to_gray(&self) -> GrayImage {
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn to_rgba(&self, alpha: u8) -> RgbaImage {
        let mut data = Vec::with_capacity(self.data.len() / 3 * 4);
        for p in self.data.chunks_exact(3) {
            data.extend_from_slice(&[p[0], p[1], p[2], alpha]);
        }
        RgbaImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

impl GrayImage {
    pub fn to_rgb(&self) -> RgbImage {
        let mut data = Vec::with_capacity(self.data.len() * 3);
        for &v in &self.data {
            data.extend_from_slice(&[v, v, v]);
        }
        RgbImage {
            width: self.width,
            height: self.height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }
}

#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let v = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    round(v).clamp(0.0, 255.0) as u8
}
