use super::CanvasLayout;
use crate::geometry::{project_corners, project_point, Homography};
use crate::math::{ceil, floor, round};
use crate::raster::{RgbImage, RgbaImage};

/// A warped frame covering the canvas rectangle at `(x0, y0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub x0: u32,
    pub y0: u32,
    pub image: RgbaImage,
}

/// Inverse-maps every canvas pixel of the frame's bounding region through
/// `H⁻¹` and samples the source bilinearly. Pixels whose preimage falls
/// outside the source stay fully transparent; the rest get
/// `alpha = round(255·alpha)`.
pub fn warp_frame(image: &RgbImage, h: &Homography, layout: &CanvasLayout, alpha: f64) -> Tile {
    let empty = Tile {
        x0: 0,
        y0: 0,
        image: RgbaImage::new(0, 0),
    };
    let (Ok(inv), Ok(corners)) = (
        h.inverse(),
        project_corners(h, image.width() as f64, image.height() as f64),
    ) else {
        return empty;
    };
    let (ox, oy) = layout.offset;
    let xs = corners.iter().map(|c| c.0 + ox);
    let ys = corners.iter().map(|c| c.1 + oy);
    let min_x = floor(xs.clone().fold(f64::INFINITY, f64::min)).max(0.0);
    let max_x = ceil(xs.fold(f64::NEG_INFINITY, f64::max)).min(layout.width as f64 - 1.0);
    let min_y = floor(ys.clone().fold(f64::INFINITY, f64::min)).max(0.0);
    let max_y = ceil(ys.fold(f64::NEG_INFINITY, f64::max)).min(layout.height as f64 - 1.0);
    if !(min_x <= max_x && min_y <= max_y) {
        return empty;
    }
    let (x0, y0) = (min_x as u32, min_y as u32);
    let (tw, th) = ((max_x - min_x) as u32 + 1, (max_y - min_y) as u32 + 1);
    let a = round(255.0 * alpha.clamp(0.0, 1.0)) as u8;
    let mut tile = RgbaImage::new(tw, th);
    for ty in 0..th {
        for tx in 0..tw {
            let cx = (x0 + tx) as f64 - ox;
            let cy = (y0 + ty) as f64 - oy;
            let Ok((sx, sy)) = project_point(inv.matrix(), (cx, cy)) else {
                continue;
            };
            if let Some(px) = image.sample_bilinear(sx, sy) {
                let c = |v: f64| round(v).clamp(0.0, 255.0) as u8;
                tile.put_pixel(tx, ty, [c(px[0]), c(px[1]), c(px[2]), a]);
            }
        }
    }
    Tile { x0, y0, image: tile }
}

/// Source-over blend of `tiles` in order onto a transparent canvas.
pub fn composite(tiles: &[Tile], width: u32, height: u32) -> RgbaImage {
    let mut out = RgbaImage::new(width, height);
    for t in tiles {
        for ty in 0..t.image.height() {
            let y = t.y0 + ty;
            if y >= height {
                break;
            }
            for tx in 0..t.image.width() {
                let x = t.x0 + tx;
                if x >= width {
                    break;
                }
                let src = t.image.pixel(tx, ty);
                if src[3] == 0 {
                    continue;
                }
                let dst = out.pixel(x, y);
                out.put_pixel(x, y, over(src, dst));
            }
        }
    }
    out
}

/// Straight-alpha source-over.
pub(crate) fn over(src: [u8; 4], dst: [u8; 4]) -> [u8; 4] {
    if src[3] == 255 || dst[3] == 0 {
        return src;
    }
    let sa = src[3] as f64 / 255.0;
    let da = dst[3] as f64 / 255.0;
    let oa = sa + da * (1.0 - sa);
    let mut o = [0u8; 4];
    for c in 0..3 {
        let v = (src[c] as f64 * sa + dst[c] as f64 * da * (1.0 - sa)) / oa;
        o[c] = round(v).clamp(0.0, 255.0) as u8;
    }
    o[3] = round(oa * 255.0).clamp(0.0, 255.0) as u8;
    o
}
