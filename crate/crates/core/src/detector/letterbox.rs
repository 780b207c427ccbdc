use image::{imageops, Rgb, RgbImage};

use crate::error::{Error, Result};

/// Padding value used by the usual detector letterbox.
pub const PAD_VALUE: u8 = 114;

/// Aspect-preserving resize into a `target x target` square with the short
/// side padded symmetrically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Letterbox {
    pub img_w: u32,
    pub img_h: u32,
    pub target: u32,
    pub scale: f64,
    pub pad_x: f64,
    pub pad_y: f64,
}

pub fn letterbox_transform(img_w: u32, img_h: u32, target: u32) -> Result<Letterbox> {
    if img_w == 0 || img_h == 0 || target == 0 {
        return Err(Error::InvalidArgument(format!(
            "letterbox needs positive sizes, got {img_w}x{img_h} -> {target}"
        )));
    }
    let scale = f64::from(target) / f64::from(img_w.max(img_h));
    Ok(Letterbox {
        img_w,
        img_h,
        target,
        scale,
        pad_x: (f64::from(target) - f64::from(img_w) * scale) / 2.0,
        pad_y: (f64::from(target) - f64::from(img_h) * scale) / 2.0,
    })
}

impl Letterbox {
    /// Original pixel coordinates to model-input pixel coordinates.
    pub fn forward(&self, x: f64, y: f64) -> (f64, f64) {
        (x * self.scale + self.pad_x, y * self.scale + self.pad_y)
    }

    pub fn inverse(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.pad_x) / self.scale, (y - self.pad_y) / self.scale)
    }

    /// Model-input corner box to normalized original-image corners; values
    /// may fall outside `[0, 1]` when the box reaches into the padding.
    pub fn inverse_normalized(&self, x1: f64, y1: f64, x2: f64, y2: f64) -> (f64, f64, f64, f64) {
        let (ax, ay) = self.inverse(x1, y1);
        let (bx, by) = self.inverse(x2, y2);
        let (w, h) = (f64::from(self.img_w), f64::from(self.img_h));
        (ax / w, ay / h, bx / w, by / h)
    }

    /// Resized and padded copy of `img`.
    pub fn apply(&self, img: &RgbImage) -> RgbImage {
        let new_w = ((f64::from(self.img_w) * self.scale).round() as u32).clamp(1, self.target);
        let new_h = ((f64::from(self.img_h) * self.scale).round() as u32).clamp(1, self.target);
        let resized = imageops::resize(img, new_w, new_h, imageops::FilterType::Triangle);
        let mut canvas = RgbImage::from_pixel(self.target, self.target, Rgb([PAD_VALUE; 3]));
        let left = ((self.target - new_w) / 2) as i64;
        let top = ((self.target - new_h) / 2) as i64;
        imageops::overlay(&mut canvas, &resized, left, top);
        canvas
    }
}
