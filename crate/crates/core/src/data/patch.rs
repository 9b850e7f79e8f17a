//! Bilinear crop-and-resize of a box region, used to turn frame pixels into
//! fixed-size actor patches.

use super::types::BoundingBox;
use crate::error::{Error, Result};

/// Interleaved `height × width × channels` pixel array.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Dimension("empty frame".into()));
        }
        if data.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "{} values for a {height}x{width}x{channels} frame",
                data.len()
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Frame {
        Frame { data: self.data.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Samples an `out_h × out_w` patch over the box with bilinear
/// interpolation.
///
/// The box is first clamped to `[0, width] × [0, height]`. Output pixel
/// `(r, c)` samples the point at the center of its cell inside the box, in
/// pixel-center coordinates, so a full-frame box resampled at the frame's own
/// size reproduces the frame.
pub fn extract_patch(frame: &Frame, b: &BoundingBox, out_h: usize, out_w: usize) -> Result<Frame> {
    if frame.data.is_empty() {
        return Err(Error::Dimension("empty frame".into()));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::Dimension(format!("patch size {out_h}x{out_w}")));
    }
    let (fw, fh) = (frame.width as f64, frame.height as f64);
    let x0 = b.x_min.clamp(0.0, fw);
    let x1 = b.x_max.clamp(0.0, fw);
    let y0 = b.y_min.clamp(0.0, fh);
    let y1 = b.y_max.clamp(0.0, fh);
    let step_x = (x1 - x0) / out_w as f64;
    let step_y = (y1 - y0) / out_h as f64;

    let ch = frame.channels;
    let mut data = Vec::with_capacity(out_h * out_w * ch);
    for r in 0..out_h {
        let sy = (y0 + (r as f64 + 0.5) * step_y - 0.5).clamp(0.0, fh - 1.0);
        let ya = sy.floor() as usize;
        let yb = (ya + 1).min(frame.height - 1);
        let ty = sy - ya as f64;
        for c in 0..out_w {
            let sx = (x0 + (c as f64 + 0.5) * step_x - 0.5).clamp(0.0, fw - 1.0);
            let xa = sx.floor() as usize;
            let xb = (xa + 1).min(frame.width - 1);
            let tx = sx - xa as f64;
            for k in 0..ch {
                let top = lerp(frame.get(ya, xa, k), frame.get(ya, xb, k), tx);
                let bottom = lerp(frame.get(yb, xa, k), frame.get(yb, xb, k), tx);
                data.push(lerp(top, bottom, ty));
            }
        }
    }
    Frame::new(out_h, out_w, ch, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(h: usize, w: usize, ch: usize) -> Frame {
        let data = (0..h * w * ch).map(|i| (i as f64 * 0.37).sin() * 10.0).collect();
        Frame::new(h, w, ch, data).unwrap()
    }

    /// Clamp the box explicitly, then sample each output pixel with a
    /// straightforward four-neighbor weighting.
    fn reference(frame: &Frame, b: &BoundingBox, oh: usize, ow: usize) -> Vec<f64> {
        let (w, h) = (frame.width() as f64, frame.height() as f64);
        let bx = BoundingBox {
            x_min: b.x_min.max(0.0).min(w),
            x_max: b.x_max.max(0.0).min(w),
            y_min: b.y_min.max(0.0).min(h),
            y_max: b.y_max.max(0.0).min(h),
        };
        let mut out = Vec::new();
        for r in 0..oh {
            for c in 0..ow {
                let y = (bx.y_min + (bx.y_max - bx.y_min) * (r as f64 + 0.5) / oh as f64 - 0.5).max(0.0).min(h - 1.0);
                let x = (bx.x_min + (bx.x_max - bx.x_min) * (c as f64 + 0.5) / ow as f64 - 0.5).max(0.0).min(w - 1.0);
                let (yi, xi) = (y.floor() as usize, x.floor() as usize);
                let (fy, fx) = (y - yi as f64, x - xi as f64);
                let (yj, xj) = ((yi + 1).min(frame.height() - 1), (xi + 1).min(frame.width() - 1));
                for k in 0..frame.channels() {
                    out.push(
                        frame.get(yi, xi, k) * (1.0 - fy) * (1.0 - fx)
                            + frame.get(yi, xj, k) * (1.0 - fy) * fx
                            + frame.get(yj, xi, k) * fy * (1.0 - fx)
                            + frame.get(yj, xj, k) * fy * fx,
                    );
                }
            }
        }
        out
    }

    #[test]
    fn full_frame_identity() {
        let f = ramp(7, 9, 3);
        let b = BoundingBox::new(0.0, 0.0, 9.0, 7.0).unwrap();
        assert_eq!(extract_patch(&f, &b, 7, 9).unwrap(), f);
    }

    #[test]
    fn constant_frame_constant_patch() {
        let f = Frame::new(5, 6, 2, vec![3.25; 60]).unwrap();
        let b = BoundingBox::new(-4.0, 1.3, 2.7, 40.0).unwrap();
        let p = extract_patch(&f, &b, 4, 3).unwrap();
        assert!(p.data().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn rejects_zero_output() {
        let f = ramp(3, 3, 1);
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(extract_patch(&f, &b, 0, 2).is_err());
        assert!(Frame::new(0, 3, 1, vec![]).is_err());
    }

    proptest! {
        #[test]
        fn out_of_frame_box_matches_clamp_reference(
            x in -20.0f64..30.0, y in -20.0f64..30.0, w in 0.5f64..40.0, h in 0.5f64..40.0,
            oh in 1usize..6, ow in 1usize..6,
        ) {
            let f = ramp(12, 15, 2);
            let b = BoundingBox::new(x, y, x + w, y + h).unwrap();
            let got = extract_patch(&f, &b, oh, ow).unwrap();
            let want = reference(&f, &b, oh, ow);
            for (g, w) in got.data().iter().zip(&want) {
                prop_assert!((g - w).abs() < 1e-9);
            }
            prop_assert_eq!((got.height(), got.width(), got.channels()), (oh, ow, 2));
        }

        #[test]
        fn shift_by_constant(c in -50.0f64..50.0, x in -5.0f64..10.0, y in -5.0f64..10.0) {
            let f = ramp(10, 10, 1);
            let b = BoundingBox::new(x, y, x + 4.5, y + 3.5).unwrap();
            let base = extract_patch(&f, &b, 3, 4).unwrap();
            let shifted = extract_patch(&f.map(|v| v + c), &b, 3, 4).unwrap();
            for (s, v) in shifted.data().iter().zip(base.data()) {
                prop_assert!((s - (v + c)).abs() < 1e-9);
            }
        }
    }
}
