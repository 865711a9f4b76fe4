//! Grayscale frames, validity masks, and frame sequences.
//!
//! All intensities live in `[0, 1]`. Color inputs are reduced to luma
//! (0.299 R + 0.587 G + 0.114 B) at load time, so everything downstream
//! works on a single channel.

use crate::error::{Error, Result};

/// A single grayscale frame, row-major, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize) -> Self {
        Frame {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Frame {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample at a continuous position. Returns `None` when the
    /// 2x2 support would leave the image (positions in `[0, w-1] x [0, h-1]`
    /// are accepted, boundaries included).
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<f32> {
        let (w, h) = (self.width, self.height);
        if !(x >= 0.0 && x <= (w - 1) as f64 && y >= 0.0 && y <= (h - 1) as f64) {
            return None;
        }
        if w == 1 || h == 1 {
            // Degenerate axis: clamp instead of interpolating.
            return Some(self.at((x as usize).min(w - 1), (y as usize).min(h - 1)));
        }
        let x0 = (x as usize).min(w - 2);
        let y0 = (y as usize).min(h - 2);
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let i = y0 * w + x0;
        let v00 = self.data[i];
        let v01 = self.data[i + 1];
        let v10 = self.data[i + w];
        let v11 = self.data[i + w + 1];
        Some((1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11))
    }

    /// Bilinear resample to a new resolution (pixel-center aligned).
    pub fn resize(&self, new_w: usize, new_h: usize) -> Frame {
        let sx = self.width as f64 / new_w as f64;
        let sy = self.height as f64 / new_h as f64;
        Frame::from_fn(new_w, new_h, |x, y| {
            let px = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
            let py = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            self.sample(px, py).unwrap_or(0.0)
        })
    }

    /// Separable Gaussian blur with sigma = 1 px (5-tap kernel). Used to
    /// precondition frames before gradient-based alignment.
    pub fn gaussian1(&self) -> Frame {
        // exp(-k^2/2) for k = -2..2, normalized.
        const K: [f32; 5] = [0.054_488_68, 0.244_201_34, 0.402_619_95, 0.244_201_34, 0.054_488_68];
        let (w, h) = (self.width, self.height);
        let mut tmp = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, kv) in K.iter().enumerate() {
                    let xi = (x as isize + k as isize - 2).clamp(0, w as isize - 1) as usize;
                    acc += kv * self.data[y * w + xi];
                }
                tmp[y * w + x] = acc;
            }
        }
        let mut out = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, kv) in K.iter().enumerate() {
                    let yi = (y as isize + k as isize - 2).clamp(0, h as isize - 1) as usize;
                    acc += kv * tmp[yi * w + x];
                }
                out[y * w + x] = acc;
            }
        }
        Frame {
            width: w,
            height: h,
            data: out,
        }
    }

    /// Central-difference gradients (one-sided at borders).
    pub fn gradients(&self) -> (Frame, Frame) {
        let (w, h) = (self.width, self.height);
        let mut gx = Frame::new(w, h);
        let mut gy = Frame::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let xl = x.saturating_sub(1);
                let xr = (x + 1).min(w - 1);
                let yl = y.saturating_sub(1);
                let yr = (y + 1).min(h - 1);
                gx.data[y * w + x] = (self.at(xr, y) - self.at(xl, y)) / (xr - xl).max(1) as f32;
                gy.data[y * w + x] = (self.at(x, yr) - self.at(x, yl)) / (yr - yl).max(1) as f32;
            }
        }
        (gx, gy)
    }

    pub fn mean_square(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / self.data.len() as f64
    }
}

/// Per-pixel validity mask matching a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn full(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count_valid(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

/// An ordered video: frames of equal dimensions plus per-frame validity.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub frames: Vec<Frame>,
    pub masks: Vec<Mask>,
}

impl FrameSequence {
    /// Wraps frames with all-valid masks. Fails on dimension mismatch.
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::VideoTooShort { got: 0, need: 1 });
        }
        let (w, h) = (frames[0].width, frames[0].height);
        for (i, f) in frames.iter().enumerate() {
            if f.width != w || f.height != h {
                return Err(Error::DimensionMismatch {
                    index: i,
                    want_w: w,
                    want_h: h,
                    got_w: f.width,
                    got_h: f.height,
                });
            }
        }
        let masks = frames.iter().map(|f| Mask::full(f.width, f.height)).collect();
        Ok(FrameSequence { frames, masks })
    }

    pub fn with_masks(frames: Vec<Frame>, masks: Vec<Mask>) -> Self {
        debug_assert_eq!(frames.len(), masks.len());
        FrameSequence { frames, masks }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }
}
