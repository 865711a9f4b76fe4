//! Synthetic-video oracle: textured scenes rendered under known camera
//! paths, with analytic ground-truth flow and parameters.
//!
//! The texture is seeded multi-octave value noise with smooth interpolation
//! and a finest lattice spacing of 8 px, so content is band-limited well
//! below the sampling Nyquist rate. That keeps bilinear rendering faithful
//! and gives gradient-based alignment a clean basin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affine::{self, SimilarityParams};
use crate::error::{Error, Result};
use crate::flowfield::FlowField;
use crate::frame::{Frame, FrameSequence};

/// Absolute per-frame camera poses plus their smooth/jitter decomposition.
/// A pose maps output-frame coordinates into reference (texture) coordinates,
/// so frame `i` is rendered as `texture(pose_i(p))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraPath {
    pub poses: Vec<SimilarityParams>,
    pub smooth: Vec<SimilarityParams>,
    pub jitter: Vec<SimilarityParams>,
    pub jitter_amplitude: f64,
}

impl CameraPath {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Ground-truth frame-to-frame flow parameters: the map sending
    /// frame-(i+1) pixel coordinates to the frame-i position of the same
    /// content, i.e. `pose_i^-1 . pose_(i+1)` component-wise.
    pub fn pair_params(&self, i: usize) -> SimilarityParams {
        affine::compose(&self.poses[i + 1], &affine::invert(&self.poses[i]))
    }
}

/// A moving rectangular foreground pasted over the background texture.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ForegroundSpec {
    /// Fraction of the frame area the rectangle covers, in [0, 0.5].
    pub area_fraction: f64,
    /// Per-frame translation of the rectangle, px/frame.
    pub velocity: (f64, f64),
}

/// Scene description for the generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    pub octaves: usize,
    pub foreground: Option<ForegroundSpec>,
}

impl SceneSpec {
    pub fn new(width: usize, height: usize, frames: usize, seed: u64) -> Self {
        SceneSpec {
            width,
            height,
            frames,
            seed,
            octaves: 3,
            foreground: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::InvalidParameter(format!(
                "scene frames must be at least 16x16, got {}x{}",
                self.width, self.height
            )));
        }
        if self.frames < 1 {
            return Err(Error::InvalidParameter("scene needs at least one frame".into()));
        }
        if self.octaves == 0 || self.octaves > 6 {
            return Err(Error::InvalidParameter(format!(
                "octaves must be in 1..=6, got {}",
                self.octaves
            )));
        }
        if let Some(fg) = &self.foreground {
            if !(0.0..=0.5).contains(&fg.area_fraction) {
                return Err(Error::InvalidParameter(format!(
                    "foreground area fraction {} outside [0, 0.5]",
                    fg.area_fraction
                )));
            }
        }
        Ok(())
    }
}

/// Everything the generator knows about a rendered video.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub path: CameraPath,
    /// Pair flow parameters (frame i -> i+1 correspondence maps), length T-1.
    pub pair_params: Vec<SimilarityParams>,
    /// Per-frame foreground rectangle `(x0, y0, w, h)` in pixels, if any.
    pub foreground_rects: Vec<Option<(usize, usize, usize, usize)>>,
}

impl GroundTruth {
    /// Dense analytic flow for the pair `(i, i+1)` in the backward-warp
    /// convention: warping frame `i` by this field reproduces frame `i+1`
    /// (over the background).
    pub fn pair_flow(&self, i: usize, h: usize, w: usize) -> FlowField {
        affine::flow_from_similarity(&self.pair_params[i], h, w)
    }
}

/// Smoothly interpolating value noise over a seeded lattice.
struct ValueNoise {
    cell: f64,
    lattice_w: usize,
    lattice_h: usize,
    values: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, span_w: f64, span_h: f64, cell: f64) -> Self {
        let lattice_w = (span_w / cell).ceil() as usize + 2;
        let lattice_h = (span_h / cell).ceil() as usize + 2;
        let values = (0..lattice_w * lattice_h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ValueNoise {
            cell,
            lattice_w,
            lattice_h,
            values,
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let gx = (x / self.cell).clamp(0.0, (self.lattice_w - 2) as f64);
        let gy = (y / self.cell).clamp(0.0, (self.lattice_h - 2) as f64);
        let x0 = gx as usize;
        let y0 = gy as usize;
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let fx = smooth(gx - x0 as f64);
        let fy = smooth(gy - y0 as f64);
        let i = y0 * self.lattice_w + x0;
        let v00 = self.values[i];
        let v01 = self.values[i + 1];
        let v10 = self.values[i + self.lattice_w];
        let v11 = self.values[i + self.lattice_w + 1];
        (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11)
    }
}

/// Band-limited multi-octave texture covering `span_w x span_h` units.
pub(crate) struct Texture {
    octaves: Vec<(ValueNoise, f64)>,
}

impl Texture {
    pub(crate) fn new(seed: u64, span_w: f64, span_h: f64, n_octaves: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Finest cell is 8 px; coarser octaves double the cell size.
        let mut octaves = Vec::new();
        let mut amp = 1.0;
        let mut cell = 8.0 * (1 << (n_octaves - 1)) as f64;
        for _ in 0..n_octaves {
            octaves.push((ValueNoise::new(&mut rng, span_w, span_h, cell), amp));
            amp *= 0.5;
            cell /= 2.0;
        }
        Texture { octaves }
    }

    pub(crate) fn at(&self, x: f64, y: f64) -> f64 {
        let mut v = 0.0;
        let mut norm = 0.0;
        for (noise, amp) in &self.octaves {
            v += amp * noise.at(x, y);
            norm += amp;
        }
        // Map to [0, 1] with headroom.
        0.5 + 0.45 * (v / norm)
    }
}

/// Renders the scene under the camera path. Returns the frames, analytic
/// ground truth, and per-frame foreground geometry. Fails when a pose would
/// sample outside the texture canvas.
pub fn generate(scene: &SceneSpec, path: &CameraPath) -> Result<(FrameSequence, GroundTruth)> {
    scene.validate()?;
    if path.len() != scene.frames {
        return Err(Error::InvalidParameter(format!(
            "camera path has {} poses for {} frames",
            path.len(),
            scene.frames
        )));
    }
    let (w, h) = (scene.width, scene.height);
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;

    // Margin needed so every warped sample stays on the canvas.
    let mut need = 0.0f64;
    for pose in &path.poses {
        for &(x, y) in &[
            (0.0, 0.0),
            (w as f64 - 1.0, 0.0),
            (0.0, h as f64 - 1.0),
            (w as f64 - 1.0, h as f64 - 1.0),
        ] {
            let (tx, ty) = pose.apply(x, y, cx, cy);
            need = need
                .max(-tx)
                .max(-ty)
                .max(tx - (w as f64 - 1.0))
                .max(ty - (h as f64 - 1.0));
        }
    }
    let margin = (need.ceil() as usize + 4).max(8);
    let max_margin = 4 * w.max(h);
    if margin > max_margin {
        return Err(Error::CanvasOverflow {
            required_margin: margin,
            have_margin: max_margin,
        });
    }
    let span_w = (w + 2 * margin) as f64;
    let span_h = (h + 2 * margin) as f64;
    let texture = Texture::new(scene.seed, span_w, span_h, scene.octaves);
    let fg_texture = Texture::new(
        scene.seed.wrapping_add(0x9E3779B97F4A7C15),
        span_w,
        span_h,
        scene.octaves,
    );

    // Foreground geometry: a centered rectangle drifting with its own
    // velocity, in frame coordinates.
    let fg_dims = scene.foreground.map(|fg| {
        let area = fg.area_fraction * (w * h) as f64;
        let side = area.sqrt();
        let fw = (side * (w as f64 / h as f64).sqrt()).round() as usize;
        let fh = (side * (h as f64 / w as f64).sqrt()).round() as usize;
        (fw.clamp(1, w), fh.clamp(1, h))
    });

    let mut frames = Vec::with_capacity(scene.frames);
    let mut fg_rects = Vec::with_capacity(scene.frames);
    for (i, pose) in path.poses.iter().enumerate() {
        let mut frame = Frame::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let (tx, ty) = pose.apply(x as f64, y as f64, cx, cy);
                frame.set(x, y, texture.at(tx + margin as f64, ty + margin as f64) as f32);
            }
        }
        let rect = match (scene.foreground, fg_dims) {
            (Some(fg), Some((fw, fh))) => {
                let fx0 = (w as f64 / 2.0 - fw as f64 / 2.0 + fg.velocity.0 * i as f64).round();
                let fy0 = (h as f64 / 2.0 - fh as f64 / 2.0 + fg.velocity.1 * i as f64).round();
                let fx0 = fx0.clamp(0.0, (w - fw) as f64) as usize;
                let fy0 = fy0.clamp(0.0, (h - fh) as f64) as usize;
                for y in fy0..fy0 + fh {
                    for x in fx0..fx0 + fw {
                        // Foreground texture scrolls with its own motion.
                        let sx = x as f64 - fg.velocity.0 * i as f64 + margin as f64;
                        let sy = y as f64 - fg.velocity.1 * i as f64 + margin as f64;
                        frame.set(x, y, fg_texture.at(sx, sy) as f32);
                    }
                }
                Some((fx0, fy0, fw, fh))
            }
            _ => None,
        };
        frames.push(frame);
        fg_rects.push(rect);
    }

    let pair_params = (0..scene.frames.saturating_sub(1))
        .map(|i| path.pair_params(i))
        .collect();
    let truth = GroundTruth {
        path: path.clone(),
        pair_params,
        foreground_rects: fg_rects,
    };
    Ok((FrameSequence::new(frames)?, truth))
}

/// Builds a camera path with a low-frequency smooth component (sinusoids at
/// DFT bins <= 2) plus seeded uniform jitter. Per-parameter jitter scales:
/// translation 1.0, rotation 0.003 rad, log-scale 0.0015 per unit of
/// `jitter_amp` (pixels).
pub fn make_jitter_path(t: usize, smooth_freq: f64, jitter_amp: f64, seed: u64) -> CameraPath {
    assert!(t >= 2, "a path needs at least two frames");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Seed-deterministic phases and amplitudes for the smooth component.
    let amp_tx: f64 = rng.gen_range(4.0..10.0);
    let amp_ty: f64 = rng.gen_range(4.0..10.0);
    let amp_r: f64 = rng.gen_range(0.005..0.02);
    let amp_s: f64 = rng.gen_range(0.002..0.008);
    let ph: [f64; 4] = [
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(0.0..std::f64::consts::TAU),
    ];
    let freq = smooth_freq.clamp(0.0, 2.0);
    let mut smooth = Vec::with_capacity(t);
    for i in 0..t {
        let phase = std::f64::consts::TAU * freq * i as f64 / t as f64;
        smooth.push(SimilarityParams::new(
            amp_r * (phase + ph[0]).sin(),
            amp_s * (phase + ph[1]).sin(),
            amp_tx * (phase + ph[2]).sin(),
            amp_ty * (phase + ph[3]).sin(),
        ));
    }
    let mut jitter = Vec::with_capacity(t);
    for _ in 0..t {
        jitter.push(SimilarityParams::new(
            jitter_amp * 0.003 * rng.gen_range(-1.0..1.0),
            jitter_amp * 0.0015 * rng.gen_range(-1.0..1.0),
            jitter_amp * rng.gen_range(-1.0..1.0),
            jitter_amp * rng.gen_range(-1.0..1.0),
        ));
    }
    let poses = smooth
        .iter()
        .zip(&jitter)
        .map(|(s, j)| SimilarityParams::new(s.r + j.r, s.s + j.s, s.t_x + j.t_x, s.t_y + j.t_y))
        .collect();
    CameraPath {
        poses,
        smooth,
        jitter,
        jitter_amplitude: jitter_amp,
    }
}

/// A static path (all poses identity).
pub fn static_path(t: usize) -> CameraPath {
    CameraPath {
        poses: vec![SimilarityParams::IDENTITY; t],
        smooth: vec![SimilarityParams::IDENTITY; t],
        jitter: vec![SimilarityParams::IDENTITY; t],
        jitter_amplitude: 0.0,
    }
}

/// A pure-translation path moving `(vx, vy)` px per frame.
pub fn translation_path(t: usize, vx: f64, vy: f64) -> CameraPath {
    let poses: Vec<SimilarityParams> = (0..t)
        .map(|i| SimilarityParams::new(0.0, 0.0, vx * i as f64, vy * i as f64))
        .collect();
    CameraPath {
        smooth: poses.clone(),
        jitter: vec![SimilarityParams::IDENTITY; t],
        poses,
        jitter_amplitude: 0.0,
    }
}
