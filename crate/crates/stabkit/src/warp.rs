//! Frame warping, validity tracking, crop-ratio geometry, and uniform
//! cropping.
//!
//! Warping is backward throughout: the output at `p` samples the source at
//! `p + flow(p)`, which never leaves holes. Crop ratios measure how much of
//! an axis-aligned rectangle survives inside the valid region of a warped
//! frame, as a fraction of the frame area.

use crate::affine::SimilarityParams;
use crate::error::{Error, Result};
use crate::flowfield::FlowField;
use crate::frame::{Frame, FrameSequence, Mask};

/// The warped frame boundary under a similarity/affine map.
#[derive(Debug, Clone, Copy)]
pub struct ValidQuad {
    pub corners: [(f64, f64); 4],
    pub convex: bool,
}

impl ValidQuad {
    /// Maps the frame rectangle `[-0.5, w-0.5] x [-0.5, h-0.5]` (area `w*h`,
    /// centered on the pixel-center anchor) through a similarity transform.
    pub fn from_similarity(warp: &SimilarityParams, frame_h: usize, frame_w: usize) -> Self {
        let (w, h) = (frame_w as f64, frame_h as f64);
        let cx = (w - 1.0) / 2.0;
        let cy = (h - 1.0) / 2.0;
        let src = [
            (-0.5, -0.5),
            (w - 0.5, -0.5),
            (w - 0.5, h - 0.5),
            (-0.5, h - 0.5),
        ];
        let mut corners = [(0.0, 0.0); 4];
        for (i, &(x, y)) in src.iter().enumerate() {
            corners[i] = warp.apply(x, y, cx, cy);
        }
        // A similarity with positive scale preserves convexity and
        // orientation; verify orientation anyway.
        let convex = polygon_area(&corners) > 0.0;
        ValidQuad { corners, convex }
    }
}

/// Backward-warps a frame by a dense flow field: `out(p) = frame(p + flow(p))`.
/// Samples that leave the frame (or whose flow is invalid) are marked invalid
/// and left at zero.
pub fn warp_by_flow(frame: &Frame, flow: &FlowField) -> (Frame, Mask) {
    assert_eq!(
        (frame.width, frame.height),
        (flow.width, flow.height),
        "flow dimensions must match the frame"
    );
    let (w, h) = (frame.width, frame.height);
    let mut out = Frame::new(w, h);
    let mut mask = Mask::full(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !flow.valid[i] {
                mask.data[i] = false;
                continue;
            }
            let sx = x as f64 + flow.u[i];
            let sy = y as f64 + flow.v[i];
            match frame.sample(sx, sy) {
                Some(v) => out.data[i] = v,
                None => mask.data[i] = false,
            }
        }
    }
    (out, mask)
}

/// Crop ratio of a similarity warp: the frame rectangle is mapped through
/// the warp, intersected with the canvas, and the largest axis-aligned
/// rectangle inside the resulting convex region is found by a centered
/// binary search with independent width/height expansion passes. Exact for
/// symmetric regions (translations, rotations about the center),
/// conservative otherwise.
pub fn crop_ratio(warp: &SimilarityParams, frame_h: usize, frame_w: usize) -> f64 {
    let quad = ValidQuad::from_similarity(warp, frame_h, frame_w);
    let (w, h) = (frame_w as f64, frame_h as f64);
    let canvas = [
        (-0.5, -0.5),
        (w - 0.5, -0.5),
        (w - 0.5, h - 0.5),
        (-0.5, h - 0.5),
    ];
    let region = clip_convex(&quad.corners, &canvas);
    if region.len() < 3 || polygon_area(&region) < 1e-12 {
        return 0.0;
    }
    let area = inscribed_rect_area(&region, w, h);
    (area / (w * h)).clamp(0.0, 1.0)
}

/// Largest axis-aligned rectangle inside a convex polygon, searched as a
/// frame-aspect rectangle centered at the polygon centroid, then widened and
/// heightened independently.
fn inscribed_rect_area(region: &[(f64, f64)], w: f64, h: f64) -> f64 {
    let (cx, cy) = polygon_centroid(region);
    let fits = |hw: f64, hh: f64| -> bool {
        [
            (cx - hw, cy - hh),
            (cx + hw, cy - hh),
            (cx + hw, cy + hh),
            (cx - hw, cy + hh),
        ]
        .iter()
        .all(|&p| point_in_convex(region, p))
    };
    // Scale pass on the aspect-true rectangle.
    let mut lo = 0.0;
    let mut hi = 1.0;
    if fits(w / 2.0, h / 2.0) {
        lo = 1.0;
    } else {
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if fits(mid * w / 2.0, mid * h / 2.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    if lo == 0.0 {
        return 0.0;
    }
    let (mut hw, mut hh) = (lo * w / 2.0, lo * h / 2.0);
    // Expansion passes, width first then height.
    let grow = |horizontal: bool, hw: f64, hh: f64| -> f64 {
        let test = |k: f64| {
            if horizontal {
                fits(k * hw, hh)
            } else {
                fits(hw, k * hh)
            }
        };
        let mut klo = 1.0;
        let mut khi = 4.0;
        if test(khi) {
            return khi;
        }
        for _ in 0..40 {
            let mid = 0.5 * (klo + khi);
            if test(mid) {
                klo = mid;
            } else {
                khi = mid;
            }
        }
        klo
    };
    hw *= grow(true, hw, hh);
    hh *= grow(false, hw, hh);
    4.0 * hw * hh
}

/// Crop ratio of a dense backward-warp validity region: per-edge maximum
/// inward boundary displacement determines the surviving axis-aligned
/// rectangle.
pub fn crop_ratio_flow(flow: &FlowField) -> f64 {
    let (w, h) = (flow.width, flow.height);
    let valid = |x: usize, y: usize| -> bool {
        let i = y * w + x;
        if !flow.valid[i] {
            return false;
        }
        let sx = x as f64 + flow.u[i];
        let sy = y as f64 + flow.v[i];
        sx >= 0.0 && sx <= (w - 1) as f64 && sy >= 0.0 && sy <= (h - 1) as f64
    };
    match cut_rect(&valid, w, h) {
        Some((x0, x1, y0, y1)) => ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64 / (w * h) as f64,
        None => 0.0,
    }
}

/// Largest per-edge-cut rectangle `(x0, x1, y0, y1)` (inclusive) inside a
/// validity predicate, or `None` when nothing survives. Each frame edge is
/// pushed inward by the maximum run of invalid pixels along it.
fn cut_rect(
    valid: &dyn Fn(usize, usize) -> bool,
    w: usize,
    h: usize,
) -> Option<(usize, usize, usize, usize)> {
    let mut row_first = vec![None; h];
    let mut row_last = vec![None; h];
    let mut col_first = vec![None; w];
    let mut col_last = vec![None; w];
    for y in 0..h {
        for x in 0..w {
            if valid(x, y) {
                if row_first[y].is_none() {
                    row_first[y] = Some(x);
                }
                row_last[y] = Some(x);
                if col_first[x].is_none() {
                    col_first[x] = Some(y);
                }
                col_last[x] = Some(y);
            }
        }
    }
    let top_full = row_first.iter().take_while(|r| r.is_none()).count();
    if top_full == h {
        return None;
    }
    let bottom_full = row_first.iter().rev().take_while(|r| r.is_none()).count();
    let left_full = col_first.iter().take_while(|c| c.is_none()).count();
    let right_full = col_first.iter().rev().take_while(|c| c.is_none()).count();

    let mut x0 = 0;
    let mut x1 = w - 1;
    for y in top_full..h - bottom_full {
        match (row_first[y], row_last[y]) {
            (Some(f), Some(l)) => {
                x0 = x0.max(f);
                x1 = x1.min(l);
            }
            // A fully invalid interior row leaves no spanning rectangle.
            _ => return None,
        }
    }
    let mut y0 = 0;
    let mut y1 = h - 1;
    for x in left_full..w - right_full {
        match (col_first[x], col_last[x]) {
            (Some(f), Some(l)) => {
                y0 = y0.max(f);
                y1 = y1.min(l);
            }
            _ => return None,
        }
    }
    (x0 <= x1 && y0 <= y1).then_some((x0, x1, y0, y1))
}

/// The uniform crop window applied to a sequence, in pixels of the original
/// frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CropWindow {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl CropWindow {
    pub fn full(w: usize, h: usize) -> Self {
        CropWindow { x0: 0, y0: 0, w, h }
    }

    pub fn area_ratio(&self, full_w: usize, full_h: usize) -> f64 {
        (self.w * self.h) as f64 / (full_w * full_h) as f64
    }
}

/// Crops every frame to the intersection of all per-frame valid rectangles,
/// shrunk to the original aspect ratio, then rescales back to the original
/// resolution. Fails with the offending frame index when the intersection
/// becomes empty.
pub fn uniform_crop(seq: &FrameSequence) -> Result<(FrameSequence, CropWindow)> {
    let (w, h) = (seq.width(), seq.height());
    let mut x0 = 0usize;
    let mut x1 = w - 1;
    let mut y0 = 0usize;
    let mut y1 = h - 1;
    for (i, mask) in seq.masks.iter().enumerate() {
        let valid = |x: usize, y: usize| mask.at(x, y);
        let rect = cut_rect(&valid, w, h).ok_or(Error::EmptyCrop { frame_index: i })?;
        x0 = x0.max(rect.0);
        x1 = x1.min(rect.1);
        y0 = y0.max(rect.2);
        y1 = y1.min(rect.3);
        if x0 > x1 || y0 > y1 {
            return Err(Error::EmptyCrop { frame_index: i });
        }
    }
    let window = aspect_window(x0, x1, y0, y1, w, h)?;
    if window.w == w && window.h == h {
        return Ok((seq.clone(), window));
    }
    let mut frames = Vec::with_capacity(seq.len());
    for f in &seq.frames {
        let mut sub = Frame::new(window.w, window.h);
        for y in 0..window.h {
            for x in 0..window.w {
                sub.set(x, y, f.at(window.x0 + x, window.y0 + y));
            }
        }
        frames.push(sub.resize(w, h));
    }
    let masks = frames.iter().map(|f| Mask::full(f.width, f.height)).collect();
    Ok((FrameSequence::with_masks(frames, masks), window))
}

/// Shrinks an inclusive rectangle to the aspect ratio of the full frame,
/// keeping it centered within itself.
fn aspect_window(
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    w: usize,
    h: usize,
) -> Result<CropWindow> {
    let rw = x1 - x0 + 1;
    let rh = y1 - y0 + 1;
    // Compare rw/rh against w/h in integers.
    let (win_w, win_h) = if rw * h > rh * w {
        // Too wide relative to the frame: shrink width.
        (((rh * w) / h).max(1), rh)
    } else {
        (rw, ((rw * h) / w).max(1))
    };
    let wx0 = x0 + (rw - win_w) / 2;
    let wy0 = y0 + (rh - win_h) / 2;
    Ok(CropWindow {
        x0: wx0,
        y0: wy0,
        w: win_w,
        h: win_h,
    })
}

// Convex polygon helpers on (x, y) vertex lists.

fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let mut a = 0.0;
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        a += x0 * y1 - x1 * y0;
    }
    a / 2.0
}

fn polygon_centroid(poly: &[(f64, f64)]) -> (f64, f64) {
    let a = polygon_area(poly);
    if a.abs() < 1e-12 {
        let n = poly.len() as f64;
        let (sx, sy) = poly.iter().fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x, sy + y));
        return (sx / n, sy / n);
    }
    let n = poly.len();
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        let cross = x0 * y1 - x1 * y0;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    (cx / (6.0 * a), cy / (6.0 * a))
}

fn point_in_convex(poly: &[(f64, f64)], p: (f64, f64)) -> bool {
    // Assumes counter-clockwise orientation (positive area).
    let n = poly.len();
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        let cross = (x1 - x0) * (p.1 - y0) - (y1 - y0) * (p.0 - x0);
        if cross < -1e-9 {
            return false;
        }
    }
    true
}

/// Sutherland-Hodgman clip of a convex subject polygon against a convex
/// clip polygon (either orientation accepted; output is CCW).
fn clip_convex(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let orient = |poly: &[(f64, f64)]| -> Vec<(f64, f64)> {
        if polygon_area(poly) < 0.0 {
            poly.iter().rev().copied().collect()
        } else {
            poly.to_vec()
        }
    };
    let clip = orient(clip);
    let mut output = orient(subject);
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let (ax, ay) = clip[i];
        let (bx, by) = clip[(i + 1) % n];
        let inside = |p: (f64, f64)| (bx - ax) * (p.1 - ay) - (by - ay) * (p.0 - ax) >= -1e-12;
        let intersect = |p: (f64, f64), q: (f64, f64)| -> (f64, f64) {
            let (dx, dy) = (q.0 - p.0, q.1 - p.1);
            let denom = (bx - ax) * dy - (by - ay) * dx;
            if denom.abs() < 1e-300 {
                return p;
            }
            let t = ((bx - ax) * (p.1 - ay) - (by - ay) * (p.0 - ax)) / denom;
            (p.0 - dx * t, p.1 - dy * t)
        };
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let cur_in = inside(cur);
            let prev_in = inside(prev);
            if cur_in {
                if !prev_in {
                    output.push(intersect(prev, cur));
                }
                output.push(cur);
            } else if prev_in {
                output.push(intersect(prev, cur));
            }
        }
    }
    output
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine;

    #[test]
    fn zero_flow_warp_is_identity() {
        let f = Frame::from_fn(9, 7, |x, y| (x * 7 + y) as f32 * 0.01);
        let (out, mask) = warp_by_flow(&f, &FlowField::zeros(9, 7));
        assert_eq!(out, f);
        assert!(mask.data.iter().all(|&m| m));
    }

    #[test]
    fn integer_shift_on_3x3_matches_hand_oracle() {
        // out(p) = frame(p + (1, 0)): columns shift, rightmost invalid.
        let f = Frame::from_fn(3, 3, |x, y| (y * 3 + x) as f32);
        let (out, mask) = warp_by_flow(&f, &FlowField::constant(3, 3, 1.0, 0.0));
        for y in 0..3 {
            assert_eq!(out.at(0, y), f.at(1, y));
            assert_eq!(out.at(1, y), f.at(2, y));
            assert!(!mask.at(2, y));
            assert!(mask.at(0, y) && mask.at(1, y));
        }
    }

    #[test]
    fn half_pixel_shift_is_exact_on_ramp() {
        let f = Frame::from_fn(16, 4, |x, _| x as f32 * 0.05);
        let (out, mask) = warp_by_flow(&f, &FlowField::constant(16, 4, 0.5, 0.0));
        for y in 0..4 {
            for x in 0..15 {
                assert!(mask.at(x, y));
                assert!((out.at(x, y) - (x as f32 + 0.5) * 0.05).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn warp_round_trip_recovers_smooth_interior() {
        // Band-limited content: low-frequency cosine product.
        let f = Frame::from_fn(64, 64, |x, y| {
            0.5 + 0.3 * (x as f32 * 0.15).cos() * (y as f32 * 0.11).sin()
        });
        let fwd = FlowField::constant(64, 64, 2.3, -1.7);
        let bwd = FlowField::constant(64, 64, -2.3, 1.7);
        let (warped, _) = warp_by_flow(&f, &fwd);
        let (back, mask) = warp_by_flow(&warped, &bwd);
        let mut err: f32 = 0.0;
        for y in 8..56 {
            for x in 8..56 {
                if mask.at(x, y) {
                    err = err.max((back.at(x, y) - f.at(x, y)).abs());
                }
            }
        }
        assert!(err < 1e-2, "round-trip error {err}");
    }

    #[test]
    fn crop_ratio_identity_is_one() {
        assert_eq!(crop_ratio(&SimilarityParams::IDENTITY, 480, 640), 1.0);
    }

    #[test]
    fn crop_ratio_pure_translation() {
        // t_x = 0.1 * W leaves a 0.9W x H valid rectangle.
        let w = 200;
        let p = SimilarityParams::new(0.0, 0.0, 0.1 * w as f64, 0.0);
        let r = crop_ratio(&p, 100, w);
        assert!((r - 0.9).abs() < 1e-6, "ratio {r}");
        // Sign does not matter for a pure translation.
        let p2 = SimilarityParams::new(0.0, 0.0, -0.1 * w as f64, 0.0);
        assert!((crop_ratio(&p2, 100, w) - 0.9).abs() < 1e-6);
    }

    #[test]
    fn crop_ratio_45_degree_rotation_of_square() {
        // Valid region: the rotated square clipped to the canvas, an octagon
        // bounded by |x| + |y| <= sqrt(2)/2 (in side units, centered). The
        // optimal axis-aligned rectangle maximizes 4ab subject to
        // a + b = sqrt(2)/2, so a = b = sqrt(2)/4 and the area is 1/2.
        let p = SimilarityParams::new(std::f64::consts::FRAC_PI_4, 0.0, 0.0, 0.0);
        let r = crop_ratio(&p, 256, 256);
        assert!((r - 0.5).abs() < 1e-4, "ratio {r}");
    }

    #[test]
    fn crop_ratio_rotation_sign_invariant() {
        for mag in [0.05, 0.2, 0.6] {
            let a = crop_ratio(&SimilarityParams::new(mag, 0.0, 0.0, 0.0), 120, 160);
            let b = crop_ratio(&SimilarityParams::new(-mag, 0.0, 0.0, 0.0), 120, 160);
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn crop_ratio_decreases_with_translation() {
        let mut prev = 1.0;
        for k in 1..8 {
            let t = k as f64 * 6.0;
            let r = crop_ratio(&SimilarityParams::new(0.0, 0.0, t, 0.0), 120, 160);
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn crop_ratio_offscreen_warp_is_zero() {
        let p = SimilarityParams::new(0.0, 0.0, 1e5, 0.0);
        assert_eq!(crop_ratio(&p, 64, 64), 0.0);
    }

    #[test]
    fn crop_ratio_flow_zero_is_one() {
        assert_eq!(crop_ratio_flow(&FlowField::zeros(50, 40)), 1.0);
    }

    #[test]
    fn crop_ratio_flow_band() {
        // Constant flow (0.1*W, 0) on W=100: valid x <= 89, 90 of 100
        // columns survive.
        let flow = FlowField::constant(100, 50, 10.0, 0.0);
        let r = crop_ratio_flow(&flow);
        assert!((r - 0.9).abs() < 1e-9, "ratio {r}");
    }

    #[test]
    fn crop_ratio_flow_empty_mask_is_zero() {
        let mut flow = FlowField::zeros(10, 10);
        flow.valid.iter_mut().for_each(|v| *v = false);
        assert_eq!(crop_ratio_flow(&flow), 0.0);
    }

    #[test]
    fn uniform_crop_identity_when_all_valid() {
        let frames = vec![Frame::from_fn(40, 30, |x, y| (x + y) as f32 * 0.01); 3];
        let seq = FrameSequence::new(frames).unwrap();
        let (out, window) = uniform_crop(&seq).unwrap();
        assert_eq!(window, CropWindow::full(40, 30));
        assert_eq!(out.frames[0], seq.frames[0]);
    }

    #[test]
    fn uniform_crop_follows_single_shifted_frame() {
        let w = 60;
        let h = 40;
        let mut seq = FrameSequence::new(vec![Frame::new(w, h); 4]).unwrap();
        // Frame 2 lost its 5 leftmost columns.
        for y in 0..h {
            for x in 0..5 {
                seq.masks[2].set(x, y, false);
            }
        }
        let (_, window) = uniform_crop(&seq).unwrap();
        assert_eq!(window.x0, 5);
        assert_eq!(window.w, 55);
        // Aspect-preserved: height shrinks accordingly.
        assert_eq!(window.h, 55 * h / w);
    }

    #[test]
    fn uniform_crop_intersects_opposite_shifts() {
        let w = 60;
        let h = 40;
        let mut seq = FrameSequence::new(vec![Frame::new(w, h); 2]).unwrap();
        for y in 0..h {
            for x in 0..5 {
                seq.masks[0].set(x, y, false);
                seq.masks[1].set(w - 1 - x, y, false);
            }
        }
        let (_, window) = uniform_crop(&seq).unwrap();
        assert_eq!(window.w, 50);
        assert_eq!(window.x0, 5);
    }

    #[test]
    fn uniform_crop_reports_empty_intersection() {
        let mut seq = FrameSequence::new(vec![Frame::new(10, 10); 2]).unwrap();
        seq.masks[1].data.iter_mut().for_each(|v| *v = false);
        let err = uniform_crop(&seq).unwrap_err();
        assert!(matches!(err, Error::EmptyCrop { frame_index: 1 }));
    }

    #[test]
    fn uniform_crop_output_keeps_dimensions() {
        let mut seq =
            FrameSequence::new(vec![Frame::from_fn(48, 36, |x, y| ((x * y) % 7) as f32 * 0.1); 3])
                .unwrap();
        for y in 0..36 {
            for x in 0..7 {
                seq.masks[0].set(x, y, false);
            }
        }
        let (out, _) = uniform_crop(&seq).unwrap();
        assert_eq!(out.width(), 48);
        assert_eq!(out.height(), 36);
    }

    #[test]
    fn inverse_warp_composition_via_flow() {
        // warp_by_flow(frame, flow_from_similarity(m)) samples frame at
        // m(p): composing with the inverse must return near the original.
        let f = Frame::from_fn(64, 64, |x, y| {
            0.5 + 0.25 * ((x as f32 * 0.13).sin() + (y as f32 * 0.17).cos())
        });
        let m = SimilarityParams::new(0.02, 0.01, 1.5, -2.0);
        let flow_m = affine::flow_from_similarity(&m, 64, 64);
        let flow_inv = affine::flow_from_similarity(&affine::invert(&m), 64, 64);
        let (warped, _) = warp_by_flow(&f, &flow_m);
        let (back, mask) = warp_by_flow(&warped, &flow_inv);
        let mut err: f32 = 0.0;
        for y in 10..54 {
            for x in 10..54 {
                if mask.at(x, y) {
                    err = err.max((back.at(x, y) - f.at(x, y)).abs());
                }
            }
        }
        assert!(err < 1e-2, "composition error {err}");
    }
}
