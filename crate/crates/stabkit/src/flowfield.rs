//! Dense two-channel displacement fields with per-pixel validity.

/// Per-pixel displacement in pixels. `u` is the x component, `v` the y
/// component, both row-major. A pixel's displacement is meaningful only
/// where `valid` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub valid: Vec<bool>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
            valid: vec![true; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, u: f64, v: f64) -> Self {
        FlowField {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
            valid: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (du, dv) = f(x, y);
                u.push(du);
                v.push(dv);
            }
        }
        FlowField {
            width,
            height,
            u,
            v,
            valid: vec![true; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn invalid_fraction(&self) -> f64 {
        if self.valid.is_empty() {
            return 1.0;
        }
        let bad = self.valid.iter().filter(|&&v| !v).count();
        bad as f64 / self.valid.len() as f64
    }

    /// Sum of squared displacement magnitudes over valid pixels.
    pub fn energy(&self) -> f64 {
        let mut e = 0.0;
        for i in 0..self.u.len() {
            if self.valid[i] {
                e += self.u[i] * self.u[i] + self.v[i] * self.v[i];
            }
        }
        e
    }

    /// Bilinear sample of both channels; `None` outside bounds or when any
    /// of the four support pixels is invalid.
    pub fn sample(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let (w, h) = (self.width, self.height);
        if !(x >= 0.0 && x <= (w - 1) as f64 && y >= 0.0 && y <= (h - 1) as f64) {
            return None;
        }
        if w == 1 || h == 1 {
            let i = (y as usize).min(h - 1) * w + (x as usize).min(w - 1);
            return self.valid[i].then(|| (self.u[i], self.v[i]));
        }
        let x0 = (x as usize).min(w - 2);
        let y0 = (y as usize).min(h - 2);
        let i = y0 * w + x0;
        if !(self.valid[i] && self.valid[i + 1] && self.valid[i + w] && self.valid[i + w + 1]) {
            return None;
        }
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let u = lerp(
            lerp(self.u[i], self.u[i + 1], fx),
            lerp(self.u[i + w], self.u[i + w + 1], fx),
            fy,
        );
        let v = lerp(
            lerp(self.v[i], self.v[i + 1], fx),
            lerp(self.v[i + w], self.v[i + w + 1], fx),
            fy,
        );
        Some((u, v))
    }
}
