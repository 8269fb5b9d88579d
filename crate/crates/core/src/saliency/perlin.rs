//! 2-D gradient-lattice (Perlin) noise with a seeded permutation table.

use crate::rng::Rng;
use crate::tensor::Tensor;

pub struct Perlin {
    perm: [u8; 512],
}

// Unit gradients at 45° steps.
const GRADIENTS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (-1.0, 0.0),
    (0.0, 1.0),
    (0.0, -1.0),
    (
        std::f64::consts::FRAC_1_SQRT_2,
        std::f64::consts::FRAC_1_SQRT_2,
    ),
    (
        -std::f64::consts::FRAC_1_SQRT_2,
        std::f64::consts::FRAC_1_SQRT_2,
    ),
    (
        std::f64::consts::FRAC_1_SQRT_2,
        -std::f64::consts::FRAC_1_SQRT_2,
    ),
    (
        -std::f64::consts::FRAC_1_SQRT_2,
        -std::f64::consts::FRAC_1_SQRT_2,
    ),
];

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

impl Perlin {
    pub fn new(rng: &mut Rng) -> Self {
        let mut p: Vec<u8> = (0..=255).collect();
        rng.shuffle(&mut p);
        let mut perm = [0u8; 512];
        for i in 0..512 {
            perm[i] = p[i & 255];
        }
        Self { perm }
    }

    fn gradient(&self, ix: i64, iy: i64) -> (f64, f64) {
        let a = self.perm[(ix & 255) as usize] as usize;
        let h = self.perm[a + (iy & 255) as usize];
        GRADIENTS[(h & 7) as usize]
    }

    /// Noise value at `(x, y)` in lattice units; zero on lattice points,
    /// bounded by `±1`.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (ix, iy) = (x0 as i64, y0 as i64);
        let corner = |dx: i64, dy: i64| {
            let (gx, gy) = self.gradient(ix + dx, iy + dy);
            gx * (fx - dx as f64) + gy * (fy - dy as f64)
        };
        let (u, v) = (fade(fx), fade(fy));
        let top = lerp(corner(0, 0), corner(1, 0), u);
        let bottom = lerp(corner(0, 1), corner(1, 1), u);
        lerp(top, bottom, v)
    }

    /// `h×w` field spanning `cells` lattice cells across the width, rescaled
    /// from `[-1, 1]` to `[0, 1]`.
    pub fn field(&self, h: usize, w: usize, cells: f64) -> Tensor {
        let step = cells / w as f64;
        Tensor::from_fn(h, w, |y, x| {
            let n = self.sample((x as f64 + 0.5) * step, (y as f64 + 0.5) * step);
            ((n + 1.0) * 0.5).clamp(0.0, 1.0) as f32
        })
    }
}
