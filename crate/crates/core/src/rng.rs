//! Seeded, platform-independent random streams.
//!
//! Every stream is xoshiro256** seeded through splitmix64. Parallel work never
//! shares an [`Rng`]; it derives an independent stream per work item with
//! [`Rng::stream`], so a parallel run produces exactly what the serial run does.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256StarStar;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Rng {
    inner: Xoshiro256StarStar,
}

/// One splitmix64 step; also used to mix stream indices into seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Independent stream `index` of `seed`: `Rng::new(splitmix64(seed ^ splitmix64(index)))`.
    pub fn stream(seed: u64, index: u64) -> Self {
        Self::new(splitmix64(seed ^ splitmix64(index)))
    }

    /// Child generator seeded from this one's next output.
    pub fn split(&mut self) -> Self {
        Self::new(self.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// `n` distinct indices drawn uniformly from `[0, total)`, returned sorted.
    pub fn sample_tokens(&mut self, n: usize, total: usize) -> Result<Vec<usize>> {
        if n == 0 || n > total {
            return Err(Error::arg(format!(
                "cannot draw {n} distinct tokens out of {total}"
            )));
        }
        let mut idx = rand::seq::index::sample(&mut self.inner, total, n).into_vec();
        idx.sort_unstable();
        Ok(idx)
    }

    pub fn normal_tensor(&mut self, shape: &[usize], std: f32) -> Tensor {
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = (self.normal() * std as f64) as f32;
        }
        t
    }

    pub fn uniform_tensor(&mut self, shape: &[usize], lo: f32, hi: f32) -> Tensor {
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = lo + (hi - lo) * self.uniform() as f32;
        }
        t
    }
}
