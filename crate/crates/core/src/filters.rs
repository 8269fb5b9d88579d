//! Image filters shared by the synthetic maps and the metrics.

use crate::tensor::Tensor;

/// Normalised 1-D Gaussian taps for `sigma`, truncated at `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with edge-replicating borders, so constant images
/// stay constant. `sigma <= 0` returns the input unchanged.
pub fn gaussian_blur(image: &Tensor, sigma: f64) -> Tensor {
    if sigma <= 0.0 {
        return image.clone();
    }
    let (h, w) = image.dims2().expect("image is a matrix");
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * image.at(y, clamp(x as isize + i as isize - r, w)) as f64)
                .sum();
        }
    }
    Tensor::from_fn(h, w, |y, x| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * tmp[clamp(y as isize + i as isize - r, h) * w + x])
            .sum::<f64>() as f32
    })
}

/// Mean over non-overlapping `(h/g)×(w/g)` blocks, producing a `g×g` grid.
/// `h` and `w` must be multiples of `g`.
pub fn block_mean(image: &Tensor, g: usize) -> Tensor {
    let (h, w) = image.dims2().expect("image is a matrix");
    assert!(
        g > 0 && h % g == 0 && w % g == 0,
        "{h}x{w} image does not tile into {g}x{g} blocks"
    );
    let (bh, bw) = (h / g, w / g);
    Tensor::from_fn(g, g, |gy, gx| {
        let mut s = 0.0f64;
        for y in gy * bh..(gy + 1) * bh {
            for x in gx * bw..(gx + 1) * bw {
                s += image.at(y, x) as f64;
            }
        }
        (s / (bh * bw) as f64) as f32
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn kernel_is_normalised_and_symmetric() {
        let k = gaussian_kernel(1.28);
        assert_eq!(k.len(), 9);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(k[0], k[8]);
    }

    #[test]
    fn blur_keeps_constants() {
        let c = Tensor::full(&[10, 7], 0.4);
        let b = gaussian_blur(&c, 2.0);
        assert!(b.data().iter().all(|&v| (v - 0.4).abs() < 1e-6));
    }

    #[test]
    fn blur_matches_direct_convolution() {
        let img = Rng::new(4).uniform_tensor(&[12, 15], 0.0, 1.0);
        let sigma = 1.3;
        let fast = gaussian_blur(&img, sigma);
        let data: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
        let slow = atnb_oracles::images::gaussian_blur_direct(&data, 12, 15, sigma);
        for (a, b) in fast.data().iter().zip(&slow) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }

    #[test]
    fn block_mean_pools() {
        let img = Tensor::from_fn(4, 4, |y, x| (y * 4 + x) as f32);
        let g = block_mean(&img, 2);
        assert_eq!(g.data(), &[2.5, 4.5, 10.5, 12.5]);
    }
}
