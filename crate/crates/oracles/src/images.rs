/// 2-D Gaussian blur by direct convolution with the full 2-D kernel,
/// truncated at `ceil(3σ)`, replicating edge pixels.
pub fn gaussian_blur_direct(image: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut weights = Vec::new();
    let mut total = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let v = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            weights.push((dy, dx, v));
            total += v;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut s = 0.0;
            for &(dy, dx, v) in &weights {
                let yy = (y + dy).clamp(0, h as isize - 1) as usize;
                let xx = (x + dx).clamp(0, w as isize - 1) as usize;
                s += v * image[yy * w + xx];
            }
            out[y as usize * w + x as usize] = s / total;
        }
    }
    out
}
