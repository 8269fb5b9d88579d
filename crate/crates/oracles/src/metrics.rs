//! Direct per-pixel and per-window versions of the map metrics.

/// EHR curve by counting pixels at each threshold `k/steps`, `k = 1..=steps`.
pub fn ehr_pixel_count(map: &[f64], gt: &[bool], steps: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        let mut area = 0usize;
        let mut inside = 0usize;
        for (v, g) in map.iter().zip(gt) {
            if *v >= t {
                area += 1;
                if *g {
                    inside += 1;
                }
            }
        }
        xs.push(t);
        ys.push(if area == 0 {
            0.0
        } else {
            inside as f64 / area as f64
        });
    }
    (xs, ys)
}

/// Trapezoidal integral.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// Pearson correlation with the two-pass formula.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Mean SSIM over every fully contained 11×11 window, each evaluated with
/// the full 2-D Gaussian (σ = 1.5) weights.
pub fn ssim_direct(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    const SIZE: usize = 11;
    let sigma = 1.5f64;
    let c = (SIZE / 2) as f64;
    let mut weights = vec![0.0; SIZE * SIZE];
    for y in 0..SIZE {
        for x in 0..SIZE {
            let (dy, dx) = (y as f64 - c, x as f64 - c);
            weights[y * SIZE + x] = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut sum = 0.0;
    let mut count = 0;
    for y0 in 0..=h - SIZE {
        for x0 in 0..=w - SIZE {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in 0..SIZE {
                for x in 0..SIZE {
                    let k = weights[y * SIZE + x];
                    let (p, q) = (a[(y0 + y) * w + x0 + x], b[(y0 + y) * w + x0 + x]);
                    ma += k * p;
                    mb += k * q;
                    saa += k * p * p;
                    sbb += k * q * q;
                    sab += k * p * q;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}
