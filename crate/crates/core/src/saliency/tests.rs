use super::*;
use crate::vit::VitConfig;

fn random_stochastic(rng: &mut Rng, t: usize) -> Tensor {
    let raw = rng.uniform_tensor(&[t, t], 0.01, 1.0);
    normalize_rows(&raw).unwrap()
}

fn capture_from(attention: Vec<Vec<Tensor>>, d: usize) -> AttentionCapture {
    let t = attention[0][0].shape()[0];
    AttentionCapture::from_parts(attention, Tensor::zeros(&[t - 1, d]), vec![0.5])
}

fn grads_from(attention: Vec<Vec<Tensor>>, features: Tensor, class: usize) -> AttentionGradients {
    AttentionGradients {
        attention,
        features,
        class,
    }
}

/// `(I + M)` row-normalised, in f64.
fn residual_f64(m: &[f64], t: usize) -> Vec<f64> {
    let mut out = m.to_vec();
    for i in 0..t {
        out[i * t + i] += 1.0;
        let s: f64 = out[i * t..(i + 1) * t].iter().sum();
        out[i * t..(i + 1) * t].iter_mut().for_each(|v| *v /= s);
    }
    out
}

fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

fn normalized_patch_row(row: &[f64]) -> Vec<f64> {
    let patches = &row[1..];
    let max = patches.iter().cloned().fold(f64::MIN, f64::max);
    patches.iter().map(|v| v / max).collect()
}

fn assert_close(a: &[f32], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((*x as f64 - y).abs() <= tol, "{x} vs {y}");
    }
}

#[test]
fn uniform_single_layer_gives_constant_map() {
    let t = 17;
    let a = Tensor::full(&[t, t], 1.0 / t as f32);
    let map = rollout(&capture_from(vec![vec![a]], 4), HeadMerge::Mean, (16, 16)).unwrap();
    assert_eq!(map.grid.shape(), &[4, 4]);
    assert!(map.grid.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    assert!(map.image.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
}

#[test]
fn min_equals_mean_for_identical_heads() {
    let mut rng = Rng::new(5);
    let layers: Vec<Vec<Tensor>> = (0..3)
        .map(|_| {
            let a = random_stochastic(&mut rng, 10);
            vec![a.clone(), a.clone(), a]
        })
        .collect();
    let cap = capture_from(layers, 4);
    let mean = rollout(&cap, HeadMerge::Mean, (9, 9)).unwrap();
    let min = rollout(&cap, HeadMerge::Min, (9, 9)).unwrap();
    assert_close(mean.grid.data(), &to_f64(&min.grid), 1e-6);
}

#[test]
fn two_layer_rollout_matches_explicit_product() {
    let mut rng = Rng::new(11);
    let t = 10;
    let layers: Vec<Vec<Tensor>> = (0..2)
        .map(|_| (0..2).map(|_| random_stochastic(&mut rng, t)).collect())
        .collect();
    let cap = capture_from(layers.clone(), 4);
    let map = rollout(&cap, HeadMerge::Mean, (6, 6)).unwrap();

    let merged: Vec<Vec<f64>> = layers
        .iter()
        .map(|heads| {
            let (a, b) = (to_f64(&heads[0]), to_f64(&heads[1]));
            let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect();
            residual_f64(&m, t)
        })
        .collect();
    // Class-token row of Ā2·Ā1: row 0 of Ā2 times Ā1.
    let row: Vec<f64> = (0..t)
        .map(|j| (0..t).map(|k| merged[1][k] * merged[0][k * t + j]).sum())
        .collect();
    assert_close(map.grid.data(), &normalized_patch_row(&row), 1e-5);
}

#[test]
fn tmme_zero_gradients_give_zero_map() {
    let mut rng = Rng::new(2);
    let t = 17;
    let layers: Vec<Vec<Tensor>> = (0..2)
        .map(|_| vec![random_stochastic(&mut rng, t); 2])
        .collect();
    let zeros: Vec<Vec<Tensor>> = (0..2).map(|_| vec![Tensor::zeros(&[t, t]); 2]).collect();
    let cap = capture_from(layers, 4);
    let g = grads_from(zeros, Tensor::zeros(&[t - 1, 4]), 1);
    let map = tmme(&cap, &g, HeadMerge::Mean, 1, (8, 8)).unwrap();
    assert!(map.is_zero());
    assert!(map.image.data().iter().all(|&v| v == 0.0));
}

#[test]
fn tmme_with_unit_gradients_is_rollout() {
    let mut rng = Rng::new(8);
    let t = 17;
    for merge in [HeadMerge::Mean, HeadMerge::Min] {
        let layers: Vec<Vec<Tensor>> = (0..3)
            .map(|_| (0..2).map(|_| random_stochastic(&mut rng, t)).collect())
            .collect();
        let ones: Vec<Vec<Tensor>> = (0..3)
            .map(|_| vec![Tensor::full(&[t, t], 1.0); 2])
            .collect();
        let cap = capture_from(layers, 4);
        let g = grads_from(ones, Tensor::zeros(&[t - 1, 4]), 0);
        let a = tmme(&cap, &g, merge, 0, (8, 8)).unwrap();
        let b = rollout(&cap, merge, (8, 8)).unwrap();
        assert_close(a.grid.data(), &to_f64(&b.grid), 1e-6);
        assert_close(a.image.data(), &to_f64(&b.image), 1e-6);
    }
}

#[test]
fn tmme_single_layer_closed_form() {
    let mut rng = Rng::new(21);
    let t = 10;
    let a = random_stochastic(&mut rng, t);
    let g = rng.normal_tensor(&[t, t], 1.0);
    let cap = capture_from(vec![vec![a.clone()]], 4);
    let grads = grads_from(vec![vec![g.clone()]], Tensor::zeros(&[t - 1, 4]), 2);
    let map = tmme(&cap, &grads, HeadMerge::Mean, 2, (6, 6)).unwrap();

    let relu: Vec<f64> = to_f64(&a)
        .iter()
        .zip(to_f64(&g))
        .map(|(x, y)| (x * y).max(0.0))
        .collect();
    let abar = residual_f64(&relu, t);
    assert_close(map.grid.data(), &normalized_patch_row(&abar[..t]), 1e-6);
}

#[test]
fn tmme_rejects_class_mismatch() {
    let t = 5;
    let cap = capture_from(vec![vec![Tensor::identity(t)]], 2);
    let g = grads_from(
        vec![vec![Tensor::zeros(&[t, t])]],
        Tensor::zeros(&[t - 1, 2]),
        1,
    );
    assert!(matches!(
        tmme(&cap, &g, HeadMerge::Mean, 0, (4, 4)),
        Err(Error::Argument(_))
    ));
    assert!(matches!(
        gradcam(&cap, &g, 0, (4, 4)),
        Err(Error::Argument(_))
    ));
}

#[test]
fn normalisation_ignores_positive_rescaling() {
    let mut rng = Rng::new(13);
    let raw = rng.uniform_tensor(&[4, 4], 0.0, 3.0);
    let a =
        SaliencyMap::from_grid(&raw, (16, 16), MapMethod::Rollout(HeadMerge::Mean), None).unwrap();
    let b = SaliencyMap::from_grid(
        &raw.scale(37.5),
        (16, 16),
        MapMethod::Rollout(HeadMerge::Mean),
        None,
    )
    .unwrap();
    assert_close(a.grid.data(), &to_f64(&b.grid), 1e-6);
    assert_close(a.image.data(), &to_f64(&b.image), 1e-6);
}

#[test]
fn grid_and_image_argmax_coincide() {
    let mut rng = Rng::new(14);
    let t = 17;
    for _ in 0..20 {
        let a = random_stochastic(&mut rng, t);
        let g = rng.uniform_tensor(&[t, t], 0.0, 1.0);
        let cap = capture_from(vec![vec![a]], 4);
        let grads = grads_from(vec![vec![g]], Tensor::zeros(&[t - 1, 4]), 0);
        // 7 pixels over 4 grid points puts every grid point on a pixel.
        let map = tmme(&cap, &grads, HeadMerge::Mean, 0, (7, 7)).unwrap();
        let (gy, gx) = (map.grid.argmax() / 4, map.grid.argmax() % 4);
        assert_eq!(map.image.at(2 * gy, 2 * gx), 1.0);
    }
}

#[test]
fn gradcam_zero_gradients_give_zero_map() {
    let mut rng = Rng::new(1);
    let t = 17;
    let cap = AttentionCapture::from_parts(
        vec![vec![Tensor::identity(t)]],
        rng.normal_tensor(&[t - 1, 6], 1.0),
        vec![0.5],
    );
    let g = grads_from(
        vec![vec![Tensor::zeros(&[t, t])]],
        Tensor::zeros(&[t - 1, 6]),
        0,
    );
    assert!(gradcam(&cap, &g, 0, (8, 8)).unwrap().is_zero());
}

#[test]
fn gradcam_single_channel_reduces_to_that_channel() {
    let t = 17;
    let mut f = Tensor::zeros(&[t - 1, 3]);
    let values: Vec<f32> = (0..t - 1).map(|i| i as f32 - 5.0).collect();
    for (i, v) in values.iter().enumerate() {
        f.set(i, 1, *v);
    }
    let gf = Tensor::full(&[t - 1, 3], 0.25);
    let cap = AttentionCapture::from_parts(vec![vec![Tensor::identity(t)]], f, vec![0.5]);
    let map = gradcam(
        &cap,
        &grads_from(vec![vec![Tensor::zeros(&[t, t])]], gf, 0),
        0,
        (8, 8),
    )
    .unwrap();
    let max = values.iter().cloned().fold(f32::MIN, f32::max);
    let expected: Vec<f64> = values.iter().map(|&v| (v.max(0.0) / max) as f64).collect();
    assert_close(map.grid.data(), &expected, 1e-6);
}

#[test]
fn gradcam_matches_naive_loop() {
    let mut rng = Rng::new(40);
    let (t, d) = (26, 7);
    let f = rng.normal_tensor(&[t - 1, d], 1.0);
    let gf = rng.normal_tensor(&[t - 1, d], 1.0);
    let cap = AttentionCapture::from_parts(vec![vec![Tensor::identity(t)]], f.clone(), vec![0.5]);
    let map = gradcam(
        &cap,
        &grads_from(vec![vec![Tensor::zeros(&[t, t])]], gf.clone(), 3),
        3,
        (10, 10),
    )
    .unwrap();
    let mut scores = vec![0.0f64; t - 1];
    for (tok, s) in scores.iter_mut().enumerate() {
        for k in 0..d {
            let mut alpha = 0.0;
            for p in 0..t - 1 {
                alpha += gf.at(p, k) as f64;
            }
            *s += alpha / (t - 1) as f64 * f.at(tok, k) as f64;
        }
        *s = s.max(0.0);
    }
    let max = scores.iter().cloned().fold(0.0, f64::max);
    let expected: Vec<f64> = scores.iter().map(|s| s / max).collect();
    assert_close(map.grid.data(), &expected, 1e-6);
}

#[test]
fn model_maps_are_normalised_and_aligned() {
    let net = VisionTransformer::init(VitConfig::default(), &mut Rng::new(3)).unwrap();
    let img = Rng::new(4).uniform_tensor(&[64, 64], 0.0, 1.0);
    for method in [
        MapMethod::Rollout(HeadMerge::Mean),
        MapMethod::Rollout(HeadMerge::Min),
        MapMethod::Tmme(HeadMerge::Mean),
        MapMethod::GradCam,
    ] {
        let map = explain(&net, &img, 1, method).unwrap();
        assert_eq!(map.method, method);
        assert_eq!(map.grid.shape(), &[8, 8]);
        assert_eq!(map.image.shape(), &[64, 64]);
        for view in [&map.grid, &map.image] {
            assert!(view.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(view.max() == 1.0 || view.max() == 0.0);
        }
    }
    assert!(explain(&net, &img, 1, MapMethod::Random).is_err());
}

#[test]
fn artificial_full_and_empty_masks() {
    let full = artificial_map(&Tensor::full(&[32, 32], 1.0), 4).unwrap();
    assert!(full.image.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    assert!(full.grid.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    let empty = artificial_map(&Tensor::zeros(&[32, 32]), 4).unwrap();
    assert!(empty.is_zero());
}

#[test]
fn artificial_peak_lies_in_square() {
    let n = 64;
    let mask = Tensor::from_fn(n, n, |y, x| {
        if (24..40).contains(&y) && (24..40).contains(&x) {
            1.0
        } else {
            0.0
        }
    });
    let map = artificial_map(&mask, 8).unwrap();
    let blurred = atnb_oracles::images::gaussian_blur_direct(
        &to_f64(&mask),
        n,
        n,
        ARTIFICIAL_BLUR_FRACTION * n as f64,
    );
    let oracle_peak = blurred
        .iter()
        .enumerate()
        .fold(
            (0, f64::MIN),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        )
        .0;
    for peak in [map.image.argmax(), oracle_peak] {
        assert_eq!(mask.data()[peak], 1.0);
    }
}

#[test]
fn random_maps_are_seeded_and_normalised() {
    let a = random_map(&mut Rng::new(9), (64, 64), DEFAULT_OCTAVES, 8).unwrap();
    let b = random_map(&mut Rng::new(9), (64, 64), DEFAULT_OCTAVES, 8).unwrap();
    let c = random_map(&mut Rng::new(10), (64, 64), DEFAULT_OCTAVES, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.image.max(), 1.0);
    assert!(a.image.min() >= 0.0);
    assert!(random_map(&mut Rng::new(9), (64, 64), 0, 8).is_err());
}

#[test]
fn method_tags_round_trip() {
    for m in [
        MapMethod::Rollout(HeadMerge::Min),
        MapMethod::Tmme(HeadMerge::Mean),
        MapMethod::GradCam,
        MapMethod::Artificial,
        MapMethod::Random,
        MapMethod::External,
    ] {
        assert_eq!(m.to_string().parse::<MapMethod>().unwrap(), m);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<MapMethod>(&json).unwrap(), m);
    }
    assert_eq!(
        "tmme".parse::<MapMethod>().unwrap(),
        MapMethod::Tmme(HeadMerge::Mean)
    );
    assert!("lrp".parse::<MapMethod>().is_err());
}

#[test]
fn maps_persist_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let map = random_map(&mut Rng::new(1), (32, 32), 2, 4).unwrap();
    let stem = dir.path().join("case-3");
    save_map(&stem, &map, Some(1), Some("case-3")).unwrap();
    let (back, sidecar) = load_map(&stem, 4).unwrap();
    assert_eq!(back, map);
    let sidecar = sidecar.unwrap();
    assert_eq!(sidecar.method, MapMethod::Random);
    assert_eq!(sidecar.seed, Some(1));
    assert_eq!(sidecar.source.as_deref(), Some("case-3"));

    let bare = dir.path().join("bare.atnb");
    crate::atnb::write(&bare, &map.image).unwrap();
    let (ext, none) = load_map(&bare, 4).unwrap();
    assert!(none.is_none());
    assert_eq!(ext.method, MapMethod::External);
}
