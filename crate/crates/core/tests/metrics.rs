mod support;

use atnb_core::metrics::{
    effective_heat_ratio, map_agreement, n_grid, perturbation_test, perturbation_test_with,
    sensitivity_n, ssim, Classifier, PerturbDirection, Ranking,
};
use atnb_core::saliency::{artificial_map, random_map, DEFAULT_OCTAVES};
use atnb_core::{HeadMerge, MapMethod, Result, Rng, Tensor, VisionTransformer, VitConfig};
use atnb_oracles::metrics::{ehr_pixel_count, ssim_direct, trapezoid};

fn four_patch_net(seed: u64) -> VisionTransformer {
    let config = VitConfig {
        image_size: 16,
        patch_size: 8,
        layers: 2,
        heads: 2,
        embed_dim: 16,
        mlp_dim: 32,
        num_classes: 5,
    };
    let mut net = VisionTransformer::init(config, &mut Rng::new(seed)).unwrap();
    support::amplify(&mut net, 20.0);
    net
}

fn f64s(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

#[test]
fn four_patch_curve_matches_hand_unrolled_replacement() {
    let net = four_patch_net(3);
    let reference_net = support::reference(&net);
    let image = Rng::new(1).uniform_tensor(&[16, 16], 0.0, 1.0);
    let reference = Rng::new(2).uniform_tensor(&[16, 16], 0.0, 1.0);
    let grid = Tensor::new(vec![2, 2], vec![0.3, 0.9, 0.1, 0.5]).unwrap();
    let class = 2;

    for (direction, order) in [
        (PerturbDirection::Positive, [1usize, 3, 0, 2]),
        (PerturbDirection::Negative, [2usize, 0, 3, 1]),
    ] {
        let got = perturbation_test(
            &net,
            &image,
            class,
            Ranking::Fixed(&grid),
            direction,
            &reference,
            false,
        )
        .unwrap();
        assert_eq!(got.order, order);
        assert_eq!(got.curve.xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);

        let mut current = f64s(&image);
        let refd = f64s(&reference);
        let mut expected = vec![reference_net.confidences(&current)[class]];
        for &t in &order {
            let (py, px) = (t / 2 * 8, t % 2 * 8);
            for y in py..py + 8 {
                for x in px..px + 8 {
                    current[y * 16 + x] = refd[y * 16 + x];
                }
            }
            expected.push(reference_net.confidences(&current)[class]);
        }
        for (a, b) in got.curve.ys.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
        assert!((got.curve.auc - trapezoid(&got.curve.xs, &got.curve.ys)).abs() < 1e-12);
    }
}

#[test]
fn constant_map_gives_identical_directions() {
    let net = four_patch_net(5);
    let image = Rng::new(3).uniform_tensor(&[16, 16], 0.0, 1.0);
    let reference = Tensor::zeros(&[16, 16]);
    let grid = Tensor::full(&[2, 2], 0.4);
    let pos = perturbation_test(
        &net,
        &image,
        0,
        Ranking::Fixed(&grid),
        PerturbDirection::Positive,
        &reference,
        false,
    )
    .unwrap();
    let neg = perturbation_test(
        &net,
        &image,
        0,
        Ranking::Fixed(&grid),
        PerturbDirection::Negative,
        &reference,
        false,
    )
    .unwrap();
    assert_eq!(pos, neg);
    assert_eq!(pos.order, vec![0, 1, 2, 3]);
}

#[test]
fn full_replacement_converges_to_reference_confidence() {
    let net = VisionTransformer::init(
        VitConfig {
            image_size: 32,
            ..VitConfig::default()
        },
        &mut Rng::new(8),
    )
    .unwrap();
    let pool: Vec<Tensor> = (0..4)
        .map(|i| Rng::new(i).uniform_tensor(&[32, 32], 0.0, 1.0))
        .collect();
    let image = Rng::new(99).uniform_tensor(&[32, 32], 0.0, 1.0);
    for class in [0, 4] {
        let r = net.select_reference(&pool, class).unwrap();
        for method in [MapMethod::Tmme(HeadMerge::Mean), MapMethod::GradCam] {
            for direction in [PerturbDirection::Positive, PerturbDirection::Negative] {
                let p = perturbation_test(
                    &net,
                    &image,
                    class,
                    Ranking::Model(method),
                    direction,
                    &pool[r],
                    true,
                )
                .unwrap();
                assert_eq!(
                    *p.curve.ys.last().unwrap(),
                    net.confidence(&pool[r], class).unwrap() as f64
                );
                let mut seen = p.order.clone();
                seen.sort_unstable();
                assert_eq!(seen, (0..16).collect::<Vec<_>>());
            }
        }
    }
}

#[test]
fn perturbation_rejects_mismatched_reference() {
    let net = four_patch_net(1);
    let image = Tensor::zeros(&[16, 16]);
    let grid = Tensor::zeros(&[2, 2]);
    let r = perturbation_test(
        &net,
        &image,
        0,
        Ranking::Fixed(&grid),
        PerturbDirection::Positive,
        &Tensor::zeros(&[8, 8]),
        false,
    );
    assert!(matches!(r, Err(atnb_core::Error::Argument(_))));
}

/// Confidence is a fixed weighted sum of patch means.
struct LinearSurrogate {
    weights: Vec<f64>,
    patch: usize,
}

impl Classifier for LinearSurrogate {
    fn patch_size(&self) -> usize {
        self.patch
    }

    fn confidence(&self, image: &Tensor, _class: usize) -> Result<f32> {
        let (h, _) = image.dims2()?;
        let g = h / self.patch;
        let mut y = 0.0;
        for (t, w) in self.weights.iter().enumerate() {
            let (py, px) = (t / g * self.patch, t % g * self.patch);
            let mut s = 0.0;
            for yy in py..py + self.patch {
                for xx in px..px + self.patch {
                    s += image.at(yy, xx) as f64;
                }
            }
            y += w * s / (self.patch * self.patch) as f64;
        }
        Ok(y as f32)
    }
}

#[test]
fn linear_surrogate_gives_unit_correlation() {
    let mut rng = Rng::new(17);
    let weights: Vec<f64> = (0..64).map(|_| 0.05 + rng.uniform() * 0.2).collect();
    let model = LinearSurrogate {
        weights: weights.clone(),
        patch: 8,
    };
    let image = Tensor::full(&[64, 64], 1.0);
    let reference = Tensor::zeros(&[64, 64]);
    let grid = Tensor::new(vec![8, 8], weights.iter().map(|&w| w as f32).collect()).unwrap();
    let neg = grid.scale(-1.0);
    for (map, target) in [(&grid, 1.0), (&neg, -1.0)] {
        let curve = sensitivity_n(
            &model,
            &image,
            0,
            map,
            &reference,
            200,
            10,
            &mut Rng::new(5),
        )
        .unwrap();
        assert_eq!(
            curve.xs,
            n_grid(64, 10)
                .unwrap()
                .iter()
                .map(|&n| n as f64)
                .collect::<Vec<_>>()
        );
        for (n, r) in curve.xs.iter().zip(&curve.ys) {
            assert!((r - target).abs() < 1e-6, "n={n}: {r}");
        }
        assert!(!curve.normalized);
    }
}

#[test]
fn ehr_hand_case_matches_pixel_count() {
    let mut map = Tensor::zeros(&[4, 4]);
    for (y, x, v) in [(1, 1, 1.0), (1, 2, 0.75), (2, 1, 0.5), (2, 2, 0.25)] {
        map.set(y, x, v);
    }
    let gt = Tensor::from_fn(4, 4, |y, x| {
        if (1..3).contains(&y) && (2..4).contains(&x) {
            1.0
        } else {
            0.0
        }
    });
    let curve = effective_heat_ratio(&map, &gt, 8).unwrap();
    let gtb: Vec<bool> = gt.data().iter().map(|&v| v > 0.5).collect();
    let (xs, ys) = ehr_pixel_count(&f64s(&map), &gtb, 8);
    assert_eq!(curve.xs, xs);
    assert_eq!(curve.ys, ys);
    // Hand count: t ≤ 0.25 → 2/4, t ≤ 0.5 → 1/3, t ≤ 0.75 → 1/2, t = 1 → 0/1.
    assert_eq!(ys, vec![0.5, 0.5, 1.0 / 3.0, 1.0 / 3.0, 0.5, 0.5, 0.0, 0.0]);
    assert!((curve.auc - trapezoid(&xs, &ys) / (1.0 - 1.0 / 8.0)).abs() < 1e-15);
}

#[test]
fn ehr_matches_pixel_count_on_random_maps() {
    let mut rng = Rng::new(2);
    for _ in 0..20 {
        let map = rng.uniform_tensor(&[12, 12], 0.0, 1.0).normalize_max();
        let gt = rng
            .uniform_tensor(&[12, 12], 0.0, 1.0)
            .map(|v| if v > 0.7 { 1.0 } else { 0.0 });
        let curve = effective_heat_ratio(&map, &gt, 100).unwrap();
        let gtb: Vec<bool> = gt.data().iter().map(|&v| v > 0.5).collect();
        let (_, ys) = ehr_pixel_count(&f64s(&map), &gtb, 100);
        assert_eq!(curve.ys, ys);
        assert!(curve.ys.iter().all(|y| (0.0..=1.0).contains(y)));
    }
}

#[test]
fn random_maps_have_area_fraction_ehr() {
    let gt = Tensor::from_fn(64, 64, |y, x| {
        if (27..37).contains(&y) && (12..53).contains(&x) {
            1.0
        } else {
            0.0
        }
    });
    assert_eq!(gt.sum(), 410.0);
    let mut total = 0.0;
    for seed in 0..100 {
        let map = random_map(&mut Rng::new(seed), (64, 64), DEFAULT_OCTAVES, 8).unwrap();
        total += effective_heat_ratio(&map.image, &gt, 100).unwrap().auc;
    }
    let mean = total / 100.0;
    assert!((mean - 0.10).abs() <= 0.03, "mean EHR {mean}");
}

#[test]
fn artificial_maps_score_high_ehr() {
    let gt = Tensor::from_fn(64, 64, |y, x| {
        if (10..30).contains(&y) && (8..24).contains(&x) {
            1.0
        } else {
            0.0
        }
    });
    let map = artificial_map(&gt, 8).unwrap();
    assert!(effective_heat_ratio(&map.image, &gt, 100).unwrap().auc > 0.8);
}

#[test]
fn ssim_matches_direct_windows() {
    let mut rng = Rng::new(12);
    for _ in 0..5 {
        let a = rng.uniform_tensor(&[20, 17], 0.0, 1.0);
        let b = a
            .add(&rng.normal_tensor(&[20, 17], 0.1))
            .unwrap()
            .map(|v| v.clamp(0.0, 1.0));
        let fast = ssim(&a, &b).unwrap();
        let slow = ssim_direct(&f64s(&a), &f64s(&b), 20, 17);
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
        assert!((-1.0..=1.0).contains(&fast));
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() <= 1e-7);
        assert!((fast - ssim(&b, &a).unwrap()).abs() <= 1e-9);
    }
}

#[test]
fn ssim_of_constant_images() {
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    // Every window: means 0 and 1, zero variances.
    let closed = (c1 * c2) / ((1.0 + c1) * c2);
    let s = ssim(&Tensor::zeros(&[32, 32]), &Tensor::full(&[32, 32], 1.0)).unwrap();
    assert!((s - closed).abs() < 1e-12);
}

#[test]
fn agreement_of_identical_and_independent_maps() {
    let maps: Vec<_> = (0..10)
        .map(|s| random_map(&mut Rng::new(s), (64, 64), DEFAULT_OCTAVES, 8).unwrap())
        .collect();
    let same = map_agreement(&maps, &maps, 1000, 3).unwrap();
    assert_eq!(same.mean, 1.0);
    assert_eq!((same.ci.lo, same.ci.hi), (1.0, 1.0));

    let a: Vec<_> = (0..100)
        .map(|s| random_map(&mut Rng::stream(1, s), (64, 64), DEFAULT_OCTAVES, 8).unwrap())
        .collect();
    let b: Vec<_> = (0..100)
        .map(|s| random_map(&mut Rng::stream(2, s), (64, 64), DEFAULT_OCTAVES, 8).unwrap())
        .collect();
    let indep = map_agreement(&a, &b, 1000, 3).unwrap();
    assert!(
        indep.mean < 0.5,
        "independent maps agree too well: {}",
        indep.mean
    );
    assert!(map_agreement(&a, &b[..5], 1000, 3).is_err());
}

#[test]
fn perturbation_with_custom_classifier() {
    let model = LinearSurrogate {
        weights: vec![1.0, 0.0, 0.0, 0.0],
        patch: 2,
    };
    let image = Tensor::full(&[4, 4], 1.0);
    let reference = Tensor::zeros(&[4, 4]);
    let mut rank = |_: &Tensor| Ok(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap());
    let p = perturbation_test_with(
        &model,
        &image,
        0,
        &reference,
        PerturbDirection::Positive,
        false,
        &mut rank,
    )
    .unwrap();
    assert_eq!(p.curve.ys, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
}
