use std::fs;
use std::path::Path;

use atnb_cli::run;
use atnb_core::dataio::{load_manifest, write_pgm, Split};
use atnb_core::saliency::{artificial_map, save_map};
use atnb_core::stats::LabeledScores;
use atnb_core::synthetic::write_synthetic_manifest;
use atnb_core::{Rng, Tensor};
use atnb_oracles::metrics::ehr_pixel_count;
use atnb_oracles::stats::{delong_quadratic, pairwise_auc};
use serde_json::Value;

fn atnb(args: &[&str]) -> i32 {
    run(std::iter::once("atnb").chain(args.iter().copied()))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Config with 32-pixel inputs so model-based commands stay quick.
fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(
        &path,
        r#"{"model":{"image_size":32,"patch_size":8,"layers":2,"heads":2,"embed_dim":16,"mlp_dim":32,"num_classes":5},"resamples":200}"#,
    )
    .unwrap();
    path
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    assert_eq!(atnb(&["frobnicate"]), 2);
    assert_eq!(atnb(&["ehr", "--bogus", "x", "--out-dir", out]), 2);
    assert_eq!(atnb(&["ehr", "--map", "m.atnb", "--out-dir", out]), 2);
    assert_eq!(
        atnb(&["roc", "--scores", "x.json", "--jobs", "0", "--out-dir", out]),
        2
    );
    assert_eq!(
        atnb(&[
            "perturb",
            "--image",
            "a.pgm",
            "--manifest",
            "m.jsonl",
            "--out-dir",
            out
        ]),
        2
    );
    assert_eq!(atnb(&["--help"]), 0);
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    let missing = dir.path().join("missing.json");
    assert_eq!(atnb(&["roc", "--scores", s(&missing), "--out-dir", out]), 1);
    let bad_config = dir.path().join("bad.json");
    fs::write(&bad_config, r#"{"colour": 3}"#).unwrap();
    let scores = dir.path().join("scores.json");
    fs::write(&scores, r#"{"scores":[0.1,0.9],"labels":[false,true]}"#).unwrap();
    assert_eq!(
        atnb(&[
            "roc",
            "--scores",
            s(&scores),
            "--config",
            s(&bad_config),
            "--out-dir",
            out
        ]),
        1
    );
    let one_class = dir.path().join("one.json");
    fs::write(&one_class, r#"{"scores":[0.1,0.9],"labels":[true,true]}"#).unwrap();
    assert_eq!(
        atnb(&["roc", "--scores", s(&one_class), "--out-dir", out]),
        1
    );
}

#[test]
fn ehr_writes_a_hundred_point_curve_matching_the_pixel_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut mask = Tensor::zeros(&[64, 64]);
    for y in 20..36 {
        for x in 10..30 {
            mask.data_mut()[y * 64 + x] = 1.0;
        }
    }
    let map = artificial_map(&mask, 8).unwrap();
    save_map(&dir.path().join("m"), &map, None, None).unwrap();
    write_pgm(&mask, &dir.path().join("gt.pgm")).unwrap();
    let out = dir.path().join("out");
    let code = atnb(&[
        "ehr",
        "--map",
        s(&dir.path().join("m.atnb")),
        "--mask",
        s(&dir.path().join("gt.pgm")),
        "--steps",
        "100",
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(code, 0);
    let v = read_json(&out.join("ehr.json"));
    assert_eq!(v["command"], "ehr");
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    let r = &v["result"];
    let ys: Vec<f64> = r["ys"]
        .as_array()
        .unwrap()
        .iter()
        .map(|y| y.as_f64().unwrap())
        .collect();
    assert_eq!(ys.len(), 100);
    assert_eq!(r["xs"].as_array().unwrap().len(), 100);
    let pixels: Vec<f64> = map.image.data().iter().map(|&v| v as f64).collect();
    let gt: Vec<bool> = mask.data().iter().map(|&v| v > 0.0).collect();
    let (_, oracle) = ehr_pixel_count(&pixels, &gt, 100);
    for (a, b) in ys.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    assert!(r["auc"].as_f64().unwrap() > 0.8);
    assert_eq!(
        fs::read_to_string(out.join("ehr.csv"))
            .unwrap()
            .lines()
            .count(),
        101
    );
}

#[test]
fn delong_matches_the_quadratic_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let labels = vec![
        true, true, true, true, true, false, false, false, false, false, false,
    ];
    let a = vec![0.9, 0.8, 0.35, 0.7, 0.55, 0.2, 0.4, 0.35, 0.1, 0.6, 0.3];
    let b = vec![0.7, 0.9, 0.6, 0.3, 0.8, 0.5, 0.2, 0.45, 0.3, 0.1, 0.6];
    for (name, scores) in [("a.json", &a), ("b.json", &b)] {
        let data = LabeledScores::new(scores.clone(), labels.clone()).unwrap();
        fs::write(dir.path().join(name), serde_json::to_string(&data).unwrap()).unwrap();
    }
    let out = dir.path().join("out");
    let code = atnb(&[
        "delong",
        "--a",
        s(&dir.path().join("a.json")),
        "--b",
        s(&dir.path().join("b.json")),
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(code, 0);
    let r = read_json(&out.join("delong.json"))["result"].clone();
    let oracle = delong_quadratic(&a, &b, &labels);
    let get = |k: &str| r[k].as_f64().unwrap();
    assert!((get("auc_a") - pairwise_auc(&a, &labels)).abs() < 1e-12);
    assert!((get("auc_b") - pairwise_auc(&b, &labels)).abs() < 1e-12);
    for (k, want) in [
        ("var_a", oracle.var_a),
        ("var_b", oracle.var_b),
        ("covariance", oracle.covariance),
        ("variance", oracle.variance),
        ("z", oracle.z),
    ] {
        assert!((get(k) - want).abs() < 1e-10, "{k}: {} vs {want}", get(k));
    }
}

#[test]
fn roc_is_seed_deterministic_and_independent_of_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::new(4);
    let labels: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
    let scores: Vec<f64> = labels
        .iter()
        .map(|&l| rng.uniform() + if l { 0.4 } else { 0.0 })
        .collect();
    let path = dir.path().join("scores.json");
    fs::write(
        &path,
        serde_json::to_string(&LabeledScores::new(scores.clone(), labels.clone()).unwrap())
            .unwrap(),
    )
    .unwrap();
    let run_in = |out: &str, jobs: &str| {
        let out = dir.path().join(out);
        let code = atnb(&[
            "roc",
            "--scores",
            s(&path),
            "--seed",
            "3",
            "--jobs",
            jobs,
            "--out-dir",
            s(&out),
        ]);
        assert_eq!(code, 0);
        fs::read(out.join("roc.json")).unwrap()
    };
    let one = run_in("a", "1");
    assert_eq!(one, run_in("b", "2"));
    let v: Value = serde_json::from_slice(&one).unwrap();
    let auc = &v["result"]["auc"];
    assert!((auc["estimate"].as_f64().unwrap() - pairwise_auc(&scores, &labels)).abs() < 1e-12);
    assert_eq!(auc["n"], 40);
    assert_eq!(auc["seed"], 3);
    assert!(auc["ci_lo"].as_f64().unwrap() <= auc["ci_hi"].as_f64().unwrap());
}

#[test]
fn saliency_and_perturbation_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    write_synthetic_manifest(&dir.path().join("data"), 3, 32, 1, Split::Test).unwrap();
    let manifest = dir.path().join("data/manifest.jsonl");
    let out = dir.path().join("out");
    let common = ["--config", s(&config), "--seed", "5", "--out-dir", s(&out)];
    let with = |extra: &[&str]| -> i32 {
        let mut args = extra.to_vec();
        args.extend(common);
        atnb(&args)
    };

    assert_eq!(
        with(&[
            "gen-saliency",
            "--manifest",
            s(&manifest),
            "--method",
            "gradcam"
        ]),
        0
    );
    let maps = read_json(&out.join("gen-saliency.json"));
    assert_eq!(maps["result"]["maps"].as_array().unwrap().len(), 3);
    assert!(out.join("maps/case-000.gradcam.atnb").exists());
    assert!(out.join("maps/case-000.gradcam.grid.atnb").exists());

    assert_eq!(
        with(&[
            "perturb",
            "--manifest",
            s(&manifest),
            "--method",
            "tmme-mean",
            "--jobs",
            "1"
        ]),
        0
    );
    let first = fs::read(out.join("perturb.json")).unwrap();
    assert_eq!(
        with(&[
            "perturb",
            "--manifest",
            s(&manifest),
            "--method",
            "tmme-mean",
            "--jobs",
            "3"
        ]),
        0
    );
    assert_eq!(first, fs::read(out.join("perturb.json")).unwrap());
    let v: Value = serde_json::from_slice(&first).unwrap();
    let cases = v["result"]["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 3);
    let report = &cases[0]["reports"][0];
    assert_eq!(report["metric"], "perturbation-positive");
    let xs = report["xs"].as_array().unwrap();
    assert_eq!(xs.len(), 16 + 1);
    assert_eq!(xs[0], 0.0);
    assert_eq!(xs[16], 1.0);

    let image = dir.path().join("data/case-000.pgm");
    let map = out.join("maps/case-000.gradcam.atnb");
    assert_eq!(
        with(&[
            "perturb",
            "--image",
            s(&image),
            "--map",
            s(&map),
            "--direction",
            "negative"
        ]),
        0
    );
    let v = read_json(&out.join("perturb.json"));
    assert_eq!(
        v["result"]["cases"][0]["reports"][0]["metric"],
        "perturbation-negative"
    );
    assert_eq!(
        with(&["perturb", "--manifest", s(&manifest), "--map", s(&map)]),
        2
    );

    assert_eq!(
        with(&[
            "sensitivity-n",
            "--image",
            s(&image),
            "--method",
            "gradcam",
            "--masks",
            "8"
        ]),
        0
    );
    let v = read_json(&out.join("sensitivity-n.json"));
    let xs = v["result"]["cases"][0]["reports"][0]["xs"]
        .as_array()
        .unwrap()
        .clone();
    assert_eq!(xs.first().unwrap().as_f64(), Some(1.0));
    assert_eq!(xs.last().unwrap().as_f64(), Some(8.0));

    let maps_dir = out.join("maps");
    assert_eq!(
        with(&["agreement", "--a", s(&maps_dir), "--b", s(&maps_dir)]),
        0
    );
    let v = read_json(&out.join("agreement.json"));
    assert_eq!(v["result"]["mean"].as_f64().unwrap(), 1.0);

    assert_eq!(with(&["export-plots"]), 0);
    let index = read_json(&out.join("plots/index.json"));
    let entries = index.as_array().unwrap();
    assert!(entries.iter().any(|e| e["source"] == "perturb.json"));
    assert!(entries.iter().any(|e| e["metric"] == "sensitivity-n"));
    for e in entries {
        assert!(out.join("plots").join(e["csv"].as_str().unwrap()).exists());
    }
}

#[test]
fn calibrate_applies_bins_to_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    write_synthetic_manifest(&dir.path().join("val"), 6, 32, 2, Split::Val).unwrap();
    write_synthetic_manifest(&dir.path().join("test"), 5, 32, 3, Split::Test).unwrap();
    let out = dir.path().join("out");
    let code = atnb(&[
        "calibrate",
        "--validation",
        s(&dir.path().join("val/manifest.jsonl")),
        "--apply",
        s(&dir.path().join("test/manifest.jsonl")),
        "--bins",
        "4",
        "--config",
        s(&config),
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(code, 0);
    let m = load_manifest(&out.join("calibrated.jsonl")).unwrap();
    assert_eq!(m.cases.len(), 5);
    for c in &m.cases {
        let cal = c.calibrated.unwrap();
        assert!((0.0..=1.0).contains(&cal));
        assert!(c.confidence.is_some());
    }
    let v = read_json(&out.join("calibrate.json"));
    assert_eq!(
        v["result"]["calibrator"]["rates"].as_array().unwrap().len(),
        4
    );
}

#[test]
fn config_hash_tracks_arguments_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.json");
    fs::write(
        &path,
        r#"{"scores":[0.1,0.4,0.35,0.8],"labels":[false,false,true,true]}"#,
    )
    .unwrap();
    let hash = |seed: &str, resamples: &str| {
        let out = dir.path().join(format!("o{seed}{resamples}"));
        let code = atnb(&[
            "roc",
            "--scores",
            s(&path),
            "--seed",
            seed,
            "--resamples",
            resamples,
            "--out-dir",
            s(&out),
        ]);
        assert_eq!(code, 0);
        let v = read_json(&out.join("roc.json"));
        assert_eq!(v["result"]["auc"]["estimate"], 0.75);
        v["config_hash"].as_str().unwrap().to_string()
    };
    let base = hash("1", "100");
    assert_eq!(base, hash("1", "100"));
    assert_ne!(base, hash("2", "100"));
    assert_ne!(base, hash("1", "200"));
}
