use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use intrinsic_core::data::{load_pfm, save_pfm};
use intrinsic_core::image::{compose, ImageF};
use intrinsic_core::metrics::si_mse_metric;
use serde_json::Value;

struct Work {
    dir: tempfile::TempDir,
}

impl Work {
    fn new() -> Self {
        Work {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn arg(&self, rel: &str) -> String {
        self.path(rel).to_string_lossy().into_owned()
    }

    /// Small generated dataset under `data/`.
    fn dataset(&self, kinds: &str) -> String {
        let out = self.arg("data");
        let o = intrinsic(&[
            "-q",
            "generate",
            "--kind",
            kinds,
            "--count",
            "3",
            "--seed",
            "1",
            "--width",
            "32",
            "--height",
            "32",
            "--judgement-pairs",
            "40",
            "--out-dir",
            &out,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        format!("{out}/manifest.json")
    }

    fn init(&self, name: &str, extra: &[&str]) -> String {
        let out = self.arg(name);
        let mut args = vec![
            "-q",
            "init",
            "--out",
            &out,
            "--levels",
            "2",
            "--base-channels",
            "4",
        ];
        args.extend_from_slice(extra);
        let o = intrinsic(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    }
}

fn intrinsic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intrinsic"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

#[test]
fn help_lists_defaults() {
    let o = intrinsic(&["train", "--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for needle in [
        "[default: 12000]",
        "[default: 0.5]",
        "[default: 64]",
        "[default: 0.0002]",
        "[default: 2000]",
    ] {
        assert!(text.contains(needle), "missing {needle}");
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&intrinsic(&[])), 1);
    assert_eq!(code(&intrinsic(&["decompose", "--input", "x.pfm"])), 1);
    assert_eq!(
        code(&intrinsic(&[
            "generate",
            "--out-dir",
            "x",
            "--kind",
            "photos"
        ])),
        1
    );
    let o = intrinsic(&[
        "decompose",
        "--input",
        "a.pfm",
        "--checkpoint",
        "b.ckpt",
        "--out-dir",
        "o",
        "--no-bilateral",
        "--gamma",
        "5",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_checkpoint_exits_2_without_output() {
    let w = Work::new();
    let input = w.path("in.pfm");
    save_pfm(&ImageF::filled(16, 16, 3, 0.5), &input).unwrap();
    let o = intrinsic(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--checkpoint",
        &w.arg("none.ckpt"),
        "--out-dir",
        &w.arg("out"),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).starts_with("error:"));
    assert!(!w.path("out").exists());
}

#[test]
fn corrupt_checkpoint_exits_2() {
    let w = Work::new();
    std::fs::write(w.path("bad.ckpt"), b"not a checkpoint").unwrap();
    let manifest = w.dataset("mondrian");
    let o = intrinsic(&[
        "eval",
        "--manifest",
        &manifest,
        "--checkpoint",
        &w.arg("bad.ckpt"),
        "--metrics",
        "simse",
        "--report",
        &w.arg("r.json"),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn odd_sizes_are_padded_and_cropped_back() {
    let w = Work::new();
    let ckpt = w.init("net.ckpt", &[]);
    let input = w.path("odd.pfm");
    save_pfm(&ImageF::filled(15, 10, 3, 0.5), &input).unwrap();
    let o = intrinsic(&[
        "-q",
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--checkpoint",
        &ckpt,
        "--out-dir",
        &w.arg("out"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = load_pfm(&w.path("out/reflectance.pfm")).unwrap();
    assert_eq!((r.width(), r.height()), (15, 10));
}

#[test]
fn non_binary_mask_exits_3() {
    let w = Work::new();
    let ckpt = w.init("net.ckpt", &[]);
    let img = w.path("img.pfm");
    let mask = w.path("mask.pfm");
    save_pfm(&ImageF::filled(16, 16, 3, 0.5), &img).unwrap();
    save_pfm(&ImageF::filled(16, 16, 1, 0.5), &mask).unwrap();
    let (img, mask) = (img.to_str().unwrap(), mask.to_str().unwrap());
    let o = intrinsic(&[
        "retexture",
        "--input",
        img,
        "--checkpoint",
        &ckpt,
        "--texture",
        img,
        "--mask",
        mask,
        "--out",
        &w.arg("o.pfm"),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(!w.path("o.pfm").exists());
}

#[test]
fn passthrough_reconstructs_the_input() {
    let w = Work::new();
    let ckpt = w.init("pass.ckpt", &["--passthrough"]);
    let manifest = w.dataset("mondrian");
    let input = format!(
        "{}/synthetic/syn0000_input.pfm",
        Path::new(&manifest).parent().unwrap().display()
    );
    let run = |out: &str, extra: &[&str]| {
        let out = w.arg(out);
        let mut args = vec![
            "-q",
            "decompose",
            "--input",
            &input,
            "--checkpoint",
            &ckpt,
            "--out-dir",
            &out,
        ];
        args.extend_from_slice(extra);
        let o = intrinsic(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let r = load_pfm(&Path::new(&out).join("reflectance.pfm")).unwrap();
        let s = load_pfm(&Path::new(&out).join("shading.pfm")).unwrap();
        assert!(Path::new(&out).join("reflectance.png").is_file());
        assert!(Path::new(&out).join("shading.png").is_file());
        (r, s)
    };
    let (r, s) = run("plain", &["--no-bilateral"]);
    let original = load_pfm(Path::new(&input)).unwrap();
    let err = si_mse_metric(&compose(&r, &s).unwrap(), &original).unwrap();
    let ms = original.data().iter().map(|v| v * v).sum::<f64>() / original.data().len() as f64;
    assert!(err / ms <= 1e-3, "normalized si-MSE {}", err / ms);
    let (filtered, _) = run("filtered", &[]);
    assert_ne!(filtered, r);
}

#[test]
fn generate_writes_requested_counts_deterministically() {
    let w = Work::new();
    let gen = |out: &str| {
        let o = intrinsic(&[
            "-q",
            "generate",
            "--kind",
            "pairs",
            "--count",
            "5",
            "--images-per-group",
            "4",
            "--width",
            "16",
            "--height",
            "16",
            "--seed",
            "2",
            "--out-dir",
            &w.arg(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        read_json(&w.path(out).join("manifest.json"))
    };
    let m = gen("a");
    let scenes = m["real_scenes"].as_array().unwrap();
    assert_eq!(scenes.len(), 5);
    assert!(scenes
        .iter()
        .all(|s| s["image_paths"].as_array().unwrap().len() == 4));
    assert_eq!(m, gen("b"));
    let rel = scenes[4]["image_paths"][3].as_str().unwrap();
    assert_eq!(
        std::fs::read(w.path("a").join(rel)).unwrap(),
        std::fs::read(w.path("b").join(rel)).unwrap()
    );
}

#[test]
fn train_rules_and_determinism() {
    let w = Work::new();
    let manifest = w.dataset("mondrian,pairs");
    let run = |out: &str, extra: &[&str]| {
        let out = w.arg(out);
        let mut args = vec![
            "-q",
            "train",
            "--manifest",
            &manifest,
            "--out",
            &out,
            "--crop",
            "16",
            "--stage1-iters",
            "3",
            "--stage2-iters",
            "2",
        ];
        args.extend_from_slice(extra);
        intrinsic(&args)
    };
    let train = |out: &str, extra: &[&str]| {
        let mut args = vec!["--levels", "2", "--base-channels", "4"];
        args.extend_from_slice(extra);
        run(out, &args)
    };
    assert_eq!(code(&train("s2.ckpt", &["--stage", "2"])), 1);
    assert_eq!(code(&train("bad.ckpt", &["--crop", "15"])), 1);
    let a = train("a.ckpt", &[]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(train("b.ckpt", &[]).status.success());
    assert_eq!(
        std::fs::read(w.path("a.ckpt")).unwrap(),
        std::fs::read(w.path("b.ckpt")).unwrap()
    );
    let log = std::fs::read_to_string(w.path("a.ckpt.log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 5);
    let resumed = run("c.ckpt", &["--stage", "2", "--init", &w.arg("a.ckpt")]);
    assert!(resumed.status.success(), "{}", stderr(&resumed));
}

#[test]
fn train_without_real_scenes_needs_opt_in() {
    let w = Work::new();
    let manifest = w.dataset("mondrian");
    let (a, b) = (w.arg("a.ckpt"), w.arg("b.ckpt"));
    let run = |out: &str, extra: &[&str]| {
        let mut args = vec![
            "-q",
            "train",
            "--manifest",
            &manifest,
            "--out",
            out,
            "--levels",
            "2",
            "--base-channels",
            "4",
            "--crop",
            "16",
            "--stage1-iters",
            "2",
            "--stage2-iters",
            "2",
        ];
        args.extend_from_slice(extra);
        intrinsic(&args)
    };
    assert_eq!(code(&run(&a, &[])), 1);
    let o = run(&b, &["--allow-synthetic-only"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn eval_requires_the_needed_sections() {
    let w = Work::new();
    let manifest = w.dataset("mondrian");
    let ckpt = w.init("net.ckpt", &[]);
    let o = intrinsic(&[
        "eval",
        "--manifest",
        &manifest,
        "--checkpoint",
        &ckpt,
        "--metrics",
        "whdr",
        "--report",
        &w.arg("r.json"),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("judgement"), "{}", stderr(&o));
    let o = intrinsic(&[
        "-q",
        "eval",
        "--manifest",
        &manifest,
        "--checkpoint",
        &ckpt,
        "--metrics",
        "simse,silmse",
        "--report",
        &w.arg("r.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(&w.path("r.json"));
    assert_eq!(report["simse"]["per_scene"].as_object().unwrap().len(), 6);
    assert!(report.get("whdr").is_none());
}

#[test]
fn oracle_eval_scores_zero() {
    let w = Work::new();
    let manifest = w.dataset("mondrian,pairs,judgements");
    let o = intrinsic(&[
        "-q",
        "eval",
        "--manifest",
        &manifest,
        "--oracle",
        "--mpre-resize",
        "none",
        "--report",
        &w.arg("r.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(&w.path("r.json"));
    for m in ["whdr", "mpre", "simse", "silmse"] {
        assert!(report[m]["mean"].as_f64().unwrap() <= 1e-10, "{m}");
    }
}

#[test]
fn tune_picks_the_best_candidate() {
    let w = Work::new();
    let manifest = w.dataset("judgements");
    let ckpt = w.init("net.ckpt", &[]);
    std::fs::write(
        w.path("one.json"),
        r#"[{"gamma": 50.0, "backend": "dense"}]"#,
    )
    .unwrap();
    let o = intrinsic(&[
        "-q",
        "tune",
        "--manifest",
        &manifest,
        "--grid",
        &w.arg("one.json"),
        "--checkpoint",
        &ckpt,
        "--out",
        &w.arg("best1.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let best = read_json(&w.path("best1.json"));
    assert_eq!(best["gamma"], 50.0);
    assert_eq!(best["backend"], "dense");

    std::fs::write(
        w.path("grid.json"),
        r#"{"gamma": [0.0, 100.0, 12000.0], "sigma_l": [3.0, 7.0]}"#,
    )
    .unwrap();
    let o = intrinsic(&[
        "-q",
        "tune",
        "--manifest",
        &manifest,
        "--grid",
        &w.arg("grid.json"),
        "--checkpoint",
        &ckpt,
        "--out",
        &w.arg("best.json"),
        "--table",
        &w.arg("table.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = read_json(&w.path("table.json"));
    let rows = table.as_array().unwrap();
    assert_eq!(rows.len(), 6);
    let min = rows
        .iter()
        .map(|r| r["mean_whdr"].as_f64().unwrap())
        .fold(f64::INFINITY, f64::min);
    let winner = rows
        .iter()
        .find(|r| r["mean_whdr"].as_f64().unwrap() == min)
        .unwrap();
    assert_eq!(read_json(&w.path("best.json")), winner["params"]);

    std::fs::write(w.path("empty.json"), r#"{"gamma": []}"#).unwrap();
    let o = intrinsic(&[
        "tune",
        "--manifest",
        &manifest,
        "--grid",
        &w.arg("empty.json"),
        "--checkpoint",
        &ckpt,
        "--out",
        &w.arg("x.json"),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn retexture_with_full_mask_uses_the_texture() {
    let w = Work::new();
    let ckpt = w.init("net.ckpt", &[]);
    let input = w.path("in.pfm");
    let texture = w.path("tex.pfm");
    let mask = w.path("mask.pfm");
    save_pfm(
        &ImageF::from_fn(16, 16, 3, |x, y, _| 0.2 + 0.04 * (x + y) as f64 / 2.0),
        &input,
    )
    .unwrap();
    let tex = ImageF::from_fn(
        16,
        16,
        3,
        |x, _, c| if (x / 4 + c) % 2 == 0 { 0.8 } else { 0.3 },
    );
    save_pfm(&tex, &texture).unwrap();
    save_pfm(&ImageF::filled(16, 16, 1, 1.0), &mask).unwrap();
    let out = w.path("out.pfm");
    let o = intrinsic(&[
        "-q",
        "retexture",
        "--input",
        input.to_str().unwrap(),
        "--checkpoint",
        &ckpt,
        "--texture",
        texture.to_str().unwrap(),
        "--mask",
        mask.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--no-bilateral",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let result = load_pfm(&out).unwrap();
    assert_eq!(
        (result.width(), result.height(), result.channels()),
        (16, 16, 3)
    );
    assert!(result.is_finite());
    // with the whole image masked, every pixel is texture times shading, so
    // the ratio across channels follows the texture
    for y in 0..16 {
        for x in 0..16 {
            let ratio = result.get(x, y, 0) / result.get(x, y, 1);
            let expect = tex.get(x, y, 0) / tex.get(x, y, 1);
            assert!((ratio - expect).abs() <= 1e-4 * expect, "({x},{y})");
        }
    }
}
