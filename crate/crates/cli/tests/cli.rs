use std::path::Path;
use std::process::{Command, Output};

use waveshape::diffusion::rng::{normal_volume, StreamId, StreamTag};
use waveshape::io::{read_volume, write_volume};

fn waveshape(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_waveshape"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = waveshape(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn scenes(dir: &Path) {
    std::fs::write(dir.join("a.json"), r#"{"kind":"sphere","center":[0,0,0],"radius":0.5}"#).unwrap();
    std::fs::write(
        dir.join("b.json"),
        r#"{"kind":"capsule","a":[-0.4,0,0],"b":[0.4,0,0],"radius":0.3}"#,
    )
    .unwrap();
}

fn model(dir: &Path) {
    scenes(dir);
    ok(
        dir,
        &[
            "build-model",
            "--input",
            "a.json",
            "b.json",
            "--res",
            "32",
            "--out",
            "model",
        ],
    );
}

#[test]
fn decompose_reconstruct_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let v = normal_volume(StreamId::new(9, 0, 0, StreamTag::Misc), [20, 17, 24])
        .unwrap()
        .scale(0.1);
    write_volume(d.path().join("in.wsv"), &v).unwrap();
    ok(d.path(), &["decompose", "--input", "in.wsv", "--out", "dec"]);
    ok(d.path(), &["reconstruct", "--input", "dec/pyramid.wsp", "--out", "rec"]);
    let (a, b) = (
        read_volume(d.path().join("in.wsv")).unwrap(),
        read_volume(d.path().join("rec/tsdf.wsv")).unwrap(),
    );
    assert!(a.max_abs_diff(&b).unwrap() <= 1e-6);
}

#[test]
fn generate_is_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    model(d.path());
    for out in ["g1", "g2"] {
        ok(
            d.path(),
            &[
                "generate", "--model", "model", "--seed", "7", "--count", "2", "--out", out,
            ],
        );
    }
    for name in ["shape_000.obj", "shape_001.obj", "shape_000.coarse.wsv", "run.json"] {
        let (a, b) = (d.path().join("g1").join(name), d.path().join("g2").join(name));
        if name == "run.json" {
            let (mut a, mut b) = (json(a), json(b));
            a["args"] = serde_json::Value::Null;
            b["args"] = serde_json::Value::Null;
            assert_eq!(a, b);
        } else {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{name}");
        }
    }
    let run = json(d.path().join("g1/run.json"));
    assert_eq!(run["seeds"], serde_json::json!([7]));
    assert_eq!(run["model_digest"].as_str().unwrap().len(), 64);
    assert_eq!(run["outputs"].as_array().unwrap().len(), 6);
}

#[test]
fn eval_of_identical_directories() {
    let d = tempfile::tempdir().unwrap();
    model(d.path());
    ok(
        d.path(),
        &[
            "generate", "--model", "model", "--seed", "1", "--count", "3", "--out", "gen",
        ],
    );
    ok(
        d.path(),
        &[
            "eval",
            "--generated",
            "gen",
            "--reference",
            "gen",
            "--points",
            "128",
            "--out",
            "ev",
        ],
    );
    let m = json(d.path().join("ev/metrics.json"));
    for key in ["chamfer", "emd"] {
        assert_eq!(m[key]["cov"], 1.0);
        assert_eq!(m[key]["mmd"], 0.0);
        assert_eq!(m[key]["nna"], 0.0);
    }
    assert_eq!(m["generated"].as_array().unwrap().len(), 3);
}

#[test]
fn prepare_writes_report() {
    let d = tempfile::tempdir().unwrap();
    scenes(d.path());
    ok(d.path(), &["prepare", "--scene", "a.json", "--res", "32", "--out", "p"]);
    let r = json(d.path().join("p/compactness.json"));
    assert_eq!(r["bank"], "bior6.8");
    assert!(r["relative_error"].as_f64().unwrap() < 0.1);
    ok(
        d.path(),
        &["reconstruct-truncated", "--input", "p/pyramid.wsp", "--out", "t"],
    );
    assert!(d.path().join("t/truncated.wsv").exists());
}

#[test]
fn invert_and_manipulate_outputs() {
    let d = tempfile::tempdir().unwrap();
    model(d.path());
    ok(
        d.path(),
        &[
            "invert", "--input", "a.json", "--model", "model", "--iters", "20", "--out", "ia",
        ],
    );
    ok(
        d.path(),
        &[
            "invert",
            "--input",
            "b.json",
            "--model",
            "model",
            "--no-refine",
            "--out",
            "ib",
        ],
    );
    let trace = std::fs::read_to_string(d.path().join("ia/loss_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 21);
    assert_eq!(
        std::fs::read_to_string(d.path().join("ib/loss_trace.csv")).unwrap(),
        "iter,loss\n"
    );
    let mask = waveshape::RegionMask3::from_fn([32; 3], |_, j, _| j >= 22).unwrap();
    waveshape::io::write_mask(d.path().join("mask.wsv"), &mask).unwrap();
    std::fs::write(
        d.path().join("plan.json"),
        r#"{"model":"model","mode":{"kind":"replacement"},"mask":"mask.wsv","z_a":"ia/z.json","z_b":"ib/z.json","seed":3}"#,
    )
    .unwrap();
    ok(d.path(), &["manipulate", "--plan", "plan.json", "--out", "m"]);
    let c = json(d.path().join("m/comparison.json"));
    assert!(c["result_boundary_discontinuity"].as_f64().unwrap().is_finite());
    assert!(c["baseline_boundary_discontinuity"].as_f64().is_some());
    for f in ["result.obj", "baseline.obj", "mask.coarse.wsv", "run.json"] {
        assert!(d.path().join("m").join(f).exists(), "{f}");
    }
}

#[test]
fn validation_failures_exit_2() {
    let d = tempfile::tempdir().unwrap();
    model(d.path());
    std::fs::write(d.path().join("bad.wsv"), b"NOPE1234").unwrap();
    let cases: [&[&str]; 5] = [
        &["decompose", "--input", "bad.wsv", "--out", "x"],
        &[
            "generate",
            "--model",
            "model",
            "--seed",
            "1",
            "--model-digest",
            "00",
            "--out",
            "x",
        ],
        &["generate", "--model", "missing", "--seed", "1", "--out", "x"],
        &["generate", "--seed", "1"],
        &["schedule", "--steps", "0", "--out", "x"],
    ];
    for args in cases {
        assert_eq!(waveshape(d.path(), args).status.code(), Some(2), "{args:?}");
    }
    let digest = json(d.path().join("model/run.json"));
    assert!(digest["model_digest"].is_null());
}

#[test]
fn thread_variable_is_validated() {
    let d = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_waveshape"))
        .current_dir(d.path())
        .env("WAVESHAPE_THREADS", "0")
        .args(["schedule", "--out", "s"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
