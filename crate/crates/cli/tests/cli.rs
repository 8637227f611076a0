use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use daq_core::tensor::{read_tensor, write_tensor, DType, Tensor};
use serde_json::Value;
use tempfile::TempDir;

fn daq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_daq")).current_dir(dir).args(args).output().expect("spawn daq")
}

fn daq_env(dir: &Path, args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_daq")).current_dir(dir).env(key, value).args(args).output().expect("spawn daq")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\nstdout: {}\nstderr: {}", o.status.code(), stdout(&o), String::from_utf8_lossy(&o.stderr));
    o
}

fn gen(dir: &Path, name: &str, shape: &str, seed: u64, dist: &str) -> PathBuf {
    ok(daq(dir, &["gen", "--shape", shape, "--dist", dist, "--seed", &seed.to_string(), "-o", name]));
    dir.join(name)
}

fn json(o: &Output) -> Value {
    let text = stdout(o);
    let start = text.find('{').expect("json on stdout");
    serde_json::from_str(&text[start..]).unwrap()
}

fn bops_of(report: &Value, pipeline: &str) -> f64 {
    let p = report["pipelines"].as_array().unwrap().iter().find(|p| p["name"] == pipeline).unwrap();
    p["bops"].as_f64().unwrap()
}

#[test]
fn gen_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = stdout(&ok(daq(dir.path(), &["gen", "--shape", "4,8,8", "--dist", "gaussian", "--seed", "7", "-o", "a.daqt"])));
    let b = stdout(&ok(daq(dir.path(), &["gen", "--shape", "4,8,8", "--dist", "gaussian", "--seed", "7", "-o", "b.daqt"])));
    let sum = |s: &str| s.split("sha256:").nth(1).unwrap().trim().to_string();
    assert_eq!(sum(&a), sum(&b));
    assert_eq!(sum(&a).len(), 64);
    assert!(a.starts_with("a.daqt "));
    assert_eq!(read_tensor(dir.path().join("a.daqt")).unwrap().shape(), &[4, 8, 8]);
    let c = stdout(&ok(daq(dir.path(), &["gen", "--shape", "4,8,8", "--seed", "8", "-o", "c.daqt"])));
    assert_ne!(sum(&a), sum(&c));
}

#[test]
fn gen_constant_and_usage_errors() {
    let dir = TempDir::new().unwrap();
    ok(daq(dir.path(), &["gen", "--dist", "constant:3", "--shape", "1,1,1"]));
    let t = read_tensor(dir.path().join("tensor.daqt")).unwrap();
    assert_eq!(t.data(), &[3.0]);

    let missing = daq(dir.path(), &["gen", "--dist", "gaussian"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--shape"));
    assert_eq!(daq(dir.path(), &["gen", "--shape", "2", "--dist", "cauchy"]).status.code(), Some(2));
    assert_eq!(daq(dir.path(), &["gen", "--shape", "2,0"]).status.code(), Some(4));
    assert_eq!(daq(dir.path(), &["gen", "--shape", "2", "-o", "no/such/dir/t.daqt"]).status.code(), Some(3));
}

#[test]
fn reference_identity_kernel_returns_input() {
    let dir = TempDir::new().unwrap();
    let x = gen(dir.path(), "x.daqt", "3,5,4", 1, "gaussian");
    let mut eye = vec![0.0; 9];
    for c in 0..3 {
        eye[c * 3 + c] = 1.0;
    }
    write_tensor(&Tensor::new(vec![3, 3, 1, 1], eye).unwrap(), dir.path().join("eye.daqt"), DType::F64).unwrap();
    ok(daq(dir.path(), &["conv", "--x", "x.daqt", "--w", "eye.daqt", "--pipeline", "reference", "-o", "y.daqt"]));
    assert_eq!(read_tensor(dir.path().join("y.daqt")).unwrap(), read_tensor(x).unwrap());
}

#[test]
fn channelwise_check_matches_elementwise() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "x.daqt", "6,9,7", 2, "gaussian:0.5,2");
    gen(dir.path(), "w.daqt", "6,4,3,3", 3, "gaussian:0,0.3");
    for extra in [&[][..], &["--post-relu"][..], &["--padding", "valid", "--n", "4"][..]] {
        let mut args = vec!["conv", "--x", "x.daqt", "--w", "w.daqt", "--pipeline", "channelwise", "--check"];
        args.extend_from_slice(extra);
        let out = stdout(&ok(daq(dir.path(), &args)));
        let line = out.lines().find(|l| l.starts_with("check vs elementwise")).unwrap();
        let dev: f64 = line.split("max relative deviation ").nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
        assert!(dev <= 1e-9, "{line}");
    }
}

#[test]
fn conv_preset_reports_qq_bops() {
    let dir = TempDir::new().unwrap();
    let o = ok(daq(dir.path(), &["conv", "--pipeline", "qq", "--n", "2", "--m", "4", "--shape-preset", "table-s1"]));
    let bops = bops_of(&json(&o), "qq") / 1e9;
    assert!((bops / 3046.0 - 1.0).abs() <= 0.05, "{bops} G");
}

#[test]
fn conv_errors_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "x.daqt", "3,6,6", 1, "gaussian");
    gen(dir.path(), "w.daqt", "3,2,3,3", 2, "gaussian");
    gen(dir.path(), "bad.daqt", "4,2,3,3", 3, "gaussian");
    let code = |args: &[&str]| daq(dir.path(), args).status.code();
    assert_eq!(code(&["conv", "--x", "x.daqt", "--w", "w.daqt", "--pipeline", "qq"]), Some(2));
    assert_eq!(code(&["conv", "--x", "x.daqt", "--w", "w.daqt", "--pipeline", "fft"]), Some(2));
    assert_eq!(code(&["conv", "--x", "x.daqt", "--w", "w.daqt", "--n", "9"]), Some(2));
    assert_eq!(code(&["conv", "--x", "x.daqt", "--w", "w.daqt", "--granularity", "kernel"]), Some(2));
    assert_eq!(code(&["conv", "--x", "x.daqt", "--w", "bad.daqt"]), Some(4));
    assert_eq!(code(&["conv", "--x", "missing.daqt", "--w", "w.daqt"]), Some(3));
    // per-kernel scales are fine where weights are de-transformed element by element
    assert_eq!(code(&["conv", "--x", "x.daqt", "--w", "w.daqt", "--pipeline", "elementwise", "--granularity", "kernel"]), Some(0));
}

#[test]
fn cost_preset_and_unit_layer() {
    let dir = TempDir::new().unwrap();
    let report = json(&ok(daq(dir.path(), &["cost", "--preset", "table-s1"])));
    for (name, want) in [("elementwise", 174015.0), ("channelwise", 10108.0), ("qq", 3046.0)] {
        let got = bops_of(&report, name) / 1e9;
        assert!((got / want - 1.0).abs() <= 0.05, "{name}: {got} G vs {want} G");
    }
    let cw = report["pipelines"].as_array().unwrap().iter().find(|p| p["name"] == "channelwise").unwrap();
    let muls = cw["ops"].as_array().unwrap().iter().find(|r| r["kind"] == "int-mul" && r["bits_a"] == 2 && r["bits_b"] == 2).unwrap();
    assert_eq!(muls["count"].as_u64(), Some(76_441_190_400));

    // one conv multiply, then one each for the channel scale, the feature and the weight
    let unit = json(&ok(daq(dir.path(), &["cost", "--C", "1", "--Cout", "1", "--K", "1", "--H", "1", "--W", "1", "--n", "2"])));
    let ew = &unit["pipelines"][0];
    assert_eq!(ew["name"], "elementwise");
    let rows = ew["ops"].as_array().unwrap();
    let count = |kind: &str| rows.iter().find(|r| r["kind"] == kind && r["bits_a"] == 32).unwrap()["count"].as_u64().unwrap();
    assert_eq!((count("fp-mul"), count("fp-add")), (4, 3));

    assert_eq!(daq(dir.path(), &["cost", "--C", "1"]).status.code(), Some(2));
}

#[test]
fn cost_json_and_text_agree() {
    let dir = TempDir::new().unwrap();
    let args = ["cost", "--C", "16", "--Cout", "8", "--K", "3", "--H", "20", "--W", "12", "--n", "3", "--m", "6"];
    let report = json(&ok(daq(dir.path(), &args)));
    let mut text_args = args.to_vec();
    text_args.extend(["--format", "text", "-o", "cost.txt"]);
    ok(daq(dir.path(), &text_args));
    let text = std::fs::read_to_string(dir.path().join("cost.txt")).unwrap();
    for p in report["pipelines"].as_array().unwrap() {
        assert!(text.contains(&format!("pipeline {}", p["name"].as_str().unwrap())));
        assert!(text.contains(&p["bops"].to_string()));
        assert!(text.contains(&format!("{:?}", p["energy_pj"].as_f64().unwrap())));
        for r in p["ops"].as_array().unwrap() {
            assert!(text.contains(&r["count"].to_string()));
        }
    }
}

#[test]
fn compare_thresholds() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "a.daqt", "2,4,4", 1, "gaussian");
    gen(dir.path(), "a2.daqt", "2,4,4", 1, "gaussian");
    gen(dir.path(), "b.daqt", "2,4,4", 2, "gaussian");
    gen(dir.path(), "c.daqt", "2,4,5", 2, "gaussian");
    let same = json(&ok(daq(dir.path(), &["compare", "a.daqt", "a2.daqt"])));
    assert_eq!(same["psnr_db"].as_f64(), Some(300.0));
    assert_eq!(daq(dir.path(), &["compare", "a.daqt", "b.daqt", "--min-psnr", "50", "--peak", "1"]).status.code(), Some(1));
    assert_eq!(daq(dir.path(), &["compare", "a.daqt", "b.daqt", "--min-psnr=-100", "--peak", "1"]).status.code(), Some(0));
    assert_eq!(daq(dir.path(), &["compare", "a.daqt", "c.daqt"]).status.code(), Some(4));
    assert_eq!(daq(dir.path(), &["compare", "a.daqt", "b.daqt", "--peak", "0"]).status.code(), Some(2));
}

#[test]
fn more_bits_give_higher_psnr() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "x.daqt", "4,12,12", 4, "gaussian");
    gen(dir.path(), "w.daqt", "4,4,3,3", 5, "gaussian:0,0.2");
    ok(daq(dir.path(), &["conv", "--x", "x.daqt", "--w", "w.daqt", "--pipeline", "reference", "-o", "ref.daqt"]));
    let mut psnr = Vec::new();
    for n in ["2", "8"] {
        let out = format!("y{n}.daqt");
        ok(daq(dir.path(), &["conv", "--x", "x.daqt", "--w", "w.daqt", "--n", n, "-o", &out]));
        psnr.push(json(&ok(daq(dir.path(), &["compare", &out, "ref.daqt"])))["psnr_db"].as_f64().unwrap());
    }
    assert!(psnr[1] > psnr[0], "{psnr:?}");
}

#[test]
fn block_runs() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "x.daqt", "4,10,10", 6, "gaussian");
    gen(dir.path(), "w1.daqt", "4,4,3,3", 7, "gaussian:0,0.3");
    gen(dir.path(), "w2.daqt", "4,3,3,3", 8, "gaussian:0,0.3");

    // one layer without ReLU is a plain conv
    ok(daq(dir.path(), &["block", "--x", "x.daqt", "--layer", "w1.daqt", "-o", "b.daqt"]));
    ok(daq(dir.path(), &["conv", "--x", "x.daqt", "--w", "w1.daqt", "-o", "c.daqt"]));
    assert_eq!(read_tensor(dir.path().join("b.daqt")).unwrap(), read_tensor(dir.path().join("c.daqt")).unwrap());

    let two = |pipeline: &str| {
        json(&ok(daq(dir.path(), &["block", "--x", "x.daqt", "--layer", "w1.daqt:relu", "--layer", "w2.daqt", "--pipeline", pipeline, "--m", "4"])))
    };
    let cw = two("channelwise");
    let layers = cw["layers"].as_array().unwrap();
    assert_eq!(layers.len(), 2);
    assert_eq!(layers[1]["post_relu"], true);
    assert!(layers[1]["alpha_min"].as_f64().unwrap() >= 0.0);
    let qq = two("qq");
    let (a, b) = (cw["compare_vs_reference"]["psnr_db"].as_f64().unwrap(), qq["compare_vs_reference"]["psnr_db"].as_f64().unwrap());
    assert!((a - b).abs() <= 0.1, "channelwise {a} dB vs qq {b} dB");
    assert!(qq["cost"]["bops"].as_f64().unwrap() < cw["cost"]["bops"].as_f64().unwrap());

    assert_eq!(daq(dir.path(), &["block", "--x", "x.daqt", "--layer", "w2.daqt", "--layer", "w2.daqt"]).status.code(), Some(4));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "x.daqt", "5,8,8", 9, "gaussian");
    gen(dir.path(), "w.daqt", "5,6,3,3", 10, "gaussian");
    ok(daq(dir.path(), &["conv", "--x", "x.daqt", "--w", "w.daqt", "--pipeline", "qq", "--m", "4", "-o", "a.daqt"]));
    ok(daq_env(dir.path(), &["conv", "--x", "x.daqt", "--w", "w.daqt", "--pipeline", "qq", "--m", "4", "-o", "b.daqt"], "DAQ_THREADS", "1"));
    assert_eq!(read_tensor(dir.path().join("a.daqt")).unwrap(), read_tensor(dir.path().join("b.daqt")).unwrap());
    assert_eq!(daq_env(dir.path(), &["cost", "--preset", "table-s1"], "DAQ_THREADS", "0").status.code(), Some(2));
}

#[test]
fn table_and_anchor_files() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("anchors.txt"), "# dearer adds\nint-add 8 0.06\nint-add 32 0.2\n").unwrap();
    std::fs::write(dir.path().join("broken.txt"), "int-add eight 0.06\n").unwrap();
    let energy = |args: &[&str]| json(&ok(daq(dir.path(), args)))["pipelines"][1]["energy_pj"].as_f64().unwrap();
    let base = energy(&["cost", "--preset", "table-s1"]);
    let dearer = energy(&["cost", "--preset", "table-s1", "--energy-anchors", "anchors.txt"]);
    assert!(dearer > base);
    assert_eq!(daq(dir.path(), &["cost", "--preset", "table-s1", "--energy-anchors", "broken.txt"]).status.code(), Some(2));
    assert_eq!(daq(dir.path(), &["cost", "--preset", "table-s1", "--energy-anchors", "none.txt"]).status.code(), Some(3));

    gen(dir.path(), "x.daqt", "2,5,5", 1, "gaussian");
    gen(dir.path(), "w.daqt", "2,2,3,3", 2, "gaussian");
    std::fs::write(dir.path().join("steps.txt"), "distribution gaussian\n1 1.596\n2 0.996\n").unwrap();
    ok(daq(dir.path(), &["conv", "--x", "x.daqt", "--w", "w.daqt", "--step-table", "steps.txt"]));
    assert_eq!(daq(dir.path(), &["conv", "--x", "x.daqt", "--w", "w.daqt", "--n", "3", "--step-table", "steps.txt"]).status.code(), Some(2));
}
