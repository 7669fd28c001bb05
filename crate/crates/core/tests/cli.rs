use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dualspace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualspace")).args(args).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_RING: &str = "# tiny ring run\n\
    data.kind = ring\n\
    data.n = 512\n\
    ae.epochs = 3\n\
    gan.epochs = 3\n\
    eval.n_samples = 200\n";

#[test]
fn gen_data_writes_rows_and_metadata_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = dualspace(&["gen-data", "--set", "data.n=1000", "--seed", "3", "--out", dir.to_str().unwrap()]);
        assert!(o.status.success(), "{}", text(&o.stderr));
    }
    let csv = fs::read_to_string(a.join("dataset.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1001);
    assert_eq!(lines[0], "x0,x1,label,heldout");

    let info = json(&a.join("dataset.json"));
    assert_eq!(info["n"], 1000);
    assert_eq!(info["n_heldout"], 0);
    assert_eq!(info["spec"]["kind"], "ring");
    assert!(info["data_seed"].is_u64());

    for f in ["dataset.csv", "dataset.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn gen_data_shapes_with_holdout_writes_image_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("shapes");
    let o = dualspace(&[
        "gen-data",
        "--set",
        "data.kind=shapes",
        "--set",
        "data.n=300",
        "--set",
        "holdout=rotation:60..120",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let info = json(&out.join("dataset.json"));
    let held = info["n_heldout"].as_u64().unwrap();
    assert!(held > 0 && held < 300);
    let csv = fs::read_to_string(out.join("dataset.csv")).unwrap();
    let flagged = csv.lines().skip(1).filter(|l| l.ends_with(",1")).count();
    assert_eq!(flagged as u64, held);
    assert!(fs::read(out.join("dataset.pgm")).unwrap().starts_with(b"P"));
}

#[test]
fn run_both_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("ring.conf");
    fs::write(&config, SMALL_RING).unwrap();
    let out = tmp.path().join("run");
    let (c, o) = (config.to_str().unwrap(), out.to_str().unwrap());

    let r = dualspace(&["run", "--config", c, "--out", o, "--seed", "5"]);
    assert!(r.status.success(), "{}", text(&r.stderr));
    let report = json(&out.join("report.json"));
    let arms: Vec<&str> = report["reports"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["arm"].as_str().unwrap())
        .collect();
    assert_eq!(arms, ["dual_space", "direct"]);
    assert!(report["summary"]["gan_flops_ratio"].as_f64().unwrap() > 0.0);
    assert_eq!(report["reports"][0]["seed"], 5);
    for f in [
        "config.snapshot",
        "losses_dual_space.csv",
        "losses_direct.csv",
        "samples_dual_space.csv",
        "latent_samples_dual_space.csv",
        "models/dual_space_generator.params",
        "models/direct_discriminator.params",
        "models/encoder.params",
        "models/decoder.params",
        "models/latent_stats.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let losses = fs::read_to_string(out.join("losses_dual_space.csv")).unwrap();
    assert!(losses.starts_with("phase,epoch,loss,d_loss,g_loss,flops\n"));
    assert_eq!(losses.lines().filter(|l| l.starts_with("ae_train,")).count(), 3);

    let rep = dualspace(&["report", o]);
    assert!(rep.status.success(), "{}", text(&rep.stderr));
    let stdout = text(&rep.stdout);
    assert!(stdout.contains("gan-phase  flops/step"), "{stdout}");
    assert!(stdout.contains("mode_coverage"));
    for f in ["losses_dual_space.svg", "losses_direct.svg", "real_vs_generated.svg"] {
        let svg = fs::read_to_string(out.join("plots").join(f)).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }

    // The snapshot reproduces the run.
    let again = tmp.path().join("again");
    let snap = out.join("config.snapshot");
    let r = dualspace(&["run", "--config", snap.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(r.status.success(), "{}", text(&r.stderr));
    for f in ["losses_dual_space.csv", "losses_direct.csv", "samples_direct.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn identical_arms_report_unit_ratios() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("ring.conf");
    fs::write(&config, SMALL_RING).unwrap();
    let out = tmp.path().join("run");
    let o = out.to_str().unwrap();
    let r = dualspace(&["run", "--arm", "direct", "--config", config.to_str().unwrap(), "--out", o]);
    assert!(r.status.success(), "{}", text(&r.stderr));

    // Present the same arm twice as a comparison.
    let path = out.join("report.json");
    let mut report = json(&path);
    let mut dual = report["reports"][0].clone();
    dual["arm"] = "dual_space".into();
    let direct = report["reports"][0].clone();
    report["reports"] = Value::Array(vec![dual.clone(), direct.clone()]);
    let ds: dualspace::pipeline::ExperimentReport = serde_json::from_value(dual).unwrap();
    let dr: dualspace::pipeline::ExperimentReport = serde_json::from_value(direct).unwrap();
    report["summary"] = serde_json::to_value(dualspace::pipeline::compare(&ds, &dr).unwrap()).unwrap();
    fs::write(&path, serde_json::to_string_pretty(&report).unwrap()).unwrap();
    fs::copy(out.join("samples_direct.csv"), out.join("samples_dual_space.csv")).unwrap();

    let rep = dualspace(&["report", o]);
    assert!(rep.status.success(), "{}", text(&rep.stderr));
    let stdout = text(&rep.stdout);
    let ratios: Vec<&str> = stdout
        .lines()
        .filter(|l| l.contains("flops") || l.contains("wall-clock"))
        .filter(|l| l.starts_with("  "))
        .map(|l| l.split_whitespace().last().unwrap())
        .collect();
    assert_eq!(ratios, ["1.00"; 5], "{stdout}");
}

#[test]
fn missing_dataset_is_a_runtime_failure_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let r = dualspace(&[
        "run",
        "--set",
        "data.kind=csv",
        "--set",
        "data.path=/nonexistent/points.csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(text(&r.stderr).contains("/nonexistent/points.csv"), "{}", text(&r.stderr));
    assert!(out.join("FAILED").exists());

    let rep = dualspace(&["report", out.to_str().unwrap()]);
    assert_ne!(rep.status.code(), Some(0));
    assert!(text(&rep.stderr).contains("FAILED"), "{}", text(&rep.stderr));
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let o = out.to_str().unwrap();
    for args in [
        vec!["run", "--set", "gan.batch_size=0", "--out", o],
        vec!["run", "--set", "no.such.key=1", "--out", o],
        vec!["run", "--set", "ae.lr=fast", "--out", o],
        vec!["run", "--config", "/nonexistent/run.conf", "--out", o],
        vec!["run", "--arm", "sideways"],
        vec!["launch"],
    ] {
        let r = dualspace(&args);
        assert_eq!(r.status.code(), Some(1), "{args:?}: {}", text(&r.stderr));
        assert!(!r.stderr.is_empty());
    }
    assert!(!out.join("report.json").exists());
}

#[test]
fn report_without_a_run_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let r = dualspace(&["report", tmp.path().to_str().unwrap()]);
    assert_ne!(r.status.code(), Some(0));
    assert!(text(&r.stderr).contains("report.json"), "{}", text(&r.stderr));
}
