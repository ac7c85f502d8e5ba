use std::path::Path;
use std::process::Command;

use landscape::commands::{verify_cmd, VerifyArgs};
use landscape::io::encode_params;
use landscape::verify::Hooks;
use landscape::{EXIT_DATA, EXIT_OK, EXIT_USAGE, EXIT_VIOLATION};
use landscape_core::data::{encode_idx_images, encode_idx_labels};
use landscape_core::hessian::{logit_hessian, LogitHessian};
use landscape_core::linalg::Matrix;
use landscape_core::{MlpConfig, MlpParams};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = landscape::run(std::iter::once("landscape").chain(args.iter().copied()), &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

/// Data rows of a CSV, skipping comments and the header.
fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

const BLOBS: &str = "blobs:120,4,3,0.2,5";

fn train_blobs(dir: &Path, epochs: &str) {
    let d = dir.to_str().unwrap();
    let args = ["train", "--dataset", BLOBS, "--hidden", "5", "--layers", "2", "--epochs", epochs, "--out", d];
    let (code, out, err) = run(&args);
    assert_eq!(code, EXIT_OK, "{out}{err}");
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let (code, _, err) = run(&["train", "--out", "/nonexistent"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("--dataset"), "{err}");
    assert_eq!(run(&["train", "--dataset", "nope:1", "--out", "x"]).0, EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(run(&["--help"]).0, EXIT_OK);
}

#[test]
fn train_writes_params_report_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    train_blobs(tmp.path(), "3");
    let report = read(tmp.path(), "train_report.csv");
    assert!(report.contains("epoch,loss\n"));
    let losses = rows(&report);
    assert_eq!(losses.len(), 4);
    assert!(losses[3][1] < losses[0][1]);
    assert!(report.lines().all(|l| !l.contains('\r')));

    let manifest: serde_json::Value = serde_json::from_str(&read(tmp.path(), "train.manifest.json")).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["params"]["hidden"], 5);
    assert_eq!(manifest["dataset"]["objects"], 120);
    assert_eq!(manifest["dataset"]["fingerprint"]["sha256"].as_str().unwrap().len(), 64);
    let outputs: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["path"].as_str().unwrap())
        .collect();
    assert_eq!(outputs, ["params.bin", "train_report.csv"]);

    let other = tempfile::tempdir().unwrap();
    train_blobs(other.path(), "3");
    assert_eq!(
        std::fs::read(tmp.path().join("params.bin")).unwrap(),
        std::fs::read(other.path().join("params.bin")).unwrap()
    );
}

#[test]
fn converge_single_rep_without_smoothing_is_raw() {
    let tmp = tempfile::tempdir().unwrap();
    train_blobs(tmp.path(), "3");
    let d = tmp.path().to_str().unwrap();
    let params = format!("{d}/params.bin");
    let (code, out, err) = run(&[
        "converge", "--dataset", BLOBS, "--params", &params, "--reps", "1", "--ema", "0", "--out", d,
    ]);
    assert_eq!(code, EXIT_OK, "{out}{err}");
    let csv = read(tmp.path(), "converge.csv");
    assert!(csv.contains("k,mean_abs_diff,ema,lemma2_bound_R0\n"));
    assert!(csv.trim_end().lines().last().unwrap().starts_with("# slope="));
    let r = rows(&csv);
    assert_eq!(r.len(), 119);
    for (i, row) in r.iter().enumerate() {
        assert_eq!(row[0], (i + 1) as f64);
        assert_eq!(row[1], row[2]);
        assert!(row[1] <= row[3]);
    }
}

#[test]
fn converge_rejects_mismatched_params() {
    let tmp = tempfile::tempdir().unwrap();
    train_blobs(tmp.path(), "3");
    let d = tmp.path().to_str().unwrap();
    let params = format!("{d}/params.bin");
    let (code, _, err) = run(&["converge", "--dataset", "blobs:50,6,3,0.2", "--params", &params, "--out", d]);
    assert_eq!(code, EXIT_DATA, "{err}");
    let (code, _, _) = run(&["converge", "--dataset", BLOBS, "--params", &params, "--ema", "1.5", "--out", d]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn bound_check_refuses_biased_models() {
    let tmp = tempfile::tempdir().unwrap();
    train_blobs(tmp.path(), "3");
    let d = tmp.path().to_str().unwrap();
    let params = format!("{d}/params.bin");
    let (code, _, err) = run(&["bound-check", "--dataset", BLOBS, "--params", &params, "--out", d]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("without bias terms"), "{err}");
}

#[test]
fn bound_check_random_net_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    let (code, out, err) = run(&[
        "bound-check", "--dataset", "blobs:100,4,3,0.3,1", "--hidden", "4", "--layers", "3", "--seed", "8", "--out", d,
    ]);
    assert_eq!(code, EXIT_OK, "{out}{err}");
    let csv = read(tmp.path(), "bound_check.csv");
    assert!(csv.starts_with("# m_w="));
    assert!(csv.contains("object,gn_spectral_norm,layerwise_bound,theorem1_bound,lemma1_bound\n"));
    let r = rows(&csv);
    assert_eq!(r.len(), 100);
    assert!(r.iter().all(|row| row[1] <= row[2] && row[2] <= row[3] && row[3] <= row[4]));
}

#[test]
fn bound_check_single_layer_unit_constants() {
    // ‖W‖₂ = 1 and max ‖x‖ = 1 put the theorem bound at 2√2.
    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("unit.csv");
    std::fs::write(&table, "label,f0,f1\n0,1,0\n1,0,1\n1,0.6,-0.8\n").unwrap();
    let c = MlpConfig::new(2, 0, 1, 2, false).unwrap();
    let p = MlpParams::from_layers(c, vec![Matrix::identity(2)], vec![vec![0.0; 2]]).unwrap();
    let params = tmp.path().join("unit.bin");
    std::fs::write(&params, encode_params(&p)).unwrap();

    let spec = format!("table:{},2", table.display());
    let d = tmp.path().to_str().unwrap();
    let (code, out, err) = run(&["bound-check", "--dataset", &spec, "--params", params.to_str().unwrap(), "--out", d]);
    assert_eq!(code, EXIT_OK, "{out}{err}");
    for row in rows(&read(tmp.path(), "bound_check.csv")) {
        assert!((row[3] - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-15);
    }
}

#[test]
fn bound_check_reports_violations() {
    // Identical width and input size but a dominant first-layer matrix: with
    // n > h the elementwise bound can fall below the spectral one.
    let tmp = tempfile::tempdir().unwrap();
    let n = 16;
    let c = MlpConfig::new(n, 1, 2, 2, false).unwrap();
    let w1 = Matrix::from_fn(1, n, |_, _| 1.0);
    let w2 = Matrix::from_fn(2, 1, |i, _| if i == 0 { 1.0 } else { -1.0 });
    let p = MlpParams::from_layers(c, vec![w1, w2], vec![vec![0.0], vec![0.0; 2]]).unwrap();
    let params = tmp.path().join("wide.bin");
    std::fs::write(&params, encode_params(&p)).unwrap();
    let d = tmp.path().to_str().unwrap();
    let (code, _, err) = run(&[
        "bound-check", "--dataset", "blobs:10,16,2,0.1", "--params", params.to_str().unwrap(), "--out", d,
    ]);
    assert_eq!(code, EXIT_VIOLATION, "{err}");
    assert!(err.contains("first violation at object"), "{err}");
    assert!(tmp.path().join("bound_check.csv").exists());
}

#[test]
fn taylor_radius_zero_and_shrinking_radii() {
    let tmp = tempfile::tempdir().unwrap();
    train_blobs(tmp.path(), "20");
    let d = tmp.path().to_str().unwrap();
    let params = format!("{d}/params.bin");
    let (code, out, err) = run(&[
        "taylor", "--dataset", BLOBS, "--params", &params, "--radius", "0,0.04,0.02,0.01", "--probes", "5", "--out", d,
    ]);
    assert_eq!(code, EXIT_OK, "{out}{err}");
    let r = rows(&read(tmp.path(), "taylor.csv"));
    assert_eq!(r.len(), 20);
    let max_err = |radius: f64| {
        r.iter()
            .filter(|row| row[0] == radius)
            .map(|row| row[4])
            .fold(0.0, f64::max)
    };
    assert_eq!(max_err(0.0), 0.0);
    assert!(max_err(0.04) >= max_err(0.02) && max_err(0.02) >= max_err(0.01));
    assert!(max_err(0.01) > 0.0);
}

#[test]
fn verify_passes_and_catches_a_sign_flip() {
    let (code, out, _) = run(&["verify", "--seeds", "2"]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert_eq!(out.lines().filter(|l| l.contains(" PASS ")).count(), 14);

    fn flipped(p: &[f64]) -> landscape_core::Result<LogitHessian> {
        let a = logit_hessian(p)?;
        Ok(LogitHessian::from_matrix_unchecked(a.matrix().scale(-1.0)))
    }
    let err = verify_cmd(&VerifyArgs { seed: 0, seeds: 1 }, &Hooks { logit_hessian: flipped }).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_VIOLATION);
    let text = err.to_string();
    assert!(text.lines().any(|l| l.contains("FAIL A vs finite-difference")), "{text}");
}

fn write_idx(dir: &Path, magic_ok: bool) {
    let mut images = encode_idx_images(2, 2, &[vec![0, 255, 10, 20], vec![30, 40, 255, 0], vec![1, 2, 3, 4]]);
    if !magic_ok {
        images[2] = 0x07;
    }
    std::fs::write(dir.join("img"), images).unwrap();
    std::fs::write(dir.join("lbl"), encode_idx_labels(&[0, 1, 1])).unwrap();
}

#[test]
fn binary_resolves_data_dir_and_maps_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    write_idx(tmp.path(), true);
    let out = tmp.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_landscape"))
        .env("LANDSCAPE_DATA_DIR", tmp.path())
        .args(["train", "--dataset", "idx:img,lbl", "--hidden", "2", "--layers", "2", "--epochs", "1"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_OK));
    assert!(read(&out, "train_report.csv").contains("# objects=3"));

    write_idx(tmp.path(), false);
    let output = Command::new(env!("CARGO_BIN_EXE_landscape"))
        .env("LANDSCAPE_DATA_DIR", tmp.path())
        .args(["train", "--dataset", "idx:img,lbl"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(EXIT_DATA));
    assert!(String::from_utf8_lossy(&output.stderr).contains("magic"));

    let status = Command::new(env!("CARGO_BIN_EXE_landscape")).arg("train").status().unwrap();
    assert_eq!(status.code(), Some(EXIT_USAGE));
}

#[test]
fn limit_keeps_leading_objects() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    let (code, out, err) = run(&[
        "train", "--dataset", BLOBS, "--limit", "30", "--hidden", "3", "--layers", "2", "--epochs", "1", "--out", d,
    ]);
    assert_eq!(code, EXIT_OK, "{out}{err}");
    assert!(read(tmp.path(), "train_report.csv").starts_with("# objects=30\n"));
    assert_eq!(run(&["train", "--dataset", BLOBS, "--limit", "0", "--out", d]).0, EXIT_USAGE);
}
