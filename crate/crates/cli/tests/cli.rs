use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use idcv_core::io::read_image;
use idcv_core::psnr;

fn idcv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idcv")).args(args).output().expect("run idcv")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_flag_prints_usage_and_exits_2() {
    let out = idcv(&["deblur", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(idcv(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn version_lists_formats() {
    let out = idcv(&["--version"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains(env!("CARGO_PKG_VERSION")) && text.contains("weights format 1"), "{text}");
}

#[test]
fn missing_input_is_a_structured_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = idcv(&["blur", "--in", "/nonexistent.pgm", "--kernel", "/nonexistent.txt", "--out", s(&dir.path().join("y.pgm"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn invalid_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("k.txt");
    assert!(!idcv(&["kernel-gen", "--size", "14", "--out", s(&k)]).status.success());
    assert!(!k.exists());
    assert_eq!(idcv(&["kernel-gen", "--size", "abc", "--out", s(&k)]).status.code(), Some(2));
}

#[test]
fn bundled_sample_deblurs_above_the_blurry_input() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.pgm");
    let stages = dir.path().join("stages");
    let out = idcv(&[
        "deblur",
        "--in",
        s(&fixture("blurry.pgm")),
        "--kernel",
        s(&fixture("kernel.txt")),
        "--weights",
        s(&fixture("weights.bin")),
        "--out",
        s(&x),
        "--dump-intermediate",
        s(&stages),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let clean = read_image(fixture("clean.pgm")).unwrap();
    let before = psnr(&clean, &read_image(fixture("blurry.pgm")).unwrap()).unwrap();
    let after = psnr(&clean, &read_image(&x).unwrap()).unwrap();
    assert!(after > before + 1.0, "{after} vs {before}");
    let archive = idcv_core::io::load_weights(fixture("weights.bin")).unwrap();
    assert_eq!(std::fs::read_dir(&stages).unwrap().count(), archive.stages.len() + 1);
    assert!(dir.path().join("x.pgm.run.json").exists());
}

#[test]
fn deblur_iterations_cannot_exceed_the_archive() {
    let dir = tempfile::tempdir().unwrap();
    let out = idcv(&[
        "deblur",
        "--in",
        s(&fixture("blurry.pgm")),
        "--kernel",
        s(&fixture("kernel.txt")),
        "--weights",
        s(&fixture("weights.bin")),
        "--out",
        s(&dir.path().join("x.pgm")),
        "--iterations",
        "9",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gradcheck_exits_zero_when_gradients_agree() {
    let out = idcv(&["gradcheck", "--size", "6", "--seed", "1", "--instances", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("max relative error") && !text.contains("FAIL"), "{text}");
}

#[test]
fn eval_writes_per_image_and_mean_rows() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.tsv");
    std::fs::write(
        &pairs,
        format!("same\t{0}\t{0}\nblurry\t{0}\t{1}\n", s(&fixture("clean.pgm")), s(&fixture("blurry.pgm"))),
    )
    .unwrap();
    let report = dir.path().join("report.tsv");
    let out = idcv(&["eval", "--pairs", s(&pairs), "--out", s(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed = idcv_core::MetricReport::from_tsv(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed.rows.len(), 2);
    assert_eq!(parsed.rows[0].psnr, idcv_core::metrics::PSNR_CAP);
    assert_eq!(parsed.rows[0].ssim, 1.0);
}

#[test]
fn inputs_are_not_modified() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.pgm");
    let k = dir.path().join("k.txt");
    std::fs::copy(fixture("clean.pgm"), &x).unwrap();
    assert!(idcv(&["kernel-gen", "--size", "11", "--seed", "2", "--out", s(&k)]).status.success());
    let (bx, bk) = (std::fs::read(&x).unwrap(), std::fs::read(&k).unwrap());
    let y = dir.path().join("y.pgm");
    assert!(idcv(&["blur", "--in", s(&x), "--kernel", s(&k), "--seed", "1", "--out", s(&y)]).status.success());
    assert_eq!(std::fs::read(&x).unwrap(), bx);
    assert_eq!(std::fs::read(&k).unwrap(), bk);
    let again = dir.path().join("y2.pgm");
    assert!(idcv(&["blur", "--in", s(&x), "--kernel", s(&k), "--seed", "1", "--out", s(&again)]).status.success());
    assert_eq!(std::fs::read(&y).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn replay_reproduces_and_detects_changes() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("k.txt");
    assert!(idcv(&["kernel-gen", "--size", "15", "--seed", "8", "--out", s(&k)]).status.success());
    let manifest = dir.path().join("k.txt.run.json");
    assert!(idcv(&["replay", "--manifest", s(&manifest), "--check"]).status.success());
    let text = std::fs::read_to_string(&manifest).unwrap();
    let edited = text.replace("\"seed\": 8", "\"seed\": 9");
    assert_ne!(edited, text);
    std::fs::write(&manifest, edited).unwrap();
    assert!(!idcv(&["replay", "--manifest", s(&manifest), "--check"]).status.success());
}
