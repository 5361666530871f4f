use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn voxrefine(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxrefine"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = voxrefine(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn synth_compress_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("shapes.txt"), "sphere depth=6 radius=20\ntorus depth=6 # second\n").unwrap();
    ok(d, &["synth", "shapes.txt", "--out", "gt.ply", "--format", "ascii"]);
    assert!(d.join("gt.ply").exists() && d.join("gt-1.ply").exists());
    let log = fs::read_to_string(d.join("gt.ply.log")).unwrap();
    assert!(log.contains("command=synth") && log.contains("seed=0"));

    ok(d, &["compress", "gt.ply", "--target-depth", "4", "--out", "dec.ply"]);
    let rate = fs::read_to_string(d.join("dec.ply.rate.csv")).unwrap();
    assert!(rate.starts_with("target_depth,bits,bpp"));

    ok(d, &["eval", "gt.ply", "gt.ply", "--out", "same.csv"]);
    let same = fs::read_to_string(d.join("same.csv")).unwrap();
    assert_eq!(same.lines().nth(1).unwrap(), "0,0,999");
    ok(d, &["eval", "dec.ply", "gt.ply", "--out", "e.csv"]);
    let errors = fs::read_to_string(d.join("e.csv.errors.csv")).unwrap();
    assert_eq!(errors.lines().next(), Some("x,y,z,sq_err"));
}

#[test]
fn synth_seed_flag_changes_jittered_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("s.txt"), "sphere depth=6 radius=20 jitter=2\n").unwrap();
    ok(d, &["synth", "s.txt", "--out", "a.ply"]);
    ok(d, &["synth", "s.txt", "--out", "b.ply"]);
    ok(d, &["synth", "s.txt", "--out", "c.ply", "--seed", "5"]);
    let read = |n: &str| fs::read(d.join(n)).unwrap();
    assert_eq!(read("a.ply"), read("b.ply"));
    assert_ne!(read("a.ply"), read("c.ply"));
}

#[test]
fn train_refine_rd() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("s.txt"), "sphere depth=5 radius=10\n").unwrap();
    fs::write(d.join("run.cfg"), "epochs=1\nbase-channels=2\ncube-size=8\n").unwrap();
    ok(d, &["synth", "s.txt", "--out", "gt.ply"]);
    ok(d, &["train", "--gt", "g*.ply", "--config", "run.cfg", "--batch-size", "4", "--out", "m.ckpt"]);
    let loss = fs::read_to_string(d.join("m.ckpt.loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 2);
    let log = fs::read_to_string(d.join("m.ckpt.log")).unwrap();
    assert!(log.contains("base_channels=2") && log.contains("batch_size=4"));

    ok(d, &["compress", "gt.ply", "--target-depth", "3", "--out", "dec.ply"]);
    let out = voxrefine(d, &["refine", "dec.ply", "--model", "m.ckpt", "--strategy", "adaptive", "--out", "r.ply"]);
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("--gt") && msg.contains("--side-channel"), "{msg}");

    ok(d, &["refine", "dec.ply", "--model", "m.ckpt", "--strategy", "adaptive", "--gt", "gt.ply", "--out", "r.ply"]);
    ok(d, &["refine", "dec.ply", "--model", "m.ckpt", "--strategy", "adaptive", "--side-channel", "r.ply.vcnt", "--out", "r2.ply"]);
    assert_eq!(fs::read(d.join("r.ply")).unwrap(), fs::read(d.join("r2.ply")).unwrap());
    ok(d, &["refine", "dec.ply", "--model", "m.ckpt", "--strategy", "fixed:0.5", "--out", "f.ply"]);

    let printed = ok(d, &["rd", "gt.ply", "--model", "m.ckpt", "--depths", "4,3,2", "--out", "rd.csv"]);
    assert!(printed.contains("refined-at"));
    let rows = fs::read_to_string(d.join("rd.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 4 * 3);
    let bd = ok(d, &["bdpsnr", "rd.csv.raw.csv", "rd.csv.raw.csv"]);
    assert_eq!(bd.trim(), "0.00");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(voxrefine(d, &["eval", "missing.ply", "x.ply", "--out", "e.csv"]).status.code(), Some(4));
    fs::write(d.join("bad.ply"), "ply\nformat ascii 1.0\nelement vertex 1\nend_header\n").unwrap();
    assert_eq!(voxrefine(d, &["compress", "bad.ply", "--target-depth", "2", "--out", "o.ply"]).status.code(), Some(2));
    fs::write(d.join("one.ply"), "ply\nformat ascii 1.0\nelement vertex 1\nproperty int x\nproperty int y\nproperty int z\nend_header\n1 2 3\n").unwrap();
    assert_eq!(voxrefine(d, &["compress", "one.ply", "--target-depth", "9", "--out", "o.ply"]).status.code(), Some(3));
    fs::write(d.join("c.csv"), "bpp,psnr_db\n0.1,30\nx,31\n").unwrap();
    assert_eq!(voxrefine(d, &["bdpsnr", "c.csv", "c.csv"]).status.code(), Some(2));
}
