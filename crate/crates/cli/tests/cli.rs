use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ctbound::imageio::load_image;

fn ctbound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctbound")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ctbound(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    ctbound(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_data_is_reproducible_and_guards_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        ok(&["gen-data", "--kind", "patches", "--count", "12", "--seed", "5", "--out", p(d)]);
    }
    let ma = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert_eq!(ma, fs::read_to_string(b.join("manifest.txt")).unwrap());
    assert_eq!(fs::read(a.join("patch_00007.ctb")).unwrap(), fs::read(b.join("patch_00007.ctb")).unwrap());
    assert_eq!(fs::read_dir(&a).unwrap().count(), 12 + 2);
    // Photon level of every sample lies in the configured range.
    let rows: Vec<&str> = ma.lines().skip_while(|l| *l != "[samples]").skip(2).collect();
    assert_eq!(rows.len(), 12);
    for r in rows {
        let alpha: f64 = r.split_whitespace().nth(2).unwrap().parse().unwrap();
        assert!((2.0..=10.0).contains(&alpha));
    }
    assert_eq!(code(&["gen-data", "--count", "3", "--out", p(&a)]), 2);
    ok(&["gen-data", "--count", "3", "--out", p(&a), "--force"]);
    assert_eq!(fs::read_dir(&a).unwrap().count(), 3 + 2);
    assert!(fs::read_to_string(a.join("config.resolved")).unwrap().contains("[data]\nkind = patches\ncount = 3\n"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "[grid]\nstrid = 3\n").unwrap();
    let out = p(&dir.path().join("o")).to_string();
    assert_eq!(code(&["gen-data", "--config", p(&cfg), "--out", &out]), 2);
    assert_eq!(code(&["gen-data", "--set", "data.count=-4", "--out", &out]), 2);
    assert_eq!(code(&["gen-data", "--threads", "0", "--out", &out]), 2);
    ok(&["gen-data", "--kind", "composites", "--count", "1", "--set", "data.height=30", "--set", "data.width=30", "--out", &out]);
    assert_eq!(code(&["train", "--stage", "refine", "--data", &out, "--out", p(&dir.path().join("t"))]), 2);
}

#[test]
fn missing_or_undersized_inputs_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    ok(&["gen-data", "--kind", "composites", "--count", "1", "--set", "data.height=12", "--set", "data.width=40", "--out", p(&d)]);
    let img = d.join("img_00000.ctb");
    let out = p(&dir.path().join("o")).to_string();
    assert_eq!(code(&["infer", "--method", "direct", "--out", &out, p(&img)]), 3);
    assert_eq!(code(&["infer", "--method", "direct", "--out", &out, "/nonexistent/x.ctb"]), 3);
    let junk = dir.path().join("junk.ckpt");
    fs::write(&junk, "not a checkpoint").unwrap();
    assert_eq!(code(&["infer", "--init", p(&junk), "--out", &out, p(&img)]), 3);
}

#[test]
fn full_preset_logs_its_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    ok(&["gen-data", "--count", "8", "--out", p(&d)]);
    let t = dir.path().join("t");
    ok(&["train", "--stage", "init", "--preset", "full", "--epochs", "1", "--data", p(&d), "--out", p(&t)]);
    let log = fs::read_to_string(t.join("train_log.csv")).unwrap();
    assert!(log.lines().nth(1).unwrap().starts_with("0,init,0.0002,"), "{log}");
    let snap = fs::read_to_string(t.join("config.resolved")).unwrap();
    assert!(snap.contains("lr = 0.0002\nlr_factor = 0.5\nlr_every = 80\n"), "{snap}");
}

#[test]
fn train_infer_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = |n: &str| dir.path().join(n);
    ok(&["gen-data", "--count", "64", "--seed", "1", "--out", p(&path("patches"))]);
    ok(&[
        "gen-data", "--kind", "composites", "--count", "2", "--seed", "2", "--set", "data.height=35", "--set", "data.width=42",
        "--out", p(&path("comp")),
    ]);
    let stdout = ok(&[
        "train", "--stage", "init", "--epochs", "6", "--set", "train.augment=false", "--set", "train.lr=0.003", "--data",
        p(&path("patches")), "--out", p(&path("init")),
    ]);
    assert!(stdout.contains("final loss"));
    let log = fs::read_to_string(path("init/train_log.csv")).unwrap();
    let losses: Vec<f64> = log.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(losses.last().unwrap() < &losses[0], "{losses:?}");
    let init = path("init/init.ckpt");
    ok(&[
        "train", "--stage", "refine", "--init", p(&init), "--epochs", "2", "--set", "refine.phase2_epochs=1", "--data",
        p(&path("comp")), "--out", p(&path("refine")),
    ]);
    assert!(path("refine/refine.ckpt").exists());

    let imgs = [path("comp/img_00000.ctb"), path("comp/img_00001.ctb")];
    let mut learned = vec!["infer", "--init", p(&init), "--refine", "", "--stride", "7", "--out", ""];
    let refine = path("refine/refine.ckpt");
    let out_ct = path("ct");
    learned[4] = p(&refine);
    learned[8] = p(&out_ct);
    learned.extend(imgs.iter().map(|i| p(i)));
    let stdout = ok(&learned);
    let line = stdout.lines().next().unwrap();
    for phase in ["extract_ms=", "init_ms=", "refine_ms=", "aggregate_ms=", "total_ms="] {
        assert!(line.contains(phase), "{line}");
    }

    let out_dir = path("direct");
    let mut direct = vec!["infer", "--method", "direct", "--stride", "7", "--set", "solver.restarts=1", "--set", "solver.iterations=10"];
    direct.extend(["--out", p(&out_dir)]);
    direct.extend(imgs.iter().map(|i| p(i)));
    ok(&direct);

    for d in [&out_ct, &out_dir] {
        let b = load_image(&d.join("img_00001_boundary.png")).unwrap();
        let c = load_image(&d.join("img_00001_color.png")).unwrap();
        assert_eq!((b.height, b.width, c.height, c.width), (35, 42, 35, 42));
        assert!(d.join("config.resolved").exists());
    }
    let header = |d: &Path| fs::read_to_string(d.join("img_00000.params")).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header(&out_ct), header(&out_dir));

    let table = ok(&[
        "evaluate", "--pred", &format!("ctbound={}", p(&out_ct)), "--pred", &format!("direct={}", p(&out_dir)), "--truth",
        p(&path("comp")), "--out", p(&path("eval")),
    ]);
    assert!(table.contains("ctbound") && table.contains("direct"));
    let csv = fs::read_to_string(path("eval/report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(lines[0].starts_with("method,D(0),D(0.1),D(0.2),SSIM,PSNR,MSE,"), "{csv}");
    assert_eq!(lines.len(), 3);

    // A truth set of another size is rejected.
    ok(&["gen-data", "--kind", "composites", "--count", "2", "--set", "data.height=30", "--out", p(&path("other"))]);
    let pred = format!("x={}", p(&out_ct));
    assert_eq!(code(&["evaluate", "--pred", &pred, "--truth", p(&path("other")), "--out", p(&path("e2"))]), 3);
}
