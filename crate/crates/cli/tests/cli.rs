use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn koopgait(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_koopgait")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stdout: {}\nstderr: {}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_dataset(dir: &Path) {
    ok(&koopgait(&["gen", "--subjects", "3", "--seqs-per", "3", "--gallery-per", "2", "--frames", "24", "--seed", "5", "--out-dir", s(dir)]));
}

fn train_small_lds(data: &Path, out: &Path) {
    ok(&koopgait(&["train-lds", "--data", s(data), "--epochs", "2", "--lr", "1e-3", "--batch-size", "2", "--out-dir", s(out)]));
}

#[test]
fn gen_defaults_write_120_sequences_and_a_manifest() {
    let dir = TempDir::new().unwrap();
    ok(&koopgait(&["gen", "--out-dir", s(dir.path())]));
    let seqs = std::fs::read_dir(dir.path()).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "seq")).count();
    assert_eq!(seqs, 120);
    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.ends_with(",gallery")).count(), 80);
    assert_eq!(manifest.lines().filter(|l| l.ends_with(",probe")).count(), 40);
    assert!(dir.path().join("gen.log").exists());
}

#[test]
fn gen_is_reproducible_per_seed() {
    let (a, b, c) = (TempDir::new().unwrap(), TempDir::new().unwrap(), TempDir::new().unwrap());
    for (d, seed) in [(&a, "9"), (&b, "9"), (&c, "10")] {
        ok(&koopgait(&["gen", "--subjects", "2", "--seqs-per", "2", "--gallery-per", "1", "--frames", "10", "--seed", seed, "--out-dir", s(d.path())]));
    }
    let read = |d: &TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&a, "manifest.txt"), read(&b, "manifest.txt"));
    assert_eq!(read(&a, "subject_001_take1.seq"), read(&b, "subject_001_take1.seq"));
    assert_ne!(read(&a, "subject_001_take1.seq"), read(&c, "subject_001_take1.seq"));
}

#[test]
fn usage_errors_exit_with_code_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(koopgait(&["gen", "--noise", "-0.5", "--out-dir", s(dir.path())]).status.code(), Some(2));
    assert_eq!(koopgait(&["gen", "--frames", "many"]).status.code(), Some(2));
    assert_eq!(koopgait(&["no-such-command"]).status.code(), Some(2));
    let config = dir.path().join("bad.cfg");
    std::fs::write(&config, "learning_rate=1e-3\nwarp_speed=9\n").unwrap();
    let out = koopgait(&["gen", "--config", s(&config), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let missing = koopgait(&["train-lds", "--data", s(&dir.path().join("absent")), "--out-dir", s(dir.path())]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn train_lds_writes_model_loss_csv_and_reproducible_log() {
    let data = TempDir::new().unwrap();
    small_dataset(data.path());
    let (first, second) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    train_small_lds(data.path(), first.path());
    let csv = std::fs::read_to_string(first.path().join("lds_loss.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "epoch,l_recons,l_linearity,l_recons_rec,l_triplet_shape,l_triplet_motion,l_triplet_gait,l_id,l_soft,total"
    );
    assert_eq!(csv.lines().count(), 3);
    let log = first.path().join("train-lds.log");
    let log_text = std::fs::read_to_string(&log).unwrap();
    assert!(log_text.contains("learning_rate=0.001") && log_text.contains("wall_time_s"));

    ok(&koopgait(&["train-lds", "--data", s(data.path()), "--config", s(&log), "--out-dir", s(second.path())]));
    let read = |d: &TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&first, "lds.kgm"), read(&second, "lds.kgm"));
    assert_eq!(read(&first, "lds_loss.csv"), read(&second, "lds_loss.csv"));
    assert!(std::fs::read_to_string(second.path().join("train-lds.log")).unwrap().contains("#   learning_rate=0.001"));
}

#[test]
fn divergence_exits_1_and_keeps_last_good_parameters() {
    let data = TempDir::new().unwrap();
    small_dataset(data.path());
    let out = TempDir::new().unwrap();
    let result = koopgait(&["train-lds", "--data", s(data.path()), "--epochs", "3", "--lr", "1e300", "--batch-size", "1", "--out-dir", s(out.path())]);
    assert_eq!(result.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&result.stderr).contains("diverged"));
    assert!(out.path().join("lds_loss_last_good.kgm").exists());
    assert!(!out.path().join("lds.kgm").exists());
}

#[test]
fn forecast_extends_and_reports_errors() {
    let data = TempDir::new().unwrap();
    small_dataset(data.path());
    let run = TempDir::new().unwrap();
    train_small_lds(data.path(), run.path());
    let model = run.path().join("lds.kgm");
    let input = data.path().join("subject_000_take0.seq");

    ok(&koopgait(&["forecast", "--model", s(&model), "--input", s(&input), "--extra", "0", "--out-dir", s(run.path()), "--output", "same.seq"]));
    assert_eq!(std::fs::read(run.path().join("same.seq")).unwrap(), std::fs::read(&input).unwrap());

    let text = std::fs::read_to_string(&input).unwrap();
    let data_at = text.lines().position(|l| l == "data").unwrap();
    let short: Vec<String> = text
        .lines()
        .take(data_at + 1 + 16)
        .map(|l| if l.starts_with("frames=") { "frames=16".to_string() } else { l.to_string() })
        .collect();
    let short_path = run.path().join("short.seq");
    std::fs::write(&short_path, short.join("\n") + "\n").unwrap();
    ok(&koopgait(&["forecast", "--model", s(&model), "--input", s(&short_path), "--extra", "8", "--truth", s(&input), "--out-dir", s(run.path())]));
    let errors = std::fs::read_to_string(run.path().join("forecast_errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 1 + 8);
    assert!(errors.lines().nth(1).unwrap().starts_with("16,"));
    let extended = std::fs::read_to_string(run.path().join("forecast.seq")).unwrap();
    assert!(extended.contains("frames=24"));

    let too_long = koopgait(&["forecast", "--model", s(&model), "--input", s(&short_path), "--extra", "40", "--truth", s(&input), "--out-dir", s(run.path())]);
    assert_eq!(too_long.status.code(), Some(2));
}

#[test]
fn eval_emits_one_summary_row_per_setting() {
    let data = TempDir::new().unwrap();
    small_dataset(data.path());
    let run = TempDir::new().unwrap();
    train_small_lds(data.path(), run.path());
    let lds = run.path().join("lds.kgm");
    let no_head = koopgait(&["eval", "--model", s(&lds), "--data", s(data.path()), "--out-dir", s(run.path())]);
    assert_eq!(no_head.status.code(), Some(2));

    let cfg = run.path().join("head.cfg");
    std::fs::write(&cfg, "embedding_dim=8\nhidden_dim=32\nidentities_per_batch=3\n").unwrap();
    ok(&koopgait(&["train-head", "--model", s(&lds), "--data", s(data.path()), "--epochs", "3", "--config", s(&cfg), "--out-dir", s(run.path())]));
    let head = run.path().join("gait.kgm");
    ok(&koopgait(&[
        "eval", "--model", s(&lds), "--head", s(&head), "--data", s(data.path()), "--truncate", "20,16,12,8", "--extend", "0,4", "--plot", "--out-dir", s(run.path()),
    ]));
    let summary = std::fs::read_to_string(run.path().join("eval_summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "truncate,extend,probes,rank_1,rank_5");
    assert_eq!(summary.lines().count(), 1 + 8);
    assert!(run.path().join("eval_t8_e4_probes.csv").exists());
    assert!(std::fs::read_to_string(run.path().join("eval_cmc.svg")).unwrap().starts_with("<svg"));
    let probes = std::fs::read_to_string(run.path().join("eval_t20_e0_probes.csv")).unwrap();
    assert_eq!(probes.lines().count(), 1 + 3);

    let other = TempDir::new().unwrap();
    ok(&koopgait(&["train-lds", "--data", s(data.path()), "--epochs", "1", "--seed", "77", "--out-dir", s(other.path())]));
    let mismatched = koopgait(&["eval", "--model", s(&other.path().join("lds.kgm")), "--head", s(&head), "--data", s(data.path()), "--out-dir", s(other.path())]);
    assert_eq!(mismatched.status.code(), Some(2));
    assert_eq!(koopgait(&["eval", "--model", s(&head), "--data", s(data.path()), "--truncate", "1", "--out-dir", s(run.path())]).status.code(), Some(2));
}

#[test]
fn smooth_track_recovers_cubics_and_reports_bad_rows() {
    let dir = TempDir::new().unwrap();
    let cubic = |t: f64| 300.0 + 0.8 * t - 4e-3 * t * t + 1e-5 * t * t * t;
    let mut csv = String::from("frame,x,y,w,h,confidence\n");
    for t in 0..400 {
        let tf = t as f64;
        csv.push_str(&format!("{t},{},{},40,{},0.9\n", cubic(tf), 0.5 * cubic(tf), 100.0 + 0.1 * tf));
    }
    let input = dir.path().join("track.csv");
    std::fs::write(&input, csv).unwrap();
    ok(&koopgait(&["smooth-track", "--in", s(&input), "--out-dir", s(dir.path())]));
    let out = std::fs::read_to_string(dir.path().join("smoothed_track.csv")).unwrap();
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("frame,x,y,size,clamped"));
    let mut sq = 0.0;
    let mut n = 0.0;
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        sq += (f[1] - cubic(f[0])).powi(2) + (f[2] - 0.5 * cubic(f[0])).powi(2);
        n += 2.0;
    }
    assert_eq!(n, 800.0);
    assert!((sq / n).sqrt() < 1e-6);

    std::fs::write(&input, "frame,x,y,w,h,confidence\n0,1,1,4,4,1\n1,1,1,4\n").unwrap();
    let bad = koopgait(&["smooth-track", "--in", s(&input), "--out-dir", s(dir.path())]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 3"));
}

#[test]
fn gradcheck_exit_code_follows_the_table() {
    let dir = TempDir::new().unwrap();
    let pass = koopgait(&["gradcheck", "--coords", "4", "--seed", "2", "--out-dir", s(dir.path())]);
    ok(&pass);
    let table = String::from_utf8_lossy(&pass.stdout);
    for name in ["L_recons", "L_linearity", "L_recons_rec", "triplet", "composed_joint"] {
        assert!(table.contains(name), "{table}");
    }
    assert!(!table.contains("FAIL"));
    let corrupt = koopgait(&["gradcheck", "--coords", "4", "--corrupt-group", "motion_branch", "--out-dir", s(dir.path())]);
    assert_eq!(corrupt.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&corrupt.stdout).contains("FAIL"));
    assert_eq!(koopgait(&["gradcheck", "--corrupt-group", "bogus", "--out-dir", s(dir.path())]).status.code(), Some(2));
}
