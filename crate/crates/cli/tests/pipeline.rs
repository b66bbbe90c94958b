use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
clips = 5
held_out = 2
frames = 12
users = 6
grid = "64x32"
input = "64x32"
k = 3
steps = 4
batch_size = 2
sample_stride = 3
eval_stride = 3
"#;

fn sal360(args: &[&str], out: &Path) -> Output {
    let cfg = out.join("tiny.toml");
    if !cfg.exists() {
        std::fs::create_dir_all(out).unwrap();
        std::fs::write(&cfg, TINY).unwrap();
    }
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sal360"));
    cmd.args(args).arg("--out").arg(out);
    if args[0] != "plot-decay" {
        cmd.arg("--config").arg(&cfg);
    }
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> String {
    let o = sal360(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn fail(args: &[&str], out: &Path) -> String {
    let o = sal360(args, out);
    assert!(!o.status.success(), "{args:?} should fail");
    String::from_utf8(o.stderr).unwrap()
}

fn no_staging_left(out: &Path) {
    let left: Vec<_> = std::fs::read_dir(out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with(".staging"))
        .collect();
    assert!(left.is_empty(), "{left:?}");
}

fn prepared(out: &Path) {
    for step in ["synth", "gen-gt", "compute-cb"] {
        ok(&[step], out);
    }
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    prepared(out);
    ok(&["train", "--log-every", "0"], out);
    ok(&["infer"], out);
    ok(&["eval"], out);
    for f in ["cb.cbm", "cb_trained.cbm", "model.ckpt", "model.ckpt.manifest.txt", "loss.csv", "metrics.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let loss = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 1 + 4);
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "frame,cc,nss,kl,auc");
    assert!(lines.last().unwrap().starts_with("mean,"));
    // Two held-out clips, frames 3..12 each.
    assert_eq!(lines.len(), 1 + 2 * 9 + 1);
    assert!(lines[1].starts_with("clip003:3,"));
    no_staging_left(out);
}

#[test]
fn ground_truth_scored_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    prepared(out);
    let gt = out.join("gt");
    let stdout = ok(&["eval", "--pred", gt.to_str().unwrap()], out);
    assert!(stdout.contains("cc 1.0000"), "{stdout}");
}

#[test]
fn missing_prerequisites_fail_with_a_hint_and_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let err = fail(&["gen-gt"], out);
    assert!(err.contains("split list"), "{err}");
    ok(&["synth"], out);
    let err = fail(&["compute-cb"], out);
    assert!(err.contains("gen-gt"), "{err}");
    ok(&["gen-gt"], out);
    let err = fail(&["train"], out);
    assert!(err.contains("compute-cb"), "{err}");
    let err = fail(&["infer"], out);
    assert!(err.contains("train"), "{err}");
    assert!(!out.join("model.ckpt").exists());
    assert!(!out.join("pred").exists());
    no_staging_left(out);
}

#[test]
fn empty_trace_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&["synth"], out);
    std::fs::write(out.join("traces/clip001.csv"), "user_id,timestamp_s,longitude_deg,latitude_deg\n").unwrap();
    let err = fail(&["gen-gt"], out);
    assert!(err.contains("clip001"), "{err}");
    assert!(!out.join("gt").exists());
    no_staging_left(out);
}

#[test]
fn missing_frame_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&["synth"], out);
    std::fs::remove_file(out.join("frames/clip002/00005.png")).unwrap();
    let err = fail(&["gen-gt"], out);
    assert!(err.contains("frame 5 missing"), "{err}");
}

#[test]
fn bad_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert!(fail(&["synth", "--grid", "64"], out).contains("WxH"));
    assert!(fail(&["synth", "--pipeline", "sphere"], out).contains("pipeline"));
    assert!(fail(&["synth", "--sigma-deg", "0"], out).contains("sigma"));
    assert!(fail(&["plot-decay", "--alpha=-1"], out).contains("alpha"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&["synth", "--grid", "32x16"], out);
    ok(&["gen-gt", "--grid", "32x16", "--sigma-deg", "20"], out);
    let m = sal360_core::io::read_map(&out.join("gt/clip000/00000.s360")).unwrap();
    assert_eq!((m.grid().width(), m.grid().height()), (32, 16));
}

#[test]
fn cubemap_pipeline_runs_on_normalized_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    std::fs::write(out.join("tiny.toml"), format!("{TINY}trace_kind = \"normalized\"\n")).unwrap();
    ok(&["synth", "--pipeline", "cubemap"], out);
    let head = std::fs::read_to_string(out.join("traces/clip000.csv")).unwrap();
    assert!(head.starts_with("user_id,timestamp_s,u,v\n"));
    ok(&["gen-gt", "--pipeline", "cubemap"], out);
    assert!(out.join("gt/clip004/00011.s360").exists());
}

#[test]
fn same_seed_gives_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for out in [a.path(), b.path()] {
        prepared(out);
        ok(&["train", "--log-every", "0", "--seed", "5"], out);
        ok(&["infer", "--seed", "5"], out);
        ok(&["eval", "--seed", "5"], out);
    }
    for f in ["model.ckpt", "cb_trained.cbm", "metrics.csv", "loss.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn ablate_writes_four_fusion_rows_and_five_objective_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    std::fs::write(out.join("tiny.toml"), TINY.replace("steps = 4", "steps = 1")).unwrap();
    prepared(out);
    ok(&["ablate"], out);
    let cb = std::fs::read_to_string(out.join("ablation_cb.csv")).unwrap();
    let rows: Vec<&str> = cb.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("delta=on beta=on,"));
    assert!(rows[4].starts_with("delta=off beta=off,"));
    let loss = std::fs::read_to_string(out.join("ablation_loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 6);
}

#[test]
fn plot_decay_reports_crossing_frames() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let stdout = ok(&["plot-decay", "--alpha", "908.5013", "--alpha", "600", "--alpha", "436.3028"], out);
    assert!(stdout.contains("alpha 908.5013 crosses 0.5 at frame 17"), "{stdout}");
    assert!(stdout.contains("at frame 21"));
    assert!(stdout.contains("at frame 24"));
    let img = image::open(out.join("decay.png")).unwrap();
    assert_eq!((img.width(), img.height()), (640, 400));
}
