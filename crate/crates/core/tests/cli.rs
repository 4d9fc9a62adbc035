use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::Rng;
use tempfile::TempDir;

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn evaptwin(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_evaptwin"));
    for (k, _) in std::env::vars() {
        if k.starts_with("EVAPTWIN_") {
            cmd.env_remove(k);
        }
    }
    cmd.args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Minimal valid run configuration with an inline schedule.
fn inline_config(schedule: &str) -> String {
    format!(
        r#"seed = 3

[scenario]
builtin = "thulium"
field_g = 4.80

[schedule]
{schedule}

[search]
horizontal = {{ lo_factor = 0.5, hi_factor = 2.0, max_w = 20.0 }}
vertical = {{ lo_factor = 0.5, hi_factor = 2.0, max_w = 20.0 }}
tail_breakpoints = 2
total_time_s = [4.0, 12.0]
"#
    )
}

const SHORT_SCHEDULE: &str = r#"times_s = [0.0, 2.0, 4.0, 6.0]
power_h_w = [15.0, 2.0, 0.5, 0.15]
power_v_w = [11.5, 1.0, 0.4, 0.2]"#;

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn simulate_is_deterministic_and_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.toml", &inline_config(SHORT_SCHEDULE));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = evaptwin(&["simulate", "--config", s(&cfg), "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let ta = std::fs::read(a.join("trajectory.csv")).unwrap();
    assert_eq!(ta, std::fs::read(b.join("trajectory.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("summary.json")).unwrap(), std::fs::read(b.join("summary.json")).unwrap());
    let text = String::from_utf8(ta).unwrap();
    assert!(text.starts_with("time_s,"));
    assert!(text.lines().count() > 10);
}

#[test]
fn out_dir_defaults_relative_to_config() {
    let dir = TempDir::new().unwrap();
    let text = inline_config(SHORT_SCHEDULE).replace("seed = 3", "seed = 3\nout_dir = \"results\"");
    let cfg = write(&dir, "run.toml", &text);
    let o = evaptwin(&["simulate", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("results/trajectory.csv").exists());
}

#[test]
fn env_prefix_overrides_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.toml", &inline_config(SHORT_SCHEDULE));
    let out = dir.path().join("env_out");
    let o = Command::new(env!("CARGO_BIN_EXE_evaptwin"))
        .arg("simulate")
        .env("EVAPTWIN_CONFIG", &cfg)
        .env("EVAPTWIN_OUT", &out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("trajectory.csv").exists());
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let o = evaptwin(&["simulate", "--config", s(&dir.path().join("nope.toml"))]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let o = evaptwin(&["fit-image", "--image", s(&dir.path().join("nope.evt")), "--out", s(dir.path())]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2_with_line_numbers() {
    let dir = TempDir::new().unwrap();
    let text = inline_config(SHORT_SCHEDULE).replace("field_g = 4.80", "field_g = -4.80");
    let cfg = write(&dir, "bad.toml", &text);
    let o = evaptwin(&["simulate", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    let line = text.lines().position(|l| l.starts_with("field_g")).unwrap() + 1;
    assert!(stderr(&o).contains(&format!("bad.toml:{line}")), "{}", stderr(&o));

    let cfg = write(&dir, "unknown.toml", &inline_config(SHORT_SCHEDULE).replace("seed = 3", "seed = 3\ncolour = 1"));
    let o = evaptwin(&["simulate", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));

    let o = evaptwin(&["simulate"]);
    assert_eq!(code(&o), 2);
    let o = evaptwin(&["frobnicate"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn lost_cloud_exits_3_after_writing_the_trajectory() {
    let dir = TempDir::new().unwrap();
    let sched = "times_s = [0.0, 0.5, 1.0]\npower_h_w = [10.0, 1.0e-4, 1.0e-4]\npower_v_w = [1.0e-4, 1.0e-4, 1.0e-4]";
    let text = inline_config(sched).replace("total_time_s = [4.0, 12.0]", "total_time_s = [0.5, 2.0]");
    let cfg = write(&dir, "lost.toml", &text);
    let out = dir.path().join("out");
    let o = evaptwin(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(out.join("trajectory.csv").exists());
}

#[test]
fn decay_refuses_a_thermal_state() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.toml", &inline_config(SHORT_SCHEDULE));
    let out = dir.path().join("out");
    assert_eq!(code(&evaptwin(&["simulate", "--config", s(&cfg), "--out", s(&out)])), 0);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    let o = evaptwin(&["decay", "--config", s(&cfg), "--out", s(&out)]);
    if summary["trajectory"]["n_bec"].as_f64().unwrap() > 0.0 {
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    } else {
        assert_eq!(code(&o), 3, "{}", stderr(&o));
        assert!(stderr(&o).contains("condensed"));
    }
}

#[test]
fn decay_rescaled_first_row_and_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = manifest("configs/thulium_4p80.toml");
    let out = dir.path().join("out");
    let o = evaptwin(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = evaptwin(&["decay", "--config", s(&cfg), "--out", s(&out), "--duration", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let raw = std::fs::read_to_string(out.join("decay.csv")).unwrap();
    let scaled = std::fs::read_to_string(out.join("decay_rescaled.csv")).unwrap();
    let first = |text: &str| -> Vec<f64> { text.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect() };
    let (r, sc) = (first(&raw), first(&scaled));
    assert_eq!(sc[0], r[0] * 0.34);
    assert_eq!(sc[1], r[1] * 0.130);
    let last: Vec<f64> = raw.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[0] - 5.0).abs() < 1e-12);
    assert!(last[1] < r[1]);

    let curve = evaptwin::sim::RescaledCurve::from_csv(&scaled).unwrap();
    let back = curve.rescaled(1.0 / 0.34, 1.0 / 0.130).unwrap();
    assert_eq!(back.to_csv(), raw);
}

#[test]
fn optimize_resume_rules() {
    let dir = TempDir::new().unwrap();
    let cfg = manifest("configs/thulium_4p80.toml");
    let out = dir.path().join("out");
    let run = |extra: &[&str]| {
        let mut args = vec!["optimize", "--config", s(&cfg), "--out", s(&out), "--budget", "12"];
        args.extend_from_slice(extra);
        evaptwin(&args)
    };
    let o = run(&[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["campaign.jsonl", "best_schedule.toml", "best_schedule.csv", "best_trajectory.csv", "best_summary.json", "boundary.json", "run_record.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    // existing log without --resume
    assert_eq!(code(&run(&[])), 2);
    // different seed changes the config digest
    let o = run(&["--resume", "--seed", "12"]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    // nothing left to do at the same budget
    let before = std::fs::read(out.join("campaign.jsonl")).unwrap();
    assert_eq!(code(&run(&["--resume"])), 0);
    assert_eq!(before, std::fs::read(out.join("campaign.jsonl")).unwrap());
}

#[test]
fn best_schedule_reproduces_best_cost() {
    let dir = TempDir::new().unwrap();
    let cfg = manifest("configs/thulium_4p80.toml");
    let out = dir.path().join("opt");
    let o = evaptwin(&["optimize", "--config", s(&cfg), "--out", s(&out), "--budget", "10", "--workers", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let best: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("best_summary.json")).unwrap()).unwrap();
    let sim_out = dir.path().join("sim");
    let sched = out.join("best_schedule.toml");
    let o = evaptwin(&["simulate", "--config", s(&cfg), "--out", s(&sim_out), "--schedule", s(&sched)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let again: serde_json::Value = serde_json::from_slice(&std::fs::read(sim_out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(best["cost"], again["cost"]);
    assert_eq!(
        std::fs::read(out.join("best_trajectory.csv")).unwrap(),
        std::fs::read(sim_out.join("trajectory.csv")).unwrap()
    );
}

#[test]
fn scan_field_has_one_row_per_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.toml", &inline_config(SHORT_SCHEDULE));
    let out = dir.path().join("scan");
    let o = evaptwin(&["scan-field", "--config", s(&cfg), "--out", s(&out), "--budget", "4", "--fields", "3.91,4.80,5.25"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("scan.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "{csv}");
    for (row, f) in rows.iter().zip(["3.91", "4.8", "5.25"]) {
        assert!(row.starts_with(f), "{row}");
    }
    assert_eq!(code(&evaptwin(&["scan-field", "--config", s(&cfg), "--out", s(&out), "--fields", "4.8"])), 2);
}

#[test]
fn fit_image_reproduces_the_golden_result() {
    let dir = TempDir::new().unwrap();
    let o = evaptwin(&["fit-image", "--image", s(&manifest("data/synthetic_bimodal.evt")), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fit: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("fit.json")).unwrap()).unwrap();
    let golden: serde_json::Value = serde_json::from_slice(&std::fs::read(manifest("data/synthetic_bimodal.golden.json")).unwrap()).unwrap();
    assert_eq!(fit["result"], golden);
    assert!(dir.path().join("sweep.csv").exists());
}

#[test]
fn synthesize_renders_the_bundled_image() {
    let dir = TempDir::new().unwrap();
    let o = evaptwin(&["fit-image", "--synthesize", s(&manifest("data/synthetic_bimodal.truth.toml")), "--seed", "7", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        std::fs::read(dir.path().join("image.evt")).unwrap(),
        std::fs::read(manifest("data/synthetic_bimodal.evt")).unwrap()
    );
}

#[test]
fn synthesize_without_condensate_reports_the_floor() {
    let dir = TempDir::new().unwrap();
    let truth = std::fs::read_to_string(manifest("data/synthetic_bimodal.truth.toml")).unwrap();
    let truth = truth
        .lines()
        .map(|l| if l.trim_start().starts_with("n_bec") { "n_bec = 0.0" } else { l })
        .collect::<Vec<_>>()
        .join("\n");
    let spec = write(&dir, "thermal.toml", &truth);
    let o = evaptwin(&["fit-image", "--synthesize", s(&spec), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("below the detection floor"), "{}", stdout(&o));
}

#[test]
fn fit_failures_exit_4_or_6() {
    let dir = TempDir::new().unwrap();
    // too small to hold a fit
    let tiny = write(&dir, "tiny.txt", "# evaptwin-image v1\n3 3 1.0 1.0\n0 0 0\n0 1 0\n0 0 0\n");
    let o = evaptwin(&["fit-image", "--image", s(&tiny), "--out", s(dir.path())]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));

    // pure noise never settles on a thermal width
    let mut rng = evaptwin::rng::substream(1, "cli-noise", 0);
    let mut text = String::from("# evaptwin-image v1\n64 64 1.0 1.0\n");
    for _ in 0..64 {
        let row: Vec<String> = (0..64).map(|_| format!("{:.5}", rng.random_range(-0.05..0.05))).collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    let noise = write(&dir, "noise.txt", &text);
    let o = evaptwin(&["fit-image", "--image", s(&noise), "--out", s(dir.path())]);
    assert!(matches!(code(&o), 4 | 6), "{} {}", code(&o), stderr(&o));
}
