use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use mocap_core::kinematics::NUM_JOINTS;
use mocap_core::pipeline::MotionRecord;
use serde_json::Value;

fn mocap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mocap")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = mocap(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr).into_owned();
    assert_eq!(text.trim_end().lines().count(), 1, "one diagnostic line: {text}");
    text.trim_end().to_string()
}

fn motion_fixture(frames: u64) -> String {
    (0..frames)
        .map(|k| {
            let a = 0.05 * k as f64;
            let mut theta = [[1.0, 0.0, 0.0, 0.0]; NUM_JOINTS];
            theta[1] = [(a / 2.0).cos(), (a / 2.0).sin(), 0.0, 0.0];
            MotionRecord {
                frame: k,
                t: k as f64 / 30.0,
                t_xz: [0.04 * k as f64, 0.0],
                t_y: 0.01 * a.sin(),
                theta,
                degraded: [false, false],
            }
            .to_json_line()
        })
        .collect()
}

#[test]
fn eval_of_identical_motion_reports_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.jsonl"), motion_fixture(90)).unwrap();
    let v = ok_json(dir.path(), &["eval", "--pred", "m.jsonl", "--gt", "m.jsonl", "--csv", "e.csv"]);
    assert_eq!(v["frames"], 90);
    for key in ["mean_sip_deg", "mean_ang_deg", "mean_pos_cm", "final_translation_error_m"] {
        assert_eq!(v[key].as_f64(), Some(0.0), "{key}");
    }
    assert_eq!(v["mesh_error"], "n/a");
    assert!(v["translation_curve"]["mean_error"].as_array().unwrap().iter().all(|e| e.as_f64() == Some(0.0)));
    let csv = std::fs::read_to_string(dir.path().join("e.csv")).unwrap();
    assert_eq!(csv.lines().count(), 91);
}

#[test]
fn missing_config_exits_with_usage_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = mocap(dir.path(), &["--config", "absent.toml", "replay", "--record", "x.mcrf"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error: CONFIG_MISSING: "));
}

#[test]
fn usage_errors_exit_2_with_one_coded_line() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["eval"], &["train", "--data", "d.mcds"], &["run"]] {
        let out = mocap(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(stderr_line(&out).starts_with("error: USAGE: "), "{args:?}");
    }
}

#[test]
fn runtime_errors_exit_1_with_one_coded_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.mcrf"), b"not a recording").unwrap();
    let out = mocap(dir.path(), &["replay", "--record", "bad.mcrf"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).starts_with("error: RECORD: "));
}

#[test]
fn synth_train_eval_on_walk_clip_fits_desk_budget() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let synth = ok_json(dir.path(), &["--seed", "2", "synth", "--out", "walk.mcds", "--clips", "walk", "--count", "2", "--duration", "20"]);
    assert_eq!(synth["sets"], 2);
    let train = ok_json(
        dir.path(),
        &[
            "--seed", "2", "--checkpoint", "ckpt", "train", "--data", "walk.mcds", "--hidden", "64", "--max-steps", "150",
            "--batch", "8", "--seq-len", "150", "--lr", "3e-3", "--overlap",
        ],
    );
    for net in ["pose", "velocity"] {
        let initial = train[net]["initial_loss"].as_f64().unwrap();
        let last = train[net]["final_loss"].as_f64().unwrap();
        assert!(last < initial, "{net}: {last} >= {initial}");
    }
    assert!(dir.path().join("ckpt/pose.mckp").is_file() && dir.path().join("ckpt/velocity.mckp").is_file());
    let eval = ok_json(dir.path(), &["--checkpoint", "ckpt", "eval", "--data", "walk.mcds"]);
    assert_eq!(eval["sets"].as_array().unwrap().len(), 2);
    assert_eq!(eval["pooled"]["frames"], 1200);
    assert!(eval["pooled"]["mean_sip_deg"].as_f64().unwrap().is_finite());
    assert!(start.elapsed() < Duration::from_secs(600), "took {:?}", start.elapsed());
}

#[test]
fn simulated_recordings_calibrate_and_replay_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for (window, out) in [("same-height", "sh.mcrf"), ("tpose", "tp.mcrf")] {
        let v = ok_json(p, &["--seed", "4", "record", "--simulate", window, "--out", out]);
        assert_eq!(v["packets"], 180);
    }
    let rec = ok_json(
        p,
        &["--seed", "4", "record", "--simulate", "session", "--duration", "6", "--out", "s.mcrf", "--drop-prob", "0.1", "--swap-prob", "0.1"],
    );
    let calib = ok_json(p, &["calibrate", "--same-height", "sh.mcrf", "--tpose", "tp.mcrf", "--out", "profile.toml"]);
    assert_eq!(calib["tpose_frames"], 90);
    std::fs::write(p.join("session.toml"), "calibration = \"profile.toml\"\n[model]\nhidden = 32\nlayers = 2\n").unwrap();
    let replay = |out: &str| {
        let o = mocap(p, &["--config", "session.toml", "--seed", "9", "replay", "--calibration", "profile.toml", "--record", "s.mcrf", "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let stats: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).lines().last().unwrap()).unwrap();
        (std::fs::read(p.join(out)).unwrap(), stats)
    };
    let (a, stats) = replay("a.jsonl");
    let (b, _) = replay("b.jsonl");
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count() as u64, rec["frames"].as_u64().unwrap());
    for (d, name) in ["wrist", "pocket"].iter().enumerate() {
        assert_eq!(stats[name]["missing"], rec["dropped"][d], "{name}");
    }
}
