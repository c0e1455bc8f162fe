use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use halpha_core::classmodel::GmmModel;
use halpha_core::config::PipelineConfig;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const SMALL: &str = r#"
seed = 7
width = 160
height = 160
frames = 6
cadence_s = 30.0
start = "2012-07-05T09:00:00Z"
noise_sigma = 4.0

[disk]
center = [80.0, 80.0]
radius = 70.0

[[filament]]
points = [[45.0, 70.0], [65.0, 60.0], [90.0, 64.0]]
width = 6.0

[[flare]]
center = [105.0, 95.0]
semi_axes = [8.0, 4.0]
onset_frame = 0
rise_frames = 2
decay_frames = 3

[[sunspot]]
center = [70.0, 105.0]
radius = 5.0
"#;

fn halpha(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_halpha")).args(args).output().expect("binary runs")
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

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth_small(dir: &Path) -> PathBuf {
    let scenario = dir.join("small.toml");
    fs::write(&scenario, SMALL).unwrap();
    let out = dir.join("seq");
    let o = halpha(&["synth", "--scenario", p(&scenario), "--output", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

fn digests(dir: &Path) -> Vec<(PathBuf, String)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let hash = Sha256::digest(fs::read(&path).unwrap());
                let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), hex));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_reproducible_byte_for_byte() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let da = digests(&synth_small(a.path()));
    let db = digests(&synth_small(b.path()));
    assert_eq!(da, db);
    assert_eq!(da.iter().filter(|(p, _)| p.starts_with("frames")).count(), 6);
    assert_eq!(da.iter().filter(|(p, _)| p.starts_with("masks")).count(), 6);
}

#[test]
fn synth_demo_writes_sixty_frames_and_masks() {
    let dir = TempDir::new().unwrap();
    let o = halpha(&["synth", "--output", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("60 frames"));
    assert_eq!(fs::read_dir(dir.path().join("frames")).unwrap().count(), 60);
    assert_eq!(fs::read_dir(dir.path().join("masks")).unwrap().count(), 60);
    for f in ["manifest.csv", "training.csv", "events.json", "reference.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn synth_rejects_off_disk_object() {
    let dir = TempDir::new().unwrap();
    let s = dir.path().join("bad.toml");
    fs::write(&s, SMALL.replace("center = [70.0, 105.0]", "center = [10.0, 10.0]")).unwrap();
    let o = halpha(&["synth", "--scenario", p(&s), "--output", p(&dir.path().join("out"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("invalid scenario"), "{}", stderr(&o));
}

#[test]
fn train_is_deterministic_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let seq = synth_small(dir.path());
    let list = seq.join("training.csv");
    let (m1, m2) = (dir.path().join("m1.json"), dir.path().join("m2.json"));
    for m in [&m1, &m2] {
        let o = halpha(&["train", "--training", p(&list), "--output", p(m), "--set", "classmodel.samples_per_class=300"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_eq!(stdout(&o).lines().filter(|l| l.contains("log-likelihood")).count(), 4);
    }
    let (a, b) = (fs::read(&m1).unwrap(), fs::read(&m2).unwrap());
    assert_eq!(a, b);
    let model = GmmModel::load(&m1).unwrap();
    assert_eq!(model.to_json().as_bytes(), &a[..]);
}

#[test]
fn train_without_flare_pixels_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let s = dir.path().join("noflare.toml");
    let text = SMALL.split("[[flare]]").next().unwrap().to_string()
        + "[[sunspot]]\ncenter = [70.0, 105.0]\nradius = 5.0\n";
    fs::write(&s, text).unwrap();
    let seq = dir.path().join("seq");
    assert_eq!(code(&halpha(&["synth", "--scenario", p(&s), "--output", p(&seq)])), 0);
    let o = halpha(&["train", "--training", p(&seq.join("training.csv")), "--output", p(&dir.path().join("m.json"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("insufficient samples for class 2"), "{}", stderr(&o));
}

#[test]
fn detect_streams_parseable_records() {
    let dir = TempDir::new().unwrap();
    let seq = synth_small(dir.path());
    let model = dir.path().join("m.json");
    let set = "classmodel.samples_per_class=300";
    let o = halpha(&["train", "--training", p(&seq.join("training.csv")), "--output", p(&model), "--set", set]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let events = dir.path().join("events.ndjson");
    let debug = dir.path().join("debug");
    let o = halpha(&[
        "detect",
        "--manifest",
        p(&seq.join("manifest.csv")),
        "--model",
        p(&model),
        "--output",
        p(&events),
        "--debug-dir",
        p(&debug),
        "--set",
        "events.limb_guard_radial=-1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&events).unwrap();
    let records = halpha_core::events::read_records(text.as_bytes()).unwrap();
    assert_eq!(records.len(), text.lines().count());
    assert_eq!(fs::read_dir(&debug).unwrap().count(), 6 * 6);
}

#[test]
fn detect_on_empty_manifest_prints_nothing() {
    let dir = TempDir::new().unwrap();
    let seq = synth_small(dir.path());
    let model = dir.path().join("m.json");
    let set = "classmodel.samples_per_class=300";
    assert_eq!(code(&halpha(&["train", "--training", p(&seq.join("training.csv")), "--output", p(&model), "--set", set])), 0);
    let manifest = dir.path().join("empty.csv");
    fs::write(&manifest, "path,timestamp\n").unwrap();
    let o = halpha(&["detect", "--manifest", p(&manifest), "--model", p(&model)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn detect_skips_unreadable_frames() {
    let dir = TempDir::new().unwrap();
    let seq = synth_small(dir.path());
    let model = dir.path().join("m.json");
    let set = "classmodel.samples_per_class=300";
    assert_eq!(code(&halpha(&["train", "--training", p(&seq.join("training.csv")), "--output", p(&model), "--set", set])), 0);
    let manifest = fs::read_to_string(seq.join("manifest.csv")).unwrap();
    let broken = manifest.replacen("frames/frame_20120705_090030.pgm", "frames/missing.pgm", 1);
    assert_ne!(broken, manifest);
    let m = seq.join("broken.csv");
    fs::write(&m, broken).unwrap();
    let o = halpha(&["detect", "--manifest", p(&m), "--model", p(&model)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("skipping"), "{}", stderr(&o));
}

#[test]
fn detect_without_model_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let manifest = dir.path().join("m.csv");
    fs::write(&manifest, "path,timestamp\n").unwrap();
    assert_eq!(code(&halpha(&["detect", "--manifest", p(&manifest)])), 2);
}

const REFERENCE: &str = "type,start,end,importance,lat,lon
flare,2012-07-06T08:00:00Z,2012-07-06T08:20:00Z,1,12.0,-30.0
filament_eruption,2012-07-06T10:00:00Z,2012-07-06T10:00:00Z,,40.0,10.0
";

const DETECTIONS: &str = r#"{"type":"flare","id":1,"start":"2012-07-06T08:00:00Z","peak":"2012-07-06T08:05:00Z","end":"2012-07-06T08:20:00Z","importance":"1","lat_deg":12.0,"lon_deg":-30.0,"area_msh":150.0,"rel_intensity":1.5}
{"type":"filament_eruption","id":2,"start":"2012-07-06T09:59:30Z","end":"2012-07-06T10:00:00Z","lat_deg":40.0,"lon_deg":10.0,"length_px":80.0}
"#;

#[test]
fn eval_of_perfect_detections_scores_one() {
    let dir = TempDir::new().unwrap();
    let (d, r) = (dir.path().join("d.ndjson"), dir.path().join("r.csv"));
    fs::write(&d, DETECTIONS).unwrap();
    fs::write(&r, REFERENCE).unwrap();
    let o = halpha(&["eval", "--detections", p(&d), "--reference", p(&r)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in ["flare_scores", "eruption_scores"] {
        for m in ["precision", "recall", "f_score"] {
            assert_eq!(v[key][m], 1.0, "{key}.{m}");
        }
    }
    assert_eq!(v["days"].as_array().unwrap().len(), 1);
}

#[test]
fn eval_reports_malformed_csv_line() {
    let dir = TempDir::new().unwrap();
    let (d, r) = (dir.path().join("d.ndjson"), dir.path().join("r.csv"));
    fs::write(&d, DETECTIONS).unwrap();
    fs::write(&r, REFERENCE.to_string() + "flare,not-a-time,2012-07-06T08:20:00Z,1,0,0\n").unwrap();
    let o = halpha(&["eval", "--detections", p(&d), "--reference", p(&r)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn print_config_reflects_file_and_overrides() {
    let dir = TempDir::new().unwrap();
    let c = dir.path().join("c.toml");
    fs::write(&c, "[events]\nvote_window = 7\n").unwrap();
    let o = halpha(&["--config", p(&c), "--set", "preprocess.lambda1=0.8", "--print-config", "synth", "--output", "x"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cfg = PipelineConfig::from_toml(&stdout(&o)).unwrap();
    assert_eq!(cfg.events.vote_window, 7);
    assert_eq!(cfg.preprocess.lambda1, 0.8);
    assert_eq!(cfg.preprocess.lambda2, 0.1);
}

#[test]
fn unknown_setting_is_a_usage_error() {
    let o = halpha(&["--set", "events.nonsense=1", "--print-config", "synth", "--output", "x"]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&halpha(&["frobnicate"])), 2);
}
