use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn deftrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deftrack"))
        .args(args)
        .output()
        .expect("failed to launch deftrack")
}

fn ok(args: &[&str]) -> Output {
    let out = deftrack(args);
    assert!(
        out.status.success(),
        "deftrack {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate(dir: &Path, scene: &str, frames: usize) {
    ok(&[
        "generate",
        scene,
        "--seed",
        "7",
        "--frames",
        &frames.to_string(),
        "--out",
        p(dir),
    ]);
}

#[test]
fn generate_rope_drag_writes_every_frame() {
    let tmp = TempDir::new().unwrap();
    let seq = tmp.path().join("seq");
    ok(&["generate", "rope_drag", "--seed", "7", "--out", p(&seq)]);
    let frames = fs::read_dir(&seq)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with("frame_")
        })
        .count();
    assert_eq!(frames, 100);
    assert!(seq.join("meta.json").is_file());
}

#[test]
fn same_seed_gives_identical_meta() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    generate(&a, "rope_crossing", 5);
    generate(&b, "rope_crossing", 5);
    assert_eq!(
        fs::read(a.join("meta.json")).unwrap(),
        fs::read(b.join("meta.json")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("frame_00004.json")).unwrap(),
        fs::read(b.join("frame_00004.json")).unwrap()
    );
}

#[test]
fn unknown_scene_is_a_usage_error() {
    let out = deftrack(&["generate", "knot_tying"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for id in ["rope_drag", "cloth_drape", "rope_crossing"] {
        assert!(err.contains(id), "valid id {id} not listed: {err}");
    }
}

#[test]
fn bad_flags_and_values_exit_with_usage_code() {
    assert_eq!(deftrack(&["track"]).status.code(), Some(1));
    assert_eq!(
        deftrack(&["track", "--sequence", "x", "--model", "rigid"])
            .status
            .code(),
        Some(1)
    );
    let tmp = TempDir::new().unwrap();
    let seq = tmp.path().join("seq");
    generate(&seq, "rope_drag", 2);
    let out = deftrack(&[
        "track",
        "--sequence",
        p(&seq),
        "--alpha",
        "-1",
        "--out",
        p(&tmp.path().join("r")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
}

#[test]
fn missing_sequence_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nothing_here");
    let out = deftrack(&["track", "--sequence", p(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("meta.json"));
}

#[test]
fn malformed_frame_names_the_frame() {
    let tmp = TempDir::new().unwrap();
    let seq = tmp.path().join("seq");
    generate(&seq, "rope_drag", 3);
    fs::write(seq.join("frame_00001.json"), "{\"cloud\": [[0, 0]]}").unwrap();
    let out = deftrack(&[
        "track",
        "--sequence",
        p(&seq),
        "--out",
        p(&tmp.path().join("r")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("frame 1"), "{err}");
}

#[test]
fn metrics_has_one_row_per_frame() {
    let tmp = TempDir::new().unwrap();
    let (seq, run) = (tmp.path().join("seq"), tmp.path().join("run"));
    generate(&seq, "rope_drag", 12);
    ok(&["track", "--sequence", p(&seq), "--out", p(&run)]);
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "frame,mean_distance_error_m,em_iters,projection_status,wall_ms"
    );
    assert_eq!(lines.count(), 12);
    let trajectory = fs::read_to_string(run.join("trajectory.jsonl")).unwrap();
    assert_eq!(trajectory.lines().count(), 12);
    let first: serde_json::Value =
        serde_json::from_str(trajectory.lines().next().unwrap()).unwrap();
    assert_eq!(first["frame"], 0);
    assert_eq!(first["points"].as_array().unwrap().len(), 50);
}

#[test]
fn no_prediction_matches_no_motion_without_the_prediction_term() {
    let tmp = TempDir::new().unwrap();
    let seq = tmp.path().join("seq");
    generate(&seq, "rope_drag", 15);
    let (a, b) = (tmp.path().join("none"), tmp.path().join("still"));
    ok(&[
        "track",
        "--sequence",
        p(&seq),
        "--model",
        "none",
        "--zeta",
        "0",
        "--out",
        p(&a),
    ]);
    ok(&[
        "track",
        "--sequence",
        p(&seq),
        "--model",
        "no_motion",
        "--zeta",
        "0",
        "--out",
        p(&b),
    ]);
    assert_eq!(
        fs::read(a.join("trajectory.jsonl")).unwrap(),
        fs::read(b.join("trajectory.jsonl")).unwrap()
    );
}

#[test]
fn tracking_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let seq = tmp.path().join("seq");
    generate(&seq, "rope_crossing", 10);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["track", "--sequence", p(&seq), "--out", p(&a)]);
    ok(&["track", "--sequence", p(&seq), "--out", p(&b)]);
    assert_eq!(
        fs::read(a.join("trajectory.jsonl")).unwrap(),
        fs::read(b.join("trajectory.jsonl")).unwrap()
    );
}

#[test]
fn replacement_template_and_obstacles_are_used() {
    let tmp = TempDir::new().unwrap();
    let seq = tmp.path().join("seq");
    generate(&seq, "rope_drag", 3);
    let template = tmp.path().join("template.json");
    let points: Vec<[f64; 3]> = (0..20).map(|i| [0.05 * i as f64, 0.0, 0.01]).collect();
    let edges: Vec<[usize; 2]> = (0..19).map(|i| [i, i + 1]).collect();
    fs::write(
        &template,
        serde_json::json!({ "points": points, "edges": edges }).to_string(),
    )
    .unwrap();
    let mesh = tmp.path().join("box.off");
    fs::write(
        &mesh,
        "OFF\n4 4 0\n0 0 -1\n1 0 -1\n0 1 -1\n0 0 -2\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n",
    )
    .unwrap();
    let run = tmp.path().join("run");
    ok(&[
        "track",
        "--sequence",
        p(&seq),
        "--template",
        p(&template),
        "--obstacles",
        p(&mesh),
        "--out",
        p(&run),
    ]);
    let trajectory = fs::read_to_string(run.join("trajectory.jsonl")).unwrap();
    let first: serde_json::Value =
        serde_json::from_str(trajectory.lines().next().unwrap()).unwrap();
    assert_eq!(first["points"].as_array().unwrap().len(), 20);
    // ground truth has 50 nodes, so it no longer applies
    assert!(!run.join("metrics.csv").exists());
}

#[test]
fn report_of_one_file_repeats_its_column() {
    let tmp = TempDir::new().unwrap();
    let (seq, run) = (tmp.path().join("seq"), tmp.path().join("full"));
    generate(&seq, "rope_drag", 8);
    ok(&["track", "--sequence", p(&seq), "--out", p(&run)]);
    let rep = tmp.path().join("rep");
    let out = ok(&["report", p(&run.join("metrics.csv")), "--out", p(&rep)]);

    let mut errors = Vec::new();
    let mut reader = csv::Reader::from_path(run.join("metrics.csv")).unwrap();
    for row in reader.records() {
        errors.push(row.unwrap()[1].parse::<f64>().unwrap());
    }
    let comparison = fs::read_to_string(rep.join("comparison.csv")).unwrap();
    let mut lines = comparison.lines();
    assert_eq!(lines.next().unwrap(), "frame,full");
    for (i, line) in lines.enumerate() {
        let (frame, value) = line.split_once(',').unwrap();
        assert_eq!(frame.parse::<usize>().unwrap(), i);
        assert_eq!(value.parse::<f64>().unwrap(), errors[i]);
    }

    let summary = fs::read_to_string(rep.join("summary.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout), summary);
    let fields: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let max = errors.iter().copied().fold(f64::MIN, f64::max);
    assert_eq!(fields[0], "full");
    assert_eq!(fields[1], "8");
    assert_eq!(fields[2].parse::<f64>().unwrap(), mean);
    assert_eq!(fields[3].parse::<f64>().unwrap(), max);
    assert_eq!(fields[4].parse::<f64>().unwrap(), *errors.last().unwrap());
}

#[test]
fn report_of_identical_runs_gives_identical_summaries() {
    let tmp = TempDir::new().unwrap();
    let seq = tmp.path().join("seq");
    generate(&seq, "rope_drag", 6);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["track", "--sequence", p(&seq), "--out", p(&a)]);
    ok(&["track", "--sequence", p(&seq), "--out", p(&b)]);
    let out = ok(&[
        "report",
        p(&a.join("metrics.csv")),
        p(&b.join("metrics.csv")),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    let summary: Vec<&str> = text
        .lines()
        .skip_while(|l| !l.starts_with("run,"))
        .skip(1)
        .collect();
    assert_eq!(summary.len(), 2);
    let strip = |l: &str| l.split_once(',').unwrap().1.to_string();
    assert_eq!(strip(summary[0]), strip(summary[1]));
}

#[test]
fn report_rejects_mismatched_frame_counts() {
    let tmp = TempDir::new().unwrap();
    let short = tmp.path().join("short.csv");
    let long = tmp.path().join("long.csv");
    let header = "frame,mean_distance_error_m,em_iters,projection_status,wall_ms\n";
    fs::write(&short, format!("{header}0,0.01,3,optimal,1.0\n")).unwrap();
    fs::write(
        &long,
        format!("{header}0,0.01,3,optimal,1.0\n1,0.02,4,optimal,1.0\n"),
    )
    .unwrap();
    let out = deftrack(&["report", p(&short), p(&long)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("short.csv") && err.contains("long.csv"),
        "{err}"
    );
}
