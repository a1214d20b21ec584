use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use reobench::fidelity::EmbeddingSet;
use reobench::{save_image, ImageRaster, RasterFormat, SegMask};

fn reobench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reobench"))
        .args(args)
        .env_remove("REOBENCH_WORKERS")
        .output()
        .expect("binary runs")
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

fn png(path: &Path, w: usize, h: usize, seed: usize) {
    let img = ImageRaster::from_fn(w, h, 3, |x, y, c| ((x * 5 + y * 11 + c * 3 + seed) % 50) as f32 / 50.0);
    save_image(&img, path, RasterFormat::Png).unwrap();
}

fn class_dataset(root: &Path) {
    for (class, n) in [("beach", 2), ("farm", 1)] {
        for i in 0..n {
            png(&root.join(class).join(format!("{i}.png")), 32, 32, i);
        }
    }
}

#[test]
fn corrupt_writes_grid_and_summary() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    class_dataset(data.path());
    let o = reobench(&[
        "corrupt",
        "--input",
        p(data.path()),
        "--out",
        p(out.path()),
        "--types",
        "gaussian_noise",
        "--severities",
        "1-5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(summary["written"], 15);
    assert_eq!(summary["failed"], 0);
    assert_eq!(summary["plan_hash"].as_str().unwrap().len(), 64);
    for sev in 1..=5 {
        assert!(out.path().join(format!("gaussian_noise/{sev}/beach/1.png")).is_file());
    }
    assert!(out.path().join("provenance.json").is_file());
}

#[test]
fn unknown_corruption_lists_valid_names() {
    let data = tempfile::tempdir().unwrap();
    class_dataset(data.path());
    let o = reobench(&[
        "corrupt",
        "--input",
        p(data.path()),
        "--out",
        "/tmp/unused",
        "--types",
        "fog",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("fog") && err.contains("salt_pepper") && err.contains("motion_blur"),
        "{err}"
    );
}

#[test]
fn out_of_range_severity_is_a_config_error() {
    let data = tempfile::tempdir().unwrap();
    class_dataset(data.path());
    let o = reobench(&[
        "corrupt",
        "--input",
        p(data.path()),
        "--out",
        "/tmp/unused",
        "--chain",
        "rotate:7",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn chain_and_partial_failure_exit_status() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    class_dataset(data.path());
    fs::write(data.path().join("farm/broken.png"), b"garbage").unwrap();
    let o = reobench(&[
        "corrupt",
        "--input",
        p(data.path()),
        "--out",
        p(out.path()),
        "--chain",
        "brightness:3,cloud:3,compression:3",
        "--workers",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let summary: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(summary["written"], 3);
    assert_eq!(summary["failed"], 1);
    assert!(out
        .path()
        .join("brightness_contrast+cloud+compression_artifacts/3+3+3/farm/0.png")
        .is_file());
}

#[test]
fn manifest_round_trips_through_corrupt() {
    let data = tempfile::tempdir().unwrap();
    class_dataset(data.path());
    let manifest = data.path().join("manifest.json");
    let o = reobench(&[
        "manifest",
        "--input",
        p(data.path()),
        "--types",
        "haze",
        "--severities",
        "6-9",
        "--seed",
        "7",
        "--out",
        p(&manifest),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = tempfile::tempdir().unwrap();
    let o = reobench(&["corrupt", "--input", p(&manifest), "--out", p(out.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.path().join("haze/9/farm/0.png").is_file());
    assert!(!out.path().join("haze/5").exists());
}

#[test]
fn score_classification() {
    let data = tempfile::tempdir().unwrap();
    class_dataset(data.path());
    let preds = data.path().join("preds.jsonl");
    fs::write(
        &preds,
        "{\"id\": \"beach/0\", \"label\": \"beach\"}\n{\"id\": \"beach/1\", \"class\": \"beach\"}\n{\"id\": \"farm/0\", \"label\": \"farm\"}\n",
    )
    .unwrap();
    let cell = data.path().join("cells/m.json");
    let o = reobench(&[
        "score",
        "--task",
        "classification",
        "--predictions",
        p(&preds),
        "--input",
        p(data.path()),
        "--layout",
        "class_folder",
        "--model",
        "m",
        "--out",
        p(&cell),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "100.00");
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&cell).unwrap()).unwrap();
    assert_eq!(v["corruption"], "clean");
    assert_eq!(v["value"], 100.0);
}

#[test]
fn score_with_unknown_prediction_id_fails() {
    let data = tempfile::tempdir().unwrap();
    class_dataset(data.path());
    let preds = data.path().join("preds.jsonl");
    fs::write(&preds, "{\"id\": \"nope\", \"label\": \"beach\"}\n").unwrap();
    let o = reobench(&[
        "score",
        "--task",
        "classification",
        "--predictions",
        p(&preds),
        "--input",
        p(data.path()),
        "--layout",
        "class_folder",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn score_segmentation_two_by_two() {
    let data = tempfile::tempdir().unwrap();
    png(&data.path().join("images/t.png"), 2, 2, 0);
    fs::create_dir_all(data.path().join("masks")).unwrap();
    let gt = SegMask::new(2, 2, vec![0, 0, 1, 1]).unwrap();
    let pred = SegMask::new(2, 2, vec![0, 1, 1, 1]).unwrap();
    fs::write(data.path().join("masks/t.png"), gt.to_png().unwrap()).unwrap();
    let preds_dir = tempfile::tempdir().unwrap();
    fs::write(preds_dir.path().join("t_pred.png"), pred.to_png().unwrap()).unwrap();
    let preds = preds_dir.path().join("preds.jsonl");
    fs::write(&preds, "{\"id\": \"t\", \"mask\": \"t_pred.png\"}\n").unwrap();
    let o = reobench(&[
        "score",
        "--task",
        "segmentation",
        "--predictions",
        p(&preds),
        "--input",
        p(data.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "58.33");
}

#[test]
fn score_grounding_threshold_is_inclusive() {
    let data = tempfile::tempdir().unwrap();
    png(&data.path().join("images/a.png"), 40, 40, 0);
    fs::write(
        data.path().join("annotations.json"),
        r#"[{"image": "a.png", "expression": "left field", "box": [0, 0, 20, 10]},
            {"image": "a.png", "expression": "right field", "box": [20, 0, 40, 10]}]"#,
    )
    .unwrap();
    // first prediction covers half the target exactly (IoU 0.5), second misses
    let preds = data.path().join("preds.jsonl");
    fs::write(
        &preds,
        "{\"id\": \"a#0\", \"box\": [0, 0, 10, 10]}\n{\"id\": \"a#1\", \"box\": [0, 20, 10, 30]}\n",
    )
    .unwrap();
    let o = reobench(&[
        "score",
        "--task",
        "grounding",
        "--predictions",
        p(&preds),
        "--input",
        p(data.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "50.00");
}

fn write_cells(dir: &Path, model: &str, clean: Option<f64>, cells: &[(&str, f64)]) {
    let mut all = Vec::new();
    if let Some(c) = clean {
        all.push(serde_json::json!({"model": model, "corruption": "clean", "metric": "accuracy", "value": c}));
    }
    for (name, v) in cells {
        all.push(serde_json::json!({"model": model, "corruption": name, "metric": "accuracy", "value": v}));
    }
    fs::write(dir.join(format!("{model}.json")), serde_json::to_string(&all).unwrap()).unwrap();
}

const SATLAS: [(&str, f64); 12] = [
    ("brightness_contrast", 82.54),
    ("cloud", 84.32),
    ("compression_artifacts", 73.36),
    ("data_gaps", 67.23),
    ("gaussian_blur", 78.10),
    ("gaussian_noise", 79.16),
    ("haze", 80.46),
    ("motion_blur", 32.44),
    ("rotate", 72.54),
    ("salt_pepper", 77.56),
    ("scale", 72.54),
    ("translate", 88.54),
];

#[test]
fn report_reproduces_published_row() {
    let cells = tempfile::tempdir().unwrap();
    write_cells(cells.path(), "SATLAS", Some(90.85), &SATLAS);
    let curves = cells.path().join("out/curves.csv");
    let o = reobench(&["report", "--cells", p(cells.path()), "--curves", p(&curves)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("Method,Clean,"));
    let row = lines.next().unwrap();
    assert!(row.starts_with("SATLAS,90.85,"), "{row}");
    assert!(row.ends_with(",74.07,18.47"), "{row}");
    assert!(fs::read_to_string(&curves)
        .unwrap()
        .starts_with("model,corruption,severity,value"));

    let o = reobench(&["report", "--cells", p(cells.path()), "--format", "markdown"]);
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("| :--- |"));
}

#[test]
fn report_without_clean_cell_fails() {
    let cells = tempfile::tempdir().unwrap();
    write_cells(cells.path(), "SATLAS", None, &SATLAS);
    let o = reobench(&["report", "--cells", p(cells.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("SATLAS"));
}

#[test]
fn fidelity_sweep_and_dimension_check() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<Vec<f64>> = (0..20)
        .map(|i| vec![i as f64, (i * i % 7) as f64, 1.0 + (i % 3) as f64])
        .collect();
    let clean = EmbeddingSet::new(rows.clone(), "clean").unwrap();
    fs::write(dir.path().join("clean.bin"), clean.to_bytes()).unwrap();
    fs::write(dir.path().join("same.jsonl"), clean.to_jsonl()).unwrap();
    let o = reobench(&[
        "fidelity",
        "--clean",
        p(&dir.path().join("clean.bin")),
        "--corrupted",
        &format!("1={}", p(&dir.path().join("same.jsonl"))),
        &format!("3={}", p(&dir.path().join("clean.bin"))),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "severity,distance");
    for (line, sev) in lines[1..].iter().zip(["1", "3"]) {
        let (s, d) = line.split_once(',').unwrap();
        assert_eq!(s, sev);
        assert!(d.parse::<f64>().unwrap().abs() < 1e-6, "{line}");
    }

    let narrow = EmbeddingSet::new(rows.iter().map(|r| r[..2].to_vec()).collect(), "narrow").unwrap();
    fs::write(dir.path().join("narrow.bin"), narrow.to_bytes()).unwrap();
    let o = reobench(&[
        "fidelity",
        "--clean",
        p(&dir.path().join("clean.bin")),
        "--corrupted",
        p(&dir.path().join("narrow.bin")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_input_is_an_io_error() {
    let o = reobench(&[
        "fidelity",
        "--clean",
        "/nonexistent/clean.bin",
        "--corrupted",
        "/nonexistent/x.bin",
    ]);
    assert_eq!(o.status.code(), Some(1));
}
