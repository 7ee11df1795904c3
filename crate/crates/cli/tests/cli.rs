//! End-to-end behavior of the `tabseq` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tabseq::eval::{EvalReport, GtFile, Measure};
use tabseq::experiment::evaluate_image;
use tabseq::model::{checkpoint, init_params, CellType, ModelConfig, ModelParams};
use tabseq::postprocess::{write_separator_file, SeparatorSet};
use tabseq::preprocess::{GrayImage, PreprocessConfig};
use tabseq::synth::{generate, gt_path_for, read_manifest};
use tabseq::{imageio, Axis};

/// Small preprocessing so training runs fast in debug builds.
const SMALL: [&str; 4] = ["--set", "target_width=40", "--set", "target_height=16"];

fn tabseq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tabseq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, n: usize, seed: u64) {
    ok(&tabseq(&["synth", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", p(dir)]));
}

fn dir_listing(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn read_config(path: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[test]
fn synth_writes_the_requested_corpus_deterministically() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    synth(&a, 10, 7);
    synth(&b, 10, 7);
    let files = dir_listing(&a);
    assert_eq!(files.keys().filter(|f| f.ends_with(".png")).count(), 10);
    assert_eq!(files.keys().filter(|f| f.ends_with(".gt.json")).count(), 10);
    assert!(files.contains_key("manifest.csv"));
    assert_eq!(files, dir_listing(&b));
    let manifest = read_manifest(&a).unwrap();
    assert_eq!(manifest.len(), 10);
    assert_eq!(manifest[3].seed, 10);
}

#[test]
fn infeasible_geometry_exits_2_without_output() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("c");
    let r = tabseq(&["synth", "--n", "3", "--width", "40", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("width 40") && err.contains("columns"), "{err}");
    assert!(!out.exists());
}

#[test]
fn unknown_config_key_exits_2() {
    let r = tabseq(&["gradcheck", "--set", "no_such_key=1"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("no_such_key"));
}

#[test]
fn train_defaults_follow_the_axis() {
    let t = tempfile::tempdir().unwrap();
    let corpus = t.path().join("corpus");
    synth(&corpus, 2, 1);
    for (axis, epochs) in [("column", "10"), ("row", "35")] {
        let out = t.path().join(axis);
        let mut args = vec!["train", "--corpus", p(&corpus), "--axis", axis, "--hidden", "2", "--out", p(&out)];
        args.extend(SMALL);
        ok(&tabseq(&args));
        let cfg = read_config(&out.join("config.txt"));
        assert_eq!(cfg["epochs"], epochs);
        assert_eq!(cfg["learning_rate"], "0.0005");
        assert_eq!(cfg["cell"], "gru");
        let log = fs::read_to_string(out.join("loss.csv")).unwrap();
        assert_eq!(log.lines().count(), 1 + epochs.parse::<usize>().unwrap());
    }
}

#[test]
fn zero_epochs_saves_the_initialization_and_training_is_reproducible() {
    let t = tempfile::tempdir().unwrap();
    let corpus = t.path().join("corpus");
    synth(&corpus, 3, 4);
    let run = |name: &str, epochs: &str| -> PathBuf {
        let out = t.path().join(name);
        let mut args = vec![
            "train", "--corpus", p(&corpus), "--axis", "row", "--cell", "lstm", "--hidden", "3",
            "--epochs", epochs, "--seed", "9", "--out", p(&out),
        ];
        args.extend(SMALL);
        ok(&tabseq(&args));
        out.join("model.tsgr")
    };
    let init = run("init", "0");
    let pre = PreprocessConfig { target_width: 40, target_height: 16, ..Default::default() };
    let expected = init_params(&ModelConfig::for_preprocess(Axis::Row, CellType::Lstm, &pre, Some(3)), 9);
    assert_eq!(fs::read(&init).unwrap(), checkpoint::to_bytes(&expected));

    let (a, b) = (run("a", "2"), run("b", "2"));
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    assert_ne!(bytes, fs::read(&init).unwrap());
    assert_eq!(checkpoint::to_bytes(&checkpoint::load(&a).unwrap()), bytes);
}

#[test]
fn invalid_training_config_writes_nothing() {
    let t = tempfile::tempdir().unwrap();
    let corpus = t.path().join("corpus");
    synth(&corpus, 1, 0);
    let out = t.path().join("out");
    let r = tabseq(&["train", "--corpus", p(&corpus), "--axis", "row", "--lr", "-1", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
    let r = tabseq(&["train", "--corpus", p(&corpus), "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
    fs::remove_file(gt_path_for(&corpus.join("table_00000.png"))).unwrap();
    let r = tabseq(&["train", "--corpus", p(&corpus), "--axis", "row", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("table_00000.gt.json"));
    assert!(!out.exists());
}

/// A model whose output ignores its input and always favors whitespace.
fn whitespace_model(axis: Axis, pre: &PreprocessConfig) -> ModelParams {
    let mut m = ModelParams::zeros(ModelConfig::for_preprocess(axis, CellType::Gru, pre, Some(2)));
    m.dense_b = vec![-5.0, 5.0];
    m
}

#[test]
fn blank_image_yields_zero_separators() {
    let t = tempfile::tempdir().unwrap();
    let pre = PreprocessConfig { target_width: 40, target_height: 16, ..Default::default() };
    let (rc, cc) = (t.path().join("r.tsgr"), t.path().join("c.tsgr"));
    checkpoint::save(&whitespace_model(Axis::Row, &pre), &rc).unwrap();
    checkpoint::save(&whitespace_model(Axis::Column, &pre), &cc).unwrap();
    let img = t.path().join("blank.png");
    imageio::save_png(&img, &GrayImage::filled(120, 50, 255).unwrap()).unwrap();
    let out = t.path().join("sep");
    let mut args = vec!["infer", p(&img), "--row-checkpoint", p(&rc), "--column-checkpoint", p(&cc), "--out", p(&out)];
    args.extend(SMALL);
    ok(&tabseq(&args));
    for axis in ["row", "column"] {
        let text = fs::read_to_string(out.join(format!("blank.{axis}.sep"))).unwrap();
        assert_eq!(text, "axis,position_resized,position_original\n");
    }
}

#[test]
fn bad_checkpoints_fail_before_any_output() {
    let t = tempfile::tempdir().unwrap();
    let pre = PreprocessConfig { target_width: 40, target_height: 16, ..Default::default() };
    let img = t.path().join("blank.png");
    imageio::save_png(&img, &GrayImage::filled(60, 30, 255).unwrap()).unwrap();
    let good = t.path().join("c.tsgr");
    checkpoint::save(&whitespace_model(Axis::Column, &pre), &good).unwrap();

    let mut bytes = fs::read(&good).unwrap();
    bytes[40] ^= 0x10;
    let corrupt = t.path().join("bad.tsgr");
    fs::write(&corrupt, &bytes).unwrap();
    let out = t.path().join("sep");
    let mut args = vec!["infer", p(&img), "--column-checkpoint", p(&corrupt), "--out", p(&out)];
    args.extend(SMALL);
    let r = tabseq(&args);
    assert_ne!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stderr).contains("CRC"));
    assert!(!out.exists());

    let mut args = vec!["infer", p(&img), "--row-checkpoint", p(&good), "--out", p(&out)];
    args.extend(SMALL);
    let r = tabseq(&args);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("column model") && err.contains("row checkpoint"), "{err}");
    assert!(!out.exists());
}

fn write_gt_detections(corpus: &Path, dir: &Path, empty: bool) {
    fs::create_dir_all(dir).unwrap();
    for e in read_manifest(corpus).unwrap() {
        let stem = e.file.trim_end_matches(".png");
        let gt = GtFile::load(&gt_path_for(&corpus.join(&e.file))).unwrap();
        for axis in Axis::BOTH {
            let path = dir.join(format!("{stem}.{axis}.sep"));
            if empty {
                fs::write(path, "").unwrap();
            } else {
                let g = gt.axis(axis);
                write_separator_file(&path, &g.separators(), g.extent, g.extent).unwrap();
            }
        }
    }
}

fn read_eval_csv(path: &Path) -> BTreeMap<String, (usize, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), (f[1].parse().unwrap(), f[2].parse().unwrap()))
        })
        .collect()
}

#[test]
fn ground_truth_detections_score_perfectly_and_empty_files_miss_everything() {
    let t = tempfile::tempdir().unwrap();
    let corpus = t.path().join("corpus");
    synth(&corpus, 4, 21);

    let det = t.path().join("gt_det");
    write_gt_detections(&corpus, &det, false);
    let out = t.path().join("gt_eval");
    let text = ok(&tabseq(&["eval", "--corpus", p(&corpus), "--detections", p(&det), "--out", p(&out)]));
    assert!(text.contains("precision 1.0000, recall 1.0000"));
    for axis in ["row", "column"] {
        let csv = read_eval_csv(&out.join(format!("eval_{axis}.csv")));
        assert_eq!(csv["correct"].1, 100.0);
        for k in ["partial", "over_segmented", "under_segmented", "missed", "false_positive"] {
            assert_eq!(csv[k].0, 0, "{axis} {k}");
        }
    }

    let det = t.path().join("empty_det");
    write_gt_detections(&corpus, &det, true);
    let out = t.path().join("empty_eval");
    ok(&tabseq(&["eval", "--corpus", p(&corpus), "--detections", p(&det), "--out", p(&out)]));
    for axis in ["row", "column"] {
        let csv = read_eval_csv(&out.join(format!("eval_{axis}.csv")));
        assert_eq!(csv["missed"].1, 100.0);
        assert_eq!(csv["correct"].0, 0);
    }
}

#[test]
fn missing_detection_files_are_listed() {
    let t = tempfile::tempdir().unwrap();
    let corpus = t.path().join("corpus");
    synth(&corpus, 2, 3);
    let det = t.path().join("det");
    write_gt_detections(&corpus, &det, false);
    fs::remove_file(det.join("table_00001.column.sep")).unwrap();
    fs::remove_file(det.join("table_00000.row.sep")).unwrap();
    let r = tabseq(&["eval", "--corpus", p(&corpus), "--detections", p(&det)]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("table_00001.column.sep") && err.contains("table_00000.row.sep"), "{err}");
    // a single axis still reports its own missing file
    let r = tabseq(&["eval", "--corpus", p(&corpus), "--detections", p(&det), "--axis", "column"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn aggregate_equals_hand_summed_per_image_reports() {
    let t = tempfile::tempdir().unwrap();
    let corpus = t.path().join("corpus");
    synth(&corpus, 3, 30);
    let det = t.path().join("det");
    fs::create_dir_all(&det).unwrap();
    let pre = PreprocessConfig::default();
    let mut per_image: Vec<EvalReport> = Vec::new();
    for (i, e) in read_manifest(&corpus).unwrap().iter().enumerate() {
        let stem = e.file.trim_end_matches(".png");
        let sample = generate(&Default::default(), e.seed).unwrap();
        let g = &sample.gt_rows;
        let mut seps = g.separators().positions_original;
        // image 0: drop a separator (under-segmentation), image 1: add a
        // spurious one inside a span, image 2: exact
        match i {
            0 => {
                seps.remove(0);
            }
            1 => {
                let (a, b) = g.content_spans[0];
                seps.push((a + b) / 2);
                seps.sort_unstable();
            }
            _ => {}
        }
        let set = SeparatorSet::identity(Axis::Row, seps);
        write_separator_file(&det.join(format!("{stem}.row.sep")), &set, g.extent, g.extent).unwrap();
        per_image.push(evaluate_image(&sample.image, g, Some(&set), &pre).unwrap());
    }
    let out = t.path().join("eval");
    ok(&tabseq(&["eval", "--corpus", p(&corpus), "--detections", p(&det), "--axis", "row", "--out", p(&out)]));
    let csv = read_eval_csv(&out.join("eval_row.csv"));

    let m: usize = per_image.iter().map(|r| r.m).sum();
    let n: usize = per_image.iter().map(|r| r.n).sum();
    assert_ne!(per_image[0], per_image[2]);
    for measure in Measure::ALL {
        let count: usize = per_image.iter().map(|r| r.count(measure)).sum();
        let den = if matches!(measure, Measure::UnderSegmented | Measure::FalsePositive) { n } else { m };
        let (got_count, got_pct) = csv[measure.key()];
        assert_eq!(got_count, count, "{measure:?}");
        assert!((got_pct - 100.0 * count as f64 / den as f64).abs() < 1e-4, "{measure:?}");
    }
    assert!(csv["under_segmented"].0 >= 1);
}

#[test]
fn trained_model_output_is_readable_by_eval() {
    let t = tempfile::tempdir().unwrap();
    let corpus = t.path().join("corpus");
    synth(&corpus, 2, 12);
    let model = t.path().join("model");
    let mut args = vec!["train", "--corpus", p(&corpus), "--axis", "column", "--hidden", "2", "--epochs", "1", "--out", p(&model)];
    args.extend(SMALL);
    ok(&tabseq(&args));
    let det = t.path().join("det");
    let ckpt = model.join("model.tsgr");
    let mut args = vec!["infer", "--corpus", p(&corpus), "--column-checkpoint", p(&ckpt), "--out", p(&det), "--overlay"];
    args.extend(SMALL);
    ok(&tabseq(&args));
    assert!(det.join("table_00000.overlay.png").exists());
    let text = ok(&tabseq(&["eval", "--corpus", p(&corpus), "--detections", p(&det), "--axis", "column"]));
    assert!(text.contains("Columns (2 images)"), "{text}");
}

#[test]
fn gradcheck_flags_are_routed_and_echoed() {
    let text = ok(&tabseq(&["gradcheck", "--cell", "lstm", "--axis", "row", "--eps", "1e-3"]));
    let mut lines = text.lines();
    assert!(lines.next().unwrap().contains("eps=1e-3"), "{text}");
    let rest: Vec<&str> = lines.collect();
    assert_eq!(rest.len(), 1);
    assert!(rest[0].starts_with("lstm") && rest[0].contains("row"));

    let r = tabseq(&["gradcheck", "--cell", "gru", "--threshold", "1e-300"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stdout).contains("FAIL"));
}

#[test]
fn benchmark_report_is_reproducible_and_complete() {
    let t = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        tabseq(&[
            "benchmark", "--epochs", "1", "--seed", "3", "--out", p(out),
            "--set", "train_size=2", "--set", "test_size=2",
            "--set", "column_hidden=2", "--set", "row_hidden=2",
            "--set", "target_width=40", "--set", "target_height=16",
        ])
    };
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    let text = ok(&args(&a));
    ok(&args(&b));
    assert_eq!(fs::read(a.join("report.csv")).unwrap(), fs::read(b.join("report.csv")).unwrap());
    assert_eq!(fs::read_to_string(a.join("report.txt")).unwrap(), text);
    let csv = fs::read_to_string(a.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 6);
    for axis in ["row", "column"] {
        for cell in ["gru", "lstm"] {
            for m in Measure::ALL {
                assert!(csv.contains(&format!("{axis},{cell},{},", m.key())));
            }
        }
    }
}
