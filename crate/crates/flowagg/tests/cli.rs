use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use flowagg::manifest::{read_json, FrameManifest};
use flowagg::raster_io::{read_labels, read_mask, write_activation, write_labels, write_raster, Raster};
use flowagg_core::{ActivationMap, ClassId, LabelMap, UnitRaster, IGNORE};
use serde_json::Value;

const CAT: ClassId = ClassId(8);

fn flowagg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowagg"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run flowagg")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const CORPUS: &str = r#"{"videos":[
 {"video_id":"moving","search_class":"cat","scene":{"seed":4,"width":40,"height":32,"frames":6,
   "objects":[{"class_id":8,"shape":{"kind":"rectangle","width":10,"height":8},"position":[3,4],"velocity":[2,1]}]}},
 {"video_id":"flicker","search_class":"cat","dropout_frames":[1,3],"scene":{"seed":5,"width":40,"height":32,"frames":6,
   "objects":[{"class_id":8,"shape":{"kind":"disk","radius":5},"position":[20,16],"velocity":[1,0]}]}}
]}"#;

fn synth(dir: &Path) {
    fs::write(dir.join("corpus.json"), CORPUS).unwrap();
    let o = flowagg(&["synth", "--spec", "corpus.json", "--out", "data"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&flowagg(&["nonsense"], tmp.path())), 1);
    assert_eq!(code(&flowagg(&["pipeline"], tmp.path())), 1);
    assert_eq!(code(&flowagg(&["--help"], tmp.path())), 0);
    assert_eq!(code(&flowagg(&["--version"], tmp.path())), 0);
}

#[test]
fn bad_config_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let run = |extra: &[&str]| {
        let mut args = vec!["pipeline", "--dataset", "data/dataset.json", "--out", "out"];
        args.extend_from_slice(extra);
        code(&flowagg(&args, tmp.path()))
    };
    assert_eq!(run(&["--tau", "1.5"]), 1);
    assert_eq!(run(&["--k", "0"]), 1);
    assert_eq!(run(&["--warp-mode", "sideways"]), 1);
    fs::write(tmp.path().join("cfg.json"), r#"{"tau": 0.9, "typo": 1}"#).unwrap();
    assert_eq!(run(&["--config", "cfg.json"]), 1);
    assert_eq!(run(&["--config", "missing.json"]), 1);
}

#[test]
fn pipeline_subcommand_runs_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    fs::write(tmp.path().join("cfg.json"), r#"{"k": 4, "warp_mode": "backward-sample"}"#).unwrap();
    let o = flowagg(
        &["pipeline", "--dataset", "data/dataset.json", "--out", "out", "--config", "cfg.json", "--workers", "2"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = read_json(&tmp.path().join("out/report.json")).unwrap();
    assert_eq!(report["videos_in"], 2);
    assert_eq!(report["videos_kept"], 1);
    let sidecar: Value = read_json(&tmp.path().join("out/moving.json")).unwrap();
    assert_eq!(sidecar["config"]["k"], 4);
    assert_eq!(sidecar["config"]["warp_mode"], "backward-sample");
    assert_eq!(sidecar["label_set"], serde_json::json!(["cat"]));
}

#[test]
fn every_video_failing_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    for v in ["moving", "flicker"] {
        fs::write(tmp.path().join("data").join(v).join("scores.json"), "not json").unwrap();
    }
    let o = flowagg(&["pipeline", "--dataset", "data/dataset.json", "--out", "out"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(tmp.path().join("out/report.json").exists());
}

#[test]
fn filter_lists_windows() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let o = flowagg(
        &[
            "filter",
            "--scores",
            "data/moving/scores.json",
            "data/flicker/scores.json",
            "--classes",
            "data/classes.txt",
            "--window-overlap",
            "non-overlapping",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["dropped"], serde_json::json!(["flicker"]));
    let moving = &v["videos"][0];
    assert_eq!(moving["kept"], true);
    assert_eq!(moving["windows"].as_array().unwrap().len(), 1);
    assert_eq!(moving["picked"]["start_frame"], 0);
    assert_eq!(moving["picked"]["label_set"], serde_json::json!(["cat"]));
}

#[test]
fn fuse_then_aggregate_reproduces_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let o = flowagg(&["fuse", "--manifest", "data/moving/frames.json", "--out", "fused"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fused: FrameManifest = read_json(&tmp.path().join("fused/frames.json")).unwrap();
    assert_eq!(fused.frames.len(), 6);

    let o = flowagg(&["aggregate", "--manifest", "fused/frames.json", "--out", "agg"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let got = read_mask(tmp.path().join("agg/mask_c08.png"), CAT, None).unwrap();
    let want = read_mask(tmp.path().join("data/moving/oracle/union_c08.png"), CAT, None).unwrap();
    assert_eq!(got, want);

    let o = flowagg(&["aggregate", "--manifest", "fused/frames.json", "--out", "agg", "--start", "4", "--frames", "5"], tmp.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn compose_and_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (w, h) = (6, 1);
    let cat = ActivationMap::new(CAT, w, h, vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let dog = ActivationMap::new(ClassId(12), w, h, vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
    write_activation(dir.join("cat.png"), &cat).unwrap();
    write_activation(dir.join("dog.png"), &dog).unwrap();
    let sal = UnitRaster::new(w, h, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
    write_raster(dir.join("sal.png"), &Raster::Unit(sal)).unwrap();

    let compose = |out: &str, extra: &[&str]| {
        let mut args = vec!["compose", "--mask", "8=cat.png", "--mask", "12=dog.png", "--saliency", "sal.png", "--out", out];
        args.extend_from_slice(extra);
        flowagg(&args, dir)
    };
    assert_eq!(code(&compose("plain.png", &[])), 0);
    let labels = read_labels(dir.join("plain.png"), None).unwrap();
    assert_eq!(labels.labels(), &[8, IGNORE, 12, IGNORE, 0, 0]);

    let o = compose(
        "prio.png",
        &["--conflict-policy", "priority-by-score", "--tie-score", "8=0.7", "--tie-score", "12=0.9"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let labels = read_labels(dir.join("prio.png"), None).unwrap();
    assert_eq!(labels.labels(), &[8, 12, 12, IGNORE, 0, 0]);

    fs::create_dir_all(dir.join("gt")).unwrap();
    fs::create_dir_all(dir.join("pred")).unwrap();
    let gt = LabelMap::new(w, h, vec![8, 12, 12, 0, 0, 0]).unwrap();
    write_labels(dir.join("gt/x.png"), &gt).unwrap();
    fs::copy(dir.join("prio.png"), dir.join("pred/x.png")).unwrap();
    let mut names = String::from("background\n");
    for i in 1..=20 {
        names += &format!("class{i}\n");
    }
    fs::write(dir.join("classes.txt"), names).unwrap();
    let eval = |extra: &[&str]| {
        let mut args = vec!["eval", "--gt", "gt", "--pred", "pred", "--classes", "classes.txt", "--report", "ev.json"];
        args.extend_from_slice(extra);
        flowagg(&args, dir)
    };
    // Predictions may not carry the ignore label unless remapped.
    assert_eq!(code(&eval(&[])), 2);
    let o = eval(&["--ignore-as-background"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("mean"));
    let report: Value = read_json(&dir.join("ev.json")).unwrap();
    assert_eq!(report["mean_iou"], 1.0);
    assert_eq!(report["images"], 1);
}
