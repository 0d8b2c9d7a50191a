use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use trifield_core::geometry::default_rig;
use trifield_core::geometry::fixtures::dumbbell;
use trifield_core::geometry::write_obj;
use trifield_core::{ElementKind, FeatureSet};

fn trifield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trifield"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = trifield(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn json_of(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn write(path: &Path, value: &Value) {
    std::fs::write(path, value.to_string()).unwrap();
}

/// Dumbbell mesh, its face labels and one-hot part features on disk.
struct Scene {
    dir: tempfile::TempDir,
    labels: Vec<u32>,
}

impl Scene {
    fn new() -> Scene {
        let dir = tempfile::tempdir().unwrap();
        let fx = dumbbell(2);
        write_obj(&fx.mesh, dir.path().join("mesh.obj")).unwrap();
        let mut data = vec![0f32; fx.face_labels.len() * 3];
        for (i, &l) in fx.face_labels.iter().enumerate() {
            data[i * 3 + l as usize] = 1.0;
        }
        FeatureSet::new(ElementKind::Face, 3, data)
            .unwrap()
            .save(dir.path().join("feats.bin"))
            .unwrap();
        write(
            &dir.path().join("labels.json"),
            &json!({"levels": [{"name": "parts", "labels": fx.face_labels}]}),
        );
        write(
            &dir.path().join("manifest.json"),
            &json!({"points": 1024, "labels": "labels.json"}),
        );
        write(
            &dir.path().join("config.json"),
            &json!({"resolution": 16, "channels": 8, "snapshot_every": 10, "feature_hard_start": 20,
                    "sampler": {"masks_per_batch": 2, "positive_pairs": 16, "uniform_negatives": 16,
                                "hard3d_negatives": 16, "feature_hard_negatives": 16}}),
        );
        Scene {
            dir,
            labels: fx.face_labels,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

#[test]
fn missing_proposals_are_named_in_the_error() {
    let s = Scene::new();
    let missing = s.arg("nope.json");
    let out = trifield(&[
        "fit",
        &s.arg("mesh.obj"),
        "--proposals",
        &missing,
        "--out",
        &s.arg("f.bin"),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nope.json"), "{stderr}");
    assert!(!s.path("f.bin").exists());
}

#[test]
fn zero_iteration_fit_writes_field_and_report() {
    let s = Scene::new();
    ok(&[
        "fit",
        &s.arg("mesh.obj"),
        "--proposals",
        &s.arg("manifest.json"),
        "--config",
        &s.arg("config.json"),
        "--iterations",
        "0",
        "--out",
        &s.arg("f.bin"),
        "--report",
        &s.arg("report.json"),
    ]);
    let bytes = std::fs::read(s.path("f.bin")).unwrap();
    assert_eq!(&bytes[..4], b"PFLD");
    let report = json_of(&std::fs::read(s.path("report.json")).unwrap());
    assert_eq!(report["iterations"], 0);
    assert!(report.get("wall_clock_seconds").is_none_or(Value::is_null));

    // The untrained field still segments.
    let seg = json_of(&ok(&["segment", &s.arg("mesh.obj"), &s.arg("f.bin"), "--k", "2"]));
    assert_eq!(seg["k"], 2);
}

#[test]
fn segment_single_and_sweep() {
    let s = Scene::new();
    let seg = json_of(&ok(&["segment", &s.arg("mesh.obj"), &s.arg("feats.bin"), "--k", "3"]));
    let labels: Vec<u32> = serde_json::from_value(seg["labels"].clone()).unwrap();
    let mut pairs: Vec<(u32, u32)> = labels.iter().copied().zip(s.labels.iter().copied()).collect();
    pairs.sort();
    pairs.dedup();
    assert_eq!(pairs.len(), 3, "k=3 recovers the parts");

    let sweep = json_of(&ok(&[
        "segment",
        &s.arg("mesh.obj"),
        &s.arg("feats.bin"),
        "--scales",
        "20",
    ]));
    let ks: Vec<u64> = sweep
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["k"].as_u64().unwrap())
        .collect();
    assert_eq!(ks, (2..22).collect::<Vec<u64>>());

    let out = trifield(&["segment", &s.arg("mesh.obj"), &s.arg("feats.bin")]);
    assert!(!out.status.success(), "--k or --scales is required");
}

#[test]
fn eval_single_sweep_and_batch() {
    let s = Scene::new();
    write(&s.path("gt.json"), &json!({"labels": [0, 0, 0, 0, 0, 1, 1, 1, 1, 1]}));
    write(
        &s.path("pred.json"),
        &json!({"k": 2, "labels": [0, 0, 0, 0, 1, 1, 1, 1, 1, 1]}),
    );
    let r = json_of(&ok(&[
        "eval",
        &s.arg("gt.json"),
        &s.arg("pred.json"),
        "--category",
        "Mouse",
    ]));
    let m = r["mean_miou"].as_f64().unwrap();
    assert!((m - 0.81667).abs() < 5e-6, "{m}");
    assert_eq!(r["shapes"][0]["shape_id"], "gt");
    assert!((r["category_means"]["Mouse"].as_f64().unwrap() - m).abs() < 1e-12);

    write(
        &s.path("sweep.json"),
        &json!([{"k": 1, "labels": vec![0; 10]}, {"k": 2, "labels": [0, 0, 0, 0, 0, 1, 1, 1, 1, 1]}]),
    );
    let r = json_of(&ok(&["eval", &s.arg("gt.json"), &s.arg("sweep.json")]));
    assert_eq!(r["shapes"][0]["best_k"], 2);
    assert_eq!(r["mean_miou"], 1.0);

    write(
        &s.path("batch.json"),
        &json!([{"shape_id": "a", "gt": "gt.json", "pred": "pred.json"},
                {"shape_id": "b", "gt": "gt.json", "pred": "sweep.json"}]),
    );
    let r = json_of(&ok(&["eval", "--batch", &s.arg("batch.json")]));
    assert_eq!(r["shapes"].as_array().unwrap().len(), 2);
    assert!((r["mean_miou"].as_f64().unwrap() - (0.816_666_666_666_666_7 + 1.0) / 2.0).abs() < 1e-12);
}

#[test]
fn hierarchy_covers_every_face() {
    let s = Scene::new();
    let out = s.arg("tree.json");
    ok(&["hierarchy", &s.arg("mesh.obj"), &s.arg("feats.bin"), "--out", &out]);
    let tree = json_of(&std::fs::read(&out).unwrap());
    assert_eq!(tree["leaves"], s.labels.len());
    assert_eq!(tree["nodes"].as_array().unwrap().len(), s.labels.len() - 1);
}

#[test]
fn self_coseg_and_identity_correspondence() {
    let s = Scene::new();
    let (mesh, feats) = (s.arg("mesh.obj"), s.arg("feats.bin"));
    let pair = [
        "--source-mesh",
        &mesh,
        "--source-features",
        &feats,
        "--target-mesh",
        &mesh,
        "--target-features",
        &feats,
    ];
    write(&s.path("seg.json"), &json!({"k": 3, "labels": s.labels}));
    let mut args = vec!["coseg"];
    args.extend(pair);
    let seg_path = s.arg("seg.json");
    args.extend(["--source-seg", &seg_path]);
    let seg = json_of(&ok(&args));
    let labels: Vec<u32> = serde_json::from_value(seg["labels"].clone()).unwrap();
    assert_eq!(labels, s.labels);

    let mut args = vec!["correspond"];
    args.extend(pair);
    let c = json_of(&ok(&args));
    let matched: Vec<u32> = serde_json::from_value(c["target_face"].clone()).unwrap();
    // One-hot features tie within a part; a match must stay in the part.
    for (f, &t) in matched.iter().enumerate() {
        assert_eq!(s.labels[t as usize], s.labels[f]);
    }
}

#[test]
fn project_masks_to_proposals() {
    let s = Scene::new();
    let cam = default_rig(32, 32)[0].clone();
    let mut pgm = b"P5\n32 32\n255\n".to_vec();
    pgm.extend((0..32 * 32).map(|i| if i % 32 < 16 { 255u8 } else { 0 }));
    std::fs::write(s.path("half.pgm"), pgm).unwrap();
    write(&s.path("masks.json"), &json!([{"mask": "half.pgm", "camera": cam}]));
    let out = s.arg("props.json");
    ok(&[
        "proposals",
        "project",
        &s.arg("mesh.obj"),
        "--masks",
        &s.arg("masks.json"),
        "--points",
        "2048",
        "--seed",
        "3",
        "--out",
        &out,
    ]);
    let file = json_of(&std::fs::read(&out).unwrap());
    assert_eq!(file["points"], 2048);
    assert_eq!(file["seed"], 3);
    assert_eq!(file["proposals"].as_array().unwrap().len(), 1);

    // A manifest drawing a different canonical set is rejected.
    write(
        &s.path("m2.json"),
        &json!({"points": 1024, "seed": 3, "proposals": "props.json"}),
    );
    let bad = trifield(&[
        "fit",
        &s.arg("mesh.obj"),
        "--proposals",
        &s.arg("m2.json"),
        "--iterations",
        "0",
        "--out",
        &s.arg("f.bin"),
    ]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("props.json"));
}

#[test]
fn fit_loss_trends_down() {
    let s = Scene::new();
    ok(&[
        "fit",
        &s.arg("mesh.obj"),
        "--proposals",
        &s.arg("manifest.json"),
        "--config",
        &s.arg("config.json"),
        "--iterations",
        "120",
        "--out",
        &s.arg("f.bin"),
        "--report",
        &s.arg("report.json"),
    ]);
    let report = json_of(&std::fs::read(s.path("report.json")).unwrap());
    let losses: Vec<f64> = report["snapshots"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["loss"].as_f64().unwrap())
        .collect();
    assert_eq!(losses.len(), 12);
    let head: f64 = losses[..3].iter().sum();
    let tail: f64 = losses[losses.len() - 3..].iter().sum();
    assert!(tail < head, "{losses:?}");
}

#[test]
fn trivial_cuts_and_perfect_prediction() {
    let s = Scene::new();
    let seg = json_of(&ok(&["segment", &s.arg("mesh.obj"), &s.arg("feats.bin"), "--k", "1"]));
    assert_eq!(seg["k"], 1);
    assert!(seg["labels"].as_array().unwrap().iter().all(|l| l == 0));

    let too_many = (s.labels.len() + 1).to_string();
    let out = trifield(&["segment", &s.arg("mesh.obj"), &s.arg("feats.bin"), "--k", &too_many]);
    assert!(!out.status.success());

    write(&s.path("gt.json"), &json!({"labels": s.labels}));
    write(&s.path("pred.json"), &json!({"k": 3, "labels": s.labels}));
    let r = json_of(&ok(&["eval", &s.arg("gt.json"), &s.arg("pred.json")]));
    assert_eq!(r["mean_miou"], 1.0);
}
