use amodal_cli::{run, Outcome, EXIT_DOMAIN, EXIT_OK, EXIT_USAGE};
use amodal_core::maskops::BinaryMask;
use amodal_core::pgm::{self, GrayImage};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;

fn amodal(args: &[&str]) -> Outcome {
    run(std::iter::once("amodal").chain(args.iter().copied()))
}

fn json_of(out: &Outcome) -> Value {
    assert_eq!(out.code, EXIT_OK, "stderr: {}", out.stderr);
    serde_json::from_str(&out.stdout).unwrap()
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name).to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_mask(dir: &Path, name: &str, m: &BinaryMask) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, m.to_pgm()).unwrap();
    p
}

#[test]
fn pick_solid_square() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_mask(dir.path(), "m.pgm", &BinaryMask::from_fn(5, 5, |_, _| true).unwrap());
    let out = amodal(&["--json", "pick", "--mask", s(&m)]);
    assert_eq!(out.code, EXIT_OK);
    assert_eq!(out.stdout.trim(), r#"{"x":2,"y":2,"clearance":3.0}"#);
    // no background anywhere once the border stops counting
    let neutral = amodal(&["--json", "pick", "--mask", s(&m), "--border", "neutral"]);
    assert_eq!(neutral.code, EXIT_DOMAIN);
    assert!(serde_json::from_str::<Value>(&neutral.stdout).unwrap()["error"].is_string());
}

#[test]
fn correlate_table_rows() {
    let v = json_of(&amodal(&["--json", "correlate", "--pairs", &data("table3_gda.json")]));
    let r2 = v["r2"].as_f64().unwrap();
    assert!((r2 - 0.986).abs() <= 0.001, "{r2}");
    assert_eq!(v["n"], 4);

    let dir = tempfile::tempdir().unwrap();
    let cols = dir.path().join("cols.json");
    std::fs::write(&cols, r#"{"x": [0.872, 0.888, 0.569, 0.372], "y": [92.59, 85.18, 48.14, 22.22]}"#).unwrap();
    let w = json_of(&amodal(&["--json", "correlate", "--pairs", s(&cols)]));
    assert_eq!(w["r2"], v["r2"]);

    std::fs::write(&cols, r#"{"pairs": [[1, 2]]}"#).unwrap();
    assert_eq!(amodal(&["correlate", "--pairs", s(&cols)]).code, EXIT_DOMAIN);
}

#[test]
fn harvest_from_counts_and_log() {
    let v = json_of(&amodal(&["--json", "harvest-report", "--picked", "50,46,26,12", "--total", "54"]));
    let pct: Vec<&str> = v["levels"].as_array().unwrap().iter().map(|l| l["percent_text"].as_str().unwrap()).collect();
    assert_eq!(pct, ["92.59", "85.18", "48.14", "22.22"]);
    let w = json_of(&amodal(&["--json", "harvest-report", "--log", &data("harvest_yolo11.json")]));
    let pct: Vec<&str> = w["levels"].as_array().unwrap().iter().map(|l| l["percent_text"].as_str().unwrap()).collect();
    assert_eq!(pct, ["96.29", "85.18", "44.44", "18.51"]);
    assert_eq!(amodal(&["harvest-report", "--picked", "60", "--total", "54"]).code, EXIT_DOMAIN);
}

const GT: &str = r#"{
  "images": [{"id": 1, "w": 64, "h": 48, "file": "a.pgm"}, {"id": 2, "w": 64, "h": 48, "file": "b.pgm"}],
  "instances": [
    {"image": 1, "class": 0, "amodal": [[4, 4], [24, 4], [24, 20], [4, 20]],
     "visible": [[4, 4], [14, 4], [14, 20], [4, 20]], "occlusion": "medium"},
    {"image": 1, "class": 0, "amodal": [[30, 10], [55, 10], [42, 40]], "occlusion": "zero"},
    {"image": 2, "class": 1, "amodal": [[10, 10], [40, 12], [35, 40], [8, 30]], "occlusion": "low"}
  ]
}"#;

#[test]
fn eval_identical_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.json");
    std::fs::write(&gt, GT).unwrap();
    let out_file = dir.path().join("report.json");
    let v = json_of(&amodal(&[
        "--json", "eval", "--gt", s(&gt), "--pred", s(&gt), "--by-occlusion", "--workers", "2", "--out", s(&out_file),
    ]));
    assert_eq!(v["map50_95"], 1.0);
    assert_eq!(v["map50"], 1.0);
    assert_eq!((v["precision"].as_f64(), v["recall"].as_f64()), (Some(1.0), Some(1.0)));
    assert_eq!(v["per_occlusion_level"].as_object().unwrap().len(), 3);
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&out_file).unwrap()).unwrap();
    assert_eq!(written, v);
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 2, "stray temporary files: {names:?}");
}

#[test]
fn eval_bad_annotations_is_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.json");
    std::fs::write(&gt, GT.replace(r#""image": 2, "class": 1"#, r#""image": 7, "class": 1"#)).unwrap();
    let out = amodal(&["eval", "--gt", s(&gt), "--pred", s(&gt)]);
    assert_eq!(out.code, EXIT_DOMAIN);
    assert!(out.stderr.contains("instances[2].image"), "{}", out.stderr);
}

#[test]
fn locate_through_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let calib = dir.path().join("calib.txt");
    std::fs::write(
        &calib,
        "[intrinsics]\n600 600 32 24\n[hand_eye]\n1 0 0\n0 1 0\n0 0 1\n0.05 0 0.1\n[ee_to_base]\n0 -1 0\n1 0 0\n0 0 1\n0.3 0.2 0.5\n",
    )
    .unwrap();
    let mut depth = GrayImage::new(64, 48, 65535);
    depth.data.fill(800);
    depth.set(40, 30, 0);
    let dpath = dir.path().join("depth.pgm");
    std::fs::write(&dpath, pgm::encode(&depth)).unwrap();

    let v = json_of(&amodal(&["--json", "locate", "--x", "40", "--y", "30", "--depth", s(&dpath), "--calib", s(&calib)]));
    assert_eq!(v["depth_m"], 0.8);
    let (xc, yc, zc) = ((40.0 - 32.0) * 0.8 / 600.0, (30.0 - 24.0) * 0.8 / 600.0, 0.8);
    let (xe, ye, ze) = (xc + 0.05, yc, zc + 0.1);
    let expect = [-ye + 0.3, xe + 0.2, ze + 0.5];
    for (k, e) in ["x", "y", "z"].iter().zip(expect) {
        assert!((v["base"][k].as_f64().unwrap() - e).abs() < 1e-12, "{k}: {v}");
    }

    let m = write_mask(dir.path(), "m.pgm", &BinaryMask::from_fn(64, 48, |x, y| (30..51).contains(&x) && (20..41).contains(&y)).unwrap());
    let w = json_of(&amodal(&["--json", "locate", "--mask", s(&m), "--depth", s(&dpath), "--calib", s(&calib)]));
    assert_eq!((w["pixel"]["u"].as_u64(), w["pixel"]["v"].as_u64()), (Some(40), Some(30)));
    assert_eq!(w["base"], v["base"]);

    assert_eq!(amodal(&["locate", "--x", "1", "--depth", s(&dpath), "--calib", s(&calib)]).code, EXIT_USAGE);
}

#[test]
fn plan_offsets_and_schedule() {
    let v = json_of(&amodal(&["--json", "plan", "--target", "0.4,-0.1,0.3", "--steps", "5", "--duration", "2"]));
    let pos = |k: &str| -> [f64; 3] {
        let p = &v["plan"][k]["position"];
        [p["x"].as_f64().unwrap(), p["y"].as_f64().unwrap(), p["z"].as_f64().unwrap()]
    };
    let d = |a: [f64; 3], b: [f64; 3]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    let target = [0.4, -0.1, 0.3];
    assert!((d(pos("grasp"), target) - 0.02).abs() < 1e-12);
    assert!((d(pos("pre_grasp"), target) - 0.10).abs() < 1e-12);
    let sched = v["schedule"].as_array().unwrap();
    assert_eq!(sched.len(), 5);
    assert_eq!(sched[0]["s"], 0.0);
    assert_eq!(sched[4]["s"], 1.0);
    assert!((sched[2]["s"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(amodal(&["plan", "--target", "1,2"]).code, EXIT_USAGE);
    assert_eq!(amodal(&["plan", "--target", "0.4,0,0.3", "--margin=-1"]).code, EXIT_DOMAIN);
}

#[test]
fn synth_then_pick_and_augment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scenes");
    let v = json_of(&amodal(&["--json", "--seed", "4", "synth", "--out-dir", s(&out)]));
    let fruits = v["fruits"].as_array().unwrap();
    let levels: Vec<&str> = fruits.iter().map(|f| f["level"].as_str().unwrap()).collect();
    assert_eq!(levels, ["zero", "low", "medium", "high"]);
    for f in fruits {
        let clear = |key: &str| {
            let p = out.join(f[key].as_str().unwrap());
            json_of(&amodal(&["--json", "pick", "--mask", s(&p)]))["clearance"].as_f64().unwrap()
        };
        assert!(clear("amodal_mask") >= clear("visible_mask"));
    }
    let again = json_of(&amodal(&["--json", "--seed", "4", "synth", "--out-dir", s(&dir.path().join("b"))]));
    assert_eq!(again, v);
    assert_eq!(
        std::fs::read(out.join("scene0.pgm")).unwrap(),
        std::fs::read(dir.path().join("b/scene0.pgm")).unwrap()
    );

    let aug = dir.path().join("aug");
    let a = json_of(&amodal(&[
        "--json", "augment", "--ann", s(&out.join("annotations.json")), "--images", s(&out), "--out-dir", s(&aug),
    ]));
    assert_eq!((a["images"].as_u64(), a["instances"].as_u64()), (Some(3), Some(12)));
    let set = amodal_core::dataset::AnnotationSet::load(&aug.join("annotations.json")).unwrap();
    for img in &set.images {
        let decoded = pgm::decode(&std::fs::read(aug.join(&img.file)).unwrap()).unwrap();
        assert_eq!((decoded.width, decoded.height), (img.w, img.h));
    }
}

#[test]
fn nn_check_passes() {
    let v = json_of(&amodal(&["--json", "nn-check", "--quick"]));
    assert_eq!(v["pass"], true);
    assert!(v["checks"].as_array().unwrap().len() >= 7);
}

#[test]
fn usage_errors_exit_two() {
    for args in [&["pick"][..], &["pick", "--mask", "m.pgm", "--bogus"], &["frobnicate"], &[]] {
        let out = amodal(args);
        assert_eq!(out.code, EXIT_USAGE, "{args:?}");
        assert!(out.stdout.is_empty());
    }
    let help = amodal(&["--help"]);
    assert_eq!(help.code, EXIT_OK);
    assert!(help.stdout.contains("harvest-report"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_amodal");
    let st = Command::new(bin).args(["pick", "--no-such-flag"]).output().unwrap();
    assert_eq!(st.status.code(), Some(EXIT_USAGE));
    let st = Command::new(bin).args(["pick", "--mask", "/definitely/missing.pgm"]).output().unwrap();
    assert_eq!(st.status.code(), Some(EXIT_DOMAIN));
    let st = Command::new(bin).args(["--json", "correlate", "--pairs", &data("table3_gda.json")]).output().unwrap();
    assert_eq!(st.status.code(), Some(EXIT_OK));
    let v: Value = serde_json::from_slice(&st.stdout).unwrap();
    assert!((v["r2"].as_f64().unwrap() - 0.986).abs() <= 0.001);
}
