//! End-to-end checks of the command surface: each stage invoked as a
//! subcommand on a small generated study.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dynavessel"))
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Generate a small study once per test process.
fn study_dir() -> &'static Path {
    use std::sync::OnceLock;
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let spec_path = dir.join("phantom.json");
        // 32^3 at 2.4 mm keeps registrations fast
        let spec = r#"{
            "geometry": {"dims": [32,32,32], "spacing": [2.4,2.4,2.4],
                         "origin": [-37.2,-37.2,-37.2],
                         "direction": [[1,0,0],[0,1,0],[0,0,1]]},
            "skull": {"center_mm": [0,0,0], "radii_mm": [33,28.8,25.2],
                      "shell_thickness_mm": 3.6, "bone_hu": 1000.0},
            "soft_tissue_hu": 40.0,
            "arteries": [{"kind": "artery",
                "segments": [{"points": [[-12,-4,-11],[6,-2,8]], "radius_mm": 4.0}],
                "tac": {"onset_s": 7.0, "time_to_peak_s": 20.6, "shape": 3.0, "peak_hu": 400.0}}],
            "veins": [{"kind": "vein",
                "segments": [{"points": [[-12,9,-8],[6,11,7]], "radius_mm": 4.0}],
                "tac": {"onset_s": 12.0, "time_to_peak_s": 33.3, "shape": 3.0, "peak_hu": 485.0}}],
            "timepoints_s": [0.0, 3.3333333333333335, 6.666666666666667, 10.0,
                13.333333333333334, 16.666666666666668, 20.0, 23.333333333333336,
                27.6, 30.0, 33.333333333333336, 36.66666666666667, 40.0,
                43.333333333333336, 45.3, 50.0, 53.333333333333336,
                56.666666666666664, 60.0],
            "noise_sigma_hu": 0.0,
            "rng_seed": 11
        }"#;
        std::fs::write(&spec_path, spec).unwrap();
        let out_dir = dir.join("study");
        let out = bin()
            .args(["phantom", "generate"])
            .arg("--spec")
            .arg(&spec_path)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        ok(&out);
        dir
    })
}

#[test]
fn phantom_generate_writes_frames() {
    let dir = study_dir();
    assert!(dir.join("study/frame_00.nii.gz").exists());
    assert!(dir.join("study/frame_18.nii.gz").exists());
    assert!(dir.join("study/gt_labels.nii.gz").exists());
    assert!(dir.join("study/motion.json").exists());
}

#[test]
fn evaluate_perfect_prediction_reports_unit_mdc() {
    let dir = study_dir();
    let pairing = dir.join("pairing.json");
    std::fs::write(&pairing, r#"{"artery": 1, "vein": 2}"#).unwrap();
    let report_path = dir.join("report.json");
    let csv_path = dir.join("report.csv");
    let out = bin()
        .args(["evaluate"])
        .arg("--gt")
        .arg(dir.join("study/gt_labels.nii.gz"))
        .arg("--pred")
        .arg(dir.join("study/gt_labels.nii.gz"))
        .arg("--pairing")
        .arg(&pairing)
        .arg("--labels")
        .arg("1=artery,2=vein")
        .arg("--volume")
        .arg(dir.join("study/frame_08.nii.gz"))
        .arg("--centerline")
        .arg(format!("artery={}", dir.join("study/artery_centerline.nii.gz").display()))
        .arg("--centerline")
        .arg(format!("vein={}", dir.join("study/vein_centerline.nii.gz").display()))
        .arg("--out")
        .arg(&report_path)
        .arg("--csv")
        .arg(&csv_path)
        .output()
        .unwrap();
    ok(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["per_label"]["artery"]["mdc"], 1.0);
    assert_eq!(report["per_label"]["vein"]["tsens"], 1.0);
    // frame 8 is the peak arterial frame
    assert_eq!(report["phase"], "Arterial");
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("case_id,label,mdc,tsens,adhd_mm,gt_voxels,phase\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn subtract_then_segment_then_skeletonize() {
    let dir = study_dir();
    let sub = dir.join("sa.nii.gz");
    let out = bin()
        .args(["subtract"])
        .arg("--post")
        .arg(dir.join("study/frame_08.nii.gz"))
        .arg("--baseline")
        .arg(dir.join("study/frame_00.nii.gz"))
        .arg("--out")
        .arg(&sub)
        .output()
        .unwrap();
    ok(&out);

    let mask = dir.join("mask.nii.gz");
    let out = bin()
        .args(["segment", "--method", "kapur", "--min-component", "5"])
        .arg("--in")
        .arg(&sub)
        .arg("--out")
        .arg(&mask)
        .output()
        .unwrap();
    ok(&out);

    let cl = dir.join("cl.nii.gz");
    let out = bin()
        .args(["skeletonize"])
        .arg("--in")
        .arg(&mask)
        .arg("--out")
        .arg(&cl)
        .output()
        .unwrap();
    ok(&out);
    assert!(cl.exists());
}

#[test]
fn separate_writes_outputs_and_transforms() {
    let dir = study_dir();
    // build subtracted phases first
    for (frame, name) in [("frame_08", "sep_sa.nii.gz"), ("frame_14", "sep_sv.nii.gz")] {
        let out = bin()
            .args(["subtract"])
            .arg("--post")
            .arg(dir.join(format!("study/{frame}.nii.gz")))
            .arg("--baseline")
            .arg(dir.join("study/frame_00.nii.gz"))
            .arg("--out")
            .arg(dir.join(name))
            .output()
            .unwrap();
        ok(&out);
    }
    let sep_dir = dir.join("separated");
    let out = bin()
        .args(["separate"])
        .arg("--sa")
        .arg(dir.join("sep_sa.nii.gz"))
        .arg("--sv")
        .arg(dir.join("sep_sv.nii.gz"))
        .arg("--xa")
        .arg(dir.join("study/frame_08.nii.gz"))
        .arg("--xv")
        .arg(dir.join("study/frame_14.nii.gz"))
        .arg("--out")
        .arg(&sep_dir)
        .output()
        .unwrap();
    ok(&out);
    assert!(sep_dir.join("sa_star.nii.gz").exists());
    assert!(sep_dir.join("sv_star.nii.gz").exists());
    let transforms: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sep_dir.join("transforms.json")).unwrap())
            .unwrap();
    assert_eq!(transforms["g_ra"]["convention"], "pullback");
    assert!(transforms["inputs"]["sa"].as_str().unwrap().len() == 64);
}

#[test]
fn register_self_is_near_identity() {
    let dir = study_dir();
    let out_path = dir.join("transform.json");
    let out = bin()
        .args(["register", "--mode", "rigid"])
        .arg("--fixed")
        .arg(dir.join("study/frame_00.nii.gz"))
        .arg("--moving")
        .arg(dir.join("study/frame_00.nii.gz"))
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    ok(&out);
    let t: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(t["type"], "rigid");
    assert_eq!(t["units"], "mm,rad");
    for a in 0..3 {
        assert!(t["angles_rad"][a].as_f64().unwrap().abs() < 0.01);
        assert!(t["translation_mm"][a].as_f64().unwrap().abs() < 0.1);
    }
    assert!(t["final_ncc"].as_f64().unwrap() > 0.999);
}

#[test]
fn preprocess_resamples_and_masks() {
    let dir = study_dir();
    let out_dir = dir.join("prep");
    let out = bin()
        .args(["preprocess", "--spacing", "2.4"])
        .arg("--in")
        .arg(dir.join("study/frame_08.nii.gz"))
        .arg("--template")
        .arg(dir.join("study/template.nii.gz"))
        .arg("--template-roi")
        .arg(dir.join("study/template_roi.nii.gz"))
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    ok(&out);
    assert!(out_dir.join("volume.nii.gz").exists());
    assert!(out_dir.join("roi_mask.nii.gz").exists());
}

#[test]
fn render_writes_png_with_hyphen_window() {
    let dir = study_dir();
    let png = dir.join("mip.png");
    let out = bin()
        .args(["render", "--axis", "z", "--window", "-100:600"])
        .arg("--in")
        .arg(dir.join("study/frame_08.nii.gz"))
        .arg("--out")
        .arg(&png)
        .output()
        .unwrap();
    ok(&out);
    let bytes = std::fs::read(&png).unwrap();
    assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
}

#[test]
fn unknown_flag_exits_two_with_usage() {
    let out = bin().args(["segment", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).to_lowercase();
    assert!(err.contains("usage"), "{err}");
}

#[test]
fn missing_file_exits_one_with_error_line() {
    let out = bin()
        .args(["segment", "--method", "kapur"])
        .arg("--in")
        .arg("/nonexistent/vol.nii.gz")
        .arg("--out")
        .arg("/tmp/never.nii.gz")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: io: "), "{err}");
}

#[test]
fn corrupt_nifti_reports_format_code() {
    let dir = study_dir();
    let bad = dir.join("bad.nii");
    std::fs::write(&bad, vec![0u8; 400]).unwrap();
    let out = bin()
        .args(["segment", "--method", "kapur"])
        .arg("--in")
        .arg(&bad)
        .arg("--out")
        .arg(dir.join("never.nii.gz"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: format: "), "{err}");
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = study_dir();
    let sub = dir.join("threads_sub.nii.gz");
    let out = bin()
        .args(["subtract"])
        .arg("--post")
        .arg(dir.join("study/frame_08.nii.gz"))
        .arg("--baseline")
        .arg(dir.join("study/frame_00.nii.gz"))
        .arg("--out")
        .arg(&sub)
        .output()
        .unwrap();
    ok(&out);
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let mask = dir.join(format!("mask_t{threads}.nii"));
        let out = bin()
            .args(["--threads", threads, "segment", "--method", "phansalkar", "--radius", "5"])
            .arg("--in")
            .arg(&sub)
            .arg("--out")
            .arg(&mask)
            .output()
            .unwrap();
        ok(&out);
        outputs.push(std::fs::read(&mask).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "thread count changed the output");
}

#[test]
fn phantom_generate_with_seed_is_reproducible() {
    let dir = study_dir();
    let spec_path = dir.join("noisy_spec.json");
    // reuse the study spec but with noise
    let text = std::fs::read_to_string(dir.join("phantom.json")).unwrap();
    std::fs::write(&spec_path, text.replace("\"noise_sigma_hu\": 0.0", "\"noise_sigma_hu\": 8.0"))
        .unwrap();
    let mut digests = Vec::new();
    for run in 0..2 {
        let out_dir = dir.join(format!("seeded_{run}"));
        let out = bin()
            .args(["phantom", "generate", "--seed", "17"])
            .arg("--spec")
            .arg(&spec_path)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        ok(&out);
        digests.push(std::fs::read(out_dir.join("frame_08.nii.gz")).unwrap());
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn pipeline_run_executes_and_caches() {
    let dir = study_dir();
    let ws = dir.join("pipe_ws");
    let config = serde_json::json!({
        "workspace": ws,
        "cache": true,
        "seed": 3,
        "stages": [
            {
                "name": "phantom",
                "kind": "phantom",
                "params": { "spec": serde_json::from_str::<serde_json::Value>(
                    &std::fs::read_to_string(dir.join("phantom.json")).unwrap()).unwrap() }
            },
            {
                "name": "seg",
                "kind": "segment",
                "inputs": { "volume": "phantom/frame_08" },
                "params": { "method": "kapur", "min_component": 5 }
            }
        ]
    });
    let config_path = dir.join("pipeline.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let out = bin().args(["pipeline", "run"]).arg("--config").arg(&config_path).output().unwrap();
    ok(&out);
    assert!(ws.join("manifest.json").exists());
    // second run: everything cached
    let out = bin().args(["pipeline", "run"]).arg("--config").arg(&config_path).output().unwrap();
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches("(cached)").count(), 2, "{stdout}");
}
