use std::path::Path;
use std::process::Command;

fn vidfill(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_vidfill"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "vidfill {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn synth_masks_inpaint_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let scene = root.join("scene");
    vidfill(&["synth", "--suite", "3", "--out", p(&scene)]);
    for d in ["frames", "masks", "plate", "sprite_masks", "shadow_masks"] {
        assert_eq!(std::fs::read_dir(scene.join(d)).unwrap().count(), 24, "{d}");
    }

    let masks = root.join("masks");
    vidfill(&[
        "masks",
        "--frames",
        p(&scene.join("frames")),
        "--humans",
        p(&scene.join("sprite_masks")),
        "--shadows",
        p(&scene.join("shadow_masks")),
        "--anchors",
        "0,23",
        "--pair-shadows",
        "--out",
        p(&masks),
    ]);
    assert_eq!(std::fs::read_dir(&masks).unwrap().count(), 24);

    let run = |tag: &str| {
        let out = root.join(tag);
        let report = root.join(format!("{tag}.json"));
        vidfill(&[
            "inpaint",
            "--threads",
            "1",
            "--seed",
            "4",
            "--frames",
            p(&scene.join("frames")),
            "--masks",
            p(&scene.join("masks")),
            "--plate",
            p(&scene.join("plate")),
            "--out",
            p(&out),
            "--report",
            p(&report),
        ]);
        let mut json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
        json.as_object_mut().unwrap().remove("runtime_ms");
        (read_sorted(&out), json)
    };
    let (frames_a, report_a) = run("a");
    let (frames_b, report_b) = run("b");
    assert_eq!(frames_a.len(), 24);
    assert!(frames_a == frames_b, "output frames differ between runs");
    assert_eq!(report_a, report_b);
    let keys: Vec<_> = report_a.as_object().unwrap().keys().cloned().collect();
    for k in ["psnr", "ssim", "e_warp_x1e3", "tf", "seam", "fusion_ops", "per_frame"] {
        assert!(keys.contains(&k.to_string()), "{k}");
    }

    let eval = root.join("eval.json");
    vidfill(&[
        "eval",
        "--output",
        p(&root.join("a")),
        "--plate",
        p(&scene.join("plate")),
        "--masks",
        p(&scene.join("masks")),
        "--report",
        p(&eval),
    ]);
    let scored: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(eval).unwrap()).unwrap();
    let (a, b) = (scored["psnr"].as_f64().unwrap(), report_a["psnr"].as_f64().unwrap());
    assert!((a - b).abs() < 0.5, "{a} vs {b}");
}

#[test]
fn ablate_and_slice() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let scene = root.join("scene");
    std::fs::write(
        root.join("spec.json"),
        r#"{"seed": 2, "frames": 6, "height": 24, "width": 32, "camera_pan": [1, 0],
            "sprites": [{"shape": "rect", "size": [6, 8], "position": [10, 6], "velocity": [1, 0]}]}"#,
    )
    .unwrap();
    vidfill(&["synth", "--spec", p(&root.join("spec.json")), "--out", p(&scene)]);

    let cfg = root.join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "# ablation inputs\nio.frames = {}\nio.masks = {}\nio.plate = {}\nsampler.inference_steps = 4\nfusion.fusion_steps = 1,3\n",
            p(&scene.join("frames")),
            p(&scene.join("masks")),
            p(&scene.join("plate"))
        ),
    )
    .unwrap();
    let table = root.join("table.csv");
    vidfill(&["ablate", "--config", p(&cfg), "--out", p(&table)]);
    let text = std::fs::read_to_string(&table).unwrap();
    let ids: Vec<_> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    assert_eq!(ids, ["-/-", "OP/-", "-/R", "OP/R"]);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(6) == Some("2")));

    vidfill(&["ablate", "--config", p(&cfg), "--toggle", "1,1", "--out", p(&table)]);
    assert_eq!(std::fs::read_to_string(&table).unwrap().lines().count(), 2);

    let slice = root.join("slice.png");
    vidfill(&["slice", "--frames", p(&scene.join("frames")), "--column", "5", "--out", p(&slice)]);
    let img = image::open(&slice).unwrap();
    assert_eq!((img.width(), img.height()), (24, 6));
}

#[test]
fn bad_config_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "seed = 1\nfusion.window_len = many\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vidfill"))
        .args(["inpaint", "--config", p(&cfg)])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}
