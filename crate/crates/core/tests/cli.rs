use std::path::{Path, PathBuf};

use snerf::cli::{run, RunConfig};

const TINY: &[&str] = &[
    "width=8", "depth=2", "skip=1", "l_position=2", "l_direction=1", "n_samples=8",
    "k_samples=4", "batch_rays=4", "views=6", "image_width=6", "image_height=6",
    "oracle_points=256", "max_test_views=1", "grid_points_per_axis=2",
    "ensemble_size=2", "dropout_passes=2",
];

fn snerf(cmd: &str, extra: &[&str]) -> i32 {
    let mut argv = vec!["snerf".to_string(), cmd.to_string()];
    for kv in TINY {
        argv.push("--set".into());
        argv.push((*kv).into());
    }
    argv.extend(extra.iter().map(|s| s.to_string()));
    run(argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn make_scene(root: &Path, name: &str) -> PathBuf {
    let dir = root.join(name);
    assert_eq!(snerf("make-scene", &["--name", name, "--out", s(&dir)]), 0);
    dir
}

#[test]
fn zero_step_training_writes_the_initial_model() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = make_scene(tmp.path(), "slab");
    let out = tmp.path().join("run");
    assert_eq!(snerf("train", &["--scene", s(&scene), "--out", s(&out), "--steps", "0", "--seed", "5"]), 0);
    let cfg = RunConfig::read(&out.join("config.resolved")).unwrap();
    let init = snerf::train::Model::new(cfg.network(), 5).unwrap();
    let (saved, opt) = snerf::train::load_training_checkpoint(&out.join("final.ckpt"), cfg.network()).unwrap();
    assert_eq!(saved.params.flat_values(), init.params.flat_values());
    assert_eq!(opt.step, 0);
    let log = std::fs::read_to_string(out.join("loss_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1);
}

#[test]
fn train_render_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = make_scene(tmp.path(), "sphere");
    let run_dir = tmp.path().join("run");
    let common = ["--scene", s(&scene), "--out", s(&run_dir), "--steps", "4"];
    assert_eq!(snerf("train", &[&common[..], &["--set", "checkpoint_every=2"]].concat()), 0);
    assert!(run_dir.join("step_000002.ckpt").exists());
    let log = std::fs::read_to_string(run_dir.join("loss_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 5);

    // resume from step 2 reproduces the final checkpoint
    let resumed = tmp.path().join("resumed");
    let ck = run_dir.join("step_000002.ckpt");
    assert_eq!(snerf("train", &["--scene", s(&scene), "--out", s(&resumed), "--steps", "4", "--checkpoint", s(&ck)]), 0);
    assert_eq!(
        std::fs::read(resumed.join("final.ckpt")).unwrap(),
        std::fs::read(run_dir.join("final.ckpt")).unwrap()
    );

    let ckpt = run_dir.join("final.ckpt");
    let r = tmp.path().join("render");
    assert_eq!(snerf("render", &["--scene", s(&scene), "--checkpoint", s(&ckpt), "--out", s(&r), "--view", "1"]), 0);
    for suffix in ["mean.png", "variance.png", "depth.png", "mean.f64", "variance.f64", "depth.f64"] {
        assert!(r.join(format!("view001_{suffix}")).exists(), "{suffix}");
    }
    let e = tmp.path().join("eval");
    assert_eq!(snerf("eval", &["--scene", s(&scene), "--checkpoint", s(&ckpt), "--out", s(&e)]), 0);
    let reports = snerf::eval::read_reports_json(&e.join("report.json")).unwrap();
    assert_eq!(reports.len(), 1);
    assert!(reports[0].nll.is_finite());
    assert!(e.join("contact_sheet.png").exists());
}

#[test]
fn ensembles_write_one_log_per_member() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = make_scene(tmp.path(), "slab");
    let out = tmp.path().join("ens");
    assert_eq!(
        snerf("train", &["--scene", s(&scene), "--out", s(&out), "--steps", "2", "--method", "deep_ensemble"]),
        0
    );
    assert!(out.join("loss_log.member0.csv").exists());
    assert!(out.join("loss_log.member1.csv").exists());
    let e = tmp.path().join("eval");
    let ck = out.join("final.ckpt");
    assert_eq!(
        snerf("eval", &["--scene", s(&scene), "--checkpoint", s(&ck), "--out", s(&e), "--method", "deep_ensemble"]),
        0
    );
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    assert_eq!(run(["snerf", "train", "--bogus"]), 1);
    assert_eq!(run(["snerf", "frobnicate"]), 1);
    assert_eq!(run(["snerf", "eval", "--scene", "nowhere", "--out", s(&out)]), 1);
    assert_eq!(run(["snerf", "train", "--out", s(&out)]), 1);
    assert_eq!(run(["snerf", "train", "--scene", "x", "--out", s(&out), "--set", "nonsense=1"]), 1);
    assert_eq!(run(["snerf", "train", "--scene", "x", "--out", s(&out), "--method", "nerf"]), 1);
    assert_eq!(run(["snerf", "make-scene", "--name", "cube", "--out", s(&out)]), 1);
    assert_eq!(run(["snerf", "train", "--preset", "huge", "--scene", "x", "--out", s(&out)]), 1);
    let bad = tmp.path().join("bad.cfg");
    std::fs::write(&bad, "steps = 10\nwidth = wide\n").unwrap();
    assert_eq!(run(["snerf", "train", "--config", s(&bad), "--scene", "x", "--out", s(&out)]), 1);
    assert_eq!(run(["snerf", "--help"]), 0);
}

#[test]
fn runtime_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let missing = tmp.path().join("missing");
    assert_eq!(run(["snerf", "train", "--scene", s(&missing), "--out", s(&out)]), 2);
    let scene = make_scene(tmp.path(), "slab");
    let junk = tmp.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    assert_eq!(snerf("eval", &["--scene", s(&scene), "--checkpoint", s(&junk), "--out", s(&out)]), 2);
}

#[test]
fn resolved_config_round_trips_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = make_scene(tmp.path(), "slab");
    let a = tmp.path().join("a");
    assert_eq!(snerf("train", &["--scene", s(&scene), "--out", s(&a), "--steps", "3"]), 0);
    let resolved = a.join("config.resolved");
    let text = std::fs::read_to_string(&resolved).unwrap();
    let cfg = RunConfig::parse_text(&text, &resolved).unwrap();
    assert_eq!(cfg.to_text(), text);

    let b = tmp.path().join("b");
    assert_eq!(run(["snerf", "train", "--config", s(&resolved), "--out", s(&b)]), 0);
    assert_eq!(std::fs::read(a.join("final.ckpt")).unwrap(), std::fs::read(b.join("final.ckpt")).unwrap());
    let losses = |p: &Path| -> Vec<String> {
        std::fs::read_to_string(p.join("loss_log.csv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(losses(&a), losses(&b));
}

#[test]
fn presets_resolve() {
    for name in snerf::cli::PRESETS {
        let cfg = RunConfig::preset(name).unwrap();
        cfg.validate().unwrap();
    }
    let toy = RunConfig::preset("toy").unwrap();
    assert_eq!(toy.eval_config(), snerf::eval::EvalConfig::toy());
}

#[test]
fn binary_reports_version() {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_snerf")).arg("--version").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("snerf "));
}
