//! The `snerf` command line: `make-scene`, `train`, `render`, `eval`, `ablate`.
//!
//! Settings resolve in this order, later winning: preset, `--config` file,
//! `SNERF_SEED` (only when no seed was set so far), `--set key=value`,
//! dedicated flags. Every command writes the resolved config next to its
//! outputs as `config.resolved`.

mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{RunConfig, PRESETS};

use crate::error::Error;
use crate::eval::{
    evaluate, evaluation_views, predict, run_ablation, train_method, write_contact_sheet, write_reports_json,
    MethodId, TrainedMethod,
};
use crate::field::load_checkpoint;
use crate::render::{write_png_gray, write_png_rgb, write_raw_f64, FieldMode};
use crate::scene::{default_split, generate_dataset, load_dataset, AnalyticScene};
use crate::train::{fit, load_training_checkpoint, write_loss_log, Model, OptimizerState};

/// Environment variable consulted for the seed when nothing else sets it.
pub const SEED_ENV: &str = "SNERF_SEED";

#[derive(Parser, Debug)]
#[command(name = "snerf", version, about = "Stochastic radiance fields with per-pixel uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render an analytic toy scene into a dataset directory.
    MakeScene(CommonArgs),
    /// Train one method on a dataset.
    Train(CommonArgs),
    /// Render one view of a trained checkpoint with its uncertainty.
    Render(CommonArgs),
    /// Score a trained checkpoint on the test views.
    Eval(CommonArgs),
    /// Train and score the three KL settings.
    Ablate(CommonArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Starting point: default or toy.
    #[arg(long)]
    preset: Option<String>,
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set kl_weight=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Dataset directory.
    #[arg(long)]
    scene: Option<String>,
    /// Analytic scene for make-scene: uniform, slab, sphere, two_spheres, hemisphere.
    #[arg(long = "name")]
    scene_name: Option<String>,
    #[arg(long)]
    checkpoint: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    view: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

impl CommonArgs {
    fn resolve(&self) -> Outcome<RunConfig> {
        let mut cfg = RunConfig::preset(self.preset.as_deref().unwrap_or("default")).map_err(usage)?;
        let mut seed_set = false;
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| usage(Error::io(path, e)))?;
            seed_set = cfg.apply_text(&text, path).map_err(usage)?.iter().any(|k| k == "seed");
        }
        if !seed_set {
            if let Ok(v) = std::env::var(SEED_ENV) {
                cfg.set("seed", v.trim()).map_err(usage)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim()).map_err(usage)?;
        }
        let flags: [(&str, Option<String>); 9] = [
            ("scene", self.scene.clone()),
            ("scene_name", self.scene_name.clone()),
            ("checkpoint", self.checkpoint.clone()),
            ("out", self.out.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("steps", self.steps.map(|v| v.to_string())),
            ("method", self.method.clone()),
            ("view", self.view.map(|v| v.to_string())),
            ("workers", self.workers.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v).map_err(usage)?;
            }
        }
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

fn required<'a>(value: &'a str, flag: &str) -> Outcome<&'a Path> {
    if value.is_empty() {
        Err(Failure::Usage(format!("missing required argument --{flag}")))
    } else {
        Ok(Path::new(value))
    }
}

fn prepare_out(cfg: &RunConfig) -> Outcome<PathBuf> {
    let out = required(&cfg.out, "out")?.to_path_buf();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    cfg.write(&out.join("config.resolved"))?;
    Ok(out)
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code: 0 success, 1 usage error, 2 runtime failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::MakeScene(a) => a.resolve().and_then(|c| make_scene(&c)),
        Command::Train(a) => a.resolve().and_then(|c| train(&c)),
        Command::Render(a) => a.resolve().and_then(|c| render(&c)),
        Command::Eval(a) => a.resolve().and_then(|c| eval(&c)),
        Command::Ablate(a) => a.resolve().and_then(|c| ablate(&c)),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `snerf --help` for usage");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn make_scene(cfg: &RunConfig) -> Outcome {
    let scene = AnalyticScene::by_name(&cfg.scene_name).map_err(usage)?;
    let out = prepare_out(cfg)?;
    let m = generate_dataset(&scene, &cfg.dataset_spec(), &out, cfg.dataset_seed)?;
    println!("wrote {} views of `{}` to {}", m.views.len(), m.name, out.display());
    Ok(())
}

fn train(cfg: &RunConfig) -> Outcome {
    let scene = required(&cfg.scene, "scene")?;
    let out = prepare_out(cfg)?;
    let ds = load_dataset(scene)?;
    let eval = cfg.eval_config();
    let split = default_split(&ds.manifest, eval.train_fraction, eval.split_seed)?;
    let data = ds.triplets(&split.train)?;
    let bounds = ds.manifest.scene_bounds()?;
    let method = cfg.method;
    let network = eval.network_config(method);
    if method == MethodId::DeepEnsemble {
        if !cfg.checkpoint.is_empty() {
            return Err(usage("resuming is supported for single-model methods only"));
        }
        let trained = train_method(method, &data, &bounds, &eval)?;
        crate::field::save_checkpoint(&out.join("final.ckpt"), &trained.to_params())?;
        for (i, log) in trained.logs.iter().enumerate() {
            write_loss_log(&out.join(format!("loss_log.member{i}.csv")), log)?;
        }
        println!("trained {} members in {:.1}s", trained.members.len(), trained.train_seconds);
        return Ok(());
    }
    let (mut model, mut opt) = if cfg.checkpoint.is_empty() {
        (Model::new(network, cfg.seed)?, OptimizerState::new())
    } else {
        load_training_checkpoint(Path::new(&cfg.checkpoint), network)?
    };
    let train_cfg = eval.train_config(method);
    let log = fit(&mut model, &mut opt, &data, &bounds, &train_cfg, Some(&out))?;
    write_loss_log(&out.join("loss_log.csv"), &log)?;
    match (log.first(), log.last()) {
        (Some(a), Some(b)) => println!(
            "steps {}..{}: total loss {:.6} -> {:.6}",
            a.step,
            b.step + 1,
            a.loss.total,
            b.loss.total
        ),
        _ => println!("no steps to run; checkpoint written unchanged"),
    }
    Ok(())
}

fn load_trained(cfg: &RunConfig) -> Outcome<TrainedMethod> {
    let path = required(&cfg.checkpoint, "checkpoint")?;
    let network = cfg.eval_config().network_config(cfg.method);
    Ok(TrainedMethod::from_params(cfg.method, network, load_checkpoint(path)?)?)
}

fn render(cfg: &RunConfig) -> Outcome {
    let scene = required(&cfg.scene, "scene")?;
    let trained = load_trained(cfg)?;
    let out = prepare_out(cfg)?;
    let ds = load_dataset(scene)?;
    let m = &ds.manifest;
    if cfg.view >= m.views.len() {
        return Err(usage(format!("view {} out of range (dataset has {})", cfg.view, m.views.len())));
    }
    let eval = cfg.eval_config();
    let mut settings = eval.render_settings(cfg.method);
    if settings.mode == FieldMode::Stochastic {
        settings.integrator = cfg.integrator;
    }
    let rays = m.view_rays(cfg.view)?;
    let base = (m.intrinsics.width * m.intrinsics.height * cfg.view) as u64;
    let ids: Vec<u64> = (0..rays.len() as u64).map(|i| base + i).collect();
    let pred = predict(&trained, &rays, &ids, cfg.render_seed, &settings, &eval.baseline)?;
    let (w, h) = (m.intrinsics.width, m.intrinsics.height);
    let variance: Vec<f64> = pred.variance.iter().map(|v| v.iter().sum::<f64>() / 3.0).collect();
    let stem = format!("view{:03}", cfg.view);
    write_png_rgb(&out.join(format!("{stem}_mean.png")), w, h, &pred.mean)?;
    write_png_gray(&out.join(format!("{stem}_variance.png")), w, h, &variance)?;
    write_png_gray(&out.join(format!("{stem}_depth.png")), w, h, &pred.depth)?;
    let flat: Vec<f64> = pred.mean.iter().flatten().copied().collect();
    write_raw_f64(&out.join(format!("{stem}_mean.f64")), &flat)?;
    write_raw_f64(&out.join(format!("{stem}_variance.f64")), &variance)?;
    write_raw_f64(&out.join(format!("{stem}_depth.f64")), &pred.depth)?;
    println!("rendered view {} to {}", cfg.view, out.display());
    Ok(())
}

fn eval(cfg: &RunConfig) -> Outcome {
    let scene = required(&cfg.scene, "scene")?;
    let trained = load_trained(cfg)?;
    let out = prepare_out(cfg)?;
    let ds = load_dataset(scene)?;
    let eval = cfg.eval_config();
    let split = default_split(&ds.manifest, eval.train_fraction, eval.split_seed)?;
    let result = evaluate(&trained, &ds, &evaluation_views(&split.test, &eval), &eval)?;
    write_reports_json(&out.join("report.json"), std::slice::from_ref(&result.report))?;
    write_contact_sheet(&out.join("contact_sheet.png"), &[&result])?;
    print_report_header();
    print_report(&result.report);
    Ok(())
}

fn ablate(cfg: &RunConfig) -> Outcome {
    let scene = required(&cfg.scene, "scene")?;
    let out = prepare_out(cfg)?;
    let ds = load_dataset(scene)?;
    let evals = run_ablation(&ds, &cfg.eval_config())?;
    let reports: Vec<_> = evals.iter().map(|e| e.report.clone()).collect();
    write_reports_json(&out.join("report.json"), &reports)?;
    write_contact_sheet(&out.join("contact_sheet.png"), &evals.iter().collect::<Vec<_>>())?;
    print_report_header();
    for r in &reports {
        print_report(r);
    }
    Ok(())
}

fn print_report_header() {
    println!("{:<14} {:>10} {:>12} {:>10} {:>10}", "method", "nll", "correlation", "render_s", "pixels");
}

fn print_report(r: &crate::eval::MetricReport) {
    let corr = r.correlation.map_or("n/a".to_string(), |c| format!("{c:.4}"));
    println!(
        "{:<14} {:>10.4} {:>12} {:>10.3} {:>10}",
        r.method.as_str(),
        r.nll,
        corr,
        r.render_seconds_per_view,
        r.pixel_count
    );
}
