//! `defocus`: fit a blur model to a photograph and composite virtual
//! objects with matching lens blur.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use defocus_core::io;
use defocus_core::lens::LensParams;
use defocus_core::metrics::{bounding_box_of_mask, display_encoded, psnr, report_csv, report_table, ssim, EvalRow};
use defocus_core::pipeline::{composite_object, fit_blur_model, footprint_mask, FitInputs, FitOutcome, Reblur};
use defocus_core::synthetic::{render_bundle, render_composite_gt, Scene};
use defocus_core::{BlurModel, Error, ErrorKind, Result, RgbImage};
use serde::Serialize;

use crate::config::{check_object_depth, Job};

#[derive(Parser, Debug)]
#[command(name = "defocus", version, about = "Defocus-consistent compositing without camera metadata")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic scene into plates, maps and (optionally) object layers.
    Render(RenderArgs),
    /// Fit the CoC-disparity model from a job config.
    Fit(FitArgs),
    /// Composite an object (or a sequence of frames) with a fitted model.
    Composite(CompositeArgs),
    /// Bounding-box PSNR/SSIM of composites against a ground-truth image.
    Evaluate(EvaluateArgs),
    /// Fit, then composite, in one invocation.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Name of the primitive to render as the virtual object.
    #[arg(long)]
    object: Option<String>,
    #[arg(long)]
    spp: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the lens focus distance (metres).
    #[arg(long)]
    focus: Option<f64>,
    /// Override the lens aperture diameter (metres).
    #[arg(long)]
    aperture: Option<f64>,
}

#[derive(Args, Debug)]
struct JobArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "tau-zero")]
    tau_zero: Option<f64>,
    #[arg(long = "max-coc")]
    max_coc: Option<f32>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    job: JobArgs,
    /// Also write the projection mask and the correspondence pairs.
    #[arg(long = "debug-mask")]
    debug_mask: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Baseline {
    Gaussian,
}

#[derive(Args, Debug)]
struct CompositeArgs {
    #[command(flatten)]
    job: JobArgs,
    #[arg(long)]
    model: PathBuf,
    /// Object frames (RGBA PNG); each needs a `<stem>_depth.pfm` next to it.
    #[arg(long)]
    frames: Option<String>,
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    gt: PathBuf,
    /// Object region mask; PSNR/SSIM use its tightest bounding box.
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "scene")]
    scene_name: String,
    #[arg(long, default_value_t = 0.0)]
    focus: f64,
    #[arg(long, default_value_t = 0.0)]
    aperture: f64,
    /// Composites to score, as `method=path`.
    #[arg(required = true)]
    composites: Vec<String>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[command(flatten)]
    job: JobArgs,
    #[arg(long = "debug-mask")]
    debug_mask: bool,
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })
}

fn method_of(baseline: Option<Baseline>) -> Reblur {
    match baseline {
        Some(Baseline::Gaussian) => Reblur::Gaussian,
        None => Reblur::Scatter,
    }
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serialisable") + "\n"
}

/// Job config pointing at the files `render` writes.
#[derive(Serialize)]
struct RenderedJob<'a> {
    background: &'a str,
    background_coc: &'a str,
    object: &'a str,
    object_depth: &'a str,
    camera: &'a defocus_core::Camera,
    ground: f64,
}

fn render(args: &RenderArgs) -> Result<()> {
    let mut scene = Scene::from_json(&io::read_text(&args.scene)?)?;
    if let Some(spp) = args.spp {
        scene.render.spp = spp;
    }
    if let Some(seed) = args.seed {
        scene.render.seed = seed;
    }
    if args.focus.is_some() || args.aperture.is_some() {
        let l = scene.lens;
        scene.lens = LensParams::new(
            args.aperture.unwrap_or(l.aperture()),
            l.focal_length(),
            args.focus.unwrap_or(l.focus_distance()),
        )?;
    }
    let object = match &args.object {
        Some(name) => Some(scene.primitive_id(name).ok_or_else(|| {
            Error::InvalidScene(format!("no primitive named '{name}' in {}", args.scene.display()))
        })?),
        None => None,
    };
    let bundle = match object {
        Some(id) => render_composite_gt(&scene, id)?,
        None => render_bundle(&scene)?,
    };

    let out = &args.out;
    create_dir(out)?;
    io::write_png_rgb(out.join("sharp.png"), &bundle.sharp)?;
    io::write_png_rgb(out.join("defocused.png"), &bundle.defocused)?;
    io::write_pfm(out.join("depth.pfm"), &bundle.depth)?;
    io::write_pfm(out.join("disparity.pfm"), &bundle.disparity)?;
    io::write_pfm(out.join("coc.pfm"), &bundle.coc)?;
    if let (Some(layers), Some(gt)) = (&bundle.object, &bundle.composite) {
        io::write_png_rgba(out.join("object.png"), &layers.color)?;
        io::write_png_mask(out.join("object_mask.png"), &layers.mask)?;
        io::write_pfm(out.join("object_depth.pfm"), &layers.depth)?;
        io::write_png_rgb(out.join("composite_gt.png"), gt)?;
        io::write_png_mask(out.join("footprint_mask.png"), &footprint_mask(gt, &bundle.defocused)?)?;
        let job = RenderedJob {
            background: "defocused.png",
            background_coc: "coc.pfm",
            object: "object.png",
            object_depth: "object_depth.pfm",
            camera: &scene.camera,
            ground: scene.ground.height,
        };
        io::write_text(out.join("job.json"), &json(&job))?;
    }
    io::write_text(out.join("scene.json"), &scene.to_json())?;
    Ok(())
}

fn run_fit(job: &Job) -> Result<FitOutcome> {
    fit_blur_model(&FitInputs {
        plate_coc: &job.background_coc,
        object_depth: &job.object_depth,
        object_mask: &defocus_core::pipeline::coverage_mask(&job.object),
        camera: &job.camera,
        ground: job.ground,
        tau_zero: job.tau_zero,
    })
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    report: &'a defocus_core::regression::FitReport,
    sign: &'a defocus_core::regression::SignDecision,
    ground_height: f64,
    projection_coverage: f64,
    max_depth_delta: f64,
}

fn write_fit(out: &Path, fit: &FitOutcome, debug_mask: bool) -> Result<()> {
    io::write_text(out.join("model.json"), &fit.model.to_json())?;
    let diag = Diagnostics {
        report: &fit.report,
        sign: &fit.decision,
        ground_height: fit.ground.height,
        projection_coverage: fit.projection.coverage(),
        max_depth_delta: fit.pairs.depth_delta().max_abs,
    };
    io::write_text(out.join("fit_report.json"), &json(&diag))?;
    if debug_mask {
        io::write_png_mask(out.join("projection_mask.png"), fit.projection.mask())?;
        io::write_text(out.join("pairs.csv"), &fit.pairs.to_csv())?;
    }
    Ok(())
}

fn fit(args: &FitArgs) -> Result<()> {
    let job = Job::load(&args.job.config, args.job.tau_zero, args.job.max_coc)?;
    let fit = run_fit(&job)?;
    create_dir(&args.job.out)?;
    write_fit(&args.job.out, &fit, args.debug_mask)
}

fn mean_abs_coc(coc: &defocus_core::ScalarMap, object: &defocus_core::RgbaImage) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (c, px) in coc.data().iter().zip(object.data()) {
        if px[3] > 0.0 {
            sum += c.abs() as f64;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// `<dir>/<stem>_depth.pfm` for a frame `<dir>/<stem>.png`.
fn frame_depth_path(frame: &Path) -> PathBuf {
    let stem = frame.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    frame.with_file_name(format!("{stem}_depth.pfm"))
}

fn composite(args: &CompositeArgs) -> Result<()> {
    let job = Job::load(&args.job.config, args.job.tau_zero, args.job.max_coc)?;
    let model = BlurModel::from_json(&io::read_text(&args.model)?)?;
    let method = method_of(args.baseline);

    let Some(pattern) = &args.frames else {
        let (img, coc) = composite_object(&model, &job.background, &job.object, &job.object_depth, job.max_coc, method)?;
        create_dir(&args.job.out)?;
        io::write_png_rgb(args.job.out.join("composite.png"), &img)?;
        return io::write_pfm(args.job.out.join("object_coc.pfm"), &coc);
    };

    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| Error::InvalidParameter(format!("bad --frames pattern: {e}")))?
        .filter_map(|p| p.ok())
        .filter(|p| !p.to_string_lossy().ends_with("_depth.pfm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidParameter(format!("--frames '{pattern}' matched no files")));
    }
    // load and validate every frame before writing anything
    let mut frames = Vec::with_capacity(paths.len());
    for p in &paths {
        let object = io::read_png_rgba(p)?;
        let depth = io::read_pfm(frame_depth_path(p))?;
        job.background.same_dims(&object)?;
        check_object_depth(&object, &depth)?;
        frames.push((p, object, depth));
    }
    let mut results = Vec::with_capacity(frames.len());
    for (p, object, depth) in &frames {
        let (img, coc) = composite_object(&model, &job.background, object, depth, job.max_coc, method)?;
        let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let mean_depth = {
            let (mut s, mut n) = (0.0, 0usize);
            for (z, px) in depth.data().iter().zip(object.data()) {
                if px[3] > 0.0 {
                    s += *z as f64;
                    n += 1;
                }
            }
            s / n.max(1) as f64
        };
        results.push((stem, img, coc.clone(), mean_abs_coc(&coc, object), mean_depth));
    }
    create_dir(&args.job.out)?;
    let mut summary = String::from("frame,mean_abs_coc,mean_depth\n");
    for (stem, img, coc, mean_coc, mean_depth) in &results {
        io::write_png_rgb(args.job.out.join(format!("composite_{stem}.png")), img)?;
        io::write_pfm(args.job.out.join(format!("coc_{stem}.pfm")), coc)?;
        let _ = writeln!(summary, "{stem},{mean_coc:.6},{mean_depth:.6}");
    }
    io::write_text(args.job.out.join("frames.csv"), &summary)
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let gt = io::read_png_rgb(&args.gt)?;
    let mask = io::read_png_mask(&args.mask)?;
    gt.same_dims(&mask)?;
    let region = bounding_box_of_mask(&mask)?;
    let mut inputs: Vec<(String, RgbImage)> = Vec::new();
    for spec in &args.composites {
        let (method, path) = spec
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("expected method=path, got '{spec}'")))?;
        let img = io::read_png_rgb(path)?;
        img.same_dims(&gt)?;
        inputs.push((method.to_string(), img));
    }
    let gt_display = display_encoded(&gt);
    let mut rows = Vec::new();
    for (method, img) in &inputs {
        let shown = display_encoded(img);
        rows.push(EvalRow {
            method: method.clone(),
            scene: args.scene_name.clone(),
            focus: args.focus,
            aperture: args.aperture,
            psnr: psnr(&shown, &gt_display, Some(region))?,
            ssim: ssim(&shown, &gt_display, Some(region))?,
            rmse: None,
        });
    }
    create_dir(&args.out)?;
    io::write_text(args.out.join("report.csv"), &report_csv(&rows))?;
    print!("{}", report_table(&rows));
    Ok(())
}

fn pipeline(args: &PipelineArgs) -> Result<()> {
    let job = Job::load(&args.job.config, args.job.tau_zero, args.job.max_coc)?;
    let fit = run_fit(&job)?;
    let (img, coc) = composite_object(
        &fit.model,
        &job.background,
        &job.object,
        &job.object_depth,
        job.max_coc,
        method_of(args.baseline),
    )?;
    create_dir(&args.job.out)?;
    write_fit(&args.job.out, &fit, args.debug_mask)?;
    io::write_png_rgb(args.job.out.join("composite.png"), &img)?;
    io::write_pfm(args.job.out.join("object_coc.pfm"), &coc)
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("DEFOCUS_THREADS") else { return Ok(()) };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidParameter(format!("DEFOCUS_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Numeric => 3,
        ErrorKind::Io => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Render(a) => render(a),
        Command::Fit(a) => fit(a),
        Command::Composite(a) => composite(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Pipeline(a) => pipeline(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
