use std::path::{Path, PathBuf};

use burn::tensor::backend::Backend;
use ctxdepth::data::depth_io;
use ctxdepth::data::synthetic::{self, gt_warp_residual};
use ctxdepth::data::{load_split, FrameId, RgbImage};
use ctxdepth::evaluation::{
    estimate_flops, evaluate_checkpoint, evaluate_predictions, evaluate_triplets, ComplexityReport,
    ComplexitySummary, DepthMetrics, DepthPredictor, EvalCrop, EvalProtocol, EvalReport,
};
use ctxdepth::network::{Checkpoint, DepthNet, DepthNetConfig, EncoderKind};
use ctxdepth::training::{Trainer, CHECKPOINT_DIR, LAST_CHECKPOINT, METRICS_FILE};
use ctxdepth::{CpuBackend, TrainBackend};
use serde_json::Value;

use crate::config::{self, read_spec, run_resolution, ExperimentConfig, CONFIG_SNAPSHOT};
use crate::error::{input, CliError, CliResult};
use crate::{
    colormap, ComplexityArgs, CropArg, EvalArgs, InferArgs, ResolutionArgs, SynthArgs, TrainArgs,
};

/// Default network resolution, the standard KITTI training size.
const DEFAULT_RESOLUTION: (usize, usize) = (640, 192);
/// Largest ground-truth warp residual the synthetic self-check accepts.
const SELF_CHECK_TOLERANCE: f64 = 1e-3;
const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

pub fn train(a: TrainArgs, seed: Option<u64>) -> CliResult<()> {
    let mut cfg = match (&a.config, a.resume, &a.out) {
        // A resumed run starts from its own snapshot unless a config is given.
        (None, true, Some(out)) => {
            ExperimentConfig::load(Some(&out.join(CONFIG_SNAPSHOT)), &a.overrides)?
        }
        _ => ExperimentConfig::load(a.config.as_deref(), &a.overrides)?,
    };
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(out) = a.out {
        cfg.output_dir = out;
    }
    cfg.validate()?;
    let data = cfg.data.open()?;
    let run = cfg.output_dir.clone();
    let device = Default::default();
    let mut trainer = if a.resume {
        let ckpt = Checkpoint::load(&run.join(CHECKPOINT_DIR).join(LAST_CHECKPOINT))?;
        let mut t = Trainer::<TrainBackend>::from_checkpoint(&ckpt, &device)?;
        t.train.epochs = cfg.train.epochs;
        t.train.max_steps = cfg.train.max_steps;
        t
    } else {
        if run.join(METRICS_FILE).exists() {
            return Err(input(format!(
                "{} already holds a training log; pass --resume or choose another --out",
                run.display()
            )));
        }
        Trainer::<TrainBackend>::new(
            cfg.network.clone(),
            cfg.train.clone(),
            cfg.loss.clone(),
            cfg.augment.clone(),
            &device,
        )?
    };
    std::fs::create_dir_all(&run)
        .map_err(|e| input(format!("cannot create {}: {e}", run.display())))?;
    cfg.save(&run.join(CONFIG_SNAPSHOT))?;
    log::info!("training on {} triplets into {}", data.len(), run.display());
    let report = trainer.fit(data.as_ref(), Some(&run))?;
    match report.steps.last() {
        Some(s) => println!(
            "trained {} steps (epoch {}), final loss {:.6}, photometric {:.6}",
            s.step, trainer.epoch, s.total_loss, s.photometric
        ),
        None => println!(
            "nothing to train: run already complete at epoch {}",
            trainer.epoch
        ),
    }
    if let Some(last) = report.checkpoints.last() {
        println!("checkpoint: {}", last.display());
    }
    println!("log: {}", run.join(METRICS_FILE).display());
    Ok(())
}

fn resolution(args: &ResolutionArgs, checkpoint: Option<&Path>) -> (usize, usize) {
    let (w, h) = checkpoint
        .and_then(run_resolution)
        .unwrap_or(DEFAULT_RESOLUTION);
    (args.width.unwrap_or(w), args.height.unwrap_or(h))
}

fn seed_backend(seed: Option<u64>) {
    if let Some(s) = seed {
        CpuBackend::seed(s);
    }
}

fn list_images(path: &Path) -> CliResult<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path)
        .map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    let mut images: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    images.sort();
    Ok(images)
}

pub fn infer(a: InferArgs, seed: Option<u64>) -> CliResult<()> {
    seed_backend(seed);
    let device = Default::default();
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let res = resolution(&a.resolution, Some(&a.checkpoint));
    let predictor = DepthPredictor::<CpuBackend>::from_checkpoint(&ckpt, res, &device)?;
    let images = list_images(&a.input)?;
    if images.is_empty() {
        return Err(input(format!("no images found at {}", a.input.display())));
    }
    std::fs::create_dir_all(&a.out)
        .map_err(|e| input(format!("cannot create {}: {e}", a.out.display())))?;
    let mut written = 0;
    for path in &images {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("frame");
        let outcome = (|| -> CliResult<()> {
            let image = RgbImage::load(path)?;
            let depth = predictor.predict(&image)?;
            let raster = a.out.join(format!("{stem}.{}", depth_io::RASTER_EXTENSION));
            depth_io::save_raster(&raster, depth.width, depth.height, &depth.data, "m")?;
            if !a.no_preview {
                let preview = a.out.join(format!("{stem}_depth.png"));
                colormap::save_preview(&depth, &preview)
                    .map_err(|e| input(format!("cannot write {}: {e}", preview.display())))?;
            }
            Ok(())
        })();
        match outcome {
            Ok(()) => written += 1,
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    println!(
        "wrote {written} of {} depth maps to {}",
        images.len(),
        a.out.display()
    );
    if written == 0 {
        return Err(input("every input image failed"));
    }
    Ok(())
}

fn parse_encoder(name: &str) -> CliResult<EncoderKind> {
    serde_json::from_value(Value::String(name.into()))
        .map_err(|_| input(format!("unknown encoder `{name}`")))
}

fn complexity_summary(
    network: &DepthNetConfig,
    (width, height): (usize, usize),
) -> CliResult<ComplexitySummary> {
    let report = trace(network, (width, height))?;
    Ok(ComplexitySummary {
        params: report.params,
        gmacs: report.gmacs(false),
        width,
        height,
    })
}

fn trace(network: &DepthNetConfig, (width, height): (usize, usize)) -> CliResult<ComplexityReport> {
    let d = DepthNet::<CpuBackend>::DIVISOR;
    if width == 0 || height == 0 || width % d != 0 || height % d != 0 {
        return Err(input(format!(
            "resolution {width}x{height} must be divisible by {d}"
        )));
    }
    let net = network.init::<CpuBackend>(&Default::default())?;
    Ok(estimate_flops(&net, height, width))
}

fn manifest_ids(split: &Path, list: &str) -> CliResult<Vec<FrameId>> {
    let manifest = load_split(split)?;
    manifest
        .get(list)
        .map(<[FrameId]>::to_vec)
        .ok_or_else(|| input(format!("split {} has no `{list}` list", split.display())))
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| input(format!("{flag} is required here")))
}

fn default_eval_dir(checkpoint: Option<&Path>) -> PathBuf {
    checkpoint
        .and_then(|c| c.parent())
        .filter(|d| d.file_name().is_some_and(|n| n == CHECKPOINT_DIR))
        .and_then(Path::parent)
        .map(|run| run.join("eval"))
        .unwrap_or_else(|| PathBuf::from("eval"))
}

pub fn eval(a: EvalArgs, seed: Option<u64>) -> CliResult<()> {
    seed_backend(seed);
    let protocol = EvalProtocol {
        median_scaling: !a.no_median_scaling,
        min_depth: a.min_depth,
        cap: a.cap,
        crop: match a.crop {
            CropArg::Eigen => EvalCrop::Eigen,
            CropArg::None => EvalCrop::None,
        },
    };
    protocol.validate()?;
    let device = Default::default();
    let res = resolution(&a.resolution, a.checkpoint.as_deref());
    let checkpoint = a.checkpoint.as_deref().map(Checkpoint::load).transpose()?;

    let mut report = match (&checkpoint, &a.predictions) {
        (Some(ckpt), None) => {
            let predictor = DepthPredictor::<CpuBackend>::from_checkpoint(ckpt, res, &device)?;
            match &a.synthetic {
                Some(dir) => {
                    let scenes = synthetic::load_dataset(dir)?;
                    if scenes.is_empty() {
                        return Err(input(format!(
                            "no synthetic scenes under {}",
                            dir.display()
                        )));
                    }
                    evaluate_triplets(&predictor, &scenes, &protocol)
                }
                None => {
                    let ids = manifest_ids(required(&a.split, "--split")?, &a.list)?;
                    let data_root = required(&a.data_root, "--data-root")?;
                    let gt_root = required(&a.gt_root, "--gt-root")?;
                    evaluate_checkpoint(&predictor, data_root, gt_root, &ids, &protocol)
                }
            }
        }
        (None, Some(pred)) => {
            if a.synthetic.is_some() {
                return Err(input(
                    "--synthetic evaluates a checkpoint; pass --checkpoint",
                ));
            }
            let ids = manifest_ids(required(&a.split, "--split")?, &a.list)?;
            evaluate_predictions(pred, required(&a.gt_root, "--gt-root")?, &ids, &protocol)
        }
        _ => return Err(input("pass exactly one of --checkpoint or --predictions")),
    };

    if a.report_complexity {
        let network = match &checkpoint {
            Some(c) => c.manifest.network.clone(),
            None => DepthNetConfig {
                encoder: parse_encoder(&a.encoder)?,
                ..Default::default()
            },
        };
        report.summary.complexity = Some(complexity_summary(&network, res)?);
    }
    print_report(&report);
    let out = a
        .out
        .unwrap_or_else(|| default_eval_dir(a.checkpoint.as_deref()));
    let (csv, json) = report.write(&out)?;
    println!("per-frame: {}\nsummary: {}", csv.display(), json.display());

    let s = &report.summary;
    if s.evaluated == 0 || s.skipped_fraction() > 0.5 {
        return Err(input(format!(
            "{} of {} frames skipped",
            s.skipped.len(),
            s.frames
        )));
    }
    Ok(())
}

fn print_report(report: &EvalReport) {
    let s = &report.summary;
    let mut header: Vec<String> = DepthMetrics::NAMES
        .iter()
        .map(|n| format!("{n:>8}"))
        .collect();
    let mut row: Vec<String> = match &s.mean {
        Some(m) => m.to_array().iter().map(|v| format!("{v:>8.3}")).collect(),
        None => vec![format!("{:>8}", "-"); 7],
    };
    if let Some(c) = &s.complexity {
        header.extend([format!("{:>9}", "params(M)"), format!("{:>8}", "GMACs")]);
        row.extend([
            format!("{:>9.2}", c.params as f64 / 1e6),
            format!("{:>8.2}", c.gmacs),
        ]);
    }
    println!("{}", header.join(" | "));
    println!("{}", row.join(" | "));
    println!(
        "evaluated {} of {} frames (median scaling {}, cap {} m, crop {:?})",
        s.evaluated,
        s.frames,
        if s.protocol.median_scaling {
            "on"
        } else {
            "off"
        },
        s.protocol.cap,
        s.protocol.crop
    );
    for skip in &s.skipped {
        println!("skipped {}: {}", skip.frame_id, skip.reason);
    }
}

pub fn synth(a: SynthArgs, seed: Option<u64>) -> CliResult<()> {
    let mut doc = match &a.spec {
        Some(path) => serde_json::to_value(read_spec(path)?).expect("spec serializes"),
        None => Value::Object(Default::default()),
    };
    for o in &a.overrides {
        config::apply_override(&mut doc, o)?;
    }
    let mut spec: synthetic::SyntheticSpec =
        serde_json::from_value(doc).map_err(|e| input(format!("invalid spec: {e}")))?;
    if let Some(s) = seed {
        spec.texture_seed = s;
    }
    spec.validate()?;
    let scenes = synthetic::generate_synthetic_dataset(&spec)?;
    synthetic::save_dataset(&a.out, &spec, &scenes)?;
    println!(
        "wrote {} scenes ({}x{}, shift {:.3} px) to {}",
        scenes.len(),
        spec.width,
        spec.height,
        spec.pixel_shift(),
        a.out.display()
    );

    // Self-check on the files as written, so encoding losses are included.
    let device = Default::default();
    let mut worst: f64 = 0.0;
    for (i, scene) in synthetic::load_dataset(&a.out)?.iter().enumerate() {
        let [prev, next] = gt_warp_residual::<CpuBackend>(scene, &device)?;
        let identical = scene.frames[0] == scene.frames[1] && scene.frames[1] == scene.frames[2];
        println!(
            "self-check scene_{i:04}: residual prev {prev:.2e} next {next:.2e}{}",
            if identical { " (identical frames)" } else { "" }
        );
        worst = worst.max(prev).max(next);
    }
    if worst < SELF_CHECK_TOLERANCE {
        println!("self-check passed: max residual {worst:.2e} < {SELF_CHECK_TOLERANCE:.0e}");
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "self-check failed: max residual {worst:.2e} >= {SELF_CHECK_TOLERANCE:.0e}"
        )))
    }
}

pub fn complexity(a: ComplexityArgs, seed: Option<u64>) -> CliResult<()> {
    seed_backend(seed);
    let network = match (&a.config, &a.checkpoint) {
        (Some(path), _) => ExperimentConfig::load(Some(path), &[])?.network,
        (None, Some(path)) => Checkpoint::load(path)?.manifest.network,
        (None, None) => DepthNetConfig {
            encoder: parse_encoder(&a.encoder)?,
            ..Default::default()
        },
    };
    if a.depth == 0 {
        return Err(input("--depth must be at least 1"));
    }
    let traced = trace(&network, (a.width, a.height))?;
    let report = ComplexityReport::from_layers(traced.layers, traced.input_size, a.depth);
    let unit = if a.two_ops_per_mac { "GFLOPs" } else { "GMACs" };
    println!("{:<32} {:>12} {:>10}", "module", "params", unit);
    for m in &report.breakdown {
        let g = if a.two_ops_per_mac { 2.0 } else { 1.0 } * m.macs as f64 / 1e9;
        println!("{:<32} {:>12} {:>10.4}", m.name, m.params, g);
    }
    println!(
        "total: {} parameters ({:.3} M), {:.3} {unit} at {}x{}",
        report.params,
        report.params_millions(),
        report.gmacs(a.two_ops_per_mac),
        a.width,
        a.height
    );
    if let Some(path) = &a.json {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(path, text)
            .map_err(|e| input(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_dir_follows_run_layout() {
        assert_eq!(
            default_eval_dir(Some(Path::new("runs/a/checkpoints/last.tar"))),
            PathBuf::from("runs/a/eval")
        );
        assert_eq!(
            default_eval_dir(Some(Path::new("x/model.tar"))),
            PathBuf::from("eval")
        );
        assert_eq!(default_eval_dir(None), PathBuf::from("eval"));
    }

    #[test]
    fn encoder_names() {
        assert_eq!(
            parse_encoder("b0").unwrap(),
            EncoderKind::EfficientnetB0Shape
        );
        assert_eq!(parse_encoder("tiny").unwrap(), EncoderKind::Tiny);
        assert!(parse_encoder("resnet").is_err());
    }
}
