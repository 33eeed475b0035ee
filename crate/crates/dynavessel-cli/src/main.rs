//! Single-binary CLI: every processing stage as a subcommand.
//!
//! Errors print one machine-parsable line `error: <code>: <message>` on
//! stderr and exit nonzero; argument errors exit 2 with usage (clap).

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use dynavessel::error::{Error, Result};
use dynavessel::metrics::{self, EvaluateOptions};
use dynavessel::mip::{mip_render, Axis};
use dynavessel::nifti;
use dynavessel::phantom::{generate_study, write_study, PhantomSpec};
use dynavessel::pipeline;
use dynavessel::registration::{register_affine, register_rigid, RegistrationOptions};
use dynavessel::segmentation::{
    kapur_threshold, phansalkar_threshold, remove_small_components, skeletonize, Connectivity,
    PhansalkarParams,
};
use dynavessel::suppression::{subtract_baseline, vessel_separate, SeparateOptions};
use dynavessel::transform::TransformSpec;
use dynavessel::volume::{LabelVolume, VoxelSet};

#[derive(Parser)]
#[command(name = "dynavessel", version, about = "Dynamic CTA artery/vein annotation toolkit")]
struct Cli {
    /// Cap internal parallelism (default: all cores). Results do not
    /// depend on the thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Emit line-delimited JSON logs on stderr.
    #[arg(long, global = true)]
    log_json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic dynamic CTA studies.
    Phantom {
        #[command(subcommand)]
        cmd: PhantomCmd,
    },
    /// Head-ROI masking and isotropic resampling.
    Preprocess(PreprocessArgs),
    /// Baseline bone/soft-tissue subtraction.
    Subtract(SubtractArgs),
    /// Artery/vein separation of subtracted phase images.
    Separate(SeparateArgs),
    /// Rigid or affine intensity registration.
    Register(RegisterArgs),
    /// Threshold-based vessel segmentation.
    Segment(SegmentArgs),
    /// Topology-preserving 3D thinning of a mask.
    Skeletonize(SkeletonizeArgs),
    /// Score a prediction against ground truth.
    Evaluate(EvaluateArgs),
    /// Maximum-intensity projection to PNG.
    Render(RenderArgs),
    /// Batch pipelines.
    Pipeline {
        #[command(subcommand)]
        cmd: PipelineCmd,
    },
}

#[derive(Subcommand)]
enum PhantomCmd {
    /// Generate a study from a spec file into a directory.
    Generate {
        /// Phantom spec JSON; omitted = built-in default study.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override the spec's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Registration template; with --template-roi enables head masking.
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    template_roi: Option<PathBuf>,
    /// Target isotropic spacing in mm.
    #[arg(long, default_value_t = 0.468)]
    spacing: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SubtractArgs {
    #[arg(long)]
    post: PathBuf,
    #[arg(long)]
    baseline: PathBuf,
    /// Rigidly register the baseline to the post-contrast frame first.
    #[arg(long)]
    register: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SeparateArgs {
    #[arg(long)]
    sa: PathBuf,
    #[arg(long)]
    sv: PathBuf,
    #[arg(long)]
    xa: PathBuf,
    #[arg(long)]
    xv: PathBuf,
    /// Which volume the cross-phase warp applies to.
    #[arg(long = "alg1-operand", default_value = "subtracted")]
    operand: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    fixed: PathBuf,
    #[arg(long)]
    moving: PathBuf,
    /// rigid | affine
    #[arg(long, default_value = "rigid")]
    mode: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// phansalkar | kapur
    #[arg(long)]
    method: String,
    /// Window radius for the local threshold, voxels.
    #[arg(long, default_value_t = 15)]
    radius: usize,
    /// Histogram bins for the entropy threshold.
    #[arg(long, default_value_t = 256)]
    bins: usize,
    /// Drop connected components smaller than this many voxels.
    #[arg(long, default_value_t = 10)]
    min_component: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SkeletonizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// JSON map: ground-truth label name -> prediction label value.
    #[arg(long)]
    pairing: PathBuf,
    /// Intensity volume for phase classification and mean-HU stats.
    #[arg(long)]
    volume: Option<PathBuf>,
    /// Rename numeric ground-truth labels, e.g. "1=artery,2=vein".
    #[arg(long)]
    labels: Option<String>,
    /// Precomputed centerline mask per label, e.g. --centerline artery=cl.nii.gz
    #[arg(long = "centerline", value_name = "NAME=PATH")]
    centerlines: Vec<String>,
    /// Case identifier in CSV rows (defaults to the prediction filename).
    #[arg(long)]
    case_id: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Projection axis: x | y | z.
    #[arg(long, default_value = "z")]
    axis: String,
    /// Display window "lo:hi" in HU.
    #[arg(long, default_value = "-100:600", allow_hyphen_values = true)]
    window: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Validate and execute a pipeline config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

struct Logger {
    json: bool,
}

impl Logger {
    fn info(&self, msg: &str) {
        if self.json {
            let ts = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0);
            eprintln!(
                "{}",
                serde_json::json!({ "ts": ts, "level": "info", "msg": msg })
            );
        }
    }
}

fn main() {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        // ignore failure: the pool can only be configured once
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cli.threads;

    let log = Logger { json: cli.log_json };
    if let Err(e) = dispatch(cli.command, &log) {
        eprintln!("error: {}: {e}", e.code());
        std::process::exit(1);
    }
}

fn dispatch(command: Command, log: &Logger) -> Result<()> {
    match command {
        Command::Phantom { cmd: PhantomCmd::Generate { spec, out, seed } } => {
            let mut spec = match spec {
                Some(path) => serde_json::from_str::<PhantomSpec>(&std::fs::read_to_string(path)?)?,
                None => PhantomSpec::default_with(128, 1.0),
            };
            if let Some(s) = seed {
                spec.rng_seed = s;
            }
            let study = generate_study(&spec)?;
            write_study(&study, &out)?;
            log.info(&format!("wrote {} frames to {}", study.frames.len(), out.display()));
            println!("{}", out.display());
        }
        Command::Preprocess(a) => {
            let vol = nifti::read_volume(&a.input)?;
            let ropts = RegistrationOptions::default();
            std::fs::create_dir_all(&a.out)?;
            let masked = match (&a.template, &a.template_roi) {
                (Some(tpl), Some(roi)) => {
                    let template = nifti::read_volume(tpl)?;
                    let template_roi = nifti::read_labels(roi)?;
                    let mask = dynavessel::suppression::head_roi_mask(
                        &vol,
                        &template,
                        &template_roi,
                        &ropts,
                    )?;
                    nifti::write_labels(&mask, a.out.join("roi_mask.nii.gz"))?;
                    vol.apply_mask(&mask, dynavessel::AIR_HU)?
                }
                (None, None) => vol,
                _ => {
                    return Err(Error::Argument(
                        "--template and --template-roi must be given together".into(),
                    ))
                }
            };
            let resampled = masked.resample_isotropic(a.spacing)?;
            let path = a.out.join("volume.nii.gz");
            nifti::write_volume(&resampled, &path)?;
            log.info(&format!("preprocessed to {}", path.display()));
            println!("{}", path.display());
        }
        Command::Subtract(a) => {
            let post = nifti::read_volume(&a.post)?;
            let baseline = nifti::read_volume(&a.baseline)?;
            let out =
                subtract_baseline(&post, &baseline, a.register, &RegistrationOptions::default())?;
            nifti::write_volume(&out, &a.out)?;
            println!("{}", a.out.display());
        }
        Command::Separate(a) => {
            let sa = nifti::read_volume(&a.sa)?;
            let sv = nifti::read_volume(&a.sv)?;
            let xa = nifti::read_volume(&a.xa)?;
            let xv = nifti::read_volume(&a.xv)?;
            let opts = SeparateOptions {
                operand: a.operand.parse()?,
                registration: RegistrationOptions::default(),
            };
            let res = vessel_separate(&sa, &sv, &xa, &xv, &opts)?;
            std::fs::create_dir_all(&a.out)?;
            nifti::write_volume(&res.sa_star, a.out.join("sa_star.nii.gz"))?;
            nifti::write_volume(&res.sv_star, a.out.join("sv_star.nii.gz"))?;
            let provenance = serde_json::json!({
                "g_ra": TransformSpec::rigid(&res.g_ra, Some(res.g_ra_ncc)),
                "g_rv": TransformSpec::rigid(&res.g_rv, Some(res.g_rv_ncc)),
                "operand": a.operand,
                "inputs": {
                    "sa": input_digest(&a.sa)?,
                    "sv": input_digest(&a.sv)?,
                    "xa": input_digest(&a.xa)?,
                    "xv": input_digest(&a.xv)?,
                },
            });
            std::fs::write(
                a.out.join("transforms.json"),
                serde_json::to_string_pretty(&provenance)?,
            )?;
            log.info("separation complete");
            println!("{}", a.out.display());
        }
        Command::Register(a) => {
            let fixed = nifti::read_volume(&a.fixed)?;
            let moving = nifti::read_volume(&a.moving)?;
            let opts = RegistrationOptions::default();
            let spec = match a.mode.as_str() {
                "rigid" => {
                    let res = register_rigid(&fixed, &moving, &opts)?;
                    TransformSpec::rigid(&res.params, Some(res.final_ncc))
                }
                "affine" => {
                    let res = register_affine(&fixed, &moving, &opts)?;
                    TransformSpec::affine(&res.transform, Some(res.final_ncc))
                }
                other => {
                    return Err(Error::Argument(format!(
                        "mode must be 'rigid' or 'affine', got '{other}'"
                    )))
                }
            };
            std::fs::write(&a.out, serde_json::to_string_pretty(&spec)?)?;
            println!("{}", a.out.display());
        }
        Command::Segment(a) => {
            let vol = nifti::read_volume(&a.input)?;
            let mask = match a.method.as_str() {
                "phansalkar" => {
                    let p = PhansalkarParams { window_radius: a.radius, ..Default::default() };
                    phansalkar_threshold(&vol, &p, None)?
                }
                "kapur" => {
                    let t = kapur_threshold(&vol, a.bins, 1.0, None)?;
                    log.info(&format!("entropy threshold {t:.2} HU"));
                    let data = vol.data.iter().map(|&v| (v > t) as u8).collect();
                    LabelVolume::binary(vol.geometry.clone(), data, "vessel")?
                }
                other => {
                    return Err(Error::Argument(format!(
                        "method must be 'phansalkar' or 'kapur', got '{other}'"
                    )))
                }
            };
            let mask = remove_small_components(&mask, Connectivity::TwentySix, a.min_component);
            nifti::write_labels(&mask, &a.out)?;
            println!("{}", a.out.display());
        }
        Command::Skeletonize(a) => {
            let mask = nifti::read_labels(&a.input)?;
            let skeleton = skeletonize(&mask);
            nifti::write_labels(&skeleton.to_mask("centerline"), &a.out)?;
            println!("{}", a.out.display());
        }
        Command::Evaluate(a) => {
            let mut gt = nifti::read_labels(&a.gt)?;
            if let Some(spec) = &a.labels {
                for pair in spec.split(',') {
                    let (value, name) = pair.split_once('=').ok_or_else(|| {
                        Error::Argument(format!("--labels entry '{pair}' is not VALUE=NAME"))
                    })?;
                    let value: u8 = value.trim().parse().map_err(|_| {
                        Error::Argument(format!("--labels value '{value}' is not a u8"))
                    })?;
                    if gt.label_names.contains_key(&value) {
                        gt.label_names.insert(value, name.trim().to_string());
                    }
                }
            }
            let pred = nifti::read_labels(&a.pred)?;
            let pairing: BTreeMap<String, u8> =
                serde_json::from_str(&std::fs::read_to_string(&a.pairing)?)?;
            let vol = match &a.volume {
                Some(p) => Some(nifti::read_volume(p)?),
                None => None,
            };
            let mut centerlines = BTreeMap::new();
            for entry in &a.centerlines {
                let (name, path) = entry.split_once('=').ok_or_else(|| {
                    Error::Argument(format!("--centerline entry '{entry}' is not NAME=PATH"))
                })?;
                let mask = nifti::read_labels(path)?;
                centerlines.insert(name.to_string(), VoxelSet::from_mask(&mask));
            }
            let opts = EvaluateOptions { pairing, centerlines };
            let report = metrics::evaluate_case(&gt, &pred, &opts, vol.as_ref())?;
            std::fs::write(&a.out, serde_json::to_string_pretty(&report)?)?;
            if let Some(csv_path) = &a.csv {
                let case_id = a.case_id.clone().unwrap_or_else(|| {
                    a.pred.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
                });
                let mut csv = metrics::csv_header().to_string();
                csv.push_str(&metrics::report_csv_rows(&case_id, &report));
                std::fs::write(csv_path, csv)?;
            }
            println!("{}", a.out.display());
        }
        Command::Render(a) => {
            let vol = nifti::read_volume(&a.input)?;
            let axis: Axis = a.axis.parse()?;
            let (lo, hi) = a
                .window
                .split_once(':')
                .and_then(|(l, h)| Some((l.parse::<f32>().ok()?, h.parse::<f32>().ok()?)))
                .ok_or_else(|| {
                    Error::Argument(format!("window must be 'lo:hi' in HU, got '{}'", a.window))
                })?;
            let img = mip_render(&vol, axis, (lo, hi))?;
            let buffer =
                image::GrayImage::from_raw(img.width as u32, img.height as u32, img.pixels)
                    .ok_or_else(|| Error::Argument("image buffer size mismatch".into()))?;
            buffer
                .save(&a.out)
                .map_err(|e| Error::Argument(format!("cannot write PNG: {e}")))?;
            println!("{}", a.out.display());
        }
        Command::Pipeline { cmd: PipelineCmd::Run { config } } => {
            let config: pipeline::PipelineConfig =
                serde_json::from_str(&std::fs::read_to_string(&config)?)?;
            let diagnostics = pipeline::validate(&config);
            if !diagnostics.is_empty() {
                for d in &diagnostics {
                    eprintln!("invalid: {d}");
                }
                return Err(Error::Config(format!(
                    "{} validation diagnostic(s)",
                    diagnostics.len()
                )));
            }
            let manifest = pipeline::run(&config)?;
            for stage in &manifest.stages {
                println!(
                    "stage {:<16} {:<10} {:>8} ms{}",
                    stage.name,
                    stage.kind.as_str(),
                    stage.wall_ms,
                    if stage.cached { "  (cached)" } else { "" }
                );
            }
            println!("{}", config.workspace.join("manifest.json").display());
        }
    }
    Ok(())
}

fn input_digest(path: &PathBuf) -> Result<String> {
    dynavessel::digest::file_digest(path)
}
