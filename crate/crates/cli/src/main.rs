use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use recurseed::edgepredict::ep_refine;
use recurseed::eval::{accumulate, ConfusionTally, EvalReport};
use recurseed::io::dataset::{load_dataset, load_mix_batch, save_dataset, save_mixed};
use recurseed::io::{read_mask, read_rgb, read_tensor, write_mask, write_tensor, Tensor, TensorError};
use recurseed::mixer::mix_batch;
use recurseed::norm::minmax_normalize;
use recurseed::pamr::{active_window, pamr_refine};
use recurseed::scg::scg_refine;
use recurseed::seedloop::{certain_filter, recurseed_step, run_recursion, write_trace, ToyLearner};
use recurseed::synth::{shapes_dataset, CLASSES};
use recurseed::{Error, FeatureStack, PipelineConfig, RgbImage, ScoreMap, Validate};

#[derive(Parser)]
#[command(name = "recurseed", version, about = "Seed refinement for weakly supervised segmentation")]
struct Cli {
    /// Flat `key = value` configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Refine a CAM with feature self-correlation
    Scg {
        #[command(flatten)]
        cam: CamInputs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Propagate a score map along image affinities
    Pamr {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// SCG followed by PAMR over the SCG's active region
    Refine {
        #[command(flatten)]
        cam: CamInputs,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threshold a refined seed into a label mask
    Cf {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        fg: Option<f64>,
        #[arg(long)]
        bg: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relabel uncertain decoder pixels inside edge-bounded superpixels
    Ep {
        #[arg(long)]
        dec: PathBuf,
        #[arg(long)]
        low: Option<f64>,
        #[arg(long)]
        high: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paste certain foreground between the items of a batch
    Mix {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the toy learner and write a per-epoch trace
    Recurse {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// First epoch (1-based) with mixing
        #[arg(long)]
        mix_after: Option<usize>,
        #[arg(long)]
        no_mix: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Score predicted masks against ground truth
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Write the synthetic shapes dataset
    Synth {
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, default_value_t = 48)]
        size: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CamInputs {
    #[arg(long)]
    cam: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    features: Vec<PathBuf>,
}

/// A failure on bad values rather than on reading or writing files.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return if e.is_io() { 2 } else { 1 };
        }
        if cause.is::<TensorError>() || cause.is::<std::io::Error>() {
            return 2;
        }
        if cause.is::<Invalid>() || cause.is::<recurseed::Violation>() {
            return 1;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("config {}", p.display())),
        None => Ok(PipelineConfig::default()),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn read_map(path: &Path, probabilistic: bool) -> Result<ScoreMap> {
    let map = read_tensor(path)
        .and_then(|t| t.into_score_map(probabilistic))
        .with_context(|| format!("reading {}", path.display()))?;
    map.validate().with_context(|| format!("validating {}", path.display()))?;
    Ok(map)
}

fn read_image(path: &Path) -> Result<RgbImage> {
    read_rgb(path).with_context(|| format!("reading {}", path.display()))
}

fn read_stack(paths: &[PathBuf], height: usize, width: usize) -> Result<FeatureStack> {
    let layers = paths
        .iter()
        .map(|p| {
            read_tensor(p)
                .and_then(Tensor::into_feature_layer)
                .with_context(|| format!("reading {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let stack = FeatureStack::new(layers, height, width).context("assembling features")?;
    stack.validate().context("validating features")?;
    Ok(stack)
}

/// Reads a CAM and scales each class to `[0, 1]`.
fn read_cam(path: &Path) -> Result<ScoreMap> {
    let raw = read_map(path, false)?;
    let (c, h, w) = (raw.classes(), raw.height(), raw.width());
    let data = minmax_normalize(raw.as_slice(), &[c, h * w], 1);
    Ok(ScoreMap::new(c, h, w, data, true)?)
}

fn same_size(what: &str, map: &ScoreMap, image: &RgbImage) -> Result<()> {
    if (map.height(), map.width()) != (image.height(), image.width()) {
        bail!(Invalid(format!(
            "{what}: map is {}x{} but image is {}x{}",
            map.height(),
            map.width(),
            image.height(),
            image.width()
        )));
    }
    Ok(())
}

/// Creates `path` through a temporary sibling so a failed write leaves nothing behind.
fn atomic_file(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = tempfile::Builder::new()
        .prefix(".recurseed")
        .tempfile_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    write(tmp.path())?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Fills a temporary sibling directory, then renames it to `path`.
fn atomic_dir(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let parent = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    if path.exists() && fs::read_dir(path)?.next().is_some() {
        bail!(Invalid(format!("output directory {} is not empty", path.display())));
    }
    let tmp = tempfile::Builder::new()
        .prefix(".recurseed")
        .tempdir_in(parent)
        .with_context(|| format!("creating temporary directory in {}", parent.display()))?;
    write(tmp.path())?;
    if path.exists() {
        fs::remove_dir(path)?;
    }
    fs::rename(tmp.keep(), path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn save_map(map: &ScoreMap, path: &Path) -> Result<()> {
    atomic_file(path, |tmp| Ok(write_tensor(&Tensor::from(map), tmp)?))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Scg { cam, out } => {
            cfg.validate()?;
            let map = read_cam(&cam.cam)?;
            let stack = read_stack(&cam.features, map.height(), map.width())?;
            let refined = scg_refine(&map, &stack, &cfg)
                .with_context(|| format!("refining {}", cam.cam.display()))?;
            save_map(&refined, &out)
        }
        Command::Pamr { map, image, iters, out } => {
            set(&mut cfg.pamr_iterations, iters);
            cfg.validate()?;
            let m = read_map(&map, false)?;
            let img = read_image(&image)?;
            same_size(&format!("{} vs {}", map.display(), image.display()), &m, &img)?;
            let refined = pamr_refine(&m, &img, &active_window(&m), &cfg)?;
            save_map(&refined, &out)
        }
        Command::Refine { cam, image, out } => {
            cfg.validate()?;
            let map = read_cam(&cam.cam)?;
            let img = read_image(&image)?;
            same_size(&format!("{} vs {}", cam.cam.display(), image.display()), &map, &img)?;
            let stack = read_stack(&cam.features, map.height(), map.width())?;
            save_map(&recurseed_step(&map, &stack, &img, &cfg)?, &out)
        }
        Command::Cf { map, fg, bg, out } => {
            set(&mut cfg.delta_fg, fg);
            set(&mut cfg.delta_bg, bg);
            cfg.validate()?;
            let rs = read_map(&map, true)?;
            let mask = certain_filter(&rs, &cfg);
            atomic_file(&out, |tmp| Ok(write_mask(&mask, tmp)?))
        }
        Command::Ep { dec, low, high, out } => {
            set(&mut cfg.canny_low, low);
            set(&mut cfg.canny_high, high);
            cfg.validate()?;
            let d = read_map(&dec, true)?;
            save_map(&ep_refine(&d, &cfg)?, &out)
        }
        Command::Mix { batch, seed, out } => {
            set(&mut cfg.rng_seed, seed);
            cfg.validate()?;
            let items = load_mix_batch(&batch).with_context(|| format!("reading batch {}", batch.display()))?;
            for (k, item) in items.iter().enumerate() {
                item.ep.validate().with_context(|| format!("batch item {k} ep"))?;
                item.rs.validate().with_context(|| format!("batch item {k} rs"))?;
            }
            let mixed = mix_batch(&items, cfg.rng_seed, &cfg)?;
            atomic_dir(&out, |tmp| Ok(save_mixed(tmp, &mixed)?))
        }
        Command::Recurse {
            dataset,
            epochs,
            mix_after,
            no_mix,
            seed,
            trace,
        } => {
            set(&mut cfg.epochs, epochs);
            set(&mut cfg.mix_after, mix_after);
            set(&mut cfg.rng_seed, seed);
            cfg.validate()?;
            let (classes, samples) =
                load_dataset(&dataset).with_context(|| format!("reading dataset {}", dataset.display()))?;
            let first = samples
                .first()
                .ok_or_else(|| Invalid(format!("dataset {} is empty", dataset.display())))?;
            let mut learner = ToyLearner::new(
                classes,
                first.stack.total_channels(),
                cfg.learning_rate,
                cfg.epsilon,
                cfg.rng_seed,
            );
            let mix_after = if no_mix { usize::MAX } else { cfg.mix_after };
            let records = run_recursion(&mut learner, &samples, cfg.epochs, &cfg, mix_after)?;
            atomic_file(&trace, |tmp| {
                let mut f = fs::File::create(tmp)?;
                write_trace(&records, &mut f)?;
                f.flush()?;
                Ok(())
            })
        }
        Command::Eval { pred, truth, report } => {
            let mut tally = ConfusionTally::new(0);
            let mut names: Vec<_> = fs::read_dir(&truth)
                .with_context(|| format!("listing {}", truth.display()))?
                .filter_map(|e| e.ok().map(|e| e.file_name()))
                .filter(|n| Path::new(n).extension().is_some_and(|x| x == "png"))
                .collect();
            names.sort();
            if names.is_empty() {
                bail!(Invalid(format!("no .png masks in {}", truth.display())));
            }
            for name in &names {
                let (tp, pp) = (truth.join(name), pred.join(name));
                let t = read_mask(&tp, None).with_context(|| format!("reading {}", tp.display()))?;
                let p = read_mask(&pp, None).with_context(|| format!("reading {}", pp.display()))?;
                accumulate(&p, &t, &mut tally)
                    .with_context(|| format!("{} vs {}", pp.display(), tp.display()))?;
            }
            let r = EvalReport::from_tally(&tally);
            atomic_file(&report, |tmp| Ok(fs::write(tmp, r.to_table())?))?;
            atomic_file(&report.with_extension("json"), |tmp| {
                Ok(fs::write(tmp, serde_json::to_string_pretty(&r)?)?)
            })?;
            print!("{}", r.to_table());
            Ok(())
        }
        Command::Synth { count, size, seed, out } => {
            set(&mut cfg.rng_seed, seed);
            let samples = shapes_dataset(count, size, cfg.rng_seed);
            atomic_dir(&out, |tmp| Ok(save_dataset(tmp, CLASSES, &samples)?))
        }
    }
}
