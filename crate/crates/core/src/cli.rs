use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_depth_png, write_label_png};
use crate::nn::{
    gradient_check, load_checkpoint, perturb_for_check, Network, NetworkConfig, OptimizerKind,
};
use crate::pipeline::{
    evaluate, generate_dataset, predict, read_dataset, read_depth_input, train, TextureSpec,
    TrainConfig,
};
use crate::raster::{
    distance_to_nearest, fill_polygon, one_sided_distance_transform, rasterize_tows, render_scene,
    sigmoid_profile, transition_px, Class, Mask, Raster, TextureSource, FIBER_DEPTH,
};
use crate::rng::stream_rng;
use crate::scene::{sample_scene, GeneratorConfig};

const PRECEDENCE: &str =
    "Settings are resolved as: command-line flag > config file (--config) > built-in default.\n\
All randomness derives from --seed. With --threads 1 every subcommand is bitwise reproducible.\n\
Exit codes: 0 success, 1 runtime failure, 2 usage error.";

#[derive(Parser, Debug)]
#[command(name = "afpseg", version, about = "Synthetic AFP depth maps and U-Net defect segmentation", after_help = PRECEDENCE)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Base seed for all randomness
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (file or prefix, depending on the subcommand)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Preset {
    Desk,
    Paper,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset into an AFPD container
    #[command(after_help = PRECEDENCE)]
    Generate {
        #[arg(long)]
        count: Option<usize>,
        /// Generator geometry preset used when no config file is given
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Disable ramp, texture and noise
        #[arg(long)]
        no_nuisance: bool,
    },
    /// Train a network and write an AFPW checkpoint to --out
    #[command(after_help = PRECEDENCE)]
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        train_count: Option<usize>,
        #[arg(long)]
        val_count: Option<usize>,
        /// Pre-generated training set (AFPD)
        #[arg(long)]
        train_data: Option<PathBuf>,
        /// Pre-generated validation set (AFPD)
        #[arg(long)]
        val_data: Option<PathBuf>,
        /// JSON-lines metrics log, one line per epoch
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Print the pixel confusion table of a checkpoint on a dataset
    #[command(after_help = PRECEDENCE)]
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Emit the report as a JSON object
        #[arg(long)]
        json: bool,
    },
    /// Segment one depth map (grayscale PNG or AFPD sample) into a label PNG
    #[command(after_help = PRECEDENCE)]
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Sample index when the input is an AFPD container
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Run gradient and rasterizer self-checks
    #[command(after_help = PRECEDENCE)]
    Selftest,
    /// Export one dataset sample as <out>_depth.png and <out>_labels.png
    #[command(after_help = PRECEDENCE)]
    Preview {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
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

type CliResult<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

/// Entry point shared by the binary and the tests. Returns the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.common.threads {
        Some(0) => usage("--threads must be at least 1"),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(Failure::Runtime(Error::Config(format!("thread pool: {e}")))),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Config file accepted by `generate`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenerateConfig {
    generator: Option<GeneratorConfig>,
    preset: Option<Preset>,
    textures: TextureSpec,
    count: Option<usize>,
    seed: Option<u64>,
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let common = &cli.common;
    match &cli.command {
        Command::Generate {
            count,
            preset,
            no_nuisance,
        } => {
            let file: GenerateConfig = match &common.config {
                Some(p) => load_json(p)?,
                None => GenerateConfig::default(),
            };
            let Some(out) = &common.out else {
                return usage("generate requires --out");
            };
            let mut generator = match (preset.or(file.preset), file.generator) {
                (Some(Preset::Desk), _) => GeneratorConfig::desk_scale(),
                (Some(Preset::Paper), _) => GeneratorConfig::paper_scale(),
                (None, Some(g)) => g,
                (None, None) => GeneratorConfig::paper_scale(),
            };
            if *no_nuisance {
                generator = generator.without_nuisance();
            }
            let count = count.or(file.count).unwrap_or(100);
            let seed = common.seed.or(file.seed).unwrap_or(0);
            generate_dataset(&generator, count, seed, &file.textures, out)?;
            println!("wrote {count} samples to {}", out.display());
            Ok(())
        }
        Command::Train {
            epochs,
            batch_size,
            learning_rate,
            train_count,
            val_count,
            train_data,
            val_data,
            metrics,
        } => {
            let mut cfg: TrainConfig = match &common.config {
                Some(p) => load_json(p)?,
                None => TrainConfig::default(),
            };
            if let Some(v) = common.seed {
                cfg.seed = v;
            }
            if let Some(v) = epochs {
                cfg.epochs = *v;
            }
            if let Some(v) = batch_size {
                cfg.batch_size = *v;
            }
            if let Some(v) = learning_rate {
                cfg.optimizer.learning_rate = *v;
            }
            if let Some(v) = train_count {
                cfg.train_count = *v;
            }
            if let Some(v) = val_count {
                cfg.val_count = *v;
            }
            if train_data.is_some() {
                cfg.train_data = train_data.clone();
            }
            if val_data.is_some() {
                cfg.val_data = val_data.clone();
            }
            if metrics.is_some() {
                cfg.metrics_log = metrics.clone();
            }
            if common.out.is_some() {
                cfg.checkpoint = common.out.clone();
            }
            if cfg.checkpoint.is_none() {
                cfg.checkpoint = Some(PathBuf::from("model.afpw"));
            }
            if let Err(e) = cfg.validate() {
                return usage(e.to_string());
            }
            let optimizer = match cfg.optimizer.kind {
                OptimizerKind::Adam => "adam",
                OptimizerKind::Sgd => "sgd",
            };
            eprintln!(
                "training {} epochs on {} samples ({optimizer}, lr {})",
                cfg.epochs, cfg.train_count, cfg.optimizer.learning_rate
            );
            let (_, report) = train(&cfg)?;
            println!("initial validation loss {:.4}", report.initial_val_loss);
            for m in &report.epochs {
                println!(
                    "epoch {:>3}  train_loss {:.5}  val_accuracy {:.4}",
                    m.epoch, m.train_loss, m.val_accuracy
                );
            }
            println!("{}", report.final_eval);
            if let Some(p) = &cfg.checkpoint {
                println!("checkpoint written to {}", p.display());
            }
            Ok(())
        }
        Command::Eval {
            checkpoint,
            data,
            json,
        } => {
            let net = load_checkpoint(checkpoint)?;
            let dataset = read_dataset(data)?;
            let report = evaluate(&net, &dataset)?;
            if *json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).map_err(Error::from)?
                );
            } else {
                println!("{report}");
            }
            if let Some(out) = &common.out {
                let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
                fs::write(out, text).map_err(|e| Error::file(out, e))?;
            }
            Ok(())
        }
        Command::Infer {
            checkpoint,
            input,
            index,
        } => {
            let Some(out) = &common.out else {
                return usage("infer requires --out");
            };
            let net = load_checkpoint(checkpoint)?;
            let depth = match read_depth_input(input, *index) {
                Err(Error::Data(msg)) if msg.contains("out of range") => return usage(msg),
                other => other?,
            };
            let labels = predict(&net, &depth)?;
            write_label_png(out, &labels)?;
            let freq = labels.class_frequencies();
            for class in Class::ALL {
                println!(
                    "{:<9} {:6.2}%",
                    class.name(),
                    100.0 * freq[class.id() as usize]
                );
            }
            Ok(())
        }
        Command::Selftest => {
            let seed = common.seed.unwrap_or(0);
            let results = selftest(seed)?;
            let mut all = true;
            for (name, pass, detail) in &results {
                println!("{} {name}: {detail}", if *pass { "PASS" } else { "FAIL" });
                all &= pass;
            }
            if all {
                Ok(())
            } else {
                Err(Failure::Runtime(Error::Data("self-test failed".into())))
            }
        }
        Command::Preview { data, index } => {
            let Some(prefix) = &common.out else {
                return usage("preview requires --out <prefix>");
            };
            let dataset = read_dataset(data)?;
            let Some(ex) = dataset.samples.get(*index) else {
                return usage(format!(
                    "index {index} out of range for a dataset of {} samples",
                    dataset.samples.len()
                ));
            };
            let depth_path = with_suffix(prefix, "_depth.png");
            let label_path = with_suffix(prefix, "_labels.png");
            write_depth_png(&depth_path, &ex.x)?;
            write_label_png(&label_path, &ex.y)?;
            println!(
                "wrote {} and {}",
                depth_path.display(),
                label_path.display()
            );
            Ok(())
        }
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

type Check = (&'static str, bool, String);

fn selftest(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = stream_rng(seed, 0x5e1f);

    let config = NetworkConfig {
        levels: 2,
        base_features: 2,
        ..NetworkConfig::default()
    };
    let mut net = Network::<f64>::new(config, seed)?;
    perturb_for_check(&mut net, &mut rng);
    let x = crate::nn::network::random_tensor(&[1, 8, 8, 1], &mut rng);
    let labels: Vec<u8> = (0..64).map(|_| rng.random_range(0..4)).collect();
    let report = gradient_check(&net, &x, &labels, 1e-5)?;
    out.push((
        "gradient check",
        report.max_rel_error < 1e-6,
        format!(
            "max relative error {:.3e} (max absolute {:.1e}) over {} parameters",
            report.max_rel_error, report.max_abs_error, report.checked
        ),
    ));

    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(3..=8);
        let poly: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random_range(-4.0..28.0), rng.random_range(-4.0..28.0)])
            .collect();
        let mut canvas = Raster::filled(24, 24, false);
        fill_polygon(&poly, &mut canvas, true)?;
        for r in 0..24 {
            for c in 0..24 {
                if canvas[(r, c)] != point_in_polygon([c as f64 + 0.5, r as f64 + 0.5], &poly) {
                    mismatches += 1;
                }
            }
        }
    }
    out.push((
        "polygon fill",
        mismatches == 0,
        format!("{mismatches} pixel mismatches on 100 polygons"),
    ));

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mask: Mask = Raster::from_fn(12, 12, |_, _| rng.random_bool(0.7));
        let edt = one_sided_distance_transform(&mask);
        for r in 0..12i64 {
            for c in 0..12i64 {
                let expected = if !mask[(r as usize, c as usize)] {
                    0.0
                } else {
                    let mut best = f64::INFINITY;
                    for rr in -1..=12i64 {
                        for cc in -1..=12i64 {
                            let outside = !(0..12).contains(&rr)
                                || !(0..12).contains(&cc)
                                || !mask[(rr as usize, cc as usize)];
                            if outside {
                                best =
                                    best.min((((rr - r).pow(2) + (cc - c).pow(2)) as f64).sqrt());
                            }
                        }
                    }
                    best
                };
                worst = worst.max((edt[(r as usize, c as usize)] - expected).abs());
            }
        }
    }
    out.push((
        "distance transform",
        worst < 1e-9,
        format!("max error {worst:.2e} on 100 masks"),
    ));

    let generator = GeneratorConfig::desk_scale().without_nuisance();
    let floor = 1.0 + sigmoid_profile(0.0, transition_px(&generator))?;
    let textures = TextureSource::default();
    let mut violations = 0usize;
    for i in 0..50 {
        let scene = sample_scene(&generator, seed ^ i, textures.len())?;
        let ex = render_scene(&scene, &textures)?;
        let base = rasterize_tows(&scene.grid, &generator)?;
        for k in 0..ex.y.len() {
            let z = ex.x.data[k];
            let ok = match Class::from_id(ex.y.data[k]) {
                Some(Class::Gap) => z == 0.0,
                Some(Class::Tow) => z == 1.0,
                Some(Class::Overlap) => z >= floor - 1e-12,
                Some(Class::Fuzzball) => z - base.depth.data[k] >= FIBER_DEPTH - 1e-12,
                None => false,
            };
            violations += usize::from(!ok);
        }
    }
    out.push((
        "label/depth consistency",
        violations == 0,
        format!("{violations} violations on 50 scenes"),
    ));

    let mut seeds = Raster::filled(9, 9, false);
    seeds[(4, 4)] = true;
    let dist = distance_to_nearest(&seeds);
    let ok = (dist[(0, 0)] - 32f64.sqrt()).abs() < 1e-12;
    out.push((
        "seed distance",
        ok,
        format!("corner distance {:.6}", dist[(0, 0)]),
    ));
    Ok(out)
}
