use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bgmatte::distort::{distort_indexed, DistortionConfig, DistortionMode};
use bgmatte::harness::{
    compose_dataset, data_root, distort_dataset, evaluate_still, evaluate_video, load_split, still_table,
    summary_table, video_table, write_synth_pool, AssetPool, POOL_FILE, DatasetConfig, DatasetManifest, Predictor,
    ReportTable, Split, SynthConfig, VideoEvalSpec, MANIFEST_FILE,
};
use bgmatte::imagecore::{load_image, save_image, BitDepth};
use bgmatte::metrics::{EvalRegion, MetricParams};
use bgmatte::trainer::{load_checkpoint, load_generator, train, RunOutput, TrainConfig};
use bgmatte::{Error, Result};

#[derive(Parser)]
#[command(name = "bgmatte", version, about = "Background-aware alpha matting pipeline")]
struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write procedural foregrounds, mattes and backgrounds plus pool.json.
    SynthData(SynthArgs),
    /// Composite a pool into a dataset with trimaps and a manifest.
    Compose(ComposeArgs),
    /// Add simulated background artifacts to a dataset, or to a single image.
    Distort(DistortArgs),
    /// Train the generator and discriminator.
    Train(TrainArgs),
    /// Score still images of a manifest split.
    EvaluateStill(EvalStillArgs),
    /// Score video sequences under one or more background sources.
    EvaluateVideo(EvalVideoArgs),
    /// Collect evaluation CSVs into one table.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 6)]
    foregrounds: usize,
    #[arg(long, default_value_t = 4)]
    backgrounds: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 80)]
    background_size: usize,
}

#[derive(Args)]
struct ComposeArgs {
    /// pool.json written by synth-data (or its directory).
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    backgrounds_per_fg: usize,
    #[arg(long, default_value_t = 1)]
    test_foregrounds: usize,
    #[arg(long, default_value_t = 4)]
    band_radius: usize,
    #[arg(long, default_value_t = 8)]
    bit_depth: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    M,
    H,
    Both,
}

#[derive(Args)]
struct DistortArgs {
    /// Dataset manifest to extend with distorted backgrounds.
    #[arg(long, conflicts_with_all = ["input", "output"])]
    data: Option<PathBuf>,
    /// Single background image to distort.
    #[arg(long, requires = "output")]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Index of the image in its set; selects the per-image random stream.
    #[arg(long, default_value_t = 0)]
    index: u64,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,
    #[arg(long, default_value_t = 8)]
    bit_depth: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum SetArg {
    M,
    H,
}

impl From<SetArg> for DistortionMode {
    fn from(s: SetArg) -> Self {
        match s {
            SetArg::M => DistortionMode::M,
            SetArg::H => DistortionMode::H,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// TOML training configuration; echoed verbatim into checkpoints.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Distortion set supplying the background input.
    #[arg(long, value_enum, default_value = "m")]
    set: SetArg,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegionArg {
    UnknownOnly,
    AllPixels,
}

#[derive(Args)]
struct PredictorArgs {
    /// Generator checkpoint.
    #[arg(long, conflicts_with = "predictor")]
    checkpoint: Option<PathBuf>,
    /// Reference predictor: `oracle`, `constant:V` or `noisy:SIGMA`.
    #[arg(long)]
    predictor: Option<String>,
    #[arg(long, value_enum, default_value = "unknown-only")]
    region: RegionArg,
}

#[derive(Args)]
struct EvalStillArgs {
    #[command(flatten)]
    predictor: PredictorArgs,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "m")]
    set: SetArg,
    #[arg(long, default_value = "test")]
    split: String,
    /// Per-image CSV with a trailing mean row.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    text: Option<PathBuf>,
}

#[derive(Args)]
struct EvalVideoArgs {
    #[command(flatten)]
    predictor: PredictorArgs,
    #[arg(long)]
    sequence: String,
    /// Directory holding composite/, alpha/ and trimap/ frame folders.
    #[arg(long)]
    frames: PathBuf,
    /// Background source as LABEL=DIR; repeat for several sources.
    #[arg(long = "background", required = true)]
    backgrounds: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    text: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Evaluation CSV as LABEL=PATH (or PATH, labelled by file stem); repeatable.
    #[arg(long = "input", required = true)]
    inputs: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    text: Option<PathBuf>,
}

fn split_label(s: &str) -> (Option<&str>, &str) {
    match s.split_once('=') {
        Some((l, p)) => (Some(l), p),
        None => (None, s),
    }
}

fn region(r: RegionArg) -> EvalRegion {
    match r {
        RegionArg::UnknownOnly => EvalRegion::UnknownOnly,
        RegionArg::AllPixels => EvalRegion::AllPixels,
    }
}

fn build_predictor(args: &PredictorArgs, seed: u64) -> Result<(String, Predictor)> {
    if let Some(ckpt) = &args.checkpoint {
        let g = load_generator(ckpt)?;
        let label = ckpt.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok((label, Predictor::Model(Box::new(g))));
    }
    let spec = args
        .predictor
        .as_deref()
        .ok_or_else(|| Error::Config("give --checkpoint or --predictor".into()))?;
    let num = |v: &str| v.parse::<f64>().map_err(|_| Error::Config(format!("bad number in predictor {spec:?}")));
    let p = match spec.split_once(':') {
        None if spec == "oracle" => Predictor::Oracle,
        Some(("constant", v)) => Predictor::Constant(num(v)?),
        Some(("noisy", v)) => Predictor::NoisyGt { sigma: num(v)?, seed },
        _ => return Err(Error::Config(format!("unknown predictor {spec:?}"))),
    };
    Ok((spec.to_string(), p))
}

fn write_table(table: &ReportTable, csv: &Path, text: Option<&PathBuf>) -> Result<()> {
    table.write_csv(csv)?;
    let rendered = table.to_text();
    if let Some(path) = text {
        std::fs::write(path, &rendered).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    print!("{rendered}");
    Ok(())
}

fn depth(bits: u32) -> Result<BitDepth> {
    BitDepth::from_bits(bits)
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::SynthData(a) => {
            let cfg = SynthConfig {
                foregrounds: a.foregrounds,
                backgrounds: a.backgrounds,
                size: a.size,
                background_size: a.background_size,
                seed,
            };
            let pool = write_synth_pool(&a.out, &cfg)?;
            log::info!(
                "wrote {} foregrounds and {} backgrounds to {}",
                pool.foregrounds.len(),
                pool.backgrounds.len(),
                a.out.display()
            );
        }
        Command::Compose(a) => {
            let pool_file = if a.pool.is_dir() { a.pool.join(POOL_FILE) } else { a.pool.clone() };
            let pool = AssetPool::load(&pool_file)?;
            let pool_dir = pool_file.parent().unwrap_or(Path::new("."));
            let cfg = DatasetConfig {
                backgrounds_per_fg: a.backgrounds_per_fg,
                test_foregrounds: a.test_foregrounds,
                band_radius: a.band_radius,
                bit_depth: depth(a.bit_depth)?,
                seed,
                distortion: DistortionConfig {
                    rng_seed: seed,
                    ..Default::default()
                },
            };
            let manifest = compose_dataset(&pool, pool_dir, &cfg, &a.out)?;
            manifest.save(&a.out.join(MANIFEST_FILE))?;
            log::info!("composed {} records into {}", manifest.records.len(), a.out.display());
        }
        Command::Distort(a) => {
            let modes: Vec<DistortionMode> = match a.mode {
                ModeArg::M => vec![DistortionMode::M],
                ModeArg::H => vec![DistortionMode::H],
                ModeArg::Both => vec![DistortionMode::M, DistortionMode::H],
            };
            let cfg = DistortionConfig {
                rng_seed: seed,
                ..Default::default()
            };
            if let Some(path) = a.data {
                let mut manifest = DatasetManifest::load(&path)?;
                distort_dataset(&mut manifest, &data_root(&path), &cfg, &modes, depth(a.bit_depth)?)?;
                manifest.save(&path)?;
                log::info!("distorted {} backgrounds", manifest.records.len() * modes.len());
            } else if let (Some(input), Some(output)) = (a.input, a.output) {
                if modes.len() != 1 {
                    return Err(Error::Config("single-image distortion needs --mode m or --mode h".into()));
                }
                let cfg = DistortionConfig { mode: modes[0], ..cfg };
                let d = distort_indexed(&load_image(&input)?, &cfg, a.index)?;
                save_image(&d.image, &output, depth(a.bit_depth)?)?;
            } else {
                return Err(Error::Config("give --data MANIFEST or --input/--output".into()));
            }
        }
        Command::Train(a) => {
            let text = match &a.config {
                Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.clone(),
                    source: e,
                })?,
                None => String::new(),
            };
            let mut cfg: TrainConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(e) = a.epochs {
                cfg.epochs = e;
            }
            let manifest = DatasetManifest::load(&a.data)?;
            let data = load_split(&manifest, &data_root(&a.data), Split::Train, a.set.into())?;
            let resume = a.resume.as_deref().map(load_checkpoint).transpose()?.map(|c| c.state);
            let out = RunOutput {
                out_dir: &a.out,
                config_text: &text,
            };
            let state = train(&cfg, &data, &out, resume)?;
            if let Some(last) = state.history.last() {
                log::info!(
                    "finished {} steps; last l_alpha {:.5} l_total {:.5}",
                    state.step,
                    last.l_alpha,
                    last.l_total
                );
            }
        }
        Command::EvaluateStill(a) => {
            let (_, predictor) = build_predictor(&a.predictor, seed)?;
            let split = match a.split.as_str() {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(Error::Config(format!("unknown split {other:?}"))),
            };
            let params = MetricParams {
                region: region(a.predictor.region),
                ..Default::default()
            };
            let manifest = DatasetManifest::load(&a.data)?;
            let report = evaluate_still(&predictor, &manifest, &data_root(&a.data), split, a.set.into(), &params)?;
            for (id, err) in report.failures() {
                log::warn!("{id}: {err}");
            }
            write_table(&still_table(&report), &a.out, a.text.as_ref())?;
        }
        Command::EvaluateVideo(a) => {
            let model = build_predictor(&a.predictor, seed)?;
            let params = MetricParams {
                region: region(a.predictor.region),
                ..Default::default()
            };
            let specs = a
                .backgrounds
                .iter()
                .map(|b| {
                    let (label, dir) = split_label(b);
                    let dir = Path::new(dir);
                    let label = label.map(str::to_string).unwrap_or_else(|| dir.display().to_string());
                    VideoEvalSpec::from_dirs(&a.sequence, &label, &a.frames, dir)
                })
                .collect::<Result<Vec<_>>>()?;
            let rows = evaluate_video(&[model], &specs, Path::new(""), &params)?;
            for r in rows.iter().filter(|r| r.partial()) {
                for (k, err) in &r.failed_frames {
                    log::warn!("{} / {} frame {k}: {err}", r.sequence, r.method);
                }
            }
            write_table(&video_table(&rows), &a.out, a.text.as_ref())?;
        }
        Command::Report(a) => {
            let tables = a
                .inputs
                .iter()
                .map(|s| {
                    let (label, path) = split_label(s);
                    let path = Path::new(path);
                    let label = label
                        .map(str::to_string)
                        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
                        .unwrap_or_default();
                    Ok((label, ReportTable::read_csv(path)?))
                })
                .collect::<Result<Vec<_>>>()?;
            write_table(&summary_table(&tables)?, &a.out, a.text.as_ref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
