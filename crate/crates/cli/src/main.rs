use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mespot::classifier::{read_model, train, write_model, TrainConfig};
use mespot::descriptors::{
    read_feature_cache, write_feature_cache, BlockGrid, DescriptorConfig, DescriptorKind, FeatureMatrix,
};
use mespot::evaluation::{
    prepare_dataset, read_curve_csv, read_summary_csv, run_benchmark, write_curve_csv, write_summary_csv,
    BenchmarkConfig, CurveKind, FppwDenominator, Protocol,
};
use mespot::sampling::{
    read_samples_csv, sample_video, write_samples_csv, GroundTruthMode, SampleScales, SamplingConfig,
};
use mespot::spotting::{spot, write_detections_csv, WindowBank};
use mespot::temporal_scale::{Interpolation, ScaleSpec};
use mespot::volume::probe_frame_count;
use mespot::{load_manifest, load_volume};
use mespot_cli::plot::emit_det_plot;
use mespot_cli::synth::{generate_synthetic, SynthConfig, MANIFEST_FILE};

const FEATURES_FILE: &str = "features.fch";
const SAMPLES_FILE: &str = "samples.csv";

#[derive(Parser)]
#[command(
    name = "mespot",
    version,
    about = "Multi-scale sliding-window spotting of brief facial events"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic annotated corpus
    Gen(GenArgs),
    /// Enumerate and label windows
    Sample(SampleArgs),
    /// Describe labelled windows into a feature cache
    Extract(ExtractArgs),
    /// Train a linear SVM from a feature cache
    Train(TrainArgs),
    /// Spot events in one video
    Spot(SpotArgs),
    /// Run a benchmark protocol
    Eval(EvalArgs),
    /// Plot DET curves and print summaries
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    subjects: usize,
    #[arg(long, default_value_t = 76)]
    videos: usize,
    #[arg(long, default_value_t = 5)]
    non_event: usize,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    #[arg(long, default_value_t = 32)]
    height: usize,
    #[arg(long, default_value_t = 32)]
    width: usize,
    #[arg(long, default_value_t = 1)]
    events_min: usize,
    #[arg(long, default_value_t = 2)]
    events_max: usize,
    #[arg(long, default_value_t = 5)]
    len_min: usize,
    #[arg(long, default_value_t = 17)]
    len_max: usize,
    #[arg(long, default_value_t = 20.0)]
    amp_min: f64,
    #[arg(long, default_value_t = 40.0)]
    amp_max: f64,
    #[arg(long, default_value_t = 4.0)]
    noise: f64,
    #[arg(long, default_value_t = 8.0)]
    drift: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct ScaleArgs {
    /// Comma-separated temporal scale factors; 1.0 is required
    #[arg(long, default_value = "0.5,0.75,1.0,1.5,2.0")]
    scales: String,
    #[arg(long, default_value = "tim")]
    interp: Interpolation,
}

impl ScaleArgs {
    fn spec(&self) -> Result<ScaleSpec> {
        Ok(ScaleSpec::parse(&self.scales, self.interp)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GtMode {
    Raw,
    Fixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainScales {
    All,
    Identity,
}

#[derive(Args, Clone)]
struct WindowArgs {
    /// Window length in frames
    #[arg(long = "L", default_value_t = 9)]
    window_len: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Minimum IoU for a positive window or a matched detection
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    /// Label against raw annotations or annotations recentred to window length
    #[arg(long, value_enum, default_value = "raw")]
    gt_mode: GtMode,
    /// Pyramid levels that contribute labelled windows
    #[arg(long, value_enum, default_value = "all")]
    sample_scales: TrainScales,
}

impl WindowArgs {
    fn config(&self) -> SamplingConfig {
        SamplingConfig {
            window_len: self.window_len,
            stride: self.stride,
            epsilon: self.epsilon,
            ground_truth: match self.gt_mode {
                GtMode::Raw => GroundTruthMode::Raw,
                GtMode::Fixed => GroundTruthMode::Fixed,
            },
            scales: match self.sample_scales {
                TrainScales::All => SampleScales::All,
                TrainScales::Identity => SampleScales::Identity,
            },
        }
    }
}

#[derive(Args, Clone)]
struct DescriptorArgs {
    #[arg(long, default_value = "higo-top")]
    feature: DescriptorKind,
    /// Block division as XxYxT, e.g. 8x8x4
    #[arg(long, default_value = "8x8x4")]
    bl: String,
    /// Block overlap ratio
    #[arg(long, default_value_t = 0.2)]
    ol: f64,
    /// Orientation bins for gradient descriptors
    #[arg(long, default_value_t = 8)]
    nb: usize,
}

impl DescriptorArgs {
    fn config(&self) -> Result<DescriptorConfig> {
        let grid = BlockGrid::parse_division(&self.bl, self.ol)?;
        Ok(DescriptorConfig::new(self.feature, grid, self.nb)?)
    }
}

#[derive(Args, Clone)]
struct SvmArgs {
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SvmArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            lambda: self.lambda,
            epochs: self.epochs,
            seed: self.seed,
            class_weight_pos: None,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Only this video id
    #[arg(long)]
    video: Option<String>,
    #[command(flatten)]
    scales: ScaleArgs,
    #[command(flatten)]
    window: WindowArgs,
    /// Output CSV; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for the feature cache and its sample table
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    descriptor: DescriptorArgs,
    #[command(flatten)]
    scales: ScaleArgs,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory written by `extract`
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    svm: SvmArgs,
}

#[derive(Args)]
struct SpotArgs {
    #[arg(long)]
    model: PathBuf,
    /// Frame directory or raw volume file
    #[arg(long)]
    video: PathBuf,
    /// Id written to the detection table; defaults to the file stem
    #[arg(long)]
    id: Option<String>,
    #[command(flatten)]
    descriptor: DescriptorArgs,
    #[command(flatten)]
    scales: ScaleArgs,
    #[arg(long = "L", default_value_t = 9)]
    window_len: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    threshold: f64,
    #[arg(long, default_value_t = 0.3)]
    nms_iou: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Loso,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum DenominatorArg {
    Neg,
    All,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    descriptor: DescriptorArgs,
    #[command(flatten)]
    scales: ScaleArgs,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    svm: SvmArgs,
    #[arg(long, default_value_t = 0.3)]
    nms_iou: f64,
    #[arg(long, value_enum, default_value = "loso")]
    protocol: ProtocolArg,
    #[arg(long, default_value_t = 0.5)]
    train_frac: f64,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, value_enum, default_value = "neg")]
    fppw_denominator: DenominatorArg,
    #[arg(long, default_value_t = 0.4)]
    ref_fppw: f64,
    #[arg(long, default_value_t = 1.0)]
    ref_fppv: f64,
}

#[derive(Args)]
struct ReportArgs {
    /// Curve CSVs written by `eval`
    #[arg(long, num_args = 1.., required = true)]
    curves: Vec<PathBuf>,
    /// Legend labels, one per curve; file stems by default
    #[arg(long, num_args = 1..)]
    labels: Vec<String>,
    /// Summary CSVs to print
    #[arg(long, num_args = 1..)]
    summary: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.4)]
    ref_fppw: f64,
    #[arg(long, default_value_t = 1.0)]
    ref_fppv: f64,
    #[arg(long)]
    out: PathBuf,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_subjects: a.subjects,
        n_videos: a.videos,
        non_event_videos: a.non_event,
        frames: a.frames,
        height: a.height,
        width: a.width,
        events_per_video: (a.events_min, a.events_max),
        event_length: (a.len_min, a.len_max),
        event_amplitude: (a.amp_min, a.amp_max),
        noise_sigma: a.noise,
        drift_amplitude: a.drift,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let m = generate_synthetic(&cfg, &a.out)?;
    println!(
        "wrote {} videos, {} events to {}",
        m.records.len(),
        m.total_ground_truths(),
        a.out.join(MANIFEST_FILE).display()
    );
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let spec = a.scales.spec()?;
    let cfg = a.window.config();
    let mut samples = Vec::new();
    for r in &manifest.records {
        if a.video.as_ref().is_some_and(|v| *v != r.id) {
            continue;
        }
        let frames = probe_frame_count(manifest.volume_path(r))?;
        samples.extend(sample_video(&r.id, frames, &r.ground_truths, spec.factors(), &cfg)?);
    }
    if let Some(v) = &a.video {
        if samples.is_empty() && manifest.record(v).is_none() {
            bail!("no video {v} in {}", a.manifest.display());
        }
    }
    write_samples_csv(&samples, output(a.out.as_deref())?)?;
    Ok(())
}

fn cmd_extract(a: ExtractArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let dcfg = a.descriptor.config()?;
    let spec = a.scales.spec()?;
    let cfg = a.window.config();
    let mut features = FeatureMatrix::new(dcfg.dim());
    let mut samples = Vec::new();
    for r in &manifest.records {
        let v = load_volume(manifest.volume_path(r))?;
        let bank = WindowBank::build(&v, &dcfg, &spec, cfg.window_len, cfg.stride)
            .with_context(|| format!("video {}", r.id))?;
        let labelled = sample_video(&r.id, v.frames(), &r.ground_truths, spec.factors(), &cfg)?;
        let mut it = labelled.into_iter();
        for level in &bank.levels {
            if cfg.scales == SampleScales::Identity && level.factor != 1.0 {
                continue;
            }
            for (w, row) in level.windows.iter().zip(level.features.iter()) {
                let s = it.next().context("window table out of step with extracted levels")?;
                if s.window.interval != *w || s.window.scale_factor != level.factor {
                    bail!("window table out of step with extracted levels");
                }
                features.push(row);
                samples.push(s);
            }
        }
    }
    fs::create_dir_all(&a.out)?;
    write_feature_cache(
        &dcfg.digest(),
        &features,
        BufWriter::new(File::create(a.out.join(FEATURES_FILE))?),
    )?;
    write_samples_csv(&samples, BufWriter::new(File::create(a.out.join(SAMPLES_FILE))?))?;
    println!("{}: {} windows x {} dims", dcfg.name(), features.rows(), features.dim());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let (digest, x) = read_feature_cache(BufReader::new(File::open(a.features.join(FEATURES_FILE))?), None)?;
    let samples = read_samples_csv(BufReader::new(File::open(a.features.join(SAMPLES_FILE))?))?;
    if samples.len() != x.rows() {
        bail!("{} feature rows but {} labelled windows", x.rows(), samples.len());
    }
    let y: Vec<i8> = samples.iter().map(|s| s.label.sign()).collect();
    let model = train(&x, &y, &a.svm.config(), &digest)?;
    write_model(&model, BufWriter::new(File::create(&a.out)?))?;
    println!(
        "trained on {} windows ({} positive)",
        y.len(),
        y.iter().filter(|&&l| l > 0).count()
    );
    Ok(())
}

fn cmd_spot(a: SpotArgs) -> Result<()> {
    let model = read_model(BufReader::new(File::open(&a.model)?))?;
    let dcfg = a.descriptor.config()?;
    let v = load_volume(&a.video)?;
    let dets = spot(
        &v,
        &model,
        &dcfg,
        &a.scales.spec()?,
        a.window_len,
        a.stride,
        a.threshold,
        a.nms_iou,
    )?;
    let id = a.id.clone().unwrap_or_else(|| {
        a.video
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    write_detections_csv(dets.iter().map(|d| (id.as_str(), d)), output(a.out.as_deref())?)?;
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let protocol = match a.protocol {
        ProtocolArg::Loso => Protocol::Loso,
        ProtocolArg::Random => Protocol::random(a.train_frac, a.reps, a.svm.seed)?,
    };
    let mut cfg = BenchmarkConfig::new(a.descriptor.config()?, protocol);
    cfg.scales = a.scales.spec()?;
    cfg.sampling = a.window.config();
    cfg.train = a.svm.config();
    cfg.nms_overlap = a.nms_iou;
    cfg.fppw_denominator = match a.fppw_denominator {
        DenominatorArg::Neg => FppwDenominator::Negatives,
        DenominatorArg::All => FppwDenominator::All,
    };
    cfg.ref_fppw = a.ref_fppw;
    cfg.ref_fppv = a.ref_fppv;

    let videos = prepare_dataset(&manifest, &cfg)?;
    let report = run_benchmark(&videos, &cfg)?;
    fs::create_dir_all(&a.out)?;
    let stem = format!("{}_{}", report.descriptor_name, report.protocol);
    write_curve_csv(
        &report.window_curve,
        File::create(a.out.join(format!("{stem}_fppw.csv")))?,
    )?;
    write_curve_csv(
        &report.video_curve,
        File::create(a.out.join(format!("{stem}_fppv.csv")))?,
    )?;
    write_summary_csv(
        &report.summary(),
        File::create(a.out.join(format!("{stem}_summary.csv")))?,
    )?;
    println!("nms_iou={}", cfg.nms_overlap);
    for row in report.summary() {
        println!(
            "{} {} miss@{}={:.4} +/- {:.4}",
            row.descriptor_name, row.protocol, row.reference_x, row.miss_mean, row.miss_std
        );
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    if !a.labels.is_empty() && a.labels.len() != a.curves.len() {
        bail!("{} labels for {} curves", a.labels.len(), a.curves.len());
    }
    let mut curves = Vec::new();
    for (i, path) in a.curves.iter().enumerate() {
        let c = read_curve_csv(File::open(path).with_context(|| format!("opening {}", path.display()))?)?;
        let label = a.labels.get(i).cloned().unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
        curves.push((label, c));
    }
    if curves.iter().any(|(_, c)| c.kind != curves[0].1.kind) {
        bail!("curves mix per-window and per-video kinds");
    }
    let ref_x = if curves[0].1.kind == CurveKind::PerWindow {
        a.ref_fppw
    } else {
        a.ref_fppv
    };
    emit_det_plot(&curves, ref_x, &a.out)?;
    if !a.summary.is_empty() {
        println!(
            "{:<32} {:<16} {:>6} {:>10} {:>10}",
            "descriptor", "protocol", "ref", "miss_mean", "miss_std"
        );
        for path in &a.summary {
            for r in read_summary_csv(File::open(path).with_context(|| format!("opening {}", path.display()))?)? {
                println!(
                    "{:<32} {:<16} {:>6} {:>10.4} {:>10.4}",
                    r.descriptor_name, r.protocol, r.reference_x, r.miss_mean, r.miss_std
                );
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Train(a) => cmd_train(a),
        Command::Spot(a) => cmd_spot(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mespot: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
