//! `srcascade` command-line front end.
//!
//! Every subcommand accepts `--config FILE` where it makes sense; flags
//! given on the command line override values from the file. Exit status is
//! 0 on success, 2 for usage errors and 1 for I/O, format or configuration
//! failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cascade::{run_cascade, CascadeOrder, CascadePlan};
use crate::config::KeyValues;
use crate::degradation::{
    derive_seed, load_sequence, save_sequence, simulate_sequence, Blur, DegradationSpec, FrameSequence, ShiftMode,
};
use crate::erbpn::{
    bicubic_pairs, erbpn_forward, lorig_pairs, train, write_loss_curve, ErbpnModel, TrainConfig, TrainingData,
    TrainingPair,
};
use crate::error::{Error, Result};
use crate::imaging::{io, resize_bicubic, ImagePlane};
use crate::lorig::{grid_search_lambda, lorig_reconstruct_detailed, write_reports_csv, LorigConfig};
use crate::metrics::{aligned_bicubic, benchmark, psnr, ssim, BenchmarkSuite, MetricsReport, MetricsRow};
use crate::registration::{register_sequence, RegistrationMode};
use crate::synthetic::textured_scene;

#[derive(Debug, Parser)]
#[command(name = "srcascade", version, about = "Multi-frame and single-frame super-resolution cascade")]
struct Cli {
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Seed for every random choice in this invocation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a low-resolution sequence from a ground-truth image.
    Degrade(DegradeArgs),
    /// Estimate (or keep) per-frame motions and rewrite the manifest.
    Register(RegisterArgs),
    /// Super-resolve with a single method.
    Sr(SrArgs),
    /// Train a network.
    Train(TrainArgs),
    /// Run a two-stage cascade.
    Cascade(CascadeArgs),
    /// Score an image against a reference.
    Evaluate(EvaluateArgs),
    /// Run a benchmark suite and write a CSV report.
    Bench(BenchArgs),
    /// Pick the regularization weight by PSNR against ground truth.
    #[command(name = "gridsearch-lambda")]
    GridsearchLambda(GridArgs),
}

/// Solver flags shared by every subcommand that runs the reconstruction.
#[derive(Debug, Args)]
struct SolverArgs {
    /// Key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    mu0: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    cg_max_iters: Option<usize>,
}

impl SolverArgs {
    fn key_values(&self) -> Result<KeyValues> {
        let mut kv = match &self.config {
            Some(p) => KeyValues::load(p)?,
            None => KeyValues::new(),
        };
        if let Some(v) = self.lambda {
            kv.set("lambda", v);
        }
        if let Some(v) = self.beta0 {
            kv.set("beta0", v);
        }
        if let Some(v) = self.mu0 {
            kv.set("mu0", v);
        }
        if let Some(v) = self.max_outer {
            kv.set("max_outer", v);
        }
        if let Some(v) = self.cg_max_iters {
            kv.set("cg_max_iters", v);
        }
        Ok(kv)
    }

    fn lorig(&self) -> Result<LorigConfig> {
        LorigConfig::from_key_values(&self.key_values()?)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShiftArg {
    Grid,
    Random,
}

#[derive(Debug, Args)]
struct DegradeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 16)]
    frames: usize,
    #[arg(long, default_value_t = 4)]
    scale: usize,
    /// Gaussian blur standard deviation in HR pixels (0 disables blur).
    #[arg(long, default_value_t = 1.5)]
    sigma: f64,
    /// Noise variance on the [0, 1] intensity scale.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_enum, default_value_t = ShiftArg::Grid)]
    shifts: ShiftArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegistrationArg {
    Estimate,
    GroundTruth,
}

#[derive(Debug, Args)]
struct RegisterArgs {
    #[arg(long)]
    seq: PathBuf,
    #[arg(long, value_enum, default_value_t = RegistrationArg::Estimate)]
    mode: RegistrationArg,
    /// Output sequence directory; defaults to rewriting `--seq`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SrMethod {
    Bicubic,
    Lorig,
    Erbpn,
}

#[derive(Debug, Args)]
struct SrArgs {
    #[arg(long, value_enum)]
    method: SrMethod,
    /// Sequence directory (bicubic uses its reference frame).
    #[arg(long)]
    seq: Option<PathBuf>,
    /// Single low-resolution image (bicubic and erbpn only).
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Upscaling factor; defaults to the sequence scale or the model scale.
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Per-iteration solver report (lorig only).
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DataArg {
    Bicubic,
    Lorig,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training config file (network and optimizer keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training images; synthetic scenes are used when none are given.
    #[arg(long, num_args = 1..)]
    images: Vec<PathBuf>,
    /// Number of synthetic scenes when no images are given.
    #[arg(long, default_value_t = 8)]
    synthetic: usize,
    #[arg(long, default_value_t = 128)]
    synthetic_size: usize,
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    n_f: Option<usize>,
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long)]
    units: Option<usize>,
    /// Patches drawn per image.
    #[arg(long, default_value_t = 16)]
    patches_per_image: usize,
    #[arg(long, value_enum, default_value_t = DataArg::Bicubic)]
    data: DataArg,
    /// Total scale of the simulated sequences for `--data lorig`.
    #[arg(long, default_value_t = 4)]
    sequence_scale: usize,
    #[arg(long, default_value_t = 1.5)]
    sigma: f64,
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OrderArg {
    Mfsf,
    Sfmf,
}

#[derive(Debug, Args)]
struct CascadeArgs {
    #[arg(long)]
    seq: PathBuf,
    #[arg(long, value_enum, default_value_t = OrderArg::Mfsf)]
    order: OrderArg,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 2)]
    stage1_scale: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value = "test")]
    method: String,
    #[arg(long, default_value_t = 0)]
    scale: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long)]
    seq: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    scale: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let seed = cli.seed;
    pool.install(|| match cli.command {
        Command::Degrade(a) => degrade(a, seed.unwrap_or(0)),
        Command::Register(a) => register(a),
        Command::Sr(a) => sr(a),
        Command::Train(a) => train_cmd(a, seed),
        Command::Cascade(a) => cascade(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Bench(a) => bench(a, seed),
        Command::GridsearchLambda(a) => gridsearch(a),
    })
}

fn degrade(a: DegradeArgs, seed: u64) -> Result<()> {
    let hr = io::load_gray(&a.input)?;
    let blur = if a.sigma > 0.0 { Blur::gaussian(a.sigma) } else { Blur::Identity };
    let spec = DegradationSpec::new(a.scale, blur, a.noise, seed)?;
    let mode = match a.shifts {
        ShiftArg::Grid => ShiftMode::Grid,
        ShiftArg::Random => ShiftMode::Random,
    };
    let (h, w) = hr.dims();
    let hr = hr.crop(0, 0, h - h % a.scale, w - w % a.scale)?;
    let seq = simulate_sequence(&hr, &spec, a.frames, mode)?;
    save_sequence(&a.out, &seq)?;
    println!("wrote {} frames of {}x{} to {}", seq.len(), seq.lr_dims().0, seq.lr_dims().1, a.out.display());
    Ok(())
}

fn register(a: RegisterArgs) -> Result<()> {
    let seq = load_sequence(&a.seq)?;
    let mode = match a.mode {
        RegistrationArg::Estimate => RegistrationMode::Estimate,
        RegistrationArg::GroundTruth => RegistrationMode::GroundTruth,
    };
    let reg = register_sequence(&seq, mode)?;
    println!("frame,dx,dy");
    for (k, m) in reg.motions.iter().enumerate() {
        println!("{k},{:.4},{:.4}", m.dx, m.dy);
    }
    save_sequence(a.out.as_ref().unwrap_or(&a.seq), &reg)
}

fn load_model(path: Option<&PathBuf>) -> Result<ErbpnModel> {
    let p = path.ok_or_else(|| Error::Config("--model is required for this method".into()))?;
    ErbpnModel::load(p)
}

fn sr(a: SrArgs) -> Result<()> {
    let out = match (a.method, &a.seq, &a.input) {
        (_, Some(_), Some(_)) => return Err(Error::Config("give either --seq or --in, not both".into())),
        (_, None, None) => return Err(Error::Config("one of --seq or --in is required".into())),
        (SrMethod::Lorig, None, Some(_)) => return Err(Error::Config("lorig needs --seq".into())),
        (SrMethod::Lorig, Some(dir), None) => {
            let seq = load_sequence(dir)?;
            let cfg = a.solver.lorig()?;
            let res = lorig_reconstruct_detailed(&seq, &cfg, a.scale.unwrap_or(seq.spec.scale))?;
            if let Some(p) = &a.report {
                write_reports_csv(p, &res.reports)?;
            }
            res.image
        }
        (SrMethod::Bicubic, Some(dir), None) => {
            let seq = load_sequence(dir)?;
            let s = a.scale.unwrap_or(seq.spec.scale);
            if s != seq.spec.scale {
                return Err(Error::Config("bicubic on a sequence upsamples by the sequence scale".into()));
            }
            let (h, w) = seq.lr_dims();
            aligned_bicubic(&seq, (h * s, w * s))?
        }
        (SrMethod::Bicubic, None, Some(p)) => {
            let s = a.scale.ok_or_else(|| Error::Config("--scale is required with --in".into()))?;
            resize_bicubic(&io::load_gray(p)?, s as f64)?.clipped(0.0, 1.0)
        }
        (SrMethod::Erbpn, seq, input) => {
            let model = load_model(a.model.as_ref())?;
            if a.scale.is_some_and(|s| s != model.scale()) {
                return Err(Error::Config(format!("the model upsamples by {}", model.scale())));
            }
            let lr = match (seq, input) {
                (Some(dir), _) => load_sequence(dir)?.reference().clone(),
                (None, Some(p)) => io::load_gray(p)?,
                (None, None) => unreachable!("checked above"),
            };
            erbpn_forward(&lr, &model)?
        }
    };
    io::save_gray(&a.out, &out)
}

fn train_cmd(a: TrainArgs, seed: Option<u64>) -> Result<()> {
    let kv = match &a.config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::new(),
    };
    let mut cfg = TrainConfig::from_key_values(&kv)?;
    macro_rules! apply {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    apply!(a.scale, cfg.network.scale);
    apply!(a.epochs, cfg.epochs);
    apply!(a.batch_size, cfg.batch_size);
    apply!(a.patch, cfg.patch_size);
    apply!(a.lr, cfg.learning_rate);
    apply!(a.n_f, cfg.network.n_f);
    apply!(a.n0, cfg.network.n0);
    apply!(a.units, cfg.network.units);
    apply!(seed, cfg.seed);
    if a.checkpoint_dir.is_some() {
        cfg.checkpoint_dir = a.checkpoint_dir.clone();
    }
    cfg.validate()?;

    let images: Vec<ImagePlane> = if a.images.is_empty() {
        (0..a.synthetic)
            .map(|i| textured_scene(a.synthetic_size, a.synthetic_size, derive_seed(cfg.seed, 100 + i as u64)))
            .collect()
    } else {
        a.images.iter().map(io::load_gray).collect::<Result<_>>()?
    };
    let data = match a.data {
        DataArg::Bicubic => TrainingData::Bicubic,
        DataArg::Lorig => TrainingData::Lorig,
    };
    let s = cfg.network.scale;
    let pairs: Vec<TrainingPair> = match data {
        TrainingData::Bicubic => bicubic_pairs(&images, s, cfg.patch_size, a.patches_per_image, cfg.seed)?,
        TrainingData::Lorig => {
            if a.sequence_scale % s != 0 {
                return Err(Error::Config(format!("--sequence-scale {} is not a multiple of {s}", a.sequence_scale)));
            }
            let blur = if a.sigma > 0.0 { Blur::gaussian(a.sigma) } else { Blur::Identity };
            let spec = DegradationSpec::new(a.sequence_scale, blur, 0.0, cfg.seed)?;
            let lorig = LorigConfig::from_key_values(&kv)?;
            lorig_pairs(&images, &spec, 16, a.sequence_scale / s, &lorig, cfg.patch_size, a.patches_per_image, cfg.seed)?
        }
    };
    let outcome = train(&pairs, &cfg)?;
    outcome.model.save(&a.out)?;
    if let Some(p) = &a.loss_csv {
        write_loss_curve(p, &outcome.losses)?;
    }
    let last = outcome.losses.last().map_or(f64::NAN, |r| r.loss);
    println!(
        "trained {} parameters on {} {data} pairs for {} steps; final batch loss {last:.6e}",
        outcome.model.param_count(),
        pairs.len(),
        outcome.losses.len()
    );
    Ok(())
}

fn cascade(a: CascadeArgs) -> Result<()> {
    let seq = load_sequence(&a.seq)?;
    let plan = CascadePlan {
        order: match a.order {
            OrderArg::Mfsf => CascadeOrder::Mfsf,
            OrderArg::Sfmf => CascadeOrder::Sfmf,
        },
        stage1_scale: a.stage1_scale,
        stage2_scale: if a.stage1_scale == 0 { 0 } else { seq.spec.scale / a.stage1_scale },
        lorig_cfg: a.solver.lorig()?,
        model: ErbpnModel::load(&a.model)?,
    };
    let res = run_cascade(&seq, &plan)?;
    io::save_gray(&a.out, &res.image)?;
    println!(
        "{}: {} network inference(s), {} reconstruction(s)",
        plan.order, res.network_inferences, res.reconstructions
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let reference = io::load_gray(&a.reference)?;
    let test = io::load_gray(&a.test)?;
    let mut report = MetricsReport::new();
    report.push(MetricsRow {
        image: image_id(&a.reference),
        method: a.method.clone(),
        scale: a.scale,
        noise_variance: a.noise,
        psnr_db: psnr(&reference, &test, 1.0)?,
        ssim: ssim(&reference, &test)?,
    });
    match &a.out {
        Some(p) => report.write_csv(p),
        None => {
            print!("{}", report.to_csv());
            Ok(())
        }
    }
}

fn image_id(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn bench(a: BenchArgs, seed: Option<u64>) -> Result<()> {
    let kv = KeyValues::load(&a.suite)?;
    let base = a.suite.parent().unwrap_or(Path::new("."));
    let mut suite = BenchmarkSuite::from_key_values(&kv, base)?;
    if let Some(s) = seed {
        suite.seed = s;
    }
    let report = benchmark(&suite)?;
    report.write_csv(&a.out)?;
    println!("wrote {} rows to {}", report.rows.len(), a.out.display());
    Ok(())
}

fn gridsearch(a: GridArgs) -> Result<()> {
    let seq: FrameSequence = load_sequence(&a.seq)?;
    let gt = io::load_gray(&a.reference)?;
    let cfg = a.solver.lorig()?;
    let (rows, best) = grid_search_lambda(&seq, &gt, &cfg, a.scale.unwrap_or(seq.spec.scale))?;
    let mut csv = String::from("lambda,psnr_db\n");
    for (l, p) in &rows {
        csv.push_str(&format!("{l:e},{p:.4}\n"));
    }
    match &a.out {
        Some(p) => std::fs::write(p, &csv)?,
        None => print!("{csv}"),
    }
    eprintln!("best lambda = {:e} ({:.4} dB)", rows[best].0, rows[best].1);
    Ok(())
}
