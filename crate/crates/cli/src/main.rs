use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};

use depth_align::bench::{run_bench, write_csv, BenchOptions};
use depth_align::io::{
    load_depth, load_mask, save_depth, write_samples, DepthKind, DEFAULT_DEPTH_SCALE,
};
use depth_align::pipeline::{apply, calibrate, CalibrateOptions, Shot};
use depth_align::ssra::ThetaParams;
use depth_align::synth::{PerturbationSpec, SceneSpec, SynthConfig};
use depth_align::{
    evaluate, pair_predictions, sample_points, AlignmentModel, DepthMap, LwlrConfig, Mask, Method,
    NormalizationMethod,
};

#[derive(Parser, Debug)]
#[command(
    name = "depth-align",
    version,
    about = "Metric depth from relative depth predictions by one-shot calibration"
)]
struct Cli {
    /// Worker threads (defaults to hardware parallelism).
    #[arg(long, global = true, env = "MOMA_THREADS", value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit an alignment model from ground-truth / prediction pairs.
    Calibrate(CalibrateArgs),
    /// Align a prediction with a saved model.
    Apply(ApplyArgs),
    /// Compare a depth map against ground truth.
    Eval(EvalArgs),
    /// Draw random ground-truth samples into a CSV file.
    Sample(SampleArgs),
    /// Render a synthetic scene and its pseudo-prediction.
    Synth(SynthArgs),
    /// Sweep methods, sample counts and seeds over a synthetic scene.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct DepthScale {
    /// Meters per unit for 16-bit PNG depth.
    #[arg(long, default_value_t = DEFAULT_DEPTH_SCALE)]
    depth_scale: f64,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Ground-truth and prediction files as `GT PRED [GT PRED ...]`.
    #[arg(required = true, num_args = 2.., value_name = "GT PRED")]
    files: Vec<PathBuf>,
    /// gssa, lwlr or ssra.
    #[arg(long, default_value = "ssra")]
    method: Method,
    /// minmax, median or none.
    #[arg(long, default_value = "minmax")]
    norm: NormalizationMethod,
    /// Samples per ground-truth image.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gaussian kernel bandwidth in pixels (lwlr).
    #[arg(long, default_value_t = 100.0)]
    bandwidth: f64,
    /// Only draw samples where this mask is nonzero.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Only use these pixels for normalization statistics.
    #[arg(long)]
    norm_mask: Option<PathBuf>,
    /// Model output path.
    #[arg(short, long, default_value = "model.json")]
    out: PathBuf,
    /// Print the summary as JSON.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    scale: DepthScale,
}

#[derive(Args, Debug)]
struct ApplyArgs {
    model: PathBuf,
    pred: PathBuf,
    out: PathBuf,
    #[arg(long)]
    norm_mask: Option<PathBuf>,
    /// Report the normalize + align wall-clock time.
    #[arg(long)]
    time: bool,
    #[command(flatten)]
    scale: DepthScale,
}

#[derive(Args, Debug)]
struct EvalArgs {
    pred: PathBuf,
    gt: PathBuf,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, conflicts_with = "table")]
    json: bool,
    /// Print a table with columns d1.05 d1.10 d1.25 REL RMSE MAE.
    #[arg(long)]
    table: bool,
    /// Also write the report to this file.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    scale: DepthScale,
}

#[derive(Args, Debug)]
struct SampleArgs {
    gt: PathBuf,
    /// Add the prediction value at every sample as `z_p`.
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    mask: Option<PathBuf>,
    /// CSV output path (stdout when omitted).
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    scale: DepthScale,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// TOML scene configuration (a built-in tabletop scene when omitted).
    config: Option<PathBuf>,
    /// Directory for gt.pfm, pred.pfm and theta.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// TOML scene configuration (a built-in tabletop scene when omitted).
    config: Option<PathBuf>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', default_value = "gssa,lwlr,ssra")]
    method: Vec<Method>,
    /// Comma-separated sample counts.
    #[arg(long, value_delimiter = ',', default_value = "20,50,100,400,1000",
          value_parser = clap::value_parser!(u64).range(1..))]
    n: Vec<u64>,
    /// First seed of the sweep.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    #[arg(long, default_value = "none")]
    norm: NormalizationMethod,
    #[arg(long, default_value_t = 100.0)]
    bandwidth: f64,
    /// CSV output path (stdout when omitted).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t as usize)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let res = match cli.command {
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Apply(a) => cmd_apply(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn usage_error(msg: &str) -> ! {
    Cli::command()
        .error(clap::error::ErrorKind::ValueValidation, msg)
        .exit()
}

fn check_bandwidth(b: f64) {
    if !(b.is_finite() && b > 0.0) {
        usage_error("--bandwidth must be a positive number");
    }
}

fn read_mask(path: Option<&Path>) -> Result<Option<Mask>> {
    path.map(|p| load_mask(p).with_context(|| format!("reading mask {}", p.display())))
        .transpose()
}

fn read_depth(path: &Path, kind: DepthKind, scale: f64) -> Result<DepthMap> {
    load_depth(path, kind, scale).with_context(|| format!("reading {}", path.display()))
}

fn lwlr_config(bandwidth: f64) -> LwlrConfig {
    LwlrConfig {
        bandwidth,
        ..LwlrConfig::default()
    }
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<()> {
    if a.files.len() % 2 != 0 {
        usage_error("calibration files must come in GT PRED pairs");
    }
    check_bandwidth(a.bandwidth);
    let s = a.scale.depth_scale;
    let maps = a
        .files
        .chunks(2)
        .map(|pair| {
            Ok((
                read_depth(&pair[0], DepthKind::Measured, s)?,
                read_depth(&pair[1], DepthKind::Prediction, s)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let shots: Vec<Shot<'_>> = maps.iter().map(|(gt, pred)| Shot { gt, pred }).collect();
    let opts = CalibrateOptions {
        method: a.method,
        norm: a.norm,
        n: a.n as usize,
        seed: a.seed,
        mask: read_mask(a.mask.as_deref())?,
        norm_mask: read_mask(a.norm_mask.as_deref())?,
        lwlr: lwlr_config(a.bandwidth),
        ..CalibrateOptions::default()
    };
    let cal = calibrate(&shots, &opts)?;
    cal.model
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;

    let mut out = io::stdout().lock();
    if a.json {
        let summary = serde_json::json!({
            "model": a.out,
            "method": cal.model.method(),
            "sample_count": cal.model.sample_count,
            "solver": cal.report,
            "residuals": cal.residuals,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
        return Ok(());
    }
    writeln!(out, "model={}", a.out.display())?;
    writeln!(out, "method={}", cal.model.method())?;
    writeln!(out, "sample_count={}", cal.model.sample_count)?;
    if let Some(r) = &cal.report {
        writeln!(out, "solver_init_cost={}", r.init_cost)?;
        writeln!(out, "solver_final_cost={}", r.final_cost)?;
        writeln!(out, "solver_iterations={}", r.iterations)?;
        writeln!(out, "solver_converged={}", r.converged)?;
    }
    let r = cal.residuals;
    writeln!(out, "residual_mean_abs={}", r.mean_abs)?;
    writeln!(out, "residual_rms={}", r.rms)?;
    writeln!(out, "residual_max_abs={}", r.max_abs)?;
    Ok(())
}

fn cmd_apply(a: ApplyArgs) -> Result<()> {
    let model = AlignmentModel::load(&a.model)
        .with_context(|| format!("reading model {}", a.model.display()))?;
    let pred = read_depth(&a.pred, DepthKind::Prediction, a.scale.depth_scale)?;
    let norm_mask = read_mask(a.norm_mask.as_deref())?;
    let t0 = Instant::now();
    let aligned = apply(&model, &pred, norm_mask.as_ref())?;
    let elapsed = t0.elapsed();
    save_depth(&a.out, &aligned, a.scale.depth_scale)
        .with_context(|| format!("writing {}", a.out.display()))?;
    if a.time {
        println!("align_ms={:.3}", elapsed.as_secs_f64() * 1e3);
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let s = a.scale.depth_scale;
    let pred = read_depth(&a.pred, DepthKind::Derived, s)?;
    let gt = read_depth(&a.gt, DepthKind::Measured, s)?;
    let mask = read_mask(a.mask.as_deref())?;
    let report = evaluate(&pred, &gt, mask.as_ref())?;
    let text = if a.json {
        serde_json::to_string_pretty(&report)? + "\n"
    } else if a.table {
        report.to_table()
    } else {
        report.to_key_value()
    };
    if let Some(p) = &a.out {
        fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?;
    }
    io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let s = a.scale.depth_scale;
    let gt = read_depth(&a.gt, DepthKind::Measured, s)?;
    let mask = read_mask(a.mask.as_deref())?.unwrap_or_else(|| Mask::full(gt.width(), gt.height()));
    let mut samples = sample_points(&gt, &mask, a.n as usize, a.seed)?;
    if let Some(p) = &a.pred {
        samples = pair_predictions(&samples, &read_depth(p, DepthKind::Prediction, s)?)?;
    }
    match &a.out {
        Some(p) => {
            let f = fs::File::create(p).with_context(|| format!("writing {}", p.display()))?;
            write_samples(io::BufWriter::new(f), &samples)?;
        }
        None => write_samples(io::stdout().lock(), &samples)?,
    }
    Ok(())
}

fn default_synth_config() -> SynthConfig {
    let (w, h) = (320, 240);
    SynthConfig {
        scene: SceneSpec::tabletop(w, h),
        perturbation: PerturbationSpec::exact(ThetaParams {
            s: 1.2,
            theta: 0.15,
            phi: -0.1,
            t3: 0.1,
            cxp: w as f64 / 2.0,
            cyp: h as f64 / 2.0,
            fp: w as f64,
        }),
    }
}

fn read_synth_config(path: Option<&Path>) -> Result<SynthConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            SynthConfig::from_toml(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(default_synth_config()),
    }
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let cfg = read_synth_config(a.config.as_deref())?;
    if a.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let data = cfg.generate(a.seed)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    save_depth(&a.out_dir.join("gt.pfm"), &data.gt, DEFAULT_DEPTH_SCALE)?;
    save_depth(&a.out_dir.join("pred.pfm"), &data.pred, DEFAULT_DEPTH_SCALE)?;
    let theta = serde_json::to_string_pretty(&cfg.perturbation.theta_star)? + "\n";
    fs::write(a.out_dir.join("theta.json"), theta)?;
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let cfg = read_synth_config(a.config.as_deref())?;
    check_bandwidth(a.bandwidth);
    let opts = BenchOptions {
        methods: a.method,
        ns: a.n.iter().map(|&n| n as usize).collect(),
        seeds: (a.seed..a.seed + a.seeds).collect(),
        norm: a.norm,
        lwlr: lwlr_config(a.bandwidth),
        ..BenchOptions::default()
    };
    let rows = run_bench(&cfg, &opts);
    match &a.out {
        Some(p) => {
            let f = fs::File::create(p).with_context(|| format!("writing {}", p.display()))?;
            write_csv(io::BufWriter::new(f), &rows)?;
        }
        None => write_csv(io::stdout().lock(), &rows)?,
    }
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", rows.len());
    }
    Ok(())
}
