mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use sparsect_core::autodiff::suite::gradient_suite;
use sparsect_core::baselines::{sart, sart_tv};
use sparsect_core::bench::{reports_csv, run_benchmark, summarize, write_csv, BenchConfig, IntervalModels, Method};
use sparsect_core::cost::{count_params_flops, CostReport};
use sparsect_core::data::{gen_continuous_volume, read_tensor, shepp_logan, write_tensor, ImageSlice, Volume};
use sparsect_core::geometry::{
    default_detectors, fbp, full_view_angles, interpolate_sinogram, radon_forward, read_sinogram, sparse_sample,
    write_sinogram,
};
use sparsect_core::nn::{build_discriminator, build_lae, build_lae_residual, build_lsaae, build_sib, LsAae, Network, NetworkSpec, ScaleProfile};
use sparsect_core::pipeline::{
    acquire_volume, fbp_volume, restore_sinograms, restore_slices, stage1_samples, stage2_samples, Geometry, Split,
    VolumeSet,
};
use sparsect_core::train::{evaluate_mse, load_checkpoint, save_checkpoint, train_stage, trace_csv, Sample, CONFIG_FILE};

use sparsect_core::{Dtype, Scalar};

use config::{config_err, ConfigError, RunConfig};

/// Parameter count the full-scale adversarial sinogram model is checked against.
const REFERENCE_PARAMS: f64 = 1.675e6;
const RADON_DIR: &str = "radon";
const TRACE_FILE: &str = "trace.csv";

#[derive(Parser, Debug)]
#[command(name = "sparsect", version, about = "Sparse-view CT dual-domain restoration toolkit")]
struct Cli {
    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra key=value override (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sparse sampling interval (4, 8, 16 or any n)
    #[arg(long, global = true)]
    interval: Option<usize>,
    #[arg(long = "width-mult", visible_alias = "width", global = true)]
    width_mult: Option<f64>,
    /// Image side length in pixels
    #[arg(long, global = true)]
    size: Option<usize>,
    /// Full-view projection count
    #[arg(long, global = true)]
    views: Option<usize>,
    /// Slice interval of the five-slice image network
    #[arg(long = "T", global = true)]
    t: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write a Shepp-Logan phantom
    Phantom,
    /// Write a synthetic continuous volume [D, H, W]
    Volume,
    /// Project an image to a full-view sinogram
    Project {
        #[arg(long)]
        input: PathBuf,
    },
    /// Keep every interval-th projection
    Sample {
        #[arg(long)]
        input: PathBuf,
    },
    /// Linearly interpolate a sparse sinogram to full view
    Interp {
        #[arg(long)]
        input: PathBuf,
    },
    /// Filtered back projection
    Fbp {
        #[arg(long)]
        input: PathBuf,
    },
    /// SART reconstruction
    Sart {
        #[arg(long)]
        input: PathBuf,
    },
    /// SART with TV descent
    SartTv {
        #[arg(long)]
        input: PathBuf,
    },
    /// Train the sinogram network on synthetic volumes
    TrainStage1,
    /// Train the five-slice image network (needs a stage-1 checkpoint unless --image-only)
    TrainStage2 {
        /// Train on sparse-view FBP instead of the sinogram network's output
        #[arg(long)]
        image_only: bool,
    },
    /// Full pipeline on ground-truth images: project, sample, interpolate,
    /// sinogram network, FBP, image network
    Restore {
        #[arg(long)]
        input: PathBuf,
    },
    /// PSNR/SSIM of a prediction against a reference
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Method comparison on the synthetic test split
    Bench {
        /// Comma-separated methods (default: all)
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        /// Comma-separated sampling intervals (default: --interval)
        #[arg(long, value_delimiter = ',')]
        intervals: Vec<usize>,
        /// Record wall-clock runtime in the CSV
        #[arg(long)]
        timing: bool,
    },
    /// Finite-difference check of every autodiff primitive and a composed autoencoder
    Gradcheck,
    /// Parameter and multiply-add breakdown of a network
    Params {
        /// lae, lae-residual, discriminator, laae, lsaae or sib
        #[arg(long, default_value = "lae")]
        net: String,
    },
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for s in &cli.sets {
        let Some((k, v)) = s.split_once('=') else {
            return config_err(format!("--set expects KEY=VALUE, got {s:?}"));
        };
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(v) = cli.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = cli.interval {
        cfg.interval = v;
    }
    if let Some(v) = cli.width_mult {
        cfg.width_mult = v;
    }
    if let Some(v) = cli.size {
        cfg.size = v;
    }
    if let Some(v) = cli.views {
        cfg.views = v;
    }
    if let Some(v) = cli.t {
        cfg.train.t = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_path(cli: &Cli) -> Result<&Path> {
    match &cli.out {
        Some(p) => Ok(p),
        None => config_err("--out is required"),
    }
}

fn checkpoint_path(cli: &Cli) -> Result<&Path> {
    match &cli.checkpoint {
        Some(p) => Ok(p),
        None => config_err("--checkpoint is required"),
    }
}

fn check_input(p: &Path) -> Result<()> {
    if !p.exists() {
        return config_err(format!("input {} does not exist", p.display()));
    }
    Ok(())
}

fn derive_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(16).wrapping_add(k)
}

fn geometry(cfg: &RunConfig) -> Result<Geometry> {
    Geometry::new(cfg.size, cfg.views, cfg.interval).map_err(|e| ConfigError(e.to_string()).into())
}

fn volume_set(cfg: &RunConfig, split: Split) -> VolumeSet {
    let n_volumes = if split == Split::Train { cfg.n_volumes } else { cfg.test_volumes };
    VolumeSet { size: cfg.size, n_volumes, n_slices: cfg.n_slices, drift: cfg.drift, seed: cfg.train.seed, split }
}

/// Images as a volume: `[H, W]` gives one slice, `[D, H, W]` a stack.
fn read_images<T: Scalar>(path: &Path) -> Result<(Volume<T>, bool)> {
    let t = read_tensor::<T>(path).with_context(|| format!("reading {}", path.display()))?;
    match t.ndim() {
        2 => Ok((Volume::new(vec![ImageSlice::new(t, 1.0)?], 1.0)?, false)),
        3 => Ok((Volume::from_tensor(&t, 1.0)?, true)),
        _ => bail!("{}: expected [H, W] or [D, H, W], got {:?}", path.display(), t.dims()),
    }
}

fn write_images<T: Scalar>(path: &Path, vol: &Volume<T>, stack: bool) -> Result<()> {
    if stack {
        write_tensor(path, &vol.to_tensor())?;
    } else {
        write_tensor(path, &vol.slices[0].data)?;
    }
    Ok(())
}

fn load_stage1<T: Scalar>(dir: &Path) -> Result<(RunConfig, Network<T>)> {
    let cfg = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let geo = geometry(&cfg)?;
    let mut lae = Network::new(build_lae_residual(&geo.sinogram_profile(cfg.width_mult)?)?, 0)?;
    load_checkpoint(dir, &mut lae, None).with_context(|| format!("loading {}", dir.display()))?;
    Ok((cfg, lae))
}

struct Stage2<T: Scalar> {
    cfg: RunConfig,
    model: LsAae<T>,
    radon: Option<(RunConfig, Network<T>)>,
}

fn load_stage2<T: Scalar>(dir: &Path) -> Result<Stage2<T>> {
    let cfg = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let geo = geometry(&cfg)?;
    let mut model = LsAae::build(&geo.image_profile(cfg.width_mult)?, 0)?;
    load_checkpoint(dir, &mut model, None).with_context(|| format!("loading {}", dir.display()))?;
    let radon_dir = dir.join(RADON_DIR);
    let radon = if radon_dir.exists() { Some(load_stage1(&radon_dir)?) } else { None };
    Ok(Stage2 { cfg, model, radon })
}

fn cmd_train_stage1<T: Scalar>(cli: &Cli, cfg: &mut RunConfig) -> Result<()> {
    let out = out_path(cli)?;
    cfg.train.stage = 1;
    let geo = geometry(cfg)?;
    let started = Instant::now();
    let vols = volume_set(cfg, Split::Train).generate::<T>()?;
    let mut data: Vec<Sample<T>> = Vec::new();
    for v in &vols {
        data.extend(stage1_samples(&acquire_volume(v, &geo)?, &geo)?);
    }
    let profile = geo.sinogram_profile(cfg.width_mult)?;
    let seed = cfg.train.seed;
    let mut lae = Network::new(build_lae_residual(&profile)?, derive_seed(seed, 1))?;
    let mut disc = Network::new(build_discriminator(&profile)?, derive_seed(seed, 2))?;
    let before = evaluate_mse(&lae, &data, 8)?;
    let outcome = train_stage(&mut lae, &mut disc, &data, &cfg.train)?;
    let after = evaluate_mse(&lae, &data, 8)?;
    save_checkpoint(out, &lae, Some(&disc), &cfg.to_kv())?;
    std::fs::write(out.join(TRACE_FILE), trace_csv(&outcome.trace))?;
    println!(
        "stage=1 samples={} steps={} train_mse_before={before:.6e} train_mse_after={after:.6e} seconds={:.1}",
        data.len(),
        cfg.train.steps,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_train_stage2<T: Scalar>(cli: &Cli, cfg: &mut RunConfig, image_only: bool) -> Result<()> {
    let out = out_path(cli)?;
    cfg.train.stage = 2;
    let radon = if image_only { None } else { Some(load_stage1::<T>(checkpoint_path(cli)?)?) };
    if let Some((c1, _)) = &radon {
        // The data geometry follows the sinogram network it was trained with.
        cfg.size = c1.size;
        cfg.views = c1.views;
        cfg.interval = c1.interval;
    }
    let geo = geometry(cfg)?;
    let started = Instant::now();
    let vols = volume_set(cfg, Split::Train).generate::<T>()?;
    let mut data: Vec<Sample<T>> = Vec::new();
    for v in &vols {
        let acqs = acquire_volume(v, &geo)?;
        let sinos = match &radon {
            Some((_, lae)) => restore_sinograms(lae, &acqs.iter().map(|a| a.interp.clone()).collect::<Vec<_>>(), &geo, 8)?,
            None => acqs.iter().map(|a| a.sparse.clone()).collect(),
        };
        data.extend(stage2_samples(&fbp_volume(&sinos, &geo)?, v, cfg.train.t)?);
    }
    let profile = geo.image_profile(cfg.width_mult)?;
    let seed = cfg.train.seed;
    let mut model = LsAae::build(&profile, derive_seed(seed, 3))?;
    let mut disc = Network::new(build_discriminator(&profile)?, derive_seed(seed, 4))?;
    let before = evaluate_mse(&model, &data, 8)?;
    let outcome = train_stage(&mut model, &mut disc, &data, &cfg.train)?;
    let after = evaluate_mse(&model, &data, 8)?;
    save_checkpoint(out, &model, Some(&disc), &cfg.to_kv())?;
    std::fs::write(out.join(TRACE_FILE), trace_csv(&outcome.trace))?;
    if let Some((c1, lae)) = &radon {
        save_checkpoint(out.join(RADON_DIR), lae, None, &c1.to_kv())?;
    }
    println!(
        "stage=2 input={} samples={} steps={} train_mse_before={before:.6e} train_mse_after={after:.6e} seconds={:.1}",
        if image_only { "sparse-fbp" } else { "dual" },
        data.len(),
        cfg.train.steps,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_restore<T: Scalar>(cli: &Cli, input: &Path) -> Result<()> {
    check_input(input)?;
    let out = out_path(cli)?;
    let s2 = load_stage2::<T>(checkpoint_path(cli)?)?;
    let Some((c1, lae)) = &s2.radon else {
        bail!("checkpoint has no sinogram network; train it without --image-only");
    };
    let geo = geometry(c1)?;
    let (truth, stack) = read_images::<T>(input)?;
    if truth.slices[0].height() != geo.size || truth.slices[0].width() != geo.size {
        bail!("input slices must be {0}x{0} for this checkpoint", geo.size);
    }
    let started = Instant::now();
    let acqs = acquire_volume(&truth, &geo)?;
    let restored = restore_sinograms(lae, &acqs.iter().map(|a| a.interp.clone()).collect::<Vec<_>>(), &geo, 8)?;
    let y = fbp_volume(&restored, &geo)?;
    let centres: Vec<usize> = (0..y.len()).collect();
    let y2 = Volume::new(restore_slices(&s2.model, &y, &centres, s2.cfg.train.t, 4)?, 1.0)?;
    write_images(out, &y2, stack)?;
    let runtime = started.elapsed().as_secs_f64();
    let report = summarize("dual", geo.interval, &y2.slices, &truth.slices, runtime, String::new())?;
    print!("{}", reports_csv(&[report]));
    Ok(())
}

fn cmd_bench<T: Scalar>(cli: &Cli, cfg: &RunConfig, methods: &[String], intervals: &[usize], timing: bool) -> Result<()> {
    let methods: Vec<Method> = if methods.is_empty() {
        Method::ALL.to_vec()
    } else {
        methods.iter().map(|m| m.parse().map_err(|e: sparsect_core::Error| ConfigError(e.to_string()))).collect::<Result<_, _>>()?
    };
    let intervals = if intervals.is_empty() { vec![cfg.interval] } else { intervals.to_vec() };
    if intervals.iter().any(|&i| i == 0 || i > cfg.views) {
        return config_err("intervals must lie in 1..=views");
    }
    let mut models = BTreeMap::new();
    if let Some(root) = &cli.checkpoint {
        for &i in &intervals {
            let dir = root.join(format!("interval{i}"));
            let mut m = IntervalModels::default();
            if dir.join("dual").exists() {
                let s2 = load_stage2::<T>(&dir.join("dual"))?;
                m.lae = s2.radon.map(|r| r.1);
                m.dual = Some(s2.model);
            }
            if dir.join("image-only").exists() {
                m.image_only = Some(load_stage2::<T>(&dir.join("image-only"))?.model);
            }
            models.insert(i, m);
        }
    }
    let vols = volume_set(cfg, Split::Test).generate::<T>()?;
    let bcfg = BenchConfig { full_views: cfg.views, t: cfg.train.t, sart: cfg.sart.clone(), batch: 4, timing };
    let outcome = run_benchmark(&methods, &intervals, &vols, &models, &bcfg)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(out) = &cli.out {
        write_csv(out, &outcome.reports)?;
    }
    print!("{}", reports_csv(&outcome.reports));
    Ok(())
}

fn print_cost(name: &str, r: &CostReport) {
    println!("# {name}");
    println!("layer,params,mult_adds,out_dims");
    for l in &r.layers {
        let dims: Vec<String> = l.out_dims.iter().map(|d| d.to_string()).collect();
        println!("{},{},{},{}", l.name, l.cost.params, l.cost.mult_adds, dims.join("x"));
    }
    println!("total_params={} total_mult_adds={}", r.total.params, r.total.mult_adds);
    if r.separable_mult_adds > 0 {
        println!("separable_saving={:.3}", r.separable_saving());
    }
}

fn cost_of(spec: &NetworkSpec) -> Result<CostReport> {
    Ok(count_params_flops(spec, &spec.input_dims)?)
}

fn cmd_params(cli: &Cli, net: &str) -> Result<()> {
    let width = cli.width_mult.unwrap_or(1.0);
    let sino_hw = match cli.size {
        Some(s) => {
            let g = Geometry::new(s, cli.views.unwrap_or(180), 1).map_err(|e| ConfigError(e.to_string()))?;
            (g.net_rows, g.net_cols)
        }
        None => ScaleProfile::full().input_hw,
    };
    let image = cli.size.unwrap_or(512);
    let sp = ScaleProfile::new(width, sino_hw).map_err(|e| ConfigError(e.to_string()))?;
    let ip = ScaleProfile::new(width, (image, image)).map_err(|e| ConfigError(e.to_string()))?;
    match net {
        "lae" | "lae-residual" | "laae" => {
            let spec = if net == "lae-residual" { build_lae_residual(&sp)? } else { build_lae(&sp)? };
            let g = cost_of(&spec)?;
            print_cost(&spec.name, &g);
            let d = cost_of(&build_discriminator(&sp)?)?;
            if net == "laae" {
                print_cost("discriminator", &d);
            }
            let total = (g.total.params + d.total.params) as f64;
            let dev = (total - REFERENCE_PARAMS) / REFERENCE_PARAMS;
            println!(
                "lae_params={} discriminator_params={} laae_params={} reference=1675000 deviation={:+.2}% within_10pct={}",
                g.total.params,
                d.total.params,
                total,
                dev * 100.0,
                dev.abs() <= 0.10
            );
        }
        "discriminator" => print_cost("discriminator", &cost_of(&build_discriminator(&sp)?)?),
        "lsaae" => {
            let spec = build_lsaae(&ip)?;
            let (a, b) = (cost_of(&spec.step1)?, cost_of(&spec.step2)?);
            print_cost(&spec.step1.name, &a);
            print_cost(&spec.step2.name, &b);
            // The step-one block is shared by its three applications.
            println!(
                "lsaae_params={} lsaae_mult_adds={}",
                a.total.params + b.total.params,
                3 * a.total.mult_adds + b.total.mult_adds
            );
        }
        "sib" => print_cost("sib", &cost_of(&build_sib(&ip)?)?),
        other => return config_err(format!("unknown network {other:?}")),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = run_config(cli)?;
    match &cli.cmd {
        Cmd::Phantom => write_tensor(out_path(cli)?, &shepp_logan::<f64>(cfg.size)?.data)?,
        Cmd::Volume => {
            let v = gen_continuous_volume::<f64>(cfg.size, cfg.n_slices, cfg.train.seed, cfg.drift)?;
            write_tensor(out_path(cli)?, &v.to_tensor())?;
        }
        Cmd::Project { input } => {
            check_input(input)?;
            let out = out_path(cli)?;
            let img = ImageSlice::new(read_tensor::<f64>(input)?, 1.0)?;
            let n_det = default_detectors(img.height(), img.width());
            write_sinogram(out, &radon_forward(&img, &full_view_angles(cfg.views), n_det)?)?;
        }
        Cmd::Sample { input } => {
            check_input(input)?;
            let out = out_path(cli)?;
            write_sinogram(out, &sparse_sample(&read_sinogram::<f64>(input)?, cfg.interval)?)?;
        }
        Cmd::Interp { input } => {
            check_input(input)?;
            let out = out_path(cli)?;
            let s = read_sinogram::<f64>(input)?;
            write_sinogram(out, &interpolate_sinogram(&s, &full_view_angles(cfg.views))?)?;
        }
        Cmd::Fbp { input } => {
            check_input(input)?;
            let out = out_path(cli)?;
            write_tensor(out, &fbp(&read_sinogram::<f64>(input)?, (cfg.size, cfg.size))?.data)?;
        }
        Cmd::Sart { input } | Cmd::SartTv { input } => {
            check_input(input)?;
            let out = out_path(cli)?;
            let s = read_sinogram::<f64>(input)?;
            let init = ImageSlice::zeros(cfg.size, cfg.size);
            let img = if matches!(cli.cmd, Cmd::Sart { .. }) { sart(&s, &cfg.sart, &init)? } else { sart_tv(&s, &cfg.sart, &init)? };
            write_tensor(out, &img.data)?;
        }
        Cmd::TrainStage1 => match cfg.precision {
            Dtype::F32 => cmd_train_stage1::<f32>(cli, &mut cfg)?,
            Dtype::F64 => cmd_train_stage1::<f64>(cli, &mut cfg)?,
        },
        Cmd::TrainStage2 { image_only } => match cfg.precision {
            Dtype::F32 => cmd_train_stage2::<f32>(cli, &mut cfg, *image_only)?,
            Dtype::F64 => cmd_train_stage2::<f64>(cli, &mut cfg, *image_only)?,
        },
        Cmd::Restore { input } => match cfg.precision {
            Dtype::F32 => cmd_restore::<f32>(cli, input)?,
            Dtype::F64 => cmd_restore::<f64>(cli, input)?,
        },
        Cmd::Eval { input, reference } => {
            check_input(input)?;
            check_input(reference)?;
            let (p, _) = read_images::<f64>(input)?;
            let (r, _) = read_images::<f64>(reference)?;
            print!("{}", reports_csv(&[summarize("eval", cfg.interval, &p.slices, &r.slices, 0.0, String::new())?]));
        }
        Cmd::Bench { methods, intervals, timing } => match cfg.precision {
            Dtype::F32 => cmd_bench::<f32>(cli, &cfg, methods, intervals, *timing)?,
            Dtype::F64 => cmd_bench::<f64>(cli, &cfg, methods, intervals, *timing)?,
        },
        Cmd::Gradcheck => {
            let mut failed = 0;
            for r in gradient_suite(cfg.train.seed)? {
                let verdict = if r.passed() { "PASS" } else { "FAIL" };
                println!("{verdict} {} max_rel_err={:.3e} tol={:.0e}", r.name, r.max_rel_err, r.tol);
                failed += usize::from(!r.passed());
            }
            if failed > 0 {
                bail!("{failed} gradient checks failed");
            }
        }
        Cmd::Params { net } => cmd_params(cli, net)?,
    }
    Ok(())
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("SPARSECT_THREADS") else { return Ok(()) };
    let n: usize = match v.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return config_err(format!("SPARSECT_THREADS must be a positive integer, got {v:?}")),
    };
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match init_threads().and_then(|_| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if e.downcast_ref::<ConfigError>().is_some() { 3 } else { 1 };
            let kind = if code == 3 { "config" } else { "runtime" };
            eprintln!("error: {kind}: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(code)
        }
    }
}
