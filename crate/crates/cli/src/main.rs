//! Command-line entrypoint: train, decode, bench, gradcheck, render, eval.

mod io;

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dualpose_core::analyze;
use dualpose_core::config::{Arch, RunConfig, INPUT_STRIDE};
use dualpose_core::decode::{decode_maps, multi_scale_infer};
use dualpose_core::gradcheck;
use dualpose_core::net::Network;
use dualpose_core::rng::SplitMix64;
use dualpose_core::synth::generate_scene;
use dualpose_core::targets::render_targets;
use dualpose_core::tensor::Tensor;
use dualpose_core::train::{evaluate_pck, train_loop, LogRecord};

#[derive(Parser)]
#[command(
    name = "dualpose",
    version,
    about = "Dual-path pose estimation toolkit: training, decoding, and model analysis",
    arg_required_else_help = true
)]
struct Cli {
    /// Plain-text key=value config file; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for all randomness (weights, scenes, benchmark inputs).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the synthetic split and write a checkpoint.
    Train(TrainArgs),
    /// Decode poses from a checkpoint on a synthetic scene or a PPM image.
    Decode(DecodeArgs),
    /// Model-size and feedforward-timing tables.
    Bench(BenchArgs),
    /// Finite-difference gradient checks for every primitive.
    Gradcheck,
    /// Dump synthetic scenes as PPM images plus annotation text.
    Render(RenderArgs),
    /// Evaluate PCK of a checkpoint on the held-out synthetic split.
    Eval(EvalArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Override the configured step count.
    #[arg(long)]
    steps: Option<usize>,
    /// Checkpoint output path.
    #[arg(long, default_value = "checkpoint.dpc")]
    checkpoint_out: PathBuf,
    /// Tab-separated loss log (step, total, per-stage f_S and f_L).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Index of a synthetic scene to decode.
    #[arg(long, conflicts_with = "image")]
    scene: Option<u64>,
    /// PPM image to decode instead of a synthetic scene.
    #[arg(long)]
    image: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Architecture(s) to report: dpn, baseline, or both.
    #[arg(long, default_value = "both")]
    arch: ArchSelect,
    /// Stage counts for the size table, comma separated.
    #[arg(long, default_value = "3,4,5,6")]
    stages: StageList,
    /// Input size WxH for MAC counting and timing.
    #[arg(long, default_value = "368x368")]
    input: Dims,
    /// Timed forward passes per architecture (0 skips timing; otherwise >= 3).
    #[arg(long, default_value_t = 0)]
    reps: usize,
    /// Untimed warmup passes before timing.
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    /// Also write the size table (tab separated) to this file.
    #[arg(long)]
    sizes_out: Option<PathBuf>,
    /// Also write the timing table (tab separated) to this file.
    #[arg(long)]
    timing_out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Output directory for scene_NNNN.ppm / .txt files.
    #[arg(long, default_value = "scenes")]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    count: u64,
    /// First scene index.
    #[arg(long, default_value_t = 0)]
    start: u64,
    /// Also dump ground-truth heatmap/PAF channels as PGM files.
    #[arg(long, default_value_t = false)]
    targets: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// PCK tolerance as a fraction of the person bounding-box diagonal.
    #[arg(long, default_value_t = 0.2)]
    alpha: f32,
}

#[derive(Clone)]
struct ArchSelect(Vec<Arch>);

impl std::str::FromStr for ArchSelect {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dpn" => Ok(ArchSelect(vec![Arch::Dpn])),
            "baseline" => Ok(ArchSelect(vec![Arch::Baseline])),
            "both" => Ok(ArchSelect(vec![Arch::Baseline, Arch::Dpn])),
            other => Err(format!("unknown arch '{other}' (dpn, baseline, both)")),
        }
    }
}

#[derive(Clone)]
struct StageList(Vec<usize>);

impl std::str::FromStr for StageList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for part in s.split(',') {
            let t: usize = part
                .trim()
                .parse()
                .map_err(|_| format!("bad stage count '{part}'"))?;
            if t == 0 {
                return Err("stage counts must be >= 1".into());
            }
            out.push(t);
        }
        if out.is_empty() {
            return Err("empty stage list".into());
        }
        Ok(StageList(out))
    }
}

#[derive(Clone, Copy)]
struct Dims(usize, usize);

impl std::str::FromStr for Dims {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (w, h) = s
            .split_once('x')
            .ok_or_else(|| format!("bad input size '{s}' (expected WxH)"))?;
        let w = w.parse().map_err(|_| format!("bad width '{w}'"))?;
        let h = h.parse().map_err(|_| format!("bad height '{h}'"))?;
        Ok(Dims(w, h))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = io::load_run_config(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Train(args) => cmd_train(cfg, args),
        Command::Decode(args) => cmd_decode(cfg, args),
        Command::Bench(args) => cmd_bench(cfg, args),
        Command::Gradcheck => cmd_gradcheck(cli.seed),
        Command::Render(args) => cmd_render(cfg, args),
        Command::Eval(args) => cmd_eval(cfg, args),
    }
}

fn cmd_train(mut cfg: RunConfig, args: TrainArgs) -> Result<()> {
    if let Some(steps) = args.steps {
        cfg.train.steps = steps;
    }
    let mut log_file = match &args.log {
        None => None,
        Some(p) => {
            let mut f = fs::File::create(p)
                .with_context(|| format!("cannot create log file {}", p.display()))?;
            writeln!(f, "{}", LogRecord::tsv_header(cfg.net.stages))?;
            Some(f)
        }
    };
    let mut log_err = None;
    let outcome = train_loop(&cfg, |r| {
        println!("step {:>6}  total {:.4}", r.step, r.total);
        if let Some(f) = log_file.as_mut() {
            if let Err(e) = writeln!(f, "{}", r.to_tsv()) {
                log_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(e).context("writing loss log");
    }
    io::save_checkpoint(&args.checkpoint_out, &outcome.checkpoint)?;
    println!(
        "trained {} steps: loss {:.4} -> {:.4}; checkpoint written to {}",
        cfg.train.steps,
        outcome.initial_loss,
        outcome.final_loss,
        args.checkpoint_out.display()
    );
    Ok(())
}

fn cmd_decode(cfg: RunConfig, args: DecodeArgs) -> Result<()> {
    let ckpt = io::load_checkpoint(&args.checkpoint)?;
    let net = ckpt.build_network()?;
    let image = match (&args.scene, &args.image) {
        (Some(idx), None) => generate_scene(&cfg.synth, *idx)?.0,
        (None, Some(path)) => io::read_ppm(path)?,
        (None, None) => generate_scene(&cfg.synth, 0)?.0,
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    let (s, l) = multi_scale_infer(&net, &image, &cfg.decode.scales)?;
    let poses = decode_maps(&s, &l, &cfg.synth.skeleton.limbs, INPUT_STRIDE, &cfg.decode)?;
    println!("# person\tkeypoint\tx\ty\tscore");
    for (pi, pose) in poses.iter().enumerate() {
        for (kind, kp) in pose.keypoints.iter().enumerate() {
            if let Some((x, y, score)) = kp {
                println!("{pi}\t{kind}\t{x:.2}\t{y:.2}\t{score:.4}");
            }
        }
    }
    println!("# {} pose(s)", poses.len());
    Ok(())
}

fn cmd_bench(cfg: RunConfig, args: BenchArgs) -> Result<()> {
    if args.reps != 0 && args.reps < 3 {
        bail!("--reps must be 0 (skip timing) or >= 3, got {}", args.reps);
    }
    let Dims(w, h) = args.input;
    if w % INPUT_STRIDE != 0 || h % INPUT_STRIDE != 0 {
        bail!("--input {w}x{h} must be divisible by {INPUT_STRIDE}");
    }

    // Size table: closed-form parameter counting only.
    let (aligned, tsv) = analyze::size_table(&args.arch.0, &args.stages.0, &cfg.net)?;
    println!("model size (MB, params x 4 bytes / 1e6)");
    print!("{aligned}");
    if let Some(p) = &args.sizes_out {
        fs::write(p, &tsv).with_context(|| format!("cannot write {}", p.display()))?;
    }

    if args.reps == 0 {
        return Ok(());
    }

    // Timing table: wall-clock feedforward at the first stage count, with the
    // hardware-independent MAC count alongside.
    let stages = args.stages.0[0];
    let mut aligned = format!(
        "{:<16} {:>18} {:>16}\n",
        "method", "forward time (ms)", "MACs"
    );
    let mut tsv = String::from("method\tforward_ms\tforward_std_ms\tmacs\n");
    for &arch in &args.arch.0 {
        let mut net_cfg = cfg.net.clone();
        net_cfg.arch = arch;
        net_cfg.stages = stages;
        let macs = analyze::count_flops(&net_cfg, h, w)?;
        let net = Network::new(&net_cfg, cfg.seed)?;
        let (mean_ms, std_ms) = bench_forward(&net, h, w, args.warmup, args.reps, cfg.seed)?;
        let label = format!("{}@{}stages", arch.as_str(), stages);
        aligned.push_str(&format!(
            "{label:<16} {:>13.1} ± {:>4.1} {macs:>16}\n",
            mean_ms, std_ms
        ));
        tsv.push_str(&format!("{label}\t{mean_ms:.3}\t{std_ms:.3}\t{macs}\n"));
    }
    println!("\nfeedforward time, single image at {w}x{h} ({} reps)", args.reps);
    print!("{aligned}");
    if let Some(p) = &args.timing_out {
        fs::write(p, &tsv).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(())
}

fn bench_forward(
    net: &Network,
    h: usize,
    w: usize,
    warmup: usize,
    reps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut rng = SplitMix64::for_stream(seed, 0x62656e6368);
    let n = 3 * h * w;
    let data: Vec<f32> = (0..n).map(|_| rng.next_f32()).collect();
    let image = Tensor::from_vec(&[1, 3, h, w], data)?;
    for _ in 0..warmup {
        let _ = net.forward_maps(&image)?;
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        let _ = net.forward_maps(&image)?;
        samples.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let mean = samples.iter().sum::<f64>() / reps as f64;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / reps as f64;
    Ok((mean, var.sqrt()))
}

fn cmd_gradcheck(seed: u64) -> Result<()> {
    let entries = gradcheck::run_suite(seed)?;
    let mut all_ok = true;
    for e in &entries {
        let ok = e.max_rel_error < 1e-4;
        all_ok &= ok;
        println!(
            "{:<28} max relative error {:.3e}  [{}]",
            e.name,
            e.max_rel_error,
            if ok { "ok" } else { "FAIL" }
        );
    }
    if !all_ok {
        bail!("gradient check failed (threshold 1e-4)");
    }
    Ok(())
}

fn cmd_render(cfg: RunConfig, args: RenderArgs) -> Result<()> {
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    for index in args.start..args.start + args.count {
        let (image, ann) = generate_scene(&cfg.synth, index)?;
        let ppm = args.out.join(format!("scene_{index:04}.ppm"));
        io::write_ppm(&ppm, &image)?;
        let txt = args.out.join(format!("scene_{index:04}.txt"));
        fs::write(&txt, ann.to_text())
            .with_context(|| format!("cannot write {}", txt.display()))?;
        if args.targets {
            let maps = render_targets(&ann, cfg.net.keypoint_channels, INPUT_STRIDE, &cfg.targets)?;
            let (j, th, tw) = maps.s_star.dims3()?;
            for ch in 0..j {
                let path = args.out.join(format!("scene_{index:04}_heat{ch}.pgm"));
                let plane = &maps.s_star.data()[ch * th * tw..][..th * tw];
                io::write_pgm(&path, plane, th, tw)?;
            }
            let (c, th, tw) = maps.l_star.dims3()?;
            for limb in 0..c / 2 {
                // PAF magnitude per limb.
                let mut mag = vec![0.0f32; th * tw];
                for i in 0..th * tw {
                    let x = maps.l_star.data()[2 * limb * th * tw + i];
                    let y = maps.l_star.data()[(2 * limb + 1) * th * tw + i];
                    mag[i] = (x * x + y * y).sqrt();
                }
                let path = args.out.join(format!("scene_{index:04}_paf{limb}.pgm"));
                io::write_pgm(&path, &mag, th, tw)?;
            }
        }
        println!("wrote {}", ppm.display());
    }
    Ok(())
}

fn cmd_eval(cfg: RunConfig, args: EvalArgs) -> Result<()> {
    let ckpt = io::load_checkpoint(&args.checkpoint)?;
    let net = ckpt.build_network()?;
    let pck = evaluate_pck(&net, &cfg, args.alpha)?;
    println!(
        "PCK@{} over {} held-out scenes: {:.4}",
        args.alpha, cfg.train.n_eval, pck
    );
    Ok(())
}
