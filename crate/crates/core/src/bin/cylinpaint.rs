use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cylinpaint::conv::{ConvLayer, PadMode};
use cylinpaint::net::{composite, GeneratorInputProbe};
use cylinpaint::pipeline::checkpoint::load_generator;
use cylinpaint::pipeline::config::{KeyValues, RunConfig};
use cylinpaint::pipeline::io::{read_ppm, write_cylt, write_pgm_auto, write_ppm};
use cylinpaint::pipeline::mask::{apply_mask, make_mask, MaskSpec};
use cylinpaint::pipeline::synth::{Family, Synth, SynthSpec};
use cylinpaint::pipeline::{psnr, run_ablation, seam_metric, ssim, train};
use cylinpaint::posenc::{build_spe, PeGroup, SpeMode};
use cylinpaint::probe::{
    classify_kernel, fit_positional_profile, influence_map, line_pattern_stat, seam_jump, wraparound_continuity, Axis,
    ConvStack, InfluenceMap, KernelClass, DEFAULT_KERNEL_TAU,
};
use cylinpaint::rng::Rng;
use cylinpaint::{Error, Result, Tensor};

#[derive(Parser)]
#[command(name = "cylinpaint", version, about = "Seam-free 360-degree panorama outpainting toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a generator from a `key = value` config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model per positional-encoding group and summarise.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "RA,RP,AA,AP,ALL")]
        groups: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Complete a panorama with a trained generator.
    Outpaint {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Ground truth for PSNR/SSIM.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Defaults to the fraction the checkpoint was trained with.
        #[arg(long)]
        known_fraction: Option<f64>,
        /// Run config that must match the checkpoint architecture.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a sinusoidal positional encoding volume as CYLT.
    GenSpe {
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 8)]
        az_pairs: usize,
        #[arg(long, default_value_t = 8)]
        pol_pairs: usize,
        #[arg(long, default_value = "index")]
        mode: SpeMode,
        #[arg(long, default_value = "spe.cylt")]
        out: PathBuf,
        /// Also write one PGM per channel into this directory.
        #[arg(long)]
        pgm_dir: Option<PathBuf>,
    },
    /// Influence map of one output pixel of a random conv stack or a generator.
    ProbeInfluence {
        #[arg(long, default_value = "circular")]
        pad_mode: PadMode,
        #[arg(long, default_value_t = 4)]
        layers: usize,
        #[arg(long, default_value_t = 4)]
        channels: usize,
        #[arg(long, default_value_t = 3)]
        kernel: usize,
        #[arg(long, default_value_t = 16)]
        height: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Probed column; defaults to 0 (on the seam).
        #[arg(long, default_value_t = 0)]
        col: usize,
        /// Probed row; defaults to the middle row.
        #[arg(long)]
        row: Option<usize>,
        /// Probe a trained generator instead of a random stack.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, default_value = "influence")]
        out: PathBuf,
    },
    /// Line-pattern deviation per layer of a random stack on constant input.
    ProbeLines {
        #[arg(long, default_value = "zero")]
        pad_mode: PadMode,
        #[arg(long, default_value_t = 5)]
        layers: usize,
        #[arg(long, default_value_t = 4)]
        channels: usize,
        #[arg(long, default_value_t = 3)]
        kernel: usize,
        #[arg(long, default_value_t = 16)]
        height: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Polynomial degree of the fitted per-column profile.
        #[arg(long, default_value_t = 4)]
        degree: usize,
        #[arg(long, default_value = "lines.csv")]
        out: PathBuf,
    },
    /// Classify every 2D kernel of a checkpoint by stripe orientation.
    ClassifyKernels {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = DEFAULT_KERNEL_TAU)]
        tau: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PSNR, SSIM and seam metrics of two images.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Render a synthetic periodic panorama.
    Synth {
        #[arg(long, default_value = "stripes")]
        family: Family,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { config, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let rep = train(&cfg)?;
            let fin = rep.final_eval();
            println!("steps {}", cfg.steps);
            println!("initial val l1 {:.6}", rep.initial_val_l1());
            println!("final val l1 {:.6}", fin.l1);
            println!("final train l1 {:.6}", rep.final_train_l1());
            println!("seam {:.4} psnr {:.3} ssim {:.4}", fin.seam, fin.psnr, fin.ssim);
            println!("wrote {}", rep.out_dir.display());
            Ok(())
        }
        Command::Ablate { config, groups, out } => {
            let cfg = RunConfig::load(&config)?;
            let groups = groups
                .split(',')
                .map(|g| match g.trim() {
                    s if s.eq_ignore_ascii_case("none") => Ok(None),
                    s => s.parse::<PeGroup>().map(Some).map_err(|e| Error::Config(e.to_string())),
                })
                .collect::<Result<Vec<_>>>()?;
            for row in run_ablation(&cfg, &groups, &out)? {
                println!(
                    "{:>4} val_l1 {:.6} train_l1 {:.6} seam {:.4} psnr {:.3} ssim {:.4}",
                    row.group.map_or("none", PeGroup::name),
                    row.final_val_l1,
                    row.final_train_l1,
                    row.seam,
                    row.psnr,
                    row.ssim
                );
            }
            Ok(())
        }
        Command::Outpaint { ckpt, input, gt, out, known_fraction, config } => outpaint(&ckpt, &input, gt, out, known_fraction, config),
        Command::GenSpe { height, width, az_pairs, pol_pairs, mode, out, pgm_dir } => {
            let spe = build_spe(height, width, az_pairs, pol_pairs, mode)?;
            write_cylt(&out, &spe.data)?;
            if let Some(dir) = pgm_dir {
                fs::create_dir_all(&dir)?;
                for c in 0..spe.channels() {
                    let plane = spe.data.plane(0, c);
                    fs::write(dir.join(format!("spe_{c:03}.pgm")), cylinpaint::pipeline::io::encode_pgm(plane, height, width, -1.0, 1.0)?)?;
                }
            }
            println!("wrote {} channels of {height}x{width} to {}", spe.channels(), out.display());
            Ok(())
        }
        Command::ProbeInfluence { pad_mode, layers, channels, kernel, height, width, seed, col, row, ckpt, out } => {
            let row = row.unwrap_or(height / 2);
            let mut rng = Rng::new(seed);
            let im = match ckpt {
                Some(dir) => {
                    let (gen, _) = load_generator::<f64>(&dir)?;
                    let spec = MaskSpec::default();
                    let mask = make_mask::<f64>(&spec, height, width)?;
                    let img = Synth::new(SynthSpec { family: Family::Stripes, seed, height, width })?.render::<f64>();
                    let probe = GeneratorInputProbe { generator: &gen, mask: mask.clone() };
                    influence_map(&probe, &apply_mask(&img, &mask)?, (col, row), 0)?
                }
                None => {
                    let stack = random_stack(&mut rng, pad_mode, layers, channels, kernel)?;
                    let x: Tensor<f64> = rng.normal([1, channels, height, width], 0.0, 1.0)?;
                    influence_map(&stack, &x, (col, row), 0)?
                }
            };
            write_influence(&out, &im)?;
            println!("wraparound continuity {:.6e}", wraparound_continuity(&im));
            println!("seam jump {:.6e}", seam_jump(&im));
            Ok(())
        }
        Command::ProbeLines { pad_mode, layers, channels, kernel, height, width, seed, degree, out } => {
            let mut rng = Rng::new(seed);
            let stack = random_stack(&mut rng, pad_mode, layers, channels, kernel)?;
            let x = Tensor::<f64>::full([1, channels, height, width], 1.0);
            let mut csv = String::from("layer,axis,index,deviation\n");
            for (li, act) in stack.activations(&x)?.iter().enumerate() {
                let mut peak = 0.0f64;
                for (axis, name) in [(Axis::Azimuth, "azimuth"), (Axis::Polar, "polar")] {
                    let stat = line_pattern_stat(act, axis)?;
                    for (i, v) in stat.iter().enumerate() {
                        writeln!(csv, "{},{name},{i},{v}", li + 1).unwrap();
                    }
                    peak = peak.max(stat.iter().cloned().fold(0.0, f64::max));
                    if axis == Axis::Azimuth && stat.len() > degree {
                        let prof = fit_positional_profile(&stat, degree)?;
                        let coef: Vec<String> = prof.coefficients.iter().map(|c| format!("{c:.4e}")).collect();
                        println!("layer {} azimuth profile [{}] rms {:.3e}", li + 1, coef.join(", "), prof.residual_rms);
                    }
                }
                println!("layer {} max deviation {peak:.6e}", li + 1);
            }
            fs::write(&out, csv)?;
            Ok(())
        }
        Command::ClassifyKernels { ckpt, tau, out } => {
            let (gen, _) = load_generator::<f64>(&ckpt)?;
            let mut csv = String::from("layer,out,in,class\n");
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for (name, layer) in gen.conv_layers() {
                let [co, ci, kh, kw] = layer.weight.shape();
                if kh * kw == 1 {
                    continue;
                }
                for o in 0..co {
                    for i in 0..ci {
                        let k: Vec<f64> = (0..kh * kw).map(|j| layer.weight.at(o, i, j / kw, j % kw)).collect();
                        let class: KernelClass = classify_kernel(&k, kh, kw, tau)?;
                        writeln!(csv, "{name},{o},{i},{class}").unwrap();
                        *counts.entry(class.to_string()).or_default() += 1;
                    }
                }
            }
            match out {
                Some(p) => fs::write(p, &csv)?,
                None => print!("{csv}"),
            }
            for (k, v) in counts {
                eprintln!("{k}: {v}");
            }
            Ok(())
        }
        Command::Metrics { a, b } => {
            let a: Tensor<f64> = read_ppm(&a)?;
            let b: Tensor<f64> = read_ppm(&b)?;
            println!("psnr,ssim,seam_a,seam_b");
            println!("{},{},{},{}", psnr(&a, &b, 2.0)?, ssim(&a, &b)?, seam_metric(&a)?, seam_metric(&b)?);
            Ok(())
        }
        Command::Synth { family, seed, height, width, out } => {
            let img = Synth::new(SynthSpec { family, seed, height, width })?.render::<f64>();
            let out = out.unwrap_or_else(|| PathBuf::from(format!("{family}_{seed}.ppm")));
            write_ppm(&out, &img)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn random_stack(rng: &mut Rng, pad_mode: PadMode, layers: usize, channels: usize, kernel: usize) -> Result<ConvStack<f64>> {
    if layers == 0 || channels == 0 {
        return Err(Error::Config("layers and channels must be positive".into()));
    }
    let layers = (0..layers)
        .map(|_| ConvLayer::random(rng, channels, channels, (kernel, kernel), (1, 1), pad_mode))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvStack::new(layers))
}

fn write_influence(out: &Path, im: &InfluenceMap) -> Result<()> {
    fs::create_dir_all(out)?;
    let [_, _, h, w] = im.values.shape();
    let mut csv = String::from("row,col,value\n");
    for y in 0..h {
        for x in 0..w {
            writeln!(csv, "{y},{x},{}", im.values.at(0, 0, y, x)).unwrap();
        }
    }
    fs::write(out.join("influence.csv"), csv)?;
    write_pgm_auto(out.join("influence.pgm"), im.values.data(), h, w)
}

fn outpaint(
    ckpt: &Path,
    input: &Path,
    gt: Option<PathBuf>,
    out: Option<PathBuf>,
    known_fraction: Option<f64>,
    config: Option<PathBuf>,
) -> Result<()> {
    let (mut gen, manifest) = load_generator::<f32>(ckpt)?;
    if let Some(cfg) = config {
        let cfg = RunConfig::load(cfg)?;
        if cfg.gen != gen.config {
            return Err(Error::Config("checkpoint architecture does not match the config".into()));
        }
    }
    gen.config.paste_known = true;
    let fraction = match known_fraction {
        Some(f) => f,
        None => manifest_fraction(&manifest)?,
    };
    let image: Tensor<f32> = read_ppm(input)?;
    let mask = make_mask(&MaskSpec::new(fraction)?, image.height(), image.width())?;
    let masked = apply_mask(&image, &mask)?;
    let pred = gen.predict(&masked, &mask)?;
    let result = composite(&image, &mask, &pred);
    let out = out.unwrap_or_else(|| input.with_extension("outpaint.ppm"));
    write_ppm(&out, &result)?;
    println!("wrote {}", out.display());
    println!("seam {:.6}", seam_metric(&result)?);
    if let Some(gt) = gt {
        let gt: Tensor<f32> = read_ppm(gt)?;
        println!("psnr {:.4}", psnr(&result, &gt, 2.0)?);
        println!("ssim {:.6}", ssim(&result, &gt)?);
    }
    Ok(())
}

fn manifest_fraction(kv: &KeyValues) -> Result<f64> {
    Ok(kv.parsed("mask.known_fraction")?.unwrap_or(0.5))
}
