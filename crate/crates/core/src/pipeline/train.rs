//! The seeded training loop and the ablation driver.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::net::{composite, Discriminator, Generator};
use crate::posenc::PeGroup;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::checkpoint::save_generator;
use super::config::{group_name, RunConfig};
use super::loss::{adversarial_terms, l1_loss};
use super::mask::{apply_mask, batch_mask, make_mask};
use super::metrics::{psnr, seam_metric, ssim};
use super::optim::Adam;
use super::synth::{Synth, SynthSpec};

pub const METRICS_HEADER: &str = "step,l1,l_adv,loss_total,seam,psnr,ssim";
pub const TRAIN_LOG_HEADER: &str = "step,l1,l_adv,loss_total";
/// Steps averaged into the reported final training L1.
pub const TRAIN_TAIL: usize = 100;

/// Synthetic panoramas sharing one mask.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<Tensor<f32>>,
    pub mask: Tensor<f32>,
}

impl Dataset {
    pub fn synthetic(cfg: &RunConfig, first_seed: u64, count: usize) -> Result<Self> {
        let images = (0..count as u64)
            .map(|i| {
                let spec = SynthSpec { family: cfg.family, seed: first_seed + i, height: cfg.height, width: cfg.width };
                Synth::new(spec).map(|s| s.render())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { images, mask: make_mask(&cfg.mask, cfg.height, cfg.width)? })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(target, masked input, mask)` for the given items.
    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>, Tensor<f32>)> {
        let items: Vec<&Tensor<f32>> = idx.iter().map(|&i| &self.images[i]).collect();
        let target = Tensor::stack_batch(&items)?;
        let mask = batch_mask(&self.mask, idx.len());
        let masked = apply_mask(&target, &mask)?;
        Ok((target, masked, mask))
    }
}

/// Training and validation sets for a config. Both derive from the run seed
/// and never overlap.
pub fn datasets(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let base = cfg.seed.wrapping_mul(1_000_003);
    let train = Dataset::synthetic(cfg, base, cfg.train_size)?;
    let val = Dataset::synthetic(cfg, base.wrapping_add(1 << 32), cfg.val_size)?;
    Ok((train, val))
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRow {
    pub step: usize,
    pub l1: f64,
    pub l_adv: f64,
    pub loss_total: f64,
    pub seam: f64,
    pub psnr: f64,
    pub ssim: f64,
}

impl EvalRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step, self.l1, self.l_adv, self.loss_total, self.seam, self.psnr, self.ssim
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub evals: Vec<EvalRow>,
    /// Per-step `(l1, l_adv, loss_total)` on the training batches.
    pub train_log: Vec<(f64, f64, f64)>,
    pub out_dir: PathBuf,
}

impl TrainReport {
    pub fn initial_val_l1(&self) -> f64 {
        self.evals.first().map_or(f64::NAN, |r| r.l1)
    }

    pub fn final_eval(&self) -> EvalRow {
        *self.evals.last().expect("at least the initial evaluation")
    }

    /// Mean training L1 over the last [`TRAIN_TAIL`] steps.
    pub fn final_train_l1(&self) -> f64 {
        let tail = &self.train_log[self.train_log.len().saturating_sub(TRAIN_TAIL)..];
        if tail.is_empty() {
            return f64::NAN;
        }
        tail.iter().map(|r| r.0).sum::<f64>() / tail.len() as f64
    }
}

/// Validation metrics: L1 and adversarial terms on the raw prediction,
/// seam/PSNR/SSIM on the composited output.
pub fn evaluate(
    cfg: &RunConfig,
    gen: &Generator<f32>,
    disc: Option<&Discriminator<f32>>,
    val: &Dataset,
    step: usize,
) -> Result<EvalRow> {
    let idx: Vec<usize> = (0..val.len()).collect();
    let (target, masked, mask) = val.batch(&idx)?;
    let pred = gen.predict(&masked, &mask)?;
    let (l1, _) = l1_loss(&pred, &target, None)?;
    let l_adv = match disc {
        Some(d) => {
            let mut d = d.clone();
            d.refresh(cfg.disc.eval_iters)?;
            adversarial_terms(cfg.adv_loss, &d.forward(&target)?, &d.forward(&pred)?)?.loss_gen
        }
        None => 0.0,
    };
    let out = composite(&masked, &mask, &pred);
    let mut p = 0.0;
    for i in 0..val.len() {
        p += psnr(&out.slice_batch(i, i + 1), &target.slice_batch(i, i + 1), 2.0)?;
    }
    Ok(EvalRow {
        step,
        l1,
        l_adv,
        loss_total: cfg.lambda_gen * l1 + cfg.lambda_adv * l_adv,
        seam: seam_metric(&out)?,
        psnr: p / val.len() as f64,
        ssim: ssim(&out, &target)?,
    })
}

fn check_finite(what: &str, step: usize, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} became {v} at step {step}")))
    }
}

/// Runs the configured training and writes `config.txt`, `metrics.csv`,
/// `train_log.csv` and the `ckpt` directory under `cfg.out_dir`. The
/// checkpoint is refreshed at every evaluation, so a numeric failure leaves
/// the last good one in place.
pub fn train(cfg: &RunConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let out = cfg.out_dir.clone();
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.txt"), cfg.to_kv().render())?;
    let (train_set, val_set) = datasets(cfg)?;

    let mut rng = Rng::new(cfg.seed);
    let mut gen = Generator::<f32>::new(cfg.gen.clone(), &mut rng)?;
    let mut disc = if cfg.adversarial { Some(Discriminator::<f32>::new(cfg.disc.clone(), &mut rng)?) } else { None };
    let mut opt_g = Adam::new(cfg.lr_gen);
    let mut opt_d = Adam::new(cfg.lr_disc);

    let mut metrics = format!("{METRICS_HEADER}\n");
    let mut log = format!("{TRAIN_LOG_HEADER}\n");
    let mut report = TrainReport { evals: Vec::new(), train_log: Vec::new(), out_dir: out.clone() };
    let ckpt = out.join("ckpt");

    let record = |gen: &Generator<f32>, disc: Option<&Discriminator<f32>>, step: usize, metrics: &mut String| -> Result<EvalRow> {
        let row = evaluate(cfg, gen, disc, &val_set, step)?;
        check_finite("validation loss", step, row.loss_total)?;
        writeln!(metrics, "{}", row.csv()).unwrap();
        fs::write(out.join("metrics.csv"), metrics.as_bytes())?;
        save_generator(
            &ckpt,
            gen,
            &[
                ("step".into(), step.to_string()),
                ("seed".into(), cfg.seed.to_string()),
                ("mask.known_fraction".into(), cfg.mask.known_fraction.to_string()),
            ],
        )?;
        Ok(row)
    };
    report.evals.push(record(&gen, disc.as_ref(), 0, &mut metrics)?);

    for step in 1..=cfg.steps {
        let idx: Vec<usize> = (0..cfg.batch).map(|_| rng.below(train_set.len())).collect();
        let (target, masked, mask) = train_set.batch(&idx)?;
        let (pred, cache) = gen.forward_cached_with(&masked, &mask, false)?;
        let (l1, g_l1) = l1_loss(&pred, &target, None)?;
        let mut grad = g_l1.scale(cfg.lambda_gen as f32);
        let mut l_adv = 0.0;
        if let Some(d) = disc.as_mut() {
            d.refresh(cfg.disc.train_iters)?;
            let (real, real_cache) = d.forward_cached(&target)?;
            let (fake, fake_cache) = d.forward_cached(&pred)?;
            let terms = adversarial_terms(cfg.adv_loss, &real, &fake)?;
            l_adv = terms.loss_gen;
            let g_fake = d.backward(&fake_cache, &terms.grad_fake_gen)?;
            grad.add_assign(&g_fake.input.scale(cfg.lambda_adv as f32))?;
            check_finite("discriminator loss", step, terms.loss_disc)?;
            let gr = d.backward(&real_cache, &terms.grad_real)?;
            let gf = d.backward(&fake_cache, &terms.grad_fake_disc)?;
            let grads: Vec<Vec<f32>> =
                gr.params.iter().zip(&gf.params).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
            opt_d.update(d, &grads)?;
        }
        let total = cfg.lambda_gen * l1 + cfg.lambda_adv * l_adv;
        check_finite("training loss", step, total)?;
        let grads = gen.backward(&cache, &grad)?;
        opt_g.update(&mut gen, &grads.params)?;
        writeln!(log, "{step},{l1},{l_adv},{total}").unwrap();
        report.train_log.push((l1, l_adv, total));
        if step % cfg.eval_every == 0 || step == cfg.steps {
            fs::write(out.join("train_log.csv"), log.as_bytes())?;
            report.evals.push(record(&gen, disc.as_ref(), step, &mut metrics)?);
        }
    }
    fs::write(out.join("train_log.csv"), log.as_bytes())?;
    Ok(report)
}

/// One line of the ablation summary.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub group: Option<PeGroup>,
    pub final_val_l1: f64,
    pub final_train_l1: f64,
    pub seam: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub const ABLATION_HEADER: &str = "group,final_val_l1,final_train_l1,seam,psnr,ssim";

/// Trains one model per encoding group with otherwise identical settings,
/// each under `<out>/<group>/`, and writes `<out>/ablation.csv`.
pub fn run_ablation(base: &RunConfig, groups: &[Option<PeGroup>], out: &Path) -> Result<Vec<AblationRow>> {
    fs::create_dir_all(out)?;
    let mut csv = format!("{ABLATION_HEADER}\n");
    let mut rows = Vec::new();
    for &g in groups {
        let mut cfg = base.clone();
        cfg.gen.pe_group = g;
        cfg.out_dir = out.join(group_name(g));
        let rep = train(&cfg)?;
        let fin = rep.final_eval();
        let row = AblationRow {
            group: g,
            final_val_l1: fin.l1,
            final_train_l1: rep.final_train_l1(),
            seam: fin.seam,
            psnr: fin.psnr,
            ssim: fin.ssim,
        };
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            group_name(g),
            row.final_val_l1,
            row.final_train_l1,
            row.seam,
            row.psnr,
            row.ssim
        )
        .unwrap();
        rows.push(row);
    }
    fs::write(out.join("ablation.csv"), csv)?;
    Ok(rows)
}
