use std::fs;
use std::path::Path;

use cylinpaint::net::{composite, Generator, Parameterized};
use cylinpaint::pipeline::checkpoint::load_generator;
use cylinpaint::pipeline::mask::apply_mask;
use cylinpaint::pipeline::{l1_loss, make_mask, train, KeyValues, MaskSpec, RunConfig};
use cylinpaint::rng::Rng;
use cylinpaint::{Error, Tensor};

fn tiny(out: &Path, extra: &str) -> RunConfig {
    let base = "seed = 3\nsteps = 8\neval_every = 4\ndata.height = 16\ndata.width = 32\ndata.train_size = 4\ndata.val_size = 2\ngen.channels = 4,8\ndisc.channels = 4,8\n";
    let mut kv = KeyValues::parse(base).unwrap();
    kv.entries.extend(KeyValues::parse(extra).unwrap().entries);
    let mut cfg = RunConfig::from_kv(&kv).unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg
}

#[test]
fn zero_steps_logs_initial_row_and_saves_init() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), "steps = 0\n");
    let rep = train(&cfg).unwrap();
    assert_eq!(rep.evals.len(), 1);
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    assert!(metrics.starts_with("step,l1,l_adv,loss_total,seam,psnr,ssim\n0,"));

    let fresh = Generator::<f32>::new(cfg.gen.clone(), &mut Rng::new(cfg.seed)).unwrap();
    let (loaded, meta) = load_generator::<f32>(&dir.path().join("ckpt")).unwrap();
    assert_eq!(meta.get("step"), Some("0"));
    for (a, b) in fresh.params().iter().zip(loaded.params().iter()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.data, b.data);
    }
}

#[test]
fn same_seed_gives_bitwise_identical_logs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    train(&tiny(a.path(), "adversarial = true\n")).unwrap();
    train(&tiny(b.path(), "adversarial = true\n")).unwrap();
    for f in ["metrics.csv", "train_log.csv", "ckpt/enc0.feature.weight.cylt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn total_loss_decomposes_at_every_step() {
    for loss in ["wgan", "hinge"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path(), &format!("adversarial = true\nadv_loss = {loss}\nlambda_adv = 0.5\n"));
        let rep = train(&cfg).unwrap();
        for &(l1, adv, total) in &rep.train_log {
            assert!(adv.is_finite() && adv != 0.0);
            assert!((total - (cfg.lambda_gen * l1 + cfg.lambda_adv * adv)).abs() < 1e-6);
        }
        for row in &rep.evals {
            assert!((row.loss_total - (cfg.lambda_gen * row.l1 + cfg.lambda_adv * row.l_adv)).abs() < 1e-6);
        }
    }
}

#[test]
fn runaway_rate_is_a_numeric_failure_with_checkpoint_kept() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), "lr_gen = 1e30\nsteps = 50\neval_every = 100\n");
    match train(&cfg) {
        Err(Error::Numeric(_)) => {}
        other => panic!("expected a numeric failure, got {other:?}"),
    }
    let (_, meta) = load_generator::<f32>(&dir.path().join("ckpt")).unwrap();
    assert_eq!(meta.get("step"), Some("0"));
}

#[test]
fn pasted_prediction_has_no_error_on_the_known_band() {
    let mut rng = Rng::new(4);
    let (h, w) = (8, 32);
    let target = Tensor::<f64>::from_fn([2, 3, h, w], |_, _, _, _| rng.uniform_range(-1.0, 1.0));
    let pred = Tensor::<f64>::from_fn([2, 3, h, w], |_, _, _, _| rng.uniform_range(-1.0, 1.0));
    let mask = make_mask::<f64>(&MaskSpec::new(0.375).unwrap(), h, w).unwrap();
    let masked = apply_mask(&target, &mask).unwrap();
    let out = composite(&masked, &mask, &pred);
    let unknown = Tensor::<f64>::from_fn([1, 1, h, w], |_, _, y, x| 1.0 - mask.at(0, 0, y, x));
    let (full, _) = l1_loss(&out, &target, None).unwrap();
    let (hole, _) = l1_loss(&out, &target, Some(&unknown)).unwrap();
    let known = Tensor::<f64>::from_fn([1, 1, h, w], |_, _, y, x| mask.at(0, 0, y, x));
    let (band, _) = l1_loss(&out, &target, Some(&known)).unwrap();
    let known_cols = MaskSpec::new(0.375).unwrap().known_columns(w);
    let frac_unknown = (w - known_cols) as f64 / w as f64;
    assert!(full <= hole);
    assert!((full - frac_unknown * hole).abs() < 1e-12);
    assert_eq!(band, 0.0);
}

#[test]
fn smoke_config_halves_validation_l1() {
    let dir = tempfile::tempdir().unwrap();
    let kv = KeyValues::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/smoke.conf")).unwrap();
    let mut cfg = RunConfig::from_kv(&kv).unwrap();
    cfg.out_dir = dir.path().to_path_buf();
    let rep = train(&cfg).unwrap();
    let (first, last) = (rep.initial_val_l1(), rep.final_eval().l1);
    assert!(last <= 0.5 * first, "val L1 {first} -> {last}");
}
