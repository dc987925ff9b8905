//! Everything around the layers: synthetic data, masks, file formats,
//! configuration, losses, optimisation, metrics, checkpoints and training.

pub mod checkpoint;
pub mod config;
pub mod io;
pub mod loss;
pub mod mask;
pub mod metrics;
pub mod optim;
pub mod synth;
pub mod train;

pub use config::{KeyValues, RunConfig};
pub use loss::{adversarial_terms, l1_loss, wgan_losses, AdvLoss};
pub use mask::{make_mask, MaskSpec};
pub use metrics::{psnr, seam_metric, ssim};
pub use optim::Adam;
pub use synth::{synth_panorama, Family, Synth, SynthSpec};
pub use train::{run_ablation, train, Dataset, EvalRow, TrainReport};
