//! Seam-free panorama convolution toolkit.
//!
//! * [`tensor`] and [`rng`]: the dense `[N, C, H, W]` substrate.
//! * [`conv`]: padding modes, cylinder-style convolution, gated convolution
//!   and instance normalisation, each with an exact backward pass.
//! * [`posenc`]: 2D sinusoidal positional encodings and the learnable 1x1
//!   embedding that injects them into encoder stages.
//! * [`probe`]: influence maps, line-pattern statistics, polynomial
//!   profiles and kernel classification.
//! * [`net`]: the gated U-Net generator and the spectrally normalised
//!   patch discriminator.
//! * [`pipeline`]: synthetic panoramas, masks, losses, Adam, metrics, file
//!   formats and the training loop behind the `cylinpaint` binary.

pub mod conv;
pub mod error;
pub mod gradcheck;
pub mod net;
pub mod pipeline;
pub mod posenc;
pub mod probe;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{assert_close, Scalar, Tensor};
