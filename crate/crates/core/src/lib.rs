//! Generation and evaluation of transferable unlearnable examples on
//! desk-scale image data.
//!
//! The crate is organised bottom-up:
//!
//! * [`numkernel`]: seeded RNG streams, finite differences, PCA.
//! * [`data`]: datasets, synthetic generation, augmentation, `TUED` files.
//! * [`models`]: tanh MLP classifier, contrastive encoder, linear probe.
//! * [`losses`]: cross-entropy, NT-Xent, CSD and the joint objective.
//! * [`perturb`]: perturbation sets, L∞ PGD, swaps, interpolation, `TUEP` files.
//! * [`generators`]: EMN, UCL, TUE and synthetic-noise generation.
//! * [`eval`]: supervised training, contrastive pre-training, probes and the
//!   swap/transfer experiments.
//!
//! With the default `parallel` feature the per-sample work is spread over
//! rayon; results are bit-identical to the sequential build.

mod binio;
pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod generators;
pub mod losses;
pub mod models;
pub mod numkernel;
pub mod perturb;

pub use binio::write_atomic;
pub use error::{Error, Result};
