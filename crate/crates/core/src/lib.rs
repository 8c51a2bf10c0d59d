//! Random access simulation toolkit for LEO satellite links.
//!
//! The crate covers the whole chain from Zadoff-Chu preamble synthesis to
//! end-to-end 4-step RACH protocol metrics:
//!
//! - [`prach`]: preamble generation, multi-user multi-antenna reception and
//!   per-ZCZ correlation windows.
//! - [`channel`]: tapped-delay-line channel realizations and user geometry.
//! - [`net`]: the 1D-CNN early collision classifier, its training loop,
//!   dataset synthesis and evaluation.
//! - [`policy`]: Bayesian posterior over collision counts and the
//!   opportunistic Step-3 transmission probability.
//! - [`engine`]: discrete-event simulation of the random access procedure.
//! - [`cli`]: reproducible command-line orchestration.

pub mod channel;
pub mod cli;
pub mod engine;
pub mod net;
pub mod policy;
pub mod prach;
pub mod rng;

pub use num_complex::Complex64 as Cplx;
