//! Depth from dual-pixel imagery, end to end on synthetic scenes.
//!
//! A dual-pixel (DP) sensor splits each pixel in half so that the two halves
//! integrate light over opposite halves of the lens aperture. The pair acts
//! as a tiny-baseline stereo camera whose disparity is proportional to defocus
//! blur, which ties it to scene depth only up to an unknown affine transform
//! of inverse depth when the lens parameters are unknown. This crate builds
//! the whole computational chain around that ambiguity:
//!
//! - [`optics`] — thin-lens DP image formation and a layered-scene renderer
//!   that doubles as the test-data factory (5-view rig + DP pair + ground truth).
//! - [`warp`] — depth-induced projective warping with analytic depth gradients.
//! - [`losses`] — photometric penalties and view-supervision losses with
//!   none / scale / affine invariance (least-squares assisted and folded-latent).
//! - [`metrics`] — affine-invariant evaluation: AIWE(p), weighted Spearman,
//!   percentile-anchored WRMSE.
//! - [`mvs`] — plane-sweep stereo ground-truth pipeline with guided bilateral
//!   cost aggregation and cross-view consistency confidence.
//! - [`net`], [`optim`], [`train`] — a small convolutional predictor with
//!   hand-derived backpropagation, Adam, and the training loop.
//!
//! Heavy per-pixel loops run data-parallel over rows via rayon when the
//! `parallel` feature is enabled (default); results are bit-identical to the
//! sequential path because every reduction uses a fixed order.

pub mod camera;
pub mod depth;
pub mod error;
pub mod exec;
pub mod gradcheck;
pub mod grid;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod mvs;
pub mod net;
pub mod optics;
pub mod optim;
pub mod synth;
pub mod train;
pub mod warp;

pub use error::{Error, Result};
pub use grid::{RasterImage, ScalarGrid};
