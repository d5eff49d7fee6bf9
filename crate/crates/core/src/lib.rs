//! Simulation and inversion toolkit for coded-exposure compressive video.
//!
//! A moving binary mask modulates `n_t` high-speed frames which a detector
//! integrates into one gray-scale snapshot. Reconstruction runs spike-and-slab
//! variational Bayesian inference over hybrid 3D wavelet/DCT coefficients
//! coupled by a parent-child tree across scales. Color sequences pass through
//! a Bayer mosaic, are inverted per channel, and demosaicked afterwards.

pub mod bayer;
pub mod error;
pub mod forward;
pub mod operator;
pub mod transforms;
pub mod tree;
pub mod vb;
pub mod video;

pub use error::{Error, Result};
pub use forward::{MaskPattern, MaskStack, Measurement, NoiseModel, ShiftSchedule};
pub use operator::{CsOperator, DenseOperator, PsiOperator};
pub use transforms::{Basis1D, Transform3D, WaveletVariant};
pub use tree::{build_tree, TreeIndex, TreeLayout, TreeLayoutKind};
pub use vb::{HyperParams, InferenceOptions, InferenceResult, TauUpdateMode, VBState};
pub use video::{BayerLayout, ColorVideo, MosaicImage, PsnrReport, VideoCube};
