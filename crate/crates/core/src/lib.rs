//! Keyframe video summarization with a pair of co-regularized restricted
//! Boltzmann machines.
//!
//! A subject RBM and a scene RBM, each with `K` hidden units, are trained
//! concurrently on per-frame descriptors. Unit `k` of one model is pulled
//! towards the sparsified activity of unit `k` of the other, so each unit
//! position ends up describing a subject together with the scenes it appears
//! in. A summary takes, for every unit, the frame with the largest blended
//! response.
//!
//! Modules:
//! - [`features`]: descriptor matrices, the `CRBF` file format, normalization
//!   and synthetic paired data.
//! - [`rbm`]: single-modality RBM, CD gradients and exact enumeration oracles.
//! - [`coreg`]: sparsification, the co-regularization penalty and paired training.
//! - [`summarizer`]: frame descriptor and keyframe selection.
//! - [`baselines`]: uniform sampling and k-means keyframes.
//! - [`viz`]: per-unit reports.

pub mod baselines;
pub mod coreg;
pub mod error;
pub mod features;
pub mod rbm;
pub mod summarizer;
pub mod viz;

pub use coreg::{train_pair, PairedModel, TrainConfig};
pub use error::{Error, Result};
pub use features::{read_features, write_features, FeatureMatrix, Modality};
pub use rbm::Rbm;
pub use summarizer::Summary;
