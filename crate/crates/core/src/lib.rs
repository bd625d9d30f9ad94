//! Intrusion detection with a deep belief network.
//!
//! Records from KDDcup 1999, NSL-KDD or UNSW-NB15 are encoded
//! ([`dataset`]), reduced with PCA ([`pca`]), fed through a GRBM and a stack
//! of RBMs pretrained with contrastive divergence ([`energy`], [`dbn`]) and
//! classified by a softmax head fine-tuned with back-propagation. [`metrics`]
//! scores predictions and [`pipeline`] ties the stages into the `train`,
//! `eval`, `detect` and `project` commands.

pub mod dataset;
pub mod dbn;
pub mod energy;
pub mod metrics;
pub mod pca;
pub mod pipeline;
