//! Layer-wise CKA similarity between neural networks, diagonal box similarity
//! (DBS), and the analyses relating network similarity to how well adversarial
//! attacks transfer between networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: activation dumps (NPY), manifests, attack tables, similarity matrices
//! - [`cka`]: linear CKA and layer-pair similarity matrices
//! - [`dbs`]: Bresenham diagonal trace and the box-union score
//! - [`scores`]: per-network-pair scores and their CSV
//! - [`aggregate`]: descriptive statistics over layer and pair scores
//! - [`correlation`]: Pearson, Spearman, Kendall tau-b, distance correlation
//! - [`features`], [`tree`]: attack subsets, feature assembly and CART regression
//! - [`pipeline`]: the batch commands behind the `netsim` binary

pub mod aggregate;
pub mod cka;
pub mod correlation;
pub mod data;
pub mod dbs;
pub mod error;
pub mod features;
pub mod pipeline;
pub mod scores;
pub mod tree;

pub use error::{Error, Result};
