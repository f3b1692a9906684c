//! Clustering-as-attention toolkit.
//!
//! * [`linalg`]: dense matrices, softmax, position tables and grid seeding.
//! * [`em`]: EM / Lloyd clustering with dot-product similarity.
//! * [`attention`]: vanilla, cluster-softmax, hard and recurrent
//!   cross-attention, the residual decoder stack, analytic gradients and
//!   flop accounting.
//! * [`dreamy`]: query initialisation from a class memory bank, from
//!   position-embedded features, or from an image grid.
//! * [`superpixel`]: image IO, Lab features, grid-seeded clustering into
//!   superpixels, connectivity repair, ASA/CO metrics and a SLIC baseline.

pub mod attention;
pub mod dreamy;
pub mod em;
pub mod error;
pub mod ffn;
pub mod linalg;
pub mod superpixel;
pub mod weights;

pub use error::{Error, Result};
