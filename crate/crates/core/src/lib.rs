// `!(a > b)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dist;
pub mod error;
pub mod fecheck;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod stats;
pub mod statverify;
pub mod symcone;
pub mod transform;

pub use error::{Error, Result};
