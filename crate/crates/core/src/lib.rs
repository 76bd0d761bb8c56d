//! Data-driven selection of achievable reference models and Loewner-based
//! controller identification from frequency-response samples.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod hardy;
pub mod io;
pub mod lddc;
mod linalg;
pub mod models;
pub mod plants;
pub mod refmodel;

pub use models::{
    combine, logspace, CombineOp, DescriptorModel, FrequencyResponseData, ModelError,
    RationalModel, C64,
};
