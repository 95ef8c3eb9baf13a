//! Numerical laboratory for convex-integration stages of isometric embeddings.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod corpus;
pub mod decomp;
pub mod error;
pub mod field;
pub mod linalg;
pub mod mollify;
pub mod frame;
pub mod kallen;
pub mod perturb;
pub mod stage;

pub use error::{Error, Result};
pub use field::{FieldKind, GridField, GridSpec, MetricField};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/fields.md")]
    mod fields {}
    #[doc = include_str!("../../../book/src/schedule.md")]
    mod schedule {}
    #[doc = include_str!("../../../book/src/decomposition.md")]
    mod decomposition {}
    #[doc = include_str!("../../../book/src/frames.md")]
    mod frames {}
    #[doc = include_str!("../../../book/src/kallen.md")]
    mod kallen {}
    #[doc = include_str!("../../../book/src/mollify.md")]
    mod mollify {}
    #[doc = include_str!("../../../book/src/stages.md")]
    mod stages {}
}
