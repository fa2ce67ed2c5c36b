//! Unsupervised video object segmentation: per-frame spectral graph cuts
//! over appearance and optical-flow patch similarities, refined by a small
//! convolutional head trained for temporal consistency.
//!
//! The guide in `book/` walks through each stage.

pub mod error;
pub mod eval;
pub mod features;
pub mod flow;
pub mod graphcut;
pub mod netpbm;
pub mod pipeline;
pub mod refine;
pub mod rng;
pub mod synth;
pub mod video;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/flow.md")]
    mod flow {}
    #[doc = include_str!("../../../book/src/graphcut.md")]
    mod graphcut {}
    #[doc = include_str!("../../../book/src/refine.md")]
    mod refine {}
    #[doc = include_str!("../../../book/src/synth_eval.md")]
    mod synth_eval {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
