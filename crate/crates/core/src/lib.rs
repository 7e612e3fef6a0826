//! Black-box importance maps by input partitioning.
//!
//! An input is split into parts (sliding windows or superpixels). Each part is
//! preserved on its own while everything else is replaced by a masking
//! background, the opaque model scores that majority-masked input, and the
//! per-part scores of the explained class are aggregated into a per-pixel map.
//!
//! This crate is `no_std` (it needs `alloc`) and holds every algorithm:
//! masking, both partition strategies, the three-plus-one superpixel
//! segmenters, the orchestration engine, token-level explanations and the
//! evaluation metrics. Anything touching files, processes or sockets lives in
//! the companion `pami` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

mod error;
mod hash;
mod math;

pub mod engine;
pub mod eval;
pub mod image;
pub mod masking;
pub mod scorer;
pub mod segment;
pub mod text;
pub mod window;

pub use crate::engine::{
    Engine, Explanation, ExplainOptions, RunReport, SegmentOptions, Sequential, Strategy,
    SweepRunner,
};
pub use crate::error::{EngineError, Error, PartContext, ScoreError};
pub use crate::eval::{GroundTruthRegion, InsertionResult, Pointing};
pub use crate::hash::fnv1a64;
pub use crate::image::{
    argmax_class, Image, ImportanceMap, PartMask, ScoreKind, ScoreVector, Segmentation,
};
pub use crate::masking::{MaskStyle, MaskVariant};
pub use crate::scorer::{BatchError, Scorer, TextScorer};
pub use crate::segment::{SegmentError, SegmenterConfig};
pub use crate::text::TokenSequence;
pub use crate::window::{WindowConfig, WindowShape};
