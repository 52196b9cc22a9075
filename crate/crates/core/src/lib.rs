//! Full-reference quality assessment for transcoded user-generated video.
//!
//! The crate covers the whole workflow: synthesizing a
//! source → reference → transcode corpus, weak rank labels from a proxy metric
//! scored against pristine sources, Siamese training of a patch-quality
//! model, sequence-level pooling, inference and benchmark statistics.
//!
//! Scores produced by [`inference::score_sequence`] measure degradation of the
//! transcode relative to its reference: larger means worse.

pub mod aggregation;
pub mod calibration;
pub mod codec_pipeline;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod model;
pub mod plot;
pub mod proxy;
pub mod synthetic;
pub mod video_io;

mod checkpoint;
mod util;

pub use error::{Error, Result};
pub use video_io::{
    load_sequence, ChromaFormat, Lineage, Patch, PatchGeometry, PatchPairing, RawGeometry, Role,
    TileStride, VideoSequence,
};
