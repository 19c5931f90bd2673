//! Builds an image-text interleaved textbook corpus from instructional videos.

pub mod assembler;
pub mod clip_stage;
pub mod collection;
pub mod corpus;
pub mod demo;
pub mod error;
pub mod frame;
pub mod media;
pub mod metrics;
pub mod pipeline;
pub mod services;
pub mod util;
pub mod video_stage;

pub use error::{Error, Result};
