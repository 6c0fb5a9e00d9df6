//! File formats, image codecs, the HTTP service and the command-line front
//! end for the `egomosaic-core` pipeline.

pub mod cli;
pub mod export;
pub mod imaging;
pub mod parallel;
pub mod pipeline;
pub mod service;
pub mod session_io;
