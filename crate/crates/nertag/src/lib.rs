//! File formats and command-line driver for the tagger in `nertag-core`.

pub mod checkpoint;
pub mod cli;
pub mod io;
