//! Linear emotion space (LES) engine for facial action unit time series.
//!
//! * [`ingest`] parses OpenFace AU CSVs and labeled JSON-lines catalogs.
//! * [`les`] builds and splits the 41-coordinate LES vectors.
//! * [`stats`] fits dataset statistics and the 22 anchor vectors, and hosts
//!   the outlier, isolation and clustering diagnostics.
//! * [`injector`] edits vectors toward an emotion level or an AU bias.
//! * [`cdan`] is the two-level cross-dimension attention net mapping LES
//!   vectors and 3DMM expression coefficients to new coefficients.
//! * [`cli`] wires the above into the `les` command.

pub mod au;
pub mod cdan;
pub mod cli;
pub mod ingest;
pub mod injector;
pub mod les;
pub mod stats;
pub mod synth;

pub use au::{AuFrame, AuSequence, Emotion, AU_COLUMNS, AU_COUNT};
pub use les::{ActVector, IsoVector, LesVector};
pub use stats::{DatasetStats, FeatureTable, Opt2Mode};

/// Text form used for every real written to CSV: 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}
