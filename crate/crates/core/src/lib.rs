//! Detection, segmentation and tracking of solar flares and filaments in
//! H-alpha full-disk image sequences.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod classmodel;
pub mod config;
pub mod error;
pub mod eval;
pub mod events;
pub mod imgio;
pub mod linalg;
pub mod par;
pub mod pipeline;
pub mod preprocess;
pub mod segment;
pub mod synth;
pub mod varsolve;

pub use error::{Error, Result};
pub use par::Exec;

use chrono::{DateTime, SecondsFormat, Utc};

/// RFC 3339 UTC rendering used by every text output.
pub fn rfc3339(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}
