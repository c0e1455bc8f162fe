//! Post-segmentation analysis: connected components, grouping, identity
//! tracking, false-positive filters, filament length, flare importance and
//! eruption detection.

mod components;
mod engine;
mod eruption;
mod filters;
mod flare;
mod group;
mod pixels;
mod record;
mod skeleton;
mod track;

pub use components::{connected_components, extract_components, Component};
pub use engine::{EventEngine, EventParams, FrameInput, FrameOutput};
pub use eruption::{detect_eruptions, EruptionParams, EruptionReport};
pub use filters::{compactness, filter_false_filaments, sunspot_halo, FilamentFilter};
pub use flare::{classify_flare, corrected_area_msh, FlareReport, Importance, IMPORTANCE_THRESHOLDS, MSH_PER_SQ_DEG};
pub use group::{group_components, ComponentGroup};
pub use pixels::{BBox, PixelSet, Run};
pub use record::{read_records, EventKind, EventRecord};
pub use skeleton::{length_double_sweep, length_floyd_warshall, skeleton_length, skeletonize, FLOYD_WARSHALL_MAX_NODES};
pub use track::{track_ids, EventTrack, HistoryFrame, IdAllocator, TrackFrame, TrackHistory, TrackStatus};
