use std::collections::BTreeMap;

use chrono::{DateTime, Utc};

use super::components::extract_components;
use super::eruption::{detect_eruptions, EruptionParams};
use super::filters::{filter_false_filaments, FilamentFilter};
use super::flare::{classify_flare, corrected_area_msh, Importance, IMPORTANCE_THRESHOLDS};
use super::group::{group_components, ComponentGroup};
use super::pixels::PixelSet;
use super::record::EventRecord;
use super::skeleton::{skeleton_length, skeletonize};
use super::track::{track_ids, EventTrack, HistoryFrame, IdAllocator, TrackFrame, TrackHistory, TrackStatus};
use crate::classmodel::Class;
use crate::error::{Error, Result};
use crate::imgio::{DiskGeometry, FrameBuffer};
use crate::segment::LabelMap;

/// Tunables of the post-segmentation stage.
#[derive(Debug, Clone, PartialEq)]
pub struct EventParams {
    pub min_area: usize,
    pub group_dist_filament: f64,
    pub group_dist_flare: f64,
    pub vote_window: usize,
    pub filter: FilamentFilter,
    pub eruption: EruptionParams,
    pub importance_thresholds: [f64; 4],
    /// Flares below this importance are tracked but not reported.
    pub min_report_importance: Importance,
    /// Heliographic latitude of the disk center.
    pub b0_deg: f64,
}

impl Default for EventParams {
    fn default() -> Self {
        Self {
            min_area: 10,
            group_dist_filament: 25.0,
            group_dist_flare: 150.0,
            vote_window: 5,
            filter: FilamentFilter::default(),
            eruption: EruptionParams::default(),
            importance_thresholds: IMPORTANCE_THRESHOLDS,
            min_report_importance: Importance::One,
            b0_deg: 0.0,
        }
    }
}

/// Everything the event stage needs from one processed frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameInput<'a> {
    pub labels: &'a LabelMap,
    /// Registered intensities on the original (pre-normalization) scale.
    pub intensity: &'a FrameBuffer,
    pub geom: &'a DiskGeometry,
    /// Flare and plage pixels.
    pub bright: &'a [bool],
}

#[derive(Debug, Clone, Default)]
pub struct FrameOutput {
    pub records: Vec<EventRecord>,
    /// Filament pixels surviving the false-positive filters.
    pub filament_mask: Vec<bool>,
    pub filament_ids: Vec<u64>,
    pub flare_ids: Vec<u64>,
}

/// Sequential tracker turning label maps into event records.
#[derive(Debug, Clone)]
pub struct EventEngine {
    params: EventParams,
    ids: IdAllocator,
    filament_history: TrackHistory,
    flare_history: TrackHistory,
    tracks: BTreeMap<u64, EventTrack>,
    last_geom: Option<DiskGeometry>,
    last_time: Option<DateTime<Utc>>,
}

impl EventEngine {
    pub fn new(params: EventParams) -> Self {
        Self {
            filament_history: TrackHistory::new(params.vote_window),
            flare_history: TrackHistory::new(params.vote_window),
            params,
            ids: IdAllocator::new(),
            tracks: BTreeMap::new(),
            last_geom: None,
            last_time: None,
        }
    }

    pub fn params(&self) -> &EventParams {
        &self.params
    }

    pub fn tracks(&self) -> impl Iterator<Item = &EventTrack> {
        self.tracks.values()
    }

    pub fn process(&mut self, input: FrameInput<'_>) -> Result<FrameOutput> {
        let labels = input.labels;
        let (w, h) = (labels.width(), labels.height());
        if input.intensity.width() != w || input.intensity.height() != h || input.bright.len() != w * h {
            return Err(Error::DimensionMismatch("event stage inputs differ in size".into()));
        }
        if self.last_time.is_some_and(|t| labels.timestamp() <= t) {
            return Err(Error::InvalidFrame(format!("frame {} is not later than its predecessor", labels.frame_index())));
        }
        let p = &self.params;
        let min_area = p.min_area;
        let filaments = extract_components(labels, Class::Filament, min_area);
        let flares = extract_components(labels, Class::Flare, min_area);
        let sunspots = extract_components(labels, Class::Sunspot, min_area);

        let filament_groups = filter_false_filaments(
            group_components(&filaments, p.group_dist_filament),
            &sunspots,
            input.bright,
            w,
            h,
            &p.filter,
        );
        let flare_groups = group_components(&flares, p.group_dist_flare);

        let disk_mean = disk_mean(input.intensity, input.geom);
        let filament_ids = track_ids(filament_groups.iter().map(|g| &g.pixels), &self.filament_history, &mut self.ids);
        let flare_ids = track_ids(flare_groups.iter().map(|g| &g.pixels), &self.flare_history, &mut self.ids);

        let mut filament_mask = vec![false; w * h];
        for g in &filament_groups {
            g.pixels.paint(&mut filament_mask, w);
        }
        for (class, groups, ids) in [
            (Class::Filament, &filament_groups, &filament_ids),
            (Class::Flare, &flare_groups, &flare_ids),
        ] {
            for (g, &id) in groups.iter().zip(ids.iter()) {
                let frame = summarize(g, input, disk_mean, class == Class::Filament);
                self.tracks.entry(id).or_insert_with(|| EventTrack::new(id, class)).push(frame);
            }
        }
        self.filament_history.push(history(labels.frame_index(), &filament_groups, &filament_ids));
        self.flare_history.push(history(labels.frame_index(), &flare_groups, &flare_ids));

        let mut records = Vec::new();
        let ended: Vec<u64> = self
            .tracks
            .values()
            .filter(|t| t.class == Class::Flare && t.status == TrackStatus::Active && !self.flare_history.contains(t.id))
            .map(|t| t.id)
            .collect();
        for id in ended {
            records.extend(self.close_flare(id, input.geom));
        }
        let now = labels.timestamp();
        let eruptions = detect_eruptions(
            self.tracks.values_mut().filter(|t| t.class == Class::Filament),
            now,
            &self.params.eruption,
            input.geom,
            self.params.b0_deg,
        );
        records.extend(eruptions.iter().map(EventRecord::from));
        self.last_geom = Some(*input.geom);
        self.last_time = Some(now);
        Ok(FrameOutput {
            records,
            filament_mask,
            filament_ids,
            flare_ids,
        })
    }

    /// Closes all still-active flare tracks at the end of a sequence.
    pub fn finish(&mut self) -> Vec<EventRecord> {
        let Some(geom) = self.last_geom else {
            return Vec::new();
        };
        let open: Vec<u64> = self
            .tracks
            .values()
            .filter(|t| t.class == Class::Flare && t.status == TrackStatus::Active)
            .map(|t| t.id)
            .collect();
        open.into_iter().flat_map(|id| self.close_flare(id, &geom)).collect()
    }

    fn close_flare(&mut self, id: u64, geom: &DiskGeometry) -> Option<EventRecord> {
        let t = self.tracks.get_mut(&id)?;
        t.status = TrackStatus::Ended;
        match classify_flare(t, geom, self.params.b0_deg, &self.params.importance_thresholds) {
            Ok(r) if r.importance >= self.params.min_report_importance => Some(EventRecord::from(&r)),
            Ok(_) => None,
            Err(e) => {
                log::warn!("flare track {id} not reported: {e}");
                None
            }
        }
    }
}

fn history(frame_index: usize, groups: &[ComponentGroup], ids: &[u64]) -> HistoryFrame {
    HistoryFrame {
        frame_index,
        groups: ids.iter().copied().zip(groups.iter().map(|g| g.pixels.clone())).collect(),
    }
}

fn disk_mean(intensity: &FrameBuffer, geom: &DiskGeometry) -> f64 {
    let w = intensity.width();
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, &v) in intensity.data().iter().enumerate() {
        if geom.radial((i % w) as f64, (i / w) as f64) <= 1.0 {
            sum += v as f64;
            n += 1;
        }
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn mean_over(frame: &FrameBuffer, px: &PixelSet) -> f64 {
    let w = frame.width();
    let data = frame.data();
    let (sum, n) = px.iter().fold((0.0, 0usize), |(s, n), (x, y)| (s + data[y as usize * w + x as usize] as f64, n + 1));
    sum / n.max(1) as f64
}

fn summarize(g: &ComponentGroup, input: FrameInput<'_>, disk_mean: f64, filament: bool) -> TrackFrame {
    let centroid = g.centroid();
    let radial = input.geom.radial(centroid.0, centroid.1);
    let area = g.area();
    let mean = mean_over(input.intensity, &g.pixels);
    TrackFrame {
        frame_index: input.labels.frame_index(),
        timestamp: input.labels.timestamp(),
        area_px: area,
        centroid,
        radial,
        area_msh: corrected_area_msh(area as f64, radial, input.geom),
        mean_intensity: mean,
        rel_intensity: mean / disk_mean,
        length_px: filament.then(|| g.members.iter().map(|c| skeleton_length(&skeletonize(&c.pixels))).sum()),
    }
}
