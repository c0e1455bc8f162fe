use std::collections::{BTreeMap, VecDeque};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::pixels::PixelSet;
use crate::classmodel::Class;

/// Monotone source of track ids, shared by every class.
#[derive(Debug, Clone, Default)]
pub struct IdAllocator {
    next: u64,
}

impl IdAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh(&mut self) -> u64 {
        self.next += 1;
        self.next
    }

    /// Number of ids handed out so far.
    pub fn issued(&self) -> u64 {
        self.next
    }
}

/// Tracked groups of one earlier frame.
#[derive(Debug, Clone, Default)]
pub struct HistoryFrame {
    pub frame_index: usize,
    pub groups: Vec<(u64, PixelSet)>,
}

/// Sliding window of the last `window` tracked frames of one class.
#[derive(Debug, Clone)]
pub struct TrackHistory {
    window: usize,
    frames: VecDeque<HistoryFrame>,
}

impl TrackHistory {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            frames: VecDeque::new(),
        }
    }

    pub fn frames(&self) -> impl Iterator<Item = &HistoryFrame> {
        self.frames.iter()
    }

    pub fn push(&mut self, frame: HistoryFrame) {
        self.frames.push_back(frame);
        while self.frames.len() > self.window {
            self.frames.pop_front();
        }
    }

    /// Whether `id` appears anywhere in the window.
    pub fn contains(&self, id: u64) -> bool {
        self.frames.iter().any(|f| f.groups.iter().any(|(i, _)| *i == id))
    }
}

/// Assigns ids to the current groups by pixel-overlap votes summed over the
/// history window. A group without votes, or one that loses a contested id
/// to a group with more votes, gets a fresh id.
pub fn track_ids<'a>(
    groups: impl IntoIterator<Item = &'a PixelSet>,
    history: &TrackHistory,
    ids: &mut IdAllocator,
) -> Vec<u64> {
    let groups: Vec<&PixelSet> = groups.into_iter().collect();
    let mut best: Vec<Option<(u64, usize)>> = Vec::with_capacity(groups.len());
    for g in &groups {
        let mut votes: BTreeMap<u64, usize> = BTreeMap::new();
        for frame in history.frames() {
            for (id, px) in &frame.groups {
                let n = g.overlap(px);
                if n > 0 {
                    *votes.entry(*id).or_default() += n;
                }
            }
        }
        let top = votes.into_iter().fold(None, |acc: Option<(u64, usize)>, (id, n)| match acc {
            Some((_, m)) if m >= n => acc,
            _ => Some((id, n)),
        });
        best.push(top);
    }
    let mut winner: BTreeMap<u64, usize> = BTreeMap::new();
    for (gi, b) in best.iter().enumerate() {
        if let Some((id, n)) = b {
            match winner.get(id) {
                Some(&other) if best[other].map(|b| b.1).unwrap_or(0) >= *n => {}
                _ => {
                    winner.insert(*id, gi);
                }
            }
        }
    }
    best.iter()
        .enumerate()
        .map(|(gi, b)| match b {
            Some((id, _)) if winner.get(id) == Some(&gi) => *id,
            _ => ids.fresh(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Active,
    Ended,
    Erupted,
}

/// Per-frame summary of a tracked group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFrame {
    pub frame_index: usize,
    pub timestamp: DateTime<Utc>,
    pub area_px: usize,
    pub centroid: (f64, f64),
    pub radial: f64,
    /// Foreshortening-corrected area in millionths of the hemisphere.
    pub area_msh: f64,
    /// Mean raw intensity over the group.
    pub mean_intensity: f64,
    /// Mean intensity relative to the mean on-disk intensity.
    pub rel_intensity: f64,
    /// Skeleton length, filaments only.
    pub length_px: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTrack {
    pub id: u64,
    pub class: Class,
    pub frames: Vec<TrackFrame>,
    pub status: TrackStatus,
}

impl EventTrack {
    pub fn new(id: u64, class: Class) -> Self {
        Self {
            id,
            class,
            frames: Vec::new(),
            status: TrackStatus::Active,
        }
    }

    pub fn first_seen(&self) -> Option<DateTime<Utc>> {
        self.frames.first().map(|f| f.timestamp)
    }

    pub fn last_seen(&self) -> Option<DateTime<Utc>> {
        self.frames.last().map(|f| f.timestamp)
    }

    pub fn last_frame(&self) -> Option<&TrackFrame> {
        self.frames.last()
    }

    pub fn peak_area_px(&self) -> usize {
        self.frames.iter().map(|f| f.area_px).max().unwrap_or(0)
    }

    pub fn peak_area_msh(&self) -> f64 {
        self.frames.iter().map(|f| f.area_msh).fold(0.0, f64::max)
    }

    pub fn peak_rel_intensity(&self) -> f64 {
        self.frames.iter().map(|f| f.rel_intensity).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index into `frames` of the brightest frame; earliest on ties.
    pub fn peak_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, f) in self.frames.iter().enumerate() {
            if best.is_none_or(|b| f.mean_intensity > self.frames[b].mean_intensity) {
                best = Some(i);
            }
        }
        best
    }

    pub fn push(&mut self, frame: TrackFrame) {
        debug_assert!(self.frames.last().is_none_or(|l| l.frame_index < frame.frame_index));
        self.frames.push(frame);
    }
}
