use chrono::{DateTime, Utc};

use super::pixels::{BBox, PixelSet, Run};
use crate::classmodel::Class;
use crate::segment::LabelMap;

/// One 8-connected region of a class mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub class: Class,
    pub pixels: PixelSet,
    pub bbox: BBox,
    pub centroid: (f64, f64),
    pub area: usize,
    pub frame_index: usize,
    pub timestamp: DateTime<Utc>,
}

impl Component {
    pub fn new(class: Class, pixels: PixelSet, frame_index: usize, timestamp: DateTime<Utc>) -> Self {
        let bbox = pixels.bbox().expect("component pixel sets are non-empty");
        Component {
            class,
            bbox,
            centroid: pixels.centroid(),
            area: pixels.area(),
            pixels,
            frame_index,
            timestamp,
        }
    }
}

/// 8-connected components of the `class` pixels of `map` with at least
/// `min_area` pixels, in raster order of their first pixel.
pub fn extract_components(map: &LabelMap, class: Class, min_area: usize) -> Vec<Component> {
    let mask: Vec<bool> = map.labels().iter().map(|&l| l == class.id()).collect();
    connected_components(&mask, map.width())
        .into_iter()
        .filter(|p| p.area() >= min_area.max(1))
        .map(|p| Component::new(class, p, map.frame_index(), map.timestamp()))
        .collect()
}

/// 8-connected components of a boolean mask via run union-find.
pub fn connected_components(mask: &[bool], width: usize) -> Vec<PixelSet> {
    let runs = PixelSet::from_mask(mask, width).runs().to_vec();
    let mut parent: Vec<usize> = (0..runs.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut prev_start = 0;
    let mut row_start = 0;
    for i in 0..runs.len() {
        if i > 0 && runs[i].y != runs[i - 1].y {
            prev_start = if runs[i].y == runs[i - 1].y + 1 { row_start } else { i };
            row_start = i;
        }
        let r = runs[i];
        for j in prev_start..row_start {
            let q = runs[j];
            if q.y + 1 != r.y {
                continue;
            }
            // 8-connectivity: runs touch if their spans overlap after widening by one.
            if q.x0 <= r.x1 && r.x0 <= q.x1 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<Run>> = Vec::new();
    let mut slot = vec![usize::MAX; runs.len()];
    for i in 0..runs.len() {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(runs[i]);
    }
    groups.into_iter().map(PixelSet::from_runs).collect()
}
