use serde::{Deserialize, Serialize};

/// Half-open horizontal run `[x0, x1)` on row `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Run {
    pub y: u32,
    pub x0: u32,
    pub x1: u32,
}

/// Inclusive bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BBox {
    /// Smallest Euclidean distance any two pixels from the two boxes can have.
    pub fn gap(&self, other: &BBox) -> f64 {
        let dx = (other.x0 as i64 - self.x1 as i64).max(self.x0 as i64 - other.x1 as i64).max(0);
        let dy = (other.y0 as i64 - self.y1 as i64).max(self.y0 as i64 - other.y1 as i64).max(0);
        ((dx * dx + dy * dy) as f64).sqrt()
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0 + 1
    }
}

/// Run-length encoded pixel set with runs sorted by row then column and no
/// two runs overlapping or touching on the same row.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PixelSet {
    runs: Vec<Run>,
}

impl PixelSet {
    /// Builds a set from arbitrary runs, normalizing order and merging.
    pub fn from_runs(mut runs: Vec<Run>) -> Self {
        runs.retain(|r| r.x1 > r.x0);
        runs.sort_unstable();
        let mut out: Vec<Run> = Vec::with_capacity(runs.len());
        for r in runs {
            match out.last_mut() {
                Some(last) if last.y == r.y && r.x0 <= last.x1 => last.x1 = last.x1.max(r.x1),
                _ => out.push(r),
            }
        }
        PixelSet { runs: out }
    }

    pub fn from_pixels(pixels: impl IntoIterator<Item = (u32, u32)>) -> Self {
        PixelSet::from_runs(pixels.into_iter().map(|(x, y)| Run { y, x0: x, x1: x + 1 }).collect())
    }

    /// Set pixels of a row-major boolean mask.
    pub fn from_mask(mask: &[bool], width: usize) -> Self {
        let mut runs = Vec::new();
        for (y, row) in mask.chunks(width).enumerate() {
            let mut x = 0;
            while x < row.len() {
                if row[x] {
                    let start = x;
                    while x < row.len() && row[x] {
                        x += 1;
                    }
                    runs.push(Run {
                        y: y as u32,
                        x0: start as u32,
                        x1: x as u32,
                    });
                } else {
                    x += 1;
                }
            }
        }
        PixelSet { runs }
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn area(&self) -> usize {
        self.runs.iter().map(|r| (r.x1 - r.x0) as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.runs.iter().flat_map(|r| (r.x0..r.x1).map(move |x| (x, r.y)))
    }

    pub fn first(&self) -> Option<(u32, u32)> {
        self.runs.first().map(|r| (r.x0, r.y))
    }

    pub fn bbox(&self) -> Option<BBox> {
        let first = self.runs.first()?;
        let last = self.runs.last()?;
        let x0 = self.runs.iter().map(|r| r.x0).min()?;
        let x1 = self.runs.iter().map(|r| r.x1 - 1).max()?;
        Some(BBox {
            x0,
            y0: first.y,
            x1,
            y1: last.y,
        })
    }

    pub fn centroid(&self) -> (f64, f64) {
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut n = 0.0;
        for r in &self.runs {
            let len = (r.x1 - r.x0) as f64;
            sx += len * (r.x0 as f64 + r.x1 as f64 - 1.0) / 2.0;
            sy += len * r.y as f64;
            n += len;
        }
        (sx / n, sy / n)
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        let i = self.runs.partition_point(|r| (r.y, r.x1) <= (y, x));
        self.runs.get(i).is_some_and(|r| r.y == y && r.x0 <= x)
    }

    /// Number of pixels in both sets.
    pub fn overlap(&self, other: &PixelSet) -> usize {
        let (mut i, mut j) = (0, 0);
        let mut n = 0;
        while i < self.runs.len() && j < other.runs.len() {
            let (a, b) = (self.runs[i], other.runs[j]);
            if (a.y, a.x1) <= (b.y, b.x0) {
                i += 1;
                continue;
            }
            if (b.y, b.x1) <= (a.y, a.x0) {
                j += 1;
                continue;
            }
            n += (a.x1.min(b.x1) - a.x0.max(b.x0)) as usize;
            if a.x1 <= b.x1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        n
    }

    pub fn union(&self, other: &PixelSet) -> PixelSet {
        PixelSet::from_runs(self.runs.iter().chain(&other.runs).copied().collect())
    }

    /// Pixels with at least one 4-neighbor outside the set.
    pub fn boundary(&self) -> Vec<(u32, u32)> {
        self.iter()
            .filter(|&(x, y)| {
                x == 0
                    || y == 0
                    || !self.contains(x - 1, y)
                    || !self.contains(x + 1, y)
                    || !self.contains(x, y - 1)
                    || !self.contains(x, y + 1)
            })
            .collect()
    }

    /// Marks the set in a row-major mask.
    pub fn paint(&self, mask: &mut [bool], width: usize) {
        for r in &self.runs {
            let row = r.y as usize * width;
            mask[row + r.x0 as usize..row + r.x1 as usize].fill(true);
        }
    }

    /// Smallest Euclidean distance between a pixel of `self` and one of
    /// `other`, or `None` if it is at least `limit`.
    pub fn distance_below(&self, other: &PixelSet, limit: f64) -> Option<f64> {
        let (a, b) = (self.bbox()?, other.bbox()?);
        if a.gap(&b) >= limit {
            return None;
        }
        if self.overlap(other) > 0 {
            return Some(0.0);
        }
        let ea = self.boundary();
        let eb = other.boundary();
        let lim2 = limit * limit;
        let mut best = f64::INFINITY;
        for &(x, y) in &ea {
            for &(u, v) in &eb {
                let dx = x as f64 - u as f64;
                let dy = y as f64 - v as f64;
                let d2 = dx * dx + dy * dy;
                if d2 < best {
                    best = d2;
                }
            }
        }
        (best < lim2).then(|| best.sqrt())
    }
}
