use super::components::Component;
use super::group::ComponentGroup;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilamentFilter {
    /// Distance from a sunspot border within which filaments are dropped.
    pub sunspot_border_px: f64,
    /// Round groups inside bright regions with compactness above this are dropped.
    pub compactness_max: f64,
}

impl Default for FilamentFilter {
    fn default() -> Self {
        Self {
            sunspot_border_px: 20.0,
            compactness_max: 0.6,
        }
    }
}

/// Fraction of the group inside the circle of equal area centered at the
/// group centroid.
pub fn compactness(group: &ComponentGroup) -> f64 {
    let area = group.area() as f64;
    let (cx, cy) = group.centroid();
    let r2 = area / std::f64::consts::PI;
    let inside = group
        .pixels
        .iter()
        .filter(|&(x, y)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r2)
        .count();
    inside as f64 / area
}

/// Mask of pixels within `radius` of any sunspot border pixel.
pub fn sunspot_halo(sunspots: &[Component], width: usize, height: usize, radius: f64) -> Vec<bool> {
    let mut mask = vec![false; width * height];
    let r = radius.max(0.0);
    let ri = r.floor() as i64;
    let offsets: Vec<(i64, i64)> = (-ri..=ri)
        .flat_map(|dy| (-ri..=ri).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64) <= r * r)
        .collect();
    for s in sunspots {
        for (x, y) in s.pixels.boundary() {
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < width && (ny as usize) < height {
                    mask[ny as usize * width + nx as usize] = true;
                }
            }
        }
    }
    mask
}

/// Drops filament groups near sunspots and round groups inside bright
/// (flare or plage) regions.
pub fn filter_false_filaments(
    filaments: Vec<ComponentGroup>,
    sunspots: &[Component],
    bright: &[bool],
    width: usize,
    height: usize,
    params: &FilamentFilter,
) -> Vec<ComponentGroup> {
    let halo = sunspot_halo(sunspots, width, height, params.sunspot_border_px);
    let hits = |mask: &[bool], g: &ComponentGroup| g.pixels.iter().any(|(x, y)| mask[y as usize * width + x as usize]);
    filaments
        .into_iter()
        .filter(|g| !hits(&halo, g))
        .filter(|g| !(hits(bright, g) && compactness(g) > params.compactness_max))
        .collect()
}
