use super::components::Component;
use super::pixels::PixelSet;
use crate::classmodel::Class;

/// Components of one class and frame that belong to the same object.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentGroup {
    pub class: Class,
    pub members: Vec<Component>,
    pub pixels: PixelSet,
}

impl ComponentGroup {
    pub fn area(&self) -> usize {
        self.pixels.area()
    }

    pub fn centroid(&self) -> (f64, f64) {
        self.pixels.centroid()
    }
}

/// Single-linkage grouping: components closer than `max_dist` (minimum
/// pixel-to-pixel distance, strict) end up in the same group. Groups are
/// ordered by their first pixel in raster order.
pub fn group_components(components: &[Component], max_dist: f64) -> Vec<ComponentGroup> {
    let n = components.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if components[i].bbox.gap(&components[j].bbox) >= max_dist {
                continue;
            }
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b && components[i].pixels.distance_below(&components[j].pixels, max_dist).is_some() {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut buckets: Vec<Vec<Component>> = vec![Vec::new(); n];
    for (i, c) in components.iter().enumerate() {
        let r = find(&mut parent, i);
        buckets[r].push(c.clone());
    }
    let mut groups: Vec<ComponentGroup> = buckets
        .into_iter()
        .filter(|b| !b.is_empty())
        .map(|mut members| {
            members.sort_by_key(|c| c.pixels.first());
            let pixels = members.iter().fold(PixelSet::default(), |acc, c| acc.union(&c.pixels));
            ComponentGroup {
                class: members[0].class,
                members,
                pixels,
            }
        })
        .collect();
    groups.sort_by_key(|g| g.pixels.first().map(|(x, y)| (y, x)));
    groups
}
