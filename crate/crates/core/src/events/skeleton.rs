use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::pixels::PixelSet;

/// Node count above which the all-pairs search gives way to a double
/// shortest-path sweep.
pub const FLOYD_WARSHALL_MAX_NODES: usize = 1500;

/// Guo–Hall parallel thinning with two alternating subiterations.
pub fn skeletonize(set: &PixelSet) -> PixelSet {
    let Some(bb) = set.bbox() else {
        return PixelSet::default();
    };
    let w = bb.width() as usize + 2;
    let h = bb.height() as usize + 2;
    let mut img = vec![false; w * h];
    for (x, y) in set.iter() {
        img[(y - bb.y0 + 1) as usize * w + (x - bb.x0 + 1) as usize] = true;
    }
    let mut marked = Vec::new();
    loop {
        let mut changed = false;
        for iter in 0..2 {
            marked.clear();
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let i = y * w + x;
                    if !img[i] {
                        continue;
                    }
                    let p2 = img[i - w] as u8;
                    let p3 = img[i - w + 1] as u8;
                    let p4 = img[i + 1] as u8;
                    let p5 = img[i + w + 1] as u8;
                    let p6 = img[i + w] as u8;
                    let p7 = img[i + w - 1] as u8;
                    let p8 = img[i - 1] as u8;
                    let p9 = img[i - w - 1] as u8;
                    let c = ((p2 ^ 1) & (p3 | p4)) + ((p4 ^ 1) & (p5 | p6)) + ((p6 ^ 1) & (p7 | p8)) + ((p8 ^ 1) & (p9 | p2));
                    let n1 = (p9 | p2) + (p3 | p4) + (p5 | p6) + (p7 | p8);
                    let n2 = (p2 | p3) + (p4 | p5) + (p6 | p7) + (p8 | p9);
                    let n = n1.min(n2);
                    let m = if iter == 0 { (p6 | p7 | (p9 ^ 1)) & p8 } else { (p2 | p3 | (p5 ^ 1)) & p4 };
                    if c == 1 && (2..=3).contains(&n) && m == 0 {
                        marked.push(i);
                    }
                }
            }
            for &i in &marked {
                img[i] = false;
            }
            changed |= !marked.is_empty();
        }
        if !changed {
            break;
        }
    }
    PixelSet::from_pixels((0..w * h).filter(|&i| img[i]).map(|i| {
        ((i % w) as u32 + bb.x0 - 1, (i / w) as u32 + bb.y0 - 1)
    }))
}

/// Path length as counts of axis and diagonal steps; compared by value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Steps {
    axis: u32,
    diag: u32,
}

impl Steps {
    const ZERO: Steps = Steps { axis: 0, diag: 0 };
    const INF: Steps = Steps {
        axis: u32::MAX,
        diag: u32::MAX,
    };

    fn value(self) -> f64 {
        self.axis as f64 + self.diag as f64 * std::f64::consts::SQRT_2
    }

    fn add(self, o: Steps) -> Steps {
        if self == Steps::INF || o == Steps::INF {
            return Steps::INF;
        }
        Steps {
            axis: self.axis + o.axis,
            diag: self.diag + o.diag,
        }
    }
}

impl PartialOrd for Steps {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Steps {
    fn cmp(&self, other: &Self) -> Ordering {
        match (*self == Steps::INF, *other == Steps::INF) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            _ => self.value().total_cmp(&other.value()).then((self.axis, self.diag).cmp(&(other.axis, other.diag))),
        }
    }
}

struct Graph {
    adj: Vec<Vec<(usize, Steps)>>,
}

fn build_graph(set: &PixelSet) -> Graph {
    let pixels: Vec<(u32, u32)> = set.iter().collect();
    let index = |x: i64, y: i64| -> Option<usize> {
        if x < 0 || y < 0 {
            return None;
        }
        pixels.binary_search_by(|&(px, py)| (py, px).cmp(&(y as u32, x as u32))).ok()
    };
    let adj = pixels
        .iter()
        .map(|&(x, y)| {
            let mut out = Vec::with_capacity(8);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    if let Some(j) = index(x as i64 + dx, y as i64 + dy) {
                        let s = if dx != 0 && dy != 0 {
                            Steps { axis: 0, diag: 1 }
                        } else {
                            Steps { axis: 1, diag: 0 }
                        };
                        out.push((j, s));
                    }
                }
            }
            out
        })
        .collect();
    Graph { adj }
}

/// Diameter of the 8-neighbor skeleton graph (axis edges 1, diagonal
/// edges √2): exhaustive all-pairs for small graphs, double sweep otherwise.
pub fn skeleton_length(skeleton: &PixelSet) -> f64 {
    let n = skeleton.area();
    if n <= FLOYD_WARSHALL_MAX_NODES {
        length_floyd_warshall(skeleton)
    } else {
        length_double_sweep(skeleton)
    }
}

/// Longest shortest path by Floyd–Warshall; disconnected pairs are ignored.
pub fn length_floyd_warshall(skeleton: &PixelSet) -> f64 {
    let g = build_graph(skeleton);
    let n = g.adj.len();
    if n < 2 {
        return 0.0;
    }
    let mut d = vec![Steps::INF; n * n];
    for i in 0..n {
        d[i * n + i] = Steps::ZERO;
        for &(j, s) in &g.adj[i] {
            d[i * n + j] = s;
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            if dik == Steps::INF {
                continue;
            }
            for j in 0..n {
                let cand = dik.add(d[k * n + j]);
                if cand < d[i * n + j] {
                    d[i * n + j] = cand;
                }
            }
        }
    }
    d.into_iter().filter(|s| *s != Steps::INF).max().unwrap_or(Steps::ZERO).value()
}

/// Two Dijkstra sweeps per connected piece: from any node to its farthest
/// node, then from there. Exact on trees.
pub fn length_double_sweep(skeleton: &PixelSet) -> f64 {
    let g = build_graph(skeleton);
    let n = g.adj.len();
    let mut seen = vec![false; n];
    let mut best = Steps::ZERO;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let first = dijkstra(&g, start);
        for (i, d) in first.iter().enumerate() {
            if *d != Steps::INF {
                seen[i] = true;
            }
        }
        let far = farthest(&first, start);
        let second = dijkstra(&g, far);
        let other = farthest(&second, far);
        best = best.max(second[other]);
    }
    best.value()
}

fn farthest(d: &[Steps], fallback: usize) -> usize {
    let mut idx = fallback;
    for (i, s) in d.iter().enumerate() {
        if *s != Steps::INF && *s > d[idx] {
            idx = i;
        }
    }
    idx
}

fn dijkstra(g: &Graph, src: usize) -> Vec<Steps> {
    let mut dist = vec![Steps::INF; g.adj.len()];
    let mut heap = BinaryHeap::new();
    dist[src] = Steps::ZERO;
    heap.push(std::cmp::Reverse((Steps::ZERO, src)));
    while let Some(std::cmp::Reverse((d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, s) in &g.adj[u] {
            let nd = d.add(s);
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(std::cmp::Reverse((nd, v)));
            }
        }
    }
    dist
}
