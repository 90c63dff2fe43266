//! Bounding-volume hierarchy over scene triangles.
//!
//! Built top-down with binned surface-area splits. Traversal returns exactly
//! the triangle an exhaustive search would pick: minimum distance, ties broken
//! by lowest triangle index. Node boxes are padded slightly so rounding in the
//! slab test can never cull a triangle the exact test would hit.

use super::{Hit, Ray, Scene};
use crate::geometry::{Aabb, Vec3};

const MAX_LEAF: usize = 4;
const BINS: usize = 12;
const STACK_DEPTH: usize = 96;
/// Past this depth splits fall back to the median, bounding tree height.
const SAH_MAX_DEPTH: usize = 48;

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Aabb,
    /// Leaf: first entry in `order`. Interior: index of the right child
    /// (the left child always follows its parent).
    offset: u32,
    /// Number of triangles for a leaf, zero for an interior node.
    count: u32,
}

/// Immutable spatial index; shareable across tracer threads.
#[derive(Debug, Clone)]
pub struct AccelIndex {
    nodes: Vec<Node>,
    order: Vec<u32>,
    triangle_count: usize,
}

struct BuildItem {
    bounds: Aabb,
    centroid: Vec3,
    index: u32,
}

fn pad(b: Aabb) -> Aabb {
    let e = b.extent();
    let scale = e.x.abs().max(e.y.abs()).max(e.z.abs());
    let m = b.min.x.abs().max(b.min.y.abs()).max(b.min.z.abs());
    let n = b.max.x.abs().max(b.max.y.abs()).max(b.max.z.abs());
    b.inflated(1e-9 * (scale + m.max(n)) + 1e-12)
}

impl AccelIndex {
    pub fn build(scene: &Scene) -> AccelIndex {
        let mut items: Vec<BuildItem> = scene
            .triangles
            .iter()
            .enumerate()
            .map(|(i, t)| BuildItem {
                bounds: t.bounds(),
                centroid: t.centroid(),
                index: i as u32,
            })
            .collect();
        let mut index = AccelIndex {
            nodes: Vec::with_capacity(2 * items.len().max(1)),
            order: Vec::with_capacity(items.len()),
            triangle_count: items.len(),
        };
        if !items.is_empty() {
            index.build_node(&mut items, 0);
        }
        index
    }

    pub fn triangle_count(&self) -> usize {
        self.triangle_count
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn push_leaf(&mut self, bounds: Aabb, items: &[BuildItem]) {
        self.nodes.push(Node {
            bounds: pad(bounds),
            offset: self.order.len() as u32,
            count: items.len() as u32,
        });
        self.order.extend(items.iter().map(|it| it.index));
    }

    fn build_node(&mut self, items: &mut [BuildItem], depth: usize) {
        let bounds = items
            .iter()
            .fold(Aabb::EMPTY, |acc, it| acc.union(&it.bounds));
        if items.len() <= MAX_LEAF {
            self.push_leaf(bounds, items);
            return;
        }
        let mut cb = Aabb::EMPTY;
        for it in items.iter() {
            cb.grow(it.centroid);
        }
        let ext = cb.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        if ext[axis] <= 0.0 {
            // All centroids coincide; split by position in the list.
            let mid = items.len() / 2;
            self.push_interior(bounds, items, mid, depth);
            return;
        }

        let lo = cb.min[axis];
        let scale = BINS as f64 / ext[axis];
        let bin_of = |c: Vec3| (((c[axis] - lo) * scale) as usize).min(BINS - 1);
        let mut bin_bounds = [Aabb::EMPTY; BINS];
        let mut bin_count = [0usize; BINS];
        for it in items.iter() {
            let b = bin_of(it.centroid);
            bin_bounds[b] = bin_bounds[b].union(&it.bounds);
            bin_count[b] += 1;
        }
        // Sweep from the right to get suffix areas, then evaluate splits.
        let mut right_area = [0.0f64; BINS];
        let mut right_n = [0usize; BINS];
        let mut acc = Aabb::EMPTY;
        let mut n = 0;
        for b in (1..BINS).rev() {
            acc = acc.union(&bin_bounds[b]);
            n += bin_count[b];
            right_area[b] = acc.surface_area();
            right_n[b] = n;
        }
        let mut best = (f64::INFINITY, 0usize);
        let mut acc = Aabb::EMPTY;
        let mut n = 0;
        for split in 1..BINS {
            acc = acc.union(&bin_bounds[split - 1]);
            n += bin_count[split - 1];
            if n == 0 || right_n[split] == 0 {
                continue;
            }
            let cost = acc.surface_area() * n as f64 + right_area[split] * right_n[split] as f64;
            if cost < best.0 {
                best = (cost, split);
            }
        }
        let mid = if best.0.is_finite() && depth < SAH_MAX_DEPTH {
            partition(items, |it| bin_of(it.centroid) < best.1)
        } else {
            0
        };
        let mid = if mid == 0 || mid == items.len() {
            let mid = items.len() / 2;
            items.select_nth_unstable_by(mid, |a, b| a.centroid[axis].total_cmp(&b.centroid[axis]));
            mid
        } else {
            mid
        };
        self.push_interior(bounds, items, mid, depth);
    }

    fn push_interior(&mut self, bounds: Aabb, items: &mut [BuildItem], mid: usize, depth: usize) {
        let me = self.nodes.len();
        self.nodes.push(Node {
            bounds: pad(bounds),
            offset: 0,
            count: 0,
        });
        let (left, right) = items.split_at_mut(mid);
        self.build_node(left, depth + 1);
        self.nodes[me].offset = self.nodes.len() as u32;
        self.build_node(right, depth + 1);
    }

    /// Nearest hit beyond the self-intersection epsilon, if any.
    pub fn intersect_first(&self, scene: &Scene, ray: &Ray) -> Option<Hit> {
        self.intersect_within(scene, ray, f64::INFINITY)
    }

    /// Like [`intersect_first`](Self::intersect_first) but ignores hits at or
    /// beyond `t_max`.
    pub fn intersect_within(&self, scene: &Scene, ray: &Ray, t_max: f64) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        debug_assert_eq!(scene.triangles.len(), self.triangle_count);
        let inv = Vec3::new(
            1.0 / ray.direction.x,
            1.0 / ray.direction.y,
            1.0 / ray.direction.z,
        );
        let mut best_t = t_max;
        let mut best_i = u32::MAX;
        let mut stack = [0u32; STACK_DEPTH];
        let mut sp = 0usize;
        let mut node_i = 0u32;
        loop {
            let node = &self.nodes[node_i as usize];
            if node.count > 0 {
                let start = node.offset as usize;
                for &ti in &self.order[start..start + node.count as usize] {
                    if let Some(t) = scene.triangles[ti as usize].intersect(ray) {
                        if t < best_t || (t == best_t && best_i != u32::MAX && ti < best_i) {
                            best_t = t;
                            best_i = ti;
                        }
                    }
                }
            } else {
                let left = node_i + 1;
                let right = node.offset;
                let tl = self.nodes[left as usize]
                    .bounds
                    .ray_entry(ray.origin, inv, best_t);
                let tr = self.nodes[right as usize]
                    .bounds
                    .ray_entry(ray.origin, inv, best_t);
                match (tl, tr) {
                    (Some(a), Some(b)) => {
                        let (near, far) = if a <= b { (left, right) } else { (right, left) };
                        assert!(sp < STACK_DEPTH, "bvh deeper than traversal stack");
                        stack[sp] = far;
                        sp += 1;
                        node_i = near;
                        continue;
                    }
                    (Some(_), None) => {
                        node_i = left;
                        continue;
                    }
                    (None, Some(_)) => {
                        node_i = right;
                        continue;
                    }
                    (None, None) => {}
                }
            }
            // Pop, re-checking against the (possibly shrunk) best distance.
            loop {
                if sp == 0 {
                    return (best_i != u32::MAX)
                        .then(|| Hit::new(scene, ray, best_i as usize, best_t));
                }
                sp -= 1;
                let cand = stack[sp];
                if self.nodes[cand as usize]
                    .bounds
                    .ray_entry(ray.origin, inv, best_t)
                    .is_some()
                {
                    node_i = cand;
                    break;
                }
            }
        }
    }
}

fn partition<T>(items: &mut [T], pred: impl Fn(&T) -> bool) -> usize {
    let mut next = 0;
    for i in 0..items.len() {
        if pred(&items[i]) {
            items.swap(i, next);
            next += 1;
        }
    }
    next
}
