use crate::geom::{closest_point_on_triangle, ray_triangle, RayHit, P3, V3};

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: P3,
    pub max: P3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: P3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: P3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a P3>) -> Self {
        let mut b = Aabb::empty();
        for p in pts {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &P3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb { min: self.min.inf(&o.min), max: self.max.sup(&o.max) }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    pub fn extents(&self) -> V3 {
        self.max - self.min
    }

    pub fn center(&self) -> P3 {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn diagonal(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.extents().norm()
        }
    }

    pub fn padded(&self, pad: f64) -> Aabb {
        let d = V3::repeat(pad);
        Aabb { min: self.min - d, max: self.max + d }
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        self.min.x <= o.max.x
            && o.min.x <= self.max.x
            && self.min.y <= o.max.y
            && o.min.y <= self.max.y
            && self.min.z <= o.max.z
            && o.min.z <= self.max.z
    }

    pub fn contains(&self, p: &P3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn distance_squared(&self, p: &P3) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let v = if p[i] < self.min[i] {
                self.min[i] - p[i]
            } else if p[i] > self.max[i] {
                p[i] - self.max[i]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Slab test; returns the entry parameter if the ray hits within `[tmin, tmax]`.
    pub fn ray_entry(&self, orig: &P3, dir: &V3, tmin: f64, tmax: f64) -> Option<f64> {
        let mut lo = tmin;
        let mut hi = tmax;
        for i in 0..3 {
            if dir[i].abs() < 1e-300 {
                if orig[i] < self.min[i] || orig[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[i];
            let mut t0 = (self.min[i] - orig[i]) * inv;
            let mut t1 = (self.max[i] - orig[i]) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            lo = lo.max(t0);
            hi = hi.min(t1);
            if lo > hi {
                return None;
            }
        }
        Some(lo)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bbox: Aabb, start: usize, count: usize },
    Inner { bbox: Aabb, left: usize, right: usize },
}

impl Node {
    fn bbox(&self) -> &Aabb {
        match self {
            Node::Leaf { bbox, .. } | Node::Inner { bbox, .. } => bbox,
        }
    }
}

/// Bounding volume hierarchy over a triangle soup; triangle ids are the input order.
#[derive(Debug, Clone)]
pub struct Bvh {
    tris: Vec<[P3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn new(tris: Vec<[P3; 3]>) -> Self {
        let mut order: Vec<usize> = (0..tris.len()).collect();
        let mut nodes = Vec::new();
        if !tris.is_empty() {
            let centroids: Vec<P3> = tris.iter().map(|t| P3::from((t[0].coords + t[1].coords + t[2].coords) / 3.0)).collect();
            let n = order.len();
            build(&tris, &centroids, &mut order, 0, n, &mut nodes);
        }
        Bvh { tris, order, nodes }
    }

    pub fn len(&self) -> usize {
        self.tris.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    pub fn triangle(&self, id: usize) -> &[P3; 3] {
        &self.tris[id]
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes.first().map(|n| *n.bbox()).unwrap_or_else(Aabb::empty)
    }

    /// Closest surface point: `(triangle id, point, squared distance)`.
    pub fn closest_point(&self, p: &P3) -> Option<(usize, P3, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, P3, f64)> = None;
        let mut best_d = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bbox().distance_squared(p) > best_d {
                continue;
            }
            match node {
                Node::Leaf { start, count, .. } => {
                    for &id in &self.order[*start..start + count] {
                        let t = &self.tris[id];
                        let q = closest_point_on_triangle(p, &t[0], &t[1], &t[2]);
                        let d = (q - p).norm_squared();
                        if d < best_d {
                            best_d = d;
                            best = Some((id, q, d));
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bbox().distance_squared(p);
                    let dr = self.nodes[*right].bbox().distance_squared(p);
                    // visit the nearer child first
                    if dl < dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        best
    }

    /// Calls `f` for every triangle hit with `t` in `[tmin, tmax]`.
    pub fn for_each_hit(&self, orig: &P3, dir: &V3, tmin: f64, tmax: f64, mut f: impl FnMut(usize, RayHit)) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bbox().ray_entry(orig, dir, tmin, tmax).is_none() {
                continue;
            }
            match node {
                Node::Leaf { start, count, .. } => {
                    for &id in &self.order[*start..start + count] {
                        let t = &self.tris[id];
                        if let Some(h) = ray_triangle(orig, dir, &t[0], &t[1], &t[2]) {
                            if h.t >= tmin && h.t <= tmax {
                                f(id, h);
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
    }

    /// Nearest hit with `t` in `[tmin, tmax]`.
    pub fn first_hit(&self, orig: &P3, dir: &V3, tmin: f64, tmax: f64) -> Option<(usize, RayHit)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, RayHit)> = None;
        let mut limit = tmax;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bbox().ray_entry(orig, dir, tmin, limit).is_none() {
                continue;
            }
            match node {
                Node::Leaf { start, count, .. } => {
                    for &id in &self.order[*start..start + count] {
                        let t = &self.tris[id];
                        if let Some(h) = ray_triangle(orig, dir, &t[0], &t[1], &t[2]) {
                            let better = match &best {
                                None => true,
                                Some((bid, bh)) => h.t < bh.t || (h.t == bh.t && id < *bid),
                            };
                            if h.t >= tmin && h.t <= limit && better {
                                limit = h.t;
                                best = Some((id, h));
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
        best
    }

    /// Calls `f` with every triangle whose box overlaps `query`.
    pub fn for_each_overlap(&self, query: &Aabb, mut f: impl FnMut(usize)) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if !node.bbox().overlaps(query) {
                continue;
            }
            match node {
                Node::Leaf { start, count, .. } => {
                    for &id in &self.order[*start..start + count] {
                        if Aabb::from_points(self.tris[id].iter()).overlaps(query) {
                            f(id);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
    }
}

fn build(tris: &[[P3; 3]], centroids: &[P3], order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let mut bbox = Aabb::empty();
    let mut cbox = Aabb::empty();
    for &id in &order[start..end] {
        for p in &tris[id] {
            bbox.grow(p);
        }
        cbox.grow(&centroids[id]);
    }
    let idx = nodes.len();
    let count = end - start;
    if count <= LEAF_SIZE {
        nodes.push(Node::Leaf { bbox, start, count });
        return idx;
    }
    let ext = cbox.extents();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = start + count / 2;
    order[start..end].select_nth_unstable_by(count / 2, |a, b| centroids[*a][axis].total_cmp(&centroids[*b][axis]).then(a.cmp(b)));
    nodes.push(Node::Leaf { bbox, start, count });
    let left = build(tris, centroids, order, start, mid, nodes);
    let right = build(tris, centroids, order, mid, end, nodes);
    nodes[idx] = Node::Inner { bbox, left, right };
    idx
}
