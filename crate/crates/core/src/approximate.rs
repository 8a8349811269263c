//! Turning fine input structures into coarse, foldable papermeshes.
//!
//! The pipeline is: wrap the structure's bounding box in a fine triangle grid,
//! shrink every grid vertex onto the structure surface, then decimate with a
//! volume-preserving edge-collapse cost until the face budget is met.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::Serialize;

use crate::geom::{self, tri_normal, P3, V3};
use crate::mesh::{Aabb, MeshError, TriMesh};

/// Default upper bound on papermesh faces.
pub const DEFAULT_FACE_BUDGET: usize = 150;
/// Default fine grid size for the bounding-box wrap.
pub const DEFAULT_FINE_FACES: usize = 3000;
/// Outward inflation per retry, as a fraction of the bounding diagonal.
pub const INFLATION_STEP: f64 = 0.01;
pub const MAX_RETRIES: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum ApproxError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("decimation stalled at {reached} faces, target {target}")]
    Budget { reached: usize, target: usize },
    #[error("approximation of `{source_id}` failed after {retries} retries: {reason}")]
    Approximation { source_id: String, retries: usize, reason: String },
}

/// A closed, manifold, genus-0 low-poly twin of one input structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Papermesh {
    pub mesh: TriMesh,
    pub source_id: String,
    pub face_budget: usize,
}

/// Size summary reported per structure.
#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct MeshStats {
    pub vertices: usize,
    pub faces: usize,
}

impl From<&TriMesh> for MeshStats {
    fn from(m: &TriMesh) -> Self {
        MeshStats { vertices: m.vertex_count(), faces: m.face_count() }
    }
}

/// Triangulated bounding box of `input` with between `target_fine_faces` and
/// `1.2 * target_fine_faces` faces (whenever such a grid exists).
pub fn wrap_subdivide(input: &TriMesh, target_fine_faces: usize) -> Result<TriMesh, ApproxError> {
    if target_fine_faces < 12 {
        return Err(ApproxError::Degenerate(format!("target {target_fine_faces} below the 12-face minimum")));
    }
    let bb = input.aabb();
    if bb.is_empty() {
        return Err(ApproxError::Degenerate("empty input".into()));
    }
    let e = bb.extents();
    let diag = e.norm();
    if (0..3).any(|i| e[i] <= 1e-12 * diag.max(1e-300)) {
        return Err(ApproxError::Degenerate(format!("bounding box has a zero extent: {e:?}")));
    }
    let (nx, ny, nz) = choose_grid(&e, target_fine_faces);
    Ok(grid_box(&bb, [nx, ny, nz]))
}

fn grid_faces(n: [usize; 3]) -> usize {
    4 * (n[0] * n[1] + n[1] * n[2] + n[2] * n[0])
}

fn aspect(e: &V3, n: [usize; 3]) -> f64 {
    let h = [e.x / n[0] as f64, e.y / n[1] as f64, e.z / n[2] as f64];
    h.iter().cloned().fold(0.0, f64::max) / h.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn choose_grid(e: &V3, target: usize) -> (usize, usize, usize) {
    let t = target as f64;
    let hi = (1.2 * t).floor() as usize;
    let mut best: Option<([usize; 3], f64)> = None;
    let consider = |n: [usize; 3], best: &mut Option<([usize; 3], f64)>| {
        let f = grid_faces(n);
        if f < target || f > hi {
            return;
        }
        let a = aspect(e, n);
        let better = match best {
            None => true,
            Some((bn, ba)) => a < *ba - 1e-12 || ((a - *ba).abs() <= 1e-12 && grid_faces(n) < grid_faces(*bn)),
        };
        if better {
            *best = Some((n, a));
        }
    };
    let nmax = (hi / 4).max(1);
    for nx in 1..=nmax {
        for ny in 1..=nmax {
            if 4 * nx * ny > hi {
                break;
            }
            let s = (nx + ny) as f64;
            let base = (nx * ny) as f64;
            let lo_z = ((t / 4.0 - base) / s).ceil().max(1.0) as usize;
            let hi_z = ((hi as f64 / 4.0 - base) / s).floor();
            if hi_z < 1.0 {
                continue;
            }
            let hi_z = hi_z as usize;
            if lo_z > hi_z {
                continue;
            }
            // ideal nz makes the z cell size match the mean of the x/y cell sizes
            let h = ((e.x / nx as f64) * (e.y / ny as f64)).sqrt();
            let ideal = (e.z / h).round().max(1.0) as usize;
            for nz in [lo_z, hi_z, ideal.clamp(lo_z, hi_z)] {
                consider([nx, ny, nz], &mut best);
            }
        }
    }
    if let Some((n, _)) = best {
        return (n[0], n[1], n[2]);
    }
    // No grid lands inside the window; take the smallest one above the target.
    let mut fallback = [1, 1, 1];
    let mut fb = usize::MAX;
    for nx in 1..=nmax.max(2) {
        for ny in 1..=nmax.max(2) {
            for nz in 1..=nmax.max(2) {
                let f = grid_faces([nx, ny, nz]);
                if f >= target && (f < fb || (f == fb && aspect(e, [nx, ny, nz]) < aspect(e, fallback))) {
                    fb = f;
                    fallback = [nx, ny, nz];
                }
            }
        }
    }
    (fallback[0], fallback[1], fallback[2])
}

fn grid_box(bb: &Aabb, n: [usize; 3]) -> TriMesh {
    let e = bb.extents();
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vid = |c: [usize; 3], vertices: &mut Vec<P3>| -> usize {
        *index.entry(c).or_insert_with(|| {
            vertices.push(P3::new(
                bb.min.x + e.x * c[0] as f64 / n[0] as f64,
                bb.min.y + e.y * c[1] as f64 / n[1] as f64,
                bb.min.z + e.z * c[2] as f64 / n[2] as f64,
            ));
            vertices.len() - 1
        })
    };
    let mut faces = Vec::new();
    for axis in 0..3 {
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, n[axis]] {
            let mut outward = V3::zeros();
            outward[axis] = if side == 0 { -1.0 } else { 1.0 };
            for u in 0..n[b] {
                for v in 0..n[c] {
                    let at = |du: usize, dv: usize| {
                        let mut k = [0; 3];
                        k[axis] = side;
                        k[b] = u + du;
                        k[c] = v + dv;
                        k
                    };
                    let q = [
                        vid(at(0, 0), &mut vertices),
                        vid(at(1, 0), &mut vertices),
                        vid(at(1, 1), &mut vertices),
                        vid(at(0, 1), &mut vertices),
                    ];
                    for tri in [[q[0], q[1], q[2]], [q[0], q[2], q[3]]] {
                        let nrm = tri_normal(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
                        faces.push(if nrm.dot(&outward) < 0.0 { [tri[0], tri[2], tri[1]] } else { tri });
                    }
                }
            }
        }
    }
    TriMesh::from_raw(vertices, faces)
}

/// Moves every wrap vertex to its closest point on the target surface.
pub fn shrink_wrap(wrap: &TriMesh, target: &TriMesh) -> TriMesh {
    let bvh = target.bvh();
    let verts: Vec<P3> = wrap.vertices().par_iter().map(|p| bvh.closest_point(p).map(|(_, q, _)| q).unwrap_or(*p)).collect();
    wrap.with_vertices(verts)
}

#[derive(Clone, Copy)]
struct Candidate {
    cost: f64,
    u: usize,
    v: usize,
    ver_u: u32,
    ver_v: u32,
    pos: P3,
}

impl PartialEq for Candidate {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Candidate {
    fn cmp(&self, o: &Self) -> Ordering {
        // min-heap on cost, deterministic tie-break on vertex ids
        o.cost.total_cmp(&self.cost).then_with(|| (o.u, o.v).cmp(&(self.u, self.v)))
    }
}

struct Decimator {
    pos: Vec<P3>,
    faces: Vec<[usize; 3]>,
    alive: Vec<bool>,
    vfaces: Vec<Vec<usize>>,
    version: Vec<u32>,
    live_faces: usize,
    area_eps: f64,
    isect_eps: f64,
}

impl Decimator {
    fn new(mesh: &TriMesh) -> Self {
        let mut vfaces = vec![Vec::new(); mesh.vertex_count()];
        for (fi, f) in mesh.faces().iter().enumerate() {
            for &v in f {
                vfaces[v].push(fi);
            }
        }
        let diag = mesh.diagonal().max(1e-300);
        Decimator {
            pos: mesh.vertices().to_vec(),
            faces: mesh.faces().to_vec(),
            alive: vec![true; mesh.face_count()],
            vfaces,
            version: vec![0; mesh.vertex_count()],
            live_faces: mesh.face_count(),
            area_eps: 1e-12 * diag * diag,
            isect_eps: 1e-12 * diag,
        }
    }

    fn neighbors(&self, v: usize) -> HashSet<usize> {
        let mut s = HashSet::new();
        for &f in &self.vfaces[v] {
            for &w in &self.faces[f] {
                if w != v {
                    s.insert(w);
                }
            }
        }
        s
    }

    /// Optimal position and cost for collapsing `u`-`v`, or `None` if no finite solution.
    fn plan(&self, u: usize, v: usize) -> Option<(P3, f64)> {
        let origin = nalgebra::center(&self.pos[u], &self.pos[v]);
        let rel = |i: usize| self.pos[i] - origin;
        let mut h = nalgebra::Matrix3::<f64>::zeros();
        let mut b = V3::zeros();
        let mut g = V3::zeros();
        let mut vol_before = 0.0;
        let mut norm_sum = 0.0;
        let mut n_terms = 0usize;
        let mut star: Vec<usize> = self.vfaces[u].clone();
        for &f in &self.vfaces[v] {
            if !star.contains(&f) {
                star.push(f);
            }
        }
        for &f in &star {
            let face = self.faces[f];
            let (a, bb, c) = (rel(face[0]), rel(face[1]), rel(face[2]));
            vol_before += a.dot(&bb.cross(&c)) / 6.0;
            let has_u = face.contains(&u);
            let has_v = face.contains(&v);
            if has_u && has_v {
                continue;
            }
            let x = if has_u { u } else { v };
            let k = face.iter().position(|&w| w == x).unwrap();
            let (p1, p2) = (rel(face[(k + 1) % 3]), rel(face[(k + 2) % 3]));
            let xr = rel(x);
            g += p1.cross(&p2) / 6.0;
            let n = (p1 - xr).cross(&(p2 - xr));
            h += n * n.transpose();
            b += n * n.dot(&xr);
            norm_sum += n.norm();
            n_terms += 1;
        }
        if n_terms == 0 {
            return None;
        }
        let mean = norm_sum / n_terms as f64;
        let reg = 1e-3 * mean * mean;
        // regularizer pulls toward the edge midpoint (the local origin)
        h += nalgebra::Matrix3::identity() * reg;
        let p = if g.norm() > 1e-12 * mean.max(1e-300) {
            let mut m = Matrix4::zeros();
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(h * 2.0));
            m.fixed_view_mut::<3, 1>(0, 3).copy_from(&g);
            m.fixed_view_mut::<1, 3>(3, 0).copy_from(&g.transpose());
            let rhs = Vector4::new(2.0 * b.x, 2.0 * b.y, 2.0 * b.z, vol_before);
            m.lu().solve(&rhs).map(|s| V3::new(s.x, s.y, s.z))?
        } else {
            h.lu().solve(&b)?
        };
        if !p.iter().all(|c| c.is_finite()) {
            return None;
        }
        let cost = (p.transpose() * h * p)[0] - 2.0 * b.dot(&p) + {
            // constant part of the quadric so the cost is the actual squared error
            let mut c = 0.0;
            for &f in &star {
                let face = self.faces[f];
                let has_u = face.contains(&u);
                let has_v = face.contains(&v);
                if has_u && has_v {
                    continue;
                }
                let x = if has_u { u } else { v };
                let k = face.iter().position(|&w| w == x).unwrap();
                let (p1, p2) = (rel(face[(k + 1) % 3]), rel(face[(k + 2) % 3]));
                let xr = rel(x);
                let n = (p1 - xr).cross(&(p2 - xr));
                c += n.dot(&xr).powi(2);
            }
            c
        };
        Some((origin + p, cost.max(0.0)))
    }

    fn push_edges_of(&self, v: usize, heap: &mut BinaryHeap<Candidate>) {
        for w in self.neighbors(v) {
            let (a, b) = (v.min(w), v.max(w));
            if let Some((pos, cost)) = self.plan(a, b) {
                heap.push(Candidate { cost, u: a, v: b, ver_u: self.version[a], ver_v: self.version[b], pos });
            }
        }
    }

    fn legal(&self, u: usize, v: usize, p: &P3) -> bool {
        if self.live_faces <= 4 {
            return false;
        }
        let nu = self.neighbors(u);
        let nv = self.neighbors(v);
        if !nu.contains(&v) {
            return false;
        }
        let common: Vec<usize> = nu.intersection(&nv).copied().collect();
        if common.len() != 2 {
            return false;
        }
        // opposite vertices of valence 3 would leave a doubled face
        if common.iter().any(|&w| self.neighbors(w).len() <= 3) {
            return false;
        }
        let mut new_faces: Vec<(usize, [usize; 3])> = Vec::new();
        let mut touched: HashSet<usize> = HashSet::new();
        for &f in self.vfaces[u].iter().chain(self.vfaces[v].iter()) {
            if !touched.insert(f) {
                continue;
            }
            let face = self.faces[f];
            if face.contains(&u) && face.contains(&v) {
                continue;
            }
            let old = tri_normal(&self.pos[face[0]], &self.pos[face[1]], &self.pos[face[2]]);
            let moved = face.map(|w| if w == u || w == v { u } else { w });
            let pts = moved.map(|w| if w == u { *p } else { self.pos[w] });
            let newn = tri_normal(&pts[0], &pts[1], &pts[2]);
            if newn.norm() <= self.area_eps {
                return false;
            }
            if old.norm() > self.area_eps && newn.dot(&old) < 0.0 {
                return false;
            }
            new_faces.push((f, moved));
        }
        // self-intersection of the new fan against the rest of the surface
        let pts_of = |face: &[usize; 3]| face.map(|w| if w == u { *p } else { self.pos[w] });
        let mut fan_box = Aabb::empty();
        for (_, nf) in &new_faces {
            for q in pts_of(nf) {
                fan_box.grow(&q);
            }
        }
        let fan_box = fan_box.padded(self.isect_eps);
        for (i, (fi, nf)) in new_faces.iter().enumerate() {
            let tri = pts_of(nf);
            let tb = Aabb::from_points(tri.iter()).padded(self.isect_eps);
            for (_, other) in new_faces.iter().skip(i + 1) {
                let ot = pts_of(other);
                if tb.overlaps(&Aabb::from_points(ot.iter())) && tris_clash(nf, &tri, other, &ot, self.isect_eps) {
                    return false;
                }
            }
            for g in 0..self.faces.len() {
                if !self.alive[g] || touched.contains(&g) || g == *fi {
                    continue;
                }
                let gf = self.faces[g];
                let gt = [self.pos[gf[0]], self.pos[gf[1]], self.pos[gf[2]]];
                let gb = Aabb::from_points(gt.iter());
                if !gb.overlaps(&fan_box) || !gb.overlaps(&tb) {
                    continue;
                }
                let gf_mapped = gf.map(|w| if w == v { u } else { w });
                if tris_clash(nf, &tri, &gf_mapped, &gt, self.isect_eps) {
                    return false;
                }
            }
        }
        true
    }

    fn collapse(&mut self, u: usize, v: usize, p: P3) -> Vec<usize> {
        let vf = std::mem::take(&mut self.vfaces[v]);
        for &f in &vf {
            if !self.alive[f] {
                continue;
            }
            if self.faces[f].contains(&u) {
                self.alive[f] = false;
                self.live_faces -= 1;
                for &w in &self.faces[f] {
                    if w != v {
                        self.vfaces[w].retain(|&x| x != f);
                    }
                }
            } else {
                for w in self.faces[f].iter_mut() {
                    if *w == v {
                        *w = u;
                    }
                }
                self.vfaces[u].push(f);
            }
        }
        self.pos[u] = p;
        let ring: Vec<usize> = self.neighbors(u).into_iter().collect();
        self.version[u] += 1;
        self.version[v] += 1;
        for &w in &ring {
            self.version[w] += 1;
        }
        ring
    }

    fn into_mesh(self) -> TriMesh {
        let faces = self.faces.iter().zip(&self.alive).filter(|(_, a)| **a).map(|(f, _)| *f).collect();
        TriMesh::from_raw(self.pos, faces).compacted()
    }
}

fn tris_clash(fa: &[usize; 3], ta: &[P3; 3], fb: &[usize; 3], tb: &[P3; 3], eps: f64) -> bool {
    let shared = fa.iter().filter(|w| fb.contains(w)).count();
    if shared == 0 {
        geom::triangles_intersect(ta, tb, eps)
    } else {
        geom::triangles_intersect(&geom::shrink_triangle(ta, 1e-6), &geom::shrink_triangle(tb, 1e-6), eps)
    }
}

/// Edge-collapse decimation with a volume-preserving placement and cost.
///
/// Each collapse places the merged vertex so the enclosed volume is unchanged and
/// the sum of squared swept tetrahedron volumes is minimal. Collapses that would
/// break manifoldness, flip a face by more than 90 degrees, or create a
/// self-intersection are rejected.
pub fn decimate(mesh: &TriMesh, target_faces: usize) -> Result<TriMesh, ApproxError> {
    mesh.require_closed()?;
    let target = target_faces.max(4);
    if mesh.face_count() <= target {
        return Ok(mesh.clone());
    }
    let mut d = Decimator::new(mesh);
    let mut heap = BinaryHeap::new();
    for &(a, b) in mesh.edge_faces().keys() {
        if let Some((pos, cost)) = d.plan(a, b) {
            heap.push(Candidate { cost, u: a, v: b, ver_u: 0, ver_v: 0, pos });
        }
    }
    while d.live_faces > target {
        let Some(c) = heap.pop() else { break };
        if c.ver_u != d.version[c.u] || c.ver_v != d.version[c.v] {
            continue;
        }
        if !d.legal(c.u, c.v, &c.pos) {
            continue;
        }
        let ring = d.collapse(c.u, c.v, c.pos);
        d.push_edges_of(c.u, &mut heap);
        for w in ring {
            d.push_edges_of(w, &mut heap);
        }
    }
    let reached = d.live_faces;
    if reached as f64 > 1.5 * target as f64 {
        return Err(ApproxError::Budget { reached, target });
    }
    Ok(d.into_mesh())
}

/// Checks every papermesh invariant: closed, manifold, oriented, genus 0, within
/// budget, free of self-intersections.
pub fn validate_papermesh(mesh: &TriMesh, face_budget: usize) -> Result<(), String> {
    mesh.require_closed().map_err(|e| e.to_string())?;
    match mesh.euler_genus() {
        Ok(0) => {}
        Ok(g) => return Err(format!("genus {g}")),
        Err(e) => return Err(e.to_string()),
    }
    if mesh.face_count() > face_budget {
        return Err(format!("{} faces exceed the budget of {face_budget}", mesh.face_count()));
    }
    if mesh.self_intersects() {
        return Err("self-intersecting".into());
    }
    Ok(())
}

fn inflate(mesh: &TriMesh, fallback_normals: &[V3], amount: f64) -> TriMesh {
    let normals = mesh.vertex_normals();
    let verts = mesh
        .vertices()
        .iter()
        .zip(normals.iter().zip(fallback_normals))
        .map(|(p, (n, fb))| if n.norm() > 0.5 { p + n * amount } else { p + fb * amount })
        .collect();
    mesh.with_vertices(verts)
}

/// Full conversion: wrap, shrink, decimate, validate; retries with outward inflation.
pub fn make_papermesh(input: &TriMesh, source_id: &str, fine_faces: usize, face_budget: usize) -> Result<Papermesh, ApproxError> {
    input.require_closed()?;
    let wrap = wrap_subdivide(input, fine_faces)?;
    let box_normals = wrap.vertex_normals();
    let shrunk = shrink_wrap(&wrap, input);
    let diag = input.diagonal();
    let mut reason = String::new();
    for attempt in 0..=MAX_RETRIES {
        let candidate = if attempt == 0 { shrunk.clone() } else { inflate(&shrunk, &box_normals, attempt as f64 * INFLATION_STEP * diag) };
        let result =
            decimate(&candidate, face_budget).map_err(|e| e.to_string()).and_then(|m| validate_papermesh(&m, face_budget).map(|_| m));
        match result {
            Ok(mesh) => return Ok(Papermesh { mesh, source_id: source_id.to_string(), face_budget }),
            Err(e) => reason = e,
        }
    }
    Err(ApproxError::Approximation { source_id: source_id.to_string(), retries: MAX_RETRIES, reason })
}

/// Symmetric Hausdorff distance estimated from `n` surface samples on each side.
pub fn hausdorff_sampled(a: &TriMesh, b: &TriMesh, n: usize, seed: u64) -> f64 {
    let one_way = |x: &TriMesh, y: &TriMesh, s: u64| x.sample_surface(n, s).par_iter().map(|p| y.distance_to(p)).reduce(|| 0.0, f64::max);
    let vx = a.vertices().iter().map(|p| b.distance_to(p)).fold(0.0, f64::max);
    let vy = b.vertices().iter().map(|p| a.distance_to(p)).fold(0.0, f64::max);
    one_way(a, b, seed).max(one_way(b, a, seed ^ 0x9e37)).max(vx).max(vy)
}
