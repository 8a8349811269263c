//! Indexed triangle meshes and the geometric queries used across the pipeline.
//!
//! Meshes are stored as an indexed face set with counter-clockwise outward winding.
//! Adjacency is rebuilt on demand; papermeshes stay in the low hundreds of faces, so
//! none of the queries here bother with incremental structures.

mod bvh;
pub mod io;
pub mod primitives;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::OnceLock;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::{self, segment_segment_distance, shrink_triangle, tri_normal, P3, V3};

pub use bvh::{Aabb, Bvh};

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("topology error: {0}")]
    Topology(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Absolute tolerance of the edge proximity test in [`boxes_intersect_edges`].
pub const EDGE_CONTACT_EPS: f64 = 1e-9;

/// Indexed triangle surface.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<P3>,
    faces: Vec<[usize; 3]>,
    bvh: OnceLock<Bvh>,
}

impl PartialEq for TriMesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.faces == other.faces
    }
}

/// Edge incidence summary of a mesh.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Topology {
    pub edges: usize,
    pub boundary_edges: usize,
    pub non_manifold_edges: usize,
    pub misoriented_edges: usize,
}

impl Topology {
    pub fn is_closed_manifold(&self) -> bool {
        self.boundary_edges == 0 && self.non_manifold_edges == 0
    }

    pub fn is_oriented(&self) -> bool {
        self.misoriented_edges == 0
    }
}

/// Volume, centroid and inertia tensor (about the centroid) at unit density.
#[derive(Debug, Clone, Copy)]
pub struct MassProperties {
    pub volume: f64,
    pub center: P3,
    pub inertia: Matrix3<f64>,
}

impl TriMesh {
    /// Builds a mesh, checking that every face references three distinct valid vertices.
    pub fn new(vertices: Vec<P3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let n = vertices.len();
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(MeshError::Topology(format!("face {i} references a vertex out of range")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::Topology(format!("face {i} repeats a vertex")));
            }
        }
        Ok(Self::from_raw(vertices, faces))
    }

    pub(crate) fn from_raw(vertices: Vec<P3>, faces: Vec<[usize; 3]>) -> Self {
        TriMesh { vertices, faces, bvh: OnceLock::new() }
    }

    pub fn vertices(&self) -> &[P3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face_points(&self, f: usize) -> [P3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unit outward normal (zero for degenerate faces).
    pub fn face_normal(&self, f: usize) -> V3 {
        let [a, b, c] = self.face_points(f);
        let n = tri_normal(&a, &b, &c);
        let l = n.norm();
        if l > 0.0 {
            n / l
        } else {
            V3::zeros()
        }
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_points(f);
        geom::tri_area(&a, &b, &c)
    }

    pub fn face_centroid(&self, f: usize) -> P3 {
        let [a, b, c] = self.face_points(f);
        geom::centroid(&a, &b, &c)
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    /// Bounding-box diagonal length.
    pub fn diagonal(&self) -> f64 {
        self.aabb().diagonal()
    }

    /// Lazily built triangle hierarchy; face ids are preserved.
    pub fn bvh(&self) -> &Bvh {
        self.bvh.get_or_init(|| Bvh::new((0..self.faces.len()).map(|f| self.face_points(f)).collect()))
    }

    /// Undirected edges `(min, max)` mapped to their incident faces, in sorted order.
    pub fn edge_faces(&self) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut m: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                m.entry((a.min(b), a.max(b))).or_default().push(fi);
            }
        }
        m
    }

    /// Directed half-edge `(from, to)` to face index.
    pub fn halfedge_faces(&self) -> HashMap<(usize, usize), usize> {
        let mut m = HashMap::with_capacity(self.faces.len() * 3);
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                m.insert((f[k], f[(k + 1) % 3]), fi);
            }
        }
        m
    }

    pub fn topology(&self) -> Topology {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                *directed.entry((f[k], f[(k + 1) % 3])).or_default() += 1;
            }
        }
        let mut t = Topology::default();
        for (e, fs) in self.edge_faces() {
            t.edges += 1;
            match fs.len() {
                1 => t.boundary_edges += 1,
                2 => {
                    let ab = directed.get(&(e.0, e.1)).copied().unwrap_or(0);
                    let ba = directed.get(&(e.1, e.0)).copied().unwrap_or(0);
                    if ab != 1 || ba != 1 {
                        t.misoriented_edges += 1;
                    }
                }
                _ => t.non_manifold_edges += 1,
            }
        }
        t
    }

    pub fn is_closed(&self) -> bool {
        !self.faces.is_empty() && self.topology().is_closed_manifold()
    }

    /// Errors unless the mesh is closed, edge-manifold and consistently oriented.
    pub fn require_closed(&self) -> Result<(), MeshError> {
        if self.faces.is_empty() {
            return Err(MeshError::Topology("empty mesh".into()));
        }
        let t = self.topology();
        if t.boundary_edges > 0 {
            return Err(MeshError::Topology(format!("mesh is open ({} boundary edges)", t.boundary_edges)));
        }
        if t.non_manifold_edges > 0 {
            return Err(MeshError::Topology(format!("{} non-manifold edges", t.non_manifold_edges)));
        }
        if t.misoriented_edges > 0 {
            return Err(MeshError::Topology(format!("{} inconsistently oriented edges", t.misoriented_edges)));
        }
        Ok(())
    }

    /// `V - E + F` counting only referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &v in f {
                used[v] = true;
            }
        }
        let v = used.iter().filter(|u| **u).count() as i64;
        let e = self.edge_faces().len() as i64;
        v - e + self.faces.len() as i64
    }

    /// Genus from the Euler characteristic, `(2 - (V - E + F)) / 2`.
    pub fn euler_genus(&self) -> Result<i64, MeshError> {
        let t = self.topology();
        if self.faces.is_empty() || !t.is_closed_manifold() {
            return Err(MeshError::Topology("genus is only defined for closed manifold meshes".into()));
        }
        Ok((2 - self.euler_characteristic()) / 2)
    }

    /// Enclosed volume by the divergence theorem; positive for outward winding.
    pub fn signed_volume(&self) -> Result<f64, MeshError> {
        if !self.is_closed() {
            return Err(MeshError::Topology("signed volume requires a closed mesh".into()));
        }
        // Translate to the box center so large offsets do not cost precision.
        let c = self.aabb().center();
        Ok(self
            .faces
            .iter()
            .map(|f| {
                let (a, b, d) = (self.vertices[f[0]] - c, self.vertices[f[1]] - c, self.vertices[f[2]] - c);
                a.dot(&b.cross(&d))
            })
            .sum::<f64>()
            / 6.0)
    }

    /// Volume, centroid and inertia at unit density via signed tetrahedra to a reference point.
    pub fn mass_properties(&self) -> Result<MassProperties, MeshError> {
        if !self.is_closed() {
            return Err(MeshError::Topology("mass properties require a closed mesh".into()));
        }
        let r = self.aabb().center();
        let canonical = Matrix3::new(2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0) / 120.0;
        let mut vol = 0.0;
        let mut first = V3::zeros();
        let mut cov = Matrix3::zeros();
        for f in &self.faces {
            let a = self.vertices[f[0]] - r;
            let b = self.vertices[f[1]] - r;
            let c = self.vertices[f[2]] - r;
            let det = a.dot(&b.cross(&c));
            let m = Matrix3::from_columns(&[a, b, c]);
            vol += det / 6.0;
            first += (a + b + c) * (det / 24.0);
            cov += m * canonical * m.transpose() * det;
        }
        if vol.abs() < 1e-12 {
            return Err(MeshError::Degenerate(format!("volume {vol:e} too small")));
        }
        let cm = first / vol;
        let cov_c = cov - cm * cm.transpose() * vol;
        let inertia = Matrix3::identity() * cov_c.trace() - cov_c;
        Ok(MassProperties { volume: vol, center: r + cm, inertia })
    }

    /// Volume-weighted centroid at uniform density.
    pub fn center_of_mass(&self) -> Result<P3, MeshError> {
        let v = self.signed_volume()?;
        if v.abs() < 1e-12 {
            return Err(MeshError::Degenerate(format!("volume {v:e} too small for a center of mass")));
        }
        Ok(self.mass_properties()?.center)
    }

    /// Ray-parity containment. Points on the surface count as inside.
    pub fn point_inside(&self, p: &P3) -> bool {
        if self.faces.is_empty() {
            return false;
        }
        let bvh = self.bvh();
        let diag = self.diagonal().max(1e-300);
        if let Some((_, _, d2)) = bvh.closest_point(p) {
            if d2.sqrt() <= 1e-9 * diag.max(1.0) {
                return true;
            }
        }
        let mut parity = false;
        for dir in RAY_DIRECTIONS.iter().take(8) {
            let mut count = 0usize;
            let mut grazing = false;
            bvh.for_each_hit(p, dir, 0.0, f64::INFINITY, |_, h| {
                if h.edge_margin() < 1e-9 || h.t <= 0.0 {
                    grazing = true;
                }
                count += 1;
            });
            parity = count % 2 == 1;
            if !grazing {
                return parity;
            }
        }
        parity
    }

    /// Same surface with every face reversed.
    pub fn flipped(&self) -> TriMesh {
        TriMesh::from_raw(self.vertices.clone(), self.faces.iter().map(|f| [f[0], f[2], f[1]]).collect())
    }

    pub fn map_vertices(&self, f: impl Fn(&P3) -> P3) -> TriMesh {
        TriMesh::from_raw(self.vertices.iter().map(f).collect(), self.faces.clone())
    }

    pub fn translated(&self, t: &V3) -> TriMesh {
        self.map_vertices(|p| p + t)
    }

    pub fn with_vertices(&self, vertices: Vec<P3>) -> TriMesh {
        assert_eq!(vertices.len(), self.vertices.len());
        TriMesh::from_raw(vertices, self.faces.clone())
    }

    /// Drops unreferenced vertices, keeping the relative order of the rest.
    pub fn compacted(&self) -> TriMesh {
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut verts = Vec::new();
        for f in &self.faces {
            for &v in f {
                if remap[v] == usize::MAX {
                    remap[v] = 0;
                }
            }
        }
        for (i, r) in remap.iter_mut().enumerate() {
            if *r == 0 {
                *r = verts.len();
                verts.push(self.vertices[i]);
            }
        }
        let faces = self.faces.iter().map(|f| [remap[f[0]], remap[f[1]], remap[f[2]]]).collect();
        TriMesh::from_raw(verts, faces)
    }

    /// Splits into edge-connected components.
    pub fn connected_components(&self) -> Vec<TriMesh> {
        let ef = self.edge_faces();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.faces.len()];
        for fs in ef.values() {
            for i in 0..fs.len() {
                for j in i + 1..fs.len() {
                    adj[fs[i]].push(fs[j]);
                    adj[fs[j]].push(fs[i]);
                }
            }
        }
        let mut comp = vec![usize::MAX; self.faces.len()];
        let mut out = Vec::new();
        for s in 0..self.faces.len() {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut faces = Vec::new();
            let mut q = VecDeque::from([s]);
            comp[s] = id;
            while let Some(f) = q.pop_front() {
                faces.push(self.faces[f]);
                for &g in &adj[f] {
                    if comp[g] == usize::MAX {
                        comp[g] = id;
                        q.push_back(g);
                    }
                }
            }
            out.push(TriMesh::from_raw(self.vertices.clone(), faces).compacted());
        }
        out
    }

    /// True if any two non-adjacent faces intersect, or adjacent faces fold onto each other.
    pub fn self_intersects(&self) -> bool {
        !self.self_intersecting_pairs(1).is_empty()
    }

    /// Up to `limit` intersecting face pairs (O(F^2) with box culling).
    pub fn self_intersecting_pairs(&self, limit: usize) -> Vec<(usize, usize)> {
        let n = self.faces.len();
        let scale = self.diagonal().max(1e-300);
        let eps = 1e-12 * scale;
        let boxes: Vec<Aabb> = (0..n).map(|f| Aabb::from_points(self.face_points(f).iter()).padded(eps)).collect();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if !boxes[i].overlaps(&boxes[j]) {
                    continue;
                }
                if faces_intersect(self, i, j, eps) {
                    out.push((i, j));
                    if out.len() >= limit {
                        return out;
                    }
                }
            }
        }
        out
    }

    /// Area-weighted random surface samples (deterministic in `seed`).
    pub fn sample_surface(&self, n: usize, seed: u64) -> Vec<P3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cdf = Vec::with_capacity(self.faces.len());
        let mut acc = 0.0;
        for f in 0..self.faces.len() {
            acc += self.face_area(f);
            cdf.push(acc);
        }
        (0..n)
            .map(|_| {
                let r = rng.gen::<f64>() * acc;
                let f = cdf.partition_point(|c| *c < r).min(self.faces.len() - 1);
                let [a, b, c] = self.face_points(f);
                let (mut u, mut v) = (rng.gen::<f64>(), rng.gen::<f64>());
                if u + v > 1.0 {
                    u = 1.0 - u;
                    v = 1.0 - v;
                }
                a + (b - a) * u + (c - a) * v
            })
            .collect()
    }

    /// Distance from `p` to the surface.
    pub fn distance_to(&self, p: &P3) -> f64 {
        self.bvh().closest_point(p).map(|(_, _, d)| d.sqrt()).unwrap_or(f64::INFINITY)
    }

    /// Merges mesh parts into one vertex/face buffer (no welding).
    pub fn concat(parts: &[&TriMesh]) -> TriMesh {
        let mut verts = Vec::new();
        let mut faces = Vec::new();
        for m in parts {
            let off = verts.len();
            verts.extend_from_slice(&m.vertices);
            faces.extend(m.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
        }
        TriMesh::from_raw(verts, faces)
    }

    /// Merges vertices closer than `tol`, dropping faces that collapse.
    pub fn welded(&self, tol: f64) -> TriMesh {
        let (verts, remap) = weld_points(&self.vertices, tol);
        let faces = self
            .faces
            .iter()
            .map(|f| [remap[f[0]], remap[f[1]], remap[f[2]]])
            .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
            .collect();
        TriMesh::from_raw(verts, faces)
    }

    /// Makes face orientation consistent per component and outward by volume sign.
    /// Fails if some component is non-orientable.
    pub fn orient_outward(&self) -> Result<TriMesh, MeshError> {
        let ef = self.edge_faces();
        let mut faces = self.faces.clone();
        let mut adj: Vec<Vec<(usize, (usize, usize))>> = vec![Vec::new(); faces.len()];
        for (e, fs) in &ef {
            if fs.len() == 2 {
                adj[fs[0]].push((fs[1], *e));
                adj[fs[1]].push((fs[0], *e));
            }
        }
        let has_dir = |f: &[usize; 3], a: usize, b: usize| (0..3).any(|k| f[k] == a && f[(k + 1) % 3] == b);
        let mut seen = vec![false; faces.len()];
        let mut components: Vec<Vec<usize>> = Vec::new();
        for s in 0..faces.len() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut q = VecDeque::from([s]);
            while let Some(f) = q.pop_front() {
                for &(g, (a, b)) in &adj[f] {
                    let f_ab = has_dir(&faces[f], a, b);
                    let g_ab = has_dir(&faces[g], a, b);
                    if seen[g] {
                        if f_ab == g_ab {
                            return Err(MeshError::Topology("non-orientable surface".into()));
                        }
                        continue;
                    }
                    if f_ab == g_ab {
                        faces[g].swap(1, 2);
                    }
                    seen[g] = true;
                    comp.push(g);
                    q.push_back(g);
                }
            }
            components.push(comp);
        }
        for comp in components {
            let vol: f64 = comp
                .iter()
                .map(|&f| {
                    let [a, b, c] = faces[f];
                    self.vertices[a].coords.dot(&self.vertices[b].coords.cross(&self.vertices[c].coords))
                })
                .sum();
            if vol < 0.0 {
                for f in comp {
                    faces[f].swap(1, 2);
                }
            }
        }
        Ok(TriMesh::from_raw(self.vertices.clone(), faces))
    }

    /// Unit vertex normals (area-weighted face normals).
    pub fn vertex_normals(&self) -> Vec<V3> {
        let mut n = vec![V3::zeros(); self.vertices.len()];
        for f in &self.faces {
            let fn_ = tri_normal(&self.vertices[f[0]], &self.vertices[f[1]], &self.vertices[f[2]]);
            for &v in f {
                n[v] += fn_;
            }
        }
        n.into_iter().map(|v| if v.norm() > 0.0 { v.normalize() } else { v }).collect()
    }
}

fn faces_intersect(m: &TriMesh, i: usize, j: usize, eps: f64) -> bool {
    let fi = m.faces[i];
    let fj = m.faces[j];
    let shared = fi.iter().filter(|v| fj.contains(v)).count();
    let (ti, tj) = (m.face_points(i), m.face_points(j));
    if shared == 0 {
        geom::triangles_intersect(&ti, &tj, eps)
    } else {
        // Adjacent faces always touch; shrinking separates legitimate contact
        // while fold-overs and crossings survive.
        geom::triangles_intersect(&shrink_triangle(&ti, 1e-6), &shrink_triangle(&tj, 1e-6), eps)
    }
}

/// Volume-weighted center of mass of several closed meshes.
pub fn combined_center_of_mass(meshes: &[&TriMesh]) -> Result<P3, MeshError> {
    let mut total = 0.0;
    let mut acc = V3::zeros();
    for m in meshes {
        let mp = m.mass_properties()?;
        total += mp.volume;
        acc += mp.center.coords * mp.volume;
    }
    if total.abs() < 1e-12 {
        return Err(MeshError::Degenerate("combined volume too small".into()));
    }
    Ok(P3::from(acc / total))
}

/// True iff some edge of `a` comes within [`EDGE_CONTACT_EPS`] of some edge of `b`.
/// Candidate pairs come from a sweep over edge bounding boxes.
pub fn boxes_intersect_edges(a: &TriMesh, b: &TriMesh) -> bool {
    let seg = |m: &TriMesh| -> Vec<(P3, P3, Aabb)> {
        m.edge_faces()
            .keys()
            .map(|&(u, v)| {
                let (p, q) = (m.vertices[u], m.vertices[v]);
                (p, q, Aabb::from_points([p, q].iter()).padded(EDGE_CONTACT_EPS))
            })
            .collect()
    };
    let mut ea = seg(a);
    let mut eb = seg(b);
    ea.sort_by(|x, y| x.2.min.x.total_cmp(&y.2.min.x));
    eb.sort_by(|x, y| x.2.min.x.total_cmp(&y.2.min.x));
    for (p, q, bx) in &ea {
        for (r, s, by) in &eb {
            if by.min.x > bx.max.x {
                break;
            }
            if bx.overlaps(by) && segment_segment_distance(p, q, r, s) < EDGE_CONTACT_EPS {
                return true;
            }
        }
    }
    false
}

fn weld_points(pts: &[P3], tol: f64) -> (Vec<P3>, Vec<usize>) {
    let cell = tol.max(1e-300);
    let key = |p: &P3| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let mut out: Vec<P3> = Vec::new();
    let mut remap = Vec::with_capacity(pts.len());
    for p in pts {
        let k = key(p);
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = grid.get(&(k.0 + dx, k.1 + dy, k.2 + dz)) {
                        for &id in ids {
                            if (out[id] - p).norm() <= tol {
                                found = Some(id);
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        let id = match found {
            Some(id) => id,
            None => {
                out.push(*p);
                grid.entry(k).or_default().push(out.len() - 1);
                out.len() - 1
            }
        };
        remap.push(id);
    }
    (out, remap)
}

/// Fixed, deliberately irrational-looking ray directions for parity tests.
static RAY_DIRECTIONS: std::sync::LazyLock<Vec<V3>> = std::sync::LazyLock::new(|| {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1e55);
    (0..8)
        .map(|_| loop {
            let v = V3::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0);
            let l = v.norm();
            if l > 0.2 && l <= 1.0 {
                break v / l;
            }
        })
        .collect()
});

#[cfg(test)]
mod tests {
    use super::primitives::*;
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn cube_counts_and_genus() {
        let c = unit_cube();
        assert_eq!((c.vertex_count(), c.face_count()), (8, 12));
        assert_eq!(c.edge_faces().len(), 18);
        assert_eq!(c.euler_genus().unwrap(), 0);
        assert_eq!(tetrahedron().euler_genus().unwrap(), 0);
    }

    #[test]
    fn torus_has_genus_one() {
        let t = minimal_torus();
        assert_eq!((t.vertex_count(), t.edge_faces().len(), t.face_count()), (9, 27, 18));
        assert_eq!(t.euler_genus().unwrap(), 1);
    }

    #[test]
    fn open_mesh_rejected() {
        let c = unit_cube();
        let open = TriMesh::new(c.vertices().to_vec(), c.faces()[1..].to_vec()).unwrap();
        assert!(matches!(open.euler_genus(), Err(MeshError::Topology(_))));
        assert!(open.signed_volume().is_err());
    }

    #[test]
    fn cube_volume_sign_and_com() {
        let c = unit_cube();
        assert!((c.signed_volume().unwrap() - 1.0).abs() < 1e-9);
        assert!((c.flipped().signed_volume().unwrap() + 1.0).abs() < 1e-9);
        let com = c.center_of_mass().unwrap();
        assert!((com - P3::new(0.5, 0.5, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn sphere_volume_close_to_analytic() {
        let s = icosphere(4, 1.0, P3::origin());
        assert_eq!(s.face_count(), 5120);
        let v = s.signed_volume().unwrap();
        let exact = 4.0 / 3.0 * std::f64::consts::PI;
        assert!((v - exact).abs() / exact < 0.01, "{v}");
    }

    #[test]
    fn combined_com_of_two_cubes() {
        let a = unit_cube();
        let b = a.translated(&V3::new(2.0, 2.0, 2.0));
        let c = combined_center_of_mass(&[&a, &b]).unwrap();
        assert!((c.x - 1.5).abs() < 1e-12);
        let s = icosphere(3, 1.0, P3::new(3.0, 0.0, 0.0));
        assert!((s.center_of_mass().unwrap() - P3::new(3.0, 0.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn degenerate_volume_errors() {
        let flat = TriMesh::new(
            vec![P3::new(0., 0., 0.), P3::new(1., 0., 0.), P3::new(0., 1., 0.), P3::new(1., 1., 0.)],
            vec![[0, 1, 2], [0, 2, 1], [1, 3, 2], [1, 2, 3]],
        );
        // Non-manifold doubled sheet is rejected as topology; a closed zero-volume tet is degenerate.
        assert!(flat.is_ok());
        let tet = TriMesh::new(
            vec![P3::new(0., 0., 0.), P3::new(1., 0., 0.), P3::new(0., 1., 0.), P3::new(1., 1., 0.)],
            vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]],
        )
        .unwrap();
        assert!(matches!(tet.center_of_mass(), Err(MeshError::Degenerate(_))));
    }

    #[test]
    fn sphere_inside_outside() {
        let s = icosphere(2, 1.0, P3::origin());
        assert!(s.point_inside(&P3::origin()));
        assert!(!s.point_inside(&P3::new(5.0, 0.0, 0.0)));
        // vertex on the surface counts as inside
        assert!(s.point_inside(&s.vertices()[0]));
    }

    #[test]
    fn inertia_of_unit_cube() {
        let mp = unit_cube().mass_properties().unwrap();
        for i in 0..3 {
            assert!((mp.inertia[(i, i)] - 1.0 / 6.0).abs() < 1e-12);
        }
        assert!(mp.inertia[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn edge_box_tests() {
        let a = unit_cube();
        let far = a.translated(&V3::new(10.0, 0.0, 0.0));
        assert!(!boxes_intersect_edges(&a, &far));
        assert!(boxes_intersect_edges(&a, &a.clone()));
        let small = box_mesh(P3::new(0.25, 0.25, 0.25), P3::new(0.75, 0.75, 0.75));
        let big = box_mesh(P3::new(-1.0, -1.0, -1.0), P3::new(2.0, 2.0, 2.0));
        assert!(!boxes_intersect_edges(&big, &small));
    }

    #[test]
    fn closed_surface_flux_vanishes() {
        for m in [unit_cube(), icosphere(2, 1.3, P3::new(1., 2., 3.)), l_shape()] {
            let flux: V3 = (0..m.face_count()).map(|f| m.face_normal(f) * m.face_area(f)).sum();
            assert!(flux.norm() <= 1e-6 * m.surface_area());
        }
    }

    #[test]
    fn self_intersection_detects_fold() {
        assert!(!icosphere(1, 1.0, P3::origin()).self_intersects());
        let a = unit_cube();
        let b = box_mesh(P3::new(0.5, 0.5, 0.5), P3::new(1.5, 1.5, 1.5));
        assert!(TriMesh::concat(&[&a, &b]).self_intersects());
    }

    #[test]
    fn orientation_repair_and_weld() {
        let c = unit_cube();
        let mut faces = c.faces().to_vec();
        faces[3].swap(1, 2);
        let broken = TriMesh::new(c.vertices().to_vec(), faces).unwrap();
        assert!(!broken.topology().is_oriented());
        let fixed = broken.orient_outward().unwrap();
        assert!(fixed.topology().is_oriented());
        assert!(fixed.signed_volume().unwrap() > 0.0);
        let flipped = c.flipped().orient_outward().unwrap();
        assert!((flipped.signed_volume().unwrap() - 1.0).abs() < 1e-12);
    }

    fn brute_inside(m: &TriMesh, p: &P3, dir: &V3) -> Option<bool> {
        let mut n = 0;
        for f in 0..m.face_count() {
            let [a, b, c] = m.face_points(f);
            if let Some(h) = geom::ray_triangle(p, dir, &a, &b, &c) {
                if h.edge_margin() < 1e-9 {
                    return None;
                }
                if h.t > 0.0 {
                    n += 1;
                }
            }
        }
        Some(n % 2 == 1)
    }

    #[test]
    fn point_inside_matches_brute_force_parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in 0..10 {
            let m = random_convex_mesh(&mut rng).map_vertices(|p| p + V3::new(k as f64 * 0.1, 0.0, 0.0));
            let bb = m.aabb().padded(0.5);
            for _ in 0..1000 {
                let p = P3::new(rng.gen_range(bb.min.x..bb.max.x), rng.gen_range(bb.min.y..bb.max.y), rng.gen_range(bb.min.z..bb.max.z));
                let dir = V3::new(0.3113, 0.8147, 0.4893).normalize();
                if let Some(expected) = brute_inside(&m, &p, &dir) {
                    assert_eq!(m.point_inside(&p), expected, "mesh {k} point {p:?}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn volume_translation_invariant(dx in -100.0..100.0f64, dy in -100.0..100.0f64, dz in -100.0..100.0f64) {
            let m = icosphere(1, 1.0, P3::origin());
            let v0 = m.signed_volume().unwrap();
            let v1 = m.translated(&V3::new(dx, dy, dz)).signed_volume().unwrap();
            prop_assert!((v0 - v1).abs() <= 1e-9 * v0.abs());
        }
    }
}
