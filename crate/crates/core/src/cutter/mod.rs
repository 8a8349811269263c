//! Plane cuts of a nesting level: envelope construction, clipping, and capping.

pub mod triangulate;

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::geom::{any_orthogonal, point_in_polygon, polygon_area, P2, P3, V3};
use crate::mesh::{combined_center_of_mass, MeshError, TriMesh};
use crate::viewpoint::ViewRanking;

#[derive(Debug, thiserror::Error)]
pub enum CutError {
    #[error("inner vertex {vertex} of cavity {cavity} lies outside the outer shell")]
    Containment { cavity: usize, vertex: usize },
    #[error("stitching failed: {0}")]
    Stitch(String),
    #[error("plane does not split the envelope")]
    Miss,
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutPlane {
    pub origin: [f64; 3],
    pub normal: [f64; 3],
}

impl CutPlane {
    pub fn new(origin: P3, normal: V3) -> Self {
        let n = normal.normalize();
        CutPlane { origin: [origin.x, origin.y, origin.z], normal: [n.x, n.y, n.z] }
    }

    pub fn origin(&self) -> P3 {
        P3::from(self.origin)
    }

    pub fn normal(&self) -> V3 {
        V3::from(self.normal)
    }

    pub fn signed_distance(&self, p: &P3) -> f64 {
        (p - self.origin()).dot(&self.normal())
    }

    pub fn project(&self, p: &P3) -> P3 {
        p - self.normal() * self.signed_distance(p)
    }
}

/// Outer shells (outward) and cavity shells (inward) of one level's difference solid.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub outer: Vec<TriMesh>,
    pub cavities: Vec<TriMesh>,
}

impl Envelope {
    /// All shells as one mesh: outers first, then cavities.
    pub fn mesh(&self) -> TriMesh {
        let parts: Vec<&TriMesh> = self.outer.iter().chain(&self.cavities).collect();
        TriMesh::concat(&parts)
    }

    pub fn volume(&self) -> Result<f64, MeshError> {
        self.mesh().signed_volume()
    }
}

/// Envelope of one outer shell around its inner meshes.
pub fn make_envelope(outer: &TriMesh, inners: &[&TriMesh]) -> Result<Envelope, CutError> {
    make_group_envelope(&[outer], inners)
}

/// Envelope of a group of outer shells; every inner vertex must lie inside one of them.
pub fn make_group_envelope(outers: &[&TriMesh], inners: &[&TriMesh]) -> Result<Envelope, CutError> {
    for (ci, inner) in inners.iter().enumerate() {
        if let Some(vi) = inner.vertices().iter().position(|v| !outers.iter().any(|o| o.point_inside(v))) {
            return Err(CutError::Containment { cavity: ci, vertex: vi });
        }
    }
    Ok(Envelope { outer: outers.iter().map(|m| (*m).clone()).collect(), cavities: inners.iter().map(|m| m.flipped()).collect() })
}

/// Result of cutting an envelope: the half on the `-normal` side (`below`) and on the
/// `+normal` side (`above`), each closed. Cap faces index into the respective mesh.
#[derive(Debug, Clone)]
pub struct CutHalves {
    pub plane: CutPlane,
    pub below: TriMesh,
    pub above: TriMesh,
    pub below_caps: Vec<usize>,
    pub above_caps: Vec<usize>,
}

impl CutHalves {
    pub fn halves(&self) -> [&TriMesh; 2] {
        [&self.below, &self.above]
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Below,
    Above,
}

/// Splits every shell along the plane, caps the openings (annular bands between
/// outer and cavity loops), and returns two closed halves.
pub fn clip_and_stitch(env: &Envelope, plane: &CutPlane) -> Result<CutHalves, CutError> {
    let mesh = env.mesh();
    let n = plane.normal();
    let diag = mesh.diagonal().max(1e-300);
    let eps = 1e-9 * diag;
    let mut verts: Vec<P3> = mesh.vertices().to_vec();
    let dist: Vec<f64> = verts.iter().map(|p| plane.signed_distance(p)).collect();
    let sign: Vec<i8> = dist
        .iter()
        .map(|&d| {
            if d > eps {
                1
            } else if d < -eps {
                -1
            } else {
                0
            }
        })
        .collect();
    // on-plane vertices are moved onto the plane exactly
    for (i, s) in sign.iter().enumerate() {
        if *s == 0 {
            verts[i] = plane.project(&verts[i]);
        }
    }
    let mut cuts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut split = |a: usize, b: usize, verts: &mut Vec<P3>| -> usize {
        let key = (a.min(b), a.max(b));
        *cuts.entry(key).or_insert_with(|| {
            let (p, q) = (verts[key.0], verts[key.1]);
            let (dp, dq) = (dist[key.0], dist[key.1]);
            let x = p + (q - p) * (dp / (dp - dq));
            verts.push(plane.project(&x));
            verts.len() - 1
        })
    };
    let mut below: Vec<[usize; 3]> = Vec::new();
    let mut above: Vec<[usize; 3]> = Vec::new();
    for (fi, f) in mesh.faces().iter().enumerate() {
        let s = f.map(|v| sign[v]);
        let has_pos = s.contains(&1);
        let has_neg = s.contains(&-1);
        match (has_pos, has_neg) {
            (false, false) => {
                if mesh.face_normal(fi).dot(&n) > 0.0 {
                    below.push(*f);
                } else {
                    above.push(*f);
                }
            }
            (true, false) => above.push(*f),
            (false, true) => below.push(*f),
            (true, true) => {
                let zero = s.iter().position(|&x| x == 0);
                if let Some(z) = zero {
                    // (0, a, b) with a and b on opposite sides
                    let (v0, v1, v2) = (f[z], f[(z + 1) % 3], f[(z + 2) % 3]);
                    let x = split(v1, v2, &mut verts);
                    let t1 = [v0, v1, x];
                    let t2 = [v0, x, v2];
                    if sign[v1] > 0 {
                        above.push(t1);
                        below.push(t2);
                    } else {
                        below.push(t1);
                        above.push(t2);
                    }
                } else {
                    // lone vertex on one side
                    let lone = (0..3).find(|&k| s[k] != s[(k + 1) % 3] && s[k] != s[(k + 2) % 3]).unwrap();
                    let (a, b, c) = (f[lone], f[(lone + 1) % 3], f[(lone + 2) % 3]);
                    let xab = split(a, b, &mut verts);
                    let xac = split(a, c, &mut verts);
                    let tip = [a, xab, xac];
                    let quad = if (verts[xab] - verts[c]).norm_squared() <= (verts[b] - verts[xac]).norm_squared() {
                        [[xab, b, c], [xab, c, xac]]
                    } else {
                        [[xab, b, xac], [b, c, xac]]
                    };
                    let (lone_side, rest) = if sign[a] > 0 { (&mut above, &mut below) } else { (&mut below, &mut above) };
                    lone_side.push(tip);
                    rest.extend_from_slice(&quad);
                }
            }
        }
    }
    if below.is_empty() || above.is_empty() {
        return Err(CutError::Miss);
    }
    let (below_mesh, below_caps) = cap_half(&verts, below, plane, Side::Below)?;
    let (above_mesh, above_caps) = cap_half(&verts, above, plane, Side::Above)?;
    for m in [&below_mesh, &above_mesh] {
        m.require_closed().map_err(|e| CutError::Stitch(e.to_string()))?;
        for c in m.connected_components() {
            if c.euler_genus().map_err(|e| CutError::Stitch(e.to_string()))? != 0 {
                return Err(CutError::Stitch("capped half is not genus 0".into()));
            }
        }
    }
    Ok(CutHalves { plane: *plane, below: below_mesh, above: above_mesh, below_caps, above_caps })
}

fn boundary_loops(faces: &[[usize; 3]]) -> Result<Vec<Vec<usize>>, CutError> {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for f in faces {
        for k in 0..3 {
            *directed.entry((f[k], f[(k + 1) % 3])).or_default() += 1;
        }
    }
    if directed.values().any(|&c| c > 1) {
        return Err(CutError::Stitch("duplicated directed edge".into()));
    }
    let mut next: BTreeMap<usize, usize> = BTreeMap::new();
    for &(a, b) in directed.keys() {
        if !directed.contains_key(&(b, a)) && next.insert(a, b).is_some() {
            return Err(CutError::Stitch("pinched boundary loop".into()));
        }
    }
    let mut loops = Vec::new();
    while let Some((&start, _)) = next.iter().next() {
        let mut lp = vec![start];
        let mut cur = next.remove(&start).unwrap();
        while cur != start {
            lp.push(cur);
            cur = next.remove(&cur).ok_or_else(|| CutError::Stitch("open boundary chain".into()))?;
        }
        loops.push(lp);
    }
    Ok(loops)
}

fn cap_half(verts: &[P3], faces: Vec<[usize; 3]>, plane: &CutPlane, side: Side) -> Result<(TriMesh, Vec<usize>), CutError> {
    let loops = boundary_loops(&faces)?;
    // caps face out of the half: +n for the lower half, -n for the upper half
    let cap_n = if side == Side::Below { plane.normal() } else { -plane.normal() };
    let e1 = any_orthogonal(&cap_n);
    let e2 = cap_n.cross(&e1);
    let o = plane.origin();
    let to2 = |v: usize| P2::new((verts[v] - o).dot(&e1), (verts[v] - o).dot(&e2));
    let cap_loops: Vec<Vec<usize>> = loops
        .into_iter()
        .map(|mut l| {
            l.reverse();
            l
        })
        .collect();
    let pts: Vec<Vec<P2>> = cap_loops.iter().map(|l| l.iter().map(|&v| to2(v)).collect()).collect();
    let areas: Vec<f64> = pts.iter().map(|p| polygon_area(p)).collect();
    let scale = verts.iter().map(|p| (p - o).norm()).fold(0.0, f64::max).max(1e-300);
    if areas.iter().any(|a| a.abs() <= 1e-14 * scale * scale) {
        return Err(CutError::Stitch("degenerate cut loop".into()));
    }
    let outers: Vec<usize> = (0..pts.len()).filter(|&i| areas[i] > 0.0).collect();
    let mut holes_of: BTreeMap<usize, Vec<usize>> = outers.iter().map(|&i| (i, Vec::new())).collect();
    for h in (0..pts.len()).filter(|&i| areas[i] < 0.0) {
        let probe = pts[h][0];
        let host = outers
            .iter()
            .copied()
            .filter(|&o| point_in_polygon(&probe, &pts[o]) && pts[h].iter().all(|p| point_in_polygon(p, &pts[o])))
            .min_by(|&a, &b| areas[a].total_cmp(&areas[b]));
        match host {
            Some(o) => holes_of.get_mut(&o).unwrap().push(h),
            None => return Err(CutError::Stitch(format!("cavity loop {h} is not inside any outer loop"))),
        }
    }
    let mut faces = faces;
    let mut cap_faces = Vec::new();
    for (&outer, holes) in &holes_of {
        let hole_pts: Vec<Vec<P2>> = holes.iter().map(|&h| pts[h].clone()).collect();
        let tris = triangulate::triangulate_region(&pts[outer], &hole_pts)
            .ok_or_else(|| CutError::Stitch(format!("cannot triangulate cap of loop {outer}")))?;
        let ids: Vec<usize> = cap_loops[outer].iter().chain(holes.iter().flat_map(|&h| cap_loops[h].iter())).copied().collect();
        for t in tris {
            cap_faces.push(faces.len());
            faces.push(t.map(|k| ids[k]));
        }
    }
    // compaction keeps face order, so cap face indices stay valid
    let mesh = TriMesh::from_raw(verts.to_vec(), faces).compacted();
    Ok((mesh, cap_faces))
}

/// Center of mass of the given meshes and the ranked planes through it.
#[derive(Debug, Clone)]
pub struct LevelCut {
    pub center: P3,
    pub directions: Vec<V3>,
}

impl LevelCut {
    pub fn best(&self) -> CutPlane {
        CutPlane::new(self.center, self.directions[0])
    }

    /// Planes in ranking order, best first.
    pub fn planes(&self) -> impl Iterator<Item = CutPlane> + '_ {
        self.directions.iter().map(move |d| CutPlane::new(self.center, *d))
    }
}

/// Plane origin at the joint center of mass of the inner meshes; normals follow the ranking.
pub fn plan_cut_for_level(inner: &[&TriMesh], ranking: &ViewRanking) -> Result<LevelCut, CutError> {
    let center = combined_center_of_mass(inner)?;
    Ok(LevelCut { center, directions: ranking.samples.iter().map(|s| s.dir()).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::{box_mesh, icosphere, unit_cube};

    #[test]
    fn envelope_volume_is_difference() {
        let outer = box_mesh(P3::new(-2., -2., -2.), P3::new(2., 2., 2.));
        let inner = unit_cube();
        let env = make_envelope(&outer, &[&inner]).unwrap();
        assert!((env.volume().unwrap() - 63.0).abs() < 1e-9);
        let plain = make_envelope(&outer, &[]).unwrap();
        assert_eq!(plain.mesh(), outer);
    }

    #[test]
    fn envelope_rejects_escaping_inner() {
        let outer = unit_cube();
        let inner = box_mesh(P3::new(0.5, 0.5, 0.5), P3::new(1.5, 0.9, 0.9));
        assert!(matches!(make_envelope(&outer, &[&inner]), Err(CutError::Containment { .. })));
    }

    #[test]
    fn box_halves() {
        let b = box_mesh(P3::new(0., 0., 0.), P3::new(2., 1., 1.));
        let env = make_envelope(&b, &[]).unwrap();
        let plane = CutPlane::new(P3::new(0.5, 0.5, 0.5), V3::x());
        let h = clip_and_stitch(&env, &plane).unwrap();
        assert!((h.below.signed_volume().unwrap() - 0.5).abs() < 1e-9);
        assert!((h.above.signed_volume().unwrap() - 1.5).abs() < 1e-9);
        assert_eq!(h.below.euler_genus().unwrap(), 0);
        assert!(!h.below_caps.is_empty() && !h.above_caps.is_empty());
        for &f in &h.below_caps {
            assert!(h.below.face_normal(f).dot(&V3::x()) > 0.99);
        }
    }

    #[test]
    fn concentric_spheres_make_bowls() {
        let outer = icosphere(2, 2.0, P3::origin());
        let inner = icosphere(2, 1.0, P3::origin());
        let env = make_envelope(&outer, &[&inner]).unwrap();
        let v = env.volume().unwrap();
        let plane = CutPlane::new(P3::origin(), V3::new(0.2, 1.0, 0.1));
        let h = clip_and_stitch(&env, &plane).unwrap();
        for half in h.halves() {
            assert_eq!(half.connected_components().len(), 1);
            assert_eq!(half.euler_genus().unwrap(), 0);
            assert!((half.signed_volume().unwrap() - v / 2.0).abs() / v < 0.01);
        }
    }

    #[test]
    fn plane_through_equator_vertices() {
        // icosahedron has vertices exactly on z = 0
        let s = icosphere(0, 1.0, P3::origin());
        let env = make_envelope(&s, &[]).unwrap();
        let h = clip_and_stitch(&env, &CutPlane::new(P3::origin(), V3::z())).unwrap();
        let total = h.below.signed_volume().unwrap() + h.above.signed_volume().unwrap();
        assert!((total - s.signed_volume().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn missing_plane_is_reported() {
        let env = make_envelope(&unit_cube(), &[]).unwrap();
        assert!(matches!(clip_and_stitch(&env, &CutPlane::new(P3::new(0., 0., 5.), V3::z())), Err(CutError::Miss)));
    }

    #[test]
    fn uncut_cavity_stays_closed() {
        let outer = box_mesh(P3::new(-3., -3., -3.), P3::new(3., 3., 3.));
        let inner = box_mesh(P3::new(1., 1., 1.), P3::new(2., 2., 2.));
        let env = make_envelope(&outer, &[&inner]).unwrap();
        let h = clip_and_stitch(&env, &CutPlane::new(P3::origin(), V3::z())).unwrap();
        assert_eq!(h.above.connected_components().len(), 2);
        assert!((h.above.signed_volume().unwrap() - (108.0 - 1.0)).abs() < 1e-9);
    }
}
