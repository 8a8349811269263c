//! Unfolding papermeshes into single overlap-free patches with glue tabs.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{convex_intersection_area, convex_penetration, polygon_area, P2, V2};
use crate::mesh::{MeshError, TriMesh};

/// Weight of the fold-sharpness term in dual edge weights.
pub const SHARPNESS_WEIGHT: f64 = 0.5;
/// Tab height as a fraction of its edge length, before export scaling.
pub const TAB_FRACTION: f64 = 0.3;
/// Base angle of the trapezoidal tabs.
pub const TAB_ANGLE: f64 = PI / 3.0;

#[derive(Debug, thiserror::Error)]
pub enum UnfoldError {
    #[error("topology error: {0}")]
    Topology(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("annealing left energy {:.4} after {} iterations", .0.energy, .0.iterations)]
    AnnealFailure(Box<AnnealResult>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualEdge {
    pub id: usize,
    /// Mesh edge as (low, high) vertex ids.
    pub verts: (usize, usize),
    pub faces: (usize, usize),
    /// Interior dihedral angle in `(0, 2pi)`; pi is flat, below pi is convex.
    pub dihedral: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualGraph {
    pub faces: usize,
    pub edges: Vec<DualEdge>,
}

impl DualGraph {
    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.weight).collect()
    }

    pub fn with_weights(&self, w: &[f64]) -> DualGraph {
        let mut g = self.clone();
        for (e, &x) in g.edges.iter_mut().zip(w) {
            e.weight = x;
        }
        g
    }
}

/// Sharp folds (far from flat) get low weight so the spanning tree keeps them.
pub fn edge_weight(dihedral: f64) -> f64 {
    1.0 + SHARPNESS_WEIGHT * (PI - (PI - dihedral).abs())
}

fn third(face: &[usize; 3], u: usize, v: usize) -> usize {
    *face.iter().find(|&&x| x != u && x != v).expect("non-degenerate face")
}

/// Interior dihedral angle along the edge shared by `f1` and `f2`.
pub fn dihedral_angle(mesh: &TriMesh, f1: usize, f2: usize, u: usize, v: usize) -> f64 {
    let n1 = mesh.face_normal(f1);
    let n2 = mesh.face_normal(f2);
    let p = mesh.vertices();
    let w2 = third(&mesh.faces()[f2], u, v);
    let bend = n1.cross(&n2).norm().atan2(n1.dot(&n2));
    let convex = n1.dot(&(p[w2] - p[u])) <= 0.0;
    if convex {
        PI - bend
    } else {
        PI + bend
    }
}

/// Dual graph with weights `edge_weight(dihedral) * mean_length / length`: among
/// equally sharp edges the longer ones are kept as folds.
pub fn build_dual(mesh: &TriMesh) -> Result<DualGraph, UnfoldError> {
    let ef = mesh.edge_faces();
    let p = mesh.vertices();
    let mean = ef.keys().map(|&(u, v)| (p[u] - p[v]).norm()).sum::<f64>() / ef.len().max(1) as f64;
    let mut edges = Vec::new();
    for (&(u, v), fs) in &ef {
        if fs.len() != 2 {
            return Err(UnfoldError::Topology(format!("edge ({u},{v}) has {} faces", fs.len())));
        }
        let (f1, f2) = (fs[0].min(fs[1]), fs[0].max(fs[1]));
        let dihedral = dihedral_angle(mesh, f1, f2, u, v);
        let len = (p[u] - p[v]).norm().max(1e-300);
        let weight = edge_weight(dihedral) * mean / len;
        edges.push(DualEdge { id: edges.len(), verts: (u, v), faces: (f1, f2), dihedral, weight });
    }
    Ok(DualGraph { faces: mesh.face_count(), edges })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnfoldTree {
    pub root: usize,
    /// Ids of dual edges kept as folds, ascending.
    pub folds: Vec<usize>,
    /// Ids of dual edges that are cut, ascending.
    pub cuts: Vec<usize>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Kruskal's minimum spanning tree, ties broken by edge id; root is face 0.
pub fn mst_unfold_tree(g: &DualGraph) -> UnfoldTree {
    let mut order: Vec<usize> = (0..g.edges.len()).collect();
    order.sort_by(|&a, &b| g.edges[a].weight.total_cmp(&g.edges[b].weight).then(a.cmp(&b)));
    let mut parent: Vec<usize> = (0..g.faces).collect();
    let mut folds = Vec::with_capacity(g.faces.saturating_sub(1));
    for id in order {
        let (a, b) = g.edges[id].faces;
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            folds.push(id);
        }
    }
    folds.sort_unstable();
    let cuts = (0..g.edges.len()).filter(|i| folds.binary_search(i).is_err()).collect();
    UnfoldTree { root: 0, folds, cuts }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldKind {
    Mountain,
    Valley,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub edge: usize,
    pub verts: (usize, usize),
    pub faces: (usize, usize),
    pub dihedral: f64,
    pub kind: FoldKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutEdge {
    pub edge: usize,
    pub verts: (usize, usize),
    pub faces: (usize, usize),
    /// Index into `Patch2D::tabs`.
    pub tab: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlueTab {
    /// Match number printed on the tab and on the partner edge.
    pub number: usize,
    pub edge: usize,
    /// Face whose copy of the edge carries the tab.
    pub host: usize,
    /// Face whose copy of the edge gets the glue marker.
    pub partner: usize,
    /// Base corners first (on the host edge), then the top corners.
    pub quad: [[f64; 2]; 4],
    /// Length of the glued edge.
    pub edge_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "id")]
pub enum Element {
    Face(usize),
    Tab(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch2D {
    pub root: usize,
    /// Per face, the 2D positions of its three vertices in mesh order. The face id
    /// doubles as the texture link into the papermesh's atlas.
    pub faces: Vec<[[f64; 2]; 3]>,
    pub folds: Vec<Fold>,
    pub cuts: Vec<CutEdge>,
    pub tabs: Vec<GlueTab>,
    pub overlaps: Vec<(Element, Element)>,
}

fn p2(a: [f64; 2]) -> P2 {
    P2::new(a[0], a[1])
}

impl Patch2D {
    pub fn face_polygon(&self, f: usize) -> Vec<P2> {
        self.faces[f].iter().map(|&a| p2(a)).collect()
    }

    pub fn tab_polygon(&self, t: usize) -> Vec<P2> {
        self.tabs[t].quad.iter().map(|&a| p2(a)).collect()
    }

    pub fn polygon(&self, e: Element) -> Vec<P2> {
        match e {
            Element::Face(f) => self.face_polygon(f),
            Element::Tab(t) => self.tab_polygon(t),
        }
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| polygon_area(&self.face_polygon(f))).sum()
    }

    /// 2D position of `vertex` as placed in face `f`.
    pub fn vertex_in_face(&self, mesh: &TriMesh, f: usize, vertex: usize) -> Option<P2> {
        mesh.faces()[f].iter().position(|&v| v == vertex).map(|k| p2(self.faces[f][k]))
    }

    /// Every face and tab outline, faces first.
    pub fn elements(&self) -> Vec<Element> {
        (0..self.faces.len()).map(Element::Face).chain((0..self.tabs.len()).map(Element::Tab)).collect()
    }

    /// Applies a 2D map to every placed point.
    pub fn transformed(&self, f: impl Fn(P2) -> P2) -> Patch2D {
        let m = |a: [f64; 2]| {
            let q = f(p2(a));
            [q.x, q.y]
        };
        let mut out = self.clone();
        for t in out.faces.iter_mut() {
            *t = t.map(m);
        }
        for t in out.tabs.iter_mut() {
            t.quad = t.quad.map(m);
        }
        out
    }

    /// Bounds as (min, max).
    pub fn bounds(&self) -> (P2, P2) {
        let mut lo = P2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = P2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for q in self.faces.iter().flatten().chain(self.tabs.iter().flat_map(|t| t.quad.iter())) {
            lo = P2::new(lo.x.min(q[0]), lo.y.min(q[1]));
            hi = P2::new(hi.x.max(q[0]), hi.y.max(q[1]));
        }
        (lo, hi)
    }
}

/// Lays the faces flat by hinging each child about its fold edge, breadth first from the root.
pub fn unfold_patch(mesh: &TriMesh, g: &DualGraph, tree: &UnfoldTree) -> Patch2D {
    let faces = mesh.faces();
    let pts = mesh.vertices();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); g.faces];
    for &id in &tree.folds {
        let (a, b) = g.edges[id].faces;
        adj[a].push(id);
        adj[b].push(id);
    }
    let mut placed: Vec<Option<[P2; 3]>> = vec![None; g.faces];
    let root = tree.root;
    {
        let [a, b, c] = faces[root];
        let (pa, pb, pc) = (pts[a], pts[b], pts[c]);
        let lab = (pb - pa).norm();
        let x = (pc - pa).dot(&(pb - pa)) / lab;
        let y = ((pc - pa).norm_squared() - x * x).max(0.0).sqrt();
        placed[root] = Some([P2::origin(), P2::new(lab, 0.0), P2::new(x, y)]);
    }
    let mut queue = VecDeque::from([root]);
    while let Some(f) = queue.pop_front() {
        let pf = placed[f].unwrap();
        for &id in &adj[f] {
            let e = &g.edges[id];
            let child = if e.faces.0 == f { e.faces.1 } else { e.faces.0 };
            if placed[child].is_some() {
                continue;
            }
            placed[child] = Some(hinge(mesh, &pf, f, child, e.verts));
            queue.push_back(child);
        }
    }
    let folds = tree
        .folds
        .iter()
        .map(|&id| {
            let e = &g.edges[id];
            let kind = if e.dihedral < PI { FoldKind::Mountain } else { FoldKind::Valley };
            Fold { edge: id, verts: e.verts, faces: e.faces, dihedral: e.dihedral, kind }
        })
        .collect();
    let cuts = tree.cuts.iter().map(|&id| CutEdge { edge: id, verts: g.edges[id].verts, faces: g.edges[id].faces, tab: None }).collect();
    Patch2D {
        root,
        faces: placed.into_iter().map(|p| p.expect("spanning tree reaches every face").map(|q| [q.x, q.y])).collect(),
        folds,
        cuts,
        tabs: Vec::new(),
        overlaps: Vec::new(),
    }
}

/// Places `child` flat across the shared edge `(u, v)` of the placed face `f`.
fn hinge(mesh: &TriMesh, pf: &[P2; 3], f: usize, child: usize, (u, v): (usize, usize)) -> [P2; 3] {
    let faces = mesh.faces();
    let pts = mesh.vertices();
    let at = |face: usize, vert: usize| faces[face].iter().position(|&x| x == vert).unwrap();
    let (qu, qv) = (pf[at(f, u)], pf[at(f, v)]);
    let wf = third(&faces[f], u, v);
    let wc = third(&faces[child], u, v);
    let d = qv - qu;
    let dir = d / d.norm();
    let nrm = V2::new(-dir.y, dir.x);
    // the child's apex goes on the opposite side from the parent's apex
    let side = if (pf[at(f, wf)] - qu).dot(&nrm) > 0.0 { -1.0 } else { 1.0 };
    let (pu, pv, pw) = (pts[u], pts[v], pts[wc]);
    let e3 = pv - pu;
    let along = (pw - pu).dot(&e3) / e3.norm();
    let h = ((pw - pu).norm_squared() - along * along).max(0.0).sqrt();
    let qw = qu + dir * along + nrm * (side * h);
    let mut out = [P2::origin(); 3];
    out[at(child, u)] = qu;
    out[at(child, v)] = qv;
    out[at(child, wc)] = qw;
    out
}

/// Trapezoid on the edge `a -> b`, on the side away from `inside`, with 60 degree
/// base angles. `insets` pull the base corners in from `a` and `b`.
pub fn tab_quad(a: P2, b: P2, inside: P2, height: f64, insets: [f64; 2]) -> [P2; 4] {
    let d = b - a;
    let dir = d / d.norm();
    let out_n = outward(a, b, inside);
    let slant = height / TAB_ANGLE.tan();
    let (a0, b0) = (a + dir * insets[0], b - dir * insets[1]);
    [a0, b0, b0 - dir * slant + out_n * height, a0 + dir * slant + out_n * height]
}

fn outward(a: P2, b: P2, inside: P2) -> V2 {
    let d = (b - a).normalize();
    let n = V2::new(-d.y, d.x);
    if (inside - a).dot(&n) > 0.0 {
        -n
    } else {
        n
    }
}

/// Free angle on the outward side of a cut edge at one of its endpoints: the
/// smallest angle from the edge to any other face placed around the same point.
#[allow(clippy::too_many_arguments)]
fn free_angle(mesh: &TriMesh, patch: &Patch2D, vfaces: &[Vec<usize>], host: usize, vid: usize, p: P2, along: V2, out: V2, eps: f64) -> f64 {
    let mut gamma = PI;
    for &f in &vfaces[vid] {
        if f == host {
            continue;
        }
        match patch.vertex_in_face(mesh, f, vid) {
            Some(q) if (q - p).norm() <= eps => {}
            _ => continue,
        }
        let ang: Vec<f64> = mesh.faces()[f]
            .iter()
            .filter(|&&x| x != vid)
            .map(|&x| {
                let r = patch.vertex_in_face(mesh, f, x).unwrap() - p;
                r.dot(&out).atan2(r.dot(&along))
            })
            .collect();
        let (lo, hi) = (ang[0].min(ang[1]), ang[0].max(ang[1]));
        let start = if hi - lo < PI {
            if hi <= 0.0 {
                continue;
            }
            lo.max(0.0)
        } else {
            hi.max(0.0)
        };
        gamma = gamma.min(start);
    }
    gamma
}

fn aabb_of(poly: &[P2]) -> (P2, P2) {
    let mut lo = poly[0];
    let mut hi = poly[0];
    for p in poly {
        lo = P2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = P2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    (lo, hi)
}

/// Positive-area overlap between two convex outlines.
fn overlapping(a: &[P2], b: &[P2], eps: f64) -> bool {
    convex_penetration(a, b) > eps
}

fn tolerance(mesh_scale: f64) -> f64 {
    1e-9 * mesh_scale.max(1e-300)
}

/// Height fractions tried, in order, when a full tab collides on both sides.
pub const TAB_FALLBACK_HEIGHTS: [f64; 3] = [1.0, 0.5, 0.25];

/// The tab cut down to `s` of its height; lies inside the original.
fn truncate(q: &[P2; 4], s: f64) -> [P2; 4] {
    [q[0], q[1], q[1] + (q[2] - q[1]) * s, q[0] + (q[3] - q[0]) * s]
}

/// Adds one numbered tab per cut edge. The host copy defaults to the lower face id
/// and switches sides only when that avoids a collision; if both sides collide the
/// tab is lowered to half, then a quarter, before a collision is accepted. Heights are
/// `TAB_FRACTION` of the edge length capped by `max_height` (patch units); where
/// a neighbouring face leaves less than the base angle free at an endpoint, the
/// base is pulled in from that endpoint so the slanted side clears it.
pub fn place_glue_tabs(mesh: &TriMesh, mut patch: Patch2D, max_height: f64) -> Patch2D {
    let scale = patch.faces.iter().map(|t| (p2(t[1]) - p2(t[0])).norm()).sum::<f64>() / patch.faces.len().max(1) as f64;
    let eps = tolerance(scale);
    let face_polys: Vec<Vec<P2>> = (0..patch.faces.len()).map(|f| patch.face_polygon(f)).collect();
    let face_boxes: Vec<(P2, P2)> = face_polys.iter().map(|p| aabb_of(p)).collect();
    let mut vfaces: Vec<Vec<usize>> = vec![Vec::new(); mesh.vertex_count()];
    for (f, t) in mesh.faces().iter().enumerate() {
        for &v in t {
            vfaces[v].push(f);
        }
    }
    let mut tabs: Vec<GlueTab> = Vec::new();
    let mut tab_boxes: Vec<(P2, P2)> = Vec::new();
    let boxes_meet = |a: &(P2, P2), b: &(P2, P2)| a.0.x < b.1.x && b.0.x < a.1.x && a.0.y < b.1.y && b.0.y < a.1.y;
    let cot = 1.0 / TAB_ANGLE.tan();
    for ci in 0..patch.cuts.len() {
        let (u, v) = patch.cuts[ci].verts;
        let (fa, fb) = patch.cuts[ci].faces;
        let make = |host: usize| {
            let a = patch.vertex_in_face(mesh, host, u).unwrap();
            let b = patch.vertex_in_face(mesh, host, v).unwrap();
            let w = third(&mesh.faces()[host], u, v);
            let out = outward(a, b, patch.vertex_in_face(mesh, host, w).unwrap());
            let len = (b - a).norm();
            let dir = (b - a) / len;
            let pos_eps = 1e-9 * scale.max(1e-300);
            let slope = |gamma: f64| {
                let g = 0.95 * gamma;
                if g >= TAB_ANGLE {
                    0.0
                } else if g <= 1e-9 {
                    f64::INFINITY
                } else {
                    1.0 / g.tan() - cot
                }
            };
            let ka = slope(free_angle(mesh, &patch, &vfaces, host, u, a, dir, out, pos_eps));
            let kb = slope(free_angle(mesh, &patch, &vfaces, host, v, b, -dir, out, pos_eps));
            let mut h = (TAB_FRACTION * len).min(max_height);
            let (mut ia, mut ib) = (0.0, 0.0);
            if (ka + kb).is_finite() {
                // keep at least a tenth of the edge as the tab's top
                h = h.min(0.9 * len / (ka + kb + 2.0 * cot));
                ia = ka * h;
                ib = kb * h;
            }
            tab_quad(a, b, a + (b - a) * 0.5 - out, h, [ia, ib])
        };
        let collides = |quad: &[P2; 4], tabs: &[GlueTab]| {
            let bb = aabb_of(quad);
            face_polys.iter().zip(&face_boxes).any(|(p, fb)| boxes_meet(&bb, fb) && overlapping(quad, p, eps))
                || tabs.iter().zip(&tab_boxes).any(|(t, tb)| boxes_meet(&bb, tb) && overlapping(quad, &t.quad.map(p2), eps))
        };
        let (first, second) = (make(fa), make(fb));
        // full height on either side, then progressively lower tabs
        let (host, quad) = TAB_FALLBACK_HEIGHTS
            .iter()
            .flat_map(|&s| [(fa, truncate(&first, s)), (fb, truncate(&second, s))])
            .find(|(_, q)| !collides(q, &tabs))
            .unwrap_or((fa, first));
        let partner = if host == fa { fb } else { fa };
        tab_boxes.push(aabb_of(&quad));
        patch.cuts[ci].tab = Some(tabs.len());
        let edge_length = (patch.vertex_in_face(mesh, host, u).unwrap() - patch.vertex_in_face(mesh, host, v).unwrap()).norm();
        tabs.push(GlueTab {
            number: tabs.len() + 1,
            edge: patch.cuts[ci].edge,
            host,
            partner,
            quad: quad.map(|q| [q.x, q.y]),
            edge_length,
        });
    }
    patch.tabs = tabs;
    patch.overlaps = detect_overlaps(&patch);
    patch
}

/// Pairs of faces or tabs that overlap with positive area, in ascending order.
pub fn detect_overlaps(patch: &Patch2D) -> Vec<(Element, Element)> {
    let elems = patch.elements();
    let polys: Vec<Vec<P2>> = elems.iter().map(|&e| patch.polygon(e)).collect();
    let scale = patch.faces.iter().map(|t| (p2(t[1]) - p2(t[0])).norm()).sum::<f64>() / patch.faces.len().max(1) as f64;
    let eps = tolerance(scale);
    let boxes: Vec<(P2, P2)> = polys.iter().map(|p| aabb_of(p)).collect();
    let mut order: Vec<usize> = (0..elems.len()).collect();
    order.sort_by(|&a, &b| boxes[a].0.x.total_cmp(&boxes[b].0.x).then(a.cmp(&b)));
    let mut out = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if boxes[j].0.x >= boxes[i].1.x {
                break;
            }
            if boxes[j].0.y >= boxes[i].1.y || boxes[i].0.y >= boxes[j].1.y {
                continue;
            }
            if overlapping(&polys[i], &polys[j], eps) {
                let (a, b) = (elems[i.min(j)], elems[i.max(j)]);
                out.push((a, b));
            }
        }
    }
    out.sort();
    out
}

/// Overlap energy: pair count, plus overlap area relative to patch area, plus tabs involved.
pub fn overlap_energy(patch: &Patch2D) -> f64 {
    if patch.overlaps.is_empty() {
        return 0.0;
    }
    let area: f64 = patch.overlaps.iter().map(|&(a, b)| convex_intersection_area(&patch.polygon(a), &patch.polygon(b))).sum();
    let mut tabs: Vec<usize> = patch
        .overlaps
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .filter_map(|e| match e {
            Element::Tab(t) => Some(t),
            Element::Face(_) => None,
        })
        .collect();
    tabs.sort_unstable();
    tabs.dedup();
    patch.overlaps.len() as f64 + 0.1 * area / patch.area().max(1e-300) + 0.01 * tabs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealParams {
    pub iterations: usize,
    pub t0: f64,
    pub cooling: f64,
    pub seed: u64,
    /// Absolute tab height cap in mesh units.
    pub max_tab_height: f64,
    /// Iterations without a new best before restarting from the initial weights; 0 never restarts.
    pub stall: usize,
}

impl Default for AnnealParams {
    fn default() -> Self {
        AnnealParams { iterations: 5000, t0: 1.0, cooling: 0.995, seed: 0, max_tab_height: f64::INFINITY, stall: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealResult {
    pub weights: Vec<f64>,
    pub tree: UnfoldTree,
    pub patch: Patch2D,
    pub energy: f64,
    /// Iterations run before stopping.
    pub iterations: usize,
    /// Best energy after each iteration, starting with the initial state.
    pub trace: Vec<f64>,
}

impl AnnealResult {
    pub fn feasible(&self) -> bool {
        self.energy == 0.0
    }
}

/// Full patch (tree, placement, tabs, overlaps) for one weighting.
pub fn patch_for_weights(mesh: &TriMesh, g: &DualGraph, max_tab_height: f64) -> (UnfoldTree, Patch2D) {
    let tree = mst_unfold_tree(g);
    let patch = place_glue_tabs(mesh, unfold_patch(mesh, g, &tree), max_tab_height);
    (tree, patch)
}

/// Metropolis search over dual edge weights for an overlap-free unfolding.
pub fn anneal_unfolding(mesh: &TriMesh, params: &AnnealParams) -> Result<AnnealResult, UnfoldError> {
    anneal_from(mesh, build_dual(mesh)?, params)
}

/// Annealing that starts from the weights already on `g0`.
pub fn anneal_from(mesh: &TriMesh, g0: DualGraph, params: &AnnealParams) -> Result<AnnealResult, UnfoldError> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut weights = g0.weights();
    let (tree, patch) = patch_for_weights(mesh, &g0, params.max_tab_height);
    let mut energy = overlap_energy(&patch);
    let mut current = (tree.clone(), patch.clone());
    let start = (weights.clone(), current.clone(), energy);
    let mut last_gain = 0;
    let mut best = AnnealResult { weights: weights.clone(), tree, patch, energy, iterations: 0, trace: vec![energy] };
    let mut temp = params.t0;
    let mut it = 0;
    while it < params.iterations && best.energy > 0.0 {
        it += 1;
        let mut cand = weights.clone();
        match targeted_fold(&g0, &current, &mut rng) {
            // lift a fold between two overlapping elements above every weight so the tree cuts it
            Some(k) if rng.gen_bool(0.5) => {
                let top = weights.iter().cloned().fold(0.0, f64::max);
                cand[k] = top * rng.gen_range(1.0..=1.5);
            }
            _ => {
                let k = rng.gen_range(0..weights.len());
                cand[k] *= rng.gen_range(0.5..=2.0);
            }
        }
        let (tree, patch) = patch_for_weights(mesh, &g0.with_weights(&cand), params.max_tab_height);
        let e = overlap_energy(&patch);
        let accept = e <= energy || rng.gen::<f64>() < ((energy - e) / temp.max(1e-300)).exp();
        if accept {
            weights = cand;
            energy = e;
            current = (tree.clone(), patch.clone());
            if e < best.energy {
                last_gain = it;
                best.weights = weights.clone();
                best.tree = tree;
                best.patch = patch;
                best.energy = e;
            }
        }
        best.trace.push(best.energy);
        temp *= params.cooling;
        if params.stall > 0 && it - last_gain >= params.stall {
            (weights, current, energy) = start.clone();
            temp = params.t0;
            last_gain = it;
        }
    }
    best.iterations = it;
    if best.feasible() {
        Ok(best)
    } else {
        Err(UnfoldError::AnnealFailure(Box::new(best)))
    }
}

fn element_face(patch: &Patch2D, e: Element) -> usize {
    match e {
        Element::Face(f) => f,
        Element::Tab(t) => patch.tabs[t].host,
    }
}

/// A random fold edge on the tree path between the faces of a random overlapping pair.
fn targeted_fold(g: &DualGraph, (tree, patch): &(UnfoldTree, Patch2D), rng: &mut ChaCha8Rng) -> Option<usize> {
    if patch.overlaps.is_empty() {
        return None;
    }
    let (a, b) = patch.overlaps[rng.gen_range(0..patch.overlaps.len())];
    let (fa, fb) = (element_face(patch, a), element_face(patch, b));
    if fa == fb {
        return None;
    }
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); g.faces];
    for &id in &tree.folds {
        let (x, y) = g.edges[id].faces;
        adj[x].push((y, id));
        adj[y].push((x, id));
    }
    let mut via: Vec<Option<(usize, usize)>> = vec![None; g.faces];
    let mut queue = VecDeque::from([fa]);
    via[fa] = Some((fa, usize::MAX));
    while let Some(x) = queue.pop_front() {
        if x == fb {
            break;
        }
        for &(y, id) in &adj[x] {
            if via[y].is_none() {
                via[y] = Some((x, id));
                queue.push_back(y);
            }
        }
    }
    let mut path = Vec::new();
    let mut x = fb;
    while x != fa {
        let (prev, id) = via[x]?;
        path.push(id);
        x = prev;
    }
    path.sort_unstable();
    (!path.is_empty()).then(|| path[rng.gen_range(0..path.len())])
}

/// Re-derives the tabs of a finished patch with a new height cap, keeping the tree.
pub fn retab(mesh: &TriMesh, patch: &Patch2D, max_height: f64) -> Patch2D {
    let mut bare = patch.clone();
    bare.tabs.clear();
    bare.overlaps.clear();
    for c in bare.cuts.iter_mut() {
        c.tab = None;
    }
    place_glue_tabs(mesh, bare, max_height)
}

/// Mesh edge (low, high) to its 2D segment in face `f`.
pub fn edge_segment(mesh: &TriMesh, patch: &Patch2D, f: usize, verts: (usize, usize)) -> (P2, P2) {
    (patch.vertex_in_face(mesh, f, verts.0).unwrap(), patch.vertex_in_face(mesh, f, verts.1).unwrap())
}

/// Tab numbers keyed by cut edge id.
pub fn tab_numbers(patch: &Patch2D) -> BTreeMap<usize, usize> {
    patch.tabs.iter().map(|t| (t.edge, t.number)).collect()
}

/// Fold edges grouped per face, for adjacency checks.
pub fn fold_adjacency(patch: &Patch2D) -> HashMap<usize, Vec<usize>> {
    let mut m: HashMap<usize, Vec<usize>> = HashMap::new();
    for f in &patch.folds {
        m.entry(f.faces.0).or_default().push(f.faces.1);
        m.entry(f.faces.1).or_default().push(f.faces.0);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::{tetrahedron, unit_cube};

    #[test]
    fn dual_counts() {
        let g = build_dual(&tetrahedron()).unwrap();
        assert_eq!((g.faces, g.edges.len()), (4, 6));
        let g = build_dual(&unit_cube()).unwrap();
        assert_eq!((g.faces, g.edges.len()), (12, 18));
        let t = mst_unfold_tree(&g);
        assert_eq!((t.folds.len(), t.cuts.len()), (11, 7));
    }

    #[test]
    fn flat_edges_weigh_more_than_sharp() {
        let g = build_dual(&unit_cube()).unwrap();
        let flat = g.edges.iter().find(|e| (e.dihedral - PI).abs() < 1e-9).unwrap();
        let sharp = g.edges.iter().find(|e| (e.dihedral - PI / 2.0).abs() < 1e-9).unwrap();
        assert!(flat.weight > sharp.weight);
        // the cube is convex: every non-flat edge is a mountain
        assert!(g.edges.iter().all(|e| e.dihedral <= PI + 1e-9));
    }

    #[test]
    fn open_mesh_is_rejected() {
        let m = TriMesh::new(
            vec![crate::geom::P3::origin(), crate::geom::P3::new(1., 0., 0.), crate::geom::P3::new(0., 1., 0.)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(build_dual(&m), Err(UnfoldError::Topology(_))));
    }

    #[test]
    fn tetrahedron_unfolds_immediately() {
        let m = tetrahedron();
        let r = anneal_unfolding(&m, &AnnealParams::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.patch.tabs.len(), 3);
        let mut nums: Vec<usize> = r.patch.tabs.iter().map(|t| t.number).collect();
        nums.sort_unstable();
        assert_eq!(nums, vec![1, 2, 3]);
        assert!((r.patch.area() - m.surface_area()).abs() < 1e-9 * m.surface_area());
    }

    #[test]
    fn tab_shape() {
        let q = tab_quad(P2::new(0., 0.), P2::new(1., 0.), P2::new(0.5, 1.0), 0.3, [0.0, 0.0]);
        assert!(q[2].y < 0.0 && q[3].y < 0.0);
        assert!((q[3].x - 0.3 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cube_net_has_no_overlaps() {
        let m = unit_cube();
        let r = anneal_unfolding(&m, &AnnealParams::default()).unwrap();
        assert!(detect_overlaps(&r.patch).is_empty());
        assert_eq!(r.patch.tabs.len(), 7);
    }
}
