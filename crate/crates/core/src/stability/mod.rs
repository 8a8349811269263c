//! Gravity stability of a cut, nested assembly and the ranked search for stable cuts.

pub mod sim;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io::Write;

use nalgebra::Matrix3;
use serde::Serialize;

use crate::cutter::{clip_and_stitch, make_group_envelope, plan_cut_for_level, CutError, CutHalves, CutPlane};
use crate::geom::{any_orthogonal, convex_hull_2d, point_in_convex_hull, P2, P3, V3};
use crate::hierarchy::HierarchyTree;
use crate::mesh::{Aabb, MeshError, TriMesh};
use crate::viewpoint::ViewRanking;
pub use sim::{simulate, SimParams};

/// Center-of-mass drift, as a fraction of the assembly diagonal, that counts as falling apart.
pub const STABLE_DISPLACEMENT: f64 = 0.02;
/// Height of the ground-contact band as a fraction of the assembly height.
pub const GROUND_BAND: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum StabilityError {
    #[error("no stable cut for node {node} after {tried} candidates")]
    NoStableCut { node: usize, tried: usize, rejections: Vec<Rejection> },
    #[error("no ranking supplied for node {0}")]
    MissingRanking(usize),
    #[error(transparent)]
    Cut(#[from] CutError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone)]
pub struct RigidPart {
    pub id: usize,
    pub label: String,
    /// Hierarchy node the part came from.
    pub node: usize,
    pub mesh: TriMesh,
    pub mass: f64,
    pub com: P3,
    /// Inertia about the center of mass.
    pub inertia: Matrix3<f64>,
}

impl RigidPart {
    /// Uniform unit density: mass equals enclosed volume.
    pub fn from_mesh(id: usize, label: impl Into<String>, node: usize, mesh: TriMesh) -> Result<Self, MeshError> {
        let mp = mesh.mass_properties()?;
        if mp.volume <= 0.0 {
            return Err(MeshError::Degenerate(format!("part volume {} is not positive", mp.volume)));
        }
        Ok(RigidPart { id, label: label.into(), node, mesh, mass: mp.volume, com: mp.center, inertia: mp.inertia })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Body {
    Ground,
    Part(usize),
}

/// Point contact: `a` supports `b`, pushing it along `normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub a: Body,
    pub b: usize,
    pub point: P3,
    pub normal: V3,
}

#[derive(Debug, Clone)]
pub struct Assembly {
    pub parts: Vec<RigidPart>,
    pub contacts: Vec<Contact>,
    pub up: V3,
    pub diagonal: f64,
}

impl Assembly {
    pub fn new(parts: Vec<RigidPart>, contacts: Vec<Contact>, up: V3) -> Self {
        let mut bb = Aabb::empty();
        for p in &parts {
            bb = bb.union(&p.mesh.aabb());
        }
        Assembly { parts, contacts, up: up.normalize(), diagonal: bb.diagonal() }
    }

    /// Contacts touching `part` from either side.
    pub fn contacts_of(&self, part: usize) -> impl Iterator<Item = &Contact> {
        self.contacts.iter().filter(move |c| c.b == part || c.a == Body::Part(part))
    }

    pub fn ground_contacts(&self, part: usize) -> usize {
        self.contacts.iter().filter(|c| c.a == Body::Ground && c.b == part).count()
    }

    /// Parts in contact with `part` (excluding the ground).
    pub fn neighbors(&self, part: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .contacts_of(part)
            .filter_map(|c| match c.a {
                Body::Part(a) if a == part => Some(c.b),
                Body::Part(a) => Some(a),
                Body::Ground => None,
            })
            .filter(|&o| o != part)
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Adds ground contacts for the given parts: every vertex within the lowest
    /// [`GROUND_BAND`] of the assembly height, projected onto the ground plane.
    pub fn add_ground(&mut self, parts: &[usize]) {
        let up = self.up;
        let heights = |i: usize| self.parts[i].mesh.vertices().iter().map(move |p| p.coords.dot(&up));
        let lo = parts.iter().flat_map(|&i| heights(i)).fold(f64::INFINITY, f64::min);
        let hi = parts.iter().flat_map(|&i| heights(i)).fold(f64::NEG_INFINITY, f64::max);
        let band = lo + GROUND_BAND * (hi - lo);
        let mut new = Vec::new();
        for &i in parts {
            for p in self.parts[i].mesh.vertices() {
                let h = p.coords.dot(&up);
                if h <= band {
                    new.push(Contact { a: Body::Ground, b: i, point: p - up * (h - lo), normal: up });
                }
            }
        }
        self.contacts.extend(new);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub stable: bool,
    /// Largest center-of-mass drift over the horizon, as a fraction of the diagonal.
    pub max_displacement: f64,
    pub failing_parts: Vec<usize>,
    pub diverged: bool,
    #[serde(skip)]
    pub trace: Vec<f64>,
}

impl StabilityReport {
    /// Per-step maximum displacement as CSV.
    pub fn write_trace_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "step,max_displacement")?;
        for (i, d) in self.trace.iter().enumerate() {
            writeln!(w, "{i},{d}")?;
        }
        Ok(())
    }
}

pub fn simulate_stability(asm: &Assembly, params: &SimParams) -> StabilityReport {
    sim::simulate(asm, params)
}

fn bits(p: &P3) -> [u64; 3] {
    [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]
}

/// Splits a cut half into physical pieces: each outward component plus the uncut
/// cavities it encloses.
fn pieces(mesh: &TriMesh) -> Result<Vec<TriMesh>, MeshError> {
    let comps = mesh.connected_components();
    if comps.len() == 1 {
        return Ok(comps);
    }
    let vols: Vec<f64> = comps.iter().map(|c| c.signed_volume()).collect::<Result<_, _>>()?;
    let mut groups: Vec<Vec<usize>> = (0..comps.len()).filter(|&i| vols[i] > 0.0).map(|i| vec![i]).collect();
    for i in (0..comps.len()).filter(|&i| vols[i] <= 0.0) {
        let probe = comps[i].vertices()[0];
        let host = groups.iter_mut().filter(|g| comps[g[0]].point_inside(&probe)).min_by(|a, b| vols[a[0]].total_cmp(&vols[b[0]]));
        match host {
            Some(g) => g.push(i),
            None => return Err(MeshError::Topology("cavity shell outside every piece".into())),
        }
    }
    Ok(groups.into_iter().map(|g| TriMesh::concat(&g.iter().map(|&i| &comps[i]).collect::<Vec<_>>())).collect())
}

/// Rigid parts and contacts for the subtree below `top`.
///
/// Cut nodes contribute their halves (split into physical pieces), uncut nodes their
/// member meshes. Contacts: cap vertices between the halves of a cut, cavity face
/// centroids between a part and the nested parts it encloses, and a ground band
/// under the parts of `top`.
pub fn build_assembly(
    tree: &HierarchyTree,
    meshes: &[&TriMesh],
    cuts: &BTreeMap<usize, CutHalves>,
    top: usize,
    up: V3,
) -> Result<Assembly, StabilityError> {
    let mut parts: Vec<RigidPart> = Vec::new();
    let mut node_parts: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    // (below pieces, above pieces, cut) per cut node
    let mut cut_sides: Vec<(Vec<usize>, Vec<usize>, &CutHalves)> = Vec::new();
    let mut order = VecDeque::from([top]);
    while let Some(node) = order.pop_front() {
        let ids = node_parts.entry(node).or_default();
        if let Some(h) = cuts.get(&node) {
            let mut sides = (Vec::new(), Vec::new());
            for (side, half) in [("below", &h.below), ("above", &h.above)] {
                for (k, piece) in pieces(half)?.into_iter().enumerate() {
                    let id = parts.len();
                    parts.push(RigidPart::from_mesh(id, format!("node{node}/{side}{k}"), node, piece)?);
                    ids.push(id);
                    if side == "below" {
                        sides.0.push(id);
                    } else {
                        sides.1.push(id);
                    }
                }
            }
            cut_sides.push((sides.0, sides.1, h));
        } else {
            for &m in &tree.nodes[node].members {
                let id = parts.len();
                parts.push(RigidPart::from_mesh(id, format!("node{node}/mesh{m}"), node, meshes[m].clone())?);
                ids.push(id);
            }
        }
        order.extend(tree.nodes[node].children.iter().copied());
    }
    let mut contacts = Vec::new();
    for (below, above, h) in &cut_sides {
        let n = h.plane.normal();
        let mut owner: HashMap<[u64; 3], usize> = HashMap::new();
        for &b in above {
            for p in parts[b].mesh.vertices() {
                owner.insert(bits(p), b);
            }
        }
        for &a in below {
            let m = &parts[a].mesh;
            let mut seen = HashSet::new();
            for f in 0..m.face_count() {
                let fnrm = m.face_normal(f);
                // cap faces of the lower half face along +n and lie on the plane
                if fnrm.dot(&n) < 1.0 - 1e-9
                    || m.face_points(f).iter().any(|p| h.plane.signed_distance(p).abs() > 1e-7 * m.diagonal().max(1.0))
                {
                    continue;
                }
                for &v in &m.faces()[f] {
                    let p = m.vertices()[v];
                    if let Some(&b) = owner.get(&bits(&p)) {
                        if seen.insert((v, b)) {
                            contacts.push(Contact { a: Body::Part(a), b, point: p, normal: n });
                        }
                    }
                }
            }
        }
    }
    for (&node, ids) in &node_parts {
        let child_parts: Vec<usize> = tree.nodes[node].children.iter().flat_map(|c| node_parts[c].iter().copied()).collect();
        if child_parts.is_empty() {
            continue;
        }
        for &pi in ids {
            let m = &parts[pi].mesh;
            let tol = 1e-7 * m.diagonal().max(1.0);
            for f in 0..m.face_count() {
                let c = m.face_centroid(f);
                let n = m.face_normal(f);
                for &q in &child_parts {
                    let qm = &parts[q].mesh;
                    if !qm.aabb().padded(tol).contains(&c) {
                        continue;
                    }
                    if let Some((qf, _, d2)) = qm.bvh().closest_point(&c) {
                        if d2.sqrt() <= tol && qm.face_normal(qf).dot(&n) < -0.5 {
                            contacts.push(Contact { a: Body::Part(pi), b: q, point: c, normal: n });
                            break;
                        }
                    }
                }
            }
        }
    }
    let mut asm = Assembly::new(parts, contacts, up);
    let top_parts = node_parts[&top].clone();
    asm.add_ground(&top_parts);
    Ok(asm)
}

/// Non-negative combination test: is `target` inside the cone spanned by `dirs`?
fn in_cone(dirs: &[V3], target: &V3) -> bool {
    if dirs.is_empty() {
        return false;
    }
    let mut lam = vec![0.0; dirs.len()];
    let lip: f64 = dirs.iter().map(|d| d.norm_squared()).sum::<f64>().max(1e-300);
    let mut resid = -target;
    for _ in 0..20_000 {
        let mut changed = 0.0f64;
        for (i, d) in dirs.iter().enumerate() {
            let g = d.dot(&resid);
            let new = (lam[i] - g / d.norm_squared().max(1e-300)).max(0.0);
            let delta = new - lam[i];
            if delta != 0.0 {
                resid += d * delta;
                lam[i] = new;
                changed = changed.max(delta.abs());
            }
        }
        if resid.norm() < 1e-6 || changed < 1e-14 / lip {
            break;
        }
    }
    resid.norm() < 1e-4
}

/// Every contact seen from both sides: part-part contacts also appear with the
/// bodies swapped and the normal reversed.
/// Each contact seen from both sides; the flag marks the reversed view.
fn oriented_contacts(asm: &Assembly) -> impl Iterator<Item = (Contact, bool)> + '_ {
    asm.contacts.iter().flat_map(|c| {
        let flipped = match c.a {
            Body::Part(a) => Some((Contact { a: Body::Part(c.b), b: a, point: c.point, normal: -c.normal }, true)),
            Body::Ground => None,
        };
        std::iter::once((*c, false)).chain(flipped)
    })
}

/// Quasi-static oracle: every part must be held by its supporters.
///
/// A planar support (all supporting normals equal) needs the load's center of mass
/// to project, along gravity, inside the convex hull of the contact points, and the
/// tilt of the support to satisfy `tan(tilt) <= mu`. The load of a part is the part
/// plus everything it carries through near-vertical supports. Curved supports
/// (cradles) need `up` inside the cone of supporting normals.
pub fn static_equilibrium_check(asm: &Assembly, mu: f64) -> bool {
    let up = asm.up;
    (0..asm.parts.len()).all(|p| {
        // load carried by p
        let mut load = vec![p];
        let mut seen: HashSet<usize> = HashSet::from([p]);
        let mut i = 0;
        while i < load.len() {
            let cur = load[i];
            // a nested child never carries its container
            for (c, flipped) in oriented_contacts(asm) {
                let carried = c.a == Body::Part(cur) && c.normal.dot(&up) > 0.5;
                if carried && (!flipped || asm.parts[c.b].node == asm.parts[cur].node) && seen.insert(c.b) {
                    load.push(c.b);
                }
            }
            i += 1;
        }
        // bodies carried by p cannot hold it up
        let supports: Vec<Contact> = oriented_contacts(asm)
            .map(|(c, _)| c)
            .filter(|c| c.b == p && c.normal.dot(&up) > 1e-6 && !matches!(c.a, Body::Part(q) if seen.contains(&q)))
            .collect();
        if supports.is_empty() {
            return false;
        }
        let n0 = supports[0].normal;
        let planar = supports.iter().all(|c| (c.normal - n0).norm() < 1e-6);
        if !planar {
            let dirs: Vec<V3> = supports.iter().map(|c| c.normal).collect();
            return in_cone(&dirs, &up);
        }
        let cos = n0.dot(&up).clamp(-1.0, 1.0);
        let tan = (1.0 - cos * cos).max(0.0).sqrt() / cos;
        if tan > mu + 1e-9 {
            return false;
        }
        let mass: f64 = load.iter().map(|&q| asm.parts[q].mass).sum();
        let com = P3::from(load.iter().map(|&q| asm.parts[q].com.coords * asm.parts[q].mass).sum::<V3>() / mass);
        let p0 = supports[0].point;
        let t = (com - p0).dot(&n0) / up.dot(&n0);
        let foot = com - up * t;
        let e1 = any_orthogonal(&n0);
        let e2 = n0.cross(&e1);
        let to2 = |q: &P3| P2::new((q - p0).dot(&e1), (q - p0).dot(&e2));
        let hull = convex_hull_2d(&supports.iter().map(|c| to2(&c.point)).collect::<Vec<_>>());
        point_in_convex_hull(&to2(&foot), &hull, 1e-9 * asm.diagonal.max(1e-300))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub rank: usize,
    pub direction: [f64; 3],
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelDecision {
    pub node: usize,
    pub level: usize,
    pub plane: CutPlane,
    /// Zero-based rank of the accepted direction.
    pub rank: usize,
    pub rejections: Vec<Rejection>,
    pub report: StabilityReport,
}

#[derive(Debug, Clone)]
pub struct CutPlan {
    pub decisions: Vec<LevelDecision>,
    pub cuts: BTreeMap<usize, CutHalves>,
    /// Every per-level search ended stable.
    pub per_level_stable: bool,
    /// Simulation of the complete nested assembly.
    pub final_report: StabilityReport,
}

#[derive(Debug, Clone, Copy)]
pub struct PlanOptions {
    pub sim: SimParams,
    pub up: V3,
    /// Cap on candidates per node; `None` tries the whole ranking.
    pub max_candidates: Option<usize>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions { sim: SimParams::default(), up: V3::y(), max_candidates: None }
    }
}

/// Searches, innermost node first, for the best-ranked stable cut of every node
/// that has children. Each node's assembly contains all its nested parts, so the
/// root's accepted configuration is the full assembly.
pub fn plan_cuts(
    tree: &HierarchyTree,
    meshes: &[&TriMesh],
    rankings: &BTreeMap<usize, ViewRanking>,
    opts: &PlanOptions,
) -> Result<CutPlan, StabilityError> {
    let mut internal: Vec<usize> = tree.nodes.iter().filter(|n| !n.children.is_empty()).map(|n| n.id).collect();
    internal.sort_by(|a, b| tree.nodes[*b].level.cmp(&tree.nodes[*a].level).then(a.cmp(b)));
    let mut cuts: BTreeMap<usize, CutHalves> = BTreeMap::new();
    let mut decisions = Vec::new();
    for node in internal {
        let ranking = rankings.get(&node).ok_or(StabilityError::MissingRanking(node))?;
        let inner: Vec<&TriMesh> =
            tree.nodes[node].children.iter().flat_map(|c| tree.nodes[*c].members.iter().map(|&m| meshes[m])).collect();
        let outers: Vec<&TriMesh> = tree.nodes[node].members.iter().map(|&m| meshes[m]).collect();
        let env = make_group_envelope(&outers, &inner)?;
        let level_cut = plan_cut_for_level(&inner, ranking)?;
        let limit = opts.max_candidates.unwrap_or(usize::MAX);
        let mut rejections = Vec::new();
        let mut accepted = None;
        for (rank, plane) in level_cut.planes().enumerate().take(limit) {
            let halves = match clip_and_stitch(&env, &plane) {
                Ok(h) => h,
                Err(e) => {
                    rejections.push(Rejection { rank, direction: plane.normal, reason: e.to_string() });
                    continue;
                }
            };
            let mut trial = cuts.clone();
            trial.insert(node, halves);
            let asm = match build_assembly(tree, meshes, &trial, node, opts.up) {
                Ok(a) => a,
                Err(e) => {
                    rejections.push(Rejection { rank, direction: plane.normal, reason: e.to_string() });
                    continue;
                }
            };
            let report = simulate_stability(&asm, &opts.sim);
            if report.stable {
                accepted = Some((rank, plane, report, trial));
                break;
            }
            let reason = if report.diverged {
                "simulation diverged".to_string()
            } else {
                format!("unstable: displacement {:.4} of diagonal", report.max_displacement)
            };
            rejections.push(Rejection { rank, direction: plane.normal, reason });
        }
        match accepted {
            Some((rank, plane, report, trial)) => {
                cuts = trial;
                decisions.push(LevelDecision { node, level: tree.nodes[node].level, plane, rank, rejections, report });
            }
            None => {
                let tried = rejections.len();
                return Err(StabilityError::NoStableCut { node, tried, rejections });
            }
        }
    }
    let final_asm = build_assembly(tree, meshes, &cuts, tree.root, opts.up)?;
    let final_report = simulate_stability(&final_asm, &opts.sim);
    let per_level_stable = decisions.iter().all(|d| d.report.stable);
    Ok(CutPlan { decisions, cuts, per_level_stable, final_report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutter::make_envelope;
    use crate::mesh::primitives::{box_mesh, unit_cube};

    fn single(mesh: TriMesh) -> Assembly {
        let mut a = Assembly::new(vec![RigidPart::from_mesh(0, "p", 0, mesh).unwrap()], vec![], V3::y());
        a.add_ground(&[0]);
        a
    }

    #[test]
    fn block_on_ground_is_stable() {
        let a = single(unit_cube());
        assert_eq!(a.ground_contacts(0), 4);
        assert!(static_equilibrium_check(&a, 0.5));
        let r = simulate_stability(&a, &SimParams::default());
        assert!(r.stable, "{r:?}");
        assert!(r.max_displacement < 1e-3);
    }

    #[test]
    fn free_part_falls() {
        let a = Assembly::new(vec![RigidPart::from_mesh(0, "p", 0, unit_cube()).unwrap()], vec![], V3::y());
        assert!(!static_equilibrium_check(&a, 0.5));
        let r = simulate_stability(&a, &SimParams::default());
        assert!(!r.stable && !r.diverged);
        assert_eq!(r.failing_parts, vec![0]);
    }

    #[test]
    fn overhanging_block_topples() {
        let base = box_mesh(P3::new(0., 0., 0.), P3::new(1., 1., 1.));
        let top = box_mesh(P3::new(0.7, 1., 0.), P3::new(1.7, 2., 1.));
        let parts = vec![RigidPart::from_mesh(0, "base", 0, base).unwrap(), RigidPart::from_mesh(1, "top", 1, top).unwrap()];
        let mut contacts = Vec::new();
        for (x, z) in [(0.7, 0.0), (1.0, 0.0), (1.0, 1.0), (0.7, 1.0)] {
            contacts.push(Contact { a: Body::Part(0), b: 1, point: P3::new(x, 1.0, z), normal: V3::y() });
        }
        let mut a = Assembly::new(parts, contacts, V3::y());
        a.add_ground(&[0]);
        assert!(!static_equilibrium_check(&a, 0.5));
        assert!(!simulate_stability(&a, &SimParams::default()).stable);
    }

    #[test]
    fn horizontal_cut_rests() {
        let b = box_mesh(P3::new(0., 0., 0.), P3::new(1., 2., 1.));
        let h = clip_and_stitch(&make_envelope(&b, &[]).unwrap(), &CutPlane::new(P3::new(0.5, 1.0, 0.5), V3::y())).unwrap();
        let parts =
            [RigidPart::from_mesh(0, "below", 0, h.below.clone()).unwrap(), RigidPart::from_mesh(1, "above", 0, h.above.clone()).unwrap()];
        let tree = crate::hierarchy::build_hierarchy(&[&b]).unwrap();
        let cuts = BTreeMap::from([(0, h)]);
        let asm = build_assembly(&tree, &[&b], &cuts, 0, V3::y()).unwrap();
        assert_eq!(asm.parts.len(), parts.len());
        assert!(asm.contacts.iter().any(|c| c.a == Body::Part(0) && c.b == 1));
        assert!(static_equilibrium_check(&asm, 0.3));
        let r = simulate_stability(&asm, &SimParams { mu: 0.3, ..Default::default() });
        assert!(r.stable, "{r:?}");
        let mut csv = Vec::new();
        r.write_trace_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 601);
    }

    #[test]
    fn cone_membership() {
        assert!(in_cone(&[V3::new(1., 0.1, 0.), V3::new(-1., 0.1, 0.)], &V3::y()));
        assert!(!in_cone(&[V3::new(1., 0.1, 0.), V3::new(0.5, 1., 0.)], &V3::y()));
        assert!(in_cone(&[V3::y()], &V3::y()));
    }
}
