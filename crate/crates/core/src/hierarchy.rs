//! Nesting detection: which papermesh lies inside which.

use std::cell::RefCell;
use std::collections::HashMap;

use serde::Serialize;

use crate::mesh::{boxes_intersect_edges, TriMesh};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("nesting conflict between groups {a} and {b}: {reason}")]
    NestingConflict { a: usize, b: usize, reason: String },
    #[error("empty input")]
    Empty,
    #[error("invalid grouping: {0}")]
    Grouping(String),
}

/// `inner` lies inside `outer`: all of its vertices are inside and no edges touch.
pub fn mesh_inside(outer: &TriMesh, inner: &TriMesh) -> bool {
    if !outer.aabb().padded(1e-9 * outer.diagonal()).contains(&inner.aabb().min)
        || !outer.aabb().padded(1e-9 * outer.diagonal()).contains(&inner.aabb().max)
    {
        return false;
    }
    inner.vertices().iter().all(|v| outer.point_inside(v)) && !boxes_intersect_edges(outer, inner)
}

/// A group of meshes is inside another group if every vertex lies inside some
/// member of the outer group and no edges touch.
fn group_inside(outer: &[&TriMesh], inner: &[&TriMesh]) -> bool {
    if outer.len() == 1 && inner.len() == 1 {
        return mesh_inside(outer[0], inner[0]);
    }
    inner.iter().all(|m| m.vertices().iter().all(|v| outer.iter().any(|o| o.point_inside(v))))
        && !outer.iter().any(|o| inner.iter().any(|i| boxes_intersect_edges(o, i)))
}

fn groups_overlap(a: &[&TriMesh], b: &[&TriMesh]) -> bool {
    a.iter().any(|x| {
        b.iter().any(|y| {
            x.aabb().overlaps(&y.aabb())
                && (boxes_intersect_edges(x, y)
                    || y.vertices().iter().any(|v| x.point_inside(v))
                    || x.vertices().iter().any(|v| y.point_inside(v)))
        })
    })
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct HierarchyNode {
    pub id: usize,
    /// Indices into the mesh list given to the builder.
    pub members: Vec<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub level: usize,
}

/// Rooted nesting tree; node ids are group indices.
#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct HierarchyTree {
    pub nodes: Vec<HierarchyNode>,
    pub root: usize,
}

impl HierarchyTree {
    pub fn level(&self, node: usize) -> usize {
        self.nodes[node].level
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    /// Node ids grouped by level, root level first; each level sorted by id.
    pub fn levels(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.depth() + 1];
        for n in &self.nodes {
            out[n.level].push(n.id);
        }
        out
    }

    /// Node holding mesh `mesh`.
    pub fn node_of(&self, mesh: usize) -> Option<usize> {
        self.nodes.iter().position(|n| n.members.contains(&mesh))
    }

    /// Parent node of every mesh's node (`None` for the root), indexed by mesh.
    pub fn parent_function(&self) -> Vec<Option<usize>> {
        let n = self.nodes.iter().map(|n| n.members.iter().max().map_or(0, |m| m + 1)).max().unwrap_or(0);
        (0..n).map(|m| self.node_of(m).and_then(|id| self.nodes[id].parent)).collect()
    }

    /// All meshes in the subtree rooted at `node`, including its own members.
    pub fn subtree_meshes(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            out.extend(&self.nodes[n].members);
            stack.extend(&self.nodes[n].children);
        }
        out.sort_unstable();
        out
    }
}

/// One node per mesh.
pub fn build_hierarchy(meshes: &[&TriMesh]) -> Result<HierarchyTree, HierarchyError> {
    let groups: Vec<Vec<usize>> = (0..meshes.len()).map(|i| vec![i]).collect();
    build_grouped_hierarchy(meshes, &groups)
}

/// Builds the nesting tree by insertion, treating each group as one node.
///
/// Every mesh must appear in exactly one group. The result does not depend on
/// insertion order up to sibling order (children are sorted by id).
pub fn build_grouped_hierarchy(meshes: &[&TriMesh], groups: &[Vec<usize>]) -> Result<HierarchyTree, HierarchyError> {
    if groups.is_empty() || meshes.is_empty() {
        return Err(HierarchyError::Empty);
    }
    let mut seen = vec![false; meshes.len()];
    for g in groups {
        if g.is_empty() {
            return Err(HierarchyError::Grouping("empty group".into()));
        }
        for &m in g {
            if m >= meshes.len() || seen[m] {
                return Err(HierarchyError::Grouping(format!("mesh {m} missing or repeated")));
            }
            seen[m] = true;
        }
    }
    if let Some(m) = seen.iter().position(|s| !s) {
        return Err(HierarchyError::Grouping(format!("mesh {m} is in no group")));
    }
    let group_meshes: Vec<Vec<&TriMesh>> = groups.iter().map(|g| g.iter().map(|&i| meshes[i]).collect()).collect();
    let memo: RefCell<HashMap<(usize, usize), bool>> = RefCell::new(HashMap::new());
    // inside(a, b): group b lies inside group a
    let inside = |a: usize, b: usize| -> bool {
        if let Some(&r) = memo.borrow().get(&(a, b)) {
            return r;
        }
        let r = group_inside(&group_meshes[a], &group_meshes[b]);
        memo.borrow_mut().insert((a, b), r);
        r
    };
    let conflict = |a: usize, b: usize, reason: &str| HierarchyError::NestingConflict { a, b, reason: reason.into() };

    // Insert under a virtual super-root so that a container arriving late can
    // still adopt structures that were inserted as disjoint top-level nodes.
    let n = groups.len();
    let top = n;
    let mut parent: Vec<Option<usize>> = vec![None; n + 1];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    let contains = |a: usize, b: usize| a == top || inside(a, b);
    for g in 0..n {
        let mut cur = top;
        loop {
            let hosts: Vec<usize> = children[cur].iter().copied().filter(|&c| contains(c, g)).collect();
            match hosts.len() {
                0 => break,
                1 => cur = hosts[0],
                _ => return Err(conflict(hosts[0], hosts[1], "inside two siblings")),
            }
        }
        let siblings = std::mem::take(&mut children[cur]);
        let mut keep = Vec::new();
        for c in siblings {
            if inside(g, c) {
                parent[c] = Some(g);
                children[g].push(c);
            } else {
                if groups_overlap(&group_meshes[c], &group_meshes[g]) {
                    return Err(conflict(c, g, "surfaces overlap"));
                }
                keep.push(c);
            }
        }
        keep.push(g);
        children[cur] = keep;
        parent[g] = Some(cur);
    }
    let tops = &children[top];
    if tops.len() > 1 {
        let (a, b) = (tops[0].min(tops[1]), tops[0].max(tops[1]));
        return Err(conflict(a, b, "disjoint top-level structures need a common container or grouping"));
    }
    let root = tops[0];
    for p in parent.iter_mut() {
        if *p == Some(top) {
            *p = None;
        }
    }
    let mut nodes: Vec<HierarchyNode> = (0..n)
        .map(|i| {
            let mut ch = children[i].clone();
            ch.sort_unstable();
            HierarchyNode { id: i, members: groups[i].clone(), parent: parent[i], children: ch, level: 0 }
        })
        .collect();
    let mut stack = vec![(root, 0usize)];
    while let Some((id, lvl)) = stack.pop() {
        nodes[id].level = lvl;
        for &c in &nodes[id].children {
            stack.push((c, lvl + 1));
        }
    }
    Ok(HierarchyTree { nodes, root })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::P3;
    use crate::mesh::primitives::{box_mesh, icosphere};

    #[test]
    fn concentric_spheres() {
        let big = icosphere(2, 2.0, P3::origin());
        let small = icosphere(2, 1.0, P3::origin());
        assert!(mesh_inside(&big, &small));
        assert!(!mesh_inside(&small, &big));
        for order in [[&big, &small], [&small, &big]] {
            let t = build_hierarchy(&order).unwrap();
            let root = &t.nodes[t.root];
            assert_eq!(order[root.members[0]].diagonal(), big.diagonal());
            assert_eq!(t.depth(), 1);
        }
    }

    #[test]
    fn disjoint_spheres() {
        let a = icosphere(2, 1.0, P3::origin());
        let b = icosphere(2, 1.0, P3::new(5.0, 0.0, 0.0));
        assert!(!mesh_inside(&a, &b) && !mesh_inside(&b, &a));
        assert!(matches!(build_hierarchy(&[&a, &b]), Err(HierarchyError::NestingConflict { .. })));
    }

    #[test]
    fn overlapping_is_conflict() {
        let a = box_mesh(P3::origin(), P3::new(2., 2., 2.));
        let b = box_mesh(P3::new(1., 1., 1.), P3::new(3., 3., 3.));
        let c = box_mesh(P3::new(-5., -5., -5.), P3::new(5., 5., 5.));
        let err = build_hierarchy(&[&c, &a, &b]).unwrap_err();
        assert!(matches!(err, HierarchyError::NestingConflict { ref reason, .. } if reason == "surfaces overlap"));
    }

    #[test]
    fn three_level_chain_from_any_order() {
        let inner = box_mesh(P3::new(-1., -1., -1.), P3::new(1., 1., 1.));
        let middle = box_mesh(P3::new(-2., -2., -2.), P3::new(2., 2., 2.));
        let outer = box_mesh(P3::new(-3., -3., -3.), P3::new(3., 3., 3.));
        let t = build_hierarchy(&[&inner, &outer, &middle]).unwrap();
        assert_eq!(t.root, 1);
        assert_eq!(t.parent_function(), vec![Some(2), None, Some(1)]);
        assert_eq!(t.levels(), vec![vec![1], vec![2], vec![0]]);
    }

    #[test]
    fn late_container_reparents_children() {
        let outer = box_mesh(P3::new(-10., -10., -10.), P3::new(10., 10., 10.));
        let a = box_mesh(P3::new(-4., -1., -1.), P3::new(-2., 1., 1.));
        let b = box_mesh(P3::new(2., -1., -1.), P3::new(4., 1., 1.));
        let around_a = box_mesh(P3::new(-5., -2., -2.), P3::new(-1., 2., 2.));
        let t = build_hierarchy(&[&outer, &a, &b, &around_a]).unwrap();
        assert_eq!(t.parent_function(), vec![None, Some(3), Some(0), Some(0)]);
    }

    #[test]
    fn grouped_shells_hold_inner_structure() {
        // two half-shells side by side, and a small box straddling their shared wall
        let left = box_mesh(P3::new(-2., -2., -2.), P3::new(0., 2., 2.));
        let right = box_mesh(P3::new(0., -2., -2.), P3::new(2., 2., 2.));
        let brain = box_mesh(P3::new(-1., -0.5, -0.3), P3::new(1.3, 0.4, 0.6));
        let t = build_grouped_hierarchy(&[&left, &right, &brain], &[vec![0, 1], vec![2]]).unwrap();
        assert_eq!(t.root, 0);
        assert_eq!(t.nodes[1].level, 1);
        assert_eq!(t.subtree_meshes(0), vec![0, 1, 2]);
    }

    #[test]
    fn bad_grouping() {
        let a = icosphere(1, 1.0, P3::origin());
        assert!(matches!(build_grouped_hierarchy(&[&a], &[vec![0], vec![0]]), Err(HierarchyError::Grouping(_))));
    }
}
