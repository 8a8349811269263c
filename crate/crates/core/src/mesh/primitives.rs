//! Procedural meshes used as fixtures and as building blocks (wrap boxes, cubes).

use std::collections::HashMap;

use nalgebra::{Rotation3, Unit};
use rand::Rng;

use super::TriMesh;
use crate::cutter::triangulate::triangulate_region;
use crate::geom::{P2, P3, V3};

/// Axis-aligned box with outward winding, two triangles per side.
pub fn box_mesh(min: P3, max: P3) -> TriMesh {
    let v = |i: usize| {
        P3::new(if i & 1 == 0 { min.x } else { max.x }, if i & 2 == 0 { min.y } else { max.y }, if i & 4 == 0 { min.z } else { max.z })
    };
    let vertices = (0..8).map(v).collect();
    let faces = vec![
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    TriMesh::from_raw(vertices, faces)
}

/// The cube `[0,1]^3`.
pub fn unit_cube() -> TriMesh {
    box_mesh(P3::origin(), P3::new(1.0, 1.0, 1.0))
}

/// Regular-ish tetrahedron with outward winding.
pub fn tetrahedron() -> TriMesh {
    TriMesh::from_raw(
        vec![P3::new(1., 1., 1.), P3::new(1., -1., -1.), P3::new(-1., 1., -1.), P3::new(-1., -1., 1.)],
        vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
    )
}

/// Icosahedron refined `subdivisions` times and projected to a sphere.
/// Face count is `20 * 4^subdivisions`.
pub fn icosphere(subdivisions: u32, radius: f64, center: P3) -> TriMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<V3> = [
        (-1., phi, 0.),
        (1., phi, 0.),
        (-1., -phi, 0.),
        (1., -phi, 0.),
        (0., -1., phi),
        (0., 1., phi),
        (0., -1., -phi),
        (0., 1., -phi),
        (phi, 0., -1.),
        (phi, 0., 1.),
        (-phi, 0., -1.),
        (-phi, 0., 1.),
    ]
    .iter()
    .map(|&(x, y, z)| V3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<V3>| -> usize {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = verts.into_iter().map(|v| center + v * radius).collect();
    TriMesh::from_raw(vertices, faces)
}

/// 3x3 quad grid glued into a torus: V=9, E=27, F=18.
pub fn minimal_torus() -> TriMesh {
    let (big, small) = (2.0, 1.0);
    let idx = |i: usize, j: usize| (i % 3) * 3 + (j % 3);
    let mut vertices = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            let u = i as f64 / 3.0 * std::f64::consts::TAU;
            let v = j as f64 / 3.0 * std::f64::consts::TAU;
            vertices.push(P3::new((big + small * v.cos()) * u.cos(), (big + small * v.cos()) * u.sin(), small * v.sin()));
        }
    }
    let mut faces = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriMesh::from_raw(vertices, faces)
}

/// L-shaped prism: the L polygon (0,0)-(2,0)-(2,1)-(1,1)-(1,2)-(0,2) extruded along z by 1.
pub fn l_shape() -> TriMesh {
    let outline = [(0., 0.), (2., 0.), (2., 1.), (1., 1.), (1., 2.), (0., 2.)];
    let mut vertices = Vec::new();
    for z in [0.0, 1.0] {
        for &(x, y) in &outline {
            vertices.push(P3::new(x, y, z));
        }
    }
    let mut faces = Vec::new();
    // fan from the reflex corner (index 3)
    for &(a, b) in &[(4, 5), (5, 0), (0, 1), (1, 2)] {
        faces.push([3, b, a]);
        faces.push([9, a + 6, b + 6]);
    }
    for i in 0..6 {
        let j = (i + 1) % 6;
        faces.push([i, j, j + 6]);
        faces.push([i, j + 6, i + 6]);
    }
    TriMesh::from_raw(vertices, faces)
}

/// Prism over a simple CCW polygon in the xy-plane, spanning `z0..z1`.
pub fn extrude_polygon(outline: &[[f64; 2]], z0: f64, z1: f64) -> TriMesh {
    let pts: Vec<P2> = outline.iter().map(|p| P2::new(p[0], p[1])).collect();
    let cap = triangulate_region(&pts, &[]).expect("outline must be a simple CCW polygon");
    let n = outline.len();
    let mut vertices = Vec::with_capacity(2 * n);
    for z in [z0, z1] {
        vertices.extend(outline.iter().map(|p| P3::new(p[0], p[1], z)));
    }
    let mut faces = Vec::new();
    for t in &cap {
        faces.push([t[0], t[2], t[1]]);
        faces.push([t[0] + n, t[1] + n, t[2] + n]);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        faces.push([i, j, j + n]);
        faces.push([i, j + n, i + n]);
    }
    TriMesh::from_raw(vertices, faces)
}

/// Random convex mesh: an icosphere under a random anisotropic scale, rotation and shift.
pub fn random_convex_mesh(rng: &mut impl Rng) -> TriMesh {
    let s = V3::new(rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
    let axis = Unit::new_normalize(V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.1..1.0)));
    let rot = Rotation3::from_axis_angle(&axis, rng.gen_range(0.0..std::f64::consts::TAU));
    let t = V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    icosphere(2, 1.0, P3::origin()).map_vertices(|p| P3::from(rot * p.coords.component_mul(&s) + t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_are_closed_and_outward() {
        for m in [unit_cube(), tetrahedron(), icosphere(2, 1.0, P3::origin()), l_shape()] {
            m.require_closed().unwrap();
            assert!(m.signed_volume().unwrap() > 0.0);
            assert_eq!(m.euler_genus().unwrap(), 0);
        }
        assert!((l_shape().signed_volume().unwrap() - 3.0).abs() < 1e-12);
        minimal_torus().require_closed().unwrap();
    }
}
