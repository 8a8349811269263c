//! Viewpoint entropy over a sphere of orthographic view directions.

use rayon::prelude::*;
use serde::Serialize;

use crate::geom::{any_orthogonal, tri_normal, P3, V3};
use crate::mesh::TriMesh;

pub const DEFAULT_SAMPLES: usize = 256;
pub const DEFAULT_RESOLUTION: usize = 512;
/// Frame half-size relative to the scene's bounding-sphere radius.
pub const FRAME_MARGIN: f64 = 1.2;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ViewError {
    #[error("negative fraction {0}")]
    Domain(f64),
}

/// Face of a multi-mesh scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FaceRef {
    pub mesh: usize,
    pub face: usize,
}

/// Projected-area fractions for one direction; background plus faces sum to one.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Fractions {
    pub background: f64,
    /// Visible faces sorted by reference.
    pub faces: Vec<(FaceRef, f64)>,
}

impl Fractions {
    /// Background first, then every visible face.
    pub fn values(&self) -> Vec<f64> {
        std::iter::once(self.background).chain(self.faces.iter().map(|f| f.1)).collect()
    }

    pub fn face_total(&self, pred: impl Fn(&FaceRef) -> bool) -> f64 {
        self.faces.iter().filter(|(r, _)| pred(r)).map(|f| f.1).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewSample {
    pub direction: [f64; 3],
    pub entropy: f64,
    pub visible_areas: Fractions,
}

impl ViewSample {
    pub fn dir(&self) -> V3 {
        V3::from(self.direction)
    }
}

/// Samples sorted by descending entropy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewRanking {
    pub samples: Vec<ViewSample>,
}

impl ViewRanking {
    pub fn best(&self) -> &ViewSample {
        &self.samples[0]
    }
}

/// Antipodally symmetric Fibonacci directions: a golden-angle spiral over the
/// upper hemisphere, completed with the antipode of each spiral point.
pub fn sample_directions(n: usize) -> Vec<V3> {
    let n = n.max(2);
    let upper = n.div_ceil(2);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let half: Vec<V3> = (0..upper)
        .map(|i| {
            let y = 1.0 - (2 * i + 1) as f64 / (2 * upper) as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            V3::new(r * phi.cos(), y, r * phi.sin()).normalize()
        })
        .collect();
    let mut out = half.clone();
    out.extend(half.iter().take(n - upper).map(|v| -v));
    out
}

/// Shannon entropy (natural log) of a distribution that includes the background term.
pub fn viewpoint_entropy(fractions: &[f64]) -> Result<f64, ViewError> {
    let mut h = 0.0;
    for &f in fractions {
        if f < 0.0 {
            return Err(ViewError::Domain(f));
        }
        if f > 0.0 {
            h -= f * f.ln();
        }
    }
    Ok(h.max(0.0))
}

/// Bounding sphere used for framing: box center and farthest vertex.
pub fn bounding_sphere(scene: &[&TriMesh]) -> (P3, f64) {
    let mut bb = crate::mesh::Aabb::empty();
    for m in scene {
        bb = bb.union(&m.aabb());
    }
    let c = bb.center();
    let r = scene.iter().flat_map(|m| m.vertices().iter()).map(|p| (p - c).norm()).fold(0.0, f64::max);
    (c, r)
}

/// Item-buffer fractions with the frame fit to the scene's bounding sphere.
pub fn visible_face_fractions(scene: &[&TriMesh], dir: &V3, resolution: usize) -> Fractions {
    let (c, r) = bounding_sphere(scene);
    visible_face_fractions_in_frame(scene, dir, resolution, &c, FRAME_MARGIN * r.max(1e-300))
}

/// Orthographic item-buffer rendering looking along `dir` at a square frame of
/// half-size `half` centered on `center`. Back faces (normal . dir >= 0) are culled.
pub fn visible_face_fractions_in_frame(scene: &[&TriMesh], dir: &V3, resolution: usize, center: &P3, half: f64) -> Fractions {
    let ids = item_buffer(scene, dir, resolution, center, half);
    let mut counts: std::collections::BTreeMap<FaceRef, usize> = Default::default();
    let mut bg = 0usize;
    for id in ids {
        match id {
            Some(r) => *counts.entry(r).or_default() += 1,
            None => bg += 1,
        }
    }
    let total = (resolution * resolution) as f64;
    Fractions { background: bg as f64 / total, faces: counts.into_iter().map(|(r, c)| (r, c as f64 / total)).collect() }
}

/// Image-plane basis `(u, v)` for a view direction.
pub fn view_basis(dir: &V3) -> (V3, V3) {
    let d = dir.normalize();
    let u = any_orthogonal(&d);
    (u, d.cross(&u))
}

/// Per-pixel visible face, row-major, `resolution^2` entries.
pub fn item_buffer(scene: &[&TriMesh], dir: &V3, resolution: usize, center: &P3, half: f64) -> Vec<Option<FaceRef>> {
    let d = dir.normalize();
    let (u, v) = view_basis(&d);
    let res = resolution;
    let scale = res as f64 / (2.0 * half);
    let mut depth = vec![f64::INFINITY; res * res];
    let mut ids: Vec<Option<FaceRef>> = vec![None; res * res];
    for (mi, mesh) in scene.iter().enumerate() {
        let proj: Vec<(f64, f64, f64)> = mesh
            .vertices()
            .iter()
            .map(|p| {
                let q = p - center;
                ((q.dot(&u) + half) * scale, (q.dot(&v) + half) * scale, q.dot(&d))
            })
            .collect();
        for (fi, f) in mesh.faces().iter().enumerate() {
            let [a, b, c] = f.map(|i| mesh.vertices()[i]);
            if tri_normal(&a, &b, &c).dot(&d) >= 0.0 {
                continue;
            }
            let (p0, p1, p2) = (proj[f[0]], proj[f[1]], proj[f[2]]);
            let area = (p1.0 - p0.0) * (p2.1 - p0.1) - (p1.1 - p0.1) * (p2.0 - p0.0);
            if area.abs() < 1e-300 {
                continue;
            }
            let xmin = p0.0.min(p1.0).min(p2.0).floor().max(0.0) as usize;
            let xmax = (p0.0.max(p1.0).max(p2.0).ceil() as isize).clamp(0, res as isize) as usize;
            let ymin = p0.1.min(p1.1).min(p2.1).floor().max(0.0) as usize;
            let ymax = (p0.1.max(p1.1).max(p2.1).ceil() as isize).clamp(0, res as isize) as usize;
            let inv = 1.0 / area;
            for py in ymin..ymax {
                let y = py as f64 + 0.5;
                for px in xmin..xmax {
                    let x = px as f64 + 0.5;
                    let w0 = ((p1.0 - x) * (p2.1 - y) - (p1.1 - y) * (p2.0 - x)) * inv;
                    let w1 = ((p2.0 - x) * (p0.1 - y) - (p2.1 - y) * (p0.0 - x)) * inv;
                    let w2 = 1.0 - w0 - w1;
                    if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                        continue;
                    }
                    let z = w0 * p0.2 + w1 * p1.2 + w2 * p2.2;
                    let k = py * res + px;
                    if z < depth[k] {
                        depth[k] = z;
                        ids[k] = Some(FaceRef { mesh: mi, face: fi });
                    }
                }
            }
        }
    }
    ids
}

/// Evaluates every direction and sorts by descending entropy, ties by the
/// lexicographically smaller direction.
pub fn rank_directions(scene: &[&TriMesh], dirs: &[V3], resolution: usize) -> ViewRanking {
    let (c, r) = bounding_sphere(scene);
    let half = FRAME_MARGIN * r.max(1e-300);
    let mut samples: Vec<ViewSample> = dirs
        .par_iter()
        .map(|d| {
            let fr = visible_face_fractions_in_frame(scene, d, resolution, &c, half);
            let entropy = viewpoint_entropy(&fr.values()).unwrap_or(0.0);
            ViewSample { direction: [d.x, d.y, d.z], entropy, visible_areas: fr }
        })
        .collect();
    samples.sort_by(|a, b| {
        b.entropy.total_cmp(&a.entropy).then_with(|| {
            a.direction.iter().zip(&b.direction).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    ViewRanking { samples }
}

/// Ranking over the default Fibonacci direction set of size `n_samples`.
pub fn best_viewpoint(level_meshes: &[&TriMesh], n_samples: usize, resolution: usize) -> ViewRanking {
    rank_directions(level_meshes, &sample_directions(n_samples), resolution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::{box_mesh, icosphere, unit_cube};

    #[test]
    fn two_directions_are_antipodal() {
        let d = sample_directions(2);
        assert_eq!(d.len(), 2);
        assert!((d[0] + d[1]).norm() < 1e-15);
    }

    #[test]
    fn fibonacci_spread() {
        let d = sample_directions(256);
        assert_eq!(d.len(), 256);
        let mut min = f64::INFINITY;
        for i in 0..d.len() {
            assert!((d[i].norm() - 1.0).abs() < 1e-12);
            for j in 0..i {
                min = min.min(d[i].angle(&d[j]));
            }
        }
        assert!(min.to_degrees() > 8.0, "min angle {}", min.to_degrees());
        assert_eq!(sample_directions(256), d);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(viewpoint_entropy(&[1.0]).unwrap(), 0.0);
        assert!((viewpoint_entropy(&[0.25; 4]).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!((viewpoint_entropy(&[0.5, 0.25, 0.25]).unwrap() - 1.039720770839918).abs() < 1e-12);
        assert!((viewpoint_entropy(&[0.0, 1.0]).unwrap()).abs() < 1e-15);
        assert_eq!(viewpoint_entropy(&[1.1, -0.1]), Err(ViewError::Domain(-0.1)));
    }

    #[test]
    fn unit_square_in_two_unit_frame() {
        let sq = TriMesh::new(
            vec![P3::new(0., 0., 0.), P3::new(1., 0., 0.), P3::new(1., 1., 0.), P3::new(0., 1., 0.)],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let res = 128;
        let fr = visible_face_fractions_in_frame(&[&sq], &V3::new(0., 0., -1.), res, &P3::new(0.5, 0.5, 0.0), 1.0);
        let face: f64 = fr.faces.iter().map(|f| f.1).sum();
        assert!((face - 0.25).abs() <= 2.0 / res as f64, "{face}");
        assert!((fr.background - 0.75).abs() <= 2.0 / res as f64);
        assert!((fr.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // seen from behind, both faces are culled
        let back = visible_face_fractions_in_frame(&[&sq], &V3::new(0., 0., 1.), res, &P3::new(0.5, 0.5, 0.0), 1.0);
        assert_eq!(back.background, 1.0);
    }

    #[test]
    fn cube_from_above_shows_top_pair() {
        let c = unit_cube();
        let fr = visible_face_fractions(&[&c], &V3::new(0., 0., -1.), 128);
        let faces: Vec<usize> = fr.faces.iter().map(|f| f.0.face).collect();
        let top: Vec<usize> = (0..12).filter(|&f| c.face_normal(f).z > 0.5).collect();
        assert_eq!(faces, top);
    }

    #[test]
    fn sphere_is_nearly_isotropic() {
        let s = icosphere(3, 1.0, P3::origin());
        let r = best_viewpoint(&[&s], 64, 256);
        let (hi, lo) = (r.samples[0].entropy, r.samples.last().unwrap().entropy);
        assert!((hi - lo) / hi < 0.05, "{hi} {lo}");
    }

    #[test]
    fn thin_plate_prefers_face_on() {
        let plate = box_mesh(P3::new(-1., -1., -0.01), P3::new(1., 1., 0.01));
        let r = best_viewpoint(&[&plate], 64, 256);
        let pos = |pred: &dyn Fn(&V3) -> bool| r.samples.iter().position(|s| pred(&s.dir())).unwrap();
        let worst_face_on = r.samples.iter().rposition(|s| s.dir().z.abs() > 0.9).unwrap();
        let best_edge_on = pos(&|d| d.z.abs() < 0.1);
        assert!(worst_face_on < best_edge_on);
    }

    #[test]
    fn ranking_is_sorted_and_unit() {
        let c = unit_cube();
        let r = best_viewpoint(&[&c], 32, 64);
        assert!(r.samples.windows(2).all(|w| w[0].entropy >= w[1].entropy));
        assert!(r.samples.iter().all(|s| (s.dir().norm() - 1.0).abs() < 1e-12));
    }
}
