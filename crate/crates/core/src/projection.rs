//! Rendering nested structures onto papermesh faces as single-hue ink channels,
//! combining the channels and viewing them through colored filters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cutter::{clip_and_stitch, make_envelope, CutError, CutPlane};
use crate::geom::{tri_normal, P2, P3, V3};
use crate::mesh::primitives::box_mesh;
use crate::mesh::{Aabb, TriMesh};

pub const DEFAULT_RESOLUTION: usize = 64;
/// Clipping-mode hit cutoff as a fraction of the papermesh diagonal.
pub const CLIP_FRACTION: f64 = 0.25;

#[derive(Debug, thiserror::Error)]
pub enum ProjectionError {
    #[error("mode error: {0}")]
    Mode(String),
    #[error("channel error: {0}")]
    Channel(String),
    #[error(transparent)]
    Cut(#[from] CutError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Cyan,
    Magenta,
    Yellow,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Cyan, Channel::Magenta, Channel::Yellow];

    /// Hue on the 0-240 scale.
    pub fn hue(self) -> f64 {
        match self {
            Channel::Cyan => 120.0,
            Channel::Magenta => 200.0,
            Channel::Yellow => 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Filter {
    Red,
    Green,
    Blue,
}

impl Filter {
    pub const ALL: [Filter; 3] = [Filter::Red, Filter::Green, Filter::Blue];

    /// The ink this filter turns dark.
    pub fn reveals(self) -> Channel {
        match self {
            Filter::Red => Channel::Cyan,
            Filter::Green => Channel::Magenta,
            Filter::Blue => Channel::Yellow,
        }
    }

    fn component(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Inflation,
    #[default]
    Clipping,
    Cube,
}

/// Rejects assignments that use a channel twice or more than three channels.
pub fn check_assignment(channels: &[Channel]) -> Result<(), ProjectionError> {
    if channels.len() > 3 {
        return Err(ProjectionError::Channel(format!("channel budget exceeded: {} groups on one papermesh", channels.len())));
    }
    for (i, c) in channels.iter().enumerate() {
        if channels[..i].contains(c) {
            return Err(ProjectionError::Channel(format!("channel {c:?} assigned twice on one papermesh")));
        }
    }
    Ok(())
}

/// Orthonormal in-plane frame of a triangle and the rectangle it spans.
#[derive(Debug, Clone, Copy)]
struct FaceFrame {
    origin: P3,
    e1: V3,
    e2: V3,
    lo: P2,
    hi: P2,
}

impl FaceFrame {
    fn new(t: &[P3; 3]) -> Self {
        let n = tri_normal(&t[0], &t[1], &t[2]);
        let e1 = (t[1] - t[0]).normalize();
        let e2 = n.cross(&e1);
        let loc = |p: &P3| P2::new((p - t[0]).dot(&e1), (p - t[0]).dot(&e2));
        let pts = [loc(&t[0]), loc(&t[1]), loc(&t[2])];
        let lo = P2::new(pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min), pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min));
        let hi =
            P2::new(pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max), pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max));
        FaceFrame { origin: t[0], e1, e2, lo, hi }
    }

    /// Normalized raster coordinates of a point in the plane.
    fn uv(&self, p: &P3) -> [f64; 2] {
        let d = p - self.origin;
        [(d.dot(&self.e1) - self.lo.x) / (self.hi.x - self.lo.x), (d.dot(&self.e2) - self.lo.y) / (self.hi.y - self.lo.y)]
    }

    fn point(&self, s: f64, t: f64) -> P3 {
        self.origin + self.e1 * (self.lo.x + s * (self.hi.x - self.lo.x)) + self.e2 * (self.lo.y + t * (self.hi.y - self.lo.y))
    }
}

fn barycentric(uv: &[[f64; 2]; 3], s: f64, t: f64) -> [f64; 3] {
    let [a, b, c] = uv;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((s - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (t - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (t - a[1]) - (s - a[0]) * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// One channel raster on one face. Texel `(i, j)` sits at raster coordinates
/// `((i + 0.5) / width, (j + 0.5) / height)`; `uv` places the face's corners there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceTexture {
    pub face: usize,
    pub channel: Channel,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub uv: [[f64; 2]; 3],
}

impl FaceTexture {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.width + i]
    }

    pub fn texel_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) / self.width as f64, (j as f64 + 0.5) / self.height as f64)
    }

    /// Whether texel `(i, j)` lies on the triangle.
    pub fn covers(&self, i: usize, j: usize) -> bool {
        let (s, t) = self.texel_center(i, j);
        barycentric(&self.uv, s, t).iter().all(|&l| l >= -1e-9)
    }
}

/// Where projection rays start for each face of a papermesh.
#[derive(Debug, Clone)]
pub struct ProjectionSurface {
    pub mode: Mode,
    /// The papermesh being textured.
    pub reference: TriMesh,
    /// Camera triangles, face-for-face with `reference`.
    pub surface: TriMesh,
    /// Bounding-cube piece for cube mode.
    pub cube: Option<TriMesh>,
    /// Hits farther than this are ignored.
    pub max_distance: f64,
    /// Distance mapped to zero proximity.
    pub norm: f64,
}

/// Bounding cube of a box: centered, with the longest extent as side.
pub fn bounding_cube(b: &Aabb) -> TriMesh {
    let c = b.center();
    let h = b.extents().max() / 2.0;
    box_mesh(c - V3::repeat(h), c + V3::repeat(h))
}

/// The bounding cube of `bounds` split by `plane` (below, above).
pub fn cube_pieces(bounds: &Aabb, plane: &CutPlane) -> Result<(TriMesh, TriMesh), ProjectionError> {
    let cube = bounding_cube(bounds);
    let h = clip_and_stitch(&make_envelope(&cube, &[])?, plane)?;
    Ok((h.below, h.above))
}

/// Builds the projection surface for one papermesh piece.
///
/// `pieces` are all pieces of the shell `mesh` belongs to (just `mesh` when uncut);
/// a cut shell needs its `cut` plane for cube mode. `clip` overrides the clipping
/// distance.
pub fn prepare_mode(
    mesh: &TriMesh,
    structure: &TriMesh,
    mode: Mode,
    pieces: &[&TriMesh],
    cut: Option<&CutPlane>,
    clip: Option<f64>,
) -> Result<ProjectionSurface, ProjectionError> {
    let diag = mesh.diagonal();
    let mut out =
        ProjectionSurface { mode, reference: mesh.clone(), surface: mesh.clone(), cube: None, max_distance: f64::INFINITY, norm: diag };
    match mode {
        Mode::Inflation => {
            if structure.face_count() > 0 {
                let bvh = structure.bvh();
                let pulled = mesh.vertices().par_iter().map(|p| bvh.closest_point(p).map_or(*p, |(_, q, _)| q)).collect();
                out.surface = mesh.with_vertices(pulled);
            }
        }
        Mode::Clipping => {
            let t = clip.unwrap_or(CLIP_FRACTION * diag);
            out.max_distance = t;
            out.norm = t.max(1e-300);
        }
        Mode::Cube => {
            let mut bounds = Aabb::empty();
            for p in pieces.iter().copied().chain(std::iter::once(mesh)) {
                bounds = bounds.union(&p.aabb());
            }
            out.cube = Some(if pieces.len() > 1 {
                let plane = cut.ok_or_else(|| ProjectionError::Mode("cube mode on a cut shell needs its cut plane".into()))?;
                let (below, above) = cube_pieces(&bounds, plane)?;
                let side: f64 = mesh.vertices().iter().map(|p| plane.signed_distance(p)).sum();
                if side < 0.0 {
                    below
                } else {
                    above
                }
            } else {
                bounding_cube(&bounds)
            });
            out.norm = bounds.diagonal();
        }
    }
    Ok(out)
}

/// Casts one orthographic ray per texel into the structure and records hit proximity
/// `1 - t / norm`; misses and texels off the triangle read zero.
pub fn project_structure(surface: &ProjectionSurface, structure: &TriMesh, channel: Channel, resolution: usize) -> Vec<FaceTexture> {
    let mesh = &surface.reference;
    let res = resolution.max(1);
    let delta = 1e-9 * surface.norm.max(1e-300);
    (0..mesh.face_count())
        .into_par_iter()
        .map(|f| {
            let tri = mesh.face_points(f);
            let frame = FaceFrame::new(&tri);
            let uv = [frame.uv(&tri[0]), frame.uv(&tri[1]), frame.uv(&tri[2])];
            let mut values = vec![0.0; res * res];
            if structure.face_count() == 0 {
                return FaceTexture { face: f, channel, width: res, height: res, values, uv };
            }
            let cam = surface.surface.face_points(f);
            let ref_n = mesh.face_normal(f);
            let cam_n = {
                let n = (cam[1] - cam[0]).cross(&(cam[2] - cam[0]));
                if n.norm() > 1e-12 * surface.norm * surface.norm {
                    n.normalize()
                } else {
                    ref_n
                }
            };
            let cube_axis = {
                let k = ref_n.iamax();
                let mut a = V3::zeros();
                a[k] = ref_n[k].signum();
                a
            };
            let bvh = structure.bvh();
            for j in 0..res {
                for i in 0..res {
                    let (s, t) = ((i as f64 + 0.5) / res as f64, (j as f64 + 0.5) / res as f64);
                    let l = barycentric(&uv, s, t);
                    if l.iter().any(|&x| x < -1e-9) {
                        continue;
                    }
                    let (origin, dir) = match surface.mode {
                        Mode::Cube => {
                            let p = frame.point(s, t);
                            let mut exit = 0.0f64;
                            if let Some(c) = &surface.cube {
                                c.bvh().for_each_hit(&p, &cube_axis, 0.0, f64::INFINITY, |_, h| exit = exit.max(h.t));
                            }
                            (p + cube_axis * exit, -cube_axis)
                        }
                        _ => {
                            let p = P3::from(cam[0].coords * l[0] + cam[1].coords * l[1] + cam[2].coords * l[2]);
                            (p, -cam_n)
                        }
                    };
                    let start = origin - dir * delta;
                    if let Some((_, h)) = bvh.first_hit(&start, &dir, 0.0, f64::INFINITY) {
                        let d = (h.t - delta).max(0.0);
                        if d < surface.max_distance {
                            values[j * res + i] = (1.0 - d / surface.norm).clamp(0.0, 1.0);
                        }
                    }
                }
            }
            FaceTexture { face: f, channel, width: res, height: res, values, uv }
        })
        .collect()
}

/// Single-hue sequential colormap on the 0-240 scale: `(hue, 240, 120 + 120 (1 - value))`.
pub fn colormap(value: f64, channel: Channel) -> [f64; 3] {
    [channel.hue(), 240.0, 120.0 + 120.0 * (1.0 - value.clamp(0.0, 1.0))]
}

/// Converts a hue/saturation/lightness triple on the 0-240 scale to RGB in `[0, 1]`.
/// Lightness 120 at full saturation is the pure hue; 240 is white.
pub fn hsl240_to_rgb(hsl: [f64; 3]) -> [f64; 3] {
    let h = (hsl[0] / 240.0).rem_euclid(1.0) * 6.0;
    let s = (hsl[1] / 240.0).clamp(0.0, 1.0);
    let l = (hsl[2] / 240.0).clamp(0.0, 1.0);
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    [r + m, g + m, b + m]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtlasFace {
    pub face: usize,
    pub uv: [[f64; 2]; 3],
    pub rgb: Vec<[f64; 3]>,
}

/// Combined RGB rasters of one papermesh, one per face.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TextureAtlas {
    pub width: usize,
    pub height: usize,
    pub faces: Vec<AtlasFace>,
}

/// Face placement inside the atlas image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartEntry {
    pub face: usize,
    /// Top-left pixel of the face's cell.
    pub cell: [usize; 2],
    /// Corner positions in atlas pixels.
    pub uv: [[f64; 2]; 3],
}

/// Normalizes every channel over the papermesh, colormaps it and multiplies the
/// RGB layers. Texels off the triangle stay white.
pub fn combine_channels(channels: &[(Channel, Vec<FaceTexture>)]) -> TextureAtlas {
    let Some((_, first)) = channels.first() else {
        return TextureAtlas { width: 0, height: 0, faces: Vec::new() };
    };
    let (w, h) = first.first().map_or((0, 0), |t| (t.width, t.height));
    let mut faces: Vec<AtlasFace> = first.iter().map(|t| AtlasFace { face: t.face, uv: t.uv, rgb: vec![[1.0; 3]; w * h] }).collect();
    for (channel, texs) in channels {
        let lo = texs.iter().flat_map(|t| t.values.iter().copied()).fold(f64::INFINITY, f64::min);
        let hi = texs.iter().flat_map(|t| t.values.iter().copied()).fold(f64::NEG_INFINITY, f64::max);
        let norm = |x: f64| if hi > lo { (x - lo) / (hi - lo) } else { x };
        for (face, t) in faces.iter_mut().zip(texs) {
            for j in 0..h {
                for i in 0..w {
                    if !t.covers(i, j) {
                        continue;
                    }
                    let c = hsl240_to_rgb(colormap(norm(t.get(i, j)), *channel));
                    let px = &mut face.rgb[j * w + i];
                    for k in 0..3 {
                        px[k] *= c[k];
                    }
                }
            }
        }
    }
    TextureAtlas { width: w, height: h, faces }
}

/// What a filter lets through: the matching RGB component of every texel.
pub fn apply_filter(atlas: &TextureAtlas, filter: Filter) -> Vec<Vec<f64>> {
    let k = filter.component();
    atlas.faces.iter().map(|f| f.rgb.iter().map(|px| px[k]).collect()).collect()
}

fn to_u8(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode_png(w: usize, h: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut wr = enc.write_header().expect("in-memory PNG header");
        wr.write_image_data(rgb).expect("in-memory PNG data");
    }
    out
}

impl TextureAtlas {
    fn columns(&self) -> usize {
        (self.faces.len() as f64).sqrt().ceil().max(1.0) as usize
    }

    /// PNG of a single face raster.
    pub fn face_png(&self, idx: usize) -> Vec<u8> {
        let bytes: Vec<u8> = self.faces[idx].rgb.iter().flat_map(|p| p.map(to_u8)).collect();
        encode_png(self.width, self.height, &bytes)
    }

    /// All face rasters on a square grid, plus where each face landed.
    pub fn to_png(&self) -> (Vec<u8>, Vec<ChartEntry>) {
        let cols = self.columns();
        let rows = self.faces.len().div_ceil(cols).max(1);
        let (iw, ih) = (cols * self.width.max(1), rows * self.height.max(1));
        let mut img = vec![255u8; iw * ih * 3];
        let mut chart = Vec::with_capacity(self.faces.len());
        for (n, f) in self.faces.iter().enumerate() {
            let (cx, cy) = ((n % cols) * self.width, (n / cols) * self.height);
            for j in 0..self.height {
                for i in 0..self.width {
                    let o = ((cy + j) * iw + cx + i) * 3;
                    img[o..o + 3].copy_from_slice(&f.rgb[j * self.width + i].map(to_u8));
                }
            }
            let uv = f.uv.map(|c| [cx as f64 + c[0] * self.width as f64, cy as f64 + c[1] * self.height as f64]);
            chart.push(ChartEntry { face: f.face, cell: [cx, cy], uv });
        }
        (encode_png(iw, ih, &img), chart)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::{icosphere, unit_cube};

    #[test]
    fn colormap_constants() {
        assert_eq!(colormap(1.0, Channel::Magenta), [200.0, 240.0, 120.0]);
        assert_eq!(colormap(0.5, Channel::Magenta), [200.0, 240.0, 180.0]);
        for c in Channel::ALL {
            assert_eq!(colormap(0.0, c)[2], 240.0);
            let w = hsl240_to_rgb(colormap(0.0, c));
            assert!(w.iter().all(|&x| (x - 1.0).abs() < 1e-12));
        }
        let m = hsl240_to_rgb([200.0, 240.0, 120.0]);
        assert!((m[0] - 1.0).abs() < 1e-12 && m[1].abs() < 1e-12 && (m[2] - 1.0).abs() < 1e-12);
        let c = hsl240_to_rgb(colormap(1.0, Channel::Cyan));
        assert!(c[0].abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12 && (c[2] - 1.0).abs() < 1e-12);
        let y = hsl240_to_rgb(colormap(1.0, Channel::Yellow));
        assert!((y[0] - 1.0).abs() < 1e-12 && (y[1] - 1.0).abs() < 1e-12 && y[2].abs() < 1e-12);
    }

    #[test]
    fn colormap_darkens_monotonically() {
        for c in Channel::ALL {
            let mut prev = f64::INFINITY;
            for k in 0..=20 {
                let v = colormap(k as f64 / 20.0, c)[2];
                assert!(v < prev);
                prev = v;
            }
        }
    }

    #[test]
    fn assignment_rules() {
        assert!(check_assignment(&[Channel::Cyan, Channel::Yellow]).is_ok());
        assert!(check_assignment(&[Channel::Cyan, Channel::Cyan]).is_err());
        let e = check_assignment(&[Channel::Cyan, Channel::Magenta, Channel::Yellow, Channel::Cyan]).unwrap_err();
        assert!(e.to_string().contains("channel budget exceeded"));
    }

    #[test]
    fn touching_structure_reads_one() {
        let cube = unit_cube();
        let inner = crate::mesh::primitives::box_mesh(P3::new(0.0, 0.0, 0.0), P3::new(1.0, 1.0, 0.5));
        let s = prepare_mode(&cube, &inner, Mode::Clipping, &[&cube], None, None).unwrap();
        let tex = project_structure(&s, &inner, Channel::Cyan, 8);
        // faces of the cube that coincide with the inner box
        let bottom = tex.iter().find(|t| cube.face_normal(t.face).z < -0.9).unwrap();
        for j in 0..8 {
            for i in 0..8 {
                if bottom.covers(i, j) {
                    assert!((bottom.get(i, j) - 1.0).abs() < 1e-6);
                } else {
                    assert_eq!(bottom.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn empty_structure_and_zero_clip_are_blank() {
        let cube = unit_cube();
        let empty = TriMesh::new(vec![], vec![]).unwrap();
        let s = prepare_mode(&cube, &empty, Mode::Inflation, &[&cube], None, None).unwrap();
        assert!(project_structure(&s, &empty, Channel::Cyan, 8).iter().all(|t| t.values.iter().all(|&v| v == 0.0)));
        let ball = icosphere(1, 0.2, P3::new(0.5, 0.5, 0.5));
        let s = prepare_mode(&cube, &ball, Mode::Clipping, &[&cube], None, Some(0.0)).unwrap();
        assert!(project_structure(&s, &ball, Channel::Cyan, 8).iter().all(|t| t.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn inflation_lands_on_structure() {
        let outer = icosphere(2, 3.0, P3::origin());
        let inner = icosphere(4, 1.0, P3::origin());
        let s = prepare_mode(&outer, &inner, Mode::Inflation, &[&outer], None, None).unwrap();
        for p in s.surface.vertices() {
            let r = p.coords.norm();
            assert!(r <= 1.0 + 1e-6 && r > 0.99, "{r}");
        }
    }

    #[test]
    fn cube_mode_requires_cut_for_pieces() {
        let a = crate::mesh::primitives::box_mesh(P3::new(0., 0., 0.), P3::new(1., 1., 0.5));
        let b = crate::mesh::primitives::box_mesh(P3::new(0., 0., 0.5), P3::new(1., 1., 1.));
        let ball = icosphere(1, 0.2, P3::new(0.5, 0.5, 0.5));
        assert!(matches!(prepare_mode(&a, &ball, Mode::Cube, &[&a, &b], None, None), Err(ProjectionError::Mode(_))));
        let plane = CutPlane::new(P3::new(0.5, 0.5, 0.5), V3::z());
        let s = prepare_mode(&b, &ball, Mode::Cube, &[&a, &b], Some(&plane), None).unwrap();
        let piece = s.cube.unwrap();
        assert!(piece.vertices().iter().all(|p| p.z >= 0.5 - 1e-12));
    }

    #[test]
    fn combine_is_identity_for_one_channel_and_darkens_for_more() {
        let cube = unit_cube();
        let ball = icosphere(2, 0.3, P3::new(0.5, 0.5, 0.5));
        let s = prepare_mode(&cube, &ball, Mode::Clipping, &[&cube], None, Some(1.0)).unwrap();
        let c = project_structure(&s, &ball, Channel::Cyan, 16);
        let m = project_structure(&s, &ball, Channel::Magenta, 16);
        let one = combine_channels(&[(Channel::Cyan, c.clone())]);
        let both = combine_channels(&[(Channel::Cyan, c), (Channel::Magenta, m)]);
        for (a, b) in one.faces.iter().zip(&both.faces) {
            for (x, y) in a.rgb.iter().zip(&b.rgb) {
                for k in 0..3 {
                    assert!(y[k] <= x[k] + 1e-12);
                }
            }
        }
        let (png_bytes, chart) = both.to_png();
        assert_eq!(&png_bytes[1..4], b"PNG");
        assert_eq!(chart.len(), 12);
    }
}
