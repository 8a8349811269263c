//! Page layout of unfolded patches and double-sided SVG output.

use std::fmt::Write as _;

use base64::Engine;
use nalgebra::Rotation2;
use serde::{Deserialize, Serialize};

use crate::geom::{convex_hull_2d, P2, V2};
use crate::projection::TextureAtlas;
use crate::unfold::{FoldKind, Patch2D};
use crate::TriMesh;

pub const MARGIN_MM: f64 = 10.0;
pub const CLEARANCE_MM: f64 = 5.0;
pub const TAB_MM: f64 = 4.0;
/// Smallest tab that still carries a legible number.
pub const MIN_TAB_MM: f64 = 2.0;
pub const CUT_STROKE_MM: f64 = 0.3;
pub const FOLD_STROKE_MM: f64 = 0.2;
pub const MOUNTAIN_DASH: &str = "3 1 0.6 1";
pub const VALLEY_DASH: &str = "2 1.2";

#[derive(Debug, thiserror::Error)]
pub enum LayoutError {
    #[error("scale error: {0}")]
    Scale(String),
    #[error("nothing to lay out")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paper {
    #[default]
    A4,
    A3,
}

impl Paper {
    /// Portrait width and height in millimetres.
    pub fn size_mm(self) -> (f64, f64) {
        match self {
            Paper::A4 => (210.0, 297.0),
            Paper::A3 => (297.0, 420.0),
        }
    }

    pub fn printable_mm(self) -> (f64, f64) {
        let (w, h) = self.size_mm();
        (w - 2.0 * MARGIN_MM, h - 2.0 * MARGIN_MM)
    }
}

/// Where one patch lands: `page_point = R(rotation) * flip(p) * scale + offset`, with
/// `flip(x, y) = (x, -y)` because patches are laid out y-up and pages run y-down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub patch: usize,
    pub page: usize,
    pub rotation: f64,
    pub offset: [f64; 2],
    /// Placed bounding box size in millimetres.
    pub size: [f64; 2],
}

impl Placement {
    pub fn apply(&self, p: P2, scale: f64) -> P2 {
        let q = Rotation2::new(self.rotation) * V2::new(p.x, -p.y) * scale;
        P2::new(q.x + self.offset[0], q.y + self.offset[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheetLayout {
    pub paper: Paper,
    /// Millimetres per model unit, shared by every patch.
    pub scale: f64,
    pub pages: usize,
    pub placements: Vec<Placement>,
}

fn patch_points(p: &Patch2D) -> Vec<P2> {
    p.faces.iter().flatten().chain(p.tabs.iter().flat_map(|t| t.quad.iter())).map(|q| P2::new(q[0], -q[1])).collect()
}

fn extents(pts: &[P2], angle: f64) -> (f64, f64, P2) {
    let r = Rotation2::new(angle);
    let mut lo = P2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = P2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        let q = r * p.coords;
        lo = P2::new(lo.x.min(q.x), lo.y.min(q.y));
        hi = P2::new(hi.x.max(q.x), hi.y.max(q.y));
    }
    (hi.x - lo.x, hi.y - lo.y, lo)
}

/// Rotation giving the minimum-area bounding rectangle, oriented to suit the page.
fn best_rotation(pts: &[P2], page: (f64, f64)) -> f64 {
    let hull = convex_hull_2d(pts);
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..hull.len() {
        let e = hull[(i + 1) % hull.len()] - hull[i];
        if e.norm() == 0.0 {
            continue;
        }
        let angle = -e.y.atan2(e.x);
        let (w, h, _) = extents(pts, angle);
        if w * h < best.0 - 1e-12 {
            best = (w * h, angle);
        }
    }
    let a = best.1;
    let fit = |ang: f64| {
        let (w, h, _) = extents(pts, ang);
        (page.0 / w).min(page.1 / h)
    };
    let b = a + std::f64::consts::FRAC_PI_2;
    if fit(b) > fit(a) + 1e-12 {
        b
    } else {
        a
    }
}

/// Chooses rotations, one uniform scale (the largest that fits every patch on a
/// page unless given) and shelf-packs the patches, tallest first.
pub fn paginate(patches: &[Patch2D], paper: Paper, scale: Option<f64>) -> Result<SheetLayout, LayoutError> {
    if patches.is_empty() {
        return Err(LayoutError::Empty);
    }
    let (pw, ph) = paper.printable_mm();
    let shapes: Vec<(f64, f64, f64, P2)> = patches
        .iter()
        .map(|p| {
            let pts = patch_points(p);
            let a = best_rotation(&pts, (pw, ph));
            let (w, h, lo) = extents(&pts, a);
            (a, w, h, lo)
        })
        .collect();
    let fit = shapes.iter().map(|s| (pw / s.1).min(ph / s.2)).fold(f64::INFINITY, f64::min);
    let scale = match scale {
        Some(s) if s > fit * (1.0 + 1e-9) => {
            return Err(LayoutError::Scale(format!("scale {s} mm/unit does not fit the {paper:?} page (max {fit:.4})")))
        }
        Some(s) => s,
        None => fit,
    };
    let mut bases: Vec<f64> = patches.iter().flat_map(|p| p.tabs.iter()).map(|t| t.edge_length).collect();
    if !bases.is_empty() {
        bases.sort_by(f64::total_cmp);
        let typical = (crate::unfold::TAB_FRACTION * bases[bases.len() / 2] * scale).min(TAB_MM);
        if typical < MIN_TAB_MM {
            return Err(LayoutError::Scale(format!("median glue tab is {typical:.2} mm at {scale:.4} mm/unit")));
        }
    }
    let mut order: Vec<usize> = (0..patches.len()).collect();
    order.sort_by(|&a, &b| shapes[b].2.total_cmp(&shapes[a].2).then(a.cmp(&b)));
    let tol = 1e-9 * (pw + ph);
    let mut placements = Vec::with_capacity(patches.len());
    let (mut page, mut x, mut y, mut shelf) = (0usize, 0.0f64, 0.0f64, 0.0f64);
    let mut page_used = false;
    for i in order {
        let (angle, w, h, lo) = shapes[i];
        let (w, h) = (w * scale, h * scale);
        if page_used && x + w > pw + tol {
            y += shelf + CLEARANCE_MM;
            x = 0.0;
            shelf = 0.0;
        }
        if page_used && y + h > ph + tol {
            page += 1;
            x = 0.0;
            y = 0.0;
            shelf = 0.0;
        }
        let offset = [MARGIN_MM + x - lo.x * scale, MARGIN_MM + y - lo.y * scale];
        placements.push(Placement { patch: i, page, rotation: angle, offset, size: [w, h] });
        x += w + CLEARANCE_MM;
        shelf = shelf.max(h);
        page_used = true;
    }
    placements.sort_by_key(|p| p.patch);
    Ok(SheetLayout { paper, scale, pages: page + 1, placements })
}

/// Caps tab heights at `max_height` (patch units) by truncating each trapezoid;
/// the result lies inside the original tab.
pub fn shrink_tabs(patch: &Patch2D, max_height: f64) -> Patch2D {
    let mut out = patch.clone();
    for t in out.tabs.iter_mut() {
        let a0 = V2::new(t.quad[0][0], t.quad[0][1]);
        let b0 = V2::new(t.quad[1][0], t.quad[1][1]);
        let (b1, a1) = (V2::new(t.quad[2][0], t.quad[2][1]), V2::new(t.quad[3][0], t.quad[3][1]));
        let dir = (b0 - a0).normalize();
        let h = ((a1 - a0) - dir * (a1 - a0).dot(&dir)).norm();
        if h > max_height {
            let s = max_height / h;
            let (na, nb) = (a0 + (a1 - a0) * s, b0 + (b1 - b0) * s);
            t.quad[3] = [na.x, na.y];
            t.quad[2] = [nb.x, nb.y];
        }
    }
    out
}

/// Front and back SVG of one sheet.
#[derive(Debug, Clone, PartialEq)]
pub struct PrintPage {
    pub index: usize,
    pub front: String,
    pub back: String,
}

/// One papermesh ready for printing.
pub struct PrintItem<'a> {
    pub label: &'a str,
    pub mesh: &'a TriMesh,
    pub patch: &'a Patch2D,
    pub atlas: Option<&'a TextureAtlas>,
}

fn num(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

fn pt(p: P2) -> String {
    format!("{},{}", num(p.x), num(p.y))
}

fn seg(out: &mut String, a: P2, b: P2, attrs: &str) {
    let _ = writeln!(out, r#"<line x1="{}" y1="{}" x2="{}" y2="{}" {attrs}/>"#, num(a.x), num(a.y), num(b.x), num(b.y));
}

fn text(out: &mut String, p: P2, size: f64, body: &str, attrs: &str) {
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="{}" font-family="sans-serif" text-anchor="middle" dominant-baseline="central" {attrs}>{body}</text>"#,
        num(p.x),
        num(p.y),
        num(size)
    );
}

fn header(paper: Paper) -> String {
    let (w, h) = paper.size_mm();
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" xmlns:xlink=\"http://www.w3.org/1999/xlink\" width=\"{w}mm\" height=\"{h}mm\" viewBox=\"0 0 {w} {h}\">\n"
    )
}

/// Round model length whose bar is at most 50 mm.
fn scale_bar_units(scale: f64) -> f64 {
    let raw = 50.0 / scale;
    let p = 10f64.powf(raw.log10().floor());
    [5.0, 2.0, 1.0].iter().map(|m| m * p).find(|&l| l <= raw).unwrap_or(p)
}

fn page_labels(out: &mut String, paper: Paper, scale: f64, model: &str, page: usize, pages: usize, side: &str) {
    let (w, h) = paper.size_mm();
    let units = scale_bar_units(scale);
    let bar = units * scale;
    let y = h - MARGIN_MM / 2.0;
    seg(out, P2::new(MARGIN_MM, y), P2::new(MARGIN_MM + bar, y), r#"class="scalebar" stroke="black" stroke-width="0.4""#);
    seg(out, P2::new(MARGIN_MM, y - 1.0), P2::new(MARGIN_MM, y + 1.0), r#"stroke="black" stroke-width="0.3""#);
    seg(out, P2::new(MARGIN_MM + bar, y - 1.0), P2::new(MARGIN_MM + bar, y + 1.0), r#"stroke="black" stroke-width="0.3""#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="2.5" font-family="sans-serif">{} units = {} mm</text>"#,
        num(MARGIN_MM + bar + 2.0),
        num(y + 0.9),
        units,
        num(bar)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="3" font-family="sans-serif" text-anchor="end">{} - page {}/{} - {} - 220 GSM, double-sided, long-edge binding</text>"#,
        num(w - MARGIN_MM),
        num(MARGIN_MM / 2.0 + 1.0),
        model,
        page + 1,
        pages,
        side
    );
}

fn centroid(pts: &[P2]) -> P2 {
    P2::from(pts.iter().map(|p| p.coords).sum::<V2>() / pts.len() as f64)
}

/// Affine map taking raster corners `uv` (unit square) to page points `dst`.
fn uv_affine(uv: &[[f64; 2]; 3], dst: &[P2; 3]) -> [f64; 6] {
    let (u0, u1, u2) = (uv[0], uv[1], uv[2]);
    let m = nalgebra::Matrix3::new(u0[0], u0[1], 1.0, u1[0], u1[1], 1.0, u2[0], u2[1], 1.0);
    let inv = m.try_inverse().unwrap_or_else(nalgebra::Matrix3::zeros);
    let xs = inv * nalgebra::Vector3::new(dst[0].x, dst[1].x, dst[2].x);
    let ys = inv * nalgebra::Vector3::new(dst[0].y, dst[1].y, dst[2].y);
    [xs[0], ys[0], xs[1], ys[1], xs[2], ys[2]]
}

/// Renders every page: textured faces, fold and cut lines, numbered tabs on the
/// front; the mirrored outline with numbered glue targets on the back.
pub fn render_pages(layout: &SheetLayout, items: &[PrintItem], model: &str) -> Vec<PrintPage> {
    let (page_w, _) = layout.paper.size_mm();
    let s = layout.scale;
    let mirror = |p: P2| P2::new(page_w - p.x, p.y);
    (0..layout.pages)
        .map(|page| {
            let mut front = header(layout.paper);
            let mut back = header(layout.paper);
            let _ = writeln!(front, r#"<g id="front">"#);
            let _ = writeln!(back, r#"<g id="back">"#);
            for pl in layout.placements.iter().filter(|p| p.page == page) {
                let item = &items[pl.patch];
                let patch = item.patch;
                let mesh = item.mesh;
                let place = |a: [f64; 2]| pl.apply(P2::new(a[0], a[1]), s);
                let _ = writeln!(front, r#"<g class="patch" data-label="{}">"#, item.label);
                let _ = writeln!(back, r#"<g class="patch" data-label="{}">"#, item.label);
                for (f, tri) in patch.faces.iter().enumerate() {
                    let p = tri.map(place);
                    let poly = format!("{} {} {}", pt(p[0]), pt(p[1]), pt(p[2]));
                    if let Some(atlas) = item.atlas.filter(|a| f < a.faces.len()) {
                        let id = format!("c{}_{}_{}", page, pl.patch, f);
                        let m = uv_affine(&atlas.faces[f].uv, &p);
                        let data = base64::engine::general_purpose::STANDARD.encode(atlas.face_png(f));
                        let _ = writeln!(front, r#"<clipPath id="{id}"><polygon points="{poly}"/></clipPath>"#);
                        let _ = writeln!(
                            front,
                            r#"<image class="texture" clip-path="url(#{id})" x="0" y="0" width="1" height="1" preserveAspectRatio="none" transform="matrix({} {} {} {} {} {})" xlink:href="data:image/png;base64,{data}"/>"#,
                            num_fine(m[0]),
                            num_fine(m[1]),
                            num_fine(m[2]),
                            num_fine(m[3]),
                            num(m[4]),
                            num(m[5])
                        );
                    }
                    let _ = writeln!(front, r#"<polygon class="face" data-face="{f}" points="{poly}" fill="none" stroke="none"/>"#);
                    let mp = p.map(mirror);
                    let _ = writeln!(
                        back,
                        r##"<polygon class="face" data-face="{f}" points="{} {} {}" fill="none" stroke="#bbbbbb" stroke-width="0.1"/>"##,
                        pt(mp[0]),
                        pt(mp[1]),
                        pt(mp[2])
                    );
                }
                for fold in &patch.folds {
                    let a = place(vertex_2d(mesh, patch, fold.faces.0, fold.verts.0));
                    let b = place(vertex_2d(mesh, patch, fold.faces.0, fold.verts.1));
                    let (class, dash) = match fold.kind {
                        FoldKind::Mountain => ("mountain", MOUNTAIN_DASH),
                        FoldKind::Valley => ("valley", VALLEY_DASH),
                    };
                    let attrs = format!(r#"class="{class}" stroke="black" stroke-width="{}" stroke-dasharray="{dash}""#, FOLD_STROKE_MM);
                    seg(&mut front, a, b, &attrs);
                }
                let cut_attrs = format!(r#"class="cut" stroke="black" stroke-width="{}" stroke-linecap="round""#, CUT_STROKE_MM);
                for cut in &patch.cuts {
                    let tab = cut.tab.map(|t| &patch.tabs[t]);
                    for f in [cut.faces.0, cut.faces.1] {
                        let a = place(vertex_2d(mesh, patch, f, cut.verts.0));
                        let b = place(vertex_2d(mesh, patch, f, cut.verts.1));
                        match tab {
                            Some(t) if t.host == f => {
                                let q = t.quad.map(place);
                                // the edge stays a cut outside the tab base and becomes a fold under it
                                let (near_a, near_b) = if (q[0] - a).norm() <= (q[0] - b).norm() { (a, b) } else { (b, a) };
                                if (q[0] - near_a).norm() > 1e-9 {
                                    seg(&mut front, near_a, q[0], &cut_attrs);
                                }
                                if (q[1] - near_b).norm() > 1e-9 {
                                    seg(&mut front, q[1], near_b, &cut_attrs);
                                }
                                seg(&mut front, q[0], q[1], &format!(r#"class="tabfold" stroke="black" stroke-width="{}" stroke-dasharray="{VALLEY_DASH}""#, FOLD_STROKE_MM));
                            }
                            _ => seg(&mut front, a, b, &cut_attrs),
                        }
                    }
                    if let Some(t) = tab {
                        let q = t.quad.map(place);
                        let _ = writeln!(front, r#"<g class="tab" data-number="{}" data-edge="{}">"#, t.number, t.edge);
                        seg(&mut front, q[1], q[2], &cut_attrs);
                        seg(&mut front, q[2], q[3], &cut_attrs);
                        seg(&mut front, q[3], q[0], &cut_attrs);
                        let height = ((q[3] - q[0]).norm() * (std::f64::consts::PI / 3.0).sin()).max(0.5);
                        text(&mut front, centroid(&q), (0.7 * height).min(3.0), &t.number.to_string(), "");
                        let _ = writeln!(front, "</g>");

                        // glue target on the partner copy, centered on the edge midpoint
                        let a = place(vertex_2d(mesh, patch, t.partner, cut.verts.0));
                        let b = place(vertex_2d(mesh, patch, t.partner, cut.verts.1));
                        let (ma, mb) = (mirror(a), mirror(b));
                        let mid = P2::from((ma.coords + mb.coords) / 2.0);
                        let len = (mb - ma).norm();
                        let ang = (mb.y - ma.y).atan2(mb.x - ma.x).to_degrees();
                        let (rw, rh) = (0.5 * len, (0.3 * len).min(3.0));
                        let _ = writeln!(
                            back,
                            r#"<g class="target" data-number="{}" data-edge="{}" data-cx="{}" data-cy="{}">"#,
                            t.number,
                            t.edge,
                            num(mid.x),
                            num(mid.y)
                        );
                        let _ = writeln!(
                            back,
                            r##"<rect x="{}" y="{}" width="{}" height="{}" transform="rotate({} {} {})" fill="none" stroke="#444444" stroke-width="0.2"/>"##,
                            num(mid.x - rw / 2.0),
                            num(mid.y - rh / 2.0),
                            num(rw),
                            num(rh),
                            num(ang),
                            num(mid.x),
                            num(mid.y)
                        );
                        text(&mut back, mid, (0.8 * rh).min(3.0), &t.number.to_string(), "");
                        let _ = writeln!(back, "</g>");
                    }
                }
                let _ = writeln!(front, "</g>");
                let _ = writeln!(back, "</g>");
            }
            page_labels(&mut front, layout.paper, s, model, page, layout.pages, "front");
            page_labels(&mut back, layout.paper, s, model, page, layout.pages, "back");
            front.push_str("</g>\n</svg>\n");
            back.push_str("</g>\n</svg>\n");
            PrintPage { index: page, front, back }
        })
        .collect()
}

fn num_fine(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

fn vertex_2d(mesh: &TriMesh, patch: &Patch2D, f: usize, v: usize) -> [f64; 2] {
    let p = patch.vertex_in_face(mesh, f, v).expect("vertex belongs to face");
    [p.x, p.y]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::tetrahedron;
    use crate::unfold::{anneal_unfolding, AnnealParams};

    fn tet_patch() -> (TriMesh, Patch2D) {
        let m = tetrahedron();
        let r = anneal_unfolding(&m, &AnnealParams::default()).unwrap();
        (m, r.patch)
    }

    #[test]
    fn single_patch_fills_one_page() {
        let (_, p) = tet_patch();
        let l = paginate(&[p], Paper::A4, None).unwrap();
        assert_eq!(l.pages, 1);
        let (pw, ph) = Paper::A4.printable_mm();
        let sz = l.placements[0].size;
        assert!(sz[0] <= pw + 1e-6 && sz[1] <= ph + 1e-6);
        assert!((sz[0] - pw).abs() < 1e-6 || (sz[1] - ph).abs() < 1e-6);
    }

    #[test]
    fn identical_patches_share_scale_and_stay_apart() {
        let (_, p) = tet_patch();
        let l = paginate(&[p.clone(), p], Paper::A4, None).unwrap();
        assert_eq!(l.placements.len(), 2);
        assert_eq!(l.placements[0].size, l.placements[1].size);
        assert_eq!(l.pages, 2);
        let small = paginate(&[tet_patch().1, tet_patch().1], Paper::A4, Some(l.scale / 3.0)).unwrap();
        assert_eq!(small.pages, 1);
    }

    #[test]
    fn oversized_scale_is_rejected() {
        let (_, p) = tet_patch();
        assert!(matches!(paginate(&[p], Paper::A4, Some(1e6)), Err(LayoutError::Scale(_))));
    }

    #[test]
    fn tiny_tabs_are_rejected() {
        let (_, mut p) = tet_patch();
        // a sliver far larger than the tabbed edges forces a tiny scale
        p.faces.push([[0.0, 0.0], [5000.0, 0.0], [0.0, 0.1]]);
        assert!(matches!(paginate(&[p], Paper::A4, None), Err(LayoutError::Scale(_))));
    }

    #[test]
    fn shrunk_tabs_stay_inside() {
        let (_, p) = tet_patch();
        let s = shrink_tabs(&p, 0.01);
        for (a, b) in p.tabs.iter().zip(&s.tabs) {
            assert_eq!(a.quad[0], b.quad[0]);
            let poly: Vec<P2> = a.quad.iter().map(|q| P2::new(q[0], q[1])).collect();
            for q in &b.quad {
                assert!(crate::geom::point_in_convex_hull(&P2::new(q[0], q[1]), &convex_hull_2d(&poly), 1e-9));
            }
        }
    }

    #[test]
    fn scale_bar_is_round() {
        assert_eq!(scale_bar_units(1.0), 50.0);
        assert_eq!(scale_bar_units(30.0), 1.0);
        assert_eq!(scale_bar_units(12.0), 2.0);
    }
}
