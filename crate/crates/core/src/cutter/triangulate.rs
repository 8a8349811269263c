//! Planar polygon triangulation for cut caps: zipper bands and ear clipping with holes.
//!
//! Outer loops are counter-clockwise, holes clockwise. Returned triangles index the
//! concatenation `outer ++ holes[0] ++ holes[1] ++ ...` and are counter-clockwise.

use crate::geom::{orient2d, point_in_triangle_2d, polygon_area, P2};

fn scale_of(pts: &[P2]) -> f64 {
    let mut lo = P2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = P2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm().max(1e-300)
}

fn strictly_cross(p0: &P2, p1: &P2, q0: &P2, q1: &P2, tol: f64) -> bool {
    let d1 = orient2d(q0, q1, p0);
    let d2 = orient2d(q0, q1, p1);
    let d3 = orient2d(p0, p1, q0);
    let d4 = orient2d(p0, p1, q1);
    ((d1 > tol && d2 < -tol) || (d1 < -tol && d2 > tol)) && ((d3 > tol && d4 < -tol) || (d3 < -tol && d4 > tol))
}

/// Triangulates one region (CCW outer, CW holes). One hole: zipper band, falling back
/// to ear clipping; otherwise ear clipping with bridged holes.
pub fn triangulate_region(outer: &[P2], holes: &[Vec<P2>]) -> Option<Vec<[usize; 3]>> {
    let tris = match holes.len() {
        1 => zipper(outer, &holes[0]).or_else(|| ear_clip_with_holes(outer, holes)),
        _ => ear_clip_with_holes(outer, holes),
    }?;
    let all: Vec<P2> = outer.iter().chain(holes.iter().flatten()).copied().collect();
    Some(delaunay_flips(&all, tris))
}

/// `d` lies strictly inside the circumcircle of the counter-clockwise triangle `abc`.
fn in_circumcircle(a: &P2, b: &P2, c: &P2, d: &P2) -> bool {
    let (ax, ay) = (a.x - d.x, a.y - d.y);
    let (bx, by) = (b.x - d.x, b.y - d.y);
    let (cx, cy) = (c.x - d.x, c.y - d.y);
    let det =
        (ax * ax + ay * ay) * (bx * cy - cx * by) - (bx * bx + by * by) * (ax * cy - cx * ay) + (cx * cx + cy * cy) * (ax * by - bx * ay);
    let s = scale_of(&[*a, *b, *c, *d]);
    det > 1e-12 * s * s * s * s
}

/// Lawson edge flips towards the constrained Delaunay triangulation: interior edges
/// whose opposite vertex falls in the neighbour's circumcircle are flipped when the
/// surrounding quad is convex. Boundary edges never move.
pub fn delaunay_flips(pts: &[P2], mut tris: Vec<[usize; 3]>) -> Vec<[usize; 3]> {
    use std::collections::HashMap;
    let area_eps = 1e-14 * scale_of(pts).powi(2);
    for _ in 0..4 * tris.len() + 8 {
        let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in tris.iter().enumerate() {
            for k in 0..3 {
                owner.insert((tri[k], tri[(k + 1) % 3]), t);
            }
        }
        let mut flipped = false;
        let mut keys: Vec<(usize, usize)> = owner.keys().copied().filter(|&(a, b)| a < b).collect();
        keys.sort_unstable();
        for (a, b) in keys {
            let (Some(&t1), Some(&t2)) = (owner.get(&(a, b)), owner.get(&(b, a))) else { continue };
            let c = tris[t1].iter().copied().find(|&x| x != a && x != b).unwrap();
            let d = tris[t2].iter().copied().find(|&x| x != a && x != b).unwrap();
            if !in_circumcircle(&pts[a], &pts[b], &pts[c], &pts[d]) {
                continue;
            }
            let (n1, n2) = ([c, a, d], [d, b, c]);
            if orient2d(&pts[n1[0]], &pts[n1[1]], &pts[n1[2]]) <= area_eps || orient2d(&pts[n2[0]], &pts[n2[1]], &pts[n2[2]]) <= area_eps {
                continue;
            }
            tris[t1] = n1;
            tris[t2] = n2;
            flipped = true;
            break;
        }
        if !flipped {
            break;
        }
    }
    tris
}

/// Advancing-front band between a CCW outer loop and a CW hole loop. Starts at the
/// closest vertex pair and always takes the smaller valid triangle.
pub fn zipper(outer: &[P2], hole: &[P2]) -> Option<Vec<[usize; 3]>> {
    let (m, k) = (outer.len(), hole.len());
    if m < 3 || k < 3 {
        return None;
    }
    let all: Vec<P2> = outer.iter().chain(hole).copied().collect();
    let scale = scale_of(&all);
    let area_eps = 1e-14 * scale * scale;
    let edges: Vec<(usize, usize)> = (0..m).map(|i| (i, (i + 1) % m)).chain((0..k).map(|j| (m + j, m + (j + 1) % k))).collect();
    let crosses = |a: usize, b: usize| {
        edges
            .iter()
            .any(|&(e0, e1)| e0 != a && e0 != b && e1 != a && e1 != b && strictly_cross(&all[a], &all[b], &all[e0], &all[e1], area_eps))
    };
    let (mut i0, mut j0, mut best) = (0, 0, f64::INFINITY);
    for (i, po) in outer.iter().enumerate() {
        for (j, ph) in hole.iter().enumerate() {
            let d = (po - ph).norm_squared();
            if d < best && !crosses(i, m + j) {
                best = d;
                i0 = i;
                j0 = j;
            }
        }
    }
    if !best.is_finite() {
        return None;
    }
    let o = |a: usize| (i0 + a) % m;
    let h = |b: usize| m + (j0 + k * 2 - b) % k;
    let (mut a, mut b) = (0usize, 0usize);
    let mut tris = Vec::with_capacity(m + k);
    while a < m || b < k {
        let mut options: Vec<(f64, [usize; 3], usize)> = Vec::new();
        if a < m {
            let t = [o(a), o(a + 1), h(b)];
            let area = orient2d(&all[t[0]], &all[t[1]], &all[t[2]]);
            let closing = a + 1 == m && b == k;
            if area > area_eps && (closing || !crosses(t[1], t[2])) {
                options.push((area, t, 0));
            }
        }
        if b < k {
            let t = [o(a), h(b + 1), h(b)];
            let area = orient2d(&all[t[0]], &all[t[1]], &all[t[2]]);
            let closing = a == m && b + 1 == k;
            if area > area_eps && (closing || !crosses(t[0], t[1])) {
                options.push((area, t, 1));
            }
        }
        let (_, t, which) = options.into_iter().min_by(|x, y| x.0.total_cmp(&y.0))?;
        tris.push(t);
        if which == 0 {
            a += 1;
        } else {
            b += 1;
        }
    }
    let region = polygon_area(outer) + polygon_area(hole);
    let sum: f64 = tris.iter().map(|t| orient2d(&all[t[0]], &all[t[1]], &all[t[2]]) * 0.5).sum();
    if (sum - region).abs() > 1e-9 * region.abs().max(area_eps) {
        return None;
    }
    Some(tris)
}

/// Ear clipping; holes are spliced into the outer loop through mutually visible bridges.
pub fn ear_clip_with_holes(outer: &[P2], holes: &[Vec<P2>]) -> Option<Vec<[usize; 3]>> {
    let all: Vec<P2> = outer.iter().chain(holes.iter().flatten()).copied().collect();
    let scale = scale_of(&all);
    let eps = 1e-12 * scale;
    let mut poly: Vec<usize> = (0..outer.len()).collect();
    let mut offsets = Vec::new();
    let mut off = outer.len();
    for h in holes {
        offsets.push(off);
        off += h.len();
    }
    // process holes right to left by their rightmost vertex
    let mut order: Vec<usize> = (0..holes.len()).collect();
    let rightmost =
        |hi: usize| (0..holes[hi].len()).max_by(|&a, &b| holes[hi][a].x.total_cmp(&holes[hi][b].x).then(b.cmp(&a))).unwrap_or(0);
    order.sort_by(|&a, &b| holes[b][rightmost(b)].x.total_cmp(&holes[a][rightmost(a)].x).then(a.cmp(&b)));
    let mut pending: Vec<usize> = order.clone();
    for &hi in &order {
        pending.retain(|&x| x != hi);
        let hole = &holes[hi];
        if hole.len() < 3 {
            return None;
        }
        let hm = rightmost(hi);
        let mid = offsets[hi] + hm;
        // segments that a bridge must not cross: current polygon plus unprocessed holes
        let mut segs: Vec<(usize, usize)> = (0..poly.len()).map(|i| (poly[i], poly[(i + 1) % poly.len()])).collect();
        for &ph in pending.iter().chain(std::iter::once(&hi)) {
            let n = holes[ph].len();
            segs.extend((0..n).map(|j| (offsets[ph] + j, offsets[ph] + (j + 1) % n)));
        }
        let visible = |pi: usize| {
            let target = poly[pi];
            if (all[target] - all[mid]).norm() <= eps {
                return true;
            }
            // the bridge must leave the polygon vertex into the interior wedge
            let prev = poly[(pi + poly.len() - 1) % poly.len()];
            let next = poly[(pi + 1) % poly.len()];
            let (a, v, c) = (all[prev], all[target], all[next]);
            let convex = orient2d(&a, &v, &c) > 0.0;
            let left_of = |p: &P2, q: &P2, r: &P2| orient2d(p, q, r) > 0.0;
            let in_wedge = if convex {
                left_of(&v, &c, &all[mid]) && left_of(&a, &v, &all[mid])
            } else {
                left_of(&v, &c, &all[mid]) || left_of(&a, &v, &all[mid])
            };
            in_wedge
                && !segs.iter().any(|&(s0, s1)| {
                    s0 != target
                        && s1 != target
                        && s0 != mid
                        && s1 != mid
                        && crate::geom::segments_intersect_2d(&all[target], &all[mid], &all[s0], &all[s1], 1e-12)
                })
        };
        let mut cand: Vec<usize> = (0..poly.len()).collect();
        cand.sort_by(|&a, &b| {
            (all[poly[a]] - all[mid]).norm_squared().total_cmp(&(all[poly[b]] - all[mid]).norm_squared()).then(a.cmp(&b))
        });
        let pi = cand.into_iter().find(|&pi| visible(pi))?;
        let n = hole.len();
        let mut spliced = Vec::with_capacity(poly.len() + n + 2);
        spliced.extend_from_slice(&poly[..=pi]);
        for s in 0..=n {
            spliced.push(offsets[hi] + (hm + s) % n);
        }
        spliced.push(poly[pi]);
        spliced.extend_from_slice(&poly[pi + 1..]);
        poly = spliced;
    }
    ear_clip(&all, poly, eps)
}

fn ear_clip(all: &[P2], mut poly: Vec<usize>, eps: f64) -> Option<Vec<[usize; 3]>> {
    let mut tris = Vec::new();
    let scale = scale_of(all);
    let area_eps = 1e-14 * scale * scale;
    while poly.len() > 3 {
        let n = poly.len();
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            let (a, b, c) = (poly[(i + n - 1) % n], poly[i], poly[(i + 1) % n]);
            let area = orient2d(&all[a], &all[b], &all[c]);
            if area <= area_eps {
                continue;
            }
            let blocked =
                poly.iter().any(|&q| q != a && q != b && q != c && point_in_triangle_2d(&all[q], &all[a], &all[b], &all[c], eps / scale));
            if blocked {
                continue;
            }
            // prefer well-shaped ears: largest minimum angle proxy
            let quality = area / ((all[a] - all[b]).norm_squared() + (all[b] - all[c]).norm_squared() + (all[c] - all[a]).norm_squared());
            if best.is_none_or(|(_, q)| quality > q) {
                best = Some((i, quality));
            }
        }
        let (i, _) = best?;
        let n = poly.len();
        tris.push([poly[(i + n - 1) % n], poly[i], poly[(i + 1) % n]]);
        poly.remove(i);
    }
    if orient2d(&all[poly[0]], &all[poly[1]], &all[poly[2]]) <= area_eps {
        return None;
    }
    tris.push([poly[0], poly[1], poly[2]]);
    Some(tris)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(n: usize, r: f64, ccw: bool) -> Vec<P2> {
        let mut v: Vec<P2> = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64 * std::f64::consts::TAU;
                P2::new(r * t.cos(), r * t.sin())
            })
            .collect();
        if !ccw {
            v.reverse();
        }
        v
    }

    fn total_area(pts: &[P2], tris: &[[usize; 3]]) -> f64 {
        tris.iter().map(|t| orient2d(&pts[t[0]], &pts[t[1]], &pts[t[2]]) * 0.5).sum()
    }

    #[test]
    fn zipper_annulus() {
        let (o, h) = (circle(24, 2.0, true), circle(10, 1.0, false));
        let t = zipper(&o, &h).unwrap();
        assert_eq!(t.len(), 34);
        let all: Vec<P2> = o.iter().chain(&h).copied().collect();
        assert!(t.iter().all(|t| orient2d(&all[t[0]], &all[t[1]], &all[t[2]]) > 0.0));
        assert!((total_area(&all, &t) - (polygon_area(&o) + polygon_area(&h))).abs() < 1e-9);
    }

    #[test]
    fn ear_clip_square_with_two_holes() {
        let outer = vec![P2::new(0., 0.), P2::new(10., 0.), P2::new(10., 10.), P2::new(0., 10.)];
        let hole = |cx: f64, cy: f64| {
            vec![P2::new(cx - 1., cy - 1.), P2::new(cx - 1., cy + 1.), P2::new(cx + 1., cy + 1.), P2::new(cx + 1., cy - 1.)]
        };
        let holes = vec![hole(3., 3.), hole(7., 6.)];
        let t = ear_clip_with_holes(&outer, &holes).unwrap();
        let all: Vec<P2> = outer.iter().chain(holes.iter().flatten()).copied().collect();
        assert_eq!(t.len(), 4 + 8 + 2 * 2 - 2);
        assert!((total_area(&all, &t) - 92.0).abs() < 1e-9);
    }

    #[test]
    fn ear_clip_concave() {
        let l = vec![P2::new(0., 0.), P2::new(2., 0.), P2::new(2., 1.), P2::new(1., 1.), P2::new(1., 2.), P2::new(0., 2.)];
        let t = ear_clip_with_holes(&l, &[]).unwrap();
        assert_eq!(t.len(), 4);
        assert!((total_area(&l, &t) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zipper_off_center_hole() {
        let o = circle(16, 3.0, true);
        let h: Vec<P2> = circle(8, 0.5, false).into_iter().map(|p| P2::new(p.x + 1.7, p.y - 0.4)).collect();
        let t = triangulate_region(&o, std::slice::from_ref(&h)).unwrap();
        let all: Vec<P2> = o.iter().chain(&h).copied().collect();
        assert!((total_area(&all, &t) - (polygon_area(&o) + polygon_area(&h))).abs() < 1e-9);
    }
}
