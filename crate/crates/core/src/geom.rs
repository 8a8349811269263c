//! Low-level geometric predicates shared by the mesh, cutting, and unfolding code.
//!
//! All predicates are tolerance based. Callers pass an absolute epsilon scaled to
//! the model size where one is needed.

use nalgebra::{Point2, Point3, Vector2, Vector3};

pub type P3 = Point3<f64>;
pub type V3 = Vector3<f64>;
pub type P2 = Point2<f64>;
pub type V2 = Vector2<f64>;

/// Unnormalized triangle normal, `(b - a) x (c - a)`. Its length is twice the area.
#[inline]
pub fn tri_normal(a: &P3, b: &P3, c: &P3) -> V3 {
    (b - a).cross(&(c - a))
}

#[inline]
pub fn tri_area(a: &P3, b: &P3, c: &P3) -> f64 {
    0.5 * tri_normal(a, b, c).norm()
}

#[inline]
pub fn centroid(a: &P3, b: &P3, c: &P3) -> P3 {
    P3::from((a.coords + b.coords + c.coords) / 3.0)
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(p: &P3, a: &P3, b: &P3, c: &P3) -> P3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// A ray/triangle hit: distance along the ray and barycentrics of the hit point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub u: f64,
    pub v: f64,
}

impl RayHit {
    /// Smallest barycentric coordinate; near zero means the ray grazes an edge.
    pub fn edge_margin(&self) -> f64 {
        self.u.min(self.v).min(1.0 - self.u - self.v)
    }
}

/// Two-sided Moller-Trumbore intersection. Returns hits with any `t`; callers filter.
pub fn ray_triangle(orig: &P3, dir: &V3, a: &P3, b: &P3, c: &P3) -> Option<RayHit> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    let scale = e1.norm() * e2.norm() * dir.norm();
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = orig - a;
    let u = tvec.dot(&pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    Some(RayHit { t, u, v })
}

/// Minimum distance between segments `p0p1` and `q0q1`.
pub fn segment_segment_distance(p0: &P3, p1: &P3, q0: &P3, q1: &P3) -> f64 {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let eps = 1e-300;
    let (s, t);
    if a <= eps && e <= eps {
        return r.norm();
    }
    if a <= eps {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= eps {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 1e-18 * a * e { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    let c1 = p0 + d1 * s;
    let c2 = q0 + d2 * t;
    (c1 - c2).norm()
}

/// Drops the coordinate along the dominant axis of `n`.
fn project_dominant(n: &V3, p: &P3) -> P2 {
    let ax = n.x.abs();
    let ay = n.y.abs();
    let az = n.z.abs();
    if ax >= ay && ax >= az {
        P2::new(p.y, p.z)
    } else if ay >= az {
        P2::new(p.z, p.x)
    } else {
        P2::new(p.x, p.y)
    }
}

#[inline]
pub fn orient2d(a: &P2, b: &P2, c: &P2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Closed segment intersection in 2D (touching counts).
pub fn segments_intersect_2d(p0: &P2, p1: &P2, q0: &P2, q1: &P2, eps: f64) -> bool {
    let d1 = orient2d(q0, q1, p0);
    let d2 = orient2d(q0, q1, p1);
    let d3 = orient2d(p0, p1, q0);
    let d4 = orient2d(p0, p1, q1);
    let lp = (p1 - p0).norm().max(1e-300);
    let lq = (q1 - q0).norm().max(1e-300);
    let (e1, e2) = (eps * lq, eps * lp);
    if ((d1 > e1 && d2 < -e1) || (d1 < -e1 && d2 > e1)) && ((d3 > e2 && d4 < -e2) || (d3 < -e2 && d4 > e2)) {
        return true;
    }
    let on = |a: &P2, b: &P2, p: &P2, d: f64, e: f64| {
        d.abs() <= e && p.x >= a.x.min(b.x) - eps && p.x <= a.x.max(b.x) + eps && p.y >= a.y.min(b.y) - eps && p.y <= a.y.max(b.y) + eps
    };
    on(q0, q1, p0, d1, e1) || on(q0, q1, p1, d2, e1) || on(p0, p1, q0, d3, e2) || on(p0, p1, q1, d4, e2)
}

/// Closed point-in-triangle test in 2D, orientation agnostic.
pub fn point_in_triangle_2d(p: &P2, a: &P2, b: &P2, c: &P2, eps: f64) -> bool {
    let area = orient2d(a, b, c);
    let s = if area < 0.0 { -1.0 } else { 1.0 };
    let w0 = s * orient2d(b, c, p);
    let w1 = s * orient2d(c, a, p);
    let w2 = s * orient2d(a, b, p);
    let tol = -eps * area.abs().sqrt().max(1e-300);
    w0 >= tol && w1 >= tol && w2 >= tol
}

fn coplanar_triangles_intersect(n: &V3, a: &[P3; 3], b: &[P3; 3], eps: f64) -> bool {
    let pa: Vec<P2> = a.iter().map(|p| project_dominant(n, p)).collect();
    let pb: Vec<P2> = b.iter().map(|p| project_dominant(n, p)).collect();
    for i in 0..3 {
        for j in 0..3 {
            if segments_intersect_2d(&pa[i], &pa[(i + 1) % 3], &pb[j], &pb[(j + 1) % 3], eps) {
                return true;
            }
        }
    }
    point_in_triangle_2d(&pa[0], &pb[0], &pb[1], &pb[2], eps) || point_in_triangle_2d(&pb[0], &pa[0], &pa[1], &pa[2], eps)
}

/// Closed segment/triangle intersection test.
pub fn segment_triangle_intersect(p: &P3, q: &P3, tri: &[P3; 3], eps: f64) -> bool {
    let n = tri_normal(&tri[0], &tri[1], &tri[2]);
    let nl = n.norm();
    if nl <= 1e-300 {
        return false;
    }
    let nu = n / nl;
    let d0 = nu.dot(&(p - tri[0]));
    let d1 = nu.dot(&(q - tri[0]));
    if (d0 > eps && d1 > eps) || (d0 < -eps && d1 < -eps) {
        return false;
    }
    if d0.abs() <= eps && d1.abs() <= eps {
        let t: Vec<P2> = tri.iter().map(|v| project_dominant(&n, v)).collect();
        let (p2, q2) = (project_dominant(&n, p), project_dominant(&n, q));
        if point_in_triangle_2d(&p2, &t[0], &t[1], &t[2], eps) {
            return true;
        }
        return (0..3).any(|i| segments_intersect_2d(&p2, &q2, &t[i], &t[(i + 1) % 3], eps));
    }
    let x = if (d0 - d1).abs() <= 1e-300 { *p } else { p + (q - p) * (d0 / (d0 - d1)) };
    point_on_triangle(&x, tri, &n, eps)
}

fn point_on_triangle(x: &P3, tri: &[P3; 3], n: &V3, eps: f64) -> bool {
    let nn = n.norm_squared();
    let w0 = tri_normal(&tri[1], &tri[2], x).dot(n) / nn;
    let w1 = tri_normal(&tri[2], &tri[0], x).dot(n) / nn;
    let w2 = 1.0 - w0 - w1;
    let scale = nn.sqrt().sqrt().max(1e-300);
    let tol = -eps / scale;
    w0 >= tol && w1 >= tol && w2 >= tol
}

/// Closed triangle/triangle intersection (touching counts as intersecting).
pub fn triangles_intersect(a: &[P3; 3], b: &[P3; 3], eps: f64) -> bool {
    let nb = tri_normal(&b[0], &b[1], &b[2]);
    let na = tri_normal(&a[0], &a[1], &a[2]);
    let (lb, la) = (nb.norm(), na.norm());
    if lb <= 1e-300 || la <= 1e-300 {
        return false;
    }
    let nbu = nb / lb;
    let da: Vec<f64> = a.iter().map(|p| nbu.dot(&(p - b[0]))).collect();
    if da.iter().all(|d| *d > eps) || da.iter().all(|d| *d < -eps) {
        return false;
    }
    let nau = na / la;
    let db: Vec<f64> = b.iter().map(|p| nau.dot(&(p - a[0]))).collect();
    if db.iter().all(|d| *d > eps) || db.iter().all(|d| *d < -eps) {
        return false;
    }
    if da.iter().all(|d| d.abs() <= eps) {
        return coplanar_triangles_intersect(&nb, a, b, eps);
    }
    (0..3).any(|i| segment_triangle_intersect(&a[i], &a[(i + 1) % 3], b, eps))
        || (0..3).any(|i| segment_triangle_intersect(&b[i], &b[(i + 1) % 3], a, eps))
}

/// Shrinks a triangle toward its centroid by `factor` (e.g. `1e-6`).
pub fn shrink_triangle(t: &[P3; 3], factor: f64) -> [P3; 3] {
    let c = centroid(&t[0], &t[1], &t[2]);
    [t[0] + (c - t[0]) * factor, t[1] + (c - t[1]) * factor, t[2] + (c - t[2]) * factor]
}

/// Signed area of a simple polygon (positive for counter-clockwise).
pub fn polygon_area(poly: &[P2]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = &poly[i];
        let b = &poly[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

/// Even-odd point in polygon.
pub fn point_in_polygon(p: &P2, poly: &[P2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (&poly[i], &poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Penetration depth of two convex polygons along their least-overlapping axis
/// (separating axis theorem). Non-positive means they are disjoint or only touch.
pub fn convex_penetration(a: &[P2], b: &[P2]) -> f64 {
    let mut min_overlap = f64::INFINITY;
    for poly in [a, b] {
        let n = poly.len();
        for i in 0..n {
            let e = poly[(i + 1) % n] - poly[i];
            let len = e.norm();
            if len <= 1e-300 {
                continue;
            }
            let axis = V2::new(-e.y, e.x) / len;
            let (amin, amax) = project_polygon(a, &axis);
            let (bmin, bmax) = project_polygon(b, &axis);
            let overlap = amax.min(bmax) - amin.max(bmin);
            if overlap < min_overlap {
                min_overlap = overlap;
            }
            if min_overlap <= 0.0 {
                return min_overlap;
            }
        }
    }
    min_overlap
}

fn project_polygon(p: &[P2], axis: &V2) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in p {
        let d = v.coords.dot(axis);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

/// Area of the intersection of two convex polygons (Sutherland-Hodgman).
pub fn convex_intersection_area(a: &[P2], b: &[P2]) -> f64 {
    let a = ccw(a);
    let b = ccw(b);
    let mut out: Vec<P2> = a;
    let n = b.len();
    for i in 0..n {
        if out.is_empty() {
            break;
        }
        let (c0, c1) = (b[i], b[(i + 1) % n]);
        let input = std::mem::take(&mut out);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let dc = orient2d(&c0, &c1, &cur);
            let dp = orient2d(&c0, &c1, &prev);
            if dc >= 0.0 {
                if dp < 0.0 {
                    out.push(prev + (cur - prev) * (dp / (dp - dc)));
                }
                out.push(cur);
            } else if dp >= 0.0 {
                out.push(prev + (cur - prev) * (dp / (dp - dc)));
            }
        }
    }
    if out.len() < 3 {
        0.0
    } else {
        polygon_area(&out).abs()
    }
}

fn ccw(p: &[P2]) -> Vec<P2> {
    let mut v = p.to_vec();
    if polygon_area(&v) < 0.0 {
        v.reverse();
    }
    v
}

/// Convex hull of 2D points (Andrew's monotone chain), counter-clockwise, no collinear points.
pub fn convex_hull_2d(points: &[P2]) -> Vec<P2> {
    let mut pts: Vec<P2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| (a.x - b.x).abs() < 1e-15 && (a.y - b.y).abs() < 1e-15);
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<P2> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && orient2d(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<P2> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && orient2d(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Closed point-in-convex-polygon test for a counter-clockwise hull. Hulls with fewer
/// than three points are treated as segments or points.
pub fn point_in_convex_hull(p: &P2, hull: &[P2], eps: f64) -> bool {
    match hull.len() {
        0 => false,
        1 => (p - hull[0]).norm() <= eps,
        2 => {
            let d = hull[1] - hull[0];
            let l = d.norm();
            if l <= 1e-300 {
                return (p - hull[0]).norm() <= eps;
            }
            let t = (p - hull[0]).dot(&d) / (l * l);
            let off = orient2d(&hull[0], &hull[1], p).abs() / l;
            (-eps / l..=1.0 + eps / l).contains(&t) && off <= eps
        }
        n => (0..n).all(|i| {
            let a = &hull[i];
            let b = &hull[(i + 1) % n];
            orient2d(a, b, p) / (b - a).norm().max(1e-300) >= -eps
        }),
    }
}

/// An arbitrary unit vector orthogonal to `n`.
pub fn any_orthogonal(n: &V3) -> V3 {
    let a = if n.x.abs() < 0.6 {
        V3::x()
    } else if n.y.abs() < 0.6 {
        V3::y()
    } else {
        V3::z()
    };
    n.cross(&a).normalize()
}
