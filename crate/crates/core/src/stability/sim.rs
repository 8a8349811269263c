//! Sequential-impulse rigid-body integrator with persistent point contacts.

use nalgebra::{Matrix3, UnitQuaternion};

use super::{Assembly, Body, StabilityReport, STABLE_DISPLACEMENT};
use crate::geom::{any_orthogonal, P3, V3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub gravity: f64,
    pub mu: f64,
    pub steps: usize,
    pub dt: f64,
    pub iterations: usize,
    /// Fraction of penetration corrected per step.
    pub baumgarte: f64,
    pub max_velocity: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams { gravity: 9.81, mu: 0.5, steps: 600, dt: 1.0 / 240.0, iterations: 30, baumgarte: 0.2, max_velocity: 1e3 }
    }
}

struct BodyState {
    x: P3,
    q: UnitQuaternion<f64>,
    v: V3,
    w: V3,
    inv_mass: f64,
    inv_inertia_body: Matrix3<f64>,
    /// World-frame inverse inertia, refreshed once per step.
    iw: Matrix3<f64>,
}

impl BodyState {
    fn refresh(&mut self) {
        let r = self.q.to_rotation_matrix().into_inner();
        self.iw = r * self.inv_inertia_body * r.transpose();
    }
}

struct ContactState {
    a: Option<usize>,
    b: usize,
    /// Contact point in the local frames of `a` (or world for the ground) and `b`.
    ra_local: V3,
    rb_local: V3,
    /// Normal in the local frame of `a` (world for the ground).
    n_local: V3,
    lambda_n: f64,
    lambda_t: [f64; 2],
}

/// Integrates the assembly under gravity and reports the largest center-of-mass drift.
pub fn simulate(asm: &Assembly, params: &SimParams) -> StabilityReport {
    let diag = asm.diagonal.max(1e-300);
    let mut bodies: Vec<BodyState> = asm
        .parts
        .iter()
        .map(|p| BodyState {
            x: p.com,
            q: UnitQuaternion::identity(),
            v: V3::zeros(),
            w: V3::zeros(),
            inv_mass: 1.0 / p.mass,
            inv_inertia_body: p.inertia.try_inverse().unwrap_or_else(Matrix3::zeros),
            iw: Matrix3::zeros(),
        })
        .collect();
    let start: Vec<P3> = bodies.iter().map(|b| b.x).collect();
    let mut contacts: Vec<ContactState> = asm
        .contacts
        .iter()
        .map(|c| {
            let (a, ra_local) = match c.a {
                Body::Ground => (None, c.point.coords),
                Body::Part(i) => (Some(i), c.point - asm.parts[i].com),
            };
            ContactState {
                a,
                b: c.b,
                ra_local,
                rb_local: c.point - asm.parts[c.b].com,
                n_local: c.normal.normalize(),
                lambda_n: 0.0,
                lambda_t: [0.0; 2],
            }
        })
        .collect();
    let g = -asm.up.normalize() * params.gravity;
    let dt = params.dt;
    let slop = 1e-5 * diag;
    let mut trace = Vec::with_capacity(params.steps);
    let mut max_disp = vec![0.0f64; bodies.len()];
    let mut diverged = false;

    for _ in 0..params.steps {
        for b in bodies.iter_mut() {
            b.v += g * dt;
            b.refresh();
        }
        // per-step contact geometry
        struct Row {
            c: usize,
            ra: V3,
            rb: V3,
            n: V3,
            t: [V3; 2],
            kn: f64,
            kt: [f64; 2],
            bias: f64,
        }
        let mut rows = Vec::with_capacity(contacts.len());
        for (ci, c) in contacts.iter().enumerate() {
            let (pa, n, xa) = match c.a {
                None => (P3::from(c.ra_local), c.n_local, None),
                Some(i) => {
                    let s = &bodies[i];
                    (s.x + s.q * c.ra_local, s.q * c.n_local, Some(s.x))
                }
            };
            let sb = &bodies[c.b];
            let pb = sb.x + sb.q * c.rb_local;
            let gap = (pb - pa).dot(&n);
            let p = pb;
            let ra = xa.map_or(V3::zeros(), |x| p - x);
            let rb = p - sb.x;
            let t0 = any_orthogonal(&n);
            let t = [t0, n.cross(&t0)];
            let eff = |dir: &V3| {
                let mut k = sb.inv_mass + rb.cross(dir).dot(&(sb.iw * rb.cross(dir)));
                if let Some(i) = c.a {
                    let sa = &bodies[i];
                    k += sa.inv_mass + ra.cross(dir).dot(&(sa.iw * ra.cross(dir)));
                }
                if k > 0.0 {
                    1.0 / k
                } else {
                    0.0
                }
            };
            let bias = if gap > 0.0 { -gap / dt } else { params.baumgarte * (-gap - slop).max(0.0) / dt };
            rows.push(Row { c: ci, ra, rb, n, t, kn: eff(&n), kt: [eff(&t[0]), eff(&t[1])], bias });
        }
        let apply = |bodies: &mut [BodyState], a: Option<usize>, b: usize, ra: &V3, rb: &V3, imp: V3| {
            {
                let s = &mut bodies[b];
                s.v += imp * s.inv_mass;
                s.w += s.iw * rb.cross(&imp);
            }
            if let Some(i) = a {
                let s = &mut bodies[i];
                s.v -= imp * s.inv_mass;
                s.w -= s.iw * ra.cross(&imp);
            }
        };
        // warm start
        for r in &rows {
            let c = &contacts[r.c];
            let imp = r.n * c.lambda_n + r.t[0] * c.lambda_t[0] + r.t[1] * c.lambda_t[1];
            apply(&mut bodies, c.a, c.b, &r.ra, &r.rb, imp);
        }
        for _ in 0..params.iterations {
            for r in &rows {
                let (a, b) = (contacts[r.c].a, contacts[r.c].b);
                let rel = |bodies: &[BodyState]| {
                    let sb = &bodies[b];
                    let mut v = sb.v + sb.w.cross(&r.rb);
                    if let Some(i) = a {
                        let sa = &bodies[i];
                        v -= sa.v + sa.w.cross(&r.ra);
                    }
                    v
                };
                let vn = rel(&bodies).dot(&r.n);
                let c = &mut contacts[r.c];
                let new_n = (c.lambda_n + r.kn * (r.bias - vn)).max(0.0);
                let dn = new_n - c.lambda_n;
                c.lambda_n = new_n;
                let limit = params.mu * c.lambda_n;
                apply(&mut bodies, a, b, &r.ra, &r.rb, r.n * dn);
                let vr = rel(&bodies);
                let c = &mut contacts[r.c];
                let mut lt = [c.lambda_t[0] - r.kt[0] * vr.dot(&r.t[0]), c.lambda_t[1] - r.kt[1] * vr.dot(&r.t[1])];
                let mag = (lt[0] * lt[0] + lt[1] * lt[1]).sqrt();
                if mag > limit {
                    let s = if mag > 0.0 { limit / mag } else { 0.0 };
                    lt = [lt[0] * s, lt[1] * s];
                }
                let dt_imp = r.t[0] * (lt[0] - c.lambda_t[0]) + r.t[1] * (lt[1] - c.lambda_t[1]);
                c.lambda_t = lt;
                apply(&mut bodies, a, b, &r.ra, &r.rb, dt_imp);
            }
        }
        let mut step_max = 0.0f64;
        for (i, s) in bodies.iter_mut().enumerate() {
            s.x += s.v * dt;
            let wq = nalgebra::Quaternion::from_parts(0.0, s.w);
            let dq = wq * s.q.into_inner() * (0.5 * dt);
            s.q = UnitQuaternion::from_quaternion(s.q.into_inner() + dq);
            let d = (s.x - start[i]).norm() / diag;
            max_disp[i] = max_disp[i].max(d);
            step_max = step_max.max(d);
            let rim = s.w.norm() * diag;
            if !s.v.iter().all(|x| x.is_finite()) || s.v.norm() > params.max_velocity || rim > params.max_velocity {
                diverged = true;
            }
        }
        trace.push(step_max);
        if diverged {
            break;
        }
    }
    let max_displacement = max_disp.iter().cloned().fold(0.0, f64::max);
    let failing_parts: Vec<usize> = (0..bodies.len()).filter(|&i| diverged || max_disp[i] >= STABLE_DISPLACEMENT).collect();
    StabilityReport {
        stable: !diverged && max_displacement < STABLE_DISPLACEMENT,
        // a diverged run has no meaningful bound on the drift
        max_displacement: if diverged { f64::INFINITY } else { max_displacement },
        failing_parts,
        diverged,
        trace,
    }
}
