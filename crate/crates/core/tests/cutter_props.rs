use std::collections::HashSet;

use papernest::cutter::{clip_and_stitch, make_envelope, plan_cut_for_level, CutPlane};
use papernest::geom::{P3, V3};
use papernest::mesh::primitives::{box_mesh, icosphere};
use papernest::viewpoint::best_viewpoint;
use papernest::TriMesh;
use proptest::prelude::*;

fn key(p: &P3) -> [u64; 3] {
    [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]
}

fn check_cut(outer: &TriMesh, inners: &[&TriMesh], plane: &CutPlane) {
    let env = make_envelope(outer, inners).unwrap();
    let h = clip_and_stitch(&env, plane).unwrap();
    let v = env.volume().unwrap();
    let sum = h.below.signed_volume().unwrap() + h.above.signed_volume().unwrap();
    assert!((sum - v).abs() <= 0.005 * v, "{sum} vs {v}");
    let old: HashSet<[u64; 3]> = env.mesh().vertices().iter().map(key).collect();
    for half in h.halves() {
        half.require_closed().unwrap();
        for c in half.connected_components() {
            assert_eq!(c.euler_genus().unwrap(), 0);
        }
        for p in half.vertices() {
            if !old.contains(&key(p)) {
                assert!(plane.signed_distance(p).abs() < 1e-7);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn random_planes_conserve_volume(
        ox in -0.5f64..0.5, oy in -0.5f64..0.5, oz in -0.5f64..0.5,
        nx in -1.0f64..1.0, ny in -1.0f64..1.0, nz in -1.0f64..1.0,
    ) {
        let n = V3::new(nx, ny, nz);
        prop_assume!(n.norm() > 0.1);
        let outer = icosphere(2, 3.0, P3::origin());
        let inner = icosphere(1, 1.2, P3::new(0.2, -0.1, 0.0));
        check_cut(&outer, &[&inner], &CutPlane::new(P3::new(ox, oy, oz), n));
    }
}

#[test]
fn two_cavities_share_one_cut() {
    let outer = box_mesh(P3::new(-4., -2., -2.), P3::new(4., 2., 2.));
    let a = icosphere(1, 1.0, P3::new(-2., 0., 0.));
    let b = icosphere(1, 1.0, P3::new(2., 0.3, 0.));
    check_cut(&outer, &[&a, &b], &CutPlane::new(P3::new(0., 0.1, 0.), V3::new(0.05, 1.0, 0.02)));
}

#[test]
fn cutting_is_deterministic() {
    let outer = icosphere(2, 3.0, P3::origin());
    let inner = icosphere(1, 1.0, P3::origin());
    let env = make_envelope(&outer, &[&inner]).unwrap();
    let plane = CutPlane::new(P3::new(0.1, 0.0, 0.0), V3::new(1.0, 0.3, 0.2));
    let a = clip_and_stitch(&env, &plane).unwrap();
    let b = clip_and_stitch(&env, &plane).unwrap();
    assert_eq!(a.below, b.below);
    assert_eq!(a.above, b.above);
}

#[test]
fn plane_origin_is_inner_center_of_mass() {
    let brain = icosphere(2, 3.0, P3::new(0., 0., 10.));
    let ranking = best_viewpoint(&[&brain], 16, 64);
    let cut = plan_cut_for_level(&[&brain], &ranking).unwrap();
    assert!((cut.center - P3::new(0., 0., 10.)).norm() < 1e-6);
    assert_eq!(cut.planes().count(), 16);
    assert_eq!(cut.best().normal, ranking.best().direction);

    // two children: volume-weighted joint center
    let big = box_mesh(P3::new(0., 0., 0.), P3::new(2., 2., 2.));
    let small = box_mesh(P3::new(4., 0., 0.), P3::new(5., 1., 1.));
    let r = best_viewpoint(&[&big, &small], 8, 64);
    let c = plan_cut_for_level(&[&big, &small], &r).unwrap().center;
    let expected = (P3::new(1., 1., 1.).coords * 8.0 + P3::new(4.5, 0.5, 0.5).coords * 1.0) / 9.0;
    assert!((c.coords - expected).norm() < 1e-9);
}
