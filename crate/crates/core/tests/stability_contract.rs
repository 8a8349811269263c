use std::collections::BTreeMap;

use papernest::cutter::{clip_and_stitch, make_envelope, CutPlane};
use papernest::geom::{P3, V3};
use papernest::hierarchy::build_hierarchy;
use papernest::mesh::primitives::{box_mesh, icosphere};
use papernest::stability::{build_assembly, plan_cuts, simulate_stability, static_equilibrium_check, Assembly, PlanOptions, SimParams};
use papernest::viewpoint::{best_viewpoint, ViewRanking, ViewSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tilted(theta_deg: f64, azimuth: f64) -> V3 {
    let t = theta_deg.to_radians();
    V3::new(t.sin() * azimuth.cos(), t.cos(), t.sin() * azimuth.sin())
}

/// Column of size w x h x w standing on y = 0, cut through its center.
fn cut_column(w: f64, h: f64, normal: V3) -> Assembly {
    let column = box_mesh(P3::new(-w / 2., 0., -w / 2.), P3::new(w / 2., h, w / 2.));
    let halves = clip_and_stitch(&make_envelope(&column, &[]).unwrap(), &CutPlane::new(P3::new(0., h / 2., 0.), normal)).unwrap();
    let tree = build_hierarchy(&[&column]).unwrap();
    build_assembly(&tree, &[&column], &BTreeMap::from([(0, halves)]), 0, V3::y()).unwrap()
}

#[test]
fn horizontal_cuts_hold_for_moderate_friction() {
    for tilt in [0.0, 2.0, 5.0] {
        for mu in [0.3, 0.5, 1.0] {
            let asm = cut_column(1.0, 2.0, tilted(tilt, 0.7));
            let r = simulate_stability(&asm, &SimParams { mu, ..Default::default() });
            assert!(r.stable, "tilt {tilt} mu {mu}: {r:?}");
        }
    }
}

#[test]
fn steep_cut_slides_at_low_friction() {
    let asm = cut_column(1.0, 12.0, tilted(80.0, 0.0));
    assert!(!static_equilibrium_check(&asm, 0.1));
    let r = simulate_stability(&asm, &SimParams { mu: 0.1, ..Default::default() });
    assert!(!r.stable, "{r:?}");
    assert!(r.failing_parts.contains(&1));
}

#[test]
fn static_oracle_agrees_with_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut agree = 0;
    for i in 0..50 {
        let w = rng.gen_range(0.8..1.2);
        let tilt: f64 = rng.gen_range(0.0..70.0);
        let az = rng.gen_range(0.0..std::f64::consts::TAU);
        // tall enough that the upper half never reaches the ground
        let h = (w * std::f64::consts::SQRT_2 * tilt.to_radians().tan() + 1.0).max(2.0) * 1.5;
        let mu = rng.gen_range(0.1..1.0);
        let asm = cut_column(w, h, tilted(tilt, az));
        let oracle = static_equilibrium_check(&asm, mu);
        let sim = simulate_stability(&asm, &SimParams { mu, ..Default::default() }).stable;
        if oracle == sim {
            agree += 1;
        } else {
            eprintln!("fixture {i}: tilt {tilt:.1} mu {mu:.3} tan {:.3} oracle {oracle} sim {sim}", tilt.to_radians().tan());
        }
    }
    assert!(agree >= 45, "agreement {agree}/50");
}

#[test]
fn friction_is_monotone() {
    for tilt in [10.0, 20.0, 30.0, 40.0] {
        let asm = cut_column(1.0, 4.0, tilted(tilt, 0.3));
        let mut was_stable = false;
        for mu in [0.1, 0.2, 0.3, 0.45, 0.6, 0.8, 1.0, 1.5] {
            let s = simulate_stability(&asm, &SimParams { mu, ..Default::default() }).stable;
            assert!(!was_stable || s, "tilt {tilt}: stable below mu {mu} but not at it");
            was_stable |= s;
        }
        assert!(was_stable);
    }
}

#[test]
fn simulation_is_deterministic() {
    let asm = cut_column(1.0, 4.0, tilted(35.0, 1.0));
    let p = SimParams { mu: 0.4, ..Default::default() };
    assert_eq!(simulate_stability(&asm, &p), simulate_stability(&asm, &p));
}

#[test]
fn concentric_spheres_accept_first_candidate() {
    let outer = icosphere(2, 3.0, P3::new(0., 3.0, 0.));
    let inner = icosphere(1, 1.5, P3::new(0., 3.0, 0.));
    let meshes = [&outer, &inner];
    let tree = build_hierarchy(&meshes).unwrap();
    let root = tree.root;
    let ranking = best_viewpoint(&[&inner], 32, 96);
    let plan = plan_cuts(&tree, &meshes, &BTreeMap::from([(root, ranking)]), &PlanOptions::default()).unwrap();
    assert_eq!(plan.decisions.len(), 1);
    assert_eq!(plan.decisions[0].rank, 0);
    assert!(plan.decisions[0].rejections.is_empty());
    assert!(plan.per_level_stable && plan.final_report.stable);
    let asm = build_assembly(&tree, &meshes, &plan.cuts, root, V3::y()).unwrap();
    assert_eq!(asm.parts.len(), 3);
    assert!(simulate_stability(&asm, &SimParams::default()).stable);
}

fn manual_ranking(dirs: &[V3]) -> ViewRanking {
    ViewRanking {
        samples: dirs
            .iter()
            .enumerate()
            .map(|(i, d)| ViewSample { direction: [d.x, d.y, d.z], entropy: (dirs.len() - i) as f64, visible_areas: Default::default() })
            .collect(),
    }
}

/// T-shaped column: a wide cap on a thin stem, with a small ball nested in the cap.
fn mushroom() -> (papernest::TriMesh, papernest::TriMesh) {
    use papernest::mesh::primitives::extrude_polygon;
    let profile = [[-0.5, 0.0], [0.5, 0.0], [0.5, 3.0], [2.5, 3.0], [2.5, 4.0], [-2.5, 4.0], [-2.5, 3.0], [-0.5, 3.0]];
    let outer = extrude_polygon(&profile, -0.5, 0.5);
    let inner = papernest::mesh::primitives::icosphere(1, 0.3, P3::new(0., 3.5, 0.));
    (outer, inner)
}

#[test]
fn top_heavy_fixture_rejects_steep_cut() {
    let (outer, inner) = mushroom();
    let meshes = [&outer, &inner];
    let tree = build_hierarchy(&meshes).unwrap();
    let root = tree.root;

    // the vertical split alone: each half carries half the cap beyond its stem
    let env = make_envelope(&outer, &[&inner]).unwrap();
    let steep = CutPlane::new(P3::new(0., 3.5, 0.), V3::x());
    let halves = clip_and_stitch(&env, &steep).unwrap();
    let asm = build_assembly(&tree, &meshes, &BTreeMap::from([(root, halves)]), root, V3::y()).unwrap();
    assert!(!static_equilibrium_check(&asm, 0.5));

    let ranking = manual_ranking(&[V3::x(), V3::y(), V3::z()]);
    let plan = plan_cuts(&tree, &meshes, &BTreeMap::from([(root, ranking)]), &PlanOptions::default()).unwrap();
    let d = &plan.decisions[0];
    assert_eq!(d.rank, 1);
    assert_eq!(d.rejections.len(), 1);
    assert!(d.rejections[0].reason.starts_with("unstable"), "{:?}", d.rejections);
    assert!(d.report.stable && plan.final_report.stable);
    let accepted = build_assembly(&tree, &meshes, &plan.cuts, root, V3::y()).unwrap();
    assert!(static_equilibrium_check(&accepted, 0.5));
}
