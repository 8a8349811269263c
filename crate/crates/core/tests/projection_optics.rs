use nalgebra::{Rotation3, Unit};
use papernest::geom::{P3, V3};
use papernest::mesh::primitives::{box_mesh, icosphere};
use papernest::projection::{
    apply_filter, combine_channels, prepare_mode, project_structure, Channel, FaceTexture, Filter, Mode, TextureAtlas,
};
use papernest::TriMesh;

fn cube() -> TriMesh {
    box_mesh(P3::new(-1., -1., -1.), P3::new(1., 1., 1.))
}

/// World position of a texel center, recovered from the corner raster coordinates.
fn texel_point(mesh: &TriMesh, t: &FaceTexture, i: usize, j: usize) -> P3 {
    let (s, r) = t.texel_center(i, j);
    let [a, b, c] = t.uv;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((s - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (r - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (r - a[1]) - (s - a[0]) * (b[1] - a[1])) / det;
    let p = mesh.face_points(t.face);
    P3::from(p[0].coords * (1.0 - l1 - l2) + p[1].coords * l1 + p[2].coords * l2)
}

#[test]
fn centered_sphere_casts_a_disk_on_every_face() {
    let box_ = cube();
    let r = 0.5;
    let ball = icosphere(3, r, P3::origin());
    let s = prepare_mode(&box_, &ball, Mode::Clipping, &[&box_], None, Some(10.0)).unwrap();
    let res = 64;
    let tex = project_structure(&s, &ball, Channel::Magenta, res);
    // silhouette of the faceted sphere lies between its inscribed and circumscribed radius
    let r_in = r * (1.0 - 0.005);
    for t in &tex {
        let n = box_.face_normal(t.face);
        let tri = box_.face_points(t.face);
        let span = (0..3).map(|k| (tri[k] - tri[(k + 1) % 3]).norm()).fold(0.0, f64::max);
        let texel = span / res as f64;
        for j in 0..res {
            for i in 0..res {
                if !t.covers(i, j) {
                    assert_eq!(t.get(i, j), 0.0);
                    continue;
                }
                let p = texel_point(&box_, t, i, j);
                let rho = (p.coords - n * p.coords.dot(&n)).norm();
                let v = t.get(i, j);
                if v > 0.0 {
                    assert!(rho < r + 2.0 * texel, "face {} texel ({i},{j}) rho {rho}", t.face);
                } else {
                    assert!(rho > r_in - 2.0 * texel, "face {} texel ({i},{j}) rho {rho}", t.face);
                }
            }
        }
    }
}

/// Cube with one small ball behind each of three faces, one ball per ink.
fn three_structures() -> (TriMesh, [(Channel, TriMesh); 3]) {
    (
        cube(),
        [
            (Channel::Cyan, icosphere(2, 0.3, P3::new(0.6, 0., 0.))),
            (Channel::Magenta, icosphere(2, 0.3, P3::new(0., 0.6, 0.))),
            (Channel::Yellow, icosphere(2, 0.3, P3::new(0., 0., 0.6))),
        ],
    )
}

fn three_channel_atlas() -> (TextureAtlas, Vec<(Channel, Vec<FaceTexture>)>) {
    let (box_, structs) = three_structures();
    let layers: Vec<(Channel, Vec<FaceTexture>)> = structs
        .iter()
        .map(|(c, m)| {
            let s = prepare_mode(&box_, m, Mode::Clipping, &[&box_], None, None).unwrap();
            (*c, project_structure(&s, m, *c, 32))
        })
        .collect();
    (combine_channels(&layers), layers)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn filters_isolate_their_structure() {
    let (atlas, layers) = three_channel_atlas();
    for filter in Filter::ALL {
        let gray = apply_filter(&atlas, filter);
        let mut background = Vec::new();
        let mut footprint: [Vec<f64>; 3] = Default::default();
        for (f, g) in gray.iter().enumerate() {
            let t0 = &layers[0].1[f];
            for j in 0..t0.height {
                for i in 0..t0.width {
                    if !t0.covers(i, j) {
                        continue;
                    }
                    let k = j * t0.width + i;
                    let hits: Vec<usize> = (0..3).filter(|&c| layers[c].1[f].values[k] > 0.0).collect();
                    match hits.as_slice() {
                        [] => background.push(g[k]),
                        [c] => footprint[*c].push(g[k]),
                        _ => {}
                    }
                }
            }
        }
        let bg = mean(&background);
        for (c, fp) in footprint.iter().enumerate() {
            assert!(!fp.is_empty());
            let contrast = (bg - mean(fp)).abs();
            if layers[c].0 == filter.reveals() {
                assert!(contrast > 0.3, "{filter:?} on {:?}: {contrast}", layers[c].0);
            } else {
                assert!(contrast < 0.1, "{filter:?} on {:?}: {contrast}", layers[c].0);
            }
        }
    }
}

#[test]
fn red_filter_darkens_cyan_footprint() {
    let box_ = cube();
    let ball = icosphere(2, 0.4, P3::new(0.4, 0., 0.));
    let s = prepare_mode(&box_, &ball, Mode::Clipping, &[&box_], None, None).unwrap();
    let layer = project_structure(&s, &ball, Channel::Cyan, 24);
    let atlas = combine_channels(&[(Channel::Cyan, layer.clone())]);
    let red = apply_filter(&atlas, Filter::Red);
    let (mut on, mut off) = (Vec::new(), Vec::new());
    for (t, g) in layer.iter().zip(&red) {
        for (k, &v) in t.values.iter().enumerate() {
            if t.covers(k % t.width, k / t.width) {
                if v > 0.0 {
                    on.push(g[k])
                } else {
                    off.push(g[k])
                }
            }
        }
    }
    assert!(mean(&on) < mean(&off));
    // blank texels are white, hence light under every filter
    for f in Filter::ALL {
        let g = apply_filter(&atlas, f);
        for (t, gf) in layer.iter().zip(&g) {
            for (k, &v) in t.values.iter().enumerate() {
                if v == 0.0 {
                    assert!(gf[k] > 0.99);
                }
            }
        }
    }
}

#[test]
fn projection_follows_rigid_motion() {
    let box_ = cube();
    let ball = icosphere(2, 0.5, P3::new(0.3, -0.2, 0.1));
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(V3::new(0.3, 1.0, -0.4)), 0.9);
    let shift = V3::new(5.0, -2.0, 1.0);
    let mv = |m: &TriMesh| m.map_vertices(|p| P3::from(rot * p.coords + shift));
    let (box2, ball2) = (mv(&box_), mv(&ball));
    let a = project_structure(&prepare_mode(&box_, &ball, Mode::Clipping, &[&box_], None, Some(2.0)).unwrap(), &ball, Channel::Cyan, 32);
    let b = project_structure(&prepare_mode(&box2, &ball2, Mode::Clipping, &[&box2], None, Some(2.0)).unwrap(), &ball2, Channel::Cyan, 32);
    for (ta, tb) in a.iter().zip(&b) {
        let w = ta.width;
        for k in 0..ta.values.len() {
            if (ta.values[k] - tb.values[k]).abs() <= 1e-6 {
                continue;
            }
            // a mismatch must sit next to a footprint boundary
            let (i, j) = (k % w, k / w);
            let near_edge = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)].iter().any(|(di, dj)| {
                let (x, y) = (i as i64 + di, j as i64 + dj);
                x >= 0
                    && y >= 0
                    && (x as usize) < w
                    && (y as usize) < ta.height
                    && ((ta.get(x as usize, y as usize) == 0.0) != (ta.values[k] == 0.0))
            });
            assert!(near_edge || (ta.values[k] == 0.0) != (tb.values[k] == 0.0), "face {} texel {k}", ta.face);
        }
    }
}

#[test]
fn all_blank_channels_give_white() {
    let box_ = cube();
    let far = icosphere(1, 0.1, P3::origin());
    let s = prepare_mode(&box_, &far, Mode::Clipping, &[&box_], None, Some(0.0)).unwrap();
    let atlas = combine_channels(&[(Channel::Yellow, project_structure(&s, &far, Channel::Yellow, 8))]);
    assert!(atlas.faces.iter().all(|f| f.rgb.iter().all(|p| p.iter().all(|&x| (x - 1.0).abs() < 1e-12))));
}
