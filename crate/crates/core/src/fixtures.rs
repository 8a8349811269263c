//! Synthetic anatomical and botanical models with ready-made run configs.

use std::path::{Path, PathBuf};

use crate::geom::{P3, V3};
use crate::mesh::io::save_obj;
use crate::mesh::primitives::icosphere;
use crate::{MeshError, TriMesh};

pub const FIXTURES: [&str; 3] = ["concentric", "head", "cell"];

/// Axis-aligned ellipsoid from a subdivided icosahedron.
pub fn ellipsoid(subdivisions: u32, radii: V3, center: P3) -> TriMesh {
    icosphere(subdivisions, 1.0, P3::origin())
        .map_vertices(|p| P3::new(center.x + p.x * radii.x, center.y + p.y * radii.y, center.z + p.z * radii.z))
}

/// Named meshes of a fixture, outermost first.
pub fn fixture_meshes(name: &str) -> Option<Vec<(&'static str, TriMesh)>> {
    match name {
        // high-resolution icosphere pair sharing a center
        "concentric" => Some(vec![("outer", icosphere(4, 1.0, P3::origin())), ("inner", icosphere(3, 0.55, P3::origin()))]),
        // high-resolution skin and brain with two projection-only structures
        "head" => Some(vec![
            ("skin", ellipsoid(4, V3::new(1.0, 1.15, 1.05), P3::origin())),
            ("brain", ellipsoid(3, V3::new(0.62, 0.55, 0.7), P3::new(0.0, 0.25, 0.0))),
            ("sinus", ellipsoid(2, V3::new(0.25, 0.15, 0.15), P3::new(0.0, -0.45, 0.6))),
            ("ventricle", ellipsoid(2, V3::new(0.15, 0.12, 0.3), P3::new(0.0, 0.3, 0.0))),
        ]),
        // wall > nucleus and vacuole (one level) > nucleolus, plus a projected chloroplast
        "cell" => Some(vec![
            ("wall", ellipsoid(3, V3::new(2.0, 1.2, 1.2), P3::origin())),
            ("nucleus", icosphere(3, 0.55, P3::new(-0.9, 0.0, 0.0))),
            ("vacuole", ellipsoid(3, V3::new(0.6, 0.5, 0.5), P3::new(0.9, 0.0, 0.0))),
            ("nucleolus", icosphere(2, 0.2, P3::new(-0.9, 0.0, 0.0))),
            ("chloroplast", ellipsoid(2, V3::new(0.35, 0.15, 0.2), P3::new(0.2, 0.75, 0.4))),
        ]),
        _ => None,
    }
}

fn config_text(name: &str) -> &'static str {
    match name {
        "concentric" => {
            r#"name = "concentric"
seed = 1
paper = "a4"

[[structure]]
id = "outer"
path = "outer.obj"

[[structure]]
id = "inner"
path = "inner.obj"
"#
        }
        "head" => {
            r#"name = "head"
seed = 1
paper = "a3"

[[structure]]
id = "skin"
path = "skin.obj"

[[structure]]
id = "brain"
path = "brain.obj"

[[structure]]
id = "sinus"
path = "sinus.obj"

[[structure]]
id = "ventricle"
path = "ventricle.obj"

[[level]]
id = "skin"
members = ["skin"]
outermost = true

[[level]]
id = "brain"
members = ["brain"]

[[projection]]
structure = "sinus"
onto = "skin"
channel = "cyan"
mode = "clipping"

[[projection]]
structure = "ventricle"
onto = "brain"
channel = "magenta"
mode = "inflation"
"#
        }
        _ => {
            r#"name = "cell"
seed = 1
paper = "a3"
face_budget = 90

[[structure]]
id = "wall"
path = "wall.obj"

[[structure]]
id = "nucleus"
path = "nucleus.obj"

[[structure]]
id = "vacuole"
path = "vacuole.obj"

[[structure]]
id = "nucleolus"
path = "nucleolus.obj"

[[structure]]
id = "chloroplast"
path = "chloroplast.obj"

[[level]]
id = "wall"
members = ["wall"]

[[level]]
id = "organelles"
members = ["nucleus", "vacuole"]

[[level]]
id = "nucleolus"
members = ["nucleolus"]

[[projection]]
structure = "chloroplast"
onto = "wall"
channel = "yellow"
mode = "cube"
"#
        }
    }
}

/// Writes the fixture's OBJ files and `config.toml` into `dir`; returns the config path.
pub fn write_fixture(name: &str, dir: &Path) -> Result<PathBuf, MeshError> {
    let meshes = fixture_meshes(name).ok_or_else(|| MeshError::Degenerate(format!("unknown fixture `{name}`")))?;
    std::fs::create_dir_all(dir)?;
    for (id, m) in &meshes {
        save_obj(m, dir.join(format!("{id}.obj")))?;
    }
    let path = dir.join("config.toml");
    std::fs::write(&path, config_text(name))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::mesh_inside;

    #[test]
    fn concentric_pair_nests() {
        let m = fixture_meshes("concentric").unwrap();
        assert!(mesh_inside(&m[0].1, &m[1].1));
        assert!(m[0].1.face_count() > 1000 && m[1].1.face_count() > 1000);
    }

    #[test]
    fn head_structures_nest() {
        let m = fixture_meshes("head").unwrap();
        for inner in 1..m.len() {
            assert!(mesh_inside(&m[0].1, &m[inner].1), "{}", m[inner].0);
        }
        assert!(mesh_inside(&m[1].1, &m[3].1));
        assert!(m[0].1.face_count() > 1000);
    }

    #[test]
    fn cell_structures_nest() {
        let m = fixture_meshes("cell").unwrap();
        for inner in 1..m.len() {
            assert!(mesh_inside(&m[0].1, &m[inner].1), "{}", m[inner].0);
        }
        assert!(mesh_inside(&m[1].1, &m[3].1));
        assert!(!mesh_inside(&m[1].1, &m[2].1) && !mesh_inside(&m[2].1, &m[1].1));
        assert!(!mesh_inside(&m[2].1, &m[4].1) && !mesh_inside(&m[1].1, &m[4].1));
    }
}
