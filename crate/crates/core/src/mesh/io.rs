//! OBJ and STL readers, OBJ writer.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{MeshError, TriMesh};
use crate::geom::P3;

/// Relative weld tolerance (fraction of the bounding diagonal).
pub const WELD_TOLERANCE: f64 = 1e-6;

/// Loads an OBJ or STL file, welds duplicate vertices and orients faces outward.
///
/// Open surfaces are accepted (and can be detected with [`TriMesh::is_closed`]);
/// non-manifold edges after welding are a [`MeshError::Topology`].
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh, MeshError> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let raw = match ext.as_str() {
        "stl" => parse_stl(&bytes)?,
        _ => {
            let text = String::from_utf8(bytes).map_err(|_| MeshError::Parse { line: 0, msg: "not UTF-8".into() })?;
            parse_obj(&text)?
        }
    };
    finish(raw)
}

/// Welds, validates, and orients a freshly parsed mesh.
pub fn finish(raw: TriMesh) -> Result<TriMesh, MeshError> {
    if raw.face_count() == 0 {
        return Err(MeshError::Parse { line: 0, msg: "no faces".into() });
    }
    let tol = WELD_TOLERANCE * raw.diagonal();
    let mesh = raw.welded(tol).compacted();
    let topo = mesh.topology();
    if topo.non_manifold_edges > 0 {
        return Err(MeshError::Topology(format!("{} non-manifold edges after weld", topo.non_manifold_edges)));
    }
    mesh.orient_outward()
}

/// Parses `v` and `f` records of a Wavefront OBJ (1-based or negative indices).
pub fn parse_obj(text: &str) -> Result<TriMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut face_lines = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Result<Vec<f64>, _> = it.take(3).map(str::parse::<f64>).collect();
                match c {
                    Ok(c) if c.len() == 3 => vertices.push(P3::new(c[0], c[1], c[2])),
                    _ => return Err(MeshError::Parse { line: line_no, msg: "bad vertex record".into() }),
                }
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first.parse().map_err(|_| MeshError::Parse { line: line_no, msg: format!("bad index `{tok}`") })?;
                    idx.push(i);
                }
                if idx.len() != 3 {
                    return Err(MeshError::Parse { line: line_no, msg: format!("face has {} vertices, expected 3", idx.len()) });
                }
                face_lines.push(line_no);
                faces.push(idx);
            }
            _ => {}
        }
    }
    let n = vertices.len() as i64;
    let mut out = Vec::with_capacity(faces.len());
    for (f, line) in faces.into_iter().zip(face_lines) {
        let mut tri = [0usize; 3];
        for (k, i) in f.into_iter().enumerate() {
            let r = if i > 0 { i - 1 } else { n + i };
            if i == 0 || r < 0 || r >= n {
                return Err(MeshError::Parse { line, msg: format!("vertex index {i} out of range (have {n})") });
            }
            tri[k] = r as usize;
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(MeshError::Parse { line, msg: "face repeats a vertex".into() });
        }
        out.push(tri);
    }
    Ok(TriMesh::from_raw(vertices, out))
}

/// Parses binary or ASCII STL into a triangle soup (unwelded).
pub fn parse_stl(bytes: &[u8]) -> Result<TriMesh, MeshError> {
    if bytes.len() >= 84 {
        let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
        if bytes.len() == 84 + 50 * n {
            return parse_stl_binary(bytes, n);
        }
    }
    let text = std::str::from_utf8(bytes).map_err(|_| MeshError::Parse { line: 0, msg: "STL is neither binary nor ASCII".into() })?;
    if !text.trim_start().starts_with("solid") {
        return Err(MeshError::Parse { line: 1, msg: "missing `solid` header".into() });
    }
    let mut verts = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        if it.next() == Some("vertex") {
            let c: Result<Vec<f64>, _> = it.take(3).map(str::parse::<f64>).collect();
            match c {
                Ok(c) if c.len() == 3 => verts.push(P3::new(c[0], c[1], c[2])),
                _ => return Err(MeshError::Parse { line: ln + 1, msg: "bad vertex record".into() }),
            }
        }
    }
    soup(verts)
}

fn parse_stl_binary(bytes: &[u8], n: usize) -> Result<TriMesh, MeshError> {
    let f = |o: usize| f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as f64;
    let mut verts = Vec::with_capacity(n * 3);
    for t in 0..n {
        let base = 84 + 50 * t + 12;
        for k in 0..3 {
            let o = base + 12 * k;
            verts.push(P3::new(f(o), f(o + 4), f(o + 8)));
        }
    }
    soup(verts)
}

fn soup(verts: Vec<P3>) -> Result<TriMesh, MeshError> {
    if !verts.len().is_multiple_of(3) {
        return Err(MeshError::Parse { line: 0, msg: "vertex count is not a multiple of 3".into() });
    }
    let faces = (0..verts.len() / 3).map(|t| [3 * t, 3 * t + 1, 3 * t + 2]).collect();
    Ok(TriMesh::from_raw(verts, faces))
}

pub fn write_obj(mesh: &TriMesh, mut w: impl Write) -> std::io::Result<()> {
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in mesh.faces() {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

pub fn save_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let mut buf = Vec::new();
    write_obj(mesh, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}
