//! Nested papercraft generation.
//!
//! Converts registered, nested triangle meshes into printable papercraft: coarse
//! papermeshes, a containment hierarchy, entropy-driven stable cuts, CMY
//! substructure textures, and single-patch unfoldings exported as double-sided SVG.

pub mod approximate;
pub mod cutter;
pub mod fixtures;
pub mod geom;
pub mod hierarchy;
pub mod layout;
pub mod mesh;
pub mod pipeline;
pub mod projection;
pub mod stability;
pub mod unfold;
pub mod viewpoint;

pub use mesh::{Aabb, MeshError, TriMesh};
