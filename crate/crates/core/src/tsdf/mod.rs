//! Truncated signed distance fields sampled on the unit cube.

mod bvh;
mod mesh;
mod sdf;

pub use bvh::{MeshIndex, RayCount};
pub use mesh::{format_obj, normalize_mesh, parse_obj, read_obj, write_obj, Point3, TriangleMesh};
pub use sdf::{
    mesh_signed_distance, sample_tsdf, unit_grid_frame, MeshSdf, SceneNode, SdfSource, SignedDistance,
    DEFAULT_RESOLUTION, TRUNCATION,
};
