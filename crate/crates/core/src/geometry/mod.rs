//! Shape ingestion, normalization, sampling, adjacency and ray casting.

mod bvh;
mod camera;
pub mod fixtures;
mod io;
mod kdtree;
mod mesh;
mod normalize;
mod points;
pub(crate) mod sampling;

pub use bvh::{intersect_triangle, Bvh, RayHit};
pub(crate) use camera::render_with_bvh as camera_render;
pub use camera::{default_rig, render_depth_ids, Camera, DepthIdImage, PixelHit};
pub use io::{load_mesh, load_point_set, parse_obj, write_obj};
pub use kdtree::KdTree;
pub use mesh::{Aabb, TriMesh};
pub use normalize::{normalize_mesh, normalize_points, NormalizationTransform};
pub use points::PixelRef;
pub use points::PointSet;
pub use sampling::{sample_interior, sample_surface};
