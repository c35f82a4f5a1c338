//! Cameras, strands, point clouds and dense per-pixel maps.

mod camera;
mod cloud;
mod maps;
mod strand;

pub use camera::PinholeCamera;
pub use cloud::{KnnIndex, OrientedPoint, OrientedPointCloud};
pub use maps::{DepthMap, FlowMap, Grid, Image};
pub use strand::{
    curvature, curvature_with_grad, node_dir, strand_dirs, strand_length, StrandSet,
};
