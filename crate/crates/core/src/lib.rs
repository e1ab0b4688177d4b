//! Point-based radiance fields that can be deformed by a keypoint-driven
//! coordinate network and rendered consistently by bending view directions
//! back into the canonical frame.

pub mod bending;
pub mod bundle;
pub mod deform;
pub mod eval;
pub mod fit;
pub mod geom;
pub mod image;
pub mod mlp;
pub mod optim;
pub mod ply;
pub mod points;
pub mod render;
pub mod scene;
pub mod sh;
pub mod spatial;

pub use geom::{RotationMat, UnitDir, UnitQuat, Vec3};
pub use points::{Group, NeuralPoint, NeuralPointCloud, RadianceSample};
pub use spatial::KdTree;
