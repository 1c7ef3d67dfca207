//! Marker-based CT-to-patient registration.
//!
//! The pipeline: read a CT volume, segment radio-opaque fiducial markers into centroids,
//! extract a skin surface mesh, and register the CT markers against tracked device markers
//! by matching similar triangles. An ICP baseline and a synthetic benchmark harness are
//! included for comparison.
//!
//! Geometry, registration and ICP are generic over `f32`/`f64` through [`Real`]; the
//! aliases below fix the scalar for common use. Volumes, meshes and the benchmark use `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons also reject NaN

pub mod bench;
pub mod error;
pub mod geometry;
pub mod icp;
pub mod kdtree;
pub mod kv;
pub mod markers;
pub mod mesh;
pub mod scalar;
pub mod segmentation;
pub mod triangle;
pub mod volume;

pub use bench::{
    generate_scene, run_benchmark, summarize, target_registration_error, BenchGrid, Method, Scene, SceneSpec,
    TrialRecord,
};
pub use error::{Error, Result};
pub use geometry::{absolute_orientation, PointCorrespondences, RigidTransform, TransformRecord};
pub use icp::{icp_register, IcpConfig, IcpRecord, IcpResult};
pub use kdtree::KdTree;
pub use kv::KvBlock;
pub use markers::{read_markers, write_markers, Frame, MarkerSet};
pub use mesh::{marching_cubes, write_obj, write_stl, TriangleMesh};
pub use scalar::Real;
pub use segmentation::{segment_markers, segment_volume, Connectivity, SegmentationConfig, SegmentationReport};
pub use triangle::{
    register, triangle_key, RegistrationConfig, RegistrationRecord, RegistrationResult, TriangleKey, TriangleTable,
};
pub use volume::{read_volume, write_volume, Volume};

pub type RigidTransformF64 = RigidTransform<f64>;
pub type RigidTransformF32 = RigidTransform<f32>;
pub type MarkerSetF64 = MarkerSet<f64>;
pub type MarkerSetF32 = MarkerSet<f32>;
pub type TriangleTableF64 = TriangleTable<f64>;
pub type TriangleTableF32 = TriangleTable<f32>;
pub type RegistrationConfigF64 = RegistrationConfig<f64>;
pub type RegistrationConfigF32 = RegistrationConfig<f32>;
pub type RegistrationResultF64 = RegistrationResult<f64>;
pub type RegistrationResultF32 = RegistrationResult<f32>;
pub type IcpConfigF64 = IcpConfig<f64>;
pub type IcpConfigF32 = IcpConfig<f32>;
pub type IcpResultF64 = IcpResult<f64>;
pub type IcpResultF32 = IcpResult<f32>;
