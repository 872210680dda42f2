//! Core algorithms for expanding one annotated manipulation demonstration into
//! many synthetic demonstrations over new object meshes.
//!
//! The crate is `no_std` and needs only `alloc`; file formats, the worker pool
//! and the command line live in the `demoforge` crate.

#![no_std]

extern crate alloc;

pub mod cloud;
pub mod correspondence;
pub mod demo;
pub mod geometry;
pub mod kinematics;
pub mod linalg;
pub mod mesh;
pub mod primitives;
pub mod render;
pub mod scene;
pub mod synth;
pub mod transfer;

pub use cloud::{Label, SegmentedPointCloud, Workspace};
pub use geometry::{slerp, Pose, Quat, Vec3};
pub use mesh::TriMesh;
