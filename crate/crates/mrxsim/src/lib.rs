//! Forward simulation for magnetorelaxometry imaging (MRXI).
//!
//! An MRXI scanner magnetizes a magnetic-nanoparticle distribution with a set
//! of excitation coils and records the relaxation decay amplitudes on a set of
//! sensors. This crate models that forward chain: coil fields on a voxel grid,
//! the linear system matrix mapping particle concentration to sensor readings,
//! synthetic phantoms to play the role of the particle distribution, and the
//! file formats used to move setups, matrices, and measurements between tools.
//!
//! The pieces compose in one direction:
//!
//! 1. [`model`] describes the hardware (coils, sensors, region of interest)
//!    and the experiment config (resolution, current patterns, active subsets).
//! 2. [`fields`] evaluates coil fields at voxel centers.
//! 3. [`relaxation`] turns those fields into system matrices.
//! 4. [`phantom`] builds voxelized test distributions.
//! 5. [`io`] reads and writes every on-disk artifact.
//!
//! All lengths are in meters, currents in ampere, and magnetic fields in tesla
//! unless a function documents otherwise. Indices are 0-based in memory and
//! 1-based in every file format and report.

pub mod fields;
pub mod io;
pub mod math;
pub mod model;
pub mod phantom;
pub mod presets;
pub mod relaxation;

pub use fields::{create_voxel_grid, ExcitationFieldSet, VoxelGrid};
pub use io::{IoError, IoWarning};
pub use math::{Mat3, Vec3};
pub use model::{Coil, Config, Dim, PhysicsParams, Roi, Sensor, Setup, ValidationReport};
pub use phantom::Phantom;
pub use relaxation::{Fingerprint, SystemMatrix, SystemMatrixRaw};
