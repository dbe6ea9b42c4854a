//! Coded distributed computing (CDC) primitives for single-batch DNN inference
//! on fleets of unreliable devices.
//!
//! The crate is the device-side math kernel: it lowers fully-connected and
//! convolution layers to dense GEMMs, partitions them into per-device tasks,
//! augments suitable partitions with coded (weight-summed) tasks so a lost
//! partial is recovered by subtraction instead of recomputation, and analyzes
//! failure coverage against modular redundancy.
//!
//! Everything here is pure computation over `alloc` containers, so the crate
//! is `no_std` and runs unchanged on the kind of constrained hardware the
//! tasks are destined for. IO, file formats, the network transports, and the
//! fault-injection simulator live in the companion `cdc-host` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analytics;
pub mod code;
pub mod element;
pub mod matrix;
pub mod model;
pub mod report;
pub mod split;

pub use element::{Dtype, Element};
pub use matrix::{ActivationKind, ConvGeometry, Matrix, MatrixError, Tensor3, Tensor4};
pub use model::{LayerInput, LayerKind, LayerSpec, ModelError, ModelSpec, PoolKind, WeightStore};
pub use split::{DeviceTask, MergeSpec, PartitionPlan, SplitError, SplitMethod};
