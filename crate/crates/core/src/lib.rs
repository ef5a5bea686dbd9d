// SPDX-License-Identifier: Apache-2.0

//! Simulation of a two-transmon device coupled through a parametrically
//! driven tunable bus: closed-form device model, full three-level dynamics,
//! gate calibration, randomized benchmarking and tomography.

pub mod calibration;
pub mod cliffords;
pub mod device;
pub mod dynamics;
pub mod fitting;
pub mod hamiltonian;
pub mod numerics;
pub mod operators;
pub mod pulses;
pub mod tomography;
pub mod units;
