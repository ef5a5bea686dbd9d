// SPDX-License-Identifier: Apache-2.0

//! Frequency and time unit helpers.
//!
//! Every frequency-like quantity inside the crate is angular (rad/s) and
//! every time is in seconds. These helpers are the single place where cyclic
//! units (GHz, MHz, kHz) are converted, which keeps stray 2π factors out of
//! the physics code.

pub use std::f64::consts::TAU;

/// Cyclic GHz → rad/s.
pub fn ghz(f: f64) -> f64 {
    TAU * f * 1e9
}

/// Cyclic MHz → rad/s.
pub fn mhz(f: f64) -> f64 {
    TAU * f * 1e6
}

/// Cyclic kHz → rad/s.
pub fn khz(f: f64) -> f64 {
    TAU * f * 1e3
}

/// rad/s → cyclic MHz.
pub fn to_mhz(w: f64) -> f64 {
    w / (TAU * 1e6)
}

/// rad/s → cyclic GHz.
pub fn to_ghz(w: f64) -> f64 {
    w / (TAU * 1e9)
}

/// Microseconds → seconds.
pub fn us(t: f64) -> f64 {
    t * 1e-6
}

/// Nanoseconds → seconds.
pub fn ns(t: f64) -> f64 {
    t * 1e-9
}

/// Seconds → nanoseconds.
pub fn to_ns(t: f64) -> f64 {
    t * 1e9
}
