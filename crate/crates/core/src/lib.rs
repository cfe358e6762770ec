//! Data-driven synthesis of control barrier certificates for discrete-time
//! polynomial systems, from a single input/state trajectory.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. File formats, configuration and the command line live in the
//! companion `cbc` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub(crate) mod math;
pub mod poly;
pub mod data;
pub mod sdp;
pub mod sos;
pub mod model;
pub mod synthesis;
pub mod verify;
