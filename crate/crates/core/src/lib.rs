#![no_std]
extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod analysis;
pub mod dataset;
pub mod graph;
pub mod ir;
pub mod model;
pub mod synth;
pub mod vocab;
