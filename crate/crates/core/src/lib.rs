//! Core data model and pure computations for the spectrum inspection harness.

pub mod spectrum;

pub use spectrum::{
    bin_features, estimate_snr, load_spectrum, slice, Spectrum, SpectrumError, SpectrumParts,
    Survey, Task, TaskLabel, WavelengthRange,
};
pub mod render;
pub mod tool;
pub mod trajectory;
pub mod reward;
pub mod metrics;
pub mod bench;
