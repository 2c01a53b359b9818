pub mod config;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod grid;
pub mod integrator;
pub mod invariant;
pub mod noise;
pub mod operators;
pub mod output;
pub mod plots;
pub mod rng;
pub mod snapshot;
pub mod taming;
pub mod verify;

pub use error::{Error, Result};
pub use field::{Norm, PhysicalField, SpectralField};
pub use grid::{Grid, C64};
pub use integrator::{Ensemble, Scheme, SimConfig, Trajectory};
pub use noise::{NoiseKind, NoiseModel};
pub use operators::{DriftParams, Forcing};
pub use taming::TamingFunction;

// Grid-sized scratch buffers are allocated and freed on every step.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
