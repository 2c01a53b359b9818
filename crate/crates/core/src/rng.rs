//! Reproducible Wiener increments.
//!
//! Each path owns a ChaCha8 stream keyed by `(base seed, path index)`: the
//! key is the base seed and the path index selects the stream. Paths are
//! therefore independent of scheduling order.
//!
//! With `substeps = r`, one increment over `dt` is the sum of `r` draws of
//! variance `dt / r`; a run at step `dt / r` with `substeps = 1` sees exactly
//! the underlying draws, which couples the two Brownian paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Generator name recorded in run manifests.
pub const GENERATOR: &str = "ChaCha8 (rand_chacha), seed_from_u64(base_seed), stream = path index";

#[derive(Debug, Clone)]
pub struct WienerStream {
    rng: ChaCha8Rng,
    j: usize,
    substeps: usize,
}

impl WienerStream {
    pub fn new(base_seed: u64, path: u64, j: usize, substeps: usize) -> Self {
        assert!(substeps >= 1, "at least one substep");
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
        rng.set_stream(path);
        WienerStream { rng, j, substeps }
    }

    pub fn j(&self) -> usize {
        self.j
    }

    /// `J` independent `N(0, dt)` samples.
    pub fn increments(&mut self, dt: f64) -> Vec<f64> {
        assert!(dt > 0.0, "dt must be positive");
        let mut out = vec![0.0; self.j];
        self.fill(dt, &mut out);
        out
    }

    pub fn fill(&mut self, dt: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let s = (dt / self.substeps as f64).sqrt();
        for _ in 0..self.substeps {
            for x in out.iter_mut() {
                let z: f64 = self.rng.sample(StandardNormal);
                *x += s * z;
            }
        }
    }
}

/// Free-function form of [`WienerStream::increments`].
pub fn wiener_increments(stream: &mut WienerStream, dt: f64) -> Vec<f64> {
    stream.increments(dt)
}
