//! Simulation of forward-curve panels driven by a CIR-modulated Gaussian
//! diffusion plus two compound-Poisson jump components, and recovery of
//! dense curves from sparse noisy observations.

pub mod cir;
pub mod forward;
pub mod kernels;
pub mod observe;
pub mod spline;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use cir::{simulate_cir, CirParams, CirPath};
pub use forward::{simulate_forward_panel, JumpEvent, SimConfig, SimulatedPanel};
pub use kernels::{exp_cov_matrix, gaussian_cov_matrix};
pub use observe::{observe, ObservationSet};
pub use spline::presmooth;

/// Independent random stream `stream` for seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
