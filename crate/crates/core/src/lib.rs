//! Boson-sampling probes of the integrable-to-chaotic crossover in
//! random-matrix linear optics.
//!
//! The library simulates a tunable ensemble of mode-mixing Hamiltonians
//! `H = (H0 + lambda * V) / sqrt(1 + lambda^2)`, where `H0` has independent
//! Gaussian diagonal entries (integrable limit) and `V` is drawn from the
//! Gaussian orthogonal ensemble (chaotic limit). The crossover is
//! parameterized by `lambda_cap = lambda^2 * d / (2 pi)`; small values leave
//! the dynamics close to the diagonal model, large values reproduce GOE
//! statistics.
//!
//! Each Hamiltonian generates a single-particle interferometer
//! `U(t) = exp(-i H t)`. Feeding `n` photons into fixed input modes and
//! post-selecting on collision-free outcomes yields an output distribution
//! whose entries are squared permanents of `n x n` submatrices of `U(t)`.
//! Statistics of that distribution, pooled over the ensemble, serve as
//! dynamical probes:
//!
//! * Wasserstein-1 distance of pooled probabilities to the Porter-Thomas law,
//! * Shannon entropy and its Haar (circular-ensemble) reference value,
//! * out-of-time-order correlators expressed through two-photon amplitudes,
//! * participation ratios in configuration space and in Fourier space,
//! * spectral form factors of the underlying spectra.
//!
//! [`experiment`] orchestrates ensembles, time grids, probe series, and
//! characteristic-time extraction; [`cli`] exposes the pipeline behind the
//! `chaos-sampler` binary with `run`, `sweep`, and `validate` subcommands.
//! All randomness flows through counter-based substreams derived from a
//! single master seed, so every result is bitwise reproducible for a fixed
//! seed, independent of thread count.

pub mod cli;
pub mod error;
pub mod experiment;
pub mod interferometry;
pub mod oracles;
pub mod probes;
pub mod rm_ensembles;
pub mod rng;
pub mod validate;

pub use error::{Error, Result};
