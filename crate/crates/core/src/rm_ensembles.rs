//! Tunable random-matrix ensemble and spectral machinery.
//!
//! The ensemble interpolates between an integrable limit (diagonal matrix
//! with independent Gaussian entries, Poissonian level statistics) and a
//! chaotic limit (Gaussian orthogonal ensemble, Wigner-Dyson statistics):
//!
//! ```text
//! H = (H0 + lambda * V) / sqrt(1 + lambda^2),
//! lambda = sqrt(2 * pi * lambda_cap / d).
//! ```
//!
//! `lambda_cap` is the dimensionless crossover parameter; `lambda_cap -> 0`
//! recovers `H0` exactly and `lambda_cap >> 1` recovers GOE statistics with
//! the same global normalization. Diagonalizing `H` once gives the
//! single-particle propagator `U(t) = exp(-i H t)` for every `t` at the cost
//! of one matrix sandwich, plus spectral statistics such as the form factor.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Smallest supported matrix dimension.
pub const MIN_DIM: usize = 2;

/// Relative residual tolerance for the eigendecomposition check.
const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// Real symmetric matrix; the invariant `entries[i][j] == entries[j][i]`
/// holds bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    entries: DMatrix<f64>,
}

impl Hamiltonian {
    /// Wraps a matrix, checking squareness, minimum dimension, finiteness,
    /// and exact symmetry.
    pub fn from_symmetric(entries: DMatrix<f64>) -> Result<Self> {
        let d = entries.nrows();
        if entries.ncols() != d {
            return Err(Error::InvalidArgument(format!(
                "hamiltonian must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if d < MIN_DIM {
            return Err(Error::InvalidDimension {
                dim: d,
                reason: format!("must be at least {MIN_DIM}"),
            });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "hamiltonian entries must be finite".into(),
            ));
        }
        for i in 0..d {
            for j in (i + 1)..d {
                if entries[(i, j)].to_bits() != entries[(j, i)].to_bits() {
                    return Err(Error::InvalidArgument(format!(
                        "hamiltonian not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// Eigendecomposition of a [`Hamiltonian`]: ascending eigenvalues and an
/// orthogonal eigenvector matrix with a deterministic sign convention (the
/// largest-magnitude component of each column is positive; ties break to the
/// lowest index).
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Columns are eigenvectors, ordered like the eigenvalues.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Consecutive eigenvalue gaps.
    pub fn level_spacings(&self) -> Vec<f64> {
        self.eigenvalues
            .as_slice()
            .windows(2)
            .map(|w| w[1] - w[0])
            .collect()
    }

    /// Serializable summary used in reports and fixtures.
    pub fn record(&self, seed: u64) -> SpectrumRecord {
        SpectrumRecord {
            eigenvalues: self.eigenvalues.as_slice().to_vec(),
            seed,
        }
    }
}

/// On-disk form of a spectrum: eigenvalues plus the seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub eigenvalues: Vec<f64>,
    pub seed: u64,
}

/// Complex matrix produced by [`evolve`] or [`sample_haar_unitary`];
/// unitary up to eigensolver round-off.
#[derive(Debug, Clone)]
pub struct UnitaryMatrix {
    entries: DMatrix<Complex64>,
}

impl UnitaryMatrix {
    /// Wraps a square complex matrix without checking unitarity; callers
    /// that construct one by hand own that invariant.
    pub fn from_matrix(entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "unitary must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// Largest deviation of `U U^dagger` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.dim();
        let gram = &self.entries * self.entries.adjoint();
        let mut worst = 0.0_f64;
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - Complex64::new(want, 0.0)).norm());
            }
        }
        worst
    }
}

/// Parameters identifying one ensemble: dimension, crossover parameter,
/// ensemble size, and master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub dim: usize,
    pub lambda_cap: f64,
    pub n_realizations: usize,
    pub master_seed: u64,
}

impl EnsembleSpec {
    pub fn new(dim: usize, lambda_cap: f64, n_realizations: usize, master_seed: u64) -> Result<Self> {
        if dim < MIN_DIM {
            return Err(Error::InvalidDimension {
                dim,
                reason: format!("must be at least {MIN_DIM}"),
            });
        }
        if !lambda_cap.is_finite() || lambda_cap < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda_cap must be finite and non-negative, got {lambda_cap}"
            )));
        }
        if n_realizations == 0 {
            return Err(Error::InvalidArgument(
                "n_realizations must be at least 1".into(),
            ));
        }
        Ok(Self {
            dim,
            lambda_cap,
            n_realizations,
            master_seed,
        })
    }

    /// Mixing coefficient `lambda = sqrt(2 pi lambda_cap / d)`.
    pub fn lambda(&self) -> f64 {
        (2.0 * std::f64::consts::PI * self.lambda_cap / self.dim as f64).sqrt()
    }
}

/// Integrable reference: diagonal matrix with i.i.d. standard normal
/// entries.
pub fn sample_poisson_diag(d: usize, stream: &mut Stream) -> Result<Hamiltonian> {
    if d < MIN_DIM {
        return Err(Error::InvalidDimension {
            dim: d,
            reason: format!("must be at least {MIN_DIM}"),
        });
    }
    let mut m = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        m[(i, i)] = stream.sample(StandardNormal);
    }
    Hamiltonian::from_symmetric(m)
}

/// Chaotic reference: GOE matrix with `Var(diag) = 2/d` and
/// `Var(offdiag) = 1/d`, symmetric by construction.
pub fn sample_goe(d: usize, stream: &mut Stream) -> Result<Hamiltonian> {
    if d < MIN_DIM {
        return Err(Error::InvalidDimension {
            dim: d,
            reason: format!("must be at least {MIN_DIM}"),
        });
    }
    let diag_sd = (2.0 / d as f64).sqrt();
    let off_sd = (1.0 / d as f64).sqrt();
    let mut m = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let z: f64 = stream.sample(StandardNormal);
            if i == j {
                m[(i, i)] = diag_sd * z;
            } else {
                let x = off_sd * z;
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
    }
    Hamiltonian::from_symmetric(m)
}

/// Crossover combination `(H0 + lambda V) / sqrt(1 + lambda^2)` with
/// `lambda = sqrt(2 pi lambda_cap / d)`. `lambda_cap = 0` returns `H0`
/// bitwise.
pub fn build_hamiltonian(h0: &Hamiltonian, v: &Hamiltonian, lambda_cap: f64) -> Result<Hamiltonian> {
    if h0.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            left: h0.dim(),
            right: v.dim(),
            context: "build_hamiltonian h0 vs v".into(),
        });
    }
    if !lambda_cap.is_finite() || lambda_cap < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "lambda_cap must be finite and non-negative, got {lambda_cap}"
        )));
    }
    let d = h0.dim();
    let lambda = (2.0 * std::f64::consts::PI * lambda_cap / d as f64).sqrt();
    let scale = (1.0 + lambda * lambda).sqrt();
    let mut m = DMatrix::<f64>::zeros(d, d);
    // Fill the upper triangle, then mirror, so symmetry holds bitwise.
    for i in 0..d {
        for j in i..d {
            let x = (h0.entries()[(i, j)] + lambda * v.entries()[(i, j)]) / scale;
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    Hamiltonian::from_symmetric(m)
}

/// Eigendecomposition with ascending eigenvalue order, deterministic
/// eigenvector signs, and a reconstruction check. Fails with solver
/// diagnostics if `Q L Q^T` does not reproduce `H` to a relative max-norm
/// tolerance of 1e-8.
pub fn diagonalize(h: &Hamiltonian) -> Result<Spectrum> {
    let d = h.dim();
    let eig = h
        .entries()
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenFailure {
            dim: d,
            residual: f64::INFINITY,
            max_abs: h.max_abs(),
        })?;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut eigenvalues = DVector::<f64>::zeros(d);
    let mut eigenvectors = DMatrix::<f64>::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues[dst] = eig.eigenvalues[src];
        let col = eig.eigenvectors.column(src);
        // Sign convention: the component of largest magnitude is positive;
        // on magnitude ties the lowest index wins.
        let mut pivot = 0;
        let mut best = col[0].abs();
        for (idx, &x) in col.iter().enumerate().skip(1) {
            if x.abs() > best {
                best = x.abs();
                pivot = idx;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            eigenvectors[(i, dst)] = sign * col[i];
        }
    }

    let spectrum = Spectrum {
        eigenvalues,
        eigenvectors,
    };
    let reconstructed = spectrum.eigenvectors()
        * DMatrix::from_diagonal(spectrum.eigenvalues())
        * spectrum.eigenvectors().transpose();
    let residual = (&reconstructed - h.entries())
        .iter()
        .fold(0.0_f64, |m, x| m.max(x.abs()));
    let tol = EIGEN_RESIDUAL_TOL * h.max_abs().max(1.0);
    if !(residual <= tol) {
        return Err(Error::EigenFailure {
            dim: d,
            residual,
            max_abs: h.max_abs(),
        });
    }
    Ok(spectrum)
}

/// Propagator `U(t) = Q exp(-i L t) Q^T` from a precomputed spectrum.
///
/// `t` must be finite; any finite value is accepted so group-property
/// identities like `U(t1) U(t2) = U(t1 + t2)` can be exercised directly.
/// At `t = 0` the exact identity is returned rather than the `Q Q^T`
/// reconstruction, so zero-time probes are free of eigenvector round-off.
pub fn evolve(s: &Spectrum, t: f64) -> UnitaryMatrix {
    assert!(t.is_finite(), "evolution time must be finite");
    let d = s.dim();
    if t == 0.0 {
        return UnitaryMatrix {
            entries: DMatrix::identity(d, d),
        };
    }
    let q = s.eigenvectors();
    let phases: Vec<Complex64> = s
        .eigenvalues()
        .iter()
        .map(|&e| Complex64::from_polar(1.0, -e * t))
        .collect();
    // U[i][j] = sum_k Q[i][k] e^{-i E_k t} Q[j][k].
    let mut u = DMatrix::<Complex64>::zeros(d, d);
    for k in 0..d {
        let col = q.column(k);
        let ph = phases[k];
        for j in 0..d {
            let w = ph * col[j];
            for i in 0..d {
                u[(i, j)] += col[i] * w;
            }
        }
    }
    UnitaryMatrix { entries: u }
}

/// Single-realization spectral form factor term
/// `|sum_j exp(-i E_j t)|^(2k) / d^(2k)`.
pub fn sff_sample(s: &Spectrum, t: f64, k: u32) -> f64 {
    assert!(t.is_finite(), "form-factor time must be finite");
    assert!(k >= 1, "form-factor order must be at least 1");
    let mut tr = Complex64::new(0.0, 0.0);
    for &e in s.eigenvalues().iter() {
        tr += Complex64::from_polar(1.0, -e * t);
    }
    let d = s.dim() as f64;
    (tr.norm_sqr() / (d * d)).powi(k as i32)
}

/// Ensemble-averaged spectral form factor
/// `< |Tr exp(-i H t)|^(2k) > / d^(2k)` over precomputed spectra.
pub fn sff(spectra: &[Spectrum], t: f64, k: u32) -> Result<f64> {
    if spectra.is_empty() {
        return Err(Error::InvalidArgument(
            "form factor needs at least one spectrum".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidArgument(
            "form-factor order must be at least 1".into(),
        ));
    }
    let d = spectra[0].dim();
    if spectra.iter().any(|s| s.dim() != d) {
        return Err(Error::InvalidArgument(
            "form factor requires spectra of equal dimension".into(),
        ));
    }
    let mut total = 0.0;
    let mut comp = 0.0;
    for s in spectra {
        // Kahan summation keeps the ensemble mean stable for large pools.
        let y = sff_sample(s, t, k) - comp;
        let t2 = total + y;
        comp = (t2 - total) - y;
        total = t2;
    }
    Ok(total / spectra.len() as f64)
}

/// Haar-random unitary via QR of a complex Ginibre matrix with the phase
/// convention fixed by the diagonal of `R`.
pub fn sample_haar_unitary(d: usize, stream: &mut Stream) -> Result<UnitaryMatrix> {
    if d < MIN_DIM {
        return Err(Error::InvalidDimension {
            dim: d,
            reason: format!("must be at least {MIN_DIM}"),
        });
    }
    let mut g = DMatrix::<Complex64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let re: f64 = stream.sample(StandardNormal);
            let im: f64 = stream.sample(StandardNormal);
            g[(i, j)] = Complex64::new(re, im);
        }
    }
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    // Multiply column k by r_kk / |r_kk| so the distribution is exactly Haar
    // rather than QR-convention dependent.
    for k in 0..d {
        let rkk = r[(k, k)];
        let phase = if rkk.norm() > 0.0 {
            rkk / rkk.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..d {
            q[(i, k)] *= phase;
        }
    }
    UnitaryMatrix::from_matrix(q)
}
