//! Built-in cross-validation checks behind the `validate` subcommand.
//!
//! Each check recomputes a core quantity through an independent route and
//! compares against a frozen bound: the production permanent against two
//! alternative algorithms, spectral evolution against a direct matrix
//! exponential, ensemble moments against their defining variances, and the
//! conditional Porter-Thomas density against unit mass and mean. Seeds are
//! fixed so a passing binary keeps passing; failures indicate a build or
//! platform regression, not a statistical fluke.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::interferometry::{permanent, permanent_glynn};
use crate::oracles::{expm, permanent_naive, trapezoid};
use crate::probes::conditional_pt_density;
use crate::rm_ensembles::{build_hamiltonian, diagonalize, evolve, sample_goe, sample_poisson_diag};
use crate::rng::{substream, Stream};

/// Names accepted by the `--only` filter, in execution order.
pub const CHECK_NAMES: [&str; 4] = ["permanent", "evolution", "ensemble_moments", "pt_density"];

/// Seed for the checks' internal streams; deliberately unrelated to any
/// experiment seed.
const VALIDATE_SEED: u64 = 0x6f7261636c65;

/// Outcome of one named self-check.
#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl OracleCheck {
    fn failed(name: &str, err: &Error) -> Self {
        OracleCheck {
            name: name.to_string(),
            passed: false,
            detail: format!("evaluation failed: {err}"),
        }
    }
}

type PermanentFn = fn(&DMatrix<Complex64>) -> Result<Complex64>;

fn random_complex_matrix(n: usize, stream: &mut Stream) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(stream.sample(StandardNormal), stream.sample(StandardNormal))
    })
}

/// Permanent check with an injectable production implementation, so tests
/// can verify that a corrupted permanent is actually caught.
fn check_permanent_impl(production: PermanentFn) -> OracleCheck {
    const BOUND: f64 = 1e-10;
    let mut stream = substream(VALIDATE_SEED, "validate-permanent", &[]);
    let mut worst = 0.0f64;
    for trial in 0..200usize {
        let n = 2 + trial % 4;
        let a = random_complex_matrix(n, &mut stream);
        let evaluated: Result<(Complex64, Complex64, Complex64)> = (|| {
            Ok((production(&a)?, permanent_glynn(&a)?, permanent_naive(&a)?))
        })();
        let (p_prod, p_glynn, p_naive) = match evaluated {
            Ok(v) => v,
            Err(e) => return OracleCheck::failed("permanent", &e),
        };
        let scale = p_naive.norm().max(1.0);
        worst = worst
            .max((p_prod - p_naive).norm() / scale)
            .max((p_glynn - p_naive).norm() / scale);
    }
    OracleCheck {
        name: "permanent".into(),
        passed: worst <= BOUND,
        detail: format!(
            "max relative deviation {worst:.3e} across 200 matrices up to 5x5 (bound {BOUND:.0e})"
        ),
    }
}

pub fn check_permanent() -> OracleCheck {
    check_permanent_impl(permanent)
}

/// Spectral evolution against a scaling-and-squaring matrix exponential.
pub fn check_evolution() -> OracleCheck {
    const BOUND: f64 = 1e-8;
    let d = 6;
    let mut worst = 0.0f64;
    for r in 0..5u64 {
        let run = (|| -> Result<f64> {
            let mut h0_stream = substream(VALIDATE_SEED, "validate-evolution-h0", &[r]);
            let mut v_stream = substream(VALIDATE_SEED, "validate-evolution-v", &[r]);
            let h0 = sample_poisson_diag(d, &mut h0_stream)?;
            let v = sample_goe(d, &mut v_stream)?;
            let h = build_hamiltonian(&h0, &v, 1.0 + r as f64)?;
            let spectrum = diagonalize(&h)?;
            let t = 1.3;
            let u = evolve(&spectrum, t);
            let arg = h.entries().map(|x| Complex64::new(0.0, -t * x));
            let reference = expm(&arg)?;
            Ok((u.entries() - reference).norm())
        })();
        match run {
            Ok(defect) => worst = worst.max(defect),
            Err(e) => return OracleCheck::failed("evolution", &e),
        }
    }
    OracleCheck {
        name: "evolution".into(),
        passed: worst <= BOUND,
        detail: format!(
            "max Frobenius deviation {worst:.3e} from direct exponential over 5 draws (bound {BOUND:.0e})"
        ),
    }
}

fn moment_deviation(samples: &[f64], target_var: f64) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    // z-scores: mean estimator sd sqrt(var/n), variance estimator sd
    // sqrt(2) var / sqrt(n) for Gaussian samples.
    let mean_z = mean.abs() / (target_var / n).sqrt();
    let var_z = (var - target_var).abs() / (target_var * (2.0 / n).sqrt());
    (mean_z, var_z)
}

/// Entry moments of both ensemble factors: unit-variance diagonal for the
/// integrable part, variances 2/d diagonal and 1/d off-diagonal for the
/// perturbation.
pub fn check_ensemble_moments() -> OracleCheck {
    const Z_BOUND: f64 = 4.0;
    let d = 8usize;
    let n_matrices = 2000usize;
    let mut h0_diag = Vec::with_capacity(n_matrices * d);
    let mut v_diag = Vec::with_capacity(n_matrices * d);
    let mut v_off = Vec::with_capacity(n_matrices * d * (d - 1) / 2);
    for r in 0..n_matrices as u64 {
        let mut h0_stream = substream(VALIDATE_SEED, "validate-moments-h0", &[r]);
        let mut v_stream = substream(VALIDATE_SEED, "validate-moments-v", &[r]);
        let drawn = (|| -> Result<()> {
            let h0 = sample_poisson_diag(d, &mut h0_stream)?;
            let v = sample_goe(d, &mut v_stream)?;
            for i in 0..d {
                h0_diag.push(h0.entries()[(i, i)]);
                v_diag.push(v.entries()[(i, i)]);
                for j in (i + 1)..d {
                    v_off.push(v.entries()[(i, j)]);
                }
            }
            Ok(())
        })();
        if let Err(e) = drawn {
            return OracleCheck::failed("ensemble_moments", &e);
        }
    }
    let df = d as f64;
    let checks = [
        ("h0 diagonal", moment_deviation(&h0_diag, 1.0)),
        ("v diagonal", moment_deviation(&v_diag, 2.0 / df)),
        ("v off-diagonal", moment_deviation(&v_off, 1.0 / df)),
    ];
    let worst = checks
        .iter()
        .map(|(_, (m, v))| m.max(*v))
        .fold(0.0f64, f64::max);
    let detail = checks
        .iter()
        .map(|(label, (m, v))| format!("{label} z = ({m:.2}, {v:.2})"))
        .collect::<Vec<_>>()
        .join("; ");
    OracleCheck {
        name: "ensemble_moments".into(),
        passed: worst <= Z_BOUND,
        detail: format!("{detail} (bound {Z_BOUND})"),
    }
}

/// Conditional Porter-Thomas density for the 28-configuration
/// collision-free sector of 36 total configurations: unit mass on [0, 1]
/// and a mean near 1/D. The ratio form biases the mean about one percent
/// above 1/D, so the mean bound is looser than the mass bound.
pub fn check_pt_density() -> OracleCheck {
    const MASS_BOUND: f64 = 1e-3;
    const MEAN_BOUND: f64 = 2e-2;
    let (n0, d) = (36u64, 28u64);
    let n_points = 3001usize;
    let mut ps = Vec::with_capacity(n_points);
    let mut density = Vec::with_capacity(n_points);
    let mut weighted = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let p = i as f64 / (n_points - 1) as f64;
        let rho = match conditional_pt_density(p, n0, d) {
            Ok(v) => v,
            Err(e) => return OracleCheck::failed("pt_density", &e),
        };
        ps.push(p);
        density.push(rho);
        weighted.push(p * rho);
    }
    let mass = trapezoid(&ps, &density);
    let mean = trapezoid(&ps, &weighted);
    let mass_err = (mass - 1.0).abs();
    let mean_err = (mean - 1.0 / d as f64).abs() * d as f64;
    OracleCheck {
        name: "pt_density".into(),
        passed: mass_err <= MASS_BOUND && mean_err <= MEAN_BOUND,
        detail: format!(
            "mass deviation {mass_err:.3e} (bound {MASS_BOUND:.0e}), relative mean deviation {mean_err:.3e} (bound {MEAN_BOUND:.0e})"
        ),
    }
}

/// Runs every check, or just the named one. Unknown names are rejected so
/// a typo cannot masquerade as a passing run.
pub fn run_all(only: Option<&str>) -> Result<Vec<OracleCheck>> {
    if let Some(name) = only {
        if !CHECK_NAMES.contains(&name) {
            return Err(Error::InvalidArgument(format!(
                "unknown check {name:?}; available: {}",
                CHECK_NAMES.join(", ")
            )));
        }
    }
    let mut out = Vec::new();
    for name in CHECK_NAMES {
        if only.is_some_and(|o| o != name) {
            continue;
        }
        out.push(match name {
            "permanent" => check_permanent(),
            "evolution" => check_evolution(),
            "ensemble_moments" => check_ensemble_moments(),
            "pt_density" => check_pt_density(),
            _ => unreachable!(),
        });
    }
    Ok(out)
}
