//! Slow, independent reference implementations.
//!
//! These routines cross-check the production code paths in tests and in the
//! `validate` subcommand. They favor obviousness over speed: the permanent is
//! a permutation expansion, the matrix exponential is scaling-and-squaring on
//! a Taylor series, and quadrature is iterated trapezoid refinement. None of
//! them share code with the optimized implementations they check.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Upper size bound for the permutation-expansion permanent.
pub const NAIVE_PERMANENT_BOUND: usize = 10;

/// Permanent by explicit sum over permutations; practical for `n <= 10`.
pub fn permanent_naive(a: &DMatrix<Complex64>) -> Result<Complex64> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "permanent requires a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if n > NAIVE_PERMANENT_BOUND {
        return Err(Error::UnsupportedSize {
            n,
            bound: NAIVE_PERMANENT_BOUND,
        });
    }
    let mut cols: Vec<usize> = (0..n).collect();
    let mut total = Complex64::new(0.0, 0.0);
    permute_accumulate(a, &mut cols, 0, &mut total);
    Ok(total)
}

fn permute_accumulate(
    a: &DMatrix<Complex64>,
    cols: &mut Vec<usize>,
    row: usize,
    total: &mut Complex64,
) {
    let n = cols.len();
    if row == n {
        let mut term = Complex64::new(1.0, 0.0);
        for (i, &j) in cols.iter().enumerate() {
            term *= a[(i, j)];
        }
        *total += term;
        return;
    }
    for k in row..n {
        cols.swap(row, k);
        permute_accumulate(a, cols, row + 1, total);
        cols.swap(row, k);
    }
}

/// Matrix exponential `exp(A)` by scaling and squaring on a Taylor series.
///
/// Accurate to roughly 1e-12 for the moderate norms used in tests (time
/// evolution of bounded Hamiltonians).
pub fn expm(a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "expm requires a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let norm = a.iter().map(|z| z.norm()).fold(0.0_f64, f64::max) * n as f64;
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = 2.0_f64.powi(squarings as i32);
    let scaled = a.map(|z| z / scale);

    let mut result = DMatrix::<Complex64>::identity(n, n);
    let mut term = DMatrix::<Complex64>::identity(n, n);
    for k in 1..=30 {
        term = (&term * &scaled) / Complex64::new(k as f64, 0.0);
        result += &term;
        let term_norm = term.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        if term_norm < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// Every occupation vector of `n` photons over `m` modes, allowing
/// collisions, in lexicographic order. There are `binomial(m + n - 1, n)`.
pub fn multiset_configs(m: usize, n: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; m];
    fill_multiset(&mut out, &mut current, 0, n);
    out
}

fn fill_multiset(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, mode: usize, left: u32) {
    if mode == current.len() {
        if left == 0 {
            out.push(current.clone());
        }
        return;
    }
    if mode + 1 == current.len() {
        current[mode] = left;
        out.push(current.clone());
        current[mode] = 0;
        return;
    }
    for k in (0..=left).rev() {
        current[mode] = k;
        fill_multiset(out, current, mode + 1, left - k);
        current[mode] = 0;
    }
}

/// Integral of tabulated values on a grid by the trapezoid rule.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
        .sum()
}

/// Integral of `f` over `[a, b]` by trapezoid refinement to relative
/// tolerance `tol`, independent of the adaptive quadrature used in
/// production code.
pub fn trapezoid_refine<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let mut n = 64usize;
    let mut prev = trapezoid_fixed(&f, a, b, n);
    for _ in 0..20 {
        n *= 2;
        let next = trapezoid_fixed(&f, a, b, n);
        if (next - prev).abs() <= tol * (1.0 + next.abs()) {
            return next;
        }
        prev = next;
    }
    prev
}

fn trapezoid_fixed<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut total = 0.5 * (f(a) + f(b));
    for i in 1..n {
        total += f(a + h * i as f64);
    }
    total * h
}
