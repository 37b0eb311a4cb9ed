//! Chaos probes built on output distributions and spectra.
//!
//! The probes quantify how close sampled interferometer statistics come to
//! the fully chaotic (Haar / Porter-Thomas) reference:
//!
//! * [`wasserstein_to_pt`]: exact Wasserstein-1 distance between pooled
//!   conditional probabilities and the Porter-Thomas law `D e^(-D p)`,
//! * [`shannon_entropy`] / [`haar_entropy`]: distribution entropy against
//!   the circular-ensemble expectation `-1 + sum_(i=1..D) 1/i`,
//! * [`otoc_value`] / [`otoc_series`]: four-point out-of-time-order
//!   correlator expressed through the two-photon transition amplitude,
//! * [`participation_ratio`] / [`fft_participation_ratio`]: inverse purity
//!   in configuration space and in the Fourier spectrum of a time series,
//! * [`short_time_exponent`]: log-log slope of the correlator at early
//!   times, separating single-mode from two-mode information spreading,
//! * [`conditional_pt_density`]: the collision-free-conditioned
//!   Porter-Thomas density for finite configuration spaces.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interferometry::{OccupationPattern, OutputDistribution};
use crate::rm_ensembles::{evolve, Spectrum, UnitaryMatrix};

/// Correlator means below this are treated as underflowed.
const UNDERFLOW_FLOOR: f64 = 1e-300;

/// Flat vector of conditional probabilities pooled over an ensemble of
/// output distributions sharing one configuration space.
#[derive(Debug, Clone)]
pub struct ProbabilityPool {
    values: Vec<f64>,
    d_configs: usize,
    n_realizations: usize,
}

impl ProbabilityPool {
    /// Builds a pool directly from values; mainly for tests and bindings.
    pub fn from_values(values: Vec<f64>, d_configs: usize, n_realizations: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("probability pool is empty".into()));
        }
        if d_configs == 0 {
            return Err(Error::InvalidArgument(
                "pool needs a positive configuration count".into(),
            ));
        }
        if values.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidArgument(
                "pool values must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            values,
            d_configs,
            n_realizations,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Size of the underlying configuration space, the Porter-Thomas rate.
    pub fn d_configs(&self) -> usize {
        self.d_configs
    }

    pub fn n_realizations(&self) -> usize {
        self.n_realizations
    }
}

/// Concatenates the probabilities of an ensemble of distributions over the
/// same configuration space into one pool.
pub fn pool_probabilities(dists: &[OutputDistribution]) -> Result<ProbabilityPool> {
    let first = dists
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot pool zero distributions".into()))?;
    let configs = first.configs();
    let mut values = Vec::with_capacity(dists.len() * configs.size());
    for d in dists {
        if !d.configs().compatible(configs) {
            return Err(Error::InvalidArgument(
                "cannot pool distributions over different configuration spaces".into(),
            ));
        }
        values.extend_from_slice(d.probs());
    }
    ProbabilityPool::from_values(values, configs.size(), dists.len())
}

/// Exact Wasserstein-1 distance between the pool's empirical CDF and the
/// Porter-Thomas CDF `1 - exp(-D x)`, integrated piecewise between sorted
/// sample points with the closed-form antiderivative on each segment.
pub fn wasserstein_to_pt(pool: &ProbabilityPool) -> f64 {
    let d = pool.d_configs() as f64;
    let mut xs: Vec<f64> = pool.values().to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    let n = xs.len() as f64;

    // On [x_k, x_(k+1)) the empirical CDF is k/n, so the integrand is
    // |exp(-D x) - g| with g = 1 - k/n; the crossing sits at -ln(g)/D.
    let mut total = 0.0;
    let mut prev = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        let g = 1.0 - k as f64 / n;
        total += segment_abs_integral(prev, x, g, d);
        prev = x;
    }
    // Tail beyond the last sample: |exp(-D x) - 0| integrates in closed form.
    total += (-d * prev).exp() / d;
    total
}

/// Integral of `|exp(-d x) - g|` over `[a, b]` for `g` in `[0, 1]`.
fn segment_abs_integral(a: f64, b: f64, g: f64, d: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let ea = (-d * a).exp();
    let eb = (-d * b).exp();
    // Antiderivative of exp(-d x) is -exp(-d x)/d.
    let exp_area = |lo_val: f64, hi_val: f64| (lo_val - hi_val) / d;
    if ea <= g {
        // Exponential below g on the whole segment.
        g * (b - a) - exp_area(ea, eb)
    } else if eb >= g {
        // Exponential above g on the whole segment.
        exp_area(ea, eb) - g * (b - a)
    } else {
        let cross = -g.ln() / d;
        (exp_area(ea, g) - g * (cross - a)) + (g * (b - cross) - exp_area(g, eb))
    }
}

/// Ensemble statistic: mean, standard error of the mean, sample size, and
/// whether the standard error is defined (it is not for one realization,
/// where it is reported as zero and flagged).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStat {
    pub mean: f64,
    pub stderr: f64,
    pub n_realizations: usize,
    pub stderr_defined: bool,
}

impl EnsembleStat {
    /// Mean and standard error of a non-empty sample vector, by compensated
    /// summation.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument(
                "ensemble statistic needs at least one sample".into(),
            ));
        }
        let n = samples.len();
        let mean = kahan_mean(samples);
        if n == 1 {
            return Ok(EnsembleStat {
                mean,
                stderr: 0.0,
                n_realizations: 1,
                stderr_defined: false,
            });
        }
        let var = samples
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / (n as f64 - 1.0);
        Ok(EnsembleStat {
            mean,
            stderr: (var / n as f64).sqrt(),
            n_realizations: n,
            stderr_defined: true,
        })
    }
}

fn ensemble_stat(samples: &[f64]) -> Result<EnsembleStat> {
    EnsembleStat::from_samples(samples)
}

fn kahan_mean(xs: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let y = x - comp;
        let t = total + y;
        comp = (t - total) - y;
        total = t;
    }
    total / xs.len() as f64
}

/// Shannon entropy `-sum p ln p` in nats, with `0 ln 0 = 0`.
pub fn shannon_entropy(dist: &OutputDistribution) -> f64 {
    let mut total = 0.0;
    let mut comp = 0.0;
    for &p in dist.probs() {
        if p > 0.0 {
            let y = -p * p.ln() - comp;
            let t = total + y;
            comp = (t - total) - y;
            total = t;
        }
    }
    total
}

/// Mean and standard error of [`shannon_entropy`] over an ensemble.
pub fn avg_entropy(dists: &[OutputDistribution]) -> Result<EnsembleStat> {
    if dists.is_empty() {
        return Err(Error::InvalidArgument(
            "avg_entropy needs at least one distribution".into(),
        ));
    }
    let samples: Vec<f64> = dists.iter().map(shannon_entropy).collect();
    ensemble_stat(&samples)
}

/// Haar (circular ensemble) expectation of the output entropy over `d`
/// configurations: `-1 + sum_(i=1..d) 1/i`, by compensated summation in
/// ascending order of `1/i`.
pub fn haar_entropy(d_configs: usize) -> f64 {
    assert!(d_configs >= 1, "need at least one configuration");
    let mut total = 0.0;
    let mut comp = 0.0;
    for i in (1..=d_configs).rev() {
        let y = 1.0 / i as f64 - comp;
        let t = total + y;
        comp = (t - total) - y;
        total = t;
    }
    total - 1.0
}

/// Photon overlap between two patterns: `sum_m min(a_m, b_m)`; for
/// collision-free patterns this is the number of shared occupied modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OverlapSector(pub u32);

impl OverlapSector {
    pub fn shared_modes(&self) -> u32 {
        self.0
    }
}

/// Classifies the overlap sector of an input/output pattern pair.
pub fn overlap_sector(a: &OccupationPattern, b: &OccupationPattern) -> Result<OverlapSector> {
    if a.modes() != b.modes() {
        return Err(Error::DimensionMismatch {
            left: a.modes(),
            right: b.modes(),
            context: "overlap sector patterns".into(),
        });
    }
    let shared = a
        .occupations()
        .iter()
        .zip(b.occupations())
        .map(|(&x, &y)| x.min(y))
        .sum();
    Ok(OverlapSector(shared))
}

/// Four-point out-of-time-order correlator for input pair `(i, j)` and
/// output pair `(r, s)` through the two-photon amplitude:
/// `C4 = |U_ri U_sj + U_si U_rj|^2`. Bounded in `[0, 1]`.
pub fn otoc_value(u: &UnitaryMatrix, in_pair: (usize, usize), out_pair: (usize, usize)) -> Result<f64> {
    let d = u.dim();
    let (i, j) = in_pair;
    let (r, s) = out_pair;
    for &m in &[i, j, r, s] {
        if m >= d {
            return Err(Error::InvalidArgument(format!(
                "mode index {m} out of range for dimension {d}"
            )));
        }
    }
    if i == j || r == s {
        return Err(Error::InvalidArgument(
            "correlator pairs must consist of distinct modes".into(),
        ));
    }
    let e = u.entries();
    let amp = e[(r, i)] * e[(s, j)] + e[(s, i)] * e[(r, j)];
    Ok(amp.norm_sqr())
}

/// Ensemble-averaged correlator time series for one input/output pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OtocSeries {
    pub input_pair: (usize, usize),
    pub output_pair: (usize, usize),
    /// Evaluation times; `t = 0` is always the first entry.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Computes mean and standard error of [`otoc_value`] over precomputed
/// spectra at each requested time, prepending `t = 0` when absent.
pub fn otoc_series(
    spectra: &[Spectrum],
    in_pair: (usize, usize),
    out_pair: (usize, usize),
    times: &[f64],
) -> Result<OtocSeries> {
    if spectra.is_empty() {
        return Err(Error::InvalidArgument(
            "otoc_series needs at least one spectrum".into(),
        ));
    }
    let d = spectra[0].dim();
    if spectra.iter().any(|s| s.dim() != d) {
        return Err(Error::InvalidArgument(
            "otoc_series requires spectra of equal dimension".into(),
        ));
    }
    if times.is_empty() {
        return Err(Error::InvalidArgument("otoc_series needs times".into()));
    }
    for w in times.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "otoc_series times must be strictly increasing".into(),
            ));
        }
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidArgument(
            "otoc_series times must be finite and non-negative".into(),
        ));
    }
    let mut grid: Vec<f64> = Vec::with_capacity(times.len() + 1);
    if times[0] != 0.0 {
        grid.push(0.0);
    }
    grid.extend_from_slice(times);

    let mut values = Vec::with_capacity(grid.len());
    let mut stderr = Vec::with_capacity(grid.len());
    for &t in &grid {
        let samples: Vec<f64> = spectra
            .iter()
            .map(|s| otoc_value(&evolve(s, t), in_pair, out_pair))
            .collect::<Result<_>>()?;
        let stat = ensemble_stat(&samples)?;
        values.push(stat.mean);
        stderr.push(stat.stderr);
    }
    Ok(OtocSeries {
        input_pair: in_pair,
        output_pair: out_pair,
        times: grid,
        values,
        stderr,
    })
}

/// Inverse participation ratio `1 / sum p^2`; 1 for a point mass, `D` for
/// the uniform distribution.
pub fn participation_ratio(dist: &OutputDistribution) -> f64 {
    let sum_sq: f64 = dist.probs().iter().map(|p| p * p).sum();
    1.0 / sum_sq
}

/// Mean and standard error of [`participation_ratio`] over an ensemble.
pub fn avg_participation_ratio(dists: &[OutputDistribution]) -> Result<EnsembleStat> {
    if dists.is_empty() {
        return Err(Error::InvalidArgument(
            "avg_participation_ratio needs at least one distribution".into(),
        ));
    }
    let samples: Vec<f64> = dists.iter().map(participation_ratio).collect();
    ensemble_stat(&samples)
}

/// Participation ratio of the one-sided Fourier power spectrum of a time
/// series.
///
/// The series is normalized to `x / mean(x) - 1`, transformed with an FFT,
/// and the powers of bins `1 ..= L/2` (the zero-frequency bin is excluded;
/// it vanishes after normalization) are renormalized to unit sum; the
/// result is `1 / sum q_k^2`. Requires at least 32 points, a nonzero
/// temporal mean, and a non-constant series.
pub fn fft_participation_ratio(series: &[f64]) -> Result<f64> {
    let l = series.len();
    if l < 32 {
        return Err(Error::InvalidArgument(format!(
            "fft participation ratio needs at least 32 points, got {l}"
        )));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "fft participation ratio needs finite values".into(),
        ));
    }
    let mean = kahan_mean(series);
    if mean == 0.0 {
        return Err(Error::InvalidArgument(
            "fft participation ratio needs a nonzero temporal mean".into(),
        ));
    }
    let mut buf: Vec<Complex64> = series
        .iter()
        .map(|&x| Complex64::new(x / mean - 1.0, 0.0))
        .collect();
    if buf.iter().all(|z| z.re == 0.0) {
        return Err(Error::DegenerateInput(
            "constant series has an empty fluctuation spectrum".into(),
        ));
    }
    FftPlanner::new().plan_fft_forward(l).process(&mut buf);
    let powers: Vec<f64> = (1..=l / 2).map(|k| buf[k].norm_sqr()).collect();
    let total: f64 = powers.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateInput(
            "fluctuation spectrum carries no power".into(),
        ));
    }
    let sum_sq: f64 = powers.iter().map(|p| (p / total) * (p / total)).sum();
    Ok(1.0 / sum_sq)
}

/// Result of a short-time power-law fit: the log-log slope and the
/// effective grid actually used after dropping underflowed points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortTimeFit {
    pub slope: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub points_used: usize,
}

/// Fits `ln(mean C4)` against `ln t` on an early-time grid inside
/// `[1e-3, 1e-1]`, averaging the correlator over the ensemble at each
/// time. Grid points whose mean correlator underflows (below 1e-300) are
/// dropped from the small-`t` side and the effective range is reported.
pub fn short_time_exponent(
    spectra: &[Spectrum],
    in_pair: (usize, usize),
    out_pair: (usize, usize),
    t_grid: &[f64],
) -> Result<ShortTimeFit> {
    if spectra.is_empty() {
        return Err(Error::InvalidArgument(
            "short_time_exponent needs at least one spectrum".into(),
        ));
    }
    if t_grid.len() < 8 {
        return Err(Error::InvalidArgument(format!(
            "short-time grid needs at least 8 points, got {}",
            t_grid.len()
        )));
    }
    for w in t_grid.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "short-time grid must be strictly increasing".into(),
            ));
        }
    }
    if t_grid.iter().any(|&t| !(1e-3..=1e-1).contains(&t)) {
        return Err(Error::InvalidArgument(
            "short-time grid must lie within [1e-3, 1e-1]".into(),
        ));
    }
    let mut means = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let samples: Vec<f64> = spectra
            .iter()
            .map(|s| otoc_value(&evolve(s, t), in_pair, out_pair))
            .collect::<Result<_>>()?;
        means.push(kahan_mean(&samples));
    }
    fit_log_slope(t_grid, &means)
}

/// Log-log least-squares fit with underflow filtering; separated from
/// [`short_time_exponent`] so the shrink logic is directly testable.
pub(crate) fn fit_log_slope(ts: &[f64], means: &[f64]) -> Result<ShortTimeFit> {
    let retained: Vec<(f64, f64)> = ts
        .iter()
        .zip(means)
        .filter(|(_, &m)| m >= UNDERFLOW_FLOOR)
        .map(|(&t, &m)| (t.ln(), m.ln()))
        .collect();
    if retained.len() < 2 {
        return Err(Error::DegenerateInput(
            "correlator underflowed on the whole short-time grid".into(),
        ));
    }
    let n = retained.len() as f64;
    let mx = retained.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = retained.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = retained.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = retained.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(ShortTimeFit {
        slope: sxy / sxx,
        t_min: retained[0].0.exp(),
        t_max: retained[retained.len() - 1].0.exp(),
        points_used: retained.len(),
    })
}

/// Conditional Porter-Thomas density for a single collision-free
/// probability when `d` of `n0` total configurations are retained:
///
/// ```text
/// f(p) = Int_0^1 dy  y n0 e^(-n0 p y) * n0^c (1-y)^(c-1) e^(-n0 (1-y)) / (c-1)!
/// ```
///
/// with `c = n0 - d`; for `d == n0` this reduces to the plain
/// Porter-Thomas law `d e^(-d p)`. The integrand is evaluated in log space
/// and integrated by adaptive Simpson quadrature to an absolute error
/// below 1e-8.
pub fn conditional_pt_density(p: f64, n0: u64, d: u64) -> Result<f64> {
    if d == 0 || d > n0 {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= d <= n0, got d = {d}, n0 = {n0}"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "probability argument must lie in [0, 1], got {p}"
        )));
    }
    let n0f = n0 as f64;
    if d == n0 {
        return Ok(n0f * (-n0f * p).exp());
    }
    let c = n0 - d;
    let ln_norm = c as f64 * n0f.ln() - ln_factorial(c - 1);
    let integrand = |y: f64| -> f64 {
        if y <= 0.0 || y >= 1.0 {
            // The y factor kills y = 0; the (1-y)^(c-1) factor kills y = 1
            // for c >= 2, while for c == 1 the endpoint limit is finite.
            if y >= 1.0 && c == 1 {
                return n0f * n0f * (-n0f * p).exp();
            }
            return 0.0;
        }
        let mut ln_w = y.ln() + n0f.ln() - n0f * p * y + ln_norm - n0f * (1.0 - y);
        if c > 1 {
            ln_w += (c - 1) as f64 * (1.0 - y).ln();
        }
        ln_w.exp()
    };
    adaptive_simpson(&integrand, 0.0, 1.0, 1e-9, 48)
}

/// `ln k!` by direct summation; exact enough for the moderate `k` used
/// here.
fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fb, fm, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::NumericFailure(
            "adaptive quadrature failed to converge".into(),
        ));
    }
    let half_tol = 0.5 * tol;
    Ok(simpson_step(f, a, m, fa, fm, flm, left, half_tol, depth - 1)?
        + simpson_step(f, m, b, fm, fb, frm, right, half_tol, depth - 1)?)
}
