//! Multiphoton interferometry: occupation patterns, collision-free
//! configuration sets, permanents, and output distributions.
//!
//! For an `m`-mode interferometer `U` with `n` photons injected into the
//! modes of an input pattern, the probability of detecting an output pattern
//! is
//!
//! ```text
//! p(out) = |Per(U[out, in])|^2 / (prod_i out_i! * prod_j in_j!),
//! ```
//!
//! where `U[out, in]` repeats rows by output occupations and columns by
//! input occupations. Collision-free post-selection keeps only patterns with
//! occupations in {0, 1}; the retained probabilities are renormalized by the
//! collision-free mass. Configuration sets enumerate the collision-free
//! patterns in lexicographic order of their occupied-mode tuples, so
//! configuration ids are stable across the library and its file formats.

use std::collections::HashMap;
use std::io::Write as IoWrite;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rm_ensembles::UnitaryMatrix;
use crate::rng::Stream;

/// Collision-free mass below this threshold cannot be conditioned on.
pub const RAW_MASS_THRESHOLD: f64 = 1e-12;

/// Largest matrix size accepted by [`permanent`].
pub const PERMANENT_BOUND: usize = 30;

/// Photon occupations per mode; the mode count is the vector length.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OccupationPattern {
    occ: Vec<u32>,
}

impl OccupationPattern {
    /// Wraps an occupation vector; must have at least one mode.
    pub fn new(occ: Vec<u32>) -> Result<Self> {
        if occ.is_empty() {
            return Err(Error::InvalidArgument(
                "occupation pattern needs at least one mode".into(),
            ));
        }
        Ok(Self { occ })
    }

    /// Collision-free pattern with one photon in each listed mode (0-based).
    pub fn from_modes(modes: usize, occupied: &[usize]) -> Result<Self> {
        let mut occ = vec![0u32; modes];
        for &m in occupied {
            if m >= modes {
                return Err(Error::InvalidArgument(format!(
                    "mode index {m} out of range for {modes} modes"
                )));
            }
            if occ[m] != 0 {
                return Err(Error::InvalidArgument(format!(
                    "mode index {m} repeated in collision-free pattern"
                )));
            }
            occ[m] = 1;
        }
        Self::new(occ)
    }

    pub fn modes(&self) -> usize {
        self.occ.len()
    }

    /// Total photon number.
    pub fn photons(&self) -> u32 {
        self.occ.iter().sum()
    }

    pub fn occupations(&self) -> &[u32] {
        &self.occ
    }

    /// 0-based indices of occupied modes, ascending, without multiplicity.
    pub fn occupied_modes(&self) -> Vec<usize> {
        self.occ
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(i, _)| i)
            .collect()
    }

    /// True when every occupation is 0 or 1.
    pub fn is_collision_free(&self) -> bool {
        self.occ.iter().all(|&n| n <= 1)
    }

    /// `prod_i occ_i!` as a float, the probability prefactor.
    pub fn factorial_product(&self) -> f64 {
        self.occ
            .iter()
            .map(|&n| (1..=n as u64).map(|k| k as f64).product::<f64>())
            .product()
    }
}

/// All collision-free `n`-photon patterns over `m` modes, ordered
/// lexicographically by occupied-mode tuple; the order defines stable
/// 1-based configuration ids `s_1 .. s_D`.
#[derive(Debug)]
pub struct ConfigurationSet {
    modes: usize,
    photons: u32,
    configs: Vec<OccupationPattern>,
    occupied: Vec<Vec<usize>>,
    index: HashMap<Vec<u32>, usize>,
}

impl ConfigurationSet {
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn photons(&self) -> u32 {
        self.photons
    }

    /// Number of configurations `D = binomial(m, n)`.
    pub fn size(&self) -> usize {
        self.configs.len()
    }

    pub fn get(&self, i: usize) -> &OccupationPattern {
        &self.configs[i]
    }

    /// Cached 0-based occupied-mode tuple of configuration `i`.
    pub fn occupied_modes(&self, i: usize) -> &[usize] {
        &self.occupied[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &OccupationPattern> {
        self.configs.iter()
    }

    /// Position of a pattern in the lexicographic order, if present.
    pub fn index_of(&self, pattern: &OccupationPattern) -> Option<usize> {
        self.index.get(pattern.occupations()).copied()
    }

    /// True when the other set describes the same configuration space.
    pub fn compatible(&self, other: &ConfigurationSet) -> bool {
        self.modes == other.modes && self.photons == other.photons
    }
}

/// Enumerates the collision-free configuration set for `n` photons in `m`
/// modes.
pub fn enumerate_collision_free(m: usize, n: u32) -> Result<Arc<ConfigurationSet>> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "need at least one mode and one photon, got m = {m}, n = {n}"
        )));
    }
    if n as usize > m {
        return Err(Error::InvalidArgument(format!(
            "collision-free patterns need n <= m, got n = {n}, m = {m}"
        )));
    }
    let mut occupied = Vec::with_capacity(binomial(m as u64, n as u64) as usize);
    let mut current = Vec::with_capacity(n as usize);
    combos(m, n as usize, 0, &mut current, &mut occupied);

    let mut configs = Vec::with_capacity(occupied.len());
    let mut index = HashMap::with_capacity(occupied.len());
    for (i, modes) in occupied.iter().enumerate() {
        let pattern = OccupationPattern::from_modes(m, modes)?;
        index.insert(pattern.occupations().to_vec(), i);
        configs.push(pattern);
    }
    Ok(Arc::new(ConfigurationSet {
        modes: m,
        photons: n,
        configs,
        occupied,
        index,
    }))
}

fn combos(m: usize, n: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if current.len() == n {
        out.push(current.clone());
        return;
    }
    let remaining = n - current.len();
    for i in start..=(m - remaining) {
        current.push(i);
        combos(m, n, i + 1, current, out);
        current.pop();
    }
}

/// Total number of `n`-photon patterns over `m` modes with collisions
/// allowed: `binomial(m + n - 1, n)`.
pub fn count_total_configs(m: usize, n: u32) -> u64 {
    assert!(m >= 1 && n >= 1, "need at least one mode and one photon");
    binomial(m as u64 + n as u64 - 1, n as u64)
}

/// Exact binomial coefficient with u128 intermediates.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc * (n - k + i) as u128 / i as u128;
    }
    acc as u64
}

/// Submatrix `U[out, in]`: rows repeated by output occupations, columns by
/// input occupations, both in ascending mode order. Requires equal photon
/// totals and matching mode counts.
pub fn build_submatrix(
    u: &UnitaryMatrix,
    n_in: &OccupationPattern,
    n_out: &OccupationPattern,
) -> Result<DMatrix<Complex64>> {
    if n_in.modes() != u.dim() {
        return Err(Error::DimensionMismatch {
            left: n_in.modes(),
            right: u.dim(),
            context: "input pattern vs unitary".into(),
        });
    }
    if n_out.modes() != u.dim() {
        return Err(Error::DimensionMismatch {
            left: n_out.modes(),
            right: u.dim(),
            context: "output pattern vs unitary".into(),
        });
    }
    let n = n_in.photons();
    if n_out.photons() != n {
        return Err(Error::DimensionMismatch {
            left: n as usize,
            right: n_out.photons() as usize,
            context: "photon totals of input vs output pattern".into(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "patterns must carry at least one photon".into(),
        ));
    }
    let n = n as usize;
    let mut rows = Vec::with_capacity(n);
    for (i, &k) in n_out.occupations().iter().enumerate() {
        rows.extend(std::iter::repeat_n(i, k as usize));
    }
    let mut cols = Vec::with_capacity(n);
    for (j, &k) in n_in.occupations().iter().enumerate() {
        cols.extend(std::iter::repeat_n(j, k as usize));
    }
    let mut sub = DMatrix::<Complex64>::zeros(n, n);
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            sub[(a, b)] = u.entries()[(i, j)];
        }
    }
    Ok(sub)
}

/// Permanent by Ryser's formula with Gray-code subset updates,
/// `O(2^n * n)`. Practical up to `n = 30`.
pub fn permanent(a: &DMatrix<Complex64>) -> Result<Complex64> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "permanent requires a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if n > PERMANENT_BOUND {
        return Err(Error::UnsupportedSize {
            n,
            bound: PERMANENT_BOUND,
        });
    }
    let mut row_sums = vec![Complex64::new(0.0, 0.0); n];
    let mut total = Complex64::new(0.0, 0.0);
    let mut prev_gray: u64 = 0;
    for k in 1u64..(1u64 << n) {
        let gray = k ^ (k >> 1);
        let flipped = gray ^ prev_gray;
        let j = flipped.trailing_zeros() as usize;
        if gray & flipped != 0 {
            for (i, rs) in row_sums.iter_mut().enumerate() {
                *rs += a[(i, j)];
            }
        } else {
            for (i, rs) in row_sums.iter_mut().enumerate() {
                *rs -= a[(i, j)];
            }
        }
        prev_gray = gray;
        let prod: Complex64 = row_sums.iter().product();
        // Sign (-1)^(n - |S|) folds Ryser's outer (-1)^n into the sum.
        if (n as u32 - gray.count_ones()) % 2 == 0 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    Ok(total)
}

/// Permanent by Glynn's formula with Gray-code sign updates; same
/// complexity class as [`permanent`], used as an independent cross-check.
pub fn permanent_glynn(a: &DMatrix<Complex64>) -> Result<Complex64> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "permanent requires a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if n > PERMANENT_BOUND {
        return Err(Error::UnsupportedSize {
            n,
            bound: PERMANENT_BOUND,
        });
    }
    if n == 1 {
        return Ok(a[(0, 0)]);
    }
    // delta_0 .. delta_{n-2} in {+-1}, delta_{n-1} fixed to +1.
    let mut col_sums: Vec<Complex64> = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)]).sum())
        .collect();
    let mut sign = 1.0_f64;
    let mut total: Complex64 = col_sums.iter().product::<Complex64>() * sign;
    let mut prev_gray: u64 = 0;
    for k in 1u64..(1u64 << (n - 1)) {
        let gray = k ^ (k >> 1);
        let flipped = gray ^ prev_gray;
        let p = flipped.trailing_zeros() as usize;
        let to_minus = gray & flipped != 0;
        for (j, cs) in col_sums.iter_mut().enumerate() {
            if to_minus {
                *cs -= a[(p, j)] * 2.0;
            } else {
                *cs += a[(p, j)] * 2.0;
            }
        }
        sign = -sign;
        prev_gray = gray;
        total += col_sums.iter().product::<Complex64>() * sign;
    }
    Ok(total / 2.0_f64.powi(n as i32 - 1))
}

/// Provenance of an [`OutputDistribution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    /// Exact permanents, renormalized over the collision-free sector.
    ExactConditional,
    /// Relative frequencies from a finite-shot count record.
    EmpiricalCounts,
}

/// Probabilities over a collision-free configuration set; entries are
/// non-negative and sum to one within 1e-12.
#[derive(Debug, Clone)]
pub struct OutputDistribution {
    configs: Arc<ConfigurationSet>,
    probs: Vec<f64>,
    kind: DistributionKind,
}

impl OutputDistribution {
    pub fn configs(&self) -> &Arc<ConfigurationSet> {
        &self.configs
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    /// Probability of one pattern, if it belongs to the configuration set.
    pub fn prob_of(&self, pattern: &OccupationPattern) -> Option<f64> {
        self.configs.index_of(pattern).map(|i| self.probs[i])
    }

    /// Writes `config_id,occupied_modes,prob` rows; ids are 1-based and
    /// occupied modes are 1-based, semicolon-joined.
    pub fn write_csv<W: IoWrite>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["config_id", "occupied_modes", "prob"])?;
        for (i, p) in self.probs.iter().enumerate() {
            let modes = self
                .configs
                .occupied_modes(i)
                .iter()
                .map(|&m| (m + 1).to_string())
                .collect::<Vec<_>>()
                .join(";");
            w.serialize((i + 1, modes, *p))?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV serialization as a string.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf)
            .map_err(|e| Error::InvalidArgument(format!("csv was not utf-8: {e}")))
    }
}

fn check_distribution_inputs(
    u: &UnitaryMatrix,
    n_in: &OccupationPattern,
    configs: &ConfigurationSet,
) -> Result<()> {
    if n_in.modes() != u.dim() {
        return Err(Error::DimensionMismatch {
            left: n_in.modes(),
            right: u.dim(),
            context: "input pattern vs unitary".into(),
        });
    }
    if configs.modes() != u.dim() {
        return Err(Error::DimensionMismatch {
            left: configs.modes(),
            right: u.dim(),
            context: "configuration set vs unitary".into(),
        });
    }
    if !n_in.is_collision_free() {
        return Err(Error::InvalidArgument(
            "input pattern must be collision-free".into(),
        ));
    }
    if n_in.photons() != configs.photons() {
        return Err(Error::DimensionMismatch {
            left: n_in.photons() as usize,
            right: configs.photons() as usize,
            context: "input photons vs configuration set".into(),
        });
    }
    Ok(())
}

fn raw_probabilities(
    u: &UnitaryMatrix,
    n_in: &OccupationPattern,
    configs: &ConfigurationSet,
) -> Result<Vec<f64>> {
    check_distribution_inputs(u, n_in, configs)?;
    let in_prefactor = n_in.factorial_product();
    let mut probs = Vec::with_capacity(configs.size());
    for out in configs.iter() {
        let sub = build_submatrix(u, n_in, out)?;
        let per = permanent(&sub)?;
        probs.push(per.norm_sqr() / (out.factorial_product() * in_prefactor));
    }
    Ok(probs)
}

fn kahan_sum(xs: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let y = x - comp;
        let t = total + y;
        comp = (t - total) - y;
        total = t;
    }
    total
}

/// Probability mass of the collision-free sector before conditioning.
pub fn raw_collision_free_mass(
    u: &UnitaryMatrix,
    n_in: &OccupationPattern,
    configs: &ConfigurationSet,
) -> Result<f64> {
    Ok(kahan_sum(&raw_probabilities(u, n_in, configs)?))
}

/// Exact output distribution conditioned on the collision-free sector.
/// Fails when the sector mass is below [`RAW_MASS_THRESHOLD`].
pub fn output_distribution(
    u: &UnitaryMatrix,
    n_in: &OccupationPattern,
    configs: &Arc<ConfigurationSet>,
) -> Result<OutputDistribution> {
    let mut probs = raw_probabilities(u, n_in, configs)?;
    let mass = kahan_sum(&probs);
    if !(mass >= RAW_MASS_THRESHOLD) {
        return Err(Error::DegenerateConditioning {
            raw_mass: mass,
            threshold: RAW_MASS_THRESHOLD,
        });
    }
    for p in probs.iter_mut() {
        *p /= mass;
    }
    Ok(OutputDistribution {
        configs: Arc::clone(configs),
        probs,
        kind: DistributionKind::ExactConditional,
    })
}

/// Detection counts over a configuration set. `shots_total` is the number
/// requested, `shots_retained` the number represented in `counts`.
#[derive(Debug, Clone)]
pub struct CountRecord {
    configs: Arc<ConfigurationSet>,
    counts: Vec<u64>,
    shots_total: u64,
    shots_retained: u64,
}

impl CountRecord {
    /// Builds a record, checking that the counts match the configuration
    /// set and sum to `shots_retained <= shots_total`.
    pub fn new(
        configs: Arc<ConfigurationSet>,
        counts: Vec<u64>,
        shots_total: u64,
    ) -> Result<Self> {
        if counts.len() != configs.size() {
            return Err(Error::DimensionMismatch {
                left: counts.len(),
                right: configs.size(),
                context: "counts vs configuration set".into(),
            });
        }
        let shots_retained: u64 = counts.iter().sum();
        if shots_retained > shots_total {
            return Err(Error::InvalidArgument(format!(
                "retained shots {shots_retained} exceed total {shots_total}"
            )));
        }
        Ok(Self {
            configs,
            counts,
            shots_total,
            shots_retained,
        })
    }

    pub fn configs(&self) -> &Arc<ConfigurationSet> {
        &self.configs
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn shots_total(&self) -> u64 {
        self.shots_total
    }

    pub fn shots_retained(&self) -> u64 {
        self.shots_retained
    }
}

/// Draws a multinomial count record from an exact conditional distribution
/// using a chain of conditional binomials; deterministic for a fixed
/// stream.
pub fn draw_counts(
    dist: &OutputDistribution,
    shots: u64,
    stream: &mut Stream,
) -> Result<CountRecord> {
    if dist.kind() != DistributionKind::ExactConditional {
        return Err(Error::InvalidArgument(
            "draw_counts requires an exact conditional distribution".into(),
        ));
    }
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be at least 1".into()));
    }
    let d = dist.probs().len();
    let mut counts = vec![0u64; d];
    let mut remaining = shots;
    let mut mass_left = 1.0_f64;
    for i in 0..d {
        if remaining == 0 {
            break;
        }
        if i + 1 == d {
            counts[i] = remaining;
            break;
        }
        let p_rel = (dist.probs()[i] / mass_left).clamp(0.0, 1.0);
        let n_i = if p_rel >= 1.0 {
            remaining
        } else {
            let binom = Binomial::new(remaining, p_rel).map_err(|e| {
                Error::NumericFailure(format!("binomial split failed: {e}"))
            })?;
            binom.sample(stream)
        };
        counts[i] = n_i;
        remaining -= n_i;
        mass_left = (mass_left - dist.probs()[i]).max(f64::MIN_POSITIVE);
    }
    CountRecord::new(Arc::clone(dist.configs()), counts, shots)
}

/// Relative frequencies of a count record. Fails on zero retained shots.
pub fn empirical_distribution(record: &CountRecord) -> Result<OutputDistribution> {
    if record.shots_retained() == 0 {
        return Err(Error::EmptyRecord);
    }
    let total = record.shots_retained() as f64;
    let probs = record.counts().iter().map(|&c| c as f64 / total).collect();
    Ok(OutputDistribution {
        configs: Arc::clone(record.configs()),
        probs,
        kind: DistributionKind::EmpiricalCounts,
    })
}
