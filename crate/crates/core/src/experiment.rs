//! Experiment orchestration: ensembles, time grids, probe series,
//! characteristic times, and the mode-scaling sweep.
//!
//! A run is a pure function of its [`ExperimentConfig`]. Randomness is
//! addressed, never shared: the work item `(regime, time, realization)`
//! derives its own substreams from the master seed, so results are bitwise
//! identical for any thread count. Realizations whose collision-free mass
//! degenerates are excluded and counted, never silently dropped or
//! resampled.
//!
//! Two evaluation grids exist per regime: the experimental time list with
//! per-time realization counts (resampled per time point by default, as a
//! hardware run would do), and an optional dense grid over which one fixed
//! ensemble is reused to trace ideal probe curves. Characteristic times are
//! read off the dense grid when present, otherwise off the experimental
//! grid; the spectral form factor always uses its own grid and ensemble.

use std::collections::BTreeMap;
use std::io::Write as IoWrite;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interferometry::{
    count_total_configs, draw_counts, empirical_distribution, enumerate_collision_free,
    output_distribution, ConfigurationSet, OccupationPattern, OutputDistribution,
};
use crate::probes::{
    avg_entropy, avg_participation_ratio, haar_entropy, pool_probabilities, wasserstein_to_pt,
    EnsembleStat,
};
use crate::rm_ensembles::{
    build_hamiltonian, diagonalize, evolve, sample_goe, sample_poisson_diag, sff_sample, Spectrum,
};
use crate::rng::substream;

/// Names of the five probe series every run produces.
pub const PROBE_NAMES: [&str; 5] = [
    "sff",
    "pt_distance",
    "entropy",
    "participation_ratio",
    "otoc",
];

/// Reuse-mode time key: one ensemble shared across the experimental grid.
const REUSE_TIME_KEY: u64 = u64::MAX;

/// Spacing rule for a generated time grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpacing {
    Log,
    Linear,
}

/// Generated evaluation grid: `n_points` between `t_min` and `t_max`
/// inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGridSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub n_points: usize,
    pub spacing: GridSpacing,
}

impl TimeGridSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.t_min.is_finite() || !self.t_max.is_finite() || !(self.t_min < self.t_max) {
            return Err(Error::InvalidConfig(format!(
                "time grid needs finite t_min < t_max, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        if self.n_points < 2 {
            return Err(Error::InvalidConfig(
                "time grid needs at least 2 points".into(),
            ));
        }
        if self.spacing == GridSpacing::Log && !(self.t_min > 0.0) {
            return Err(Error::InvalidConfig(
                "log-spaced time grid needs t_min > 0".into(),
            ));
        }
        Ok(())
    }

    /// Evaluation times; endpoints are reproduced exactly.
    pub fn times(&self) -> Vec<f64> {
        let n = self.n_points;
        (0..n)
            .map(|i| {
                if i == 0 {
                    return self.t_min;
                }
                if i == n - 1 {
                    return self.t_max;
                }
                let frac = i as f64 / (n - 1) as f64;
                match self.spacing {
                    GridSpacing::Linear => self.t_min + frac * (self.t_max - self.t_min),
                    GridSpacing::Log => {
                        (self.t_min.ln() + frac * (self.t_max.ln() - self.t_min.ln())).exp()
                    }
                }
            })
            .collect()
    }
}

/// One point of the crossover family: a label used in filenames and
/// reports, the crossover parameter, and per-time realization counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSpec {
    pub label: String,
    pub lambda_cap: f64,
    /// One realization count per entry of the experimental time list.
    pub realizations: Vec<usize>,
    /// Overrides the dense-grid ensemble size for this regime.
    #[serde(default)]
    pub dense_realizations: Option<usize>,
}

/// Dense ideal-curve grid: one reused ensemble traced over many times.
/// Defaults to 200 log-spaced points in [0.1, 1000] over 2000
/// realizations, so `"dense_grid": {}` enables ideal-curve mode as is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseGridSpec {
    #[serde(default = "default_dense_time_grid")]
    pub grid: TimeGridSpec,
    #[serde(default = "default_dense_realizations")]
    pub n_realizations: usize,
}

fn default_dense_time_grid() -> TimeGridSpec {
    TimeGridSpec {
        t_min: 0.1,
        t_max: 1000.0,
        n_points: 200,
        spacing: GridSpacing::Log,
    }
}

fn default_dense_realizations() -> usize {
    2000
}

fn default_sff_ensemble_size() -> usize {
    2000
}

fn default_sff_order() -> u32 {
    2
}

fn default_sff_time_grid() -> TimeGridSpec {
    TimeGridSpec {
        t_min: 0.5,
        t_max: 50.0,
        n_points: 200,
        spacing: GridSpacing::Log,
    }
}

/// Full description of a run; [`run_experiment`] is a pure function of
/// this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub modes: usize,
    pub photons: u32,
    /// Collision-free input pattern as an occupation vector.
    pub input_pattern: OccupationPattern,
    /// Representative output pattern whose conditional probability forms
    /// the correlator probe series.
    pub otoc_output: OccupationPattern,
    pub regimes: Vec<RegimeSpec>,
    /// Experimental time list, strictly increasing and positive.
    pub times: Vec<f64>,
    #[serde(default)]
    pub master_seed: u64,
    /// Finite shots per (realization, time); absent means exact
    /// probabilities.
    #[serde(default)]
    pub shots: Option<u64>,
    /// Share one ensemble across the experimental time list instead of
    /// resampling per time point.
    #[serde(default)]
    pub reuse_ensemble_across_times: bool,
    #[serde(default = "default_sff_ensemble_size")]
    pub sff_ensemble_size: usize,
    /// Half the exponent of the form factor: 2 gives the four-point form
    /// factor.
    #[serde(default = "default_sff_order")]
    pub sff_order: u32,
    #[serde(default = "default_sff_time_grid")]
    pub sff_time_grid: TimeGridSpec,
    #[serde(default)]
    pub dense_grid: Option<DenseGridSpec>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.modes < 2 {
            return Err(Error::InvalidConfig(format!(
                "modes must be at least 2, got {}",
                self.modes
            )));
        }
        if self.photons == 0 {
            return Err(Error::InvalidConfig("photons must be at least 1".into()));
        }
        if self.photons as usize > self.modes {
            return Err(Error::InvalidConfig(format!(
                "photons ({}) cannot exceed modes ({})",
                self.photons, self.modes
            )));
        }
        for (name, pattern) in [("input_pattern", &self.input_pattern), ("otoc_output", &self.otoc_output)] {
            if pattern.modes() != self.modes {
                return Err(Error::InvalidConfig(format!(
                    "{name} has {} modes, expected {}",
                    pattern.modes(),
                    self.modes
                )));
            }
            if !pattern.is_collision_free() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be collision-free"
                )));
            }
            if pattern.photons() != self.photons {
                return Err(Error::InvalidConfig(format!(
                    "{name} carries {} photons, expected {}",
                    pattern.photons(),
                    self.photons
                )));
            }
        }
        if self.times.is_empty() {
            return Err(Error::InvalidConfig("times must be non-empty".into()));
        }
        if self.times.iter().any(|t| !t.is_finite() || *t <= 0.0) {
            return Err(Error::InvalidConfig(
                "times must be finite and positive".into(),
            ));
        }
        for w in self.times.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::InvalidConfig(
                    "times must be strictly increasing".into(),
                ));
            }
        }
        if self.regimes.is_empty() {
            return Err(Error::InvalidConfig("at least one regime required".into()));
        }
        let mut labels = std::collections::HashSet::new();
        for regime in &self.regimes {
            if regime.label.is_empty()
                || !regime
                    .label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return Err(Error::InvalidConfig(format!(
                    "regime label {:?} must be non-empty and use only \
                     alphanumerics, '-', '_'",
                    regime.label
                )));
            }
            if !labels.insert(&regime.label) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate regime label {:?}",
                    regime.label
                )));
            }
            if !regime.lambda_cap.is_finite() || regime.lambda_cap < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "regime {:?}: lambda_cap must be finite and non-negative",
                    regime.label
                )));
            }
            if regime.realizations.len() != self.times.len() {
                return Err(Error::InvalidConfig(format!(
                    "regime {:?}: {} realization counts for {} times",
                    regime.label,
                    regime.realizations.len(),
                    self.times.len()
                )));
            }
            if regime.realizations.iter().any(|&n| n == 0) {
                return Err(Error::InvalidConfig(format!(
                    "regime {:?}: realization counts must be at least 1",
                    regime.label
                )));
            }
            if regime.dense_realizations == Some(0) {
                return Err(Error::InvalidConfig(format!(
                    "regime {:?}: dense_realizations must be at least 1",
                    regime.label
                )));
            }
        }
        if self.shots == Some(0) {
            return Err(Error::InvalidConfig("shots must be at least 1".into()));
        }
        if self.sff_ensemble_size == 0 {
            return Err(Error::InvalidConfig(
                "sff_ensemble_size must be at least 1".into(),
            ));
        }
        if self.sff_order == 0 {
            return Err(Error::InvalidConfig("sff_order must be at least 1".into()));
        }
        self.sff_time_grid.validate()?;
        if let Some(dense) = &self.dense_grid {
            dense.grid.validate()?;
            if dense.n_realizations == 0 {
                return Err(Error::InvalidConfig(
                    "dense grid needs at least 1 realization".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One probe traced over a grid, with per-point ensemble statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSeries {
    pub probe: String,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_realizations: Vec<usize>,
    /// False where the standard error is undefined (single realization or
    /// pooled statistic) and reported as zero.
    pub stderr_defined: Vec<bool>,
}

impl ProbeSeries {
    fn from_stats(probe: &str, times: &[f64], stats: Vec<EnsembleStat>) -> Self {
        ProbeSeries {
            probe: probe.to_string(),
            times: times.to_vec(),
            mean: stats.iter().map(|s| s.mean).collect(),
            stderr: stats.iter().map(|s| s.stderr).collect(),
            n_realizations: stats.iter().map(|s| s.n_realizations).collect(),
            stderr_defined: stats.iter().map(|s| s.stderr_defined).collect(),
        }
    }

    /// Writes `time,mean,stderr,n_realizations,probe_name` rows.
    pub fn write_csv<W: IoWrite>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "mean", "stderr", "n_realizations", "probe_name"])?;
        for i in 0..self.times.len() {
            w.serialize((
                self.times[i],
                self.mean[i],
                self.stderr[i],
                self.n_realizations[i],
                &self.probe,
            ))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf)
            .map_err(|e| Error::InvalidArgument(format!("csv was not utf-8: {e}")))
    }
}

/// Whether a characteristic time marks a minimum or a maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Min,
    Max,
}

/// Grid location of a probe extremum; `indeterminate` marks flat series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicTime {
    pub time: Option<f64>,
    pub index: Option<usize>,
    pub indeterminate: bool,
}

/// Grid argmin/argmax with ties broken toward the earliest time; a series
/// flat to within 1e-12 (relative to its magnitude) is indeterminate.
pub fn extract_characteristic_time(
    times: &[f64],
    values: &[f64],
    extremum: Extremum,
) -> CharacteristicTime {
    assert_eq!(times.len(), values.len());
    if times.is_empty() {
        return CharacteristicTime {
            time: None,
            index: None,
            indeterminate: true,
        };
    }
    let lo = values.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
        return CharacteristicTime {
            time: None,
            index: None,
            indeterminate: true,
        };
    }
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate().skip(1) {
        let better = match extremum {
            Extremum::Min => v < values[best],
            Extremum::Max => v > values[best],
        };
        if better {
            best = i;
        }
    }
    CharacteristicTime {
        time: Some(times[best]),
        index: Some(best),
        indeterminate: false,
    }
}

/// Exclusion accounting for one time point of one grid;
/// `used + excluded == configured` always holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionRecord {
    pub grid: String,
    pub time: f64,
    pub configured: usize,
    pub used: usize,
    pub excluded: usize,
}

/// Everything computed for one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub label: String,
    pub lambda_cap: f64,
    /// Probe series on the experimental time list (plus `sff` on its own
    /// grid).
    pub series: BTreeMap<String, ProbeSeries>,
    /// Ideal-curve series on the dense grid, when configured.
    pub dense_series: Option<BTreeMap<String, ProbeSeries>>,
    /// `sff_min`, `entropy_max`, `pt_dist_min`, `pr_max`.
    pub characteristic_times: BTreeMap<String, CharacteristicTime>,
    pub exclusions: Vec<ExclusionRecord>,
}

/// Full run output: config echo, geometry constants, and per-regime
/// results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub config: ExperimentConfig,
    /// Collision-free configuration count `D`.
    pub d_configs: usize,
    /// Total configuration count including collisions.
    pub n_total_configs: u64,
    /// Haar entropy reference for `d_configs`.
    pub haar_entropy: f64,
    pub regimes: Vec<RegimeReport>,
}

impl ExperimentReport {
    /// JSON with sorted keys and shortest round-trip floats, ending in a
    /// newline.
    pub fn to_json_string(&self) -> Result<String> {
        // Routing through Value sorts object keys, including struct fields.
        let value = serde_json::to_value(self)?;
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Distributions retained at one time point, plus exclusion accounting.
struct TimePoint {
    dists: Vec<OutputDistribution>,
    configured: usize,
    excluded: usize,
}

struct Simulator<'a> {
    cfg: &'a ExperimentConfig,
    cfgs: Arc<ConfigurationSet>,
    otoc_index: usize,
}

impl Simulator<'_> {
    /// Samples the (H0, V) pair addressed by `indices`, builds the
    /// crossover Hamiltonian, and diagonalizes it.
    fn spectrum(&self, labels: (&str, &str), indices: &[u64], lambda_cap: f64) -> Result<Spectrum> {
        let d = self.cfg.modes;
        let seed = self.cfg.master_seed;
        let mut h0_stream = substream(seed, labels.0, indices);
        let h0 = sample_poisson_diag(d, &mut h0_stream)?;
        let mut v_stream = substream(seed, labels.1, indices);
        let v = sample_goe(d, &mut v_stream)?;
        diagonalize(&build_hamiltonian(&h0, &v, lambda_cap)?)
    }

    /// Evolves one realization to time `t` and produces its distribution;
    /// `Ok(None)` flags a degenerate-conditioning exclusion. When shots are
    /// configured the exact distribution is replaced by empirical
    /// frequencies drawn from the addressed shot stream.
    fn distribution(
        &self,
        spec: &Spectrum,
        t: f64,
        shot_indices: &[u64],
    ) -> Result<Option<OutputDistribution>> {
        let u = evolve(spec, t);
        let exact = match output_distribution(&u, &self.cfg.input_pattern, &self.cfgs) {
            Ok(dist) => dist,
            Err(Error::DegenerateConditioning { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        match self.cfg.shots {
            None => Ok(Some(exact)),
            Some(shots) => {
                let mut stream = substream(self.cfg.master_seed, "shots", shot_indices);
                let record = draw_counts(&exact, shots, &mut stream)?;
                Ok(Some(empirical_distribution(&record)?))
            }
        }
    }

    /// Probe statistics over the retained distributions of a time point.
    fn probe_stats(&self, point: &TimePoint) -> Result<PointStats> {
        let entropy = avg_entropy(&point.dists)?;
        let pr = avg_participation_ratio(&point.dists)?;
        let otoc_samples: Vec<f64> = point
            .dists
            .iter()
            .map(|d| d.probs()[self.otoc_index])
            .collect();
        let otoc = EnsembleStat::from_samples(&otoc_samples)?;
        let pool = pool_probabilities(&point.dists)?;
        let w1 = EnsembleStat {
            mean: wasserstein_to_pt(&pool),
            stderr: 0.0,
            n_realizations: point.dists.len(),
            stderr_defined: false,
        };
        Ok(PointStats {
            entropy,
            pr,
            otoc,
            w1,
        })
    }
}

struct PointStats {
    entropy: EnsembleStat,
    pr: EnsembleStat,
    otoc: EnsembleStat,
    w1: EnsembleStat,
}

fn series_bundle(
    probe_times: &[f64],
    stats: &[PointStats],
) -> BTreeMap<String, ProbeSeries> {
    let mut out = BTreeMap::new();
    out.insert(
        "entropy".to_string(),
        ProbeSeries::from_stats("entropy", probe_times, stats.iter().map(|s| s.entropy).collect()),
    );
    out.insert(
        "participation_ratio".to_string(),
        ProbeSeries::from_stats(
            "participation_ratio",
            probe_times,
            stats.iter().map(|s| s.pr).collect(),
        ),
    );
    out.insert(
        "otoc".to_string(),
        ProbeSeries::from_stats("otoc", probe_times, stats.iter().map(|s| s.otoc).collect()),
    );
    out.insert(
        "pt_distance".to_string(),
        ProbeSeries::from_stats("pt_distance", probe_times, stats.iter().map(|s| s.w1).collect()),
    );
    out
}

/// Runs the full protocol described by `cfg`; bitwise deterministic for a
/// fixed master seed, independent of thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let cfgs = enumerate_collision_free(cfg.modes, cfg.photons)?;
    let otoc_index = cfgs.index_of(&cfg.otoc_output).ok_or_else(|| {
        Error::InvalidConfig("otoc_output is not a collision-free configuration".into())
    })?;
    let sim = Simulator {
        cfg,
        cfgs: Arc::clone(&cfgs),
        otoc_index,
    };

    let mut regimes = Vec::with_capacity(cfg.regimes.len());
    for (regime_idx, regime) in cfg.regimes.iter().enumerate() {
        regimes.push(run_regime(&sim, regime_idx, regime)?);
    }

    Ok(ExperimentReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        d_configs: cfgs.size(),
        n_total_configs: count_total_configs(cfg.modes, cfg.photons),
        haar_entropy: haar_entropy(cfgs.size()),
        regimes,
    })
}

fn run_regime(sim: &Simulator<'_>, regime_idx: usize, regime: &RegimeSpec) -> Result<RegimeReport> {
    let cfg = sim.cfg;
    let ri = regime_idx as u64;
    let mut exclusions = Vec::new();

    // Experimental grid: realization ensembles resampled per time point
    // unless the reuse flag shares one ensemble across the list. Each
    // point is folded into its statistics immediately so at most one
    // time point's distributions are alive at a time.
    let mut exp_stats = Vec::with_capacity(cfg.times.len());
    for (k, &t) in cfg.times.iter().enumerate() {
        let n = regime.realizations[k];
        let time_key = if cfg.reuse_ensemble_across_times {
            REUSE_TIME_KEY
        } else {
            k as u64
        };
        let results: Vec<Result<Option<OutputDistribution>>> = (0..n)
            .into_par_iter()
            .map(|r| {
                let spec = sim.spectrum(
                    ("h0", "v"),
                    &[ri, time_key, r as u64],
                    regime.lambda_cap,
                )?;
                sim.distribution(&spec, t, &[ri, k as u64, r as u64])
            })
            .collect();
        let point = collect_point(results, t)?;
        record_exclusions(&point, "experiment", t, &mut exclusions);
        exp_stats.push(sim.probe_stats(&point)?);
    }
    let mut series = series_bundle(&cfg.times, &exp_stats);

    // Form-factor grid: spectra only, one dedicated ensemble.
    let sff_spectra: Vec<Spectrum> = (0..cfg.sff_ensemble_size)
        .into_par_iter()
        .map(|r| sim.spectrum(("sff-h0", "sff-v"), &[ri, r as u64], regime.lambda_cap))
        .collect::<Result<_>>()?;
    let sff_times = cfg.sff_time_grid.times();
    let sff_stats: Vec<EnsembleStat> = sff_times
        .par_iter()
        .map(|&t| {
            let samples: Vec<f64> = sff_spectra
                .iter()
                .map(|s| sff_sample(s, t, cfg.sff_order))
                .collect();
            EnsembleStat::from_samples(&samples)
        })
        .collect::<Result<_>>()?;
    let sff_series = ProbeSeries::from_stats("sff", &sff_times, sff_stats);

    // Dense ideal-curve grid: one reused ensemble traced over every time.
    let mut dense_series = None;
    let mut dense_stats_opt: Option<(Vec<f64>, Vec<PointStats>)> = None;
    if let Some(dense) = &cfg.dense_grid {
        let n_dense = regime.dense_realizations.unwrap_or(dense.n_realizations);
        let spectra: Vec<Spectrum> = (0..n_dense)
            .into_par_iter()
            .map(|r| sim.spectrum(("dense-h0", "dense-v"), &[ri, r as u64], regime.lambda_cap))
            .collect::<Result<_>>()?;
        let dense_times = dense.grid.times();
        // Each dense point is folded into its statistics inside the loop;
        // holding every point's distributions at once would cost
        // n_dense * n_times * D floats.
        let results: Vec<Result<(PointStats, usize, usize)>> = dense_times
            .par_iter()
            .enumerate()
            .map(|(ti, &t)| {
                let per_real: Vec<Result<Option<OutputDistribution>>> = spectra
                    .iter()
                    .enumerate()
                    .map(|(r, spec)| {
                        sim.distribution(spec, t, &[ri, REUSE_TIME_KEY, ti as u64, r as u64])
                    })
                    .collect();
                let point = collect_point(per_real, t)?;
                Ok((sim.probe_stats(&point)?, point.configured, point.excluded))
            })
            .collect();
        let mut stats = Vec::with_capacity(results.len());
        for (ti, res) in results.into_iter().enumerate() {
            let (point_stats, configured, excluded) = res?;
            exclusions.push(ExclusionRecord {
                grid: "dense".to_string(),
                time: dense_times[ti],
                configured,
                used: configured - excluded,
                excluded,
            });
            stats.push(point_stats);
        }
        dense_series = Some(series_bundle(&dense_times, &stats));
        dense_stats_opt = Some((dense_times, stats));
    }

    // Characteristic times come from the richest available probe grid.
    let (char_times, char_values): (&[f64], &[PointStats]) = match &dense_stats_opt {
        Some((times, stats)) => (times, stats),
        None => (&cfg.times, &exp_stats),
    };
    let mut characteristic_times = BTreeMap::new();
    characteristic_times.insert(
        "sff_min".to_string(),
        extract_characteristic_time(
            &sff_times,
            &sff_series.mean,
            Extremum::Min,
        ),
    );
    characteristic_times.insert(
        "entropy_max".to_string(),
        extract_characteristic_time(
            char_times,
            &char_values.iter().map(|s| s.entropy.mean).collect::<Vec<_>>(),
            Extremum::Max,
        ),
    );
    characteristic_times.insert(
        "pt_dist_min".to_string(),
        extract_characteristic_time(
            char_times,
            &char_values.iter().map(|s| s.w1.mean).collect::<Vec<_>>(),
            Extremum::Min,
        ),
    );
    characteristic_times.insert(
        "pr_max".to_string(),
        extract_characteristic_time(
            char_times,
            &char_values.iter().map(|s| s.pr.mean).collect::<Vec<_>>(),
            Extremum::Max,
        ),
    );

    series.insert("sff".to_string(), sff_series);

    Ok(RegimeReport {
        label: regime.label.clone(),
        lambda_cap: regime.lambda_cap,
        series,
        dense_series,
        characteristic_times,
        exclusions,
    })
}

/// Folds per-realization results into a time point, separating exclusions
/// from hard failures. A point with every realization excluded is a hard
/// failure.
fn collect_point(results: Vec<Result<Option<OutputDistribution>>>, t: f64) -> Result<TimePoint> {
    let configured = results.len();
    let mut dists = Vec::with_capacity(configured);
    let mut excluded = 0usize;
    for res in results {
        match res? {
            Some(dist) => dists.push(dist),
            None => excluded += 1,
        }
    }
    if dists.is_empty() {
        return Err(Error::NumericFailure(format!(
            "every realization excluded at t = {t} (degenerate conditioning)"
        )));
    }
    Ok(TimePoint {
        dists,
        configured,
        excluded,
    })
}

fn record_exclusions(
    point: &TimePoint,
    grid: &str,
    t: f64,
    exclusions: &mut Vec<ExclusionRecord>,
) {
    exclusions.push(ExclusionRecord {
        grid: grid.to_string(),
        time: t,
        configured: point.configured,
        used: point.dists.len(),
        excluded: point.excluded,
    });
}

/// One row of the sweep summary; characteristic times refer to the
/// chaotic regime (largest `lambda_cap`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub modes: usize,
    pub d_configs: usize,
    pub max_entropy: f64,
    pub haar_entropy: f64,
    /// Relative entropy gap `|max_entropy - haar| / haar`.
    pub gap: f64,
    pub sff_min: Option<f64>,
    pub entropy_max: Option<f64>,
    pub pt_dist_min: Option<f64>,
    pub pr_max: Option<f64>,
}

/// Sweep output: one full report per mode count plus the summary table.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub reports: Vec<ExperimentReport>,
    pub summary: Vec<SweepSummaryRow>,
}

/// Writes the sweep summary as CSV with one row per mode count.
pub fn write_sweep_summary<W: IoWrite>(rows: &[SweepSummaryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "modes",
        "d_configs",
        "max_entropy",
        "haar_entropy",
        "gap",
        "sff_min",
        "entropy_max",
        "pt_dist_min",
        "pr_max",
    ])?;
    for row in rows {
        w.serialize((
            row.modes,
            row.d_configs,
            row.max_entropy,
            row.haar_entropy,
            row.gap,
            row.sff_min,
            row.entropy_max,
            row.pt_dist_min,
            row.pr_max,
        ))?;
    }
    w.flush()?;
    Ok(())
}

/// Reruns the experiment for each mode count, keeping photons and occupied
/// input/output modes fixed, and summarizes the approach to the Haar
/// entropy together with the characteristic times of the most chaotic
/// regime.
pub fn scaling_sweep(base: &ExperimentConfig, mode_list: &[usize]) -> Result<SweepResult> {
    if mode_list.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one mode count".into()));
    }
    let mut reports = Vec::with_capacity(mode_list.len());
    let mut summary = Vec::with_capacity(mode_list.len());
    for &m in mode_list {
        let cfg = resize_config(base, m)?;
        let report = run_experiment(&cfg)?;
        summary.push(summarize(&report)?);
        reports.push(report);
    }
    Ok(SweepResult { reports, summary })
}

/// Rebuilds the config for `modes = m`, preserving the occupied mode
/// indices of the input and correlator patterns.
fn resize_config(base: &ExperimentConfig, m: usize) -> Result<ExperimentConfig> {
    if m < base.photons as usize {
        return Err(Error::InvalidConfig(format!(
            "modes {} cannot hold {} photons",
            m, base.photons
        )));
    }
    let resize = |pattern: &OccupationPattern, name: &str| -> Result<OccupationPattern> {
        let occupied = pattern.occupied_modes();
        if let Some(&max_mode) = occupied.iter().max() {
            if max_mode >= m {
                return Err(Error::InvalidConfig(format!(
                    "{name} occupies mode {max_mode}, out of range for {m} modes"
                )));
            }
        }
        OccupationPattern::from_modes(m, &occupied)
    };
    let mut cfg = base.clone();
    cfg.modes = m;
    cfg.input_pattern = resize(&base.input_pattern, "input_pattern")?;
    cfg.otoc_output = resize(&base.otoc_output, "otoc_output")?;
    cfg.validate()?;
    Ok(cfg)
}

fn summarize(report: &ExperimentReport) -> Result<SweepSummaryRow> {
    // The most chaotic regime carries the Haar-approach claim.
    let chaotic = report
        .regimes
        .iter()
        .max_by(|a, b| a.lambda_cap.total_cmp(&b.lambda_cap))
        .ok_or_else(|| Error::InvalidConfig("report has no regimes".into()))?;
    let entropy_series = chaotic
        .dense_series
        .as_ref()
        .and_then(|map| map.get("entropy"))
        .or_else(|| chaotic.series.get("entropy"))
        .ok_or_else(|| Error::NumericFailure("missing entropy series".into()))?;
    let max_entropy = entropy_series
        .mean
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let haar = report.haar_entropy;
    let ct = |name: &str| {
        chaotic
            .characteristic_times
            .get(name)
            .and_then(|c| c.time)
    };
    Ok(SweepSummaryRow {
        modes: report.config.modes,
        d_configs: report.d_configs,
        max_entropy,
        haar_entropy: haar,
        gap: (max_entropy - haar).abs() / haar,
        sff_min: ct("sff_min"),
        entropy_max: ct("entropy_max"),
        pt_dist_min: ct("pt_dist_min"),
        pr_max: ct("pr_max"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            modes: 4,
            photons: 2,
            input_pattern: OccupationPattern::new(vec![0, 1, 1, 0]).unwrap(),
            otoc_output: OccupationPattern::new(vec![1, 0, 0, 1]).unwrap(),
            regimes: vec![
                RegimeSpec {
                    label: "integrable".into(),
                    lambda_cap: 0.01,
                    realizations: vec![3, 3],
                    dense_realizations: None,
                },
                RegimeSpec {
                    label: "chaotic".into(),
                    lambda_cap: 100.0,
                    realizations: vec![3, 3],
                    dense_realizations: None,
                },
            ],
            times: vec![0.7, 2.0],
            master_seed: 11,
            shots: None,
            reuse_ensemble_across_times: false,
            sff_ensemble_size: 8,
            sff_order: 2,
            sff_time_grid: TimeGridSpec {
                t_min: 0.5,
                t_max: 4.0,
                n_points: 6,
                spacing: GridSpacing::Log,
            },
            dense_grid: None,
        }
    }

    #[test]
    fn time_grid_endpoints_and_spacing() {
        let grid = TimeGridSpec {
            t_min: 0.1,
            t_max: 1000.0,
            n_points: 5,
            spacing: GridSpacing::Log,
        };
        let ts = grid.times();
        assert_eq!(ts.len(), 5);
        assert_eq!(ts[0], 0.1);
        assert_eq!(ts[4], 1000.0);
        // Log spacing: constant ratio.
        let r0 = ts[1] / ts[0];
        let r1 = ts[2] / ts[1];
        assert!((r0 - r1).abs() < 1e-9);

        let lin = TimeGridSpec {
            t_min: 1.0,
            t_max: 3.0,
            n_points: 3,
            spacing: GridSpacing::Linear,
        };
        assert_eq!(lin.times(), vec![1.0, 2.0, 3.0]);

        let bad = TimeGridSpec {
            t_min: 0.0,
            t_max: 1.0,
            n_points: 4,
            spacing: GridSpacing::Log,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_validation_catches_shape_errors() {
        let mut cfg = tiny_config();
        cfg.photons = 5;
        assert!(cfg.validate().is_err());

        let mut cfg = tiny_config();
        cfg.input_pattern = OccupationPattern::new(vec![2, 0, 0, 0]).unwrap();
        assert!(cfg.validate().is_err());

        let mut cfg = tiny_config();
        cfg.times = vec![2.0, 0.7];
        assert!(cfg.validate().is_err());

        let mut cfg = tiny_config();
        cfg.regimes[1].label = "integrable".into();
        assert!(cfg.validate().is_err());

        let mut cfg = tiny_config();
        cfg.regimes[0].label = "bad label!".into();
        assert!(cfg.validate().is_err());

        let mut cfg = tiny_config();
        cfg.regimes[0].realizations = vec![3];
        assert!(cfg.validate().is_err());

        let mut cfg = tiny_config();
        cfg.shots = Some(0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn run_produces_expected_structure() {
        let cfg = tiny_config();
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.d_configs, 6);
        assert_eq!(report.n_total_configs, 10);
        assert_eq!(report.regimes.len(), 2);
        for regime in &report.regimes {
            assert_eq!(regime.series.len(), 5);
            for name in PROBE_NAMES {
                assert!(regime.series.contains_key(name), "missing {name}");
            }
            let entropy = &regime.series["entropy"];
            assert_eq!(entropy.times, cfg.times);
            assert_eq!(entropy.n_realizations, vec![3, 3]);
            assert!(entropy.stderr_defined.iter().all(|&b| b));
            let sff = &regime.series["sff"];
            assert_eq!(sff.times.len(), 6);
            // Sanity: form factor at its smallest time is within (0, 1].
            assert!(sff.mean[0] > 0.0 && sff.mean[0] <= 1.0 + 1e-12);
            for name in ["sff_min", "entropy_max", "pt_dist_min", "pr_max"] {
                assert!(regime.characteristic_times.contains_key(name));
            }
            // Exclusion accounting covers both experimental time points.
            assert_eq!(regime.exclusions.len(), 2);
            for e in &regime.exclusions {
                assert_eq!(e.used + e.excluded, e.configured);
                assert_eq!(e.excluded, 0);
            }
        }
    }

    #[test]
    fn run_is_deterministic_and_thread_independent() {
        let cfg = tiny_config();
        let a = run_experiment(&cfg).unwrap().to_json_string().unwrap();
        let b = run_experiment(&cfg).unwrap().to_json_string().unwrap();
        assert_eq!(a, b);

        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let c = pool1
            .install(|| run_experiment(&cfg).unwrap())
            .to_json_string()
            .unwrap();
        let d = pool4
            .install(|| run_experiment(&cfg).unwrap())
            .to_json_string()
            .unwrap();
        assert_eq!(a, c);
        assert_eq!(a, d);
    }

    #[test]
    fn seed_and_reuse_flag_change_results() {
        let cfg = tiny_config();
        let base = run_experiment(&cfg).unwrap().to_json_string().unwrap();

        let mut other_seed = tiny_config();
        other_seed.master_seed = 12;
        let changed = run_experiment(&other_seed).unwrap().to_json_string().unwrap();
        assert_ne!(base, changed);

        let mut reuse = tiny_config();
        reuse.reuse_ensemble_across_times = true;
        let report = run_experiment(&reuse).unwrap();
        assert_ne!(base, report.to_json_string().unwrap());
    }

    #[test]
    fn single_realization_flags_stderr() {
        let mut cfg = tiny_config();
        cfg.times = vec![1.0];
        for regime in &mut cfg.regimes {
            regime.realizations = vec![1];
        }
        let report = run_experiment(&cfg).unwrap();
        let entropy = &report.regimes[0].series["entropy"];
        assert_eq!(entropy.n_realizations, vec![1]);
        assert_eq!(entropy.stderr, vec![0.0]);
        assert_eq!(entropy.stderr_defined, vec![false]);
    }

    #[test]
    fn shot_noise_mode_is_deterministic_and_close_to_exact() {
        let mut cfg = tiny_config();
        cfg.shots = Some(200_000);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.to_json_string().unwrap(), b.to_json_string().unwrap());

        let exact = run_experiment(&tiny_config()).unwrap();
        let noisy_ent = &a.regimes[1].series["entropy"].mean;
        let exact_ent = &exact.regimes[1].series["entropy"].mean;
        for (x, y) in noisy_ent.iter().zip(exact_ent) {
            assert!((x - y).abs() < 0.05, "shot-noise entropy drifted: {x} vs {y}");
        }
    }

    #[test]
    fn exact_mode_ignores_shot_streams() {
        // Exact-probability runs must not consume shot-noise randomness, so
        // configs differing only in shot-irrelevant ways stay identical.
        let cfg = tiny_config();
        let report = run_experiment(&cfg).unwrap();
        for regime in &report.regimes {
            for series in regime.series.values() {
                assert!(series.mean.iter().all(|m| m.is_finite()));
            }
        }
        // The same seed with shots set differs, proving the stream is only
        // touched in shot mode.
        let mut with_shots = cfg.clone();
        with_shots.shots = Some(50);
        let noisy = run_experiment(&with_shots).unwrap();
        assert_ne!(
            report.to_json_string().unwrap(),
            noisy.to_json_string().unwrap()
        );
    }

    #[test]
    fn dense_grid_drives_characteristic_times() {
        let mut cfg = tiny_config();
        cfg.dense_grid = Some(DenseGridSpec {
            grid: TimeGridSpec {
                t_min: 0.3,
                t_max: 30.0,
                n_points: 40,
                spacing: GridSpacing::Log,
            },
            n_realizations: 4,
        });
        cfg.regimes[0].dense_realizations = Some(2);
        let report = run_experiment(&cfg).unwrap();
        for (ridx, regime) in report.regimes.iter().enumerate() {
            let dense = regime.dense_series.as_ref().unwrap();
            assert_eq!(dense.len(), 4);
            let entropy = &dense["entropy"];
            assert_eq!(entropy.times.len(), 40);
            let want_n = if ridx == 0 { 2 } else { 4 };
            assert!(entropy.n_realizations.iter().all(|&n| n == want_n));
            // Characteristic probe times must sit on the dense grid.
            for name in ["entropy_max", "pt_dist_min", "pr_max"] {
                let ct = &regime.characteristic_times[name];
                if let Some(t) = ct.time {
                    assert!(entropy.times.contains(&t), "{name} off-grid");
                }
            }
            // Dense exclusions accounted per dense time point.
            let dense_excl = regime
                .exclusions
                .iter()
                .filter(|e| e.grid == "dense")
                .count();
            assert_eq!(dense_excl, 40);
        }
    }

    #[test]
    fn characteristic_time_extraction_rules() {
        let times = [1.0, 2.0, 3.0, 4.0];
        // Monotone decreasing: argmin at the last point.
        let ct = extract_characteristic_time(&times, &[4.0, 3.0, 2.0, 1.0], Extremum::Min);
        assert_eq!(ct.time, Some(4.0));
        assert_eq!(ct.index, Some(3));
        // Tie broken toward the earliest time.
        let ct = extract_characteristic_time(&times, &[5.0, 1.0, 1.0, 2.0], Extremum::Min);
        assert_eq!(ct.index, Some(1));
        let ct = extract_characteristic_time(&times, &[5.0, 9.0, 9.0, 2.0], Extremum::Max);
        assert_eq!(ct.index, Some(1));
        // Flat series: indeterminate.
        let ct = extract_characteristic_time(&times, &[2.0; 4], Extremum::Min);
        assert!(ct.indeterminate);
        assert_eq!(ct.time, None);
    }

    #[test]
    fn dense_grid_spec_defaults_apply() {
        let dense: DenseGridSpec = serde_json::from_str("{}").unwrap();
        assert_eq!(dense.grid.t_min, 0.1);
        assert_eq!(dense.grid.t_max, 1000.0);
        assert_eq!(dense.grid.n_points, 200);
        assert_eq!(dense.grid.spacing, GridSpacing::Log);
        assert_eq!(dense.n_realizations, 2000);
    }

    #[test]
    fn report_json_round_trips_with_sorted_keys() {
        let mut cfg = tiny_config();
        cfg.sff_ensemble_size = 4;
        let report = run_experiment(&cfg).unwrap();
        let json = report.to_json_string().unwrap();
        let back = ExperimentReport::from_json_str(&json).unwrap();
        assert_eq!(report, back);
        // Top-level keys appear in sorted order.
        let top: Vec<&str> = json
            .lines()
            .filter(|l| l.starts_with("  \""))
            .map(|l| l.trim())
            .collect();
        let keys: Vec<String> = top
            .iter()
            .filter_map(|l| l.split('"').nth(1).map(str::to_string))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn probe_series_csv_shape() {
        let cfg = tiny_config();
        let report = run_experiment(&cfg).unwrap();
        let text = report.regimes[0].series["entropy"].to_csv_string().unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("time,mean,stderr,n_realizations,probe_name")
        );
        let row = lines.next().unwrap();
        assert!(row.ends_with(",entropy"), "{row}");
        assert_eq!(text.lines().count(), 1 + cfg.times.len());
    }

    #[test]
    fn sweep_summarizes_each_mode_count() {
        let mut cfg = tiny_config();
        cfg.sff_ensemble_size = 6;
        let sweep = scaling_sweep(&cfg, &[4, 5]).unwrap();
        assert_eq!(sweep.reports.len(), 2);
        assert_eq!(sweep.summary.len(), 2);
        assert_eq!(sweep.summary[0].modes, 4);
        assert_eq!(sweep.summary[0].d_configs, 6);
        assert_eq!(sweep.summary[1].modes, 5);
        assert_eq!(sweep.summary[1].d_configs, 10);
        for row in &sweep.summary {
            assert!(row.gap >= 0.0);
            assert!(row.max_entropy > 0.0);
        }
        // Input occupies modes 1 and 2, correlator output modes 0 and 3:
        // both fit in 4 modes but photons do not fit in 1 mode.
        assert!(scaling_sweep(&cfg, &[1]).is_err());
        assert!(scaling_sweep(&cfg, &[]).is_err());

        let mut buf = Vec::new();
        write_sweep_summary(&sweep.summary, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "modes,d_configs,max_entropy,haar_entropy,gap,sff_min,entropy_max,pt_dist_min,pr_max"
        ));
        assert_eq!(text.lines().count(), 3);
    }
}
