//! Python bindings for the chaos-sampler library.
//!
//! The module mirrors the Rust surface at the granularity a notebook
//! wants: matrices cross the boundary as nested lists, distributions and
//! spectra as opaque handles with accessor methods, and whole experiment
//! runs as JSON strings. All library errors surface as `ValueError` with
//! the Rust error message.

use chaos_sampler::experiment::{run_experiment, ExperimentConfig};
use chaos_sampler::interferometry as intf;
use chaos_sampler::probes;
use chaos_sampler::rm_ensembles as rme;
use chaos_sampler::rng::substream;
use chaos_sampler::Error;
use nalgebra::DMatrix;
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_from_rows(rows: Vec<Vec<Complex64>>) -> PyResult<DMatrix<Complex64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("expected a non-empty square matrix"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn rows_from_matrix(m: &DMatrix<Complex64>) -> Vec<Vec<Complex64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Real symmetric mode-coupling Hamiltonian.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Hamiltonian {
    inner: rme::Hamiltonian,
}

#[pymethods]
impl Hamiltonian {
    /// Builds from a nested list of rows; must be square and symmetric.
    #[staticmethod]
    fn from_entries(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("expected a non-empty square matrix"));
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Ok(Self {
            inner: rme::Hamiltonian::from_symmetric(m).map_err(to_py)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn entries(&self) -> Vec<Vec<f64>> {
        let m = self.inner.entries();
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect()
    }

    fn diagonalize(&self) -> PyResult<Spectrum> {
        Ok(Spectrum {
            inner: rme::diagonalize(&self.inner).map_err(to_py)?,
        })
    }
}

/// Eigendecomposition handle; evolves to unitaries and feeds form factors.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Spectrum {
    inner: rme::Spectrum,
}

#[pymethods]
impl Spectrum {
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues().iter().copied().collect()
    }

    fn level_spacings(&self) -> Vec<f64> {
        self.inner.level_spacings()
    }

    fn evolve(&self, t: f64) -> Unitary {
        Unitary {
            inner: rme::evolve(&self.inner, t),
        }
    }

    /// One realization's contribution to the order-`k` form factor.
    fn sff_sample(&self, t: f64, k: u32) -> f64 {
        rme::sff_sample(&self.inner, t, k)
    }
}

/// Interferometer matrix `exp(-i H t)` or a Haar draw.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Unitary {
    inner: rme::UnitaryMatrix,
}

#[pymethods]
impl Unitary {
    /// Wraps a square complex matrix; unitarity is the caller's business
    /// and can be checked with `unitarity_defect`.
    #[staticmethod]
    fn from_entries(rows: Vec<Vec<Complex64>>) -> PyResult<Self> {
        Ok(Self {
            inner: rme::UnitaryMatrix::from_matrix(matrix_from_rows(rows)?).map_err(to_py)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn entries(&self) -> Vec<Vec<Complex64>> {
        rows_from_matrix(self.inner.entries())
    }

    fn unitarity_defect(&self) -> f64 {
        self.inner.unitarity_defect()
    }

    /// Two-photon correlator `|U_ri U_sj + U_si U_rj|^2` for input modes
    /// `(i, j)` and output modes `(r, s)`.
    fn otoc_value(&self, in_pair: (usize, usize), out_pair: (usize, usize)) -> PyResult<f64> {
        probes::otoc_value(&self.inner, in_pair, out_pair).map_err(to_py)
    }
}

/// Conditional collision-free output distribution.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Distribution {
    inner: intf::OutputDistribution,
}

#[pymethods]
impl Distribution {
    fn probs(&self) -> Vec<f64> {
        self.inner.probs().to_vec()
    }

    /// Occupation vectors in the same order as `probs`.
    fn configs(&self) -> Vec<Vec<u32>> {
        self.inner
            .configs()
            .iter()
            .map(|p| p.occupations().to_vec())
            .collect()
    }

    /// Probability of the configuration occupying exactly `modes`.
    fn prob_of(&self, modes: Vec<usize>) -> PyResult<Option<f64>> {
        let m = self.inner.configs().modes();
        let pattern = intf::OccupationPattern::from_modes(m, &modes).map_err(to_py)?;
        Ok(self.inner.prob_of(&pattern))
    }

    fn entropy(&self) -> f64 {
        probes::shannon_entropy(&self.inner)
    }

    fn participation_ratio(&self) -> f64 {
        probes::participation_ratio(&self.inner)
    }
}

/// Permanent of a square complex matrix (Ryser's formula).
#[pyfunction]
fn permanent(rows: Vec<Vec<Complex64>>) -> PyResult<Complex64> {
    intf::permanent(&matrix_from_rows(rows)?).map_err(to_py)
}

/// Expected entropy of Haar-random conditional distributions over
/// `d_configs` outcomes: `-1 + sum_{k=2}^{D} 1/k`.
#[pyfunction]
fn haar_entropy(d_configs: usize) -> f64 {
    probes::haar_entropy(d_configs)
}

/// Approximate density of conditioned Porter-Thomas probabilities.
#[pyfunction]
fn conditional_pt_density(p: f64, n0: u64, d: u64) -> PyResult<f64> {
    probes::conditional_pt_density(p, n0, d).map_err(to_py)
}

/// Number of collision-free configurations `binom(modes, photons)` next
/// to the total `binom(modes + photons - 1, photons)`.
#[pyfunction]
fn config_counts(modes: usize, photons: u32) -> PyResult<(u64, u64)> {
    let configs = intf::enumerate_collision_free(modes, photons).map_err(to_py)?;
    Ok((configs.size() as u64, intf::count_total_configs(modes, photons)))
}

/// Draws the crossover Hamiltonian spectrum for one labeled realization.
/// Streams are addressed exactly like the experiment runner's, so results
/// are reproducible across processes and languages.
#[pyfunction]
fn sample_crossover_spectrum(
    modes: usize,
    lambda_cap: f64,
    master_seed: u64,
    realization: u64,
) -> PyResult<Spectrum> {
    let h0 = rme::sample_poisson_diag(modes, &mut substream(master_seed, "h0", &[realization]))
        .map_err(to_py)?;
    let v = rme::sample_goe(modes, &mut substream(master_seed, "v", &[realization]))
        .map_err(to_py)?;
    let h = rme::build_hamiltonian(&h0, &v, lambda_cap).map_err(to_py)?;
    Ok(Spectrum {
        inner: rme::diagonalize(&h).map_err(to_py)?,
    })
}

/// Haar-random unitary from the addressed substream.
#[pyfunction]
fn sample_haar_unitary(modes: usize, master_seed: u64, index: u64) -> PyResult<Unitary> {
    Ok(Unitary {
        inner: rme::sample_haar_unitary(modes, &mut substream(master_seed, "haar", &[index]))
            .map_err(to_py)?,
    })
}

/// Conditional distribution over collision-free outputs for photons
/// entering at `input_modes`. Raises `ValueError` when the collision-free
/// sector mass degenerates (destructive interference).
#[pyfunction]
fn output_distribution(u: &Unitary, input_modes: Vec<usize>) -> PyResult<Distribution> {
    let m = u.inner.dim();
    let pattern = intf::OccupationPattern::from_modes(m, &input_modes).map_err(to_py)?;
    let configs = intf::enumerate_collision_free(m, pattern.photons()).map_err(to_py)?;
    Ok(Distribution {
        inner: intf::output_distribution(&u.inner, &pattern, &configs).map_err(to_py)?,
    })
}

/// Collision-free probability mass before conditioning.
#[pyfunction]
fn raw_collision_free_mass(u: &Unitary, input_modes: Vec<usize>) -> PyResult<f64> {
    let m = u.inner.dim();
    let pattern = intf::OccupationPattern::from_modes(m, &input_modes).map_err(to_py)?;
    let configs = intf::enumerate_collision_free(m, pattern.photons()).map_err(to_py)?;
    intf::raw_collision_free_mass(&u.inner, &pattern, &configs).map_err(to_py)
}

/// Wasserstein-1 distance of pooled probabilities to the Porter-Thomas
/// reference for `d_configs` outcomes.
#[pyfunction]
fn wasserstein_to_pt(values: Vec<f64>, d_configs: usize, n_realizations: usize) -> PyResult<f64> {
    let pool =
        probes::ProbabilityPool::from_values(values, d_configs, n_realizations).map_err(to_py)?;
    Ok(probes::wasserstein_to_pt(&pool))
}

/// Participation ratio of the normalized power spectrum of a series.
#[pyfunction]
fn fft_participation_ratio(series: Vec<f64>) -> PyResult<f64> {
    probes::fft_participation_ratio(&series).map_err(to_py)
}

/// Runs a full experiment from a config JSON string and returns the
/// report as JSON (sorted keys, round-trip floats).
#[pyfunction]
fn run_experiment_json(config_json: &str) -> PyResult<String> {
    let config: ExperimentConfig = serde_json::from_str(config_json)
        .map_err(|e| PyValueError::new_err(format!("config parse error: {e}")))?;
    config.validate().map_err(to_py)?;
    let report = run_experiment(&config).map_err(to_py)?;
    report.to_json_string().map_err(to_py)
}

/// Runs the internal oracle checks; returns `(name, passed, detail)`
/// triples, optionally restricted to one check.
#[pyfunction]
#[pyo3(signature = (only = None))]
fn validate(only: Option<&str>) -> PyResult<Vec<(String, bool, String)>> {
    let checks = chaos_sampler::validate::run_all(only).map_err(to_py)?;
    Ok(checks
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect())
}

#[pymodule]
fn chaos_sampler_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Hamiltonian>()?;
    m.add_class::<Spectrum>()?;
    m.add_class::<Unitary>()?;
    m.add_class::<Distribution>()?;
    m.add_function(wrap_pyfunction!(permanent, m)?)?;
    m.add_function(wrap_pyfunction!(haar_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_pt_density, m)?)?;
    m.add_function(wrap_pyfunction!(config_counts, m)?)?;
    m.add_function(wrap_pyfunction!(sample_crossover_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(sample_haar_unitary, m)?)?;
    m.add_function(wrap_pyfunction!(output_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(raw_collision_free_mass, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein_to_pt, m)?)?;
    m.add_function(wrap_pyfunction!(fft_participation_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment_json, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
