//! Python bindings: model construction, Born-rule probabilities,
//! envelopment, discrimination, and trial running.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use qmwb::discrimination::helstrom_binary;
use qmwb::engine::{self, RandomCommandPolicy, Schedule};
use qmwb::envelopment::{self, EnvelopmentMap, ExtraPovmPolicy};
use qmwb::model::{Command, QmModel};
use qmwb::protocols::{self, AttackSpec, BasisPolicy, ProtocolSpec};

fn to_py_err(err: ::qmwb::error::QmwbError) -> PyError {
    PyValueError::new_err(err.to_string())
}

type PyError = PyErr;

fn parse_attack(attack: &str, fraction: f64, r: f64) -> PyResult<AttackSpec> {
    match attack {
        "none" => Ok(AttackSpec::None),
        "intercept" => Ok(AttackSpec::InterceptResend {
            fraction,
            basis_policy: BasisPolicy::UniformRandom,
        }),
        "leakage" => Ok(AttackSpec::LeakageReadout { r }),
        other => Err(PyValueError::new_err(format!("unknown attack `{other}`"))),
    }
}

/// A command-indexed quantum model.
#[pyclass(name = "QmModel", from_py_object)]
#[derive(Clone)]
struct PyQmModel {
    inner: QmModel,
}

#[pymethods]
impl PyQmModel {
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn alice_commands(&self) -> Vec<String> {
        self.inner.commands().alice().to_vec()
    }

    #[getter]
    fn bob_commands(&self) -> Vec<String> {
        self.inner.commands().bob().to_vec()
    }

    #[getter]
    fn eve_commands(&self) -> Vec<String> {
        self.inner.commands().eve().to_vec()
    }

    #[getter]
    fn eve_private(&self) -> Vec<String> {
        self.inner.eve_private().iter().cloned().collect()
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    fn is_valid(&self) -> bool {
        self.inner.validate().is_valid()
    }

    /// Violations as (location, description, deviation) triples.
    fn validate(&self) -> Vec<(String, String, f64)> {
        self.inner
            .validate()
            .violations
            .into_iter()
            .map(|v| (v.location, v.description, v.deviation))
            .collect()
    }

    fn born_probability(&self, command: (String, String, String), outcome: &str) -> PyResult<f64> {
        let cmd = Command::new(command.0, command.1, command.2);
        self.inner.born_probability(&cmd, outcome).map_err(to_py_err)
    }

    /// {(alice, bob, eve): {outcome: probability}}
    fn probability_table(
        &self,
    ) -> PyResult<BTreeMap<(String, String, String), BTreeMap<String, f64>>> {
        let table = self.inner.probability_table().map_err(to_py_err)?;
        Ok(table
            .into_iter()
            .map(|(c, row)| {
                (
                    (c.alice, c.bob, c.eve),
                    row.into_iter().collect::<BTreeMap<_, _>>(),
                )
            })
            .collect())
    }

    /// (labels, matrix of |<state_i|state_j>|)
    fn overlap_matrix(&self) -> (Vec<String>, Vec<Vec<f64>>) {
        self.inner.overlap_matrix()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<PyQmModel> {
        Ok(PyQmModel {
            inner: QmModel::from_text(text).map_err(to_py_err)?,
        })
    }
}

/// A probability-preserving map between two models' (command, outcome) pairs.
#[pyclass(name = "EnvelopmentMap", from_py_object)]
#[derive(Clone)]
struct PyEnvelopmentMap {
    inner: EnvelopmentMap,
}

#[pymethods]
impl PyEnvelopmentMap {
    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<PyEnvelopmentMap> {
        Ok(PyEnvelopmentMap {
            inner: EnvelopmentMap::from_text(text).map_err(to_py_err)?,
        })
    }
}

/// A recorded run of trials.
#[pyclass(name = "RunLog", from_py_object)]
#[derive(Clone)]
struct PyRunLog {
    inner: engine::RunLog,
}

#[pymethods]
impl PyRunLog {
    #[getter]
    fn model_id(&self) -> String {
        self.inner.model_id.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }

    /// Records as (index, (alice, bob, eve), outcome) triples.
    fn records(&self) -> Vec<(u64, (String, String, String), String)> {
        self.inner
            .records
            .iter()
            .map(|r| {
                (
                    r.index,
                    (
                        r.command.alice.clone(),
                        r.command.bob.clone(),
                        r.command.eve.clone(),
                    ),
                    r.outcome.clone(),
                )
            })
            .collect()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }
}

#[pyfunction]
#[pyo3(signature = (attack="none", fraction=1.0, r=0.0))]
fn bb84_model(attack: &str, fraction: f64, r: f64) -> PyResult<PyQmModel> {
    let spec = parse_attack(attack, fraction, r)?;
    Ok(PyQmModel {
        inner: protocols::bb84_model(&spec).map_err(to_py_err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (theta, attack="none", fraction=1.0, r=0.0))]
fn b92_model(theta: f64, attack: &str, fraction: f64, r: f64) -> PyResult<PyQmModel> {
    let spec = parse_attack(attack, fraction, r)?;
    Ok(PyQmModel {
        inner: protocols::b92_model(theta, &spec).map_err(to_py_err)?,
    })
}

/// Leakage envelopment: returns (enveloping model, map).
#[pyfunction]
fn envelop_with_leakage(model: &PyQmModel, r: f64) -> PyResult<(PyQmModel, PyEnvelopmentMap)> {
    let (beta, f) = envelopment::envelop_with_leakage(&model.inner, r, ExtraPovmPolicy::Helstrom)
        .map_err(to_py_err)?;
    Ok((PyQmModel { inner: beta }, PyEnvelopmentMap { inner: f }))
}

/// (holds, max_deviation)
#[pyfunction]
#[pyo3(signature = (alpha, beta, map, tol=1e-10))]
fn check_envelopment(
    alpha: &PyQmModel,
    beta: &PyQmModel,
    map: &PyEnvelopmentMap,
    tol: f64,
) -> PyResult<(bool, f64)> {
    let check = envelopment::check_envelopment(&alpha.inner, &beta.inner, &map.inner, tol)
        .map_err(to_py_err)?;
    Ok((check.holds, check.max_deviation))
}

/// Pairwise-overlap-r unit vectors as nested [re, im] lists.
#[pyfunction]
fn build_leakage_vectors(n: usize, r: f64) -> PyResult<Vec<Vec<(f64, f64)>>> {
    let vs = envelopment::build_leakage_vectors(n, r).map_err(to_py_err)?;
    Ok(vs
        .into_iter()
        .map(|v| v.iter().map(|z| (z.re, z.im)).collect())
        .collect())
}

/// Optimal binary error for two of a model's states under the given priors.
#[pyfunction]
#[pyo3(signature = (model, a0, a1, p0=0.5, p1=0.5))]
fn helstrom_error(model: &PyQmModel, a0: &str, a1: &str, p0: f64, p1: f64) -> PyResult<f64> {
    let v0 = model.inner.state(a0).map_err(to_py_err)?;
    let v1 = model.inner.state(a1).map_err(to_py_err)?;
    Ok(helstrom_binary(v0, v1, p0, p1)
        .map_err(to_py_err)?
        .error_probability)
}

/// Run trials with per-component uniform random scheduling.
#[pyfunction]
fn run_trials(model: &PyQmModel, n: u64, seed: u64) -> PyResult<PyRunLog> {
    let policy = RandomCommandPolicy::protocol_uniform(&model.inner).map_err(to_py_err)?;
    let log = engine::run_trials(&model.inner, Schedule::Policy(Box::new(policy)), n, seed)
        .map_err(to_py_err)?;
    Ok(PyRunLog { inner: log })
}

/// Analytic sifted error rate of a protocol model under an attack.
#[pyfunction]
#[pyo3(signature = (model, protocol, attack="none", fraction=1.0, r=0.0, theta=std::f64::consts::PI / 8.0))]
fn exact_qber(
    model: &PyQmModel,
    protocol: &str,
    attack: &str,
    fraction: f64,
    r: f64,
    theta: f64,
) -> PyResult<f64> {
    let proto = match protocol {
        "bb84" => ProtocolSpec::Bb84,
        "b92" => ProtocolSpec::B92 { theta },
        other => return Err(PyValueError::new_err(format!("unknown protocol `{other}`"))),
    };
    let spec = parse_attack(attack, fraction, r)?;
    protocols::exact_qber(&model.inner, &proto, &spec).map_err(to_py_err)
}

/// Sift a log and estimate the error rate: (qber, n_compared, halfwidth).
#[pyfunction]
#[pyo3(signature = (log, protocol, sample_fraction=1.0, theta=std::f64::consts::PI / 8.0))]
fn sift_and_estimate_qber(
    log: &PyRunLog,
    protocol: &str,
    sample_fraction: f64,
    theta: f64,
) -> PyResult<(f64, u64, f64)> {
    let proto = match protocol {
        "bb84" => ProtocolSpec::Bb84,
        "b92" => ProtocolSpec::B92 { theta },
        other => return Err(PyValueError::new_err(format!("unknown protocol `{other}`"))),
    };
    let est = protocols::sift_and_estimate_qber(&log.inner, &proto, sample_fraction)
        .map_err(to_py_err)?;
    Ok((est.qber, est.n_compared, est.confidence_halfwidth))
}

/// Per-command total-variation fit: (max_tv, n_min, model_id_mismatch).
#[pyfunction]
fn fit_model(model: &PyQmModel, log: &PyRunLog) -> PyResult<(f64, u64, bool)> {
    let report = engine::fit_model(&model.inner, &log.inner).map_err(to_py_err)?;
    Ok((report.max_tv, report.n_min, report.model_id_mismatch))
}

#[pymodule(name = "qmwb")]
fn qmwb_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyQmModel>()?;
    m.add_class::<PyEnvelopmentMap>()?;
    m.add_class::<PyRunLog>()?;
    m.add_function(wrap_pyfunction!(bb84_model, m)?)?;
    m.add_function(wrap_pyfunction!(b92_model, m)?)?;
    m.add_function(wrap_pyfunction!(envelop_with_leakage, m)?)?;
    m.add_function(wrap_pyfunction!(check_envelopment, m)?)?;
    m.add_function(wrap_pyfunction!(build_leakage_vectors, m)?)?;
    m.add_function(wrap_pyfunction!(helstrom_error, m)?)?;
    m.add_function(wrap_pyfunction!(run_trials, m)?)?;
    m.add_function(wrap_pyfunction!(exact_qber, m)?)?;
    m.add_function(wrap_pyfunction!(sift_and_estimate_qber, m)?)?;
    m.add_function(wrap_pyfunction!(fit_model, m)?)?;
    Ok(())
}
