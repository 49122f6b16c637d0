//! Python bindings: `import pyqcbm`.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use qcbm::ansatz::{InterRegister, TopologyKind};
use qcbm::distributions::{self, TargetSpec};
use qcbm::gradients::FD_STEP;
use qcbm::trainer::{AdamConfig, InitKind, TrainConfig};
use qcbm::{Entangler, GradientMethod, LossKind, QcbmError};

fn err(e: QcbmError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_loss(name: &str) -> PyResult<LossKind> {
    match name.to_ascii_lowercase().as_str() {
        "kl" => Ok(LossKind::Kl),
        "l2" => Ok(LossKind::L2),
        _ => Err(PyValueError::new_err(format!("unknown loss `{name}` (kl or l2)"))),
    }
}

fn parse_entangler(name: &str) -> PyResult<Entangler> {
    match name.to_ascii_uppercase().as_str() {
        "RZZ" => Ok(Entangler::Rzz),
        "CX" => Ok(Entangler::Cx),
        _ => Err(PyValueError::new_err(format!("unknown entangler `{name}` (RZZ or CX)"))),
    }
}

#[pyclass(name = "Topology", module = "pyqcbm", frozen)]
pub struct PyTopology {
    inner: qcbm::Topology,
}

fn topology(kind: TopologyKind) -> PyResult<PyTopology> {
    Ok(PyTopology {
        inner: qcbm::Topology::new(kind).map_err(err)?,
    })
}

#[pymethods]
impl PyTopology {
    #[staticmethod]
    fn line(n: usize) -> PyResult<Self> {
        topology(TopologyKind::Line { n })
    }

    #[staticmethod]
    fn ring(n: usize) -> PyResult<Self> {
        topology(TopologyKind::Ring { n })
    }

    #[staticmethod]
    fn grid2d(rows: usize, cols: usize) -> PyResult<Self> {
        topology(TopologyKind::Grid2D { rows, cols })
    }

    #[staticmethod]
    fn all_to_all(n: usize) -> PyResult<Self> {
        topology(TopologyKind::AllToAll { n })
    }

    #[staticmethod]
    #[pyo3(signature = (registers, rows, cols, inter = "chain"))]
    fn multi_register(registers: usize, rows: usize, cols: usize, inter: &str) -> PyResult<Self> {
        let inter = match inter {
            "chain" => InterRegister::Chain,
            "full_triangle" => InterRegister::FullTriangle,
            _ => return Err(PyValueError::new_err("inter must be `chain` or `full_triangle`")),
        };
        topology(TopologyKind::MultiRegister {
            registers,
            rows,
            cols,
            inter,
        })
    }

    /// Same graph split into `registers` equal blocks.
    fn with_registers(&self, registers: usize) -> PyResult<Self> {
        Ok(PyTopology {
            inner: self.inner.clone().with_registers(registers).map_err(err)?,
        })
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits()
    }

    #[getter]
    fn registers(&self) -> usize {
        self.inner.registers()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Topology({}, registers={})", self.inner.kind().label(), self.inner.registers())
    }
}

#[pyclass(name = "Circuit", module = "pyqcbm", frozen)]
pub struct PyCircuit {
    inner: qcbm::Circuit,
}

#[pymethods]
impl PyCircuit {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text)
            .map(|inner| PyCircuit { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("circuit serializes")
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    #[getter]
    fn n_gates(&self) -> usize {
        self.inner.gates().len()
    }

    #[getter]
    fn register_shape(&self) -> Vec<usize> {
        self.inner.register_shape()
    }

    /// Gate applications for one gradient with `method` (`adjoint` or
    /// `finite_diff`).
    fn gate_applications(&self, method: &str) -> PyResult<u64> {
        let m = match method {
            "adjoint" => GradientMethod::Adjoint,
            "finite_diff" => GradientMethod::FiniteDiff,
            _ => return Err(PyValueError::new_err("method must be `adjoint` or `finite_diff`")),
        };
        Ok(qcbm::count_gate_applications(&self.inner, m))
    }

    fn __repr__(&self) -> String {
        format!(
            "Circuit(n_qubits={}, gates={}, n_params={})",
            self.inner.n_qubits(),
            self.inner.gates().len(),
            self.inner.n_params()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (topology, layers, entangler = "RZZ", active = None))]
fn build_circuit(
    topology: &PyTopology,
    layers: usize,
    entangler: &str,
    active: Option<Vec<usize>>,
) -> PyResult<PyCircuit> {
    let active = active.unwrap_or_else(|| (0..topology.inner.n_qubits()).collect());
    let inner = qcbm::build_circuit(&topology.inner, layers, parse_entangler(entangler)?, &active).map_err(err)?;
    Ok(PyCircuit { inner })
}

#[pyclass(name = "Distribution", module = "pyqcbm", frozen)]
pub struct PyDistribution {
    inner: qcbm::ProbabilityVector,
}

#[pymethods]
impl PyDistribution {
    #[new]
    #[pyo3(signature = (values, register_shape = None))]
    fn new(values: Vec<f64>, register_shape: Option<Vec<usize>>) -> PyResult<Self> {
        let inner = match register_shape {
            Some(shape) => qcbm::ProbabilityVector::new(values, shape),
            None => qcbm::ProbabilityVector::univariate(values),
        }
        .map_err(err)?;
        Ok(PyDistribution { inner })
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    #[getter]
    fn register_shape(&self) -> Vec<usize> {
        self.inner.register_shape().to_vec()
    }

    fn marginal(&self, register: usize) -> PyResult<Vec<f64>> {
        self.inner.marginal(register).map_err(err)
    }

    fn coarse_grain(&self, drop_bits: Vec<usize>) -> PyResult<Self> {
        Ok(PyDistribution {
            inner: distributions::coarse_grain(&self.inner, &drop_bits).map_err(err)?,
        })
    }

    fn expand_uniform(&self, add_bits: Vec<usize>) -> PyResult<Self> {
        Ok(PyDistribution {
            inner: distributions::expand_uniform(&self.inner, &add_bits).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Distribution(register_shape={:?})", self.inner.register_shape())
    }
}

fn target(spec: TargetSpec, bits: &[usize]) -> PyResult<PyDistribution> {
    Ok(PyDistribution {
        inner: qcbm::sample_target(&spec, bits).map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (mean, variance, bits, domain = (0.0, 1.0)))]
fn univariate_gaussian(mean: f64, variance: f64, bits: usize, domain: (f64, f64)) -> PyResult<PyDistribution> {
    target(
        TargetSpec::UnivariateGaussian {
            mean,
            variance,
            domain: [domain.0, domain.1],
        },
        &[bits],
    )
}

/// Restricted to the unit cube, `bits` per variable.
#[pyfunction]
fn multivariate_gaussian(mean: Vec<f64>, covariance: Vec<Vec<f64>>, bits: usize) -> PyResult<PyDistribution> {
    let k = mean.len();
    target(TargetSpec::MultivariateGaussian { mean, covariance }, &vec![bits; k])
}

/// Any target spec given as JSON, e.g. `{"kind": "gaussian_mixture", ...}`.
#[pyfunction]
fn sample_target(spec_json: &str, register_bits: Vec<usize>) -> PyResult<PyDistribution> {
    let spec: TargetSpec = serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    target(spec, &register_bits)
}

#[pyfunction]
fn kl_divergence(p: &PyDistribution, q: &PyDistribution) -> PyResult<f64> {
    qcbm::kl_divergence(&p.inner, &q.inner).map_err(err)
}

#[pyfunction]
fn tv_distance(p: &PyDistribution, q: &PyDistribution) -> PyResult<f64> {
    qcbm::tv_distance(&p.inner, &q.inner).map_err(err)
}

/// TV after bringing both distributions to `bits` per register.
#[pyfunction]
fn tv_at_resolution(p: &PyDistribution, q: &PyDistribution, bits: usize) -> PyResult<f64> {
    qcbm::tv_at_resolution(&p.inner, &q.inner, bits).map_err(err)
}

#[pyclass(name = "Simulator", module = "pyqcbm", frozen)]
pub struct PySimulator {
    inner: qcbm::Simulator,
}

#[pymethods]
impl PySimulator {
    #[new]
    #[pyo3(signature = (qubit_cap = qcbm::statevec::DEFAULT_QUBIT_CAP))]
    fn new(qubit_cap: usize) -> Self {
        PySimulator {
            inner: qcbm::Simulator::new(qubit_cap),
        }
    }

    fn amplitudes(&self, circuit: &PyCircuit, params: Vec<f64>) -> PyResult<Vec<Complex64>> {
        Ok(self.inner.forward(&circuit.inner, &params).map_err(err)?.amplitudes().to_vec())
    }

    fn distribution(&self, circuit: &PyCircuit, params: Vec<f64>) -> PyResult<PyDistribution> {
        Ok(PyDistribution {
            inner: self.inner.distribution(&circuit.inner, &params).map_err(err)?,
        })
    }

    /// `(loss, gradient, gate_applications)` by the adjoint method.
    #[pyo3(signature = (circuit, params, target, loss = "kl"))]
    fn adjoint(
        &self,
        circuit: &PyCircuit,
        params: Vec<f64>,
        target: &PyDistribution,
        loss: &str,
    ) -> PyResult<(f64, Vec<f64>, u64)> {
        let e = self
            .inner
            .adjoint(&circuit.inner, &params, &target.inner, parse_loss(loss)?)
            .map_err(err)?;
        Ok((e.loss, e.gradient, e.gate_applications))
    }

    /// `(gradient, gate_applications)` by central differences.
    #[pyo3(signature = (circuit, params, target, loss = "kl", h = FD_STEP))]
    fn finite_difference(
        &self,
        circuit: &PyCircuit,
        params: Vec<f64>,
        target: &PyDistribution,
        loss: &str,
        h: f64,
    ) -> PyResult<(Vec<f64>, u64)> {
        self.inner
            .finite_difference(&circuit.inner, &params, &target.inner, parse_loss(loss)?, h)
            .map_err(err)
    }
}

/// Full-batch Adam. Returns `(final_params, history)` where history holds
/// one `(epoch, loss, tv)` tuple per recorded epoch.
#[pyfunction]
#[pyo3(signature = (circuit, params, target, epochs = 1000, lr = 0.01, loss = "kl", record_every = 10))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    circuit: &PyCircuit,
    params: Vec<f64>,
    target: &PyDistribution,
    epochs: usize,
    lr: f64,
    loss: &str,
    record_every: usize,
) -> PyResult<(Vec<f64>, Vec<(usize, f64, f64)>)> {
    let config = TrainConfig {
        epochs,
        loss: parse_loss(loss)?,
        record_every,
        init: InitKind::Zeros,
        adam: AdamConfig {
            lr,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    let record = py
        .detach(|| qcbm::train(&circuit.inner, &params, &target.inner, &config))
        .map_err(err)?;
    let history = record.entries.iter().map(|e| (e.epoch, e.loss, e.tv)).collect();
    Ok((record.final_params, history))
}

/// Runs every experiment of a TOML config and returns one summary dict per
/// configuration id.
#[pyfunction]
fn run_config(py: Python<'_>, path: &str) -> PyResult<Vec<std::collections::BTreeMap<String, f64>>> {
    let config = qcbm::ExperimentConfig::load(std::path::Path::new(path)).map_err(err)?;
    let seeds = config.seeds.to_vec();
    let rows = py.detach(|| -> qcbm::Result<Vec<_>> {
        let mut rows = Vec::new();
        for (id, exp) in config.experiments()? {
            rows.push((id.clone(), qcbm::sweep(&exp, &id, &seeds)?.summary));
        }
        Ok(rows)
    });
    Ok(rows
        .map_err(err)?
        .into_iter()
        .map(|(_, s)| {
            [
                ("n_seeds", s.n_seeds as f64),
                ("min", s.min),
                ("p25", s.p25),
                ("median", s.median),
                ("p75", s.p75),
                ("max", s.max),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
        })
        .collect())
}

#[pymodule]
fn pyqcbm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTopology>()?;
    m.add_class::<PyCircuit>()?;
    m.add_class::<PyDistribution>()?;
    m.add_class::<PySimulator>()?;
    m.add_function(wrap_pyfunction!(build_circuit, m)?)?;
    m.add_function(wrap_pyfunction!(univariate_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(multivariate_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(sample_target, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(tv_distance, m)?)?;
    m.add_function(wrap_pyfunction!(tv_at_resolution, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
