//! Python bindings: code parameters, the two-iteration model, the Monte Carlo
//! simulator, the syndrome-weight law and single-shot decoding.

use ldpc_dfr as dfr;
use dfr::code::{self, ErrorVector, ParityCheckMatrix};
use dfr::decoder::{decode, DecodeOptions, ThresholdSchedule};
use dfr::iter2::{two_iteration_dfr, Averaging, Bound as TailBound, DfrOptions, DfrReport};
use dfr::mc::{run_experiment, ExperimentPlan, PlanPoint};
use dfr::syndrome::ChainContext;
use dfr::{Error, Real};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rug::Float;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// `(n, k, r, v, w)` of a regular or quasi-cyclic ensemble.
#[pyclass(name = "CodeParams", frozen, skip_from_py_object)]
struct PyCodeParams(code::CodeParams);

#[pymethods]
impl PyCodeParams {
    /// Regular ensemble with `r` checks; `v·n` must equal `w·r`.
    #[staticmethod]
    fn regular(n: usize, r: usize, v: usize, w: usize) -> PyResult<Self> {
        code::CodeParams::regular(n, r, v, w).map(Self).map_err(py_err)
    }

    /// Quasi-cyclic ensemble of `n0` circulant blocks of size `p`.
    #[staticmethod]
    fn qc(n0: usize, p: usize, v: usize) -> PyResult<Self> {
        code::CodeParams::qc(n0, p, v).map(Self).map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }
    #[getter]
    fn k(&self) -> usize {
        self.0.k
    }
    #[getter]
    fn r(&self) -> usize {
        self.0.r
    }
    #[getter]
    fn v(&self) -> usize {
        self.0.v
    }
    #[getter]
    fn w(&self) -> usize {
        self.0.w
    }

    fn majority_threshold(&self) -> u32 {
        self.0.majority_threshold()
    }

    fn __repr__(&self) -> String {
        format!("CodeParams({})", self.0)
    }
}

/// Explicit sparse parity-check matrix.
#[pyclass(name = "ParityCheckMatrix", frozen)]
struct PyMatrix(ParityCheckMatrix);

#[pymethods]
impl PyMatrix {
    /// Draws a matrix from the ensemble of `params`.
    #[staticmethod]
    #[pyo3(signature = (params, seed=1))]
    fn generate(params: &PyCodeParams, seed: u64) -> PyResult<Self> {
        let h = match params.0.qc {
            Some(_) => code::generate_qc_pcm(&params.0, seed),
            None => code::generate_regular_pcm(&params.0, seed),
        };
        h.map(Self).map_err(py_err)
    }

    /// Column indices of each row.
    fn rows(&self) -> Vec<Vec<u32>> {
        self.0.row_supports().to_vec()
    }

    /// Syndrome bits of the error with the given support.
    fn syndrome(&self, support: Vec<u32>) -> PyResult<Vec<u8>> {
        let e = ErrorVector::new(self.0.params.n, support).map_err(py_err)?;
        Ok(code::syndrome(&self.0, &e).map_err(py_err)?.bits().to_vec())
    }

    /// Decodes the syndrome of `support` with one threshold per iteration.
    ///
    /// Returns a dict with `ok`, `estimate` (support of ē), `residual_weight`
    /// and the per-iteration `syndrome_weights` and `discrepancies`.
    fn decode<'py>(&self, py: Python<'py>, support: Vec<u32>, thresholds: Vec<u32>) -> PyResult<Bound<'py, PyDict>> {
        let e = ErrorVector::new(self.0.params.n, support).map_err(py_err)?;
        let s = code::syndrome(&self.0, &e).map_err(py_err)?;
        let iters = thresholds.len();
        let sched = ThresholdSchedule::new(self.0.params.v, thresholds).map_err(py_err)?;
        let tr = decode(&self.0, &s, &sched, iters, Some(&e), DecodeOptions::default()).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("ok", tr.ok)?;
        d.set_item("estimate", tr.estimate.support().to_vec())?;
        d.set_item("residual_weight", tr.final_syndrome.weight())?;
        d.set_item("syndrome_weights", tr.iterations.iter().map(|r| r.syndrome_weight).collect::<Vec<_>>())?;
        d.set_item("discrepancies", tr.iterations.iter().map(|r| r.discrepancies.unwrap_or(0)).collect::<Vec<_>>())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("ParityCheckMatrix({})", self.0.params)
    }
}

/// Law of the syndrome weight for a uniformly random weight-`t` error, as
/// `(lo, probs)` with `probs[i] = Pr(W = lo + i)`.
#[pyfunction]
#[pyo3(signature = (params, t, extended=false))]
fn syndrome_weight_pmf(py: Python<'_>, params: &PyCodeParams, t: usize, extended: bool) -> PyResult<(i64, Vec<f64>)> {
    let p = params.0;
    py.detach(|| {
        let pmf = if extended {
            ChainContext::<Float>::new(p, t)?.syndrome_weight_distribution().to_f64()
        } else {
            ChainContext::<f64>::new(p, t)?.syndrome_weight_distribution()
        };
        Ok((pmf.lo(), pmf.into_probs()))
    })
    .map_err(py_err)
}

fn report_dict<'py, R: Real>(py: Python<'py>, r: &DfrReport<R>) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("dfr", r.dfr.to_f64())?;
    d.set_item("log2_dfr", r.log2_dfr())?;
    d.set_item("dfr1", r.dfr1.to_f64())?;
    d.set_item("th1", r.th1)?;
    d.set_item("th2", r.th2)?;
    d.set_item("mode", r.options.label())?;
    Ok(d)
}

/// Two-iteration model DFR. Thresholds default to the majority threshold.
///
/// `averaging` is `"averaged"` or `"per-y"`; `bound` is `"exact"` or
/// `"expectation"`; `cutoff=None` evaluates every grid pair.
#[pyfunction]
#[pyo3(signature = (params, t, th1=None, th2=None, averaging="averaged", bound="exact", cutoff=Some(1e-16), extended=false))]
#[allow(clippy::too_many_arguments)]
fn model_dfr<'py>(
    py: Python<'py>,
    params: &PyCodeParams,
    t: usize,
    th1: Option<u32>,
    th2: Option<u32>,
    averaging: &str,
    bound: &str,
    cutoff: Option<f64>,
    extended: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let p = params.0;
    let maj = p.majority_threshold();
    let (th1, th2) = (th1.unwrap_or(maj), th2.unwrap_or(maj));
    let averaging = match averaging {
        "averaged" => Averaging::Averaged,
        "per-y" => Averaging::PerWeight,
        other => return Err(PyValueError::new_err(format!("unknown averaging `{other}`"))),
    };
    let bound = match bound {
        "exact" => TailBound::Exact,
        "expectation" => TailBound::Expectation,
        other => return Err(PyValueError::new_err(format!("unknown bound `{other}`"))),
    };
    let opts = DfrOptions { averaging, bound, cutoff, ..DfrOptions::default() };
    if extended {
        let r = py.detach(|| two_iteration_dfr::<Float>(&p, t, th1, th2, &opts)).map_err(py_err)?;
        report_dict(py, &r)
    } else {
        let r = py.detach(|| two_iteration_dfr::<f64>(&p, t, th1, th2, &opts)).map_err(py_err)?;
        report_dict(py, &r)
    }
}

/// Monte Carlo DFR of the bit-flipping decoder with a fresh matrix and error
/// per trial. Stops after `trials` trials or `failures` failures.
#[pyfunction]
#[pyo3(signature = (params, t, th1=None, th2=None, trials=10_000, failures=None, seed=1, iterations=2))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    params: &PyCodeParams,
    t: usize,
    th1: Option<u32>,
    th2: Option<u32>,
    trials: u64,
    failures: Option<u64>,
    seed: u64,
    iterations: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let p = params.0;
    let maj = p.majority_threshold();
    let point = PlanPoint { params: p, t, th1: th1.unwrap_or(maj), th2: th2.unwrap_or(maj) };
    let mut plan = ExperimentPlan::new(vec![point], trials, failures.unwrap_or(trials), seed);
    plan.iterations = iterations;
    let report = py.detach(|| run_experiment(&plan)).map_err(py_err)?;
    let r = &report.points[0];
    let d = PyDict::new(py);
    d.set_item("trials", r.trials)?;
    d.set_item("failures", r.failures)?;
    d.set_item("dfr", r.dfr)?;
    d.set_item("ci", r.ci)?;
    Ok(d)
}

#[pymodule(name = "ldpc_dfr")]
fn ldpc_dfr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCodeParams>()?;
    m.add_class::<PyMatrix>()?;
    m.add_function(wrap_pyfunction!(syndrome_weight_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(model_dfr, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
