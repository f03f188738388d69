//! Python bindings: parameters, caps, classification, the full region
//! analysis, policy advice and simulation.

use infection_caps::classifier::render_report;
use infection_caps::oracle::{compare, grid_membership};
use infection_caps::policy::{simulate as simulate_core, Control, SimOptions};
use infection_caps::scenario::ScenarioFile;
use infection_caps::{self as core, SetKind, State};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: core::Error) -> PyErr {
    match e {
        core::Error::Verification(_) | core::Error::HorizonExceeded { .. } | core::Error::StepSizeUnderflow { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn tag<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

type BarrierRow = (f64, f64, f64, f64, f64, f64);
type SampleRow = (f64, f64, f64, f64);
type Run = (Vec<SampleRow>, Option<(f64, String)>);

fn set_kind(name: &str) -> PyResult<SetKind> {
    match name {
        "admissible" => Ok(SetKind::Admissible),
        "mrpi" => Ok(SetKind::Mrpi),
        _ => Err(PyValueError::new_err(format!(
            "set must be 'admissible' or 'mrpi', got {name:?}"
        ))),
    }
}

#[pyclass(name = "ModelParams", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyModelParams(core::ModelParams);

#[pymethods]
impl PyModelParams {
    #[new]
    fn new(a_m: f64, a_h: f64, gamma: f64, u_min: f64, u_max: f64) -> PyResult<Self> {
        core::ModelParams::new(a_m, a_h, gamma, u_min, u_max)
            .map(Self)
            .map_err(err)
    }

    /// The Cali dengue parameters.
    #[staticmethod]
    fn cali() -> Self {
        Self(core::ModelParams::cali())
    }

    #[getter]
    fn a_m(&self) -> f64 {
        self.0.a_m
    }
    #[getter]
    fn a_h(&self) -> f64 {
        self.0.a_h
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma
    }
    #[getter]
    fn u_min(&self) -> f64 {
        self.0.u_min
    }
    #[getter]
    fn u_max(&self) -> f64 {
        self.0.u_max
    }

    fn rhs(&self, x1: f64, x2: f64, u: f64) -> (f64, f64) {
        let [a, b] = self.0.rhs([x1, x2], u);
        (a, b)
    }

    fn endemic_equilibrium(&self, u: f64) -> PyResult<Option<(f64, f64)>> {
        let eq = core::model::endemic_equilibrium(u, &self.0).map_err(err)?;
        Ok(eq.map(|s| (s.x1, s.x2)))
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!(
            "ModelParams(a_m={}, a_h={}, gamma={}, u_min={}, u_max={})",
            p.a_m, p.a_h, p.gamma, p.u_min, p.u_max
        )
    }
}

#[pyclass(name = "ConstraintCaps", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyCaps(core::ConstraintCaps);

#[pymethods]
impl PyCaps {
    #[new]
    fn new(xbar1: f64, xbar2: f64) -> PyResult<Self> {
        core::ConstraintCaps::new(xbar1, xbar2).map(Self).map_err(err)
    }

    #[getter]
    fn xbar1(&self) -> f64 {
        self.0.xbar1
    }
    #[getter]
    fn xbar2(&self) -> f64 {
        self.0.xbar2
    }

    fn __repr__(&self) -> String {
        format!("ConstraintCaps(xbar1={}, xbar2={})", self.0.xbar1, self.0.xbar2)
    }
}

#[pyclass(name = "Classification", frozen)]
struct PyClassification {
    inner: core::Classification,
    report: String,
}

#[pymethods]
impl PyClassification {
    #[getter]
    fn case(&self) -> String {
        self.inner.case.to_string()
    }
    #[getter]
    fn active_face(&self) -> Option<String> {
        self.inner.active_face.map(|f| f.to_string())
    }
    #[getter]
    fn boundary(&self) -> bool {
        self.inner.boundary
    }
    fn path(&self) -> Vec<String> {
        self.inner.path()
    }
    fn report(&self) -> String {
        self.report.clone()
    }
    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("serializable")
    }
    fn __repr__(&self) -> String {
        format!("Classification(case={:?})", self.inner.case.as_str())
    }
}

#[pyfunction]
fn classify(params: &PyModelParams, caps: &PyCaps) -> PyClassification {
    let inner = core::classify(&params.0, &caps.0);
    let report = render_report(&params.0, &caps.0, &inner);
    PyClassification { inner, report }
}

#[pyclass(name = "Analysis", frozen)]
struct PyAnalysis {
    inner: core::Analysis,
    settings: infection_caps::scenario::RunSettings,
}

impl PyAnalysis {
    fn region(&self, kind: SetKind) -> &core::RegionSet {
        match kind {
            SetKind::Admissible => &self.inner.regions.admissible,
            SetKind::Mrpi => &self.inner.regions.mrpi,
        }
    }
}

#[pymethods]
impl PyAnalysis {
    #[new]
    fn new(py: Python<'_>, params: &PyModelParams, caps: &PyCaps) -> PyResult<Self> {
        let (p, c) = (params.0, caps.0);
        let inner = py.detach(|| core::Analysis::run(&p, &c)).map_err(err)?;
        Ok(Self {
            inner,
            settings: Default::default(),
        })
    }

    /// Loads a scenario file, or a bundled scenario by name.
    #[staticmethod]
    fn from_scenario(py: Python<'_>, path: &str) -> PyResult<Self> {
        let s = ScenarioFile::load(path).map_err(err)?;
        let inner = py.detach(|| core::Analysis::from_scenario(&s)).map_err(err)?;
        Ok(Self {
            inner,
            settings: s.settings,
        })
    }

    #[getter]
    fn params(&self) -> PyModelParams {
        PyModelParams(self.inner.params)
    }
    #[getter]
    fn caps(&self) -> PyCaps {
        PyCaps(self.inner.caps)
    }
    #[getter]
    fn case(&self) -> String {
        self.inner.classification.case.to_string()
    }
    fn classification(&self) -> PyClassification {
        let inner = self.inner.classification.clone();
        let report = render_report(&self.inner.params, &self.inner.caps, &inner);
        PyClassification { inner, report }
    }

    /// `None` in the desperate case.
    #[getter]
    fn efficiency_ratio(&self) -> Option<f64> {
        self.inner.regions.efficiency_ratio.value()
    }

    fn area(&self, set: &str) -> PyResult<f64> {
        Ok(self.region(set_kind(set)?).area)
    }

    /// Counter-clockwise polygon vertices.
    fn polygon(&self, set: &str) -> PyResult<Vec<(f64, f64)>> {
        Ok(self
            .region(set_kind(set)?)
            .polygon
            .iter()
            .map(|v| (v.x1, v.x2))
            .collect())
    }

    /// `(kind, distance)` with kind one of inside, outside, on_barrier,
    /// on_constraint_boundary.
    #[pyo3(signature = (set, x1, x2, eps = 1e-9))]
    fn contains(&self, set: &str, x1: f64, x2: f64, eps: f64) -> PyResult<(String, f64)> {
        let m = self
            .region(set_kind(set)?)
            .contains(State::new(x1, x2), eps)
            .map_err(err)?;
        Ok((tag(&m.kind), m.distance))
    }

    /// Barrier samples as `(s, x1, x2, lambda1, lambda2, u)`, empty when the
    /// set has no barrier.
    fn barrier(&self, set: &str) -> PyResult<Vec<BarrierRow>> {
        let kind = set_kind(set)?;
        let curve = match kind {
            SetKind::Admissible => &self.inner.barriers.admissible,
            SetKind::Mrpi => &self.inner.barriers.mrpi,
        };
        Ok(curve
            .iter()
            .flat_map(|c| &c.samples)
            .map(|s| (s.s, s.state.x1, s.state.x2, s.costate.lambda1, s.costate.lambda2, s.u))
            .collect())
    }

    /// `(action, rationale, input)`.
    #[pyo3(signature = (x1, x2, eps = 1e-9))]
    fn recommend(&self, x1: f64, x2: f64, eps: f64) -> PyResult<(String, String, f64)> {
        let a = self.inner.recommend(State::new(x1, x2), eps).map_err(err)?;
        Ok((a.action.to_string(), tag(&a.rationale), a.input(&self.inner.params)))
    }

    /// Simulates from `(x1, x2)` under a constant input, or the closed-loop
    /// policy when `u` is None. Returns the samples `(t, x1, x2, u)` and the
    /// first violation as `(t, face)` if any.
    #[pyo3(signature = (x1, x2, horizon, u = None))]
    fn simulate(&self, py: Python<'_>, x1: f64, x2: f64, horizon: f64, u: Option<f64>) -> PyResult<Run> {
        let control = match u {
            Some(v) => Control::Constant(v),
            None => Control::ClosedLoop(self.inner.context()),
        };
        let opts: SimOptions = self.settings.sim_options();
        let an = &self.inner;
        let tr = py
            .detach(|| simulate_core(&an.params, &an.caps, State::new(x1, x2), &control, horizon, &opts))
            .map_err(err)?;
        let samples = tr.samples.iter().map(|s| (s.t, s.x1, s.x2, s.u)).collect();
        Ok((samples, tr.violation.map(|v| (v.t, v.face.to_string()))))
    }

    /// Grid-oracle agreement `(admissible, mrpi)` as off-band fractions.
    #[pyo3(signature = (n = 200, band = 0.01, horizon = 3000.0))]
    fn oracle_agreement(&self, py: Python<'_>, n: usize, band: f64, horizon: f64) -> PyResult<(f64, f64)> {
        let an = &self.inner;
        let cmp = py
            .detach(|| {
                let v = grid_membership(&an.params, &an.caps, n, n, horizon)?;
                compare(&v, &an.regions, band)
            })
            .map_err(err)?;
        Ok((cmp.admissible.off_band_fraction(), cmp.mrpi.off_band_fraction()))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("serializable")
    }

    fn __repr__(&self) -> String {
        format!(
            "Analysis(case={:?}, caps=({}, {}))",
            self.inner.classification.case.as_str(),
            self.inner.caps.xbar1,
            self.inner.caps.xbar2
        )
    }
}

/// Model and caps of a scenario file or bundled scenario.
#[pyfunction]
fn load_scenario(path: &str) -> PyResult<(PyModelParams, PyCaps)> {
    let s = ScenarioFile::load(path).map_err(err)?;
    Ok((PyModelParams(s.model), PyCaps(s.caps)))
}

#[pymodule]
fn infection_caps_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyCaps>()?;
    m.add_class::<PyClassification>()?;
    m.add_class::<PyAnalysis>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(load_scenario, m)?)?;
    Ok(())
}
