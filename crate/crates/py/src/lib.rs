//! Python bindings: functionals, conjugates, maximizing measures and the
//! limit diagnostics of `dualrep_core`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dualrep_core::duality::{
    conjugate_value, subgradient, verify_maxrep, AscentConfig, MaxRepOptions,
};
use dualrep_core::functional::{default_epsilon_grid, directional_derivative};
use dualrep_core::limits::{
    capped_profile, mass_escape_diagnostic, reciprocal_profile, tightness_check,
};
use dualrep_core::space::geometric_schedule;
use dualrep_core::{make_truncation_ladder, Error, ExtReal, Func, Measure, Space, SpaceRef};

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py_float(v: ExtReal) -> f64 {
    v.to_f64()
}

#[pyclass(name = "Functional", module = "dualrep", frozen)]
struct PyFunctional {
    inner: dualrep_core::Functional,
}

impl PyFunctional {
    fn func(&self, values: Vec<f64>) -> PyResult<Func> {
        Func::new(self.inner.space(), values).map_err(py_err)
    }

    fn measure(&self, weights: Vec<f64>) -> PyResult<Measure> {
        Measure::new(self.inner.space(), weights).map_err(py_err)
    }
}

type StepParts = (Vec<f64>, Vec<Vec<usize>>, Vec<f64>);

fn space(n: usize) -> PyResult<SpaceRef> {
    Space::new(n).map_err(py_err)
}

#[pymethods]
impl PyFunctional {
    /// `f ↦ max_i f_i` on `n` points.
    #[staticmethod]
    fn sup(n: usize) -> PyResult<Self> {
        Ok(PyFunctional {
            inner: dualrep_core::Functional::sup(&space(n)?),
        })
    }

    /// 0 on `{f ≤ 0}`, `+inf` elsewhere.
    #[staticmethod]
    fn indicator_p(n: usize) -> PyResult<Self> {
        Ok(PyFunctional {
            inner: dualrep_core::Functional::indicator_p(&space(n)?),
        })
    }

    /// `log Σ p_i e^{f_i}` for a strictly positive probability vector `p`.
    #[staticmethod]
    fn entropic(reference: Vec<f64>) -> PyResult<Self> {
        let s = space(reference.len())?;
        let p = Measure::new(&s, reference).map_err(py_err)?;
        Ok(PyFunctional {
            inner: dualrep_core::Functional::entropic(&p).map_err(py_err)?,
        })
    }

    /// `f ↦ Σ ν_i f_i`.
    #[staticmethod]
    fn linear(weights: Vec<f64>) -> PyResult<Self> {
        let s = space(weights.len())?;
        let nu = Measure::new(&s, weights).map_err(py_err)?;
        Ok(PyFunctional {
            inner: dualrep_core::Functional::linear(&nu),
        })
    }

    /// `max_k ⟨f, Q_k⟩ - c_k` over `(Q_k, c_k)` pairs.
    #[staticmethod]
    fn worst_case(scenarios: Vec<(Vec<f64>, f64)>) -> PyResult<Self> {
        let n = scenarios
            .first()
            .map(|(q, _)| q.len())
            .ok_or_else(|| PyValueError::new_err("need at least one scenario"))?;
        let s = space(n)?;
        let sc = scenarios
            .into_iter()
            .map(|(q, c)| Ok((Measure::new(&s, q)?, c)))
            .collect::<dualrep_core::Result<Vec<_>>>()
            .map_err(py_err)?;
        Ok(PyFunctional {
            inner: dualrep_core::Functional::worst_case(sc).map_err(py_err)?,
        })
    }

    /// `weight · entropic(reference) + (1 - weight) · sup`.
    #[staticmethod]
    fn mixture(weight: f64, reference: Vec<f64>) -> PyResult<Self> {
        let s = space(reference.len())?;
        let p = Measure::new(&s, reference).map_err(py_err)?;
        let ent = dualrep_core::Functional::entropic(&p).map_err(py_err)?;
        let inner = dualrep_core::Functional::mixture(vec![
            (weight, ent),
            (1.0 - weight, dualrep_core::Functional::sup(&s)),
        ])
        .map_err(py_err)?;
        Ok(PyFunctional { inner })
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    #[getter]
    fn size(&self) -> usize {
        self.inner.space().size()
    }

    #[getter]
    fn translation_invariant(&self) -> bool {
        self.inner.translation_invariant()
    }

    fn __repr__(&self) -> String {
        format!("Functional({}, n={})", self.inner.describe(), self.size())
    }

    /// `φ(f)`; `inf` outside the domain.
    fn evaluate(&self, f: Vec<f64>) -> PyResult<f64> {
        let f = self.func(f)?;
        self.inner.evaluate(&f).map(to_py_float).map_err(py_err)
    }

    /// `φ*(μ)`, in closed form where known and by box-constrained ascent otherwise.
    #[pyo3(signature = (mu, seed = 0))]
    fn conjugate(&self, mu: Vec<f64>, seed: u64) -> PyResult<f64> {
        let mu = self.measure(mu)?;
        let (v, _) = conjugate_value(&self.inner, &mu, &AscentConfig::default().with_seed(seed))
            .map_err(py_err)?;
        Ok(to_py_float(v))
    }

    /// The maximizing measure at an interior point `f`.
    fn subgradient(&self, f: Vec<f64>) -> PyResult<Vec<f64>> {
        let f = self.func(f)?;
        subgradient(&self.inner, &f)
            .map(|m| m.weights().to_vec())
            .map_err(py_err)
    }

    /// `φ'(f; g)` as the infimum of difference quotients over `ε = 2^-j`, `j ≤ 20`.
    fn directional_derivative(&self, f: Vec<f64>, g: Vec<f64>) -> PyResult<f64> {
        let (f, g) = (self.func(f)?, self.func(g)?);
        directional_derivative(&self.inner, &f, &g, &default_epsilon_grid()).map_err(py_err)
    }

    /// Certifies `φ(f) = ⟨f, μ̂⟩ - φ*(μ̂)`; returns the report as a dict.
    #[pyo3(signature = (f, tol = 1e-6, fy_samples = 1000, seed = 0))]
    fn verify_maxrep<'py>(
        &self,
        py: Python<'py>,
        f: Vec<f64>,
        tol: f64,
        fy_samples: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let f = self.func(f)?;
        let opts = MaxRepOptions {
            tol,
            fy_samples,
            seed,
            ..MaxRepOptions::default()
        };
        let r = verify_maxrep(&self.inner, &f, &opts).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("lhs", to_py_float(r.lhs))?;
        d.set_item("rhs", to_py_float(r.rhs))?;
        d.set_item("gap", r.gap)?;
        d.set_item("witness", r.witness.weights().to_vec())?;
        d.set_item("conjugate_at_witness", to_py_float(r.conjugate_at_witness))?;
        d.set_item("fenchel_young_violations", r.fenchel_young_violations)?;
        d.set_item("certified", r.certified)?;
        Ok(d)
    }
}

/// Step approximation `g ≤ f ≤ g + delta`: returns `(levels, partition, g)`.
#[pyfunction]
fn step_approximation(f: Vec<f64>, delta: f64) -> PyResult<StepParts> {
    let s = space(f.len())?;
    let f = Func::new(&s, f).map_err(py_err)?;
    let st = dualrep_core::limits::step_approximation(&f, delta).map_err(py_err)?;
    Ok((st.levels, st.partition, st.g.values().to_vec()))
}

/// Sup-functional maximizers along the ladder `2^1 .. 2^max_exp` for the
/// profile `1 - 1/m` (or its version capped at `cap`).
#[pyfunction]
#[pyo3(signature = (max_exp, cap = None))]
fn mass_escape<'py>(
    py: Python<'py>,
    max_exp: u32,
    cap: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let ladder = make_truncation_ladder(&geometric_schedule(max_exp)).map_err(py_err)?;
    let opts = MaxRepOptions {
        fy_samples: 10,
        ..MaxRepOptions::default()
    };
    let d = match cap {
        None => mass_escape_diagnostic(reciprocal_profile, &ladder, &opts),
        Some(c) => mass_escape_diagnostic(capped_profile(c), &ladder, &opts),
    }
    .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("rung_sizes", d.rung_sizes)?;
    out.set_item("witness_dirac_index", d.witness_dirac_index)?;
    out.set_item("mass_on_prefix", d.mass_on_prefix)?;
    out.set_item("uniform_gap", d.uniform_gap)?;
    out.set_item("escape_detected", d.escape_detected)?;
    Ok(out)
}

/// `φ(level · 1_{K^c})` along the prefixes `ladder_sizes` smaller than φ's
/// space; returns `(passed, trace)`.
#[pyfunction]
#[pyo3(signature = (phi, level, ladder_sizes, tol = 1e-6))]
fn tightness(
    phi: &PyFunctional,
    level: f64,
    ladder_sizes: Vec<usize>,
    tol: f64,
) -> PyResult<(bool, Vec<f64>)> {
    let ladder = make_truncation_ladder(&ladder_sizes).map_err(py_err)?;
    let v = tightness_check(&phi.inner, level, &ladder, tol).map_err(py_err)?;
    Ok((v.passed, v.trace.into_iter().map(to_py_float).collect()))
}

#[pymodule]
fn dualrep(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFunctional>()?;
    m.add_function(wrap_pyfunction!(step_approximation, m)?)?;
    m.add_function(wrap_pyfunction!(mass_escape, m)?)?;
    m.add_function(wrap_pyfunction!(tightness, m)?)?;
    Ok(())
}
