//! Python bindings for `hfactor`.

use hfactor::atoms::{self, Orientation, ATOM_TOL};
use hfactor::grid::DEFAULT_MAX_CELLS;
use hfactor::{commutator, factorization, grid, norms, singular, symbols};
use pyo3::exceptions::{PyMemoryError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: hfactor::Error) -> PyErr {
    use hfactor::Error as E;
    match e {
        E::CellBudgetExceeded { .. } | E::ScanBudgetExceeded { .. } => PyMemoryError::new_err(e.to_string()),
        E::InvalidArgument(_) | E::MisalignedRect { .. } | E::OutOfExtent | E::IncompatibleGrids(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Rect", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyRect(grid::Rect);

#[pymethods]
impl PyRect {
    #[new]
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> PyResult<Self> {
        grid::Rect::from_bounds(x0, x1, y0, y1).map(Self).map_err(to_py)
    }

    #[getter]
    fn bounds(&self) -> (f64, f64, f64, f64) {
        (self.0.ix.lo(), self.0.ix.hi(), self.0.iy.lo(), self.0.iy.hi())
    }

    #[getter]
    fn area(&self) -> f64 {
        self.0.area()
    }

    fn __repr__(&self) -> String {
        let (a, b, c, d) = self.bounds();
        format!("Rect([{a}, {b}] x [{c}, {d}])")
    }
}

#[pyclass(name = "Grid2D", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(grid::Grid2D);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(origin: (f64, f64), cell: (f64, f64), dims: (usize, usize)) -> PyResult<Self> {
        grid::Grid2D::new([origin.0, origin.1], [cell.0, cell.1], [dims.0, dims.1])
            .map(Self)
            .map_err(to_py)
    }

    /// The `n x n` grid on the unit square.
    #[staticmethod]
    fn unit(n: usize) -> PyResult<Self> {
        grid::Grid2D::unit(n).map(Self).map_err(to_py)
    }

    #[getter]
    fn dims(&self) -> (usize, usize) {
        (self.0.nx(), self.0.ny())
    }

    #[getter]
    fn extent(&self) -> PyRect {
        PyRect(self.0.extent())
    }

    fn __repr__(&self) -> String {
        let [ox, oy] = self.0.origin();
        let [cx, cy] = self.0.cell();
        format!("Grid2D(origin=({ox}, {oy}), cell=({cx}, {cy}), dims={:?})", self.dims())
    }
}

#[pyclass(name = "GridFunction", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGridFunction(grid::GridFunction);

#[pymethods]
impl PyGridFunction {
    /// Values are given row-major: `values[ix * ny + iy]`.
    #[new]
    fn new(grid: &PyGrid, values: Vec<f64>) -> PyResult<Self> {
        grid::GridFunction::new(grid.0, values).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn constant_on(rect: &PyRect, value: f64) -> Self {
        Self(grid::GridFunction::constant_on(&rect.0, value))
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(*self.0.grid())
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn integral(&self) -> f64 {
        self.0.integral()
    }

    fn l2_norm(&self) -> f64 {
        self.0.l2_norm()
    }

    fn linf_norm(&self) -> f64 {
        self.0.linf_norm()
    }

    fn scaled(&self, alpha: f64) -> Self {
        Self(self.0.scaled(alpha))
    }

    fn resample(&self, grid: &PyGrid) -> PyResult<Self> {
        self.0.resample(&grid.0).map(Self).map_err(to_py)
    }

    fn h1(&self) -> Self {
        Self(singular::apply_h1(&self.0))
    }

    fn h2(&self) -> Self {
        Self(singular::apply_h2(&self.0))
    }

    fn h1h2(&self) -> Self {
        Self(singular::apply_h1h2(&self.0))
    }

    /// `H1H2` of this function evaluated at a point outside its support.
    fn h1h2_at(&self, x: f64, y: f64) -> PyResult<f64> {
        singular::eval_h1h2_point(&self.0, (x, y)).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.values().len()
    }

    fn __repr__(&self) -> String {
        format!("GridFunction(dims={:?})", (self.0.grid().nx(), self.0.grid().ny()))
    }
}

#[pyclass(name = "Atom", frozen, from_py_object)]
#[derive(Clone)]
struct PyAtom(atoms::Atom);

#[pymethods]
impl PyAtom {
    #[new]
    fn new(rect: &PyRect, func: &PyGridFunction) -> Self {
        Self(atoms::Atom::new(rect.0, func.0.clone()))
    }

    /// `+-1/|R|` on the two halves of `rect`, split across x or y.
    #[staticmethod]
    #[pyo3(signature = (rect, n = 8, split = "x"))]
    fn haar(rect: &PyRect, n: usize, split: &str) -> PyResult<Self> {
        let o = match split {
            "x" => Orientation::SplitX,
            "y" => Orientation::SplitY,
            other => {
                return Err(PyValueError::new_err(format!(
                    "split must be 'x' or 'y', got {other:?}"
                )))
            }
        };
        atoms::make_haar_atom(&rect.0, n, o).map(Self).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (rect, n = 8, seed = 42))]
    fn random(rect: &PyRect, n: usize, seed: u64) -> PyResult<Self> {
        atoms::random_atom(&rect.0, n, seed).map(Self).map_err(to_py)
    }

    #[getter]
    fn rect(&self) -> PyRect {
        PyRect(self.0.rect)
    }

    #[getter]
    fn func(&self) -> PyGridFunction {
        PyGridFunction(self.0.func.clone())
    }

    #[pyo3(signature = (tol = ATOM_TOL))]
    fn is_valid(&self, tol: f64) -> bool {
        self.0.validate(tol).passed
    }
}

#[pyclass(name = "Factorization", frozen)]
struct PyFactorization(factorization::Factorization);

#[pymethods]
impl PyFactorization {
    /// Residual coefficient mass, input first.
    #[getter]
    fn history(&self) -> Vec<f64> {
        self.0.history.clone()
    }

    #[getter]
    fn n_terms(&self) -> usize {
        self.0.terms.len()
    }

    #[getter]
    fn m(&self) -> Vec<u64> {
        self.0.diagnostics.m.clone()
    }

    #[getter]
    fn rho(&self) -> Vec<f64> {
        self.0.diagnostics.measured_constants.rho.clone()
    }

    #[getter]
    fn reconstruction_errors(&self) -> Vec<f64> {
        self.0.diagnostics.measured_constants.reconstruction_errors.clone()
    }

    #[getter]
    fn pair_norm_total(&self) -> f64 {
        self.0.diagnostics.measured_constants.pair_norm_total
    }

    /// Sum of the factorization terms plus the residual.
    fn reconstruct(&self) -> PyResult<PyGridFunction> {
        factorization::reconstruct_factorization(&self.0)
            .map(PyGridFunction)
            .map_err(to_py)
    }

    /// Exact `L^2` distance between the reconstruction and `func`.
    fn l2_distance(&self, func: &PyGridFunction) -> PyResult<f64> {
        let mut sum = self.0.to_patch_sum(DEFAULT_MAX_CELLS).map_err(to_py)?;
        sum.push(-1.0, func.0.clone());
        sum.l2_norm().map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

fn rect_family(mode: &str, count: usize, seed: u64) -> PyResult<norms::RectFamily> {
    Ok(match mode {
        "all_aligned" => norms::RectFamily::AllAligned,
        "dyadic" => norms::RectFamily::Dyadic,
        "sampled" => norms::RectFamily::Sampled { count, seed },
        other => return Err(PyValueError::new_err(format!("unknown rectangle family {other:?}"))),
    })
}

#[pyfunction]
fn phi(d: i64) -> f64 {
    singular::phi(d)
}

#[pyfunction]
fn pi_form(g: &PyGridFunction, h: &PyGridFunction) -> PyResult<PyGridFunction> {
    factorization::pi_form(&g.0, &h.0).map(PyGridFunction).map_err(to_py)
}

#[pyfunction]
fn choose_m(eps: f64) -> PyResult<u64> {
    factorization::choose_m(eps).map_err(to_py)
}

/// Approximates an atom by one `Pi(f, g)`; returns the features as a dict.
#[pyfunction]
#[pyo3(signature = (atom, eps = 0.3, m = None))]
fn approximate_atom<'py>(py: Python<'py>, atom: &PyAtom, eps: f64, m: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let r = match m {
        Some(m) => factorization::approximate_atom_with_m(&atom.0, eps, m),
        None => factorization::approximate_atom(&atom.0, eps),
    }
    .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("M", r.m)?;
    d.set_item("point_value", r.point_value)?;
    d.set_item("c_eps", r.c_eps)?;
    d.set_item("error_l2", r.error_l2())?;
    d.set_item("rect", PyRect(r.rect))?;
    d.set_item("shifted_rect", PyRect(r.shifted_rect))?;
    d.set_item("f", PyGridFunction(r.f_ind))?;
    d.set_item("g", PyGridFunction(r.g_scaled))?;
    d.set_item("error", PyGridFunction(r.error))?;
    Ok(d)
}

/// Runs the iterative factorization on `sum coeff_i atom_i`.
#[pyfunction]
#[pyo3(signature = (atoms, eps = 0.3, k_max = 3, m = None))]
fn weak_factorize(atoms: Vec<(f64, PyAtom)>, eps: f64, k_max: usize, m: Option<u64>) -> PyResult<PyFactorization> {
    let mut d = atoms::AtomicDecomposition::new();
    for (c, a) in atoms {
        d.push(c, a.0);
    }
    let mut opts = factorization::FactorizeOptions::new(eps, k_max);
    opts.m_override = m;
    factorization::weak_factorize(&d, &opts)
        .map(PyFactorization)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (b, family = "all_aligned", count = 256, seed = 42))]
fn bmo_norm(b: &PyGridFunction, family: &str, count: usize, seed: u64) -> PyResult<f64> {
    norms::bmo_norm(&b.0, &rect_family(family, count, seed)?).map_err(to_py)
}

#[pyfunction]
fn bmo_slicewise(b: &PyGridFunction) -> f64 {
    norms::bmo_slicewise(&b.0)
}

/// `[b, H1H2] f`.
#[pyfunction]
fn commutator_apply(b: &PyGridFunction, f: &PyGridFunction) -> PyResult<PyGridFunction> {
    commutator::commutator_apply(&b.0, &f.0)
        .map(PyGridFunction)
        .map_err(to_py)
}

/// Returns `(<b, Pi(f, g)>, <[b, H1H2] f, g>)`.
#[pyfunction]
fn duality_pair(b: &PyGridFunction, f: &PyGridFunction, g: &PyGridFunction) -> PyResult<(f64, f64)> {
    let c = commutator::duality_check(&b.0, &f.0, &g.0).map_err(to_py)?;
    Ok((c.lhs, c.rhs))
}

/// Operator norm of `[b, H1H2]` on `b`'s grid by power iteration.
#[pyfunction]
#[pyo3(signature = (b, max_iters = 5000, tol = 1e-12, seed = 42))]
fn operator_norm(b: &PyGridFunction, max_iters: usize, tol: f64, seed: u64) -> PyResult<f64> {
    commutator::operator_norm(&b.0, b.0.grid(), max_iters, tol, seed)
        .map(|e| e.value)
        .map_err(to_py)
}

/// `(id, function)` pairs of a named symbol family on an `n x n` grid.
#[pyfunction]
#[pyo3(signature = (n, name = symbols::STANDARD_V1))]
fn symbol_family(n: usize, name: &str) -> PyResult<Vec<(String, PyGridFunction)>> {
    Ok(symbols::symbol_family(name, n)
        .map_err(to_py)?
        .into_iter()
        .map(|s| (s.id, PyGridFunction(s.func)))
        .collect())
}

#[pymodule]
fn pyhfactor(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRect>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyGridFunction>()?;
    m.add_class::<PyAtom>()?;
    m.add_class::<PyFactorization>()?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(pi_form, m)?)?;
    m.add_function(wrap_pyfunction!(choose_m, m)?)?;
    m.add_function(wrap_pyfunction!(approximate_atom, m)?)?;
    m.add_function(wrap_pyfunction!(weak_factorize, m)?)?;
    m.add_function(wrap_pyfunction!(bmo_norm, m)?)?;
    m.add_function(wrap_pyfunction!(bmo_slicewise, m)?)?;
    m.add_function(wrap_pyfunction!(commutator_apply, m)?)?;
    m.add_function(wrap_pyfunction!(duality_pair, m)?)?;
    m.add_function(wrap_pyfunction!(operator_norm, m)?)?;
    m.add_function(wrap_pyfunction!(symbol_family, m)?)?;
    Ok(())
}
