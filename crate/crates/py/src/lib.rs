//! Python bindings for `gmae_core`: expressions, classification, surface
//! construction with singularity analysis, and the command-line driver.

use std::collections::HashMap;

use gmae_core::classify::{self, ClassifyOptions, Genericity, Involutive};
use gmae_core::model::AlphaSystem;
use gmae_core::reduction::Mode;
use gmae_core::singularity::{analyze, lambda_grid, SingularityOptions};
use gmae_core::solver::{solve_surface, MuOptions, SeedCurve};
use gmae_core::symexpr::{parse, EvalPoint, SampleBox, Var};
use gmae_core::verify::pullback_residuals;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn var(name: &str) -> PyResult<Var> {
    Var::from_name(name).ok_or_else(|| value_err(format!("unknown variable `{name}`")))
}

fn system(alpha: &str) -> PyResult<AlphaSystem> {
    AlphaSystem::parse(alpha).map_err(value_err)
}

fn jet_box(lo: f64, hi: f64) -> SampleBox {
    SampleBox::jet_cube(lo, hi)
}

/// Parse an expression and return its canonical printed form.
#[pyfunction]
fn normalize(expr: &str) -> PyResult<String> {
    Ok(parse(expr).map_err(value_err)?.to_string())
}

/// Symbolic partial derivative of `expr` with respect to `var`.
#[pyfunction]
fn diff(expr: &str, var_name: &str) -> PyResult<String> {
    Ok(parse(expr)
        .map_err(value_err)?
        .diff(var(var_name)?)
        .to_string())
}

/// Evaluate `expr` with the given variable bindings.
#[pyfunction]
fn evaluate(expr: &str, values: HashMap<String, f64>) -> PyResult<f64> {
    let e = parse(expr).map_err(value_err)?;
    let mut pt = EvalPoint::new();
    for (k, v) in values {
        pt.set(var(&k)?, v);
    }
    e.eval(&pt).map_err(value_err)
}

/// Involutivity, genericity and derived type of `z_xx = α z_xy, z_xy = α z_yy`
/// over the box `[lo, hi]^5`.
#[pyfunction]
#[pyo3(signature = (alpha, lo = 1.0, hi = 2.0))]
fn classify_alpha<'py>(
    py: Python<'py>,
    alpha: &str,
    lo: f64,
    hi: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let sys = system(alpha)?;
    let report = classify::classify(&sys, &jet_box(lo, hi), &[], &ClassifyOptions::default())
        .map_err(runtime_err)?;
    let d = PyDict::new(py);
    let involutive = match report.involutive.verdict {
        Involutive::Yes => "yes",
        Involutive::No => "no",
        Involutive::PointwiseOnly => "pointwise-only",
    };
    let genericity = match report.genericity.verdict {
        Genericity::Generic => "generic",
        Genericity::NonGeneric => "nongeneric",
        Genericity::Mixed => "mixed",
    };
    d.set_item("involutive", involutive)?;
    d.set_item("max_e_inv", report.involutive.max_residual)?;
    d.set_item("genericity", genericity)?;
    d.set_item(
        "g_range",
        (report.genericity.min_abs_g, report.genericity.max_abs_g),
    )?;
    d.set_item("derived_type", report.derived.derived_type.to_string())?;
    Ok(d)
}

fn resolve_mode(sys: &AlphaSystem, mode: &str) -> PyResult<Mode> {
    match mode {
        "generic" => Ok(Mode::Generic),
        "nongeneric" => Ok(Mode::NonGeneric),
        "auto" => {
            let g = classify::genericity_test(sys, &jet_box(1.0, 2.0), &ClassifyOptions::default())
                .map_err(runtime_err)?;
            match g.verdict {
                Genericity::Generic => Ok(Mode::Generic),
                Genericity::NonGeneric => Ok(Mode::NonGeneric),
                Genericity::Mixed => Err(runtime_err(
                    "genericity is mixed on [1,2]^5; pass mode explicitly",
                )),
            }
        }
        other => Err(value_err(format!(
            "mode must be auto, generic or nongeneric, not `{other}`"
        ))),
    }
}

/// Build the integral surface over the `(s, t)` grid and classify its front
/// singularities.
///
/// Returns a dict with the grids, jet points (`None` for holes), `lambda_hat`
/// values, contact residuals and a list of singular points.
#[pyfunction]
#[pyo3(signature = (alpha, xi, s_range, t_range, grid = (51, 51), t0 = 0.0, mu0 = 0.0, mode = "auto"))]
#[allow(clippy::too_many_arguments)]
fn solve<'py>(
    py: Python<'py>,
    alpha: &str,
    xi: &str,
    s_range: (f64, f64),
    t_range: (f64, f64),
    grid: (usize, usize),
    t0: f64,
    mu0: f64,
    mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let sys = system(alpha)?;
    let mode = resolve_mode(&sys, mode)?;
    let seed = SeedCurve::parse(xi, t_range.0, t_range.1).map_err(value_err)?;
    let surface = solve_surface(
        &sys,
        mode,
        &seed,
        t0,
        mu0,
        &MuOptions::default(),
        s_range,
        t_range,
        grid,
    )
    .map_err(runtime_err)?;
    let report = analyze(&surface, &SingularityOptions::default());

    let d = PyDict::new(py);
    d.set_item("s", surface.s_grid().to_vec())?;
    d.set_item("t", surface.t_grid().to_vec())?;
    let points: Vec<Option<[f64; 5]>> = surface
        .grid
        .points
        .iter()
        .map(|p| p.map(|p| p.to_array()))
        .collect();
    d.set_item("points", points)?;
    d.set_item("lambda_hat", lambda_grid(&surface))?;
    match pullback_residuals(&surface) {
        Ok((contact, psi)) => d.set_item("residuals", (contact, psi))?,
        Err(_) => d.set_item("residuals", py.None())?,
    }
    let mut singular = Vec::new();
    for p in &report.points {
        let item = PyDict::new(py);
        item.set_item("s", p.s)?;
        item.set_item("t", p.t)?;
        item.set_item("class", p.class.name())?;
        item.set_item("degenerate", p.degenerate)?;
        if let Some(diag) = &p.diagnostics {
            item.set_item("det_hessian", diag.det_hessian)?;
            item.set_item("lambda_tt", diag.derivatives.tt)?;
        }
        singular.push(item);
    }
    d.set_item("singular", singular)?;
    Ok(d)
}

/// Run the `gmae` command line with `args` (without the program name).
/// Returns `(exit_code, stdout, stderr)`.
#[pyfunction]
fn run_cli(args: Vec<String>) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = gmae_core::cli::run(
        std::iter::once("gmae".to_string()).chain(args),
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&err).into_owned(),
    )
}

#[pymodule]
fn gmae(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(diff, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(classify_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
