//! Python bindings for the g2lab core library: pointwise G2 linear
//! algebra, model-family potentials and curvature, the period-domain
//! immersion, and the verification suites.

use g2lab_core::config::{FlagOverrides, RunConfig};
use g2lab_core::exterior::AltForm;
use g2lab_core::g2::{frame_of, is_positive, standard_phi, G2Frame, TypeComponent};
use g2lab_core::models::{ChartSpec, Model};
use g2lab_core::moduli::{
    e_residual, geometry, hessian_closed, jet, jet_to_order, third_closed, JetScheme, Tensor,
};
use g2lab_core::period::{flat_space, pair_iso, phi_map, validate_point};
use g2lab_core::report::Report;
use g2lab_core::suites::run_suites;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use std::collections::HashMap;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn build_model(name: &str) -> PyResult<(Model, Vec<f64>)> {
    let spec = ChartSpec {
        model: name.to_string(),
        t3k3: None,
    };
    spec.build().map_err(value_err)
}

fn form3(coeffs: Vec<f64>) -> PyResult<AltForm> {
    if coeffs.len() != 35 {
        return Err(value_err(format!(
            "a 3-form has 35 coefficients, got {}",
            coeffs.len()
        )));
    }
    Ok(AltForm::from_coeffs(3, coeffs))
}

fn tensor_nested3(t: &Tensor) -> Vec<Vec<Vec<f64>>> {
    let n = t.dims();
    (0..n)
        .map(|a| {
            (0..n)
                .map(|b| (0..n).map(|c| t.get(&[a, b, c])).collect())
                .collect()
        })
        .collect()
}

/// Coefficients of the standard positive 3-form phi0 in lex monomial order.
#[pyfunction]
fn standard_phi_coeffs() -> Vec<f64> {
    standard_phi().coeffs().to_vec()
}

/// Whether a 3-form (35 lex coefficients) is positive.
#[pyfunction]
#[pyo3(name = "is_positive")]
fn is_positive_py(coeffs: Vec<f64>) -> PyResult<bool> {
    is_positive(&form3(coeffs)?).map_err(value_err)
}

/// The full pointwise frame of a positive 3-form: metric, volume, theta,
/// type projections, and inner products.
#[pyclass]
struct Frame {
    inner: G2Frame,
}

#[pymethods]
impl Frame {
    #[new]
    fn new(coeffs: Vec<f64>) -> PyResult<Self> {
        Ok(Frame {
            inner: frame_of(&form3(coeffs)?).map_err(value_err)?,
        })
    }

    fn metric(&self) -> Vec<Vec<f64>> {
        let g = self.inner.metric().gram();
        (0..7).map(|i| (0..7).map(|j| g[(i, j)]).collect()).collect()
    }

    fn volume(&self) -> f64 {
        self.inner.volume_density()
    }

    fn theta(&self) -> Vec<f64> {
        self.inner.theta().coeffs().to_vec()
    }

    /// Project a form onto a type component: "1", "7", "27" (degree 3)
    /// or "2_7", "2_14" (degree 2).
    fn project(&self, coeffs: Vec<f64>, component: &str) -> PyResult<Vec<f64>> {
        let (component, degree) = match component {
            "1" => (TypeComponent::L3_1, 3),
            "7" => (TypeComponent::L3_7, 3),
            "27" => (TypeComponent::L3_27, 3),
            "2_7" => (TypeComponent::L2_7, 2),
            "2_14" => (TypeComponent::L2_14, 2),
            other => return Err(value_err(format!("unknown component '{other}'"))),
        };
        let n = if degree == 3 { 35 } else { 21 };
        if coeffs.len() != n {
            return Err(value_err(format!(
                "degree-{degree} form has {n} coefficients, got {}",
                coeffs.len()
            )));
        }
        let form = AltForm::from_coeffs(degree, coeffs);
        Ok(self
            .inner
            .project(&form, component)
            .map_err(value_err)?
            .coeffs()
            .to_vec())
    }

    /// Lambda inner product of two 3-forms in this frame's metric.
    fn inner_product(&self, a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
        self.inner
            .inner(&form3(a)?, &form3(b)?)
            .map_err(value_err)
    }
}

/// Volume functional of a model family ("flat7", "full35", "t3k3").
#[pyfunction]
fn volume(model: &str, x: Vec<f64>) -> PyResult<f64> {
    let (m, _) = build_model(model)?;
    m.family().volume(&x).map_err(value_err)
}

/// Potential F = -3 log Vol.
#[pyfunction]
fn potential(model: &str, x: Vec<f64>) -> PyResult<f64> {
    g2lab_core::moduli::potential(build_model(model)?.0.family(), &x).map_err(value_err)
}

/// Default base point of a model chart.
#[pyfunction]
fn base_point(model: &str) -> PyResult<Vec<f64>> {
    Ok(build_model(model)?.1)
}

/// Hessian of the potential (closed form where available, FD otherwise).
#[pyfunction]
fn hessian(model: &str, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let (m, _) = build_model(model)?;
    let family = m.family();
    let t = match hessian_closed(family, &x) {
        Ok(t) => t,
        Err(_) => {
            jet_to_order(family, &x, &JetScheme::default(), 2)
                .map_err(value_err)?
                .f2
        }
    };
    let n = t.dims();
    Ok((0..n)
        .map(|a| (0..n).map(|b| t.get(&[a, b])).collect())
        .collect())
}

/// Yukawa coupling Xi = F3/2 as a nested list.
#[pyfunction]
fn yukawa(model: &str, x: Vec<f64>) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let (m, _) = build_model(model)?;
    let family = m.family();
    let f3 = match third_closed(family, &x) {
        Ok(t) => t,
        Err(_) => jet_to_order(family, &x, &JetScheme::default(), 3)
            .map_err(value_err)?
            .f3
            .unwrap(),
    };
    Ok(tensor_nested3(&f3.scale(0.5)))
}

/// Max-norm of the fourth-derivative identity residual at x.
#[pyfunction]
fn e_residual_max(model: &str, x: Vec<f64>) -> PyResult<f64> {
    let (m, _) = build_model(model)?;
    let j = jet(m.family(), &x, &JetScheme::default()).map_err(value_err)?;
    Ok(e_residual(&j).map_err(value_err)?.residual.max_abs())
}

/// Curvature summary at x: max |R|, max |nabla R| (when closed-form
/// barriers exist), and the range of sampled sectional curvatures.
#[pyfunction]
#[pyo3(signature = (model, x, seed = 0))]
fn curvature_summary(model: &str, x: Vec<f64>, seed: u64) -> PyResult<HashMap<String, f64>> {
    let (m, _) = build_model(model)?;
    let family = m.family();
    let j = jet(family, &x, &JetScheme::default()).map_err(value_err)?;
    let geo = geometry(family, &j).map_err(value_err)?;
    let mut out = HashMap::new();
    out.insert("riemann_max".to_string(), geo.riemann.max_abs());
    if let Some(nr) = &geo.nabla_r {
        out.insert("nabla_r_max".to_string(), nr.max_abs());
    }
    let n = x.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for _ in 0..50 {
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k = geo.sectional(&u, &v);
        lo = lo.min(k);
        hi = hi.max(k);
    }
    out.insert("sectional_min".to_string(), lo);
    out.insert("sectional_max".to_string(), hi);
    Ok(out)
}

/// The period-domain decomposition induced by a flat-chart point, as JSON
/// block bases.
#[pyfunction]
fn phi_map_json(x: Vec<f64>) -> PyResult<String> {
    let point = phi_map(&g2lab_core::models::FlatOrbifoldChart, &x).map_err(value_err)?;
    Ok(point.to_json().to_string())
}

/// Max residual of the decomposition axioms at a flat-chart point.
#[pyfunction]
fn period_validate_residual(x: Vec<f64>) -> PyResult<f64> {
    let space = flat_space();
    let point = phi_map(&g2lab_core::models::FlatOrbifoldChart, &x).map_err(value_err)?;
    Ok(validate_point(&space, &point).map_err(value_err)?.max_residual)
}

/// The (line, inner product) pair of the induced decomposition.
#[pyfunction]
fn period_pair(x: Vec<f64>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let space = flat_space();
    let point = phi_map(&g2lab_core::models::FlatOrbifoldChart, &x).map_err(value_err)?;
    let (ell, q) = pair_iso(&space, &point).map_err(value_err)?;
    let qv = (0..q.nrows())
        .map(|i| (0..q.ncols()).map(|j| q[(i, j)]).collect())
        .collect();
    Ok((ell.iter().cloned().collect(), qv))
}

/// Run a verification suite and return the JSON report as a string.
#[pyfunction]
#[pyo3(signature = (suite, seed = 0))]
fn run_suite_json(suite: &str, seed: u64) -> PyResult<String> {
    let flags = FlagOverrides {
        suite: Some(suite.to_string()),
        seed: Some(seed),
        ..Default::default()
    };
    let cfg = RunConfig::resolve(None, &flags, None).map_err(value_err)?;
    let records = run_suites(&cfg).map_err(value_err)?;
    let report = Report::new(
        cfg.suites.join(","),
        cfg.model.clone(),
        cfg.seed,
        cfg.echo(),
        records,
    );
    Ok(report.to_json_string())
}

#[pymodule]
fn pyg2lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Frame>()?;
    m.add_function(wrap_pyfunction!(standard_phi_coeffs, m)?)?;
    m.add_function(wrap_pyfunction!(is_positive_py, m)?)?;
    m.add_function(wrap_pyfunction!(volume, m)?)?;
    m.add_function(wrap_pyfunction!(potential, m)?)?;
    m.add_function(wrap_pyfunction!(base_point, m)?)?;
    m.add_function(wrap_pyfunction!(hessian, m)?)?;
    m.add_function(wrap_pyfunction!(yukawa, m)?)?;
    m.add_function(wrap_pyfunction!(e_residual_max, m)?)?;
    m.add_function(wrap_pyfunction!(curvature_summary, m)?)?;
    m.add_function(wrap_pyfunction!(phi_map_json, m)?)?;
    m.add_function(wrap_pyfunction!(period_validate_residual, m)?)?;
    m.add_function(wrap_pyfunction!(period_pair, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite_json, m)?)?;
    Ok(())
}
