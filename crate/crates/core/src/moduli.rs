//! Hessian geometry of a model family: potential jets, closed-form second
//! and third derivatives, the fourth-derivative identity and its residual,
//! Shima curvature, and covariant derivatives.

use crate::exterior::{delta_action, lambda_inner, AltForm};
use crate::g2::{frame_of, G2Error, TypeComponent, FANO_MONOMIALS};
use crate::models::{
    harmonic_frame, FlatOrbifoldChart, FullTorusFamily, ModelError, ModelFamily, T3K3Chart,
};
use crate::numdiff::{FdScheme, NumdiffError, SymmetrizedTensor};
use nalgebra::DMatrix;
use std::cell::RefCell;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModuliError {
    #[error("FD stencil left the chart domain near {0:?}")]
    StencilEscape(Vec<f64>),
    #[error("the Hessian metric is singular at this point")]
    SingularMetric,
    #[error("operation requires {0}")]
    Capability(String),
    #[error("jet does not carry the order-{0} tensor")]
    MissingOrder(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numdiff(#[from] NumdiffError),
    #[error(transparent)]
    G2(#[from] G2Error),
}

/// How a derivative tensor was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    ClosedForm,
    FiniteDifference,
}

/// Dense fully-symmetric tensor over an m-dimensional chart.
#[derive(Debug, Clone)]
pub struct Tensor {
    order: usize,
    dims: usize,
    values: Vec<f64>,
}

impl Tensor {
    pub fn zeros(order: usize, dims: usize) -> Self {
        Tensor {
            order,
            dims,
            values: vec![0.0; dims.pow(order as u32)],
        }
    }

    pub fn from_symmetrized(t: &SymmetrizedTensor) -> Self {
        Tensor {
            order: t.order(),
            dims: t.dims(),
            values: t.values().to_vec(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn flat(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order);
        idx.iter().fold(0, |acc, &i| acc * self.dims + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.flat(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let f = self.flat(idx);
        self.values[f] = value;
    }

    pub fn add_at(&mut self, idx: &[usize], value: f64) {
        let f = self.flat(idx);
        self.values[f] += value;
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.order, other.order);
        assert_eq!(self.dims, other.dims);
        Tensor {
            order: self.order,
            dims: self.dims,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        Tensor {
            order: self.order,
            dims: self.dims,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn as_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.order, 2);
        DMatrix::from_fn(self.dims, self.dims, |i, j| self.get(&[i, j]))
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Tensor {
        assert_eq!(m.nrows(), m.ncols());
        let n = m.nrows();
        Tensor {
            order: 2,
            dims: n,
            values: (0..n * n).map(|f| m[(f / n, f % n)]).collect(),
        }
    }

    /// Contract the last index with a vector.
    pub fn contract_last(&self, v: &[f64]) -> Tensor {
        assert_eq!(v.len(), self.dims);
        let n = self.dims;
        let out_len = n.pow(self.order as u32 - 1);
        let mut values = vec![0.0; out_len];
        for (o, val) in values.iter_mut().enumerate() {
            let base = o * n;
            *val = (0..n).map(|k| self.values[base + k] * v[k]).sum();
        }
        Tensor {
            order: self.order - 1,
            dims: n,
            values,
        }
    }
}

/// The potential of a model family: -3 log Vol.
pub fn potential(family: &dyn ModelFamily, x: &[f64]) -> Result<f64, ModuliError> {
    Ok(-3.0 * family.volume(x)?.ln())
}

/// FD steps used per derivative order: `low` for orders 1-2, `high` for 3-4.
#[derive(Debug, Clone, Copy)]
pub struct JetScheme {
    pub low: FdScheme,
    pub high: FdScheme,
}

impl Default for JetScheme {
    fn default() -> Self {
        JetScheme {
            low: FdScheme::default_for_order(2).unwrap(),
            high: FdScheme::default_for_order(4).unwrap(),
        }
    }
}

impl JetScheme {
    /// Apply optional config overrides: the step replaces the low-order base
    /// step (high-order step stays 5x coarser), levels apply to both.
    pub fn with_overrides(
        step: Option<f64>,
        levels: Option<usize>,
    ) -> Result<Self, NumdiffError> {
        let base = JetScheme::default();
        let low_step = step.unwrap_or(base.low.step());
        let high_step = step.map(|s| 5.0 * s).unwrap_or(base.high.step());
        let low_levels = levels.unwrap_or(base.low.levels());
        let high_levels = levels.unwrap_or(base.high.levels());
        Ok(JetScheme {
            low: FdScheme::new(low_step, low_levels)?,
            high: FdScheme::new(high_step, high_levels)?,
        })
    }

    fn for_order(&self, order: usize) -> FdScheme {
        if order <= 2 {
            self.low
        } else {
            self.high
        }
    }
}

/// FD partial tensor of the potential, converting stencil escapes into
/// errors instead of silent NaN.
fn fd_potential_tensor(
    family: &dyn ModelFamily,
    x: &[f64],
    order: usize,
    scheme: FdScheme,
) -> Result<Tensor, ModuliError> {
    let escaped: RefCell<Option<Vec<f64>>> = RefCell::new(None);
    let mut f = |p: &[f64]| match potential(family, p) {
        Ok(v) => v,
        Err(_) => {
            escaped.borrow_mut().get_or_insert_with(|| p.to_vec());
            f64::NAN
        }
    };
    let t = scheme.partial_tensor(&mut f, x, order)?;
    if let Some(p) = escaped.into_inner() {
        return Err(ModuliError::StencilEscape(p));
    }
    Ok(Tensor::from_symmetrized(&t))
}

/// Closed-form barrier derivatives, available when the potential is an
/// explicit sum of log barriers (the flat chart and the T3 x K3 chart).
pub struct ClosedPartials {
    pub f1: Vec<f64>,
    pub f2: Tensor,
    pub f3: Tensor,
}

pub fn closed_partials(
    family: &dyn ModelFamily,
    x: &[f64],
) -> Result<Option<ClosedPartials>, ModuliError> {
    if family.as_any().downcast_ref::<FlatOrbifoldChart>().is_some() {
        if !family.in_domain(x) {
            return Err(ModuliError::Model(ModelError::OutOfDomain(format!(
                "{:?}",
                x
            ))));
        }
        let n = 7;
        let mut f2 = Tensor::zeros(2, n);
        let mut f3 = Tensor::zeros(3, n);
        let f1 = x.iter().map(|v| -1.0 / v).collect();
        for a in 0..n {
            f2.set(&[a, a], 1.0 / (x[a] * x[a]));
            f3.set(&[a, a, a], -2.0 / (x[a] * x[a] * x[a]));
        }
        return Ok(Some(ClosedPartials { f1, f2, f3 }));
    }
    if let Some(chart) = family.as_any().downcast_ref::<T3K3Chart>() {
        if !family.in_domain(x) {
            return Err(ModuliError::Model(ModelError::OutOfDomain(format!(
                "{:?}",
                x
            ))));
        }
        let n = chart.dimension();
        let mut f1 = vec![0.0; n];
        let mut f2 = Tensor::zeros(2, n);
        let mut f3 = Tensor::zeros(3, n);
        // x0 barrier -log x0
        f1[0] = -1.0 / x[0];
        f2.set(&[0, 0], 1.0 / (x[0] * x[0]));
        f3.set(&[0, 0, 0], -2.0 / (x[0] * x[0] * x[0]));
        // each factor contributes -log q_i, q_i = a^T Q_i a, u = Q_i a
        let mut offset = 1;
        for (i, d) in chart.dims().iter().enumerate() {
            let d = *d;
            let qm = chart.q(i);
            let a = nalgebra::DVector::from_column_slice(&x[offset..offset + d]);
            let u = qm * &a;
            let q = a.dot(&u);
            for j in 0..d {
                f1[offset + j] = -2.0 * u[j] / q;
                for k in 0..d {
                    f2.set(
                        &[offset + j, offset + k],
                        -2.0 * qm[(j, k)] / q + 4.0 * u[j] * u[k] / (q * q),
                    );
                    for l in 0..d {
                        let v = 4.0
                            * (qm[(j, k)] * u[l] + qm[(j, l)] * u[k] + qm[(k, l)] * u[j])
                            / (q * q)
                            - 16.0 * u[j] * u[k] * u[l] / (q * q * q);
                        f3.set(&[offset + j, offset + k, offset + l], v);
                    }
                }
            }
            offset += d;
        }
        return Ok(Some(ClosedPartials { f1, f2, f3 }));
    }
    Ok(None)
}

/// Derivative data of the potential at a point, orders 1 through 4.
pub struct PotentialJet {
    pub x: Vec<f64>,
    pub f: f64,
    pub f1: Vec<f64>,
    pub f2: Tensor,
    pub f3: Option<Tensor>,
    pub f4: Option<Tensor>,
    pub provenance: [Provenance; 4],
    /// Closed-form second and third derivatives when the family has them.
    pub closed_f2: Option<Tensor>,
    pub closed_f3: Option<Tensor>,
}

impl PotentialJet {
    /// Prefer the closed-form Hessian when available.
    pub fn best_f2(&self) -> &Tensor {
        self.closed_f2.as_ref().unwrap_or(&self.f2)
    }

    pub fn best_f3(&self) -> Option<&Tensor> {
        self.closed_f3.as_ref().or(self.f3.as_ref())
    }

    pub fn g_matrix(&self) -> DMatrix<f64> {
        self.best_f2().as_matrix()
    }
}

pub fn jet(
    family: &dyn ModelFamily,
    x: &[f64],
    scheme: &JetScheme,
) -> Result<PotentialJet, ModuliError> {
    jet_to_order(family, x, scheme, 4)
}

/// Jet truncated at `max_order` (2..=4); higher orders are costly on
/// high-dimensional charts and not always needed.
pub fn jet_to_order(
    family: &dyn ModelFamily,
    x: &[f64],
    scheme: &JetScheme,
    max_order: usize,
) -> Result<PotentialJet, ModuliError> {
    assert!((2..=4).contains(&max_order));
    let f = potential(family, x)?;
    let f1t = fd_potential_tensor(family, x, 1, scheme.for_order(1))?;
    let f2 = fd_potential_tensor(family, x, 2, scheme.for_order(2))?;
    let f3 = if max_order >= 3 {
        Some(fd_potential_tensor(family, x, 3, scheme.for_order(3))?)
    } else {
        None
    };
    let f4 = if max_order >= 4 {
        Some(fd_potential_tensor(family, x, 4, scheme.for_order(4))?)
    } else {
        None
    };
    let closed = closed_partials(family, x)?;
    let (f1, closed_f2, closed_f3, provenance) = match closed {
        Some(cp) => (
            cp.f1,
            Some(cp.f2),
            Some(cp.f3),
            [
                Provenance::ClosedForm,
                Provenance::ClosedForm,
                Provenance::ClosedForm,
                Provenance::FiniteDifference,
            ],
        ),
        None => (
            f1t.values().to_vec(),
            None,
            None,
            [Provenance::FiniteDifference; 4],
        ),
    };
    Ok(PotentialJet {
        x: x.to_vec(),
        f,
        f1,
        f2,
        f3,
        f4,
        provenance,
        closed_f2,
        closed_f3,
    })
}

/// Harmonic representatives for the pointwise closed-form derivative paths.
fn monomial_etas(family: &dyn ModelFamily) -> Result<Vec<AltForm>, ModuliError> {
    if family.as_any().downcast_ref::<FlatOrbifoldChart>().is_some() {
        Ok(FANO_MONOMIALS
            .iter()
            .map(|(indices, sign)| AltForm::monomial(indices).scale(*sign))
            .collect())
    } else if family.as_any().downcast_ref::<FullTorusFamily>().is_some() {
        Ok((0..35)
            .map(|i| {
                let mut coeffs = vec![0.0; 35];
                coeffs[i] = 1.0;
                AltForm::from_coeffs(3, coeffs)
            })
            .collect())
    } else {
        Err(ModuliError::Capability(
            "a family with pointwise forms".to_string(),
        ))
    }
}

fn pointwise_phi(family: &dyn ModelFamily, x: &[f64]) -> Result<AltForm, ModuliError> {
    if let Some(chart) = family.as_any().downcast_ref::<FlatOrbifoldChart>() {
        Ok(chart.phi_at(x)?)
    } else if family.as_any().downcast_ref::<FullTorusFamily>().is_some() {
        if x.len() != 35 {
            return Err(ModuliError::Model(ModelError::Dimension {
                expected: 35,
                got: x.len(),
            }));
        }
        Ok(AltForm::from_coeffs(3, x.to_vec()))
    } else {
        Err(ModuliError::Capability(
            "a family with pointwise forms".to_string(),
        ))
    }
}

/// Closed-form Hessian of the potential on pointwise families:
/// F_ab = <eta_a, pi_{1+27} eta_b - pi_7 eta_b> (constant integrand, so the
/// volume factors cancel against the 1/Vol normalization).
pub fn hessian_closed(family: &dyn ModelFamily, x: &[f64]) -> Result<Tensor, ModuliError> {
    let etas = monomial_etas(family)?;
    let frame = frame_of(&pointwise_phi(family, x)?)?;
    let n = etas.len();
    let mut out = Tensor::zeros(2, n);
    let images: Vec<AltForm> = etas
        .iter()
        .map(|eta| {
            let p1 = frame.project(eta, TypeComponent::L3_1)?;
            let p7 = frame.project(eta, TypeComponent::L3_7)?;
            let p27 = frame.project(eta, TypeComponent::L3_27)?;
            p1.add(&p27)?.sub(&p7).map_err(G2Error::from)
        })
        .collect::<Result<_, _>>()?;
    for a in 0..n {
        for b in 0..n {
            out.set(
                &[a, b],
                lambda_inner(frame.metric(), &etas[a], &images[b]).map_err(G2Error::from)?,
            );
        }
    }
    Ok(out)
}

/// Closed-form third derivative on the flat chart (the only b1 = 0 family):
/// F_abc = -2 <h_c . eta_a, eta_b>.
pub fn third_closed(family: &dyn ModelFamily, x: &[f64]) -> Result<Tensor, ModuliError> {
    let Some(chart) = family.as_any().downcast_ref::<FlatOrbifoldChart>() else {
        return Err(ModuliError::Capability(
            "a pointwise family with b1 = 0 (the flat chart)".to_string(),
        ));
    };
    let hf = harmonic_frame(chart, x)?;
    let n = hf.etas.len();
    let mut out = Tensor::zeros(3, n);
    for c in 0..n {
        for a in 0..n {
            let moved = delta_action(&hf.hs[c], &hf.etas[a]);
            for b in 0..n {
                let v = -2.0
                    * lambda_inner(hf.frame.metric(), &moved, &hf.etas[b])
                        .map_err(G2Error::from)?;
                out.set(&[a, b, c], v);
            }
        }
    }
    Ok(out)
}

fn inverse_of(f2: &Tensor) -> Result<DMatrix<f64>, ModuliError> {
    f2.as_matrix()
        .try_inverse()
        .ok_or(ModuliError::SingularMetric)
}

fn shima_riemann(ginv: &DMatrix<f64>, f3: &Tensor) -> Tensor {
    let n = f3.dims();
    let mut r = Tensor::zeros(4, n);
    // R_abcd = 1/4 G^{kl} (F_adk F_bcl - F_ack F_bdl)
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        let fadk = f3.get(&[a, d, k]);
                        let fack = f3.get(&[a, c, k]);
                        for l in 0..n {
                            acc += ginv[(k, l)]
                                * (fadk * f3.get(&[b, c, l]) - fack * f3.get(&[b, d, l]));
                        }
                    }
                    r.set(&[a, b, c, d], 0.25 * acc);
                }
            }
        }
    }
    r
}

fn christoffel_of(ginv: &DMatrix<f64>, f3: &Tensor) -> Tensor {
    let n = f3.dims();
    let mut gamma = Tensor::zeros(3, n);
    // Gamma^k_ab = 1/2 G^{kl} F_abl, stored as (k, a, b)
    for k in 0..n {
        for a in 0..n {
            for b in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += ginv[(k, l)] * f3.get(&[a, b, l]);
                }
                gamma.set(&[k, a, b], 0.5 * acc);
            }
        }
    }
    gamma
}

/// The symmetric quadratic term of the fourth-derivative identity:
/// 1/2 G^{kl} (F_abk F_cdl + F_ack F_bdl + F_adk F_bcl).
pub fn fourth_rhs(jet: &PotentialJet) -> Result<Tensor, ModuliError> {
    let f3 = jet.best_f3().ok_or(ModuliError::MissingOrder(3))?;
    let ginv = inverse_of(jet.best_f2())?;
    let n = f3.dims();
    let mut out = Tensor::zeros(4, n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        let fabk = f3.get(&[a, b, k]);
                        let fack = f3.get(&[a, c, k]);
                        let fadk = f3.get(&[a, d, k]);
                        for l in 0..n {
                            acc += ginv[(k, l)]
                                * (fabk * f3.get(&[c, d, l])
                                    + fack * f3.get(&[b, d, l])
                                    + fadk * f3.get(&[b, c, l]));
                        }
                    }
                    out.set(&[a, b, c, d], 0.5 * acc);
                }
            }
        }
    }
    Ok(out)
}

/// The measured fourth-derivative residual F4 - fourth_rhs, together with
/// the covariant Yukawa derivative it encodes (residual / 2).
pub struct EResidual {
    pub residual: Tensor,
    pub nabla_xi: Tensor,
}

pub fn e_residual(jet: &PotentialJet) -> Result<EResidual, ModuliError> {
    let f4 = jet.f4.as_ref().ok_or(ModuliError::MissingOrder(4))?;
    let rhs = fourth_rhs(jet)?;
    let residual = f4.sub(&rhs);
    let nabla_xi = residual.scale(0.5);
    Ok(EResidual { residual, nabla_xi })
}

/// Assembled Hessian geometry at a point.
pub struct HessianGeometry {
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    /// Gamma^k_ab, indices (k, a, b).
    pub christoffel: Tensor,
    /// Yukawa coupling Xi = F3 / 2.
    pub xi: Tensor,
    pub nabla_xi: Tensor,
    pub riemann: Tensor,
    /// Covariant derivative of the curvature, indices (e, a, b, c, d);
    /// available when the family has closed-form barrier derivatives.
    pub nabla_r: Option<Tensor>,
}

impl HessianGeometry {
    /// Sectional curvature of the plane spanned by u, v. With the curvature
    /// stored as R_abcd = 1/4 G^{kl}(F_adk F_bcl - F_ack F_bdl), the
    /// sectional curvature is -R(u,v,v,u) normalized by the Gram area; the
    /// sign is fixed so the Lorentzian barrier factors come out hyperbolic
    /// (negative), matching the standard convention.
    pub fn sectional(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.g.nrows();
        let mut num = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        num -= self.riemann.get(&[a, b, c, d]) * u[a] * v[b] * v[c] * u[d];
                    }
                }
            }
        }
        let gu = DMatrix::from_column_slice(n, 1, u);
        let gv = DMatrix::from_column_slice(n, 1, v);
        let guu = (gu.transpose() * &self.g * &gu)[(0, 0)];
        let gvv = (gv.transpose() * &self.g * &gv)[(0, 0)];
        let guv = (gu.transpose() * &self.g * &gv)[(0, 0)];
        num / (guu * gvv - guv * guv)
    }
}

/// Assemble the Hessian geometry at the jet's base point. nabla_r is
/// computed by one central difference of the closed-form curvature with
/// Christoffel corrections, and only on families with closed barriers;
/// five-fold differencing of the potential is numerically hopeless.
pub fn geometry(family: &dyn ModelFamily, jet: &PotentialJet) -> Result<HessianGeometry, ModuliError> {
    let f3 = jet.best_f3().ok_or(ModuliError::MissingOrder(3))?;
    let g = jet.g_matrix();
    let ginv = inverse_of(jet.best_f2())?;
    let christoffel = christoffel_of(&ginv, f3);
    let xi = f3.scale(0.5);
    let nabla_xi = e_residual(jet)?.nabla_xi;
    let riemann = shima_riemann(&ginv, f3);
    let n = f3.dims();

    let nabla_r = if jet.closed_f2.is_some() {
        let riemann_at = |p: &[f64]| -> Result<Tensor, ModuliError> {
            let cp = closed_partials(family, p)?.expect("closed partials available");
            Ok(shima_riemann(&inverse_of(&cp.f2)?, &cp.f3))
        };
        let step = 1e-3;
        let mut out = Tensor::zeros(5, n);
        for e in 0..n {
            let mut xp = jet.x.clone();
            let mut xm = jet.x.clone();
            xp[e] += step;
            xm[e] -= step;
            let rp = riemann_at(&xp)?;
            let rm = riemann_at(&xm)?;
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        for d in 0..n {
                            let mut val = (rp.get(&[a, b, c, d]) - rm.get(&[a, b, c, d]))
                                / (2.0 * step);
                            for k in 0..n {
                                val -= christoffel.get(&[k, e, a]) * riemann.get(&[k, b, c, d]);
                                val -= christoffel.get(&[k, e, b]) * riemann.get(&[a, k, c, d]);
                                val -= christoffel.get(&[k, e, c]) * riemann.get(&[a, b, k, d]);
                                val -= christoffel.get(&[k, e, d]) * riemann.get(&[a, b, c, k]);
                            }
                            out.set(&[e, a, b, c, d], val);
                        }
                    }
                }
            }
        }
        Some(out)
    } else {
        None
    };

    Ok(HessianGeometry {
        g,
        ginv,
        christoffel,
        xi,
        nabla_xi,
        riemann,
        nabla_r,
    })
}

/// Residuals of the Euler homogeneity identities:
/// x^k F_ak = -F_a and x^k F_abk = -2 G_ab.
pub struct EulerReport {
    pub grad_residual: f64,
    pub hessian_residual: f64,
}

pub fn euler_identities(jet: &PotentialJet) -> Result<EulerReport, ModuliError> {
    let f3 = jet.best_f3().ok_or(ModuliError::MissingOrder(3))?;
    let f2 = jet.best_f2();
    let grad = f2.contract_last(&jet.x);
    let grad_residual = grad
        .values()
        .iter()
        .zip(&jet.f1)
        .fold(0.0f64, |m, (c, f)| m.max((c + f).abs()));
    let hess = f3.contract_last(&jet.x);
    let hessian_residual = hess
        .values()
        .iter()
        .zip(f2.values())
        .fold(0.0f64, |m, (c, g)| m.max((c + 2.0 * g).abs()));
    Ok(EulerReport {
        grad_residual,
        hessian_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::g2::standard_phi;
    use crate::models::sample_near;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat_point(seed: u64) -> Vec<f64> {
        sample_near(&FlatOrbifoldChart, &[1.0; 7], 0.3, seed).unwrap()
    }

    fn t3k3_point(chart: &T3K3Chart, seed: u64) -> Vec<f64> {
        sample_near(chart, &chart.standard_base(), 0.3, seed).unwrap()
    }

    /// Tighter radius for fourth-order FD: the barrier's high derivatives
    /// blow up like 1/q, so small q inflates the stencil error.
    fn t3k3_point_tight(chart: &T3K3Chart, seed: u64) -> Vec<f64> {
        sample_near(chart, &chart.standard_base(), 0.15, seed).unwrap()
    }

    #[test]
    fn potential_values() {
        let flat = FlatOrbifoldChart;
        assert!(potential(&flat, &[1.0; 7]).unwrap().abs() < 1e-12);
        let s = 1.6f64;
        assert!((potential(&flat, &[s; 7]).unwrap() + 7.0 * s.ln()).abs() < 1e-12);
        let chart = T3K3Chart::standard();
        for seed in 0..5 {
            let x = t3k3_point(&chart, seed);
            let q = chart.lorentz_norms(&x).unwrap();
            let expected = -x[0].ln() - q.iter().map(|v| v.ln()).sum::<f64>() + 3.0 * 2f64.ln();
            assert!((potential(&chart, &x).unwrap() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn flat_jet_at_center() {
        let scheme = JetScheme::default();
        let jet = jet(&FlatOrbifoldChart, &[1.0; 7], &scheme).unwrap();
        for a in 0..7 {
            assert!((jet.f1[a] + 1.0).abs() < 1e-9);
            for b in 0..7 {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((jet.f2.get(&[a, b]) - expect).abs() < 1e-8);
            }
        }
        let f3 = jet.f3.as_ref().unwrap();
        let f4 = jet.f4.as_ref().unwrap();
        assert!((f3.get(&[0, 0, 0]) + 2.0).abs() < 1e-6);
        assert!(f3.get(&[0, 0, 1]).abs() < 1e-6);
        assert!((f4.get(&[2, 2, 2, 2]) - 6.0).abs() < 1e-5);
        assert_eq!(jet.provenance[3], Provenance::FiniteDifference);
        assert_eq!(jet.provenance[1], Provenance::ClosedForm);
    }

    #[test]
    fn full_torus_hessian_signature() {
        let x = standard_phi().coeffs().to_vec();
        let fam = FullTorusFamily;
        let jet = jet_to_order(&fam, &x, &JetScheme::default(), 2).unwrap();
        let eigs = jet.f2.as_matrix().symmetric_eigenvalues();
        let pos = eigs.iter().filter(|&&e| e > 1e-6).count();
        let neg = eigs.iter().filter(|&&e| e < -1e-6).count();
        assert_eq!((pos, neg), (28, 7));
        // closed-form path agrees
        let closed = hessian_closed(&fam, &x).unwrap();
        assert!(closed.sub(&jet.f2).max_abs() < 1e-6);
        let ceigs = closed.as_matrix().symmetric_eigenvalues();
        assert_eq!(ceigs.iter().filter(|&&e| e > 1e-6).count(), 28);
    }

    #[test]
    fn hessian_closed_flat() {
        let fam = FlatOrbifoldChart;
        let center = hessian_closed(&fam, &[1.0; 7]).unwrap();
        for a in 0..7 {
            for b in 0..7 {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((center.get(&[a, b]) - expect).abs() < 1e-10);
            }
        }
        // agreement with FD and with the barrier closed form at random points
        let scheme = JetScheme::default();
        for seed in 0..20 {
            let x = flat_point(seed);
            let closed = hessian_closed(&fam, &x).unwrap();
            let jet = jet_to_order(&fam, &x, &scheme, 2).unwrap();
            assert!(closed.sub(&jet.f2).max_abs() < 1e-6);
            assert!(closed.sub(jet.closed_f2.as_ref().unwrap()).max_abs() < 1e-9);
        }
    }

    #[test]
    fn third_closed_flat() {
        let fam = FlatOrbifoldChart;
        let center = third_closed(&fam, &[1.0; 7]).unwrap();
        assert!((center.get(&[0, 0, 0]) + 2.0).abs() < 1e-9);
        let scheme = JetScheme::default();
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for seed in 0..5 {
            let x = flat_point(100 + seed);
            let t = third_closed(&fam, &x).unwrap();
            // full permutation symmetry
            for _ in 0..20 {
                let a = rng.gen_range(0..7);
                let b = rng.gen_range(0..7);
                let c = rng.gen_range(0..7);
                let base = t.get(&[a, b, c]);
                for perm in [[a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                    assert!((t.get(&perm) - base).abs() < 1e-10);
                }
            }
            // agreement with FD and the barrier closed form
            let jet = jet_to_order(&fam, &x, &scheme, 3).unwrap();
            assert!(t.sub(jet.f3.as_ref().unwrap()).max_abs() < 1e-5);
            assert!(t.sub(jet.closed_f3.as_ref().unwrap()).max_abs() < 1e-9);
        }
        assert!(third_closed(&FullTorusFamily, &standard_phi().coeffs().to_vec()).is_err());
    }

    #[test]
    fn fourth_identity_flat() {
        let fam = FlatOrbifoldChart;
        let scheme = JetScheme::default();
        let j = jet(&fam, &[1.0; 7], &scheme).unwrap();
        let rhs = fourth_rhs(&j).unwrap();
        assert!((rhs.get(&[0, 0, 0, 0]) - 6.0).abs() < 1e-9);
        let res = e_residual(&j).unwrap();
        assert!(res.residual.max_abs() < 1e-4);
        for seed in [7u64, 8] {
            let x = flat_point(seed);
            let j = jet(&fam, &x, &scheme).unwrap();
            let res = e_residual(&j).unwrap();
            assert!(res.residual.max_abs() < 1e-4);
            // Euler contraction of the residual
            assert!(res.residual.contract_last(&x).max_abs() < 1e-4);
        }
    }

    #[test]
    fn fourth_identity_t3k3() {
        let chart = T3K3Chart::standard();
        let scheme = JetScheme::default();
        for seed in [1u64, 2] {
            let x = t3k3_point_tight(&chart, seed);
            let j = jet(&chart, &x, &scheme).unwrap();
            let res = e_residual(&j).unwrap();
            assert!(res.residual.max_abs() < 1e-4, "residual {}", res.residual.max_abs());
            assert!(res.residual.contract_last(&x).max_abs() < 1e-4);
        }
    }

    #[test]
    fn geometry_flat_is_flat() {
        let fam = FlatOrbifoldChart;
        let scheme = JetScheme::default();
        for seed in [3u64, 4] {
            let x = flat_point(seed);
            let j = jet(&fam, &x, &scheme).unwrap();
            let geo = geometry(&fam, &j).unwrap();
            assert!(geo.riemann.max_abs() < 1e-6);
            assert!(geo.nabla_r.as_ref().unwrap().max_abs() < 1e-6);
        }
    }

    #[test]
    fn geometry_t3k3_locally_symmetric() {
        let chart = T3K3Chart::standard();
        let scheme = JetScheme::default();
        let x = t3k3_point(&chart, 5);
        let j = jet(&chart, &x, &scheme).unwrap();
        let geo = geometry(&chart, &j).unwrap();
        assert!(geo.riemann.max_abs() > 1e-2, "curvature should not vanish");
        assert!(geo.nabla_r.as_ref().unwrap().max_abs() < 1e-3);
        // curvature symmetries
        let n = chart.dimension();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let (a, b, c, d) = (
                rng.gen_range(0..n),
                rng.gen_range(0..n),
                rng.gen_range(0..n),
                rng.gen_range(0..n),
            );
            let r = &geo.riemann;
            let v = r.get(&[a, b, c, d]);
            assert!((v + r.get(&[b, a, c, d])).abs() < 1e-8);
            assert!((v + r.get(&[a, b, d, c])).abs() < 1e-8);
            assert!((v - r.get(&[c, d, a, b])).abs() < 1e-8);
            let bianchi =
                v + r.get(&[a, c, d, b]) + r.get(&[a, d, b, c]);
            assert!(bianchi.abs() < 1e-8);
        }
        // nonpositive sectional curvature
        for _ in 0..20 {
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!(geo.sectional(&u, &v) <= 1e-6);
        }
    }

    #[test]
    fn euler_identities_hold() {
        let scheme = JetScheme::default();
        for seed in [9u64, 10] {
            let x = flat_point(seed);
            let j = jet_to_order(&FlatOrbifoldChart, &x, &scheme, 3).unwrap();
            let rep = euler_identities(&j).unwrap();
            assert!(rep.grad_residual < 1e-8);
            assert!(rep.hessian_residual < 1e-8);
        }
        let chart = T3K3Chart::standard();
        let x = t3k3_point(&chart, 11);
        let j = jet_to_order(&chart, &x, &scheme, 3).unwrap();
        let rep = euler_identities(&j).unwrap();
        assert!(rep.grad_residual < 1e-6);
        assert!(rep.hessian_residual < 1e-6);
    }

    #[test]
    fn ray_direction_contractions() {
        // at unit-volume points G(x, x) = 7 and x^k Xi_abk = -G_ab
        let scheme = JetScheme::default();
        let fam = FlatOrbifoldChart;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..3 {
            let mut x: Vec<f64> = (0..7).map(|_| rng.gen_range(0.7..1.4)).collect();
            let vol: f64 = x.iter().product::<f64>().powf(1.0 / 3.0);
            let s = vol.powf(-3.0 / 7.0);
            for v in x.iter_mut() {
                *v *= s;
            }
            assert!((potential(&fam, &x).unwrap()).abs() < 1e-10);
            let j = jet_to_order(&fam, &x, &scheme, 3).unwrap();
            let g = j.g_matrix();
            let xv = DMatrix::from_column_slice(7, 1, &x);
            let gxx = (xv.transpose() * &g * &xv)[(0, 0)];
            assert!((gxx - 7.0).abs() < 1e-9);
            // x^k Xi_abk = -G_ab
            let xi = j.best_f3().unwrap().scale(0.5);
            let contracted = xi.contract_last(&x);
            let mut worst = 0.0f64;
            for a in 0..7 {
                for b in 0..7 {
                    worst = worst.max((contracted.get(&[a, b]) + g[(a, b)]).abs());
                }
            }
            assert!(worst < 1e-9, "worst {worst}");
        }
    }
}
