//! Model moduli charts: the 7-parameter flat-torus orbifold family, the
//! 35-parameter full flat torus family, and the cohomology-level T3 x K3
//! family with Lorentzian barrier data.

use crate::exterior::{pullback, AltForm, Endo7, Matrix7};
use crate::g2::{b_matrix, frame_of, is_positive, G2Error, G2Frame, FANO_MONOMIALS};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("point is outside the chart domain: {0}")]
    OutOfDomain(String),
    #[error("expected {expected} coordinates, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid chart data: {0}")]
    BadChart(String),
    #[error("rejection sampling failed after {0} attempts; reduce the radius")]
    SamplingFailed(usize),
    #[error(transparent)]
    G2(#[from] G2Error),
}

/// A chart on a model moduli space: coordinates, domain, and volume.
pub trait ModelFamily {
    fn name(&self) -> &str;
    /// Concrete chart access for operations that need family-specific data.
    fn as_any(&self) -> &dyn std::any::Any;
    /// Number of chart coordinates (b^3 of the model).
    fn dimension(&self) -> usize;
    fn in_domain(&self, x: &[f64]) -> bool;
    fn volume(&self, x: &[f64]) -> Result<f64, ModelError>;
    /// Whether chart points carry actual positive 3-forms (vs cohomology data).
    fn has_pointwise_forms(&self) -> bool;
    /// Whether the Hessian of -3 log Vol is positive definite on the domain.
    fn positive_definite_hessian(&self) -> bool;
}

fn check_len(x: &[f64], expected: usize) -> Result<(), ModelError> {
    if x.len() != expected {
        return Err(ModelError::Dimension {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

/// The 3-form with the given coefficients on the seven signed Fano monomials.
pub fn phi_from_fano(x: &[f64]) -> AltForm {
    let mut phi = AltForm::zero(3);
    for (&xa, (indices, sign)) in x.iter().zip(FANO_MONOMIALS) {
        phi = phi
            .add(&AltForm::monomial(&indices).scale(sign * xa))
            .unwrap();
    }
    phi
}

/// Positions of the seven Fano monomials in the lex degree-3 basis.
pub fn fano_positions() -> [usize; 7] {
    let mut out = [0usize; 7];
    for (slot, (indices, _)) in FANO_MONOMIALS.iter().enumerate() {
        let m = AltForm::monomial(indices);
        out[slot] = m.coeffs().iter().position(|&c| c != 0.0).unwrap();
    }
    out
}

/// The 7-parameter chart spanned by the signed Fano monomials; the domain is
/// the set where the resulting 3-form is positive (which on this chart
/// coincides with x > 0).
#[derive(Debug, Clone, Default)]
pub struct FlatOrbifoldChart;

impl FlatOrbifoldChart {
    pub fn phi_at(&self, x: &[f64]) -> Result<AltForm, ModelError> {
        check_len(x, 7)?;
        Ok(phi_from_fano(x))
    }

    /// Volume by the full pointwise recipe (B-matrix), bypassing the
    /// closed-form fast path. Used as the oracle for the fast path.
    pub fn vol_by_frame(&self, x: &[f64]) -> Result<f64, ModelError> {
        let phi = self.phi_at(x)?;
        let frame = frame_of(&phi).map_err(|_| {
            ModelError::OutOfDomain(format!("form at {:?} is not positive", x))
        })?;
        Ok(frame.volume_density())
    }
}

impl ModelFamily for FlatOrbifoldChart {
    fn name(&self) -> &str {
        "flat7"
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }

    fn dimension(&self) -> usize {
        7
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        // positivity alone is not enough: certain sign-flipped coordinate
        // patterns give positive forms in other components of the positive
        // cone where the chart's log coordinates break down
        x.len() == 7
            && x.iter().all(|&v| v > 0.0)
            && is_positive(&phi_from_fano(x)).unwrap_or(false)
    }

    fn volume(&self, x: &[f64]) -> Result<f64, ModelError> {
        check_len(x, 7)?;
        // on this chart positivity of the form is equivalent to x > 0
        // (exercised against the B-matrix predicate in the tests); the
        // cheap check keeps FD stencils over the potential fast
        if x.iter().any(|&v| v <= 0.0) {
            return Err(ModelError::OutOfDomain(format!(
                "form at {:?} is not positive",
                x
            )));
        }
        // closed form on this chart, confirmed against vol_by_frame
        Ok(x.iter().product::<f64>().powf(1.0 / 3.0))
    }

    fn has_pointwise_forms(&self) -> bool {
        true
    }

    fn positive_definite_hessian(&self) -> bool {
        true
    }
}

/// Volume on the flat-orbifold chart.
pub fn vol_flat(chart: &FlatOrbifoldChart, x: &[f64]) -> Result<f64, ModelError> {
    chart.volume(x)
}

/// The full 35-parameter family of constant 3-forms on the torus.
#[derive(Debug, Clone, Default)]
pub struct FullTorusFamily;

impl ModelFamily for FullTorusFamily {
    fn name(&self) -> &str {
        "full35"
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }

    fn dimension(&self) -> usize {
        35
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        x.len() == 35
            && is_positive(&AltForm::from_coeffs(3, x.to_vec())).unwrap_or(false)
    }

    fn volume(&self, x: &[f64]) -> Result<f64, ModelError> {
        check_len(x, 35)?;
        let phi = AltForm::from_coeffs(3, x.to_vec());
        let b = b_matrix(&phi)?;
        let det = b.determinant();
        if det <= 0.0 || !is_positive(&phi)? {
            return Err(ModelError::OutOfDomain(
                "form is not positive".to_string(),
            ));
        }
        Ok((det / 6f64.powi(7)).powf(1.0 / 9.0))
    }

    fn has_pointwise_forms(&self) -> bool {
        true
    }

    fn positive_definite_hessian(&self) -> bool {
        false
    }
}

/// Volume of the constant form with the given 35 lex coefficients.
pub fn vol_full_torus(x: &[f64]) -> Result<f64, ModelError> {
    FullTorusFamily.volume(x)
}

/// Cohomology-level T3 x K3 chart: one torus coordinate x0 and three
/// Lorentzian vectors a_i with Q_i of signature (1, d_i - 1).
#[derive(Debug, Clone)]
pub struct T3K3Chart {
    dims: [usize; 3],
    qs: [DMatrix<f64>; 3],
    /// Unit timelike eigenvector of each Q_i, fixing the positive component.
    positive_dirs: [DVector<f64>; 3],
}

impl T3K3Chart {
    pub fn new(dims: [usize; 3], qs: [DMatrix<f64>; 3]) -> Result<Self, ModelError> {
        let mut positive_dirs = Vec::with_capacity(3);
        for (i, (d, q)) in dims.iter().zip(&qs).enumerate() {
            if *d < 2 {
                return Err(ModelError::BadChart(format!(
                    "factor {i}: dimension must be at least 2"
                )));
            }
            if q.nrows() != *d || q.ncols() != *d {
                return Err(ModelError::BadChart(format!(
                    "factor {i}: Q must be {d}x{d}"
                )));
            }
            if (q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) {
                return Err(ModelError::BadChart(format!(
                    "factor {i}: Q must be symmetric"
                )));
            }
            let eig = q.clone().symmetric_eigen();
            let positives: Vec<usize> = (0..*d)
                .filter(|&k| eig.eigenvalues[k] > 1e-10 * eig.eigenvalues.amax())
                .collect();
            let negatives = (0..*d)
                .filter(|&k| eig.eigenvalues[k] < -1e-10 * eig.eigenvalues.amax())
                .count();
            if positives.len() != 1 || negatives != *d - 1 {
                return Err(ModelError::BadChart(format!(
                    "factor {i}: Q must have signature (1, {})",
                    d - 1
                )));
            }
            let mut dir = eig.eigenvectors.column(positives[0]).into_owned();
            // canonical sign: largest-magnitude entry positive
            let lead = dir.iter().cloned().fold(0.0f64, |m, v| {
                if v.abs() > m.abs() {
                    v
                } else {
                    m
                }
            });
            if lead < 0.0 {
                dir = -dir;
            }
            positive_dirs.push(dir);
        }
        Ok(T3K3Chart {
            dims,
            qs,
            positive_dirs: positive_dirs.try_into().unwrap(),
        })
    }

    /// Chart with the diagonal Lorentzian forms diag(1, -1, ..., -1).
    pub fn lorentz(dims: [usize; 3]) -> Result<Self, ModelError> {
        let qs: Vec<DMatrix<f64>> = dims
            .iter()
            .map(|&d| {
                let mut diag = vec![-1.0; d];
                diag[0] = 1.0;
                DMatrix::from_diagonal(&DVector::from_vec(diag))
            })
            .collect();
        T3K3Chart::new(dims, qs.try_into().unwrap())
    }

    /// The default chart: three Lorentzian 3-spaces. Dimension 3 is the
    /// smallest where each barrier factor is genuinely curved (d = 2 cones
    /// split into products of 1-d barriers and are flat).
    pub fn standard() -> Self {
        T3K3Chart::lorentz([3, 3, 3]).unwrap()
    }

    /// In-domain base point: x0 = 1, each a_i the unit timelike vector.
    pub fn standard_base(&self) -> Vec<f64> {
        let mut base = vec![1.0];
        for dir in &self.positive_dirs {
            base.extend(dir.iter());
        }
        base
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn q(&self, i: usize) -> &DMatrix<f64> {
        &self.qs[i]
    }

    /// Split a flat coordinate vector into (x0, a1, a2, a3).
    pub fn split<'a>(&self, x: &'a [f64]) -> Result<(f64, [&'a [f64]; 3]), ModelError> {
        check_len(x, self.dimension())?;
        let mut offset = 1;
        let mut parts: Vec<&[f64]> = Vec::with_capacity(3);
        for d in self.dims {
            parts.push(&x[offset..offset + d]);
            offset += d;
        }
        Ok((x[0], parts.try_into().unwrap()))
    }

    pub fn lorentz_norms(&self, x: &[f64]) -> Result<[f64; 3], ModelError> {
        let (_, parts) = self.split(x)?;
        let mut out = [0.0; 3];
        for i in 0..3 {
            let a = DVector::from_column_slice(parts[i]);
            out[i] = (a.transpose() * &self.qs[i] * &a)[(0, 0)];
        }
        Ok(out)
    }

    /// Recover the torus radii t_i and K3 volume v from (x0, q): the chart
    /// data solves x0 = t1 t2 t3 and q_i = 2 v t_i^2.
    pub fn reconstruct_radii(&self, x: &[f64]) -> Result<([f64; 3], f64), ModelError> {
        let (x0, _) = self.split(x)?;
        let q = self.lorentz_norms(x)?;
        if !self.in_domain(x) {
            return Err(ModelError::OutOfDomain(
                "reconstruct_radii needs an in-domain point".to_string(),
            ));
        }
        let v = (q[0] * q[1] * q[2]).powf(1.0 / 3.0) / (2.0 * x0.powf(2.0 / 3.0));
        let t = [
            (q[0] / (2.0 * v)).sqrt(),
            (q[1] / (2.0 * v)).sqrt(),
            (q[2] / (2.0 * v)).sqrt(),
        ];
        Ok((t, v))
    }
}

impl ModelFamily for T3K3Chart {
    fn name(&self) -> &str {
        "t3k3"
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }

    fn dimension(&self) -> usize {
        1 + self.dims.iter().sum::<usize>()
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        let Ok((x0, parts)) = self.split(x) else {
            return false;
        };
        if x0 <= 0.0 {
            return false;
        }
        for i in 0..3 {
            let a = DVector::from_column_slice(parts[i]);
            let q = (a.transpose() * &self.qs[i] * &a)[(0, 0)];
            if q <= 0.0 || a.dot(&self.positive_dirs[i]) <= 0.0 {
                return false;
            }
        }
        true
    }

    fn volume(&self, x: &[f64]) -> Result<f64, ModelError> {
        if !self.in_domain(x) {
            return Err(ModelError::OutOfDomain(format!(
                "point {:?} violates x0 > 0 or the Lorentzian cone conditions",
                x
            )));
        }
        let (x0, _) = self.split(x)?;
        let q = self.lorentz_norms(x)?;
        Ok(x0.powf(1.0 / 3.0) * (q[0] * q[1] * q[2]).powf(1.0 / 3.0) / 2.0)
    }

    fn has_pointwise_forms(&self) -> bool {
        false
    }

    fn positive_definite_hessian(&self) -> bool {
        true
    }
}

/// Volume on the T3 x K3 chart at the point (x0, a1, a2, a3).
pub fn vol_t3k3(
    chart: &T3K3Chart,
    x0: f64,
    a1: &[f64],
    a2: &[f64],
    a3: &[f64],
) -> Result<f64, ModelError> {
    let mut x = vec![x0];
    x.extend_from_slice(a1);
    x.extend_from_slice(a2);
    x.extend_from_slice(a3);
    chart.volume(&x)
}

/// The flat chart's frame and harmonic data at a point: the seven constant
/// monomial representatives and the endomorphisms solving h . phi = eta.
pub struct HarmonicFrame {
    pub frame: G2Frame,
    pub etas: Vec<AltForm>,
    pub hs: Vec<Endo7>,
}

pub fn harmonic_frame(chart: &FlatOrbifoldChart, x: &[f64]) -> Result<HarmonicFrame, ModelError> {
    let phi = chart.phi_at(x)?;
    let frame = frame_of(&phi).map_err(|_| {
        ModelError::OutOfDomain(format!("form at {:?} is not positive", x))
    })?;
    let etas: Vec<AltForm> = FANO_MONOMIALS
        .iter()
        .map(|(indices, sign)| AltForm::monomial(indices).scale(*sign))
        .collect();
    let hs = etas
        .iter()
        .map(|eta| frame.solve_h(eta))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HarmonicFrame { frame, etas, hs })
}

/// Deterministic in-domain sample within the given sup-norm radius of base.
pub fn sample_near(
    family: &dyn ModelFamily,
    base: &[f64],
    radius: f64,
    seed: u64,
) -> Result<Vec<f64>, ModelError> {
    if !family.in_domain(base) {
        return Err(ModelError::OutOfDomain(
            "base point is outside the chart domain".to_string(),
        ));
    }
    if radius == 0.0 {
        return Ok(base.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const MAX_ATTEMPTS: usize = 10_000;
    for _ in 0..MAX_ATTEMPTS {
        let candidate: Vec<f64> = base
            .iter()
            .map(|&b| b + rng.gen_range(-radius..radius))
            .collect();
        if family.in_domain(&candidate) {
            return Ok(candidate);
        }
    }
    Err(ModelError::SamplingFailed(MAX_ATTEMPTS))
}

/// Chart selection loadable from JSON:
/// {"model": "flat7" | "full35" | "t3k3", "t3k3": {"dims": [...], "Q": [...], "base": [...]}}
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t3k3: Option<T3K3Spec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct T3K3Spec {
    pub dims: [usize; 3],
    #[serde(rename = "Q")]
    pub q: [Vec<Vec<f64>>; 3],
    pub base: Vec<f64>,
}

/// A constructed model together with its default base point.
pub enum Model {
    Flat7(FlatOrbifoldChart),
    Full35(FullTorusFamily),
    T3K3(T3K3Chart),
}

impl Model {
    pub fn family(&self) -> &dyn ModelFamily {
        match self {
            Model::Flat7(c) => c,
            Model::Full35(c) => c,
            Model::T3K3(c) => c,
        }
    }
}

impl ChartSpec {
    pub fn flat7() -> Self {
        ChartSpec {
            model: "flat7".to_string(),
            t3k3: None,
        }
    }

    pub fn build(&self) -> Result<(Model, Vec<f64>), ModelError> {
        match self.model.as_str() {
            "flat7" => Ok((Model::Flat7(FlatOrbifoldChart), vec![1.0; 7])),
            "full35" => {
                let base = phi_from_fano(&[1.0; 7]).coeffs().to_vec();
                Ok((Model::Full35(FullTorusFamily), base))
            }
            "t3k3" => match &self.t3k3 {
                Some(spec) => {
                    let qs: Vec<DMatrix<f64>> = spec
                        .q
                        .iter()
                        .zip(spec.dims)
                        .map(|(rows, d)| {
                            let flat: Vec<f64> =
                                rows.iter().flat_map(|r| r.iter().copied()).collect();
                            if flat.len() != d * d {
                                return Err(ModelError::BadChart(format!(
                                    "Q entry has {} elements, expected {}",
                                    flat.len(),
                                    d * d
                                )));
                            }
                            Ok(DMatrix::from_row_slice(d, d, &flat))
                        })
                        .collect::<Result<_, _>>()?;
                    let chart = T3K3Chart::new(spec.dims, qs.try_into().unwrap())?;
                    if spec.base.len() != chart.dimension() {
                        return Err(ModelError::Dimension {
                            expected: chart.dimension(),
                            got: spec.base.len(),
                        });
                    }
                    if !chart.in_domain(&spec.base) {
                        return Err(ModelError::OutOfDomain(
                            "configured base point is outside the chart domain".to_string(),
                        ));
                    }
                    let base = spec.base.clone();
                    Ok((Model::T3K3(chart), base))
                }
                None => {
                    let chart = T3K3Chart::standard();
                    let base = chart.standard_base();
                    Ok((Model::T3K3(chart), base))
                }
            },
            other => Err(ModelError::BadChart(format!("unknown model '{other}'"))),
        }
    }
}

/// Pullback covariance helper: coefficients of A* phi for a linear map A.
pub fn pullback_coeffs(a: &Matrix7, phi: &AltForm) -> Vec<f64> {
    pullback(a, phi).coeffs().to_vec()
}
