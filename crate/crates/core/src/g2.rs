//! Pointwise G2 algebra: positivity of 3-forms, the induced metric, volume
//! density and dual 4-form, type projections, and the endomorphism solve
//! h . phi = eta.

use crate::exterior::{
    binomial, delta_action, hodge_star, interior, lambda_inner, wedge, AltForm, Endo7,
    ExteriorError, Matrix7, Metric7, Vector7, DIM,
};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum G2Error {
    #[error("expected a form of degree {expected}, got {got}")]
    WrongDegree { expected: usize, got: usize },
    #[error("form is not positive")]
    NotPositive,
    #[error("singular solve in frame construction")]
    SingularSolve,
    #[error(transparent)]
    Exterior(#[from] ExteriorError),
}

/// Relative eigenvalue threshold certifying positivity of the B-matrix.
const POSITIVITY_TOL: f64 = 1e-10;

/// The standard positive 3-form, written on the seven Fano monomials:
/// e123 + e145 + e167 + e246 - e257 - e347 - e356.
pub fn standard_phi() -> AltForm {
    let mut phi = AltForm::zero(3);
    for (indices, sign) in FANO_MONOMIALS {
        phi = phi.add(&AltForm::monomial(&indices).scale(sign)).unwrap();
    }
    phi
}

/// The seven signed coordinate monomials spanning the flat-orbifold chart.
pub const FANO_MONOMIALS: [([u8; 3], f64); 7] = [
    ([1, 2, 3], 1.0),
    ([1, 4, 5], 1.0),
    ([1, 6, 7], 1.0),
    ([2, 4, 6], 1.0),
    ([2, 5, 7], -1.0),
    ([3, 4, 7], -1.0),
    ([3, 5, 6], -1.0),
];

/// B_{ij} e^{1..7} = (e_i . phi) ^ (e_j . phi) ^ phi. For a positive form
/// B = 6 vol g, which is the positivity certificate.
pub fn b_matrix(form: &AltForm) -> Result<Matrix7, G2Error> {
    if form.degree() != 3 {
        return Err(G2Error::WrongDegree {
            expected: 3,
            got: form.degree(),
        });
    }
    let contractions: Vec<AltForm> = (0..DIM)
        .map(|i| {
            let v = Vector7::from_fn(|r, _| if r == i { 1.0 } else { 0.0 });
            interior(&v, form).unwrap()
        })
        .collect();
    let mut b = Matrix7::zeros();
    for i in 0..DIM {
        for j in i..DIM {
            let w = wedge(&wedge(&contractions[i], &contractions[j]).unwrap(), form).unwrap();
            b[(i, j)] = w.coeffs()[0];
            b[(j, i)] = b[(i, j)];
        }
    }
    Ok(b)
}

/// A positive 3-form is one whose B-matrix is symmetric positive definite.
pub fn is_positive(form: &AltForm) -> Result<bool, G2Error> {
    let b = b_matrix(form)?;
    let eigs = b.symmetric_eigenvalues();
    let scale = eigs.amax();
    Ok(eigs.min() > POSITIVITY_TOL * scale.max(f64::MIN_POSITIVE))
}

/// A degree-3 form together with its positivity certificate.
#[derive(Debug, Clone)]
pub struct PositiveForm {
    form: AltForm,
    b: Matrix7,
}

impl PositiveForm {
    pub fn new(form: AltForm) -> Result<Self, G2Error> {
        let b = b_matrix(&form)?;
        let eigs = b.symmetric_eigenvalues();
        if eigs.min() <= POSITIVITY_TOL * eigs.amax().max(f64::MIN_POSITIVE) {
            return Err(G2Error::NotPositive);
        }
        Ok(PositiveForm { form, b })
    }

    pub fn form(&self) -> &AltForm {
        &self.form
    }

    pub fn b(&self) -> &Matrix7 {
        &self.b
    }
}

/// Which irreducible component to project onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeComponent {
    /// Multiples of phi inside degree-3 forms.
    L3_1,
    /// The 7-dimensional component of degree-3 forms.
    L3_7,
    /// The 27-dimensional component of degree-3 forms.
    L3_27,
    /// The 7-dimensional component of degree-2 forms.
    L2_7,
    /// The 14-dimensional component of degree-2 forms (the Lie algebra of G2).
    L2_14,
}

impl TypeComponent {
    pub fn degree(self) -> usize {
        match self {
            TypeComponent::L3_1 | TypeComponent::L3_7 | TypeComponent::L3_27 => 3,
            TypeComponent::L2_7 | TypeComponent::L2_14 => 2,
        }
    }
}

/// A positive 3-form bundled with everything it canonically determines.
#[derive(Debug, Clone)]
pub struct G2Frame {
    phi: PositiveForm,
    metric: Metric7,
    volume_density: f64,
    theta: AltForm,
    p1: DMatrix<f64>,
    p7: DMatrix<f64>,
    p27: DMatrix<f64>,
    q7: DMatrix<f64>,
    q14: DMatrix<f64>,
    /// Gram matrix of the degree-3 monomial basis under the induced metric.
    gram3: DMatrix<f64>,
}

/// Gram matrix of the full monomial basis of degree k under g.
fn basis_gram(g: &Metric7, degree: usize) -> DMatrix<f64> {
    let n = binomial(DIM, degree);
    // orthonormal-coframe coordinates of each basis monomial
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut coeffs = vec![0.0; n];
        coeffs[j] = 1.0;
        let ortho = g.to_orthonormal(&AltForm::from_coeffs(degree, coeffs));
        for i in 0..n {
            m[(i, j)] = ortho.coeffs()[i];
        }
    }
    m.transpose() * m
}

/// g-orthogonal projector onto the span of the given forms, as a matrix on
/// coefficient arrays: P = V (V^T W V)^{-1} V^T W.
fn span_projector(
    spanning: &[AltForm],
    gram: &DMatrix<f64>,
) -> Result<DMatrix<f64>, G2Error> {
    let n = gram.nrows();
    let k = spanning.len();
    let mut v = DMatrix::<f64>::zeros(n, k);
    for (j, f) in spanning.iter().enumerate() {
        for i in 0..n {
            v[(i, j)] = f.coeffs()[i];
        }
    }
    let small = v.transpose() * gram * &v;
    let inv = small.try_inverse().ok_or(G2Error::SingularSolve)?;
    Ok(&v * inv * v.transpose() * gram)
}

fn apply(p: &DMatrix<f64>, a: &AltForm) -> AltForm {
    let x = DVector::from_column_slice(a.coeffs());
    AltForm::from_coeffs(a.degree(), (p * x).as_slice().to_vec())
}

impl G2Frame {
    pub fn new(phi: PositiveForm) -> Result<Self, G2Error> {
        let b = *phi.b();
        // det B = 6^7 vol^9, and g = B / (6 vol)
        let det_b = b.determinant();
        let volume_density = (det_b / 6f64.powi(7)).powf(1.0 / 9.0);
        let metric = Metric7::new(b / (6.0 * volume_density))
            .map_err(|_| G2Error::NotPositive)?;
        let theta = hodge_star(&metric, phi.form());

        let gram3 = basis_gram(&metric, 3);
        let gram2 = basis_gram(&metric, 2);

        // pi_1: eta -> (<eta, phi> / 7) phi
        let n3 = binomial(DIM, 3);
        let phi_vec = DVector::from_column_slice(phi.form().coeffs());
        let p1 = &phi_vec * (phi_vec.transpose() * &gram3) / 7.0;

        let basis_vectors: Vec<Vector7> = (0..DIM)
            .map(|i| Vector7::from_fn(|r, _| if r == i { 1.0 } else { 0.0 }))
            .collect();
        let span7_3: Vec<AltForm> = basis_vectors
            .iter()
            .map(|v| interior(v, &theta).unwrap())
            .collect();
        let p7 = span_projector(&span7_3, &gram3)?;
        let p27 = DMatrix::identity(n3, n3) - &p1 - &p7;

        let span7_2: Vec<AltForm> = basis_vectors
            .iter()
            .map(|v| interior(v, phi.form()).unwrap())
            .collect();
        let q7 = span_projector(&span7_2, &gram2)?;
        let n2 = binomial(DIM, 2);
        let q14 = DMatrix::identity(n2, n2) - &q7;

        Ok(G2Frame {
            phi,
            metric,
            volume_density,
            theta,
            p1,
            p7,
            p27,
            q7,
            q14,
            gram3,
        })
    }

    pub fn phi(&self) -> &AltForm {
        self.phi.form()
    }

    pub fn metric(&self) -> &Metric7 {
        &self.metric
    }

    pub fn volume_density(&self) -> f64 {
        self.volume_density
    }

    pub fn theta(&self) -> &AltForm {
        &self.theta
    }

    pub fn projector(&self, component: TypeComponent) -> &DMatrix<f64> {
        match component {
            TypeComponent::L3_1 => &self.p1,
            TypeComponent::L3_7 => &self.p7,
            TypeComponent::L3_27 => &self.p27,
            TypeComponent::L2_7 => &self.q7,
            TypeComponent::L2_14 => &self.q14,
        }
    }

    pub fn project(&self, a: &AltForm, component: TypeComponent) -> Result<AltForm, G2Error> {
        if a.degree() != component.degree() {
            return Err(G2Error::WrongDegree {
                expected: component.degree(),
                got: a.degree(),
            });
        }
        Ok(apply(self.projector(component), a))
    }

    /// Inner product of forms in the induced metric.
    pub fn inner(&self, a: &AltForm, b: &AltForm) -> Result<f64, G2Error> {
        Ok(lambda_inner(&self.metric, a, b)?)
    }

    pub fn star(&self, a: &AltForm) -> AltForm {
        hodge_star(&self.metric, a)
    }

    /// The 35 endomorphisms spanning the complement of the Lambda^2_14 copy
    /// inside End(R^7): g-symmetric endomorphisms plus the Lambda^2_7 copy
    /// {v . phi interpreted as g-antisymmetric endomorphism}.
    fn solve_basis(&self) -> Vec<Endo7> {
        let ginv = self.metric.gram().try_inverse().expect("metric invertible");
        let mut basis = Vec::with_capacity(35);
        // 28 g-symmetric endomorphisms h = g^{-1} S
        for i in 0..DIM {
            for j in i..DIM {
                let mut s = Matrix7::zeros();
                s[(i, j)] = 1.0;
                s[(j, i)] = 1.0;
                basis.push(ginv * s);
            }
        }
        // 7 antisymmetric endomorphisms from the 2-forms e_i . phi
        let pairs = AltForm::basis_indices(2);
        for i in 0..DIM {
            let v = Vector7::from_fn(|r, _| if r == i { 1.0 } else { 0.0 });
            let omega = interior(&v, self.phi.form()).unwrap();
            let mut w = Matrix7::zeros();
            for (mi, &c) in pairs.iter().zip(omega.coeffs()) {
                let (a, b) = (mi.indices()[0] as usize - 1, mi.indices()[1] as usize - 1);
                w[(a, b)] = c;
                w[(b, a)] = -c;
            }
            basis.push(ginv * w);
        }
        basis
    }

    /// The unique endomorphism h orthogonal to the Lambda^2_14 copy with
    /// h . phi = eta.
    pub fn solve_h(&self, eta: &AltForm) -> Result<Endo7, G2Error> {
        if eta.degree() != 3 {
            return Err(G2Error::WrongDegree {
                expected: 3,
                got: eta.degree(),
            });
        }
        let basis = self.solve_basis();
        let n3 = binomial(DIM, 3);
        let mut m = DMatrix::<f64>::zeros(n3, basis.len());
        for (j, h) in basis.iter().enumerate() {
            let img = delta_action(h, self.phi.form());
            for i in 0..n3 {
                m[(i, j)] = img.coeffs()[i];
            }
        }
        let rhs = DVector::from_column_slice(eta.coeffs());
        let lu = m.lu();
        let c = lu.solve(&rhs).ok_or(G2Error::SingularSolve)?;
        let mut h = Endo7::zeros();
        for (j, b) in basis.iter().enumerate() {
            h += b * c[j];
        }
        Ok(h)
    }

    /// First variation of the dual 4-form along eta:
    /// (4/3) *pi_1(eta) + *pi_7(eta) - *pi_27(eta).
    pub fn theta_first_variation(&self, eta: &AltForm) -> Result<AltForm, G2Error> {
        let p1 = self.project(eta, TypeComponent::L3_1)?;
        let p7 = self.project(eta, TypeComponent::L3_7)?;
        let p27 = self.project(eta, TypeComponent::L3_27)?;
        Ok(self
            .star(&p1)
            .scale(4.0 / 3.0)
            .add(&self.star(&p7))?
            .sub(&self.star(&p27))?)
    }

    pub fn gram3(&self) -> &DMatrix<f64> {
        &self.gram3
    }
}

/// Convenience constructor: frame of a raw degree-3 form.
pub fn frame_of(form: &AltForm) -> Result<G2Frame, G2Error> {
    G2Frame::new(PositiveForm::new(form.clone())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::{metric_adjoint, pullback};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_form3(rng: &mut impl Rng, scale: f64) -> AltForm {
        AltForm::from_coeffs(3, (0..35).map(|_| rng.gen_range(-scale..scale)).collect())
    }

    /// A random positive form: a small perturbation of a random pullback of
    /// the standard form.
    fn random_positive(rng: &mut impl Rng) -> AltForm {
        let a = Matrix7::from_fn(|_, _| rng.gen_range(-0.3..0.3)) + Matrix7::identity();
        pullback(&a, &standard_phi())
            .add(&random_form3(rng, 0.05))
            .unwrap()
    }

    #[test]
    fn standard_form_is_positive() {
        assert!(is_positive(&standard_phi()).unwrap());
        assert!(!is_positive(&standard_phi().scale(-1.0)).unwrap());
        assert!(!is_positive(&AltForm::monomial(&[1, 2, 3])).unwrap());
    }

    #[test]
    fn frame_at_standard_form() {
        let frame = frame_of(&standard_phi()).unwrap();
        assert!((frame.metric().gram() - Matrix7::identity()).abs().max() < 1e-12);
        assert_abs_diff_eq!(frame.volume_density(), 1.0, epsilon = 1e-12);
        let phi = standard_phi();
        assert_abs_diff_eq!(frame.inner(&phi, &phi).unwrap(), 7.0, epsilon = 1e-10);
    }

    #[test]
    fn frame_norm_and_wedge_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..10 {
            let phi = random_positive(&mut rng);
            let frame = frame_of(&phi).unwrap();
            let scale = frame.inner(&phi, &phi).unwrap();
            assert!((scale - 7.0).abs() < 1e-9);
            // phi ^ theta = 7 mu
            let w = wedge(&phi, frame.theta()).unwrap();
            let mu = 7.0 * frame.volume_density();
            assert!((w.coeffs()[0] - mu).abs() < 1e-9 * mu.abs());
        }
    }

    #[test]
    fn dilation_equivariance() {
        let lambda = 1.7f64;
        let frame = frame_of(&standard_phi().scale(lambda.powi(3))).unwrap();
        assert!(
            (frame.metric().gram() - Matrix7::identity() * lambda * lambda)
                .abs()
                .max()
                < 1e-10
        );
    }

    #[test]
    fn gl_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let mut a = Matrix7::from_fn(|_, _| rng.gen_range(-0.4..0.4)) + Matrix7::identity();
            if a.determinant() < 0.0 {
                a = -a;
            }
            let base = frame_of(&standard_phi()).unwrap();
            let frame = frame_of(&pullback(&a, &standard_phi())).unwrap();
            let expected = a.transpose() * base.metric().gram() * a;
            assert!((frame.metric().gram() - expected).abs().max() < 1e-9);
            assert!(
                (frame.volume_density() - a.determinant() * base.volume_density()).abs() < 1e-9
            );
        }
    }

    #[test]
    fn projector_resolution_of_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let frame = frame_of(&random_positive(&mut rng)).unwrap();
        for _ in 0..5 {
            let eta = random_form3(&mut rng, 1.0);
            let p1 = frame.project(&eta, TypeComponent::L3_1).unwrap();
            let p7 = frame.project(&eta, TypeComponent::L3_7).unwrap();
            let p27 = frame.project(&eta, TypeComponent::L3_27).unwrap();
            let sum = p1.add(&p7).unwrap().add(&p27).unwrap();
            assert!(sum.sub(&eta).unwrap().norm_inf() < 1e-10);
            assert!(frame.inner(&p1, &p7).unwrap().abs() < 1e-10);
            assert!(frame.inner(&p1, &p27).unwrap().abs() < 1e-10);
            assert!(frame.inner(&p7, &p27).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn projector_ranks() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let frame = frame_of(&random_positive(&mut rng)).unwrap();
        let rank = |p: &DMatrix<f64>| {
            p.clone()
                .svd(false, false)
                .singular_values
                .iter()
                .filter(|&&s| s > 1e-8)
                .count()
        };
        assert_eq!(rank(frame.projector(TypeComponent::L3_1)), 1);
        assert_eq!(rank(frame.projector(TypeComponent::L3_7)), 7);
        assert_eq!(rank(frame.projector(TypeComponent::L3_27)), 27);
        assert_eq!(rank(frame.projector(TypeComponent::L2_7)), 7);
        assert_eq!(rank(frame.projector(TypeComponent::L2_14)), 14);
    }

    #[test]
    fn project_examples_at_standard_form() {
        let frame = frame_of(&standard_phi()).unwrap();
        let phi = standard_phi();
        let p1 = frame.project(&phi, TypeComponent::L3_1).unwrap();
        assert!(p1.sub(&phi).unwrap().norm_inf() < 1e-10);
        let p7 = frame
            .project(&AltForm::monomial(&[1, 4, 5]), TypeComponent::L3_7)
            .unwrap();
        assert!(p7.norm_inf() < 1e-10);
    }

    #[test]
    fn solve_h_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let phi = random_positive(&mut rng);
        let frame = frame_of(&phi).unwrap();
        // eta = phi -> h = I/3
        let h = frame.solve_h(&phi).unwrap();
        assert!((h - Endo7::identity() / 3.0).abs().max() < 1e-9);
        // round trip on g-symmetric endomorphisms
        for _ in 0..5 {
            let s = Matrix7::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let h0 = (s + metric_adjoint(frame.metric(), &s)) * 0.5;
            let eta = delta_action(&h0, &phi);
            let h = frame.solve_h(&eta).unwrap();
            assert!((h - h0).abs().max() < 1e-9);
        }
        // pi_7(eta) = 0 implies h symmetric
        for _ in 0..5 {
            let eta = random_form3(&mut rng, 1.0);
            let eta = frame
                .project(&eta, TypeComponent::L3_1)
                .unwrap()
                .add(&frame.project(&eta, TypeComponent::L3_27).unwrap())
                .unwrap();
            let h = frame.solve_h(&eta).unwrap();
            let asym = h - metric_adjoint(frame.metric(), &h);
            assert!(asym.abs().max() < 1e-9);
        }
    }

    #[test]
    fn lambda2_14_is_solve_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let phi = random_positive(&mut rng);
        let frame = frame_of(&phi).unwrap();
        let ginv = frame.metric().gram().try_inverse().unwrap();
        let pairs = AltForm::basis_indices(2);
        // image of Q14 on random 2-forms, as antisymmetric endomorphisms
        let mut kernel_dim = 0;
        let mut images: Vec<DVector<f64>> = Vec::new();
        for _ in 0..30 {
            let omega = AltForm::from_coeffs(2, (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let chi = frame.project(&omega, TypeComponent::L2_14).unwrap();
            let mut w = Matrix7::zeros();
            for (mi, &c) in pairs.iter().zip(chi.coeffs()) {
                let (a, b) = (mi.indices()[0] as usize - 1, mi.indices()[1] as usize - 1);
                w[(a, b)] = c;
                w[(b, a)] = -c;
            }
            let h = ginv * w;
            assert!(delta_action(&h, &phi).norm_inf() < 1e-9);
            images.push(DVector::from_column_slice(h.as_slice()));
            kernel_dim += 1;
        }
        assert_eq!(kernel_dim, 30);
        // the kernel has dimension 14
        let mut m = DMatrix::<f64>::zeros(49, images.len());
        for (j, v) in images.iter().enumerate() {
            m.set_column(j, v);
        }
        let rank = m
            .svd(false, false)
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-8)
            .count();
        assert_eq!(rank, 14);
    }

    #[test]
    fn theta_variation_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let phi0 = standard_phi();
        let frame = frame_of(&phi0).unwrap();
        // pure Lambda^3_1 input
        let var = frame.theta_first_variation(&phi0).unwrap();
        assert!(var
            .sub(&frame.theta().scale(4.0 / 3.0))
            .unwrap()
            .norm_inf()
            < 1e-10);
        // Lambda^3_27 input gives -*eta
        let eta = frame
            .project(&random_form3(&mut rng, 1.0), TypeComponent::L3_27)
            .unwrap();
        let var = frame.theta_first_variation(&eta).unwrap();
        assert!(var.add(&frame.star(&eta)).unwrap().norm_inf() < 1e-10);
        // FD oracle on random eta
        for _ in 0..3 {
            let eta = random_form3(&mut rng, 1.0);
            let step = 1e-4;
            let theta_at = |t: f64| {
                frame_of(&phi0.add(&eta.scale(t)).unwrap())
                    .unwrap()
                    .theta()
                    .clone()
            };
            let d1 = theta_at(step).sub(&theta_at(-step)).unwrap().scale(0.5 / step);
            let d2 = theta_at(step / 2.0)
                .sub(&theta_at(-step / 2.0))
                .unwrap()
                .scale(1.0 / step);
            let fd = d2.scale(4.0 / 3.0).sub(&d1.scale(1.0 / 3.0)).unwrap();
            let exact = frame.theta_first_variation(&eta).unwrap();
            assert!(fd.sub(&exact).unwrap().norm_inf() < 1e-5);
        }
    }

    #[test]
    fn yukawa_cubic_fully_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let phi = random_positive(&mut rng);
        let frame = frame_of(&phi).unwrap();
        let g = frame.metric();
        let rand_sym = |rng: &mut ChaCha8Rng| {
            let s = Matrix7::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            (s + metric_adjoint(g, &s)) * 0.5
        };
        let h1 = rand_sym(&mut rng);
        let h2 = rand_sym(&mut rng);
        let h3 = rand_sym(&mut rng);
        let cubic = |a: &Endo7, b: &Endo7, c: &Endo7| {
            frame
                .inner(
                    &delta_action(c, &delta_action(a, &phi)),
                    &delta_action(b, &phi),
                )
                .unwrap()
        };
        let base = cubic(&h1, &h2, &h3);
        for val in [
            cubic(&h2, &h1, &h3),
            cubic(&h3, &h2, &h1),
            cubic(&h1, &h3, &h2),
            cubic(&h3, &h1, &h2),
            cubic(&h2, &h3, &h1),
        ] {
            assert!((val - base).abs() < 1e-10 * base.abs().max(1.0));
        }
    }
}
