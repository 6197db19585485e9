//! The period domain D of graded decompositions of H = H3 + H4, its
//! metric and distributions, the immersion of the flat model chart, and
//! the associated pullback, second-fundamental-form, and contact checks.

use crate::exterior::{hodge_star, lambda_inner, AltForm, ExteriorError};
use crate::g2::{frame_of, G2Error, FANO_MONOMIALS};
use crate::models::{harmonic_frame, FlatOrbifoldChart, ModelError, ModelFamily};
use crate::moduli::{closed_partials, e_residual, jet, JetScheme, ModuliError, Tensor};
use nalgebra::{DMatrix, DVector};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PeriodError {
    #[error("expected block dimensions {expected:?}, got {got:?}")]
    BlockDims { expected: Vec<usize>, got: Vec<usize> },
    #[error("degenerate data in {0}")]
    Degenerate(String),
    #[error("tangent vector is not transverse (residual {0:.3e})")]
    NotTransverse(f64),
    #[error("point fails validation (residual {0:.3e})")]
    InvalidPoint(f64),
    #[error("chart escape: the affine coordinate w0 vanishes")]
    ChartEscape,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Moduli(#[from] ModuliError),
    #[error(transparent)]
    G2(#[from] G2Error),
    #[error(transparent)]
    Exterior(#[from] ExteriorError),
}

/// H = H3 + H4 with the cup-product symplectic form in Darboux form and
/// the grading involution iota = +1 on H3, -1 on H4. Coordinates: the
/// first n+1 entries are H3 components, the last n+1 are H4 components.
#[derive(Debug, Clone)]
pub struct SymplecticSpace {
    n: usize,
}

impl SymplecticSpace {
    pub fn new(n: usize) -> Self {
        SymplecticSpace { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * (self.n + 1)
    }

    /// Q(u + v, u' + v') = sum u_i v'_i - u'_i v_i.
    pub fn q(&self, w: &DVector<f64>, wp: &DVector<f64>) -> f64 {
        let m = self.n + 1;
        (0..m).map(|i| w[i] * wp[m + i] - wp[i] * w[m + i]).sum()
    }

    pub fn iota(&self, w: &DVector<f64>) -> DVector<f64> {
        let m = self.n + 1;
        DVector::from_fn(self.dim(), |i, _| if i < m { w[i] } else { -w[i] })
    }

    pub fn q_matrix(&self) -> DMatrix<f64> {
        let m = self.n + 1;
        let mut q = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            q[(i, m + i)] = 1.0;
            q[(m + i, i)] = -1.0;
        }
        q
    }
}

/// A point of D: bases of the four blocks H^(3), H^(2), H^(1), H^(0),
/// of dimensions 1, n, n, 1, as columns in the ambient coordinates.
#[derive(Debug, Clone)]
pub struct HodgePoint {
    pub h3: DMatrix<f64>,
    pub h2: DMatrix<f64>,
    pub h1: DMatrix<f64>,
    pub h0: DMatrix<f64>,
}

impl HodgePoint {
    fn blocks(&self) -> [&DMatrix<f64>; 4] {
        // index p -> H^(3-p)? keep natural order H^(3), H^(2), H^(1), H^(0)
        [&self.h3, &self.h2, &self.h1, &self.h0]
    }

    /// Full basis matrix [h3 | h2 | h1 | h0].
    fn full(&self) -> DMatrix<f64> {
        let rows = self.h3.nrows();
        let cols = self.h3.ncols() + self.h2.ncols() + self.h1.ncols() + self.h0.ncols();
        let mut m = DMatrix::zeros(rows, cols);
        let mut off = 0;
        for b in self.blocks() {
            m.view_mut((0, off), (rows, b.ncols())).copy_from(b);
            off += b.ncols();
        }
        m
    }

    /// Components of w in the four blocks.
    pub fn split(&self, w: &DVector<f64>) -> Result<[DVector<f64>; 4], PeriodError> {
        let full = self.full();
        let lu = full.clone().lu();
        let c = lu
            .solve(w)
            .ok_or_else(|| PeriodError::Degenerate("block basis".to_string()))?;
        let mut out = Vec::with_capacity(4);
        let mut off = 0;
        for b in self.blocks() {
            let k = b.ncols();
            let mut part = DVector::zeros(w.nrows());
            for j in 0..k {
                part += b.column(j) * c[off + j];
            }
            out.push(part);
            off += k;
        }
        Ok(out.try_into().unwrap())
    }

    /// Projection of w onto H^(p).
    pub fn project(&self, w: &DVector<f64>, p: usize) -> Result<DVector<f64>, PeriodError> {
        let parts = self.split(w)?;
        Ok(parts[3 - p].clone())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let dump = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.ncols())
                .map(|j| m.column(j).iter().cloned().collect())
                .collect()
        };
        json!({
            "H3_block": dump(&self.h3),
            "H2_block": dump(&self.h2),
            "H1_block": dump(&self.h1),
            "H0_block": dump(&self.h0),
        })
    }
}

fn orthogonal_projector(basis: &DMatrix<f64>) -> Result<DMatrix<f64>, PeriodError> {
    let gram = basis.transpose() * basis;
    let inv = gram
        .try_inverse()
        .ok_or_else(|| PeriodError::Degenerate("subspace basis".to_string()))?;
    Ok(basis * inv * basis.transpose())
}

/// Residuals of the defining properties (1)-(3) of a decomposition.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub max_residual: f64,
    pub iota_residual: f64,
    pub orthogonality_residual: f64,
    pub definiteness_residual: f64,
}

impl ValidationReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual <= tol
    }
}

pub fn validate_point(
    space: &SymplecticSpace,
    point: &HodgePoint,
) -> Result<ValidationReport, PeriodError> {
    let n = space.n;
    let expected = vec![1, n, n, 1];
    let got = vec![
        point.h3.ncols(),
        point.h2.ncols(),
        point.h1.ncols(),
        point.h0.ncols(),
    ];
    if expected != got || point.h3.nrows() != space.dim() {
        return Err(PeriodError::BlockDims { expected, got });
    }
    // (1) iota swaps H^(p) and H^(3-p)
    let mut iota_residual = 0.0f64;
    for (a, b) in [(&point.h3, &point.h0), (&point.h2, &point.h1)] {
        let pb = orthogonal_projector(b)?;
        for j in 0..a.ncols() {
            let w = space.iota(&a.column(j).into_owned());
            let diff = &w - &pb * &w;
            iota_residual = iota_residual.max(diff.amax() / w.amax().max(1e-300));
        }
    }
    // (2) cross-block Q(iota ., .) orthogonality and signed definiteness
    let blocks = point.blocks();
    let mut orthogonality_residual = 0.0f64;
    let mut definiteness_residual = 0.0f64;
    for bi in 0..4 {
        for bj in 0..4 {
            let (a, b) = (blocks[bi], blocks[bj]);
            let mut gram = DMatrix::zeros(a.ncols(), b.ncols());
            for i in 0..a.ncols() {
                let iw = space.iota(&a.column(i).into_owned());
                for j in 0..b.ncols() {
                    gram[(i, j)] = space.q(&iw, &b.column(j).into_owned());
                }
            }
            let scale = |m: &DMatrix<f64>| m.amax().max(1e-300);
            if bi != bj {
                orthogonality_residual = orthogonality_residual
                    .max(gram.amax() / (scale(a) * scale(b)));
            } else {
                // p = 3 - bi; needs (-1)^{p+1} * gram positive definite
                let p = 3 - bi;
                let sign = if (p + 1) % 2 == 0 { 1.0 } else { -1.0 };
                let signed = gram.map(|v| sign * v);
                let min_eig = signed.symmetric_eigenvalues().min();
                definiteness_residual =
                    definiteness_residual.max((-min_eig).max(0.0) / (scale(a) * scale(a)));
            }
        }
    }
    // (3) the blocks must jointly span H
    let full = point.full();
    let sv = full.svd(false, false).singular_values;
    let span_residual = if sv.min() < 1e-9 * sv.max() { 1.0 } else { 0.0 };
    let max_residual = iota_residual
        .max(orthogonality_residual)
        .max(definiteness_residual)
        .max(span_residual);
    Ok(ValidationReport {
        max_residual,
        iota_residual,
        orthogonality_residual,
        definiteness_residual,
    })
}

/// Apply iota to every block (gives another valid point).
pub fn iota_point(space: &SymplecticSpace, point: &HodgePoint) -> HodgePoint {
    let map = |m: &DMatrix<f64>| {
        let mut out = m.clone();
        for j in 0..m.ncols() {
            out.set_column(j, &space.iota(&m.column(j).into_owned()));
        }
        out
    };
    // iota swaps H^(3) <-> H^(0) and H^(2) <-> H^(1)
    HodgePoint {
        h3: map(&point.h0),
        h2: map(&point.h1),
        h1: map(&point.h2),
        h0: map(&point.h3),
    }
}

/// The line ell and inner product q_H of a decomposition: ell is spanned by
/// w + iota(w) for w in H^(3); q_H(u) = 2Q(pi0 u, pi3 u) - 2Q(pi1 u, pi2 u).
pub fn pair_iso(
    space: &SymplecticSpace,
    point: &HodgePoint,
) -> Result<(DVector<f64>, DMatrix<f64>), PeriodError> {
    let m = space.n + 1;
    let w = point.h3.column(0).into_owned();
    let mut ell = DVector::from_fn(m, |i, _| w[i]); // (w + iota w)/2 in H3 coords
    let norm = ell.norm();
    if norm < 1e-300 {
        return Err(PeriodError::Degenerate("H^(3) line".to_string()));
    }
    ell /= norm;
    // deterministic sign: first significant entry positive
    if let Some(lead) = ell.iter().find(|v| v.abs() > 1e-12) {
        if *lead < 0.0 {
            ell = -ell;
        }
    }
    // polarized q_H on the H3 coordinate basis
    let embed = |i: usize| DVector::from_fn(space.dim(), |r, _| if r == i { 1.0 } else { 0.0 });
    let mut parts = Vec::with_capacity(m);
    for i in 0..m {
        parts.push(point.split(&embed(i))?);
    }
    let mut q = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            // blocks order: [pi3, pi2, pi1, pi0]
            let v = space.q(&parts[i][3], &parts[j][0]) + space.q(&parts[j][3], &parts[i][0])
                - space.q(&parts[i][2], &parts[j][1])
                - space.q(&parts[j][2], &parts[i][1]);
            q[(i, j)] = v;
        }
    }
    Ok((ell, q))
}

/// Symplectically dual bases adapted to a point: u's in H3 (q-orthonormal,
/// u0 on the line), v's in H4 with Q(u_i, v_j) = delta.
#[derive(Debug, Clone)]
pub struct StandardBasis {
    /// (n+1) x (n+1): columns are the u_i in H3 coordinates.
    pub u: DMatrix<f64>,
    /// (n+1) x (n+1): columns are the v_i in H4 coordinates.
    pub v: DMatrix<f64>,
}

impl StandardBasis {
    /// Ambient vector u_i + v_i sign-combined: c3 * u_i + c4 * v_i.
    fn combine(&self, i: usize, c3: f64, c4: f64) -> DVector<f64> {
        let m = self.u.nrows();
        DVector::from_fn(2 * m, |r, _| {
            if r < m {
                c3 * self.u[(r, i)]
            } else {
                c4 * self.v[(r - m, i)]
            }
        })
    }

    /// The 2m x 2m change of basis from standard coordinates to ambient.
    fn ambient_matrix(&self) -> DMatrix<f64> {
        let m = self.u.nrows();
        let mut s = DMatrix::zeros(2 * m, 2 * m);
        s.view_mut((0, 0), (m, m)).copy_from(&self.u);
        s.view_mut((m, m), (m, m)).copy_from(&self.v);
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        let dump = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.ncols())
                .map(|j| m.column(j).iter().cloned().collect())
                .collect()
        };
        json!({"u_basis": dump(&self.u), "v_basis": dump(&self.v)})
    }
}

/// Rebuild the decomposition from (ell, q): H^(3) = span(u0 + v0),
/// H^(2) = span(u_j - v_j).
pub fn pair_iso_inverse(
    space: &SymplecticSpace,
    ell: &DVector<f64>,
    q: &DMatrix<f64>,
) -> Result<HodgePoint, PeriodError> {
    let basis = standard_basis_from(space, ell, q)?;
    let m = space.n + 1;
    let mut h3 = DMatrix::zeros(2 * m, 1);
    let mut h0 = DMatrix::zeros(2 * m, 1);
    h3.set_column(0, &basis.combine(0, 1.0, 1.0));
    h0.set_column(0, &basis.combine(0, 1.0, -1.0));
    let mut h2 = DMatrix::zeros(2 * m, space.n);
    let mut h1 = DMatrix::zeros(2 * m, space.n);
    for j in 1..m {
        h2.set_column(j - 1, &basis.combine(j, 1.0, -1.0));
        h1.set_column(j - 1, &basis.combine(j, 1.0, 1.0));
    }
    Ok(HodgePoint { h3, h2, h1, h0 })
}

/// Deterministic standard basis from (ell, q): u0 = ell normalized, then
/// q-Gram-Schmidt over the coordinate basis in order.
pub fn standard_basis_from(
    space: &SymplecticSpace,
    ell: &DVector<f64>,
    q: &DMatrix<f64>,
) -> Result<StandardBasis, PeriodError> {
    let m = space.n + 1;
    if ell.nrows() != m || q.nrows() != m {
        return Err(PeriodError::BlockDims {
            expected: vec![m],
            got: vec![ell.nrows(), q.nrows()],
        });
    }
    let qdot = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * q * b)[(0, 0)];
    let n0 = qdot(ell, ell);
    if n0 <= 0.0 {
        return Err(PeriodError::Degenerate("q is not positive on ell".to_string()));
    }
    let mut us: Vec<DVector<f64>> = vec![ell / n0.sqrt()];
    for i in 0..m {
        if us.len() == m {
            break;
        }
        let mut cand = DVector::from_fn(m, |r, _| if r == i { 1.0 } else { 0.0 });
        for u in &us {
            let c = qdot(u, &cand);
            cand -= u * c;
        }
        let nn = qdot(&cand, &cand);
        if nn > 1e-12 {
            us.push(cand / nn.sqrt());
        }
    }
    if us.len() != m {
        return Err(PeriodError::Degenerate("q-orthonormalization".to_string()));
    }
    let u = DMatrix::from_columns(&us);
    // Q(u_i, v_j) = u_i . v_j in coordinates, so V = U^{-T}
    let v = u
        .transpose()
        .try_inverse()
        .ok_or_else(|| PeriodError::Degenerate("u-basis".to_string()))?;
    Ok(StandardBasis { u, v })
}

pub fn standard_basis(
    space: &SymplecticSpace,
    point: &HodgePoint,
) -> Result<StandardBasis, PeriodError> {
    let (ell, q) = pair_iso(space, point)?;
    standard_basis_from(space, &ell, &q)
}

/// A tangent vector to D written in a standard basis: an (n+1) x (n+1)
/// matrix with symmetric lower block (a_ij = a_ji for i, j >= 1).
#[derive(Debug, Clone)]
pub struct TangentRep {
    pub a: DMatrix<f64>,
}

impl TangentRep {
    pub fn new(a: DMatrix<f64>) -> Result<Self, PeriodError> {
        let m = a.nrows();
        if a.ncols() != m {
            return Err(PeriodError::BlockDims {
                expected: vec![m, m],
                got: vec![m, a.ncols()],
            });
        }
        for i in 1..m {
            for j in 1..m {
                if (a[(i, j)] - a[(j, i)]).abs() > 1e-9 * a.amax().max(1.0) {
                    return Err(PeriodError::Degenerate(
                        "lower block is not symmetric".to_string(),
                    ));
                }
            }
        }
        Ok(TangentRep { a })
    }

    /// Action on ambient H: u_j -> sum a_ij u_i, v_j -> -sum a_ji v_i.
    pub fn ambient_action(&self, basis: &StandardBasis) -> DMatrix<f64> {
        let m = self.a.nrows();
        let mut block = DMatrix::zeros(2 * m, 2 * m);
        block.view_mut((0, 0), (m, m)).copy_from(&self.a);
        block
            .view_mut((m, m), (m, m))
            .copy_from(&(-self.a.transpose()));
        let s = basis.ambient_matrix();
        let sinv = s.clone().try_inverse().expect("basis invertible");
        s * block * sinv
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<f64>> = (0..self.a.nrows())
            .map(|i| (0..self.a.ncols()).map(|j| self.a[(i, j)]).collect())
            .collect();
        json!({"a_matrix": rows})
    }
}

/// Decomposition of a tangent vector into the vertical, line, and
/// transverse parts, with horizontality flags from both the matrix and
/// the independent block criteria.
#[derive(Debug, Clone)]
pub struct TangentClass {
    pub vertical: DMatrix<f64>,
    pub line: DMatrix<f64>,
    pub transverse_part: DMatrix<f64>,
    pub horizontal: bool,
    pub transverse: bool,
    /// Matrix-criterion residuals: antisymmetric part, and |a00|.
    pub antisym_residual: f64,
    pub a00: f64,
    /// Block-criterion residuals: component of phi3(H^(3)) in H^(1), H^(3);
    /// and in H^(0) for transversality.
    pub block_horizontal_residual: f64,
    pub block_transverse_residual: f64,
}

pub fn classify_tangent(
    space: &SymplecticSpace,
    point: &HodgePoint,
    basis: &StandardBasis,
    xi: &TangentRep,
) -> Result<TangentClass, PeriodError> {
    let m = space.n + 1;
    let a = &xi.a;
    let scale = a.amax().max(1e-300);
    let sym = (a + a.transpose()) * 0.5;
    let antisym = (a - a.transpose()) * 0.5;
    let mut line = DMatrix::zeros(m, m);
    line[(0, 0)] = sym[(0, 0)];
    let transverse_part = &sym - &line;
    let antisym_residual = antisym.amax() / scale;
    let a00 = sym[(0, 0)];
    // independent block criterion: act on w = u0 + v0 and project
    let action = xi.ambient_action(basis);
    let w = basis.combine(0, 1.0, 1.0);
    let y = &action * &w;
    let parts = point.split(&y)?;
    let yscale = y.amax().max(scale);
    let block_horizontal_residual = parts[2].amax() / yscale; // H^(1) part
    let block_transverse_residual =
        block_horizontal_residual.max(parts[3].amax() / yscale); // plus H^(0)
    let tol = 1e-8;
    Ok(TangentClass {
        vertical: antisym,
        line,
        transverse_part,
        horizontal: antisym_residual <= tol,
        transverse: antisym_residual <= tol && a00.abs() <= tol * scale,
        antisym_residual,
        a00,
        block_horizontal_residual,
        block_transverse_residual,
    })
}

/// The homogeneous metric on D: Frobenius pairing in a standard basis.
pub fn metric_gd(xi: &TangentRep, xip: &TangentRep) -> f64 {
    xi.a.iter().zip(xip.a.iter()).map(|(a, b)| a * b).sum()
}

fn require_transverse(
    space: &SymplecticSpace,
    point: &HodgePoint,
    basis: &StandardBasis,
    xi: &TangentRep,
) -> Result<(), PeriodError> {
    let class = classify_tangent(space, point, basis, xi)?;
    if xi.a.amax() < 1e-300 {
        return Ok(());
    }
    let res = class.antisym_residual.max(class.a00.abs() / xi.a.amax().max(1e-300));
    if res > 1e-6 {
        return Err(PeriodError::NotTransverse(res));
    }
    Ok(())
}

/// The nonnegative quadratic form on the transverse distribution:
/// h_D(xi, xi) = -Q(iota(phi3(w)), phi3(w)) / Q(iota(w), w).
pub fn h_d(
    space: &SymplecticSpace,
    point: &HodgePoint,
    basis: &StandardBasis,
    xi: &TangentRep,
) -> Result<f64, PeriodError> {
    h_d_with_w(space, point, basis, xi, &point.h3.column(0).into_owned())
}

pub fn h_d_with_w(
    space: &SymplecticSpace,
    point: &HodgePoint,
    basis: &StandardBasis,
    xi: &TangentRep,
    w: &DVector<f64>,
) -> Result<f64, PeriodError> {
    require_transverse(space, point, basis, xi)?;
    let action = xi.ambient_action(basis);
    let y = point.project(&(&action * w), 2)?;
    let denom = space.q(&space.iota(w), w);
    if denom.abs() < 1e-300 {
        return Err(PeriodError::Degenerate("Q(iota w, w)".to_string()));
    }
    Ok(-space.q(&space.iota(&y), &y) / denom)
}

/// Polarization of h_D to a bilinear form.
pub fn h_d_bilinear(
    space: &SymplecticSpace,
    point: &HodgePoint,
    basis: &StandardBasis,
    xi: &TangentRep,
    xip: &TangentRep,
) -> Result<f64, PeriodError> {
    let plus = TangentRep::new(&xi.a + &xip.a).map_err(|_| {
        PeriodError::Degenerate("tangent sum".to_string())
    })?;
    let minus = TangentRep::new(&xi.a - &xip.a)
        .map_err(|_| PeriodError::Degenerate("tangent difference".to_string()))?;
    Ok((h_d(space, point, basis, &plus)? - h_d(space, point, basis, &minus)?) / 4.0)
}

/// The equivariant cubic form: phi1_xi . phi2_xi' . phi3_xi''(w)
/// = -Xi_D(xi, xi', xi'') iota(w).
pub fn xi_d(
    space: &SymplecticSpace,
    point: &HodgePoint,
    basis: &StandardBasis,
    xi: &TangentRep,
    xip: &TangentRep,
    xipp: &TangentRep,
) -> Result<f64, PeriodError> {
    for t in [xi, xip, xipp] {
        require_transverse(space, point, basis, t)?;
    }
    let w = point.h3.column(0).into_owned();
    let y3 = point.project(&(xipp.ambient_action(basis) * &w), 2)?;
    let y2 = point.project(&(xip.ambient_action(basis) * &y3), 1)?;
    let y1 = point.project(&(xi.ambient_action(basis) * &y2), 0)?;
    let iw = space.iota(&w);
    let c = y1.dot(&iw) / iw.dot(&iw);
    Ok(-c)
}

// ---------------------------------------------------------------------------
// The flat-chart immersion.

/// Lex positions of the Fano 3-monomials and their complements, plus the
/// dual normalization signs t_a with Q(u_a, v_a) = 1.
struct FlatClasses {
    pos3: [usize; 7],
    pos4: [usize; 7],
    signs3: [f64; 7],
    t4: [f64; 7],
}

fn flat_classes() -> FlatClasses {
    let mut pos3 = [0usize; 7];
    let mut pos4 = [0usize; 7];
    let mut signs3 = [0.0; 7];
    let mut t4 = [0.0; 7];
    for (a, (indices, sign)) in FANO_MONOMIALS.iter().enumerate() {
        signs3[a] = *sign;
        let mono = AltForm::monomial(indices);
        pos3[a] = mono.coeffs().iter().position(|&c| c != 0.0).unwrap();
        let complement: Vec<u8> = (1..=7u8).filter(|i| !indices.contains(i)).collect();
        let dual = AltForm::monomial(&complement);
        pos4[a] = dual.coeffs().iter().position(|&c| c != 0.0).unwrap();
        // u_a ^ (t_a e^{comp}) = sign * t_a * merge_sign * e^{1..7} = 1
        let w = crate::exterior::wedge(&mono, &dual).unwrap();
        let merge = w.coeffs()[0];
        t4[a] = 1.0 / (sign * merge);
    }
    FlatClasses {
        pos3,
        pos4,
        signs3,
        t4,
    }
}

/// Cohomology class of a constant 3-form: components on the invariant
/// monomial classes u_a (the orbifold average kills the rest).
pub fn class3(form: &AltForm) -> DVector<f64> {
    let fc = flat_classes();
    DVector::from_fn(7, |a, _| fc.signs3[a] * form.coeffs()[fc.pos3[a]])
}

/// Cohomology class of a constant 4-form on the dual basis v_a.
pub fn class4(form: &AltForm) -> DVector<f64> {
    let fc = flat_classes();
    DVector::from_fn(7, |a, _| form.coeffs()[fc.pos4[a]] / fc.t4[a])
}

pub fn flat_space() -> SymplecticSpace {
    SymplecticSpace::new(6)
}

fn stack(h3: &DVector<f64>, h4: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(14, |i, _| if i < 7 { h3[i] } else { h4[i - 7] })
}

/// The decomposition induced by the flat-chart point x, via the frame of
/// phi_x: H^(3) from [phi] + [Theta], H^(2) from [eta] - [star eta] over
/// the L2-orthocomplement of phi in the harmonic span.
pub fn phi_map(chart: &FlatOrbifoldChart, x: &[f64]) -> Result<HodgePoint, PeriodError> {
    let hf = harmonic_frame(chart, x)?;
    let frame = &hf.frame;
    let phi = frame.phi();
    let vol = frame.volume_density();
    let h3_col = stack(&class3(phi), &class4(frame.theta()));
    // L2-orthocomplement of phi inside the monomial span, deterministic
    // Gram-Schmidt over the monomial basis
    let inner = |a: &AltForm, b: &AltForm| -> Result<f64, PeriodError> {
        Ok(lambda_inner(frame.metric(), a, b)? * vol)
    };
    let phi_norm = inner(phi, phi)?;
    let mut etas27: Vec<AltForm> = Vec::with_capacity(6);
    for eta in &hf.etas {
        let mut cand = eta.sub(&phi.scale(inner(eta, phi)? / phi_norm))?;
        for prev in &etas27 {
            let c = inner(&cand, prev)? / inner(prev, prev)?;
            cand = cand.sub(&prev.scale(c))?;
        }
        if inner(&cand, &cand)? > 1e-10 {
            etas27.push(cand);
        }
        if etas27.len() == 6 {
            break;
        }
    }
    if etas27.len() != 6 {
        return Err(PeriodError::Degenerate(
            "orthocomplement of phi in the harmonic span".to_string(),
        ));
    }
    let mut h2 = DMatrix::zeros(14, 6);
    let mut h1 = DMatrix::zeros(14, 6);
    for (j, eta) in etas27.iter().enumerate() {
        let star = hodge_star(frame.metric(), eta);
        let c3 = class3(eta);
        let c4 = class4(&star);
        h2.set_column(j, &stack(&c3, &(-&c4)));
        h1.set_column(j, &stack(&c3, &c4));
    }
    let mut h3 = DMatrix::zeros(14, 1);
    h3.set_column(0, &h3_col);
    let space = flat_space();
    let h0 = {
        let mut m = DMatrix::zeros(14, 1);
        m.set_column(0, &space.iota(&h3_col));
        m
    };
    let point = HodgePoint { h3, h2, h1, h0 };
    let report = validate_point(&space, &point)?;
    if !report.passes(1e-9) {
        return Err(PeriodError::InvalidPoint(report.max_residual));
    }
    Ok(point)
}

/// The differential of phi_map along a chart direction, recovered from
/// finite differences of (ell, q) in the standard basis at the base point.
pub fn dphi(
    chart: &FlatOrbifoldChart,
    x: &[f64],
    direction: &[f64],
    step: f64,
) -> Result<(TangentRep, TangentClass), PeriodError> {
    let space = flat_space();
    let point0 = phi_map(chart, x)?;
    let basis0 = standard_basis(&space, &point0)?;
    let m = 7;
    let u0inv = basis0
        .u
        .clone()
        .try_inverse()
        .ok_or_else(|| PeriodError::Degenerate("u-basis".to_string()))?;
    // data(t): line coefficients (normalized against u0) and q in the
    // standard u-basis
    let data = |t: f64| -> Result<(DVector<f64>, DMatrix<f64>), PeriodError> {
        let xt: Vec<f64> = x.iter().zip(direction).map(|(a, d)| a + t * d).collect();
        let pt = phi_map(chart, &xt)?;
        let (ell, q) = pair_iso(&space, &pt)?;
        let mut c = &u0inv * ell;
        if c[0].abs() < 1e-12 {
            return Err(PeriodError::Degenerate("line normalization".to_string()));
        }
        c /= c[0];
        let q_std = basis0.u.transpose() * q * &basis0.u;
        Ok((c, q_std))
    };
    // central difference with one Richardson level
    let diff = |h: f64| -> Result<(DVector<f64>, DMatrix<f64>), PeriodError> {
        let (cp, qp) = data(h)?;
        let (cm, qm) = data(-h)?;
        Ok(((cp - cm) / (2.0 * h), (qp - qm) / (2.0 * h)))
    };
    let (c1, q1) = diff(step)?;
    let (c2, q2) = diff(step / 2.0)?;
    let cdot = (c2 * 4.0 - c1) / 3.0;
    let qdot = (q2 * 4.0 - q1) / 3.0;
    // symmetric part from the metric variation, first-column antisymmetric
    // part from the line variation
    let s = qdot * (-0.5);
    let mut a = s.clone();
    for i in 1..m {
        let anti = cdot[i] - s[(i, 0)];
        a[(i, 0)] += anti;
        a[(0, i)] -= anti;
    }
    let rep = TangentRep { a };
    let class = classify_tangent(&space, &point0, &basis0, &rep)?;
    Ok((rep, class))
}

// ---------------------------------------------------------------------------
// The symmetric space of inner products and the second fundamental form.

/// Covariant derivative of constant-coefficient fields on S^2_+:
/// -1/2 q^{rs} (qdot_kr qdot'_ls + qdot_lr qdot'_ks).
pub fn s2plus_covariant(
    q: &DMatrix<f64>,
    qdot: &DMatrix<f64>,
    qdotp: &DMatrix<f64>,
) -> Result<DMatrix<f64>, PeriodError> {
    let qinv = q
        .clone()
        .try_inverse()
        .ok_or_else(|| PeriodError::Degenerate("q".to_string()))?;
    let a = qdot * &qinv * qdotp;
    Ok((&a + a.transpose()) * (-0.5))
}

/// The canonical metric of S^2_+ at q: g(A, B) = 1/4 tr(q^-1 A q^-1 B).
pub fn s2plus_metric(
    q: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<f64, PeriodError> {
    let qinv = q
        .clone()
        .try_inverse()
        .ok_or_else(|| PeriodError::Degenerate("q".to_string()))?;
    Ok(0.25 * (&qinv * a * &qinv * b).trace())
}

pub struct SffResidual {
    pub identity_residual: f64,
    pub normal_residual: f64,
}

/// Second-fundamental-form checks for the composition of the moduli chart
/// with q: compares the ambient covariant derivative of the immersion with
/// the Levi-Civita image plus the Yukawa correction, and measures the
/// component normal to the image.
pub fn sff_residual(
    family: &dyn ModelFamily,
    x: &[f64],
    a: usize,
    b: usize,
    scheme: &JetScheme,
) -> Result<SffResidual, PeriodError> {
    let n = family.dimension();
    let q_at = |p: &[f64]| -> Result<DMatrix<f64>, PeriodError> {
        let cp = closed_partials(family, p)?.ok_or_else(|| {
            PeriodError::Degenerate("family without closed-form barriers".to_string())
        })?;
        let vol = family.volume(p)?;
        Ok(cp.f2.as_matrix() * vol)
    };
    let h = 1e-3;
    let shift = |p: &[f64], c: usize, d: f64| -> Vec<f64> {
        let mut out = p.to_vec();
        out[c] += d;
        out
    };
    let dq_at = |p: &[f64], c: usize| -> Result<DMatrix<f64>, PeriodError> {
        Ok((q_at(&shift(p, c, h))? - q_at(&shift(p, c, -h))?) / (2.0 * h))
    };
    let q0 = q_at(x)?;
    let dq: Vec<DMatrix<f64>> = (0..n).map(|c| dq_at(x, c)).collect::<Result<_, _>>()?;
    // second derivative of the field dq_b along a
    let ddq = (dq_at(&shift(x, a, h), b)? - dq_at(&shift(x, a, -h), b)?) / (2.0 * h);
    let nabla_bar = &ddq + s2plus_covariant(&q0, &dq[a], &dq[b])?;
    // right-hand side: Levi-Civita image plus Yukawa correction
    let jet = jet(family, x, scheme)?;
    let cp = closed_partials(family, x)?.unwrap();
    let ginv = cp
        .f2
        .as_matrix()
        .try_inverse()
        .ok_or_else(|| PeriodError::Degenerate("metric".to_string()))?;
    let f3 = &cp.f3;
    let vol = family.volume(x)?;
    let nabla_xi: Tensor = e_residual(&jet)?.nabla_xi;
    let mut rhs = DMatrix::zeros(n, n);
    for k in 0..n {
        for l in 0..n {
            let mut val = 2.0 * vol * nabla_xi.get(&[a, b, k, l]);
            for c in 0..n {
                let mut gamma = 0.0;
                for r in 0..n {
                    gamma += ginv[(c, r)] * f3.get(&[a, b, r]);
                }
                val += 0.5 * gamma * dq[c][(k, l)];
            }
            rhs[(k, l)] = val;
        }
    }
    let diff = &nabla_bar - rhs;
    let identity_residual = diff.amax();
    // normal component: project nabla_bar off the span of the dq_c
    let mut gram = DMatrix::zeros(n, n);
    let mut rhsv = DVector::zeros(n);
    for c in 0..n {
        for d in 0..n {
            gram[(c, d)] = s2plus_metric(&q0, &dq[c], &dq[d])?;
        }
        rhsv[c] = s2plus_metric(&q0, &dq[c], &nabla_bar)?;
    }
    let coeffs = gram
        .lu()
        .solve(&rhsv)
        .ok_or_else(|| PeriodError::Degenerate("tangent fields are dependent".to_string()))?;
    let mut normal = nabla_bar.clone();
    for c in 0..n {
        normal -= &dq[c] * coeffs[c];
    }
    let normal_residual = s2plus_metric(&q0, &normal, &normal)?.max(0.0).sqrt();
    Ok(SffResidual {
        identity_residual,
        normal_residual,
    })
}

// ---------------------------------------------------------------------------
// Contact geometry on P(H).

/// The contact form alpha = dw_0 + sum_j w^j dw_j - w_j dw^j in the affine
/// chart w^0 = 1, evaluated on the projectivized velocity. Coordinates are
/// w^j = H3 components, w_j = -H4 components (so Q = sum dw_j ^ dw^j).
pub fn contact_alpha(
    space: &SymplecticSpace,
    w: &DVector<f64>,
    wdot: &DVector<f64>,
) -> Result<f64, PeriodError> {
    let m = space.n + 1;
    let w0 = w[0];
    if w0.abs() < 1e-12 {
        return Err(PeriodError::ChartEscape);
    }
    // projectivized point and velocity in the chart w^0 = 1
    let pw = w / w0;
    let pv = (wdot - &pw * wdot[0]) / w0;
    let upper = |v: &DVector<f64>, j: usize| v[j];
    let lower = |v: &DVector<f64>, j: usize| -v[m + j];
    let mut alpha = lower(&pv, 0);
    for j in 1..m {
        alpha += upper(&pw, j) * lower(&pv, j) - lower(&pw, j) * upper(&pv, j);
    }
    Ok(alpha)
}

/// d(alpha) = -2 sum_{j>=1} dw_j ^ dw^j on two projectivized velocities.
pub fn contact_dalpha(
    space: &SymplecticSpace,
    w: &DVector<f64>,
    xdot: &DVector<f64>,
    ydot: &DVector<f64>,
) -> Result<f64, PeriodError> {
    let m = space.n + 1;
    let w0 = w[0];
    if w0.abs() < 1e-12 {
        return Err(PeriodError::ChartEscape);
    }
    let pw = w / w0;
    let px = (xdot - &pw * xdot[0]) / w0;
    let py = (ydot - &pw * ydot[0]) / w0;
    let mut val = 0.0;
    for j in 1..m {
        let (xl, xu) = (-px[m + j], px[j]);
        let (yl, yu) = (-py[m + j], py[j]);
        val += xl * yu - xu * yl;
    }
    Ok(-2.0 * val)
}

/// The H^(3) representative w(x) = [phi_x] + [Theta(phi_x)] of a chart point.
pub fn line_representative(chart: &FlatOrbifoldChart, x: &[f64]) -> Result<DVector<f64>, PeriodError> {
    let phi = chart.phi_at(x)?;
    let frame = frame_of(&phi)?;
    Ok(stack(&class3(&phi), &class4(frame.theta())))
}

// ---------------------------------------------------------------------------

/// Unit-volume slice curve through x: x_a(t) = x_a exp(t w_a) with
/// sum w_a = 0 keeps the product of coordinates constant.
pub fn slice_curve(x: &[f64], w: &[f64], t: f64) -> Vec<f64> {
    x.iter()
        .zip(w)
        .map(|(xa, wa)| xa * (t * wa).exp())
        .collect()
}

/// Project a 7-vector onto sum w_a = 0 (slice directions in log coords).
pub fn slice_direction(w: &[f64]) -> Vec<f64> {
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    w.iter().map(|v| v - mean).collect()
}

/// Rescale a flat-chart point to the unit-volume slice.
pub fn to_unit_volume(x: &[f64]) -> Vec<f64> {
    let vol: f64 = x.iter().product::<f64>().powf(1.0 / 3.0);
    let s = vol.powf(-3.0 / 7.0);
    x.iter().map(|v| v * s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::delta_action;
    use crate::g2::{standard_phi, TypeComponent};
    use crate::models::sample_near;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chart_point(seed: u64) -> Vec<f64> {
        sample_near(&FlatOrbifoldChart, &[1.0; 7], 0.3, seed).unwrap()
    }

    fn slice_point(seed: u64) -> Vec<f64> {
        to_unit_volume(&chart_point(seed))
    }

    fn random_transverse(rng: &mut impl Rng, m: usize) -> TangentRep {
        let mut a = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = rng.gen_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a[(0, 0)] = 0.0;
        TangentRep::new(a).unwrap()
    }

    #[test]
    fn phi_map_points_validate() {
        let space = flat_space();
        for seed in 0..10 {
            let x = chart_point(seed);
            let point = phi_map(&FlatOrbifoldChart, &x).unwrap();
            let report = validate_point(&space, &point).unwrap();
            assert!(report.passes(1e-9), "residual {}", report.max_residual);
            // iota of a valid point is valid
            let flipped = iota_point(&space, &point);
            assert!(validate_point(&space, &flipped).unwrap().passes(1e-9));
        }
        // constructed violation: using [eta] + [star eta] in the H^(2) slot
        // flips the sign of Q(iota ., .)
        let x = chart_point(3);
        let point = phi_map(&FlatOrbifoldChart, &x).unwrap();
        let bad = HodgePoint {
            h3: point.h3.clone(),
            h2: point.h1.clone(),
            h1: point.h2.clone(),
            h0: point.h0.clone(),
        };
        let report = validate_point(&flat_space(), &bad).unwrap();
        assert!(report.definiteness_residual > 1e-3);
        assert!(!report.passes(1e-9));
    }

    #[test]
    fn pair_iso_round_trip() {
        let space = flat_space();
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..50 {
            // random valid point from a random (ell, q)
            let ell = DVector::from_fn(7, |_, _| rng.gen_range(-1.0..1.0));
            let half = DMatrix::from_fn(7, 7, |_, _| rng.gen_range(-1.0..1.0));
            let q = &half * half.transpose() + DMatrix::identity(7, 7) * 0.5;
            let point = pair_iso_inverse(&space, &ell, &q).unwrap();
            assert!(validate_point(&space, &point).unwrap().passes(1e-9));
            let (ell2, q2) = pair_iso(&space, &point).unwrap();
            // same line up to sign/scale, same quadratic form
            let e1 = &ell / ell.norm();
            let cosangle = e1.dot(&ell2).abs();
            assert!((cosangle - 1.0).abs() < 1e-9);
            assert!((q2.clone() - &q).amax() < 1e-9 * q.amax());
            // subspace round trip
            let point2 = pair_iso_inverse(&space, &ell2, &q2).unwrap();
            for (b1, b2) in [
                (&point.h3, &point2.h3),
                (&point.h2, &point2.h2),
                (&point.h1, &point2.h1),
                (&point.h0, &point2.h0),
            ] {
                let p1 = orthogonal_projector(b1).unwrap();
                let p2 = orthogonal_projector(b2).unwrap();
                assert!((p1 - p2).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn phi_induced_line_and_gram() {
        let space = flat_space();
        for seed in [1u64, 2, 3] {
            let x = chart_point(seed);
            let point = phi_map(&FlatOrbifoldChart, &x).unwrap();
            let (ell, q) = pair_iso(&space, &point).unwrap();
            // the line is spanned by [phi_x] = x in chart coordinates
            let xv = DVector::from_column_slice(&x);
            let cosangle = ell.dot(&xv).abs() / xv.norm();
            assert!((cosangle - 1.0).abs() < 1e-10);
            // q equals the L2 Gram of the monomial classes: Vol * Hessian
            let cp = closed_partials(&FlatOrbifoldChart, &x).unwrap().unwrap();
            let vol: f64 = x.iter().product::<f64>().powf(1.0 / 3.0);
            let expected = cp.f2.as_matrix() * vol;
            assert!((q - expected).amax() < 1e-9);
        }
    }

    #[test]
    fn q_iota_pairing_is_14_at_unit_volume() {
        let space = flat_space();
        for seed in [4u64, 5, 6] {
            let x = slice_point(seed);
            let point = phi_map(&FlatOrbifoldChart, &x).unwrap();
            let w = point.h3.column(0).into_owned();
            let val = space.q(&space.iota(&w), &w);
            assert!((val - 14.0).abs() < 1e-9, "got {val}");
        }
    }

    #[test]
    fn classify_examples() {
        let space = flat_space();
        let x = chart_point(7);
        let point = phi_map(&FlatOrbifoldChart, &x).unwrap();
        let basis = standard_basis(&space, &point).unwrap();
        // identity: horizontal, not transverse
        let id = TangentRep::new(DMatrix::identity(7, 7)).unwrap();
        let class = classify_tangent(&space, &point, &basis, &id).unwrap();
        assert!(class.horizontal && !class.transverse);
        assert!(class.block_horizontal_residual < 1e-9);
        assert!(class.block_transverse_residual > 0.05);
        // antisymmetric first row/column: vertical
        let mut a = DMatrix::zeros(7, 7);
        for i in 1..7 {
            a[(i, 0)] = i as f64;
            a[(0, i)] = -(i as f64);
        }
        let v = TangentRep::new(a).unwrap();
        let class = classify_tangent(&space, &point, &basis, &v).unwrap();
        assert!(!class.horizontal);
        assert!(class.transverse_part.amax() < 1e-12 && class.line.amax() < 1e-12);
        // random symmetric with zero corner: both criteria agree
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..5 {
            let t = random_transverse(&mut rng, 7);
            let class = classify_tangent(&space, &point, &basis, &t).unwrap();
            assert!(class.transverse);
            assert!(class.block_transverse_residual < 1e-9);
        }
    }

    #[test]
    fn metric_gd_properties() {
        let space = flat_space();
        let x = chart_point(8);
        let point = phi_map(&FlatOrbifoldChart, &x).unwrap();
        let basis = standard_basis(&space, &point).unwrap();
        let id = TangentRep::new(DMatrix::identity(7, 7)).unwrap();
        assert!((metric_gd(&id, &id) - 7.0).abs() < 1e-12);
        // vertical and horizontal blocks are orthogonal
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        for _ in 0..5 {
            let t = random_transverse(&mut rng, 7);
            let mut av = DMatrix::zeros(7, 7);
            for i in 1..7 {
                let v = rng.gen_range(-1.0..1.0);
                av[(i, 0)] = v;
                av[(0, i)] = -v;
            }
            let vert = TangentRep::new(av).unwrap();
            assert!(metric_gd(&vert, &t).abs() < 1e-12);
        }
        // basis invariance: rotate u_1..u_6 by a random orthogonal block
        let half = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
        let qr = half.qr();
        let mut rot = DMatrix::identity(7, 7);
        rot.view_mut((1, 1), (6, 6)).copy_from(&qr.q());
        let basis2 = StandardBasis {
            u: &basis.u * &rot,
            v: &basis.v * rot.clone().try_inverse().unwrap().transpose(),
        };
        // the same abstract tangent in the rotated basis is rot^T a rot
        let t = random_transverse(&mut rng, 7);
        let t2 = TangentRep::new(rot.transpose() * &t.a * &rot).unwrap();
        assert!((metric_gd(&t, &t) - metric_gd(&t2, &t2)).abs() < 1e-10);
        // h_d agrees across the two bases as well
        let h1 = h_d(&space, &point, &basis, &t).unwrap();
        let h2 = h_d(&space, &point, &basis2, &t2).unwrap();
        assert!((h1 - h2).abs() < 1e-9 * h1.abs().max(1.0));
    }

    #[test]
    fn h_d_basic_properties() {
        let space = flat_space();
        let x = slice_point(9);
        let point = phi_map(&FlatOrbifoldChart, &x).unwrap();
        let basis = standard_basis(&space, &point).unwrap();
        let zero = TangentRep::new(DMatrix::zeros(7, 7)).unwrap();
        assert_eq!(h_d(&space, &point, &basis, &zero).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let t = random_transverse(&mut rng, 7);
        let h = h_d(&space, &point, &basis, &t).unwrap();
        assert!(h >= 0.0);
        // independence of the choice of w
        let w2 = point.h3.column(0) * 2.5;
        let h2 = h_d_with_w(&space, &point, &basis, &t, &w2.into_owned()).unwrap();
        assert!((h - h2).abs() < 1e-12 * h.max(1.0));
        // non-transverse input is rejected
        let id = TangentRep::new(DMatrix::identity(7, 7)).unwrap();
        assert!(h_d(&space, &point, &basis, &id).is_err());
        // xi_d multilinearity: any zero argument gives zero
        assert_eq!(
            xi_d(&space, &point, &basis, &zero, &t, &t).unwrap(),
            0.0
        );
    }

    #[test]
    fn dphi_horizontality_and_thm_differentials() {
        let chart = FlatOrbifoldChart;
        let space = flat_space();
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        // generic directions at generic points: horizontal
        for seed in [10u64, 11] {
            let x = chart_point(seed);
            let dir: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, class) = dphi(&chart, &x, &dir, 1e-3).unwrap();
            assert!(class.antisym_residual < 1e-6, "{}", class.antisym_residual);
            assert!(class.block_horizontal_residual < 1e-6);
        }
        // unit-volume slice directions: transverse
        for seed in [12u64, 13] {
            let x = slice_point(seed);
            let w: Vec<f64> =
                slice_direction(&(0..7).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
            // chart velocity of the slice curve at t = 0
            let dir: Vec<f64> = x.iter().zip(&w).map(|(xa, wa)| xa * wa).collect();
            let (rep, class) = dphi(&chart, &x, &dir, 1e-3).unwrap();
            assert!(class.transverse, "a00 {} antisym {}", class.a00, class.antisym_residual);

            // closed-form differentials at the same point
            let hf = harmonic_frame(&chart, &x).unwrap();
            let frame = &hf.frame;
            let eta = {
                let mut f = AltForm::zero(3);
                for ((indices, sign), d) in FANO_MONOMIALS.iter().zip(&dir) {
                    f = f.add(&AltForm::monomial(indices).scale(sign * d)).unwrap();
                }
                f
            };
            let point = phi_map(&chart, &x).unwrap();
            let basis = standard_basis(&space, &point).unwrap();
            let action = rep.ambient_action(&basis);
            // (i): phi3([phi] + [Theta]) = [eta] - [star eta]
            let wvec = point.h3.column(0).into_owned();
            let lhs = point.project(&(&action * &wvec), 2).unwrap();
            let star_eta = hodge_star(frame.metric(), &eta);
            let rhs = stack(&class3(&eta), &(-class4(&star_eta)));
            assert!((lhs - &rhs).amax() < 1e-5, "thm 4.3 (i)");
            // (ii): phi2([eta'] - [star eta']) = [pi27(h eta')] + [star pi27(h eta')]
            let h = frame.solve_h(&eta).unwrap();
            for j in 0..3 {
                let w2 = point.h2.column(j).into_owned();
                let lhs = point.project(&(&action * &w2), 1).unwrap();
                // reconstruct eta' from the H3 components of the column
                let mut etap = AltForm::zero(3);
                for (a, (indices, sign)) in FANO_MONOMIALS.iter().enumerate() {
                    etap = etap
                        .add(&AltForm::monomial(indices).scale(sign * w2[a]))
                        .unwrap();
                }
                let moved = delta_action(&h, &etap);
                let p27 = frame.project(&moved, TypeComponent::L3_27).unwrap();
                let star27 = hodge_star(frame.metric(), &p27);
                let rhs = stack(&class3(&p27), &class4(&star27));
                assert!((lhs - &rhs).amax() < 1e-5, "thm 4.3 (ii)");
            }
            // (iii): phi1([eta'] + [star eta']) = (1/7) <eta', eta> ([phi] - [Theta])
            for j in 0..3 {
                let w1 = point.h1.column(j).into_owned();
                let lhs = point.project(&(&action * &w1), 0).unwrap();
                let mut etap = AltForm::zero(3);
                for (a, (indices, sign)) in FANO_MONOMIALS.iter().enumerate() {
                    etap = etap
                        .add(&AltForm::monomial(indices).scale(sign * w1[a]))
                        .unwrap();
                }
                let coeff = lambda_inner(frame.metric(), &etap, &eta).unwrap()
                    * frame.volume_density()
                    / 7.0;
                let rhs = space.iota(&wvec) * coeff;
                assert!((lhs - rhs).amax() < 1e-5, "thm 4.3 (iii)");
            }
        }
    }

    #[test]
    fn pullback_identities() {
        let chart = FlatOrbifoldChart;
        let space = flat_space();
        let scheme = JetScheme::default();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut checked = 0;
        for seed in 0..30u64 {
            let x = slice_point(100 + seed);
            let point = phi_map(&chart, &x).unwrap();
            let basis = standard_basis(&space, &point).unwrap();
            let wdirs: Vec<Vec<f64>> = (0..3)
                .map(|_| {
                    slice_direction(
                        &(0..7).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>(),
                    )
                })
                .collect();
            let dirs: Vec<Vec<f64>> = wdirs
                .iter()
                .map(|w| x.iter().zip(w).map(|(xa, wa)| xa * wa).collect())
                .collect();
            let reps: Vec<TangentRep> = dirs
                .iter()
                .map(|d| dphi(&chart, &x, d, 1e-3).unwrap().0)
                .collect();
            // metric pullback: G(u, v) = 7 h_D(dPhi u, dPhi v)
            let j = crate::moduli::jet_to_order(&chart, &x, &scheme, 3).unwrap();
            let g = j.g_matrix();
            let xi = j.best_f3().unwrap().scale(0.5);
            for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
                let gd = 7.0
                    * h_d_bilinear(&space, &point, &basis, &reps[p], &reps[q]).unwrap();
                let mut gm = 0.0;
                for k in 0..7 {
                    for l in 0..7 {
                        gm += g[(k, l)] * dirs[p][k] * dirs[q][l];
                    }
                }
                assert!((gd - gm).abs() < 1e-5, "metric pullback: {gd} vs {gm}");
            }
            // cubic pullback: Xi(u, v, w) = 7 Xi_D(dPhi u, dPhi v, dPhi w)
            let xid = 7.0
                * xi_d(&space, &point, &basis, &reps[0], &reps[1], &reps[2]).unwrap();
            let mut xim = 0.0;
            for k in 0..7 {
                for l in 0..7 {
                    for m in 0..7 {
                        xim += xi.get(&[k, l, m]) * dirs[0][k] * dirs[1][l] * dirs[2][m];
                    }
                }
            }
            assert!((xid - xim).abs() < 1e-4, "cubic pullback: {xid} vs {xim}");
            // on-image symmetry of Xi_D under all permutations
            let perms = [
                [0usize, 1, 2],
                [0, 2, 1],
                [1, 0, 2],
                [1, 2, 0],
                [2, 0, 1],
                [2, 1, 0],
            ];
            for perm in perms {
                let v = 7.0
                    * xi_d(
                        &space,
                        &point,
                        &basis,
                        &reps[perm[0]],
                        &reps[perm[1]],
                        &reps[perm[2]],
                    )
                    .unwrap();
                assert!((v - xid).abs() < 1e-4);
            }
            checked += 1;
        }
        assert_eq!(checked, 30);
    }

    #[test]
    fn s2plus_properties() {
        let id = DMatrix::identity(4, 4);
        let out = s2plus_covariant(&id, &id, &id).unwrap();
        assert!((out + &id).amax() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        let sym = |rng: &mut ChaCha8Rng| {
            let m = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
            (&m + m.transpose()) * 0.5
        };
        let (a, b) = (sym(&mut rng), sym(&mut rng));
        let ab = s2plus_covariant(&id, &a, &b).unwrap();
        let ba = s2plus_covariant(&id, &b, &a).unwrap();
        assert!((ab - ba).amax() < 1e-14);
        // one-parameter subgroup geodesics: q(t) = exp(tS)
        let s = sym(&mut rng);
        let q_at = |t: f64| (s.clone() * t).exp();
        let h = 1e-4;
        let qdot = (q_at(h) - q_at(-h)) / (2.0 * h);
        let qddot = (q_at(h) + q_at(-h) - q_at(0.0) * 2.0) / (h * h);
        let acc = &qddot + s2plus_covariant(&q_at(0.0), &qdot, &qdot).unwrap();
        assert!(acc.amax() < 1e-6, "geodesic acceleration {}", acc.amax());
    }

    #[test]
    fn sff_residuals_small() {
        let scheme = JetScheme::default();
        let chart = FlatOrbifoldChart;
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        for seed in [20u64, 21, 22, 23, 24] {
            let x = chart_point(seed);
            let (a, b) = (rng.gen_range(0..7), rng.gen_range(0..7));
            let res = sff_residual(&chart, &x, a, b, &scheme).unwrap();
            assert!(res.identity_residual < 1e-4, "{}", res.identity_residual);
            assert!(res.normal_residual < 1e-4, "{}", res.normal_residual);
        }
        let t3k3 = crate::models::T3K3Chart::standard();
        for seed in [25u64, 26, 27, 28, 29] {
            let x = sample_near(&t3k3, &t3k3.standard_base(), 0.15, seed).unwrap();
            let n = t3k3.dimension();
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let res = sff_residual(&t3k3, &x, a, b, &scheme).unwrap();
            assert!(res.identity_residual < 1e-4, "{}", res.identity_residual);
            assert!(res.normal_residual < 1e-4, "{}", res.normal_residual);
        }
    }

    #[test]
    fn legendrian_and_isotropy() {
        let chart = FlatOrbifoldChart;
        let space = flat_space();
        let mut rng = ChaCha8Rng::seed_from_u64(58);
        let h = 1e-4;
        for seed in [30u64, 31, 32] {
            let x = slice_point(seed);
            let wline: Vec<f64> =
                slice_direction(&(0..7).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
            let w0 = line_representative(&chart, &x).unwrap();
            let wv = |t: f64| line_representative(&chart, &slice_curve(&x, &wline, t)).unwrap();
            let wdot = (wv(h) - wv(-h)) / (2.0 * h);
            let alpha = contact_alpha(&space, &w0, &wdot).unwrap();
            assert!(alpha.abs() < 1e-6, "alpha = {alpha}");
            // second Legendrian velocity at the same point
            let wline2: Vec<f64> =
                slice_direction(&(0..7).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
            let wv2 = |t: f64| line_representative(&chart, &slice_curve(&x, &wline2, t)).unwrap();
            let wdot2 = (wv2(h) - wv2(-h)) / (2.0 * h);
            let da = contact_dalpha(&space, &w0, &wdot, &wdot2).unwrap();
            assert!(da.abs() < 1e-6, "dalpha = {da}");
        }
        assert_eq!(
            contact_alpha(&space, &line_representative(&chart, &slice_point(33)).unwrap(), &DVector::zeros(14))
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn tangent_parametrization_rank() {
        // dim D = (n+1)^2 - n(n-1)/2 = 34 for n = 6: the map from p_H to
        // block-projector velocities has full rank
        let space = flat_space();
        let x = chart_point(40);
        let point = phi_map(&FlatOrbifoldChart, &x).unwrap();
        let basis = standard_basis(&space, &point).unwrap();
        let mut p_basis: Vec<DMatrix<f64>> = Vec::new();
        for i in 0..7 {
            for j in 0..7 {
                if i >= 1 && j >= 1 && j < i {
                    continue; // lower block: only upper triangle
                }
                let mut a = DMatrix::zeros(7, 7);
                a[(i, j)] = 1.0;
                if i >= 1 && j >= 1 && i != j {
                    a[(j, i)] = 1.0;
                }
                p_basis.push(a);
            }
        }
        assert_eq!(p_basis.len(), 34);
        let eps = 1e-5;
        let mut rows = DMatrix::zeros(34, 4 * 196);
        for (r, a) in p_basis.iter().enumerate() {
            let action = TangentRep { a: a.clone() }.ambient_action(&basis);
            let flow = (&action * eps).exp();
            let moved = HodgePoint {
                h3: &flow * &point.h3,
                h2: &flow * &point.h2,
                h1: &flow * &point.h1,
                h0: &flow * &point.h0,
            };
            let mut col = 0;
            for (b0, b1) in point.blocks().iter().zip(moved.blocks()) {
                let d = (orthogonal_projector(b1).unwrap()
                    - orthogonal_projector(b0).unwrap())
                    / eps;
                for v in d.iter() {
                    rows[(r, col)] = *v;
                    col += 1;
                }
            }
        }
        let sv = rows.svd(false, false).singular_values;
        let rank = sv.iter().filter(|&&s| s > 1e-3 * sv.max()).count();
        assert_eq!(rank, 34);
    }

    #[test]
    fn serialization_round_trip() {
        let point = phi_map(&FlatOrbifoldChart, &[1.0; 7]).unwrap();
        let v = point.to_json();
        assert_eq!(v["H2_block"].as_array().unwrap().len(), 6);
        let rep = TangentRep::new(DMatrix::identity(7, 7)).unwrap();
        assert_eq!(rep.to_json()["a_matrix"][0][0], 1.0);
        let phi0 = standard_phi();
        assert_eq!(class3(&phi0), DVector::from_element(7, 1.0));
    }
}
