//! Exact multilinear algebra on the exterior algebra of the dual of R^7.
//!
//! Forms are stored as dense coefficient arrays over the lexicographically
//! ordered basis monomials of each degree. All sign conventions are fixed
//! here: the monomial `e^{i1 < ... < ik}` and the wedge sign given by the
//! parity of the merge permutation. Every other module inherits them.

use nalgebra::{SMatrix, SVector};
use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DIM: usize = 7;

pub type Matrix7 = SMatrix<f64, 7, 7>;
pub type Vector7 = SVector<f64, 7>;

/// Endomorphism of R^7 in the standard basis.
pub type Endo7 = Matrix7;

#[derive(Debug, Error, PartialEq)]
pub enum ExteriorError {
    #[error("degree exceeds 7")]
    DegreeOverflow,
    #[error("degrees do not match: {0} vs {1}")]
    DegreeMismatch(usize, usize),
    #[error("cannot contract scalar")]
    ContractScalar,
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut num = 1usize;
    for i in 0..k {
        num = num * (n - i) / (i + 1);
    }
    num
}

struct DegreeTable {
    /// Sorted index tuples, lexicographic order.
    subsets: Vec<Vec<u8>>,
    /// Bitmask of each subset, same order.
    masks: Vec<u8>,
    /// Position of a mask in `masks`, or usize::MAX.
    position: [usize; 128],
}

fn combinations(n: u8, k: usize) -> Vec<Vec<u8>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut idx: Vec<u8> = (0..k as u8).collect();
    loop {
        out.push(idx.clone());
        // advance to next combination in lex order
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] < n - (k - i) as u8 {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

static TABLES: Lazy<Vec<DegreeTable>> = Lazy::new(|| {
    (0..=DIM)
        .map(|k| {
            let subsets = combinations(DIM as u8, k);
            let masks: Vec<u8> = subsets
                .iter()
                .map(|s| s.iter().fold(0u8, |m, &i| m | (1 << i)))
                .collect();
            let mut position = [usize::MAX; 128];
            for (p, &m) in masks.iter().enumerate() {
                position[m as usize] = p;
            }
            DegreeTable {
                subsets,
                masks,
                position,
            }
        })
        .collect()
});

fn table(k: usize) -> &'static DegreeTable {
    &TABLES[k]
}

/// Sign of merging the monomial with mask `a` in front of the monomial with
/// mask `b` (disjoint), relative to the sorted monomial on `a | b`.
fn merge_sign(a: u8, b: u8) -> f64 {
    debug_assert_eq!(a & b, 0);
    let mut inversions = 0u32;
    for i in 0..DIM as u8 {
        if b & (1 << i) != 0 {
            inversions += (a >> (i + 1)).count_ones();
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// A strictly increasing tuple of indices in 1..=7 labelling a basis
/// monomial. Only used at API boundaries and for serialization; internally
/// everything is positional over the lex tables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u8>);

impl MultiIndex {
    /// Indices are 1-based and must be strictly increasing.
    pub fn new(indices: &[u8]) -> Option<Self> {
        if indices.len() > DIM {
            return None;
        }
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return None;
            }
        }
        if indices.iter().any(|&i| i < 1 || i > 7) {
            return None;
        }
        Some(MultiIndex(indices.to_vec()))
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn indices(&self) -> &[u8] {
        &self.0
    }

    fn position(&self) -> usize {
        let mask = self.0.iter().fold(0u8, |m, &i| m | (1 << (i - 1)));
        table(self.0.len()).position[mask as usize]
    }
}

impl std::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in &self.0 {
            write!(f, "{i}")?;
        }
        Ok(())
    }
}

/// A degree-k alternating form on R^7 as a dense coefficient array over the
/// lexicographically ordered basis monomials.
#[derive(Debug, Clone, PartialEq)]
pub struct AltForm {
    degree: usize,
    coeffs: Vec<f64>,
}

impl AltForm {
    pub fn zero(degree: usize) -> Self {
        assert!(degree <= DIM);
        AltForm {
            degree,
            coeffs: vec![0.0; binomial(DIM, degree)],
        }
    }

    pub fn from_coeffs(degree: usize, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), binomial(DIM, degree));
        AltForm { degree, coeffs }
    }

    /// Basis monomial from 1-based strictly increasing indices, e.g.
    /// `AltForm::monomial(&[1, 2, 3])` is e^123.
    pub fn monomial(indices: &[u8]) -> Self {
        let mi = MultiIndex::new(indices).expect("invalid multi-index");
        let mut form = AltForm::zero(mi.degree());
        form.coeffs[mi.position()] = 1.0;
        form
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, mi: &MultiIndex) -> f64 {
        assert_eq!(mi.degree(), self.degree);
        self.coeffs[mi.position()]
    }

    pub fn set_coeff(&mut self, mi: &MultiIndex, value: f64) {
        assert_eq!(mi.degree(), self.degree);
        self.coeffs[mi.position()] = value;
    }

    pub fn scale(&self, s: f64) -> AltForm {
        AltForm {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add(&self, other: &AltForm) -> Result<AltForm, ExteriorError> {
        if self.degree != other.degree {
            return Err(ExteriorError::DegreeMismatch(self.degree, other.degree));
        }
        Ok(AltForm {
            degree: self.degree,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &AltForm) -> Result<AltForm, ExteriorError> {
        self.add(&other.scale(-1.0))
    }

    pub fn norm_inf(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    /// Euclidean norm of the coefficient array (not a metric norm).
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Monomials of this form's degree in lexicographic order.
    pub fn basis_indices(degree: usize) -> Vec<MultiIndex> {
        table(degree)
            .subsets
            .iter()
            .map(|s| MultiIndex(s.iter().map(|&i| i + 1).collect()))
            .collect()
    }

    pub fn to_records(&self) -> Vec<AltFormRecord> {
        AltForm::basis_indices(self.degree)
            .iter()
            .zip(&self.coeffs)
            .map(|(mi, &c)| AltFormRecord {
                index: mi.to_string(),
                coeff: c,
            })
            .collect()
    }
}

/// JSON serialization record for a single monomial coefficient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AltFormRecord {
    pub index: String,
    pub coeff: f64,
}

/// Exterior product. The coefficient of each monomial is the signed shuffle
/// sum over disjoint mask pairs.
pub fn wedge(a: &AltForm, b: &AltForm) -> Result<AltForm, ExteriorError> {
    let k = a.degree + b.degree;
    if k > DIM {
        return Err(ExteriorError::DegreeOverflow);
    }
    let ta = table(a.degree);
    let tb = table(b.degree);
    let tk = table(k);
    let mut out = AltForm::zero(k);
    for (ia, &ma) in ta.masks.iter().enumerate() {
        let ca = a.coeffs[ia];
        if ca == 0.0 {
            continue;
        }
        for (ib, &mb) in tb.masks.iter().enumerate() {
            if ma & mb != 0 {
                continue;
            }
            let cb = b.coeffs[ib];
            if cb == 0.0 {
                continue;
            }
            let pos = tk.position[(ma | mb) as usize];
            out.coeffs[pos] += merge_sign(ma, mb) * ca * cb;
        }
    }
    Ok(out)
}

/// Interior product of a vector and a form; the degree drops by one.
pub fn interior(v: &Vector7, a: &AltForm) -> Result<AltForm, ExteriorError> {
    if a.degree == 0 {
        return Err(ExteriorError::ContractScalar);
    }
    let ta = table(a.degree);
    let tout = table(a.degree - 1);
    let mut out = AltForm::zero(a.degree - 1);
    for (ia, subset) in ta.subsets.iter().enumerate() {
        let ca = a.coeffs[ia];
        if ca == 0.0 {
            continue;
        }
        let mask = ta.masks[ia];
        for (j, &idx) in subset.iter().enumerate() {
            let vi = v[idx as usize];
            if vi == 0.0 {
                continue;
            }
            let rest = mask & !(1 << idx);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            out.coeffs[tout.position[rest as usize]] += sign * vi * ca;
        }
    }
    Ok(out)
}

/// The degree-0 derivation h . eta, i.e. the derivative at t = 0 of the
/// pullback of eta by exp(t h). On a 1-form it is composition with h.
pub fn delta_action(h: &Endo7, a: &AltForm) -> AltForm {
    let ta = table(a.degree);
    let mut out = AltForm::zero(a.degree);
    for (ia, subset) in ta.subsets.iter().enumerate() {
        let ca = a.coeffs[ia];
        if ca == 0.0 {
            continue;
        }
        let mask = ta.masks[ia];
        // replace index i_m by j in every slot
        for (m, &im) in subset.iter().enumerate() {
            for j in 0..DIM as u8 {
                let hij = h[(im as usize, j as usize)];
                if hij == 0.0 {
                    continue;
                }
                if j == im {
                    out.coeffs[ia] += hij * ca;
                    continue;
                }
                if mask & (1 << j) != 0 {
                    continue; // repeated index kills the monomial
                }
                // sign: j replaces i_m in slot m and moves to its sorted slot
                let rest = mask & !(1 << im);
                let newmask = rest | (1 << j);
                let below_new = (rest & ((1u8 << j) - 1)).count_ones();
                let parity = (m as u32 + below_new) % 2;
                let sign = if parity == 0 { 1.0 } else { -1.0 };
                out.coeffs[ta.position[newmask as usize]] += sign * hij * ca;
            }
        }
    }
    out
}

/// Pullback of a form by a linear map A, i.e. (A^* eta)(v1,..,vk) =
/// eta(A v1,..,A vk). Coefficients are minors of A.
pub fn pullback(a_map: &Matrix7, form: &AltForm) -> AltForm {
    let k = form.degree;
    let t = table(k);
    let mut out = AltForm::zero(k);
    for (it, cols) in t.subsets.iter().enumerate() {
        let mut acc = 0.0;
        for (is, rows) in t.subsets.iter().enumerate() {
            let c = form.coeffs[is];
            if c == 0.0 {
                continue;
            }
            acc += c * minor(a_map, rows, cols);
        }
        out.coeffs[it] = acc;
    }
    out
}

fn minor(a: &Matrix7, rows: &[u8], cols: &[u8]) -> f64 {
    let k = rows.len();
    if k == 0 {
        return 1.0;
    }
    let mut m = nalgebra::DMatrix::<f64>::zeros(k, k);
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            m[(i, j)] = a[(r as usize, c as usize)];
        }
    }
    m.determinant()
}

/// An inner product on R^7 given by its symmetric positive definite Gram
/// matrix in the standard basis.
#[derive(Debug, Clone)]
pub struct Metric7 {
    gram: Matrix7,
    /// Lower Cholesky factor of the Gram matrix.
    chol_l: Matrix7,
}

impl Metric7 {
    pub fn new(gram: Matrix7) -> Result<Self, ExteriorError> {
        let asym = (gram - gram.transpose()).abs().max();
        if asym > 1e-12 * gram.abs().max().max(1.0) {
            return Err(ExteriorError::NotSymmetric);
        }
        let sym = (gram + gram.transpose()) * 0.5;
        let chol = nalgebra::Cholesky::new(sym).ok_or(ExteriorError::NotPositiveDefinite)?;
        Ok(Metric7 {
            gram: sym,
            chol_l: chol.l(),
        })
    }

    pub fn identity() -> Self {
        Metric7::new(Matrix7::identity()).unwrap()
    }

    pub fn gram(&self) -> &Matrix7 {
        &self.gram
    }

    pub fn det(&self) -> f64 {
        let d = self.chol_l.diagonal();
        let mut p = 1.0;
        for i in 0..DIM {
            p *= d[i] * d[i];
        }
        p
    }

    /// Coordinates of a form in the orthonormal coframe defined by the
    /// Cholesky factor (orientation-preserving since det L > 0).
    pub fn to_orthonormal(&self, a: &AltForm) -> AltForm {
        let linv_t = self
            .chol_l
            .try_inverse()
            .expect("Cholesky factor is invertible")
            .transpose();
        pullback(&linv_t, a)
    }

    pub fn from_orthonormal(&self, a: &AltForm) -> AltForm {
        pullback(&self.chol_l.transpose(), a)
    }

    /// Riemannian volume form sqrt(det g) e^{1..7}.
    pub fn volume_form(&self) -> AltForm {
        AltForm::monomial(&[1, 2, 3, 4, 5, 6, 7]).scale(self.det().sqrt())
    }
}

/// Hodge star for the metric g, computed in an orthonormal coframe where it
/// is a signed permutation of monomials.
pub fn hodge_star(g: &Metric7, a: &AltForm) -> AltForm {
    let k = a.degree;
    let ortho = g.to_orthonormal(a);
    let t = table(k);
    let tc = table(DIM - k);
    let mut starred = AltForm::zero(DIM - k);
    for (i, &mask) in t.masks.iter().enumerate() {
        let c = ortho.coeffs[i];
        if c == 0.0 {
            continue;
        }
        let comp = !mask & 0x7f;
        starred.coeffs[tc.position[comp as usize]] += merge_sign(mask, comp) * c;
    }
    g.from_orthonormal(&starred)
}

/// Inner product induced by g on degree-k forms (Gram determinant pairing).
pub fn lambda_inner(g: &Metric7, a: &AltForm, b: &AltForm) -> Result<f64, ExteriorError> {
    if a.degree != b.degree {
        return Err(ExteriorError::DegreeMismatch(a.degree, b.degree));
    }
    let oa = g.to_orthonormal(a);
    let ob = g.to_orthonormal(b);
    Ok(oa.coeffs.iter().zip(&ob.coeffs).map(|(x, y)| x * y).sum())
}

/// g-adjoint of an endomorphism: g^{-1} h^T g.
pub fn metric_adjoint(g: &Metric7, h: &Endo7) -> Endo7 {
    let gram = g.gram();
    let ginv = gram.try_inverse().expect("metric is invertible");
    ginv * h.transpose() * gram
}
