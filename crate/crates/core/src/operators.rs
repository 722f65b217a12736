//! Dense Hermitian linear algebra: eigendecompositions, spectral projectors,
//! functional calculus, commutators and operator norms.
//!
//! All tolerances are relative to `max(1, ‖H‖)` unless stated otherwise.

use std::ops::Range;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative size of the anti-Hermitian part above which construction is refused
/// instead of silently symmetrized.
const HERMITIAN_REJECT: f64 = 1e-6;
const UNITARY_TOL: f64 = 1e-10;
const RECONSTRUCTION_TOL: f64 = 1e-10;
/// Relative eigenvalue spacing below which eigenvalues form one group.
pub const DEGENERACY_TOL: f64 = 1e-10;
pub const WINDOW_MARGIN: f64 = 1e-9;
const PROJECTOR_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-8;
/// Largest dimension for which decompositions supplied in closed form are
/// checked densely; above it a few random probes are used.
const DENSE_CHECK_LIMIT: usize = 256;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest singular value.
pub fn operator_norm(a: &CMatrix) -> Result<f64> {
    if !is_finite(a) {
        return Err(Error::NonFinite { context: "operator_norm input" });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    if a.ncols() == 1 || a.nrows() == 1 {
        return Ok(a.norm());
    }
    Ok(a.singular_values().max())
}

/// Operator norm for matrices already known to be finite.
pub(crate) fn norm2(a: &CMatrix) -> f64 {
    if a.is_empty() {
        0.0
    } else if a.ncols() == 1 || a.nrows() == 1 {
        a.norm()
    } else {
        a.singular_values().max()
    }
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            left: format!("{:?}", a.shape()),
            right: format!("{:?}", b.shape()),
        });
    }
    Ok(a * b - b * a)
}

/// A dense self-adjoint matrix. The stored matrix is exactly Hermitian.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    /// Symmetrizes `matrix`, refusing inputs whose anti-Hermitian part is not
    /// roundoff-sized.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let (rows, cols) = matrix.shape();
        if rows != cols || rows == 0 {
            return Err(Error::NotSquare { rows, cols });
        }
        if !is_finite(&matrix) {
            return Err(Error::NonFinite { context: "Hermitian operator entries" });
        }
        let defect = (&matrix - matrix.adjoint()).norm() * 0.5;
        let scale = matrix.norm().max(1.0);
        if defect > HERMITIAN_REJECT * scale {
            return Err(Error::NotHermitian { defect });
        }
        Ok(Self::from_hermitian_part(matrix))
    }

    /// `(M + M†)/2` without validation.
    pub fn from_hermitian_part(matrix: CMatrix) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "Hermitian operator must be square");
        let adj = matrix.adjoint();
        Self { matrix: (matrix + adj) * c64(0.5, 0.0) }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self { matrix: CMatrix::from_fn(n, n, |i, j| if i == j { c64(values[i], 0.0) } else { C64::ZERO }) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { matrix: CMatrix::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.matrix)
    }

    /// `self + shift·I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut m = self.matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
        Self { matrix: m }
    }
}

/// `H = V diag(λ) V†` with ascending eigenvalues and a fixed eigenvector gauge:
/// the largest-magnitude component of each eigenvector is real and positive.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
    scale: f64,
}

fn fix_phase(v: &mut CMatrix) {
    for mut col in v.column_iter_mut() {
        let max = col.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        if max == 0.0 {
            continue;
        }
        // first component within roundoff of the maximum, so ties are resolved by index
        let pivot = col.iter().position(|z| z.norm() >= max * (1.0 - 1e-12)).unwrap_or(0);
        let z = col[pivot];
        let phase = z.conj() / z.norm();
        col.iter_mut().for_each(|x| *x *= phase);
    }
}

pub fn decompose(h: &HermitianOperator) -> Result<SpectralDecomposition> {
    let n = h.dim();
    let m = h.matrix();
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 1000 * n.max(10)).ok_or_else(|| {
        let diag_max = (0..n).map(|i| m[(i, i)].norm()).fold(0.0, f64::max);
        let diag_min = (0..n).map(|i| m[(i, i)].norm()).fold(f64::INFINITY, f64::min);
        Error::EigenNonConvergence { dim: n, condition: diag_max / diag_min.max(f64::MIN_POSITIVE) }
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    fix_phase(&mut eigenvectors);
    let scale = eigenvalues.iter().fold(1.0_f64, |acc, x| acc.max(x.abs()));
    let d = SpectralDecomposition { eigenvalues, eigenvectors, scale };

    let unitarity = unitarity_defect(&d.eigenvectors);
    if unitarity > UNITARY_TOL {
        return Err(Error::InaccurateDecomposition { dim: n, what: "‖V†V − I‖", value: unitarity });
    }
    let residual = frobenius_then_norm(&(d.reconstruct() - m));
    if residual > RECONSTRUCTION_TOL * scale {
        return Err(Error::InaccurateDecomposition { dim: n, what: "‖VΛV† − H‖", value: residual });
    }
    Ok(d)
}

/// Frobenius norm bounds the operator norm from above; only fall back to the
/// SVD when the cheap bound is not already small.
fn frobenius_then_norm(a: &CMatrix) -> f64 {
    let f = a.norm();
    if f <= 1e-13 {
        f
    } else {
        norm2(a)
    }
}

pub(crate) fn unitarity_defect(v: &CMatrix) -> f64 {
    let k = v.ncols();
    let gram = v.adjoint() * v - CMatrix::identity(k, k);
    frobenius_then_norm(&gram)
}

impl SpectralDecomposition {
    /// Assembles a decomposition known in closed form. Eigenvalues must be
    /// ascending and the eigenvector matrix unitary; the gauge is normalized.
    pub fn from_parts(eigenvalues: Vec<f64>, mut eigenvectors: CMatrix) -> Result<Self> {
        let n = eigenvalues.len();
        if eigenvectors.shape() != (n, n) || n == 0 {
            return Err(Error::DimensionMismatch {
                left: format!("{} eigenvalues", n),
                right: format!("{:?} eigenvector matrix", eigenvectors.shape()),
            });
        }
        if eigenvalues.iter().any(|x| !x.is_finite()) || !is_finite(&eigenvectors) {
            return Err(Error::NonFinite { context: "closed-form decomposition" });
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("eigenvalues", "must be sorted ascending"));
        }
        let defect = if n <= DENSE_CHECK_LIMIT {
            unitarity_defect(&eigenvectors)
        } else {
            probe_unitarity(&eigenvectors)
        };
        if defect > UNITARY_TOL {
            return Err(Error::InaccurateDecomposition { dim: n, what: "‖V†V − I‖", value: defect });
        }
        fix_phase(&mut eigenvectors);
        let scale = eigenvalues.iter().fold(1.0_f64, |acc, x| acc.max(x.abs()));
        Ok(Self { eigenvalues, eigenvectors, scale })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    /// `max(1, ‖H‖)`, the reference scale for tolerances.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Index ranges of eigenvalues equal within `DEGENERACY_TOL · scale`.
    pub fn groups(&self) -> Vec<Range<usize>> {
        let tol = DEGENERACY_TOL * self.scale;
        let mut groups = Vec::new();
        let mut start = 0;
        for i in 1..=self.dim() {
            if i == self.dim() || self.eigenvalues[i] - self.eigenvalues[i - 1] > tol {
                groups.push(start..i);
                start = i;
            }
        }
        groups
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.function_matrix(|x| x)
    }

    pub(crate) fn function_matrix(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let mut scaled = self.eigenvectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= c64(f(self.eigenvalues[j]), 0.0);
        }
        scaled * self.eigenvectors.adjoint()
    }

    /// `f(H)·block` without forming `f(H)`; costs O(n²k).
    pub fn apply_function_to(&self, f: impl Fn(f64) -> f64, block: &CMatrix) -> CMatrix {
        let mut coeffs = self.eigenvectors.adjoint() * block;
        for (j, mut row) in coeffs.row_iter_mut().enumerate() {
            row *= c64(f(self.eigenvalues[j]), 0.0);
        }
        &self.eigenvectors * coeffs
    }

    /// Columns of `V` for the given eigenvalue indices.
    pub fn eigenvector_block(&self, indices: &[usize]) -> CMatrix {
        CMatrix::from_fn(self.dim(), indices.len(), |r, c| self.eigenvectors[(r, indices[c])])
    }
}

fn probe_unitarity(v: &CMatrix) -> f64 {
    let n = v.ncols();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..4 {
        let x = CVector::from_fn(n, |_, _| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let x = &x / c64(x.norm(), 0.0);
        let y = v.adjoint() * (v * &x) - &x;
        worst = worst.max(y.norm());
    }
    worst
}

/// Closed energy interval used to select eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn around(center: f64, half_width: f64) -> Self {
        Self { lo: center - half_width, hi: center + half_width }
    }
}

/// Orthogonal projector `P = QQ†` held through an orthonormal basis `Q`.
/// The dense matrix is materialized on first use.
#[derive(Clone, Debug)]
pub struct Projector {
    basis: CMatrix,
    matrix: OnceLock<CMatrix>,
}

impl Projector {
    /// `basis` must have orthonormal columns.
    pub fn from_basis(basis: CMatrix) -> Result<Self> {
        if !is_finite(&basis) {
            return Err(Error::NonFinite { context: "projector basis" });
        }
        let defect = unitarity_defect(&basis);
        if defect > PROJECTOR_TOL {
            return Err(Error::NotProjector { reason: format!("basis not orthonormal ({defect:.3e})") });
        }
        Ok(Self::from_orthonormal(basis))
    }

    pub(crate) fn from_orthonormal(basis: CMatrix) -> Self {
        Self { basis, matrix: OnceLock::new() }
    }

    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        let (rows, cols) = m.shape();
        if rows != cols || rows == 0 {
            return Err(Error::NotSquare { rows, cols });
        }
        let herm = operator_norm(&(&m - m.adjoint()))?;
        if herm > PROJECTOR_TOL {
            return Err(Error::NotProjector { reason: format!("‖P − P†‖ = {herm:.3e}") });
        }
        let idem = norm2(&(&m * &m - &m));
        if idem > PROJECTOR_TOL {
            return Err(Error::NotProjector { reason: format!("‖P² − P‖ = {idem:.3e}") });
        }
        let trace = m.trace().re;
        let rank = trace.round();
        if (trace - rank).abs() > RANK_TOL {
            return Err(Error::NotProjector { reason: format!("non-integral trace {trace}") });
        }
        let d = decompose(&HermitianOperator::from_hermitian_part(m.clone()))?;
        let idx: Vec<usize> = (0..rows).filter(|&j| d.eigenvalues[j] > 0.5).collect();
        let basis = d.eigenvector_block(&idx);
        let p = Self::from_orthonormal(basis);
        let _ = p.matrix.set(m);
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn matrix(&self) -> &CMatrix {
        self.matrix.get_or_init(|| &self.basis * self.basis.adjoint())
    }

    /// `P·block` through the basis.
    pub fn apply(&self, block: &CMatrix) -> CMatrix {
        &self.basis * (self.basis.adjoint() * block)
    }

    /// `(1 − P)·block`.
    pub fn complement_apply(&self, block: &CMatrix) -> CMatrix {
        block - self.apply(block)
    }

    /// `trace(P Q)` for another projector `Q`.
    pub fn overlap(&self, other: &Projector) -> f64 {
        (self.basis.adjoint() * &other.basis).norm_squared()
    }
}

pub fn spectral_projector(d: &SpectralDecomposition, window: Window) -> Result<Projector> {
    let mut idx = Vec::new();
    for (j, &lambda) in d.eigenvalues.iter().enumerate() {
        for boundary in [window.lo, window.hi] {
            if (lambda - boundary).abs() <= WINDOW_MARGIN {
                return Err(Error::WindowBoundary { eigenvalue: lambda, boundary });
            }
        }
        if lambda > window.lo && lambda < window.hi {
            idx.push(j);
        }
    }
    Ok(Projector::from_orthonormal(d.eigenvector_block(&idx)))
}

/// `f(H) = V diag(f(λ)) V†`.
pub fn apply_function(d: &SpectralDecomposition, f: impl Fn(f64) -> f64) -> Result<HermitianOperator> {
    for &lambda in &d.eigenvalues {
        if !f(lambda).is_finite() {
            return Err(Error::Domain { eigenvalue: lambda });
        }
    }
    Ok(HermitianOperator::from_hermitian_part(d.function_matrix(f)))
}

/// `Σ_{j ∉ excluded} λ_j⁻¹ v_j v_j†`.
pub fn reduced_resolvent(d: &SpectralDecomposition, excluded: &[usize]) -> Result<HermitianOperator> {
    for (j, &lambda) in d.eigenvalues.iter().enumerate() {
        if !excluded.contains(&j) && lambda.abs() <= 1e-12 {
            return Err(Error::SingularResolvent { eigenvalue: lambda, index: j });
        }
    }
    let inv = |j: usize| if excluded.contains(&j) { 0.0 } else { 1.0 / d.eigenvalues[j] };
    let mut scaled = d.eigenvectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= c64(inv(j), 0.0);
    }
    Ok(HermitianOperator::from_hermitian_part(scaled * d.eigenvectors.adjoint()))
}

/// Random test matrices.
pub mod random {
    use super::*;

    pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            c64(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        })
    }

    /// GUE-like matrix `(G + G†)/2`.
    pub fn hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> HermitianOperator {
        HermitianOperator::from_hermitian_part(gaussian_matrix(rng, n, n))
    }

    /// Haar-ish unitary from the QR factorization of a complex Gaussian matrix.
    pub fn unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
        let qr = gaussian_matrix(rng, n, n).qr();
        let (q, r) = qr.unpack();
        let mut q = q;
        for (j, mut col) in q.column_iter_mut().enumerate() {
            let d = r[(j, j)];
            if d.norm() > 0.0 {
                col *= d / d.norm();
            }
        }
        q
    }

    /// Hermitian matrix with prescribed spectrum in a random basis.
    pub fn with_spectrum<R: Rng + ?Sized>(rng: &mut R, eigenvalues: &[f64]) -> HermitianOperator {
        let n = eigenvalues.len();
        let u = unitary(rng, n);
        let mut scaled = u.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= c64(eigenvalues[j], 0.0);
        }
        HermitianOperator::from_hermitian_part(scaled * u.adjoint())
    }

    pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
        let v = gaussian_matrix(rng, n, 1).column(0).into_owned();
        let norm = v.norm();
        v / c64(norm, 0.0)
    }
}

pub fn real_vector(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn pauli() -> [CMatrix; 3] {
        let i = c64(0.0, 1.0);
        let o = C64::ZERO;
        let one = c64(1.0, 0.0);
        [
            CMatrix::from_row_slice(2, 2, &[o, one, one, o]),
            CMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
            CMatrix::from_row_slice(2, 2, &[one, o, o, -one]),
        ]
    }

    #[test]
    fn identity_and_diagonal_cases() {
        let d = decompose(&HermitianOperator::diagonal(&[1.0, 1.0])).unwrap();
        assert_eq!(d.eigenvalues(), &[1.0, 1.0]);
        assert!(unitarity_defect(d.eigenvectors()) < 1e-14);
        assert_eq!(d.groups(), vec![0..2]);

        let d = decompose(&HermitianOperator::diagonal(&[3.0, -1.0])).unwrap();
        assert_eq!(d.eigenvalues(), &[-1.0, 3.0]);
        // gauge: largest component real positive, so V is the swap permutation exactly
        assert!((d.eigenvectors()[(1, 0)] - c64(1.0, 0.0)).norm() < 1e-14);
        assert!((d.eigenvectors()[(0, 1)] - c64(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = random::hermitian(&mut rng, 8);
        let d = decompose(&h).unwrap();
        let residual = operator_norm(&(d.reconstruct() - h.matrix())).unwrap();
        assert!(residual <= 1e-10 * h.norm().max(1.0), "{residual}");
        assert!(d.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn gauge_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random::hermitian(&mut rng, 6);
        let a = decompose(&h).unwrap();
        let b = decompose(&h.clone()).unwrap();
        assert_eq!(a.eigenvectors(), b.eigenvectors());
        for col in a.eigenvectors().column_iter() {
            let pivot = col.iter().max_by(|x, y| x.norm().total_cmp(&y.norm())).unwrap();
            assert!(pivot.im.abs() < 1e-14 && pivot.re > 0.0);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[C64::ZERO, c64(1.0, 0.0), C64::ZERO, C64::ZERO]);
        assert!(matches!(HermitianOperator::new(m), Err(Error::NotHermitian { .. })));
        let m = CMatrix::zeros(2, 3);
        assert!(matches!(HermitianOperator::new(m), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn projector_windows() {
        let d = decompose(&HermitianOperator::diagonal(&[0.0, 1.0])).unwrap();
        let p = spectral_projector(&d, Window::new(-0.5, 0.5)).unwrap();
        assert_eq!(p.rank(), 1);
        let expected = CMatrix::from_row_slice(2, 2, &[c64(1.0, 0.0), C64::ZERO, C64::ZERO, C64::ZERO]);
        assert!((p.matrix() - expected).norm() < 1e-15);

        let p = spectral_projector(&d, Window::new(-5.0, 5.0)).unwrap();
        assert_eq!(p.rank(), 2);
        assert!((p.matrix() - CMatrix::identity(2, 2)).norm() < 1e-15);

        let err = spectral_projector(&d, Window::new(-0.5, 1.0 + 1e-10)).unwrap_err();
        assert!(matches!(err, Error::WindowBoundary { .. }));
    }

    #[test]
    fn projector_selects_eigenvector() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random::with_spectrum(&mut rng, &[-2.0, -1.0, 0.0, 0.5, 1.5, 3.0]);
        let d = decompose(&h).unwrap();
        let p = spectral_projector(&d, Window::around(d.eigenvalues()[2], 0.2)).unwrap();
        for j in 0..6 {
            let v = d.eigenvector_block(&[j]);
            let pv = p.apply(&v);
            let expected = if j == 2 { v.clone() } else { CMatrix::zeros(6, 1) };
            assert!((pv - expected).norm() < 1e-12, "column {j}");
        }
        let m = p.matrix();
        assert!(norm2(&(m * m - m)) < 1e-10);
        assert!(norm2(&(m - m.adjoint())) < 1e-10);
        assert!((m.trace().re - 1.0).abs() < 1e-8);
    }

    #[test]
    fn projector_from_matrix_validates() {
        let p = Projector::from_matrix(CMatrix::identity(3, 3) * c64(0.5, 0.0));
        assert!(matches!(p, Err(Error::NotProjector { .. })));
        let p = Projector::from_matrix(HermitianOperator::diagonal(&[1.0, 0.0, 1.0]).into_matrix()).unwrap();
        assert_eq!(p.rank(), 2);
    }

    #[test]
    fn functional_calculus() {
        let h = HermitianOperator::diagonal(&[0.0, 0.7]);
        let d = decompose(&h).unwrap();
        let id = apply_function(&d, |x| x).unwrap();
        assert!((id.matrix() - h.matrix()).norm() < 1e-15);

        let delta: f64 = 0.7;
        let g = apply_function(&d, |x| (-std::f64::consts::PI * x * x / (delta * delta)).exp()).unwrap();
        assert!((g.matrix()[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!((g.matrix()[(1, 1)].re - (-std::f64::consts::PI).exp()).abs() < 1e-15);

        let err = apply_function(&d, |x| 1.0 / x).unwrap_err();
        assert!(matches!(err, Error::Domain { eigenvalue } if eigenvalue == 0.0));
    }

    #[test]
    fn square_function_matches_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random::hermitian(&mut rng, 8);
        let d = decompose(&h).unwrap();
        let sq = apply_function(&d, |x| x * x).unwrap();
        let prod = h.matrix() * h.matrix();
        assert!(norm2(&(sq.matrix() - &prod)) < 1e-10);
        let comm = commutator(sq.matrix(), h.matrix()).unwrap();
        assert!(norm2(&comm) < 1e-9);
    }

    #[test]
    fn reduced_resolvent_cases() {
        let d = decompose(&HermitianOperator::diagonal(&[0.0, 2.0])).unwrap();
        let r = reduced_resolvent(&d, &[0]).unwrap();
        assert!((r.matrix() - HermitianOperator::diagonal(&[0.0, 0.5]).matrix()).norm() < 1e-15);

        let d = decompose(&HermitianOperator::diagonal(&[0.0, 1.0, -1.0])).unwrap();
        let zero = d.eigenvalues().iter().position(|&x| x == 0.0).unwrap();
        let r = reduced_resolvent(&d, &[zero]).unwrap();
        assert!((r.matrix() - HermitianOperator::diagonal(&[0.0, 1.0, -1.0]).matrix()).norm() < 1e-15);

        let err = reduced_resolvent(&d, &[]).unwrap_err();
        assert!(matches!(err, Error::SingularResolvent { .. }));
    }

    #[test]
    fn reduced_resolvent_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = random::hermitian(&mut rng, 6);
        let d0 = decompose(&h).unwrap();
        let shifted = h.shifted(-d0.eigenvalues()[3]);
        let d = decompose(&shifted).unwrap();
        let k = d.eigenvalues().iter().enumerate().min_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap().0;
        let r = reduced_resolvent(&d, &[k]).unwrap();
        let p = Projector::from_orthonormal(d.eigenvector_block(&[k]));
        let id = CMatrix::identity(6, 6);
        assert!(norm2(&(r.matrix() * shifted.matrix() - (&id - p.matrix()))) < 1e-9);
        assert!(norm2(&(shifted.matrix() * r.matrix() - (&id - p.matrix()))) < 1e-9);
        assert!(norm2(&(r.matrix() * p.matrix())) < 1e-9);
    }

    #[test]
    fn operator_norm_cases() {
        assert_eq!(operator_norm(&CMatrix::zeros(3, 3)).unwrap(), 0.0);
        let d = HermitianOperator::diagonal(&[3.0, -4.0]);
        assert!((operator_norm(d.matrix()).unwrap() - 4.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random::gaussian_matrix(&mut rng, 8, 8);
        let gram = HermitianOperator::from_hermitian_part(a.adjoint() * &a);
        let top = *decompose(&gram).unwrap().eigenvalues().last().unwrap();
        let n = operator_norm(&a).unwrap();
        assert!((n - top.sqrt()).abs() <= 1e-10 * n);

        let mut bad = CMatrix::zeros(2, 2);
        bad[(0, 1)] = c64(f64::NAN, 0.0);
        assert!(operator_norm(&bad).is_err());
    }

    #[test]
    fn commutator_identities() {
        let [sx, sy, sz] = pauli();
        let c = commutator(&sx, &sy).unwrap();
        assert!((c - sz * c64(0.0, 2.0)).norm() < 1e-15);
        assert!(commutator(&sx, &sx).unwrap().norm() == 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random::gaussian_matrix(&mut rng, 5, 5);
        let b = random::gaussian_matrix(&mut rng, 5, 5);
        let ab = commutator(&a, &b).unwrap();
        let ba = commutator(&b, &a).unwrap();
        assert!((ab + ba).norm() < 1e-13);
        assert!(commutator(&a, &CMatrix::zeros(4, 4)).is_err());
    }
}
