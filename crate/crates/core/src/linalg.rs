//! Field-generic dense linear algebra on square matrices.
//!
//! Decompositions are delegated to `nalgebra`; this module fixes the
//! conventions the rest of the crate relies on (descending singular values
//! and eigenvalues, explicit `V` rather than `Vᴴ`, absolute-plus-relative
//! tolerances) and adds the perturbation-bound utilities used by the
//! property suites.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use nalgebra::{ComplexField, RealField};
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::{Field, Real};

pub type Mat<T> = DMatrix<T>;

/// `U·diag(s)·Vᴴ` with `s` descending.
#[derive(Clone, Debug)]
pub struct SvdResult<T: Field> {
    pub u: Mat<T>,
    pub s: Vec<T::RealField>,
    pub v: Mat<T>,
}

impl<T: Field> SvdResult<T> {
    pub fn recompose(&self) -> Mat<T> {
        let mut us = self.u.clone();
        for (k, &sk) in self.s.iter().enumerate() {
            us.column_mut(k).scale_mut(sk);
        }
        us * self.v.adjoint()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms<R> {
    pub fro: R,
    pub op: R,
    pub sigma_min: R,
}

/// Result of the square-root perturbation inequality check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SqrtBound<R> {
    pub lhs: R,
    pub rhs: R,
    pub holds: bool,
}

pub fn identity<T: Field>(d: usize) -> Mat<T> {
    Mat::identity(d, d)
}

pub fn real_diag<T: Field>(diag: &[T::RealField]) -> Mat<T> {
    Mat::from_diagonal(&DVector::from_iterator(
        diag.len(),
        diag.iter().map(|&x| T::from_real(x)),
    ))
}

pub fn is_finite<T: Field>(m: &Mat<T>) -> bool {
    m.iter().all(|z| z.is_finite())
}

fn ensure_finite<T: Field>(m: &Mat<T>) -> Result<()> {
    if is_finite(m) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn ensure_square<T: Field>(m: &Mat<T>) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// `‖M − Mᴴ‖_F`.
pub fn hermitian_defect<T: Field>(m: &Mat<T>) -> T::RealField {
    (m - m.adjoint()).norm()
}

/// `‖QᴴQ − I‖_F`.
pub fn unitarity_residual<T: Field>(q: &Mat<T>) -> T::RealField {
    let d = q.ncols();
    (q.adjoint() * q - Mat::<T>::identity(d, d)).norm()
}

fn check_hermitian<T: Field>(h: &Mat<T>) -> Result<Mat<T>> {
    ensure_square(h)?;
    ensure_finite(h)?;
    let defect = hermitian_defect(h);
    let tol = T::RealField::lit(1e-10) * (T::RealField::one() + h.norm());
    if defect > tol {
        return Err(Error::NotHermitian {
            asymmetry: defect.as_f64(),
        });
    }
    Ok((h + h.adjoint()).unscale(T::RealField::lit(2.0)))
}

/// Indices of `values` sorted descending, ties kept in original order.
fn descending_order<R: Real>(values: &[R]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx
}

fn permute_columns<T: Field>(m: &Mat<T>, order: &[usize]) -> Mat<T> {
    Mat::from_fn(m.nrows(), order.len(), |i, k| m[(i, order[k])])
}

pub fn svd<T: Field>(m: &Mat<T>) -> Result<SvdResult<T>> {
    ensure_square(m)?;
    ensure_finite(m)?;
    let dec = m.clone().svd(true, true);
    let u = dec.u.ok_or(Error::NonFinite)?;
    let v_t = dec.v_t.ok_or(Error::NonFinite)?;
    let raw: Vec<T::RealField> = dec.singular_values.iter().copied().collect();
    let order = descending_order(&raw);
    let v = v_t.adjoint();
    Ok(SvdResult {
        u: permute_columns(&u, &order),
        s: order.iter().map(|&k| raw[k]).collect(),
        v: permute_columns(&v, &order),
    })
}

pub fn singular_values<T: Field>(m: &Mat<T>) -> Result<Vec<T::RealField>> {
    ensure_square(m)?;
    ensure_finite(m)?;
    let mut s: Vec<T::RealField> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(s)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues descending.
pub fn hermitian_eig<T: Field>(h: &Mat<T>) -> Result<(Vec<T::RealField>, Mat<T>)> {
    let sym = check_hermitian(h)?;
    let eig = sym.symmetric_eigen();
    let raw: Vec<T::RealField> = eig.eigenvalues.iter().copied().collect();
    let order = descending_order(&raw);
    Ok((
        order.iter().map(|&k| raw[k]).collect(),
        permute_columns(&eig.eigenvectors, &order),
    ))
}

/// Eigenvalues of a general square matrix, as complex numbers (complex Schur form).
pub fn eigenvalues<T: Field>(m: &Mat<T>) -> Result<Vec<Complex<T::RealField>>> {
    ensure_square(m)?;
    ensure_finite(m)?;
    let mc: Mat<Complex<T::RealField>> = m.map(|z| z.to_complex());
    let schur = mc.schur();
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|k| t[(k, k)]).collect())
}

pub fn norms<T: Field>(m: &Mat<T>) -> Result<Norms<T::RealField>> {
    let s = singular_values(m)?;
    let zero = T::RealField::zero();
    Ok(Norms {
        fro: m.norm(),
        op: s.first().copied().unwrap_or(zero),
        sigma_min: s.last().copied().unwrap_or(zero),
    })
}

pub fn op_norm<T: Field>(m: &Mat<T>) -> Result<T::RealField> {
    Ok(norms(m)?.op)
}

/// `σ_max/σ_min`; infinite when `σ_min` is exactly zero.
pub fn condition_number<T: Field>(m: &Mat<T>) -> Result<f64> {
    let n = norms(m)?;
    let (hi, lo) = (n.op.as_f64(), n.sigma_min.as_f64());
    Ok(if lo == 0.0 { f64::INFINITY } else { hi / lo })
}

/// Right polar decomposition `m = s·q` with `s = (m mᴴ)^{1/2}`.
pub fn polar_right<T: Field>(m: &Mat<T>) -> Result<(Mat<T>, Mat<T>)> {
    let dec = svd(m)?;
    let smax = dec.s.first().copied().unwrap_or_else(T::RealField::zero);
    let smin = dec.s.last().copied().unwrap_or_else(T::RealField::zero);
    if smax == T::RealField::zero() || smin <= T::RealField::lit(1e-13) * smax {
        let ratio = if smax == T::RealField::zero() {
            0.0
        } else {
            (smin / smax).as_f64()
        };
        return Err(Error::RankDeficient { ratio });
    }
    let mut us = dec.u.clone();
    for (k, &sk) in dec.s.iter().enumerate() {
        us.column_mut(k).scale_mut(sk);
    }
    let s = &us * dec.u.adjoint();
    let q = &dec.u * dec.v.adjoint();
    Ok((s, q))
}

/// Principal square root of a Hermitian PSD matrix; round-off negatives are
/// clamped to zero.
pub fn sqrt_psd<T: Field>(h: &Mat<T>) -> Result<Mat<T>> {
    let (lambda, q) = hermitian_eig(h)?;
    let op = lambda
        .iter()
        .fold(T::RealField::zero(), |acc, &l| acc.max(l.abs()));
    let lmin = lambda.last().copied().unwrap_or_else(T::RealField::zero);
    if lmin < -(T::RealField::lit(1e-10) * op) {
        return Err(Error::NotPsd {
            lambda_min: lmin.as_f64(),
        });
    }
    let mut qs = q.clone();
    for (k, &l) in lambda.iter().enumerate() {
        qs.column_mut(k).scale_mut(l.max(T::RealField::zero()).sqrt());
    }
    Ok(&qs * q.adjoint())
}

/// Checks `‖X^{1/2} − (X+Δ)^{1/2}‖_op ≤ ‖Δ‖_op / (2√(λ_min(X) − ‖Δ‖_op))`
/// for Hermitian `X ≻ ‖Δ‖_op·I`.
pub fn sqrt_perturbation_bound<T: Field>(
    x: &Mat<T>,
    delta: &Mat<T>,
) -> Result<SqrtBound<T::RealField>> {
    if x.shape() != delta.shape() {
        return Err(Error::DimMismatch("x and delta differ in shape".into()));
    }
    let (lx, _) = hermitian_eig(x)?;
    let (ld, _) = hermitian_eig(delta)?;
    let delta_op = ld
        .iter()
        .fold(T::RealField::zero(), |acc, &l| acc.max(l.abs()));
    let lmin = lx.last().copied().unwrap_or_else(T::RealField::zero);
    let margin = lmin - delta_op;
    if margin < T::RealField::lit(1e-10) {
        return Err(Error::PreconditionViolated(format!(
            "lambda_min(x) - |delta|_op = {} < 1e-10",
            margin
        )));
    }
    let lhs = op_norm(&(sqrt_psd(x)? - sqrt_psd(&(x + delta))?))?;
    let rhs = delta_op / (T::RealField::lit(2.0) * margin.sqrt());
    Ok(SqrtBound {
        lhs,
        rhs,
        holds: lhs <= rhs + T::RealField::lit(1e-12),
    })
}

fn guarded_inverse<T: Field>(m: &Mat<T>) -> Result<Mat<T>> {
    let n = norms(m)?;
    if n.op == T::RealField::zero() || n.sigma_min <= T::RealField::lit(1e-12) * n.op {
        return Err(Error::Singular);
    }
    m.clone().try_inverse().ok_or(Error::Singular)
}

/// Frobenius norm of
/// `(X+Δ)⁻¹ − (X⁻¹ − X⁻¹ΔX⁻¹) − X⁻¹ΔX⁻¹Δ(X+Δ)⁻¹`, which vanishes identically
/// for invertible `X`, `X+Δ`.
pub fn inverse_perturbation_residual<T: Field>(x: &Mat<T>, delta: &Mat<T>) -> Result<T::RealField> {
    if x.shape() != delta.shape() {
        return Err(Error::DimMismatch("x and delta differ in shape".into()));
    }
    let xi = guarded_inverse(x)?;
    let xdi = guarded_inverse(&(x + delta))?;
    let first_order = &xi - &xi * delta * &xi;
    let remainder = &xi * delta * &xi * delta * &xdi;
    Ok((xdi - first_order - remainder).norm())
}

/// Sign of `det(m)` over ℝ (±1, or 0 when numerically singular) and the
/// phase `det/|det|` over ℂ.
pub fn det_sign_or_phase<T: Field>(m: &Mat<T>) -> T {
    if !is_finite(m) || !m.is_square() {
        return T::zero();
    }
    let det = m.clone().determinant();
    if det.clone().modulus() < T::RealField::lit(1e-300) {
        T::zero()
    } else {
        det.unit_phase()
    }
}

/// Solves `a·x = b`.
pub fn solve<T: Field>(a: &Mat<T>, b: &Mat<T>) -> Result<Mat<T>> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimMismatch("solve: row count mismatch".into()));
    }
    a.clone().lu().solve(b).ok_or(Error::Singular)
}

/// Spectra of `I − RRᴴ` and `I − RᴴR` computed independently with the
/// general (non-Hermitian) eigen-solver.
#[derive(Clone, Copy, Debug)]
pub struct GramComplementCheck {
    /// Largest gap between the two sorted spectra (real parts).
    pub max_gap: f64,
    /// Largest imaginary part seen in either spectrum.
    pub max_imag: f64,
}

pub fn gram_complement_spectra<T: Field>(r: &Mat<T>) -> Result<GramComplementCheck> {
    ensure_square(r)?;
    let d = r.nrows();
    let id = Mat::<T>::identity(d, d);
    let left = eigenvalues(&(&id - r * r.adjoint()))?;
    let right = eigenvalues(&(&id - r.adjoint() * r))?;
    let sorted_re = |v: &[Complex<T::RealField>]| {
        let mut re: Vec<f64> = v.iter().map(|z| z.re.as_f64()).collect();
        re.sort_by(|a, b| a.total_cmp(b));
        re
    };
    let (a, b) = (sorted_re(&left), sorted_re(&right));
    let max_gap = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let max_imag = left
        .iter()
        .chain(&right)
        .map(|z| z.im.as_f64().abs())
        .fold(0.0, f64::max);
    Ok(GramComplementCheck { max_gap, max_imag })
}
