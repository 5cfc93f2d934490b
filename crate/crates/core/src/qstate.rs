//! Dense state primitives for small systems: kets, density matrices,
//! time-bin projectors and Bell states.
//!
//! Two-qubit objects use the basis ordering (ee, eℓ, ℓe, ℓℓ), where `e`
//! (index 0) is the early time bin and `ℓ` (index 1) the late one.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const HERMITIAN_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-9;
pub const PSD_CLAMP: f64 = 1e-8;

pub const EARLY: usize = 0;
pub const LATE: usize = 1;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket {
    amps: CVector,
}

impl Ket {
    /// Builds a ket from raw amplitudes and normalizes it.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::param("amps", "ket dimension must be at least 1"));
        }
        let mut ket = Ket {
            amps: CVector::from_vec(amps),
        };
        ket.normalize()?;
        Ok(ket)
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Ket::new(amps.iter().map(|&a| c64(a, 0.0)).collect())
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim, "basis index {index} out of range for dim {dim}");
        let mut amps = CVector::zeros(dim);
        amps[index] = c64(1.0, 0.0);
        Ket { amps }
    }

    pub fn early() -> Self {
        Ket::basis(2, EARLY)
    }

    pub fn late() -> Self {
        Ket::basis(2, LATE)
    }

    pub fn normalize(&mut self) -> Result<()> {
        let norm = self.amps.norm();
        if norm < 1e-300 {
            return Err(Error::ZeroNorm);
        }
        self.amps.unscale_mut(norm);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &Ket) -> C64 {
        self.amps.dotc(&other.amps)
    }

    pub fn projector(&self) -> DensityMatrix {
        DensityMatrix {
            m: &self.amps * self.amps.adjoint(),
        }
    }

    pub fn apply(&self, op: &CMatrix) -> Result<Ket> {
        if op.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: op.ncols(),
            });
        }
        Ket::new((op * &self.amps).iter().copied().collect())
    }
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    m: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity within the module tolerances.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let dev = hermitian_deviation(&m);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::NotUnitTrace(tr.re));
        }
        let (vals, _) = hermitian_eigen(&m);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -PSD_CLAMP {
            return Err(Error::NotPsd(min));
        }
        Ok(DensityMatrix { m: hermitize(&m) })
    }

    /// Normalizes a Hermitian PSD matrix by its trace, then validates.
    pub fn from_unnormalized(m: CMatrix) -> Result<Self> {
        let tr = m.trace().re;
        if tr <= 0.0 {
            return Err(Error::NotUnitTrace(tr));
        }
        DensityMatrix::new(m.unscale(tr))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix {
            m: CMatrix::identity(dim, dim).unscale(dim as f64),
        }
    }

    /// `v|ψ⟩⟨ψ| + (1 − v)·𝟙/d`
    pub fn werner(v: f64, psi: &Ket) -> Result<Self> {
        let d = psi.dim() as f64;
        if !(-1.0 / (d - 1.0)..=1.0).contains(&v) {
            return Err(Error::param("v", format!("{v} outside the positivity range")));
        }
        let id = CMatrix::identity(psi.dim(), psi.dim());
        let m = psi.projector().m.scale(v) + id.scale((1.0 - v) / d);
        Ok(DensityMatrix { m })
    }

    /// Convex combination of states with weights summing to one.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::param("parts", "empty mixture"))?;
        let mut m = CMatrix::zeros(first.1.dim(), first.1.dim());
        for (w, rho) in parts {
            if rho.dim() != m.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: m.nrows(),
                    got: rho.dim(),
                });
            }
            m += rho.m.scale(*w);
        }
        DensityMatrix::new(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.m).0
    }

    /// `U ρ U†`
    pub fn conjugate_by(&self, u: &CMatrix) -> Result<Self> {
        if u.ncols() != self.dim() || u.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.nrows(),
            });
        }
        Ok(DensityMatrix {
            m: hermitize(&(u * &self.m * u.adjoint())),
        })
    }

    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff = &self.m - &other.m;
        0.5 * hermitian_eigen(&diff).0.iter().map(|x| x.abs()).sum::<f64>()
    }

    pub fn to_json(&self) -> MatrixJson {
        MatrixJson::from_matrix(&self.m)
    }
}

/// Row-major `(re, im)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let mut entries = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let z = m[(r, c)];
                entries.push([z.re, z.im]);
            }
        }
        MatrixJson {
            dim: m.nrows(),
            entries,
        }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        if self.entries.len() != self.dim * self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim * self.dim,
                got: self.entries.len(),
            });
        }
        Ok(CMatrix::from_row_iterator(
            self.dim,
            self.dim,
            self.entries.iter().map(|[re, im]| c64(*re, *im)),
        ))
    }
}

/// Single time-bin qubit projector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "basis", content = "param")]
pub enum Projector {
    Early,
    Late,
    /// Projection onto (|e⟩ + e^{iφ}|ℓ⟩)/√2.
    Phase(f64),
}

impl Projector {
    pub fn phase(phi: f64) -> Result<Self> {
        if !(0.0..TAU).contains(&phi) {
            return Err(Error::param("phi", format!("{phi} outside [0, 2π)")));
        }
        Ok(Projector::Phase(phi))
    }

    /// Phase projector with φ reduced into [0, 2π).
    pub fn phase_wrapped(phi: f64) -> Self {
        Projector::Phase(wrap_phase(phi))
    }

    pub fn ket(&self) -> Ket {
        match *self {
            Projector::Early => Ket::early(),
            Projector::Late => Ket::late(),
            Projector::Phase(phi) => Ket {
                amps: CVector::from_vec(vec![
                    c64(FRAC_1_SQRT_2, 0.0),
                    C64::from_polar(FRAC_1_SQRT_2, phi),
                ]),
            },
        }
    }

    pub fn matrix(&self) -> CMatrix {
        self.ket().projector().m
    }

    /// The orthogonal outcome of the same measurement.
    pub fn complement(&self) -> Projector {
        match *self {
            Projector::Early => Projector::Late,
            Projector::Late => Projector::Early,
            Projector::Phase(phi) => Projector::phase_wrapped(phi + PI),
        }
    }

    /// `P_a ⊗ P_b` on two qubits.
    pub fn joint(a: &Projector, b: &Projector) -> CMatrix {
        a.matrix().kronecker(&b.matrix())
    }
}

pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BellKind {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellKind {
    pub const ALL: [BellKind; 4] = [
        BellKind::PhiPlus,
        BellKind::PhiMinus,
        BellKind::PsiPlus,
        BellKind::PsiMinus,
    ];
}

pub fn bell_state(kind: BellKind) -> Ket {
    let h = FRAC_1_SQRT_2;
    let amps = match kind {
        BellKind::PhiPlus => [h, 0.0, 0.0, h],
        BellKind::PhiMinus => [h, 0.0, 0.0, -h],
        BellKind::PsiPlus => [0.0, h, h, 0.0],
        BellKind::PsiMinus => [0.0, h, -h, 0.0],
    };
    Ket {
        amps: CVector::from_iterator(4, amps.iter().map(|&a| c64(a, 0.0))),
    }
}

/// Kronecker product of two states of the same kind.
pub trait Tensor {
    fn tensor(&self, other: &Self) -> Self;
}

impl Tensor for Ket {
    fn tensor(&self, other: &Ket) -> Ket {
        Ket {
            amps: self.amps.kronecker(&other.amps),
        }
    }
}

impl Tensor for DensityMatrix {
    fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            m: self.m.kronecker(&other.m),
        }
    }
}

pub fn tensor<T: Tensor>(a: &T, b: &T) -> T {
    a.tensor(b)
}

/// Reduced state over the subsystems listed in `keep` (in ascending order).
pub fn partial_trace(rho: &DensityMatrix, dims: &[usize], keep: &[usize]) -> Result<DensityMatrix> {
    let total: usize = dims.iter().product();
    if total != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: total,
        });
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= dims.len()) {
        return Err(Error::param("keep", format!("subsystem {bad} does not exist")));
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep_sorted.contains(i)).collect();

    let kept_dims: Vec<usize> = keep_sorted.iter().map(|&i| dims[i]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&i| dims[i]).collect();
    let kept_total: usize = kept_dims.iter().product();
    let traced_total: usize = traced_dims.iter().product();

    // Row-major strides of the full index.
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let compose = |kept_idx: usize, traced_idx: usize| -> usize {
        let mut full = 0;
        let mut rem = kept_idx;
        for (pos, &sub) in keep_sorted.iter().enumerate().rev() {
            full += (rem % kept_dims[pos]) * strides[sub];
            rem /= kept_dims[pos];
        }
        let mut rem = traced_idx;
        for (pos, &sub) in traced.iter().enumerate().rev() {
            full += (rem % traced_dims[pos]) * strides[sub];
            rem /= traced_dims[pos];
        }
        full
    };

    let mut out = CMatrix::zeros(kept_total, kept_total);
    for r in 0..kept_total {
        for c in 0..kept_total {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..traced_total {
                acc += rho.m[(compose(r, t), compose(c, t))];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(DensityMatrix { m: out })
}

/// `tr(ρ P)`; the imaginary part is discarded.
pub fn expectation(rho: &DensityMatrix, op: &CMatrix) -> Result<f64> {
    if op.nrows() != rho.dim() || op.ncols() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: op.nrows(),
        });
    }
    Ok(trace_of_product(&rho.m, op).re)
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Hermitian PSD square root by eigendecomposition.
pub fn psd_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let dev = hermitian_deviation(m);
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    let (vals, vecs) = hermitian_eigen(m);
    let mut roots = Vec::with_capacity(vals.len());
    for &v in &vals {
        if v < -PSD_CLAMP {
            return Err(Error::NotPsd(v));
        }
        roots.push(v.max(0.0).sqrt());
    }
    Ok(from_eigen(&roots, &vecs))
}

/// Eigenvalues (unsorted) and eigenvectors of the Hermitian part of `m`.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitize(m));
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    hermitize(m).symmetric_eigenvalues().iter().copied().collect()
}

pub(crate) fn from_eigen(vals: &[f64], vecs: &CMatrix) -> CMatrix {
    let n = vals.len();
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        for i in 0..n {
            scaled[(i, j)] *= v;
        }
    }
    hermitize(&(scaled * vecs.adjoint()))
}

pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).unscale(2.0)
}

pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let d = m - m.adjoint();
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(0.0, 0.0), c64(1.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(0.0, 0.0), c64(0.0, -1.0), c64(0.0, 1.0), c64(0.0, 0.0)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(-1.0, 0.0)])
}

/// Single-qubit unitary `Rz(a)·Ry(b)·Rz(c)`.
pub fn zyz_unitary(a: f64, b: f64, c: f64) -> CMatrix {
    let (cb, sb) = ((b / 2.0).cos(), (b / 2.0).sin());
    let p = |x: f64| C64::from_polar(1.0, x);
    CMatrix::from_row_slice(
        2,
        2,
        &[
            p(-(a + c) / 2.0) * cb,
            -p(-(a - c) / 2.0) * sb,
            p((a - c) / 2.0) * sb,
            p((a + c) / 2.0) * cb,
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn bell_amplitudes() {
        let phi = bell_state(BellKind::PhiPlus);
        let h = FRAC_1_SQRT_2;
        let expect = [h, 0.0, 0.0, h];
        for (a, e) in phi.amplitudes().iter().zip(expect) {
            assert_abs_diff_eq!(a.re, e, epsilon = 1e-15);
            assert_abs_diff_eq!(a.im, 0.0);
        }
        let psi = bell_state(BellKind::PsiMinus);
        let expect = [0.0, h, -h, 0.0];
        for (a, e) in psi.amplitudes().iter().zip(expect) {
            assert_abs_diff_eq!(a.re, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn bell_orthonormal_and_locally_mixed() {
        for (i, a) in BellKind::ALL.iter().enumerate() {
            let ka = bell_state(*a);
            for (j, b) in BellKind::ALL.iter().enumerate() {
                let overlap = ka.inner(&bell_state(*b));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(overlap.re, expect, epsilon = 1e-12);
                assert_abs_diff_eq!(overlap.im, 0.0, epsilon = 1e-12);
            }
            for keep in [0usize, 1] {
                let red = partial_trace(&ka.projector(), &[2, 2], &[keep]).unwrap();
                let diff = red.matrix() - DensityMatrix::maximally_mixed(2).matrix();
                assert!(max_abs(&diff) < 1e-12);
            }
        }
    }

    #[test]
    fn tensor_examples() {
        let el = Ket::early().tensor(&Ket::late());
        assert_eq!(el, Ket::basis(4, 1));
        let half = DensityMatrix::maximally_mixed(2);
        let quarter = half.tensor(&half);
        assert!(max_abs(&(quarter.matrix() - DensityMatrix::maximally_mixed(4).matrix())) < 1e-15);
        let big = bell_state(BellKind::PhiPlus)
            .projector()
            .tensor(&bell_state(BellKind::PhiMinus).projector());
        assert_abs_diff_eq!(big.matrix().trace().re, 1.0, epsilon = 1e-12);
        assert_eq!(big.dim(), 16);
    }

    #[test]
    fn partial_trace_of_werner_is_mixed() {
        // Direct 4×4 computation: the reduced state of any Werner state is 𝟙/2.
        for i in 0..=20 {
            let v = -1.0 / 3.0 + (4.0 / 3.0) * i as f64 / 20.0;
            let w = DensityMatrix::werner(v, &bell_state(BellKind::PsiPlus)).unwrap();
            let m = w.matrix();
            let a00 = m[(0, 0)] + m[(1, 1)];
            let a01 = m[(0, 2)] + m[(1, 3)];
            let a11 = m[(2, 2)] + m[(3, 3)];
            assert_abs_diff_eq!(a00.re, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(a11.re, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(a01.norm(), 0.0, epsilon = 1e-12);
            let red = partial_trace(&w, &[2, 2], &[0]).unwrap();
            assert!(max_abs(&(red.matrix() - DensityMatrix::maximally_mixed(2).matrix())) < 1e-12);
        }
    }

    #[test]
    fn partial_trace_dimension_mismatch() {
        let rho = DensityMatrix::maximally_mixed(4);
        assert!(matches!(
            partial_trace(&rho, &[2, 3], &[0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn partial_trace_three_parties_middle() {
        let a = Projector::Phase(0.3).ket().projector();
        let b = DensityMatrix::werner(0.4, &bell_state(BellKind::PhiMinus)).unwrap();
        let c = Projector::Late.ket().projector();
        let abc = a.tensor(&b).tensor(&c);
        let red = partial_trace(&abc, &[2, 4, 2], &[1]).unwrap();
        assert!(max_abs(&(red.matrix() - b.matrix())) < 1e-12);
        let ac = partial_trace(&abc, &[2, 4, 2], &[2, 0]).unwrap();
        assert!(max_abs(&(ac.matrix() - a.tensor(&c).matrix())) < 1e-12);
    }

    #[test]
    fn expectation_examples() {
        let psi = bell_state(BellKind::PsiPlus).projector();
        assert_abs_diff_eq!(expectation(&psi, psi.matrix()).unwrap(), 1.0, epsilon = 1e-12);
        let mixed = DensityMatrix::maximally_mixed(4);
        let pi = Projector::joint(&Projector::Phase(1.1), &Projector::Late);
        assert_abs_diff_eq!(expectation(&mixed, &pi).unwrap(), 0.25, epsilon = 1e-12);
        // Closed form (1 + 3v)/4.
        let w = DensityMatrix::werner(0.592, &bell_state(BellKind::PsiPlus)).unwrap();
        let f = expectation(&w, psi.matrix()).unwrap();
        assert_abs_diff_eq!(f, (1.0 + 3.0 * 0.592) / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f, 0.694, epsilon = 5e-4);
        assert!(expectation(&w, &CMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn psd_sqrt_examples() {
        let id = CMatrix::identity(3, 3);
        assert!(max_abs(&(psd_sqrt(&id).unwrap() - &id)) < 1e-12);
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![
            c64(4.0, 0.0),
            c64(1.0, 0.0),
            c64(0.0, 0.0),
            c64(0.0, 0.0),
        ]));
        let s = psd_sqrt(&d).unwrap();
        let expect = CMatrix::from_diagonal(&CVector::from_vec(vec![
            c64(2.0, 0.0),
            c64(1.0, 0.0),
            c64(0.0, 0.0),
            c64(0.0, 0.0),
        ]));
        assert!(max_abs(&(s - expect)) < 1e-12);
        let neg = CMatrix::from_diagonal(&CVector::from_vec(vec![c64(1.0, 0.0), c64(-1e-3, 0.0)]));
        assert!(matches!(psd_sqrt(&neg), Err(Error::NotPsd(_))));
        let tiny = CMatrix::from_diagonal(&CVector::from_vec(vec![c64(1.0, 0.0), c64(-1e-10, 0.0)]));
        assert!(psd_sqrt(&tiny).is_ok());
    }

    #[test]
    fn density_matrix_validation() {
        let mut m = CMatrix::identity(2, 2).unscale(2.0);
        m[(0, 1)] = c64(0.1, 0.0);
        assert!(matches!(DensityMatrix::new(m.clone()), Err(Error::NotHermitian(_))));
        m[(1, 0)] = c64(0.1, 0.0);
        assert!(DensityMatrix::new(m.clone()).is_ok());
        assert!(matches!(DensityMatrix::new(m.scale(2.0)), Err(Error::NotUnitTrace(_))));
        let bad = CMatrix::from_row_slice(2, 2, &[c64(1.5, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(-0.5, 0.0)]);
        assert!(matches!(DensityMatrix::new(bad), Err(Error::NotPsd(_))));
    }

    #[test]
    fn phase_projectors_complete() {
        for i in 0..32 {
            let phi = i as f64 * TAU / 32.0;
            let p = Projector::phase(phi).unwrap();
            let sum = p.matrix() + p.complement().matrix();
            assert!(max_abs(&(sum - CMatrix::identity(2, 2))) < 1e-12);
            let m = p.matrix();
            assert!(max_abs(&(&m * &m - &m)) < 1e-12);
        }
        assert!(Projector::phase(TAU).is_err());
        assert!(Projector::phase(-0.1).is_err());
    }

    #[test]
    fn matrix_json_round_trip() {
        let w = DensityMatrix::werner(0.3, &Projector::Phase(0.7).ket().tensor(&Ket::late())).unwrap();
        let json = serde_json::to_string(&w.to_json()).unwrap();
        let back: MatrixJson = serde_json::from_str(&json).unwrap();
        assert_eq!(&back.to_matrix().unwrap(), w.matrix());
    }

    fn arb_ket(dim: usize) -> impl Strategy<Value = Ket> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim)
            .prop_filter_map("nonzero", |v| Ket::new(v.into_iter().map(|(r, i)| c64(r, i)).collect()).ok())
    }

    fn arb_state(dim: usize) -> impl Strategy<Value = DensityMatrix> {
        proptest::collection::vec((0.0f64..1.0, arb_ket(dim)), 1..4).prop_map(move |parts| {
            let total: f64 = parts.iter().map(|p| p.0).sum::<f64>() + 1e-3;
            let mut m = CMatrix::identity(dim, dim).scale(1e-3 / dim as f64);
            for (w, k) in &parts {
                m += k.projector().matrix().scale(*w);
            }
            DensityMatrix::new(m.unscale(total)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn tensor_then_trace_recovers_first(a in arb_state(2), b in arb_state(2)) {
            let ab = a.tensor(&b);
            let red = partial_trace(&ab, &[2, 2], &[0]).unwrap();
            prop_assert!(max_abs(&(red.matrix() - a.matrix())) < 1e-10);
        }

        #[test]
        fn psd_sqrt_squares_back(rho in arb_state(4)) {
            let s = psd_sqrt(rho.matrix()).unwrap();
            let diff = &s * &s - rho.matrix();
            prop_assert!(diff.norm() < 1e-8);
        }

        #[test]
        fn normalize_gives_unit_norm(k in arb_ket(5)) {
            prop_assert!((k.norm() - 1.0).abs() < 1e-9);
        }
    }
}
