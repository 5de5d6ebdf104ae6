//! Fixed-size complex matrices for ranks one to three.

use crate::cone_geometry::C64;
use nalgebra::{DMatrix, SMatrix, SymmetricEigen};
use std::ops::{Add, Mul, Neg, Sub};

pub trait HMat:
    Copy + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    const R: usize;
    fn zero() -> Self;
    fn identity() -> Self;
    fn scale(&self, a: f64) -> Self;
    fn scale_c(&self, a: C64) -> Self;
    fn adjoint(&self) -> Self;
    fn trace(&self) -> C64;
    fn inverse(&self) -> Option<Self>;
    fn positive(&self) -> bool;
    fn min_eigenvalue(&self) -> f64;
    /// `f` applied to a hermitian matrix through its eigendecomposition.
    fn hfun(&self, f: &dyn Fn(f64) -> f64) -> Self;
    fn get(&self, i: usize, j: usize) -> C64;
    fn set(&mut self, i: usize, j: usize, v: C64);
    fn max_abs(&self) -> f64;
    fn from_dm(m: &DMatrix<C64>) -> Self {
        let mut out = Self::zero();
        for i in 0..Self::R {
            for j in 0..Self::R {
                out.set(i, j, m[(i, j)]);
            }
        }
        out
    }
    fn to_dm(&self) -> DMatrix<C64> {
        DMatrix::from_fn(Self::R, Self::R, |i, j| self.get(i, j))
    }
    fn hermitian_part(&self) -> Self {
        (*self + self.adjoint()).scale(0.5)
    }
}

macro_rules! impl_hmat {
    ($r:literal) => {
        impl HMat for SMatrix<C64, $r, $r> {
            const R: usize = $r;
            fn zero() -> Self {
                Self::zeros()
            }
            fn identity() -> Self {
                Self::identity()
            }
            fn scale(&self, a: f64) -> Self {
                self * C64::new(a, 0.0)
            }
            fn scale_c(&self, a: C64) -> Self {
                self * a
            }
            fn adjoint(&self) -> Self {
                nalgebra::Matrix::adjoint(self)
            }
            fn trace(&self) -> C64 {
                nalgebra::Matrix::trace(self)
            }
            fn inverse(&self) -> Option<Self> {
                self.try_inverse()
            }
            fn positive(&self) -> bool {
                // Complex Cholesky in nalgebra never fails, so test the spectrum instead.
                self.iter().all(|v| v.re.is_finite() && v.im.is_finite()) && self.min_eigenvalue() > 0.0
            }
            fn min_eigenvalue(&self) -> f64 {
                SymmetricEigen::new(self.hermitian_part()).eigenvalues.min()
            }
            fn hfun(&self, f: &dyn Fn(f64) -> f64) -> Self {
                let e = SymmetricEigen::new(self.hermitian_part());
                let d = e.eigenvalues.map(|x| C64::new(f(x), 0.0));
                let v = e.eigenvectors;
                v * Self::from_diagonal(&d) * v.adjoint()
            }
            fn get(&self, i: usize, j: usize) -> C64 {
                self[(i, j)]
            }
            fn set(&mut self, i: usize, j: usize, v: C64) {
                self[(i, j)] = v;
            }
            fn max_abs(&self) -> f64 {
                self.iter().fold(0.0, |a, v| a.max(v.norm()))
            }
        }
    };
}

impl_hmat!(1);
impl_hmat!(2);
impl_hmat!(3);

/// Real coordinates of a hermitian matrix: diagonal, then real and imaginary upper parts.
pub fn pack<T: HMat>(h: &T, out: &mut [f64]) {
    let r = T::R;
    let mut k = 0;
    for i in 0..r {
        out[k] = h.get(i, i).re;
        k += 1;
    }
    for i in 0..r {
        for j in i + 1..r {
            let v = h.get(i, j);
            out[k] = v.re;
            out[k + 1] = v.im;
            k += 2;
        }
    }
}

pub fn unpack<T: HMat>(v: &[f64]) -> T {
    let r = T::R;
    let mut h = T::zero();
    let mut k = 0;
    for i in 0..r {
        h.set(i, i, C64::new(v[k], 0.0));
        k += 1;
    }
    for i in 0..r {
        for j in i + 1..r {
            let c = C64::new(v[k], v[k + 1]);
            h.set(i, j, c);
            h.set(j, i, c.conj());
            k += 2;
        }
    }
    h
}
