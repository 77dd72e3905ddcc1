//! Fixed-size complex 2×2 matrices.
//!
//! Propagators, Hamiltonians and observables in this crate all live in
//! `C^{2×2}`, so everything is a `Copy` value with no heap traffic. Entry
//! names follow `(row, column)`: `a21` is row 2, column 1.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

pub use num_complex::Complex64 as C64;

pub const I: C64 = C64::new(0.0, 1.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);

/// Eigenvalue gaps below this switch [`Mat2::exp`] to the series branch.
const EXP_DEGENERACY_GAP: f64 = 1e-8;

#[derive(Clone, Copy, PartialEq, Default)]
pub struct Mat2 {
    pub a11: C64,
    pub a21: C64,
    pub a12: C64,
    pub a22: C64,
}

impl Mat2 {
    pub const fn new(a11: C64, a12: C64, a21: C64, a22: C64) -> Self {
        Mat2 { a11, a21, a12, a22 }
    }

    /// Build from real row-major entries.
    pub const fn real(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2::new(
            C64::new(a11, 0.0),
            C64::new(a12, 0.0),
            C64::new(a21, 0.0),
            C64::new(a22, 0.0),
        )
    }

    pub const fn zero() -> Self {
        Mat2::new(ZERO, ZERO, ZERO, ZERO)
    }

    pub const fn identity() -> Self {
        Mat2::new(ONE, ZERO, ZERO, ONE)
    }

    pub const fn diag(a: C64, b: C64) -> Self {
        Mat2::new(a, ZERO, ZERO, b)
    }

    pub const fn sigma_x() -> Self {
        Mat2::real(0.0, 1.0, 1.0, 0.0)
    }

    pub const fn sigma_y() -> Self {
        Mat2::new(ZERO, C64::new(0.0, -1.0), I, ZERO)
    }

    pub const fn sigma_z() -> Self {
        Mat2::real(1.0, 0.0, 0.0, -1.0)
    }

    /// Entry at zero-based `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> C64 {
        match (row, col) {
            (0, 0) => self.a11,
            (1, 0) => self.a21,
            (0, 1) => self.a12,
            (1, 1) => self.a22,
            _ => panic!("Mat2 index ({row}, {col}) out of range"),
        }
    }

    /// Entries in column-major order `(11, 21, 12, 22)`.
    pub fn to_array(&self) -> [C64; 4] {
        [self.a11, self.a21, self.a12, self.a22]
    }

    pub fn from_array(v: [C64; 4]) -> Self {
        Mat2 {
            a11: v[0],
            a21: v[1],
            a12: v[2],
            a22: v[3],
        }
    }

    pub fn trace(&self) -> C64 {
        self.a11 + self.a22
    }

    pub fn det(&self) -> C64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Mat2::new(
            self.a11.conj(),
            self.a21.conj(),
            self.a12.conj(),
            self.a22.conj(),
        )
    }

    /// Squared Frobenius norm, `Σ |a_ij|²`.
    pub fn norm_sqr(&self) -> f64 {
        self.a11.norm_sqr() + self.a21.norm_sqr() + self.a12.norm_sqr() + self.a22.norm_sqr()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|z| z.is_finite())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (*self - self.adjoint()).frobenius_norm() <= tol
    }

    /// Matrix exponential.
    ///
    /// Writes `A = μI + B` with `B` traceless, so `B² = δ²I` and
    /// `exp(A) = e^μ (cosh δ · I + sinh δ / δ · B)`. When the eigenvalue gap
    /// `2|δ|` is tiny the two even functions are evaluated by their series.
    pub fn exp(&self) -> Self {
        let mu = self.trace() * 0.5;
        let b = *self - Mat2::identity() * mu;
        let delta_sq = b.a11 * b.a11 + b.a12 * b.a21;
        let delta = delta_sq.sqrt();
        let (cosh, sinhc) = if 2.0 * delta.norm() < EXP_DEGENERACY_GAP {
            (
                ONE + delta_sq / 2.0 + delta_sq * delta_sq / 24.0,
                ONE + delta_sq / 6.0 + delta_sq * delta_sq / 120.0,
            )
        } else {
            (delta.cosh(), delta.sinh() / delta)
        };
        (Mat2::identity() * cosh + b * sinhc) * mu.exp()
    }
}

impl fmt::Debug for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[[{}, {}], [{}, {}]]",
            self.a11, self.a12, self.a21, self.a22
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    #[inline]
    fn add(self, o: Mat2) -> Mat2 {
        Mat2 {
            a11: self.a11 + o.a11,
            a21: self.a21 + o.a21,
            a12: self.a12 + o.a12,
            a22: self.a22 + o.a22,
        }
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    #[inline]
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2 {
            a11: self.a11 - o.a11,
            a21: self.a21 - o.a21,
            a12: self.a12 - o.a12,
            a22: self.a22 - o.a22,
        }
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    #[inline]
    fn neg(self) -> Mat2 {
        self * -1.0
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2 {
            a11: self.a11 * o.a11 + self.a12 * o.a21,
            a21: self.a21 * o.a11 + self.a22 * o.a21,
            a12: self.a11 * o.a12 + self.a12 * o.a22,
            a22: self.a21 * o.a12 + self.a22 * o.a22,
        }
    }
}

impl Mul<C64> for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, s: C64) -> Mat2 {
        Mat2 {
            a11: self.a11 * s,
            a21: self.a21 * s,
            a12: self.a12 * s,
            a22: self.a22 * s,
        }
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, s: f64) -> Mat2 {
        Mat2 {
            a11: self.a11 * s,
            a21: self.a21 * s,
            a12: self.a12 * s,
            a22: self.a22 * s,
        }
    }
}

impl Mul<Mat2> for C64 {
    type Output = Mat2;
    #[inline]
    fn mul(self, m: Mat2) -> Mat2 {
        m * self
    }
}

impl Mul<Mat2> for f64 {
    type Output = Mat2;
    #[inline]
    fn mul(self, m: Mat2) -> Mat2 {
        m * self
    }
}

impl AddAssign for Mat2 {
    #[inline]
    fn add_assign(&mut self, o: Mat2) {
        *self = *self + o;
    }
}

impl SubAssign for Mat2 {
    #[inline]
    fn sub_assign(&mut self, o: Mat2) {
        *self = *self - o;
    }
}

impl MulAssign<f64> for Mat2 {
    #[inline]
    fn mul_assign(&mut self, s: f64) {
        *self = *self * s;
    }
}

impl Sum for Mat2 {
    fn sum<It: Iterator<Item = Mat2>>(iter: It) -> Mat2 {
        iter.fold(Mat2::zero(), Add::add)
    }
}
