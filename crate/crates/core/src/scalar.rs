//! Scalar types used by the weak-form kernels.
//!
//! Every kernel is written once, generic over [`Real`], and instantiated with
//! - `f64` for plain residual evaluation,
//! - [`Dual`] for exact element Jacobians (forward-mode differentiation),
//! - [`TwoF64`] (double-double) for finite-difference checks whose round-off
//!   floor would otherwise swamp the truncation error.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;

    fn value(&self) -> f64;

    #[inline]
    fn zero() -> Self {
        Self::cst(0.0)
    }

    /// Positive part `max(x, 0)`. Ties are treated as inactive, so the
    /// derivative carried by [`Dual`] is the indicator of `x > 0`.
    #[inline]
    fn pos(self) -> Self {
        if self.value() > 0.0 {
            self
        } else {
            Self::zero()
        }
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
}

/// Forward-mode dual number carrying `N` directional derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const N: usize> {
    pub re: f64,
    pub eps: [f64; N],
}

impl<const N: usize> Dual<N> {
    #[inline]
    pub fn constant(re: f64) -> Self {
        Self { re, eps: [0.0; N] }
    }

    /// Independent variable number `k`.
    #[inline]
    pub fn variable(re: f64, k: usize) -> Self {
        let mut eps = [0.0; N];
        eps[k] = 1.0;
        Self { re, eps }
    }
}

impl<const N: usize> Real for Dual<N> {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    #[inline]
    fn value(&self) -> f64 {
        self.re
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.re += rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps.iter()) {
            *a += b;
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.re -= rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps.iter()) {
            *a -= b;
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; N];
        for k in 0..N {
            eps[k] = self.eps[k] * rhs.re + self.re * rhs.eps[k];
        }
        Self {
            re: self.re * rhs.re,
            eps,
        }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        let re = self.re * inv;
        let mut eps = [0.0; N];
        for k in 0..N {
            eps[k] = (self.eps[k] - re * rhs.eps[k]) * inv;
        }
        Self { re, eps }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.re = -self.re;
        for a in self.eps.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl<const N: usize> AddAssign for Dual<N> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const N: usize> SubAssign for Dual<N> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<const N: usize> MulAssign for Dual<N> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: f64) -> Self {
        self.re += rhs;
        self
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: f64) -> Self {
        self.re -= rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, rhs: f64) -> Self {
        self.re *= rhs;
        for a in self.eps.iter_mut() {
            *a *= rhs;
        }
        self
    }
}

impl<const N: usize> Div<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self * (1.0 / rhs)
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`, roughly 106 bits of
/// mantissa.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct TwoF64 {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl TwoF64 {
    #[inline]
    pub fn new(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }

    /// Exact sum of two doubles.
    #[inline]
    pub fn sum(a: f64, b: f64) -> Self {
        let (hi, lo) = two_sum(a, b);
        Self { hi, lo }
    }

    /// Exact product of two doubles.
    #[inline]
    pub fn prod(a: f64, b: f64) -> Self {
        let (hi, lo) = two_prod(a, b);
        Self { hi, lo }
    }
}

impl Real for TwoF64 {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::new(v)
    }
    #[inline]
    fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

impl Add for TwoF64 {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let (s, e) = two_sum(self.hi, rhs.hi);
        let (t, f) = two_sum(self.lo, rhs.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Self { hi, lo }
    }
}

impl Neg for TwoF64 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for TwoF64 {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Mul for TwoF64 {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let (p, e) = two_prod(self.hi, rhs.hi);
        let e = e + (self.hi * rhs.lo + self.lo * rhs.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }
}

impl Div for TwoF64 {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q1 = self.hi / rhs.hi;
        let r = self - rhs * TwoF64::new(q1);
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * TwoF64::new(q2);
        let q3 = r.hi / rhs.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        TwoF64 { hi, lo } + TwoF64::new(q3)
    }
}

impl AddAssign for TwoF64 {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for TwoF64 {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl MulAssign for TwoF64 {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl Add<f64> for TwoF64 {
    type Output = Self;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        self + TwoF64::new(rhs)
    }
}

impl Sub<f64> for TwoF64 {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        self - TwoF64::new(rhs)
    }
}

impl Mul<f64> for TwoF64 {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        let (p, e) = two_prod(self.hi, rhs);
        let (hi, lo) = quick_two_sum(p, e + self.lo * rhs);
        Self { hi, lo }
    }
}

impl Div<f64> for TwoF64 {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self / TwoF64::new(rhs)
    }
}

/// 2x2 matrix helpers shared by the per-element kernels. Row-major, `m[i][j]`.
pub type Mat2<T> = [[T; 2]; 2];
pub type Vec2<T> = [T; 2];

#[inline]
pub fn det2<T: Real>(m: &Mat2<T>) -> T {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Inverse of `m` given its determinant.
#[inline]
pub fn inv2<T: Real>(m: &Mat2<T>, det: T) -> Mat2<T> {
    [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ]
}

#[inline]
pub fn matmul2<T: Real>(a: &Mat2<T>, b: &Mat2<T>) -> Mat2<T> {
    let mut c = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

#[inline]
pub fn transpose2<T: Real>(a: &Mat2<T>) -> Mat2<T> {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

#[inline]
pub fn matvec2<T: Real>(a: &Mat2<T>, x: &Vec2<T>) -> Vec2<T> {
    [
        a[0][0] * x[0] + a[0][1] * x[1],
        a[1][0] * x[0] + a[1][1] * x[1],
    ]
}

/// `aᵀ x`
#[inline]
pub fn tmatvec2<T: Real>(a: &Mat2<T>, x: &Vec2<T>) -> Vec2<T> {
    [
        a[0][0] * x[0] + a[1][0] * x[1],
        a[0][1] * x[0] + a[1][1] * x[1],
    ]
}

/// Frobenius product `a : b`.
#[inline]
pub fn ddot2<T: Real>(a: &Mat2<T>, b: &Mat2<T>) -> T {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

#[inline]
pub fn trace2<T: Real>(a: &Mat2<T>) -> T {
    a[0][0] + a[1][1]
}

#[inline]
pub fn dot2<T: Real>(a: &Vec2<T>, b: &Vec2<T>) -> T {
    a[0] * b[0] + a[1] * b[1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_product_rule() {
        let x = Dual::<2>::variable(3.0, 0);
        let y = Dual::<2>::variable(-2.0, 1);
        let f = x * x * y + x / y;
        assert_eq!(f.re, -18.0 - 1.5);
        // df/dx = 2xy + 1/y, df/dy = x^2 - x/y^2
        assert!((f.eps[0] - (-12.0 - 0.5)).abs() < 1e-15);
        assert!((f.eps[1] - (9.0 - 0.75)).abs() < 1e-15);
    }

    #[test]
    fn dual_positive_part_ties_inactive() {
        let x = Dual::<1>::variable(0.0, 0);
        assert_eq!(x.pos().eps[0], 0.0);
        let x = Dual::<1>::variable(1e-300, 0);
        assert_eq!(x.pos().eps[0], 1.0);
    }

    #[test]
    fn double_double_keeps_low_bits() {
        let a = TwoF64::new(1.0) + TwoF64::new(1e-20);
        let b = a - TwoF64::new(1.0);
        assert!((b.value() - 1e-20).abs() < 1e-35);
        let third = TwoF64::new(1.0) / TwoF64::new(3.0);
        let back = third * 3.0 - TwoF64::new(1.0);
        assert!(back.value().abs() < 1e-31);
    }

    #[test]
    fn inverse_2x2() {
        let m = [[2.0, 1.0], [0.5, 3.0]];
        let d = det2(&m);
        let inv = inv2(&m, d);
        let p = matmul2(&m, &inv);
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((p[i][j] - e).abs() < 1e-15);
            }
        }
    }
}
