//! Real quaternions, doubling as points and vectors of 4-space.
//!
//! `x = w + i·x1 + j·x2 + k·x3`. The Euclidean structure on 4-space is
//! `⟨ξ, η⟩ = Re(ξ·conj(η))`, which equals the dot product of the component
//! vectors.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute threshold below which a quaternion is treated as singular.
pub const EPS_INV: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quaternion {
    pub w: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl Quaternion {
    pub const ZERO: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    pub const ONE: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Quaternion = Quaternion::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Quaternion = Quaternion::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 1.0);
    /// `1, i, j, k`, the coordinate basis `e₀..e₃` of 4-space.
    pub const BASIS: [Quaternion; 4] = [Self::ONE, Self::I, Self::J, Self::K];

    pub const fn new(w: f64, x1: f64, x2: f64, x3: f64) -> Self {
        Quaternion { w, x1, x2, x3 }
    }

    pub const fn real(w: f64) -> Self {
        Quaternion::new(w, 0.0, 0.0, 0.0)
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x1, self.x2, self.x3]
    }

    /// Component `ν` (0 = real part).
    pub fn component(self, nu: usize) -> f64 {
        self.to_array()[nu]
    }

    pub fn re(self) -> f64 {
        self.w
    }

    pub fn im(self) -> Self {
        Quaternion::new(0.0, self.x1, self.x2, self.x3)
    }

    pub fn conj(self) -> Self {
        Quaternion::new(self.w, -self.x1, -self.x2, -self.x3)
    }

    pub fn norm_sqr(self) -> f64 {
        self.w * self.w + self.x1 * self.x1 + self.x2 * self.x2 + self.x3 * self.x3
    }

    pub fn norm(self) -> f64 {
        // hypot-style scaling keeps tiny and huge components from under/overflowing
        let m = self.w.abs().max(self.x1.abs()).max(self.x2.abs()).max(self.x3.abs());
        if m == 0.0 || !m.is_finite() {
            return m;
        }
        (self / m).norm_sqr().sqrt() * m
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x1.is_finite() && self.x2.is_finite() && self.x3.is_finite()
    }

    /// Inverse, failing when `|a| ≤ EPS_INV`.
    pub fn inv(self) -> Result<Self> {
        self.inv_with(EPS_INV)
    }

    /// Inverse with a caller-supplied singularity threshold.
    pub fn inv_with(self, eps: f64) -> Result<Self> {
        let n = self.norm();
        if !(n > eps) {
            return Err(Error::NearZeroQuaternion { norm: n });
        }
        Ok(self.conj() / (n * n))
    }

    /// Euclidean inner product `Re(self · conj(other))`.
    pub fn inner(self, other: Self) -> f64 {
        self.w * other.w + self.x1 * other.x1 + self.x2 * other.x2 + self.x3 * other.x3
    }

    pub fn dist(self, other: Self) -> f64 {
        (self - other).norm()
    }

    /// Unit quaternion in the same direction; `None` for zero.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        (n > 0.0).then(|| self / n)
    }
}

pub fn mul(a: Quaternion, b: Quaternion) -> Quaternion {
    a * b
}

pub fn inv(a: Quaternion) -> Result<Quaternion> {
    a.inv()
}

pub fn inner(xi: Quaternion, eta: Quaternion) -> f64 {
    xi.inner(eta)
}

impl From<[f64; 4]> for Quaternion {
    fn from(a: [f64; 4]) -> Self {
        Quaternion::from_array(a)
    }
}

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        q.to_array()
    }
}

impl From<f64> for Quaternion {
    fn from(w: f64) -> Self {
        Quaternion::real(w)
    }
}

impl fmt::Display for Quaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {}i + {}j + {}k", self.w, self.x1, self.x2, self.x3)
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, b: Quaternion) -> Quaternion {
        Quaternion::new(self.w + b.w, self.x1 + b.x1, self.x2 + b.x2, self.x3 + b.x3)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, b: Quaternion) -> Quaternion {
        Quaternion::new(self.w - b.w, self.x1 - b.x1, self.x2 - b.x2, self.x3 - b.x3)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion::new(-self.w, -self.x1, -self.x2, -self.x3)
    }
}

/// Hamilton product.
impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, b: Quaternion) -> Quaternion {
        let a = self;
        Quaternion::new(
            a.w * b.w - a.x1 * b.x1 - a.x2 * b.x2 - a.x3 * b.x3,
            a.w * b.x1 + a.x1 * b.w + a.x2 * b.x3 - a.x3 * b.x2,
            a.w * b.x2 - a.x1 * b.x3 + a.x2 * b.w + a.x3 * b.x1,
            a.w * b.x3 + a.x1 * b.x2 - a.x2 * b.x1 + a.x3 * b.w,
        )
    }
}

impl Mul<f64> for Quaternion {
    type Output = Quaternion;
    fn mul(self, s: f64) -> Quaternion {
        Quaternion::new(self.w * s, self.x1 * s, self.x2 * s, self.x3 * s)
    }
}

impl Mul<Quaternion> for f64 {
    type Output = Quaternion;
    fn mul(self, q: Quaternion) -> Quaternion {
        q * self
    }
}

impl Div<f64> for Quaternion {
    type Output = Quaternion;
    fn div(self, s: f64) -> Quaternion {
        Quaternion::new(self.w / s, self.x1 / s, self.x2 / s, self.x3 / s)
    }
}

impl AddAssign for Quaternion {
    fn add_assign(&mut self, b: Quaternion) {
        *self = *self + b;
    }
}

impl SubAssign for Quaternion {
    fn sub_assign(&mut self, b: Quaternion) {
        *self = *self - b;
    }
}

impl MulAssign<f64> for Quaternion {
    fn mul_assign(&mut self, s: f64) {
        *self = *self * s;
    }
}

impl std::iter::Sum for Quaternion {
    fn sum<I: Iterator<Item = Quaternion>>(iter: I) -> Self {
        iter.fold(Quaternion::ZERO, |acc, q| acc + q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const I: Quaternion = Quaternion::I;
    const J: Quaternion = Quaternion::J;
    const K: Quaternion = Quaternion::K;
    const ONE: Quaternion = Quaternion::ONE;

    #[test]
    fn hamilton_table() {
        assert_eq!(I * J, K);
        assert_eq!(J * K, I);
        assert_eq!(K * I, J);
        assert_eq!(J * I, -K);
        assert_eq!(I * I, -ONE);
        assert_eq!(I * J * K, -ONE);
    }

    #[test]
    fn mul_examples() {
        assert_eq!((ONE + I) * (ONE - I), Quaternion::real(2.0));
        assert_eq!((I + J) * (I - J), K * -2.0);
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(I.inv().unwrap(), -I);
        assert!((ONE + I).inv().unwrap().dist((ONE - I) / 2.0) <= 1e-15);
        assert!(matches!(Quaternion::ZERO.inv(), Err(Error::NearZeroQuaternion { .. })));
        assert!(Quaternion::real(1e-13).inv().is_err());
    }

    #[test]
    fn parts_and_norm() {
        let q = Quaternion::new(2.0, 3.0, 0.0, 0.0);
        assert_eq!(q.re(), 2.0);
        assert_eq!(q.im(), I * 3.0);
        assert_eq!((I + J).conj(), -I - J);
        assert_eq!(Quaternion::new(1.0, 1.0, 1.0, 1.0).norm(), 2.0);
    }

    #[test]
    fn inner_examples() {
        assert_eq!(I.inner(I), 1.0);
        assert_eq!(ONE.inner(I), 0.0);
        assert_eq!((ONE + J).inner(ONE - J), 0.0);
    }

    #[test]
    fn json_is_component_array() {
        let q = Quaternion::new(1.0, -2.0, 0.5, 3.0);
        assert_eq!(serde_json::to_string(&q).unwrap(), "[1.0,-2.0,0.5,3.0]");
        let back: Quaternion = serde_json::from_str("[1,-2,0.5,3]").unwrap();
        assert_eq!(back, q);
    }

    fn quat() -> impl Strategy<Value = Quaternion> {
        prop::array::uniform4(-10.0f64..10.0).prop_map(Quaternion::from_array)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn associative_and_multiplicative(a in quat(), b in quat(), c in quat()) {
            let scale = a.norm() * b.norm() * c.norm();
            prop_assert!(((a * b) * c - a * (b * c)).norm() <= 1e-12 * scale.max(1e-300));
            prop_assert!(((a * b).norm() - a.norm() * b.norm()).abs() <= 1e-12 * (a.norm() * b.norm()).max(1e-300));
        }

        #[test]
        fn conj_reverses_products(a in quat(), b in quat()) {
            let lhs = (a * b).conj();
            let rhs = b.conj() * a.conj();
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (a.norm() * b.norm()).max(1e-300));
        }

        #[test]
        fn inner_is_symmetric_dot(a in quat(), b in quat()) {
            prop_assert_eq!(a.inner(b), b.inner(a));
            let dot: f64 = a.to_array().iter().zip(b.to_array()).map(|(x, y)| x * y).sum();
            prop_assert!((a.inner(b) - dot).abs() <= 1e-12 * (1.0 + dot.abs()));
            prop_assert!(((a * b.conj()).re() - a.inner(b)).abs() <= 1e-12 * (1.0 + a.norm() * b.norm()));
            prop_assert!((a.inner(a) - a.norm_sqr()).abs() <= 1e-12 * a.norm_sqr().max(1e-300));
        }

        #[test]
        fn inverse_is_two_sided(a in quat()) {
            prop_assume!(a.norm() > 1e-3);
            let ai = a.inv().unwrap();
            prop_assert!((a * ai - ONE).norm() <= 1e-14);
            prop_assert!((ai * a - ONE).norm() <= 1e-14);
            prop_assert!((a * a.conj() - Quaternion::real(a.norm_sqr())).norm() <= 1e-12 * a.norm_sqr());
        }
    }
}
