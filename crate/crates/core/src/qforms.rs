//! Quaternion-valued alternating forms on 4-space with constant coefficients.
//!
//! Coefficients live in the global coordinate frame `dx⁰..dx³`. Products are
//! the real wedge product tensored with the Hamilton product, so the order of
//! factors matters and `a ∧ a` need not vanish.

use std::collections::BTreeMap;
use std::ops::{Add, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::quat::Quaternion;

/// Index pairs `μ < ν` in storage order.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
/// Index triples `μ < ν < ρ` in storage order.
pub const TRIPLES: [(usize, usize, usize); 4] = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];

fn pair_slot(mu: usize, nu: usize) -> Option<(usize, f64)> {
    if mu == nu {
        return None;
    }
    let (a, b, sign) = if mu < nu { (mu, nu, 1.0) } else { (nu, mu, -1.0) };
    PAIRS.iter().position(|&p| p == (a, b)).map(|s| (s, sign))
}

/// A 1-form: `c[ν]` is the value on the basis vector `e_ν`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QOneForm(pub [Quaternion; 4]);

/// A 2-form stored as the six coefficients of `dx^μ ∧ dx^ν`, `μ < ν`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, Quaternion>", into = "BTreeMap<String, Quaternion>")]
pub struct QTwoForm(pub [Quaternion; 6]);

/// A 3-form stored as the four coefficients of `dx^μ ∧ dx^ν ∧ dx^ρ`, `μ < ν < ρ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QThreeForm(pub [Quaternion; 4]);

impl QOneForm {
    /// `dx = dx⁰ + i dx¹ + j dx² + k dx³`, the differential of the identity.
    pub fn identity() -> Self {
        QOneForm(Quaternion::BASIS)
    }

    /// A real-valued form from its covector components.
    pub fn real(c: [f64; 4]) -> Self {
        QOneForm(c.map(Quaternion::real))
    }

    /// `dx^ν`.
    pub fn coordinate(nu: usize) -> Self {
        let mut c = [0.0; 4];
        c[nu] = 1.0;
        QOneForm::real(c)
    }

    /// Value on a vector of 4-space (given as a quaternion).
    pub fn eval(&self, v: Quaternion) -> Quaternion {
        let v = v.to_array();
        (0..4).map(|nu| self.0[nu] * v[nu]).sum()
    }

    pub fn conj(&self) -> Self {
        QOneForm(self.0.map(Quaternion::conj))
    }

    /// Real 1-form built from the `μ`-th quaternion component of every coefficient.
    pub fn component(&self, mu: usize) -> Self {
        QOneForm::real(self.0.map(|q| q.component(mu)))
    }

    /// Real covector of the `μ`-th component.
    pub fn covector(&self, mu: usize) -> [f64; 4] {
        self.0.map(|q| q.component(mu))
    }

    pub fn left_mul(&self, q: Quaternion) -> Self {
        QOneForm(self.0.map(|c| q * c))
    }

    pub fn right_mul(&self, q: Quaternion) -> Self {
        QOneForm(self.0.map(|c| c * q))
    }

    /// Precomposition with a real linear map given by its columns: `(self ∘ M)(e_ν) = self(M e_ν)`.
    pub fn precompose(&self, columns: &[Quaternion; 4]) -> Self {
        QOneForm(columns.map(|col| self.eval(col)))
    }

    /// The real 4×4 matrix of the form read as a linear map ℝ⁴ → ℝ⁴ (row μ, column ν).
    pub fn matrix(&self) -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for (nu, c) in self.0.iter().enumerate() {
            for (mu, row) in m.iter_mut().enumerate() {
                row[nu] = c.component(mu);
            }
        }
        m
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().map(|q| q.norm()).fold(0.0, f64::max)
    }

    /// Frobenius norm of the coefficient array.
    pub fn frobenius(&self) -> f64 {
        self.0.iter().map(|q| q.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl Index<usize> for QOneForm {
    type Output = Quaternion;
    fn index(&self, nu: usize) -> &Quaternion {
        &self.0[nu]
    }
}

impl QTwoForm {
    /// `dx^μ ∧ dx^ν` (any order; antisymmetry applied).
    pub fn coordinate(mu: usize, nu: usize) -> Self {
        let mut w = QTwoForm::default();
        if let Some((slot, sign)) = pair_slot(mu, nu) {
            w.0[slot] = Quaternion::real(sign);
        }
        w
    }

    /// Coefficient of `dx^μ ∧ dx^ν`, i.e. the value on `(e_μ, e_ν)`.
    pub fn coeff(&self, mu: usize, nu: usize) -> Quaternion {
        match pair_slot(mu, nu) {
            Some((slot, sign)) => self.0[slot] * sign,
            None => Quaternion::ZERO,
        }
    }

    pub fn eval(&self, u: Quaternion, v: Quaternion) -> Quaternion {
        let (u, v) = (u.to_array(), v.to_array());
        PAIRS
            .iter()
            .zip(self.0.iter())
            .map(|(&(m, n), &c)| c * (u[m] * v[n] - u[n] * v[m]))
            .sum()
    }

    pub fn conj(&self) -> Self {
        QTwoForm(self.0.map(Quaternion::conj))
    }

    pub fn left_mul(&self, q: Quaternion) -> Self {
        QTwoForm(self.0.map(|c| q * c))
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().map(|q| q.norm()).fold(0.0, f64::max)
    }
}

impl QThreeForm {
    pub fn eval(&self, u: Quaternion, v: Quaternion, t: Quaternion) -> Quaternion {
        let (u, v, t) = (u.to_array(), v.to_array(), t.to_array());
        TRIPLES
            .iter()
            .zip(self.0.iter())
            .map(|(&(a, b, c), &q)| {
                let det = u[a] * (v[b] * t[c] - v[c] * t[b]) - u[b] * (v[a] * t[c] - v[c] * t[a])
                    + u[c] * (v[a] * t[b] - v[b] * t[a]);
                q * det
            })
            .sum()
    }

    pub fn left_mul(&self, q: Quaternion) -> Self {
        QThreeForm(self.0.map(|c| q * c))
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().map(|q| q.norm()).fold(0.0, f64::max)
    }
}

/// `(a ∧ b)(u, v) = a(u) b(v) − a(v) b(u)`.
pub fn wedge11(a: &QOneForm, b: &QOneForm) -> QTwoForm {
    QTwoForm(PAIRS.map(|(m, n)| a[m] * b[n] - a[n] * b[m]))
}

/// `(a ∧ w)(u, v, t) = a(u) w(v, t) − a(v) w(u, t) + a(t) w(u, v)`, `a` on the left.
pub fn wedge12(a: &QOneForm, w: &QTwoForm) -> QThreeForm {
    QThreeForm(TRIPLES.map(|(m, n, r)| {
        a[m] * w.coeff(n, r) - a[n] * w.coeff(m, r) + a[r] * w.coeff(m, n)
    }))
}

/// `(w ∧ b)(u, v, t) = w(u, v) b(t) − w(u, t) b(v) + w(v, t) b(u)`, `b` on the right.
pub fn wedge21(w: &QTwoForm, b: &QOneForm) -> QThreeForm {
    QThreeForm(TRIPLES.map(|(m, n, r)| {
        w.coeff(m, n) * b[r] - w.coeff(m, r) * b[n] + w.coeff(n, r) * b[m]
    }))
}

/// The real 2-forms `ω₁, ω₂, ω₃` with `dx ∧ conj(dx) = i ω₁ + j ω₂ + k ω₃`.
pub fn omega_basis() -> (QTwoForm, QTwoForm, QTwoForm) {
    let two = |a: (usize, usize), b: (usize, usize)| {
        (QTwoForm::coordinate(a.0, a.1) + QTwoForm::coordinate(b.0, b.1)) * 2.0
    };
    (two((1, 0), (3, 2)), two((2, 0), (1, 3)), two((3, 0), (2, 1)))
}

macro_rules! linear_ops {
    ($t:ident) => {
        impl Add for $t {
            type Output = $t;
            fn add(self, o: $t) -> $t {
                let mut r = self;
                r.0.iter_mut().zip(o.0.iter()).for_each(|(a, b)| *a += *b);
                r
            }
        }
        impl Sub for $t {
            type Output = $t;
            fn sub(self, o: $t) -> $t {
                let mut r = self;
                r.0.iter_mut().zip(o.0.iter()).for_each(|(a, b)| *a -= *b);
                r
            }
        }
        impl Neg for $t {
            type Output = $t;
            fn neg(self) -> $t {
                $t(self.0.map(|q| -q))
            }
        }
        impl Mul<f64> for $t {
            type Output = $t;
            fn mul(self, s: f64) -> $t {
                $t(self.0.map(|q| q * s))
            }
        }
    };
}

linear_ops!(QOneForm);
linear_ops!(QTwoForm);
linear_ops!(QThreeForm);

impl TryFrom<BTreeMap<String, Quaternion>> for QTwoForm {
    type Error = String;
    fn try_from(map: BTreeMap<String, Quaternion>) -> Result<Self, String> {
        let mut w = QTwoForm::default();
        for (key, value) in map {
            let slot = PAIRS
                .iter()
                .position(|&(m, n)| key == format!("{m}{n}"))
                .ok_or_else(|| format!("unknown 2-form key {key:?}"))?;
            w.0[slot] = value;
        }
        Ok(w)
    }
}

impl From<QTwoForm> for BTreeMap<String, Quaternion> {
    fn from(w: QTwoForm) -> Self {
        PAIRS
            .iter()
            .zip(w.0.iter())
            .map(|(&(m, n), &q)| (format!("{m}{n}"), q))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const E: [Quaternion; 4] = Quaternion::BASIS;
    const I: Quaternion = Quaternion::I;
    const J: Quaternion = Quaternion::J;
    const K: Quaternion = Quaternion::K;

    #[test]
    fn coordinate_wedges() {
        let w = wedge11(&QOneForm::coordinate(0), &QOneForm::coordinate(1));
        assert_eq!(w.eval(E[0], E[1]), Quaternion::ONE);
        assert_eq!(w.eval(E[1], E[0]), -Quaternion::ONE);

        let t = wedge12(&QOneForm::coordinate(0), &QTwoForm::coordinate(1, 2));
        assert_eq!(t.eval(E[0], E[1], E[2]), Quaternion::ONE);

        let zero = wedge12(&QOneForm::coordinate(0), &QTwoForm::coordinate(0, 1));
        assert_eq!(zero, QThreeForm::default());
    }

    #[test]
    fn rank_one_real_direction_squares_to_zero() {
        let a = QOneForm::coordinate(0).left_mul(I);
        let w = wedge11(&a, &a);
        assert_eq!(w, QTwoForm::default());
    }

    #[test]
    fn dx_wedge_conj_dx_is_omega_combination() {
        let dx = QOneForm::identity();
        let lhs = wedge11(&dx, &dx.conj());
        let (w1, w2, w3) = omega_basis();
        let rhs = w1.left_mul(I) + w2.left_mul(J) + w3.left_mul(K);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn omega_values() {
        let (w1, w2, w3) = omega_basis();
        assert_eq!(w1.eval(E[1], E[0]), Quaternion::real(2.0));
        assert_eq!(w2.eval(E[0], E[2]), Quaternion::real(-2.0));
        assert_eq!(w3.eval(E[0], E[1]), Quaternion::ZERO);
        assert_eq!(w1.coeff(2, 3), Quaternion::real(-2.0));
        assert_eq!(w2.coeff(1, 3), Quaternion::real(2.0));
        assert_eq!(w3.coeff(1, 2), Quaternion::real(-2.0));
    }

    #[test]
    fn gamma_wedge_omega1() {
        // expand ω₁ = 2(dx¹∧dx⁰ + dx³∧dx²): only the γ(e₂)·ω₁(e₁,e₀) term survives
        let (w1, _, _) = omega_basis();
        let t = wedge12(&QOneForm::coordinate(2), &w1);
        assert_eq!(t.eval(E[2], E[1], E[0]), Quaternion::real(2.0));
    }

    #[test]
    fn two_form_json_keys() {
        let w = QTwoForm::coordinate(1, 3) * 2.0;
        let s = serde_json::to_value(w).unwrap();
        assert_eq!(s["13"], serde_json::json!([2.0, 0.0, 0.0, 0.0]));
        assert_eq!(s["01"], serde_json::json!([0.0, 0.0, 0.0, 0.0]));
        let back: QTwoForm = serde_json::from_value(s).unwrap();
        assert_eq!(back, w);
        assert!(serde_json::from_str::<QTwoForm>(r#"{"10":[1,0,0,0]}"#).is_err());
    }

    fn quat() -> impl Strategy<Value = Quaternion> {
        prop::array::uniform4(-3.0f64..3.0).prop_map(Quaternion::from_array)
    }

    fn one_form() -> impl Strategy<Value = QOneForm> {
        prop::array::uniform4(quat()).prop_map(QOneForm)
    }

    fn real_form() -> impl Strategy<Value = QOneForm> {
        prop::array::uniform4(-3.0f64..3.0).prop_map(QOneForm::real)
    }

    proptest! {
        #[test]
        fn wedge11_antisymmetric(a in one_form(), b in one_form(), u in quat(), v in quat()) {
            let w = wedge11(&a, &b);
            let s = w.eval(u, v) + w.eval(v, u);
            let scale = a.max_norm() * b.max_norm() * u.norm() * v.norm();
            prop_assert!(s.norm() <= 1e-14 * scale.max(1e-300) * 16.0);
            // agrees with the defining formula
            let direct = a.eval(u) * b.eval(v) - a.eval(v) * b.eval(u);
            prop_assert!((w.eval(u, v) - direct).norm() <= 1e-13 * scale.max(1e-300) * 16.0);
        }

        #[test]
        fn real_forms_anticommute(p in real_form(), q in real_form()) {
            prop_assert_eq!(wedge11(&p, &q), -wedge11(&q, &p));
        }

        #[test]
        fn wedge12_alternates(a in one_form(), b in one_form(), c in one_form(),
                              u in quat(), v in quat(), t in quat()) {
            let w = wedge11(&b, &c);
            let f = wedge12(&a, &w);
            let direct = a.eval(u) * w.eval(v, t) - a.eval(v) * w.eval(u, t) + a.eval(t) * w.eval(u, v);
            let scale = a.max_norm() * b.max_norm() * c.max_norm() * u.norm() * v.norm() * t.norm();
            prop_assert!((f.eval(u, v, t) - direct).norm() <= 1e-12 * scale.max(1e-300) * 64.0);
            prop_assert!((f.eval(u, v, t) + f.eval(v, u, t)).norm() <= 1e-12 * scale.max(1e-300) * 64.0);
            // associativity of the graded product
            let g = wedge21(&wedge11(&a, &b), &c);
            let h = wedge12(&a, &w);
            prop_assert!((g - h).max_norm() <= 1e-12 * (a.max_norm() * b.max_norm() * c.max_norm()).max(1e-300) * 16.0);
        }
    }
}
