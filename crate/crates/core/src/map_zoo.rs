//! The map families under test and their evaluators.
//!
//! * [`HopfRestriction`]: `x ↦ L(x)⁻¹M(x)` (left) or `M(x)L(x)⁻¹` (right) for
//!   affine `L, M`, restrictions of the quaternionic Hopf fibrations.
//! * [`ModelProjection`]: the radial map `x ↦ y` defined by `x = y/(1+λ|y|²)`.
//! * [`JetMobius`]: the Moebius transformation that adjusts the quadratic
//!   part of a jet to `B_α = p(α) + αq`.
//! * [`ClassicalProjectionR5`]: central projection of a hyperplane of ℝ⁵ onto
//!   the unit sphere, read through the stereographic chart.
//! * [`Jet3`]: a cubic Taylor polynomial built from `(f(x₀), A, B, C)`.
//!
//! [`MapSpec`] is the tagged union of all of these plus composition and a
//! cubic perturbation used as a negative control.

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::qforms::QOneForm;
use crate::quat::Quaternion;
use crate::sphere_geom::{central_project, stereographic, Branch, PointR5};

/// Anything that can be evaluated as a map from 4-space to quaternions.
pub trait Map4: Sync {
    fn eval(&self, x: Quaternion) -> Result<Quaternion>;
}

impl<F> Map4 for F
where
    F: Fn(Quaternion) -> Result<Quaternion> + Sync,
{
    fn eval(&self, x: Quaternion) -> Result<Quaternion> {
        self(x)
    }
}

/// Multiplication side of `B` relative to `A`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Left,
    Right,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// `x ↦ linear·x + offset` on 4-space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMapR4 {
    pub linear: [[f64; 4]; 4],
    pub offset: Quaternion,
}

impl AffineMapR4 {
    pub fn identity() -> Self {
        let mut linear = [[0.0; 4]; 4];
        (0..4).for_each(|k| linear[k][k] = 1.0);
        AffineMapR4 { linear, offset: Quaternion::ZERO }
    }

    pub fn constant(c: Quaternion) -> Self {
        AffineMapR4 { linear: [[0.0; 4]; 4], offset: c }
    }

    pub fn scaling(s: f64) -> Self {
        let mut m = Self::identity();
        m.linear.iter_mut().enumerate().for_each(|(k, row)| row[k] = s);
        m
    }

    pub fn apply_linear(&self, v: Quaternion) -> Quaternion {
        let v = v.to_array();
        Quaternion::from_array(std::array::from_fn(|r| (0..4).map(|c| self.linear[r][c] * v[c]).sum()))
    }

    pub fn eval(&self, x: Quaternion) -> Quaternion {
        self.apply_linear(x) + self.offset
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopfRestriction {
    #[serde(default)]
    pub side: Side,
    #[serde(rename = "L")]
    pub l: AffineMapR4,
    #[serde(rename = "M")]
    pub m: AffineMapR4,
}

impl HopfRestriction {
    pub fn new(l: AffineMapR4, m: AffineMapR4, side: Side) -> Self {
        HopfRestriction { side, l, m }
    }

    pub fn eval(&self, x: Quaternion) -> Result<Quaternion> {
        let lx = self.l.eval(x);
        let li = lx.inv().map_err(Error::domain)?;
        let mx = self.m.eval(x);
        Ok(match self.side {
            Side::Left => li * mx,
            Side::Right => mx * li,
        })
    }

    /// Closed-form `A_α` (the directional derivative along `α`).
    pub fn a_closed_form(&self, x: Quaternion, alpha: Quaternion) -> Result<Quaternion> {
        let li = self.l.eval(x).inv().map_err(Error::domain)?;
        let (mx, la, ma) = (self.m.eval(x), self.l.apply_linear(alpha), self.m.apply_linear(alpha));
        Ok(match self.side {
            Side::Left => -(li * la * li * mx) + li * ma,
            Side::Right => -(mx * li * la * li) + ma * li,
        })
    }

    /// Closed-form `B_α`: `−2 L(x)⁻¹ L⃗(α)` on the left, `−2 L⃗(α) L(x)⁻¹` on the right.
    pub fn b_closed_form(&self, x: Quaternion, alpha: Quaternion) -> Result<Quaternion> {
        let li = self.l.eval(x).inv().map_err(Error::domain)?;
        let la = self.l.apply_linear(alpha);
        Ok(match self.side {
            Side::Left => li * la * -2.0,
            Side::Right => la * li * -2.0,
        })
    }
}

/// Draw a well-conditioned Hopf restriction for use on the ball `|x| ≤ 0.5`:
/// `|L(x)| ≥ 1/2` there and `M⃗` stays close to a rotation-scaled identity.
pub fn random_hopf<R: Rng>(rng: &mut R, side: Side) -> HopfRestriction {
    let mut small = |scale: f64| -> [[f64; 4]; 4] {
        std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-scale..scale)))
    };
    let l_lin = small(0.25);
    let mut m_lin = small(0.3);
    (0..4).for_each(|k| m_lin[k][k] += 1.0);
    let mut q = |scale: f64| Quaternion::from_array(std::array::from_fn(|_| rng.random_range(-scale..scale)));
    let l_off = Quaternion::ONE + q(0.2);
    let m_off = q(0.5);
    HopfRestriction::new(
        AffineMapR4 { linear: l_lin, offset: l_off },
        AffineMapR4 { linear: m_lin, offset: m_off },
        side,
    )
}

/// The radial map `x ↦ y` with `x = y/(1 + λ|y|²)`, on the branch through 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelProjection {
    pub lambda: f64,
}

impl ModelProjection {
    /// Radius of the open disk where the branch is defined (∞ for `λ ≤ 0`).
    pub fn domain_radius(&self) -> f64 {
        if self.lambda > 0.0 {
            0.5 / self.lambda.sqrt()
        } else {
            f64::INFINITY
        }
    }

    /// Closed-form `A_α` at the image point `y`, valid for `λ = 1`.
    pub fn a_closed_form_unit(y: Quaternion, alpha: Quaternion) -> Quaternion {
        let n2 = y.norm_sqr();
        (y * (2.0 * y.inner(alpha) / (1.0 - n2)) + alpha) * (1.0 + n2)
    }

    /// Closed-form `B_α` at the image point `y`, valid for `λ = 1`.
    pub fn b_closed_form_unit(y: Quaternion, alpha: Quaternion) -> Quaternion {
        let n2 = y.norm_sqr();
        let a = Self::a_closed_form_unit(y, alpha);
        (Quaternion::real(2.0 * (1.0 + n2) / (1.0 - n2) * y.inner(alpha)) + y * a.conj() / (1.0 - n2)) * 2.0
    }

    /// Closed-form `C` at the image point `y`, valid for `λ = 1`.
    pub fn c_closed_form_unit(y: Quaternion) -> f64 {
        6.0 / (1.0 - y.norm_sqr()).powi(2)
    }
}

pub fn eval_model(m: &ModelProjection, x: Quaternion) -> Result<Quaternion> {
    let s2 = x.norm_sqr();
    let disc = 1.0 - 4.0 * m.lambda * s2;
    if !(disc >= 0.0) {
        return Err(Error::OutsideDisk { disc });
    }
    // y = t·x/|x| with t = 2s/(1 + √disc), written without dividing by s
    Ok(x * (2.0 / (1.0 + disc.sqrt())))
}

/// `y ↦ 2q⁻¹(1 − (qy/2)(1 − p(y)/2)⁻¹)⁻¹ − 2q⁻¹`, with the `q = 0` limit `y/(1 − p(y)/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetMobius {
    pub p: [f64; 4],
    pub q: Quaternion,
}

pub const EPS_POLE: f64 = 1e-12;

pub fn eval_jet_mobius(m: &JetMobius, y: Quaternion) -> Result<Quaternion> {
    let py: f64 = m.p.iter().zip(y.to_array()).map(|(a, b)| a * b).sum();
    let den = 1.0 - py / 2.0;
    if den.abs() <= EPS_POLE {
        return Err(Error::MobiusPole);
    }
    // 2q⁻¹((1−u)⁻¹ − 1) = w(1−u)⁻¹ with w = y/den and u = q·w/2;
    // this form has no cancellation as q → 0 and reduces to the limit at q = 0
    let w = y / den;
    let one_minus_u = Quaternion::ONE - m.q * w * 0.5;
    let inv = one_minus_u.inv_with(EPS_POLE).map_err(|_| Error::MobiusPole)?;
    Ok(w * inv)
}

/// Central projection of a hyperplane in ℝ⁵ onto the unit sphere, in the
/// stereographic chart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalProjectionR5 {
    pub plane_point: PointR5,
    pub frame: [PointR5; 4],
    pub center: PointR5,
    #[serde(default)]
    pub branch: Branch,
}

impl ClassicalProjectionR5 {
    /// Horizontal hyperplane `z = z1` with the standard frame, center `(0, z0)`.
    pub fn horizontal(z1: f64, z0: f64) -> Self {
        ClassicalProjectionR5 {
            plane_point: PointR5([0.0, 0.0, 0.0, 0.0, z1]),
            frame: std::array::from_fn(|k| {
                let mut v = [0.0; 5];
                v[k] = 1.0;
                PointR5(v)
            }),
            center: PointR5([0.0, 0.0, 0.0, 0.0, z0]),
            branch: Branch::Far,
        }
    }

    pub fn eval(&self, x: Quaternion) -> Result<Quaternion> {
        let p = central_project(&self.plane_point, &self.frame, &self.center, x, self.branch)
            .map_err(Error::domain)?;
        stereographic(p).map_err(Error::domain)
    }
}

/// Degree-3 Taylor polynomial at `base` determined by `(f(x₀), A, B, C)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jet3 {
    #[serde(rename = "x0", default)]
    pub base: Quaternion,
    pub f0: Quaternion,
    #[serde(rename = "A")]
    pub a: QOneForm,
    #[serde(rename = "B")]
    pub b: QOneForm,
    #[serde(rename = "C", serialize_with = "ser_scalar_or_quat", deserialize_with = "de_scalar_or_quat")]
    pub c: Quaternion,
    #[serde(default)]
    pub side: Side,
}

impl Jet3 {
    /// The normalized jet `x + (p(x)+xq)x/2 + ((3/2)(p(x)+xq)² + C|x|²)x/6` at 0.
    pub fn admissible(p: [f64; 4], q: Quaternion, c: f64) -> Self {
        Jet3 {
            base: Quaternion::ZERO,
            f0: Quaternion::ZERO,
            a: QOneForm::identity(),
            b: QOneForm::real(p) + QOneForm::identity().right_mul(q),
            c: Quaternion::real(c),
            side: Side::Left,
        }
    }
}

pub fn jet3_eval(j: &Jet3, x: Quaternion) -> Quaternion {
    let h = x - j.base;
    let a = j.a.eval(h);
    let b = j.b.eval(h);
    let cubic = b * b * 1.5 + j.c * a.norm_sqr();
    match j.side {
        Side::Left => j.f0 + a + b * a * 0.5 + cubic * a / 6.0,
        Side::Right => j.f0 + a + a * b * 0.5 + a * cubic / 6.0,
    }
}

/// The black box under test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MapSpec {
    Hopf(HopfRestriction),
    Model(ModelProjection),
    Mobius(JetMobius),
    Classical(ClassicalProjectionR5),
    /// Applied in list order: the first map acts first.
    Compose { maps: Vec<MapSpec> },
    Jet(Jet3),
    /// `base(x) + amplitude·(x⁰)³·i`.
    Perturbed { base: Box<MapSpec>, amplitude: f64 },
}

impl MapSpec {
    pub fn identity() -> Self {
        MapSpec::Hopf(HopfRestriction::new(
            AffineMapR4::constant(Quaternion::ONE),
            AffineMapR4::identity(),
            Side::Left,
        ))
    }

    pub fn model(lambda: f64) -> Self {
        MapSpec::Model(ModelProjection { lambda })
    }

    pub fn perturbed(base: MapSpec, amplitude: f64) -> Self {
        MapSpec::Perturbed { base: Box::new(base), amplitude }
    }

    /// Structural checks that do not depend on an evaluation point.
    pub fn validate(&self) -> Result<()> {
        let finite = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!("non-finite {what}")))
            }
        };
        match self {
            MapSpec::Hopf(h) => finite(
                [h.l, h.m].iter().all(|m| m.offset.is_finite() && m.linear.iter().flatten().all(|v| v.is_finite())),
                "affine coefficients",
            ),
            MapSpec::Model(m) => finite(m.lambda.is_finite(), "lambda"),
            MapSpec::Mobius(m) => finite(m.q.is_finite() && m.p.iter().all(|v| v.is_finite()), "p or q"),
            MapSpec::Classical(c) => {
                finite(c.plane_point.is_finite() && c.center.is_finite() && c.frame.iter().all(|v| v.is_finite()), "geometry")?;
                let m = nalgebra::DMatrix::from_fn(5, 4, |r, k| c.frame[k].0[r]);
                let sv = m.singular_values();
                let (max, min) = (sv.max(), sv.min());
                if !(min > 1e-12 * max) {
                    return Err(Error::InvalidSpec("projection frame must have rank 4".into()));
                }
                Ok(())
            }
            MapSpec::Compose { maps } => {
                if maps.is_empty() {
                    return Err(Error::InvalidSpec("composition list is empty".into()));
                }
                maps.iter().try_for_each(MapSpec::validate)
            }
            MapSpec::Jet(j) => finite(
                j.base.is_finite() && j.f0.is_finite() && j.c.is_finite() && j.a.0.iter().chain(j.b.0.iter()).all(|q| q.is_finite()),
                "jet coefficients",
            ),
            MapSpec::Perturbed { base, amplitude } => {
                finite(amplitude.is_finite(), "amplitude")?;
                base.validate()
            }
        }
    }

    /// Short human-readable family name.
    pub fn family(&self) -> &'static str {
        match self {
            MapSpec::Hopf(_) => "hopf",
            MapSpec::Model(_) => "model",
            MapSpec::Mobius(_) => "mobius",
            MapSpec::Classical(_) => "classical",
            MapSpec::Compose { .. } => "compose",
            MapSpec::Jet(_) => "jet",
            MapSpec::Perturbed { .. } => "perturbed",
        }
    }
}

/// Evaluate `spec` at `x`; every failure is reported as a domain violation.
pub fn eval(spec: &MapSpec, x: Quaternion) -> Result<Quaternion> {
    if !x.is_finite() {
        return Err(Error::domain(Error::InvalidArgument("non-finite point".into())));
    }
    let y = match spec {
        MapSpec::Hopf(h) => h.eval(x),
        MapSpec::Model(m) => eval_model(m, x),
        MapSpec::Mobius(m) => eval_jet_mobius(m, x),
        MapSpec::Classical(c) => c.eval(x),
        MapSpec::Compose { maps } => {
            if maps.is_empty() {
                return Err(Error::InvalidSpec("composition list is empty".into()));
            }
            maps.iter().try_fold(x, |acc, m| eval(m, acc))
        }
        MapSpec::Jet(j) => Ok(jet3_eval(j, x)),
        MapSpec::Perturbed { base, amplitude } => {
            eval(base, x).map(|y| y + Quaternion::I * (amplitude * x.w.powi(3)))
        }
    }
    .map_err(Error::domain)?;
    if !y.is_finite() {
        return Err(Error::domain(Error::InvalidArgument("non-finite value".into())));
    }
    Ok(y)
}

impl Map4 for MapSpec {
    fn eval(&self, x: Quaternion) -> Result<Quaternion> {
        eval(self, x)
    }
}

/// A classical projection whose 3-jet at 0 is the admissible jet `(p, q, C)`:
/// `Mobius(0, q) ∘ Model(C/6) ∘ Mobius(p, 0)`, listed in application order.
///
/// `Mobius(p, 0)` is the real projective map `y/(1 − p(y)/2)`, so it must act
/// before the model map; after it, circles would not stay circles. The model
/// map has no quadratic term, so the order changes nothing below degree 4.
/// Trivial stages are dropped; all data zero gives the identity.
pub fn synth_from_jet(p: [f64; 4], q: Quaternion, c: f64) -> Result<MapSpec> {
    if !(p.iter().all(|v| v.is_finite()) && q.is_finite() && c.is_finite()) {
        return Err(Error::InvalidArgument("jet data must be finite".into()));
    }
    let mut maps = Vec::new();
    if p.iter().any(|v| *v != 0.0) {
        maps.push(MapSpec::Mobius(JetMobius { p, q: Quaternion::ZERO }));
    }
    if c != 0.0 {
        maps.push(MapSpec::model(c / 6.0));
    }
    if q != Quaternion::ZERO {
        maps.push(MapSpec::Mobius(JetMobius { p: [0.0; 4], q }));
    }
    Ok(match maps.len() {
        0 => MapSpec::identity(),
        1 => maps.pop().expect("one stage"),
        _ => MapSpec::Compose { maps },
    })
}

fn ser_scalar_or_quat<S: Serializer>(c: &Quaternion, s: S) -> std::result::Result<S::Ok, S::Error> {
    if c.im() == Quaternion::ZERO {
        s.serialize_f64(c.w)
    } else {
        c.serialize(s)
    }
}

fn de_scalar_or_quat<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Quaternion, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum ScalarOrQuat {
        Scalar(f64),
        Quat([f64; 4]),
    }
    Ok(match ScalarOrQuat::deserialize(d)? {
        ScalarOrQuat::Scalar(v) => Quaternion::real(v),
        ScalarOrQuat::Quat(a) => Quaternion::from_array(a),
    })
}
