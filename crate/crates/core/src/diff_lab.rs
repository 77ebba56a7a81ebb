//! Numerical differentiation of black-box maps and extraction of the
//! differential invariants `A`, `B`, `C`.
//!
//! For a map `f` we write `A_α = ∂_α f`. On the left side there is a
//! quaternion 1-form `B` with `∂_α A_α = B_α A_α`; on the right side
//! `∂_α A_α = A_α B_α`. The tensor `C_{αβ} = ∂_α B_β − ½ B_α B_β` has diagonal
//! `C_{ββ} = C |A_β|²` for a single scalar `C` on any map taking lines to
//! circles.
//!
//! Every quantity is computed from the derivative tensors of `f` up to order
//! three. Those come from pure directional derivatives along lines, each
//! estimated by central differences with Ridders–Richardson extrapolation,
//! and combined by polarization. Right-side quantities are computed as the
//! left-side quantities of `conj ∘ f` and conjugated back, so
//! `C_{αβ} = ∂_α B_β − ½ B_β B_α` on that side.

use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix4, SMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map_zoo::{Jet3, Map4, Side};
use crate::qforms::QOneForm;
use crate::quat::Quaternion;

/// Linearity residual below which a side is admitted.
pub const TOL_SIDE: f64 = 1e-6;
/// Smallest singular value of `A` relative to the largest.
pub const EPS_COND: f64 = 1e-10;

// Ridders tableau: initial step, shrink factor, depth, early-exit factor.
const H0: f64 = 0.1;
const CON: f64 = 1.4;
const NTAB: usize = 12;
const SAFE: f64 = 2.0;
const MAX_SHRINK: usize = 40;
const STARTS: usize = 4;
const START_RATIO: f64 = 0.25;
// first tableau good enough, skip the other starts
const ACCEPT_REL: f64 = 1e-9;

/// A derivative estimate with Ridders' error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: Quaternion,
    pub error: f64,
}

fn stencil<F: Map4 + ?Sized>(f: &F, x: Quaternion, u: Quaternion, h: f64, order: usize, f0: Quaternion) -> Result<Quaternion> {
    let phi = |t: f64| f.eval(x + u * t);
    Ok(match order {
        1 => (phi(h)? - phi(-h)?) / (2.0 * h),
        2 => (phi(h)? - f0 * 2.0 + phi(-h)?) / (h * h),
        3 => (phi(2.0 * h)? - phi(h)? * 2.0 + phi(-h)? * 2.0 - phi(-2.0 * h)?) / (2.0 * h * h * h),
        _ => return Err(Error::InvalidArgument(format!("derivative order {order} not supported"))),
    })
}

/// `d^k/dt^k f(x + t·u)` at `t = 0` for a unit vector `u`.
///
/// The largest step whose stencil stays in the domain is found by halving;
/// the tableau is then run from several starting steps below it and the
/// estimate with the smallest error wins. Near a singularity the first rows
/// of a single tableau are useless.
fn ridders<F: Map4 + ?Sized>(f: &F, x: Quaternion, u: Quaternion, order: usize, f0: Quaternion) -> Result<Estimate> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidArgument(format!("derivative order {order} not supported")));
    }
    let mut h = H0 * x.norm().max(1.0);
    let mut last_err = None;
    let mut valid = None;
    for _ in 0..MAX_SHRINK {
        match stencil(f, x, u, h, order, f0) {
            Ok(v) => {
                valid = Some(v);
                break;
            }
            Err(e) => {
                last_err = Some(e);
                h *= 0.5;
            }
        }
    }
    let first = valid.ok_or_else(|| {
        Error::StencilOutsideDomain(Box::new(last_err.unwrap_or(Error::InvalidArgument("empty stencil".into()))))
    })?;
    let mut best = tableau(f, x, u, order, f0, h, first);
    let mut start = h;
    for _ in 1..STARTS {
        if best.error <= ACCEPT_REL * best.value.norm().max(1.0) {
            break;
        }
        start *= START_RATIO;
        let Ok(v) = stencil(f, x, u, start, order, f0) else { continue };
        let e = tableau(f, x, u, order, f0, start, v);
        if e.error < best.error {
            best = e;
        }
    }
    Ok(best)
}

fn tableau<F: Map4 + ?Sized>(f: &F, x: Quaternion, u: Quaternion, order: usize, f0: Quaternion, h0: f64, first: Quaternion) -> Estimate {
    let con2 = CON * CON;
    let mut h = h0;
    let mut tab = [[Quaternion::ZERO; NTAB]; NTAB];
    tab[0][0] = first;
    let mut best = first;
    let mut err = f64::INFINITY;
    for i in 1..NTAB {
        h /= CON;
        tab[0][i] = match stencil(f, x, u, h, order, f0) {
            Ok(v) => v,
            Err(_) => break,
        };
        let mut fac = con2;
        for j in 1..=i {
            tab[j][i] = (tab[j - 1][i] * fac - tab[j - 1][i - 1]) / (fac - 1.0);
            fac *= con2;
            let errt = (tab[j][i] - tab[j - 1][i]).norm().max((tab[j][i] - tab[j - 1][i - 1]).norm());
            if errt <= err {
                err = errt;
                best = tab[j][i];
            }
        }
        if (tab[i][i] - tab[i - 1][i - 1]).norm() >= SAFE * err {
            break;
        }
    }
    if !err.is_finite() {
        err = best.norm().max(f64::MIN_POSITIVE);
    }
    Estimate { value: best, error: err }
}

fn pure<F: Map4 + ?Sized>(f: &F, x: Quaternion, v: Quaternion, order: usize, f0: Quaternion) -> Result<Estimate> {
    let len = v.norm();
    if len == 0.0 {
        return Ok(Estimate { value: Quaternion::ZERO, error: 0.0 });
    }
    let e = ridders(f, x, v / len, order, f0)?;
    let s = len.powi(order as i32);
    Ok(Estimate { value: e.value * s, error: e.error * s })
}

/// Mixed directional derivative `∂_{d₁} … ∂_{d_k} f(x)` for `k = dirs.len() ≤ 3`.
///
/// Mixed derivatives are recovered from pure ones by polarization.
pub fn derivative<F: Map4 + ?Sized>(f: &F, x: Quaternion, dirs: &[Quaternion]) -> Result<Estimate> {
    let f0 = f.eval(x).map_err(|e| Error::StencilOutsideDomain(Box::new(e)))?;
    derivative_with(f, x, dirs, f0)
}

fn derivative_with<F: Map4 + ?Sized>(f: &F, x: Quaternion, dirs: &[Quaternion], f0: Quaternion) -> Result<Estimate> {
    let combine = |terms: &[(f64, Quaternion)], order: usize, denom: f64| -> Result<Estimate> {
        let mut value = Quaternion::ZERO;
        let mut error = 0.0;
        for &(sign, v) in terms {
            let e = pure(f, x, v, order, f0)?;
            value += e.value * sign;
            error += e.error;
        }
        Ok(Estimate { value: value / denom, error: error / denom })
    };
    match *dirs {
        [] => Ok(Estimate { value: f0, error: 0.0 }),
        [a] => pure(f, x, a, 1, f0),
        [a, b] if a == b => pure(f, x, a, 2, f0),
        [a, b] => combine(&[(1.0, a + b), (-1.0, a - b)], 2, 4.0),
        [a, b, c] if a == b && b == c => pure(f, x, a, 3, f0),
        [a, b, c] => {
            // T(a,b,c) = [P(a+b+c) − P(a+b−c) − P(a−b+c) + P(a−b−c)] / 24
            let (a, b, c) = if a == b { (a, b, c) } else if a == c { (a, c, b) } else { (b, c, a) };
            if a == b {
                // P(a−b±c) = ±P(c) because P is odd
                combine(&[(1.0, a * 2.0 + c), (-1.0, a * 2.0 - c), (-2.0, c)], 3, 24.0)
            } else {
                combine(&[(1.0, a + b + c), (-1.0, a + b - c), (-1.0, a - b + c), (1.0, a - b - c)], 3, 24.0)
            }
        }
        _ => Err(Error::InvalidArgument(format!("derivative order {} not supported", dirs.len()))),
    }
}

/// `f(x)` and all partial derivatives of order 1–3 in the coordinate basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeTensors {
    pub point: Quaternion,
    pub f0: Quaternion,
    pub first: [Quaternion; 4],
    pub second: [[Quaternion; 4]; 4],
    pub third: [[[Quaternion; 4]; 4]; 4],
    pub max_error: f64,
}

impl DerivativeTensors {
    pub fn compute<F: Map4 + ?Sized>(f: &F, x: Quaternion) -> Result<Self> {
        let e = Quaternion::BASIS;
        let f0 = f.eval(x).map_err(|err| Error::StencilOutsideDomain(Box::new(err)))?;
        let mut max_error: f64 = 0.0;
        let mut first = [Quaternion::ZERO; 4];
        for m in 0..4 {
            let d = derivative_with(f, x, &[e[m]], f0)?;
            max_error = max_error.max(d.error);
            first[m] = d.value;
        }
        let mut second = [[Quaternion::ZERO; 4]; 4];
        for m in 0..4 {
            for n in m..4 {
                let d = derivative_with(f, x, &[e[m], e[n]], f0)?;
                max_error = max_error.max(d.error);
                second[m][n] = d.value;
                second[n][m] = d.value;
            }
        }
        let mut third = [[[Quaternion::ZERO; 4]; 4]; 4];
        for m in 0..4 {
            for n in m..4 {
                for r in n..4 {
                    let d = derivative_with(f, x, &[e[m], e[n], e[r]], f0)?;
                    max_error = max_error.max(d.error);
                    for (i, j, k) in [(m, n, r), (m, r, n), (n, m, r), (n, r, m), (r, m, n), (r, n, m)] {
                        third[i][j][k] = d.value;
                    }
                }
            }
        }
        Ok(DerivativeTensors { point: x, f0, first, second, third, max_error })
    }

    pub fn a(&self) -> QOneForm {
        QOneForm(self.first)
    }

    pub fn hess(&self, u: Quaternion, v: Quaternion) -> Quaternion {
        let (u, v) = (u.to_array(), v.to_array());
        let mut s = Quaternion::ZERO;
        for m in 0..4 {
            for n in 0..4 {
                s += self.second[m][n] * (u[m] * v[n]);
            }
        }
        s
    }

    pub fn third_at(&self, u: Quaternion, v: Quaternion, w: Quaternion) -> Quaternion {
        let (u, v, w) = (u.to_array(), v.to_array(), w.to_array());
        let mut s = Quaternion::ZERO;
        for m in 0..4 {
            for n in 0..4 {
                for r in 0..4 {
                    s += self.third[m][n][r] * (u[m] * v[n] * w[r]);
                }
            }
        }
        s
    }

    /// Tensors of `conj ∘ f`.
    pub fn conj(&self) -> Self {
        DerivativeTensors {
            point: self.point,
            f0: self.f0.conj(),
            first: self.first.map(Quaternion::conj),
            second: self.second.map(|r| r.map(Quaternion::conj)),
            third: self.third.map(|p| p.map(|r| r.map(Quaternion::conj))),
            max_error: self.max_error,
        }
    }

    /// Ratio of the extreme singular values of `A` as a real 4×4 matrix.
    pub fn a_condition(&self) -> f64 {
        let m = self.a().matrix();
        let sv = Matrix4::from_fn(|r, c| m[r][c]).singular_values();
        let (max, min) = (sv.max(), sv.min());
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    }
}

/// The 4 basis directions followed by 4 fixed pseudo-random unit directions.
pub fn sample_directions() -> &'static [Quaternion; 8] {
    static DIRS: OnceLock<[Quaternion; 8]> = OnceLock::new();
    DIRS.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d1f5);
        std::array::from_fn(|k| {
            if k < 4 {
                Quaternion::BASIS[k]
            } else {
                loop {
                    let v = Quaternion::from_array(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
                    if v.norm() > 0.3 && v.norm() <= 1.0 {
                        break v.normalized().unwrap();
                    }
                }
            }
        })
    })
}

/// Least-squares operator mapping values on the sample directions to the
/// coefficients of the best linear form: `coef[ν] = Σ_k P[ν][k] · value[k]`.
fn fit_operator() -> &'static [[f64; 8]; 4] {
    static P: OnceLock<[[f64; 8]; 4]> = OnceLock::new();
    P.get_or_init(|| {
        let dirs = sample_directions();
        let x = SMatrix::<f64, 8, 4>::from_fn(|k, n| dirs[k].component(n));
        let xtx = x.transpose() * x;
        let pinv = xtx.try_inverse().expect("sample directions span 4-space") * x.transpose();
        std::array::from_fn(|n| std::array::from_fn(|k| pinv[(n, k)]))
    })
}

fn fit_linear(values: &[Quaternion; 8]) -> QOneForm {
    let p = fit_operator();
    QOneForm(std::array::from_fn(|n| (0..8).map(|k| values[k] * p[n][k]).sum()))
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// Left-side fit of `B` on a set of tensors, with its derivative.
#[derive(Clone, Debug)]
struct LeftFit {
    b: QOneForm,
    /// `db[μ][ν] = ∂_μ B_ν`.
    db: [[Quaternion; 4]; 4],
    residual: f64,
}

fn check_a(t: &DerivativeTensors) -> Result<()> {
    let cond = t.a_condition();
    if !(cond < 1.0 / EPS_COND) {
        return Err(Error::DegenerateA { cond });
    }
    Ok(())
}

fn left_fit(t: &DerivativeTensors) -> Result<LeftFit> {
    let dirs = sample_directions();
    let a = t.a();
    let mut d = [Quaternion::ZERO; 8];
    let mut a_inv = [Quaternion::ZERO; 8];
    for (k, &al) in dirs.iter().enumerate() {
        let ak = a.eval(al);
        a_inv[k] = ak.inv().map_err(|_| Error::DegenerateA { cond: f64::INFINITY })?;
        d[k] = t.hess(al, al) * a_inv[k];
    }
    let b = fit_linear(&d);
    let residual = rms(dirs.iter().zip(d.iter()).map(|(&al, &dk)| (dk - b.eval(al)).norm()))
        / rms(d.iter().map(|q| q.norm())).max(1.0);

    let mut db = [[Quaternion::ZERO; 4]; 4];
    for (mu, row) in db.iter_mut().enumerate() {
        let beta = Quaternion::BASIS[mu];
        // ∂_β D_α = T(β,α,α)A_α⁻¹ − D_α H(β,α) A_α⁻¹
        let dd: [Quaternion; 8] = std::array::from_fn(|k| {
            let al = dirs[k];
            t.third_at(beta, al, al) * a_inv[k] - d[k] * t.hess(beta, al) * a_inv[k]
        });
        *row = fit_linear(&dd).0;
    }
    Ok(LeftFit { b, db, residual })
}

/// Which multiplication sides admit a linear `B` at a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectedSide {
    Left,
    Right,
    Both,
    Neither,
}

impl DetectedSide {
    pub fn admits(self, side: Side) -> bool {
        matches!(
            (self, side),
            (DetectedSide::Both, _) | (DetectedSide::Left, Side::Left) | (DetectedSide::Right, Side::Right)
        )
    }

    /// Intersection of the sides admitted at two points.
    pub fn meet(self, other: DetectedSide) -> DetectedSide {
        use DetectedSide::*;
        match (self, other) {
            (Both, s) | (s, Both) => s,
            (Left, Left) => Left,
            (Right, Right) => Right,
            _ => Neither,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideReport {
    pub side: DetectedSide,
    pub left_linearity_residual: f64,
    pub right_linearity_residual: f64,
}

impl SideReport {
    fn classify(left: f64, right: f64) -> Self {
        let side = match (left <= TOL_SIDE, right <= TOL_SIDE) {
            (true, true) => DetectedSide::Both,
            (true, false) => DetectedSide::Left,
            (false, true) => DetectedSide::Right,
            (false, false) => DetectedSide::Neither,
        };
        SideReport { side, left_linearity_residual: left, right_linearity_residual: right }
    }

    /// Side used for extraction: Left when admitted, otherwise the better fit.
    pub fn preferred(&self) -> Side {
        match self.side {
            DetectedSide::Left | DetectedSide::Both => Side::Left,
            DetectedSide::Right => Side::Right,
            DetectedSide::Neither => {
                if self.left_linearity_residual <= self.right_linearity_residual {
                    Side::Left
                } else {
                    Side::Right
                }
            }
        }
    }
}

/// The tensor `C_{μν}` in the coordinate basis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CTensor(pub [[Quaternion; 4]; 4]);

impl CTensor {
    pub fn eval(&self, u: Quaternion, v: Quaternion) -> Quaternion {
        let (u, v) = (u.to_array(), v.to_array());
        let mut s = Quaternion::ZERO;
        for m in 0..4 {
            for n in 0..4 {
                s += self.0[m][n] * (u[m] * v[n]);
            }
        }
        s
    }
}

/// All invariants at one point, for one side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameData {
    pub point: Quaternion,
    pub f0: Quaternion,
    #[serde(rename = "A")]
    pub a: QOneForm,
    pub a_condition: f64,
    pub side_report: SideReport,
    /// Side the remaining fields were extracted for.
    pub side: Side,
    #[serde(rename = "B")]
    pub b: QOneForm,
    /// `dB[μ][ν] = ∂_μ B_ν`.
    #[serde(rename = "dB")]
    pub db: [[Quaternion; 4]; 4],
    #[serde(rename = "C")]
    pub c: Quaternion,
    pub c_tensor: CTensor,
    pub c_consistency: f64,
    /// Relative mismatch between `∂³_α f` and `((3/2)B_α² + C|A_α|²)A_α`.
    pub third_order_residual: f64,
    pub derivative_error: f64,
}

impl FrameData {
    pub fn jet(&self) -> Jet3 {
        Jet3 { base: self.point, f0: self.f0, a: self.a, b: self.b, c: self.c, side: self.side }
    }

    /// The same data seen through `conj ∘ f`, always on the left side.
    pub fn to_left_picture(&self) -> FrameData {
        if self.side == Side::Left {
            return self.clone();
        }
        let conj_rows = |m: [[Quaternion; 4]; 4]| m.map(|r| r.map(Quaternion::conj));
        FrameData {
            f0: self.f0.conj(),
            a: self.a.conj(),
            b: self.b.conj(),
            db: conj_rows(self.db),
            c: self.c.conj(),
            c_tensor: CTensor(conj_rows(self.c_tensor.0)),
            side: Side::Left,
            ..self.clone()
        }
    }
}

fn c_from_fit(a: &QOneForm, fit: &LeftFit) -> (Quaternion, CTensor, f64) {
    let tensor = CTensor(std::array::from_fn(|m| std::array::from_fn(|n| fit.db[m][n] - fit.b[m] * fit.b[n] * 0.5)));
    let dirs = sample_directions();
    let mut num = Quaternion::ZERO;
    let mut den = 0.0;
    let mut ratios = [Quaternion::ZERO; 8];
    let mut scale: f64 = 0.0;
    for (k, &al) in dirs.iter().enumerate() {
        let a2 = a.eval(al).norm_sqr();
        let ckk = tensor.eval(al, al);
        num += ckk;
        den += a2;
        ratios[k] = ckk / a2;
        let bk = fit.b.eval(al);
        let dbk: Quaternion = (0..4)
            .flat_map(|m| (0..4).map(move |n| (m, n)))
            .map(|(m, n)| fit.db[m][n] * (al.component(m) * al.component(n)))
            .sum();
        scale = scale.max((dbk.norm() + 0.5 * bk.norm_sqr()) / a2);
    }
    let c = num / den;
    let denom = c.norm().max(scale);
    let consistency = if denom > 0.0 {
        ratios.iter().map(|r| (*r - c).norm()).fold(0.0, f64::max) / denom
    } else {
        0.0
    };
    (c, tensor, consistency)
}

fn third_order_check(t: &DerivativeTensors, fit: &LeftFit, c: Quaternion) -> f64 {
    let a = t.a();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = a.max_norm();
    for &al in sample_directions() {
        let lhs = t.third_at(al, al, al);
        let (ak, bk) = (a.eval(al), fit.b.eval(al));
        let rhs = (bk * bk * 1.5 + c * ak.norm_sqr()) * ak;
        worst = worst.max((lhs - rhs).norm());
        scale = scale.max(lhs.norm());
    }
    if scale > 0.0 {
        worst / scale
    } else {
        0.0
    }
}

fn frame_with_report(t: &DerivativeTensors, side_report: SideReport, side: Side) -> Result<FrameData> {
    let conj_rows = |m: [[Quaternion; 4]; 4]| m.map(|r| r.map(Quaternion::conj));
    let work = match side {
        Side::Left => t.clone(),
        Side::Right => t.conj(),
    };
    let fit = left_fit(&work)?;
    let (c, tensor, consistency) = c_from_fit(&work.a(), &fit);
    let third = third_order_check(&work, &fit, c);
    let (b, db, c, tensor) = match side {
        Side::Left => (fit.b, fit.db, c, tensor),
        Side::Right => (fit.b.conj(), conj_rows(fit.db), c.conj(), CTensor(conj_rows(tensor.0))),
    };
    Ok(FrameData {
        point: t.point,
        f0: t.f0,
        a: t.a(),
        a_condition: t.a_condition(),
        side_report,
        side,
        b,
        db,
        c,
        c_tensor: tensor,
        c_consistency: consistency,
        third_order_residual: third,
        derivative_error: t.max_error,
    })
}

fn side_report_from(t: &DerivativeTensors) -> Result<SideReport> {
    check_a(t)?;
    let left = left_fit(t)?.residual;
    let right = left_fit(&t.conj())?.residual;
    Ok(SideReport::classify(left, right))
}

/// Extract every invariant at `x`. With `side = None` the side is chosen by
/// [`SideReport::preferred`]; an explicit side is used even if not admitted.
pub fn extract_frame<F: Map4 + ?Sized>(f: &F, x: Quaternion, side: Option<Side>) -> Result<FrameData> {
    frame_from_tensors(&DerivativeTensors::compute(f, x)?, side)
}

/// [`extract_frame`] on precomputed tensors.
pub fn frame_from_tensors(t: &DerivativeTensors, side: Option<Side>) -> Result<FrameData> {
    let report = side_report_from(t)?;
    frame_with_report(t, report, side.unwrap_or_else(|| report.preferred()))
}

pub fn extract_a<F: Map4 + ?Sized>(f: &F, x: Quaternion) -> Result<QOneForm> {
    let f0 = f.eval(x).map_err(|e| Error::StencilOutsideDomain(Box::new(e)))?;
    let first: Result<Vec<Quaternion>> = Quaternion::BASIS.iter().map(|&e| Ok(derivative_with(f, x, &[e], f0)?.value)).collect();
    let first = first?;
    Ok(QOneForm([first[0], first[1], first[2], first[3]]))
}

pub fn detect_side<F: Map4 + ?Sized>(f: &F, x: Quaternion) -> Result<SideReport> {
    side_report_from(&DerivativeTensors::compute(f, x)?)
}

pub fn extract_b<F: Map4 + ?Sized>(f: &F, x: Quaternion, side: Side) -> Result<QOneForm> {
    let t = DerivativeTensors::compute(f, x)?;
    let report = side_report_from(&t)?;
    if !report.side.admits(side) {
        return Err(Error::SideMismatch { requested: format!("{side:?}") });
    }
    Ok(match side {
        Side::Left => left_fit(&t)?.b,
        Side::Right => left_fit(&t.conj())?.b.conj(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CExtraction {
    #[serde(rename = "C")]
    pub c: Quaternion,
    pub tensor: CTensor,
    pub consistency: f64,
}

pub fn extract_c<F: Map4 + ?Sized>(f: &F, x: Quaternion, side: Side) -> Result<CExtraction> {
    let fr = extract_frame(f, x, Some(side))?;
    if !fr.side_report.side.admits(side) {
        return Err(Error::SideMismatch { requested: format!("{side:?}") });
    }
    Ok(CExtraction { c: fr.c, tensor: fr.c_tensor, consistency: fr.c_consistency })
}

/// `(p, q)` with `b(ξ) ≈ p(ξ) + ξ q` in the frame where `A = dx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Admissible {
    /// Real covector acting on `ξ = A_α`.
    pub p: [f64; 4],
    pub q: Quaternion,
    /// Relative ℓ² misfit `‖b − (p + ξq)‖ / ‖b‖`.
    pub residual: f64,
}

/// Columns of `A⁻¹` (as quaternions) for a nondegenerate 1-form `A`.
pub fn a_inverse_columns(a: &QOneForm) -> Result<[Quaternion; 4]> {
    let m = a.matrix();
    let mat = Matrix4::from_fn(|r, c| m[r][c]);
    let sv = mat.singular_values();
    let cond = if sv.min() > 0.0 { sv.max() / sv.min() } else { f64::INFINITY };
    if !(cond < 1.0 / EPS_COND) {
        return Err(Error::DegenerateA { cond });
    }
    let inv = mat.try_inverse().ok_or(Error::DegenerateA { cond })?;
    Ok(std::array::from_fn(|c| Quaternion::from_array(std::array::from_fn(|r| inv[(r, c)]))))
}

pub fn admissible_decompose(b: &QOneForm, a: &QOneForm) -> Result<Admissible> {
    let nb = b.precompose(&a_inverse_columns(a)?);
    // unknowns (p₀..p₃, q₀..q₃); row 4ν+μ is component μ of p_ν + e_ν q
    let mut m = DMatrix::<f64>::zeros(16, 8);
    let mut rhs = nalgebra::DVector::<f64>::zeros(16);
    for nu in 0..4 {
        m[(4 * nu, nu)] = 1.0;
        for qc in 0..4 {
            let col = (Quaternion::BASIS[nu] * Quaternion::BASIS[qc]).to_array();
            for mu in 0..4 {
                m[(4 * nu + mu, 4 + qc)] = col[mu];
            }
        }
        for mu in 0..4 {
            rhs[4 * nu + mu] = nb[nu].component(mu);
        }
    }
    let svd = m.clone().svd(true, true);
    let sol = svd.solve(&rhs, 1e-14).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let resid = (&m * &sol - &rhs).norm();
    let norm_b = rhs.norm();
    let residual = if norm_b > 0.0 { resid / norm_b } else { 0.0 };
    Ok(Admissible {
        p: std::array::from_fn(|k| sol[k]),
        q: Quaternion::from_array(std::array::from_fn(|k| sol[4 + k])),
        residual,
    })
}

/// Extracted 3-jet plus the third-order cross-check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetExtraction {
    pub jet: Jet3,
    pub third_order_residual: f64,
}

pub fn extract_jet3<F: Map4 + ?Sized>(f: &F, x: Quaternion, side: Side) -> Result<JetExtraction> {
    let fr = extract_frame(f, x, Some(side))?;
    Ok(JetExtraction { jet: fr.jet(), third_order_residual: fr.third_order_residual })
}

/// Partial derivatives `∂_ν C` at `x` by differencing [`extract_frame`] values of `C`.
pub fn c_gradient<F: Map4 + ?Sized>(f: &F, x: Quaternion, side: Side) -> Result<[Estimate; 4]> {
    let c_at = |y: Quaternion| -> Result<Quaternion> {
        let t = DerivativeTensors::compute(f, y)?;
        let work = match side {
            Side::Left => t,
            Side::Right => t.conj(),
        };
        let fit = left_fit(&work)?;
        let (c, _, _) = c_from_fit(&work.a(), &fit);
        Ok(match side {
            Side::Left => c,
            Side::Right => c.conj(),
        })
    };
    let c0 = c_at(x)?;
    let mut out = [Estimate { value: Quaternion::ZERO, error: 0.0 }; 4];
    for (nu, slot) in out.iter_mut().enumerate() {
        *slot = ridders(&c_at, x, Quaternion::BASIS[nu], 1, c0)?;
    }
    Ok(out)
}
