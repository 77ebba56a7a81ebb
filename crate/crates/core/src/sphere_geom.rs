//! Sphere geometry in ℝ⁵ = ℝ⁴ × ℝ: stereographic chart, central projection
//! of hyperplanes onto the unit sphere, and circle/line recognition for
//! sampled point sets in 4-space.

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::{Quaternion, EPS_INV};

/// Tolerance on `| |P| − 1 |` accepted by [`stereographic`].
pub const TOL_ON_SPHERE: f64 = 1e-9;
/// Minimum `1 − v4` accepted by [`stereographic`].
pub const EPS_POLE: f64 = 1e-12;
/// Relative threshold on the line–sphere discriminant.
pub const EPS_DISC: f64 = 1e-12;
/// Relative RMS below which a point set is a straight line.
pub const TOL_LINE: f64 = 1e-9;
/// Relative size of the 3rd/4th singular values below which a set is planar.
pub const TOL_PLANE: f64 = 1e-8;
/// RMS distance to the fitted circle, relative to its radius.
pub const TOL_CIRC: f64 = 1e-7;
/// Minimum pairwise separation relative to the set diameter.
pub const EPS_SEP: f64 = 1e-10;
/// `|Im B_α|` below this (relative to `max(|B_α|, 1)`) means a straight image.
pub const EPS_IMB: f64 = 1e-6;

/// A point of ℝ⁵, split as `(y, z)` with `y ∈ ℝ⁴` and `z ∈ ℝ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointR5(pub [f64; 5]);

impl PointR5 {
    pub fn from_parts(y: Quaternion, z: f64) -> Self {
        PointR5([y.w, y.x1, y.x2, y.x3, z])
    }

    pub fn y(&self) -> Quaternion {
        Quaternion::new(self.0[0], self.0[1], self.0[2], self.0[3])
    }

    pub fn z(&self) -> f64 {
        self.0[4]
    }

    pub fn dot(&self, o: &PointR5) -> f64 {
        self.0.iter().zip(o.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn add(&self, o: &PointR5) -> PointR5 {
        PointR5(std::array::from_fn(|i| self.0[i] + o.0[i]))
    }

    pub fn sub(&self, o: &PointR5) -> PointR5 {
        PointR5(std::array::from_fn(|i| self.0[i] - o.0[i]))
    }

    pub fn scale(&self, s: f64) -> PointR5 {
        PointR5(self.0.map(|v| v * s))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Which of the two line–sphere intersections to keep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Larger parameter along the ray from the center.
    #[default]
    Far,
    Near,
}

/// Inverse stereographic chart `y ↦ (2y/(1+|y|²), (|y|²−1)/(1+|y|²))`.
pub fn stereographic_inv(y: Quaternion) -> PointR5 {
    let n2 = y.norm_sqr();
    if !n2.is_finite() {
        return PointR5([0.0, 0.0, 0.0, 0.0, 1.0]);
    }
    let d = 1.0 + n2;
    PointR5::from_parts(y * (2.0 / d), (n2 - 1.0) / d)
}

/// Stereographic chart from the North pole onto the equatorial hyperplane.
pub fn stereographic(p: PointR5) -> Result<Quaternion> {
    let n = p.norm();
    if !((n - 1.0).abs() <= TOL_ON_SPHERE) {
        return Err(Error::NotOnSphere { norm: n });
    }
    let denom = 1.0 - p.z();
    if denom <= EPS_POLE {
        return Err(Error::AtProjectionCenter);
    }
    Ok(p.y() / denom)
}

/// Central projection of the point `plane_point + Σ xᵥ·frame[ν]` of a
/// hyperplane onto the unit sphere, from `center`.
pub fn central_project(
    plane_point: &PointR5,
    plane_frame: &[PointR5; 4],
    center: &PointR5,
    x: Quaternion,
    branch: Branch,
) -> Result<PointR5> {
    let xs = x.to_array();
    let embedded = (0..4).fold(*plane_point, |acc, nu| acc.add(&plane_frame[nu].scale(xs[nu])));
    let dir = embedded.sub(center);
    let a = dir.dot(&dir);
    if a <= EPS_INV * EPS_INV * (1.0 + center.dot(center)) {
        return Err(Error::AtProjectionCenter);
    }
    // |c + s·d|² = 1  ⇔  a s² + 2 b s + c0 = 0
    let b = center.dot(&dir);
    let c0 = center.dot(center) - 1.0;
    if c0.abs() <= EPS_DISC * (1.0 + center.dot(center)) {
        // center on the sphere: one root is the center itself
        return Err(Error::TangentDegenerate);
    }
    let disc = b * b - a * c0;
    let scale = b * b + (a * c0).abs();
    if disc.abs() <= EPS_DISC * scale {
        return Err(Error::TangentDegenerate);
    }
    if disc < 0.0 {
        return Err(Error::NoIntersection);
    }
    let sq = disc.sqrt();
    // cancellation-free pair of roots
    let qq = -(b + b.signum() * sq);
    let (r1, r2) = if qq == 0.0 { (0.0, 0.0) } else { (qq / a, c0 / qq) };
    let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
    let s = match branch {
        Branch::Far => hi,
        Branch::Near => lo,
    };
    Ok(center.add(&dir.scale(s)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CircleKind {
    Circle,
    Line,
    Degenerate,
}

/// Result of [`cocircularity_fit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleFit {
    pub kind: CircleKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub center: Option<Quaternion>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub direction: Option<Quaternion>,
    /// RMS distance to the best fitted line or circle, over the set diameter.
    pub residual: f64,
}

fn sorted_svd(m: DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let ncols = m.ncols();
    let svd = SVD::new(m, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let vecs = idx.iter().map(|&i| (0..ncols).map(|c| v_t[(i, c)]).collect()).collect();
    (sv, vecs)
}

/// Decide whether a sample lies on a line, on a round circle, or on neither.
pub fn cocircularity_fit(points: &[Quaternion]) -> Result<CircleFit> {
    let n = points.len();
    if n < 5 {
        return Err(Error::TooFewPoints { needed: 5, got: n });
    }
    let mut diameter: f64 = 0.0;
    let mut min_sep = f64::INFINITY;
    for (a, p) in points.iter().enumerate() {
        for q in &points[a + 1..] {
            let d = p.dist(*q);
            diameter = diameter.max(d);
            min_sep = min_sep.min(d);
        }
    }
    if !diameter.is_finite() {
        return Err(Error::InvalidArgument("non-finite sample point".into()));
    }
    if !(min_sep > EPS_SEP * diameter) || diameter == 0.0 {
        return Err(Error::CoincidentPoints { min_sep });
    }

    let centroid = points.iter().copied().sum::<Quaternion>() / n as f64;
    let centered: Vec<Quaternion> = points.iter().map(|p| *p - centroid).collect();
    let data = DMatrix::from_fn(n, 4, |r, c| centered[r].component(c));
    let (sv, axes) = sorted_svd(data);
    let axis = |k: usize| Quaternion::new(axes[k][0], axes[k][1], axes[k][2], axes[k][3]);
    let nf = n as f64;

    let line_rms = ((sv[1] * sv[1] + sv[2] * sv[2] + sv[3] * sv[3]) / nf).sqrt();
    if line_rms <= TOL_LINE * diameter {
        return Ok(CircleFit {
            kind: CircleKind::Line,
            center: None,
            radius: None,
            direction: Some(axis(0)),
            residual: line_rms / diameter,
        });
    }

    let off_plane_rms = ((sv[2] * sv[2] + sv[3] * sv[3]) / nf).sqrt();
    let coplanar = sv[2] <= TOL_PLANE * sv[0] && sv[3] <= TOL_PLANE * sv[0];

    // Lifted algebraic fit in the best plane: a(u²+v²) + d·u + e·v + f = 0,
    // in coordinates scaled by the diameter. Handles arbitrarily flat arcs.
    let (e1, e2) = (axis(0), axis(1));
    let uv: Vec<(f64, f64)> = centered
        .iter()
        .map(|p| (p.inner(e1) / diameter, p.inner(e2) / diameter))
        .collect();
    let lifted = DMatrix::from_fn(n, 4, |r, c| {
        let (u, v) = uv[r];
        match c {
            0 => u * u + v * v,
            1 => u,
            2 => v,
            _ => 1.0,
        }
    });
    let (_, lifted_axes) = sorted_svd(lifted);
    let theta = &lifted_axes[3];
    let (a, d, e, f) = (theta[0], theta[1], theta[2], theta[3]);
    let disc = d * d + e * e - 4.0 * a * f;

    let circle = if disc > 0.0 && a != 0.0 {
        let norm = disc.sqrt();
        let in_plane_rms = (uv
            .iter()
            .map(|&(u, v)| {
                let r = (a * (u * u + v * v) + d * u + e * v + f) / norm;
                r * r
            })
            .sum::<f64>()
            / nf)
            .sqrt()
            * diameter;
        let radius = norm / (2.0 * a.abs()) * diameter;
        let (cu, cv) = (-d / (2.0 * a) * diameter, -e / (2.0 * a) * diameter);
        let center = centroid + e1 * cu + e2 * cv;
        Some((center, radius, in_plane_rms))
    } else {
        None
    };

    match circle {
        Some((center, radius, in_plane_rms)) if radius.is_finite() && center.is_finite() => {
            let residual = (in_plane_rms * in_plane_rms + off_plane_rms * off_plane_rms).sqrt() / diameter;
            let kind = if coplanar && in_plane_rms <= TOL_CIRC * radius {
                CircleKind::Circle
            } else {
                CircleKind::Degenerate
            };
            Ok(CircleFit {
                kind,
                center: (kind == CircleKind::Circle).then_some(center),
                radius: (kind == CircleKind::Circle).then_some(radius),
                direction: None,
                residual,
            })
        }
        _ => Ok(CircleFit {
            kind: CircleKind::Degenerate,
            center: None,
            radius: None,
            direction: None,
            residual: line_rms / diameter,
        }),
    }
}

/// Center of the circle traced by the image of the line through `x` in
/// direction `α`: `f(x) − (Im B_α)⁻¹ A_α`.
pub fn circle_center(f_x: Quaternion, a_alpha: Quaternion, b_alpha: Quaternion) -> Result<Quaternion> {
    let im = b_alpha.im();
    if im.norm() <= EPS_IMB * b_alpha.norm().max(1.0) {
        return Err(Error::LineCase);
    }
    Ok(f_x - im.inv()? * a_alpha)
}
