//! End-to-end checks on a map: sampled lines must go to circles, and the
//! extracted invariants must satisfy the integrability relations.
//!
//! Residual definitions (left picture; right-side maps are checked through
//! `conj ∘ f`):
//!
//! * eq2: `∂_α A_β − ½(B_α A_β + B_β A_α)`
//! * eq6pp: `∂_α B_β − ½ B_α B_β − ⅓ C (Ā_α A_β + Ā_β A_α + A_α Ā_β)`
//! * eq7: `dC ∧ (A∧Ā) − (C/2)(B ∧ (A∧Ā) − (A∧Ā) ∧ B)` as a 3-form
//! * sys8: with `A = dx` (precompose by `A⁻¹`), `b = Σ bᵐ eₘ`, `γ = 2dC/C`:
//!   `γ∧ω₁ = 2(b²∧ω₃ − b³∧ω₂)` and its two cyclic companions.
//!
//! Each residual is normalized by the size of the terms it compares, with a
//! floor at unit length scale so exact zeros do not divide by zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff_lab::{
    admissible_decompose, c_gradient, frame_from_tensors, DerivativeTensors, DetectedSide, FrameData, TOL_SIDE,
};
use crate::error::{Error, Result};
use crate::exec::{map_ordered, Execution};
use crate::map_zoo::{Map4, MapSpec, Side};
use crate::qforms::{omega_basis, wedge11, wedge12, wedge21, QOneForm};
use crate::quat::Quaternion;
use crate::sphere_geom::{circle_center, cocircularity_fit, CircleKind};

pub const MIN_SAMPLES: usize = 7;
/// Below this `|C|` the map is treated as a `C = 0` map and `γ` is not formed.
pub const C_ZERO: f64 = 1e-5;
/// `|Im C| ≤ C_IM_REL·|C| + C_IM_ABS`.
pub const C_IM_REL: f64 = 1e-5;
pub const C_IM_ABS: f64 = 1e-8;
pub const TOL_LEMMA: f64 = 1e-10;
const RESAMPLE_BUDGET: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Quaternion,
    pub radius: f64,
}

impl Default for Ball {
    fn default() -> Self {
        Ball { center: Quaternion::ZERO, radius: 0.4 }
    }
}

impl Ball {
    /// Uniform sample from the ball.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Quaternion {
        self.center + unit_ball_point(rng) * self.radius
    }
}

fn unit_ball_point<R: Rng>(rng: &mut R) -> Quaternion {
    loop {
        let v = Quaternion::from_array(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
        if v.norm_sqr() <= 1.0 {
            return v;
        }
    }
}

fn unit_direction<R: Rng>(rng: &mut R) -> Quaternion {
    loop {
        let v = unit_ball_point(rng);
        if v.norm() > 1e-3 {
            return v.normalized().expect("nonzero");
        }
    }
}

/// `t ↦ x0 + t·alpha` for `t` in `t_range`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x0: Quaternion,
    pub alpha: Quaternion,
    pub t_range: [f64; 2],
}

impl Segment {
    pub fn new(x0: Quaternion, alpha: Quaternion, t_range: [f64; 2]) -> Result<Self> {
        if !(alpha.norm() > 0.0) || !t_range.iter().all(|t| t.is_finite()) || !x0.is_finite() {
            return Err(Error::InvalidArgument("segment needs a finite base and a nonzero direction".into()));
        }
        Ok(Segment { x0, alpha, t_range })
    }

    pub fn point(&self, t: f64) -> Quaternion {
        self.x0 + self.alpha * t
    }

    /// Equally spaced parameters including both ends.
    pub fn params(&self, n: usize) -> Vec<f64> {
        let [a, b] = self.t_range;
        (0..n).map(|k| a + (b - a) * k as f64 / (n - 1).max(1) as f64).collect()
    }

    /// A random chord of `ball` at least half a radius long, trimmed slightly
    /// so its ends stay inside.
    pub fn random_chord<R: Rng>(ball: &Ball, rng: &mut R) -> Segment {
        loop {
            let x0 = ball.sample(rng);
            let u = unit_direction(rng);
            let d = x0 - ball.center;
            let du = d.inner(u);
            let disc = du * du - d.norm_sqr() + ball.radius * ball.radius;
            if disc <= 0.0 {
                continue;
            }
            let half = disc.sqrt() * 0.999;
            if 2.0 * half < 0.5 * ball.radius {
                continue;
            }
            return Segment { x0, alpha: u, t_range: [-du - half, -du + half] };
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub ball: Ball,
    pub segments: usize,
    pub samples: usize,
    pub points: usize,
    pub tol_circle: f64,
    pub tol_residual: f64,
    pub tol_eq7: f64,
    pub tol_admissible: f64,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            ball: Ball::default(),
            segments: 50,
            samples: 9,
            points: 10,
            tol_circle: 1e-7,
            tol_residual: 1e-5,
            tol_eq7: 1e-4,
            tol_admissible: 1e-8,
            seed: 1,
            exec: Execution::default(),
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.ball.radius > 0.0 && self.ball.radius.is_finite()) || !self.ball.center.is_finite() {
            return bad("ball radius must be positive and finite");
        }
        if self.samples < MIN_SAMPLES {
            return bad(&format!("need at least {MIN_SAMPLES} samples per segment"));
        }
        let tols = [self.tol_circle, self.tol_residual, self.tol_eq7, self.tol_admissible];
        if !tols.iter().all(|t| *t > 0.0 && t.is_finite()) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub id: usize,
    pub segment: Segment,
    pub kind: CircleKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub radius: Option<f64>,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinesReport {
    pub segments: Vec<SegmentSummary>,
    pub max_residual: f64,
    pub pass: bool,
}

/// Draw `cfg.segments` chords whose samples all evaluate, resampling
/// offending chords up to a fixed budget.
pub fn sample_segments<F: Map4 + ?Sized>(f: &F, cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Segment>> {
    let mut out = Vec::with_capacity(cfg.segments);
    let mut failures = 0;
    while out.len() < cfg.segments {
        let seg = Segment::random_chord(&cfg.ball, rng);
        match seg.params(cfg.samples).iter().try_for_each(|&t| f.eval(seg.point(t)).map(|_| ())) {
            Ok(()) => out.push(seg),
            Err(e) => {
                failures += 1;
                if failures > RESAMPLE_BUDGET * cfg.segments.max(1) {
                    return Err(Error::domain(e));
                }
            }
        }
    }
    Ok(out)
}

/// The segments [`verify`] would sample for `cfg`.
pub fn seeded_segments<F: Map4 + ?Sized>(f: &F, cfg: &VerifyConfig) -> Result<Vec<Segment>> {
    cfg.validate()?;
    sample_segments(f, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

pub fn verify_lines_to_circles<F: Map4 + ?Sized>(f: &F, cfg: &VerifyConfig) -> Result<LinesReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let segs = sample_segments(f, cfg, &mut rng)?;
    lines_report(f, cfg, &segs)
}

fn lines_report<F: Map4 + ?Sized>(f: &F, cfg: &VerifyConfig, segs: &[Segment]) -> Result<LinesReport> {
    let ids: Vec<usize> = (0..segs.len()).collect();
    let fits = map_ordered(cfg.exec, &ids, |&id| -> Result<SegmentSummary> {
        let seg = segs[id];
        let image: Vec<Quaternion> = seg.params(cfg.samples).iter().map(|&t| f.eval(seg.point(t))).collect::<Result<_>>()?;
        let fit = cocircularity_fit(&image)?;
        Ok(SegmentSummary { id, segment: seg, kind: fit.kind, radius: fit.radius, residual: fit.residual })
    });
    let segments: Vec<SegmentSummary> = fits.into_iter().collect::<Result<_>>()?;
    let max_residual = segments.iter().map(|s| s.residual).fold(0.0, f64::max);
    let pass = segments.iter().all(|s| s.kind != CircleKind::Degenerate && s.residual <= cfg.tol_circle);
    Ok(LinesReport { segments, max_residual, pass })
}

/// Residuals of the 3-form relations at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct System8Residual {
    /// `2dC/C` in the normalized frame; absent when `|C| ≤ C_ZERO`.
    pub gamma: Option<[f64; 4]>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub r3: Option<f64>,
    pub eq7: Option<f64>,
    pub admissibility_residual: f64,
    /// True when the point is on the `C = 0` branch.
    pub c_zero: bool,
}

impl System8Residual {
    pub fn sys8_max(&self) -> Option<f64> {
        Some(self.r1?.max(self.r2?).max(self.r3?))
    }
}

fn real_form(c: [f64; 4]) -> QOneForm {
    QOneForm::real(c)
}

/// eq7 residual from left-picture data and a real `dC`.
pub fn eq7_from_frame(a: &QOneForm, b: &QOneForm, c: f64, dc: [f64; 4]) -> f64 {
    let aa = wedge11(a, &a.conj());
    let lhs = wedge12(&real_form(dc), &aa);
    let rhs = (wedge12(b, &aa) - wedge21(&aa, b)) * (c / 2.0);
    let floor = c.abs().powf(1.5) * a.max_norm().powi(2);
    let scale = (lhs.max_norm() + rhs.max_norm()).max(floor);
    if scale > 0.0 {
        (lhs - rhs).max_norm() / scale
    } else {
        0.0
    }
}

/// System (8) residuals and admissibility from left-picture `A`, `B`, `C`, `dC`.
pub fn system8_from_frame(a: &QOneForm, b: &QOneForm, c: f64, dc: [f64; 4]) -> Result<System8Residual> {
    let adm = admissible_decompose(b, a)?;
    if c.abs() <= C_ZERO {
        return Ok(System8Residual {
            gamma: None,
            r1: None,
            r2: None,
            r3: None,
            eq7: None,
            admissibility_residual: adm.residual,
            c_zero: true,
        });
    }
    let cols = crate::diff_lab::a_inverse_columns(a)?;
    let nb = b.precompose(&cols);
    let gamma: [f64; 4] = std::array::from_fn(|nu| {
        let v = cols[nu].to_array();
        2.0 * (0..4).map(|m| dc[m] * v[m]).sum::<f64>() / c
    });
    let g = real_form(gamma);
    let bm: [QOneForm; 4] = std::array::from_fn(|m| real_form(nb.covector(m)));
    let (w1, w2, w3) = omega_basis();
    let w = [&w1, &w2, &w3];
    // (k, m, n): γ∧ω_k = 2(bᵐ∧ω_n − bⁿ∧ω_m)
    let r: Vec<f64> = [(0usize, 2usize, 3usize), (1, 3, 1), (2, 1, 2)]
        .iter()
        .map(|&(k, m, n)| {
            let t1 = wedge12(&bm[m], w[n - 1]) * 2.0;
            let t2 = wedge12(&bm[n], w[m - 1]) * 2.0;
            let t3 = wedge12(&g, w[k]);
            let scale = (t1.max_norm() + t2.max_norm() + t3.max_norm()).max(c.abs().sqrt());
            (t1 - t2 - t3).max_norm() / scale
        })
        .collect();
    Ok(System8Residual {
        gamma: Some(gamma),
        r1: Some(r[0]),
        r2: Some(r[1]),
        r3: Some(r[2]),
        eq7: Some(eq7_from_frame(a, b, c, dc)),
        admissibility_residual: adm.residual,
        c_zero: false,
    })
}

/// Everything measured at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub point: Quaternion,
    pub side: DetectedSide,
    pub side_residual: f64,
    #[serde(rename = "C")]
    pub c: Quaternion,
    pub c_consistency: f64,
    pub eq2: f64,
    pub eq6pp: f64,
    pub sys8: System8Residual,
}

struct PointData {
    frame: FrameData,
    /// Hessian in the left picture, `hess[μ][ν] = ∂_μ ∂_ν`.
    hess: [[Quaternion; 4]; 4],
}

fn point_data<F: Map4 + ?Sized>(f: &F, x: Quaternion) -> Result<PointData> {
    let t = DerivativeTensors::compute(f, x)?;
    let frame = frame_from_tensors(&t, None)?;
    let hess = match frame.side {
        Side::Left => t.second,
        Side::Right => t.conj().second,
    };
    Ok(PointData { frame: frame.to_left_picture(), hess })
}

fn eq2_from(d: &PointData) -> f64 {
    let (a, b) = (&d.frame.a, &d.frame.b);
    let mut worst: f64 = 0.0;
    for m in 0..4 {
        for n in m..4 {
            let r = d.hess[m][n] - (b[m] * a[n] + b[n] * a[m]) * 0.5;
            worst = worst.max(r.norm());
        }
    }
    let scale = (b.max_norm() * a.max_norm()).max(a.max_norm());
    worst / scale
}

fn eq6pp_from(d: &PointData) -> f64 {
    let fr = &d.frame;
    let (a, b, c) = (&fr.a, &fr.b, fr.c.w);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for m in 0..4 {
        for n in 0..4 {
            let quad = b[m] * b[n] * 0.5;
            let cterm = (a[m].conj() * a[n] + a[n].conj() * a[m] + a[m] * a[n].conj()) * (c / 3.0);
            worst = worst.max((fr.db[m][n] - quad - cterm).norm());
            scale = scale.max(fr.db[m][n].norm()).max(quad.norm()).max(cterm.norm());
        }
    }
    worst / scale
}

fn sys8_from<F: Map4 + ?Sized>(f: &F, d: &PointData, orig_side: Side) -> Result<System8Residual> {
    let fr = &d.frame;
    let c = fr.c.w;
    let dc = if c.abs() > C_ZERO {
        let g = c_gradient(f, fr.point, orig_side)?;
        // C is real, and C of conj ∘ f is the conjugate
        g.map(|e| e.value.w)
    } else {
        [0.0; 4]
    };
    system8_from_frame(&fr.a, &fr.b, c, dc)
}

fn analyze_point<F: Map4 + ?Sized>(f: &F, x: Quaternion) -> Result<PointResult> {
    let d = point_data(f, x)?;
    let orig_side = d.frame.side_report.preferred();
    let sys8 = sys8_from(f, &d, orig_side)?;
    let rep = d.frame.side_report;
    Ok(PointResult {
        point: x,
        side: rep.side,
        side_residual: match orig_side {
            Side::Left => rep.left_linearity_residual,
            Side::Right => rep.right_linearity_residual,
        },
        c: match orig_side {
            Side::Left => d.frame.c,
            Side::Right => d.frame.c.conj(),
        },
        c_consistency: d.frame.c_consistency,
        eq2: eq2_from(&d),
        eq6pp: eq6pp_from(&d),
        sys8,
    })
}

pub fn residual_eq2<F: Map4 + ?Sized>(f: &F, x: Quaternion) -> Result<f64> {
    Ok(eq2_from(&point_data(f, x)?))
}

pub fn residual_first_integrability<F: Map4 + ?Sized>(f: &F, x: Quaternion) -> Result<f64> {
    Ok(eq6pp_from(&point_data(f, x)?))
}

pub fn residual_eq7_sys8<F: Map4 + ?Sized>(f: &F, x: Quaternion) -> Result<System8Residual> {
    let d = point_data(f, x)?;
    let side = d.frame.side_report.preferred();
    sys8_from(f, &d, side)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualTable {
    pub eq2: f64,
    pub eq6pp: f64,
    pub eq7: Option<f64>,
    pub sys8: Option<f64>,
    pub admissibility: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CStats {
    pub mean: f64,
    pub max_abs_im: f64,
    /// Worst `|Im C| / (C_IM_REL·|C| + C_IM_ABS)`; at most 1 for a real `C`.
    pub im_ratio: f64,
    pub consistency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Verdict {
    fn new(check: &str, value: f64, tolerance: f64) -> Self {
        Verdict { check: check.into(), value, tolerance, pass: value <= tolerance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub map_id: String,
    pub seed: u64,
    pub ball: Ball,
    pub samples_per_segment: usize,
    pub points_tested: usize,
    pub segments: Vec<SegmentSummary>,
    pub max_circle_residual: f64,
    pub points: Vec<PointResult>,
    pub residuals: ResidualTable,
    pub c_stats: CStats,
    pub side: DetectedSide,
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
}

/// Random points of the ball where `f` evaluates.
pub fn sample_points<F: Map4 + ?Sized>(f: &F, ball: &Ball, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Quaternion>> {
    let mut out = Vec::with_capacity(n);
    let mut failures = 0;
    while out.len() < n {
        let x = ball.sample(rng);
        match f.eval(x) {
            Ok(_) => out.push(x),
            Err(e) => {
                failures += 1;
                if failures > RESAMPLE_BUDGET * n.max(1) {
                    return Err(Error::domain(e));
                }
            }
        }
    }
    Ok(out)
}

/// Point-wise residual suite.
pub fn residual_suite<F: Map4 + ?Sized>(f: &F, points: &[Quaternion], exec: Execution) -> Result<Vec<PointResult>> {
    map_ordered(exec, points, |&x| analyze_point(f, x)).into_iter().collect()
}

fn opt_max(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
}

/// Lines-to-circles sweep plus the residual suite, with verdicts.
pub fn verify(spec: &MapSpec, cfg: &VerifyConfig) -> Result<VerificationReport> {
    spec.validate()?;
    cfg.validate()?;
    let map_id = serde_json::to_string(spec).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let segs = sample_segments(spec, cfg, &mut rng)?;
    let lines = lines_report(spec, cfg, &segs)?;
    let pts = sample_points(spec, &cfg.ball, cfg.points, &mut rng)?;
    let points = residual_suite(spec, &pts, cfg.exec)?;
    Ok(assemble(map_id, cfg, lines, points))
}

fn assemble(map_id: String, cfg: &VerifyConfig, lines: LinesReport, points: Vec<PointResult>) -> VerificationReport {
    let applicable = || points.iter().filter(|p| !p.sys8.c_zero);
    let residuals = ResidualTable {
        eq2: points.iter().map(|p| p.eq2).fold(0.0, f64::max),
        eq6pp: points.iter().map(|p| p.eq6pp).fold(0.0, f64::max),
        eq7: opt_max(applicable().filter_map(|p| p.sys8.eq7)),
        sys8: opt_max(applicable().filter_map(|p| p.sys8.sys8_max())),
        admissibility: opt_max(applicable().map(|p| p.sys8.admissibility_residual)),
    };
    let n = points.len().max(1) as f64;
    let c_stats = CStats {
        mean: points.iter().map(|p| p.c.w).sum::<f64>() / n,
        max_abs_im: points.iter().map(|p| p.c.im().norm()).fold(0.0, f64::max),
        im_ratio: points.iter().map(|p| p.c.im().norm() / (C_IM_REL * p.c.norm() + C_IM_ABS)).fold(0.0, f64::max),
        consistency: points.iter().map(|p| p.c_consistency).fold(0.0, f64::max),
    };
    let side = points.iter().map(|p| p.side).fold(DetectedSide::Both, DetectedSide::meet);

    let mut verdicts = vec![
        Verdict::new("lines_to_circles", lines.max_residual, cfg.tol_circle),
        Verdict::new("side", points.iter().map(|p| p.side_residual).fold(0.0, f64::max), TOL_SIDE),
        Verdict::new("eq2", residuals.eq2, cfg.tol_residual),
        Verdict::new("eq6pp", residuals.eq6pp, cfg.tol_residual),
        Verdict::new("c_real", c_stats.im_ratio, 1.0),
        Verdict::new("c_consistency", c_stats.consistency, cfg.tol_residual),
    ];
    if let Some(v) = residuals.eq7 {
        verdicts.push(Verdict::new("eq7", v, cfg.tol_eq7));
    }
    if let Some(v) = residuals.sys8 {
        verdicts.push(Verdict::new("sys8", v, cfg.tol_eq7));
    }
    if let Some(v) = residuals.admissibility {
        verdicts.push(Verdict::new("admissibility", v, cfg.tol_admissible));
    }
    // degenerate fits fail even with a small residual; the side must hold at every point
    verdicts[0].pass &= lines.pass;
    verdicts[1].pass &= side != DetectedSide::Neither;
    let pass = verdicts.iter().all(|v| v.pass);
    VerificationReport {
        map_id,
        seed: cfg.seed,
        ball: cfg.ball,
        samples_per_segment: cfg.samples,
        points_tested: points.len(),
        segments: lines.segments,
        max_circle_residual: lines.max_residual,
        points,
        residuals,
        c_stats,
        side,
        verdicts,
        pass,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "lowercase")]
pub enum CenterConstancy {
    /// Max pairwise distance of the predicted centers over the mean radius.
    Circle { spread: f64, radius: f64 },
    /// `Im B_α` vanished: the image should be straight.
    Line { collinear: bool, residual: f64 },
}

pub fn center_constancy<F: Map4 + ?Sized>(f: &F, seg: &Segment, n_samples: usize) -> Result<CenterConstancy> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::TooFewPoints { needed: MIN_SAMPLES, got: n_samples });
    }
    let params = seg.params(n_samples);
    let mut centers = Vec::with_capacity(n_samples);
    let mut radii = Vec::with_capacity(n_samples);
    let mut line = false;
    for &t in &params {
        let x = seg.point(t);
        let fr = crate::diff_lab::extract_frame(f, x, None)?;
        let flip = fr.side == Side::Right;
        let left = fr.to_left_picture();
        match circle_center(left.f0, left.a.eval(seg.alpha), left.b.eval(seg.alpha)) {
            Ok(c) => {
                let c = if flip { c.conj() } else { c };
                radii.push(c.dist(fr.f0));
                centers.push(c);
            }
            Err(Error::LineCase) => {
                line = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if line {
        let image: Vec<Quaternion> = params.iter().map(|&t| f.eval(seg.point(t))).collect::<Result<_>>()?;
        let fit = cocircularity_fit(&image)?;
        return Ok(CenterConstancy::Line { collinear: fit.kind == CircleKind::Line, residual: fit.residual });
    }
    let radius = radii.iter().sum::<f64>() / radii.len() as f64;
    let mut spread: f64 = 0.0;
    for (k, a) in centers.iter().enumerate() {
        for b in &centers[k + 1..] {
            spread = spread.max(a.dist(*b));
        }
    }
    Ok(CenterConstancy::Circle { spread: spread / radius, radius })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Result {
    pub is_constant: bool,
    pub spread: f64,
    pub tolerance: f64,
}

/// Is `a·y + b·y⁻¹` the same for every conjugate `y = q x q⁻¹`?
pub fn lemma1_oracle(a: Quaternion, x: Quaternion, b: Quaternion, trials: usize, seed: u64) -> Result<Lemma1Result> {
    if !(x.im().norm() > 1e-12 * x.norm()) || x.norm() == 0.0 {
        return Err(Error::RealX);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(trials.max(2));
    for _ in 0..trials.max(2) {
        let q = unit_direction(&mut rng);
        let y = q * x * q.conj();
        values.push(a * y + b * y.inv()?);
    }
    let mut spread: f64 = 0.0;
    for (k, u) in values.iter().enumerate() {
        for v in &values[k + 1..] {
            spread = spread.max(u.dist(*v));
        }
    }
    let tolerance = TOL_LEMMA * (a.norm() * x.norm() + b.norm() / x.norm());
    Ok(Lemma1Result { is_constant: spread <= tolerance, spread, tolerance })
}

/// `sup |f − g|` over `n_points` seeded points of the ball. The points are
/// `center + radius·u` for the same `u` at every radius, so sups at
/// different radii are comparable.
pub fn compare_maps<F: Map4 + ?Sized, G: Map4 + ?Sized>(f: &F, g: &G, ball: &Ball, n_points: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sup: f64 = 0.0;
    for _ in 0..n_points {
        let x = ball.sample(&mut rng);
        let d = f.eval(x).map_err(Error::domain)?.dist(g.eval(x).map_err(Error::domain)?);
        sup = sup.max(d);
    }
    Ok(sup)
}

/// Decay exponents `log₂(sup(r)/sup(r/2))` between consecutive halvings.
pub fn decay_exponents(sups: &[f64]) -> Vec<f64> {
    sups.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_zoo::{eval, synth_from_jet, AffineMapR4, HopfRestriction, Jet3};

    fn hopf_shift() -> MapSpec {
        let mut l = AffineMapR4::identity();
        l.offset = Quaternion::ONE;
        MapSpec::Hopf(HopfRestriction::new(l, AffineMapR4::identity(), Side::Left))
    }

    fn small_cfg() -> VerifyConfig {
        VerifyConfig { segments: 12, points: 3, ..VerifyConfig::default() }
    }

    #[test]
    fn identity_maps_lines_to_lines() {
        let rep = verify_lines_to_circles(&MapSpec::identity(), &VerifyConfig::default()).unwrap();
        assert!(rep.pass);
        assert!(rep.segments.iter().all(|s| s.kind == CircleKind::Line));
    }

    #[test]
    fn model_maps_lines_to_circles() {
        let rep = verify_lines_to_circles(&MapSpec::model(1.0), &VerifyConfig::default()).unwrap();
        assert!(rep.pass, "{}", rep.max_residual);
        assert!(rep.max_residual <= 1e-7);
    }

    #[test]
    fn perturbed_model_fails() {
        let rep = verify_lines_to_circles(&MapSpec::perturbed(MapSpec::model(1.0), 1e-2), &VerifyConfig::default()).unwrap();
        assert!(!rep.pass);
        assert!(rep.segments.iter().any(|s| s.kind == CircleKind::Degenerate || s.residual > 1e-7));
    }

    #[test]
    fn config_validation() {
        let cfg = VerifyConfig { samples: 6, ..VerifyConfig::default() };
        assert!(verify_lines_to_circles(&MapSpec::identity(), &cfg).is_err());
        let cfg = VerifyConfig { ball: Ball { center: Quaternion::ZERO, radius: 0.0 }, ..VerifyConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ball_outside_domain_is_a_domain_violation() {
        let cfg = VerifyConfig { ball: Ball { center: Quaternion::real(2.0), radius: 0.4 }, ..VerifyConfig::default() };
        assert!(matches!(verify_lines_to_circles(&MapSpec::model(1.0), &cfg), Err(Error::DomainViolation(_))));
    }

    #[test]
    fn eq2_examples() {
        assert!(residual_eq2(&MapSpec::identity(), Quaternion::new(0.1, 0.0, 0.2, 0.0)).unwrap() <= 1e-10);
        assert!(residual_eq2(&hopf_shift(), Quaternion::ZERO).unwrap() <= 1e-6);
        let pert = MapSpec::perturbed(MapSpec::model(1.0), 1e-2);
        assert!(residual_eq2(&pert, Quaternion::new(0.3, 0.1, 0.0, -0.1)).unwrap() > 1e-4);
    }

    #[test]
    fn first_integrability_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for side in [Side::Left, Side::Right] {
            let h = MapSpec::Hopf(crate::map_zoo::random_hopf(&mut rng, side));
            assert!(residual_first_integrability(&h, Quaternion::new(0.1, 0.2, 0.0, -0.1)).unwrap() <= 1e-6);
        }
        let y = Quaternion::new(0.1, 0.3, -0.2, 0.2);
        let x = y / (1.0 + y.norm_sqr());
        assert!(residual_first_integrability(&MapSpec::model(1.0), x).unwrap() <= 1e-5);
        let pert = MapSpec::perturbed(MapSpec::model(1.0), 1e-2);
        assert!(residual_first_integrability(&pert, Quaternion::new(0.3, 0.1, 0.0, -0.1)).unwrap() > 1e-4);
    }

    #[test]
    fn eq7_sys8_examples() {
        let y = Quaternion::new(0.0, 0.3, 0.0, 0.0);
        let x = y / (1.0 + y.norm_sqr());
        let r = residual_eq7_sys8(&MapSpec::model(1.0), x).unwrap();
        assert!(!r.c_zero);
        assert!(r.sys8_max().unwrap() <= 1e-4, "{r:?}");
        assert!(r.eq7.unwrap() <= 1e-4);
        assert!(r.admissibility_residual <= 1e-8);

        let h = residual_eq7_sys8(&hopf_shift(), Quaternion::new(0.1, 0.0, 0.1, 0.0)).unwrap();
        assert!(h.c_zero && h.gamma.is_none());
        let c = crate::diff_lab::extract_c(&hopf_shift(), Quaternion::new(0.1, 0.0, 0.1, 0.0), Side::Left).unwrap();
        assert!(c.c.norm() <= 1e-5);

        // B_α = iα with C = 1 is not admissible
        let inj = system8_from_frame(&QOneForm::identity(), &QOneForm::identity().left_mul(Quaternion::I), 1.0, [0.0; 4]).unwrap();
        assert!(inj.admissibility_residual >= 0.5);
    }

    #[test]
    fn sys8_holds_for_exact_model_data() {
        // model at y with closed-form A, B, C; dC from the closed form of C(x)
        let y = Quaternion::new(0.2, -0.1, 0.3, 0.1);
        let a = QOneForm(Quaternion::BASIS.map(|e| crate::map_zoo::ModelProjection::a_closed_form_unit(y, e)));
        let b = QOneForm(Quaternion::BASIS.map(|e| crate::map_zoo::ModelProjection::b_closed_form_unit(y, e)));
        let c = crate::map_zoo::ModelProjection::c_closed_form_unit(y);
        // C(y) = 6/(1−|y|²)², dC(α) = 24⟨y, dy(α)⟩/(1−|y|²)³ and dy = A
        let dc: [f64; 4] = std::array::from_fn(|m| 24.0 * y.inner(a[m]) / (1.0 - y.norm_sqr()).powi(3));
        let r = system8_from_frame(&a, &b, c, dc).unwrap();
        assert!(r.sys8_max().unwrap() <= 1e-12, "{r:?}");
        assert!(r.eq7.unwrap() <= 1e-12);
        assert!(r.admissibility_residual <= 1e-12);
        // a wrong dC is caught
        let bad = system8_from_frame(&a, &b, c, [dc[0] + 1.0, dc[1], dc[2], dc[3]]).unwrap();
        assert!(bad.sys8_max().unwrap() > 1e-3 && bad.eq7.unwrap() > 1e-3);
    }

    #[test]
    fn center_constancy_examples() {
        let seg = Segment::new(Quaternion::new(0.05, 0.1, 0.0, 0.0), Quaternion::new(0.0, 0.0, 1.0, 0.3), [-0.2, 0.2]).unwrap();
        match center_constancy(&MapSpec::model(1.0), &seg, 7).unwrap() {
            CenterConstancy::Circle { spread, .. } => assert!(spread <= 1e-6, "{spread}"),
            other => panic!("{other:?}"),
        }
        let id = center_constancy(&MapSpec::identity(), &seg, 7).unwrap();
        assert!(matches!(id, CenterConstancy::Line { collinear: true, .. }));
        let radial = Segment::new(Quaternion::ZERO, Quaternion::new(0.0, 1.0, 0.0, 0.0), [0.05, 0.35]).unwrap();
        let r = center_constancy(&MapSpec::model(1.0), &radial, 7).unwrap();
        assert!(matches!(r, CenterConstancy::Line { collinear: true, .. }), "{r:?}");
    }

    #[test]
    fn center_matches_fitted_circle() {
        let h = MapSpec::Hopf(crate::map_zoo::random_hopf(&mut ChaCha8Rng::seed_from_u64(8), Side::Right));
        let seg = Segment::new(Quaternion::new(0.1, 0.0, -0.1, 0.05), Quaternion::new(0.3, 1.0, 0.2, 0.0), [-0.3, 0.3]).unwrap();
        let CenterConstancy::Circle { spread, radius } = center_constancy(&h, &seg, 9).unwrap() else { panic!() };
        assert!(spread <= 1e-6);
        let image: Vec<Quaternion> = seg.params(9).iter().map(|&t| eval(&h, seg.point(t)).unwrap()).collect();
        let fit = cocircularity_fit(&image).unwrap();
        assert!((fit.radius.unwrap() - radius).abs() <= 1e-6 * radius);
    }

    #[test]
    fn lemma1_examples() {
        let a = Quaternion::ONE + Quaternion::J;
        let r = lemma1_oracle(a, Quaternion::I, a, 32, 1).unwrap();
        assert!(r.is_constant && r.spread <= 1e-12);
        assert!(lemma1_oracle(a, Quaternion::I * 2.0, a * 4.0, 32, 1).unwrap().is_constant);
        let r = lemma1_oracle(Quaternion::ONE, Quaternion::I, Quaternion::real(2.0), 32, 1).unwrap();
        assert!(!r.is_constant && r.spread >= 0.5);
        assert!(matches!(lemma1_oracle(a, Quaternion::real(2.0), a, 8, 1), Err(Error::RealX)));
    }

    #[test]
    fn compare_examples() {
        let ball = Ball { center: Quaternion::ZERO, radius: 0.3 };
        assert_eq!(compare_maps(&MapSpec::identity(), &MapSpec::identity(), &ball, 50, 1).unwrap(), 0.0);
        let s = synth_from_jet([0.0; 4], Quaternion::ZERO, 6.0).unwrap();
        assert!(compare_maps(&s, &MapSpec::model(1.0), &ball, 50, 1).unwrap() <= 1e-12);
        let (p, q, c) = ([0.5, -0.3, 0.2, 0.1], Quaternion::new(0.2, -0.4, 0.1, 0.3), 3.0);
        let s = synth_from_jet(p, q, c).unwrap();
        let j = MapSpec::Jet(Jet3::admissible(p, q, c));
        let sups: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&r| compare_maps(&s, &j, &Ball { center: Quaternion::ZERO, radius: r }, 200, 3).unwrap())
            .collect();
        assert!(decay_exponents(&sups).iter().all(|e| *e >= 3.8), "{sups:?}");
    }

    #[test]
    fn full_report_passes_on_model_and_fails_on_control() {
        let rep = verify(&MapSpec::model(1.0), &small_cfg()).unwrap();
        assert!(rep.pass, "{:#?}", rep.verdicts);
        assert_eq!(rep.side, DetectedSide::Both);
        let bad = verify(&MapSpec::perturbed(MapSpec::model(1.0), 1e-2), &small_cfg()).unwrap();
        assert!(!bad.pass);
        for v in &bad.verdicts {
            // a verdict never passes above its tolerance
            assert!(!v.pass || v.value <= v.tolerance);
        }
    }

    #[test]
    fn reports_are_deterministic_across_modes() {
        let spec = MapSpec::Hopf(crate::map_zoo::random_hopf(&mut ChaCha8Rng::seed_from_u64(4), Side::Right));
        let seq = verify(&spec, &VerifyConfig { exec: Execution::Sequential, ..small_cfg() }).unwrap();
        let par = verify(&spec, &VerifyConfig { exec: Execution::Parallel, ..small_cfg() }).unwrap();
        assert_eq!(serde_json::to_string(&seq).unwrap(), serde_json::to_string(&par).unwrap());
        assert!(seq.pass, "{:#?}", seq.verdicts);
        assert_eq!(seq.side, DetectedSide::Right);
    }
}
