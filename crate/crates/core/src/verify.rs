//! Seeded invariant suite for the closed forms and the extremizers.
//!
//! Every check samples from one `ChaCha8` stream, so a report is reproducible
//! from `(λ, ε, points, seed)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{bmo_norm, delivery_curve, moments, superlevel_measure, Interval, LevelMode};
use crate::closed_form::{
    eval_b, eval_b_in_region, eval_b_with_derivatives, eval_bmax, eval_bmax_in_region, eval_bmin,
    eval_bmin_in_region, grad_b_in_region, is_region_interior,
};
use crate::error::Result;
use crate::extremizer::build_extremizer;
use crate::geometry::{classify_weak, internal_boundaries, Layout, Params, Regime, StripPoint};
use crate::oracle::{chord_feasible, exit_time};

pub const DEFAULT_SEED: u64 = 20_100_311;

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub samples: usize,
    pub failures: usize,
    /// Largest observed violation (in the units of `tolerance`).
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn new(name: impl Into<String>, tolerance: f64) -> Self {
        CheckResult {
            name: name.into(),
            samples: 0,
            failures: 0,
            worst: 0.0,
            tolerance,
        }
    }

    /// Records a violation; anything above the tolerance (or NaN) fails.
    fn record(&mut self, violation: f64) {
        self.samples += 1;
        if violation.is_nan() || violation > self.tolerance {
            self.failures += 1;
        }
        if violation.is_nan() || violation > self.worst {
            self.worst = violation;
        }
    }

    fn fail(&mut self) {
        self.samples += 1;
        self.failures += 1;
        self.worst = f64::NAN;
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.samples > 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub lambda: f64,
    pub eps: f64,
    pub points: usize,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Half-width of the sampled `x₁` range: everything interesting happens
/// within `2ε` of `±λ`.
pub fn sample_half_width(p: &Params<f64>) -> f64 {
    p.lambda().abs() + 3.0 * p.eps()
}

/// Uniform in `(x₁, y)` over `|x₁| ≤ half_width`.
pub fn random_strip_point(rng: &mut impl Rng, p: &Params<f64>, half_width: f64) -> StripPoint<f64> {
    let x1 = rng.gen_range(-half_width..=half_width);
    let y: f64 = rng.gen_range(0.0..=1.0);
    StripPoint::from_height(x1, y, p.eps())
}

/// A chord `[a, b]` inside the closed strip with midpoint `m`.
///
/// The midpoint is uniform as in [`random_strip_point`]; the direction is
/// uniform in the frame where the midpoint sits above the parabola vertex,
/// and the half-length uniform up to the first boundary hit.
pub fn random_chord(
    rng: &mut impl Rng,
    p: &Params<f64>,
    half_width: f64,
) -> (StripPoint<f64>, StripPoint<f64>, StripPoint<f64>) {
    let eps = p.eps();
    loop {
        let m = random_strip_point(rng, p, half_width);
        let theta = rng.gen_range(0.0..std::f64::consts::PI);
        let (dc, ds) = (theta.cos(), eps * theta.sin());
        let big_y = m.variance().max(0.0);
        let (t_fwd, _) = exit_time(big_y, dc, ds, p.eps_sq());
        let (t_back, _) = exit_time(big_y, -dc, -ds, p.eps_sq());
        let reach = t_fwd.min(t_back) * (1.0 - 1e-9);
        if !(reach > 0.0) || !reach.is_finite() {
            continue;
        }
        let t = rng.gen_range(0.0..=reach);
        let d = (dc * t, (ds + 2.0 * m.x1 * dc) * t);
        let a = StripPoint::new(m.x1 - d.0, m.x2 - d.1);
        let b = StripPoint::new(m.x1 + d.0, m.x2 + d.1);
        if chord_feasible(&a, &b, p) {
            return (a, m, b);
        }
    }
}

/// Which closed form a generic check applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Target {
    B,
    BMax,
    BMin,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::B => "B",
            Target::BMax => "Bmax",
            Target::BMin => "Bmin",
        }
    }

    pub fn eval(self, x: &StripPoint<f64>, p: &Params<f64>) -> Result<f64> {
        Ok(match self {
            Target::B => eval_b(x, p)?.value,
            Target::BMax => eval_bmax(x, p)?.value,
            Target::BMin => eval_bmin(x, p)?.value,
        })
    }

    fn eval_in_region(self, x: &StripPoint<f64>, p: &Params<f64>, index: u8) -> Result<f64> {
        match self {
            Target::B => eval_b_in_region(x, p, index),
            Target::BMax => eval_bmax_in_region(x, p, index),
            Target::BMin => eval_bmin_in_region(x, p, index),
        }
    }

    fn layout(self, p: &Params<f64>) -> Result<Layout> {
        Ok(match self {
            Target::B => p.regime()?.layout(),
            Target::BMax | Target::BMin => Layout::OneJump,
        })
    }
}

/// `0 ≤ B ≤ 1` and finite.
pub fn check_range(p: &Params<f64>, rng: &mut impl Rng, n: usize) -> CheckResult {
    let mut out = CheckResult::new("range", 0.0);
    let w = sample_half_width(p);
    for _ in 0..n {
        let x = random_strip_point(rng, p, w);
        match eval_b(&x, p) {
            Ok(v) => out.record((-v.value).max(v.value - 1.0).max(0.0)),
            Err(_) => out.fail(),
        }
    }
    out
}

/// `B(x₁, x₂) = B(−x₁, x₂)` exactly.
pub fn check_symmetry(p: &Params<f64>, rng: &mut impl Rng, n: usize) -> CheckResult {
    let mut out = CheckResult::new("symmetry", 0.0);
    let w = sample_half_width(p);
    for _ in 0..n {
        let x = random_strip_point(rng, p, w);
        match (eval_b(&x, p), eval_b(&x.mirrored(), p)) {
            (Ok(a), Ok(b)) => out.record((a.value - b.value).abs()),
            _ => out.fail(),
        }
    }
    out
}

/// Boundary data on the lower parabola: the indicator of `|x₁| ≥ λ`.
pub fn check_normalization(p: &Params<f64>, n: usize) -> CheckResult {
    let mut out = CheckResult::new("normalization", 0.0);
    let w = sample_half_width(p);
    for k in 0..n {
        let x1 = -w + 2.0 * w * k as f64 / (n.max(2) - 1) as f64;
        let expected = if x1.abs() >= p.lambda() { 1.0 } else { 0.0 };
        match eval_b(&StripPoint::new(x1, x1 * x1), p) {
            Ok(v) => out.record((v.value - expected).abs()),
            Err(_) => out.fail(),
        }
    }
    out
}

/// `t ↦ B(0, t)` is nondecreasing on `[0, ε²]`.
pub fn check_center_monotone(p: &Params<f64>, n: usize) -> CheckResult {
    let mut out = CheckResult::new("center-monotone", 0.0);
    let mut prev: Option<f64> = None;
    for k in 0..n.max(2) {
        let t = p.eps_sq() * k as f64 / (n.max(2) - 1) as f64;
        match eval_b(&StripPoint::new(0.0, t), p) {
            Ok(v) => {
                out.record(prev.map_or(0.0, |q| (q - v.value).max(0.0)));
                prev = Some(v.value);
            }
            Err(_) => out.fail(),
        }
    }
    out
}

/// Midpoint concavity along random feasible chords (convexity for `B_min`,
/// which is an infimum).
pub fn check_concavity(p: &Params<f64>, target: Target, rng: &mut impl Rng, n: usize) -> CheckResult {
    let (label, sign) = match target {
        Target::BMin => ("convexity", -1.0),
        _ => ("concavity", 1.0),
    };
    let mut out = CheckResult::new(format!("{label}-{}", target.name()), 1e-10);
    let w = sample_half_width(p);
    for _ in 0..n {
        let (a, m, b) = random_chord(rng, p, w);
        match (target.eval(&a, p), target.eval(&m, p), target.eval(&b, p)) {
            (Ok(fa), Ok(fm), Ok(fb)) => out.record((sign * (0.5 * (fa + fb) - fm)).max(0.0)),
            _ => out.fail(),
        }
    }
    out
}

/// Points at least `margin` inside their region and `y` inside `[lo, 1 − lo]`.
fn random_interior_point(
    rng: &mut impl Rng,
    p: &Params<f64>,
    margin: f64,
    lo: f64,
) -> Result<StripPoint<f64>> {
    let w = sample_half_width(p);
    loop {
        let x1 = rng.gen_range(-w..=w);
        let y = rng.gen_range(lo..=1.0 - lo);
        let x = StripPoint::from_height(x1, y, p.eps());
        if is_region_interior(&x, p, p.regime()?.layout(), margin)? {
            return Ok(x);
        }
    }
}

/// Analytic gradient against central differences with step `1e-5`.
///
/// Next to the jump points the third derivatives grow like `r⁻³`, so the
/// plain central difference is Richardson-extrapolated with step `h/2`. The
/// error is measured relative to `max(|∇B|, 1)`.
pub fn check_gradient(p: &Params<f64>, rng: &mut impl Rng, n: usize) -> Result<CheckResult> {
    const H: f64 = 1e-5;
    let mut out = CheckResult::new("gradient-fd", 1e-5);
    for _ in 0..n {
        let x = random_interior_point(rng, p, 1e-3, 1e-3)?;
        let g = match eval_b_with_derivatives(&x, p)?.gradient {
            Some(g) => g,
            None => {
                out.fail();
                continue;
            }
        };
        let f = |d1: f64, d2: f64| eval_b(&StripPoint::new(x.x1 + d1, x.x2 + d2), p).map(|v| v.value);
        // central differences at h and h/2, combined to cancel the h² term
        let central = |h: f64| -> Result<(f64, f64)> {
            Ok((
                (f(h, 0.0)? - f(-h, 0.0)?) / (2.0 * h),
                (f(0.0, h)? - f(0.0, -h)?) / (2.0 * h),
            ))
        };
        let (c1, c2) = central(H)?;
        let (h1, h2) = central(0.5 * H)?;
        let (fd1, fd2) = ((4.0 * h1 - c1) / 3.0, (4.0 * h2 - c2) / 3.0);
        let scale = g[0].abs().max(g[1].abs()).max(1.0);
        out.record((g[0] - fd1).abs().max((g[1] - fd2).abs()) / scale);
    }
    Ok(out)
}

/// Hessian eigenvalues are nonpositive; on `Ω₄` of the large regime the
/// determinant vanishes.
///
/// Both are measured relative to the Hessian's size, which blows up near the
/// upper parabola.
pub fn check_hessian(p: &Params<f64>, rng: &mut impl Rng, n: usize) -> Result<(CheckResult, Option<CheckResult>)> {
    let mut eig = CheckResult::new("hessian-eigenvalues", 1e-9);
    let large = p.regime()? == Regime::Large;
    let mut det = large.then(|| CheckResult::new("hessian-det-omega4", 1e-9));
    for _ in 0..n {
        let x = random_interior_point(rng, p, 1e-6, 1e-6)?;
        let v = eval_b_with_derivatives(&x, p)?;
        let Some(h) = v.hessian else {
            eig.fail();
            continue;
        };
        let size = h.xx.abs().max(h.xy.abs()).max(h.yy.abs()).max(1.0);
        let (_, top) = h.eigenvalues();
        eig.record(top.max(0.0) / size);
        if let Some(d) = det.as_mut() {
            if v.region.index == 4 {
                d.record(h.det().abs() / (size * size));
            }
        }
    }
    Ok((eig, det))
}

/// Values on both sides of every internal region boundary, a small distance
/// off the boundary, agree; and the two adjacent formulas agree on the
/// boundary itself.
pub fn check_continuity(
    p: &Params<f64>,
    target: Target,
    rng: &mut impl Rng,
    per_piece: usize,
) -> Result<CheckResult> {
    let layout = target.layout(p)?;
    let mut out = CheckResult::new(format!("continuity-{}", target.name()), 1e-8);
    for seg in internal_boundaries(p, layout) {
        let mut taken = 0;
        let mut attempts = 0;
        while taken < per_piece && attempts < 20 * per_piece {
            attempts += 1;
            let negative = seg.mirrored && rng.gen_bool(0.5);
            let x = seg.point(rng.gen_range(0.0..=1.0), negative);
            let (n1, n2) = seg.normal(negative);
            // the gradient grows like 1/r near the jump points (±λ, λ²)
            let lam = p.lambda();
            let r = (x.x1.abs() - lam.abs()).hypot(x.x2 - lam * lam);
            let d = 1e-10 * r.min(1.0);
            let above = StripPoint::new(x.x1 + d * n1, x.x2 + d * n2);
            let below = StripPoint::new(x.x1 - d * n1, x.x2 - d * n2);
            let inside = |q: &StripPoint<f64>| {
                let v = q.variance();
                v > 0.0 && v < p.eps_sq()
            };
            if !inside(&above) || !inside(&below) {
                continue;
            }
            taken += 1;
            let sides = target.eval(&above, p).and_then(|a| Ok(a - target.eval(&below, p)?));
            let formulas = target
                .eval_in_region(&x, p, seg.above)
                .and_then(|a| Ok(a - target.eval_in_region(&x, p, seg.below)?));
            match (sides, formulas) {
                (Ok(s), Ok(f)) => out.record(s.abs().max(f.abs())),
                _ => out.fail(),
            }
        }
    }
    Ok(out)
}

/// Gradients of the neighbouring formulas agree on `Ω₅ ∩ Ω₄` and `Ω₄ ∩ Ω₃`
/// (large regime).
pub fn check_c1_gluing(p: &Params<f64>, rng: &mut impl Rng, per_piece: usize) -> Result<CheckResult> {
    let mut out = CheckResult::new("c1-gluing", 1e-6);
    for seg in internal_boundaries(p, Layout::WeakLarge) {
        let pair = (seg.below.min(seg.above), seg.below.max(seg.above));
        if pair != (4, 5) && pair != (3, 4) {
            continue;
        }
        for _ in 0..per_piece {
            let negative = rng.gen_bool(0.5);
            let x = seg.point(rng.gen_range(0.0..=1.0), negative);
            let ga = grad_b_in_region(&x, p, seg.above)?;
            let gb = grad_b_in_region(&x, p, seg.below)?;
            out.record((ga[0] - gb[0]).abs().max((ga[1] - gb[1]).abs()));
        }
    }
    Ok(out)
}

/// Across the boundaries of `Ω₂` (large regime), `∂B/∂x₂` is strictly
/// negative on the `Ω₂` side and nonnegative on the other.
pub fn check_bx2_jump(p: &Params<f64>, rng: &mut impl Rng, per_piece: usize) -> Result<CheckResult> {
    let mut out = CheckResult::new("bx2-jump-sign", 0.0);
    for seg in internal_boundaries(p, Layout::WeakLarge) {
        if seg.above != 2 && seg.below != 2 {
            continue;
        }
        let other = if seg.above == 2 { seg.below } else { seg.above };
        for _ in 0..per_piece {
            let negative = rng.gen_bool(0.5);
            let x = seg.point(rng.gen_range(0.0..=1.0), negative);
            let inside = grad_b_in_region(&x, p, 2)?[1];
            let outside = grad_b_in_region(&x, p, other)?[1];
            // a violation is a nonnegative inside value or a negative outside one
            let bad = if inside < 0.0 { 0.0 } else { inside.max(f64::MIN_POSITIVE) };
            out.record(bad.max((-outside).max(0.0)));
        }
    }
    Ok(out)
}

/// `B_min(x; λ) = 1 − B_max(−x₁, x₂; −λ)` away from `(λ, λ²)`.
pub fn check_reflection(p: &Params<f64>, rng: &mut impl Rng, n: usize) -> Result<CheckResult> {
    let mut out = CheckResult::new("reflection", 1e-12);
    let q = p.reflected();
    let w = sample_half_width(p);
    let lam = p.lambda();
    let mut taken = 0;
    while taken < n {
        let x = random_strip_point(rng, p, w);
        if (x.x1 - lam).abs() < 1e-9 && (x.x2 - lam * lam).abs() < 1e-9 {
            continue;
        }
        taken += 1;
        let lhs = eval_bmin(&x, p)?.value;
        let rhs = 1.0 - eval_bmax(&x.mirrored(), &q)?.value;
        out.record((lhs - rhs).abs());
    }
    Ok(out)
}

/// Random points spread over the five large-regime regions, `per_region` each.
pub fn points_per_region(
    p: &Params<f64>,
    rng: &mut impl Rng,
    per_region: usize,
) -> Result<Vec<StripPoint<f64>>> {
    let mut counts = [0usize; 6];
    let mut out = Vec::with_capacity(5 * per_region);
    // Ω₂ and Ω₃ are thin, so draw from the band around ±λ half of the time
    let w = sample_half_width(p);
    let lam = p.lambda();
    let band = 2.0 * p.eps();
    while out.len() < 5 * per_region {
        let x = if rng.gen_bool(0.5) {
            let x1 = rng.gen_range(lam - band..=lam + band) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            StripPoint::from_height(x1, rng.gen_range(0.0..=1.0), p.eps())
        } else {
            random_strip_point(rng, p, w)
        };
        let k = classify_weak(&x, p)?.index as usize;
        if counts[k] < per_region {
            counts[k] += 1;
            out.push(x);
        }
    }
    Ok(out)
}

/// Per-point extremizer checks of the large regime.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtremizerChecks {
    pub moments: CheckResult,
    pub sharpness: CheckResult,
    pub norm: CheckResult,
    pub norm_two_step: CheckResult,
    pub delivery: CheckResult,
}

impl ExtremizerChecks {
    pub fn into_vec(self) -> Vec<CheckResult> {
        vec![self.moments, self.sharpness, self.norm, self.norm_two_step, self.delivery]
    }
}

/// Builds the extremizer at each point and checks its moments, its
/// superlevel measure, its BMO norm and its delivery curve.
pub fn check_extremizers(
    p: &Params<f64>,
    points: &[StripPoint<f64>],
    norm_resolution: usize,
    curve_samples: usize,
) -> Result<ExtremizerChecks> {
    let eps = p.eps();
    let mut m = CheckResult::new("extremizer-moments", 1e-9);
    let mut s = CheckResult::new("extremizer-sharpness", 1e-9);
    let mut nrm = CheckResult::new("extremizer-norm", 1e-6);
    let mut two = CheckResult::new("extremizer-norm-omega1", 1e-3);
    let mut dc = CheckResult::new("extremizer-delivery", 1e-9);
    for x in points {
        let phi = build_extremizer(x, p)?;
        let (m1, m2) = moments(&phi, &Interval::unit());
        m.record((m1 - x.x1).abs().max((m2 - x.x2).abs()));
        let b = eval_b(x, p)?.value;
        s.record((superlevel_measure(&phi, p.lambda(), LevelMode::Absolute) - b).abs());
        let norm = bmo_norm(&phi, norm_resolution);
        nrm.record((norm - eps).max(0.0));
        if phi.region.index == 1 && x.variance() > 0.0 {
            two.record((eps - norm).max(0.0));
        }
        dc.record(delivery_curve(&phi, curve_samples).max_violation);
    }
    Ok(ExtremizerChecks {
        moments: m,
        sharpness: s,
        norm: nrm,
        norm_two_step: two,
        delivery: dc,
    })
}

/// The full suite for `(λ, ε)`: `points` random samples per sampled check.
pub fn run_suite(p: &Params<f64>, points: usize, seed: u64) -> Result<Report> {
    let mut r = rng(seed);
    let per_piece = points.div_ceil(10).max(10);
    let mut checks = vec![
        check_range(p, &mut r, points),
        check_symmetry(p, &mut r, points),
        check_normalization(p, points),
        check_center_monotone(p, points),
        check_concavity(p, Target::B, &mut r, points),
        check_concavity(p, Target::BMax, &mut r, points),
        check_concavity(p, Target::BMin, &mut r, points),
        check_gradient(p, &mut r, points)?,
    ];
    let (eig, det) = check_hessian(p, &mut r, points)?;
    checks.push(eig);
    checks.extend(det);
    checks.push(check_continuity(p, Target::B, &mut r, per_piece)?);
    checks.push(check_continuity(p, Target::BMax, &mut r, per_piece)?);
    checks.push(check_continuity(p, Target::BMin, &mut r, per_piece)?);
    checks.push(check_reflection(p, &mut r, points)?);
    if p.regime()? == Regime::Large {
        checks.push(check_c1_gluing(p, &mut r, per_piece)?);
        checks.push(check_bx2_jump(p, &mut r, per_piece)?);
        let pts = points_per_region(p, &mut r, points.div_ceil(5).min(200))?;
        checks.extend(check_extremizers(p, &pts, 256, 64)?.into_vec());
    }
    Ok(Report {
        lambda: p.lambda(),
        eps: p.eps(),
        points,
        seed,
        checks,
    })
}
