//! Closed-form Bellman functions.
//!
//! `B` is the sharp upper bound for `|{|φ| ≥ λ}|` over test functions with a
//! given Bellman point, `B_max`/`B_min` are the sharp bounds for the one-sided
//! set `{φ ≥ λ}`. Each is piecewise: affine on some regions, a ratio
//! `(x₂ − x₁²)/(x₂ + λ² − 2λx₁)` on the regions foliated by lines through
//! `(λ, λ²)`, and an exponential-of-square-root expression on the regions
//! foliated by tangents to the upper parabola.
//!
//! Every formula is evaluated as a second-order jet in `(a, x₂)` where `a` is
//! `|x₁|` (weak layouts) or `±x₁` (one-jump layout); derivatives in `x₁` follow
//! by the chain rule.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    classify_one_jump, ensure_in_strip, in_strip, one_jump_index, regime, weak_index, Layout,
    Params, Regime, Region, StripPoint,
};
use crate::scalar::{sign, Scalar};

/// Symmetric 2×2 matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sym2<T> {
    pub xx: T,
    pub xy: T,
    pub yy: T,
}

impl<T: Scalar> Sym2<T> {
    pub fn zero() -> Self {
        Sym2 {
            xx: T::zero(),
            xy: T::zero(),
            yy: T::zero(),
        }
    }

    pub fn det(&self) -> T {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> T {
        self.xx + self.yy
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (T, T) {
        let mean = self.trace() * T::half();
        let diff = (self.xx - self.yy) * T::half();
        let r = (diff * diff + self.xy * self.xy).sqrt();
        (mean - r, mean + r)
    }
}

/// Value of a Bellman function at a point, with the region that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BellmanValue<T> {
    pub value: T,
    pub region: Region,
    /// `(∂/∂x₁, ∂/∂x₂)`, present only in region interiors.
    pub gradient: Option<[T; 2]>,
    pub hessian: Option<Sym2<T>>,
}

/// Second-order jet of a formula in the variables `(a, x₂)`.
#[derive(Clone, Copy, Debug)]
struct Jet<T> {
    v: T,
    ga: T,
    g2: T,
    haa: T,
    ha2: T,
    h22: T,
}

impl<T: Scalar> Jet<T> {
    fn constant(v: T) -> Self {
        let z = T::zero();
        Jet {
            v,
            ga: z,
            g2: z,
            haa: z,
            ha2: z,
            h22: z,
        }
    }

    /// `c0 + ca·a + c2·x₂`
    fn affine(a: T, x2: T, c0: T, ca: T, c2: T) -> Self {
        Jet {
            v: c0 + ca * a + c2 * x2,
            ga: ca,
            g2: c2,
            ..Self::constant(T::zero())
        }
    }

    fn one_minus(self) -> Self {
        Jet {
            v: T::one() - self.v,
            ga: -self.ga,
            g2: -self.g2,
            haa: -self.haa,
            ha2: -self.ha2,
            h22: -self.h22,
        }
    }

    /// Pull back through `a = σ·x₁`.
    fn gradient(&self, sigma: T) -> [T; 2] {
        [sigma * self.ga, self.g2]
    }

    fn hessian(&self, sigma: T) -> Sym2<T> {
        Sym2 {
            xx: self.haa,
            xy: sigma * self.ha2,
            yy: self.h22,
        }
    }
}

/// `(x₂ − a²)/(x₂ + λ² − 2λa)`: the value is constant on lines through `(λ, λ²)`.
fn ratio_jet<T: Scalar>(a: T, x2: T, lam: T) -> Jet<T> {
    let two = T::two();
    let d = x2 + lam * lam - two * lam * a;
    if d <= T::zero() {
        // only at (λ, λ²) itself, where the numerator vanishes too
        return Jet::constant(T::zero());
    }
    let n = x2 - a * a;
    let d2 = d * d;
    let d3 = d2 * d;
    let la = lam - a;
    let lx = lam * lam - x2;
    Jet {
        v: n / d,
        ga: two * (x2 - lam * a) * la / d2,
        g2: la * la / d2,
        haa: -two * lx * lx / d3,
        ha2: two * lx * la / d3,
        h22: -two * la * la / d3,
    }
}

/// `(e/2)(1 − s)·exp((a − λ)/ε + s)`, `s = √(1 − (x₂ − a²)/ε²)`: constant along
/// tangents to the upper parabola.
fn log_jet<T: Scalar>(a: T, x2: T, lam: T, eps: T) -> Jet<T> {
    let (two, half, e) = (T::two(), T::half(), T::e());
    let eps2 = eps * eps;
    let s = (T::one() - (x2 - a * a) / eps2).max(T::zero()).sqrt();
    let growth = ((a - lam) / eps + s).exp();
    let v = half * e * (T::one() - s) * growth;
    let ga = half * e * (eps - a - eps * s) / eps2 * growth;
    let g2 = e / (T::lit(4.0) * eps2) * growth;
    if s <= T::zero() {
        // upper parabola: the curvature is unbounded there
        let inf = T::neg_infinity();
        return Jet {
            v,
            ga,
            g2,
            haa: inf,
            ha2: T::nan(),
            h22: inf,
        };
    }
    let r = (a + eps * s) / eps;
    let pref = e * growth / (T::lit(8.0) * eps2 * eps2 * s);
    Jet {
        v,
        ga,
        g2,
        haa: -pref * T::lit(4.0) * eps2 * r * r,
        ha2: pref * two * eps * r,
        h22: -pref,
    }
}

/// Value, gradient and Hessian of `B` using the formula of the given weak region.
fn weak_jet<T: Scalar>(x: &StripPoint<T>, p: &Params<T>, regime: Regime, index: u8) -> Jet<T> {
    let a = x.x1.abs();
    let x2 = x.x2;
    let (lam, eps) = (p.lambda(), p.eps());
    let (one, two) = (T::one(), T::two());
    let eps2 = eps * eps;
    let lam2 = lam * lam;
    match (regime, index) {
        (_, 1) => Jet::constant(one),
        (Regime::Small, 2) | (Regime::Medium, 4) => {
            Jet::affine(a, x2, T::zero(), T::zero(), one / lam2)
        }
        (_, 3) => ratio_jet(a, x2, lam),
        (Regime::Medium, 2) => {
            let den = two * eps * lam2;
            Jet::affine(
                a,
                x2,
                lam * (two * eps2 + eps * lam - lam2) / den,
                two * (lam2 - eps2) / den,
                -(lam - eps) / den,
            )
        }
        (Regime::Large, 2) => band_jet(a, x2, lam, eps),
        (Regime::Large, 4) => log_jet(a, x2, lam, eps),
        (Regime::Large, 5) => {
            let k = (two - lam / eps).exp() / (T::lit(4.0) * eps2);
            Jet::affine(a, x2, T::zero(), T::zero(), k)
        }
        _ => unreachable!("region {index} does not exist in the {regime} regime"),
    }
}

/// `1 − (x₂ − 2(λ+ε)a + λ² + 2ελ)/(8ε²)`: affine on the band around `a = λ`.
fn band_jet<T: Scalar>(a: T, x2: T, lam: T, eps: T) -> Jet<T> {
    let two = T::two();
    let k = T::one() / (T::lit(8.0) * eps * eps);
    Jet::affine(
        a,
        x2,
        T::one() - (lam * lam + two * eps * lam) * k,
        two * (lam + eps) * k,
        -k,
    )
}

fn bmax_jet<T: Scalar>(x: &StripPoint<T>, p: &Params<T>, index: u8) -> Jet<T> {
    let (lam, eps) = (p.lambda(), p.eps());
    match index {
        1 | 2 => Jet::constant(T::one()),
        3 => band_jet(x.x1, x.x2, lam, eps),
        4 => ratio_jet(x.x1, x.x2, lam),
        5 => log_jet(x.x1, x.x2, lam, eps),
        _ => unreachable!("one-jump layout has five regions"),
    }
}

/// Jet of `B_min` in the variables `(x₁, x₂)` (σ = +1 for the caller).
fn bmin_jet<T: Scalar>(x: &StripPoint<T>, p: &Params<T>, index: u8) -> Jet<T> {
    let (lam, eps) = (p.lambda(), p.eps());
    let two = T::two();
    match index {
        4 | 5 => Jet::constant(T::zero()),
        3 => {
            // (x₂ − 2(λ−ε)x₁ + λ² − 2ελ)/(8ε²)
            let k = T::one() / (T::lit(8.0) * eps * eps);
            Jet::affine(
                x.x1,
                x.x2,
                (lam * lam - two * eps * lam) * k,
                -two * (lam - eps) * k,
                k,
            )
        }
        2 => {
            if x.x1 == lam && x.x2 == lam * lam {
                return Jet::constant(T::one());
            }
            ratio_jet(x.x1, x.x2, lam).one_minus()
        }
        1 => {
            // 1 − (e/2)(1 − s)exp((λ − x₁)/ε + s), a log jet in a = −x₁ at level −λ
            let j = log_jet(-x.x1, x.x2, -lam, eps).one_minus();
            Jet {
                ga: -j.ga,
                ha2: -j.ha2,
                ..j
            }
        }
        _ => unreachable!("one-jump layout has five regions"),
    }
}

#[inline]
fn clamp01<T: Scalar>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

/// Default distance from region boundaries below which derivatives are refused.
pub fn default_margin<T: Scalar>(x: &StripPoint<T>) -> T {
    let scale = T::one() + x.x1.abs() + x.x2.abs();
    T::lit(1e-9).max(T::epsilon() * T::lit(64.0)) * scale
}

/// True when every strip point within `margin` of `x` (probed in eight
/// directions) lies in the same region as `x`.
pub fn is_region_interior<T: Scalar>(
    x: &StripPoint<T>,
    p: &Params<T>,
    layout: Layout,
    margin: T,
) -> Result<bool> {
    let index_at = |q: &StripPoint<T>| -> Result<u8> {
        Ok(match layout {
            Layout::OneJump => one_jump_index(q, p),
            _ => weak_index(q, p, regime(p)?),
        })
    };
    let here = index_at(x)?;
    let diag = margin * T::lit(std::f64::consts::FRAC_1_SQRT_2);
    let offsets = [
        (margin, T::zero()),
        (-margin, T::zero()),
        (T::zero(), margin),
        (T::zero(), -margin),
        (diag, diag),
        (diag, -diag),
        (-diag, diag),
        (-diag, -diag),
    ];
    for (d1, d2) in offsets {
        let q = StripPoint::new(x.x1 + d1, x.x2 + d2);
        if in_strip(&q, p, T::zero()) && index_at(&q)? != here {
            return Ok(false);
        }
    }
    Ok(true)
}

fn require_interior<T: Scalar>(
    x: &StripPoint<T>,
    p: &Params<T>,
    layout: Layout,
    margin: T,
) -> Result<()> {
    if is_region_interior(x, p, layout, margin)? {
        Ok(())
    } else {
        Err(Error::OnBoundary {
            x1: x.x1.to_f64_lossy(),
            x2: x.x2.to_f64_lossy(),
            margin: margin.to_f64_lossy(),
        })
    }
}

/// `B(x; λ, ε)`, the sharp bound for `|{|φ| ≥ λ}|`.
pub fn eval_b<T: Scalar>(x: &StripPoint<T>, p: &Params<T>) -> Result<BellmanValue<T>> {
    let regime = regime(p)?;
    ensure_in_strip(x, p)?;
    let index = weak_index(x, p, regime);
    let region = crate::geometry::classify_weak(x, p)?;
    Ok(BellmanValue {
        value: clamp01(weak_jet(x, p, regime, index).v),
        region,
        gradient: None,
        hessian: None,
    })
}

/// [`eval_b`] plus gradient and Hessian when `x` is a region interior point.
pub fn eval_b_with_derivatives<T: Scalar>(
    x: &StripPoint<T>,
    p: &Params<T>,
) -> Result<BellmanValue<T>> {
    let mut out = eval_b(x, p)?;
    let regime = regime(p)?;
    if is_region_interior(x, p, regime.layout(), default_margin(x))? {
        let jet = weak_jet(x, p, regime, out.region.index);
        let sigma = sign(x.x1);
        out.gradient = Some(jet.gradient(sigma));
        out.hessian = Some(jet.hessian(sigma));
    }
    Ok(out)
}

/// Evaluates the formula of weak region `index` at `x` regardless of which
/// region `x` belongs to. Used to compare neighbouring formulas on shared
/// boundaries.
pub fn eval_b_in_region<T: Scalar>(x: &StripPoint<T>, p: &Params<T>, index: u8) -> Result<T> {
    let regime = regime(p)?;
    check_index(index, regime.layout())?;
    Ok(weak_jet(x, p, regime, index).v)
}

/// Gradient of the formula of weak region `index` at `x`.
pub fn grad_b_in_region<T: Scalar>(
    x: &StripPoint<T>,
    p: &Params<T>,
    index: u8,
) -> Result<[T; 2]> {
    let regime = regime(p)?;
    check_index(index, regime.layout())?;
    Ok(weak_jet(x, p, regime, index).gradient(sign(x.x1)))
}

fn check_index(index: u8, layout: Layout) -> Result<()> {
    if index == 0 || index > layout.region_count() {
        return Err(Error::UnknownRegion { index });
    }
    Ok(())
}

/// `(∂B/∂x₁, ∂B/∂x₂)` at a region interior point, with the default margin.
pub fn grad_b<T: Scalar>(x: &StripPoint<T>, p: &Params<T>) -> Result<[T; 2]> {
    grad_b_with_margin(x, p, default_margin(x))
}

pub fn grad_b_with_margin<T: Scalar>(x: &StripPoint<T>, p: &Params<T>, margin: T) -> Result<[T; 2]> {
    let regime = regime(p)?;
    ensure_in_strip(x, p)?;
    require_interior(x, p, regime.layout(), margin)?;
    let index = weak_index(x, p, regime);
    Ok(weak_jet(x, p, regime, index).gradient(sign(x.x1)))
}

/// Hessian of `B` at a region interior point. Zero on the affine regions.
pub fn hessian_b<T: Scalar>(x: &StripPoint<T>, p: &Params<T>) -> Result<Sym2<T>> {
    hessian_b_with_margin(x, p, default_margin(x))
}

pub fn hessian_b_with_margin<T: Scalar>(
    x: &StripPoint<T>,
    p: &Params<T>,
    margin: T,
) -> Result<Sym2<T>> {
    let regime = regime(p)?;
    ensure_in_strip(x, p)?;
    require_interior(x, p, regime.layout(), margin)?;
    let index = weak_index(x, p, regime);
    Ok(weak_jet(x, p, regime, index).hessian(sign(x.x1)))
}

/// `B_max(x; λ, ε)`, the sharp upper bound for `|{φ ≥ λ}|`. `λ` may be negative.
pub fn eval_bmax<T: Scalar>(x: &StripPoint<T>, p: &Params<T>) -> Result<BellmanValue<T>> {
    let region = classify_one_jump(x, p)?;
    let jet = bmax_jet(x, p, region.index);
    one_jump_value(x, p, region, jet, T::one())
}

/// `B_min(x; λ, ε)`, the sharp lower bound for `|{φ ≥ λ}|`. `λ` may be negative.
pub fn eval_bmin<T: Scalar>(x: &StripPoint<T>, p: &Params<T>) -> Result<BellmanValue<T>> {
    let region = classify_one_jump(x, p)?;
    let jet = bmin_jet(x, p, region.index);
    one_jump_value(x, p, region, jet, T::one())
}

fn one_jump_value<T: Scalar>(
    x: &StripPoint<T>,
    p: &Params<T>,
    region: Region,
    jet: Jet<T>,
    sigma: T,
) -> Result<BellmanValue<T>> {
    let interior = is_region_interior(x, p, Layout::OneJump, default_margin(x))?;
    Ok(BellmanValue {
        value: clamp01(jet.v),
        region,
        gradient: interior.then(|| jet.gradient(sigma)),
        hessian: interior.then(|| jet.hessian(sigma)),
    })
}

pub fn eval_bmax_in_region<T: Scalar>(x: &StripPoint<T>, p: &Params<T>, index: u8) -> Result<T> {
    check_index(index, Layout::OneJump)?;
    Ok(bmax_jet(x, p, index).v)
}

pub fn eval_bmin_in_region<T: Scalar>(x: &StripPoint<T>, p: &Params<T>, index: u8) -> Result<T> {
    check_index(index, Layout::OneJump)?;
    Ok(bmin_jet(x, p, index).v)
}

/// Sharp bound for `|{|φ − ⟨φ⟩| ≥ λ}|/|J|` over `‖φ‖_BMO ≤ ε`.
pub fn weak_jn_bound<T: Scalar>(p: &Params<T>) -> Result<T> {
    let (lam, eps) = (p.lambda(), p.eps());
    Ok(match regime(p)? {
        Regime::Small => T::one(),
        Regime::Medium => eps * eps / (lam * lam),
        Regime::Large => T::e() * T::e() / T::lit(4.0) * (-lam / eps).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pt(x1: f64, x2: f64) -> StripPoint<f64> {
        StripPoint::new(x1, x2)
    }

    fn large() -> Params<f64> {
        Params::new(3.0, 1.0).unwrap()
    }

    #[test]
    fn eval_b_examples() {
        let p = large();
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(eval_b(&pt(0.0, 1.0), &p).unwrap().value, 0.25 / e, epsilon = 1e-15);
        assert_eq!(eval_b(&pt(3.0, 9.0), &p).unwrap().value, 1.0);
        assert_abs_diff_eq!(eval_b(&pt(2.0, 4.5), &p).unwrap().value, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eval_b(&pt(3.0, 9.6), &p).unwrap().value, 0.925, epsilon = 1e-14);
        assert_abs_diff_eq!(eval_b(&pt(1.2, 2.0), &p).unwrap().value, 0.146833, epsilon = 1e-6);
        let medium = Params::new(1.5, 1.0).unwrap();
        assert_abs_diff_eq!(eval_b(&pt(0.0, 1.0), &medium).unwrap().value, 4.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn bmax_bmin_examples() {
        let p = large();
        assert_eq!(eval_bmax(&pt(3.2, 10.4), &p).unwrap().value, 1.0);
        assert_abs_diff_eq!(eval_bmax(&pt(2.5, 6.8), &p).unwrap().value, 0.6875, epsilon = 1e-14);
        assert_abs_diff_eq!(
            eval_bmax(&pt(0.0, 0.75), &p).unwrap().value,
            0.25 * (-1.5f64).exp(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(eval_bmin(&pt(3.2, 10.4), &p).unwrap().value, 0.2, epsilon = 1e-13);
        assert_eq!(eval_bmin(&pt(2.5, 6.8), &p).unwrap().value, 0.0);
        assert_eq!(eval_bmin(&pt(3.0, 9.0), &p).unwrap().value, 1.0);
        assert_eq!(eval_bmax(&pt(3.0, 9.0), &p).unwrap().value, 1.0);
    }

    #[test]
    fn gradient_examples() {
        let p = large();
        let g = grad_b(&pt(0.0, 1.0), &p).unwrap();
        assert_eq!(g[0], 0.0);
        assert_abs_diff_eq!(g[1], 0.25 / std::f64::consts::E, epsilon = 1e-15);
        let g = grad_b(&pt(3.0, 9.6), &p).unwrap();
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -0.125, epsilon = 1e-15);
        assert_eq!(grad_b(&pt(5.0, 25.5), &p).unwrap(), [0.0, 0.0]);
        // on the Ω₄/Ω₅ line
        assert!(matches!(grad_b(&pt(0.5, 1.0), &p), Err(Error::OnBoundary { .. })));
    }

    #[test]
    fn hessian_examples() {
        let p = large();
        assert_eq!(hessian_b(&pt(5.0, 25.5), &p).unwrap(), Sym2::zero());
        let h = hessian_b(&pt(2.0, 4.5), &p).unwrap();
        let d3 = 1.5f64.powi(3);
        assert_abs_diff_eq!(h.xx, -2.0 * 4.5f64.powi(2) / d3, epsilon = 1e-14);
        assert_abs_diff_eq!(h.xy, 2.0 * 4.5 * 1.0 / d3, epsilon = 1e-14);
        assert_abs_diff_eq!(h.yy, -2.0 / d3, epsilon = 1e-14);
        assert!(h.det().abs() < 1e-12);
        let h = hessian_b(&pt(1.2, 2.0), &p).unwrap();
        assert!(h.det().abs() < 1e-9);
        let (lo, hi) = h.eigenvalues();
        assert!(lo < 0.0 && hi.abs() < 1e-9);
        // proportional to (−4r², 2r; 2r, −1) with ε = 1
        let r = 1.2 + (1.0f64 - 2.0 + 1.44).sqrt();
        assert_abs_diff_eq!(h.xx / h.yy, 4.0 * r * r, epsilon = 1e-12);
        assert_abs_diff_eq!(h.xy / h.yy, -2.0 * r, epsilon = 1e-12);
    }

    #[test]
    fn jn_bound_examples() {
        assert_eq!(weak_jn_bound(&Params::new(0.5, 1.0).unwrap()).unwrap(), 1.0);
        assert_abs_diff_eq!(weak_jn_bound(&Params::new(2.0, 1.0).unwrap()).unwrap(), 0.25, epsilon = 1e-16);
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(
            weak_jn_bound(&Params::new(4.0, 1.0).unwrap()).unwrap(),
            e * e / 4.0 * (-4.0f64).exp(),
            epsilon = 1e-16
        );
        assert!(weak_jn_bound(&Params::signed(-1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn lambda_zero_is_one_everywhere() {
        let p = Params::new(0.0, 1.0).unwrap();
        for (x1, x2) in [(0.0, 0.0), (0.3, 0.5), (-2.0, 4.0)] {
            assert_eq!(eval_b(&pt(x1, x2), &p).unwrap().value, 1.0);
        }
    }

    #[test]
    fn works_in_f32() {
        let p = Params::<f32>::new(3.0, 1.0).unwrap();
        let v = eval_b(&StripPoint::new(0.0f32, 1.0), &p).unwrap().value;
        assert!((v - 0.25 / std::f32::consts::E).abs() < 1e-6);
        let v = eval_b(&StripPoint::new(2.0f32, 4.5), &p).unwrap().value;
        assert!((v - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn derivatives_attached_in_interior_only() {
        let p = large();
        let v = eval_b_with_derivatives(&pt(2.0, 4.5), &p).unwrap();
        assert!(v.gradient.is_some() && v.hessian.is_some());
        let on_line = eval_b_with_derivatives(&pt(0.5, 1.0), &p).unwrap();
        assert!(on_line.gradient.is_none());
    }
}
