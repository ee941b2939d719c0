//! The parabolic strip `x₁² ≤ x₂ ≤ x₁² + ε²` and its subdomains.
//!
//! Two layouts partition the strip. The weak layout (symmetric in `x₁`) has
//! three, four or five subdomains depending on the ratio `λ/ε`; the one-jump
//! layout has five subdomains arranged around the single singular point
//! `(λ, λ²)`. Both are organised around the two lines tangent to the upper
//! parabola at `λ ± ε`, which pass through `(λ, λ²)`.
//!
//! Regions are treated as closed sets. A point on a shared boundary goes to
//! the region that comes first in the layout's precedence order; the
//! closed forms agree there, so the choice does not change any value.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Level `λ` and oscillation bound `ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params<T> {
    lambda: T,
    eps: T,
}

impl<T: Scalar> Params<T> {
    /// Parameters for the two-sided problem: `ε > 0`, `λ ≥ 0`.
    pub fn new(lambda: T, eps: T) -> Result<Self> {
        let p = Self::signed(lambda, eps)?;
        if lambda < T::zero() {
            return Err(p.invalid());
        }
        Ok(p)
    }

    /// Parameters for the one-jump problem, where `λ` may be negative.
    pub fn signed(lambda: T, eps: T) -> Result<Self> {
        if !lambda.is_finite() || !eps.is_finite() {
            return Err(Error::NotFinite);
        }
        let p = Params { lambda, eps };
        if eps <= T::zero() {
            return Err(p.invalid());
        }
        Ok(p)
    }

    #[inline]
    pub fn lambda(&self) -> T {
        self.lambda
    }

    #[inline]
    pub fn eps(&self) -> T {
        self.eps
    }

    #[inline]
    pub fn eps_sq(&self) -> T {
        self.eps * self.eps
    }

    /// Same `ε`, level `-λ`. Used by the reflection between the two
    /// one-jump functions.
    pub fn reflected(&self) -> Self {
        Params {
            lambda: -self.lambda,
            eps: self.eps,
        }
    }

    pub fn regime(&self) -> Result<Regime> {
        regime(self)
    }

    fn invalid(&self) -> Error {
        Error::InvalidParams {
            lambda: self.lambda.to_f64_lossy(),
            eps: self.eps.to_f64_lossy(),
        }
    }

    /// Line tangent to the upper parabola at abscissa `c`, evaluated at `a`.
    #[inline]
    pub(crate) fn tangent_at(&self, c: T, a: T) -> T {
        T::two() * c * a - c * c + self.eps_sq()
    }

    /// Tangent at `λ + ε`: `x₂ = 2(λ+ε)a − λ² − 2ελ`.
    #[inline]
    pub(crate) fn line_plus(&self, a: T) -> T {
        self.tangent_at(self.lambda + self.eps, a)
    }

    /// Tangent at `λ − ε`: `x₂ = 2(λ−ε)a − λ² + 2ελ`.
    #[inline]
    pub(crate) fn line_minus(&self, a: T) -> T {
        self.tangent_at(self.lambda - self.eps, a)
    }
}

/// A point `(x₁, x₂) = (⟨φ⟩, ⟨φ²⟩)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripPoint<T> {
    pub x1: T,
    pub x2: T,
}

impl<T: Scalar> StripPoint<T> {
    pub fn new(x1: T, x2: T) -> Self {
        StripPoint { x1, x2 }
    }

    /// Point at normalized height `y = (x₂ − x₁²)/ε² ∈ [0, 1]` above `x₁`.
    pub fn from_height(x1: T, y: T, eps: T) -> Self {
        StripPoint {
            x1,
            x2: x1 * x1 + y * eps * eps,
        }
    }

    /// `x₂ − x₁²`, the variance of any test function with this Bellman point.
    #[inline]
    pub fn variance(&self) -> T {
        self.x2 - self.x1 * self.x1
    }

    pub fn mirrored(&self) -> Self {
        StripPoint {
            x1: -self.x1,
            x2: self.x2,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// `0 ≤ λ ≤ ε`
    Small,
    /// `ε < λ ≤ 2ε`
    Medium,
    /// `λ > 2ε`
    Large,
}

impl Regime {
    pub fn layout(self) -> Layout {
        match self {
            Regime::Small => Layout::WeakSmall,
            Regime::Medium => Layout::WeakMedium,
            Regime::Large => Layout::WeakLarge,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Small => "small",
            Regime::Medium => "medium",
            Regime::Large => "large",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Plus,
    Minus,
    Center,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layout {
    WeakSmall,
    WeakMedium,
    WeakLarge,
    OneJump,
}

impl Layout {
    pub fn region_count(self) -> u8 {
        match self {
            Layout::WeakSmall => 3,
            Layout::WeakMedium => 4,
            Layout::WeakLarge | Layout::OneJump => 5,
        }
    }

    pub fn is_weak(self) -> bool {
        !matches!(self, Layout::OneJump)
    }
}

/// A subdomain `Ω_i` (with side `±` for the mirrored pairs of the weak layouts).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub index: u8,
    pub side: Side,
    pub layout: Layout,
}

impl Region {
    fn weak(layout: Layout, index: u8, x1_sign_negative: bool) -> Self {
        let centered = matches!(
            (layout, index),
            (Layout::WeakSmall, 1 | 2) | (Layout::WeakMedium, 4) | (Layout::WeakLarge, 5)
        );
        let side = if centered {
            Side::Center
        } else if x1_sign_negative {
            Side::Minus
        } else {
            Side::Plus
        };
        Region {
            index,
            side,
            layout,
        }
    }

    fn one_jump(index: u8) -> Self {
        Region {
            index,
            side: Side::Center,
            layout: Layout::OneJump,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let suffix = match self.side {
            Side::Plus => "+",
            Side::Minus => "-",
            Side::Center => "",
        };
        write!(f, "Omega{}{}", self.index, suffix)
    }
}

/// Classifies `λ/ε`. Boundary ratios go to the lower regime.
pub fn regime<T: Scalar>(p: &Params<T>) -> Result<Regime> {
    if !(p.eps > T::zero()) || !(p.lambda >= T::zero()) {
        return Err(p.invalid());
    }
    Ok(if p.lambda <= p.eps {
        Regime::Small
    } else if p.lambda <= T::two() * p.eps {
        Regime::Medium
    } else {
        Regime::Large
    })
}

/// `x₁² − tol ≤ x₂ ≤ x₁² + ε² + tol`.
pub fn in_strip<T: Scalar>(x: &StripPoint<T>, p: &Params<T>, tol: T) -> bool {
    let v = x.variance();
    v >= -tol && v <= p.eps_sq() + tol
}

/// Membership slack applied when a point is handed to an evaluator.
#[inline]
pub fn default_tol<T: Scalar>(x: &StripPoint<T>) -> T {
    T::strip_tol() * (T::one() + x.x2.abs())
}

pub(crate) fn ensure_in_strip<T: Scalar>(x: &StripPoint<T>, p: &Params<T>) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::NotFinite);
    }
    if in_strip(x, p, default_tol(x)) {
        Ok(())
    } else {
        Err(Error::OutsideStrip {
            x1: x.x1.to_f64_lossy(),
            x2: x.x2.to_f64_lossy(),
            eps_sq: p.eps_sq().to_f64_lossy(),
        })
    }
}

/// Region of the symmetric layout matching `regime(p)`.
pub fn classify_weak<T: Scalar>(x: &StripPoint<T>, p: &Params<T>) -> Result<Region> {
    let regime = regime(p)?;
    ensure_in_strip(x, p)?;
    let index = weak_index(x, p, regime);
    Ok(Region::weak(regime.layout(), index, x.x1 < T::zero()))
}

pub(crate) fn weak_index<T: Scalar>(x: &StripPoint<T>, p: &Params<T>, regime: Regime) -> u8 {
    let a = x.x1.abs();
    let x2 = x.x2;
    let (lam, eps) = (p.lambda, p.eps);
    match regime {
        Regime::Small => {
            if x2 >= lam * lam {
                1
            } else if x2 >= lam * a {
                2
            } else {
                3
            }
        }
        Regime::Medium | Regime::Large => {
            if a >= lam && (a >= lam + eps || x2 <= p.line_plus(a)) {
                1
            } else if a >= lam - eps
                && a <= lam + eps
                && x2 >= p.line_plus(a).max(p.line_minus(a))
            {
                2
            } else if regime == Regime::Medium {
                if x2 <= lam * a {
                    3
                } else {
                    4
                }
            } else if x2 <= p.line_minus(a) {
                3
            } else if a <= eps && x2 >= T::two() * eps * a {
                5
            } else {
                4
            }
        }
    }
}

/// Region of the one-jump layout. `λ` may be any real.
pub fn classify_one_jump<T: Scalar>(x: &StripPoint<T>, p: &Params<T>) -> Result<Region> {
    ensure_in_strip(x, p)?;
    Ok(Region::one_jump(one_jump_index(x, p)))
}

pub(crate) fn one_jump_index<T: Scalar>(x: &StripPoint<T>, p: &Params<T>) -> u8 {
    let (x1, x2) = (x.x1, x.x2);
    let (lam, eps) = (p.lambda, p.eps);
    let plus = p.line_plus(x1);
    let minus = p.line_minus(x1);
    if x1 >= lam + eps && x2 >= plus {
        1
    } else if x2 <= plus {
        2
    } else if x1 >= lam - eps && x1 <= lam + eps && x2 >= plus.max(minus) {
        3
    } else if x2 <= minus {
        4
    } else {
        5
    }
}

/// A straight piece of an internal region boundary, `x₂ = slope·a + intercept`
/// for `a ∈ [a_lo, a_hi]`. In the weak layouts `a = |x₁|` and the piece
/// occurs on both sides; in the one-jump layout `a = x₁`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySegment<T> {
    pub slope: T,
    pub intercept: T,
    pub a_lo: T,
    pub a_hi: T,
    /// Region index on the side of smaller `x₂`.
    pub below: u8,
    /// Region index on the side of larger `x₂`.
    pub above: u8,
    pub mirrored: bool,
}

impl<T: Scalar> BoundarySegment<T> {
    /// Point at parameter `s ∈ [0, 1]` along the piece, on the `x₁ < 0`
    /// copy when `negative` is set (weak layouts only).
    pub fn point(&self, s: T, negative: bool) -> StripPoint<T> {
        let a = self.a_lo + s * (self.a_hi - self.a_lo);
        let x2 = self.slope * a + self.intercept;
        let x1 = if negative && self.mirrored { -a } else { a };
        StripPoint::new(x1, x2)
    }

    /// Unit normal pointing into the `above` region, at the given side.
    pub fn normal(&self, negative: bool) -> (T, T) {
        let m = if negative && self.mirrored {
            -self.slope
        } else {
            self.slope
        };
        let n = (T::one() + m * m).sqrt();
        (-m / n, T::one() / n)
    }
}

/// Every internal boundary of the given layout, as straight pieces.
/// Boundaries that reduce to single tangency points are omitted.
pub fn internal_boundaries<T: Scalar>(p: &Params<T>, layout: Layout) -> Vec<BoundarySegment<T>> {
    let (lam, eps) = (p.lambda, p.eps);
    let two = T::two();
    let mirrored = layout.is_weak();
    let tangent = |c: T| (two * c, eps * eps - c * c);
    let plus = tangent(lam + eps);
    let minus = tangent(lam - eps);
    let seg = |(slope, intercept): (T, T), a_lo: T, a_hi: T, below: u8, above: u8| {
        BoundarySegment {
            slope,
            intercept,
            a_lo,
            a_hi,
            below,
            above,
            mirrored,
        }
    };
    let mut out = match layout {
        Layout::WeakSmall => vec![
            seg((T::zero(), lam * lam), T::zero(), lam, 2, 1),
            seg((lam, T::zero()), T::zero(), lam, 3, 2),
        ],
        Layout::WeakMedium => vec![
            seg(plus, lam, lam + eps, 1, 2),
            seg(minus, lam - eps, lam, 4, 2),
            seg((lam, T::zero()), T::zero(), lam, 3, 4),
        ],
        Layout::WeakLarge => vec![
            seg(plus, lam, lam + eps, 1, 2),
            seg(minus, lam - eps, lam, 3, 2),
            seg(minus, lam - two * eps, lam - eps, 3, 4),
            seg((two * eps, T::zero()), T::zero(), eps, 4, 5),
        ],
        Layout::OneJump => vec![
            seg(plus, lam + eps, lam + two * eps, 2, 1),
            seg(plus, lam, lam + eps, 2, 3),
            seg(minus, lam - eps, lam, 4, 3),
            seg(minus, lam - two * eps, lam - eps, 4, 5),
        ],
    };
    out.retain(|s| s.a_hi > s.a_lo);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x1: f64, x2: f64) -> StripPoint<f64> {
        StripPoint::new(x1, x2)
    }

    #[test]
    fn regime_examples() {
        assert_eq!(regime(&Params::new(0.5, 1.0).unwrap()).unwrap(), Regime::Small);
        assert_eq!(regime(&Params::new(1.5, 1.0).unwrap()).unwrap(), Regime::Medium);
        assert_eq!(regime(&Params::new(3.0, 1.0).unwrap()).unwrap(), Regime::Large);
        // closed on the right
        assert_eq!(regime(&Params::new(1.0, 1.0).unwrap()).unwrap(), Regime::Small);
        assert_eq!(regime(&Params::new(2.0, 1.0).unwrap()).unwrap(), Regime::Medium);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(Params::new(1.0, 0.0).is_err());
        assert!(Params::new(-1.0, 1.0).is_err());
        assert!(Params::new(f64::NAN, 1.0).is_err());
        assert!(Params::signed(-1.0, 1.0).is_ok());
        let p = Params::signed(-1.0, 1.0).unwrap();
        assert!(regime(&p).is_err());
    }

    #[test]
    fn strip_membership() {
        let p = Params::new(3.0, 1.0).unwrap();
        assert!(in_strip(&pt(2.0, 4.5), &p, 0.0));
        assert!(!in_strip(&pt(0.0, 1.2), &p, 0.0));
        assert!(in_strip(&pt(1.0, 1.0), &p, 0.0));
        assert!(in_strip(&pt(0.0, 1.0 + 1e-13), &p, 1e-12));
    }

    #[test]
    fn classify_weak_examples() {
        let p = Params::new(3.0, 1.0).unwrap();
        let r = classify_weak(&pt(3.0, 9.0), &p).unwrap();
        assert_eq!((r.index, r.side), (1, Side::Plus));
        assert_eq!(classify_weak(&pt(2.0, 4.5), &p).unwrap().to_string(), "Omega3+");
        assert_eq!(classify_weak(&pt(0.0, 0.5), &p).unwrap().to_string(), "Omega5");
        assert_eq!(classify_weak(&pt(1.2, 2.0), &p).unwrap().to_string(), "Omega4+");
        assert_eq!(classify_weak(&pt(-1.2, 2.0), &p).unwrap().to_string(), "Omega4-");
        assert_eq!(classify_weak(&pt(3.0, 9.6), &p).unwrap().to_string(), "Omega2+");
    }

    #[test]
    fn classify_rejects_outside() {
        let p = Params::new(3.0, 1.0).unwrap();
        assert!(matches!(
            classify_weak(&pt(0.0, 1.2), &p),
            Err(Error::OutsideStrip { .. })
        ));
        assert!(classify_one_jump(&pt(0.0, -0.1), &p).is_err());
        assert!(matches!(
            classify_weak(&pt(f64::NAN, 1.0), &p),
            Err(Error::NotFinite)
        ));
    }

    #[test]
    fn classify_one_jump_examples() {
        let p = Params::new(3.0, 1.0).unwrap();
        assert_eq!(classify_one_jump(&pt(3.2, 10.4), &p).unwrap().index, 2);
        assert_eq!(classify_one_jump(&pt(2.5, 6.8), &p).unwrap().index, 4);
        assert_eq!(classify_one_jump(&pt(0.0, 0.75), &p).unwrap().index, 5);
        assert_eq!(classify_one_jump(&pt(4.5, 21.0), &p).unwrap().index, 1);
        assert_eq!(classify_one_jump(&pt(3.0, 9.5), &p).unwrap().index, 3);
    }

    #[test]
    fn small_and_medium_layouts() {
        let p = Params::new(0.5, 1.0).unwrap();
        assert_eq!(classify_weak(&pt(0.0, 0.3), &p).unwrap().to_string(), "Omega1");
        assert_eq!(classify_weak(&pt(0.3, 0.2), &p).unwrap().to_string(), "Omega2");
        assert_eq!(classify_weak(&pt(-0.3, 0.1), &p).unwrap().to_string(), "Omega3-");
        let p = Params::new(1.5, 1.0).unwrap();
        assert_eq!(classify_weak(&pt(0.0, 1.0), &p).unwrap().to_string(), "Omega4");
        assert_eq!(classify_weak(&pt(1.0, 1.2), &p).unwrap().to_string(), "Omega3+");
        assert_eq!(classify_weak(&pt(2.0, 4.0), &p).unwrap().to_string(), "Omega1+");
    }

    #[test]
    fn boundary_pieces_lie_in_strip() {
        for (lam, layout) in [
            (0.5, Layout::WeakSmall),
            (1.5, Layout::WeakMedium),
            (3.0, Layout::WeakLarge),
            (3.0, Layout::OneJump),
            (-2.0, Layout::OneJump),
        ] {
            let p = Params::signed(lam, 1.0).unwrap();
            for b in internal_boundaries(&p, layout) {
                for k in 0..=10 {
                    let x = b.point(k as f64 / 10.0, false);
                    assert!(in_strip(&x, &p, 1e-12), "{layout:?} {b:?} {x:?}");
                }
            }
        }
    }
}
