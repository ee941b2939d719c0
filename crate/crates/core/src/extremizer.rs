//! Optimal test functions for the large regime `λ > 2ε`.
//!
//! Every extremizer is a monotone function on `(0, 1)` built from constant
//! pieces and pieces of the form `base + scale·log(pivot/t)` (or with `1 − t`
//! in place of `t`). Both kinds integrate in closed form, so the moments of
//! an extremizer can be checked exactly against the point it was built for.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{classify_weak, ensure_in_strip, regime, Params, Regime, Region, StripPoint};
use crate::scalar::Scalar;

/// Which variable the logarithm of a [`SegmentForm::Log`] piece is taken in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogArg {
    /// `log(pivot / t)`
    T,
    /// `log(pivot / (1 − t))`
    OneMinusT,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentForm<T> {
    Constant { value: T },
    Log { base: T, scale: T, pivot: T, arg: LogArg },
}

/// A piece of a test function on `[t_lo, t_hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment<T> {
    pub t_lo: T,
    pub t_hi: T,
    pub form: SegmentForm<T>,
}

/// `t·log(c/t) + t`, an antiderivative of `log(c/t)`.
fn log_primitive<T: Scalar>(t: T, c: T) -> T {
    if t <= T::zero() {
        return T::zero();
    }
    t * (c / t).ln() + t
}

/// `t·log²(c/t) + 2t·log(c/t) + 2t`, an antiderivative of `log²(c/t)`.
fn log_sq_primitive<T: Scalar>(t: T, c: T) -> T {
    if t <= T::zero() {
        return T::zero();
    }
    let l = (c / t).ln();
    t * l * l + T::two() * t * l + T::two() * t
}

impl<T: Scalar> Segment<T> {
    pub fn constant(t_lo: T, t_hi: T, value: T) -> Self {
        Segment {
            t_lo,
            t_hi,
            form: SegmentForm::Constant { value },
        }
    }

    pub fn log(t_lo: T, t_hi: T, base: T, scale: T, pivot: T, arg: LogArg) -> Self {
        Segment {
            t_lo,
            t_hi,
            form: SegmentForm::Log {
                base,
                scale,
                pivot,
                arg,
            },
        }
    }

    pub fn len(&self) -> T {
        self.t_hi - self.t_lo
    }

    pub fn is_empty(&self) -> bool {
        self.t_hi <= self.t_lo
    }

    pub fn value_at(&self, t: T) -> T {
        match self.form {
            SegmentForm::Constant { value } => value,
            SegmentForm::Log {
                base,
                scale,
                pivot,
                arg,
            } => {
                let w = match arg {
                    LogArg::T => t,
                    LogArg::OneMinusT => T::one() - t,
                };
                base + scale * (pivot / w).ln()
            }
        }
    }

    /// `(∫φ, ∫φ²)` over `[alpha, beta] ∩ [t_lo, t_hi]`.
    pub fn integrals(&self, alpha: T, beta: T) -> (T, T) {
        let lo = alpha.max(self.t_lo);
        let hi = beta.min(self.t_hi);
        if hi <= lo {
            return (T::zero(), T::zero());
        }
        match self.form {
            SegmentForm::Constant { value } => {
                let len = hi - lo;
                (value * len, value * value * len)
            }
            SegmentForm::Log {
                base,
                scale,
                pivot,
                arg,
            } => {
                // map to w with log(pivot/w), w increasing from w_lo to w_hi
                let (w_lo, w_hi) = match arg {
                    LogArg::T => (lo, hi),
                    LogArg::OneMinusT => (T::one() - hi, T::one() - lo),
                };
                let len = w_hi - w_lo;
                let i1 = log_primitive(w_hi, pivot) - log_primitive(w_lo, pivot);
                let i2 = log_sq_primitive(w_hi, pivot) - log_sq_primitive(w_lo, pivot);
                (
                    base * len + scale * i1,
                    base * base * len + T::two() * base * scale * i1 + scale * scale * i2,
                )
            }
        }
    }

    /// Measure of `{t ∈ [t_lo, t_hi) : φ(t) ≥ level}`.
    pub fn measure_at_least(&self, level: T) -> T {
        match self.form {
            SegmentForm::Constant { value } => {
                if value >= level {
                    self.len()
                } else {
                    T::zero()
                }
            }
            SegmentForm::Log {
                base,
                scale,
                pivot,
                arg,
            } => {
                if scale == T::zero() {
                    return if base >= level { self.len() } else { T::zero() };
                }
                // base + scale·log(pivot/w) = level  ⇔  w = pivot·exp(−(level − base)/scale)
                let w_star = pivot * (-(level - base) / scale).exp();
                let t_star = match arg {
                    LogArg::T => w_star,
                    LogArg::OneMinusT => T::one() - w_star,
                };
                // dφ/dt has the sign of −scale for log(pivot/t), of +scale for log(pivot/(1−t))
                let increasing = match arg {
                    LogArg::T => scale < T::zero(),
                    LogArg::OneMinusT => scale > T::zero(),
                };
                let len = if increasing {
                    self.t_hi - t_star.max(self.t_lo)
                } else {
                    t_star.min(self.t_hi) - self.t_lo
                };
                len.max(T::zero()).min(self.len())
            }
        }
    }

    /// Measure of `{t : φ(t) ≤ level}`.
    pub fn measure_at_most(&self, level: T) -> T {
        self.negated().measure_at_least(-level)
    }

    pub fn negated(&self) -> Self {
        let form = match self.form {
            SegmentForm::Constant { value } => SegmentForm::Constant { value: -value },
            SegmentForm::Log {
                base,
                scale,
                pivot,
                arg,
            } => SegmentForm::Log {
                base: -base,
                scale: -scale,
                pivot,
                arg,
            },
        };
        Segment { form, ..*self }
    }
}

/// A test function on `(0, 1)` given by contiguous segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseFunction<T> {
    pub params: Params<T>,
    pub origin: StripPoint<T>,
    pub region: Region,
    segments: Vec<Segment<T>>,
}

impl<T: Scalar> PiecewiseFunction<T> {
    /// Checks that the nonempty segments tile `[0, 1)` in order. Empty
    /// segments are dropped.
    pub fn new(
        segments: Vec<Segment<T>>,
        params: Params<T>,
        origin: StripPoint<T>,
        region: Region,
    ) -> Result<Self> {
        let segments: Vec<_> = segments.into_iter().filter(|s| !s.is_empty()).collect();
        let bad = || Error::InvalidFunction("segments must tile [0, 1) contiguously".into());
        let first = segments.first().ok_or_else(bad)?;
        let last = segments.last().ok_or_else(bad)?;
        if first.t_lo != T::zero() || last.t_hi != T::one() {
            return Err(bad());
        }
        if segments.windows(2).any(|w| w[0].t_hi != w[1].t_lo) {
            return Err(bad());
        }
        Ok(PiecewiseFunction {
            params,
            origin,
            region,
            segments,
        })
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    /// Interior breakpoints, in increasing order.
    pub fn breakpoints(&self) -> impl Iterator<Item = T> + '_ {
        self.segments.iter().skip(1).map(|s| s.t_lo)
    }

    /// Value with segments closed on the left: at a breakpoint the value of
    /// the segment starting there.
    pub fn value_right(&self, t: T) -> T {
        let idx = self
            .segments
            .partition_point(|s| s.t_hi <= t)
            .min(self.segments.len() - 1);
        self.segments[idx].value_at(t)
    }

    pub fn negated(&self) -> Self {
        PiecewiseFunction {
            params: self.params,
            origin: self.origin.mirrored(),
            region: self.region,
            segments: self.segments.iter().map(Segment::negated).collect(),
        }
    }

    /// `φ(t+) − φ(t−)` at the breakpoint between segments `k` and `k + 1`.
    pub fn jump_at(&self, k: usize) -> Option<T> {
        let (l, r) = (self.segments.get(k)?, self.segments.get(k + 1)?);
        Some(r.value_at(r.t_lo) - l.value_at(l.t_hi))
    }

    pub fn to_json(&self) -> Result<String>
    where
        T: Serialize,
    {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `n` samples `(t, φ(t))` at the cell midpoints `(k + ½)/n`.
    pub fn write_samples_csv<W: Write>(&self, out: W, n: usize) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["t", "phi"])?;
        let n_t = T::from_usize(n.max(1)).expect("sample count");
        for k in 0..n.max(1) {
            let t = (T::from_usize(k).expect("index") + T::half()) / n_t;
            w.write_record([fmt_sig(t, 12), fmt_sig(self.value_right(t), 12)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Formats with `digits` significant digits, fixed notation when reasonable.
pub fn fmt_sig<T: Scalar>(v: T, digits: usize) -> String {
    let v = v.to_f64_lossy();
    if v == 0.0 || !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else { format!("{}", v) };
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, v);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{:.*e}", digits - 1, v)
    }
}

/// Value of the extremizer at `t`, refusing breakpoints where the one-sided
/// values may differ.
pub fn sample<T: Scalar>(phi: &PiecewiseFunction<T>, t: T) -> Result<T> {
    if !(t > T::zero() && t < T::one()) || phi.breakpoints().any(|b| b == t) {
        return Err(Error::AtBreakpoint { t: t.to_f64_lossy() });
    }
    Ok(phi.value_right(t))
}

/// Builds a function `φ` with `(⟨φ⟩, ⟨φ²⟩) = x`, BMO₂ norm at most `ε` and
/// `|{|φ| ≥ λ}| = B(x)`. Large regime only.
pub fn build_extremizer<T: Scalar>(
    x: &StripPoint<T>,
    p: &Params<T>,
) -> Result<PiecewiseFunction<T>> {
    if regime(p)? != Regime::Large {
        return Err(Error::WrongRegime {
            ratio: (p.lambda() / p.eps()).to_f64_lossy(),
        });
    }
    ensure_in_strip(x, p)?;
    let region = classify_weak(x, p)?;
    if x.x1 < T::zero() {
        let mut phi = build_nonnegative(&x.mirrored(), p, region.index)?.negated();
        phi.region = region;
        return Ok(phi);
    }
    let mut phi = build_nonnegative(x, p, region.index)?;
    phi.region = region;
    Ok(phi)
}

/// Construction for `x₁ ≥ 0`. The region field is filled in by the caller.
fn build_nonnegative<T: Scalar>(
    x: &StripPoint<T>,
    p: &Params<T>,
    index: u8,
) -> Result<PiecewiseFunction<T>> {
    let (x1, x2) = (x.x1, x.x2);
    let (lam, eps) = (p.lambda(), p.eps());
    let (zero, one, two, half) = (T::zero(), T::one(), T::two(), T::half());
    let eps2 = eps * eps;
    let var = x.variance().max(zero);
    let c = Segment::constant;
    let region = Region {
        index,
        side: crate::geometry::Side::Plus,
        layout: crate::geometry::Layout::WeakLarge,
    };

    // lower boundary (including (λ, λ²)): only the constant function
    if var <= zero {
        return PiecewiseFunction::new(vec![c(zero, one, x1)], *p, *x, region);
    }

    let segments = match index {
        1 => {
            // two steps u∓ on the tangent through x, touching the upper parabola right of x
            let w = (eps2 - var).max(zero).sqrt();
            let u_minus = x1 - eps + w;
            let u_plus = x1 + eps + w;
            let split = ((u_plus - x1) / (two * eps)).min(one);
            vec![c(zero, split, u_minus), c(split, one, u_plus)]
        }
        2 => {
            let d = x2 + lam * lam - two * lam * x1;
            let k = T::lit(8.0) * eps2;
            let a = ((d - two * eps * (x1 - lam)) / k).max(zero);
            let b = (one - (d + two * eps * (x1 - lam)) / k).min(one).max(a);
            vec![
                c(zero, a, lam - two * eps),
                c(a, b, lam),
                c(b, one, lam + two * eps),
            ]
        }
        3 => {
            // steps λ and u on the line through x and (λ, λ²)
            let a = var / (x2 + lam * lam - two * lam * x1);
            let u = (lam * x1 - x2) / (lam - x1);
            vec![c(zero, a, lam), c(a, one, u)]
        }
        4 => {
            let s = (one - var / eps2).max(zero).sqrt();
            let b = one - s;
            let a = half * T::e() * (one - s) * ((x1 - lam) / eps + s).exp();
            let a2 = (two * a).min(b);
            let tail = lam - two * eps + eps * (a2 / b).ln();
            vec![
                c(zero, a, lam),
                c(a, a2, lam - two * eps),
                Segment::log(a2, b, lam - two * eps, eps, a2, LogArg::T),
                c(b, one, tail),
            ]
        }
        5 => {
            let k = T::lit(4.0) * eps2;
            let b_minus = ((x2 - two * eps * x1) / k).max(zero);
            let b_plus = ((x2 + two * eps * x1) / k).max(zero);
            let shrink = half * (two - lam / eps).exp();
            let a_minus = b_minus * shrink;
            let a_plus = b_plus * shrink;
            let step = lam - two * eps;
            vec![
                c(zero, a_minus, -lam),
                c(a_minus, two * a_minus, -step),
                Segment::log(two * a_minus, b_minus, -step, -eps, two * a_minus, LogArg::T),
                c(b_minus, one - b_plus, zero),
                Segment::log(one - b_plus, one - two * a_plus, step, eps, two * a_plus, LogArg::OneMinusT),
                c(one - two * a_plus, one - a_plus, step),
                c(one - a_plus, one, lam),
            ]
        }
        _ => unreachable!("large regime has five regions"),
    };
    PiecewiseFunction::new(segments, *p, *x, region)
}
