//! Moments, BMO₂ norms, superlevel sets and delivery curves of piecewise
//! test functions.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::extremizer::{fmt_sig, PiecewiseFunction};
use crate::geometry::StripPoint;
use crate::scalar::Scalar;

/// A subinterval `[alpha, beta] ⊂ [0, 1]` of positive length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval<T> {
    alpha: T,
    beta: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(alpha: T, beta: T) -> Result<Self> {
        if !(alpha >= T::zero() && alpha < beta && beta <= T::one()) {
            return Err(Error::InvalidInterval {
                alpha: alpha.to_f64_lossy(),
                beta: beta.to_f64_lossy(),
            });
        }
        Ok(Interval { alpha, beta })
    }

    pub fn unit() -> Self {
        Interval {
            alpha: T::zero(),
            beta: T::one(),
        }
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn len(&self) -> T {
        self.beta - self.alpha
    }
}

/// Which superlevel set to measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LevelMode {
    /// `{|φ| ≥ λ}`
    Absolute,
    /// `{φ ≥ λ}`
    Signed,
}

/// `(∫_α^β φ, ∫_α^β φ²)`, summed exactly over segments.
fn integrals<T: Scalar>(phi: &PiecewiseFunction<T>, alpha: T, beta: T) -> (T, T) {
    phi.segments()
        .iter()
        .filter(|s| s.t_hi > alpha && s.t_lo < beta)
        .fold((T::zero(), T::zero()), |(m1, m2), s| {
            let (i1, i2) = s.integrals(alpha, beta);
            (m1 + i1, m2 + i2)
        })
}

/// Bellman point `(⟨φ⟩_I, ⟨φ²⟩_I)`.
pub fn moments<T: Scalar>(phi: &PiecewiseFunction<T>, interval: &Interval<T>) -> (T, T) {
    let (i1, i2) = integrals(phi, interval.alpha, interval.beta);
    (i1 / interval.len(), i2 / interval.len())
}

/// Variance `⟨φ²⟩_I − ⟨φ⟩_I²` over `[alpha, beta]`, zero for empty intervals.
fn oscillation_sq<T: Scalar>(phi: &PiecewiseFunction<T>, alpha: T, beta: T) -> T {
    if beta <= alpha {
        return T::zero();
    }
    let len = beta - alpha;
    let (i1, i2) = integrals(phi, alpha, beta);
    let m1 = i1 / len;
    (i2 / len - m1 * m1).max(T::zero())
}

/// Result of a BMO norm search: the estimate and the interval attaining it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormEstimate<T> {
    pub norm: T,
    pub alpha: T,
    pub beta: T,
}

/// Lower estimate of `sup_I (⟨φ²⟩_I − ⟨φ⟩_I²)^{1/2}`.
///
/// Searches dyadic endpoint grids of sizes `2, 4, …, 2^k ≤ resolution`,
/// each augmented with the breakpoints of `φ`, and refines the best pair of
/// every level by alternating golden-section searches inside the
/// neighbouring cells. The result is the best over all levels, so it never
/// decreases as `resolution` grows.
pub fn bmo_norm<T: Scalar>(phi: &PiecewiseFunction<T>, resolution: usize) -> T {
    bmo_norm_search(phi, resolution).norm
}

pub fn bmo_norm_search<T: Scalar>(phi: &PiecewiseFunction<T>, resolution: usize) -> NormEstimate<T> {
    let mut best = NormEstimate {
        norm: T::zero(),
        alpha: T::zero(),
        beta: T::one(),
    };
    let mut best_sq = oscillation_sq(phi, T::zero(), T::one());
    best.norm = best_sq.sqrt();
    let mut n = 2usize;
    while n <= resolution.max(2) {
        let (a, b, sq) = search_level(phi, n);
        if sq > best_sq {
            best_sq = sq;
            best = NormEstimate {
                norm: sq.sqrt(),
                alpha: a,
                beta: b,
            };
        }
        n *= 2;
    }
    best
}

fn search_level<T: Scalar>(phi: &PiecewiseFunction<T>, n: usize) -> (T, T, T) {
    let n_t = T::from_usize(n).expect("grid size");
    let mut grid: Vec<T> = (0..=n)
        .map(|k| T::from_usize(k).expect("grid index") / n_t)
        .chain(phi.breakpoints())
        .collect();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    grid.dedup();

    // prefix integrals for the exhaustive pass
    let mut f1 = Vec::with_capacity(grid.len());
    let mut f2 = Vec::with_capacity(grid.len());
    let (mut c1, mut c2) = (T::zero(), T::zero());
    let mut prev = T::zero();
    for &g in &grid {
        let (i1, i2) = integrals(phi, prev, g);
        c1 = c1 + i1;
        c2 = c2 + i2;
        f1.push(c1);
        f2.push(c2);
        prev = g;
    }

    let (mut bi, mut bj, mut best) = (0, grid.len() - 1, T::neg_infinity());
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            let len = grid[j] - grid[i];
            let m1 = (f1[j] - f1[i]) / len;
            let sq = (f2[j] - f2[i]) / len - m1 * m1;
            if sq > best {
                best = sq;
                bi = i;
                bj = j;
            }
        }
    }

    let lo_of = |k: usize| grid[k.saturating_sub(1)];
    let hi_of = |k: usize| grid[(k + 1).min(grid.len() - 1)];
    let (mut a, mut b) = (grid[bi], grid[bj]);
    let mut value = oscillation_sq(phi, a, b);
    for _ in 0..4 {
        let na = golden_max(|t| oscillation_sq(phi, t, b), lo_of(bi), hi_of(bi).min(b));
        let va = oscillation_sq(phi, na, b);
        if va > value {
            a = na;
            value = va;
        }
        let nb = golden_max(|t| oscillation_sq(phi, a, t), lo_of(bj).max(a), hi_of(bj));
        let vb = oscillation_sq(phi, a, nb);
        if vb > value {
            b = nb;
            value = vb;
        }
    }
    (a, b, value)
}

/// Golden-section search for a maximizer of `f` on `[lo, hi]`.
fn golden_max<T: Scalar>(f: impl Fn(T) -> T, mut lo: T, mut hi: T) -> T {
    let inv_phi = T::lit(0.618_033_988_749_894_8);
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}

/// Exact measure of `{|φ| ≥ λ}` or `{φ ≥ λ}` on `(0, 1)`.
pub fn superlevel_measure<T: Scalar>(phi: &PiecewiseFunction<T>, lam: T, mode: LevelMode) -> T {
    phi.segments()
        .iter()
        .map(|s| match mode {
            LevelMode::Signed => s.measure_at_least(lam),
            LevelMode::Absolute if lam <= T::zero() => s.len(),
            LevelMode::Absolute => s.measure_at_least(lam) + s.measure_at_most(-lam),
        })
        .fold(T::zero(), |acc, m| acc + m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurveSample<T> {
    pub t: T,
    pub x1: T,
    pub x2: T,
    /// Distance outside the closed strip, measured in `x₂`.
    pub violation: T,
}

/// The path `t ↦ (⟨φ⟩_{[0,t]}, ⟨φ²⟩_{[0,t]})`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BellmanPointCurve<T> {
    pub samples: Vec<CurveSample<T>>,
    pub max_violation: T,
}

impl<T: Scalar> BellmanPointCurve<T> {
    pub fn end(&self) -> Option<StripPoint<T>> {
        self.samples.last().map(|s| StripPoint::new(s.x1, s.x2))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["t", "x1", "x2", "violation"])?;
        for s in &self.samples {
            w.write_record([
                fmt_sig(s.t, 12),
                fmt_sig(s.x1, 12),
                fmt_sig(s.x2, 12),
                fmt_sig(s.violation, 12),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Strip violation of a Bellman point: how far `x₂ − x₁²` falls outside `[0, ε²]`.
pub fn strip_violation<T: Scalar>(x1: T, x2: T, eps_sq: T) -> T {
    let v = x2 - x1 * x1;
    (-v).max(v - eps_sq).max(T::zero())
}

/// Samples the delivery curve at `n` equally spaced times in `[0, 1]`. The
/// value at `t = 0` is the limit `(φ(0+), φ(0+)²)`.
pub fn delivery_curve<T: Scalar>(phi: &PiecewiseFunction<T>, n: usize) -> BellmanPointCurve<T> {
    let n = n.max(2);
    let eps_sq = phi.params.eps_sq();
    let last = T::from_usize(n - 1).expect("sample count");
    let mut samples = Vec::with_capacity(n);
    let mut max_violation = T::zero();
    for k in 0..n {
        let t = T::from_usize(k).expect("index") / last;
        let (x1, x2) = if k == 0 {
            let v = phi.value_right(T::zero());
            (v, v * v)
        } else {
            let (i1, i2) = integrals(phi, T::zero(), t);
            (i1 / t, i2 / t)
        };
        let violation = strip_violation(x1, x2, eps_sq);
        max_violation = max_violation.max(violation);
        samples.push(CurveSample {
            t,
            x1,
            x2,
            violation,
        });
    }
    BellmanPointCurve {
        samples,
        max_violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremizer::{build_extremizer, Segment};
    use crate::geometry::{Layout, Params, Region, Side};
    use approx::assert_abs_diff_eq;

    fn params() -> Params<f64> {
        Params::new(3.0, 1.0).unwrap()
    }

    fn step(values: &[(f64, f64, f64)]) -> PiecewiseFunction<f64> {
        let segs = values
            .iter()
            .map(|&(lo, hi, v)| Segment::constant(lo, hi, v))
            .collect();
        let region = Region {
            index: 1,
            side: Side::Center,
            layout: Layout::WeakLarge,
        };
        PiecewiseFunction::new(segs, params(), StripPoint::new(0.0, 0.0), region).unwrap()
    }

    fn build(x1: f64, x2: f64) -> PiecewiseFunction<f64> {
        build_extremizer(&StripPoint::new(x1, x2), &params()).unwrap()
    }

    #[test]
    fn interval_validation() {
        assert!(Interval::new(0.5, 0.5).is_err());
        assert!(Interval::new(-0.1, 0.5).is_err());
        assert!(Interval::new(0.2, 1.1).is_err());
        assert!(Interval::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn moments_of_step_and_constant() {
        let (m1, m2) = moments(&build(2.0, 4.5), &Interval::unit());
        assert_abs_diff_eq!(m1, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m2, 4.5, epsilon = 1e-14);
        let c = step(&[(0.0, 1.0, 1.7)]);
        let (m1, m2) = moments(&c, &Interval::new(0.3, 0.4).unwrap());
        assert_abs_diff_eq!(m1, 1.7, epsilon = 1e-14);
        assert_abs_diff_eq!(m2, 1.7 * 1.7, epsilon = 1e-13);
    }

    #[test]
    fn moments_of_omega5() {
        let (m1, m2) = moments(&build(0.0, 1.0), &Interval::unit());
        assert_abs_diff_eq!(m1, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m2, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn bmo_norm_examples() {
        let two_step = step(&[(0.0, 0.5, 0.0), (0.5, 1.0, 2.0)]);
        assert_abs_diff_eq!(bmo_norm(&two_step, 512), 1.0, epsilon = 1e-9);
        assert_eq!(bmo_norm(&step(&[(0.0, 1.0, 4.0)]), 512), 0.0);
        assert_abs_diff_eq!(bmo_norm(&build(2.0, 4.5), 512), 0.75, epsilon = 1e-6);
    }

    #[test]
    fn bmo_norm_monotone_in_resolution() {
        let phi = build(1.2, 2.0);
        let mut prev = 0.0;
        for r in [2, 3, 4, 8, 9, 64, 100, 512] {
            let v = bmo_norm(&phi, r);
            assert!(v >= prev, "resolution {r}: {v} < {prev}");
            prev = v;
        }
    }

    #[test]
    fn superlevel_examples() {
        assert_abs_diff_eq!(
            superlevel_measure(&build(3.0, 9.6), 3.0, LevelMode::Signed),
            0.925,
            epsilon = 1e-14
        );
        assert_eq!(superlevel_measure(&step(&[(0.0, 1.0, 3.0)]), 3.0, LevelMode::Signed), 1.0);
        assert_abs_diff_eq!(
            superlevel_measure(&build(0.0, 1.0), 3.0, LevelMode::Absolute),
            0.25 / std::f64::consts::E,
            epsilon = 1e-15
        );
        assert_eq!(superlevel_measure(&build(1.2, 2.0), 0.0, LevelMode::Absolute), 1.0);
    }

    #[test]
    fn log_piece_crossing() {
        // φ = 1 + log(0.5/t) on [0.1, 0.9): φ ≥ 1.5 iff t ≤ 0.5·e^{-1/2}
        let seg = Segment::log(0.0, 1.0, 1.0, 1.0, 0.5, crate::extremizer::LogArg::T);
        let want = 0.5 * (-0.5f64).exp();
        assert_abs_diff_eq!(seg.measure_at_least(1.5), want, epsilon = 1e-15);
        assert_abs_diff_eq!(seg.measure_at_most(1.5), 1.0 - want, epsilon = 1e-15);
    }

    #[test]
    fn delivery_curve_examples() {
        let c = delivery_curve(&step(&[(0.0, 1.0, 2.0)]), 5);
        assert!(c.samples.iter().all(|s| s.x1 == 2.0 && s.x2 == 4.0));
        let c = delivery_curve(&build(1.2, 2.0), 401);
        let first = c.samples[0];
        assert_eq!((first.x1, first.x2), (3.0, 9.0));
        let end = c.end().unwrap();
        assert_abs_diff_eq!(end.x1, 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(end.x2, 2.0, epsilon = 1e-12);
        assert!(c.max_violation <= 1e-9);
    }

    #[test]
    fn curve_csv_has_header() {
        let c = delivery_curve(&step(&[(0.0, 1.0, 2.0)]), 2);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x1,x2,violation\n0,2,4,0\n1,2,4,0\n");
    }
}
