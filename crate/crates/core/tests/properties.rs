use jn_bellman::analysis::{bmo_norm, moments, superlevel_measure, Interval, LevelMode};
use jn_bellman::closed_form::{eval_b, eval_bmax, eval_bmin};
use jn_bellman::extremizer::build_extremizer;
use jn_bellman::geometry::{classify_weak, Params, StripPoint};
use proptest::prelude::*;

/// `(λ, ε, x)` with `x` anywhere in the strip, covering all three regimes.
fn strip_case() -> impl Strategy<Value = (f64, f64, StripPoint<f64>)> {
    (0.05f64..4.0, 0.2f64..2.0, -1.0f64..1.0, 0.0f64..=1.0).prop_map(|(r, eps, s, y)| {
        let lam = r * eps;
        let x1 = s * (lam + 3.0 * eps);
        (lam, eps, StripPoint::from_height(x1, y, eps))
    })
}

proptest! {
    #[test]
    fn values_lie_in_unit_interval_and_are_ordered((lam, eps, x) in strip_case()) {
        let p = Params::new(lam, eps).unwrap();
        let b = eval_b(&x, &p).unwrap().value;
        prop_assert!((0.0..=1.0 + 1e-12).contains(&b));
        let hi = eval_bmax(&x, &p).unwrap().value;
        let lo = eval_bmin(&x, &p).unwrap().value;
        prop_assert!(lo <= hi + 1e-12 && hi <= b + 1e-12, "{lo} {hi} {b}");
    }

    #[test]
    fn b_is_even_in_x1((lam, eps, x) in strip_case()) {
        let p = Params::new(lam, eps).unwrap();
        let a = eval_b(&x, &p).unwrap();
        let m = eval_b(&x.mirrored(), &p).unwrap();
        prop_assert!((a.value - m.value).abs() <= 1e-12);
        prop_assert_eq!(a.region.index, m.region.index);
    }

    #[test]
    fn single_precision_tracks_double((lam, eps, x) in strip_case()) {
        let p = Params::new(lam, eps).unwrap();
        let b = eval_b(&x, &p).unwrap().value;
        let p32 = Params::new(lam as f32, eps as f32).unwrap();
        let x32 = StripPoint::new(x.x1 as f32, x.x2 as f32);
        // rounding x into f32 can leave the strip by a few ulps
        if let Ok(v) = eval_b(&x32, &p32) {
            prop_assert!((v.value as f64 - b).abs() < 2e-3, "{} vs {b}", v.value);
        }
    }

    #[test]
    fn classification_is_total((lam, eps, x) in strip_case()) {
        let p = Params::new(lam, eps).unwrap();
        let r = classify_weak(&x, &p).unwrap();
        prop_assert!(r.index >= 1 && r.index <= r.layout.region_count());
    }

    #[test]
    fn extremizer_moments_add_over_halves(
        (s, y) in (-1.0f64..1.0, 0.0f64..=1.0),
        cut in 0.05f64..0.95,
    ) {
        let p = Params::new(3.0, 1.0).unwrap();
        let x = StripPoint::from_height(6.0 * s, y, 1.0);
        let phi = build_extremizer(&x, &p).unwrap();
        let whole = moments(&phi, &Interval::unit());
        let left = moments(&phi, &Interval::new(0.0, cut).unwrap());
        let right = moments(&phi, &Interval::new(cut, 1.0).unwrap());
        let sum = (cut * left.0 + (1.0 - cut) * right.0, cut * left.1 + (1.0 - cut) * right.1);
        prop_assert!((whole.0 - sum.0).abs() < 1e-9 * (1.0 + whole.0.abs()));
        prop_assert!((whole.1 - sum.1).abs() < 1e-9 * (1.0 + whole.1.abs()));
        prop_assert_eq!(superlevel_measure(&phi, 0.0, LevelMode::Absolute), 1.0);
    }

    #[test]
    fn finer_norm_search_never_decreases(s in -1.0f64..1.0, y in 0.0f64..=1.0) {
        let p = Params::new(3.0, 1.0).unwrap();
        let x = StripPoint::from_height(6.0 * s, y, 1.0);
        let phi = build_extremizer(&x, &p).unwrap();
        prop_assert!(bmo_norm(&phi, 32) <= bmo_norm(&phi, 64) + 1e-12);
    }
}
