//! Cross-checks against quantities computed here by other means: plane
//! geometry, brute-force sampling and quadrature.

use jn_bellman::analysis::{bmo_norm, moments, superlevel_measure, Interval, LevelMode};
use jn_bellman::closed_form::eval_b;
use jn_bellman::extremizer::{build_extremizer, PiecewiseFunction, Segment};
use jn_bellman::geometry::{classify_weak, Params, StripPoint};
use jn_bellman::oracle::{chord_feasible, compare, init_field, solve, BoundarySet, ChordSet, SolveOptions, StripGrid};
use jn_bellman::verify::{self, random_strip_point};
use rand::Rng;

fn large() -> Params<f64> {
    Params::new(3.0, 1.0).unwrap()
}

/// Below the tangent at `λ − ε`, the optimal splitting is the chord from
/// `(λ, λ²)` through `x` to its second intersection `(w, w²)` with the lower
/// parabola, and `B` is the weight of `(λ, λ²)`.
#[test]
fn omega3_is_the_weight_of_the_jump_point() {
    let p = large();
    let lam = p.lambda();
    let mut rng = verify::rng(11);
    let mut seen = 0;
    while seen < 2000 {
        let x = random_strip_point(&mut rng, &p, 6.0);
        if classify_weak(&x, &p).unwrap().index != 3 || x.variance() <= 0.0 {
            continue;
        }
        seen += 1;
        let a = x.x1.abs();
        // the line through (λ, λ²) and (a, x₂) has slope λ + w
        let w = (x.x2 - lam * lam) / (a - lam) - lam;
        let weight = (a - w) / (lam - w);
        let b = eval_b(&x, &p).unwrap().value;
        assert!((b - weight).abs() < 1e-11, "x = {x:?}: {b} vs {weight}");
    }
}

#[test]
fn spec_point_in_omega3() {
    let p = large();
    let b = eval_b(&StripPoint::new(2.0, 4.5), &p).unwrap();
    // chord from (3, 9) through (2, 4.5) meets x₂ = x₁² again at w = 1.5
    assert!((b.value - 0.5 / 1.5).abs() < 1e-15);
    assert_eq!(b.region.to_string(), "Omega3+");
}

/// Midpoint-rule quadrature with `n` cells inside every segment.
fn quadrature(phi: &PiecewiseFunction<f64>, n: usize) -> (f64, f64) {
    let (mut m1, mut m2) = (0.0, 0.0);
    for s in phi.segments() {
        let h = (s.t_hi - s.t_lo) / n as f64;
        for k in 0..n {
            let v = s.value_at(s.t_lo + (k as f64 + 0.5) * h);
            m1 += v * h;
            m2 += v * v * h;
        }
    }
    (m1, m2)
}

#[test]
fn extremizer_moments_match_quadrature() {
    let p = large();
    let mut rng = verify::rng(12);
    let points = verify::points_per_region(&p, &mut rng, 20).unwrap();
    for x in &points {
        let phi = build_extremizer(x, &p).unwrap();
        let exact = moments(&phi, &Interval::unit());
        let approx = quadrature(&phi, 20_000);
        // log singularities at the ends of the log pieces limit the rule
        assert!((exact.0 - approx.0).abs() < 1e-4, "{x:?}: {exact:?} vs {approx:?}");
        assert!((exact.1 - approx.1).abs() < 1e-3, "{x:?}: {exact:?} vs {approx:?}");
    }
}

#[test]
fn superlevel_measure_matches_sampling() {
    let p = large();
    let mut rng = verify::rng(13);
    let points = verify::points_per_region(&p, &mut rng, 10).unwrap();
    let n = 200_000;
    for x in &points {
        let phi = build_extremizer(x, &p).unwrap();
        let count = (0..n)
            .filter(|k| phi.value_right((*k as f64 + 0.5) / n as f64).abs() >= p.lambda())
            .count();
        let sampled = count as f64 / n as f64;
        let exact = superlevel_measure(&phi, p.lambda(), LevelMode::Absolute);
        assert!((sampled - exact).abs() < 2e-5, "{x:?}: {sampled} vs {exact}");
    }
}

/// For a two-step function the BMO₂ norm is half the jump, whatever the split.
#[test]
fn two_step_norm_is_half_the_jump() {
    let p = large();
    for (split, lo, hi) in [(0.5, -1.0, 1.0), (0.2, 0.0, 3.0), (0.9, 2.0, 2.5)] {
        let phi = PiecewiseFunction::new(
            vec![Segment::constant(0.0, split, lo), Segment::constant(split, 1.0, hi)],
            p,
            StripPoint::new(0.0, 0.0),
            classify_weak(&StripPoint::new(0.0, 0.0), &p).unwrap(),
        )
        .unwrap();
        let norm = bmo_norm(&phi, 512);
        assert!((norm - 0.5 * (hi - lo)).abs() < 1e-6, "split {split}: {norm}");
    }
}

/// Dense sampling along the segment decides membership the slow way.
#[test]
fn chord_feasibility_matches_dense_sampling() {
    let p = Params::new(1.0, 1.0).unwrap();
    let mut rng = verify::rng(14);
    let mut disagreements = 0;
    for _ in 0..3000 {
        let a = random_strip_point(&mut rng, &p, 2.0);
        let b = random_strip_point(&mut rng, &p, 2.0);
        let brute = (0..=2000).all(|k| {
            let t = k as f64 / 2000.0;
            let x1 = a.x1 + t * (b.x1 - a.x1);
            let x2 = a.x2 + t * (b.x2 - a.x2);
            x2 - x1 * x1 <= p.eps_sq() + 1e-9
        });
        if brute != chord_feasible(&a, &b, &p) {
            // only chords grazing the upper parabola may disagree
            let q = (0..=20_000)
                .map(|k| {
                    let t = k as f64 / 20_000.0;
                    let x1 = a.x1 + t * (b.x1 - a.x1);
                    a.x2 + t * (b.x2 - a.x2) - x1 * x1 - p.eps_sq()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(q.abs() < 1e-6, "{a:?} {b:?} max excess {q}");
            disagreements += 1;
        }
    }
    assert!(disagreements < 5);
}

fn small_opts(directions: usize, radii: usize) -> SolveOptions {
    SolveOptions {
        chords: ChordSet { directions, radii },
        tol: 1e-7,
        max_sweeps: 2000,
    }
}

/// Doubling the grid and the chord set never lowers the field at shared
/// nodes and brings it closer to the closed form.
#[test]
fn oracle_refinement_is_monotone() {
    let p = large();
    let set = BoundarySet::AbsAtLeast(3.0);
    let coarse_grid = StripGrid::symmetric(41, 21, p).unwrap();
    let fine_grid = StripGrid::symmetric(81, 41, p).unwrap();
    let coarse = solve(&coarse_grid, set, &small_opts(16, 6));
    let fine = solve(&fine_grid, set, &small_opts(32, 12));
    assert!(coarse.converged && fine.converged);
    let mut worst_drop = 0.0f64;
    for i in 0..coarse_grid.n1 {
        for j in 0..coarse_grid.n2 {
            worst_drop = worst_drop.max(coarse.field.get(i, j) - fine.field.get(2 * i, 2 * j));
        }
    }
    assert!(worst_drop <= 1e-9, "refinement lowered a node by {worst_drop}");
    let b = |x: &StripPoint<f64>| eval_b(x, &p).unwrap().value;
    let gap = |f| compare(f, 1.0, b).iter().map(|r| r.abs_diff).fold(0.0, f64::max);
    let (gc, gf) = (gap(&coarse.field), gap(&fine.field));
    assert!(gf < gc, "gap {gc} -> {gf}");
}

/// The converged field is a fixed point: at every node, averages over
/// random feasible chords centered there (endpoints interpolated) do not
/// exceed the node value beyond the solver tolerance. Chords come from a
/// continuous distribution, not from the solver's tabulated set. Nodes
/// within 1 of the domain edge are skipped.
#[test]
fn converged_oracle_is_concave_along_node_centered_chords() {
    let p = large();
    let grid = StripGrid::symmetric(81, 41, p).unwrap();
    let field = solve(&grid, BoundarySet::AbsAtLeast(3.0), &small_opts(32, 12)).field;
    let mut rng = verify::rng(15);
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 10_000 {
        let (i, j) = (rng.gen_range(0..grid.n1), rng.gen_range(1..grid.n2));
        let m = grid.point(i, j);
        // edge columns lack the chords that leave the domain
        if m.x1.abs() > grid.x1_max - 1.0 {
            continue;
        }
        let theta = rng.gen_range(0.0..std::f64::consts::PI);
        let len = rng.gen_range(0.0..2.0f64);
        let d = (theta.cos() * len, (theta.sin() + 2.0 * m.x1 * theta.cos()) * len);
        let a = StripPoint::new(m.x1 - d.0, m.x2 - d.1);
        let b = StripPoint::new(m.x1 + d.0, m.x2 + d.1);
        let inside = |x: &StripPoint<f64>| {
            x.variance() >= 0.0 && x.x1 >= grid.x1_min && x.x1 <= grid.x1_max
        };
        if len == 0.0 || !inside(&a) || !inside(&b) || !chord_feasible(&a, &b, &p) {
            continue;
        }
        checked += 1;
        let value = |x: &StripPoint<f64>| {
            let y = (x.variance() / p.eps_sq()).clamp(0.0, 1.0);
            field.interpolate(x.x1, y).unwrap()
        };
        let v = 0.5 * (value(&a) + value(&b)) - field.get(i, j);
        worst = worst.max(v);
    }
    assert!(worst <= 5e-3, "worst violation {worst}");
}

#[test]
fn one_sided_data_never_exceeds_weak_data() {
    let p = large();
    let grid = StripGrid::symmetric(41, 21, p).unwrap();
    let one = solve(&grid, BoundarySet::AtLeast(3.0), &small_opts(16, 6)).field;
    let two = solve(&grid, BoundarySet::AbsAtLeast(3.0), &small_opts(16, 6)).field;
    for (a, b) in one.values().iter().zip(two.values()) {
        assert!(a <= b);
    }
    let start = init_field(&grid, BoundarySet::AtLeast(3.0));
    assert_eq!(start.get(grid.n1 - 1, 0), 1.0);
    assert_eq!(start.get(0, 0), 0.0);
}
