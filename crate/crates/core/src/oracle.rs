//! Brute-force Bellman function: the smallest locally concave function on the
//! strip with prescribed lower-boundary data, computed by monotone relaxation.
//!
//! The strip is rectangularized by `(x₁, y)`, `y = (x₂ − x₁²)/ε² ∈ [0, 1]`, so
//! both parabolas are grid rows. A sweep replaces every node value by the
//! best weighted chord average through it (or keeps it, if larger). Chords
//! are straight in `(x₁, x₂)`.
//!
//! Directions are spaced evenly in the frame where the node sits above the
//! vertex of the parabolas: the maps `(x₁, x₂) ↦ (x₁ + c, x₂ + 2cx₁ + c²)`
//! preserve the strip, so a ray's exit times and its endpoint heights `y`
//! depend only on the node height and the direction, not on `x₁`. They are
//! tabulated once per grid row.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extremizer::fmt_sig;
use crate::geometry::{Params, StripPoint};

/// Node layout over the truncated strip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StripGrid {
    pub n1: usize,
    pub n2: usize,
    pub x1_min: f64,
    pub x1_max: f64,
    pub params: Params<f64>,
}

impl StripGrid {
    pub fn new(n1: usize, n2: usize, x1_min: f64, x1_max: f64, params: Params<f64>) -> Result<Self> {
        if n1 < 3 || n2 < 3 {
            return Err(Error::InvalidGrid(format!("need n1, n2 >= 3, got {n1} x {n2}")));
        }
        if !(x1_min < x1_max) || !x1_min.is_finite() || !x1_max.is_finite() {
            return Err(Error::InvalidGrid(format!("bad x1 range [{x1_min}, {x1_max}]")));
        }
        let reach = params.lambda().abs() + 2.0 * params.eps();
        if x1_max < reach {
            return Err(Error::InvalidGrid(format!(
                "x1_max = {x1_max} must be at least |lambda| + 2 eps = {reach}"
            )));
        }
        Ok(StripGrid {
            n1,
            n2,
            x1_min,
            x1_max,
            params,
        })
    }

    /// Symmetric truncation `|x₁| ≤ |λ| + 3ε`.
    pub fn symmetric(n1: usize, n2: usize, params: Params<f64>) -> Result<Self> {
        let half = params.lambda().abs() + 3.0 * params.eps();
        Self::new(n1, n2, -half, half, params)
    }

    #[inline]
    pub fn h1(&self) -> f64 {
        (self.x1_max - self.x1_min) / (self.n1 - 1) as f64
    }

    #[inline]
    pub fn x1(&self, i: usize) -> f64 {
        self.x1_min + i as f64 * self.h1()
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        j as f64 / (self.n2 - 1) as f64
    }

    pub fn point(&self, i: usize, j: usize) -> StripPoint<f64> {
        StripPoint::from_height(self.x1(i), self.y(j), self.params.eps())
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }
}

/// The set `E` whose indicator is the lower-boundary data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum BoundarySet {
    /// `{u : |u| ≥ λ}`
    AbsAtLeast(f64),
    /// `{u : u ≥ λ}`
    AtLeast(f64),
    All,
    Empty,
}

impl BoundarySet {
    #[inline]
    pub fn contains(&self, u: f64) -> bool {
        match *self {
            BoundarySet::AbsAtLeast(l) => u.abs() >= l,
            BoundarySet::AtLeast(l) => u >= l,
            BoundarySet::All => true,
            BoundarySet::Empty => false,
        }
    }

    /// Points where the indicator jumps.
    pub fn jumps(&self) -> Vec<f64> {
        match *self {
            BoundarySet::AbsAtLeast(l) if l > 0.0 => vec![-l, l],
            BoundarySet::AbsAtLeast(_) => vec![],
            BoundarySet::AtLeast(l) => vec![l],
            BoundarySet::All | BoundarySet::Empty => vec![],
        }
    }

    #[inline]
    fn data(&self, u: f64) -> f64 {
        if self.contains(u) {
            1.0
        } else {
            0.0
        }
    }
}

impl fmt::Display for BoundarySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundarySet::AbsAtLeast(l) => write!(f, "|u| >= {l}"),
            BoundarySet::AtLeast(l) => write!(f, "u >= {l}"),
            BoundarySet::All => f.write_str("all u"),
            BoundarySet::Empty => f.write_str("no u"),
        }
    }
}

/// Candidate Bellman function sampled on a [`StripGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub grid: StripGrid,
    pub set: BoundarySet,
    values: Vec<f64>,
}

impl GridField {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Interpolated value at `(x₁, y)`; `None` outside the truncated range.
    pub fn interpolate(&self, x1: f64, y: f64) -> Option<f64> {
        let g = &self.grid;
        let fi = (x1 - g.x1_min) / g.h1();
        if !(fi >= -1e-9 && fi <= (g.n1 - 1) as f64 + 1e-9) {
            return None;
        }
        Some(self.sample(fi.clamp(0.0, (g.n1 - 1) as f64), y.clamp(0.0, 1.0), x1))
    }

    /// Interpolation that writes the point as a convex combination of known
    /// values over a convex piece of the strip, so it never exceeds a locally
    /// concave majorant of the node values.
    ///
    /// Nodes of one column share `x₁`, so between two columns each pair of
    /// adjacent rows spans a parallelogram whose sides are the straight row
    /// chords. Bilinear weights in (column fraction, height above the chords)
    /// reproduce the point exactly. Below the first row chord the point is
    /// split vertically between the exact boundary datum and that chord.
    #[inline]
    fn sample(&self, fi: f64, y: f64, x1: f64) -> f64 {
        let g = &self.grid;
        let i0 = (fi.floor().max(0.0) as usize).min(g.n1 - 2);
        let u = fi - i0 as f64;
        let h1 = g.h1();
        let sag = u * (1.0 - u) * h1 * h1 / g.params.eps_sq();
        let rows = (g.n2 - 1) as f64;
        let fj = (y - sag) * rows;
        let base = g.index(i0, 0);
        if fj < 0.0 {
            let chord = (1.0 - u) * self.values[base] + u * self.values[base + g.n2];
            let s = if sag > 0.0 { (y / sag).clamp(0.0, 1.0) } else { 0.0 };
            return (1.0 - s) * self.set.data(x1) + s * chord;
        }
        let j0 = (fj.floor() as usize).min(g.n2 - 2);
        let v = (fj - j0 as f64).min(1.0);
        let base = base + j0;
        let (a, b) = (self.values[base], self.values[base + 1]);
        let (c, d) = (self.values[base + g.n2], self.values[base + g.n2 + 1]);
        (1.0 - u) * ((1.0 - v) * a + v * b) + u * ((1.0 - v) * c + v * d)
    }
}

/// Lower-boundary nodes get the indicator of `set`; all other nodes start at 0.
pub fn init_field(grid: &StripGrid, set: BoundarySet) -> GridField {
    let mut values = vec![0.0; grid.n1 * grid.n2];
    for i in 0..grid.n1 {
        values[grid.index(i, 0)] = set.data(grid.x1(i));
    }
    GridField {
        grid: *grid,
        set,
        values,
    }
}

/// Whether the closed segment `[a, b]` stays inside the closed strip.
///
/// The lower constraint holds along the chord by convexity of `x₂ ≥ x₁²`.
/// For the upper one, `x₂(t) − x₁(t)² − ε²` is a concave quadratic in `t`,
/// maximized at an endpoint or at its critical point.
pub fn chord_feasible(a: &StripPoint<f64>, b: &StripPoint<f64>, p: &Params<f64>) -> bool {
    let tol = 1e-12 * (1.0 + a.x2.abs().max(b.x2.abs()));
    let inside = |x: &StripPoint<f64>| {
        let v = x.variance();
        v >= -tol && v <= p.eps_sq() + tol
    };
    if !inside(a) || !inside(b) {
        return false;
    }
    let (d1, d2) = (b.x1 - a.x1, b.x2 - a.x2);
    // q(t) = a.x2 + t d2 − (a.x1 + t d1)² − ε², q'(t) = d2 − 2 d1 (a.x1 + t d1)
    if d1 == 0.0 {
        return true;
    }
    let t_star = (d2 - 2.0 * d1 * a.x1) / (2.0 * d1 * d1);
    if t_star <= 0.0 || t_star >= 1.0 {
        return true;
    }
    let x1 = a.x1 + t_star * d1;
    let x2 = a.x2 + t_star * d2;
    x2 - x1 * x1 - p.eps_sq() <= tol
}

/// Per-node search effort of one sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ChordSet {
    /// Evenly spaced chord directions over a half turn.
    pub directions: usize,
    /// Endpoint pairs tried along each direction.
    pub radii: usize,
}

impl Default for ChordSet {
    fn default() -> Self {
        ChordSet {
            directions: 64,
            radii: 24,
        }
    }
}

/// One end of a candidate chord, relative to the node.
#[derive(Clone, Copy, Debug)]
struct RayPoint {
    /// Chord parameter (distance along the unnormalized direction).
    t: f64,
    /// Offset in `x₁`.
    dx1: f64,
    /// Endpoint height `y`.
    y: f64,
    /// The endpoint is where the ray leaves through the lower parabola.
    on_lower: bool,
}

/// Tabulated rays for one grid row: for every direction, `m` samples on the
/// `+` side followed by `m` on the `−` side.
struct RowRays {
    points: Vec<RayPoint>,
}

/// Pairing of sample indices `(k⁺, k⁻)` tried along each direction.
fn pair_plan(radii: usize) -> (usize, Vec<(usize, usize)>) {
    let m = radii.div_ceil(3).max(1);
    let full = m - 1;
    let pairs = (0..radii.max(1))
        .map(|r| {
            let k = r / 3;
            match r % 3 {
                0 => (k, full),
                1 => (full, k),
                _ => (k, k),
            }
        })
        .collect();
    (m, pairs)
}

/// Exit time of the ray `(0, Y) + t·(dc, ds)` from the strip of half-width
/// `eps²` around the parabola `x₂ = x₁²`, and whether the exit is through
/// the lower parabola.
pub(crate) fn exit_time(big_y: f64, dc: f64, ds: f64, eps_sq: f64) -> (f64, bool) {
    let c2 = dc * dc;
    // lower: Y + t ds − t² c2 ≥ 0
    let t_low = if c2 == 0.0 {
        if ds < 0.0 {
            big_y / -ds
        } else {
            f64::INFINITY
        }
    } else {
        let root = (ds * ds + 4.0 * c2 * big_y).max(0.0).sqrt();
        if ds > 0.0 {
            (ds + root) / (2.0 * c2)
        } else if root - ds > 0.0 {
            2.0 * big_y / (root - ds)
        } else {
            0.0
        }
    };
    // upper: (ε² − Y) − t ds + t² c2 ≥ 0
    let room = (eps_sq - big_y).max(0.0);
    let t_up = if c2 == 0.0 {
        if ds > 0.0 {
            room / ds
        } else {
            f64::INFINITY
        }
    } else {
        let disc = ds * ds - 4.0 * c2 * room;
        if disc <= 0.0 || ds <= 0.0 {
            // tangency or moving away from the upper parabola
            f64::INFINITY
        } else {
            // smaller root, written to avoid cancellation
            (2.0 * room / (ds + disc.sqrt())).max(0.0)
        }
    };
    if t_low <= t_up {
        (t_low, true)
    } else {
        (t_up, false)
    }
}

fn tabulate_rows(grid: &StripGrid, chords: &ChordSet, m: usize) -> Vec<RowRays> {
    let eps = grid.params.eps();
    let eps_sq = eps * eps;
    let n_dir = chords.directions.max(1);
    (0..grid.n2)
        .map(|j| {
            let big_y = grid.y(j) * eps_sq;
            let mut points = Vec::with_capacity(n_dir * 2 * m);
            for k in 0..n_dir {
                let theta = std::f64::consts::PI * k as f64 / n_dir as f64;
                let (dc, ds) = (theta.cos(), eps * theta.sin());
                for (dc, ds) in [(dc, ds), (-dc, -ds)] {
                    let (t_exit, lower) = exit_time(big_y, dc, ds, eps_sq);
                    for r in 1..=m {
                        let t = t_exit * r as f64 / m as f64;
                        let on_lower = lower && r == m;
                        let height = if on_lower {
                            0.0
                        } else {
                            ((big_y + t * ds - t * t * dc * dc) / eps_sq).clamp(0.0, 1.0)
                        };
                        points.push(RayPoint {
                            t,
                            dx1: t * dc,
                            y: height,
                            on_lower,
                        });
                    }
                }
            }
            RowRays { points }
        })
        .collect()
}

/// Precomputed chord geometry for repeated sweeps over one grid.
pub struct Relaxer {
    grid: StripGrid,
    chords: ChordSet,
    m: usize,
    pairs: Vec<(usize, usize)>,
    rows: Vec<RowRays>,
}

impl Relaxer {
    pub fn new(grid: &StripGrid, chords: ChordSet) -> Self {
        let (m, pairs) = pair_plan(chords.radii);
        let rows = tabulate_rows(grid, &chords, m);
        Relaxer {
            grid: *grid,
            chords,
            m,
            pairs,
            rows,
        }
    }

    /// One Jacobi sweep. Returns the new field and the largest increase.
    pub fn sweep(&self, field: &GridField) -> (GridField, f64) {
        let g = &self.grid;
        let n2 = g.n2;
        let h1 = g.h1();
        let max_fi = (g.n1 - 1) as f64;
        let m = self.m;
        let n_dir = self.chords.directions.max(1);
        let set = field.set;
        let jumps = set.jumps();

        let mut next = field.values.clone();
        let delta = next
            .par_chunks_mut(n2)
            .enumerate()
            .map(|(i, column)| {
                let x1 = g.x1(i);
                let fi0 = i as f64;
                let mut vals = vec![f64::NAN; 2 * m];
                let mut local_delta = 0.0f64;
                for (j, slot) in column.iter_mut().enumerate().skip(1) {
                    let rays = &self.rows[j].points;
                    let mut best = *slot;
                    for d in 0..n_dir {
                        let block = &rays[d * 2 * m..(d + 1) * 2 * m];
                        for (v, p) in vals.iter_mut().zip(block) {
                            let fi = fi0 + p.dx1 / h1;
                            *v = if p.t <= 0.0 || fi < -1e-9 || fi > max_fi + 1e-9 {
                                f64::NAN
                            } else if p.on_lower {
                                set.data(x1 + p.dx1)
                            } else {
                                field.sample(fi.clamp(0.0, max_fi), p.y, x1 + p.dx1)
                            };
                        }
                        for &(kp, km) in &self.pairs {
                            let (gp, gm) = (vals[kp], vals[m + km]);
                            if gp.is_nan() || gm.is_nan() {
                                continue;
                            }
                            let (tp, tm) = (block[kp].t, block[m + km].t);
                            let cand = (tm * gp + tp * gm) / (tp + tm);
                            if cand > best {
                                best = cand;
                            }
                        }
                    }
                    for &u in &jumps {
                        best = best.max(self.jump_chords(field, x1, j, u));
                    }
                    local_delta = local_delta.max(best - *slot);
                    *slot = best;
                }
                local_delta
            })
            .reduce(|| 0.0, f64::max);
        (
            GridField {
                grid: field.grid,
                set,
                values: next,
            },
            delta,
        )
    }
}

impl Relaxer {
    /// Best chord from the boundary point `(u, u²)` through node `(x₁, row j)`.
    ///
    /// Near a jump of the data the optimal chords fan out from the jump point
    /// itself, which an evenly spaced direction set almost never hits.
    fn jump_chords(&self, field: &GridField, x1: f64, j: usize, u: f64) -> f64 {
        let g = &self.grid;
        let eps_sq = g.params.eps_sq();
        let big_y = g.y(j) * eps_sq;
        let node = StripPoint::new(x1, x1 * x1 + big_y);
        let q = StripPoint::new(u, u * u);
        if !chord_feasible(&q, &node, &g.params) {
            return 0.0;
        }
        // node frame: the chord towards q has length parameter 1
        let (d1, d2) = (x1 - u, node.x2 - q.x2);
        let (dc, ds) = (d1, d2 - 2.0 * x1 * d1);
        if dc == 0.0 && ds == 0.0 {
            return 0.0;
        }
        let (t_exit, lower) = exit_time(big_y, dc, ds, eps_sq);
        let gq = field.set.data(u);
        let h1 = g.h1();
        let max_fi = (g.n1 - 1) as f64;
        let mut best = 0.0f64;
        for r in 1..=self.m {
            let t = t_exit * r as f64 / self.m as f64;
            if t <= 0.0 {
                continue;
            }
            let xe = x1 + t * dc;
            let fi = (xe - g.x1_min) / h1;
            if fi < -1e-9 || fi > max_fi + 1e-9 {
                continue;
            }
            let ge = if lower && r == self.m {
                field.set.data(xe)
            } else {
                let y = ((big_y + t * ds - t * t * dc * dc) / eps_sq).clamp(0.0, 1.0);
                field.sample(fi.clamp(0.0, max_fi), y, xe)
            };
            best = best.max((ge + t * gq) / (1.0 + t));
        }
        best
    }
}

/// One relaxation sweep with a freshly tabulated chord set.
pub fn relax(field: &GridField, chords: ChordSet) -> (GridField, f64) {
    Relaxer::new(&field.grid, chords).sweep(field)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolveOptions {
    pub chords: ChordSet,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            chords: ChordSet::default(),
            tol: 1e-6,
            max_sweeps: 2000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepLog {
    pub sweep: usize,
    pub delta: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub field: GridField,
    pub sweeps: usize,
    pub delta: f64,
    pub converged: bool,
    pub log: Vec<SweepLog>,
}

/// Sweeps until the largest increase drops below `tol` or `max_sweeps` is hit.
pub fn solve(grid: &StripGrid, set: BoundarySet, opts: &SolveOptions) -> SolveReport {
    solve_observed(grid, set, opts, |_, _| {})
}

/// [`solve`] with a callback after every sweep (sweep index, field).
pub fn solve_observed(
    grid: &StripGrid,
    set: BoundarySet,
    opts: &SolveOptions,
    mut observe: impl FnMut(usize, &GridField),
) -> SolveReport {
    let relaxer = Relaxer::new(grid, opts.chords);
    let mut field = init_field(grid, set);
    let start = Instant::now();
    let mut log = Vec::new();
    let mut delta = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        let (next, d) = relaxer.sweep(&field);
        field = next;
        delta = d;
        sweeps += 1;
        log.push(SweepLog {
            sweep: sweeps,
            delta,
            seconds: start.elapsed().as_secs_f64(),
        });
        observe(sweeps, &field);
        if delta < opts.tol {
            break;
        }
    }
    SolveReport {
        field,
        sweeps,
        delta,
        converged: delta < opts.tol,
        log,
    }
}

/// A node of the comparison between the oracle and a reference function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub x1: f64,
    pub y: f64,
    pub x2: f64,
    pub value: f64,
    pub closed_form_value: f64,
    pub abs_diff: f64,
}

/// Compares every node with `|x₁|`-distance at least `margin` from the
/// truncation edges against `reference`.
pub fn compare(
    field: &GridField,
    margin: f64,
    reference: impl Fn(&StripPoint<f64>) -> f64,
) -> Vec<ComparisonRow> {
    let g = &field.grid;
    let mut rows = Vec::new();
    for i in 0..g.n1 {
        let x1 = g.x1(i);
        if x1 < g.x1_min + margin - 1e-12 || x1 > g.x1_max - margin + 1e-12 {
            continue;
        }
        for j in 0..g.n2 {
            let p = g.point(i, j);
            let value = field.get(i, j);
            let reference = reference(&p);
            rows.push(ComparisonRow {
                x1,
                y: g.y(j),
                x2: p.x2,
                value,
                closed_form_value: reference,
                abs_diff: (value - reference).abs(),
            });
        }
    }
    rows
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["x1", "y", "x2", "value", "closed_form_value", "abs_diff"])?;
    for r in rows {
        w.write_record([
            fmt_sig(r.x1, 12),
            fmt_sig(r.y, 12),
            fmt_sig(r.x2, 12),
            fmt_sig(r.value, 12),
            fmt_sig(r.closed_form_value, 12),
            fmt_sig(r.abs_diff, 12),
        ])?;
    }
    w.flush()?;
    Ok(())
}
