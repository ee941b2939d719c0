//! `jnb`: evaluate, verify and recompute the weak John–Nirenberg Bellman
//! functions from the command line.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use jn_bellman::analysis::{bmo_norm, moments, superlevel_measure, Interval, LevelMode};
use jn_bellman::closed_form::{eval_b, eval_b_with_derivatives, weak_jn_bound};
use jn_bellman::extremizer::{build_extremizer, fmt_sig, Segment};
use jn_bellman::oracle::{compare, solve, write_comparison_csv, BoundarySet, ChordSet, SolveOptions, StripGrid};
use jn_bellman::verify::{run_suite, DEFAULT_SEED};
use jn_bellman::{Params64, StripPoint64};

#[derive(Parser, Debug)]
#[command(name = "jnb", version, about = "Bellman functions for the weak John–Nirenberg inequality")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate B at a point
    Eval {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        point: PointArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Tabulate B over an n1 × n2 grid of the strip
    Grid {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 161)]
        n1: usize,
        #[arg(long, default_value_t = 81)]
        n2: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Build the extremal function for a point (large regime)
    Extremizer {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        point: PointArgs,
        /// Number of samples in the CSV output
        #[arg(long, default_value_t = 1000)]
        points: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the invariant suite
    Verify {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 1000)]
        points: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Recompute B from boundary data and compare with the closed form
    Oracle {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 161)]
        n1: usize,
        #[arg(long, default_value_t = 81)]
        n2: usize,
        #[arg(long, default_value_t = 64)]
        directions: usize,
        #[arg(long, default_value_t = 24)]
        radii: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long = "max-sweeps", default_value_t = 2000)]
        max_sweeps: usize,
        /// Comparison CSV destination; the summary goes to stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the sharp weak John–Nirenberg bound
    JnBound {
        #[command(flatten)]
        params: ParamArgs,
        /// Print a JSON object instead of the bare number
        #[arg(long)]
        format: Option<Format>,
    },
}

#[derive(Args, Debug)]
struct ParamArgs {
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    #[arg(long, allow_negative_numbers = true)]
    eps: f64,
}

impl ParamArgs {
    fn params(&self) -> Result<Params64, Failure> {
        Params64::new(self.lambda, self.eps).map_err(Failure::input)
    }
}

#[derive(Args, Debug)]
struct PointArgs {
    #[arg(long, allow_negative_numbers = true)]
    x1: f64,
    #[arg(long, allow_negative_numbers = true)]
    x2: f64,
}

impl PointArgs {
    fn point(&self) -> StripPoint64 {
        StripPoint64::new(self.x1, self.x2)
    }
}

#[derive(Args, Debug)]
struct OutputArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Exit status 1 for failed checks, 2 for bad input.
#[derive(Debug)]
enum Failure {
    Input(anyhow::Error),
    Check(String),
    Io(anyhow::Error),
}

impl Failure {
    fn input(e: impl Into<anyhow::Error>) -> Self {
        Failure::Input(e.into())
    }

    fn io(e: impl Into<anyhow::Error>) -> Self {
        Failure::Io(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("jnb: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("jnb: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("jnb: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Eval {
            params,
            point,
            output,
        } => cmd_eval(&params.params()?, &point.point(), &output),
        Command::Grid {
            params,
            n1,
            n2,
            output,
        } => cmd_grid(&params.params()?, n1, n2, &output),
        Command::Extremizer {
            params,
            point,
            points,
            output,
        } => cmd_extremizer(&params.params()?, &point.point(), points, &output),
        Command::Verify {
            params,
            points,
            seed,
            output,
        } => cmd_verify(&params.params()?, points, seed, &output),
        Command::Oracle {
            params,
            n1,
            n2,
            directions,
            radii,
            tol,
            max_sweeps,
            out,
        } => {
            if !(tol > 0.0) {
                return Err(Failure::input(anyhow::anyhow!("--tol must be positive")));
            }
            let opts = SolveOptions {
                chords: ChordSet { directions, radii },
                tol,
                max_sweeps,
            };
            cmd_oracle(&params.params()?, n1, n2, &opts, out.as_deref())
        }
        Command::JnBound { params, format } => {
            let p = params.params()?;
            let bound = weak_jn_bound(&p).map_err(Failure::input)?;
            match format {
                Some(Format::Json) => {
                    #[derive(Serialize)]
                    struct Out {
                        lambda: f64,
                        eps: f64,
                        regime: &'static str,
                        bound: f64,
                    }
                    let regime = p.regime().map_err(Failure::input)?.name();
                    print_json(&Out {
                        lambda: p.lambda(),
                        eps: p.eps(),
                        regime,
                        bound,
                    })
                }
                Some(Format::Csv) => {
                    emit(None, format!("lambda,eps,bound\n{},{},{}\n", p.lambda(), p.eps(), fmt_sig(bound, 12)).as_bytes())
                }
                None => emit(None, format!("{bound}\n").as_bytes()),
            }
        }
    }
}

/// Writes `bytes` to `out`, or to stdout.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, bytes)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::io),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(Failure::io)
        }
    }
}

fn json_bytes<S: Serialize>(value: &S) -> Result<Vec<u8>, Failure> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(Failure::io)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn print_json<S: Serialize>(value: &S) -> Result<(), Failure> {
    emit(None, &json_bytes(value)?)
}

#[derive(Serialize)]
struct EvalOut {
    lambda: f64,
    eps: f64,
    x1: f64,
    x2: f64,
    value: f64,
    region: String,
    regime: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    gradient: Option<[f64; 2]>,
}

fn cmd_eval(p: &Params64, x: &StripPoint64, output: &OutputArgs) -> Result<(), Failure> {
    let v = eval_b_with_derivatives(x, p).map_err(Failure::input)?;
    let out = EvalOut {
        lambda: p.lambda(),
        eps: p.eps(),
        x1: x.x1,
        x2: x.x2,
        value: v.value,
        region: v.region.to_string(),
        regime: p.regime().map_err(Failure::input)?.name(),
        gradient: v.gradient,
    };
    let bytes = match output.format.unwrap_or(Format::Json) {
        Format::Json => json_bytes(&out)?,
        Format::Csv => {
            let (g1, g2) = match out.gradient {
                Some([a, b]) => (fmt_sig(a, 12), fmt_sig(b, 12)),
                None => (String::new(), String::new()),
            };
            format!(
                "x1,x2,value,region,regime,grad_x1,grad_x2\n{},{},{},{},{},{},{}\n",
                fmt_sig(x.x1, 12),
                fmt_sig(x.x2, 12),
                fmt_sig(out.value, 12),
                out.region,
                out.regime,
                g1,
                g2
            )
            .into_bytes()
        }
    };
    emit(output.out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct GridRow {
    x1: f64,
    y: f64,
    x2: f64,
    value: f64,
    region: String,
}

fn cmd_grid(p: &Params64, n1: usize, n2: usize, output: &OutputArgs) -> Result<(), Failure> {
    let grid = StripGrid::symmetric(n1, n2, *p).map_err(Failure::input)?;
    let mut rows = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        for j in 0..n2 {
            let x = grid.point(i, j);
            let v = eval_b(&x, p).map_err(Failure::input)?;
            rows.push(GridRow {
                x1: x.x1,
                y: grid.y(j),
                x2: x.x2,
                value: v.value,
                region: v.region.to_string(),
            });
        }
    }
    let bytes = match output.format.unwrap_or(Format::Csv) {
        Format::Json => json_bytes(&rows)?,
        Format::Csv => {
            let mut s = String::from("x1,y,x2,value,region\n");
            for r in &rows {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fmt_sig(r.x1, 12),
                    fmt_sig(r.y, 12),
                    fmt_sig(r.x2, 12),
                    fmt_sig(r.value, 12),
                    r.region
                ));
            }
            s.into_bytes()
        }
    };
    emit(output.out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct Verification {
    moments: [f64; 2],
    moments_error: f64,
    bmo_norm: f64,
    measure: f64,
    bellman_value: f64,
    measure_error: f64,
    passed: bool,
}

#[derive(Serialize)]
struct ExtremizerOut<'a> {
    lambda: f64,
    eps: f64,
    x1: f64,
    x2: f64,
    region: String,
    segments: &'a [Segment<f64>],
    verification: Verification,
}

fn cmd_extremizer(p: &Params64, x: &StripPoint64, samples: usize, output: &OutputArgs) -> Result<(), Failure> {
    let phi = build_extremizer(x, p).map_err(Failure::input)?;
    let (m1, m2) = moments(&phi, &Interval::unit());
    let moments_error = (m1 - x.x1).abs().max((m2 - x.x2).abs());
    let norm = bmo_norm(&phi, 512);
    let measure = superlevel_measure(&phi, p.lambda(), LevelMode::Absolute);
    let bellman_value = eval_b(x, p).map_err(Failure::input)?.value;
    let measure_error = (measure - bellman_value).abs();
    let passed = moments_error <= 1e-9 && measure_error <= 1e-9 && norm <= p.eps() + 1e-6;
    match output.format.unwrap_or(Format::Json) {
        Format::Json => {
            let out = ExtremizerOut {
                lambda: p.lambda(),
                eps: p.eps(),
                x1: x.x1,
                x2: x.x2,
                region: phi.region.to_string(),
                segments: phi.segments(),
                verification: Verification {
                    moments: [m1, m2],
                    moments_error,
                    bmo_norm: norm,
                    measure,
                    bellman_value,
                    measure_error,
                    passed,
                },
            };
            emit(output.out.as_deref(), &json_bytes(&out)?)?;
        }
        Format::Csv => {
            let mut buf = Vec::new();
            phi.write_samples_csv(&mut buf, samples).map_err(Failure::io)?;
            emit(output.out.as_deref(), &buf)?;
        }
    }
    if passed {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "extremizer verification failed: moments error {moments_error:e}, measure error {measure_error:e}, norm {norm}"
        )))
    }
}

fn cmd_verify(p: &Params64, points: usize, seed: u64, output: &OutputArgs) -> Result<(), Failure> {
    let report = run_suite(p, points, seed).map_err(Failure::input)?;
    let bytes = match output.format.unwrap_or(Format::Json) {
        Format::Json => json_bytes(&report)?,
        Format::Csv => {
            let mut s = String::from("check,samples,failures,worst,tolerance,passed\n");
            for c in &report.checks {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    c.name,
                    c.samples,
                    c.failures,
                    fmt_sig(c.worst, 12),
                    fmt_sig(c.tolerance, 12),
                    c.passed()
                ));
            }
            s.into_bytes()
        }
    };
    emit(output.out.as_deref(), &bytes)?;
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed())
        .map(|c| c.name.as_str())
        .collect();
    eprintln!(
        "seed {seed}: {} of {} checks passed",
        report.checks.len() - failed.len(),
        report.checks.len()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("failed checks: {}", failed.join(", "))))
    }
}

#[derive(Serialize)]
struct OracleOut {
    lambda: f64,
    eps: f64,
    n1: usize,
    n2: usize,
    boundary_set: String,
    sweeps: usize,
    delta: f64,
    converged: bool,
    sup_gap: f64,
    max_excess: f64,
    value_at_center: Option<f64>,
}

fn cmd_oracle(p: &Params64, n1: usize, n2: usize, opts: &SolveOptions, out: Option<&Path>) -> Result<(), Failure> {
    let grid = StripGrid::symmetric(n1, n2, *p).map_err(Failure::input)?;
    let set = BoundarySet::AbsAtLeast(p.lambda());
    let report = solve(&grid, set, opts);
    // wall times vary between runs, so the log stays off stdout
    for l in &report.log {
        eprintln!("sweep {:>5}  delta {:.3e}  {:.2}s", l.sweep, l.delta, l.seconds);
    }
    let rows = compare(&report.field, p.eps(), |x| eval_b(x, p).map(|v| v.value).unwrap_or(f64::NAN));
    if let Some(path) = out {
        let file = File::create(path)
            .with_context(|| format!("creating {}", path.display()))
            .map_err(Failure::io)?;
        write_comparison_csv(&rows, BufWriter::new(file)).map_err(Failure::io)?;
    }
    let sup_gap = rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max);
    let max_excess = rows
        .iter()
        .map(|r| r.value - r.closed_form_value)
        .fold(0.0, f64::max);
    let summary = OracleOut {
        lambda: p.lambda(),
        eps: p.eps(),
        n1,
        n2,
        boundary_set: set.to_string(),
        sweeps: report.sweeps,
        delta: report.delta,
        converged: report.converged,
        sup_gap,
        max_excess,
        value_at_center: report.field.interpolate(0.0, 1.0),
    };
    print_json(&summary)?;
    if report.converged {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "no convergence after {} sweeps (delta {:e})",
            report.sweeps, report.delta
        )))
    }
}
