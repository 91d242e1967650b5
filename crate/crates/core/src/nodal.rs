//! Nodal structure of `v`: the height `s`, the boundary curve `x = μ(y)`,
//! the interior nodal curves and the local graphs `ξ` (near `z1`) and `η`
//! (near `z2`).
//!
//! For `y ∈ [0, s)`, `y ≠ π/√3`, the factored field `g` has exactly one zero
//! in `(0, π)`; call it `a(y)`. Then `μ(y) = 2π − a(y)` below the saddle and
//! `μ(y) = a(y)` above it. Where `a` is a degenerate root of `g(·, y)` the
//! solve switches to a squared variable: `q = (x − π)²` near the saddle and
//! `q = x²` near `y = 0` and `y = s`. Both are smooth because `g` is even
//! about `x = 0` and `x = π`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeffs::Perturbation;
use crate::epsilon::ConditionRegions;
use crate::field::{z0, FieldError, FieldHandle, FieldKind, SQRT3};
use crate::roots::{bisect, safeguarded_newton, RootError};

/// `π/√3`, the height of the saddle `z0`.
pub const Y_SADDLE: f64 = PI / SQRT3;
/// `2π/√3`, the height of `z2`.
pub const Y_TOP: f64 = 2.0 * PI / SQRT3;
/// Largest admissible `|g|` at an emitted sample.
pub const SAMPLE_RESIDUAL: f64 = 1e-10;
/// Half-width of the windows where the squared variable is used.
pub const SUBSTITUTION_WINDOW: f64 = 0.05;
/// Closest approach of the geometric sample clusters to `0` and `s`.
pub const CLUSTER_FLOOR: f64 = 1e-9;
/// Ratio of the cluster floor below `s` to the rounding level of `g`.
pub const TOP_NOISE_FACTOR: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("no sign change of g(0, y) on ({lo}, {hi}): {source}")]
    NoBracket { lo: f64, hi: f64, source: RootError },
    #[error("g_y(0, s) = {gy:e} is not positive at s = {s}")]
    HeightSlope { s: f64, gy: f64 },
    #[error("root solve failed at y = {y}: {source}")]
    Root { y: f64, source: RootError },
    #[error("|g| = {residual:e} at ({x}, {y}) exceeds {SAMPLE_RESIDUAL:e}")]
    Residual { x: f64, y: f64, residual: f64 },
    #[error("mu is not strictly decreasing between y = {y0} and y = {y1}")]
    NonMonotone { y0: f64, y1: f64 },
    #[error("{what} sign condition fails at {at}: {value:e}")]
    LocalSign { what: &'static str, at: f64, value: f64 },
    #[error("malformed curve data: {0}")]
    Parse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveAxis {
    /// Samples are `(y, x)`.
    ByY,
    /// Samples are `(x, y)`.
    ByX,
}

/// Ordered samples `(param, coord)` of a zero curve of `g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodalCurve {
    pub axis: CurveAxis,
    pub samples: Vec<(f64, f64)>,
    /// Unit tangents `(dx, dy)` oriented along increasing parameter.
    pub tangents: Option<Vec<(f64, f64)>>,
}

impl NodalCurve {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample as a point `(x, y)`.
    pub fn point(&self, i: usize) -> (f64, f64) {
        let (p, c) = self.samples[i];
        match self.axis {
            CurveAxis::ByY => (c, p),
            CurveAxis::ByX => (p, c),
        }
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Largest `|g|` over the samples.
    pub fn max_residual(&self, g: &FieldHandle) -> Result<f64, FieldError> {
        self.points()
            .try_fold(0.0_f64, |m, (x, y)| Ok(m.max(g.value(x, y)?.abs())))
    }

    /// Linear interpolation of the coordinate; `None` outside the sampled range.
    pub fn interpolate(&self, param: f64) -> Option<f64> {
        let s = &self.samples;
        if s.is_empty() || param < s[0].0 || param > s[s.len() - 1].0 {
            return None;
        }
        let i = s.partition_point(|&(p, _)| p < param);
        if i == 0 {
            return Some(s[0].1);
        }
        let (p0, c0) = s[i - 1];
        let (p1, c1) = s[i];
        if p1 == p0 {
            return Some(c1);
        }
        Some(c0 + (c1 - c0) * (param - p0) / (p1 - p0))
    }

    /// `param,coord` rows with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,coord\n");
        for &(p, c) in &self.samples {
            let _ = writeln!(out, "{p:.16e},{c:.16e}");
        }
        out
    }

    pub fn from_csv(axis: CurveAxis, text: &str) -> Result<Self, TraceError> {
        let mut samples = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut field = || -> Result<f64, TraceError> {
                parts
                    .next()
                    .and_then(|t| t.trim().parse().ok())
                    .ok_or_else(|| TraceError::Parse(format!("line {}: {line:?}", n + 1)))
            };
            samples.push((field()?, field()?));
        }
        Ok(Self {
            axis,
            samples,
            tangents: None,
        })
    }
}

/// The traced boundary curve and interior curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceResult {
    pub epsilon: f64,
    pub s: f64,
    /// `μ` on `[0, s]`, by `y`.
    pub mu: NodalCurve,
    /// `{(2π − μ(y), y) : y ∈ (−π/√3, π/√3]}`, by `y`.
    pub interior: NodalCurve,
}

fn g_handle(eps: f64, p: &Perturbation) -> FieldHandle {
    FieldHandle::new(FieldKind::G, eps, p)
}

/// Root of `y ↦ g(0, y)` in `(π/√3, 2π/√3)`.
pub fn find_s(eps: f64, p: &Perturbation) -> Result<f64, TraceError> {
    find_s_with(&g_handle(eps, p))
}

/// At `ε = 0` the curve closes at `2π/√3`, where `g(0, ·)` touches zero without crossing.
pub fn find_s_with(g: &FieldHandle) -> Result<f64, TraceError> {
    if g.epsilon() == 0.0 {
        return Ok(Y_TOP);
    }
    let (lo, hi) = (Y_SADDLE, Y_TOP);
    let f = |y: f64| g.value(0.0, y).unwrap_or(f64::NAN);
    let rough = bisect(f, lo, hi, 1e-12).map_err(|source| TraceError::NoBracket { lo, hi, source })?;
    let a = (rough - 2e-12).max(lo);
    let b = (rough + 2e-12).min(hi);
    let polish = |y: f64| match g.eval(0.0, y) {
        Ok(j) => (j.value, j.dy),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let s = if f(a).signum() != f(b).signum() {
        safeguarded_newton(polish, a, b, rough, 1e-16).map_err(|source| TraceError::Root { y: rough, source })?
    } else {
        rough
    };
    let gy = g.eval(0.0, s)?.dy;
    if !(gy > 0.0) {
        return Err(TraceError::HeightSlope { s, gy });
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Chart {
    /// `x = √q`, `μ = 2π − x`.
    Bottom,
    /// `x = π − √q`, `μ = π ± √q`.
    Saddle,
    /// `x = √q`, `μ = x`.
    Top,
    /// Plain `x ∈ (0, π)`.
    Plain,
}

/// Evaluates `μ(y)` by a bracketed solve; shares its field with callers.
#[derive(Clone, Debug)]
pub struct MuSolver {
    g: FieldHandle,
    s: f64,
}

impl MuSolver {
    pub fn new(g: FieldHandle, s: f64) -> Self {
        Self { g, s }
    }

    pub fn field(&self) -> &FieldHandle {
        &self.g
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    fn chart(&self, y: f64) -> Chart {
        if (y - Y_SADDLE).abs() < SUBSTITUTION_WINDOW {
            Chart::Saddle
        } else if y < SUBSTITUTION_WINDOW {
            Chart::Bottom
        } else if self.s - y < SUBSTITUTION_WINDOW {
            Chart::Top
        } else {
            Chart::Plain
        }
    }

    /// Chart variable of the cell abscissa `x ∈ [0, π]`.
    fn to_var(chart: Chart, x: f64) -> f64 {
        match chart {
            Chart::Bottom | Chart::Top => x * x,
            Chart::Saddle => (PI - x) * (PI - x),
            Chart::Plain => x,
        }
    }

    fn from_var(chart: Chart, z: f64) -> f64 {
        match chart {
            Chart::Bottom | Chart::Top => z.max(0.0).sqrt(),
            Chart::Saddle => PI - z.max(0.0).sqrt(),
            Chart::Plain => z,
        }
    }

    /// `(φ, φ')` in the chart variable.
    fn phi(&self, chart: Chart, y: f64, z: f64) -> (f64, f64) {
        let x = Self::from_var(chart, z);
        let Ok(j) = self.g.eval(x, y) else {
            return (f64::NAN, f64::NAN);
        };
        let d = match chart {
            Chart::Plain => j.dx,
            Chart::Bottom | Chart::Top => {
                if z > 0.0 {
                    j.dx / (2.0 * x)
                } else {
                    0.5 * j.dxx
                }
            }
            Chart::Saddle => {
                let r = PI - x;
                if r > 0.0 {
                    -j.dx / (2.0 * r)
                } else {
                    0.5 * j.dxx
                }
            }
        };
        (j.value, d)
    }

    fn cell_to_mu(&self, y: f64, x: f64) -> f64 {
        if y < Y_SADDLE {
            2.0 * PI - x
        } else {
            x
        }
    }

    fn mu_to_cell(&self, y: f64, mu: f64) -> f64 {
        if y < Y_SADDLE {
            2.0 * PI - mu
        } else {
            mu
        }
    }

    /// `μ(y)` for `y ∈ [0, s]`; `guess` is an estimate of `μ(y)`.
    pub fn solve(&self, y: f64, guess: Option<f64>) -> Result<f64, TraceError> {
        if y == Y_SADDLE {
            return Ok(PI);
        }
        if y >= self.s {
            return Ok(0.0);
        }
        let chart = self.chart(y);
        let zmax = match chart {
            Chart::Plain => PI,
            _ => PI * PI,
        };
        let f = |z: f64| self.phi(chart, y, z);
        let guess_z = guess
            .map(|m| Self::to_var(chart, self.mu_to_cell(y, m).clamp(0.0, PI)))
            .filter(|z| z.is_finite());
        let (lo, hi) = match guess_z {
            Some(z0) => local_bracket(&f, z0, zmax),
            None => (0.0, zmax),
        };
        let start = guess_z.unwrap_or(0.5 * (lo + hi));
        let tol = 1e-16 * start.abs().max(1e-14 * zmax);
        let z = safeguarded_newton(f, lo, hi, start, tol).map_err(|source| TraceError::Root { y, source })?;
        Ok(self.cell_to_mu(y, Self::from_var(chart, z)))
    }

    /// `μ'(y) = −g_y / g_x` at a traced point, away from the two singular heights.
    pub fn slope(&self, y: f64, mu: f64) -> Result<f64, FieldError> {
        let j = self.g.eval(mu, y)?;
        Ok(-j.dy / j.dx)
    }
}

/// A sign-changing bracket around `z0` in `[0, zmax]`, grown geometrically.
fn local_bracket<F: Fn(f64) -> (f64, f64)>(f: &F, z0: f64, zmax: f64) -> (f64, f64) {
    let f0 = f(z0).0;
    let mut w = 1e-9 * z0.abs().max(1e-12);
    while w < zmax {
        let a = (z0 - w).max(0.0);
        let b = (z0 + w).min(zmax);
        let fa = f(a).0;
        let fb = f(b).0;
        if fa.signum() != f0.signum() && fa.is_finite() {
            return (a, z0);
        }
        if fb.signum() != f0.signum() && fb.is_finite() {
            return (z0, b);
        }
        w *= 8.0;
    }
    (0.0, zmax)
}

/// `y`-grid on `[0, s]`: cosine base grid, 10× refinement within
/// `SUBSTITUTION_WINDOW` of `π/√3` and `s`, and geometric clusters down to
/// `1e-9` from `y = 0` and from `s`.
pub fn mu_grid(s: f64, n: usize) -> Vec<f64> {
    mu_grid_with_floor(s, n, CLUSTER_FLOOR)
}

/// As [`mu_grid`], with the cluster below `s` stopped at `top_floor`.
pub fn mu_grid_with_floor(s: f64, n: usize, top_floor: f64) -> Vec<f64> {
    let n = n.max(8);
    let mut ys: Vec<f64> = (0..n)
        .map(|i| 0.5 * s * (1.0 - (PI * i as f64 / (n - 1) as f64).cos()))
        .collect();
    let per_unit = n as f64 / s;
    for (c, lo, hi) in [
        (Y_SADDLE, Y_SADDLE - SUBSTITUTION_WINDOW, Y_SADDLE + SUBSTITUTION_WINDOW),
        (s, s - SUBSTITUTION_WINDOW, s),
    ] {
        let _ = c;
        let m = (10.0 * per_unit * (hi - lo)).ceil() as usize;
        ys.extend((0..=m).map(|i| lo + (hi - lo) * i as f64 / m as f64));
    }
    let per_decade = 8;
    for j in 0..=(7 * per_decade) {
        let d = 1e-2 * 10f64.powf(-(j as f64) / per_decade as f64);
        ys.push(d);
    }
    for j in 0..=(7 * per_decade) {
        let d = 1e-2 * 10f64.powf(-(j as f64) / per_decade as f64);
        if d >= top_floor {
            ys.push(s - d);
        }
    }
    ys.push(Y_SADDLE);
    ys.push(0.0);
    ys.push(s);
    ys.retain(|&y| (0.0..=s).contains(&y));
    ys.sort_by(|a, b| a.total_cmp(b));
    ys.dedup_by(|b, a| (*b - *a).abs() <= 1e-15 * a.abs().max(1e-300));
    ys
}

/// Unit tangent `(μ', 1)/|·|` with the singular heights handled by their limits.
fn mu_tangent(solver: &MuSolver, y: f64, mu: f64) -> Result<(f64, f64), FieldError> {
    if y == solver.s {
        return Ok((-1.0, 0.0));
    }
    if y == Y_SADDLE {
        let m = saddle_slope(solver.field())?;
        let n = m.hypot(1.0);
        return Ok((m / n, 1.0 / n));
    }
    let j = solver.field().eval(mu, y)?;
    // (g_y, −g_x) is tangent; orient along increasing y
    let (mut tx, mut ty) = (-j.dy, j.dx);
    if ty < 0.0 || (ty == 0.0 && tx > 0.0) {
        tx = -tx;
        ty = -ty;
    }
    let n = tx.hypot(ty);
    Ok((tx / n, ty / n))
}

/// `dμ/dy` at the saddle: the negative root of `g_xx m² + 2 g_xy m + g_yy = 0`.
pub fn saddle_slope(g: &FieldHandle) -> Result<f64, FieldError> {
    let (x0, y0) = z0();
    let j = g.eval(x0, y0)?;
    let disc = (j.dxy * j.dxy - j.dxx * j.dyy).max(0.0).sqrt();
    let r1 = (-j.dxy + disc) / j.dxx;
    let r2 = (-j.dxy - disc) / j.dxx;
    Ok(r1.min(r2))
}

/// Continuation along `mu_grid`: each sample is predicted from the previous
/// one and its slope, then corrected by a bracketed solve.
pub fn trace_mu(eps: f64, p: &Perturbation, n_samples: usize) -> Result<(f64, NodalCurve), TraceError> {
    let g = g_handle(eps, p);
    let s = find_s_with(&g)?;
    let solver = MuSolver::new(g, s);
    let curve = trace_mu_with(&solver, n_samples)?;
    Ok((s, curve))
}

/// Closest approach to `s` at which `g` still resolves the curve: the
/// rounding spread of `g(0, ·)` just above `s`, divided by `g_y(0, s)`.
pub fn top_cluster_floor(solver: &MuSolver) -> Result<f64, FieldError> {
    let g = solver.field();
    let s = solver.s();
    if g.epsilon() == 0.0 {
        return Ok(CLUSTER_FLOOR);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for j in 0..16 {
        let v = g.value(0.0, s + j as f64 * 1e-13)?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let gy = g.eval(0.0, s)?.dy;
    let floor = if gy > 0.0 {
        TOP_NOISE_FACTOR * (hi - lo) / gy
    } else {
        CLUSTER_FLOOR
    };
    Ok(floor.clamp(CLUSTER_FLOOR, 1e-4))
}

pub fn trace_mu_with(solver: &MuSolver, n_samples: usize) -> Result<NodalCurve, TraceError> {
    let s = solver.s();
    let ys = mu_grid_with_floor(s, n_samples, top_cluster_floor(solver)?);
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(ys.len());
    let mut tangents = Vec::with_capacity(ys.len());
    let mut prev: Option<(f64, f64, f64)> = None;
    for &y in &ys {
        let guess = prev.and_then(|(py, pm, slope)| {
            let crosses = (py < Y_SADDLE) != (y < Y_SADDLE) || py == Y_SADDLE;
            let g = pm + slope * (y - py);
            (!crosses && g.is_finite()).then_some(g)
        });
        let mu = solver.solve(y, guess)?;
        let x_check = mu;
        let r = solver.field().value(x_check, y)?.abs();
        if r > SAMPLE_RESIDUAL {
            return Err(TraceError::Residual {
                x: x_check,
                y,
                residual: r,
            });
        }
        let t = mu_tangent(solver, y, mu)?;
        let slope = if t.1 > 0.0 { t.0 / t.1 } else { f64::NAN };
        prev = Some((y, mu, slope));
        samples.push((y, mu));
        tangents.push(t);
    }
    for w in samples.windows(2) {
        if !(w[1].1 < w[0].1) {
            return Err(TraceError::NonMonotone { y0: w[0].0, y1: w[1].0 });
        }
    }
    Ok(NodalCurve {
        axis: CurveAxis::ByY,
        samples,
        tangents: Some(tangents),
    })
}

/// Reflection `x ↦ 2π − x` of the part of `μ` below the saddle, mirrored to
/// negative `y`; every point is re-checked against `g`.
pub fn derive_interior(mu: &NodalCurve, g: &FieldHandle) -> Result<NodalCurve, TraceError> {
    let lower: Vec<(f64, f64)> = mu
        .samples
        .iter()
        .filter(|&&(y, _)| (0.0..=Y_SADDLE).contains(&y))
        .map(|&(y, m)| (y, 2.0 * PI - m))
        .collect();
    let mut samples: Vec<(f64, f64)> = lower
        .iter()
        .rev()
        .filter(|&&(y, _)| y > 0.0 && y < Y_SADDLE)
        .map(|&(y, x)| (-y, x))
        .collect();
    samples.extend(lower.iter().copied());
    for &(y, x) in &samples {
        let r = g.value(x, y)?.abs();
        if r > SAMPLE_RESIDUAL {
            return Err(TraceError::Residual { x, y, residual: r });
        }
    }
    Ok(NodalCurve {
        axis: CurveAxis::ByY,
        samples,
        tangents: None,
    })
}

/// Full trace: `s`, `μ` and the interior curve.
pub fn trace(eps: f64, p: &Perturbation, n_samples: usize) -> Result<TraceResult, TraceError> {
    let g = g_handle(eps, p);
    let s = find_s_with(&g)?;
    let solver = MuSolver::new(g.clone(), s);
    let mu = trace_mu_with(&solver, n_samples)?;
    let interior = derive_interior(&mu, &g)?;
    Ok(TraceResult {
        epsilon: eps,
        s,
        mu,
        interior,
    })
}

/// The graphs `x = ξ(y)` near `z1` and `y = η(x)` near `z2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalCurves {
    pub xi: NodalCurve,
    pub eta: NodalCurve,
    /// Second difference `2(η(h) − η(0))/h²` at the smallest sampled `h`.
    pub eta_second_difference: f64,
    /// `−g_xx(0, s)/g_y(0, s)`.
    pub eta_second_closed_form: f64,
}

fn geometric_then_uniform(end: f64, n: usize) -> Vec<f64> {
    let mut ts: Vec<f64> = (0..=n).map(|i| end * i as f64 / n as f64).collect();
    for j in 0..=40 {
        ts.push(end * 1e-2 * 10f64.powf(-(j as f64) / 8.0));
    }
    ts.sort_by(|a, b| a.total_cmp(b));
    ts.dedup();
    ts
}

/// Trace `ξ` on `[0, β]` and `η` on `[0, γ]` and check `ξ' > 0`, `η' < 0`,
/// `η''(0) < 0`.
pub fn local_xi_eta(eps: f64, p: &Perturbation, regions: &ConditionRegions) -> Result<LocalCurves, TraceError> {
    let g = g_handle(eps, p);
    let n = 400;
    let mut xi = Vec::new();
    for y in geometric_then_uniform(regions.beta, n) {
        let f = |x: f64| match g.eval(x, y) {
            Ok(j) => (j.value, j.dx),
            Err(_) => (f64::NAN, f64::NAN),
        };
        let x = safeguarded_newton(f, 0.0, regions.alpha, 0.5 * regions.alpha, 1e-300)
            .map_err(|source| TraceError::Root { y, source })?;
        xi.push((y, x));
    }
    let mut eta = Vec::new();
    let (lo, hi) = (Y_TOP - regions.delta, Y_TOP);
    for x in geometric_then_uniform(regions.gamma, n) {
        let f = |y: f64| match g.eval(x, y) {
            Ok(j) => (j.value, j.dy),
            Err(_) => (f64::NAN, f64::NAN),
        };
        let y = safeguarded_newton(f, lo, hi, hi, 1e-300).map_err(|source| TraceError::Root { y: x, source })?;
        eta.push((x, y));
    }
    for w in xi.windows(2) {
        if !(w[1].1 > w[0].1) {
            return Err(TraceError::LocalSign {
                what: "xi' > 0",
                at: w[1].0,
                value: w[1].1 - w[0].1,
            });
        }
    }
    for w in eta.windows(2) {
        if !(w[1].1 < w[0].1) {
            return Err(TraceError::LocalSign {
                what: "eta' < 0",
                at: w[1].0,
                value: w[1].1 - w[0].1,
            });
        }
    }
    let s = eta[0].1;
    let j = g.eval(0.0, s)?;
    let closed = -j.dxx / j.dy;
    // small against the √ε scale of the vertex, large against the noise of η
    let h = 1e-7;
    let f = |y: f64| match g.eval(h, y) {
        Ok(j) => (j.value, j.dy),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let eta_h = safeguarded_newton(f, lo, hi, s, 1e-300).map_err(|source| TraceError::Root { y: h, source })?;
    let second = 2.0 * (eta_h - s) / (h * h);
    if !(second < 0.0) {
        return Err(TraceError::LocalSign {
            what: "eta''(0) < 0",
            at: 0.0,
            value: second,
        });
    }
    Ok(LocalCurves {
        xi: NodalCurve {
            axis: CurveAxis::ByY,
            samples: xi,
            tangents: None,
        },
        eta: NodalCurve {
            axis: CurveAxis::ByX,
            samples: eta,
            tangents: None,
        },
        eta_second_difference: second,
        eta_second_closed_form: closed,
    })
}

/// Directions (degrees in `[0, 360)`, sorted) of the six nodal rays of `v`
/// at `z0`: the vertical line, the traced curve and its mirror image.
pub fn nodal_ray_angles(solver: &MuSolver, h: f64) -> Result<[f64; 6], TraceError> {
    let (x0, y0) = z0();
    let up = solver.solve(y0 + h, None)?;
    let down = solver.solve(y0 - h, None)?;
    let mut rays = vec![90.0, 270.0];
    for (x, y) in [
        (up, y0 + h),
        (down, y0 - h),
        (2.0 * PI - up, y0 + h),
        (2.0 * PI - down, y0 - h),
    ] {
        rays.push((y - y0).atan2(x - x0).to_degrees().rem_euclid(360.0));
    }
    rays.sort_by(|a, b| a.total_cmp(b));
    Ok([rays[0], rays[1], rays[2], rays[3], rays[4], rays[5]])
}

/// Largest deviation (degrees) of consecutive ray spacings from 60°.
pub fn equal_angle_deviation(angles: &[f64; 6]) -> f64 {
    (0..6)
        .map(|i| {
            let next = if i == 5 { angles[0] + 360.0 } else { angles[i + 1] };
            (next - angles[i] - 60.0).abs()
        })
        .fold(0.0, f64::max)
}

/// `μ μ'` from consecutive samples, `(μ_{i+1}² − μ_i²) / (2(y_{i+1} − y_i))`
/// (exact when `μ²` is linear, which it is to leading order at `s`), over the
/// last `count` sample pairs before `s`, with its predicted limit
/// `−g_y(0, s)/g_xx(0, s)`.
pub fn endpoint_products(
    mu: &NodalCurve,
    g: &FieldHandle,
    s: f64,
    count: usize,
) -> Result<(Vec<(f64, f64)>, f64), FieldError> {
    let n = mu.samples.len();
    let start = n.saturating_sub(count + 1);
    let vals = mu.samples[start..n]
        .windows(2)
        .filter(|w| w[1].0 < s)
        .map(|w| {
            let (y0, m0) = w[0];
            let (y1, m1) = w[1];
            (0.5 * (y0 + y1), 0.5 * (m1 + m0) * (m1 - m0) / (y1 - y0))
        })
        .collect();
    let j = g.eval(0.0, s)?;
    Ok((vals, -j.dy / j.dxx))
}

/// Least-squares line through the `(s − y, μ μ')` pairs with `s − y` in
/// `[lo, hi]`, evaluated at `s`.
pub fn extrapolate_endpoint_product(vals: &[(f64, f64)], s: f64, lo: f64, hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = vals
        .iter()
        .map(|&(y, v)| (s - y, v))
        .filter(|&(u, _)| (lo..=hi).contains(&u))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mu = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mu).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mu) * (p.1 - mv)).sum();
    let slope = sxy / sxx;
    Some(mv - slope * mu)
}
