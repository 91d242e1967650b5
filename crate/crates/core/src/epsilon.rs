//! Grid certification that a given `ε` is small enough, and the halving
//! search for one.
//!
//! Four checks are run on the factored field `g` (with `v = g sin x`):
//!
//! * the saddle at `z0 = (π, π/√3)`: `g` and `∇g` vanish, the Hessian is
//!   close to `diag(−1, 3)` and the level set is a simple cross;
//! * the rectangle at `z1 = (0, 0)` where the curve `x = ξ(y)` lives;
//! * the rectangle at `z2 = (0, 2π/√3)` where the curve `y = η(x)` lives;
//! * the global picture on `[0, π] × [0, 2π/√3]` minus three balls: the zero
//!   set stays in thin tubes around the unperturbed lines `x = 2π − √3 y` and
//!   `x = √3 y` and crosses each tube transversally.
//!
//! Signs are sampled on dense grids; each check reports its smallest slack.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeffs::Perturbation;
use crate::field::{z0, z1, z2, FieldError, FieldHandle, FieldKind, SQRT3};
use crate::roots::bisect;

/// Floor on `|λ|` for both Hessian eigenvalues at `z0`.
pub const EIGEN_FLOOR: f64 = 0.1;
/// Floor on `|∇g|` at sampled zero crossings.
pub const GRADIENT_FLOOR: f64 = 0.05;
/// Half-width of the tubes around the unperturbed nodal lines.
pub const TUBE_RADIUS: f64 = 0.2;
/// Largest admissible `‖D²g(z0) − diag(−1, 3)‖_max`.
pub const SADDLE_PROXIMITY: f64 = 0.5;
/// `g(z0)` and `∇g(z0)` must vanish to this accuracy.
pub const Z0_TOLERANCE: f64 = 1e-10;
/// Candidate rectangle half-sizes.
pub const RECT_MENU: [f64; 4] = [0.1, 0.2, 0.3, 0.5];
/// Candidate radii of the analysis ball at `z0`.
pub const SADDLE_BALL_MENU: [f64; 3] = [0.3, 0.2, 0.1];
/// Samples per side of the rectangle grids.
pub const RECT_GRID: usize = 200;
/// Screening grid of the rectangle checks.
pub const SCREEN_GRID: usize = 20;
/// Samples per side of the global grid.
pub const GLOBAL_GRID: usize = 400;
/// Smallest exponent tried by the halving search, `ε = 2^-m`.
pub const MAX_HALVINGS: u32 = 60;

const Y_MID: f64 = PI / SQRT3;
const Y_TOP: f64 = 2.0 * PI / SQRT3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConditionError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("no epsilon = 2^-m with m <= {max} passes; at the last candidate: {failing}")]
    NoAdmissibleEpsilon { max: u32, failing: String },
}

/// Sizes of the local analysis regions around `z0`, `z1`, `z2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionRegions {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Radius of the balls excluded from the global check.
    pub r: f64,
    /// Radius of the saddle analysis ball at `z0`.
    pub r0: f64,
}

impl ConditionRegions {
    /// Bounds and ball-in-rectangle containments.
    pub fn is_consistent(&self) -> bool {
        let bounds = self.alpha > 0.0
            && self.alpha < PI
            && self.beta > 0.0
            && self.beta < Y_MID
            && self.gamma > 0.0
            && self.delta > 0.0
            && self.r > 0.0
            && self.r0 > 0.0;
        // closed balls inside the open rectangles / analysis ball
        bounds
            && self.r < self.r0
            && self.r < self.alpha
            && self.r < self.beta
            && self.r < self.gamma
            && self.r < self.delta
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub pass: bool,
    pub epsilon: f64,
    /// Smallest slack per condition.
    pub margins: BTreeMap<String, f64>,
    pub regions: ConditionRegions,
    /// Named sub-conditions that failed.
    pub failures: Vec<String>,
}

impl ConditionReport {
    pub fn min_margin(&self) -> f64 {
        self.margins.values().fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddleCheck {
    pub margin: f64,
    pub eigenvalues: (f64, f64),
    pub hessian: [f64; 3],
    pub value: f64,
    pub gradient: f64,
    /// Largest menu radius on whose circles `g` changes sign exactly four times.
    pub r0: Option<f64>,
    pub failures: Vec<String>,
}

fn g_handle(eps: f64, p: &Perturbation) -> FieldHandle {
    FieldHandle::new(FieldKind::G, eps, p)
}

fn sign_changes_on_circle(g: &FieldHandle, center: (f64, f64), radius: f64) -> Result<usize, FieldError> {
    let n = 1440;
    let vals: Vec<f64> = (0..n)
        .map(|i| {
            let t = 2.0 * PI * (i as f64 + 0.5) / n as f64;
            g.value(center.0 + radius * t.cos(), center.1 + radius * t.sin())
        })
        .collect::<Result<_, _>>()?;
    Ok((0..n)
        .filter(|&i| vals[i].signum() != vals[(i + 1) % n].signum())
        .count())
}

/// Morse-saddle certification at `z0`.
pub fn check_saddle_z0(eps: f64, p: &Perturbation) -> Result<SaddleCheck, FieldError> {
    let g = g_handle(eps, p);
    let (x0, y0) = z0();
    let j = g.eval(x0, y0)?;
    let (l1, l2) = j.hessian_eigenvalues();
    let proximity = (j.dxx + 1.0).abs().max((j.dyy - 3.0).abs()).max(j.dxy.abs());
    let mut failures = Vec::new();
    let mut slacks = vec![-l1 - EIGEN_FLOOR, l2 - EIGEN_FLOOR, SADDLE_PROXIMITY - proximity];
    if -l1 - EIGEN_FLOOR <= 0.0 || l2 - EIGEN_FLOOR <= 0.0 {
        failures.push(format!(
            "saddle_z0: eigenvalues ({l1:.4}, {l2:.4}) lack (-, +) signature above {EIGEN_FLOOR}"
        ));
    }
    if SADDLE_PROXIMITY - proximity <= 0.0 {
        failures.push(format!(
            "saddle_z0: Hessian deviates from diag(-1, 3) by {proximity:.3e}"
        ));
    }
    let grad = j.gradient_norm();
    if j.value.abs() > Z0_TOLERANCE || grad > Z0_TOLERANCE {
        slacks.push(-(j.value.abs().max(grad)));
        failures.push(format!("saddle_z0: g = {:.3e}, |grad g| = {grad:.3e} at z0", j.value));
    }
    let mut r0 = None;
    for &rad in &SADDLE_BALL_MENU {
        let ok = [0.25, 0.5, 1.0]
            .iter()
            .map(|f| sign_changes_on_circle(&g, (x0, y0), rad * f))
            .collect::<Result<Vec<_>, _>>()?
            .iter()
            .all(|&c| c == 4);
        if ok {
            r0 = Some(rad);
            break;
        }
    }
    if r0.is_none() {
        slacks.push(-1.0);
        failures.push("saddle_z0: level set near z0 is not a simple cross on any menu radius".into());
    }
    let margin = slacks.iter().fold(f64::INFINITY, |m, &s| m.min(s));
    Ok(SaddleCheck {
        margin,
        eigenvalues: (l1, l2),
        hessian: [j.dxx, j.dxy, j.dyy],
        value: j.value,
        gradient: grad,
        r0,
        failures,
    })
}

/// Outcome of one rectangle check at the chosen sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectCheck {
    pub margin: f64,
    /// Half-width in `x`.
    pub width: f64,
    /// Half-height (`z1`) or depth below the top (`z2`).
    pub height: f64,
    pub slacks: BTreeMap<String, f64>,
    pub admissible: bool,
}

impl RectCheck {
    fn failures(&self, label: &str) -> Vec<String> {
        self.slacks
            .iter()
            .filter(|(_, &v)| !(v > 0.0))
            .map(|(k, v)| format!("{label}: {k} slack {v:.3e} at ({}, {})", self.width, self.height))
            .collect()
    }
}

fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> + Clone {
    (0..=n).map(move |i| a + (b - a) * i as f64 / n as f64)
}

fn grid_min<F>(xs: (f64, f64), ys: (f64, f64), n: usize, f: F) -> Result<f64, FieldError>
where
    F: Fn(f64, f64) -> Result<f64, FieldError> + Sync,
{
    Ok(grid_min_many(xs, ys, n, |x, y| Ok([f(x, y)?]))?[0])
}

/// Componentwise minima of `f` over an `(n + 1)²` grid.
fn grid_min_many<const K: usize, F>(xs: (f64, f64), ys: (f64, f64), n: usize, f: F) -> Result<[f64; K], FieldError>
where
    F: Fn(f64, f64) -> Result<[f64; K], FieldError> + Sync,
{
    let fold = |a: [f64; K], b: [f64; K]| {
        let mut out = a;
        for (o, v) in out.iter_mut().zip(b) {
            *o = o.min(v);
        }
        out
    };
    (0..=n)
        .into_par_iter()
        .map(|i| {
            let x = xs.0 + (xs.1 - xs.0) * i as f64 / n as f64;
            linspace(ys.0, ys.1, n).try_fold([f64::INFINITY; K], |m, y| Ok(fold(m, f(x, y)?)))
        })
        .try_reduce(|| [f64::INFINITY; K], |a, b| Ok(fold(a, b)))
}

fn segment_min<F>(a: (f64, f64), b: (f64, f64), n: usize, f: F) -> Result<f64, FieldError>
where
    F: Fn(f64, f64) -> Result<f64, FieldError>,
{
    linspace(0.0, 1.0, n).try_fold(f64::INFINITY, |m, t| {
        Ok(m.min(f(a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)?))
    })
}

fn finish_rect(width: f64, height: f64, slacks: BTreeMap<String, f64>) -> RectCheck {
    let margin = slacks.values().fold(f64::INFINITY, |m, &v| m.min(v));
    RectCheck {
        margin,
        width,
        height,
        admissible: margin > 0.0,
        slacks,
    }
}

/// The four sign conditions at `z1` for one rectangle `[0, α] × [−β, β]`.
pub fn rect_z1_slacks(eps: f64, p: &Perturbation, alpha: f64, beta: f64) -> Result<RectCheck, FieldError> {
    rect_z1_on_grid(eps, p, alpha, beta, RECT_GRID)
}

fn rect_z1_on_grid(eps: f64, p: &Perturbation, alpha: f64, beta: f64, n: usize) -> Result<RectCheck, FieldError> {
    let g = g_handle(eps, p);
    let mut s = BTreeMap::new();
    let [psi, gxx] = grid_min_many((0.0, alpha), (-beta, beta), n, |x, y| {
        let j = g.eval(x, y)?;
        Ok([-g.psi_factor(x, y)?.value, j.dxx])
    })?;
    s.insert("psi_tilde_negative".to_string(), psi);
    s.insert("gxx_positive".to_string(), gxx);
    s.insert(
        "right_edge_positive".to_string(),
        segment_min((alpha, -beta), (alpha, beta), n, |x, y| g.value(x, y))?,
    );
    s.insert(
        "gyy_negative".to_string(),
        grid_min((alpha / n as f64, alpha), (beta / n as f64, beta), n, |x, y| {
            Ok(-g.eval(x, y)?.dyy)
        })?,
    );
    // g(0, y) = cos(√3 y) − 1 + ε ψ̃(0, y) is of order ε; judged relative to ε.
    let left = segment_min((0.0, -beta), (0.0, beta), n, |x, y| Ok(-g.value(x, y)?))?;
    s.insert(
        "left_edge_negative".to_string(),
        if eps > 0.0 { left / eps } else { left },
    );
    Ok(finish_rect(alpha, beta, s))
}

/// The four sign conditions at `z2` for one rectangle `[−γ, γ] × [2π/√3 − δ, 2π/√3]`.
pub fn rect_z2_slacks(eps: f64, p: &Perturbation, gamma: f64, delta: f64) -> Result<RectCheck, FieldError> {
    rect_z2_on_grid(eps, p, gamma, delta, RECT_GRID)
}

fn rect_z2_on_grid(eps: f64, p: &Perturbation, gamma: f64, delta: f64, n: usize) -> Result<RectCheck, FieldError> {
    let g = g_handle(eps, p);
    let scale = if eps > 0.0 { eps } else { 1.0 };
    let mut s = BTreeMap::new();
    // on the top edge g = 1 − cos x + ε ψ̃ is of order ε near x = 0
    s.insert(
        "top_edge_positive".to_string(),
        segment_min((-gamma, Y_TOP), (gamma, Y_TOP), n, |x, y| g.value(x, y))? / scale,
    );
    s.insert(
        "gy_positive".to_string(),
        grid_min((-gamma, gamma), (Y_TOP - delta, Y_TOP), n, |x, y| Ok(g.eval(x, y)?.dy))? / scale,
    );
    s.insert(
        "bottom_edge_negative".to_string(),
        segment_min((-gamma, Y_TOP - delta), (gamma, Y_TOP - delta), n, |x, y| {
            Ok(-g.value(x, y)?)
        })?,
    );
    s.insert(
        "gxx_positive".to_string(),
        grid_min((0.0, gamma), (Y_TOP - delta, Y_TOP), n, |x, y| Ok(g.eval(x, y)?.dxx))?,
    );
    Ok(finish_rect(gamma, delta, s))
}

/// A violation found on the coarse screening grid is final; otherwise the
/// rectangle is rechecked on the full grid.
fn screened<F>(f: F) -> Result<RectCheck, FieldError>
where
    F: Fn(usize) -> Result<RectCheck, FieldError>,
{
    let coarse = f(SCREEN_GRID)?;
    if !(coarse.margin > 0.0) {
        return Ok(coarse);
    }
    f(RECT_GRID)
}

fn best_rect<F>(f: F) -> Result<RectCheck, FieldError>
where
    F: Fn(f64, f64) -> Result<RectCheck, FieldError>,
{
    let mut best: Option<RectCheck> = None;
    for &a in &RECT_MENU {
        for &b in &RECT_MENU {
            let c = f(a, b)?;
            let better = match &best {
                None => true,
                Some(cur) => c.margin > cur.margin,
            };
            if better {
                best = Some(c);
            }
        }
    }
    Ok(best.expect("menu is non-empty"))
}

/// Menu search for `(α, β)` at `z1`; returns the best-margin rectangle.
pub fn check_rect_z1(eps: f64, p: &Perturbation) -> Result<RectCheck, FieldError> {
    best_rect(|a, b| {
        if b >= Y_MID || a >= PI {
            return Ok(finish_rect(a, b, BTreeMap::from([("bounds".to_string(), -1.0)])));
        }
        screened(|n| rect_z1_on_grid(eps, p, a, b, n))
    })
}

/// Menu search for `(γ, δ)` at `z2`; returns the best-margin rectangle.
pub fn check_rect_z2(eps: f64, p: &Perturbation) -> Result<RectCheck, FieldError> {
    best_rect(|c, d| screened(|n| rect_z2_on_grid(eps, p, c, d, n)))
}

/// The two unperturbed nodal segments in the fundamental cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodalLine {
    /// `x = 2π − √3 y`, from `z0` to `z2`.
    Descending,
    /// `x = √3 y`, from `z1` to `z0`.
    Ascending,
}

impl NodalLine {
    fn endpoints(self) -> ((f64, f64), (f64, f64)) {
        match self {
            NodalLine::Descending => (z0(), z2()),
            NodalLine::Ascending => (z1(), z0()),
        }
    }

    /// Perpendicular distance to the line.
    fn distance(self, x: f64, y: f64) -> f64 {
        match self {
            NodalLine::Descending => (x + SQRT3 * y - 2.0 * PI).abs() / 2.0,
            NodalLine::Ascending => (x - SQRT3 * y).abs() / 2.0,
        }
    }

    /// Unit normal.
    fn normal(self) -> (f64, f64) {
        match self {
            NodalLine::Descending => (0.5, SQRT3 / 2.0),
            NodalLine::Ascending => (0.5, -SQRT3 / 2.0),
        }
    }

    /// Sign of `g_x g_y` along the curve: its tangent points into
    /// `{x > 0, y < 0}` for the descending line and `{x > 0, y > 0}` for the
    /// ascending one.
    fn tangent_sign(self) -> f64 {
        match self {
            NodalLine::Descending => 1.0,
            NodalLine::Ascending => -1.0,
        }
    }
}

/// Tube half-width at distance `rho` from `z0`, narrowed near the crossing.
fn tube_halfwidth(rho: f64) -> f64 {
    TUBE_RADIUS.min(0.4 * rho)
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn in_ball(x: f64, y: f64, r: f64) -> bool {
    [z0(), z1(), z2()].iter().any(|&z| dist((x, y), z) < r)
}

fn in_tube(x: f64, y: f64) -> bool {
    let rho = dist((x, y), z0());
    let w = tube_halfwidth(rho);
    [NodalLine::Descending, NodalLine::Ascending]
        .iter()
        .any(|l| l.distance(x, y) < w)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalCheck {
    pub margin: f64,
    /// min of `g · sign(w̃)` on the grid outside tubes and balls.
    pub sign_slack: f64,
    /// min `|∇g|` at the transversal crossings.
    pub min_crossing_gradient: f64,
    /// min of the normalized tangent-direction slack at the crossings.
    pub min_tangent_slack: f64,
    pub transversals: usize,
    pub bad_transversals: usize,
    pub failures: Vec<String>,
}

/// Global certification on `[0, π] × [0, 2π/√3]` minus the balls of radius `regions.r`.
pub fn check_global(eps: f64, p: &Perturbation, regions: &ConditionRegions) -> Result<GlobalCheck, FieldError> {
    let g = g_handle(eps, p);
    let r = regions.r;
    let n = GLOBAL_GRID;

    let sign_slack = (0..=n)
        .into_par_iter()
        .map(|i| {
            let x = PI * i as f64 / n as f64;
            linspace(0.0, Y_TOP, n).try_fold(f64::INFINITY, |m, y| {
                if in_ball(x, y, r) || in_tube(x, y) {
                    return Ok(m);
                }
                let w = (SQRT3 * y).cos() - x.cos();
                Ok(m.min(g.value(x, y)? * w.signum()))
            })
        })
        .try_reduce(|| f64::INFINITY, |a, b| Ok(a.min(b)))?;

    let mut failures = Vec::new();
    if !(sign_slack > 0.0) {
        failures.push(format!(
            "global: sign of g differs from the unperturbed sign outside the tubes (slack {sign_slack:.3e})"
        ));
    }

    let mut min_grad = f64::INFINITY;
    let mut min_tangent = f64::INFINITY;
    let mut count = 0;
    let mut bad = 0;
    for line in [NodalLine::Descending, NodalLine::Ascending] {
        let (a, b) = line.endpoints();
        let len = dist(a, b);
        let (nx, ny) = line.normal();
        let steps = (len / 0.005).ceil() as usize;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let c = (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
            if in_ball(c.0, c.1, r) {
                continue;
            }
            let hw = tube_halfwidth(dist(c, z0()));
            // clip the transversal to the cell
            let mut lo = -hw;
            let mut hi = hw;
            for (pc, nc, bound_lo, bound_hi) in [(c.0, nx, 0.0, PI), (c.1, ny, 0.0, Y_TOP)] {
                if nc.abs() > 0.0 {
                    let s1 = (bound_lo - pc) / nc;
                    let s2 = (bound_hi - pc) / nc;
                    lo = lo.max(s1.min(s2));
                    hi = hi.min(s1.max(s2));
                }
            }
            count += 1;
            let m = 64;
            let at = |s: f64| (c.0 + nx * s, c.1 + ny * s);
            let vals: Vec<f64> = linspace(lo, hi, m)
                .map(|s| {
                    let (x, y) = at(s);
                    g.value(x, y)
                })
                .collect::<Result<_, _>>()?;
            let changes: Vec<usize> = (0..m).filter(|&k| vals[k].signum() != vals[k + 1].signum()).collect();
            if changes.len() != 1 {
                bad += 1;
                if bad <= 3 {
                    failures.push(format!(
                        "global: transversal at ({:.4}, {:.4}) of {line:?} has {} sign changes",
                        c.0,
                        c.1,
                        changes.len()
                    ));
                }
                continue;
            }
            let k = changes[0];
            let s0 = lo + (hi - lo) * k as f64 / m as f64;
            let s1 = lo + (hi - lo) * (k + 1) as f64 / m as f64;
            let root = bisect(
                |s| {
                    let (x, y) = at(s);
                    g.value(x, y).unwrap_or(f64::NAN)
                },
                s0,
                s1,
                1e-14,
            )
            .map_err(|_| FieldError::Overflow {
                k: 0,
                y: c.1,
                arg: f64::NAN,
            })?;
            let (x, y) = at(root);
            let j = g.eval(x, y)?;
            let gn = j.gradient_norm();
            min_grad = min_grad.min(gn);
            min_tangent = min_tangent.min(line.tangent_sign() * j.dx * j.dy / (gn * gn));
        }
    }
    if min_grad < GRADIENT_FLOOR {
        failures.push(format!(
            "global: |grad g| = {min_grad:.3e} below {GRADIENT_FLOOR} at a crossing"
        ));
    }
    if !(min_tangent > 0.0) {
        failures.push(format!(
            "global: curve tangent leaves its quadrant (slack {min_tangent:.3e})"
        ));
    }
    let mut margin = sign_slack.min(min_grad - GRADIENT_FLOOR).min(min_tangent);
    if bad > 0 {
        margin = margin.min(-(bad as f64));
    }
    Ok(GlobalCheck {
        margin,
        sign_slack,
        min_crossing_gradient: min_grad,
        min_tangent_slack: min_tangent,
        transversals: count,
        bad_transversals: bad,
        failures,
    })
}

/// Run all four checks at one `ε`.
pub fn check_all(eps: f64, p: &Perturbation) -> Result<ConditionReport, ConditionError> {
    check_staged(eps, p, false)
}

/// With `short_circuit`, the global sweep is skipped (margin `NaN`) when a
/// local check already failed.
fn check_staged(eps: f64, p: &Perturbation, short_circuit: bool) -> Result<ConditionReport, ConditionError> {
    let saddle = check_saddle_z0(eps, p)?;
    let z1r = check_rect_z1(eps, p)?;
    let z2r = check_rect_z2(eps, p)?;
    let r0 = saddle.r0.unwrap_or(SADDLE_BALL_MENU[SADDLE_BALL_MENU.len() - 1]);
    let smallest = [r0, z1r.width, z1r.height, z2r.width, z2r.height]
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v));
    let regions = ConditionRegions {
        alpha: z1r.width,
        beta: z1r.height,
        gamma: z2r.width,
        delta: z2r.height,
        r: 0.9 * smallest,
        r0,
    };
    let mut failures = saddle.failures.clone();
    failures.extend(z1r.failures("rect_z1"));
    failures.extend(z2r.failures("rect_z2"));
    let global_margin = if short_circuit && !failures.is_empty() {
        failures.push("global: not evaluated".into());
        f64::NAN
    } else {
        let global = check_global(eps, p, &regions)?;
        failures.extend(global.failures.iter().cloned());
        global.margin
    };
    if eps <= 0.0 {
        failures.push(format!("epsilon = {eps} is not positive"));
    }
    let margins = BTreeMap::from([
        ("saddle_z0".to_string(), saddle.margin),
        ("rect_z1".to_string(), z1r.margin),
        ("rect_z2".to_string(), z2r.margin),
        ("global".to_string(), global_margin),
    ]);
    let pass = eps > 0.0 && margins.values().all(|&m| m > 0.0) && regions.is_consistent();
    Ok(ConditionReport {
        pass,
        epsilon: eps,
        margins,
        regions,
        failures,
    })
}

/// Halving search `ε = 1, 1/2, 1/4, …` down to `2^-MAX_HALVINGS`.
pub fn select_epsilon(p: &Perturbation) -> Result<(f64, ConditionReport), ConditionError> {
    select_epsilon_within(p, MAX_HALVINGS)
}

pub fn select_epsilon_within(p: &Perturbation, max_halvings: u32) -> Result<(f64, ConditionReport), ConditionError> {
    let mut last = None;
    for m in 0..=max_halvings {
        let eps = 2f64.powi(-(m as i32));
        let report = check_staged(eps, p, true)?;
        if report.pass {
            return Ok((eps, report));
        }
        last = Some(report);
    }
    let failing = last.map(|r| r.failures.join("; ")).unwrap_or_default();
    Err(ConditionError::NoAdmissibleEpsilon {
        max: max_halvings,
        failing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{select_waveset, solve_perturbation};
    use std::sync::OnceLock;

    fn canonical() -> &'static Perturbation {
        static P: OnceLock<Perturbation> = OnceLock::new();
        P.get_or_init(|| solve_perturbation(&select_waveset(6).unwrap()).unwrap())
    }

    #[test]
    fn unperturbed_saddle_is_diag_minus_one_three() {
        let s = check_saddle_z0(0.0, canonical()).unwrap();
        assert!((s.hessian[0] + 1.0).abs() < 1e-14);
        assert!(s.hessian[1].abs() < 1e-14);
        assert!((s.hessian[2] - 3.0).abs() < 1e-14);
        assert!(s.eigenvalues.0 < 0.0 && s.eigenvalues.1 > 0.0);
        assert!(s.margin > 0.0);
    }

    #[test]
    fn huge_epsilon_breaks_saddle_proximity() {
        let s = check_saddle_z0(10.0, canonical()).unwrap();
        assert!(s.margin < 0.0);
        assert!(s.failures.iter().any(|f| f.contains("diag(-1, 3)")));
    }

    #[test]
    fn zero_epsilon_is_rejected_at_z1_and_z2() {
        let p = canonical();
        let z1r = rect_z1_slacks(0.0, p, 0.3, 0.1).unwrap();
        assert!(z1r.slacks["left_edge_negative"] <= 0.0);
        assert!(!z1r.admissible);
        let z2r = rect_z2_slacks(0.0, p, 0.1, 0.1).unwrap();
        assert!(z2r.slacks["top_edge_positive"] <= 0.0);
        assert!(!check_all(0.0, p).unwrap().pass);
    }

    #[test]
    fn psi_tilde_at_z1_is_the_normalized_slope() {
        let g = FieldHandle::new(FieldKind::G, 1.0, canonical());
        assert!((g.psi_factor(0.0, 0.0).unwrap().value + 1.0).abs() < 1e-9);
        // the top row cancels terms of size ~1e12 in f64
        assert!((g.psi_factor(0.0, Y_TOP).unwrap().value - 1.0).abs() < 1e-3);
    }

    #[test]
    fn unit_epsilon_fails() {
        let r = check_all(1.0, canonical()).unwrap();
        assert!(!r.pass);
        assert!(r.min_margin() < 0.0);
    }

    #[test]
    fn search_returns_passing_report_and_half_also_passes() {
        let p = canonical();
        let (eps, report) = select_epsilon(p).unwrap();
        assert!(report.pass);
        assert_eq!(report.epsilon, eps);
        assert!(report.margins.values().all(|&m| m > 0.0));
        assert!(report.regions.is_consistent());
        let again = check_all(eps, p).unwrap();
        assert!(again.pass);
        assert!(check_all(eps / 2.0, p).unwrap().pass);
        // the selected rectangles satisfy the containments of the region type
        let r = report.regions;
        assert!(r.r < r.alpha.min(r.beta).min(r.gamma).min(r.delta).min(r.r0));
    }

    #[test]
    fn search_floor_is_reported() {
        let err = select_epsilon_within(canonical(), 3).unwrap_err();
        assert!(matches!(err, ConditionError::NoAdmissibleEpsilon { max: 3, .. }));
        assert!(err.to_string().contains("rect_z2") || err.to_string().contains("saddle"));
    }

    #[test]
    fn regions_consistency_rejects_oversized_ball() {
        let r = ConditionRegions {
            alpha: 0.5,
            beta: 0.1,
            gamma: 0.1,
            delta: 0.5,
            r: 0.2,
            r0: 0.3,
        };
        assert!(!r.is_consistent());
        assert!(ConditionRegions { r: 0.09, ..r }.is_consistent());
    }
}
