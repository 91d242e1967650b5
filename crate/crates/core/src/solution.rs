//! The constructed triple: the domain `Ω`, the solution `u` and the source `h`.
//!
//! `u(x, y) = σ (U(x, y) − U(μ(|y|), y))` where `U` is the closed-form
//! `x`-antiderivative of `v`. On the boundary curve `v = 0`, so
//! `h = −σ (v_x² + v_y²)/v_x = −σ sin μ (g_x² + g_y²)/g_x` there.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeffs::Perturbation;
use crate::field::{FieldError, FieldHandle, FieldKind};
use crate::nodal::{MuSolver, NodalCurve, TraceError, TraceResult, Y_SADDLE};

/// Half-width of the windows around `π/√3` and `s` where `h` is extrapolated.
pub const H_WINDOW: f64 = 1e-3;
/// Largest admissible disagreement of the extrapolations at a window.
pub const H_EXTRAPOLATION_TOLERANCE: f64 = 1e-6;
/// Tolerance of the quadrature cross-check of `u`.
pub const QUADRATURE_TOLERANCE: f64 = 1e-12;
/// Step of the fourth-order differences of `U(μ(y), y)`.
pub const FD_STEP: f64 = 1e-3;
/// Uniform `h` samples on `[0, s]`.
pub const H_SAMPLES: usize = 4001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolutionError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("({x}, {y}) is outside the closure of the domain")]
    OutsideDomain { x: f64, y: f64 },
    #[error("extrapolations of h disagree by {mismatch:e} at y = {at}")]
    Extrapolation { at: f64, mismatch: f64 },
}

/// `Ω = {|y| < s, |x| < μ(|y|)}` and the sign `σ` applied to `v`.
#[derive(Clone, Debug)]
pub struct DomainOmega {
    pub s: f64,
    pub mu: NodalCurve,
    /// `+1` or `−1`, chosen so that `σ v > 0` near `(−3π/2, 0)`.
    pub orientation: i8,
    solver: MuSolver,
}

impl DomainOmega {
    pub fn sigma(&self) -> f64 {
        f64::from(self.orientation)
    }

    pub fn solver(&self) -> &MuSolver {
        &self.solver
    }

    /// `μ(|y|)` polished from the interpolated samples; `None` for `|y| > s`.
    pub fn mu_at(&self, y: f64) -> Result<Option<f64>, SolutionError> {
        let a = y.abs();
        if a > self.s {
            return Ok(None);
        }
        let guess = self.mu.interpolate(a);
        Ok(Some(self.solver.solve(a, guess)?))
    }

    pub fn contains(&self, x: f64, y: f64) -> Result<bool, SolutionError> {
        if y.abs() >= self.s {
            return Ok(false);
        }
        Ok(self.mu_at(y)?.is_some_and(|m| x.abs() < m))
    }

    /// Largest `μ` (at `y = 0`) and `s`: `Ω ⊂ [−μ(0), μ(0)] × [−s, s]`.
    pub fn bounding_box(&self) -> (f64, f64) {
        (self.mu.samples.first().map_or(2.0 * PI, |&(_, m)| m), self.s)
    }

    /// `n` points of `∂Ω`, spread over the four symmetric arcs.
    pub fn boundary_points(&self, n: usize) -> Result<Vec<(f64, f64)>, SolutionError> {
        let per_arc = n.div_ceil(4).max(1);
        let mut out = Vec::with_capacity(4 * per_arc);
        for i in 0..per_arc {
            // cosine spacing keeps points near both ends of the arc
            let t = 0.5 * (1.0 - (PI * (i as f64 + 0.5) / per_arc as f64).cos());
            let y = t * self.s;
            let m = self.mu_at(y)?.expect("inside the height range");
            for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
                out.push((sx * m, sy * y));
            }
        }
        out.truncate(n);
        Ok(out)
    }
}

/// `σ` from the sign of `v` at `(−3π/2, 0)`.
pub fn build_domain(trace: &TraceResult, eps: f64, p: &Perturbation) -> Result<DomainOmega, SolutionError> {
    let v = FieldHandle::new(FieldKind::V, eps, p).value(-1.5 * PI, 0.0)?;
    let g = FieldHandle::new(FieldKind::G, eps, p);
    Ok(DomainOmega {
        s: trace.s,
        mu: trace.mu.clone(),
        orientation: if v >= 0.0 { 1 } else { -1 },
        solver: MuSolver::new(g, trace.s),
    })
}

/// `u = σ (U(x, y) − U(μ(|y|), y))` with its field handles.
#[derive(Clone, Debug)]
pub struct SolutionU {
    pub domain: DomainOmega,
    pub epsilon: f64,
    antiderivative: FieldHandle,
    v: FieldHandle,
    g: FieldHandle,
}

impl SolutionU {
    pub fn new(domain: DomainOmega, eps: f64, p: &Perturbation) -> Self {
        Self {
            domain,
            epsilon: eps,
            antiderivative: FieldHandle::new(FieldKind::U, eps, p),
            v: FieldHandle::new(FieldKind::V, eps, p),
            g: FieldHandle::new(FieldKind::G, eps, p),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.domain.sigma()
    }

    pub fn v_field(&self) -> &FieldHandle {
        &self.v
    }

    pub fn g_field(&self) -> &FieldHandle {
        &self.g
    }

    pub fn antiderivative(&self) -> &FieldHandle {
        &self.antiderivative
    }

    /// `u` with `μ(|y|)` supplied; no domain check.
    pub fn u_given_mu(&self, x: f64, y: f64, mu: f64) -> Result<f64, FieldError> {
        let a = self.antiderivative.value(x, y)?;
        let b = self.antiderivative.value(mu, y)?;
        Ok(self.sigma() * (a - b))
    }

    /// `u(x, y)` on the closure of `Ω` (relative slack `1e-12` on `|x| ≤ μ`).
    pub fn eval_u(&self, x: f64, y: f64) -> Result<f64, SolutionError> {
        let mu = self
            .domain
            .mu_at(y)?
            .filter(|&m| x.abs() <= m * (1.0 + 1e-12))
            .ok_or(SolutionError::OutsideDomain { x, y })?;
        Ok(self.u_given_mu(x, y, mu)?)
    }

    /// `∇u = σ (v(x, y), U_y(x, y) − U_y(μ, y))`, using `d/dy U(μ(y), y) = U_y(μ, y)` (as `v(μ, y) = 0`).
    pub fn gradient_given_mu(&self, x: f64, y: f64, mu: f64) -> Result<(f64, f64), FieldError> {
        let sigma = self.sigma();
        let vx = self.v.value(x, y)?;
        let uy = self.antiderivative.eval(x, y)?.dy - self.antiderivative.eval(mu, y)?.dy;
        Ok((sigma * vx, sigma * uy))
    }

    /// `σ ∫_{μ(|y|)}^x v(t, y) dt` by adaptive Simpson.
    pub fn u_by_quadrature(&self, x: f64, y: f64) -> Result<f64, SolutionError> {
        let mu = self.domain.mu_at(y)?.ok_or(SolutionError::OutsideDomain { x, y })?;
        let f = |t: f64| self.v.value(t, y).unwrap_or(f64::NAN);
        Ok(self.sigma() * adaptive_simpson(&f, mu, x, QUADRATURE_TOLERANCE))
    }

    /// `F(y) = U(μ(|y|), y)`.
    pub fn boundary_antiderivative(&self, y: f64) -> Result<f64, SolutionError> {
        let mu = self
            .domain
            .mu_at(y)?
            .ok_or(SolutionError::OutsideDomain { x: f64::NAN, y })?;
        Ok(self.antiderivative.value(mu, y)?)
    }

    /// `F'' + 4F` with fourth-order central differences of step `step`.
    pub fn boundary_operator(&self, y: f64, step: f64) -> Result<f64, SolutionError> {
        let f = |k: f64| self.boundary_antiderivative(y + k * step);
        let (m2, m1, c, p1, p2) = (f(-2.0)?, f(-1.0)?, f(0.0)?, f(1.0)?, f(2.0)?);
        let second = (-m2 + 16.0 * m1 - 30.0 * c + 16.0 * p1 - p2) / (12.0 * step * step);
        Ok(second + 4.0 * c)
    }

    /// `Δu + 4u` at `(x, y)` given `F'' + 4F` at `y`.
    pub fn pde_operator_given(&self, x: f64, y: f64, boundary_op: f64) -> Result<f64, FieldError> {
        let j = self.antiderivative.eval(x, y)?;
        Ok(self.sigma() * (j.dxx + j.dyy + 4.0 * j.value - boundary_op))
    }

    /// `h(y) = −σ sin μ (g_x² + g_y²)/g_x` on the boundary curve.
    pub fn h_direct(&self, y: f64) -> Result<f64, SolutionError> {
        let a = y.abs();
        let mu = self
            .domain
            .mu_at(a)?
            .ok_or(SolutionError::OutsideDomain { x: f64::NAN, y })?;
        let j = self.g.eval(mu, y)?;
        Ok(-self.sigma() * mu.sin() * (j.dx * j.dx + j.dy * j.dy) / j.dx)
    }

    /// `h(s) = −σ g_y(0, s)² / g_xx(0, s)`.
    pub fn h_endpoint(&self) -> Result<f64, FieldError> {
        let j = self.g.eval(0.0, self.domain.s)?;
        Ok(-self.sigma() * j.dy * j.dy / j.dxx)
    }
}

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Samples of `h` on `[0, s]` (extended evenly), with the values inside the
/// two windows filled by quartic extrapolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceH {
    pub s: f64,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
    /// `h(±s)` from the local expansion.
    pub endpoint_value: f64,
    /// Quartic extrapolations to `π/√3` from below and above.
    pub saddle_extrapolations: (f64, f64),
    /// Quartic extrapolation to `s` from below.
    pub endpoint_extrapolation: f64,
}

impl SourceH {
    /// Cubic (four-point) interpolation; `h` is even, `None` for `|y| > s`.
    pub fn eval(&self, y: f64) -> Option<f64> {
        let a = y.abs();
        if a > self.s {
            return None;
        }
        let n = self.ys.len();
        let i = self.ys.partition_point(|&t| t < a).clamp(2, n - 2);
        let idx = [i - 2, i - 1, i, i + 1];
        let mut acc = 0.0;
        for &j in &idx {
            let mut w = 1.0;
            for &k in &idx {
                if k != j {
                    w *= (a - self.ys[k]) / (self.ys[j] - self.ys[k]);
                }
            }
            acc += w * self.values[j];
        }
        Some(acc)
    }

    /// `y,h` rows over `[−s, s]` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("y,h\n");
        let negative = self
            .ys
            .iter()
            .zip(&self.values)
            .rev()
            .filter(|(y, _)| **y > 0.0)
            .map(|(y, h)| (-y, *h));
        let positive = self.ys.iter().copied().zip(self.values.iter().copied());
        for (y, h) in negative.chain(positive) {
            out.push_str(&format!("{y:.16e},{h:.16e}\n"));
        }
        out
    }

    /// Rebuild from a `to_csv` table and the recorded pinned values.
    pub fn from_csv(
        text: &str,
        s: f64,
        endpoint_value: f64,
        saddle_extrapolations: (f64, f64),
        endpoint_extrapolation: f64,
    ) -> Result<Self, TraceError> {
        let curve = NodalCurve::from_csv(crate::nodal::CurveAxis::ByY, text)?;
        let (ys, values) = curve.samples.into_iter().filter(|&(y, _)| y >= 0.0).unzip();
        Ok(Self {
            s,
            ys,
            values,
            endpoint_value,
            saddle_extrapolations,
            endpoint_extrapolation,
        })
    }
}

/// Lagrange polynomial through `nodes` evaluated at `t`.
fn lagrange(nodes: &[(f64, f64)], t: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .map(|(j, &(xj, fj))| {
            let w: f64 = nodes
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &(xk, _))| (t - xk) / (xj - xk))
                .product();
            w * fj
        })
        .sum()
}

/// Five samples at `c + dir·(1 + j)·H_WINDOW`, `j = 0..5`.
fn side_nodes(sol: &SolutionU, c: f64, dir: f64) -> Result<Vec<(f64, f64)>, SolutionError> {
    (0..5)
        .map(|j| {
            let y = c + dir * (1.0 + j as f64) * H_WINDOW;
            Ok((y, sol.h_direct(y)?))
        })
        .collect()
}

pub fn build_h(sol: &SolutionU) -> Result<SourceH, SolutionError> {
    let s = sol.domain.s;
    let c = Y_SADDLE;
    let below = side_nodes(sol, c, -1.0)?;
    let above = side_nodes(sol, c, 1.0)?;
    let end = side_nodes(sol, s, -1.0)?;
    let at_saddle = (lagrange(&below, c), lagrange(&above, c));
    let mismatch = (at_saddle.0 - at_saddle.1).abs();
    if mismatch > H_EXTRAPOLATION_TOLERANCE {
        return Err(SolutionError::Extrapolation { at: c, mismatch });
    }
    let endpoint_value = sol.h_endpoint()?;
    let endpoint_extrapolation = lagrange(&end, s);
    let mismatch = (endpoint_extrapolation - endpoint_value).abs();
    if mismatch > H_EXTRAPOLATION_TOLERANCE {
        return Err(SolutionError::Extrapolation { at: s, mismatch });
    }

    let mut ys: Vec<f64> = (0..H_SAMPLES).map(|i| s * i as f64 / (H_SAMPLES - 1) as f64).collect();
    ys.push(c);
    ys.sort_by(|a, b| a.total_cmp(b));
    ys.dedup();
    let values = ys
        .iter()
        .map(|&y| {
            if y == c {
                Ok(0.0)
            } else if y == s {
                Ok(endpoint_value)
            } else if (y - c).abs() < H_WINDOW {
                Ok(lagrange(if y < c { &below } else { &above }, y))
            } else if s - y < H_WINDOW {
                Ok(lagrange(&end, y))
            } else {
                sol.h_direct(y)
            }
        })
        .collect::<Result<Vec<_>, SolutionError>>()?;
    Ok(SourceH {
        s,
        ys,
        values,
        endpoint_value,
        saddle_extrapolations: at_saddle,
        endpoint_extrapolation,
    })
}

/// `−(Δu + 4u)` at each `x` of a height, and its spread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub y: f64,
    pub values: Vec<f64>,
    pub spread: f64,
}

pub fn residual_h(sol: &SolutionU, y: f64, xs: &[f64]) -> Result<Dispersion, SolutionError> {
    let op = sol.boundary_operator(y, FD_STEP)?;
    let values = xs
        .iter()
        .map(|&x| Ok(-sol.pde_operator_given(x, y, op)?))
        .collect::<Result<Vec<_>, SolutionError>>()?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Dispersion {
        y,
        values,
        spread: hi - lo,
    })
}

/// Build `Ω`, `u` and `h` from a trace.
pub fn assemble(trace: &TraceResult, eps: f64, p: &Perturbation) -> Result<(SolutionU, SourceH), SolutionError> {
    let domain = build_domain(trace, eps, p)?;
    let sol = SolutionU::new(domain, eps, p);
    let h = build_h(&sol)?;
    Ok((sol, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{select_waveset, solve_perturbation};
    use crate::field::SQRT3;
    use crate::nodal::trace;
    use std::sync::OnceLock;

    const EPS: f64 = 1.0 / 4_398_046_511_104.0; // 2^-42

    fn canonical() -> &'static Perturbation {
        static P: OnceLock<Perturbation> = OnceLock::new();
        P.get_or_init(|| solve_perturbation(&select_waveset(6).unwrap()).unwrap())
    }

    fn built(eps: f64) -> (SolutionU, SourceH) {
        let p = canonical();
        let t = trace(eps, p, 400).unwrap();
        assemble(&t, eps, p).unwrap()
    }

    fn perturbed() -> &'static (SolutionU, SourceH) {
        static S: OnceLock<(SolutionU, SourceH)> = OnceLock::new();
        S.get_or_init(|| built(EPS))
    }

    fn unperturbed() -> &'static (SolutionU, SourceH) {
        static S: OnceLock<(SolutionU, SourceH)> = OnceLock::new();
        S.get_or_init(|| built(0.0))
    }

    #[test]
    fn domain_membership() {
        let (sol, _) = perturbed();
        let d = &sol.domain;
        assert_eq!(d.orientation, 1);
        assert!(d.contains(0.0, 0.0).unwrap());
        assert!(!d.contains(2.0 * PI, 0.0).unwrap());
        let m = d.mu_at(0.5).unwrap().unwrap();
        assert!(!d.contains(m, 0.5).unwrap());
        assert!(d.contains(m * (1.0 - 1e-9), 0.5).unwrap());
        assert!(d.contains(-m * (1.0 - 1e-9), -0.5).unwrap());
        assert_eq!(d.boundary_points(10).unwrap().len(), 10);
    }

    #[test]
    fn u_vanishes_on_boundary_and_interior_curve() {
        let (sol, _) = perturbed();
        for y in [0.0, 0.3, 1.0, 1.5, 2.5, 3.5] {
            let m = sol.domain.mu_at(y).unwrap().unwrap();
            assert!(sol.eval_u(m, y).unwrap().abs() < 1e-14);
            if y < Y_SADDLE {
                assert!(sol.eval_u(2.0 * PI - m, y).unwrap().abs() < 1e-12, "y={y}");
            }
        }
        assert!(matches!(sol.eval_u(7.0, 0.0), Err(SolutionError::OutsideDomain { .. })));
    }

    #[test]
    fn u_is_even_in_both_variables() {
        let (sol, _) = perturbed();
        for (x, y) in [(0.4, 0.2), (2.0, 1.1), (4.0, 0.7), (0.1, 3.0)] {
            let u = sol.eval_u(x, y).unwrap();
            assert!((sol.eval_u(-x, y).unwrap() - u).abs() <= 1e-13);
            assert!((sol.eval_u(x, -y).unwrap() - u).abs() <= 1e-13);
        }
    }

    #[test]
    fn quadrature_agrees_with_closed_form() {
        let (sol, _) = perturbed();
        for (x, y) in [(0.4, 0.2), (3.0, 0.5), (5.5, 0.1), (0.2, 3.2)] {
            let a = sol.eval_u(x, y).unwrap();
            let b = sol.u_by_quadrature(x, y).unwrap();
            assert!((a - b).abs() <= 1e-10, "({x},{y}) {a} {b}");
        }
    }

    #[test]
    fn unperturbed_oracles() {
        let (sol, h) = unperturbed();
        for (x, y) in [(0.5, 0.3), (2.0, 1.0), (4.5, 0.2), (0.3, 3.0)] {
            let u = sol.eval_u(x, y).unwrap();
            let exact = 0.5 * (x.cos() - (SQRT3 * y).cos()).powi(2);
            assert!((u - exact).abs() < 1e-12, "({x},{y})");
        }
        for y in [0.2, 0.4, 1.0, Y_SADDLE, 2.5, 3.0] {
            let exact = -4.0 * (SQRT3 * y).sin().powi(2);
            assert!((h.eval(y).unwrap() - exact).abs() < 1e-8, "y={y}");
        }
        let d = residual_h(sol, 0.4, &[0.1, 0.5, 1.0, 2.0, 4.0]).unwrap();
        for v in &d.values {
            assert!((v + 4.0 * (SQRT3 * 0.4).sin().powi(2)).abs() < 1e-8);
        }
    }

    #[test]
    fn h_is_x_independent_and_matches_samples() {
        let (sol, h) = perturbed();
        let d = residual_h(sol, 0.4, &[0.05, 0.6, 1.7, 3.3, 5.0]).unwrap();
        assert!(d.spread <= 1e-7, "{}", d.spread);
        let hv = h.eval(0.4).unwrap();
        for v in &d.values {
            assert!((v - hv).abs() <= 1e-6, "{v} {hv}");
        }
    }

    #[test]
    fn h_pins_and_evenness() {
        let (sol, h) = perturbed();
        assert!(h.saddle_extrapolations.0.abs() < 1e-6);
        assert!(h.saddle_extrapolations.1.abs() < 1e-6);
        assert!((h.endpoint_extrapolation - h.endpoint_value).abs() < 1e-6);
        assert!(h.endpoint_value.is_finite());
        assert_eq!(h.eval(Y_SADDLE), Some(0.0));
        for y in [0.1, 0.9, 2.2, 3.0] {
            assert_eq!(sol.h_direct(y).unwrap(), sol.h_direct(-y).unwrap());
            assert_eq!(h.eval(y), h.eval(-y));
        }
        let back = SourceH::from_csv(
            &h.to_csv(),
            h.s,
            h.endpoint_value,
            h.saddle_extrapolations,
            h.endpoint_extrapolation,
        )
        .unwrap();
        assert_eq!(&back, h);
    }

    #[test]
    fn adaptive_simpson_integrates_smooth_functions() {
        let r = adaptive_simpson(&|t: f64| t.sin(), 0.0, PI, 1e-13);
        assert!((r - 2.0).abs() < 1e-12);
        assert_eq!(adaptive_simpson(&|t: f64| t, 1.0, 1.0, 1e-12), 0.0);
        let back = adaptive_simpson(&|t: f64| t * t, 2.0, 0.0, 1e-13);
        assert!((back + 8.0 / 3.0).abs() < 1e-12);
    }
}
