//! Closed-form evaluation of the Helmholtz fields and their second-order jets.
//!
//! Five fields are available:
//!
//! * `w(x, y) = (cos(√3 y) − cos x) sin x`, the unperturbed solution;
//! * `ψ(x, y) = Σ (d_j / k_j) sin(k_j x) cosh(ν_j y)`, the perturbation;
//! * `v = w + ε ψ`;
//! * `g`, the factored field with `v = g sin x`, written through Chebyshev
//!   polynomials of the second kind so that it stays analytic on `x = kπ`;
//! * `U`, the closed-form antiderivative of `v` in `x`.
//!
//! Every derivative is hand-derived. Finite differences only appear in tests.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeffs::Perturbation;
use crate::dd::DoubleDouble;

pub const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Largest admissible argument of `cosh`/`sinh`.
pub const HYPERBOLIC_CAP: f64 = 700.0;

/// The three distinguished degenerate zeros of `w` in the fundamental cell.
pub fn z0() -> (f64, f64) {
    (std::f64::consts::PI, std::f64::consts::PI / SQRT3)
}

pub fn z1() -> (f64, f64) {
    (0.0, 0.0)
}

pub fn z2() -> (f64, f64) {
    (0.0, 2.0 * std::f64::consts::PI / SQRT3)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("hyperbolic argument {arg:.3} exceeds cap {HYPERBOLIC_CAP} (k = {k}, y = {y})")]
    Overflow { k: u32, y: f64, arg: f64 },
}

/// Value and partial derivatives up to second order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DerivativeJet {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dxy: f64,
    pub dyy: f64,
}

impl DerivativeJet {
    pub fn gradient_norm(&self) -> f64 {
        self.dx.hypot(self.dy)
    }

    /// `Δf + 4f`, which vanishes for solutions of the Helmholtz equation.
    pub fn helmholtz_defect(&self) -> f64 {
        self.dxx + self.dyy + 4.0 * self.value
    }

    /// Magnitude scale against which `helmholtz_defect` is judged.
    pub fn helmholtz_scale(&self) -> f64 {
        self.dxx.abs() + self.dyy.abs() + 4.0 * self.value.abs()
    }

    /// Eigenvalues of the Hessian, ascending.
    pub fn hessian_eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.dxx + self.dyy);
        let half_diff = 0.5 * (self.dxx - self.dyy);
        let rad = half_diff.hypot(self.dxy);
        (mean - rad, mean + rad)
    }

    fn entries(&self) -> [f64; 6] {
        [self.value, self.dx, self.dy, self.dxx, self.dxy, self.dyy]
    }

    pub fn max_abs(&self) -> f64 {
        self.entries().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Add for DerivativeJet {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            value: self.value + o.value,
            dx: self.dx + o.dx,
            dy: self.dy + o.dy,
            dxx: self.dxx + o.dxx,
            dxy: self.dxy + o.dxy,
            dyy: self.dyy + o.dyy,
        }
    }
}

impl Sub for DerivativeJet {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + o * -1.0
    }
}

impl Mul<f64> for DerivativeJet {
    type Output = Self;
    fn mul(self, a: f64) -> Self {
        Self {
            value: self.value * a,
            dx: self.dx * a,
            dy: self.dy * a,
            dxx: self.dxx * a,
            dxy: self.dxy * a,
            dyy: self.dyy * a,
        }
    }
}

/// One Fourier–hyperbolic mode of `ψ`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Mode {
    k: f64,
    k_int: u32,
    nu: f64,
    /// `ν − nu` (low part of the double-double frequency).
    nu_lo: f64,
    nu_sq: f64,
    d: f64,
    d_lo: f64,
}

pub(crate) fn modes(p: &Perturbation) -> Vec<Mode> {
    let nu_dd = p.waveset.nu_extended();
    p.waveset
        .k
        .iter()
        .zip(p.waveset.nu.iter())
        .zip(p.d.iter())
        .zip(nu_dd.iter())
        .map(|(((&k, &nu), d), nd)| Mode {
            k: k as f64,
            k_int: k,
            nu,
            nu_lo: (*nd - crate::dd::DoubleDouble::from_f64(nu)).to_f64(),
            nu_sq: (k * k - 4) as f64,
            d: d.to_f64(),
            d_lo: (*d - crate::dd::DoubleDouble::from_f64(d.to_f64())).to_f64(),
        })
        .collect()
}

fn hyperbolic(m: &Mode, y: f64) -> Result<(f64, f64), FieldError> {
    let arg = m.nu * y;
    if arg.abs() > HYPERBOLIC_CAP {
        return Err(FieldError::Overflow {
            k: m.k_int,
            y,
            arg: arg.abs(),
        });
    }
    // ν y = arg + err exactly; first-order correction removes the product rounding
    let err = m.nu.mul_add(y, -arg) + m.nu_lo * y;
    let (sh, ch) = (arg.sinh(), arg.cosh());
    Ok((sh + ch * err, ch + sh * err))
}

/// `w = (cos(√3 y) − cos x) sin x`.
pub fn eval_w(x: f64, y: f64) -> DerivativeJet {
    let (s, c) = x.sin_cos();
    let (sy, cy) = (SQRT3 * y).sin_cos();
    DerivativeJet {
        value: (cy - c) * s,
        dx: s * s + cy * c - c * c,
        dy: -SQRT3 * sy * s,
        dxx: 4.0 * s * c - cy * s,
        dxy: -SQRT3 * sy * c,
        dyy: -3.0 * cy * s,
    }
}

fn psi_from_modes(x: f64, y: f64, modes: &[Mode]) -> Result<DerivativeJet, FieldError> {
    let mut j = DerivativeJet::default();
    for m in modes {
        let (sk, ck) = (m.k * x).sin_cos();
        let (sh, ch) = hyperbolic(m, y)?;
        let a = m.d / m.k;
        j.value += a * sk * ch;
        j.dx += m.d * ck * ch;
        j.dy += a * m.nu * sk * sh;
        j.dxx -= m.d * m.k * sk * ch;
        j.dxy += m.d * m.nu * ck * sh;
        j.dyy += a * m.nu_sq * sk * ch;
    }
    Ok(j)
}

/// `ψ = Σ (d_j / k_j) sin(k_j x) cosh(ν_j y)`.
pub fn eval_psi(x: f64, y: f64, p: &Perturbation) -> Result<DerivativeJet, FieldError> {
    psi_from_modes(x, y, &modes(p))
}

/// `v = w + ε ψ`.
pub fn eval_v(x: f64, y: f64, eps: f64, p: &Perturbation) -> Result<DerivativeJet, FieldError> {
    v_from_modes(x, y, eps, &modes(p))
}

fn v_from_modes(x: f64, y: f64, eps: f64, modes: &[Mode]) -> Result<DerivativeJet, FieldError> {
    if eps == 0.0 {
        return Ok(eval_w(x, y));
    }
    Ok(eval_w(x, y) + psi_from_modes(x, y, modes)? * eps)
}

/// `U_m(c)`, `U_m'(c)`, `U_m''(c)` for `m = 0..=max_deg`.
pub fn chebyshev_u(c: f64, max_deg: usize) -> Vec<(f64, f64, f64)> {
    chebyshev_u_shifted(c, c - 1.0, max_deg)
}

/// Same as [`chebyshev_u`] with `e = c − 1` supplied separately. For `c > 0`
/// the recurrence runs on differences `U_m − U_{m−1}` driven by `e`, which
/// stays accurate as `c → 1` when `e` itself is accurate.
pub(crate) fn chebyshev_u_shifted(c: f64, e: f64, max_deg: usize) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(max_deg + 1);
    out.push((1.0, 0.0, 0.0));
    if max_deg == 0 {
        return out;
    }
    out.push((2.0 * c, 2.0, 0.0));
    if c > 0.0 {
        let (mut d, mut dd, mut ddd) = (2.0 * c - 1.0, 2.0, 0.0);
        for m in 1..max_deg {
            let (u, du, ddu) = out[m];
            d += 2.0 * e * u;
            dd += 2.0 * u + 2.0 * e * du;
            ddd += 4.0 * du + 2.0 * e * ddu;
            out.push((u + d, du + dd, ddu + ddd));
        }
        return out;
    }
    for m in 1..max_deg {
        let (u, du, ddu) = out[m];
        let (u0, du0, ddu0) = out[m - 1];
        out.push((
            2.0 * c * u - u0,
            2.0 * u + 2.0 * c * du - du0,
            4.0 * du + 2.0 * c * ddu - ddu0,
        ));
    }
    out
}

fn w_factor(x: f64, y: f64) -> DerivativeJet {
    let (s, c) = x.sin_cos();
    let t = SQRT3 * y;
    let (sy, cy) = t.sin_cos();
    // cos t − cos x as a product keeps full relative accuracy near the zero lines
    let value = -2.0 * (0.5 * (t + x)).sin() * (0.5 * (t - x)).sin();
    DerivativeJet {
        value,
        dx: s,
        dy: -SQRT3 * sy,
        dxx: c,
        dxy: 0.0,
        dyy: -3.0 * cy,
    }
}

fn psi_factor_from_modes(x: f64, y: f64, modes: &[Mode]) -> Result<DerivativeJet, FieldError> {
    let (s, c) = x.sin_cos();
    let max_deg = modes.iter().map(|m| m.k_int as usize - 1).max().unwrap_or(0);
    let half = (0.5 * x).sin();
    let cheb = chebyshev_u_shifted(c, -2.0 * half * half, max_deg);
    let mut t = DerivativeJet::default();
    for m in modes {
        let (sh, ch) = hyperbolic(m, y)?;
        let (u, du, ddu) = cheb[m.k_int as usize - 1];
        // d / k carried as hi + lo
        let a = m.d / m.k;
        let a_lo = ((-a).mul_add(m.k, m.d) + m.d_lo) / m.k;
        let w = |v: f64| a.mul_add(v, a_lo * v);
        t.value += w(u * ch);
        t.dx -= w(du * s * ch);
        t.dy += w(u * m.nu * sh);
        t.dxx += w((ddu * s * s - du * c) * ch);
        t.dxy -= w(du * s * m.nu * sh);
        t.dyy += w(u * m.nu_sq * ch);
    }
    Ok(t)
}

fn g_from_modes(x: f64, y: f64, eps: f64, modes: &[Mode]) -> Result<DerivativeJet, FieldError> {
    let w = w_factor(x, y);
    if eps == 0.0 || modes.is_empty() {
        return Ok(w);
    }
    Ok(w + psi_factor_from_modes(x, y, modes)? * eps)
}

/// `ψ̃ = ψ / sin x = Σ (d_j / k_j) U_{k_j − 1}(cos x) cosh(ν_j y)`.
pub fn eval_psi_factor(x: f64, y: f64, p: &Perturbation) -> Result<DerivativeJet, FieldError> {
    psi_factor_from_modes(x, y, &modes(p))
}

/// `w̃ = w / sin x = cos(√3 y) − cos x`.
pub fn eval_w_factor(x: f64, y: f64) -> DerivativeJet {
    w_factor(x, y)
}

/// The factored field `g = v / sin x`, analytic everywhere.
pub fn eval_g(x: f64, y: f64, eps: f64, p: &Perturbation) -> Result<DerivativeJet, FieldError> {
    g_from_modes(x, y, eps, &modes(p))
}

fn antiderivative_from_modes(x: f64, y: f64, eps: f64, modes: &[Mode]) -> Result<DerivativeJet, FieldError> {
    let (s, c) = x.sin_cos();
    let (sy, cy) = (SQRT3 * y).sin_cos();
    let mut j = DerivativeJet {
        value: -cy * c - 0.5 * s * s,
        dx: cy * s - s * c,
        dy: SQRT3 * sy * c,
        dxx: cy * c - (c * c - s * s),
        dxy: -SQRT3 * sy * s,
        dyy: 3.0 * cy * c,
    };
    if eps == 0.0 {
        return Ok(j);
    }
    let mut t = DerivativeJet::default();
    for m in modes {
        let (sk, ck) = (m.k * x).sin_cos();
        let (sh, ch) = hyperbolic(m, y)?;
        let b = m.d / (m.k * m.k);
        t.value -= b * ck * ch;
        t.dx += (m.d / m.k) * sk * ch;
        t.dy -= b * ck * m.nu * sh;
        t.dxx += m.d * ck * ch;
        t.dxy += (m.d / m.k) * sk * m.nu * sh;
        t.dyy -= b * ck * m.nu_sq * ch;
    }
    j = j + t * eps;
    Ok(j)
}

/// `U` with `∂U/∂x = v`.
#[allow(non_snake_case)]
pub fn eval_U(x: f64, y: f64, eps: f64, p: &Perturbation) -> Result<DerivativeJet, FieldError> {
    antiderivative_from_modes(x, y, eps, &modes(p))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    W,
    Psi,
    V,
    G,
    U,
}

/// Immutable evaluator for one of the five fields at a fixed `ε`.
#[derive(Clone, Debug)]
pub struct FieldHandle {
    epsilon: f64,
    kind: FieldKind,
    perturbation: Perturbation,
    modes: Vec<Mode>,
}

impl FieldHandle {
    pub fn new(kind: FieldKind, epsilon: f64, perturbation: &Perturbation) -> Self {
        Self {
            epsilon,
            kind,
            perturbation: perturbation.clone(),
            modes: modes(perturbation),
        }
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn perturbation(&self) -> &Perturbation {
        &self.perturbation
    }

    /// Same perturbation and `ε`, different field.
    pub fn with_kind(&self, kind: FieldKind) -> Self {
        Self { kind, ..self.clone() }
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<DerivativeJet, FieldError> {
        match self.kind {
            FieldKind::W => Ok(eval_w(x, y)),
            FieldKind::Psi => psi_from_modes(x, y, &self.modes),
            FieldKind::V => v_from_modes(x, y, self.epsilon, &self.modes),
            FieldKind::G => g_from_modes(x, y, self.epsilon, &self.modes),
            FieldKind::U => antiderivative_from_modes(x, y, self.epsilon, &self.modes),
        }
    }

    /// `ψ̃ = ψ / sin x`, independent of the handle's kind and `ε`.
    pub fn psi_factor(&self, x: f64, y: f64) -> Result<DerivativeJet, FieldError> {
        psi_factor_from_modes(x, y, &self.modes)
    }

    /// Value only.
    pub fn value(&self, x: f64, y: f64) -> Result<f64, FieldError> {
        self.eval(x, y).map(|j| j.value)
    }
}

/// Extended-precision `ψ` jet, used where cancellation defeats `f64`.
pub fn eval_psi_extended(x: DoubleDouble, y: DoubleDouble, p: &Perturbation) -> [DoubleDouble; 6] {
    let mut out = [DoubleDouble::ZERO; 6];
    for ((&k, nu), &d) in p.waveset.k.iter().zip(p.waveset.nu_extended()).zip(p.d.iter()) {
        let kd = DoubleDouble::from_f64(k as f64);
        let (sk, ck) = (x * kd).sin_cos();
        let (sh, ch) = (nu * y).sinh_cosh();
        let a = d / kd;
        let nu_sq = DoubleDouble::from_f64((k * k - 4) as f64);
        out[0] = out[0] + a * sk * ch;
        out[1] = out[1] + d * ck * ch;
        out[2] = out[2] + a * nu * sk * sh;
        out[3] = out[3] - d * kd * sk * ch;
        out[4] = out[4] + d * nu * ck * sh;
        out[5] = out[5] + a * nu_sq * sk * ch;
    }
    out
}
