//! Wavenumber selection and the five-constraint solve for the perturbation.
//!
//! The perturbation is `ψ = Σ c_k sin(kx) cosh(ν_k y)` over five even
//! wavenumbers. With the unknowns `d_j = k_j c_{k_j}` the constraints
//!
//! ```text
//! ψ_x(0,0) = −1,  ψ_x(z0) = 0,  ψ_xy(z0) = 0,  ψ_x(z2) = 1,  ψ_xy(z2) = 1
//! ```
//!
//! become `M d = (−1, 0, 0, 1, 1)` with rows `1`, `cosh(πν/√3)`,
//! `ν sinh(πν/√3)`, `cosh(2πν/√3)`, `ν sinh(2πν/√3)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dd::DoubleDouble;
use crate::field::{eval_psi_extended, HYPERBOLIC_CAP, SQRT3};
use crate::linalg::{equilibrate, equilibrated_determinant, full_pivot_solve};

pub const WAVE_COUNT: usize = 5;

/// Floor on the absolute determinant of each equilibrated leading minor.
pub const MINOR_THRESHOLD: f64 = 1e-10;

/// Largest admissible constraint residual.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;

/// Right-hand side of the constraint system.
pub const RHS: [f64; WAVE_COUNT] = [-1.0, 0.0, 0.0, 1.0, 1.0];

pub const CONSTRAINT_NAMES: [&str; WAVE_COUNT] = [
    "psi_x(0,0) = -1",
    "psi_x(pi,pi/sqrt3) = 0",
    "psi_xy(pi,pi/sqrt3) = 0",
    "psi_x(0,2pi/sqrt3) = 1",
    "psi_xy(0,2pi/sqrt3) = 1",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoeffError {
    #[error("wavenumbers {0:?} must be even, greater than 4 and strictly increasing")]
    InvalidWaveset(Vec<u32>),
    #[error("start wavenumber {0} must be even and greater than 4")]
    InvalidStart(u32),
    #[error("matrix entry overflows: 2*pi*nu/sqrt3 = {arg:.1} for k = {k}")]
    Overflow { k: u32, arg: f64 },
    #[error("leading minor {minor} degenerated for every candidate up to k = {last_k} (best |det| = {best:e})")]
    DegenerateMinor { minor: usize, last_k: u32, best: f64 },
    #[error("constraint matrix is singular")]
    Singular,
    #[error("constraint residual {residual:e} for '{name}' exceeds {RESIDUAL_TOLERANCE:e}; re-select the waveset")]
    Conditioning { name: &'static str, residual: f64 },
    #[error("condition {name} failed: {detail}")]
    ConditionFailed { name: &'static str, detail: String },
}

/// Five even wavenumbers `k_1 < … < k_5`, all greater than 4.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveSet {
    pub k: [u32; WAVE_COUNT],
    pub nu: [f64; WAVE_COUNT],
}

impl WaveSet {
    pub fn new(k: [u32; WAVE_COUNT]) -> Result<Self, CoeffError> {
        let ok = k.iter().all(|&k| k > 4 && k % 2 == 0) && k.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(CoeffError::InvalidWaveset(k.to_vec()));
        }
        Ok(Self {
            k,
            nu: k.map(frequency),
        })
    }

    /// `ν_j` to double-double accuracy.
    pub fn nu_extended(&self) -> [DoubleDouble; WAVE_COUNT] {
        self.k.map(frequency_extended)
    }
}

fn frequency(k: u32) -> f64 {
    ((k * k - 4) as f64).sqrt()
}

fn frequency_extended(k: u32) -> DoubleDouble {
    DoubleDouble::from_f64((k * k - 4) as f64).sqrt()
}

fn sqrt3_extended() -> DoubleDouble {
    DoubleDouble::from_f64(3.0).sqrt()
}

/// The constraint matrix and its equilibrating scalings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMatrix {
    pub entries: [[f64; WAVE_COUNT]; WAVE_COUNT],
    pub row_scales: [f64; WAVE_COUNT],
    pub col_scales: [f64; WAVE_COUNT],
}

impl ConstraintMatrix {
    /// `D_r M D_c`.
    pub fn scaled(&self) -> [[f64; WAVE_COUNT]; WAVE_COUNT] {
        let mut out = self.entries;
        for (i, row) in out.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e *= self.row_scales[i] * self.col_scales[j];
            }
        }
        out
    }

    fn scaled_dmatrix(&self) -> DMatrix<f64> {
        let s = self.scaled();
        DMatrix::from_fn(WAVE_COUNT, WAVE_COUNT, |i, j| s[i][j])
    }
}

fn check_overflow(k: u32) -> Result<(), CoeffError> {
    let arg = 2.0 * std::f64::consts::PI * frequency(k) / SQRT3;
    if arg > HYPERBOLIC_CAP {
        return Err(CoeffError::Overflow { k, arg });
    }
    Ok(())
}

/// Column `j` of the unscaled matrix.
fn column(k: u32) -> [f64; WAVE_COUNT] {
    let nu = frequency(k);
    let a1 = std::f64::consts::PI * nu / SQRT3;
    let a2 = 2.0 * a1;
    [1.0, a1.cosh(), nu * a1.sinh(), a2.cosh(), nu * a2.sinh()]
}

fn column_extended(k: u32) -> [DoubleDouble; WAVE_COUNT] {
    let nu = frequency_extended(k);
    let a1 = DoubleDouble::PI * nu / sqrt3_extended();
    let (s1, c1) = a1.sinh_cosh();
    let (s2, c2) = a1.ldexp(1).sinh_cosh();
    [DoubleDouble::ONE, c1, nu * s1, c2, nu * s2]
}

/// Unscaled leading `n × n` block for the first `n` wavenumbers.
fn leading_block(ks: &[u32]) -> DMatrix<f64> {
    let n = ks.len();
    let cols: Vec<[f64; WAVE_COUNT]> = ks.iter().map(|&k| column(k)).collect();
    DMatrix::from_fn(n, n, |i, j| cols[j][i])
}

/// Absolute determinant of the equilibrated leading minor spanned by `ks`.
pub fn leading_minor_determinant(ks: &[u32]) -> f64 {
    equilibrated_determinant(&leading_block(ks)).abs()
}

pub fn assemble_matrix(ws: &WaveSet) -> Result<ConstraintMatrix, CoeffError> {
    for &k in &ws.k {
        check_overflow(k)?;
    }
    let m = leading_block(&ws.k);
    let eq = equilibrate(&m);
    let mut entries = [[0.0; WAVE_COUNT]; WAVE_COUNT];
    for (i, row) in entries.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            *e = m[(i, j)];
        }
    }
    Ok(ConstraintMatrix {
        entries,
        row_scales: eq.row_scales.try_into().expect("five rows"),
        col_scales: eq.col_scales.try_into().expect("five columns"),
    })
}

/// Largest wavenumber whose matrix entries stay below the hyperbolic cap.
pub fn max_wavenumber() -> u32 {
    let mut k = 6;
    while check_overflow(k + 2).is_ok() {
        k += 2;
    }
    k
}

/// Greedy inductive choice of the wavenumbers: each new `k_{j+1}` is the
/// first even candidate above `k_j` whose leading minor clears
/// [`MINOR_THRESHOLD`] after equilibration.
pub fn select_waveset(start_k: u32) -> Result<WaveSet, CoeffError> {
    if start_k <= 4 || start_k % 2 != 0 {
        return Err(CoeffError::InvalidStart(start_k));
    }
    check_overflow(start_k)?;
    let cap = max_wavenumber();
    let mut ks = vec![start_k];
    while ks.len() < WAVE_COUNT {
        let minor = ks.len() + 1;
        let mut candidate = ks[ks.len() - 1] + 2;
        let mut best = 0.0_f64;
        loop {
            if candidate > cap {
                return Err(CoeffError::DegenerateMinor {
                    minor,
                    last_k: cap,
                    best,
                });
            }
            ks.push(candidate);
            let det = leading_minor_determinant(&ks);
            if det > MINOR_THRESHOLD {
                break;
            }
            best = best.max(det);
            ks.pop();
            candidate += 2;
        }
    }
    WaveSet::new(ks.try_into().expect("five wavenumbers"))
}

/// The solved perturbation: coefficients `d_j = k_j c_{k_j}` held in
/// double-double precision, and the constraint residuals measured by
/// direct evaluation of `ψ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub waveset: WaveSet,
    pub d: [DoubleDouble; WAVE_COUNT],
    pub residuals: [f64; WAVE_COUNT],
    /// `ψ` jet at `z0` (value, x, y, xx, xy, yy), all of which must vanish.
    pub z0_jet: [f64; 6],
}

impl Perturbation {
    /// Coefficients rounded to `f64`.
    pub fn d_f64(&self) -> [f64; WAVE_COUNT] {
        self.d.map(|d| d.to_f64())
    }

    pub fn c(&self) -> [f64; WAVE_COUNT] {
        let mut c = self.d_f64();
        for (c, &k) in c.iter_mut().zip(self.waveset.k.iter()) {
            *c /= k as f64;
        }
        c
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals
            .iter()
            .chain(self.z0_jet.iter())
            .fold(0.0_f64, |m, r| m.max(r.abs()))
    }

    /// Rebuild from stored coefficients, re-measuring the residuals.
    pub fn from_coefficients(waveset: WaveSet, d: [DoubleDouble; WAVE_COUNT]) -> Self {
        let mut p = Self {
            waveset,
            d,
            residuals: [0.0; WAVE_COUNT],
            z0_jet: [0.0; 6],
        };
        let (res, jet) = constraint_residuals(&p);
        p.residuals = res;
        p.z0_jet = jet;
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolveOptions {
    /// Scale rows and columns before elimination.
    pub equilibrate: bool,
    /// Double-double iterative refinement steps after the `f64` solve.
    pub refinement_steps: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            equilibrate: true,
            refinement_steps: 4,
        }
    }
}

/// Exact-point constraint functionals and the `z0` jet, in double-double.
pub fn constraint_residuals(p: &Perturbation) -> ([f64; WAVE_COUNT], [f64; 6]) {
    let pi = DoubleDouble::PI;
    let y0 = pi / sqrt3_extended();
    let y2 = y0.ldexp(1);
    let zero = DoubleDouble::ZERO;
    let at_z1 = eval_psi_extended(zero, zero, p);
    let at_z0 = eval_psi_extended(pi, y0, p);
    let at_z2 = eval_psi_extended(zero, y2, p);
    let one = DoubleDouble::ONE;
    let res = [
        (at_z1[1] + one).to_f64(),
        at_z0[1].to_f64(),
        at_z0[4].to_f64(),
        (at_z2[1] - one).to_f64(),
        (at_z2[4] - one).to_f64(),
    ];
    (res, at_z0.map(|v| v.to_f64()))
}

pub fn solve_perturbation(ws: &WaveSet) -> Result<Perturbation, CoeffError> {
    solve_perturbation_with(ws, SolveOptions::default())
}

pub fn solve_perturbation_with(ws: &WaveSet, opts: SolveOptions) -> Result<Perturbation, CoeffError> {
    let cm = assemble_matrix(ws)?;
    let (a, rs, cs) = if opts.equilibrate {
        (cm.scaled_dmatrix(), cm.row_scales, cm.col_scales)
    } else {
        let raw = DMatrix::from_fn(WAVE_COUNT, WAVE_COUNT, |i, j| cm.entries[i][j]);
        (raw, [1.0; WAVE_COUNT], [1.0; WAVE_COUNT])
    };
    let lu = a.full_piv_lu();
    let solve_scaled = |rhs: [f64; WAVE_COUNT]| -> Result<[f64; WAVE_COUNT], CoeffError> {
        let b = DVector::from_fn(WAVE_COUNT, |i, _| rhs[i] * rs[i]);
        let z = lu.solve(&b).ok_or(CoeffError::Singular)?;
        Ok(std::array::from_fn(|j| z[j] * cs[j]))
    };

    let first = solve_scaled(RHS)?;
    let mut d = first.map(DoubleDouble::from_f64);

    if opts.refinement_steps > 0 {
        let cols: Vec<[DoubleDouble; WAVE_COUNT]> = ws.k.iter().map(|&k| column_extended(k)).collect();
        for _ in 0..opts.refinement_steps {
            let mut r = [0.0; WAVE_COUNT];
            for (i, ri) in r.iter_mut().enumerate() {
                let mut acc = DoubleDouble::from_f64(RHS[i]);
                for j in 0..WAVE_COUNT {
                    acc = acc - cols[j][i] * d[j];
                }
                *ri = acc.to_f64();
            }
            let delta = solve_scaled(r)?;
            for (dj, dl) in d.iter_mut().zip(delta) {
                *dj = *dj + DoubleDouble::from_f64(dl);
            }
        }
    }

    let p = Perturbation::from_coefficients(ws.clone(), d);
    for (name, &r) in CONSTRAINT_NAMES.iter().zip(p.residuals.iter()) {
        if !(r.abs() <= RESIDUAL_TOLERANCE) {
            return Err(CoeffError::Conditioning { name, residual: r });
        }
    }
    Ok(p)
}

/// Solve without extended-precision refinement; the plain `f64` answer.
pub fn solve_f64(ws: &WaveSet, equilibrate: bool) -> Result<[f64; WAVE_COUNT], CoeffError> {
    let cm = assemble_matrix(ws)?;
    let (a, rs, cs) = if equilibrate {
        (cm.scaled_dmatrix(), cm.row_scales, cm.col_scales)
    } else {
        let raw = DMatrix::from_fn(WAVE_COUNT, WAVE_COUNT, |i, j| cm.entries[i][j]);
        (raw, [1.0; WAVE_COUNT], [1.0; WAVE_COUNT])
    };
    let b = DVector::from_fn(WAVE_COUNT, |i, _| RHS[i] * rs[i]);
    let z = full_pivot_solve(&a, &b).ok_or(CoeffError::Singular)?;
    Ok(std::array::from_fn(|j| z[j] * cs[j]))
}

/// Symmetry, degeneracy and sign conditions of a solved perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WConditionReport {
    /// max |ψ(kπ, y)| over the sample heights, k ∈ {−1, 0, 1}.
    pub vanishing_on_verticals: f64,
    /// max |ψ(kπ − t, y) + ψ(kπ + t, y)|.
    pub oddness_defect: f64,
    /// max |ψ(x, −y) − ψ(x, y)|.
    pub evenness_defect: f64,
    /// max |entry| of the `ψ` jet at `z0`.
    pub z0_degeneracy: f64,
    /// `−ψ_x(z1)`, `ψ_x(z2)`, `ψ_xy(z2)`; all must be positive.
    pub sign_margins: [f64; 3],
}

/// Absolute tolerance for the symmetry identities under double-double evaluation.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

pub fn verify_w_conditions(p: &Perturbation) -> Result<WConditionReport, CoeffError> {
    let pi = DoubleDouble::PI;
    let y_top = (pi / sqrt3_extended()).ldexp(1);
    let heights: Vec<DoubleDouble> = (0..=24).map(|i| y_top.mul_f64(i as f64 / 24.0)).collect();
    let offsets = [0.1, 0.37, 0.9, 1.6, 2.5];

    let mut vanishing = 0.0_f64;
    let mut odd = 0.0_f64;
    for kk in [-1.0, 0.0, 1.0] {
        let xk = pi.mul_f64(kk);
        for &y in &heights {
            vanishing = vanishing.max(eval_psi_extended(xk, y, p)[0].to_f64().abs());
            for &t in &offsets {
                let t = DoubleDouble::from_f64(t);
                let l = eval_psi_extended(xk - t, y, p)[0];
                let r = eval_psi_extended(xk + t, y, p)[0];
                // Relative to the local magnitude, which can reach 1e11 at the top edge.
                let scale = 1.0 + l.to_f64().abs();
                odd = odd.max((l + r).to_f64().abs() / scale);
            }
        }
    }
    let handle = crate::field::FieldHandle::new(crate::field::FieldKind::Psi, 0.0, p);
    let mut even = 0.0_f64;
    for i in 0..=20 {
        for j in 1..=12 {
            let x = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / 20.0;
            let y = 2.0 * std::f64::consts::PI / SQRT3 * j as f64 / 12.0;
            let a = handle.value(x, y).expect("inside cap");
            let b = handle.value(x, -y).expect("inside cap");
            even = even.max((a - b).abs());
        }
    }
    let z0 = p.z0_jet.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let zero = DoubleDouble::ZERO;
    let at_z1 = eval_psi_extended(zero, zero, p);
    let at_z2 = eval_psi_extended(zero, y_top, p);
    let margins = [-at_z1[1].to_f64(), at_z2[1].to_f64(), at_z2[4].to_f64()];

    let report = WConditionReport {
        vanishing_on_verticals: vanishing,
        oddness_defect: odd,
        evenness_defect: even,
        z0_degeneracy: z0,
        sign_margins: margins,
    };
    if vanishing > IDENTITY_TOLERANCE {
        return Err(CoeffError::ConditionFailed {
            name: "W2",
            detail: format!("psi(k pi, y) reaches {vanishing:e}"),
        });
    }
    if odd > IDENTITY_TOLERANCE {
        return Err(CoeffError::ConditionFailed {
            name: "W2",
            detail: format!("oddness about x = k pi violated by {odd:e}"),
        });
    }
    if even > 0.0 {
        return Err(CoeffError::ConditionFailed {
            name: "W3",
            detail: format!("evenness in y violated by {even:e}"),
        });
    }
    if z0 > RESIDUAL_TOLERANCE {
        return Err(CoeffError::ConditionFailed {
            name: "W4",
            detail: format!("jet at z0 reaches {z0:e}"),
        });
    }
    if let Some(i) = margins.iter().position(|&m| !(m > 0.0)) {
        return Err(CoeffError::ConditionFailed {
            name: "W5",
            detail: format!("sign margin {i} is {:e}", margins[i]),
        });
    }
    Ok(report)
}
