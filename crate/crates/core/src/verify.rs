//! The verification suite: every testable property of the construction,
//! evaluated on fixed grids and seeded samples, gathered into one report.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeffs::{verify_w_conditions, CoeffError, Perturbation};
use crate::epsilon::{check_all, ConditionError};
use crate::field::{FieldError, FieldHandle, FieldKind, SQRT3};
use crate::manifest::{Dec, RunConfig};
use crate::nodal::{
    endpoint_products, equal_angle_deviation, extrapolate_endpoint_product, nodal_ray_angles, trace, TraceError,
    TraceResult, Y_SADDLE, Y_TOP,
};
use crate::solution::{assemble, residual_h, SolutionError, SolutionU, SourceH, FD_STEP};

/// Heights closer than this to `±π/√3` or `±s` are left out of the PDE check.
pub const SINGULAR_HEIGHT_GAP: f64 = 1e-2;
/// `x` values per height in the PDE check.
pub const PDE_X_PER_HEIGHT: usize = 100;
/// Heights of the dispersion check.
pub const DISPERSION_HEIGHTS: usize = 64;
/// Grid for the positivity and gradient-scale sweeps.
pub const COARSE_GRID: usize = 401;
/// Distance from the nodal set beyond which `u` must be clearly positive.
pub const POSITIVE_DISTANCE: f64 = 0.1;
/// Offset from `π/√3` at which `μ` is compared with `π`.
pub const SADDLE_OFFSET: f64 = 1e-10;
/// Step of the nodal ray estimate at `z0`.
pub const RAY_STEP: f64 = 1e-5;
/// Window `s − y ∈ [lo, hi]` of the endpoint-product fit.
pub const ENDPOINT_FIT_WINDOW: (f64, f64) = (1e-8, 2e-7);
/// Margin kept from the top edge in the unperturbed oracle.
pub const ORACLE_SHRINK: f64 = 0.1;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Solution(#[from] SolutionError),
    #[error(transparent)]
    Conditions(#[from] ConditionError),
    #[error(transparent)]
    Coefficients(#[from] CoeffError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    /// `worst ≤ tolerance`
    #[serde(rename = "<=")]
    AtMost,
    /// `worst > tolerance`
    #[serde(rename = ">")]
    Above,
    /// `worst == tolerance`
    #[serde(rename = "==")]
    Equal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub worst_residual: Dec,
    pub comparison: Comparison,
    pub tolerance: Dec,
    pub location: Option<[Dec; 2]>,
}

impl CheckResult {
    pub fn new(name: &str, worst: f64, comparison: Comparison, tolerance: f64, location: Option<(f64, f64)>) -> Self {
        let pass = match comparison {
            Comparison::AtMost => worst <= tolerance,
            Comparison::Above => worst > tolerance,
            Comparison::Equal => worst == tolerance,
        };
        Self {
            name: name.to_string(),
            pass,
            worst_residual: Dec(worst),
            comparison,
            tolerance: Dec(tolerance),
            location: location.map(|(x, y)| [Dec(x), Dec(y)]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub pass: bool,
    /// SHA-256 of the manifest the run was built from.
    pub provenance: String,
    pub flood_fill_resolution: usize,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Everything the suite reads.
pub struct SuiteInputs<'a> {
    pub perturbation: &'a Perturbation,
    pub trace: &'a TraceResult,
    pub solution: &'a SolutionU,
    pub source: &'a SourceH,
    pub config: &'a RunConfig,
    pub manifest_sha256: String,
}

/// Running maximum with the point where it was attained.
#[derive(Clone, Copy, Debug)]
struct Worst {
    value: f64,
    at: Option<(f64, f64)>,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            at: None,
        }
    }

    fn update(&mut self, value: f64, at: (f64, f64)) {
        if value > self.value || value.is_nan() && !self.value.is_nan() {
            self.value = value;
            self.at = Some(at);
        }
    }

    fn merge(mut self, o: Self) -> Self {
        if let Some(at) = o.at {
            self.update(o.value, at);
        }
        self
    }
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform grid of `n` nodes on `[−half, half]` containing `0` when `n` is odd.
pub fn symmetric_axis(half: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect()
}

/// `μ(|y|)` for each row, `None` outside `(−s, s)`.
pub fn row_mu(sol: &SolutionU, ys: &[f64]) -> Result<Vec<Option<f64>>, SolutionError> {
    ys.par_iter()
        .map(|&y| {
            if y.abs() >= sol.domain.s {
                Ok(None)
            } else {
                sol.domain.mu_at(y)
            }
        })
        .collect()
}

/// max `|Δv + 4v| / (1 + |v|)` over `n` seeded points of the reference box.
pub fn helmholtz_sweep(v: &FieldHandle, n: usize, seed: u64) -> Result<(f64, (f64, f64)), FieldError> {
    let mut rng = seeded(seed, 1);
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen_range(-2.0 * PI..=2.0 * PI), rng.gen_range(-Y_TOP..=Y_TOP)))
        .collect();
    let worst = pts
        .par_chunks(4096)
        .map(|chunk| {
            let mut w = Worst::new();
            for &(x, y) in chunk {
                let j = v.eval(x, y)?;
                w.update(j.helmholtz_defect().abs() / (1.0 + j.value.abs()), (x, y));
            }
            Ok(w)
        })
        .collect::<Result<Vec<_>, FieldError>>()?
        .into_iter()
        .fold(Worst::new(), Worst::merge);
    Ok((worst.value, worst.at.unwrap_or((0.0, 0.0))))
}

/// Connected sign components of a node grid under 4-connectivity.
#[derive(Clone, Debug, PartialEq)]
pub struct SignComponents {
    pub nx: usize,
    pub ny: usize,
    /// Component per node, `usize::MAX` for excluded nodes.
    pub labels: Vec<usize>,
    /// Sign of each component.
    pub signs: Vec<i8>,
    /// Unordered pairs of opposite-sign components sharing a grid edge.
    pub interfaces: BTreeSet<(usize, usize)>,
}

impl SignComponents {
    pub fn count(&self) -> usize {
        self.signs.len()
    }
}

/// Flood fill over `signs` (row-major, `ny` rows of `nx`); `0` marks excluded nodes.
pub fn flood_fill(signs: &[i8], nx: usize, ny: usize) -> SignComponents {
    let mut labels = vec![usize::MAX; nx * ny];
    let mut comp_signs = Vec::new();
    let mut queue = VecDeque::new();
    let neighbours = |i: usize| {
        let (r, c) = (i / nx, i % nx);
        let mut out = [usize::MAX; 4];
        if c > 0 {
            out[0] = i - 1;
        }
        if c + 1 < nx {
            out[1] = i + 1;
        }
        if r > 0 {
            out[2] = i - nx;
        }
        if r + 1 < ny {
            out[3] = i + nx;
        }
        out
    };
    for start in 0..nx * ny {
        if signs[start] == 0 || labels[start] != usize::MAX {
            continue;
        }
        let id = comp_signs.len();
        comp_signs.push(signs[start]);
        labels[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for j in neighbours(i) {
                if j != usize::MAX && labels[j] == usize::MAX && signs[j] == signs[start] {
                    labels[j] = id;
                    queue.push_back(j);
                }
            }
        }
    }
    let mut interfaces = BTreeSet::new();
    for i in 0..nx * ny {
        if labels[i] == usize::MAX {
            continue;
        }
        for j in neighbours(i) {
            if j != usize::MAX && labels[j] != usize::MAX && signs[j] != signs[i] {
                let (a, b) = (labels[i].min(labels[j]), labels[i].max(labels[j]));
                interfaces.insert((a, b));
            }
        }
    }
    SignComponents {
        nx,
        ny,
        labels,
        signs: comp_signs,
        interfaces,
    }
}

/// Which factor of `v` to chart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChartField {
    /// `g = v / sin x`: its zero set in `Ω` is the nodal set of `u`.
    G,
    V,
}

/// Sign of `field` at the nodes of an `n × n` grid over the bounding box of
/// `Ω`; nodes outside `Ω` get `0`.
pub fn sign_grid(sol: &SolutionU, field: ChartField, n: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<i8>), SolutionError> {
    let (xmax, s) = sol.domain.bounding_box();
    let xs = symmetric_axis(xmax, n);
    let ys = symmetric_axis(s, n);
    let mus = row_mu(sol, &ys)?;
    let handle = match field {
        ChartField::G => sol.g_field(),
        ChartField::V => sol.v_field(),
    };
    let rows = ys
        .par_iter()
        .zip(mus.par_iter())
        .map(|(&y, mu)| {
            let mut row = vec![0i8; n];
            if let Some(m) = *mu {
                for (i, &x) in xs.iter().enumerate() {
                    if x.abs() < m {
                        let v = handle.value(x, y)?;
                        row[i] = if v > 0.0 {
                            1
                        } else if v < 0.0 {
                            -1
                        } else {
                            0
                        };
                    }
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, FieldError>>()?;
    Ok((xs, ys, rows.concat()))
}

/// Nodal domains of `u` and the interior curves separating them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodalTopology {
    pub resolution: usize,
    pub domains: usize,
    pub interior_curves: usize,
}

/// `u ≥ 0` vanishes only where `g` does, so the nodal domains of `u` are the
/// sign components of `g` in `Ω` and each interior curve is an interface
/// between two of them.
pub fn u_nodal_topology(sol: &SolutionU, n: usize) -> Result<NodalTopology, SolutionError> {
    let (_, _, signs) = sign_grid(sol, ChartField::G, n)?;
    let comps = flood_fill(&signs, n, n);
    Ok(NodalTopology {
        resolution: n,
        domains: comps.count(),
        interior_curves: comps.interfaces.len(),
    })
}

/// Dense point cloud of the nodal set of `u` (boundary and interior curves).
fn nodal_point_cloud(tr: &TraceResult) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for (m, y) in tr.mu.points() {
        for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
            pts.push((sx * m, sy * y));
        }
    }
    for (x, y) in tr.interior.points() {
        pts.push((x, y));
        pts.push((-x, y));
    }
    pts
}

/// Nearest-point queries on a bucketed cloud.
struct Buckets {
    cell: f64,
    map: HashMap<(i64, i64), Vec<(f64, f64)>>,
}

impl Buckets {
    fn new(pts: &[(f64, f64)], cell: f64) -> Self {
        let mut map: HashMap<(i64, i64), Vec<(f64, f64)>> = HashMap::new();
        for &(x, y) in pts {
            map.entry(((x / cell).floor() as i64, (y / cell).floor() as i64))
                .or_default()
                .push((x, y));
        }
        Self { cell, map }
    }

    /// Distance to the cloud, capped at `cell`.
    fn distance(&self, x: f64, y: f64) -> f64 {
        let (cx, cy) = ((x / self.cell).floor() as i64, (y / self.cell).floor() as i64);
        let mut best = self.cell;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(v) = self.map.get(&(cx + dx, cy + dy)) {
                    for &(px, py) in v {
                        best = best.min((px - x).hypot(py - y));
                    }
                }
            }
        }
        best
    }
}

/// Largest spacing between consecutive samples of the traced curves.
fn cloud_spacing(tr: &TraceResult) -> f64 {
    let gap = |c: &crate::nodal::NodalCurve| {
        c.samples
            .windows(2)
            .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
            .fold(0.0_f64, f64::max)
    };
    gap(&tr.mu).max(gap(&tr.interior))
}

/// Heights with a `SINGULAR_HEIGHT_GAP` clearance from `±π/√3` and `±s`.
fn admissible_height(y: f64, s: f64) -> bool {
    let a = y.abs();
    (a - Y_SADDLE).abs() >= SINGULAR_HEIGHT_GAP && s - a >= SINGULAR_HEIGHT_GAP
}

fn random_heights(rng: &mut ChaCha8Rng, s: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let y = rng.gen_range(-s..s);
        if admissible_height(y, s) {
            out.push(y);
        }
    }
    out
}

/// Largest change of `μ` at heights shared by the grids of `n` and `2n` samples.
pub fn refinement_change(eps: f64, p: &Perturbation, coarse: &TraceResult, n: usize) -> Result<(f64, f64), TraceError> {
    let fine = trace(eps, p, 2 * n)?;
    let index: HashMap<u64, f64> = fine.mu.samples.iter().map(|&(y, m)| (y.to_bits(), m)).collect();
    let mut worst = (0.0_f64, 0.0);
    let mut common = 0usize;
    for &(y, m) in &coarse.mu.samples {
        if let Some(&mf) = index.get(&y.to_bits()) {
            common += 1;
            let d = (m - mf).abs();
            if d > worst.0 {
                worst = (d, y);
            }
        }
    }
    if common == 0 {
        return Ok((f64::INFINITY, 0.0));
    }
    Ok(worst)
}

pub fn run_suite(inp: &SuiteInputs) -> Result<VerificationReport, VerifyError> {
    let cfg = inp.config;
    let tol = &cfg.tolerances;
    let p = inp.perturbation;
    let tr = inp.trace;
    let sol = inp.solution;
    let hsrc = inp.source;
    let eps = sol.epsilon;
    let s = sol.domain.s;
    let g = sol.g_field();
    let mut checks = Vec::new();
    use Comparison::*;

    // Helmholtz identity for v
    let v = FieldHandle::new(FieldKind::V, eps, p);
    let (hw, hat) = helmholtz_sweep(&v, cfg.helmholtz_samples, cfg.seed)?;
    checks.push(CheckResult::new("helmholtz_v", hw, AtMost, tol.helmholtz.0, Some(hat)));

    // identities and signs of the perturbation
    let wc = verify_w_conditions(p)?;
    let identity = wc.vanishing_on_verticals.max(wc.oddness_defect).max(wc.evenness_defect);
    checks.push(CheckResult::new(
        "psi_symmetries",
        identity,
        AtMost,
        tol.identities.0,
        None,
    ));
    let sign_margin = wc.sign_margins.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    checks.push(CheckResult::new("psi_sign_conditions", sign_margin, Above, 0.0, None));
    let constraints = p.max_residual();
    checks.push(CheckResult::new(
        "constraint_residuals",
        constraints,
        AtMost,
        tol.constraints.0,
        None,
    ));

    // local and global conditions at the chosen epsilon
    let cond = check_all(eps, p)?;
    for (name, &m) in &cond.margins {
        checks.push(CheckResult::new(&format!("condition_{name}"), m, Above, 0.0, None));
    }
    let regions_ok = if cond.regions.is_consistent() { 1.0 } else { 0.0 };
    checks.push(CheckResult::new(
        "condition_regions_consistent",
        regions_ok,
        Equal,
        1.0,
        None,
    ));

    // the traced curves
    let s_margin = (s - Y_SADDLE).min(Y_TOP - s);
    checks.push(CheckResult::new("s_in_range", s_margin, Above, 0.0, Some((0.0, s))));
    let res = tr.mu.max_residual(g)?.max(tr.interior.max_residual(g)?);
    checks.push(CheckResult::new(
        "curve_sample_residual",
        res,
        AtMost,
        tol.sample_residual.0,
        None,
    ));
    let mut gap = (f64::INFINITY, (0.0, 0.0));
    for w in tr.mu.samples.windows(2) {
        let d = w[0].1 - w[1].1;
        if d < gap.0 {
            gap = (d, (w[1].1, w[1].0));
        }
    }
    checks.push(CheckResult::new(
        "mu_strictly_decreasing",
        gap.0,
        Above,
        0.0,
        Some(gap.1),
    ));
    let solver = sol.domain.solver();
    let mut saddle = 0.0_f64;
    for y in [Y_SADDLE - SADDLE_OFFSET, Y_SADDLE, Y_SADDLE + SADDLE_OFFSET] {
        saddle = saddle.max((solver.solve(y, None)? - PI).abs());
    }
    checks.push(CheckResult::new(
        "mu_at_saddle",
        saddle,
        AtMost,
        tol.mu_saddle.0,
        Some((PI, Y_SADDLE)),
    ));
    let mu_end = tr.mu.samples.last().map_or(f64::INFINITY, |&(_, m)| m.abs());
    checks.push(CheckResult::new(
        "mu_at_top",
        mu_end,
        AtMost,
        tol.sample_residual.0,
        Some((0.0, s)),
    ));
    let (vals, limit) = endpoint_products(&tr.mu, g, s, 200)?;
    let fit = extrapolate_endpoint_product(&vals, s, ENDPOINT_FIT_WINDOW.0, ENDPOINT_FIT_WINDOW.1);
    let product = fit.map_or(f64::INFINITY, |f| (f / limit - 1.0).abs());
    checks.push(CheckResult::new(
        "endpoint_product_limit",
        product,
        AtMost,
        tol.endpoint_product.0,
        Some((0.0, s)),
    ));
    let (change, at) = refinement_change(eps, p, tr, cfg.trace_samples)?;
    checks.push(CheckResult::new(
        "mu_grid_refinement",
        change,
        AtMost,
        tol.refinement.0,
        Some((0.0, at)),
    ));
    let angles = nodal_ray_angles(solver, RAY_STEP)?;
    checks.push(CheckResult::new(
        "equal_angles_z0",
        equal_angle_deviation(&angles),
        AtMost,
        tol.angle_degrees.0,
        Some((PI, Y_SADDLE)),
    ));

    // u on the verification grid
    let (xmax, _) = sol.domain.bounding_box();
    let n = cfg.verify_grid;
    let xs = symmetric_axis(xmax, n);
    let ys = symmetric_axis(s, n);
    let mus = row_mu(sol, &ys)?;
    let rows = ys
        .par_iter()
        .zip(mus.par_iter())
        .map(|(&y, mu)| {
            let (mut lo, mut hi) = (Worst::new(), Worst::new());
            if let Some(m) = *mu {
                for &x in &xs {
                    if x.abs() < m {
                        let u = sol.u_given_mu(x, y, m)?;
                        lo.update(-u, (x, y));
                        hi.update(u, (x, y));
                    }
                }
            }
            Ok((lo, hi))
        })
        .collect::<Result<Vec<_>, FieldError>>()?;
    let (lo, hi) = rows
        .into_iter()
        .fold((Worst::new(), Worst::new()), |(a, b), (c, d)| (a.merge(c), b.merge(d)));
    let umax = hi.value;
    checks.push(CheckResult::new(
        "u_nonnegative",
        lo.value / umax,
        AtMost,
        tol.nonnegativity.0,
        lo.at,
    ));

    let mut dir = Worst::new();
    let mut boundary = Vec::new();
    for (x, y) in sol.domain.boundary_points(cfg.boundary_samples)? {
        let m = x.abs();
        dir.update(sol.u_given_mu(x, y, m)?.abs() / umax, (x, y));
        boundary.push((x, y, m));
    }
    checks.push(CheckResult::new(
        "u_dirichlet",
        dir.value,
        AtMost,
        tol.dirichlet.0,
        dir.at,
    ));
    let mut on_interior = Worst::new();
    for (x, y) in tr.interior.points() {
        let m = sol.domain.mu_at(y)?.unwrap_or(0.0);
        on_interior.update(sol.u_given_mu(x, y, m)?.abs() / umax, (x, y));
    }
    checks.push(CheckResult::new(
        "u_zero_on_interior_curves",
        on_interior.value,
        AtMost,
        tol.dirichlet.0,
        on_interior.at,
    ));

    // positivity away from the nodal set and the gradient scale
    let cloud = nodal_point_cloud(tr);
    let reach = POSITIVE_DISTANCE + 0.5 * cloud_spacing(tr);
    let buckets = Buckets::new(&cloud, 2.0 * reach);
    let cx = symmetric_axis(xmax, COARSE_GRID);
    let cy = symmetric_axis(s, COARSE_GRID);
    let cmus = row_mu(sol, &cy)?;
    let coarse = cy
        .par_iter()
        .zip(cmus.par_iter())
        .map(|(&y, mu)| {
            let (mut low, mut grad) = (Worst::new(), Worst::new());
            if let Some(m) = *mu {
                for &x in &cx {
                    if x.abs() < m {
                        let (gx, gy) = sol.gradient_given_mu(x, y, m)?;
                        grad.update(gx.hypot(gy), (x, y));
                        if buckets.distance(x, y) > reach {
                            low.update(-sol.u_given_mu(x, y, m)?, (x, y));
                        }
                    }
                }
            }
            Ok((low, grad))
        })
        .collect::<Result<Vec<_>, FieldError>>()?;
    let (low, grad) = coarse
        .into_iter()
        .fold((Worst::new(), Worst::new()), |(a, b), (c, d)| (a.merge(c), b.merge(d)));
    checks.push(CheckResult::new(
        "u_positive_away_from_nodal_set",
        -low.value / umax,
        Above,
        tol.interior_positive.0,
        low.at,
    ));
    let mut neu = Worst::new();
    for &(x, y, m) in &boundary {
        let (gx, gy) = sol.gradient_given_mu(x, y, m)?;
        neu.update(gx.hypot(gy) / grad.value, (x, y));
    }
    checks.push(CheckResult::new("u_neumann", neu.value, AtMost, tol.neumann.0, neu.at));

    // quadrature cross-check
    let mut rng = seeded(cfg.seed, 2);
    let mut quad = Worst::new();
    for _ in 0..64 {
        let y = rng.gen_range(-s..s) * (1.0 - 1e-3);
        let m = sol.domain.mu_at(y)?.unwrap_or(0.0);
        let x = rng.gen_range(-m..=m);
        quad.update((sol.u_given_mu(x, y, m)? - sol.u_by_quadrature(x, y)?).abs(), (x, y));
    }
    checks.push(CheckResult::new(
        "u_quadrature_agreement",
        quad.value,
        AtMost,
        tol.quadrature.0,
        quad.at,
    ));

    // symmetry of each nodal domain about its measured vertical line
    let mut sym = Worst::new();
    let mut c_dev = Worst::new();
    for (a, y) in tr.interior.points() {
        if y.abs() > Y_SADDLE - SINGULAR_HEIGHT_GAP || a <= 0.0 {
            continue;
        }
        let m = sol.domain.mu_at(y)?.unwrap_or(0.0);
        let side_c = 0.5 * (a + m);
        let middle_c = 0.5 * (-a + a);
        c_dev.update((side_c - PI).abs(), (side_c, y));
        for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let x = side_c + t * (m - side_c);
            let d = sol.u_given_mu(x, y, m)? - sol.u_given_mu(2.0 * side_c - x, y, m)?;
            sym.update(d.abs(), (x, y));
            let xm = middle_c + t * (a - middle_c);
            let d = sol.u_given_mu(xm, y, m)? - sol.u_given_mu(2.0 * middle_c - xm, y, m)?;
            sym.update(d.abs(), (xm, y));
        }
    }
    checks.push(CheckResult::new(
        "nodal_domain_symmetry",
        sym.value,
        AtMost,
        tol.symmetry.0,
        sym.at,
    ));

    // PDE residual
    let heights = random_heights(&mut seeded(cfg.seed, 3), s, cfg.pde_samples.div_ceil(PDE_X_PER_HEIGHT));
    let pde = heights
        .par_iter()
        .enumerate()
        .map(|(i, &y)| {
            let mut rng = seeded(cfg.seed, 1000 + i as u64);
            let m = sol.domain.mu_at(y)?.unwrap_or(0.0);
            let op = sol.boundary_operator(y, FD_STEP)?;
            let h = hsrc.eval(y).unwrap_or(f64::NAN);
            let mut w = Worst::new();
            for _ in 0..PDE_X_PER_HEIGHT {
                let x = rng.gen_range(-m..m);
                let r = sol.pde_operator_given(x, y, op)? + h;
                w.update(r.abs() / (1.0 + h.abs()), (x, y));
            }
            Ok(w)
        })
        .collect::<Result<Vec<_>, SolutionError>>()?
        .into_iter()
        .fold(Worst::new(), Worst::merge);
    checks.push(CheckResult::new("pde_residual", pde.value, AtMost, tol.pde.0, pde.at));

    // h: x-independence, evenness, pinned values
    let mut disp = Worst::new();
    let mut even = Worst::new();
    for y in random_heights(&mut seeded(cfg.seed, 4), s, DISPERSION_HEIGHTS) {
        let m = sol.domain.mu_at(y)?.unwrap_or(0.0);
        let xs: Vec<f64> = [-0.9, -0.45, 0.0, 0.3, 0.8].iter().map(|t| t * m).collect();
        let d = residual_h(sol, y, &xs)?;
        disp.update(d.spread, (0.0, y));
        let e = (sol.h_direct(y)? - sol.h_direct(-y)?)
            .abs()
            .max((hsrc.eval(y).unwrap_or(f64::NAN) - hsrc.eval(-y).unwrap_or(f64::NAN)).abs());
        even.update(e, (0.0, y));
    }
    checks.push(CheckResult::new(
        "h_x_independence",
        disp.value,
        AtMost,
        tol.dispersion.0,
        disp.at,
    ));
    checks.push(CheckResult::new("h_even", even.value, AtMost, tol.evenness.0, even.at));
    let (a, b) = hsrc.saddle_extrapolations;
    checks.push(CheckResult::new(
        "h_saddle_extrapolation",
        a.abs().max(b.abs()),
        AtMost,
        tol.saddle_extrapolation.0,
        Some((PI, Y_SADDLE)),
    ));
    checks.push(CheckResult::new(
        "h_endpoint_extrapolation",
        (hsrc.endpoint_extrapolation - hsrc.endpoint_value).abs(),
        AtMost,
        tol.saddle_extrapolation.0,
        Some((0.0, s)),
    ));

    // the unperturbed construction
    let (u_err, u_at, h_err, h_at) = unperturbed_oracle(p, cfg.trace_samples, COARSE_GRID)?;
    checks.push(CheckResult::new(
        "oracle_u_unperturbed",
        u_err,
        AtMost,
        tol.oracle_u.0,
        Some(u_at),
    ));
    checks.push(CheckResult::new(
        "oracle_h_unperturbed",
        h_err,
        AtMost,
        tol.oracle_h.0,
        Some((0.0, h_at)),
    ));

    // topology
    let topo = u_nodal_topology(sol, cfg.grid)?;
    checks.push(CheckResult::new(
        "u_nodal_domains",
        topo.domains as f64,
        Equal,
        3.0,
        None,
    ));
    checks.push(CheckResult::new(
        "u_interior_nodal_curves",
        topo.interior_curves as f64,
        Equal,
        2.0,
        None,
    ));

    Ok(VerificationReport {
        pass: checks.iter().all(|c| c.pass),
        provenance: inp.manifest_sha256.clone(),
        flood_fill_resolution: cfg.grid,
        checks,
    })
}

/// Pipeline at `ε = 0` against `(cos x − cos √3y)²/2` on the rhombus shrunk by
/// `ORACLE_SHRINK` and against `−4 sin²(√3y)`.
pub fn unperturbed_oracle(
    p: &Perturbation,
    samples: usize,
    n: usize,
) -> Result<(f64, (f64, f64), f64, f64), VerifyError> {
    let t0 = trace(0.0, p, samples)?;
    let (sol0, h0) = assemble(&t0, 0.0, p)?;
    let top = Y_TOP - ORACLE_SHRINK;
    let xs = symmetric_axis(2.0 * PI, n);
    let ys = symmetric_axis(top, n);
    let mus = row_mu(&sol0, &ys)?;
    let mut uw = Worst::new();
    for (&y, mu) in ys.iter().zip(&mus) {
        let Some(m) = *mu else { continue };
        for &x in &xs {
            if x.abs() <= 2.0 * PI - SQRT3 * y.abs() {
                let exact = 0.5 * (x.cos() - (SQRT3 * y).cos()).powi(2);
                uw.update((sol0.u_given_mu(x, y, m)? - exact).abs(), (x, y));
            }
        }
    }
    let mut hw = Worst::new();
    for y in symmetric_axis(Y_TOP, 801) {
        let exact = -4.0 * (SQRT3 * y).sin().powi(2);
        hw.update((h0.eval(y).unwrap_or(f64::NAN) - exact).abs(), (0.0, y));
    }
    Ok((
        uw.value,
        uw.at.unwrap_or((0.0, 0.0)),
        hw.value,
        hw.at.map_or(0.0, |a| a.1),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flood_fill_counts_and_interfaces() {
        // + + - -
        // + 0 - -
        // + + + +
        let signs = [1, 1, -1, -1, 1, 0, -1, -1, 1, 1, 1, 1];
        let c = flood_fill(&signs, 4, 3);
        assert_eq!(c.count(), 2);
        assert_eq!(c.interfaces.len(), 1);
        // a column of zeros splits the plane
        let signs = [1, 0, 1, 1, 0, 1];
        let c = flood_fill(&signs, 3, 2);
        assert_eq!(c.count(), 2);
        assert!(c.interfaces.is_empty());
    }

    #[test]
    fn flood_fill_ignores_diagonal_contacts() {
        let signs = [1, -1, -1, 1];
        let c = flood_fill(&signs, 2, 2);
        assert_eq!(c.count(), 4);
        assert_eq!(c.interfaces.len(), 4);
    }

    #[test]
    fn comparisons_are_monotone_in_the_tolerance() {
        let a = CheckResult::new("a", 1e-9, Comparison::AtMost, 1e-8, None);
        assert!(a.pass);
        assert!(CheckResult::new("a", 1e-9, Comparison::AtMost, 1e-7, None).pass);
        assert!(!CheckResult::new("a", f64::NAN, Comparison::AtMost, 1.0, None).pass);
        assert!(CheckResult::new("b", 0.5, Comparison::Above, 0.1, None).pass);
        assert!(CheckResult::new("b", 0.5, Comparison::Above, 0.0, None).pass);
        assert!(!CheckResult::new("b", 0.0, Comparison::Above, 0.0, None).pass);
    }

    #[test]
    fn symmetric_axis_contains_zero() {
        let a = symmetric_axis(3.0, 1001);
        assert_eq!(a[500], 0.0);
        assert_eq!(a[0], -3.0);
        assert_eq!(a[1000], 3.0);
    }

    #[test]
    fn worst_tracks_nan_and_location() {
        let mut w = Worst::new();
        w.update(1.0, (1.0, 0.0));
        w.update(0.5, (2.0, 0.0));
        assert_eq!(w.at, Some((1.0, 0.0)));
        w.update(f64::NAN, (3.0, 0.0));
        assert!(w.value.is_nan());
    }

    #[test]
    fn buckets_measure_distance() {
        let b = Buckets::new(&[(0.0, 0.0), (1.0, 1.0)], 0.5);
        assert!((b.distance(0.3, 0.4) - 0.5).abs() < 1e-15);
        assert_eq!(b.distance(5.0, 5.0), 0.5);
    }
}
