//! SVG renderings of the nodal sets: `u` with its symmetry lines, `v` with
//! its sign chart, and the unperturbed lines of `w` in the rhombus.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{eval_w, FieldError, SQRT3};
use crate::manifest::{write_text, Dec, ManifestError};
use crate::nodal::{TraceResult, Y_SADDLE, Y_TOP};
use crate::solution::{SolutionError, SolutionU};
use crate::verify::{flood_fill, row_mu, sign_grid, symmetric_axis, u_nodal_topology, ChartField};

/// Grid of the contour plots.
pub const CONTOUR_GRID: usize = 401;
/// Raster of the drawn sign chart.
pub const CHART_RASTER: usize = 240;
/// Drawing size in pixels.
pub const CANVAS: (f64, f64) = (900.0, 520.0);

pub const FIGURE_U: &str = "figure_u_nodal_set.svg";
pub const FIGURE_V: &str = "figure_v_sign_chart.svg";
pub const FIGURE_W0: &str = "figure_w_unperturbed.svg";

#[derive(Debug, Error)]
pub enum FigureError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Solution(#[from] SolutionError),
    #[error(transparent)]
    Io(#[from] ManifestError),
}

pub type Segment = [(f64, f64); 2];

/// Zero contour of a row-major `ys.len() × xs.len()` node grid; cells with a
/// `NaN` corner are skipped and saddle cells are split by the centre value.
pub fn marching_squares(xs: &[f64], ys: &[f64], values: &[f64]) -> Vec<Segment> {
    let nx = xs.len();
    let mut out = Vec::new();
    let cross = |p: (f64, f64), q: (f64, f64), a: f64, b: f64| {
        let t = a / (a - b);
        (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
    };
    for r in 0..ys.len().saturating_sub(1) {
        for c in 0..nx.saturating_sub(1) {
            let v = [
                values[r * nx + c],
                values[r * nx + c + 1],
                values[(r + 1) * nx + c + 1],
                values[(r + 1) * nx + c],
            ];
            if v.iter().any(|x| x.is_nan()) {
                continue;
            }
            let p = [
                (xs[c], ys[r]),
                (xs[c + 1], ys[r]),
                (xs[c + 1], ys[r + 1]),
                (xs[c], ys[r + 1]),
            ];
            let pos = v.map(|x| x > 0.0);
            // edges: bottom, right, top, left
            let mut hits: Vec<(usize, (f64, f64))> = Vec::with_capacity(4);
            for e in 0..4 {
                let (i, j) = (e, (e + 1) % 4);
                if pos[i] != pos[j] {
                    hits.push((e, cross(p[i], p[j], v[i], v[j])));
                }
            }
            match hits.len() {
                2 => out.push([hits[0].1, hits[1].1]),
                4 => {
                    let centre = 0.25 * v.iter().sum::<f64>();
                    let h = |e: usize| hits[e].1;
                    if (centre > 0.0) == pos[0] {
                        // corners 1 and 3 are cut off
                        out.push([h(0), h(1)]);
                        out.push([h(2), h(3)]);
                    } else {
                        out.push([h(3), h(0)]);
                        out.push([h(1), h(2)]);
                    }
                }
                _ => {}
            }
        }
    }
    out
}

/// Minimal SVG writer in world coordinates.
struct Svg {
    view: (f64, f64, f64, f64),
    body: String,
}

impl Svg {
    const MARGIN: f64 = 40.0;

    fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Self {
        Self {
            view: (xmin, xmax, ymin, ymax),
            body: String::new(),
        }
    }

    fn px(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let (x0, x1, y0, y1) = self.view;
        (
            Self::MARGIN + (x - x0) / (x1 - x0) * CANVAS.0,
            Self::MARGIN + (y1 - y) / (y1 - y0) * CANVAS.1,
        )
    }

    fn path(&mut self, d: &str, style: &str) {
        if !d.is_empty() {
            let _ = writeln!(self.body, "<path d=\"{d}\" {style}/>");
        }
    }

    fn polyline(&mut self, pts: &[(f64, f64)], closed: bool, style: &str) {
        let mut d = String::new();
        for (i, &p) in pts.iter().enumerate() {
            let (x, y) = self.px(p);
            let _ = write!(d, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" });
        }
        if closed && !d.is_empty() {
            d.push('Z');
        }
        self.path(d.trim_end(), style);
    }

    fn segments(&mut self, segs: &[Segment], style: &str) {
        let mut d = String::new();
        for s in segs {
            let (a, b) = (self.px(s[0]), self.px(s[1]));
            let _ = write!(d, "M{:.2},{:.2}L{:.2},{:.2}", a.0, a.1, b.0, b.1);
        }
        self.path(&d, style);
    }

    fn rect(&mut self, lo: (f64, f64), hi: (f64, f64), fill: &str) {
        let (a, b) = (self.px((lo.0, hi.1)), self.px((hi.0, lo.1)));
        let _ = writeln!(
            self.body,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{fill}\"/>",
            a.0,
            a.1,
            b.0 - a.0,
            b.1 - a.1
        );
    }

    fn title(&mut self, text: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{:.0}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">{text}</text>",
            Self::MARGIN
        );
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = CANVAS.0 + 2.0 * Self::MARGIN,
            h = CANVAS.1 + 2.0 * Self::MARGIN,
        )
    }
}

const BOUNDARY: &str = "fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"";
const NODAL: &str = "fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\"";
const DASHED: &str = "fill=\"none\" stroke=\"#555\" stroke-width=\"1\" stroke-dasharray=\"6,4\"";

/// Closed outline of `Ω` from the traced `μ`.
pub fn boundary_polygon(trace: &TraceResult) -> Vec<(f64, f64)> {
    let pts: Vec<(f64, f64)> = trace.mu.points().collect();
    let mut out = Vec::with_capacity(4 * pts.len());
    out.extend(pts.iter().map(|&(x, y)| (x, y)));
    out.extend(pts.iter().rev().map(|&(x, y)| (-x, y)));
    out.extend(pts.iter().map(|&(x, y)| (-x, -y)));
    out.extend(pts.iter().rev().map(|&(x, y)| (x, -y)));
    out
}

/// Symmetry abscissa of the right side domain: mean midpoint of its
/// `x`-extent over the traced heights.
pub fn side_domain_center(sol: &SolutionU, trace: &TraceResult) -> Result<f64, SolutionError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, y) in trace.interior.points() {
        if y.abs() < Y_SADDLE && a > 0.0 {
            if let Some(m) = sol.domain.mu_at(y)? {
                sum += 0.5 * (a + m);
                count += 1;
            }
        }
    }
    Ok(if count == 0 { PI } else { sum / count as f64 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureReport {
    pub resolution: usize,
    pub v_sign_regions: usize,
    pub u_nodal_domains: usize,
    pub u_interior_curves: usize,
    pub side_domain_center: Dec,
    /// Largest distance of a contour vertex of `w` from the straight nodal lines.
    pub unperturbed_line_defect: Dec,
    pub unperturbed_lines_straight: bool,
    pub figures: Vec<String>,
}

fn render_u(sol: &SolutionU, trace: &TraceResult, c: f64) -> String {
    let s = sol.domain.s;
    let mut svg = Svg::new(-2.0 * PI - 0.3, 2.0 * PI + 0.3, -s - 0.3, s + 0.3);
    svg.title("nodal set of u");
    svg.polyline(&boundary_polygon(trace), true, BOUNDARY);
    let right: Vec<(f64, f64)> = trace.interior.points().collect();
    let left: Vec<(f64, f64)> = right.iter().map(|&(x, y)| (-x, y)).collect();
    svg.polyline(&right, false, NODAL);
    svg.polyline(&left, false, NODAL);
    svg.polyline(&[(0.0, -s), (0.0, s)], false, DASHED);
    for cx in [-c, c] {
        svg.polyline(&[(cx, -Y_SADDLE), (cx, Y_SADDLE)], false, DASHED);
    }
    svg.finish()
}

fn render_v(sol: &SolutionU, trace: &TraceResult) -> Result<String, FigureError> {
    let s = sol.domain.s;
    let (xmax, _) = sol.domain.bounding_box();
    let mut svg = Svg::new(-2.0 * PI - 0.3, 2.0 * PI + 0.3, -s - 0.3, s + 0.3);
    svg.title("nodal set and sign chart of v");
    let (xs, ys, signs) = sign_grid(sol, ChartField::V, CHART_RASTER)?;
    let (dx, dy) = (xs[1] - xs[0], ys[1] - ys[0]);
    let sigma = sol.sigma() as i8;
    for (r, &y) in ys.iter().enumerate() {
        let row = &signs[r * CHART_RASTER..(r + 1) * CHART_RASTER];
        let mut c = 0;
        while c < CHART_RASTER {
            let v = row[c];
            let start = c;
            while c < CHART_RASTER && row[c] == v {
                c += 1;
            }
            if v != 0 {
                let fill = if v * sigma > 0 { "#f5b7b1" } else { "#aed6f1" };
                svg.rect(
                    (xs[start] - 0.5 * dx, y - 0.5 * dy),
                    (xs[c - 1] + 0.5 * dx, y + 0.5 * dy),
                    fill,
                );
            }
        }
    }
    let cx = symmetric_axis(xmax, CONTOUR_GRID);
    let cy = symmetric_axis(s, CONTOUR_GRID);
    let mus = row_mu(sol, &cy)?;
    let mut values = vec![f64::NAN; CONTOUR_GRID * CONTOUR_GRID];
    for (r, (&y, mu)) in cy.iter().zip(&mus).enumerate() {
        let Some(m) = *mu else { continue };
        for (c, &x) in cx.iter().enumerate() {
            if x.abs() < m {
                values[r * CONTOUR_GRID + c] = sol.v_field().value(x, y)?;
            }
        }
    }
    svg.segments(&marching_squares(&cx, &cy, &values), NODAL);
    svg.polyline(&boundary_polygon(trace), true, BOUNDARY);
    Ok(svg.finish())
}

/// Zero contour of `w` inside the open rhombus `|x| < 2π − √3|y|`.
pub fn unperturbed_contour(n: usize) -> (Vec<Segment>, f64) {
    let xs = symmetric_axis(2.0 * PI, n);
    let ys = symmetric_axis(Y_TOP, n);
    let mut values = vec![f64::NAN; n * n];
    for (r, &y) in ys.iter().enumerate() {
        for (c, &x) in xs.iter().enumerate() {
            if x.abs() < 2.0 * PI - SQRT3 * y.abs() {
                values[r * n + c] = eval_w(x, y).value;
            }
        }
    }
    (marching_squares(&xs, &ys, &values), xs[1] - xs[0])
}

/// Distance to the nearest nodal line of `w`: `x = kπ` or `x = ±√3 y + 2πm`.
pub fn distance_to_unperturbed_lines((x, y): (f64, f64)) -> f64 {
    let mut best = f64::INFINITY;
    for k in -2..=2 {
        best = best.min((x - k as f64 * PI).abs());
    }
    for m in -1..=1 {
        let shift = 2.0 * PI * m as f64;
        best = best.min(0.5 * (x - SQRT3 * y - shift).abs());
        best = best.min(0.5 * (x + SQRT3 * y - shift).abs());
    }
    best
}

fn render_w0(segs: &[Segment]) -> String {
    let mut svg = Svg::new(-2.0 * PI - 0.3, 2.0 * PI + 0.3, -Y_TOP - 0.3, Y_TOP + 0.3);
    svg.title("nodal lines of w in the rhombus");
    svg.polyline(
        &[(2.0 * PI, 0.0), (0.0, Y_TOP), (-2.0 * PI, 0.0), (0.0, -Y_TOP)],
        true,
        DASHED,
    );
    svg.segments(segs, NODAL);
    svg.finish()
}

/// Writes the three figures into `dir` and returns the sign-region counts.
pub fn compare_figures(
    sol: &SolutionU,
    trace: &TraceResult,
    dir: &Path,
    grid: usize,
) -> Result<FigureReport, FigureError> {
    let c = side_domain_center(sol, trace)?;
    let (_, _, vsigns) = sign_grid(sol, ChartField::V, grid)?;
    let v_regions = flood_fill(&vsigns, grid, grid).count();
    let topo = u_nodal_topology(sol, grid)?;
    let (segs, spacing) = unperturbed_contour(CONTOUR_GRID);
    let defect = segs
        .iter()
        .flat_map(|s| s.iter())
        .map(|&p| distance_to_unperturbed_lines(p))
        .fold(0.0_f64, f64::max);

    let mut paths: Vec<PathBuf> = Vec::new();
    for (name, text) in [
        (FIGURE_U, render_u(sol, trace, c)),
        (FIGURE_V, render_v(sol, trace)?),
        (FIGURE_W0, render_w0(&segs)),
    ] {
        let path = dir.join(name);
        write_text(&path, &text)?;
        paths.push(path);
    }
    Ok(FigureReport {
        resolution: grid,
        v_sign_regions: v_regions,
        u_nodal_domains: topo.domains,
        u_interior_curves: topo.interior_curves,
        side_domain_center: Dec(c),
        unperturbed_line_defect: Dec(defect),
        unperturbed_lines_straight: defect <= 0.5 * spacing,
        figures: paths
            .iter()
            .map(|p| {
                p.file_name()
                    .map_or_else(String::new, |f| f.to_string_lossy().into_owned())
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_contour_lies_on_the_circle() {
        let n = 81;
        let xs = symmetric_axis(2.0, n);
        let ys = xs.clone();
        let mut v = Vec::with_capacity(n * n);
        for &y in &ys {
            for &x in &xs {
                v.push(x * x + y * y - 1.0);
            }
        }
        let segs = marching_squares(&xs, &ys, &v);
        assert!(segs.len() > 100);
        for s in &segs {
            for &(x, y) in s {
                assert!((x.hypot(y) - 1.0).abs() < 2e-3);
            }
        }
    }

    #[test]
    fn nan_cells_are_skipped() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.0, 1.0];
        let v = [-1.0, 1.0, f64::NAN, -1.0, 1.0, f64::NAN];
        let segs = marching_squares(&xs, &ys, &v);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0], [(0.5, 0.0), (0.5, 1.0)]);
    }

    #[test]
    fn saddle_cell_splits_by_centre() {
        let xs = [0.0, 1.0];
        let ys = [0.0, 1.0];
        // corners (bl, br, tl, tr) = (+, −, −, +), centre positive
        let v = [1.0, -1.0, -1.0, 1.2];
        let segs = marching_squares(&xs, &ys, &v);
        assert_eq!(segs.len(), 2);
    }

    #[test]
    fn unperturbed_lines_are_straight() {
        let (segs, h) = unperturbed_contour(201);
        assert!(!segs.is_empty());
        let defect = segs
            .iter()
            .flat_map(|s| s.iter())
            .map(|&p| distance_to_unperturbed_lines(p))
            .fold(0.0_f64, f64::max);
        assert!(defect <= 0.5 * h, "{defect} vs {h}");
    }

    #[test]
    fn svg_is_well_formed() {
        let mut svg = Svg::new(0.0, 1.0, 0.0, 1.0);
        svg.polyline(&[(0.0, 0.0), (1.0, 1.0)], false, BOUNDARY);
        svg.rect((0.0, 0.0), (0.5, 0.5), "red");
        let text = svg.finish();
        assert!(text.starts_with("<svg"));
        assert!(text.trim_end().ends_with("</svg>"));
        assert!(text.contains("M40.00,560.00 L940.00,40.00"));
    }
}
