//! Staged command-line driver. Stages read and write files in the output
//! directory only: `construct` writes the manifest, `trace` the curves,
//! `build` the tables of `Ω`, `u` and `h`, `verify` the report and `render`
//! the figures.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::coeffs::{select_waveset, solve_perturbation, Perturbation};
use crate::epsilon::{check_all, select_epsilon};
use crate::figures::compare_figures;
use crate::manifest::{
    format_real, read_json, read_text, sha256_hex, to_json, write_text, BuildMeta, Dec, EpsilonPolicy, Manifest,
    ManifestError, RunConfig, TraceMeta,
};
use crate::nodal::{trace, CurveAxis, NodalCurve, TraceResult};
use crate::solution::{build_domain, build_h, SolutionU, SourceH};
use crate::verify::{run_suite, symmetric_axis, SuiteInputs, VerificationReport};

pub const MANIFEST: &str = "manifest.json";
pub const MU_CSV: &str = "mu.csv";
pub const INTERIOR_CSV: &str = "interior.csv";
pub const TRACE_META: &str = "trace.json";
pub const BOUNDARY_CSV: &str = "boundary.csv";
pub const U_GRID_CSV: &str = "u_grid.csv";
pub const H_CSV: &str = "h.csv";
pub const BUILD_META: &str = "build.json";
pub const REPORT: &str = "report.json";
pub const FIGURES_META: &str = "figures.json";

#[derive(Debug, Parser)]
#[command(name = "nodal", about = "Construct and verify the nodal-curve counterexample")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory shared by all stages
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Fixed epsilon (`auto` runs the halving search)
    #[arg(long, global = true)]
    pub epsilon: Option<String>,
    /// Smallest wavenumber of the greedy search
    #[arg(long = "start-k", global = true)]
    pub start_k: Option<u32>,
    /// Flood-fill grid size
    #[arg(long, global = true)]
    pub grid: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Waveset, coefficients and epsilon; writes the manifest
    Construct,
    /// Trace the boundary and interior curves
    Trace,
    /// Tabulate the domain, the solution and the source term
    Build,
    /// Run the verification suite
    Verify,
    /// Render the three figures
    Render,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Construct => "construct",
            Self::Trace => "trace",
            Self::Build => "build",
            Self::Verify => "verify",
            Self::Render => "render",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{stage}: missing {missing}; run `{needs}` first")]
    StageOrder {
        stage: &'static str,
        missing: String,
        needs: &'static str,
    },
    #[error("{stage}: {message}")]
    Construction { stage: &'static str, message: String },
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Verification(_) => 1,
            Self::Construction { .. } => 2,
            Self::Usage(_) | Self::StageOrder { .. } => 3,
        }
    }
}

fn construction(stage: &'static str) -> impl Fn(String) -> CliError {
    move |message| CliError::Construction { stage, message }
}

fn io_error(stage: &'static str, e: ManifestError) -> CliError {
    match e {
        ManifestError::Config(m) => CliError::Usage(m),
        other => CliError::Construction {
            stage,
            message: other.to_string(),
        },
    }
}

/// Configuration from `--config` (or defaults) with the flags applied.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => read_json::<RunConfig>(path).map_err(|e| CliError::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(e) = &cli.epsilon {
        cfg.epsilon = if e.eq_ignore_ascii_case("auto") {
            EpsilonPolicy::Auto
        } else {
            EpsilonPolicy::Fixed(
                e.parse()
                    .map_err(|_| CliError::Usage(format!("--epsilon {e:?} is not a number")))?,
            )
        };
    }
    if let Some(k) = cli.start_k {
        cfg.start_k = k;
    }
    if let Some(g) = cli.grid {
        cfg.grid = g;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn require(dir: &Path, name: &str, stage: &'static str, needs: &'static str) -> Result<PathBuf, CliError> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(CliError::StageOrder {
            stage,
            missing: p.display().to_string(),
            needs,
        })
    }
}

/// Manifest, its hash and the perturbation it describes.
struct Loaded {
    manifest: Manifest,
    sha: String,
    perturbation: Perturbation,
}

fn load_manifest(dir: &Path, stage: &'static str) -> Result<Loaded, CliError> {
    let path = require(dir, MANIFEST, stage, "construct")?;
    let text = read_text(&path).map_err(|e| io_error(stage, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let perturbation = manifest.perturbation().map_err(|e| io_error(stage, e))?;
    Ok(Loaded {
        sha: sha256_hex(text.as_bytes()),
        manifest,
        perturbation,
    })
}

fn check_fresh(
    found: &str,
    expected: &str,
    stage: &'static str,
    file: &str,
    needs: &'static str,
) -> Result<(), CliError> {
    if found == expected {
        Ok(())
    } else {
        Err(CliError::StageOrder {
            stage,
            missing: format!("{file} matching the current manifest"),
            needs,
        })
    }
}

fn load_trace(dir: &Path, loaded: &Loaded, stage: &'static str) -> Result<TraceResult, CliError> {
    let meta_path = require(dir, TRACE_META, stage, "trace")?;
    let mu_path = require(dir, MU_CSV, stage, "trace")?;
    let int_path = require(dir, INTERIOR_CSV, stage, "trace")?;
    let meta: TraceMeta = read_json(&meta_path).map_err(|e| io_error(stage, e))?;
    check_fresh(&meta.manifest_sha256, &loaded.sha, stage, TRACE_META, "trace")?;
    let parse = |p: &Path| -> Result<NodalCurve, CliError> {
        let text = read_text(p).map_err(|e| io_error(stage, e))?;
        NodalCurve::from_csv(CurveAxis::ByY, &text).map_err(|e| construction(stage)(e.to_string()))
    };
    Ok(TraceResult {
        epsilon: meta.epsilon.0,
        s: meta.s.0,
        mu: parse(&mu_path)?,
        interior: parse(&int_path)?,
    })
}

fn load_build(
    dir: &Path,
    loaded: &Loaded,
    tr: &TraceResult,
    stage: &'static str,
) -> Result<(SolutionU, SourceH), CliError> {
    let meta_path = require(dir, BUILD_META, stage, "build")?;
    let h_path = require(dir, H_CSV, stage, "build")?;
    let meta: BuildMeta = read_json(&meta_path).map_err(|e| io_error(stage, e))?;
    check_fresh(&meta.manifest_sha256, &loaded.sha, stage, BUILD_META, "build")?;
    let eps = loaded.manifest.epsilon();
    let domain = build_domain(tr, eps, &loaded.perturbation).map_err(|e| construction(stage)(e.to_string()))?;
    let sol = SolutionU::new(domain, eps, &loaded.perturbation);
    let text = read_text(&h_path).map_err(|e| io_error(stage, e))?;
    let h = SourceH::from_csv(
        &text,
        meta.s.0,
        meta.h_endpoint.0,
        (meta.h_saddle_extrapolations[0].0, meta.h_saddle_extrapolations[1].0),
        meta.h_endpoint_extrapolation.0,
    )
    .map_err(|e| construction(stage)(e.to_string()))?;
    Ok((sol, h))
}

fn write(dir: &Path, name: &str, text: &str, stage: &'static str) -> Result<(), CliError> {
    write_text(&dir.join(name), text).map_err(|e| io_error(stage, e))
}

pub fn cmd_construct(cfg: &RunConfig, dir: &Path) -> Result<Manifest, CliError> {
    let ws = select_waveset(cfg.start_k).map_err(|e| construction("select_waveset")(e.to_string()))?;
    let p = solve_perturbation(&ws).map_err(|e| construction("solve_perturbation")(e.to_string()))?;
    let report = match cfg.epsilon {
        EpsilonPolicy::Auto => {
            select_epsilon(&p)
                .map_err(|e| construction("select_epsilon")(e.to_string()))?
                .1
        }
        EpsilonPolicy::Fixed(eps) => {
            let r = check_all(eps, &p).map_err(|e| construction("check_all")(e.to_string()))?;
            if !r.pass {
                return Err(construction("check_all")(format!(
                    "epsilon = {} fails: {}",
                    format_real(eps),
                    r.failures.join("; ")
                )));
            }
            r
        }
    };
    let manifest = Manifest::new(cfg.clone(), &p, &report);
    std::fs::create_dir_all(dir).map_err(|e| construction("construct")(format!("{}: {e}", dir.display())))?;
    write(dir, MANIFEST, &to_json(&manifest), "construct")?;
    Ok(manifest)
}

pub fn cmd_trace(dir: &Path) -> Result<TraceMeta, CliError> {
    let stage = "trace";
    let l = load_manifest(dir, stage)?;
    let eps = l.manifest.epsilon();
    let tr =
        trace(eps, &l.perturbation, l.manifest.config.trace_samples).map_err(|e| construction(stage)(e.to_string()))?;
    let g = crate::field::FieldHandle::new(crate::field::FieldKind::G, eps, &l.perturbation);
    let residual = tr
        .mu
        .max_residual(&g)
        .and_then(|a| Ok(a.max(tr.interior.max_residual(&g)?)))
        .map_err(|e| construction(stage)(e.to_string()))?;
    write(dir, MU_CSV, &tr.mu.to_csv(), stage)?;
    write(dir, INTERIOR_CSV, &tr.interior.to_csv(), stage)?;
    let meta = TraceMeta {
        manifest_sha256: l.sha,
        epsilon: Dec(eps),
        s: Dec(tr.s),
        mu_samples: tr.mu.len(),
        interior_samples: tr.interior.len(),
        max_residual: Dec(residual),
    };
    write(dir, TRACE_META, &to_json(&meta), stage)?;
    Ok(meta)
}

fn u_grid_csv(sol: &SolutionU, n: usize) -> Result<String, CliError> {
    let (xmax, s) = sol.domain.bounding_box();
    let xs = symmetric_axis(xmax, n);
    let ys = symmetric_axis(s, n);
    let mus = crate::verify::row_mu(sol, &ys).map_err(|e| construction("build")(e.to_string()))?;
    let mut out = String::from("x,y,u\n");
    for (&y, mu) in ys.iter().zip(&mus) {
        for &x in &xs {
            let u = match *mu {
                Some(m) if x.abs() < m => sol
                    .u_given_mu(x, y, m)
                    .map_err(|e| construction("build")(e.to_string()))?,
                _ => f64::NAN,
            };
            out.push_str(&format!("{},{},{}\n", format_real(x), format_real(y), format_real(u)));
        }
    }
    Ok(out)
}

pub fn cmd_build(dir: &Path) -> Result<BuildMeta, CliError> {
    let stage = "build";
    let l = load_manifest(dir, stage)?;
    let tr = load_trace(dir, &l, stage)?;
    let eps = l.manifest.epsilon();
    let domain = build_domain(&tr, eps, &l.perturbation).map_err(|e| construction(stage)(e.to_string()))?;
    let sol = SolutionU::new(domain, eps, &l.perturbation);
    let h = build_h(&sol).map_err(|e| construction(stage)(e.to_string()))?;

    let mut boundary = String::from("x,y\n");
    for (x, y) in crate::figures::boundary_polygon(&tr) {
        boundary.push_str(&format!("{},{}\n", format_real(x), format_real(y)));
    }
    write(dir, BOUNDARY_CSV, &boundary, stage)?;
    write(
        dir,
        U_GRID_CSV,
        &u_grid_csv(&sol, l.manifest.config.export_grid)?,
        stage,
    )?;
    write(dir, H_CSV, &h.to_csv(), stage)?;
    let meta = BuildMeta {
        manifest_sha256: l.sha.clone(),
        waveset: l.perturbation.waveset.k.to_vec(),
        d: l.perturbation.d_f64().iter().map(|&d| Dec(d)).collect(),
        epsilon: Dec(eps),
        s: Dec(tr.s),
        orientation: sol.domain.orientation,
        h_endpoint: Dec(h.endpoint_value),
        h_saddle_extrapolations: [Dec(h.saddle_extrapolations.0), Dec(h.saddle_extrapolations.1)],
        h_endpoint_extrapolation: Dec(h.endpoint_extrapolation),
        tolerances: l.manifest.config.tolerances.clone(),
        h_extension: "h is tabulated on [-s, s] only; any even continuous extension beyond is left to the consumer"
            .into(),
    };
    write(dir, BUILD_META, &to_json(&meta), stage)?;
    Ok(meta)
}

/// Configuration of a later stage: the manifest's, with `--grid` applied.
fn stage_config(l: &Loaded, grid: Option<usize>) -> Result<RunConfig, CliError> {
    let mut cfg = l.manifest.config.clone();
    if let Some(g) = grid {
        cfg.grid = g;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn cmd_verify(dir: &Path, grid: Option<usize>) -> Result<VerificationReport, CliError> {
    let stage = "verify";
    let l = load_manifest(dir, stage)?;
    let tr = load_trace(dir, &l, stage)?;
    let (sol, h) = load_build(dir, &l, &tr, stage)?;
    let cfg = stage_config(&l, grid)?;
    let report = run_suite(&SuiteInputs {
        perturbation: &l.perturbation,
        trace: &tr,
        solution: &sol,
        source: &h,
        config: &cfg,
        manifest_sha256: l.sha.clone(),
    })
    .map_err(|e| construction(stage)(e.to_string()))?;
    write(dir, REPORT, &to_json(&report), stage)?;
    Ok(report)
}

pub fn cmd_render(dir: &Path, grid: Option<usize>) -> Result<crate::figures::FigureReport, CliError> {
    let stage = "render";
    let l = load_manifest(dir, stage)?;
    let report_path = require(dir, REPORT, stage, "verify")?;
    let report: VerificationReport = read_json(&report_path).map_err(|e| io_error(stage, e))?;
    check_fresh(&report.provenance, &l.sha, stage, REPORT, "verify")?;
    let tr = load_trace(dir, &l, stage)?;
    let (sol, _) = load_build(dir, &l, &tr, stage)?;
    let cfg = stage_config(&l, grid)?;
    let fig = compare_figures(&sol, &tr, dir, cfg.grid).map_err(|e| construction(stage)(e.to_string()))?;
    write(dir, FIGURES_META, &to_json(&fig), stage)?;
    Ok(fig)
}

/// Runs one command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let dir = cli.out.as_path();
    if cli.command != Command::Construct && (cli.epsilon.is_some() || cli.start_k.is_some() || cli.config.is_some()) {
        return Err(CliError::Usage(format!(
            "--config, --epsilon and --start-k apply to construct only, not {}",
            cli.command.name()
        )));
    }
    match cli.command {
        Command::Construct => {
            let cfg = resolve_config(cli)?;
            let m = cmd_construct(&cfg, dir)?;
            let ks: Vec<String> = m.coefficients.iter().map(|c| c.k.to_string()).collect();
            println!("waveset ({}), epsilon {}", ks.join(", "), format_real(m.epsilon()));
            for (name, v) in &m.conditions.margins {
                println!("  margin {name}: {}", format_real(v.0));
            }
        }
        Command::Trace => {
            let t = cmd_trace(dir)?;
            println!("s = {}, {} samples of mu", format_real(t.s.0), t.mu_samples);
        }
        Command::Build => {
            let b = cmd_build(dir)?;
            println!("h(s) = {}, orientation {}", format_real(b.h_endpoint.0), b.orientation);
        }
        Command::Verify => {
            let r = cmd_verify(dir, cli.grid)?;
            for c in &r.checks {
                println!(
                    "{} {} {} (tolerance {})",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    format_real(c.worst_residual.0),
                    format_real(c.tolerance.0)
                );
            }
            if !r.pass {
                let names: Vec<&str> = r.failures().map(|c| c.name.as_str()).collect();
                return Err(CliError::Verification(names.join(", ")));
            }
        }
        Command::Render => {
            let f = cmd_render(dir, cli.grid)?;
            println!(
                "{} written; v sign regions {}, u nodal domains {}, interior curves {} at {}x{}",
                f.figures.join(", "),
                f.v_sign_regions,
                f.u_nodal_domains,
                f.u_interior_curves,
                f.resolution,
                f.resolution
            );
        }
    }
    Ok(())
}
