//! File formats shared by the pipeline stages: run configuration, the
//! construction manifest and the per-stage metadata.
//!
//! Reals are written as decimal strings with 17 significant digits, which
//! round-trip every `f64` exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coeffs::{Perturbation, WaveSet, WAVE_COUNT};
use crate::dd::DoubleDouble;
use crate::epsilon::{ConditionRegions, ConditionReport};

/// An `f64` serialized as a 17-significant-digit decimal string.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct Dec(pub f64);

pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

impl Serialize for Dec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_real(self.0))
    }
}

struct DecVisitor;

impl Visitor<'_> for DecVisitor {
    type Value = Dec;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a decimal string or a number")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Dec, E> {
        v.trim().parse::<f64>().map(Dec).map_err(E::custom)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Dec, E> {
        Ok(Dec(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Dec, E> {
        Ok(Dec(v as f64))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Dec, E> {
        Ok(Dec(v as f64))
    }
}

impl<'de> Deserialize<'de> for Dec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(DecVisitor)
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// `auto` runs the halving search; otherwise the given `ε` is checked as is.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsilonPolicy {
    Auto,
    Fixed(f64),
}

impl Serialize for EpsilonPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Auto => s.serialize_str("auto"),
            Self::Fixed(v) => Dec(*v).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for EpsilonPolicy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(t) if t.eq_ignore_ascii_case("auto") => Ok(Self::Auto),
            Raw::Text(t) => t.trim().parse().map(Self::Fixed).map_err(de::Error::custom),
            Raw::Number(v) => Ok(Self::Fixed(v)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub helmholtz: Dec,
    pub constraints: Dec,
    pub identities: Dec,
    pub mu_saddle: Dec,
    pub sample_residual: Dec,
    pub angle_degrees: Dec,
    pub endpoint_product: Dec,
    pub refinement: Dec,
    pub nonnegativity: Dec,
    pub dirichlet: Dec,
    pub neumann: Dec,
    pub interior_positive: Dec,
    pub pde: Dec,
    pub dispersion: Dec,
    pub evenness: Dec,
    pub saddle_extrapolation: Dec,
    pub quadrature: Dec,
    pub symmetry: Dec,
    pub oracle_u: Dec,
    pub oracle_h: Dec,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            helmholtz: Dec(1e-11),
            constraints: Dec(1e-9),
            identities: Dec(1e-12),
            mu_saddle: Dec(1e-9),
            sample_residual: Dec(1e-10),
            angle_degrees: Dec(1.0),
            endpoint_product: Dec(0.05),
            refinement: Dec(1e-9),
            nonnegativity: Dec(1e-11),
            dirichlet: Dec(1e-10),
            neumann: Dec(1e-8),
            interior_positive: Dec(1e-6),
            pde: Dec(1e-6),
            dispersion: Dec(1e-6),
            evenness: Dec(1e-12),
            saddle_extrapolation: Dec(1e-6),
            quadrature: Dec(1e-10),
            symmetry: Dec(1e-10),
            oracle_u: Dec(1e-10),
            oracle_h: Dec(1e-8),
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 20] {
        [
            ("helmholtz", self.helmholtz.0),
            ("constraints", self.constraints.0),
            ("identities", self.identities.0),
            ("mu_saddle", self.mu_saddle.0),
            ("sample_residual", self.sample_residual.0),
            ("angle_degrees", self.angle_degrees.0),
            ("endpoint_product", self.endpoint_product.0),
            ("refinement", self.refinement.0),
            ("nonnegativity", self.nonnegativity.0),
            ("dirichlet", self.dirichlet.0),
            ("neumann", self.neumann.0),
            ("interior_positive", self.interior_positive.0),
            ("pde", self.pde.0),
            ("dispersion", self.dispersion.0),
            ("evenness", self.evenness.0),
            ("saddle_extrapolation", self.saddle_extrapolation.0),
            ("quadrature", self.quadrature.0),
            ("symmetry", self.symmetry.0),
            ("oracle_u", self.oracle_u.0),
            ("oracle_h", self.oracle_h.0),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub start_k: u32,
    pub epsilon: EpsilonPolicy,
    /// Base size of the `μ` sample grid.
    pub trace_samples: usize,
    /// Flood-fill and figure grid.
    pub grid: usize,
    /// Nonnegativity grid.
    pub verify_grid: usize,
    /// Grid of the exported `u` table.
    pub export_grid: usize,
    pub helmholtz_samples: usize,
    pub pde_samples: usize,
    pub boundary_samples: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            start_k: 6,
            epsilon: EpsilonPolicy::Auto,
            trace_samples: 600,
            grid: 1001,
            verify_grid: 2001,
            export_grid: 201,
            helmholtz_samples: 1_000_000,
            pde_samples: 100_000,
            boundary_samples: 10_000,
            seed: 7,
            tolerances: Tolerances::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.start_k < 2 || self.start_k % 2 != 0 {
            return Err(ManifestError::Config(format!(
                "start_k = {} must be even and at least 2",
                self.start_k
            )));
        }
        if let EpsilonPolicy::Fixed(e) = self.epsilon {
            if !(e.is_finite() && e >= 0.0) {
                return Err(ManifestError::Config(format!(
                    "epsilon = {e} must be finite and nonnegative"
                )));
            }
        }
        for (name, n) in [
            ("trace_samples", self.trace_samples),
            ("grid", self.grid),
            ("verify_grid", self.verify_grid),
            ("export_grid", self.export_grid),
            ("helmholtz_samples", self.helmholtz_samples),
            ("pde_samples", self.pde_samples),
            ("boundary_samples", self.boundary_samples),
        ] {
            if n < 64 {
                return Err(ManifestError::Config(format!("{name} = {n} is below 64")));
            }
        }
        for (name, t) in self.tolerances.entries() {
            if !(t > 0.0 && t.is_finite()) {
                return Err(ManifestError::Config(format!(
                    "tolerance {name} = {t} must be positive"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEntry {
    pub k: u32,
    /// `d = k c_k` as an unevaluated sum `hi + lo`.
    pub d_hi: Dec,
    pub d_lo: Dec,
    pub c: Dec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionsEntry {
    pub alpha: Dec,
    pub beta: Dec,
    pub gamma: Dec,
    pub delta: Dec,
    pub r: Dec,
    pub r0: Dec,
}

impl From<&ConditionRegions> for RegionsEntry {
    fn from(r: &ConditionRegions) -> Self {
        Self {
            alpha: Dec(r.alpha),
            beta: Dec(r.beta),
            gamma: Dec(r.gamma),
            delta: Dec(r.delta),
            r: Dec(r.r),
            r0: Dec(r.r0),
        }
    }
}

impl RegionsEntry {
    pub fn regions(&self) -> ConditionRegions {
        ConditionRegions {
            alpha: self.alpha.0,
            beta: self.beta.0,
            gamma: self.gamma.0,
            delta: self.delta.0,
            r: self.r.0,
            r0: self.r0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionsEntry {
    pub pass: bool,
    pub margins: BTreeMap<String, Dec>,
    pub regions: RegionsEntry,
    pub failures: Vec<String>,
}

impl From<&ConditionReport> for ConditionsEntry {
    fn from(r: &ConditionReport) -> Self {
        Self {
            pass: r.pass,
            margins: r.margins.iter().map(|(k, &v)| (k.clone(), Dec(v))).collect(),
            regions: (&r.regions).into(),
            failures: r.failures.clone(),
        }
    }
}

/// Output of `construct`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub coefficients: Vec<CoefficientEntry>,
    pub constraint_residuals: Vec<Dec>,
    pub saddle_jet: Vec<Dec>,
    pub epsilon: Dec,
    pub conditions: ConditionsEntry,
}

impl Manifest {
    pub fn new(config: RunConfig, p: &Perturbation, report: &ConditionReport) -> Self {
        let c = p.c();
        let coefficients = (0..WAVE_COUNT)
            .map(|j| CoefficientEntry {
                k: p.waveset.k[j],
                d_hi: Dec(p.d[j].hi),
                d_lo: Dec(p.d[j].lo),
                c: Dec(c[j]),
            })
            .collect();
        Self {
            config,
            coefficients,
            constraint_residuals: p.residuals.iter().map(|&r| Dec(r)).collect(),
            saddle_jet: p.z0_jet.iter().map(|&r| Dec(r)).collect(),
            epsilon: Dec(report.epsilon),
            conditions: report.into(),
        }
    }

    /// Rebuild the perturbation from the stored coefficients.
    pub fn perturbation(&self) -> Result<Perturbation, ManifestError> {
        if self.coefficients.len() != WAVE_COUNT {
            return Err(ManifestError::Config(format!(
                "manifest lists {} coefficients, expected {WAVE_COUNT}",
                self.coefficients.len()
            )));
        }
        let mut k = [0u32; WAVE_COUNT];
        let mut d = [DoubleDouble::ZERO; WAVE_COUNT];
        for (j, e) in self.coefficients.iter().enumerate() {
            k[j] = e.k;
            d[j] = DoubleDouble::new(e.d_hi.0, e.d_lo.0);
        }
        let ws = WaveSet::new(k).map_err(|e| ManifestError::Config(e.to_string()))?;
        Ok(Perturbation::from_coefficients(ws, d))
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.0
    }
}

/// Output of `trace`, next to the curve CSVs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub manifest_sha256: String,
    pub epsilon: Dec,
    pub s: Dec,
    pub mu_samples: usize,
    pub interior_samples: usize,
    pub max_residual: Dec,
}

/// Output of `build`, next to the boundary, `u` and `h` tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildMeta {
    pub manifest_sha256: String,
    pub waveset: Vec<u32>,
    pub d: Vec<Dec>,
    pub epsilon: Dec,
    pub s: Dec,
    pub orientation: i8,
    pub h_endpoint: Dec,
    pub h_saddle_extrapolations: [Dec; 2],
    pub h_endpoint_extrapolation: Dec,
    pub tolerances: Tolerances,
    /// Extension of `h` beyond `[−s, s]` is left to the consumer.
    pub h_extension: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn read_text(path: &Path) -> Result<String, ManifestError> {
    fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ManifestError> {
    fs::write(path, text).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ManifestError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| ManifestError::Json {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dec_round_trips_every_double() {
        for v in [0.1, 1.0 / 3.0, 2f64.powi(-42), -6.4253e-4, f64::MAX, 5e-324, 0.0] {
            let s = serde_json::to_string(&Dec(v)).unwrap();
            let back: Dec = serde_json::from_str(&s).unwrap();
            assert_eq!(back.0.to_bits(), v.to_bits(), "{s}");
        }
        let n: Dec = serde_json::from_str("0.25").unwrap();
        assert_eq!(n.0, 0.25);
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(format_real(0.1), "1.0000000000000001e-1");
        assert_eq!(format_real(-2.0), "-2.0000000000000000e0");
    }

    #[test]
    fn epsilon_policy_forms() {
        let a: EpsilonPolicy = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(a, EpsilonPolicy::Auto);
        let b: EpsilonPolicy = serde_json::from_str("\"1e-3\"").unwrap();
        assert_eq!(b, EpsilonPolicy::Fixed(1e-3));
        let c: EpsilonPolicy = serde_json::from_str("0.5").unwrap();
        assert_eq!(c, EpsilonPolicy::Fixed(0.5));
        assert_eq!(serde_json::to_string(&EpsilonPolicy::Auto).unwrap(), "\"auto\"");
    }

    #[test]
    fn config_defaults_and_validation() {
        let c: RunConfig = serde_json::from_str("{\"start_k\": 8}").unwrap();
        assert_eq!(c.start_k, 8);
        assert_eq!(c.grid, 1001);
        c.validate().unwrap();
        let mut bad = c.clone();
        bad.grid = 10;
        assert!(bad.validate().is_err());
        let mut bad = c.clone();
        bad.tolerances.pde = Dec(0.0);
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.start_k = 7;
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<RunConfig>("{\"unknown\": 1}").is_err());
    }

    #[test]
    fn hash_is_hex_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
