//! Run configuration: a TOML file whose sections mirror the subcommands.
//! Command line flags override the file, the file overrides defaults.
//!
//! ```toml
//! seed = 7
//! threads = 2
//! out = "run.json"
//! metric_file = "football.toml"   # or inline [surface] and [metric] tables
//! bundle_file = "three_point.toml" # or an inline [bundle] table
//!
//! [solve]
//! op = "fredholm"
//! rhs = "f.csv"
//!
//! [flow]
//! tol = 1e-3
//!
//! [ruled]
//! cmd = "expansion"
//! k_ladder = [8, 16, 32]
//! samples = [ { z = [0.08, 0.05], v = [[1.0, 0.0], [0.3, 0.1]] } ]
//!
//! [invariants]
//! cmd = "futaki"
//! field = "z_dz"
//! ```

use conekahler::elliptic::FredholmOptions;
use conekahler::error::{Error, Result};
use conekahler::he_flow::FlowOptions;
use conekahler::io::{read_text, BundleSpec, MetricSpec, SurfaceSpec};
use conekahler::ruled::{ApproxOptions, BasePotential};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SolveOp {
    Laplace,
    Bilap,
    Lich,
    Fredholm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RuledCmd {
    Expansion,
    Correct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InvariantCmd {
    Avg,
    Futaki,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryParams {
    pub alpha: f64,
    pub order: u8,
    /// Grid function whose norm is reported; the scalar curvature if absent.
    pub function: Option<PathBuf>,
    pub collar: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams { alpha: 0.5, order: 0, function: None, collar: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveParams {
    pub op: Option<SolveOp>,
    /// Right-hand side; zero if absent.
    pub rhs: Option<PathBuf>,
    /// `K` of the bi-Laplacian and of the continuity path. Defaults to
    /// `C_P + 1.1` and to the closedness bound respectively.
    pub k: Option<f64>,
    /// Path parameter of `lich`.
    pub t: f64,
    pub fredholm: FredholmOptions,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams { op: None, rhs: None, k: None, t: 1.0, fredholm: FredholmOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub z: [f64; 2],
    pub v: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuledParams {
    pub cmd: Option<RuledCmd>,
    pub k_ladder: Vec<f64>,
    /// Base potential; derived from the metric when absent.
    pub base: Option<BasePotential>,
    pub samples: Vec<SampleSpec>,
    pub approx: ApproxOptions,
}

impl Default for RuledParams {
    fn default() -> Self {
        let s = |z: [f64; 2], v: [[f64; 2]; 2]| SampleSpec { z, v };
        RuledParams {
            cmd: None,
            k_ladder: vec![8.0, 16.0, 32.0],
            base: None,
            samples: vec![
                s([0.08, 0.05], [[1.0, 0.0], [0.3, 0.1]]),
                s([1.1, 0.1], [[0.2, 0.0], [1.0, 0.4]]),
                s([0.0, -10.0], [[0.5, 0.5], [1.0, 0.0]]),
            ],
            approx: ApproxOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvariantParams {
    pub cmd: Option<InvariantCmd>,
    /// `z_dz`, `c*z_dz` or `0`.
    pub field: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub metric_file: Option<PathBuf>,
    pub bundle_file: Option<PathBuf>,
    pub surface: Option<SurfaceSpec>,
    pub metric: Option<MetricSpec>,
    pub bundle: Option<BundleSpec>,
    pub geometry: GeometryParams,
    pub solve: SolveParams,
    pub flow: FlowOptions,
    pub ruled: RuledParams,
    pub invariants: InvariantParams,
}

impl RunConfig {
    /// Loads a configuration; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let mut c: RunConfig =
            toml::from_str(&read_text(path)?).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [&mut c.out, &mut c.metric_file, &mut c.bundle_file, &mut c.solve.rhs, &mut c.geometry.function] {
            if let Some(v) = p.as_mut() {
                if v.is_relative() {
                    *v = dir.join(&*v);
                }
            }
        }
        if let Some(m) = c.metric.as_mut() {
            if let Some(pot) = m.potential.as_mut() {
                if pot.is_relative() {
                    *pot = dir.join(&*pot);
                }
            }
        }
        Ok(c)
    }
}

/// Parses `z_dz`, `2.5*z_dz`, or `0` into the scale of `z∂z`.
pub fn parse_field(s: &str) -> Result<f64> {
    let s = s.trim();
    if s == "z_dz" {
        return Ok(1.0);
    }
    if s == "0" {
        return Ok(0.0);
    }
    s.strip_suffix("*z_dz")
        .and_then(|c| c.trim().parse::<f64>().ok())
        .filter(|c| c.is_finite())
        .ok_or_else(|| Error::InvalidConfig(format!("unknown vector field {s:?}; expected z_dz, c*z_dz or 0")))
}

pub fn parse_ladder(s: &str) -> Result<Vec<f64>> {
    let ks = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::InvalidConfig(format!("k ladder {s:?}: {e}")))?;
    if ks.len() < 2 || ks.iter().any(|k| !(*k >= 1.0)) {
        return Err(Error::InvalidConfig("a k ladder needs at least two values ≥ 1".into()));
    }
    Ok(ks)
}
