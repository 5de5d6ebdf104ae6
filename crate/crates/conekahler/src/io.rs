//! Text formats: TOML descriptions of surfaces, metrics and parabolic bundles,
//! and CSV grid functions with an eight line header (seven `#` lines and the
//! column row).
//!
//! Metric file:
//!
//! ```toml
//! [surface]
//! n = 24            # radial Gauss-Legendre nodes (even)
//! m = 32            # angular nodes (even)
//! points = [ { at = "0", beta = 0.3 }, { at = "inf", beta = 0.3 } ]
//!
//! [metric]
//! kind = "football" # flat_cone | football | model_omega_d
//! delta = 0.1       # weight of the cone potential in model_omega_d
//! scale = 1.0
//! potential = "phi.csv"   # optional, relative to this file
//! ```
//!
//! A point is `"0"`, `"inf"` or a pair `[re, im]`.
//!
//! Bundle file:
//!
//! ```toml
//! [bundle]
//! degrees = [0, 0]
//! [[bundle.points]]
//! at = "1"                 # exact rational or "inf"
//! line = ["1", "1"]        # rank two shortcut for the full flag through a line
//! weights = ["0", "1/2"]
//! [[bundle.points]]
//! at = "inf"
//! basis = [["0", "1"], ["1", "0"]]   # adapted basis, level p spanned by the first dims[p]
//! dims = [2, 1]
//! weights = [0, 0.5]
//! ```

use crate::cone_geometry::{build_metric, ConePoint, ConeSurface, Location, MetricField, MetricKind, C64};
use crate::error::{Error, Result};
use crate::he_flow::{FlowGrid, HermitianField};
use crate::parabolic_bundles::{parse_q, ParabolicBundle, ParabolicPoint, Position, Q};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

fn config_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("{}: {e}", path.display()))
}

/// Reads a text file, mapping every failure to an invalid configuration.
pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| config_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Named(String),
    Coords([f64; 2]),
}

impl PointSpec {
    pub fn location(&self) -> Result<Location> {
        match self {
            PointSpec::Coords([re, im]) => Ok(Location::finite(*re, *im)),
            PointSpec::Named(s) => match s.trim() {
                "inf" | "infinity" | "∞" => Ok(Location::Infinity),
                other => other
                    .parse::<f64>()
                    .map(|x| Location::finite(x, 0.0))
                    .map_err(|_| Error::InvalidConfig(format!("cannot read point {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConePointSpec {
    pub at: PointSpec,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub points: Vec<ConePointSpec>,
}

impl SurfaceSpec {
    pub fn build(&self) -> Result<ConeSurface> {
        let points = self
            .points
            .iter()
            .map(|p| Ok(ConePoint { at: p.at.location()?, beta: p.beta }))
            .collect::<Result<Vec<_>>>()?;
        ConeSurface::new(points, self.n, self.m)
    }
}

fn default_delta() -> f64 {
    0.1
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub kind: MetricKind,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default)]
    pub potential: Option<PathBuf>,
}

/// Contents of a metric file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricFile {
    pub surface: SurfaceSpec,
    pub metric: MetricSpec,
}

impl MetricFile {
    pub fn parse(text: &str) -> Result<MetricFile> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<MetricFile> {
        toml::from_str(&read_text(path)?).map_err(|e| config_err(path, e))
    }

    /// Builds the metric; a potential file is resolved against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<MetricField> {
        let surface = self.surface.build()?;
        let phi = match &self.metric.potential {
            None => None,
            Some(p) => {
                let path = base_dir.join(p);
                let file = std::fs::File::open(&path).map_err(|e| config_err(&path, e))?;
                Some(read_grid_function(file, &surface).map_err(|e| config_err(&path, e))?)
            }
        };
        let field = build_metric(&surface, self.metric.kind, phi, self.metric.delta)?;
        if self.metric.scale == 1.0 {
            Ok(field)
        } else {
            field.scaled(self.metric.scale)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RationalSpec {
    Int(i64),
    Float(f64),
    Text(String),
}

impl RationalSpec {
    pub fn value(&self) -> Result<Q> {
        let text = match self {
            RationalSpec::Int(i) => return Ok(Q::from_integer(*i as i128)),
            RationalSpec::Float(x) => format!("{x}"),
            RationalSpec::Text(s) => s.clone(),
        };
        parse_q(&text).ok_or_else(|| Error::InvalidConfig(format!("{text:?} is not an exact rational")))
    }
}

fn rationals(v: &[RationalSpec]) -> Result<Vec<Q>> {
    v.iter().map(RationalSpec::value).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlagSpec {
    pub at: RationalSpec,
    #[serde(default)]
    pub line: Option<Vec<RationalSpec>>,
    #[serde(default)]
    pub basis: Option<Vec<Vec<RationalSpec>>>,
    #[serde(default)]
    pub dims: Option<Vec<usize>>,
    pub weights: Vec<RationalSpec>,
}

impl FlagSpec {
    pub fn build(&self) -> Result<ParabolicPoint> {
        let at = match &self.at {
            RationalSpec::Text(s) if matches!(s.trim(), "inf" | "infinity" | "∞") => Position::Infinity,
            other => Position::Finite(other.value()?),
        };
        let weights = rationals(&self.weights)?;
        match (&self.line, &self.basis, &self.dims) {
            (Some(line), None, None) => {
                let w: [Q; 2] = weights
                    .try_into()
                    .map_err(|_| Error::InvalidConfig("a line flag takes exactly two weights".into()))?;
                ParabolicPoint::line_flag(at, rationals(line)?, w)
            }
            (None, Some(basis), Some(dims)) => {
                let basis = basis.iter().map(|v| rationals(v)).collect::<Result<Vec<_>>>()?;
                ParabolicPoint::new(at, basis, dims.clone(), weights)
            }
            _ => Err(Error::InvalidConfig("a flag needs either `line` or both `basis` and `dims`".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleSpec {
    pub degrees: Vec<i64>,
    #[serde(default)]
    pub points: Vec<FlagSpec>,
}

impl BundleSpec {
    pub fn build(&self) -> Result<ParabolicBundle> {
        let points = self.points.iter().map(FlagSpec::build).collect::<Result<Vec<_>>>()?;
        ParabolicBundle::new(self.degrees.clone(), points)
    }
}

/// Contents of a bundle file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleFile {
    pub bundle: BundleSpec,
}

impl BundleFile {
    pub fn parse(text: &str) -> Result<BundleFile> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<BundleFile> {
        toml::from_str(&read_text(path)?).map_err(|e| config_err(path, e))
    }
}

fn point_label(p: &ConePoint) -> String {
    match p.at {
        Location::Infinity => format!("inf:{}", p.beta),
        Location::Finite { re, im } => format!("{re}{im:+}i:{}", p.beta),
    }
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("grid function i/o: {e}"))
}

fn write_table<W: Write>(w: W, header: [String; 7], columns: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = std::io::BufWriter::new(w);
    for line in header {
        writeln!(w, "# {line}").map_err(io_err)?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(columns).map_err(io_err)?;
    for row in rows {
        out.write_record(&row).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn surface_points(points: &[ConePoint]) -> String {
    if points.is_empty() {
        "none".into()
    } else {
        points.iter().map(point_label).collect::<Vec<_>>().join(" ")
    }
}

/// Writes a function sampled on the spectral nodes of `surface`.
pub fn write_grid_function<W: Write>(w: W, name: &str, surface: &ConeSurface, values: &[f64]) -> Result<()> {
    if values.len() != surface.grid.len() {
        return Err(Error::InvalidArgument(format!("{} samples for a grid of {}", values.len(), surface.grid.len())));
    }
    let header = [
        "conekahler grid function".to_string(),
        format!("name: {name}"),
        format!("grid: spectral n={} m={}", surface.n, surface.m),
        format!("nodes: {} (index = i*m + j, i radial Gauss-Legendre node, j angular node)", values.len()),
        format!("cone points: {}", surface_points(&surface.points)),
        "z: affine coordinate of the node".to_string(),
        "value: real sample".to_string(),
    ];
    let columns = ["index", "re_z", "im_z", "value"].map(String::from);
    let rows = values.iter().enumerate().map(|(k, v)| {
        let z = surface.node_z(k);
        vec![k.to_string(), format!("{:e}", z.re), format!("{:e}", z.im), format!("{v:e}")]
    });
    write_table(w, header, &columns, rows)
}

/// Reads a grid function written by [`write_grid_function`] for `surface`,
/// checking the node count and coordinates.
pub fn read_grid_function<R: Read>(r: R, surface: &ConeSurface) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let headers = reader.headers().map_err(io_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name).ok_or_else(|| io_err(format!("missing column {name}")));
    let (ci, cr, cm, cv) = (col("index")?, col("re_z")?, col("im_z")?, col("value")?);
    let n = surface.grid.len();
    let mut values = vec![f64::NAN; n];
    let mut seen = 0;
    for rec in reader.records() {
        let rec = rec.map_err(io_err)?;
        let num = |c: usize| -> Result<f64> { rec.get(c).unwrap_or("").trim().parse::<f64>().map_err(io_err) };
        let k: usize = rec.get(ci).unwrap_or("").trim().parse().map_err(io_err)?;
        if k >= n || !values[k].is_nan() {
            return Err(io_err(format!("node index {k} out of range or repeated")));
        }
        let z = surface.node_z(k);
        let zf = C64::new(num(cr)?, num(cm)?);
        if (zf - z).norm() > 1e-9 * (1.0 + z.norm()) {
            return Err(Error::IncompatibleData(format!("node {k} is at {z}, file says {zf}")));
        }
        values[k] = num(cv)?;
        seen += 1;
    }
    if seen != n || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::IncompatibleData(format!("file has {seen} finite samples, grid has {n} nodes")));
    }
    Ok(values)
}

/// Writes a hermitian metric on the cells of a flow grid, entries row-major.
pub fn write_hermitian_field<W: Write>(w: W, name: &str, grid: &FlowGrid, field: &HermitianField) -> Result<()> {
    if field.values.len() != grid.len() {
        return Err(Error::InvalidArgument("field does not match the grid".into()));
    }
    let r = field.rank;
    let weights = if field.frame_weights.is_empty() {
        "none".to_string()
    } else {
        field.frame_weights.iter().map(|(p, w)| format!("{p}:{w:?}")).collect::<Vec<_>>().join(" ")
    };
    let header = [
        "conekahler hermitian field".to_string(),
        format!("name: {name}"),
        format!("grid: cells nt={} ntheta={}", grid.nt, grid.nth),
        format!("cells: {} (index = i*ntheta + j, i radial cell, j angular cell)", grid.len()),
        format!("rank: {r}, frame weights {weights}"),
        "z: affine coordinate of the cell center".to_string(),
        "h_ab: entries of h in the standard frame of the split bundle".to_string(),
    ];
    let mut columns = vec!["index".to_string(), "re_z".into(), "im_z".into()];
    for a in 0..r {
        for b in 0..r {
            columns.push(format!("re_h{a}{b}"));
            columns.push(format!("im_h{a}{b}"));
        }
    }
    let rows = field.values.iter().enumerate().map(|(c, h)| {
        let z = grid.z[c];
        let mut row = vec![c.to_string(), format!("{:e}", z.re), format!("{:e}", z.im)];
        for a in 0..r {
            for b in 0..r {
                row.push(format!("{:e}", h[(a, b)].re));
                row.push(format!("{:e}", h[(a, b)].im));
            }
        }
        row
    });
    write_table(w, header, &columns, rows)
}
