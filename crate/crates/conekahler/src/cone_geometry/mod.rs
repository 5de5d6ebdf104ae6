//! Cone charts, the W-coordinate, flat and model cone metrics, and metric
//! fields on the marked sphere.
//!
//! Conventions. A metric is `ω = i g dz∧dz̄` with Laplacian `Δu = g⁻¹∂∂̄u`
//! (non-positive) and scalar curvature `S = -Δ log g`; the round metric
//! `g = (1+|z|²)⁻²` has area 2π and `S = 2`.
//!
//! Away from the poles we use `ζ = log z = s + iθ` and the conformal factor
//! `c = g|z|²`. The radial variable `t ∈ (-1, 1)` is tied to `s` through
//! `ds/dt = 1/p(t)` with `p(t) = (1-t²)(β₀(1-t) + β∞(1+t))/2`, so that
//! `c = p e^ψ / 4` with a bounded function `ψ` for any metric with the right
//! cone angles at 0 and ∞. In these variables
//! `ω = (e^ψ/2) dt dθ` and `Δu = e^{-ψ}[(p u_t)_t + u_θθ/p]`.

pub mod holder;
pub mod stencil;

pub use holder::{holder_norm, holder_norm_seeded, overlap_holder, NormReport};
pub use stencil::C64;

use crate::error::{Error, Result};
use crate::spectral::Grid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Location {
    Finite { re: f64, im: f64 },
    Infinity,
}

impl Location {
    pub fn zero() -> Location {
        Location::Finite { re: 0.0, im: 0.0 }
    }
    pub fn finite(re: f64, im: f64) -> Location {
        Location::Finite { re, im }
    }
    pub fn is_zero(&self) -> bool {
        matches!(self, Location::Finite { re, im } if *re == 0.0 && *im == 0.0)
    }
    pub fn is_infinity(&self) -> bool {
        matches!(self, Location::Infinity)
    }
    pub fn as_complex(&self) -> Option<C64> {
        match self {
            Location::Finite { re, im } => Some(C64::new(*re, *im)),
            Location::Infinity => None,
        }
    }
    /// Chordal distance on the unit-diameter Riemann sphere.
    pub fn chordal_to(&self, z: C64) -> f64 {
        match self {
            Location::Infinity => 1.0 / (1.0 + z.norm_sqr()).sqrt(),
            Location::Finite { re, im } => {
                let a = C64::new(*re, *im);
                (z - a).norm() / ((1.0 + z.norm_sqr()) * (1.0 + a.norm_sqr())).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConePoint {
    pub at: Location,
    pub beta: f64,
}

/// Radial profile `p(t)` determined by the angles at the two poles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Profile {
    pub b0: f64,
    pub binf: f64,
}

impl Profile {
    fn l(&self, t: f64) -> f64 {
        (self.b0 + self.binf) + (self.binf - self.b0) * t
    }
    pub fn p(&self, t: f64) -> f64 {
        0.5 * (1.0 - t * t) * self.l(t)
    }
    pub fn dp(&self, t: f64) -> f64 {
        let lp = self.binf - self.b0;
        0.5 * (lp - 2.0 * t * self.l(t) - t * t * lp)
    }
    pub fn d2p(&self, t: f64) -> f64 {
        -self.l(t) - 2.0 * t * (self.binf - self.b0)
    }

    /// `s = log|z|` as a function of `y = atanh t`, normalised by `s(0) = 0`.
    fn s_of_y(&self, y: f64) -> f64 {
        let lc = ln_cosh(y);
        let ln1p = y - lc; // ln(1+t)
        let ln1m = -y - lc; // ln(1-t)
        let t = y.tanh();
        let c = (self.binf - self.b0) / (2.0 * self.b0 * self.binf);
        ln1p / (2.0 * self.b0) - ln1m / (2.0 * self.binf) - c * (self.l(t) / (self.b0 + self.binf)).ln()
    }

    pub fn s_of_t(&self, t: f64) -> f64 {
        self.s_of_y(t.atanh())
    }

    /// Inverse of `s(t)`; Newton in `y = atanh t` where `ds/dy = 2/L`.
    pub fn y_of_s(&self, s: f64) -> f64 {
        let mut y = s * (self.b0 + self.binf) / 2.0;
        for _ in 0..200 {
            let t = y.tanh();
            let f = self.s_of_y(y) - s;
            let step = f * self.l(t) / 2.0;
            y -= step;
            if step.abs() < 1e-15 * (1.0 + y.abs()) {
                break;
            }
        }
        y
    }

    pub fn t_of_s(&self, s: f64) -> f64 {
        self.y_of_s(s).tanh()
    }

    /// `1 + t` evaluated without cancellation near the pole at 0.
    pub fn one_plus_t_of_s(&self, s: f64) -> f64 {
        let y = self.y_of_s(s);
        (y - ln_cosh(y)).exp()
    }
}

fn ln_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// A marked Riemann sphere with cone points and its spectral grid.
#[derive(Debug, Clone)]
pub struct ConeSurface {
    pub points: Vec<ConePoint>,
    pub n: usize,
    pub m: usize,
    /// Inner and outer radius of the annulus where the charts at 0 and ∞ overlap.
    pub overlap: (f64, f64),
    pub dimension: usize,
    pub grid: Grid,
    pub profile: Profile,
    /// Node coordinates `s_i = log|z|` per radial node.
    pub s_nodes: Vec<f64>,
}

impl ConeSurface {
    pub fn new(points: Vec<ConePoint>, n: usize, m: usize) -> Result<ConeSurface> {
        if points.len() > 4 {
            return Err(Error::InvalidArgument("at most 4 marked points are supported".into()));
        }
        for (k, p) in points.iter().enumerate() {
            if !(p.beta > 0.0 && p.beta < 1.0) {
                return Err(Error::InvalidArgument(format!("cone angle {} not in (0,1)", p.beta)));
            }
            if let Location::Finite { re, im } = p.at {
                if !re.is_finite() || !im.is_finite() {
                    return Err(Error::InvalidArgument("non-finite cone point".into()));
                }
            }
            for q in &points[..k] {
                if q.at == p.at {
                    return Err(Error::InvalidArgument("repeated cone point".into()));
                }
            }
        }
        if n < 4 || !n.is_multiple_of(2) || m < 4 || !m.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("grid {n}x{m}: both sizes must be even and at least 4")));
        }
        let b0 = points.iter().find(|p| p.at.is_zero()).map_or(1.0, |p| p.beta);
        let binf = points.iter().find(|p| p.at.is_infinity()).map_or(1.0, |p| p.beta);
        let profile = Profile { b0, binf };
        let grid = Grid::new(n, m);
        let s_nodes = grid.t.iter().map(|&t| profile.s_of_t(t)).collect();
        let surf = ConeSurface { points, n, m, overlap: (0.5, 2.0), dimension: 1, grid, profile, s_nodes };
        for p in &surf.points {
            if let Some(a) = p.at.as_complex() {
                if a.norm() == 0.0 {
                    continue;
                }
                for k in 0..surf.grid.len() {
                    if (surf.node_z(k) - a).norm() < 1e-12 {
                        return Err(Error::InvalidArgument("grid node coincides with a cone point".into()));
                    }
                }
            }
        }
        Ok(surf)
    }

    /// Same marked points at another resolution.
    pub fn with_resolution(&self, n: usize, m: usize) -> Result<ConeSurface> {
        ConeSurface::new(self.points.clone(), n, m)
    }

    /// Solvers additionally need every angle below 1/2.
    pub fn require_solver_angles(&self) -> Result<()> {
        for p in &self.points {
            if p.beta >= 0.5 {
                return Err(Error::InvalidArgument(format!("solver requires β < 1/2, got {}", p.beta)));
            }
        }
        Ok(())
    }

    pub fn node_t(&self, k: usize) -> f64 {
        self.grid.t[k / self.m]
    }
    pub fn node_theta(&self, k: usize) -> f64 {
        self.grid.theta[k % self.m]
    }
    pub fn node_s(&self, k: usize) -> f64 {
        self.s_nodes[k / self.m]
    }
    pub fn node_z(&self, k: usize) -> C64 {
        C64::from_polar(self.node_s(k).exp(), self.node_theta(k))
    }
    pub fn z_of(&self, t: f64, theta: f64) -> C64 {
        C64::from_polar(self.profile.s_of_t(t).exp(), theta)
    }
    pub fn p_nodes(&self) -> Vec<f64> {
        self.grid.t.iter().map(|&t| self.profile.p(t)).collect()
    }

    /// `(t, θ)` of a location; the poles map to `t = ∓1`.
    pub fn t_theta_of(&self, at: &Location) -> (f64, f64) {
        match at {
            Location::Infinity => (1.0, 0.0),
            Location::Finite { re, im } => {
                let z = C64::new(*re, *im);
                if z.norm() == 0.0 {
                    (-1.0, 0.0)
                } else {
                    (self.profile.t_of_s(z.norm().ln()), z.arg())
                }
            }
        }
    }

    /// Cone points that are not at 0 or ∞.
    pub fn interior_points(&self) -> Vec<ConePoint> {
        self.points.iter().filter(|p| !p.at.is_zero() && !p.at.is_infinity()).cloned().collect()
    }

    /// Distance of a point to the cone locus measured in each chart coordinate.
    pub fn chart_distance(&self, z: C64) -> f64 {
        let mut d = f64::INFINITY;
        for p in &self.points {
            let v = match p.at {
                Location::Infinity => 1.0 / z.norm(),
                Location::Finite { re, im } => (z - C64::new(re, im)).norm(),
            };
            d = d.min(v);
        }
        d
    }
}

/// `W(z) = |z|^{β-1} z`.
pub fn w_map(z: C64, beta: f64) -> Result<C64> {
    if !z.re.is_finite() || !z.im.is_finite() || !(beta > 0.0 && beta < 1.0 + 1e-15) {
        return Err(Error::InvalidArgument("w_map needs finite z and β in (0,1)".into()));
    }
    let r = z.norm();
    if r == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    Ok(z * r.powf(beta - 1.0))
}

pub fn w_map_inverse(w: C64, beta: f64) -> Result<C64> {
    if !w.re.is_finite() || !w.im.is_finite() || !(beta > 0.0 && beta < 1.0 + 1e-15) {
        return Err(Error::InvalidArgument("w_map_inverse needs finite w and β in (0,1)".into()));
    }
    let r = w.norm();
    if r == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    Ok(w * r.powf(1.0 / beta - 1.0))
}

/// The angle restriction `0 < β < 1/2` and `αβ < 1 - 2β`.
pub fn check_angle_condition(alpha: f64, beta: f64) -> Result<bool> {
    if !(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!("α={alpha}, β={beta} out of range")));
    }
    Ok(beta < 0.5 && alpha * beta < 1.0 - 2.0 * beta)
}

/// Metric, Christoffel symbols and curvature of the flat cone metric
/// `β²|z¹|^{2β-2}|dz¹|² + Σ_{i≥2}|dz^i|²`, all computed by circle stencils.
#[derive(Debug, Clone)]
pub struct FlatConeTensors {
    pub dim: usize,
    /// Diagonal of the (diagonal) metric matrix.
    pub metric: Vec<f64>,
    /// `christoffel[(c*dim + a)*dim + b] = Γ^c_{ab}`.
    pub christoffel: Vec<C64>,
    /// `curvature[((a*dim + b)*dim + c)*dim + d] = -∂_{b̄} Γ^d_{ac}`.
    pub curvature: Vec<C64>,
}

impl FlatConeTensors {
    pub fn gamma(&self, c: usize, a: usize, b: usize) -> C64 {
        self.christoffel[(c * self.dim + a) * self.dim + b]
    }
    pub fn max_curvature(&self) -> f64 {
        self.curvature.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

pub fn flat_cone_tensors(beta: f64, point: &[C64]) -> Result<FlatConeTensors> {
    let n = point.len();
    if n == 0 || !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument("flat cone needs a point and β in (0,1]".into()));
    }
    let r1 = point[0].norm();
    if r1 < 1e-300 {
        return Err(Error::SingularPoint(format!("{:?}", point[0])));
    }
    // Diagonal metric components as functions of the point.
    let comp = |a: usize, p: &[C64]| -> f64 {
        if a == 0 {
            beta * beta * p[0].norm().powf(2.0 * beta - 2.0)
        } else {
            1.0
        }
    };
    let h_of = |a: usize| if a == 0 { 0.1 * r1 } else { 0.1 };
    let partial = |f: &dyn Fn(&[C64]) -> C64, a: usize, p: &[C64], conj: bool| -> C64 {
        let g = |z: C64| {
            let mut q = p.to_vec();
            q[a] = z;
            f(&q)
        };
        if conj {
            stencil::dbar(&g, p[a], h_of(a))
        } else {
            stencil::d(&g, p[a], h_of(a))
        }
    };
    let metric: Vec<f64> = (0..n).map(|a| comp(a, point)).collect();
    // Γ^c_{ab} = g^{c c̄} ∂_a g_{b c̄} for a diagonal metric: nonzero only if b = c.
    let gamma_at = |c: usize, a: usize, b: usize, p: &[C64]| -> C64 {
        if b != c {
            return C64::new(0.0, 0.0);
        }
        let logg = move |q: &[C64]| C64::new(comp(c, q).ln(), 0.0);
        partial(&logg, a, p, false)
    };
    let mut christoffel = vec![C64::new(0.0, 0.0); n * n * n];
    for c in 0..n {
        for a in 0..n {
            for b in 0..n {
                christoffel[(c * n + a) * n + b] = gamma_at(c, a, b, point);
            }
        }
    }
    let mut curvature = vec![C64::new(0.0, 0.0); n * n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let g = |q: &[C64]| gamma_at(d, a, c, q);
                    curvature[((a * n + b) * n + c) * n + d] = -partial(&g, b, point, true);
                }
            }
        }
    }
    Ok(FlatConeTensors { dim: n, metric, christoffel, curvature })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// `β²|z|^{2β-2}|dz|²`, cone point at 0 only; infinite volume.
    FlatCone,
    /// Constant curvature metric with equal angles at 0 and ∞.
    Football,
    /// Round metric plus `δ Σ ∂∂̄ F_p`, `F_p` the `β`-power of the squared chordal distance.
    ModelOmegaD,
}

/// A cone metric on a marked sphere: a model plus `i∂∂̄φ`.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub surface: ConeSurface,
    pub kind: MetricKind,
    pub delta: f64,
    /// Overall scale of the model metric.
    pub scale: f64,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub scalar: Vec<f64>,
    pub volume: f64,
    pub quasi_isometry: f64,
    pub christoffel_sup: f64,
    /// `1 + Δ_model φ` at the nodes.
    pub phi_factor: Vec<f64>,
}

impl MetricField {
    pub fn grid(&self) -> &Grid {
        &self.surface.grid
    }

    /// Conformal factor `c = g|z|²` of the model at a finite nonzero `z`.
    pub fn model_conformal(&self, z: C64) -> f64 {
        model_conformal(self.kind, &self.surface, self.delta, z) * self.scale
    }

    /// `ψ` of the model at `(t, θ)`.
    pub fn model_psi(&self, t: f64, theta: f64) -> f64 {
        let z = self.surface.z_of(t, theta);
        (4.0 * self.model_conformal(z) / self.surface.profile.p(t)).ln()
    }

    /// `ψ` at an arbitrary point, interpolating the potential correction.
    pub fn psi_at(&self, t: f64, theta: f64) -> f64 {
        let base = self.model_psi(t, theta);
        if self.phi.iter().all(|v| *v == 0.0) {
            return base;
        }
        let lf: Vec<f64> = self.phi_factor.iter().map(|v| v.ln()).collect();
        base + self.grid().interpolate(&lf, t, theta)
    }

    /// Conformal factor `c = p e^ψ / 4` at `(t, θ)`.
    pub fn conformal_at(&self, t: f64, theta: f64) -> f64 {
        self.surface.profile.p(t) * self.psi_at(t, theta).exp() / 4.0
    }

    /// Volume weights `w_i e^{ψ} / 2 · 2π/m` at the nodes.
    pub fn mass(&self) -> Vec<f64> {
        let g = self.grid();
        let wq = g.wtheta();
        (0..g.len()).map(|k| g.wt[k / g.m] * self.psi[k].exp() / 2.0 * wq).collect()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.mass().iter().zip(f).map(|(a, b)| a * b).sum()
    }

    pub fn mean(&self, f: &[f64]) -> f64 {
        self.integrate(f) / self.volume
    }

    pub fn is_radial(&self) -> bool {
        let m = self.surface.m;
        self.psi.chunks(m).all(|row| row.iter().all(|v| (v - row[0]).abs() <= 1e-12 * (1.0 + row[0].abs())))
    }

    /// Same metric description at another grid resolution.
    pub fn at_resolution(&self, n: usize, m: usize) -> Result<MetricField> {
        let surface = self.surface.with_resolution(n, m)?;
        let phi = if self.phi.iter().all(|v| *v == 0.0) {
            vec![0.0; n * m]
        } else {
            let a = self.grid().to_modal(&self.phi);
            (0..n * m)
                .map(|k| self.grid().interpolate_modal(&a, surface.grid.t[k / m], surface.grid.theta[k % m]))
                .collect()
        };
        let mut f = build_metric(&surface, self.kind, Some(phi), self.delta)?;
        if self.scale != 1.0 {
            f = f.scaled(self.scale)?;
        }
        Ok(f)
    }

    /// The metric multiplied by a constant factor.
    pub fn scaled(&self, factor: f64) -> Result<MetricField> {
        if !(factor > 0.0) {
            return Err(Error::InvalidArgument("scale factor must be positive".into()));
        }
        let mut f = self.clone();
        f.scale *= factor;
        let l = factor.ln();
        f.psi.iter_mut().for_each(|v| *v += l);
        f.scalar.iter_mut().for_each(|v| *v /= factor);
        f.volume *= factor;
        Ok(f)
    }

    /// `sup |S|` over nodes whose chart distance to the cone locus exceeds `collar`.
    pub fn ricci_sup(&self, collar: f64) -> Result<f64> {
        let mut sup: f64 = 0.0;
        for k in 0..self.grid().len() {
            if self.surface.chart_distance(self.surface.node_z(k)) <= collar {
                continue;
            }
            let v = self.scalar[k];
            if !v.is_finite() {
                return Err(Error::SingularData(format!("non-finite Ricci at node {k}")));
            }
            sup = sup.max(v.abs());
        }
        Ok(sup)
    }

    /// Collocation Laplacian of a grid function.
    pub fn laplacian_collocation(&self, u: &[f64]) -> Vec<f64> {
        laplacian_collocation(&self.surface, &self.psi, u)
    }
}

fn model_conformal(kind: MetricKind, surface: &ConeSurface, delta: f64, z: C64) -> f64 {
    let r2 = z.norm_sqr();
    match kind {
        MetricKind::FlatCone => {
            let b = surface.profile.b0;
            b * b * r2.powf(b)
        }
        MetricKind::Football => {
            let b = surface.profile.b0;
            let a = r2.powf(b);
            if a > 1.0 {
                let ia = 1.0 / a;
                b * ia / ((1.0 + ia) * (1.0 + ia))
            } else {
                b * a / ((1.0 + a) * (1.0 + a))
            }
        }
        MetricKind::ModelOmegaD => {
            let bb = 1.0 + r2;
            let mut g = 1.0 / (bb * bb);
            for p in &surface.points {
                g += delta * ddbar_chordal_power(p, z);
            }
            g * r2
        }
    }
}

/// `∂∂̄ (|z-a|²/(1+|z|²))^β`, or `(1+|z|²)^{-β}` for the point at ∞.
fn ddbar_chordal_power(p: &ConePoint, z: C64) -> f64 {
    let b = p.beta;
    let bb = 1.0 + z.norm_sqr();
    match p.at {
        Location::Infinity => {
            let f = bb.powf(-b);
            f * (-b / (bb * bb) + b * b * z.norm_sqr() / (bb * bb))
        }
        Location::Finite { re, im } => {
            let a = C64::new(re, im);
            let d = z - a;
            let f = (d.norm_sqr() / bb).powf(b);
            let dlog = d.inv() - z.conj() / bb;
            f * (-b / (bb * bb) + b * b * dlog.norm_sqr())
        }
    }
}

/// `e^{-ψ}[(p u_t)_t + u_θθ/p]` by collocation.
pub fn laplacian_collocation(surface: &ConeSurface, psi: &[f64], u: &[f64]) -> Vec<f64> {
    let g = &surface.grid;
    let ut = g.d_t(u);
    let utt = g.d_t(&ut);
    let uthth = g.d_theta(&g.d_theta(u));
    (0..g.len())
        .map(|k| {
            let t = g.t[k / g.m];
            let p = surface.profile.p(t);
            let dp = surface.profile.dp(t);
            (-psi[k]).exp() * (dp * ut[k] + p * utt[k] + uthth[k] / p)
        })
        .collect()
}

/// Scalar curvature `S = -e^{-ψ}[p'' + (pψ_t)_t + ψ_θθ/p]` by collocation.
pub fn scalar_curvature_spectral(surface: &ConeSurface, psi: &[f64]) -> Vec<f64> {
    let g = &surface.grid;
    let lap_psi = laplacian_collocation(surface, psi, psi);
    (0..g.len())
        .map(|k| {
            let t = g.t[k / g.m];
            -(-psi[k]).exp() * surface.profile.d2p(t) - lap_psi[k]
        })
        .collect()
}

/// Build a cone metric field from a model kind and an optional potential.
pub fn build_metric(surface: &ConeSurface, kind: MetricKind, phi: Option<Vec<f64>>, delta: f64) -> Result<MetricField> {
    let g = &surface.grid;
    let n = g.len();
    match kind {
        MetricKind::Football => {
            let ok = surface.points.len() == 2
                && surface.points.iter().any(|p| p.at.is_zero())
                && surface.points.iter().any(|p| p.at.is_infinity())
                && (surface.profile.b0 - surface.profile.binf).abs() < 1e-15;
            if !ok {
                return Err(Error::InvalidArgument("football needs equal cone angles at 0 and ∞ only".into()));
            }
        }
        MetricKind::FlatCone => {
            if surface.points.len() != 1 || !surface.points[0].at.is_zero() {
                return Err(Error::InvalidArgument("flat cone needs a single cone point at 0".into()));
            }
        }
        MetricKind::ModelOmegaD => {
            if !(delta > 0.0) {
                return Err(Error::InvalidArgument("δ must be positive".into()));
            }
        }
    }
    let phi = phi.unwrap_or_else(|| vec![0.0; n]);
    if phi.len() != n {
        return Err(Error::InvalidArgument(format!("potential has {} samples, grid has {n}", phi.len())));
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite potential".into()));
    }
    let mut psi_model = vec![0.0; n];
    for k in 0..n {
        let t = surface.node_t(k);
        let c = model_conformal(kind, surface, delta, surface.node_z(k));
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::DegenerateMetric { node: k, value: c });
        }
        psi_model[k] = (4.0 * c / surface.profile.p(t)).ln();
    }
    let lap = laplacian_collocation(surface, &psi_model, &phi);
    let phi_factor: Vec<f64> = lap.iter().map(|l| 1.0 + l).collect();
    let mut worst = (0usize, f64::INFINITY);
    for (k, &v) in phi_factor.iter().enumerate() {
        if v < worst.1 {
            worst = (k, v);
        }
    }
    if !(worst.1 > 0.0) {
        return Err(Error::DegenerateMetric { node: worst.0, value: worst.1 });
    }
    let psi: Vec<f64> = psi_model.iter().zip(&phi_factor).map(|(a, f)| a + f.ln()).collect();
    let scalar = scalar_curvature_spectral(surface, &psi);
    let wq = g.wtheta();
    let volume: f64 = (0..n).map(|k| g.wt[k / g.m] * psi[k].exp() / 2.0 * wq).sum();
    let (quasi_isometry, christoffel_sup) = chart_constants(surface, &psi);
    Ok(MetricField {
        surface: surface.clone(),
        kind,
        delta,
        scale: 1.0,
        phi,
        psi,
        scalar,
        volume,
        quasi_isometry,
        christoffel_sup,
        phi_factor,
    })
}

/// Quasi-isometry constant against the flat cone in each cone chart, and the
/// sup of `|z¹|^{1-β}|Γ(g) - Γ(ω_cone)|` over chart nodes.
fn chart_constants(surface: &ConeSurface, psi: &[f64]) -> (f64, f64) {
    let g = &surface.grid;
    let logc: Vec<f64> = (0..g.len())
        .map(|k| (surface.profile.p(surface.node_t(k)) / 4.0).ln() + psi[k])
        .collect();
    let p_of = |k: usize| surface.profile.p(surface.node_t(k));
    let ls: Vec<f64> = {
        let d = g.d_t(&logc);
        (0..g.len()).map(|k| p_of(k) * d[k]).collect()
    };
    let lth = g.d_theta(&logc);
    let mut q: f64 = 1.0;
    let mut csup: f64 = 0.0;
    for p in &surface.points {
        for k in 0..g.len() {
            let z = surface.node_z(k);
            let (u, gu, dlog) = match p.at {
                Location::Infinity => {
                    // Chart w = 1/z: g_w = c/|w|², ∂_w log g_w = -z(∂_ζ log c + 1).
                    let w = z.inv();
                    let dz = C64::new(ls[k], -lth[k]) * 0.5;
                    (w, logc[k].exp() / w.norm_sqr(), -z * (dz + 1.0))
                }
                Location::Finite { re, im } => {
                    let a = C64::new(re, im);
                    let dz = C64::new(ls[k], -lth[k]) * 0.5;
                    // g_z = c/|z|², ∂_z log g_z = (∂_ζ log c - 1)/z.
                    (z - a, logc[k].exp() / z.norm_sqr(), (dz - 1.0) / z)
                }
            };
            let r = u.norm();
            if r > 0.5 || r == 0.0 {
                continue;
            }
            let b = p.beta;
            let cone = b * b * r.powf(2.0 * b - 2.0);
            let ratio = gu / cone;
            q = q.max(ratio).max(1.0 / ratio);
            let gamma_cone = C64::new(b - 1.0, 0.0) / u;
            csup = csup.max(r.powf(1.0 - b) * (dlog - gamma_cone).norm());
        }
    }
    (q, csup)
}
