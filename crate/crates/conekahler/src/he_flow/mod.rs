//! Heat flow of bundle metrics toward a Hermitian-Einstein metric on a
//! parabolic bundle over the marked sphere.
//!
//! The flow `h⁻¹ ∂_t h = −(ΛF_h − λ)` is solved on an exhaustion of the
//! sphere minus the marked points: cells within chart radius `δ` of a marked
//! point are held at the model metric `h₀`, and the converged field for one
//! `δ` initializes the next, smaller one.
//!
//! Discretization. Finite volumes on cells in `(t, θ)`, with `t` graded like
//! Chebyshev points toward the poles. The mean curvature splits as
//! `ΛF = −(1/4c)((h⁻¹h_s)_s + (h⁻¹h_θ)_θ) − (i/4c)[h⁻¹h_s, h⁻¹h_θ]` in
//! `ζ = s + iθ`, with `c` the conformal factor. The first part is discretized
//! by matrix logarithms `log(h_c⁻¹h_n)` across cell faces, which is the exact
//! gradient of a discrete energy and reduces to `−Δ log h` in rank one. The
//! commutator uses centered differences.

mod small;

use crate::cone_geometry::{Location, MetricField, C64};
use crate::error::{Error, Result};
use crate::parabolic_bundles::{parabolic_degree, q_to_f64, stability_check, ModelMetric, ParabolicBundle};
use crate::spectral::gauss_legendre;
use nalgebra::{DMatrix, SMatrix};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
pub use small::HMat;
use small::{pack, unpack};
use std::f64::consts::PI;

/// Finite-volume cells on the sphere in the coordinates `(t, θ)`.
#[derive(Debug, Clone)]
pub struct FlowGrid {
    pub nt: usize,
    pub nth: usize,
    pub t: Vec<f64>,
    pub width: Vec<f64>,
    pub dth: f64,
    pub theta: Vec<f64>,
    /// Profile `p` at cell centers, per row.
    pub p: Vec<f64>,
    /// Conformal factor `c` in `ζ` per cell.
    pub conformal: Vec<f64>,
    /// Area of each cell.
    pub mass: Vec<f64>,
    pub z: Vec<C64>,
    /// `log|z|` per row.
    pub s: Vec<f64>,
    pub volume: f64,
    edges: Vec<Vec<(usize, f64)>>,
    /// Weights of rows `i−1, i, i+1` in the `t` derivative.
    dt_coef: Vec<[f64; 3]>,
    pub cone_points: Vec<(Location, f64)>,
}

impl FlowGrid {
    pub fn new(metric: &MetricField, nt: usize, nth: usize) -> Result<FlowGrid> {
        if nt < 5 || nth < 8 || !nth.is_multiple_of(2) {
            return Err(Error::InsufficientResolution(format!("flow grid {nt}×{nth} is too coarse")));
        }
        let prof = metric.surface.profile;
        let faces: Vec<f64> = (0..=nt).map(|k| -(PI * k as f64 / nt as f64).cos()).collect();
        let t: Vec<f64> = (0..nt).map(|i| 0.5 * (faces[i] + faces[i + 1])).collect();
        let width: Vec<f64> = (0..nt).map(|i| faces[i + 1] - faces[i]).collect();
        let dth = 2.0 * PI / nth as f64;
        let theta: Vec<f64> = (0..nth).map(|j| (j as f64 + 0.5) * dth).collect();
        let p: Vec<f64> = t.iter().map(|&x| prof.p(x)).collect();
        let s: Vec<f64> = t.iter().map(|&x| prof.s_of_t(x)).collect();
        let n = nt * nth;
        let mut conformal = vec![0.0; n];
        let mut mass = vec![0.0; n];
        let mut z = vec![C64::new(0.0, 0.0); n];
        for i in 0..nt {
            for j in 0..nth {
                let c = i * nth + j;
                let psi = metric.psi_at(t[i], theta[j]);
                if !psi.is_finite() {
                    return Err(Error::SingularData(format!("metric is not finite at cell {c}")));
                }
                conformal[c] = p[i] * psi.exp() / 4.0;
                mass[c] = psi.exp() / 2.0 * width[i] * dth;
                z[c] = C64::from_polar(s[i].exp(), theta[j]);
            }
        }
        let mut edges = vec![Vec::with_capacity(4); n];
        for i in 0..nt {
            for j in 0..nth {
                let c = i * nth + j;
                let wth = 0.5 * width[i] / (p[i] * dth);
                edges[c].push((i * nth + (j + 1) % nth, wth));
                edges[c].push((i * nth + (j + nth - 1) % nth, wth));
                if i + 1 < nt {
                    let w = 0.5 * prof.p(faces[i + 1]) * dth / (t[i + 1] - t[i]);
                    edges[c].push((c + nth, w));
                }
                if i > 0 {
                    let w = 0.5 * prof.p(faces[i]) * dth / (t[i] - t[i - 1]);
                    edges[c].push((c - nth, w));
                }
            }
        }
        let dt_coef = (0..nt)
            .map(|i| {
                if i == 0 {
                    let h = t[1] - t[0];
                    [0.0, -1.0 / h, 1.0 / h]
                } else if i == nt - 1 {
                    let h = t[i] - t[i - 1];
                    [-1.0 / h, 1.0 / h, 0.0]
                } else {
                    let (h1, h2) = (t[i] - t[i - 1], t[i + 1] - t[i]);
                    [-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))]
                }
            })
            .collect();
        let volume = mass.iter().sum();
        let cone_points = metric.surface.points.iter().map(|p| (p.at, p.beta)).collect();
        Ok(FlowGrid { nt, nth, t, width, dth, theta, p, conformal, mass, z, s, volume, edges, dt_coef, cone_points })
    }

    pub fn len(&self) -> usize {
        self.nt * self.nth
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Neighbors of a cell with the weights of the discrete Dirichlet form.
    pub fn neighbors(&self, c: usize) -> &[(usize, f64)] {
        &self.edges[c]
    }

    /// Cone angle of the base at a location (1 where the base is smooth).
    pub fn angle_at(&self, at: &Location) -> f64 {
        self.cone_points.iter().find(|(l, _)| same_location(l, at)).map_or(1.0, |(_, b)| *b)
    }

    /// Radius of a cell in the chart coordinate `W` centered at a marked point.
    pub fn chart_radius(&self, c: usize, at: &Location) -> f64 {
        let beta = self.angle_at(at);
        let i = c / self.nth;
        match at {
            Location::Infinity => (-beta * self.s[i]).exp(),
            _ if at.is_zero() => (beta * self.s[i]).exp(),
            _ => (self.z[c] - at.as_complex().unwrap()).norm().powf(beta),
        }
    }

    /// Cells held at the model metric for exhaustion radius `δ`.
    pub fn dirichlet_mask(&self, points: &[Location], delta: f64) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for at in points {
            for (c, m) in mask.iter_mut().enumerate() {
                if self.chart_radius(c, at) < delta {
                    *m = true;
                }
            }
            // The cells touching the point are always excluded.
            if at.is_infinity() || at.is_zero() {
                let row = if at.is_zero() { 0 } else { self.nt - 1 };
                for j in 0..self.nth {
                    mask[row * self.nth + j] = true;
                }
            } else {
                let rmin = (0..self.len()).map(|c| self.chart_radius(c, at)).fold(f64::INFINITY, f64::min);
                for (c, m) in mask.iter_mut().enumerate() {
                    if self.chart_radius(c, at) <= rmin * (1.0 + 1e-9) {
                        *m = true;
                    }
                }
            }
        }
        mask
    }

    fn derivatives<T: HMat>(&self, h: &[T], c: usize) -> (T, T) {
        let (i, j) = (c / self.nth, c % self.nth);
        let k = self.dt_coef[i];
        let mut ht = h[c].scale(k[1]);
        if k[0] != 0.0 {
            ht = ht + h[c - self.nth].scale(k[0]);
        }
        if k[2] != 0.0 {
            ht = ht + h[c + self.nth].scale(k[2]);
        }
        let jp = i * self.nth + (j + 1) % self.nth;
        let jm = i * self.nth + (j + self.nth - 1) % self.nth;
        let hth = (h[jp] - h[jm]).scale(0.5 / self.dth);
        (ht.scale(self.p[i]), hth)
    }
}

fn same_location(a: &Location, b: &Location) -> bool {
    match (a, b) {
        (Location::Infinity, Location::Infinity) => true,
        (Location::Finite { re, im }, Location::Finite { re: r2, im: i2 }) => (re - r2).abs() < 1e-12 && (im - i2).abs() < 1e-12,
        _ => false,
    }
}

/// A grid of positive hermitian matrices in the standard frame.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianField {
    pub rank: usize,
    pub values: Vec<DMatrix<C64>>,
    /// Parabolic weights of the model metric at each marked point.
    pub frame_weights: Vec<(String, Vec<f64>)>,
}

impl HermitianField {
    pub fn identity(rank: usize, cells: usize) -> HermitianField {
        HermitianField { rank, values: vec![DMatrix::identity(rank, rank); cells], frame_weights: vec![] }
    }

    pub fn from_model(model: &ModelMetric, bundle: &ParabolicBundle, grid: &FlowGrid) -> HermitianField {
        let values = grid.z.par_iter().map(|&z| model.eval(z)).collect();
        let frame_weights = bundle
            .points
            .iter()
            .map(|p| (p.at.label(), (0..bundle.rank).map(|k| q_to_f64(&p.vector_weight(k))).collect()))
            .collect();
        HermitianField { rank: bundle.rank, values, frame_weights }
    }

    pub fn check_positive(&self) -> Result<()> {
        for (c, v) in self.values.iter().enumerate() {
            let finite = v.iter().all(|x| x.re.is_finite() && x.im.is_finite());
            let hermitian = (v - v.adjoint()).iter().all(|x| x.norm() <= 1e-12 * (1.0 + v.norm()));
            if v.nrows() != self.rank
                || v.ncols() != self.rank
                || !finite
                || !hermitian
                || nalgebra::SymmetricEigen::new(v.clone()).eigenvalues.min() <= 0.0
            {
                return Err(Error::PositivityLoss { node: c });
            }
        }
        Ok(())
    }

    /// Constant change of frame `h ↦ U* h U`.
    pub fn transformed(&self, u: &DMatrix<C64>) -> HermitianField {
        let values = self.values.iter().map(|h| u.adjoint() * h * u).collect();
        HermitianField { values, ..self.clone() }
    }
}

fn to_small<T: HMat>(f: &HermitianField) -> Vec<T> {
    f.values.iter().map(T::from_dm).collect()
}

/// Mean curvature endomorphisms at the requested cells.
fn curvature_cells<T: HMat>(g: &FlowGrid, h: &[T], cells: &[usize]) -> Result<(Vec<T>, f64)> {
    let out: Vec<Result<(T, f64)>> = cells
        .par_iter()
        .map(|&c| {
            let hc = h[c];
            if !hc.positive() {
                return Err(Error::PositivityLoss { node: c });
            }
            let sq = hc.hfun(&|x| x.sqrt());
            let isq = hc.hfun(&|x| 1.0 / x.sqrt());
            let hinv = isq * isq;
            let mut logsum = T::zero();
            for &(nb, w) in &g.edges[c] {
                if !h[nb].positive() {
                    return Err(Error::PositivityLoss { node: nb });
                }
                let l = (isq * h[nb] * isq).hfun(&|x| x.ln());
                logsum = logsum + (isq * l * sq).scale(w);
            }
            let (hs, hth) = g.derivatives(h, c);
            let (a, b) = (hinv * hs, hinv * hth);
            let comm = (a * b - b * a).scale_c(C64::new(0.0, -0.25 / g.conformal[c]));
            let theta = logsum.scale(-1.0 / g.mass[c]) + comm;
            let form = hc * theta;
            let defect = (form - form.adjoint()).max_abs();
            Ok((hinv * form.hermitian_part(), defect))
        })
        .collect();
    let mut vals = Vec::with_capacity(cells.len());
    let mut defect: f64 = 0.0;
    for r in out {
        let (v, d) = r?;
        vals.push(v);
        defect = defect.max(d);
    }
    Ok((vals, defect))
}

/// `|A|² = tr(A²)` for an `h`-selfadjoint endomorphism.
fn norm2<T: HMat>(a: &T) -> f64 {
    (*a * *a).trace().re.max(0.0)
}

#[derive(Debug, Clone)]
pub struct Curvature {
    /// `ΛF` as endomorphisms, per cell.
    pub values: Vec<DMatrix<C64>>,
    /// Largest antihermitian part removed from `h·ΛF`.
    pub hermiticity_defect: f64,
}

/// Discrete mean curvature `ΛF_h` at every cell.
pub fn curvature_contraction(field: &HermitianField, grid: &FlowGrid) -> Result<Curvature> {
    if field.values.len() != grid.len() {
        return Err(Error::InvalidArgument("field does not match the grid".into()));
    }
    fn run<T: HMat>(field: &HermitianField, grid: &FlowGrid) -> Result<Curvature> {
        let h = to_small::<T>(field);
        let cells: Vec<usize> = (0..grid.len()).collect();
        let (v, d) = curvature_cells(grid, &h, &cells)?;
        Ok(Curvature { values: v.iter().map(|m| m.to_dm()).collect(), hermiticity_defect: d })
    }
    match field.rank {
        1 => run::<SMatrix<C64, 1, 1>>(field, grid),
        2 => run::<SMatrix<C64, 2, 2>>(field, grid),
        3 => run::<SMatrix<C64, 3, 3>>(field, grid),
        r => Err(Error::Unsupported(format!("heat flow supports rank ≤ 3, got {r}"))),
    }
}

fn sigma<T: HMat>(h: &T, k: &T) -> Option<f64> {
    let (hi, ki) = (h.inverse()?, k.inverse()?);
    Some(((hi * *k).trace() + (ki * *h).trace()).re - 2.0 * T::R as f64)
}

/// Pointwise `σ(h, k) = tr h⁻¹k + tr k⁻¹h − 2r`.
pub fn donaldson_distance_field(h: &HermitianField, k: &HermitianField) -> Result<Vec<f64>> {
    if h.rank != k.rank || h.values.len() != k.values.len() {
        return Err(Error::InvalidArgument("fields have different shapes".into()));
    }
    h.check_positive().map_err(|e| Error::InvalidArgument(format!("first metric: {e}")))?;
    k.check_positive().map_err(|e| Error::InvalidArgument(format!("second metric: {e}")))?;
    Ok(h.values
        .iter()
        .zip(&k.values)
        .map(|(a, b)| {
            let (ai, bi) = (a.clone().try_inverse().unwrap(), b.clone().try_inverse().unwrap());
            ((ai * b).trace() + (bi * a).trace()).re - 2.0 * h.rank as f64
        })
        .collect())
}

/// Supremum of `σ(h, k)` over the grid.
pub fn donaldson_distance(h: &HermitianField, k: &HermitianField) -> Result<f64> {
    Ok(donaldson_distance_field(h, k)?.into_iter().fold(0.0, f64::max))
}

/// `∫ tr(h⁻¹X (ΛF_h − λ)) ω` over the free cells.
fn md_form<T: HMat>(g: &FlowGrid, h: &[T], x: &[T], lambda: f64, free: &[usize]) -> Result<f64> {
    let (th, _) = curvature_cells(g, h, free)?;
    Ok(free
        .iter()
        .zip(&th)
        .map(|(&c, t)| g.mass[c] * (h[c].inverse().unwrap() * x[c] * (*t - T::identity().scale(lambda))).trace().re)
        .sum())
}

fn linear_path_md<T: HMat>(g: &FlowGrid, h0: &[T], h: &[T], lambda: f64, steps: usize, free: &[usize]) -> Result<f64> {
    let (nodes, weights) = gauss_legendre(steps.max(1));
    let x: Vec<T> = h.iter().zip(h0).map(|(a, b)| *a - *b).collect();
    let mut total = 0.0;
    for (s, w) in nodes.iter().zip(&weights) {
        let s = 0.5 * (s + 1.0);
        let hs: Vec<T> = h0.iter().zip(&x).map(|(a, d)| *a + d.scale(s)).collect();
        total += 0.5 * w * md_form(g, &hs, &x, lambda, free)?;
    }
    Ok(total)
}

/// Donaldson functional of `h` relative to `h₀` along the straight path, by
/// Gauss quadrature with `path_steps` nodes. Cells where `h = h₀` do not contribute.
pub fn donaldson_functional(grid: &FlowGrid, h0: &HermitianField, h: &HermitianField, lambda: f64, path_steps: usize) -> Result<f64> {
    h0.check_positive()?;
    h.check_positive()?;
    if h0.rank != h.rank {
        return Err(Error::InvalidArgument("metrics have different ranks".into()));
    }
    fn run<T: HMat>(g: &FlowGrid, h0: &HermitianField, h: &HermitianField, lambda: f64, steps: usize) -> Result<f64> {
        let (a, b) = (to_small::<T>(h0), to_small::<T>(h));
        let free: Vec<usize> = (0..g.len()).filter(|&c| (a[c] - b[c]).max_abs() > 0.0).collect();
        linear_path_md(g, &a, &b, lambda, steps, &free)
    }
    match h.rank {
        1 => run::<SMatrix<C64, 1, 1>>(grid, h0, h, lambda, path_steps),
        2 => run::<SMatrix<C64, 2, 2>>(grid, h0, h, lambda, path_steps),
        3 => run::<SMatrix<C64, 3, 3>>(grid, h0, h, lambda, path_steps),
        r => Err(Error::Unsupported(format!("heat flow supports rank ≤ 3, got {r}"))),
    }
}

/// `∫ tr ΛF_{h₀} ω` for the model metric, by quadrature in `z = tan(v/2) e^{iφ}`.
pub fn analytic_degree(model: &ModelMetric, nv: usize, nphi: usize) -> f64 {
    (0..nv)
        .into_par_iter()
        .map(|i| {
            let v = PI * (i as f64 + 0.5) / nv as f64;
            let r = (v / 2.0).tan();
            let dr = 0.5 / (v / 2.0).cos().powi(2) * PI / nv as f64;
            (0..nphi)
                .map(|j| {
                    let phi = 2.0 * PI * (j as f64 + 0.5) / nphi as f64;
                    2.0 * model.curvature_density(C64::from_polar(r, phi)) * r * dr * 2.0 * PI / nphi as f64
                })
                .sum::<f64>()
        })
        // Summed in index order so the value does not depend on the thread schedule.
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FlowOptions {
    pub nt: usize,
    pub ntheta: usize,
    /// Exhaustion radii in the chart coordinate of each marked point.
    pub schedule: Vec<f64>,
    pub tol: f64,
    pub dt: f64,
    pub dt_max: f64,
    /// Largest accepted relative defect of the energy identity `dM_D/dt = −∫|ΛF − λ|²` over one step.
    pub slope_tol: f64,
    pub max_steps: usize,
    /// Flow time allowed per exhaustion stage.
    pub t_max: f64,
    pub path_steps: usize,
    pub degree_quadrature: (usize, usize),
    pub rho: f64,
    /// Refuse to run on bundles the stability oracle reports as not stable.
    pub require_stable: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            nt: 41,
            ntheta: 80,
            schedule: vec![0.2, 0.1, 0.05, 0.025],
            tol: 1e-3,
            dt: 0.01,
            dt_max: 0.5,
            slope_tol: 0.05,
            max_steps: 20_000,
            t_max: 60.0,
            path_steps: 6,
            degree_quadrature: (800, 512),
            rho: 0.35,
            require_stable: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowStep {
    pub t: f64,
    pub dt: f64,
    pub delta: f64,
    pub residual_sup: f64,
    /// `∫|ΛF − λ|² ω` after the step.
    pub dissipation: f64,
    pub md: f64,
    pub md_slope: f64,
    /// Slope of `M_D` divided by `−∫|ΛF − λ|²` (trapezoid over the step).
    pub slope_ratio: f64,
    pub curvature_sup: f64,
    pub sigma_step: f64,
    pub sigma_h0: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageSummary {
    pub delta: f64,
    pub dirichlet_cells: usize,
    pub hole_volume: f64,
    pub steps: usize,
    pub converged: bool,
    pub residual_sup: f64,
    pub md_trajectory: f64,
    pub md_linear_path: f64,
    pub sigma_h0: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowReport {
    pub iterations: usize,
    pub rejections: usize,
    pub lambda: f64,
    pub rank: usize,
    pub volume: f64,
    /// `∫ tr ΛF_{h₀} ω` by quadrature of the model metric.
    pub analytic_degree: f64,
    pub pardeg: f64,
    /// `analytic_degree / (2π·pardeg)`, the measured normalization constant.
    pub degree_ratio: f64,
    /// `∫ tr ΛF ω` of the final field: flow cells plus model curvature on the held cells.
    pub degree_integral: f64,
    pub lambda_r_vol: f64,
    pub residual_sup: f64,
    pub converged: bool,
    pub status: String,
    pub bundle_stable: Option<bool>,
    pub delta_schedule: Vec<f64>,
    pub hermiticity_defect: f64,
    pub stages: Vec<StageSummary>,
    pub traces: Vec<FlowStep>,
    #[serde(skip)]
    pub final_field: HermitianField,
    #[serde(skip)]
    pub initial_field: HermitianField,
}

struct Stepper {
    tau: f64,
    chol: CscCholesky<f64>,
    free: Vec<usize>,
    pos: Vec<usize>,
}

impl Stepper {
    fn new(g: &FlowGrid, mask: &[bool], tau: f64) -> Result<Stepper> {
        let free: Vec<usize> = (0..g.len()).filter(|&c| !mask[c]).collect();
        let mut pos = vec![usize::MAX; g.len()];
        for (k, &c) in free.iter().enumerate() {
            pos[c] = k;
        }
        let n = free.len();
        let mut coo = CooMatrix::new(n, n);
        for (k, &c) in free.iter().enumerate() {
            let mut diag = g.mass[c] / tau;
            for &(nb, w) in &g.edges[c] {
                diag += w;
                if pos[nb] != usize::MAX {
                    coo.push(k, pos[nb], -w);
                }
            }
            coo.push(k, k, diag);
        }
        let csc = CscMatrix::from(&coo);
        let chol = CscCholesky::factor(&csc)
            .map_err(|e| Error::NumericalFailure(format!("implicit step matrix is not positive definite: {e:?}")))?;
        Ok(Stepper { tau, chol, free, pos })
    }

    /// One linearly implicit step: the Laplacian part implicit, the rest explicit.
    fn step<T: HMat>(&self, g: &FlowGrid, h: &[T], theta: &[T], lambda: f64) -> Vec<T> {
        let r2 = T::R * T::R;
        let n = self.free.len();
        let mut rhs = DMatrix::<f64>::zeros(n, r2);
        let mut buf = vec![0.0; r2];
        for (k, &c) in self.free.iter().enumerate() {
            let m = g.mass[c];
            let mut lap = T::zero();
            let mut bnd = T::zero();
            for &(nb, w) in &g.edges[c] {
                lap = lap + (h[nb] - h[c]).scale(w);
                if self.pos[nb] == usize::MAX {
                    bnd = bnd + h[nb].scale(w);
                }
            }
            let forcing = (h[c] * theta[k]).hermitian_part().scale(-m) + h[c].scale(lambda * m) - lap;
            let v = h[c].scale(m / self.tau) + forcing + bnd;
            pack(&v, &mut buf);
            for (q, x) in buf.iter().enumerate() {
                rhs[(k, q)] = *x;
            }
        }
        let sol = self.chol.solve(&rhs);
        let mut out = h.to_vec();
        for (k, &c) in self.free.iter().enumerate() {
            for (q, x) in buf.iter_mut().enumerate() {
                *x = sol[(k, q)];
            }
            out[c] = unpack(&buf);
        }
        out
    }
}

struct Residual<T> {
    theta: Vec<T>,
    sup: f64,
    dissipation: f64,
    curvature_sup: f64,
    defect: f64,
}

fn residual<T: HMat>(g: &FlowGrid, h: &[T], free: &[usize], lambda: f64) -> Result<Residual<T>> {
    let (theta, defect) = curvature_cells(g, h, free)?;
    let mut sup: f64 = 0.0;
    let mut dis = 0.0;
    let mut cs: f64 = 0.0;
    for (k, &c) in free.iter().enumerate() {
        let d = norm2(&(theta[k] - T::identity().scale(lambda)));
        sup = sup.max(d.sqrt());
        cs = cs.max(norm2(&theta[k]).sqrt());
        dis += g.mass[c] * d;
    }
    Ok(Residual { theta, sup, dissipation: dis, curvature_sup: cs, defect })
}

fn sup_sigma<T: HMat>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(x, y)| sigma(x, y).unwrap_or(f64::INFINITY)).fold(0.0, f64::max)
}

/// Runs the flow from `h₀` with a prescribed Einstein constant on the exhaustion of `points`.
pub fn flow_from(
    grid: &FlowGrid,
    h0: &HermitianField,
    lambda: f64,
    points: &[Location],
    opts: &FlowOptions,
) -> Result<FlowReport> {
    h0.check_positive()?;
    if h0.values.len() != grid.len() {
        return Err(Error::InvalidArgument("initial field does not match the grid".into()));
    }
    match h0.rank {
        1 => flow_generic::<SMatrix<C64, 1, 1>>(grid, h0, lambda, points, opts),
        2 => flow_generic::<SMatrix<C64, 2, 2>>(grid, h0, lambda, points, opts),
        3 => flow_generic::<SMatrix<C64, 3, 3>>(grid, h0, lambda, points, opts),
        r => Err(Error::Unsupported(format!("heat flow supports rank ≤ 3, got {r}"))),
    }
}

fn flow_generic<T: HMat>(g: &FlowGrid, h0f: &HermitianField, lambda: f64, points: &[Location], opts: &FlowOptions) -> Result<FlowReport> {
    if opts.schedule.is_empty() || opts.schedule.iter().any(|d| !(*d > 0.0)) || !(opts.tol > 0.0) || !(opts.dt > 0.0) || !(opts.slope_tol > 0.0) {
        return Err(Error::InvalidArgument("schedule, tolerance and time step must be positive".into()));
    }
    let h0 = to_small::<T>(h0f);
    let mut h = h0.clone();
    let mut traces = Vec::new();
    let mut stages = Vec::new();
    let mut md: f64 = 0.0;
    let mut t = 0.0;
    let mut iterations = 0;
    let mut rejections = 0;
    let mut tau = opts.dt;
    let mut defect: f64 = 0.0;
    let mut status = "converged".to_string();
    let mut all_converged = true;
    let mut last_sup = f64::NAN;
    for &delta in &opts.schedule {
        let mask = g.dirichlet_mask(points, delta);
        for c in 0..g.len() {
            if mask[c] {
                h[c] = h0[c];
            }
        }
        let mut stepper = Stepper::new(g, &mask, tau)?;
        let free = stepper.free.clone();
        let mut res = residual(g, &h, &free, lambda)?;
        defect = defect.max(res.defect);
        let (mut stage_steps, mut stage_t, mut streak) = (0usize, 0.0, 0usize);
        let mut converged = res.sup < opts.tol;
        while !converged {
            if iterations >= opts.max_steps || stage_t >= opts.t_max {
                status = "budget_exceeded".into();
                break;
            }
            let cand = stepper.step(g, &h, &res.theta, lambda);
            let positive = free.iter().all(|&c| cand[c].positive());
            let mut accepted = None;
            if positive {
                let mid: Vec<T> = h.iter().zip(&cand).map(|(a, b)| (*a + *b).scale(0.5)).collect();
                let x: Vec<T> = cand.iter().zip(&h).map(|(a, b)| *a - *b).collect();
                let dm = md_form(g, &mid, &x, lambda, &free)?;
                let new = residual(g, &cand, &free, lambda)?;
                let slack = 1e-9 * md.abs().max(1.0);
                let expected = -tau * 0.5 * (res.dissipation + new.dissipation);
                // Below the rounding level of M_D the identity carries no information.
                let resolved = expected.abs() > 1e-11 * md.abs().max(1.0);
                let identity_ok = !resolved || (dm / expected - 1.0).abs() <= opts.slope_tol;
                if dm <= slack && identity_ok && new.sup <= 2.0 * res.sup + 1e-12 {
                    accepted = Some((dm, new));
                }
            }
            match accepted {
                None => {
                    rejections += 1;
                    tau *= 0.5;
                    if tau < 1e-9 {
                        return Err(Error::NumericalFailure(format!(
                            "time step underflow at t = {t:.6} (δ = {delta}); positivity {}",
                            if positive { "kept" } else { "lost" }
                        )));
                    }
                    stepper = Stepper::new(g, &mask, tau)?;
                    streak = 0;
                }
                Some((dm, new)) => {
                    let sigma_step = sup_sigma(&cand, &h);
                    md += dm;
                    t += tau;
                    stage_t += tau;
                    iterations += 1;
                    stage_steps += 1;
                    let avg = 0.5 * (res.dissipation + new.dissipation);
                    traces.push(FlowStep {
                        t,
                        dt: tau,
                        delta,
                        residual_sup: new.sup,
                        dissipation: new.dissipation,
                        md,
                        md_slope: dm / tau,
                        slope_ratio: if avg > 0.0 { -(dm / tau) / avg } else { 1.0 },
                        curvature_sup: new.curvature_sup,
                        sigma_step,
                        sigma_h0: sup_sigma(&cand, &h0),
                    });
                    h = cand;
                    defect = defect.max(new.defect);
                    res = new;
                    converged = res.sup < opts.tol;
                    streak += 1;
                    if streak >= 10 && tau < opts.dt_max {
                        tau = (tau * 1.2).min(opts.dt_max);
                        stepper = Stepper::new(g, &mask, tau)?;
                        streak = 0;
                    }
                }
            }
        }
        all_converged = converged;
        last_sup = res.sup;
        let md_linear = linear_path_md(g, &h0, &h, lambda, opts.path_steps, &free)?;
        stages.push(StageSummary {
            delta,
            dirichlet_cells: mask.iter().filter(|&&m| m).count(),
            hole_volume: (0..g.len()).filter(|&c| mask[c]).map(|c| g.mass[c]).sum(),
            steps: stage_steps,
            converged,
            residual_sup: res.sup,
            md_trajectory: md,
            md_linear_path: md_linear,
            sigma_h0: sup_sigma(&h, &h0),
        });
        if !converged {
            break;
        }
    }
    if !all_converged && status == "converged" {
        status = "budget_exceeded".into();
    }
    let final_field = HermitianField { rank: h0f.rank, values: h.iter().map(|m| m.to_dm()).collect(), frame_weights: h0f.frame_weights.clone() };
    Ok(FlowReport {
        iterations,
        rejections,
        lambda,
        rank: h0f.rank,
        volume: g.volume,
        analytic_degree: f64::NAN,
        pardeg: f64::NAN,
        degree_ratio: f64::NAN,
        degree_integral: f64::NAN,
        lambda_r_vol: lambda * h0f.rank as f64 * g.volume,
        residual_sup: last_sup,
        converged: all_converged,
        status,
        bundle_stable: None,
        delta_schedule: opts.schedule.clone(),
        hermiticity_defect: defect,
        stages,
        traces,
        final_field,
        initial_field: h0f.clone(),
    })
}

/// Heat flow for a parabolic bundle over a cone metric, from the model metric.
pub fn flow_run(bundle: &ParabolicBundle, metric: &MetricField, opts: &FlowOptions) -> Result<FlowReport> {
    let stable = if bundle.rank <= 3 { Some(stability_check(bundle)?.stable) } else { None };
    if opts.require_stable && stable != Some(true) {
        return Err(Error::Obstruction("bundle is not parabolic stable".into()));
    }
    let grid = FlowGrid::new(metric, opts.nt, opts.ntheta)?;
    let model = ModelMetric::new(bundle, opts.rho)?;
    let h0 = HermitianField::from_model(&model, bundle, &grid);
    let degree = if bundle.points.is_empty() && bundle.degree() == 0 {
        0.0
    } else {
        analytic_degree(&model, opts.degree_quadrature.0, opts.degree_quadrature.1)
    };
    let r = bundle.rank as f64;
    let lambda = degree / (r * metric.volume);
    let points: Vec<Location> = bundle.points.iter().map(|p| p.at.location()).collect();
    let mut report = flow_from(&grid, &h0, lambda, &points, opts)?;
    let pardeg = q_to_f64(&parabolic_degree(bundle));
    report.analytic_degree = degree;
    report.pardeg = pardeg;
    report.degree_ratio = if pardeg != 0.0 { degree / (2.0 * PI * pardeg) } else { f64::NAN };
    report.lambda_r_vol = lambda * r * metric.volume;
    report.bundle_stable = stable;
    report.degree_integral = degree_integral(&grid, &report, &model, &points, opts)?;
    Ok(report)
}

/// Flow cells contribute the discrete curvature of the final field; held cells
/// contribute the model curvature at their centers.
fn degree_integral(g: &FlowGrid, report: &FlowReport, model: &ModelMetric, points: &[Location], opts: &FlowOptions) -> Result<f64> {
    let delta = report.stages.last().map_or(opts.schedule[0], |s| s.delta);
    let mask = g.dirichlet_mask(points, delta);
    let curv = curvature_contraction(&report.final_field, g)?;
    let total: f64 = (0..g.len())
        .into_par_iter()
        .map(|c| {
            let tr = if mask[c] {
                let gz = g.conformal[c] / g.z[c].norm_sqr();
                model.mean_curvature(g.z[c], gz).trace().re
            } else {
                curv.values[c].trace().re
            };
            g.mass[c] * tr
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total)
}
