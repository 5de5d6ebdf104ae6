//! Linearization `DA₁` of the first-order term and the first corrective step.
//!
//! The trace part acts on base potentials through the Lichnerowicz operator of
//! the spectral discretization. The trace-free part acts on endomorphism
//! fields of the finite-volume grid of the heat flow, as the derivative of the
//! discrete `ΛF⁰` along `h ↦ h e^{εΦ}`.

use crate::cone_geometry::{build_metric, Location, MetricField, C64};
use crate::elliptic::{assemble_lichnerowicz, fredholm_solve, Branch, DiscreteOperator, FredholmOptions};
use crate::error::{Error, Result};
use crate::he_flow::{curvature_contraction, FlowGrid, HermitianField};
use crate::parabolic_bundles::{model_bundle_metric, stability_check, ParabolicBundle};
use nalgebra::{DMatrix, SymmetricEigen};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxOptions {
    pub nt: usize,
    pub ntheta: usize,
    /// Chart radius of the cells where `Φ` is held at zero.
    pub delta: f64,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
    /// Step of the central difference in `ε`, relative to `sup|Φ|`.
    pub fd_eps: f64,
    pub fredholm: FredholmOptions,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        ApproxOptions {
            nt: 41,
            ntheta: 80,
            delta: 0.05,
            gmres_tol: 1e-7,
            gmres_restart: 60,
            gmres_max_iter: 800,
            fd_eps: 1e-4,
            fredholm: FredholmOptions::default(),
        }
    }
}

/// Base metric, bundle metric and the discretizations `DA₁` acts on.
pub struct CorrectionSetup {
    pub metric: MetricField,
    pub grid: FlowGrid,
    pub h: HermitianField,
    /// Cells where `Φ` vanishes.
    pub mask: Vec<bool>,
    pub lic: DiscreteOperator,
    fd_eps: f64,
}

impl CorrectionSetup {
    pub fn new(metric: &MetricField, grid: FlowGrid, h: HermitianField, points: &[Location], delta: f64, fd_eps: f64) -> Result<CorrectionSetup> {
        if h.values.len() != grid.len() {
            return Err(Error::InvalidArgument("bundle metric does not match the grid".into()));
        }
        h.check_positive()?;
        let mut pts: Vec<Location> = points.to_vec();
        pts.extend(metric.surface.points.iter().map(|p| p.at));
        let mask = grid.dirichlet_mask(&pts, delta);
        let lic = assemble_lichnerowicz(metric)?;
        Ok(CorrectionSetup { metric: metric.clone(), grid, h, mask, lic, fd_eps })
    }

    pub fn rank(&self) -> usize {
        self.h.rank
    }
}

#[derive(Debug, Clone)]
pub struct Da1Value {
    /// `r·𝕃ic η` at the spectral nodes.
    pub trace_part: Vec<f64>,
    /// Trace-free endomorphisms per flow cell.
    pub tracefree_part: Vec<DMatrix<C64>>,
}

fn hfun(m: &DMatrix<C64>, f: impl Fn(f64) -> f64) -> DMatrix<C64> {
    let e = SymmetricEigen::new((m + m.adjoint()) * C64::new(0.5, 0.0));
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|x| C64::new(f(x), 0.0)));
    &e.eigenvectors * d * e.eigenvectors.adjoint()
}

fn tracefree(a: &DMatrix<C64>) -> DMatrix<C64> {
    let r = a.nrows();
    a - DMatrix::identity(r, r) * (a.trace() / r as f64)
}

/// `|A| = √tr(A²)` for an `h`-selfadjoint endomorphism.
fn endo_norm(a: &DMatrix<C64>) -> f64 {
    (a * a).trace().re.max(0.0).sqrt()
}

/// Derivative of `ΛF` along `h + ε h Φ`, by central differences.
fn curvature_derivative(setup: &CorrectionSetup, phi: &[DMatrix<C64>]) -> Result<Vec<DMatrix<C64>>> {
    let size = phi.iter().map(|m| m.norm()).fold(0.0, f64::max);
    if size == 0.0 {
        return Ok(vec![DMatrix::zeros(setup.rank(), setup.rank()); phi.len()]);
    }
    let eps = setup.fd_eps / size;
    let shifted = |s: f64| -> HermitianField {
        let values = setup
            .h
            .values
            .iter()
            .zip(phi)
            .map(|(h, p)| {
                let a = h * p;
                h + (&a + a.adjoint()) * C64::new(0.5 * s, 0.0)
            })
            .collect();
        HermitianField { values, ..setup.h.clone() }
    };
    let plus = curvature_contraction(&shifted(eps), &setup.grid)?;
    let minus = curvature_contraction(&shifted(-eps), &setup.grid)?;
    Ok(plus.values.iter().zip(&minus.values).map(|(a, b)| (a - b) / C64::new(2.0 * eps, 0.0)).collect())
}

/// `DA₁(η, Φ) = r·𝕃ic η + [∂_ε ΛF(h e^{εΦ})]⁰`. The wedge term against
/// `i∂∂̄η` is a form of degree four and vanishes over a curve.
pub fn da1_apply(setup: &CorrectionSetup, eta: &[f64], phi: &[DMatrix<C64>]) -> Result<Da1Value> {
    if eta.len() != setup.lic.disc.len() || phi.len() != setup.grid.len() {
        return Err(Error::InvalidArgument("arguments do not match the discretizations".into()));
    }
    let r = setup.rank() as f64;
    let trace_part = setup.lic.apply(eta).iter().map(|v| r * v).collect();
    let d = curvature_derivative(setup, phi)?;
    Ok(Da1Value { trace_part, tracefree_part: d.iter().map(tracefree).collect() })
}

/// Right-preconditioned restarted GMRES. Returns the solution, the iteration
/// count and the final relative residual.
fn gmres(
    apply: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = b.len();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, c)| a * c).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0, 0.0));
    }
    let mut iters = 0;
    loop {
        let ax = apply(&x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
        let beta = dot(&r, &r).sqrt();
        if beta / bnorm <= tol || iters >= max_iter {
            return Ok((x, iters, beta / bnorm));
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|a| a / beta).collect()];
        let mut zs: Vec<Vec<f64>> = Vec::new();
        let mut hm = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k = 0;
        while k < restart && iters < max_iter {
            let z = precond(&v[k]);
            let mut w = apply(&z)?;
            zs.push(z);
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                hm[i][k] = hij;
                w.iter_mut().zip(vi).for_each(|(a, c)| *a -= hij * c);
            }
            let wn = dot(&w, &w).sqrt();
            hm[k + 1][k] = wn;
            for i in 0..k {
                let t = cs[i] * hm[i][k] + sn[i] * hm[i + 1][k];
                hm[i + 1][k] = -sn[i] * hm[i][k] + cs[i] * hm[i + 1][k];
                hm[i][k] = t;
            }
            let den = hm[k][k].hypot(hm[k + 1][k]);
            cs[k] = hm[k][k] / den;
            sn[k] = hm[k + 1][k] / den;
            hm[k][k] = den;
            hm[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iters += 1;
            k += 1;
            if g[k].abs() / bnorm <= tol || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|a| a / wn).collect());
        }
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| hm[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hm[i][i];
        }
        for (yi, zi) in y.iter().zip(&zs) {
            x.iter_mut().zip(zi).for_each(|(a, c)| *a += yi * c);
        }
    }
}

/// Real coordinates of a 2×2 or 3×3 hermitian matrix.
fn pack(m: &DMatrix<C64>, out: &mut Vec<f64>) {
    let r = m.nrows();
    for i in 0..r {
        out.push(m[(i, i)].re);
    }
    for i in 0..r {
        for j in i + 1..r {
            out.push(m[(i, j)].re);
            out.push(m[(i, j)].im);
        }
    }
}

fn unpack(v: &[f64], r: usize) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(r, r);
    let mut k = r;
    for i in 0..r {
        m[(i, i)] = C64::new(v[i], 0.0);
    }
    for i in 0..r {
        for j in i + 1..r {
            m[(i, j)] = C64::new(v[k], v[k + 1]);
            m[(j, i)] = m[(i, j)].conj();
            k += 2;
        }
    }
    m
}

#[derive(Debug, Clone)]
struct FiberSolve {
    phi: Vec<DMatrix<C64>>,
    iterations: usize,
    relative_residual: f64,
}

/// Solves `∂_ε ΛF(h e^{εΦ}) = −ΛF⁰_h` on the free cells, with `Φ = 0` on the mask.
///
/// The unknown is `B = h^{1/2} Φ h^{-1/2}`, hermitian, and the equation is
/// conjugated the same way, so that it is close to `−ΔB = …` componentwise and
/// the scalar Dirichlet Laplacian serves as preconditioner.
fn solve_fiber_correction(setup: &CorrectionSetup, theta: &[DMatrix<C64>], opts: &ApproxOptions) -> Result<FiberSolve> {
    let g = &setup.grid;
    let r = setup.rank();
    let dim = r * r;
    let free: Vec<usize> = (0..g.len()).filter(|&c| !setup.mask[c]).collect();
    let mut pos = vec![usize::MAX; g.len()];
    for (k, &c) in free.iter().enumerate() {
        pos[c] = k;
    }
    let sq: Vec<DMatrix<C64>> = setup.h.values.par_iter().map(|h| hfun(h, f64::sqrt)).collect();
    let isq: Vec<DMatrix<C64>> = setup.h.values.par_iter().map(|h| hfun(h, |x| 1.0 / x.sqrt())).collect();
    let mut coo = CooMatrix::new(free.len(), free.len());
    for (k, &c) in free.iter().enumerate() {
        let mut diag = 0.0;
        for &(nb, w) in g.neighbors(c) {
            diag += w;
            if pos[nb] != usize::MAX {
                coo.push(k, pos[nb], -w);
            }
        }
        coo.push(k, k, diag);
    }
    let chol = CscCholesky::factor(&CscMatrix::from(&coo))
        .map_err(|e| Error::NumericalFailure(format!("Dirichlet Laplacian is not positive definite: {e:?}")))?;
    let to_phi = |x: &[f64]| -> Vec<DMatrix<C64>> {
        let mut out = vec![DMatrix::zeros(r, r); g.len()];
        for (k, &c) in free.iter().enumerate() {
            out[c] = &isq[c] * unpack(&x[k * dim..(k + 1) * dim], r) * &sq[c];
        }
        out
    };
    let from_endo = |e: &[DMatrix<C64>]| -> Vec<f64> {
        let mut out = Vec::with_capacity(free.len() * dim);
        for &c in &free {
            let m = &sq[c] * &e[c] * &isq[c];
            pack(&((&m + m.adjoint()) * C64::new(0.5, 0.0)), &mut out);
        }
        out
    };
    let apply = |x: &[f64]| -> Result<Vec<f64>> { Ok(from_endo(&curvature_derivative(setup, &to_phi(x))?)) };
    let precond = |y: &[f64]| -> Vec<f64> {
        let mut rhs = DMatrix::<f64>::zeros(free.len(), dim);
        for (k, &c) in free.iter().enumerate() {
            for q in 0..dim {
                rhs[(k, q)] = y[k * dim + q] * g.mass[c];
            }
        }
        let sol = chol.solve(&rhs);
        let mut out = vec![0.0; y.len()];
        for k in 0..free.len() {
            for q in 0..dim {
                out[k * dim + q] = sol[(k, q)];
            }
        }
        out
    };
    let target: Vec<DMatrix<C64>> = theta.iter().map(|t| -tracefree(t)).collect();
    let b = from_endo(&target);
    let (x, iterations, relative_residual) = gmres(&apply, &precond, &b, opts.gmres_tol, opts.gmres_restart, opts.gmres_max_iter)?;
    Ok(FiberSolve { phi: to_phi(&x), iterations, relative_residual })
}

#[derive(Debug, Clone, Serialize)]
pub struct ApproxStep {
    /// Base potential correction at the spectral nodes.
    pub eta0: Vec<f64>,
    /// Endomorphism correction per flow cell.
    #[serde(skip)]
    pub phi0: Vec<DMatrix<C64>>,
    pub eta0_sup: f64,
    pub phi0_sup: f64,
    /// Target constant `S̄` of the base.
    pub s_bar: f64,
    pub fredholm_kernel_dimension: usize,
    /// `‖S_B − S̄‖_{L²}` before and after `ω_B ↦ ω_B + i∂∂̄η₀`.
    pub base_residual_before: f64,
    pub base_residual_after: f64,
    /// `sup |ΛF⁰|` over the free cells before and after `h ↦ h e^{Φ₀}`.
    pub tracefree_before: f64,
    pub tracefree_after: f64,
    pub gmres_iterations: usize,
    pub gmres_relative_residual: f64,
    /// `sup |DA₁(0, Φ₀) + ΛF⁰|` on the free cells.
    pub linear_residual: f64,
}

impl ApproxStep {
    pub fn base_contraction(&self) -> f64 {
        if self.base_residual_before > 0.0 {
            self.base_residual_after / self.base_residual_before
        } else {
            0.0
        }
    }

    pub fn fiber_contraction(&self) -> f64 {
        if self.tracefree_before > 0.0 {
            self.tracefree_after / self.tracefree_before
        } else {
            0.0
        }
    }
}

fn sup_tracefree(theta: &[DMatrix<C64>], mask: &[bool]) -> f64 {
    theta.iter().zip(mask).filter(|(_, m)| !**m).map(|(t, _)| endo_norm(&tracefree(t))).fold(0.0, f64::max)
}

/// First corrective step: `η₀` with `𝕃ic η₀ = S_B − S̄` and `Φ₀` with
/// `DA₁(0, Φ₀) = −ΛF⁰_h`, together with their one-step effect on both
/// residuals. `h` defaults to the model metric of the bundle.
#[allow(non_snake_case)]
pub fn approx_cscK_step(metric: &MetricField, bundle: &ParabolicBundle, h: Option<&HermitianField>, s_bar: f64, opts: &ApproxOptions) -> Result<ApproxStep> {
    let verdict = stability_check(bundle)?;
    if !verdict.stable || verdict.endomorphism_dimension != Some(1) {
        return Err(Error::Obstruction(format!(
            "the bundle is not stable (margin {:?}); trace-free endomorphisms obstruct the linearized problem",
            verdict.margin_q.map(|q| crate::parabolic_bundles::q_to_string(&q))
        )));
    }
    let grid = FlowGrid::new(metric, opts.nt, opts.ntheta)?;
    let h = match h {
        Some(f) => f.clone(),
        None => HermitianField::from_model(&model_bundle_metric(bundle)?, bundle, &grid),
    };
    let points: Vec<Location> = bundle.points.iter().map(|p| p.at.location()).collect();
    let setup = CorrectionSetup::new(metric, grid, h, &points, opts.delta, opts.fd_eps)?;

    // Base part.
    let disc = &setup.lic.disc;
    let rhs = disc.mean_zero(&metric.scalar.iter().map(|s| s - s_bar).collect::<Vec<_>>());
    let before = disc.l2(&rhs);
    let (eta0, kdim, after) = if rhs.iter().all(|v| v.abs() < 1e-10) {
        (vec![0.0; rhs.len()], 0, before)
    } else {
        let rep = fredholm_solve(metric, &rhs, &opts.fredholm)?;
        if rep.branch == Branch::KernelDetected {
            return Err(Error::Obstruction("the Lichnerowicz operator has a kernel meeting the right-hand side".into()));
        }
        let phi: Vec<f64> = metric.phi.iter().zip(&rep.solution).map(|(a, b)| a + b).collect();
        let mut corrected = build_metric(&metric.surface, metric.kind, Some(phi), metric.delta)?;
        if metric.scale != 1.0 {
            corrected = corrected.scaled(metric.scale)?;
        }
        let res: Vec<f64> = corrected.scalar.iter().map(|s| s - s_bar).collect();
        (rep.solution, rep.kernel_dimension, disc.l2(&res))
    };

    // Fiber part.
    let theta = curvature_contraction(&setup.h, &setup.grid)?.values;
    let tf_before = sup_tracefree(&theta, &setup.mask);
    let fs = solve_fiber_correction(&setup, &theta, opts)?;
    let lin = da1_apply(&setup, &vec![0.0; disc.len()], &fs.phi)?;
    let linear_residual = lin
        .tracefree_part
        .iter()
        .zip(&theta)
        .zip(&setup.mask)
        .filter(|(_, m)| !**m)
        .map(|((d, t), _)| endo_norm(&(d + tracefree(t))))
        .fold(0.0, f64::max);
    let corrected: Vec<DMatrix<C64>> = setup
        .h
        .values
        .par_iter()
        .zip(&fs.phi)
        .map(|(hc, p)| {
            let (s, is) = (hfun(hc, f64::sqrt), hfun(hc, |x| 1.0 / x.sqrt()));
            let b = &s * p * &is;
            &s * hfun(&b, f64::exp) * &s
        })
        .collect();
    let hc = HermitianField { values: corrected, ..setup.h.clone() };
    let tf_after = sup_tracefree(&curvature_contraction(&hc, &setup.grid)?.values, &setup.mask);

    Ok(ApproxStep {
        eta0_sup: eta0.iter().fold(0.0, |a: f64, v| a.max(v.abs())),
        phi0_sup: fs.phi.iter().map(endo_norm).fold(0.0, f64::max),
        eta0,
        phi0: fs.phi,
        s_bar,
        fredholm_kernel_dimension: kdim,
        base_residual_before: before,
        base_residual_after: after,
        tracefree_before: tf_before,
        tracefree_after: tf_after,
        gmres_iterations: fs.iterations,
        gmres_relative_residual: fs.relative_residual,
        linear_residual,
    })
}
