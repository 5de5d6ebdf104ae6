//! Fourth-order linear theory on a cone surface: Laplace, K-bi-Laplace and
//! Lichnerowicz solves, the continuity path, and numerical kernel detection.
//!
//! On a curve the Lichnerowicz operator is `Lic u = Δ²u + SΔu`.

pub mod discrete;

pub use discrete::{Block, Discretization, Layout};

use crate::cone_geometry::{holder_norm, MetricField, NormReport};
use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Laplace,
    BilapK,
    Lichnerowicz,
    PathTK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    UniqueSolution,
    KernelDetected,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub residual_sup: f64,
    pub residual_l2: f64,
    pub kernel_basis: Vec<Vec<f64>>,
    pub kernel_dimension: usize,
    pub branch: Branch,
    pub norm_check: Option<NormReport>,
    pub k_used: Option<f64>,
    pub c_p: Option<f64>,
    /// Smallest singular values of the preconditioned operator (relative to the largest).
    pub smallest_singular: Vec<f64>,
}

/// A block-diagonal discrete operator on grid functions.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub kind: OperatorKind,
    pub k: f64,
    pub t: f64,
    pub disc: Discretization,
    pub matrices: Vec<DMatrix<f64>>,
}

impl DiscreteOperator {
    pub fn new(disc: Discretization, kind: OperatorKind, k: f64, t: f64) -> DiscreteOperator {
        let matrices = disc
            .blocks
            .par_iter()
            .map(|b| {
                let l = b.laplacian();
                let l2 = &l * &l;
                let sl = DMatrix::from_diagonal(&b.scalar) * &l;
                match kind {
                    OperatorKind::Laplace => l,
                    OperatorKind::BilapK => l2 - &l * k,
                    OperatorKind::Lichnerowicz => l2 + sl,
                    OperatorKind::PathTK => l2 + sl * t - &l * k,
                }
            })
            .collect();
        DiscreteOperator { kind, k, t, disc, matrices }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let parts = self.disc.split(u);
        let out: Vec<DVector<f64>> = self.matrices.iter().zip(&parts).map(|(a, x)| a * x).collect();
        self.disc.join(&out)
    }

    /// Solves `Op u = f` on mean-zero functions.
    pub fn solve_mean_zero(&self, f: &[f64]) -> Result<Vec<f64>> {
        let parts = self.disc.split(f);
        let out: Result<Vec<DVector<f64>>> = self
            .disc
            .blocks
            .par_iter()
            .zip(self.matrices.par_iter())
            .zip(parts.par_iter())
            .map(|((b, a), x)| {
                let r = Restriction::new(b);
                let op = r.restrict(a);
                let y = op
                    .lu()
                    .solve(&r.forward(x))
                    .ok_or_else(|| Error::NumericalFailure("restricted operator is singular".into()))?;
                Ok(r.back(&y))
            })
            .collect();
        Ok(self.disc.join(&out?))
    }
}

/// Mass-weighted coordinates restricted to the complement of the constants.
struct Restriction {
    sqrt_mass: DVector<f64>,
    z: DMatrix<f64>,
}

impl Restriction {
    fn new(b: &Block) -> Restriction {
        let n = b.dim();
        let sqrt_mass = b.mass.map(f64::sqrt);
        let z = match &b.constants {
            None => DMatrix::identity(n, n),
            Some(c) => {
                let mut e = c.component_mul(&sqrt_mass);
                e /= e.norm();
                // Householder reflection sending e to the first basis vector.
                let mut v = e.clone();
                v[0] -= 1.0;
                let h = if v.norm() < 1e-14 {
                    DMatrix::identity(n, n)
                } else {
                    let v = &v / v.norm();
                    DMatrix::identity(n, n) - &v * v.transpose() * 2.0
                };
                h.columns(1, n - 1).into_owned()
            }
        };
        Restriction { sqrt_mass, z }
    }
    fn restrict(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let mut w = a.clone();
        for i in 0..n {
            for j in 0..n {
                w[(i, j)] *= self.sqrt_mass[i] / self.sqrt_mass[j];
            }
        }
        self.z.transpose() * w * &self.z
    }
    fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        self.z.transpose() * x.component_mul(&self.sqrt_mass)
    }
    fn back(&self, y: &DVector<f64>) -> DVector<f64> {
        (&self.z * y).component_div(&self.sqrt_mass)
    }
}

fn check_mean_zero(disc: &Discretization, f: &[f64]) -> Result<()> {
    if f.len() != disc.len() || f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("right-hand side must be finite and match the grid".into()));
    }
    let mean = disc.integrate(f);
    let scale: f64 = disc.node_mass.iter().zip(f).map(|(w, v)| w * v.abs()).sum::<f64>() + 1e-300;
    if mean.abs() > 1e-8 * scale.max(1e-12) {
        return Err(Error::IncompatibleData(format!("right-hand side has integral {mean:e}, expected 0")));
    }
    Ok(())
}

fn residuals(disc: &Discretization, r: &[f64]) -> (f64, f64) {
    (r.iter().fold(0.0f64, |a, v| a.max(v.abs())), disc.l2(r))
}

/// Nonzero eigenvalues of `-Δ` in ascending order (constants excluded).
pub fn laplace_eigenvalues(disc: &Discretization, count: usize) -> Result<Vec<f64>> {
    let per: Result<Vec<Vec<f64>>> = disc
        .blocks
        .par_iter()
        .map(|b| {
            let (vals, _) = b.eigen()?;
            Ok(if b.constants.is_some() { vals[1..].to_vec() } else { vals })
        })
        .collect();
    let mut all: Vec<f64> = per?.into_iter().flatten().collect();
    all.sort_by(f64::total_cmp);
    all.truncate(count);
    Ok(all)
}

/// `C_P = 1/√λ₁`.
pub fn poincare_constant(metric: &MetricField) -> Result<f64> {
    let disc = Discretization::new(metric)?;
    poincare_from(&disc)
}

pub fn poincare_from(disc: &Discretization) -> Result<f64> {
    let l1 = laplace_eigenvalues(disc, 1)?[0];
    if !(l1 > 0.0) {
        return Err(Error::NumericalFailure(format!("first nonzero eigenvalue is {l1}")));
    }
    Ok(1.0 / l1.sqrt())
}

fn order2_norm(metric: &MetricField, u: &[f64]) -> Option<NormReport> {
    holder_norm(u, 2, 0.5, &metric.surface).ok()
}

/// Solves `Δu = f` for mean-zero `u`.
pub fn solve_laplace(metric: &MetricField, f: &[f64]) -> Result<SolveReport> {
    let disc = Discretization::new(metric)?;
    check_mean_zero(&disc, f)?;
    let u = disc.map_blocks(f, |b, x| Ok(b.project_mean_zero(&b.solve_poisson(x)?)))?;
    let lu = disc.apply_laplacian(&u);
    let r: Vec<f64> = lu.iter().zip(f).map(|(a, b)| a - b).collect();
    let (rs, rl) = residuals(&disc, &r);
    Ok(SolveReport {
        norm_check: order2_norm(metric, &u),
        solution: u,
        residual_sup: rs,
        residual_l2: rl,
        kernel_basis: vec![],
        kernel_dimension: 0,
        branch: Branch::UniqueSolution,
        k_used: None,
        c_p: None,
        smallest_singular: vec![],
    })
}

/// Positive definiteness of the discrete form `B^K(u,u) = ∫(Δu)² + K|∇u|²` on mean-zero functions.
pub fn bk_form_positive(disc: &Discretization, k: f64) -> bool {
    disc.blocks.par_iter().all(|b| {
        let minv = DMatrix::from_diagonal(&b.mass.map(|v| 1.0 / v));
        let mut form = &b.a * minv * &b.a + &b.a * k;
        if let Some(mv) = b.mean_vector() {
            let scale = form.diagonal().max().max(1.0) / mv.norm_squared();
            form += &mv * mv.transpose() * scale;
        }
        Cholesky::new((&form + form.transpose()) * 0.5).is_some()
    })
}

/// Solves `Δ²u - KΔu = f` as `(Δ - K)w = f`, `Δu = w`.
pub fn solve_k_bilaplacian(metric: &MetricField, k: f64, f: &[f64]) -> Result<SolveReport> {
    let disc = Discretization::new(metric)?;
    let cp = poincare_from(&disc)?;
    solve_k_bilaplacian_with(metric, &disc, cp, k, f)
}

pub fn solve_k_bilaplacian_with(
    metric: &MetricField,
    disc: &Discretization,
    cp: f64,
    k: f64,
    f: &[f64],
) -> Result<SolveReport> {
    if !(k > cp + 1.0) {
        return Err(Error::CoercivityViolation { k, bound: cp + 1.0 });
    }
    check_mean_zero(disc, f)?;
    if !bk_form_positive(disc, k) {
        return Err(Error::DiscretizationFailure("discrete B^K form is indefinite".into()));
    }
    let u = disc.map_blocks(f, |b, x| {
        let w = b.solve_shifted(k, x)?;
        Ok(b.project_mean_zero(&b.solve_poisson(&b.project_mean_zero(&w))?))
    })?;
    let lu = disc.apply_laplacian(&u);
    let llu = disc.apply_laplacian(&lu);
    let r: Vec<f64> = (0..u.len()).map(|i| llu[i] - k * lu[i] - f[i]).collect();
    let (rs, rl) = residuals(disc, &r);
    Ok(SolveReport {
        norm_check: order2_norm(metric, &lu),
        solution: u,
        residual_sup: rs,
        residual_l2: rl,
        kernel_basis: vec![],
        kernel_dimension: 0,
        branch: Branch::UniqueSolution,
        k_used: Some(k),
        c_p: Some(cp),
        smallest_singular: vec![],
    })
}

pub fn assemble_lichnerowicz(metric: &MetricField) -> Result<DiscreteOperator> {
    if metric.scalar.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularData("scalar curvature is not finite".into()));
    }
    Ok(DiscreteOperator::new(Discretization::new(metric)?, OperatorKind::Lichnerowicz, 0.0, 1.0))
}

/// `Δ²u + t·SΔu - KΔu`.
pub fn continuity_path_apply(metric: &MetricField, k: f64, t: f64, u: &[f64]) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("path parameter {t} not in [0,1]")));
    }
    let disc = Discretization::new(metric)?;
    if u.len() != disc.len() {
        return Err(Error::InvalidArgument("grid function does not match the grid".into()));
    }
    Ok(DiscreteOperator::new(disc, OperatorKind::PathTK, k, t).apply(u))
}

/// Solves `L_t^K u = f` on mean-zero functions.
pub fn solve_continuity_path(metric: &MetricField, k: f64, t: f64, f: &[f64]) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("path parameter {t} not in [0,1]")));
    }
    let disc = Discretization::new(metric)?;
    check_mean_zero(&disc, f)?;
    DiscreteOperator::new(disc, OperatorKind::PathTK, k, t).solve_mean_zero(f)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FredholmOptions {
    /// Relative singular value threshold for a kernel direction.
    pub kernel_threshold: f64,
    /// Second resolution for the kernel vote.
    pub refine: Option<(usize, usize)>,
    /// Chart radius excluded when measuring `sup |S|`.
    pub collar: f64,
    /// Multiplicative margin on the K threshold.
    pub k_margin: f64,
}

impl Default for FredholmOptions {
    fn default() -> Self {
        FredholmOptions { kernel_threshold: 1e-6, refine: None, collar: 0.02, k_margin: 1.1 }
    }
}

/// `K = margin · (1 + 2 sup|S| + 3 C_P)`.
pub fn closedness_k(metric: &MetricField, disc: &Discretization, collar: f64, margin: f64) -> Result<(f64, f64)> {
    let cp = poincare_from(disc)?;
    let sup = metric.ricci_sup(collar)?;
    Ok((margin * (1.0 + 2.0 * sup + 3.0 * cp), cp))
}

struct BlockSvd {
    restriction: Restriction,
    u: DMatrix<f64>,
    v_t: DMatrix<f64>,
    sigma: Vec<f64>,
    precond: DMatrix<f64>,
    /// Left singular vectors ordered by ascending singular value, computed
    /// from the transpose so that near-null directions stay accurate.
    left_ascending: Vec<DVector<f64>>,
}

fn preconditioned_svd(disc: &Discretization, k: f64) -> Result<Vec<BlockSvd>> {
    disc.blocks
        .par_iter()
        .map(|b| {
            let l = b.laplacian();
            let l2 = &l * &l;
            let lic = &l2 + DMatrix::from_diagonal(&b.scalar) * &l;
            let p = &l2 - &l * k;
            let r = Restriction::new(b);
            let pr = r.restrict(&p);
            let pinv = pr
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::NumericalFailure("K-bi-Laplacian block is singular".into()))?;
            let t = r.restrict(&lic) * &pinv;
            let svd = t.clone().try_svd(true, true, 1e-15, 10_000).ok_or_else(|| {
                Error::NumericalFailure("singular value decomposition did not converge".into())
            })?;
            let tt = t.transpose().try_svd(false, true, 1e-15, 10_000).ok_or_else(|| {
                Error::NumericalFailure("singular value decomposition did not converge".into())
            })?;
            let vt = tt.v_t.unwrap();
            let mut order: Vec<usize> = (0..tt.singular_values.len()).collect();
            order.sort_by(|&a, &b| tt.singular_values[a].total_cmp(&tt.singular_values[b]));
            let left_ascending = order.iter().map(|&j| vt.row(j).transpose()).collect();
            Ok(BlockSvd {
                left_ascending,
                restriction: r,
                u: svd.u.unwrap(),
                v_t: svd.v_t.unwrap(),
                sigma: svd.singular_values.as_slice().to_vec(),
                precond: pinv,
            })
        })
        .collect()
}

fn kernel_count(svds: &[BlockSvd], threshold: f64) -> (usize, f64, Vec<f64>) {
    let smax = svds.iter().flat_map(|s| s.sigma.iter()).fold(0.0f64, |a, v| a.max(*v));
    let mut all: Vec<f64> = svds.iter().flat_map(|s| s.sigma.iter().map(|v| v / smax)).collect();
    all.sort_by(f64::total_cmp);
    let count = all.iter().filter(|v| **v < threshold).count();
    all.truncate(6);
    (count, smax, all)
}

/// Lichnerowicz solve with kernel detection by the Fredholm alternative.
pub fn fredholm_solve(metric: &MetricField, f: &[f64], opts: &FredholmOptions) -> Result<SolveReport> {
    let disc = Discretization::new(metric)?;
    check_mean_zero(&disc, f)?;
    let (k, cp) = closedness_k(metric, &disc, opts.collar, opts.k_margin)?;
    let svds = preconditioned_svd(&disc, k)?;
    let (count_base, smax, smallest) = kernel_count(&svds, opts.kernel_threshold);
    let (n2, m2) = opts.refine.unwrap_or((metric.surface.n + 4, metric.surface.m + 8));
    let fine = metric.at_resolution(n2, m2)?;
    let fdisc = Discretization::new(&fine)?;
    let (kf, _) = closedness_k(&fine, &fdisc, opts.collar, opts.k_margin)?;
    let (count_fine, _, _) = kernel_count(&preconditioned_svd(&fdisc, kf)?, opts.kernel_threshold);
    let kdim = count_base.min(count_fine);
    let cut = opts.kernel_threshold * smax;

    // Order all singular triplets to pick the kdim smallest as the kernel.
    let mut triplets: Vec<(f64, usize, usize)> = Vec::new();
    for (bi, s) in svds.iter().enumerate() {
        for (j, v) in s.sigma.iter().enumerate() {
            triplets.push((*v, bi, j));
        }
    }
    triplets.sort_by(|a, b| a.0.total_cmp(&b.0));
    let kernel_set: Vec<(usize, usize)> = triplets.iter().take(kdim).map(|t| (t.1, t.2)).collect();
    let parts = disc.split(f);
    let mut sol_parts = Vec::with_capacity(svds.len());
    let mut coker_norm = 0.0;
    let mut f_proj_parts = Vec::with_capacity(svds.len());
    for (bi, s) in svds.iter().enumerate() {
        let r = &s.restriction;
        let fy = r.forward(&parts[bi]);
        let mut y = DVector::zeros(fy.len());
        let mut fp = fy.clone();
        let in_kernel = kernel_set.iter().filter(|e| e.0 == bi).count();
        for w in s.left_ascending.iter().take(in_kernel) {
            let c = w.dot(&fy);
            fp -= w * c;
            coker_norm += c * c;
        }
        for j in 0..s.sigma.len() {
            if kernel_set.contains(&(bi, j)) || s.sigma[j] < cut * 1e-3 {
                continue;
            }
            let c = s.u.column(j).dot(&fp);
            y += s.v_t.row(j).transpose() * (c / s.sigma[j]);
        }
        // y lives in the preconditioned range; map back through the K-bi-Laplacian inverse.
        sol_parts.push(r.back(&(&s.precond * y)));
        f_proj_parts.push(r.back(&fp));
    }
    let mut kernel: Vec<Vec<f64>> = Vec::new();
    for &(bi, j) in &kernel_set {
        let s = &svds[bi];
        let y = s.v_t.row(j).transpose();
        let x = s.restriction.back(&(&s.precond * y));
        let mut parts: Vec<DVector<f64>> = disc.blocks.iter().map(|b| DVector::zeros(b.dim())).collect();
        parts[bi] = x;
        let mut v = disc.join(&parts);
        for q in &kernel {
            let c = disc.inner(&v, q);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        let nv = disc.l2(&v);
        v.iter_mut().for_each(|a| *a /= nv);
        kernel.push(v);
    }
    let mut u = disc.join(&sol_parts);
    u = disc.mean_zero(&u);
    for q in &kernel {
        let c = disc.inner(&u, q);
        u.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
    }
    let f_proj = disc.join(&f_proj_parts);
    let lic = DiscreteOperator::new(disc.clone(), OperatorKind::Lichnerowicz, 0.0, 1.0);
    let r: Vec<f64> = lic.apply(&u).iter().zip(&f_proj).map(|(a, b)| a - b).collect();
    let (rs, rl) = residuals(&disc, &r);
    let fnorm = disc.l2(f).max(1e-300);
    let branch = if kdim > 0 && coker_norm.sqrt() > 1e-8 * fnorm {
        Branch::KernelDetected
    } else {
        Branch::UniqueSolution
    };
    let lap_u = disc.apply_laplacian(&u);
    Ok(SolveReport {
        norm_check: order2_norm(metric, &lap_u),
        solution: u,
        residual_sup: rs,
        residual_l2: rl,
        kernel_basis: kernel,
        kernel_dimension: kdim,
        branch,
        k_used: Some(k),
        c_p: Some(cp),
        smallest_singular: smallest,
    })
}
