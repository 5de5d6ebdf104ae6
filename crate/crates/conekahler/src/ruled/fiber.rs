//! Functions on a fiber `ℂℙ¹` sampled on the spectral sphere grid.

use crate::cone_geometry::{build_metric, ConeSurface, MetricField, MetricKind, C64};
use crate::elliptic::{laplace_eigenvalues, Discretization};
use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Round fiber with `ω = i∂∂̄ log(1+|w|²)`, nodes labelled by the affine
/// coordinate `w` of the covector `ξ = (1, w)`.
#[derive(Debug, Clone)]
pub struct FiberGrid {
    pub rank: usize,
    pub metric: MetricField,
    pub disc: Discretization,
    /// Unit vectors `v` with `v* ∝ (1, w)` at the nodes.
    pub directions: Vec<[C64; 2]>,
}

impl FiberGrid {
    pub fn new(n: usize, m: usize) -> Result<FiberGrid> {
        if n < 8 || m < 8 {
            return Err(Error::InsufficientResolution(format!("fiber grid {n}×{m} is too coarse")));
        }
        let surf = ConeSurface::new(vec![], n, m)?;
        let metric = build_metric(&surf, MetricKind::ModelOmegaD, None, 0.1)?;
        let disc = Discretization::new(&metric)?;
        let directions = (0..surf.grid.len())
            .map(|k| {
                let w = surf.node_z(k);
                let nrm = (1.0 + w.norm_sqr()).sqrt();
                [C64::new(1.0 / nrm, 0.0), w.conj() / nrm]
            })
            .collect();
        Ok(FiberGrid { rank: 2, metric, disc, directions })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn volume(&self) -> f64 {
        self.disc.volume()
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.disc.inner(f, g)
    }

    /// The lowest `count` nonzero eigenvalues of `Δ_V`.
    pub fn spectrum(&self, count: usize) -> Result<Vec<f64>> {
        laplace_eigenvalues(&self.disc, count)
    }
}

/// `Δ_V f` and `L_V f = Δ_V(Δ_V − r) f`, with `Δ_V` the non-negative fiber Laplacian.
pub fn vertical_operator(f: &[f64], grid: &FiberGrid) -> Result<(Vec<f64>, Vec<f64>)> {
    if f.len() != grid.len() || f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("fiber samples do not match the grid".into()));
    }
    let lap = |u: &[f64]| -> Vec<f64> { grid.disc.apply_laplacian(u).iter().map(|v| -v).collect() };
    let dv = lap(f);
    let shifted: Vec<f64> = dv.iter().zip(f).map(|(a, b)| a - grid.rank as f64 * b).collect();
    let lv = lap(&shifted);
    Ok((dv, lv))
}

fn check_tracefree(phi: &DMatrix<C64>) -> Result<()> {
    let scale = 1.0 + phi.norm();
    if !phi.is_square() || (phi - phi.adjoint()).norm() > 1e-12 * scale || phi.trace().norm() > 1e-12 * scale {
        return Err(Error::InvalidArgument("endomorphism must be hermitian and trace free".into()));
    }
    Ok(())
}

/// `v ↦ v*Φv / |v|²` at one direction.
pub fn dictionary_forward(phi: &DMatrix<C64>, v: &[C64]) -> Result<f64> {
    check_tracefree(phi)?;
    if v.len() != phi.nrows() {
        return Err(Error::InvalidArgument("direction does not match the endomorphism".into()));
    }
    let vv = nalgebra::DVector::from_column_slice(v);
    Ok((vv.adjoint() * phi * &vv)[(0, 0)].re / vv.norm_squared())
}

/// Samples of `v*Φv / |v|²` at every fiber node.
pub fn endo_eigen_dictionary(phi: &DMatrix<C64>, grid: &FiberGrid) -> Result<Vec<f64>> {
    if phi.nrows() != grid.rank {
        return Err(Error::Unsupported(format!("fiber grid has rank {}, endomorphism {}", grid.rank, phi.nrows())));
    }
    grid.directions.iter().map(|v| dictionary_forward(phi, v)).collect()
}

/// Trace-free part of `r(r+1)·avg(f vv*/|v|²)`: the inverse on the image of
/// the dictionary and the orthogonal projection onto it otherwise.
pub fn dictionary_inverse(f: &[f64], grid: &FiberGrid) -> Result<DMatrix<C64>> {
    if f.len() != grid.len() {
        return Err(Error::InvalidArgument("fiber samples do not match the grid".into()));
    }
    let r = grid.rank;
    let mut acc = DMatrix::<C64>::zeros(r, r);
    for ((w, v), fv) in grid.disc.node_mass.iter().zip(&grid.directions).zip(f) {
        let col = nalgebra::DVector::from_column_slice(v);
        acc += &col * col.adjoint() * C64::new(w * fv, 0.0);
    }
    acc *= C64::new((r * (r + 1)) as f64 / grid.volume(), 0.0);
    let tr = acc.trace() / r as f64;
    Ok(acc - DMatrix::identity(r, r) * tr)
}
