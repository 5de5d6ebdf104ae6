//! The projectivized bundle `X = ℙ(E*)` over a marked sphere with the
//! adiabatic metrics `ω_k = k π*ω_B + ω̂_E`.
//!
//! A point of `X` is a base point `z` together with a line in `E*`, stored as
//! a unit vector `v ∈ ℂ^r`; the covector is `ξ = v̄ᵀ`, so `ξ(x) = v*x` in the
//! standard frame. Near such a point `ω_k` has the local potential
//! `k φ_B(z) + log(ξ h⁻¹ ξ*)` in an affine chart of the fiber, and the scalar
//! curvature is evaluated from exact Taylor jets of this potential.

mod correction;
mod fiber;

pub use correction::{approx_cscK_step, da1_apply, ApproxOptions, ApproxStep, CorrectionSetup, Da1Value};
pub use fiber::{dictionary_forward, dictionary_inverse, endo_eigen_dictionary, vertical_operator, FiberGrid};

use crate::cone_geometry::{ConePoint, C64};
use crate::error::{Error, Result};
use crate::jet::{CJet, Jet, JetSpace};
use crate::parabolic_bundles::ModelMetric;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Kähler potential of the base metric in the plane coordinate `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BasePotential {
    /// `|z|²`.
    Flat,
    /// `log(1 + |z|²)`, scalar curvature 2.
    Round,
    /// `β⁻¹ log(1 + |z|^{2β})`, scalar curvature `2β`.
    Football { beta: f64 },
    /// `|z|^{2β}`, the flat cone `β²|z|^{2β−2}|dz|²`.
    FlatCone { beta: f64 },
    /// `log(1+|z|²) + δ Σ_p F_p` with `F_p` the `β_p`-th power of
    /// `|z−p|²/(1+|z|²)`, or of `1/(1+|z|²)` for `p = ∞`.
    OmegaD { points: Vec<ConePoint>, delta: f64 },
}

impl BasePotential {
    fn angles(&self) -> Vec<f64> {
        match self {
            BasePotential::Football { beta } | BasePotential::FlatCone { beta } => vec![*beta],
            BasePotential::OmegaD { points, .. } => points.iter().map(|p| p.beta).collect(),
            _ => vec![],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for b in self.angles() {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidArgument(format!("cone angle {b} not in (0,1)")));
            }
        }
        if let BasePotential::OmegaD { delta, .. } = self {
            if !(*delta >= 0.0 && *delta < 1.0) {
                return Err(Error::InvalidArgument(format!("δ = {delta} not in [0,1)")));
            }
        }
        Ok(())
    }

    /// Whether the potential is singular at `z`.
    pub fn singular_at(&self, z: C64) -> bool {
        match self {
            BasePotential::Football { .. } | BasePotential::FlatCone { .. } => z.norm() < 1e-9,
            BasePotential::OmegaD { points, .. } => points.iter().any(|p| p.at.as_complex().is_some_and(|a| (z - a).norm() < 1e-9)),
            _ => false,
        }
    }

    pub fn potential_jet(&self, x: &Jet, y: &Jet) -> Jet {
        let r2 = x * x + y * y;
        match *self {
            BasePotential::Flat => r2,
            BasePotential::Round => r2.add_const(1.0).ln(),
            BasePotential::Football { beta } => r2.powf(beta).add_const(1.0).ln().scale(1.0 / beta),
            BasePotential::FlatCone { beta } => r2.powf(beta),
            BasePotential::OmegaD { ref points, delta } => {
                let n = r2.add_const(1.0);
                let mut phi = n.ln();
                for p in points {
                    let f = match p.at.as_complex() {
                        Some(a) => {
                            let (dx, dy) = (x.add_const(-a.re), y.add_const(-a.im));
                            ((&dx * &dx + &dy * &dy) / &n).powf(p.beta)
                        }
                        None => n.powf(-p.beta),
                    };
                    phi = phi + f.scale(delta);
                }
                phi
            }
        }
    }

    /// Conformal factor `g = ∂∂̄φ_B` and scalar curvature `−g⁻¹∂∂̄ log g` at `z`.
    pub fn metric_and_scalar(&self, z: C64) -> (f64, f64) {
        let sp = JetSpace::new(2, 4);
        let phi = self.potential_jet(&Jet::var(&sp, 0, z.re), &Jet::var(&sp, 1, z.im));
        let g = (phi.diff(0).diff(0) + phi.diff(1).diff(1)).scale(0.25);
        let lg = g.ln();
        let s = -(lg.derivative(&[2, 0]) + lg.derivative(&[0, 2])) / (4.0 * g.value());
        (g.value(), s)
    }
}

/// Hermitian metric on `E` in the standard frame.
#[derive(Debug, Clone)]
pub enum FiberMetric {
    Identity(usize),
    Constant(DMatrix<C64>),
    Model(ModelMetric),
}

impl FiberMetric {
    pub fn rank(&self) -> usize {
        match self {
            FiberMetric::Identity(r) => *r,
            FiberMetric::Constant(m) => m.nrows(),
            FiberMetric::Model(m) => m.rank(),
        }
    }

    pub fn eval(&self, z: C64) -> DMatrix<C64> {
        match self {
            FiberMetric::Identity(r) => DMatrix::identity(*r, *r),
            FiberMetric::Constant(m) => m.clone(),
            FiberMetric::Model(m) => m.eval(z),
        }
    }

    fn eval_jet(&self, x: &Jet, y: &Jet) -> Vec<Vec<CJet>> {
        let sp = &x.space;
        let r = self.rank();
        match self {
            FiberMetric::Identity(_) => (0..r)
                .map(|i| (0..r).map(|j| CJet::constant(sp, if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
                .collect(),
            FiberMetric::Constant(m) => {
                (0..r).map(|i| (0..r).map(|j| CJet::constant(sp, m[(i, j)].re, m[(i, j)].im)).collect()).collect()
            }
            FiberMetric::Model(m) => m.eval_jet(x, y),
        }
    }

    /// `ΛF` at `z` for the base conformal factor `g`.
    pub fn mean_curvature(&self, z: C64, g: f64) -> DMatrix<C64> {
        match self {
            FiberMetric::Model(m) => m.mean_curvature(z, g),
            _ => DMatrix::zeros(self.rank(), self.rank()),
        }
    }

    pub fn singular_at(&self, z: C64) -> bool {
        match self {
            FiberMetric::Model(m) => m.marked_points().iter().any(|p| match p {
                Some(a) => (z - a).norm() < 1e-9,
                None => false,
            }),
            _ => false,
        }
    }

    fn validate(&self) -> Result<()> {
        if let FiberMetric::Constant(m) = self {
            let herm = (m - m.adjoint()).norm() <= 1e-12 * (1.0 + m.norm());
            if !m.is_square() || !herm || nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.min() <= 0.0 {
                return Err(Error::InvalidArgument("constant fiber metric must be positive hermitian".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuledPoint {
    pub base_point: C64,
    /// Unit vector `v`; the point of `ℙ(E*)` is the covector `v*`.
    pub fiber_direction: Vec<C64>,
}

impl RuledPoint {
    pub fn new(base_point: C64, v: &[C64]) -> Result<RuledPoint> {
        let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) || !base_point.re.is_finite() || !base_point.im.is_finite() {
            return Err(Error::InvalidArgument("fiber direction must be a finite nonzero vector".into()));
        }
        Ok(RuledPoint { base_point, fiber_direction: v.iter().map(|c| c / n).collect() })
    }
}

#[derive(Debug, Clone)]
pub struct AdiabaticMetric {
    pub k: f64,
    pub base: BasePotential,
    pub fiber: FiberMetric,
}

impl AdiabaticMetric {
    pub fn new(k: f64, base: BasePotential, fiber: FiberMetric) -> Result<AdiabaticMetric> {
        if !(k >= 1.0 && k.is_finite()) {
            return Err(Error::InvalidArgument(format!("adiabatic parameter {k} must be at least 1")));
        }
        base.validate()?;
        fiber.validate()?;
        Ok(AdiabaticMetric { k, base, fiber })
    }
}

/// `ĥ(v, w)(ξ) = ξ(v) conj(ξ(w)) / |ξ|²_{h*}` with `|ξ|²_{h*} = ξ h⁻¹ ξ*`.
pub fn fubini_study_lift(h: &DMatrix<C64>, v: &[C64], w: &[C64], xi: &[C64]) -> Result<C64> {
    let r = h.nrows();
    if v.len() != r || w.len() != r || xi.len() != r || !h.is_square() {
        return Err(Error::InvalidArgument("dimensions do not match the metric".into()));
    }
    if xi.iter().all(|c| c.norm() == 0.0) {
        return Err(Error::InvalidArgument("covector must be nonzero".into()));
    }
    let hinv = h.clone().try_inverse().ok_or_else(|| Error::InvalidArgument("metric is singular".into()))?;
    let apply = |u: &[C64]| -> C64 { xi.iter().zip(u).map(|(a, b)| a * b).sum() };
    let mut norm = C64::new(0.0, 0.0);
    for i in 0..r {
        for j in 0..r {
            norm += xi[i] * hinv[(i, j)] * xi[j].conj();
        }
    }
    Ok(apply(v) * apply(w).conj() / norm.re)
}

/// `∂_a ∂_b̄ f` for holomorphic coordinates `a, b` with real parts `2a` and imaginary parts `2a+1`.
fn ddbar(f: &Jet, a: usize, b: usize) -> CJet {
    let (xa, ya, xb, yb) = (2 * a, 2 * a + 1, 2 * b, 2 * b + 1);
    let re = (f.diff(xa).diff(xb) + f.diff(ya).diff(yb)).scale(0.25);
    let im = (f.diff(xa).diff(yb) - f.diff(ya).diff(xb)).scale(0.25);
    CJet { re, im }
}

/// Local potential of `ω_k` in the variables `(Re z, Im z, Re w, Im w)`.
fn potential(metric: &AdiabaticMetric, p: &RuledPoint, sp: &std::sync::Arc<JetSpace>) -> Jet {
    let z = p.base_point;
    let x = Jet::var(sp, 0, z.re);
    let y = Jet::var(sp, 1, z.im);
    let h = metric.fiber.eval_jet(&x, &y);
    // h⁻¹ by the adjugate.
    let det = h[0][0].mul(&h[1][1]).sub(&h[0][1].mul(&h[1][0]));
    let di = det.recip();
    let hinv = [
        [h[1][1].mul(&di), h[0][1].mul(&di).scale_c(-1.0, 0.0)],
        [h[1][0].mul(&di).scale_c(-1.0, 0.0), h[0][0].mul(&di)],
    ];
    // Affine chart of the covector ξ = v̄ᵀ on the larger component.
    let xi: Vec<C64> = p.fiber_direction.iter().map(|c| c.conj()).collect();
    let (lead, other) = if xi[0].norm() >= xi[1].norm() { (0, 1) } else { (1, 0) };
    let w0 = xi[other] / xi[lead];
    let mut comps = [CJet::constant(sp, 0.0, 0.0), CJet::constant(sp, 0.0, 0.0)];
    comps[lead] = CJet::constant(sp, 1.0, 0.0);
    comps[other] = CJet { re: Jet::var(sp, 2, w0.re), im: Jet::var(sp, 3, w0.im) };
    let mut norm = CJet::constant(sp, 0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            norm = norm.add(&comps[i].mul(&hinv[i][j]).mul(&comps[j].conj()));
        }
    }
    metric.base.potential_jet(&x, &y).scale(metric.k) + norm.re.ln()
}

/// Scalar curvature `−tr(G⁻¹ ∂∂̄ log det G)` of `ω_k` at `p`, rank two only.
pub fn scalar_curvature_at(metric: &AdiabaticMetric, p: &RuledPoint) -> Result<f64> {
    let r = metric.fiber.rank();
    if r != 2 || p.fiber_direction.len() != 2 {
        return Err(Error::Unsupported(format!("pointwise scalar curvature needs rank 2, got {r}")));
    }
    if metric.base.singular_at(p.base_point) || metric.fiber.singular_at(p.base_point) {
        return Err(Error::SingularData(format!("base point {} lies on the divisor", p.base_point)));
    }
    let sp = JetSpace::new(4, 4);
    let psi = potential(metric, p, &sp);
    let g = [[ddbar(&psi, 0, 0), ddbar(&psi, 0, 1)], [ddbar(&psi, 1, 0), ddbar(&psi, 1, 1)]];
    let det = &g[0][0].re * &g[1][1].re - g[0][1].norm_sqr();
    if !(det.value() > 0.0) {
        return Err(Error::DegenerateMetric { node: 0, value: det.value() });
    }
    let ld = det.ln();
    let gv = DMatrix::from_fn(2, 2, |a, b| C64::new(g[a][b].re.value(), g[a][b].im.value()));
    let gi = gv.try_inverse().ok_or(Error::DegenerateMetric { node: 0, value: det.value() })?;
    let mut s = C64::new(0.0, 0.0);
    for a in 0..2 {
        for b in 0..2 {
            let l = ddbar(&ld, a, b);
            s -= gi[(b, a)] * C64::new(l.re.value(), l.im.value());
        }
    }
    if !s.re.is_finite() {
        return Err(Error::NumericalFailure("scalar curvature is not finite".into()));
    }
    Ok(s.re)
}

/// `q⁰ = u* h ΛF⁰ u / u* h u` with `u = h⁻¹ v` the vector dual to `ξ = v*`.
pub fn tracefree_fiber_term(h: &DMatrix<C64>, lambda_f: &DMatrix<C64>, v: &[C64]) -> Result<f64> {
    let r = h.nrows();
    let hinv = h.clone().try_inverse().ok_or_else(|| Error::InvalidArgument("metric is singular".into()))?;
    let tf = lambda_f - DMatrix::identity(r, r) * (lambda_f.trace() / r as f64);
    let u = hinv * nalgebra::DVector::from_column_slice(v);
    let num = (u.adjoint() * h * tf * &u)[(0, 0)].re;
    let den = (u.adjoint() * h * &u)[(0, 0)].re;
    Ok(num / den)
}

/// `S0 = r(r−1)` and `S1 = S_B + 2r q⁰`, the first two terms of `S(ω_k)` in powers of `1/k`.
pub fn first_order_terms(r: usize, s_base: f64, h: &DMatrix<C64>, lambda_f: &DMatrix<C64>, v: &[C64]) -> Result<(f64, f64)> {
    let r_f = r as f64;
    Ok((r_f * (r_f - 1.0), s_base + 2.0 * r_f * tracefree_fiber_term(h, lambda_f, v)?))
}

pub fn expansion_terms(base: &BasePotential, fiber: &FiberMetric, p: &RuledPoint) -> Result<(f64, f64)> {
    let z = p.base_point;
    if base.singular_at(z) || fiber.singular_at(z) {
        return Err(Error::SingularData(format!("base point {z} lies on the divisor")));
    }
    if p.fiber_direction.len() != fiber.rank() {
        return Err(Error::InvalidArgument("fiber direction does not match the rank".into()));
    }
    let (g, s_b) = base.metric_and_scalar(z);
    first_order_terms(fiber.rank(), s_b, &fiber.eval(z), &fiber.mean_curvature(z, g), &p.fiber_direction)
}

#[cfg(test)]
mod tests;
