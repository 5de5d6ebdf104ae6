//! Topological average of the scalar curvature, holomorphy potentials of the
//! Euler field and the (log-)Futaki invariants on a marked sphere.
//!
//! Potentials are taken real: for `V = c·z∂z` the function returned is `u`
//! with `ι_V ω = −i∂̄u`, so the complex potential of `V` is `i·u` and every
//! Futaki value below is the complex one divided by `i`.

use crate::cone_geometry::{ConeSurface, MetricField};
use crate::error::{Error, Result};
use crate::spectral::legendre;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Pairings of a Kähler class with the first Chern classes of `X` and `D`.
/// Pairings carry the factor `2π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KahlerClassData {
    pub total_volume: f64,
    pub c1x_pairing: f64,
    pub c1d_pairing: f64,
    pub n: usize,
    pub beta: f64,
}

impl KahlerClassData {
    /// `ℂℙ¹` in the class of volume `2π`, with `points` marked points of angle `beta`.
    pub fn projective_line(points: usize, beta: f64) -> Result<KahlerClassData> {
        let d = KahlerClassData { total_volume: 2.0 * PI, c1x_pairing: 4.0 * PI, c1d_pairing: 2.0 * PI * points as f64, n: 1, beta };
        d.validate()?;
        Ok(d)
    }

    /// Class of the metrics built on `surface` with overall scale `scale`.
    /// Unequal angles are folded into an effective `β` with the same
    /// divisor term `Σ(1 − β_p)`.
    pub fn for_surface(surface: &ConeSurface, scale: f64) -> Result<KahlerClassData> {
        let count = surface.points.len();
        let beta = if count == 0 {
            1.0
        } else {
            1.0 - surface.points.iter().map(|p| 1.0 - p.beta).sum::<f64>() / count as f64
        };
        let d = KahlerClassData {
            total_volume: 2.0 * PI * scale,
            c1x_pairing: 4.0 * PI,
            c1d_pairing: 2.0 * PI * count as f64,
            n: 1,
            beta,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_volume > 0.0) || !self.total_volume.is_finite() {
            return Err(Error::InvalidArgument(format!("class volume {} must be positive", self.total_volume)));
        }
        if !self.c1x_pairing.is_finite() || !(self.c1d_pairing >= 0.0) || !self.c1d_pairing.is_finite() {
            return Err(Error::InvalidArgument("pairings must be finite and c₁(D)·[ω] nonnegative".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("complex dimension must be positive".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidArgument(format!("angle {} not in (0,1]", self.beta)));
        }
        Ok(())
    }
}

/// `S̄_β = n(2πc₁(X) − (1−β)2πc₁(D))·[ω]^{n−1} / [ω]^n`.
pub fn average_scalar(class: &KahlerClassData) -> Result<f64> {
    class.validate()?;
    let n = class.n as f64;
    Ok(n * (class.c1x_pairing - (1.0 - class.beta) * class.c1d_pairing) / class.total_volume)
}

/// The holomorphic field `scale·z∂z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerField {
    pub scale: f64,
}

impl EulerField {
    pub fn z_dz() -> EulerField {
        EulerField { scale: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HolomorphyPotential {
    /// Values at the grid nodes, mean zero against `ω`.
    pub values: Vec<f64>,
    pub at_zero: f64,
    pub at_infinity: f64,
    /// `sup|u_t + c e^ψ/2| / sup|c e^ψ/2|`, the collocation defect of the equation.
    pub residual: f64,
}

impl HolomorphyPotential {
    fn at_pole(&self, zero: bool) -> f64 {
        if zero {
            self.at_zero
        } else {
            self.at_infinity
        }
    }
}

/// Potential of `V = c·z∂z` for a rotation invariant metric. In the radial
/// variable the equation reads `u_t = −c e^ψ/2`; it is integrated exactly on
/// the Legendre expansion of `e^ψ`.
pub fn holomorphy_potential(metric: &MetricField, field: &EulerField) -> Result<HolomorphyPotential> {
    if !field.scale.is_finite() {
        return Err(Error::InvalidField("non-finite field scale".into()));
    }
    let g = metric.grid();
    if field.scale == 0.0 {
        return Ok(HolomorphyPotential { values: vec![0.0; g.len()], at_zero: 0.0, at_infinity: 0.0, residual: 0.0 });
    }
    if let Some(p) = metric.surface.points.iter().find(|p| !p.at.is_zero() && !p.at.is_infinity()) {
        return Err(Error::InvalidField(format!("z∂z is not tangent to the marked point {:?}", p.at)));
    }
    if !metric.is_radial() {
        return Err(Error::Unsupported("holomorphy potentials need a rotation invariant metric".into()));
    }
    let (n, m) = (g.n, g.m);
    let density: Vec<f64> = (0..n).map(|i| metric.psi[i * m].exp() / 2.0).collect();
    let coef: Vec<f64> = (0..n)
        .map(|k| (2 * k + 1) as f64 / 2.0 * (0..n).map(|i| g.wt[i] * legendre(k, g.t[i]) * density[i]).sum::<f64>())
        .collect();
    // ∫_{-1}^t P_k = (P_{k+1} − P_{k−1})/(2k+1) for k ≥ 1.
    let primitive = |t: f64| -> f64 {
        coef[0] * (t + 1.0) + (1..n).map(|k| coef[k] * (legendre(k + 1, t) - legendre(k - 1, t)) / (2 * k + 1) as f64).sum::<f64>()
    };
    let c = field.scale;
    let radial: Vec<f64> = g.t.iter().map(|&t| -c * primitive(t)).collect();
    let mut values: Vec<f64> = (0..g.len()).map(|k| radial[k / m]).collect();
    let shift = metric.integrate(&values) / metric.volume;
    values.iter_mut().for_each(|v| *v -= shift);

    let dt = g.d_t(&values);
    let scale = density.iter().fold(0.0f64, |a, d| a.max((c * d).abs()));
    let defect = (0..g.len()).fold(0.0f64, |a, k| a.max((dt[k] + c * density[k / m]).abs()));
    Ok(HolomorphyPotential {
        values,
        at_zero: -shift,
        at_infinity: -c * primitive(1.0) - shift,
        residual: defect / scale,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FutakiReport {
    /// `(1/2π)∫u(S − 2πc₁(X)·[ω]^{n−1}/[ω]^n)ω`.
    pub futaki: f64,
    /// `Σ_p (1−β_p)(u(p) − ⨍u)`.
    pub divisor_term: f64,
    pub log_futaki: f64,
    pub potential_residual: f64,
    /// `|∫ω − Vol|/Vol` between the quadrature and the class.
    pub volume_defect: f64,
}

/// Futaki and log-Futaki invariants of `field` by quadrature on `metric`.
pub fn futaki_invariants(metric: &MetricField, field: &EulerField, class: &KahlerClassData) -> Result<FutakiReport> {
    class.validate()?;
    if class.n != 1 {
        return Err(Error::Unsupported("Futaki invariants are implemented on curves".into()));
    }
    let volume_defect = (metric.volume - class.total_volume).abs() / class.total_volume;
    if volume_defect > 1e-6 {
        return Err(Error::IncompatibleData(format!(
            "metric volume {} is not in the class of volume {}",
            metric.volume, class.total_volume
        )));
    }
    let u = holomorphy_potential(metric, field)?;
    let topological = class.c1x_pairing / class.total_volume;
    let weighted: Vec<f64> = u.values.iter().zip(&metric.scalar).map(|(f, s)| f * (s - topological)).collect();
    let futaki = metric.integrate(&weighted) / (2.0 * PI);
    let mean = metric.integrate(&u.values) / class.total_volume;
    let divisor_term: f64 = metric.surface.points.iter().map(|p| (1.0 - p.beta) * (u.at_pole(p.at.is_zero()) - mean)).sum();
    Ok(FutakiReport { futaki, divisor_term, log_futaki: futaki - divisor_term, potential_residual: u.residual, volume_defect })
}

pub fn log_futaki(metric: &MetricField, field: &EulerField, class: &KahlerClassData) -> Result<f64> {
    Ok(futaki_invariants(metric, field, class)?.log_futaki)
}

#[cfg(test)]
mod tests;
