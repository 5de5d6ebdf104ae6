//! Model hermitian metric adapted to a parabolic structure.
//!
//! Away from the marked points the metric is the diagonal one induced from
//! the round metric, `H(z) = diag((1+|z|²)^{-a_i})`. Near a marked point `x` a
//! flag-adapted basis is orthonormalized for `H(x)` and rescaled by `d^{α}`,
//! with `d` the squared chordal distance. Cutoffs of the chordal distance
//! glue the pieces.

use super::{ParabolicBundle, Position};
use crate::cone_geometry::stencil::C64;
use crate::error::{Error, Result};
use crate::jet::{CJet, Jet, JetSpace};
use nalgebra::DMatrix;

#[derive(Debug, Clone)]
struct Local {
    at: Option<C64>,
    /// Inverse of the orthonormalized adapted basis.
    uinv: DMatrix<C64>,
    alphas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ModelMetric {
    pub degrees: Vec<i64>,
    pub rho: f64,
    locals: Vec<Local>,
}

fn smooth_step(x: f64) -> f64 {
    let f = |t: f64| if t <= 0.0 { 0.0 } else { (-1.0 / t).exp() };
    let (a, b) = (f(x), f(1.0 - x));
    a / (a + b)
}

/// Equal to 1 for `s ≤ 1/2`, 0 for `s ≥ 1`.
fn bump(s: f64) -> f64 {
    1.0 - smooth_step(2.0 * s - 1.0)
}

fn smooth_step_jet(x: &Jet) -> Jet {
    let v = x.value();
    if v <= 0.0 {
        return x.scale(0.0);
    }
    if v >= 1.0 {
        return Jet::constant(&x.space, 1.0);
    }
    let a = (-&x.recip()).exp();
    let b = (-&x.scale(-1.0).add_const(1.0).recip()).exp();
    &a / &(&a + &b)
}

fn bump_jet(s: &Jet) -> Jet {
    (-&smooth_step_jet(&s.scale(2.0).add_const(-1.0))).add_const(1.0)
}

fn chordal_sq_jet(x: &Jet, y: &Jet, at: Option<C64>) -> Jet {
    let n = (x * x + y * y).add_const(1.0);
    match at {
        Some(a) => {
            let (dx, dy) = (x.add_const(-a.re), y.add_const(-a.im));
            (&dx * &dx + &dy * &dy) / n.scale(1.0 + a.norm_sqr())
        }
        None => n.recip(),
    }
}

fn chordal_sq(z: C64, at: Option<C64>) -> f64 {
    let n = 1.0 + z.norm_sqr();
    match at {
        Some(x) => (z - x).norm_sqr() / (n * (1.0 + x.norm_sqr())),
        None => 1.0 / n,
    }
}

/// Model metric with cutoff radius 0.35 in chordal distance.
pub fn model_bundle_metric(b: &ParabolicBundle) -> Result<ModelMetric> {
    ModelMetric::new(b, 0.35)
}

impl ModelMetric {
    pub fn new(b: &ParabolicBundle, rho: f64) -> Result<ModelMetric> {
        if !(rho > 0.0 && rho < 0.5) {
            return Err(Error::InvalidArgument("cutoff radius must lie in (0, 1/2)".into()));
        }
        let r = b.rank;
        let mut locals = Vec::new();
        for p in &b.points {
            let (at, gram): (Option<C64>, Vec<f64>) = match &p.at {
                Position::Finite(x) => {
                    let xv = super::q_to_f64(x);
                    (Some(C64::new(xv, 0.0)), b.degrees.iter().map(|&a| (1.0 + xv * xv).powi(-a as i32)).collect())
                }
                Position::Infinity => (None, vec![1.0; r]),
            };
            // Gram-Schmidt of the adapted basis for the diagonal inner product `gram`.
            let mut u: Vec<Vec<C64>> = Vec::new();
            for v in &p.basis {
                let mut w: Vec<C64> = v.iter().map(|c| C64::new(super::q_to_f64(c), 0.0)).collect();
                for e in &u {
                    let ip: C64 = (0..r).map(|i| e[i].conj() * w[i] * gram[i]).sum();
                    for i in 0..r {
                        w[i] -= e[i] * ip;
                    }
                }
                let nrm = (0..r).map(|i| w[i].norm_sqr() * gram[i]).sum::<f64>().sqrt();
                u.push(w.iter().map(|c| c / nrm).collect());
            }
            let umat = DMatrix::from_fn(r, r, |i, k| u[k][i]);
            let uinv = umat
                .try_inverse()
                .ok_or_else(|| Error::NumericalFailure("adapted basis is numerically singular".into()))?;
            let alphas = (0..r).map(|k| super::q_to_f64(&p.vector_weight(k))).collect();
            locals.push(Local { at, uinv, alphas });
        }
        Ok(ModelMetric { degrees: b.degrees.clone(), rho, locals })
    }

    pub fn rank(&self) -> usize {
        self.degrees.len()
    }

    /// Finite marked points of the structure; `None` stands for ∞.
    pub fn marked_points(&self) -> Vec<Option<C64>> {
        self.locals.iter().map(|l| l.at).collect()
    }

    fn background(&self, z: C64) -> DMatrix<C64> {
        let n = 1.0 + z.norm_sqr();
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.rank(),
            self.degrees.iter().map(|&a| C64::new(n.powi(-a as i32), 0.0)),
        ))
    }

    fn local(&self, l: &Local, z: C64, d: f64) -> DMatrix<C64> {
        let r = self.rank();
        let n = 1.0 + z.norm_sqr();
        let dd = DMatrix::from_fn(r, r, |i, j| if i == j { C64::new(d.powf(l.alphas[i]), 0.0) } else { C64::new(0.0, 0.0) });
        let core = l.uinv.adjoint() * dd * &l.uinv;
        // Diagonal rescaling, including the change of frame at ∞.
        let s: Vec<C64> = match l.at {
            Some(x) => {
                let nx = 1.0 + x.norm_sqr();
                self.degrees.iter().map(|&a| C64::new((nx / n).powf(a as f64 / 2.0), 0.0)).collect()
            }
            None => self
                .degrees
                .iter()
                .map(|&a| {
                    let sf = (z.norm_sqr() / n).powf(a as f64 / 2.0);
                    z.powi(-a as i32) * sf
                })
                .collect(),
        };
        DMatrix::from_fn(r, r, |i, j| s[i].conj() * core[(i, j)] * s[j])
    }

    /// Matrix of the metric in the standard frame, `⟨ξ,η⟩ = η* h ξ`.
    pub fn eval(&self, z: C64) -> DMatrix<C64> {
        let weights: Vec<f64> = self.locals.iter().map(|l| bump(chordal_sq(z, l.at).sqrt() / self.rho)).collect();
        let total: f64 = weights.iter().sum();
        let scale = if total > 1.0 { 1.0 / total } else { 1.0 };
        let mut h = self.background(z) * C64::new(1.0 - total * scale, 0.0);
        for (l, &w) in self.locals.iter().zip(&weights) {
            if w > 0.0 {
                h += self.local(l, z, chordal_sq(z, l.at)) * C64::new(w * scale, 0.0);
            }
        }
        h
    }

    /// Taylor jet of every entry of [`ModelMetric::eval`] at the point `(x, y)`
    /// of the jets' expansion.
    pub fn eval_jet(&self, x: &Jet, y: &Jet) -> Vec<Vec<CJet>> {
        let r = self.rank();
        let sp = &x.space;
        let n = (x * x + y * y).add_const(1.0);
        let zero = CJet::constant(sp, 0.0, 0.0);
        let ds: Vec<Jet> = self.locals.iter().map(|l| chordal_sq_jet(x, y, l.at)).collect();
        let weights: Vec<Jet> = ds.iter().map(|d| bump_jet(&d.sqrt().scale(1.0 / self.rho))).collect();
        let mut total = Jet::constant(sp, 0.0);
        for w in &weights {
            total = total + w;
        }
        let scale = if total.value() > 1.0 { total.recip() } else { Jet::constant(sp, 1.0) };
        let rest = (-&(&total * &scale)).add_const(1.0);
        let mut h = vec![vec![zero.clone(); r]; r];
        for (i, &a) in self.degrees.iter().enumerate() {
            h[i][i] = CJet::real(&n.powf(-a as f64) * &rest);
        }
        let z = CJet { re: x.clone(), im: y.clone() };
        for ((l, w), d) in self.locals.iter().zip(&weights).zip(&ds) {
            if w.c.iter().all(|v| *v == 0.0) {
                continue;
            }
            let dpow: Vec<Jet> = l.alphas.iter().map(|&al| if al == 0.0 { Jet::constant(sp, 1.0) } else { d.powf(al) }).collect();
            let s: Vec<CJet> = match l.at {
                Some(xp) => {
                    let nx = 1.0 + xp.norm_sqr();
                    self.degrees.iter().map(|&a| CJet::real(n.recip().scale(nx).powf(a as f64 / 2.0))).collect()
                }
                None => self
                    .degrees
                    .iter()
                    .map(|&a| {
                        let sf = (&(x * x + y * y) / &n).powf(a as f64 / 2.0);
                        z.powi(-a).scale_r(&sf)
                    })
                    .collect(),
            };
            let ws = w * &scale;
            for i in 0..r {
                for j in 0..r {
                    // core_ij = Σ_k conj(uinv_ki) d^{α_k} uinv_kj
                    let mut core = zero.clone();
                    for (k, dk) in dpow.iter().enumerate() {
                        let c = l.uinv[(k, i)].conj() * l.uinv[(k, j)];
                        core = core.add(&CJet::real(dk.clone()).scale_c(c.re, c.im));
                    }
                    let term = s[i].conj().mul(&core).mul(&s[j]).scale_r(&ws);
                    h[i][j] = h[i][j].add(&term);
                }
            }
        }
        h
    }

    /// `G = −∂∂̄h + ∂̄h h⁻¹ ∂h`, so that the mean curvature endomorphism is `h⁻¹G/g`.
    pub fn curvature_form(&self, z: C64) -> (DMatrix<C64>, DMatrix<C64>) {
        let r = self.rank();
        let sp = JetSpace::new(2, 2);
        let e = self.eval_jet(&Jet::var(&sp, 0, z.re), &Jet::var(&sp, 1, z.im));
        let d = |j: &CJet, a: [usize; 2]| C64::new(j.re.derivative(&a), j.im.derivative(&a));
        let mut h = DMatrix::zeros(r, r);
        let (mut hz, mut hzb, mut hzzb) = (h.clone(), h.clone(), h.clone());
        for i in 0..r {
            for k in 0..r {
                let j = &e[i][k];
                let (fx, fy) = (d(j, [1, 0]), d(j, [0, 1]));
                h[(i, k)] = d(j, [0, 0]);
                hz[(i, k)] = (fx - C64::i() * fy) * 0.5;
                hzb[(i, k)] = (fx + C64::i() * fy) * 0.5;
                hzzb[(i, k)] = (d(j, [2, 0]) + d(j, [0, 2])) * 0.25;
            }
        }
        let hinv = h.clone().try_inverse().unwrap_or_else(|| DMatrix::from_element(r, r, C64::new(f64::NAN, 0.0)));
        let g = -hzzb + hzb * &hinv * hz;
        (h, g)
    }

    /// Mean curvature endomorphism `ΛF` for the base conformal factor `g` at `z`.
    pub fn mean_curvature(&self, z: C64, g: f64) -> DMatrix<C64> {
        let (h, gm) = self.curvature_form(z);
        let hinv = h.try_inverse().unwrap_or_else(|| DMatrix::from_element(self.rank(), self.rank(), C64::new(f64::NAN, 0.0)));
        hinv * gm / C64::new(g, 0.0)
    }

    /// `tr(h⁻¹G)`: integrating `2·tr(h⁻¹G) dx dy` over the plane gives `2π·pardeg`.
    pub fn curvature_density(&self, z: C64) -> f64 {
        let (h, gm) = self.curvature_form(z);
        match h.try_inverse() {
            Some(hi) => (hi * gm).trace().re,
            None => f64::NAN,
        }
    }
}
