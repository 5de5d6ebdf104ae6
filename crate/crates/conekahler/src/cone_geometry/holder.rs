//! Weighted Hölder norm estimates on cone charts.
//!
//! Each cone point owns a chart: `z` near 0, `1/z` near ∞ and `z - a` on a
//! small disk around an interior point `a`. Distances inside a chart are
//! measured in the W-coordinate `|u|^{β-1}u`. Derivatives come from spectral
//! differentiation in `ζ = log z` and are converted to chart derivatives in
//! closed form, then weighted by powers of `|u|^{1-β}`.

use super::{ConeSurface, Location, C64};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct ProfileSup {
    pub name: String,
    pub sup: f64,
    pub seminorm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChartNorm {
    pub chart: String,
    pub nodes: usize,
    pub sup: f64,
    pub seminorm: f64,
    pub profiles: Vec<ProfileSup>,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormReport {
    pub order: u8,
    pub alpha: f64,
    pub value: f64,
    pub seed: u64,
    pub per_chart: Vec<ChartNorm>,
    /// Largest sup of each weighted profile over all charts.
    pub weighted_profiles: Vec<ProfileSup>,
}

impl NormReport {
    pub fn chart(&self, name: &str) -> Option<&ChartNorm> {
        self.per_chart.iter().find(|c| c.chart == name)
    }
}

#[derive(Debug, Clone, Copy)]
enum ChartKind {
    Finite(C64),
    Infinity,
}

struct Chart {
    name: String,
    kind: ChartKind,
    beta: f64,
    nodes: Vec<usize>,
}

impl Chart {
    fn coord(&self, z: C64) -> C64 {
        match self.kind {
            ChartKind::Finite(a) => z - a,
            ChartKind::Infinity => z.inv(),
        }
    }
    fn w(&self, z: C64) -> C64 {
        let u = self.coord(z);
        let r = u.norm();
        if r == 0.0 {
            u
        } else {
            u * r.powf(self.beta - 1.0)
        }
    }
}

fn charts(surface: &ConeSurface) -> Vec<Chart> {
    let beta_at = |pred: &dyn Fn(&Location) -> bool| {
        surface.points.iter().find(|p| pred(&p.at)).map_or(1.0, |p| p.beta)
    };
    let interior = surface.interior_points();
    let mut disks = Vec::new();
    for (k, p) in interior.iter().enumerate() {
        let a = p.at.as_complex().unwrap();
        let mut r: f64 = 0.5 * a.norm();
        for (l, q) in interior.iter().enumerate() {
            if l != k {
                r = r.min(0.5 * (a - q.at.as_complex().unwrap()).norm());
            }
        }
        r = r.min(0.5);
        disks.push((a, r, p.beta));
    }
    let in_disk = |z: C64| disks.iter().any(|(a, r, _)| (z - a).norm() < *r);
    let (r_in, r_out) = (surface.overlap.0, surface.overlap.1);
    let all: Vec<(usize, C64)> = (0..surface.grid.len()).map(|k| (k, surface.node_z(k))).collect();
    let mut out = vec![
        Chart {
            name: "0".into(),
            kind: ChartKind::Finite(C64::new(0.0, 0.0)),
            beta: beta_at(&|l: &Location| l.is_zero()),
            nodes: all.iter().filter(|(_, z)| z.norm() <= r_out && !in_disk(*z)).map(|(k, _)| *k).collect(),
        },
        Chart {
            name: "inf".into(),
            kind: ChartKind::Infinity,
            beta: beta_at(&|l: &Location| l.is_infinity()),
            nodes: all.iter().filter(|(_, z)| z.norm() >= r_in && !in_disk(*z)).map(|(k, _)| *k).collect(),
        },
    ];
    for (a, r, b) in disks {
        out.push(Chart {
            name: format!("{:.6}{:+.6}i", a.re, a.im),
            kind: ChartKind::Finite(a),
            beta: b,
            nodes: all.iter().filter(|(_, z)| (z - a).norm() < r).map(|(k, _)| *k).collect(),
        });
    }
    out
}

/// Complex ζ-derivatives of a grid function needed for the profiles.
struct Jets {
    f_zeta: Vec<C64>,
    l: Vec<f64>,
    l_zeta: Vec<C64>,
    l_s: Vec<f64>,
    l_zz: Vec<f64>,
}

fn jets(surface: &ConeSurface, f: &[f64]) -> Jets {
    let g = &surface.grid;
    let p: Vec<f64> = (0..g.len()).map(|k| surface.profile.p(surface.node_t(k))).collect();
    let ds = |u: &[f64]| -> Vec<f64> { g.d_t(u).iter().zip(&p).map(|(a, b)| a * b).collect() };
    let fs = ds(f);
    let fth = g.d_theta(f);
    let fss = ds(&fs);
    let fthth = g.d_theta(&fth);
    let l: Vec<f64> = (0..g.len()).map(|k| (fss[k] + fthth[k]) / 4.0).collect();
    let ls = ds(&l);
    let lth = g.d_theta(&l);
    let lss = ds(&ls);
    let lthth = g.d_theta(&lth);
    Jets {
        f_zeta: (0..g.len()).map(|k| C64::new(fs[k], -fth[k]) * 0.5).collect(),
        l_zeta: (0..g.len()).map(|k| C64::new(ls[k], -lth[k]) * 0.5).collect(),
        l_zz: (0..g.len()).map(|k| (lss[k] + lthth[k]) / 4.0).collect(),
        l_s: ls,
        l,
    }
}

const PROFILE_NAMES: [&str; 4] = ["|u|^(1-b)|dF|", "|u|^(2-2b)|ddbarF|", "|u|^(3-3b)|nabla^3 F|", "|u|^(4-4b)|nabla^4 F|"];

/// Weighted derivative profiles at a node in a chart, up to the given order.
fn profiles(chart: &Chart, z: C64, j: &Jets, k: usize, order: u8) -> Vec<f64> {
    let u = chart.coord(z);
    let r = u.norm();
    let b = chart.beta;
    let s = z.norm().ln();
    let e2 = (2.0 * s).exp();
    let (df, uu, du, dbu, ddu) = match chart.kind {
        ChartKind::Finite(_) => {
            let zi = z.inv();
            let lz = j.l_zeta[k];
            (
                j.f_zeta[k] * zi,
                j.l[k] / e2,
                zi * (lz - j.l[k]) / e2,
                zi.conj() * (lz.conj() - j.l[k]) / e2,
                (j.l_zz[k] - j.l_s[k] + j.l[k]) / (e2 * e2),
            )
        }
        ChartKind::Infinity => {
            let lz = j.l_zeta[k];
            (
                -z * j.f_zeta[k],
                j.l[k] * e2,
                -z * e2 * (lz + j.l[k]),
                -z.conj() * e2 * (lz.conj() + j.l[k]),
                (j.l_zz[k] + j.l_s[k] + j.l[k]) * e2 * e2,
            )
        }
    };
    let w = r.powf(1.0 - b);
    let mut out = vec![w * df.norm(), w * w * uu.abs()];
    if order >= 3 {
        let c = 1.0 - b;
        out.push(w.powi(3) * (du + uu * c / u).norm());
        if order >= 4 {
            let t = ddu + dbu * c / u + du * c / u.conj() + c * c * uu / (r * r);
            out.push(w.powi(4) * t.norm());
        }
    }
    out
}

fn sample_pairs(count: usize, seed: u64, neighbors: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = neighbors.to_vec();
    if count < 2 {
        return pairs;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extra = ((count as f64) * (count as f64).ln().max(1.0)).ceil() as usize;
    for _ in 0..extra {
        let a = rng.gen_range(0..count);
        let b = rng.gen_range(0..count);
        if a != b {
            pairs.push((a, b));
        }
    }
    pairs
}

fn quotient(values: &[f64], w: &[C64], pairs: &[(usize, usize)], alpha: f64) -> f64 {
    let mut q: f64 = 0.0;
    for &(a, b) in pairs {
        let d = (w[a] - w[b]).norm();
        if d > 1e-14 {
            q = q.max((values[a] - values[b]).abs() / d.powf(alpha));
        }
    }
    q
}

fn chart_norm(
    surface: &ConeSurface,
    chart: &Chart,
    f: &[f64],
    jets: Option<&Jets>,
    order: u8,
    alpha: f64,
    seed: u64,
) -> ChartNorm {
    let m = surface.m;
    let idx = &chart.nodes;
    let pos: std::collections::HashMap<usize, usize> = idx.iter().enumerate().map(|(a, &k)| (k, a)).collect();
    let mut neighbors = Vec::new();
    for (a, &k) in idx.iter().enumerate() {
        let (i, jj) = (k / m, k % m);
        let right = i * m + (jj + 1) % m;
        if let Some(&b) = pos.get(&right) {
            neighbors.push((a, b));
        }
        if let Some(&b) = pos.get(&((i + 1) * m + jj)) {
            neighbors.push((a, b));
        }
    }
    let pairs = sample_pairs(idx.len(), seed, &neighbors);
    let w: Vec<C64> = idx.iter().map(|&k| chart.w(surface.node_z(k))).collect();
    let vals: Vec<f64> = idx.iter().map(|&k| f[k]).collect();
    let sup = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let seminorm = quotient(&vals, &w, &pairs, alpha);
    let mut profs = Vec::new();
    if let Some(j) = jets {
        let per_node: Vec<Vec<f64>> =
            idx.iter().map(|&k| profiles(chart, surface.node_z(k), j, k, order)).collect();
        let count = per_node.first().map_or(0, |v| v.len());
        for p in 0..count {
            let v: Vec<f64> = per_node.iter().map(|x| x[p]).collect();
            profs.push(ProfileSup {
                name: PROFILE_NAMES[p].into(),
                sup: v.iter().fold(0.0f64, |a, x| a.max(*x)),
                seminorm: quotient(&v, &w, &pairs, alpha),
            });
        }
    }
    let total = sup + seminorm + profs.iter().map(|p| p.sup + p.seminorm).sum::<f64>();
    ChartNorm { chart: chart.name.clone(), nodes: idx.len(), sup, seminorm, profiles: profs, total }
}

/// Estimated weighted Hölder norm of order 0, 2, 3 or 4 with a fixed sampling seed.
pub fn holder_norm(f: &[f64], order: u8, alpha: f64, surface: &ConeSurface) -> Result<NormReport> {
    holder_norm_seeded(f, order, alpha, surface, 0)
}

pub fn holder_norm_seeded(f: &[f64], order: u8, alpha: f64, surface: &ConeSurface, seed: u64) -> Result<NormReport> {
    if ![0u8, 2, 3, 4].contains(&order) {
        return Err(Error::InvalidArgument(format!("order {order} not in {{0,2,3,4}}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("Hölder exponent {alpha} not in (0,1]")));
    }
    if f.len() != surface.grid.len() || f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("function must be finite and match the grid".into()));
    }
    if order >= 3 && (surface.n < 8 || surface.m < 8) {
        return Err(Error::InsufficientResolution(format!(
            "order {order} needs at least 8x8 nodes, grid is {}x{}",
            surface.n, surface.m
        )));
    }
    let j = if order >= 2 { Some(jets(surface, f)) } else { None };
    let mut per_chart = Vec::new();
    for (c, chart) in charts(surface).iter().enumerate() {
        per_chart.push(chart_norm(surface, chart, f, j.as_ref(), order, alpha, seed.wrapping_add(c as u64)));
    }
    let value = per_chart.iter().fold(0.0f64, |a, c| a.max(c.total));
    let mut weighted_profiles: Vec<ProfileSup> = Vec::new();
    for c in &per_chart {
        for (p, prof) in c.profiles.iter().enumerate() {
            if p >= weighted_profiles.len() {
                weighted_profiles.push(prof.clone());
            } else {
                weighted_profiles[p].sup = weighted_profiles[p].sup.max(prof.sup);
                weighted_profiles[p].seminorm = weighted_profiles[p].seminorm.max(prof.seminorm);
            }
        }
    }
    Ok(NormReport { order, alpha, value, seed, per_chart, weighted_profiles })
}

/// Order-0 norm restricted to the overlap annulus, measured in the chart at 0
/// and in the chart at ∞.
pub fn overlap_holder(f: &[f64], alpha: f64, surface: &ConeSurface) -> Result<(f64, f64)> {
    if f.len() != surface.grid.len() {
        return Err(Error::InvalidArgument("function must match the grid".into()));
    }
    let (r_in, r_out) = surface.overlap;
    let mut cs = charts(surface);
    cs.truncate(2);
    let mut out = [0.0; 2];
    for (c, chart) in cs.iter_mut().enumerate() {
        chart.nodes.retain(|&k| {
            let r = surface.node_z(k).norm();
            r >= r_in && r <= r_out
        });
        out[c] = chart_norm(surface, chart, f, None, 0, alpha, 7).total;
    }
    Ok((out[0], out[1]))
}
