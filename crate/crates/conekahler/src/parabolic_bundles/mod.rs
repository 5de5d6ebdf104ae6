//! Parabolic structures on split bundles `⊕ O(a_i)` over the projective line,
//! exact parabolic degrees and slopes, induced structures and a stability
//! oracle, plus the model bundle metric used by the heat flow.
//!
//! Frames. Over `ℂ` the bundle is trivialized by the standard frame `e_i`; at
//! ∞ by `f_i = z^{a_i} e_i`. Flag vectors at a point are written in the frame
//! of that point. A flag is an adapted basis `b_0, …, b_{r-1}` with
//! dimensions `dims[0] = r > dims[1] > …`, where `F^p = span(b_0..b_{dims[p]})`
//! carries weight `weights[p]`.

pub mod model;
pub mod rational;

pub use model::{model_bundle_metric, ModelMetric};
pub use rational::{parse_q, q, q_to_f64, q_to_string, qf, Poly, Q};

use crate::cone_geometry::Location;
use crate::error::{Error, Result};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rational::{floor, intersection_dim, nullspace, rank, solve_columns, span_dim};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub enum Position {
    Finite(Q),
    Infinity,
}

impl Position {
    pub fn location(&self) -> Location {
        match self {
            Position::Finite(x) => Location::finite(q_to_f64(x), 0.0),
            Position::Infinity => Location::Infinity,
        }
    }
    pub fn label(&self) -> String {
        match self {
            Position::Finite(x) => q_to_string(x),
            Position::Infinity => "inf".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicPoint {
    pub at: Position,
    pub basis: Vec<Vec<Q>>,
    pub dims: Vec<usize>,
    pub weights: Vec<Q>,
}

impl ParabolicPoint {
    /// Builds a point from the flag's adapted basis, its dimensions and weights.
    pub fn new(at: Position, basis: Vec<Vec<Q>>, dims: Vec<usize>, weights: Vec<Q>) -> Result<ParabolicPoint> {
        let r = basis.len();
        if r == 0 || basis.iter().any(|v| v.len() != r) {
            return Err(Error::InvalidArgument("flag basis must be r vectors of length r".into()));
        }
        if rank(&basis) != r {
            return Err(Error::InvalidArgument("flag vectors are linearly dependent".into()));
        }
        if dims.first() != Some(&r) || dims.windows(2).any(|w| w[1] >= w[0]) || dims.last() == Some(&0) {
            return Err(Error::InvalidArgument(format!("flag dimensions {dims:?} must start at {r} and strictly decrease")));
        }
        if weights.len() != dims.len()
            || weights.windows(2).any(|w| w[1] <= w[0])
            || weights.iter().any(|w| *w < Q::zero() || *w >= Q::one())
        {
            return Err(Error::InvalidArgument("weights must strictly increase inside [0,1)".into()));
        }
        Ok(ParabolicPoint { at, basis, dims, weights })
    }

    /// Full flag in rank 2 through `line`, completed by a standard basis vector.
    pub fn line_flag(at: Position, line: Vec<Q>, weights: [Q; 2]) -> Result<ParabolicPoint> {
        let r = line.len();
        let mut basis = vec![line];
        for i in 0..r {
            if basis.len() == r {
                break;
            }
            let mut e = vec![Q::zero(); r];
            e[i] = Q::one();
            let mut trial = basis.clone();
            trial.push(e);
            if rank(&trial) == trial.len() {
                basis = trial;
            }
        }
        ParabolicPoint::new(at, basis, vec![r, 1], weights.to_vec())
    }

    pub fn levels(&self) -> usize {
        self.dims.len()
    }

    pub fn level_space(&self, p: usize) -> &[Vec<Q>] {
        &self.basis[..self.dims[p]]
    }

    pub fn multiplicity(&self, p: usize) -> usize {
        self.dims[p] - self.dims.get(p + 1).copied().unwrap_or(0)
    }

    /// Weight attached to the adapted basis vector `j`.
    pub fn vector_weight(&self, j: usize) -> Q {
        let p = (0..self.levels()).rev().find(|&p| self.dims[p] > j).unwrap();
        self.weights[p]
    }

    pub fn max_weight(&self) -> Q {
        *self.weights.last().unwrap()
    }

    /// Coordinates of `v` in the adapted basis.
    fn coords(&self, v: &[Q]) -> Vec<Q> {
        solve_columns(&self.basis, v).expect("flag basis is invertible")
    }

    /// Weight contribution of a subspace: `Σ_p (dim(V∩F^p) − dim(V∩F^{p+1})) α^p`.
    pub fn induced_weights(&self, v: &[Vec<Q>]) -> Vec<Q> {
        let l = self.levels();
        let dims: Vec<usize> =
            (0..l).map(|p| if p == 0 { span_dim(v) } else { intersection_dim(v, self.level_space(p)) }).collect();
        jumps(&dims, &self.weights)
    }

    /// Weights of the quotient by `v`, from the filtration `(F^p + V)/V`.
    pub fn quotient_weights(&self, v: &[Vec<Q>]) -> Vec<Q> {
        let dv = span_dim(v);
        let l = self.levels();
        let dims: Vec<usize> = (0..l)
            .map(|p| {
                let mut all = self.level_space(p).to_vec();
                all.extend_from_slice(v);
                span_dim(&all) - dv
            })
            .collect();
        jumps(&dims, &self.weights)
    }
}

/// Weight `α^p` repeated `dims[p] − dims[p+1]` times.
fn jumps(dims: &[usize], weights: &[Q]) -> Vec<Q> {
    let mut out = Vec::new();
    for p in 0..dims.len() {
        let next = dims.get(p + 1).copied().unwrap_or(0);
        out.extend(std::iter::repeat_n(weights[p], dims[p] - next));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicBundle {
    pub rank: usize,
    pub degrees: Vec<i64>,
    pub points: Vec<ParabolicPoint>,
}

impl ParabolicBundle {
    pub fn new(degrees: Vec<i64>, points: Vec<ParabolicPoint>) -> Result<ParabolicBundle> {
        let rank = degrees.len();
        if rank == 0 {
            return Err(Error::InvalidArgument("rank must be positive".into()));
        }
        for (k, p) in points.iter().enumerate() {
            if p.basis.len() != rank {
                return Err(Error::InvalidArgument(format!("flag at {} has wrong rank", p.at.label())));
            }
            if points[..k].iter().any(|o| o.at == p.at) {
                return Err(Error::InvalidArgument(format!("two flags at {}", p.at.label())));
            }
        }
        Ok(ParabolicBundle { rank, degrees, points })
    }

    pub fn degree(&self) -> i64 {
        self.degrees.iter().sum()
    }

    pub fn max_degree(&self) -> i64 {
        *self.degrees.iter().max().unwrap()
    }

    pub fn min_degree(&self) -> i64 {
        *self.degrees.iter().min().unwrap()
    }
}

/// `par deg(E) = deg(E) + Σ_points Σ_p mult_p α^p` (every marked point has degree one).
pub fn parabolic_degree(b: &ParabolicBundle) -> Q {
    let mut s = q(b.degree() as i128);
    for p in &b.points {
        for l in 0..p.levels() {
            s += p.weights[l] * q(p.multiplicity(l) as i128);
        }
    }
    s
}

pub fn parabolic_slope(b: &ParabolicBundle) -> Q {
    parabolic_degree(b) / q(b.rank as i128)
}

/// Saturated subsheaves of a split bundle in the forms the oracle enumerates.
#[derive(Debug, Clone, PartialEq)]
pub enum SubBundle {
    /// Direct sum of the listed summands.
    Summands(Vec<usize>),
    /// Span of constant vectors, each supported in summands of one common degree.
    Constant(Vec<Vec<Q>>),
    /// Line subbundle `O(d)` given by a section `s` of `E(-d)`.
    Line { degree: i64, section: Vec<Poly> },
    /// Kernel of a surjection `E → O(e)` given by `q_i ∈ H⁰(O(e - a_i))`.
    Kernel { quotient_degree: i64, map: Vec<Poly> },
}

/// Values of polynomial components at a point, in the frame of that point.
fn eval_components(polys: &[Poly], bounds: &[i64], at: &Position) -> Vec<Q> {
    polys
        .iter()
        .zip(bounds)
        .map(|(p, &b)| match at {
            _ if b < 0 => Q::zero(),
            Position::Finite(x) => p.eval(x),
            Position::Infinity => p.coeff(b as usize),
        })
        .collect()
}

fn poly_fits(p: &Poly, bound: i64) -> bool {
    match p.degree() {
        None => true,
        Some(d) => bound >= 0 && d as i64 <= bound,
    }
}

/// No common zero over `ℂ` and no common zero at ∞.
fn saturated(polys: &[Poly], bounds: &[i64]) -> bool {
    let mut g = Poly::zero();
    for p in polys {
        g = g.gcd(p);
    }
    if g.is_zero() || g.degree() != Some(0) {
        return false;
    }
    eval_components(polys, bounds, &Position::Infinity).iter().any(|v| !v.is_zero())
}

impl SubBundle {
    pub fn rank(&self, b: &ParabolicBundle) -> usize {
        match self {
            SubBundle::Summands(s) => s.len(),
            SubBundle::Constant(v) => v.len(),
            SubBundle::Line { .. } => 1,
            SubBundle::Kernel { .. } => b.rank - 1,
        }
    }

    pub fn validate(&self, b: &ParabolicBundle) -> Result<()> {
        let r = b.rank;
        let bad = |m: &str| Err(Error::InvalidArgument(format!("not a subbundle: {m}")));
        match self {
            SubBundle::Summands(s) => {
                if s.is_empty() || s.iter().any(|&i| i >= r) || (1..s.len()).any(|k| s[..k].contains(&s[k])) {
                    return bad("summand indices");
                }
            }
            SubBundle::Constant(vs) => {
                if vs.is_empty() || vs.iter().any(|v| v.len() != r) || rank(vs) != vs.len() {
                    return bad("constant vectors must be independent");
                }
                for v in vs {
                    let degs: Vec<i64> = (0..r).filter(|&i| !v[i].is_zero()).map(|i| b.degrees[i]).collect();
                    if degs.windows(2).any(|w| w[0] != w[1]) {
                        return bad("constant vector mixes summands of different degrees");
                    }
                }
            }
            SubBundle::Line { degree, section } => {
                let bounds: Vec<i64> = b.degrees.iter().map(|a| a - degree).collect();
                if section.len() != r || section.iter().zip(&bounds).any(|(p, &k)| !poly_fits(p, k)) {
                    return bad("section components exceed their degree bounds");
                }
                if !saturated(section, &bounds) {
                    return bad("section has a common zero (not saturated)");
                }
            }
            SubBundle::Kernel { quotient_degree, map } => {
                let bounds: Vec<i64> = b.degrees.iter().map(|a| quotient_degree - a).collect();
                if r < 2 || map.len() != r || map.iter().zip(&bounds).any(|(p, &k)| !poly_fits(p, k)) {
                    return bad("map components exceed their degree bounds");
                }
                if !saturated(map, &bounds) {
                    return bad("map is not surjective");
                }
            }
        }
        Ok(())
    }

    pub fn degree(&self, b: &ParabolicBundle) -> i64 {
        match self {
            SubBundle::Summands(s) => s.iter().map(|&i| b.degrees[i]).sum(),
            SubBundle::Constant(vs) => vs
                .iter()
                .map(|v| b.degrees[(0..b.rank).find(|&i| !v[i].is_zero()).unwrap()])
                .sum(),
            SubBundle::Line { degree, .. } => *degree,
            SubBundle::Kernel { quotient_degree, .. } => b.degree() - quotient_degree,
        }
    }

    /// Spanning vectors of the fiber at a point, in that point's frame.
    pub fn fiber(&self, b: &ParabolicBundle, at: &Position) -> Vec<Vec<Q>> {
        let r = b.rank;
        match self {
            SubBundle::Summands(s) => s
                .iter()
                .map(|&i| {
                    let mut e = vec![Q::zero(); r];
                    e[i] = Q::one();
                    e
                })
                .collect(),
            SubBundle::Constant(vs) => vs.clone(),
            SubBundle::Line { degree, section } => {
                let bounds: Vec<i64> = b.degrees.iter().map(|a| a - degree).collect();
                vec![eval_components(section, &bounds, at)]
            }
            SubBundle::Kernel { quotient_degree, map } => {
                let bounds: Vec<i64> = b.degrees.iter().map(|a| quotient_degree - a).collect();
                let row = eval_components(map, &bounds, at);
                nullspace(&[row], r)
            }
        }
    }

    pub fn describe(&self) -> String {
        let vec_s = |v: &[Q]| format!("({})", v.iter().map(q_to_string).collect::<Vec<_>>().join(", "));
        let poly_s = |p: &Poly| {
            if p.is_zero() {
                "0".to_string()
            } else {
                let terms: Vec<String> = p
                    .0
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| !c.is_zero())
                    .map(|(k, c)| match k {
                        0 => q_to_string(c),
                        1 => format!("{}z", q_to_string(c)),
                        _ => format!("{}z^{k}", q_to_string(c)),
                    })
                    .collect();
                terms.join(" + ")
            }
        };
        match self {
            SubBundle::Summands(s) => format!("summands {s:?}"),
            SubBundle::Constant(vs) => format!("constant span {}", vs.iter().map(|v| vec_s(v)).collect::<Vec<_>>().join(" ")),
            SubBundle::Line { degree, section } => format!(
                "line O({degree}) with section [{}]",
                section.iter().map(poly_s).collect::<Vec<_>>().join("; ")
            ),
            SubBundle::Kernel { quotient_degree, map } => format!(
                "kernel of E -> O({quotient_degree}) by [{}]",
                map.iter().map(poly_s).collect::<Vec<_>>().join("; ")
            ),
        }
    }
}

/// Parabolic structure induced on a subsheaf: weights with multiplicity at each marked point.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedStructure {
    pub rank: usize,
    pub degree: i64,
    pub weights: Vec<Vec<Q>>,
    pub pardeg: Q,
    pub slope: Q,
}

fn structure_from(rank: usize, degree: i64, weights: Vec<Vec<Q>>) -> InducedStructure {
    let pardeg = q(degree as i128) + weights.iter().flatten().copied().sum::<Q>();
    let slope = if rank == 0 { Q::zero() } else { pardeg / q(rank as i128) };
    InducedStructure { rank, degree, weights, pardeg, slope }
}

/// Induced weights on a subsheaf: at each point the largest weight whose flag
/// space contains the corresponding part of the fiber.
pub fn induced_structure(b: &ParabolicBundle, sub: &SubBundle) -> Result<InducedStructure> {
    sub.validate(b)?;
    let w = b.points.iter().map(|p| p.induced_weights(&sub.fiber(b, &p.at))).collect();
    Ok(structure_from(sub.rank(b), sub.degree(b), w))
}

/// Structure induced on the quotient `E/F`.
pub fn quotient_structure(b: &ParabolicBundle, sub: &SubBundle) -> Result<InducedStructure> {
    sub.validate(b)?;
    let w = b.points.iter().map(|p| p.quotient_weights(&sub.fiber(b, &p.at))).collect();
    Ok(structure_from(b.rank - sub.rank(b), b.degree() - sub.degree(b), w))
}

#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    pub family: String,
    pub description: String,
    pub rank: usize,
    pub degree: i64,
    pub pardeg: String,
    pub slope: String,
    pub margin: String,
    #[serde(skip)]
    pub margin_q: Q,
    #[serde(skip)]
    pub sub: SubBundle,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub semistable: bool,
    pub polystable: bool,
    pub pardeg: String,
    pub slope: String,
    /// Minimum of `parμ(E) − parμ(F)` over the candidates; absent in rank one.
    pub margin: Option<String>,
    #[serde(skip)]
    pub margin_q: Option<Q>,
    pub witness: Option<Candidate>,
    /// Dimension of parabolic endomorphisms, computed when stable.
    pub endomorphism_dimension: Option<usize>,
    /// Block decomposition of summand indices realizing polystability.
    pub polystable_blocks: Option<Vec<Vec<usize>>>,
    pub candidates: Vec<Candidate>,
    pub notes: Vec<String>,
}

fn generic_combination(basis: &[Vec<Q>], rng: &mut ChaCha8Rng) -> Vec<Q> {
    let n = basis[0].len();
    let mut v = vec![Q::zero(); n];
    for b in basis {
        let mut c = 0;
        while c == 0 {
            c = rng.gen_range(-9i128..=9);
        }
        for (x, y) in v.iter_mut().zip(b) {
            *x += q(c) * *y;
        }
    }
    v
}

/// Layout of polynomial unknowns: component `i` has `bounds[i] + 1` coefficients.
fn unknown_layout(bounds: &[i64]) -> (Vec<usize>, usize) {
    let mut offs = Vec::new();
    let mut n = 0;
    for &b in bounds {
        offs.push(n);
        n += if b >= 0 { b as usize + 1 } else { 0 };
    }
    (offs, n)
}

fn polys_from(coeffs: &[Q], bounds: &[i64], offs: &[usize]) -> Vec<Poly> {
    bounds
        .iter()
        .zip(offs)
        .map(|(&b, &o)| if b < 0 { Poly::zero() } else { Poly(coeffs[o..o + b as usize + 1].to_vec()).trim() })
        .collect()
}

/// Linear map from unknown coefficients to the values of the components at a point.
fn evaluation_rows(bounds: &[i64], offs: &[usize], n: usize, at: &Position) -> Vec<Vec<Q>> {
    bounds
        .iter()
        .zip(offs)
        .map(|(&b, &o)| {
            let mut row = vec![Q::zero(); n];
            if b >= 0 {
                match at {
                    Position::Finite(x) => {
                        let mut pw = Q::one();
                        for k in 0..=b as usize {
                            row[o + k] = pw;
                            pw *= *x;
                        }
                    }
                    Position::Infinity => row[o + b as usize] = Q::one(),
                }
            }
            row
        })
        .collect()
}

fn mat_mul(a: &[Vec<Q>], b: &[Vec<Q>]) -> Vec<Vec<Q>> {
    a.iter()
        .map(|row| (0..b[0].len()).map(|j| row.iter().zip(b).map(|(x, r)| *x * r[j]).sum()).collect())
        .collect()
}

fn inverse_rows(p: &ParabolicPoint) -> Vec<Vec<Q>> {
    let r = p.basis.len();
    let cols: Vec<Vec<Q>> = (0..r)
        .map(|i| {
            let mut e = vec![Q::zero(); r];
            e[i] = Q::one();
            p.coords(&e)
        })
        .collect();
    (0..r).map(|k| cols.iter().map(|c| c[k]).collect()).collect()
}

fn level_choices(b: &ParabolicBundle, allow_zero: bool) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for p in &b.points {
        let start = if allow_zero { 0 } else { 1 };
        let mut next = Vec::new();
        for c in &out {
            if !allow_zero {
                let mut none = c.clone();
                none.push(usize::MAX);
                next.push(none);
            }
            for l in start..p.levels() {
                let mut v = c.clone();
                v.push(l);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

fn push_candidate(b: &ParabolicBundle, mu: Q, family: &str, sub: SubBundle, out: &mut Vec<Candidate>) {
    if sub.validate(b).is_err() {
        return;
    }
    let s = induced_structure(b, &sub).unwrap();
    if s.rank == 0 || s.rank >= b.rank {
        return;
    }
    let key = (s.rank, s.degree, s.pardeg);
    if out
        .iter()
        .any(|c| c.family == family && (c.rank, c.degree, parse_q(&c.pardeg).unwrap()) == key)
    {
        return;
    }
    let margin = mu - s.slope;
    out.push(Candidate {
        family: family.into(),
        description: sub.describe(),
        rank: s.rank,
        degree: s.degree,
        pardeg: q_to_string(&s.pardeg),
        slope: q_to_string(&s.slope),
        margin: q_to_string(&margin),
        margin_q: margin,
        sub,
    });
}

/// Enumerates the candidate destabilizing subsheaves of a split bundle.
pub fn candidates(b: &ParabolicBundle, seed: u64) -> Vec<Candidate> {
    let r = b.rank;
    let mu = parabolic_slope(b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    // (i) summand sub-collections.
    for mask in 1..(1u32 << r) - 1 {
        let s: Vec<usize> = (0..r).filter(|i| mask & (1 << i) != 0).collect();
        push_candidate(b, mu, "summands", SubBundle::Summands(s), &mut out);
    }
    // (ii) flag spaces extended to constant subbundles inside equal-degree blocks.
    for p in &b.points {
        for l in 1..p.levels() {
            let space = p.level_space(l).to_vec();
            push_candidate(b, mu, "constant_flag", SubBundle::Constant(space.clone()), &mut out);
            if space.len() > 1 {
                for v in &space {
                    push_candidate(b, mu, "constant_flag", SubBundle::Constant(vec![v.clone()]), &mut out);
                }
            }
        }
    }
    // (iii) line subbundles O(d) meeting prescribed flag levels.
    let amax = b.max_degree();
    let sum_top: Q = b.points.iter().map(|p| p.max_weight()).sum();
    let d_lo = (floor(&(mu - sum_top)) as i64).min(amax);
    let inv: Vec<Vec<Vec<Q>>> = b.points.iter().map(inverse_rows).collect();
    for d in d_lo..=amax {
        let bounds: Vec<i64> = b.degrees.iter().map(|a| a - d).collect();
        let (offs, n) = unknown_layout(&bounds);
        if n == 0 {
            continue;
        }
        let evals: Vec<Vec<Vec<Q>>> = b.points.iter().map(|p| evaluation_rows(&bounds, &offs, n, &p.at)).collect();
        for choice in level_choices(b, true) {
            let mut rows = Vec::new();
            for (pi, p) in b.points.iter().enumerate() {
                let coord = mat_mul(&inv[pi], &evals[pi]);
                rows.extend(coord.into_iter().skip(p.dims[choice[pi]]));
            }
            let ns = if rows.is_empty() {
                (0..n)
                    .map(|i| {
                        let mut e = vec![Q::zero(); n];
                        e[i] = Q::one();
                        e
                    })
                    .collect()
            } else {
                nullspace(&rows, n)
            };
            if ns.is_empty() {
                continue;
            }
            for _ in 0..8 {
                let c = generic_combination(&ns, &mut rng);
                let section = polys_from(&c, &bounds, &offs);
                if saturated(&section, &bounds) {
                    push_candidate(b, mu, "line", SubBundle::Line { degree: d, section }, &mut out);
                    break;
                }
            }
        }
    }
    // (iv) corank-one subsheaves as kernels of maps to O(e), for rank three.
    if r == 3 {
        let amin = b.min_degree();
        let top2: Q = b
            .points
            .iter()
            .map(|p| {
                let mut w: Vec<Q> = (0..r).map(|j| p.vector_weight(j)).collect();
                w.sort();
                w[r - 1] + w[r - 2]
            })
            .sum();
        let bound = q(b.degree() as i128) + top2 - mu * q(2);
        let e_hi = (floor(&bound) as i64).max(amin);
        for e in amin..=e_hi {
            let bounds: Vec<i64> = b.degrees.iter().map(|a| e - a).collect();
            let (offs, n) = unknown_layout(&bounds);
            if n == 0 {
                continue;
            }
            for choice in level_choices(b, false) {
                let mut rows = Vec::new();
                for (pi, p) in b.points.iter().enumerate() {
                    if choice[pi] == usize::MAX {
                        continue;
                    }
                    let ev = evaluation_rows(&bounds, &offs, n, &p.at);
                    for v in p.level_space(choice[pi]) {
                        rows.push((0..n).map(|k| (0..r).map(|i| v[i] * ev[i][k]).sum()).collect());
                    }
                }
                let ns = if rows.is_empty() {
                    (0..n)
                        .map(|i| {
                            let mut e = vec![Q::zero(); n];
                            e[i] = Q::one();
                            e
                        })
                        .collect()
                } else {
                    nullspace(&rows, n)
                };
                if ns.is_empty() {
                    continue;
                }
                for _ in 0..8 {
                    let c = generic_combination(&ns, &mut rng);
                    let map = polys_from(&c, &bounds, &offs);
                    if saturated(&map, &bounds) {
                        push_candidate(b, mu, "kernel", SubBundle::Kernel { quotient_degree: e, map }, &mut out);
                        break;
                    }
                }
            }
        }
    }
    out.sort_by_key(|a| a.margin_q);
    out
}

/// Restriction of the parabolic structure to a direct sum of summands, if the
/// flags split along the decomposition.
fn restrict_to_block(b: &ParabolicBundle, block: &[usize], blocks: &[Vec<usize>]) -> Option<ParabolicBundle> {
    let r = b.rank;
    let unit = |i: usize| {
        let mut e = vec![Q::zero(); r];
        e[i] = Q::one();
        e
    };
    let mut points = Vec::new();
    for p in &b.points {
        // Compatibility: every flag space is the sum of its intersections with the blocks.
        for l in 0..p.levels() {
            let total: usize = blocks
                .iter()
                .map(|bl| intersection_dim(p.level_space(l), &bl.iter().map(|&i| unit(i)).collect::<Vec<_>>()))
                .sum();
            if total != p.dims[l] {
                return None;
            }
        }
        // Intersections F^l ∩ E_S in block coordinates, deepest first.
        let mut basis: Vec<Vec<Q>> = Vec::new();
        let mut dims = Vec::new();
        let mut weights = Vec::new();
        for l in (0..p.levels()).rev() {
            let rows = p.level_space(l);
            // Vectors of F^l lying in E_S: solve for combinations vanishing off the block.
            let off: Vec<usize> = (0..r).filter(|i| !block.contains(i)).collect();
            let cond: Vec<Vec<Q>> = off.iter().map(|&i| rows.iter().map(|v| v[i]).collect()).collect();
            let combos = if cond.is_empty() {
                (0..rows.len())
                    .map(|k| {
                        let mut e = vec![Q::zero(); rows.len()];
                        e[k] = Q::one();
                        e
                    })
                    .collect()
            } else {
                nullspace(&cond, rows.len())
            };
            let inter: Vec<Vec<Q>> = combos
                .iter()
                .map(|c| {
                    let full: Vec<Q> = (0..r).map(|i| rows.iter().zip(c).map(|(v, x)| v[i] * *x).sum()).collect();
                    block.iter().map(|&i| full[i]).collect()
                })
                .collect();
            for v in inter {
                let mut trial = basis.clone();
                trial.push(v.clone());
                if rank(&trial) == trial.len() {
                    basis = trial;
                }
            }
            let d = basis.len();
            if d == 0 {
                continue;
            }
            match dims.last() {
                Some(&last) if last == d => {
                    // Same space as a deeper level: keep the larger weight already stored.
                }
                _ => {
                    dims.push(d);
                    weights.push(p.weights[l]);
                }
            }
        }
        dims.reverse();
        weights.reverse();
        if dims.first() != Some(&block.len()) {
            return None;
        }
        points.push(ParabolicPoint::new(p.at.clone(), basis, dims, weights).ok()?);
    }
    ParabolicBundle::new(block.iter().map(|&i| b.degrees[i]).collect(), points).ok()
}

fn set_partitions(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let first = items[0];
    let mut out = Vec::new();
    for mut part in set_partitions(&items[1..]) {
        for k in 0..part.len() {
            let mut p = part.clone();
            p[k].insert(0, first);
            out.push(p);
        }
        part.insert(0, vec![first]);
        out.push(part);
    }
    out
}

/// Dimension of the space of parabolic endomorphisms (flag-preserving holomorphic endomorphisms).
pub fn endomorphism_dimension(b: &ParabolicBundle) -> usize {
    let r = b.rank;
    // Unknown φ_ij ∈ H⁰(O(a_i - a_j)).
    let mut offs = vec![vec![0usize; r]; r];
    let mut n = 0;
    for i in 0..r {
        for j in 0..r {
            offs[i][j] = n;
            let bnd = b.degrees[i] - b.degrees[j];
            if bnd >= 0 {
                n += bnd as usize + 1;
            }
        }
    }
    let value_row = |i: usize, j: usize, at: &Position| -> Vec<Q> {
        let mut row = vec![Q::zero(); n];
        let bnd = b.degrees[i] - b.degrees[j];
        if bnd >= 0 {
            match at {
                Position::Finite(x) => {
                    let mut pw = Q::one();
                    for k in 0..=bnd as usize {
                        row[offs[i][j] + k] = pw;
                        pw *= *x;
                    }
                }
                Position::Infinity => row[offs[i][j] + bnd as usize] = Q::one(),
            }
        }
        row
    };
    let mut rows: Vec<Vec<Q>> = Vec::new();
    for p in &b.points {
        let inv = inverse_rows(p);
        for l in 1..p.levels() {
            for v in p.level_space(l) {
                // Components of φ(x) v as linear forms in the unknowns.
                let w: Vec<Vec<Q>> = (0..r)
                    .map(|i| {
                        let mut acc = vec![Q::zero(); n];
                        for j in 0..r {
                            if v[j].is_zero() {
                                continue;
                            }
                            for (a, x) in acc.iter_mut().zip(value_row(i, j, &p.at)) {
                                *a += v[j] * x;
                            }
                        }
                        acc
                    })
                    .collect();
                for k in p.dims[l]..r {
                    rows.push((0..n).map(|u| (0..r).map(|i| inv[k][i] * w[i][u]).sum()).collect());
                }
            }
        }
    }
    if rows.is_empty() {
        n
    } else {
        n - rank(&rows)
    }
}

fn stability_inner(b: &ParabolicBundle, seed: u64, depth: usize) -> Result<StabilityVerdict> {
    if b.rank > 3 {
        return Err(Error::Unsupported(format!("stability oracle handles rank ≤ 3, got {}", b.rank)));
    }
    let pardeg = parabolic_degree(b);
    let mu = parabolic_slope(b);
    let cands = candidates(b, seed);
    let margin_q = cands.first().map(|c| c.margin_q);
    let stable = margin_q.is_none_or(|m| m > Q::zero());
    let semistable = margin_q.is_none_or(|m| m >= Q::zero());
    let mut notes = Vec::new();
    let mut blocks = None;
    if stable {
        blocks = Some(vec![(0..b.rank).collect()]);
    } else if semistable && depth == 0 {
        let idx: Vec<usize> = (0..b.rank).collect();
        for part in set_partitions(&idx) {
            if part.len() < 2 {
                continue;
            }
            let mut ok = true;
            for bl in &part {
                match restrict_to_block(b, bl, &part) {
                    Some(sb) => {
                        let v = stability_inner(&sb, seed, depth + 1)?;
                        if !v.stable || parabolic_slope(&sb) != mu {
                            ok = false;
                        }
                    }
                    None => ok = false,
                }
                if !ok {
                    break;
                }
            }
            if ok {
                blocks = Some(part);
                break;
            }
        }
    }
    let polystable = blocks.is_some();
    let endo = if stable && depth == 0 { Some(endomorphism_dimension(b)) } else { None };
    if let Some(d) = endo {
        if d != 1 {
            notes.push(format!("stable but parabolic endomorphisms have dimension {d}"));
        }
    }
    Ok(StabilityVerdict {
        stable,
        semistable,
        polystable,
        pardeg: q_to_string(&pardeg),
        slope: q_to_string(&mu),
        margin: margin_q.map(|m| q_to_string(&m)),
        margin_q,
        witness: if stable { None } else { cands.first().cloned() },
        endomorphism_dimension: endo,
        polystable_blocks: blocks,
        candidates: cands,
        notes,
    })
}

/// Parabolic (poly)stability of a split bundle of rank at most three.
pub fn stability_check(b: &ParabolicBundle) -> Result<StabilityVerdict> {
    stability_check_seeded(b, 0)
}

pub fn stability_check_seeded(b: &ParabolicBundle, seed: u64) -> Result<StabilityVerdict> {
    stability_inner(b, seed, 0)
}

/// O(0)⊕O(0) with full flags at 0, 1 and ∞ in general position and weights (0, 1/2).
pub fn three_point_example() -> ParabolicBundle {
    let w = [q(0), qf(1, 2)];
    let pts = vec![
        ParabolicPoint::line_flag(Position::Finite(q(0)), vec![q(1), q(0)], w).unwrap(),
        ParabolicPoint::line_flag(Position::Finite(q(1)), vec![q(1), q(1)], w).unwrap(),
        ParabolicPoint::line_flag(Position::Infinity, vec![q(0), q(1)], w).unwrap(),
    ];
    ParabolicBundle::new(vec![0, 0], pts).unwrap()
}

#[cfg(test)]
mod tests;
