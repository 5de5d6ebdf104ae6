//! Exact rational linear algebra and univariate polynomials.

use num_rational::Ratio;
use num_traits::{One, Zero};

pub type Q = Ratio<i128>;

pub fn q(n: i128) -> Q {
    Q::from_integer(n)
}

pub fn qf(n: i128, d: i128) -> Q {
    Q::new(n, d)
}

/// Parses `"3"`, `"-1/2"` or a short decimal like `"0.25"`.
pub fn parse_q(s: &str) -> Option<Q> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let (a, b) = (a.trim().parse::<i128>().ok()?, b.trim().parse::<i128>().ok()?);
        return if b == 0 { None } else { Some(Q::new(a, b)) };
    }
    if let Some((ip, fp)) = s.split_once('.') {
        if fp.len() > 18 || !fp.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let neg = ip.trim_start().starts_with('-');
        let ipv = if ip.is_empty() || ip == "-" { 0 } else { ip.parse::<i128>().ok()? };
        let den = 10i128.pow(fp.len() as u32);
        let frac = if fp.is_empty() { 0 } else { fp.parse::<i128>().ok()? };
        let num = ipv.abs() * den + frac;
        return Some(Q::new(if neg { -num } else { num }, den));
    }
    s.parse::<i128>().ok().map(Q::from_integer)
}

pub fn q_to_string(v: &Q) -> String {
    if v.is_integer() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

pub fn q_to_f64(v: &Q) -> f64 {
    *v.numer() as f64 / *v.denom() as f64
}

pub fn floor(v: &Q) -> i128 {
    v.floor().to_integer()
}

/// Row echelon form in place; returns pivot columns.
pub fn echelon(rows: &mut [Vec<Q>]) -> Vec<usize> {
    let ncols = rows.first().map_or(0, |r| r.len());
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r >= rows.len() {
            break;
        }
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = rows[r][c].recip();
        for v in rows[r].iter_mut() {
            *v *= inv;
        }
        for i in 0..rows.len() {
            if i != r && !rows[i][c].is_zero() {
                let f = rows[i][c];
                let pivot_row = rows[r].clone();
                for (x, y) in rows[i].iter_mut().zip(&pivot_row) {
                    *x -= f * *y;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank(rows: &[Vec<Q>]) -> usize {
    let mut m = rows.to_vec();
    echelon(&mut m).len()
}

/// Basis of `{x : A x = 0}` for a matrix given by rows with `ncols` columns.
pub fn nullspace(rows: &[Vec<Q>], ncols: usize) -> Vec<Vec<Q>> {
    let mut m: Vec<Vec<Q>> = rows.to_vec();
    let pivots = echelon(&mut m);
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut x = vec![Q::zero(); ncols];
            x[f] = Q::one();
            for (r, &pc) in pivots.iter().enumerate() {
                x[pc] = -m[r][f];
            }
            x
        })
        .collect()
}

/// Solves `B c = v` for square invertible `B` given by columns.
pub fn solve_columns(cols: &[Vec<Q>], v: &[Q]) -> Option<Vec<Q>> {
    let n = cols.len();
    let mut aug: Vec<Vec<Q>> = (0..n)
        .map(|i| {
            let mut row: Vec<Q> = cols.iter().map(|c| c[i]).collect();
            row.push(v[i]);
            row
        })
        .collect();
    let piv = echelon(&mut aug);
    if piv.len() != n || piv.iter().enumerate().any(|(i, &p)| p != i) {
        return None;
    }
    Some(aug.iter().map(|r| r[n]).collect())
}

/// Dimension of the span of a set of vectors.
pub fn span_dim(vecs: &[Vec<Q>]) -> usize {
    if vecs.is_empty() {
        0
    } else {
        rank(vecs)
    }
}

/// `dim(U ∩ W) = dim U + dim W − dim(U + W)`.
pub fn intersection_dim(u: &[Vec<Q>], w: &[Vec<Q>]) -> usize {
    let mut all = u.to_vec();
    all.extend_from_slice(w);
    span_dim(u) + span_dim(w) - span_dim(&all)
}

/// Univariate polynomial, coefficients in increasing degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<Q>);

impl Poly {
    pub fn zero() -> Poly {
        Poly(vec![])
    }

    pub fn trim(mut self) -> Poly {
        while self.0.last().is_some_and(|c| c.is_zero()) {
            self.0.pop();
        }
        self
    }

    pub fn degree(&self) -> Option<usize> {
        self.0.iter().rposition(|c| !c.is_zero())
    }

    pub fn is_zero(&self) -> bool {
        self.degree().is_none()
    }

    pub fn eval(&self, x: &Q) -> Q {
        self.0.iter().rev().fold(Q::zero(), |acc, c| acc * *x + *c)
    }

    pub fn coeff(&self, k: usize) -> Q {
        self.0.get(k).copied().unwrap_or_else(Q::zero)
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut c = vec![Q::zero(); self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                c[i + j] += *a * *b;
            }
        }
        Poly(c).trim()
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        let n = self.0.len().max(o.0.len());
        Poly((0..n).map(|k| self.coeff(k) - o.coeff(k)).collect()).trim()
    }

    fn rem(&self, d: &Poly) -> Poly {
        let dd = d.degree().expect("division by zero polynomial");
        let lead = d.0[dd];
        let mut r = self.clone().trim();
        while let Some(rd) = r.degree() {
            if rd < dd {
                break;
            }
            let f = r.0[rd] / lead;
            for k in 0..=dd {
                let v = d.0[k];
                r.0[rd - dd + k] -= f * v;
            }
            r = r.trim();
        }
        r
    }

    /// Monic greatest common divisor.
    pub fn gcd(&self, o: &Poly) -> Poly {
        let (mut a, mut b) = (self.clone().trim(), o.clone().trim());
        while !b.is_zero() {
            let r = a.rem(&b);
            a = b;
            b = r;
        }
        match a.degree() {
            None => Poly::zero(),
            Some(d) => {
                let l = a.0[d];
                Poly(a.0.iter().map(|c| *c / l).collect())
            }
        }
    }
}
