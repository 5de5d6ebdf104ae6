//! Truncated multivariate Taylor polynomials for exact derivatives of closed
//! form expressions up to a fixed total degree.

use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

/// Monomial layout and multiplication table for `nvars` variables up to degree `deg`.
#[derive(Debug)]
pub struct JetSpace {
    pub nvars: usize,
    pub deg: usize,
    pub monomials: Vec<Vec<usize>>,
    products: Vec<(usize, usize, usize)>,
    /// For each variable, `(source, target, factor)` of the partial derivative.
    derivs: Vec<Vec<(usize, usize, f64)>>,
}

impl JetSpace {
    pub fn new(nvars: usize, deg: usize) -> Arc<JetSpace> {
        let mut monomials = Vec::new();
        fn rec(prefix: &mut Vec<usize>, left: usize, nvars: usize, out: &mut Vec<Vec<usize>>) {
            if prefix.len() == nvars {
                out.push(prefix.clone());
                return;
            }
            for e in 0..=left {
                prefix.push(e);
                rec(prefix, left - e, nvars, out);
                prefix.pop();
            }
        }
        rec(&mut Vec::new(), deg, nvars, &mut monomials);
        monomials.sort_by_key(|m| m.iter().sum::<usize>());
        let index = |m: &[usize]| monomials.iter().position(|x| x.as_slice() == m);
        let mut products = Vec::new();
        for (i, a) in monomials.iter().enumerate() {
            for (j, b) in monomials.iter().enumerate() {
                let s: Vec<usize> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                if s.iter().sum::<usize>() <= deg {
                    products.push((i, j, index(&s).unwrap()));
                }
            }
        }
        let derivs = (0..nvars)
            .map(|v| {
                monomials
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| m[v] > 0)
                    .map(|(k, m)| {
                        let mut t = m.clone();
                        t[v] -= 1;
                        (k, index(&t).unwrap(), m[v] as f64)
                    })
                    .collect()
            })
            .collect();
        Arc::new(JetSpace { nvars, deg, monomials, products, derivs })
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn index(&self, exps: &[usize]) -> Option<usize> {
        self.monomials.iter().position(|m| m.as_slice() == exps)
    }
}

#[derive(Debug, Clone)]
pub struct Jet {
    pub space: Arc<JetSpace>,
    pub c: Vec<f64>,
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, v: f64) -> Jet {
        let mut c = vec![0.0; space.len()];
        c[0] = v;
        Jet { space: space.clone(), c }
    }

    /// The coordinate `x_i` expanded at `value`.
    pub fn var(space: &Arc<JetSpace>, i: usize, value: f64) -> Jet {
        let mut j = Jet::constant(space, value);
        if space.deg > 0 {
            let mut e = vec![0; space.nvars];
            e[i] = 1;
            let k = space.index(&e).unwrap();
            j.c[k] = 1.0;
        }
        j
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Partial derivative with the given multi-index.
    pub fn derivative(&self, exps: &[usize]) -> f64 {
        let k = match self.space.index(exps) {
            Some(k) => k,
            None => return 0.0,
        };
        let fact: f64 = exps.iter().map(|&e| (1..=e).product::<usize>() as f64).product();
        self.c[k] * fact
    }

    /// Partial derivative as a jet; its top-degree coefficients are zero and
    /// carry no information.
    pub fn diff(&self, var: usize) -> Jet {
        let mut c = vec![0.0; self.c.len()];
        for &(src, dst, f) in &self.space.derivs[var] {
            c[dst] = self.c[src] * f;
        }
        Jet { space: self.space.clone(), c }
    }

    /// `f(self)` given `f(a), f'(a), …, f^{(deg)}(a)` at `a = self.value()`.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let mut h = self.clone();
        h.c[0] = 0.0;
        let mut out = Jet::constant(&self.space, derivs[0]);
        let mut pow = Jet::constant(&self.space, 1.0);
        let mut fact = 1.0;
        for (n, d) in derivs.iter().enumerate().take(self.space.deg + 1).skip(1) {
            pow = &pow * &h;
            fact *= n as f64;
            for (o, p) in out.c.iter_mut().zip(&pow.c) {
                *o += d / fact * p;
            }
        }
        out
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose(&vec![e; self.space.deg + 1])
    }

    pub fn ln(&self) -> Jet {
        let a = self.value();
        let mut d = vec![a.ln()];
        let mut f = 1.0;
        for n in 1..=self.space.deg {
            d.push(f / a.powi(n as i32));
            f *= -(n as f64);
        }
        self.compose(&d)
    }

    pub fn powf(&self, e: f64) -> Jet {
        let a = self.value();
        let mut d = Vec::new();
        let mut coef = 1.0;
        for n in 0..=self.space.deg {
            d.push(coef * a.powf(e - n as f64));
            coef *= e - n as f64;
        }
        self.compose(&d)
    }

    pub fn recip(&self) -> Jet {
        self.powf(-1.0)
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    pub fn cos(&self) -> Jet {
        let a = self.value();
        let cyc = [a.cos(), -a.sin(), -a.cos(), a.sin()];
        self.compose(&(0..=self.space.deg).map(|n| cyc[n % 4]).collect::<Vec<_>>())
    }

    pub fn sin(&self) -> Jet {
        let a = self.value();
        let cyc = [a.sin(), a.cos(), -a.sin(), -a.cos()];
        self.compose(&(0..=self.space.deg).map(|n| cyc[n % 4]).collect::<Vec<_>>())
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet { space: self.space.clone(), c: self.c.iter().map(|v| v * s).collect() }
    }

    pub fn add_const(&self, s: f64) -> Jet {
        let mut j = self.clone();
        j.c[0] += s;
        j
    }
}

impl<'a> Add<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        Jet { space: self.space.clone(), c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect() }
    }
}

impl<'a> Sub<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        Jet { space: self.space.clone(), c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect() }
    }
}

impl<'a> Mul<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        let mut c = vec![0.0; self.c.len()];
        for &(i, j, k) in &self.space.products {
            c[k] += self.c[i] * o.c[j];
        }
        Jet { space: self.space.clone(), c }
    }
}

impl<'a> Div<&'a Jet> for &'a Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: &Jet) -> Jet {
        self * &o.recip()
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

macro_rules! owned_ops {
    ($tr:ident, $m:ident) => {
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, o: Jet) -> Jet {
                (&self).$m(&o)
            }
        }
        impl<'a> $tr<&'a Jet> for Jet {
            type Output = Jet;
            fn $m(self, o: &Jet) -> Jet {
                (&self).$m(o)
            }
        }
    };
}
owned_ops!(Add, add);
owned_ops!(Sub, sub);
owned_ops!(Mul, mul);
owned_ops!(Div, div);

/// Complex valued jet as a pair of real jets.
#[derive(Debug, Clone)]
pub struct CJet {
    pub re: Jet,
    pub im: Jet,
}

impl CJet {
    pub fn real(re: Jet) -> CJet {
        let im = re.scale(0.0);
        CJet { re, im }
    }
    pub fn constant(space: &Arc<JetSpace>, re: f64, im: f64) -> CJet {
        CJet { re: Jet::constant(space, re), im: Jet::constant(space, im) }
    }
    pub fn conj(&self) -> CJet {
        CJet { re: self.re.clone(), im: -&self.im }
    }
    pub fn norm_sqr(&self) -> Jet {
        &self.re * &self.re + &self.im * &self.im
    }
    /// Multiplication by a complex number `a + ib`.
    pub fn scale_c(&self, a: f64, b: f64) -> CJet {
        CJet { re: self.re.scale(a) - self.im.scale(b), im: self.re.scale(b) + self.im.scale(a) }
    }
    pub fn scale_r(&self, r: &Jet) -> CJet {
        CJet { re: &self.re * r, im: &self.im * r }
    }
    pub fn add(&self, o: &CJet) -> CJet {
        CJet { re: &self.re + &o.re, im: &self.im + &o.im }
    }
    pub fn sub(&self, o: &CJet) -> CJet {
        CJet { re: &self.re - &o.re, im: &self.im - &o.im }
    }
    pub fn mul(&self, o: &CJet) -> CJet {
        CJet { re: &self.re * &o.re - &self.im * &o.im, im: &self.re * &o.im + &self.im * &o.re }
    }
    pub fn recip(&self) -> CJet {
        let n = self.norm_sqr().recip();
        self.conj().scale_r(&n)
    }
    pub fn powi(&self, e: i64) -> CJet {
        let base = if e < 0 { self.recip() } else { self.clone() };
        let mut out = CJet::constant(&self.re.space, 1.0, 0.0);
        for _ in 0..e.unsigned_abs() {
            out = out.mul(&base);
        }
        out
    }
}
