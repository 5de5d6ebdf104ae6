//! Tensor grids on the sphere: Gauss-Legendre nodes in the radial variable
//! `t ∈ (-1, 1)` and an offset uniform grid in the angle `θ`.
//!
//! Grid functions are flat vectors indexed by `i * m + j` where `i` is the
//! radial node and `j` the angular node.

use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Gauss-Legendre nodes (ascending) and weights on (-1, 1).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for k in 0..n {
        // Chebyshev-like initial guess, refined by Newton on P_n.
        let mut z = -(PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, z);
        x[k] = z;
        w[k] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Legendre polynomial value.
pub fn legendre(n: usize, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    p1
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub n: usize,
    pub m: usize,
    pub t: Vec<f64>,
    pub wt: Vec<f64>,
    /// Barycentric weights of the radial nodes.
    pub bary: Vec<f64>,
    /// Collocation derivative in `t`.
    pub dt: DMatrix<f64>,
    pub theta: Vec<f64>,
    /// Orthonormal angular basis (columns) under the weight 2π/m.
    pub q: DMatrix<f64>,
    /// Angular wavenumber of each basis column.
    pub modes: Vec<usize>,
    /// Collocation derivative in `θ` (Nyquist mode differentiated to zero).
    pub dtheta: DMatrix<f64>,
}

impl Grid {
    pub fn new(n: usize, m: usize) -> Grid {
        assert!(n >= 2 && m >= 2 && m.is_multiple_of(2), "grid needs n >= 2 and even m");
        let (t, wt) = gauss_legendre(n);
        let bary: Vec<f64> = (0..n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                s * ((1.0 - t[j] * t[j]) * wt[j]).sqrt()
            })
            .collect();
        let mut dt = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut diag = 0.0;
            for j in 0..n {
                if i != j {
                    let v = bary[j] / bary[i] / (t[i] - t[j]);
                    dt[(i, j)] = v;
                    diag -= v;
                }
            }
            dt[(i, i)] = diag;
        }
        let theta: Vec<f64> = (0..m).map(|j| 2.0 * PI * (j as f64 + 0.5) / m as f64).collect();
        let (q, modes) = angular_basis(&theta);
        // Modal derivative: cos(kθ)' = -k sin(kθ), sin(kθ)' = k cos(kθ).
        let mut dmodal = DMatrix::zeros(m, m);
        let half = m / 2;
        for k in 1..half {
            let c = 2 * k - 1;
            let s = 2 * k;
            dmodal[(s, c)] = -(k as f64);
            dmodal[(c, s)] = k as f64;
        }
        let wq = 2.0 * PI / m as f64;
        let dtheta = &q * dmodal * q.transpose() * wq;
        Grid { n, m, t, wt, bary, dt, theta, q, modes, dtheta }
    }

    pub fn len(&self) -> usize {
        self.n * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.m + j
    }

    /// Angular quadrature weight.
    pub fn wtheta(&self) -> f64 {
        2.0 * PI / self.m as f64
    }

    /// Derivative in `t` of a grid function.
    pub fn d_t(&self, f: &[f64]) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for k in 0..n {
                let d = self.dt[(i, k)];
                if d == 0.0 {
                    continue;
                }
                let row = &f[k * m..(k + 1) * m];
                let o = &mut out[i * m..(i + 1) * m];
                for j in 0..m {
                    o[j] += d * row[j];
                }
            }
        }
        out
    }

    /// Derivative in `θ` of a grid function.
    pub fn d_theta(&self, f: &[f64]) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &f[i * m..(i + 1) * m];
            for j in 0..m {
                let mut s = 0.0;
                for l in 0..m {
                    s += self.dtheta[(j, l)] * row[l];
                }
                out[i * m + j] = s;
            }
        }
        out
    }

    /// Modal coefficients `a[(i, k)]` with `f(t_i, θ_j) = Σ_k q[(j, k)] a[(i, k)]`.
    pub fn to_modal(&self, f: &[f64]) -> DMatrix<f64> {
        let fm = DMatrix::from_row_slice(self.n, self.m, f);
        fm * &self.q * self.wtheta()
    }

    pub fn from_modal(&self, a: &DMatrix<f64>) -> Vec<f64> {
        let fm = a * self.q.transpose();
        let mut out = vec![0.0; self.len()];
        for i in 0..self.n {
            for j in 0..self.m {
                out[i * self.m + j] = fm[(i, j)];
            }
        }
        out
    }

    /// Weights of the Lagrange basis at an arbitrary `t` (barycentric form).
    pub fn radial_interp_weights(&self, t: f64) -> Vec<f64> {
        let mut w = vec![0.0; self.n];
        for (j, &tj) in self.t.iter().enumerate() {
            if (t - tj).abs() < 1e-15 {
                w[j] = 1.0;
                return w;
            }
        }
        let mut den = 0.0;
        for j in 0..self.n {
            let v = self.bary[j] / (t - self.t[j]);
            w[j] = v;
            den += v;
        }
        for v in w.iter_mut() {
            *v /= den;
        }
        w
    }

    /// Values of the angular basis functions at an arbitrary `θ`.
    pub fn angular_basis_at(&self, theta: f64) -> Vec<f64> {
        angular_basis_values(self.m, theta)
    }

    /// Spectral interpolation of a grid function at `(t, θ)`.
    pub fn interpolate(&self, f: &[f64], t: f64, theta: f64) -> f64 {
        let a = self.to_modal(f);
        self.interpolate_modal(&a, t, theta)
    }

    pub fn interpolate_modal(&self, a: &DMatrix<f64>, t: f64, theta: f64) -> f64 {
        let wr = self.radial_interp_weights(t);
        let wa = self.angular_basis_at(theta);
        let mut s = 0.0;
        for i in 0..self.n {
            if wr[i] == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for k in 0..self.m {
                row += a[(i, k)] * wa[k];
            }
            s += wr[i] * row;
        }
        s
    }
}

fn angular_basis_values(m: usize, theta: f64) -> Vec<f64> {
    let half = m / 2;
    let mut v = vec![0.0; m];
    v[0] = 1.0 / (2.0 * PI).sqrt();
    let c = 1.0 / PI.sqrt();
    for k in 1..half {
        v[2 * k - 1] = c * (k as f64 * theta).cos();
        v[2 * k] = c * (k as f64 * theta).sin();
    }
    // On the offset grid cos(mθ/2) vanishes, so the Nyquist column uses sine.
    v[m - 1] = (half as f64 * theta).sin() / (2.0 * PI).sqrt();
    v
}

fn angular_basis(theta: &[f64]) -> (DMatrix<f64>, Vec<usize>) {
    let m = theta.len();
    let mut q = DMatrix::zeros(m, m);
    for (j, &th) in theta.iter().enumerate() {
        let v = angular_basis_values(m, th);
        for k in 0..m {
            q[(j, k)] = v[k];
        }
    }
    let mut modes = vec![0; m];
    for k in 1..m / 2 {
        modes[2 * k - 1] = k;
        modes[2 * k] = k;
    }
    modes[m - 1] = m / 2;
    (q, modes)
}
