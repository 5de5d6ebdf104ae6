//! Galerkin discretization of the cone Laplacian.
//!
//! The Dirichlet form `∫|∇u|² ω = ½∫(p u_t² + u_θ²/p) dt dθ` is assembled with
//! Gauss-Legendre quadrature in `t` and the trigonometric rule in `θ`. The mass
//! matrix is diagonal with weights `w_i e^{ψ} / 2`. For rotation invariant
//! metrics every angular mode decouples and is handled as its own block;
//! otherwise a single dense block acts on all nodes.

use crate::cone_geometry::MetricField;
use crate::error::{Error, Result};
use crate::spectral::Grid;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// One block per angular basis column.
    Modal,
    /// One dense block over all nodes.
    Nodal,
}

#[derive(Debug, Clone)]
pub struct Block {
    pub a: DMatrix<f64>,
    pub mass: DVector<f64>,
    pub scalar: DVector<f64>,
    /// Coefficients of the constant function 1 in this block, if it has any.
    pub constants: Option<DVector<f64>>,
}

impl Block {
    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    /// Matrix of `Δ = -M⁻¹A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = -self.a.clone();
        for (i, mut row) in l.row_iter_mut().enumerate() {
            row /= self.mass[i];
        }
        l
    }

    /// `M`-weighted constraint vector for the mean.
    pub fn mean_vector(&self) -> Option<DVector<f64>> {
        self.constants.as_ref().map(|c| c.component_mul(&self.mass))
    }

    /// Removes the mean of a block vector.
    pub fn project_mean_zero(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.constants {
            None => x.clone(),
            Some(c) => {
                let mv = c.component_mul(&self.mass);
                x - c * (mv.dot(x) / mv.dot(c))
            }
        }
    }

    /// Solves `(Δ - K) x = f`, `K > 0`.
    pub fn solve_shifted(&self, k: f64, f: &DVector<f64>) -> Result<DVector<f64>> {
        let mut s = self.a.clone();
        for i in 0..self.dim() {
            s[(i, i)] += k * self.mass[i];
        }
        let ch = Cholesky::new(s)
            .ok_or_else(|| Error::DiscretizationFailure("shifted Laplacian is not positive definite".into()))?;
        Ok(-ch.solve(&f.component_mul(&self.mass)))
    }

    /// Solves `Δ x = f` with `x` of mean zero; `f` must have mean zero.
    pub fn solve_poisson(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        let rhs = -f.component_mul(&self.mass);
        match self.mean_vector() {
            None => {
                let ch = Cholesky::new(self.a.clone())
                    .ok_or_else(|| Error::DiscretizationFailure("stiffness block is not positive definite".into()))?;
                Ok(ch.solve(&rhs))
            }
            Some(mv) => {
                let n = self.dim();
                let mut big = DMatrix::zeros(n + 1, n + 1);
                big.view_mut((0, 0), (n, n)).copy_from(&self.a);
                for i in 0..n {
                    big[(i, n)] = mv[i];
                    big[(n, i)] = mv[i];
                }
                let mut r = DVector::zeros(n + 1);
                r.rows_mut(0, n).copy_from(&rhs);
                let sol = big
                    .lu()
                    .solve(&r)
                    .ok_or_else(|| Error::DiscretizationFailure("bordered Laplace system is singular".into()))?;
                Ok(sol.rows(0, n).into_owned())
            }
        }
    }

    /// Generalized eigenvalues of `A v = λ M v` in ascending order, with
    /// `M`-orthonormal eigenvectors.
    pub fn eigen(&self) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let n = self.dim();
        let is: DVector<f64> = self.mass.map(|v| 1.0 / v.sqrt());
        let mut s = self.a.clone();
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] *= is[i] * is[j];
            }
        }
        let s = (&s + s.transpose()) * 0.5;
        let eig = SymmetricEigen::try_new(s, 1e-14, 10_000)
            .ok_or_else(|| Error::NumericalFailure("symmetric eigensolver did not converge in 10000 sweeps".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut vecs = DMatrix::zeros(n, n);
        for (c, &k) in order.iter().enumerate() {
            for i in 0..n {
                vecs[(i, c)] = eig.eigenvectors[(i, k)] * is[i];
            }
        }
        Ok((vals, vecs))
    }
}

#[derive(Debug, Clone)]
pub struct Discretization {
    pub layout: Layout,
    pub grid: Grid,
    pub blocks: Vec<Block>,
    /// Node mass weights (volume quadrature).
    pub node_mass: Vec<f64>,
}

impl Discretization {
    pub fn new(metric: &MetricField) -> Result<Discretization> {
        let layout = if metric.is_radial() { Layout::Modal } else { Layout::Nodal };
        Discretization::with_layout(metric, layout)
    }

    pub fn with_layout(metric: &MetricField, layout: Layout) -> Result<Discretization> {
        let surf = &metric.surface;
        let g = surf.grid.clone();
        let (n, m) = (g.n, g.m);
        let p = surf.p_nodes();
        let mut ar = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for q in 0..n {
                    s += g.dt[(q, i)] * g.wt[q] * p[q] * g.dt[(q, j)];
                }
                ar[(i, j)] = 0.5 * s;
            }
        }
        let winvp: Vec<f64> = (0..n).map(|i| 0.5 * g.wt[i] / p[i]).collect();
        if metric.psi.iter().chain(metric.scalar.iter()).any(|v| !v.is_finite()) {
            return Err(Error::SingularData("metric data is not finite".into()));
        }
        let node_mass = metric.mass();
        let blocks = match layout {
            Layout::Modal => {
                if !metric.is_radial() {
                    return Err(Error::InvalidArgument("modal layout requires a rotation invariant metric".into()));
                }
                let mass = DVector::from_iterator(n, (0..n).map(|i| g.wt[i] * metric.psi[i * m].exp() / 2.0));
                let scalar = DVector::from_iterator(n, (0..n).map(|i| metric.scalar[i * m]));
                (0..m)
                    .map(|c| {
                        let k = g.modes[c] as f64;
                        let mut a = ar.clone();
                        for i in 0..n {
                            a[(i, i)] += k * k * winvp[i];
                        }
                        let constants = if c == 0 {
                            Some(DVector::from_element(n, (2.0 * std::f64::consts::PI).sqrt()))
                        } else {
                            None
                        };
                        Block { a, mass: mass.clone(), scalar: scalar.clone(), constants }
                    })
                    .collect()
            }
            Layout::Nodal => {
                let wq = g.wtheta();
                let k2 = DMatrix::from_diagonal(&DVector::from_iterator(m, g.modes.iter().map(|&k| (k * k) as f64)));
                let kt = &g.q * k2 * g.q.transpose() * (wq * wq);
                let big = n * m;
                let mut a = DMatrix::zeros(big, big);
                for i in 0..n {
                    for k in 0..n {
                        let v = ar[(i, k)] * wq;
                        for j in 0..m {
                            a[(i * m + j, k * m + j)] += v;
                        }
                    }
                    for j in 0..m {
                        for l in 0..m {
                            a[(i * m + j, i * m + l)] += winvp[i] * kt[(j, l)];
                        }
                    }
                }
                vec![Block {
                    a,
                    mass: DVector::from_vec(node_mass.clone()),
                    scalar: DVector::from_vec(metric.scalar.clone()),
                    constants: Some(DVector::from_element(big, 1.0)),
                }]
            }
        };
        Ok(Discretization { layout, grid: g, blocks, node_mass })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn split(&self, u: &[f64]) -> Vec<DVector<f64>> {
        match self.layout {
            Layout::Nodal => vec![DVector::from_column_slice(u)],
            Layout::Modal => {
                let a = self.grid.to_modal(u);
                (0..self.grid.m).map(|c| a.column(c).into_owned()).collect()
            }
        }
    }

    pub fn join(&self, parts: &[DVector<f64>]) -> Vec<f64> {
        match self.layout {
            Layout::Nodal => parts[0].as_slice().to_vec(),
            Layout::Modal => {
                let mut a = DMatrix::zeros(self.grid.n, self.grid.m);
                for (c, p) in parts.iter().enumerate() {
                    a.set_column(c, p);
                }
                self.grid.from_modal(&a)
            }
        }
    }

    /// Applies a per-block map and reassembles the grid function.
    pub fn map_blocks<F>(&self, u: &[f64], f: F) -> Result<Vec<f64>>
    where
        F: Fn(&Block, &DVector<f64>) -> Result<DVector<f64>> + Sync,
    {
        let parts = self.split(u);
        let out: Result<Vec<DVector<f64>>> =
            self.blocks.par_iter().zip(parts.par_iter()).map(|(b, x)| f(b, x)).collect();
        Ok(self.join(&out?))
    }

    pub fn integrate(&self, u: &[f64]) -> f64 {
        self.node_mass.iter().zip(u).map(|(a, b)| a * b).sum()
    }

    pub fn volume(&self) -> f64 {
        self.node_mass.iter().sum()
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.node_mass.iter().zip(u.iter().zip(v)).map(|(w, (a, b))| w * a * b).sum()
    }

    pub fn l2(&self, u: &[f64]) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    pub fn mean_zero(&self, u: &[f64]) -> Vec<f64> {
        let c = self.integrate(u) / self.volume();
        u.iter().map(|v| v - c).collect()
    }

    pub fn apply_laplacian(&self, u: &[f64]) -> Vec<f64> {
        self.map_blocks(u, |b, x| Ok(-(&b.a * x).component_div(&b.mass))).unwrap()
    }
}
