//! Circle stencils for complex derivatives of functions given in closed form.
//!
//! For a ring of `K` equally spaced samples at radius `h` around `z0`, the
//! Fourier coefficient of order `±1` isolates `∂f` (or `∂̄f`) up to `O(h²)`
//! terms, which are removed by Richardson extrapolation over `h, h/2, h/4`.

use nalgebra::Complex;
use std::f64::consts::PI;

pub type C64 = Complex<f64>;

pub const RING: usize = 16;

fn ring_coefficient<F: Fn(C64) -> C64>(f: &F, z0: C64, h: f64, order: i32) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..RING {
        let phi = 2.0 * PI * (k as f64 + 0.25) / RING as f64;
        let e = C64::from_polar(1.0, phi);
        let w = C64::from_polar(1.0, -(order as f64) * phi);
        acc += f(z0 + e * h) * w;
    }
    acc / (RING as f64 * h.powi(order.abs()))
}

fn richardson3(d1: C64, d2: C64, d4: C64) -> C64 {
    // Error expansion in even powers of h.
    let a = (d2 * 4.0 - d1) / 3.0;
    let b = (d4 * 4.0 - d2) / 3.0;
    (b * 16.0 - a) / 15.0
}

/// `∂f/∂z` at `z0`.
pub fn d<F: Fn(C64) -> C64>(f: &F, z0: C64, h: f64) -> C64 {
    richardson3(
        ring_coefficient(f, z0, h, 1),
        ring_coefficient(f, z0, h / 2.0, 1),
        ring_coefficient(f, z0, h / 4.0, 1),
    )
}

/// `∂f/∂z̄` at `z0`.
pub fn dbar<F: Fn(C64) -> C64>(f: &F, z0: C64, h: f64) -> C64 {
    richardson3(
        ring_coefficient(f, z0, h, -1),
        ring_coefficient(f, z0, h / 2.0, -1),
        ring_coefficient(f, z0, h / 4.0, -1),
    )
}

/// `∂∂̄f` at `z0` from ring means: mean − f = h²∂∂̄f + O(h⁴).
pub fn ddbar<F: Fn(C64) -> C64>(f: &F, z0: C64, h: f64) -> C64 {
    let f0 = f(z0);
    let lev = |r: f64| (ring_coefficient(f, z0, r, 0) - f0) / (r * r);
    richardson3(lev(h), lev(h / 2.0), lev(h / 4.0))
}
