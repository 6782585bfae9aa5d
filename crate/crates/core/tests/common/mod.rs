//! Reference solutions shared by the integration tests. None of them touch
//! the crate's numerics.
#![allow(dead_code)]

use fbtraj::{SystemParams, C64};
use nalgebra::Matrix4;

/// Basis (g,0), (e,0), (g,1), (e,1).
pub fn hamiltonian(p: &SystemParams) -> Matrix4<C64> {
    let r = |x: f64| C64::new(x, 0.0);
    let mut h = Matrix4::zeros();
    h[(1, 1)] = r(p.delta_a);
    h[(2, 2)] = r(p.delta_c);
    h[(3, 3)] = r(p.delta_a + p.delta_c);
    // drive
    h[(0, 1)] = r(p.omega);
    h[(2, 3)] = r(p.omega);
    // exchange
    h[(1, 2)] = r(p.g);
    h + h.adjoint() - Matrix4::from_diagonal(&h.diagonal())
}

pub fn collapse(p: &SystemParams) -> [Matrix4<C64>; 2] {
    let mut c = Matrix4::zeros();
    c[(0, 2)] = C64::new(p.gamma_c.sqrt(), 0.0);
    c[(1, 3)] = C64::new(p.gamma_c.sqrt(), 0.0);
    let mut s = Matrix4::zeros();
    s[(0, 1)] = C64::new(p.gamma_t.sqrt(), 0.0);
    s[(2, 3)] = C64::new(p.gamma_t.sqrt(), 0.0);
    [c, s]
}

fn lindblad(h: &Matrix4<C64>, ls: &[Matrix4<C64>; 2], rho: &Matrix4<C64>) -> Matrix4<C64> {
    let i = C64::new(0.0, 1.0);
    let mut d = -(h * rho - rho * h) * i;
    for l in ls {
        let ld = l.adjoint();
        let n = ld * l;
        d += l * rho * ld - (n * rho + rho * n) * C64::new(0.5, 0.0);
    }
    d
}

/// `(n_a, n_c)` on the grid `k·dt`.
pub fn master_equation(p: &SystemParams, dt: f64, steps: usize) -> Vec<(f64, f64)> {
    let h = hamiltonian(p);
    let ls = collapse(p);
    let mut rho = Matrix4::<C64>::zeros();
    rho[(1, 1)] = C64::new(1.0, 0.0);
    let sub = 10;
    let hh = C64::new(dt / sub as f64, 0.0);
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        out.push((rho[(1, 1)].re + rho[(3, 3)].re, rho[(2, 2)].re + rho[(3, 3)].re));
        if k == steps {
            break;
        }
        for _ in 0..sub {
            let k1 = lindblad(&h, &ls, &rho);
            let k2 = lindblad(&h, &ls, &(rho + k1 * (hh * 0.5)));
            let k3 = lindblad(&h, &ls, &(rho + k2 * (hh * 0.5)));
            let k4 = lindblad(&h, &ls, &(rho + k3 * hh));
            rho += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * (hh / 6.0);
        }
    }
    out
}

/// Closed-form no-jump amplitude of a TLS feeding the loop directly,
/// `β' = −qβ + q e^{iφ} β(t − τ)` with `q = γ_L/4` and an empty loop at 0,
/// summed term by term over the delay intervals.
pub fn tls_direct_amplitude(p: &SystemParams, t: f64) -> C64 {
    let q = p.gamma_l / 4.0;
    let phase = C64::from_polar(q, p.phi);
    let mut sum = C64::new(0.0, 0.0);
    let mut n = 0;
    while n as f64 * p.tau <= t {
        let s = t - n as f64 * p.tau;
        let mut coeff = C64::new(1.0, 0.0);
        for j in 1..=n {
            coeff *= phase * (s / j as f64);
        }
        sum += coeff * (-q * s).exp();
        n += 1;
    }
    sum
}
