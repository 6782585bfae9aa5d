//! Observables conditioned on no photon having left through the output.
//!
//! The branch that did emit is tracked as an unnormalized density matrix
//! `M` on the system: each step adds `dt · v v†` (with `v` the click state)
//! and propagates what is already there with the local no-jump kernel.

use nalgebra::Matrix4;

use crate::error::{Result, SimError};
use crate::history::Amp4;
use crate::jumps::Observables;
use crate::C64;

/// Below this the no-click branch is considered empty.
pub const MIN_DENOMINATOR: f64 = 1e-9;

/// `exp(A · dt)` by scaling and squaring a Taylor series.
pub fn build_propagator(kernel: &Matrix4<C64>, dt: f64) -> Matrix4<C64> {
    let a = kernel * C64::new(dt, 0.0);
    let norm = a.iter().map(|z| z.norm()).fold(0.0, f64::max) * 4.0;
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = a * C64::new(scale, 0.0);
    let mut term = Matrix4::<C64>::identity();
    let mut sum = Matrix4::<C64>::identity();
    for n in 1..=18 {
        term = term * a * C64::new(1.0 / n as f64, 0.0);
        sum += term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

#[derive(Debug, Clone)]
pub struct ClickAccumulator {
    propagator: Matrix4<C64>,
    dt: f64,
    /// Unnormalized density of the emitted branch.
    pub m: Matrix4<C64>,
    /// Output-click probability summed since the last reset.
    pub p_eplus: f64,
}

impl ClickAccumulator {
    pub fn new(kernel: &Matrix4<C64>, dt: f64) -> Self {
        Self {
            propagator: build_propagator(kernel, dt),
            dt,
            m: Matrix4::zeros(),
            p_eplus: 0.0,
        }
    }

    /// `M ← U M U† + dt · v v†`.
    pub fn accumulate(&mut self, click: &Amp4, dp_eplus: f64) {
        let u = &self.propagator;
        self.m = u * self.m * u.adjoint() + click * click.adjoint() * C64::new(self.dt, 0.0);
        self.p_eplus += dp_eplus;
    }

    pub fn reset(&mut self) {
        self.m = Matrix4::zeros();
        self.p_eplus = 0.0;
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionedObservables {
    pub n_a: f64,
    pub n_c: f64,
    /// Probability weight already moved into the emitted branch.
    pub p_emitted: f64,
}

/// TLS and cavity populations given no output click so far.
pub fn conditioned_observables(obs: &Observables, acc: &ClickAccumulator) -> Result<ConditionedObservables> {
    let m = &acc.m;
    let emitted = acc.trace();
    let denom = obs.norm - emitted;
    if !(denom > MIN_DENOMINATOR) {
        return Err(SimError::DegenerateConditioning { denominator: denom });
    }
    let n_a = (obs.n_a - m[(1, 1)].re - m[(3, 3)].re) / denom;
    let n_c = (obs.n_c - m[(2, 2)].re - m[(3, 3)].re) / denom;
    Ok(ConditionedObservables {
        n_a: n_a.clamp(0.0, 1.0),
        n_c: n_c.clamp(0.0, 1.0),
        p_emitted: emitted,
    })
}
