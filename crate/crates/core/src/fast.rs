//! Single-excitation dynamics without drive.
//!
//! With `Ω = 0` and no Lindblad channels a trajectory either keeps following
//! the no-jump branch or emits its one photon through the output and stays
//! in the ground state. The no-jump branch is a deterministic delay
//! differential equation, so one solve plus a threshold per trajectory
//! replaces the full jump engine.

use std::f64::consts::TAU;

use crate::conditioning::MIN_DENOMINATOR;
use crate::engine::trajectory_rng;
use crate::error::{Result, SimError};
use crate::jumps::uniform_open;
use crate::params::{wrap_phase, ModelVariant, SystemParams};
use crate::state::InitialState;
use crate::C64;

/// No-jump branch of the single-excitation problem on the step grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DdeSeries {
    pub times: Vec<f64>,
    /// TLS-excited amplitude (`β₀`, or `β` for the TLS-direct model).
    pub tls: Vec<C64>,
    /// Cavity-excited amplitude `α₁`; zero for the TLS-direct model.
    pub cavity: Vec<C64>,
    /// Probability of an output click before each grid time.
    pub p_eplus: Vec<f64>,
    /// Norm including the photon in the loop, with the same trapezoid
    /// quadrature as the full engine.
    pub norm: Vec<f64>,
    pub n_a_cond: Vec<f64>,
    pub n_c_cond: Vec<f64>,
}

impl DdeSeries {
    /// Unnormalized population left on the no-jump branch.
    pub fn population(&self, k: usize) -> f64 {
        self.tls[k].norm_sqr() + self.cavity[k].norm_sqr()
    }
}

fn check_applicable(p: &SystemParams, init: InitialState, variant: ModelVariant) -> Result<()> {
    if p.omega != 0.0 {
        return Err(SimError::FastPathNotApplicable(format!(
            "drive Omega = {} mixes excitation numbers",
            p.omega
        )));
    }
    if p.gamma_c != 0.0 || p.gamma_t != 0.0 {
        return Err(SimError::FastPathNotApplicable(
            "gamma_C and gamma_T must be zero".into(),
        ));
    }
    match (init, variant) {
        (InitialState::Ground, _) => Err(SimError::FastPathNotApplicable(
            "the ground state has no excitation to follow".into(),
        )),
        (InitialState::CavityExcited, ModelVariant::TlsDirect) => Err(SimError::FastPathNotApplicable(
            "the TLS-direct model has no cavity".into(),
        )),
        _ => Ok(()),
    }
}

/// Right-hand side for `y = (β₀, α₁)`, given the delayed `α₁(t − τ)`.
fn rhs(p: &SystemParams, variant: ModelVariant, y: [C64; 2], delayed: C64) -> [C64; 2] {
    let q = p.gamma_l / 4.0;
    let gain = p.loop_phase() * delayed * q;
    match variant {
        ModelVariant::CavityLoop => {
            let ig = C64::new(0.0, p.g);
            [
                -p.b_n(0) * y[0] - ig * y[1],
                -p.a_n(1) * y[1] - ig * y[0] - y[1] * q + gain,
            ]
        }
        ModelVariant::TlsDirect => [-p.b_n(0) * y[0] - y[0] * q + gain, C64::new(0.0, 0.0)],
    }
}

/// Integrates the no-jump branch with the same delayed Runge-Kutta rule as
/// the full engine.
pub fn solve_dde(
    params: &SystemParams,
    variant: ModelVariant,
    init: InitialState,
    dt: f64,
    t_end: f64,
) -> Result<DdeSeries> {
    params.validate()?;
    check_applicable(params, init, variant)?;
    let p = params.normalized();
    let m = (p.tau / dt).round() as usize;
    let n = (t_end / dt).round() as usize;
    if m == 0 {
        return Err(SimError::InvalidParameter {
            name: "tau",
            reason: format!("shorter than one step dt = {dt}"),
        });
    }
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let y0 = match init {
        InitialState::CavityExcited => [zero, one],
        _ => [one, zero],
    };
    // slot of the amplitude that leaks into the loop
    let out = match variant {
        ModelVariant::CavityLoop => 1,
        ModelVariant::TlsDirect => 0,
    };

    let mut ys: Vec<[C64; 2]> = Vec::with_capacity(n + 1);
    ys.push(y0);
    let mut p_eplus = Vec::with_capacity(n + 1);
    let mut norm = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    let q = p.gamma_l / 4.0;
    let phase = p.loop_phase();
    // running ∫|a|² and ∫ a*(t'') a(t'' − τ) over the leaked amplitude
    let mut pop_int = 0.0;
    let mut lag_int = C64::new(0.0, 0.0);
    for k in 0..=n {
        p_eplus.push(acc);
        if k > 0 {
            let (a0, a1) = (ys[k - 1][out], ys[k][out]);
            pop_int += 0.5 * dt * (a0.norm_sqr() + a1.norm_sqr());
            if k > m {
                let (b0, b1) = (ys[k - 1 - m][out], ys[k - m][out]);
                lag_int += (a0.conj() * b0 + a1.conj() * b1) * (0.5 * dt);
            }
        }
        let in_loop = (q * (2.0 * pop_int - 2.0 * (phase * lag_int).re)).max(0.0);
        let y = ys[k];
        norm.push(y[0].norm_sqr() + y[1].norm_sqr() + in_loop);
        let (d0, d1) = if k >= m {
            (ys[k - m][out], ys[k + 1 - m][out])
        } else {
            (zero, zero)
        };
        acc += dt * q * (y[out] - phase * d0).norm_sqr();
        if k == n {
            break;
        }
        let add = |a: [C64; 2], b: [C64; 2], h: f64| [a[0] + b[0] * h, a[1] + b[1] * h];
        let k1 = rhs(&p, variant, y, d0);
        let k2 = rhs(&p, variant, add(y, k1, dt / 2.0), d0);
        let k3 = rhs(&p, variant, add(y, k2, dt / 2.0), d1);
        let k4 = rhs(&p, variant, add(y, k3, dt), d1);
        ys.push([0, 1].map(|i| y[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0)));
    }

    // the emitted branch holds exactly P, all of it in the ground state
    let cond = |pop: f64, k: usize| {
        let d = norm[k] - p_eplus[k];
        if d > MIN_DENOMINATOR {
            (pop / d).clamp(0.0, 1.0)
        } else {
            pop / norm[k]
        }
    };
    Ok(DdeSeries {
        times: (0..=n).map(|k| k as f64 * dt).collect(),
        n_a_cond: ys.iter().enumerate().map(|(k, y)| cond(y[0].norm_sqr(), k)).collect(),
        n_c_cond: ys.iter().enumerate().map(|(k, y)| cond(y[1].norm_sqr(), k)).collect(),
        tls: ys.iter().map(|y| y[0]).collect(),
        cavity: ys.iter().map(|y| y[1]).collect(),
        p_eplus,
        norm,
    })
}

/// Waiting-time threshold of trajectory `index`: the first draw of its
/// stream, the same one the full engine starts with.
pub fn threshold(seed: u64, index: usize) -> f64 {
    uniform_open(&mut trajectory_rng(seed, index))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FastSample {
    /// Whether each trajectory is still on the no-jump branch at the end.
    pub survived: Vec<bool>,
    pub fraction: f64,
}

/// Labels each trajectory by comparing its threshold with the final click
/// probability.
pub fn sample_fast(p_of_t: &[f64], n_traj: usize, seed: u64) -> FastSample {
    let p_end = p_of_t.last().copied().unwrap_or(0.0);
    let survived: Vec<bool> = (0..n_traj).map(|i| threshold(seed, i) > p_end).collect();
    let alive = survived.iter().filter(|&&s| s).count();
    FastSample {
        survived,
        fraction: if n_traj == 0 { 0.0 } else { alive as f64 / n_traj as f64 },
    }
}

/// Surviving fraction at every grid time for the same thresholds.
pub fn survival_curve(p_of_t: &[f64], n_traj: usize, seed: u64) -> Vec<f64> {
    let mut eps: Vec<f64> = (0..n_traj).map(|i| threshold(seed, i)).collect();
    eps.sort_by(f64::total_cmp);
    p_of_t
        .iter()
        .map(|&p| {
            let below = eps.partition_point(|&e| e <= p);
            (n_traj - below) as f64 / n_traj.max(1) as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrappingPhases {
    pub phases: Vec<f64>,
    /// One phase means stabilized Rabi oscillations; two mean a trapped
    /// superposition that stops oscillating.
    pub unique: bool,
}

/// Phases in `[0, 2π)` with `±gτ − φ ∈ 2πℤ`.
pub fn trapping_phases(g: f64, tau: f64) -> TrappingPhases {
    let tol = 1e-9;
    let mut phases: Vec<f64> = Vec::new();
    for s in [1.0, -1.0] {
        let phi = wrap_phase(s * g * tau);
        let dup = phases.iter().any(|&x| {
            let d = (x - phi).abs();
            d < tol || (TAU - d) < tol
        });
        if !dup {
            phases.push(phi);
        }
    }
    phases.sort_by(f64::total_cmp);
    TrappingPhases {
        unique: phases.len() == 1,
        phases,
    }
}

/// `−{Λ − i(γ_L/4)[1 − e^{i(φ − Λτ)}]} Λ + g²`.
pub fn characteristic_residual(lambda: C64, p: &SystemParams) -> C64 {
    let i = C64::new(0.0, 1.0);
    let e = (i * (C64::new(p.phi, 0.0) - lambda * p.tau)).exp();
    let bracket = lambda - i * (p.gamma_l / 4.0) * (C64::new(1.0, 0.0) - e);
    -bracket * lambda + p.g * p.g
}
