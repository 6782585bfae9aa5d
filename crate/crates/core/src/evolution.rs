//! Coherent evolution of `(α₀, β₀, α₁, β₁)` between jumps.

use nalgebra::Matrix4;

use crate::error::{Result, SimError};
use crate::history::{Amp4, HistoryBuffer, Record};
use crate::kernel::Eigensystem;
use crate::params::SystemParams;
use crate::C64;

/// Which amplitude equation a feedback term enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackChannel {
    /// The `dα₁/dt` equation, fed by loop channel 1.
    Alpha,
    /// The `dβ₁/dt` equation, fed by loop channel 2.
    Beta,
}

impl FeedbackChannel {
    fn index(self) -> usize {
        match self {
            Self::Alpha => 0,
            Self::Beta => 1,
        }
    }
}

/// Loop back-action on `α₁` or `β₁` at grid step `k`:
/// `(γ_L/4) [−X_μ(t, t) + e^{iφ} θ(t − τ) X_ν(t, t − τ)]`.
pub fn feedback_term(
    channel: FeedbackChannel,
    k: usize,
    history: &HistoryBuffer,
    params: &SystemParams,
) -> Result<C64> {
    if history.current_step() != k {
        return Err(SimError::HistoryGap { step: k });
    }
    let latest = history.latest();
    let local = match channel {
        FeedbackChannel::Alpha => latest.alpha1,
        FeedbackChannel::Beta => latest.beta1,
    };
    let delayed = history
        .delayed_point(k)?
        .map_or(C64::new(0.0, 0.0), |x| x[channel.index()]);
    Ok((delayed * params.loop_phase() - local) * (params.gamma_l / 4.0))
}

/// Right-hand side of the amplitude equations given the delayed loop
/// channels `(X₁, X₂)(t, t − τ)` (zero before the feedback returns).
pub fn derivative(
    amps: &Amp4,
    delayed: [C64; 2],
    kernel: &Matrix4<C64>,
    params: &SystemParams,
) -> Amp4 {
    let mut d = kernel * amps;
    let q = params.gamma_l / 4.0;
    let phase = params.loop_phase();
    d[2] += (phase * delayed[0] - amps[2]) * q;
    d[3] += (phase * delayed[1] - amps[3]) * q;
    d
}

/// One fourth-order Runge-Kutta step from `t_k` to `t_k + dt`.
///
/// The two mid-point stages need the delayed amplitude half a step off the
/// grid; the first uses the value lagged from `t_k`, the second the value
/// lagged from `t_{k+1}`.
pub fn rk4_delay_step(
    amps: &Amp4,
    k: usize,
    history: &HistoryBuffer,
    kernel: &Matrix4<C64>,
    params: &SystemParams,
) -> Result<Amp4> {
    let dt = history.dt();
    let zero = C64::new(0.0, 0.0);
    let (d0, d1) = match history.delayed_interval(k)? {
        Some((x0, x1)) => ([x0[0], x0[1]], [x1[0], x1[1]]),
        None => ([zero; 2], [zero; 2]),
    };
    let h = C64::new(dt, 0.0);
    let h2 = C64::new(dt / 2.0, 0.0);
    let k1 = derivative(amps, d0, kernel, params);
    let k2 = derivative(&(amps + k1 * h2), d0, kernel, params);
    let k3 = derivative(&(amps + k2 * h2), d1, kernel, params);
    let k4 = derivative(&(amps + k3 * h), d1, kernel, params);
    let two = C64::new(2.0, 0.0);
    Ok(amps + (k1 + k2 * two + k3 * two + k4) * C64::new(dt / 6.0, 0.0))
}

/// Steps the amplitudes and appends the new record to the history.
pub fn advance(
    amps: &Amp4,
    history: &mut HistoryBuffer,
    eig: &Eigensystem,
    kernel: &Matrix4<C64>,
    params: &SystemParams,
) -> Result<Amp4> {
    let k = history.current_step();
    let next = rk4_delay_step(amps, k, history, kernel, params)?;
    let t = (k + 1) as f64 * history.dt();
    history.push(Record::new(t, next[2], next[3], eig))?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_kernel_matrix;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn jaynes_cummings_derivative() {
        let p = SystemParams::default();
        let kernel = build_kernel_matrix(&p);
        let amps = Amp4::new(c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
        let d = derivative(&amps, [c(0.0, 0.0); 2], &kernel, &p);
        assert_eq!(d, Amp4::new(c(0.0, 0.0), c(0.0, 0.0), c(0.0, -1.0), c(0.0, 0.0)));
        assert_eq!(derivative(&Amp4::zeros(), [c(0.0, 0.0); 2], &kernel, &p), Amp4::zeros());
    }

    #[test]
    fn reduces_to_single_excitation_dde() {
        // dα₁/dt = −igβ₀ − (γ_L/4)α₁ + (γ_L/4)e^{iφ}α₁(t − τ)
        let p = SystemParams {
            gamma_l: 2.0,
            phi: 0.7,
            ..Default::default()
        };
        let kernel = build_kernel_matrix(&p);
        let amps = Amp4::new(c(0.0, 0.0), c(0.3, 0.1), c(-0.2, 0.4), c(0.0, 0.0));
        let lagged = c(0.5, -0.25);
        let d = derivative(&amps, [lagged, c(0.0, 0.0)], &kernel, &p);
        let expect = c(0.0, -1.0) * amps[1] - amps[2] * 0.5 + C64::from_polar(0.5, 0.7) * lagged;
        assert!((d[2] - expect).norm() < 1e-15);
        assert!((d[1] - c(0.0, -1.0) * amps[2]).norm() < 1e-15);
    }

    #[test]
    fn feedback_term_local_only_before_tau() {
        let p = SystemParams {
            gamma_l: 1.0,
            tau: 1.0,
            ..Default::default()
        };
        let eig = Eigensystem::from_params(&p).unwrap();
        let first = Record::new(0.0, c(0.4, -0.2), c(0.1, 0.0), &eig);
        let h = HistoryBuffer::new(0.1, 10, &eig, 0, first);
        let a = feedback_term(FeedbackChannel::Alpha, 0, &h, &p).unwrap();
        let b = feedback_term(FeedbackChannel::Beta, 0, &h, &p).unwrap();
        assert!((a + c(0.4, -0.2) * 0.25).norm() < 1e-15);
        assert!((b + c(0.1, 0.0) * 0.25).norm() < 1e-15);
        assert!(feedback_term(FeedbackChannel::Alpha, 3, &h, &p).is_err());
    }

    #[test]
    fn zero_state_stays_zero() {
        let p = SystemParams {
            gamma_l: 1.0,
            omega: 0.3,
            ..Default::default()
        };
        let eig = Eigensystem::from_params(&p).unwrap();
        let kernel = build_kernel_matrix(&p);
        let mut h = HistoryBuffer::new(0.01, 5, &eig, 0, Record::new(0.0, c(0.0, 0.0), c(0.0, 0.0), &eig));
        let mut amps = Amp4::zeros();
        for _ in 0..20 {
            amps = advance(&amps, &mut h, &eig, &kernel, &p).unwrap();
        }
        assert_eq!(amps, Amp4::zeros());
    }
}
