//! Physical parameters of the cavity / two-level-system / feedback-loop model.
//!
//! All rates, detunings and times are expressed in units of the coupling `g`
//! (times in `1/g`).

use std::f64::consts::TAU;

use crate::error::{Result, SimError};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Cavity-TLS coupling rate.
    pub g: f64,
    /// Cavity decay into the open (non-feedback) reservoir.
    pub gamma_c: f64,
    /// TLS spontaneous emission rate.
    pub gamma_t: f64,
    /// Coupling rate into the waveguide / feedback loop.
    pub gamma_l: f64,
    /// Drive Rabi frequency.
    pub omega: f64,
    /// TLS-laser detuning.
    pub delta_a: f64,
    /// Cavity-laser detuning.
    pub delta_c: f64,
    /// Round-trip delay of the loop.
    pub tau: f64,
    /// Loop phase, kept in `[0, 2π)`.
    pub phi: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            g: 1.0,
            gamma_c: 0.0,
            gamma_t: 0.0,
            gamma_l: 0.0,
            omega: 0.0,
            delta_a: 0.0,
            delta_c: 0.0,
            tau: 1.0,
            phi: 0.0,
        }
    }
}

fn check(name: &'static str, value: f64, ok: bool, reason: &str) -> Result<()> {
    if !value.is_finite() || !ok {
        return Err(SimError::InvalidParameter {
            name,
            reason: format!("{reason} (got {value})"),
        });
    }
    Ok(())
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        check("g", self.g, self.g > 0.0, "must be positive")?;
        check("gamma_C", self.gamma_c, self.gamma_c >= 0.0, "must be non-negative")?;
        check("gamma_T", self.gamma_t, self.gamma_t >= 0.0, "must be non-negative")?;
        check("gamma_L", self.gamma_l, self.gamma_l >= 0.0, "must be non-negative")?;
        check("Omega", self.omega, self.omega >= 0.0, "must be non-negative")?;
        check("delta_aL", self.delta_a, true, "must be finite")?;
        check("delta_cL", self.delta_c, true, "must be finite")?;
        check("tau", self.tau, self.tau > 0.0, "must be positive")?;
        check("phi", self.phi, true, "must be finite")?;
        Ok(())
    }

    /// Returns a copy with `phi` wrapped into `[0, 2π)`.
    pub fn normalized(mut self) -> Self {
        self.phi = wrap_phase(self.phi);
        self
    }

    /// The truncation to one photon in the loop needs either a short loop or
    /// a weak drive.
    pub fn one_photon_warning(&self) -> Option<String> {
        if self.gamma_l * self.tau >= 1.0 && self.omega >= 0.2 * self.g {
            Some(format!(
                "gamma_L*tau = {:.3} and Omega = {:.3} g: the one-photon-in-loop truncation may be inaccurate",
                self.gamma_l * self.tau,
                self.omega / self.g
            ))
        } else {
            None
        }
    }

    /// `A_n = n γ_C / 2 + i n δ_cL`.
    pub fn a_n(&self, n: u32) -> C64 {
        let n = f64::from(n);
        C64::new(n * self.gamma_c / 2.0, n * self.delta_c)
    }

    /// `B_n = (γ_T + n γ_C) / 2 + i (δ_aL + n δ_cL)`.
    pub fn b_n(&self, n: u32) -> C64 {
        let n = f64::from(n);
        C64::new(
            (self.gamma_t + n * self.gamma_c) / 2.0,
            self.delta_a + n * self.delta_c,
        )
    }

    /// `e^{iφ}`.
    pub fn loop_phase(&self) -> C64 {
        C64::from_polar(1.0, self.phi)
    }

    pub fn is_lossless(&self) -> bool {
        self.gamma_c == 0.0 && self.gamma_t == 0.0
    }
}

pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Which emitter couples to the waveguide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelVariant {
    /// Cavity + TLS with the cavity coupled to the loop (the full model).
    #[default]
    CavityLoop,
    /// Cavity removed; the TLS couples directly to the loop. Only meaningful
    /// for a single excitation without drive.
    TlsDirect,
}

impl ModelVariant {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cavity-loop" | "cavity" => Some(Self::CavityLoop),
            "tls-direct" | "tls" => Some(Self::TlsDirect),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::CavityLoop => "cavity-loop",
            Self::TlsDirect => "tls-direct",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_constants_fig9_rates() {
        let p = SystemParams {
            gamma_t: 0.01,
            gamma_c: 0.05,
            ..Default::default()
        };
        assert!((p.b_n(0) - C64::new(0.005, 0.0)).norm() < 1e-15);
        assert!((p.a_n(1) - C64::new(0.025, 0.0)).norm() < 1e-15);
        assert!((p.b_n(1) - C64::new(0.030, 0.0)).norm() < 1e-15);
        assert_eq!(p.a_n(0), C64::new(0.0, 0.0));
    }

    #[test]
    fn derived_constants_detuned() {
        let p = SystemParams {
            delta_c: 0.3,
            delta_a: 1.3,
            ..Default::default()
        };
        assert!((p.a_n(1) - C64::new(0.0, 0.3)).norm() < 1e-15);
        assert!((p.b_n(1) - C64::new(0.0, 1.6)).norm() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let bad = SystemParams {
            gamma_l: -1.0,
            ..Default::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(SimError::InvalidParameter { name: "gamma_L", .. })
        ));
        let bad = SystemParams {
            tau: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(SystemParams::default().validate().is_ok());
    }

    #[test]
    fn one_photon_flag() {
        let p = SystemParams {
            gamma_l: 2.0,
            tau: 1.0,
            omega: 0.5,
            ..Default::default()
        };
        assert!(p.one_photon_warning().is_some());
        let p = SystemParams { omega: 0.1, ..p };
        assert!(p.one_photon_warning().is_none());
    }

    #[test]
    fn phase_wrapping() {
        assert_eq!(wrap_phase(0.0), 0.0);
        assert!((wrap_phase(-0.5) - (TAU - 0.5)).abs() < 1e-15);
        assert!((wrap_phase(TAU + 1.0) - 1.0).abs() < 1e-12);
        assert!(wrap_phase(-1e-300) < TAU);
    }
}
