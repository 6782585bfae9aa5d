use crate::history::Amp4;
use crate::C64;

/// Initial system state; the loop always starts empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialState {
    Ground,
    #[default]
    TlsExcited,
    CavityExcited,
}

impl InitialState {
    /// Amplitudes `(α₀, β₀, α₁, β₁)`.
    pub fn amplitudes(&self) -> Amp4 {
        let one = C64::new(1.0, 0.0);
        let mut a = Amp4::zeros();
        match self {
            Self::Ground => a[0] = one,
            Self::TlsExcited => a[1] = one,
            Self::CavityExcited => a[2] = one,
        }
        a
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ground" => Some(Self::Ground),
            "tls-excited" | "excited" => Some(Self::TlsExcited),
            "cavity-excited" => Some(Self::CavityExcited),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ground => "ground",
            Self::TlsExcited => "tls-excited",
            Self::CavityExcited => "cavity-excited",
        }
    }
}

/// Amplitudes of one trajectory plus its waiting-time bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    /// `(α₀, β₀, α₁, β₁)`; not renormalized between jumps.
    pub amps: Amp4,
    /// Current grid step.
    pub step: usize,
    /// Integrated jump probability since the last jump, per channel
    /// `(C₀, C₁, E₊)`.
    pub p_accum: [f64; 3],
    /// Waiting-time threshold drawn at the last jump (or at the start).
    pub epsilon: f64,
}

impl TrajectoryState {
    pub fn new(amps: Amp4, epsilon: f64) -> Self {
        Self {
            amps,
            step: 0,
            p_accum: [0.0; 3],
            epsilon,
        }
    }

    pub fn p_total(&self) -> f64 {
        self.p_accum.iter().sum()
    }

    pub fn reset_accumulators(&mut self) {
        self.p_accum = [0.0; 3];
    }

    /// Squared norm of the system part only.
    pub fn system_norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }
}
