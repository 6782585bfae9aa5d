//! Jump probabilities, waiting-time sampling, and the three jump operators.

use rand::Rng;

use crate::error::{Result, SimError};
use crate::history::{Amp4, HistoryBuffer, Record, RowMap, RowSource, Segment};
use crate::kernel::{n_vector, Eigensystem};
use crate::params::SystemParams;
use crate::state::TrajectoryState;
use crate::C64;

/// Loop integrals below this are reported as a bug rather than clamped.
pub const NEGATIVE_TOL: f64 = 1e-8;
/// Per-step probabilities above this make double jumps per step likely.
pub const COARSE_STEP_WARN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JumpKind {
    /// Cavity decay into the open reservoir.
    Cavity,
    /// TLS spontaneous emission.
    Tls,
    /// Photon leaving through the waveguide output.
    Loop,
}

impl JumpKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Cavity => "C0",
            Self::Tls => "C1",
            Self::Loop => "Eplus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub t: f64,
    pub step: usize,
    pub kind: JumpKind,
    pub norm_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpOutcome {
    NoJump,
    Jump(JumpEvent),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpProbabilities {
    pub dp_cavity: f64,
    pub dp_tls: f64,
    pub dp_loop: f64,
    /// Loop populations `I₁..I₄`.
    pub loop_pop: [f64; 4],
    /// Unnormalized state left behind by an output click.
    pub click: Amp4,
}

impl JumpProbabilities {
    pub fn as_array(&self) -> [f64; 3] {
        [self.dp_cavity, self.dp_tls, self.dp_loop]
    }

    pub fn total(&self) -> f64 {
        self.dp_cavity + self.dp_tls + self.dp_loop
    }

    pub fn too_coarse(&self) -> bool {
        self.as_array().iter().any(|&p| p > COARSE_STEP_WARN)
    }
}

fn check_loop_integrals(raw: [f64; 4]) -> Result<[f64; 4]> {
    for (mu, &v) in raw.iter().enumerate() {
        if v < -NEGATIVE_TOL {
            return Err(SimError::NegativeLoopIntegral { channel: mu + 1, value: v });
        }
    }
    Ok(raw.map(|v| v.max(0.0)))
}

/// Loop populations from the history's running accumulators.
pub fn loop_integrals(history: &HistoryBuffer, params: &SystemParams) -> Result<[f64; 4]> {
    check_loop_integrals(history.loop_integrals(params.gamma_l, params.loop_phase()))
}

/// Channel values of one segment's record seen from time `t`.
fn channel_at(eig: &Eigensystem, seg: &Segment, k: usize, t: f64) -> Result<Amp4> {
    let rec = seg.record(k).ok_or(SimError::HistoryGap { step: k })?;
    let n = n_vector(eig, &rec.w, t, rec.t)?;
    Ok(seg.row_map.apply(&(eig.e * n)))
}

/// Straight trapezoid evaluation of `I_μ` (channel `mu` in `1..=4`) over the
/// stored records. Quadratic in history length; the simulator itself uses
/// the recursive accumulators in [`HistoryBuffer`].
pub fn compute_i_direct(
    mu: usize,
    history: &HistoryBuffer,
    eig: &Eigensystem,
    params: &SystemParams,
) -> Result<f64> {
    assert!((1..=4).contains(&mu));
    let ch = mu - 1;
    let segs = history.segments();
    let t = history.latest().t;
    let dt = history.dt();
    let m = history.lag_steps();
    let origin = history.origin();

    let interval_owner = |j: usize| -> Result<&Segment> {
        segs.iter()
            .find(|s| s.k_start <= j && j < s.k_end())
            .ok_or(SimError::HistoryGap { step: j })
    };

    let mut diag = 0.0;
    let mut lag = C64::new(0.0, 0.0);
    for seg in segs {
        if seg.row_map.0[ch] == RowSource::Absent {
            continue;
        }
        for j in seg.k_start..seg.k_end() {
            let x0 = channel_at(eig, seg, j, t)?[ch];
            let x1 = channel_at(eig, seg, j + 1, t)?[ch];
            diag += 0.5 * dt * (x0.norm_sqr() + x1.norm_sqr());
            if j >= origin + m {
                let partner = interval_owner(j - m)?;
                let y0 = channel_at(eig, partner, j - m, t)?[ch];
                let y1 = channel_at(eig, partner, j + 1 - m, t)?[ch];
                lag += (x0.conj() * y0 + x1.conj() * y1) * (0.5 * dt);
            }
        }
    }
    let raw = params.gamma_l / 4.0 * (2.0 * diag - 2.0 * (params.loop_phase() * lag).re);
    if raw < -NEGATIVE_TOL {
        return Err(SimError::NegativeLoopIntegral { channel: mu, value: raw });
    }
    Ok(raw.max(0.0))
}

/// `ψ_click ∝ E₊ ψ`: component `μ` is
/// `(−i √γ_L / 2) [X_μ(t, t) − e^{iφ} θ(t − τ) X_μ(t, t − τ)]`.
pub fn click_state(amps: &Amp4, k: usize, history: &HistoryBuffer, params: &SystemParams) -> Result<Amp4> {
    let zero = C64::new(0.0, 0.0);
    let local = Amp4::new(amps[2], amps[3], zero, zero);
    let pref = C64::new(0.0, -params.gamma_l.sqrt() / 2.0);
    let v = match history.delayed_point(k)? {
        Some(x) => local - x * params.loop_phase(),
        None => local,
    };
    Ok(v * pref)
}

pub fn jump_probabilities(
    state: &TrajectoryState,
    history: &HistoryBuffer,
    params: &SystemParams,
    dt: f64,
) -> Result<JumpProbabilities> {
    let loop_pop = loop_integrals(history, params)?;
    let a = &state.amps;
    let [_, i2, i3, i4] = loop_pop;
    let cavity = params.gamma_c * (a[2].norm_sqr() + a[3].norm_sqr() + i3 + i4);
    let tls = params.gamma_t * (a[1].norm_sqr() + a[3].norm_sqr() + i2 + i4);
    let click = click_state(a, state.step, history, params)?;
    Ok(JumpProbabilities {
        dp_cavity: dt * cavity,
        dp_tls: dt * tls,
        dp_loop: dt * click.norm_squared(),
        loop_pop,
        click,
    })
}

/// Picks a jump channel with probability proportional to `dp`, given a
/// uniform `u` in `[0, 1)`.
pub fn select_jump(dp: [f64; 3], u: f64) -> Result<JumpKind> {
    let total: f64 = dp.iter().sum();
    if !(total > 0.0) {
        return Err(SimError::ZeroNormAfterJump { kind: "any" });
    }
    let x = u * total;
    let kinds = [JumpKind::Cavity, JumpKind::Tls, JumpKind::Loop];
    let mut acc = 0.0;
    for (kind, p) in kinds.iter().zip(dp) {
        acc += p;
        if x < acc && p > 0.0 {
            return Ok(*kind);
        }
    }
    // u·total rounded onto the upper edge; take the last channel with weight
    let idx = dp.iter().rposition(|&p| p > 0.0).unwrap();
    Ok(kinds[idx])
}

/// A uniform draw in the open interval `(0, 1)`.
pub fn uniform_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// Applies `C₀ = √γ_C c`, given `⟨C₀†C₀⟩` before the jump.
pub fn apply_cavity_jump(
    state: &mut TrajectoryState,
    history: &mut HistoryBuffer,
    eig: &Eigensystem,
    params: &SystemParams,
    expectation: f64,
) -> Result<f64> {
    if !(expectation > 0.0) {
        return Err(SimError::ZeroNormAfterJump { kind: "C0" });
    }
    let norm = expectation.sqrt();
    let s = C64::new(params.gamma_c.sqrt() / norm, 0.0);
    let zero = C64::new(0.0, 0.0);
    let a = state.amps;
    state.amps = Amp4::new(a[2] * s, a[3] * s, zero, zero);
    let t = history.latest().t;
    history.jump(&RowMap::after_cavity_jump(s), Record::new(t, zero, zero, eig));
    Ok(norm)
}

/// Applies `C₁ = √γ_T σ⁻`, given `⟨C₁†C₁⟩` before the jump.
pub fn apply_tls_jump(
    state: &mut TrajectoryState,
    history: &mut HistoryBuffer,
    eig: &Eigensystem,
    params: &SystemParams,
    expectation: f64,
) -> Result<f64> {
    if !(expectation > 0.0) {
        return Err(SimError::ZeroNormAfterJump { kind: "C1" });
    }
    let norm = expectation.sqrt();
    let s = C64::new(params.gamma_t.sqrt() / norm, 0.0);
    let zero = C64::new(0.0, 0.0);
    let a = state.amps;
    state.amps = Amp4::new(a[1] * s, zero, a[3] * s, zero);
    let t = history.latest().t;
    history.jump(&RowMap::after_tls_jump(s), Record::new(t, a[3] * s, zero, eig));
    Ok(norm)
}

/// Applies the output-click operator: the state becomes the normalized
/// click state and the loop memory is discarded.
pub fn apply_loop_jump(
    state: &mut TrajectoryState,
    history: &mut HistoryBuffer,
    eig: &Eigensystem,
    click: &Amp4,
) -> Result<f64> {
    let norm = click.norm();
    if !(norm > 0.0) {
        return Err(SimError::ZeroNormAfterJump { kind: "Eplus" });
    }
    state.amps = click / C64::new(norm, 0.0);
    let t = history.latest().t;
    let k = history.current_step();
    history.reset(k, Record::new(t, state.amps[2], state.amps[3], eig));
    Ok(norm)
}

/// Adds this step's probabilities to the waiting-time integral and, once it
/// passes the threshold, applies a jump chosen from this step's relative
/// probabilities. Two uniforms are consumed per jump: the channel selector
/// and the next threshold.
pub fn sample_and_apply<R: Rng + ?Sized>(
    state: &mut TrajectoryState,
    probs: &JumpProbabilities,
    rng: &mut R,
    history: &mut HistoryBuffer,
    eig: &Eigensystem,
    params: &SystemParams,
) -> Result<JumpOutcome> {
    for (acc, p) in state.p_accum.iter_mut().zip(probs.as_array()) {
        *acc += p;
    }
    if state.p_total() < state.epsilon {
        return Ok(JumpOutcome::NoJump);
    }
    let dt = history.dt();
    let t = history.latest().t;
    let step = state.step;
    let kind = select_jump(probs.as_array(), uniform_open(rng))?;
    let norm_factor = match kind {
        JumpKind::Cavity => apply_cavity_jump(state, history, eig, params, probs.dp_cavity / dt)?,
        JumpKind::Tls => apply_tls_jump(state, history, eig, params, probs.dp_tls / dt)?,
        JumpKind::Loop => apply_loop_jump(state, history, eig, &probs.click)?,
    };
    state.reset_accumulators();
    state.epsilon = uniform_open(rng);
    Ok(JumpOutcome::Jump(JumpEvent { t, step, kind, norm_factor }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub n_a: f64,
    pub n_c: f64,
    pub n_loop: f64,
    /// Norm of the full state, loop included.
    pub norm: f64,
}

/// Populations of the (unnormalized) state, loop photon included.
pub fn unconditioned_observables(amps: &Amp4, loop_pop: &[f64; 4]) -> Observables {
    let p = amps.map(|a| a.norm_sqr());
    let n_loop: f64 = loop_pop.iter().sum();
    Observables {
        n_a: p[1] + p[3] + loop_pop[1] + loop_pop[3],
        n_c: p[2] + p[3] + loop_pop[2] + loop_pop[3],
        n_loop,
        norm: p.iter().sum::<f64>() + n_loop,
    }
}
