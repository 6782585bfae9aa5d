//! Per-trajectory memory of the emitted field.
//!
//! Every grid step stores the source vector `w(t_k)`; the loop amplitude in
//! channel `μ` seen at time `t` from an emission at `t''` is
//! `X_μ(t, t'') = [E · diag(e^{c (t − t'')}) · w(t'')]_μ`. A cavity or TLS jump
//! relabels the channels of everything emitted before it, so the history is
//! split into segments, each carrying a [`RowMap`].
//!
//! The loop populations `I_μ` are double integrals over the whole history.
//! Instead of re-running the quadrature each step, each segment keeps the
//! running matrix `S_jl = ∫ e^{(c_j + c_l*)(t − t'')} w_j(t'') w_l*(t'') dt''`
//! and each (later, earlier) segment pair keeps the lag-τ correlation
//! `L_jl = ∫ e^{(c_j + c_l*)(t − t'')} w_j(t'' − τ) w_l*(t'') dt''`. Both obey a
//! one-step recurrence, so the cost per step is independent of the history
//! length.

use nalgebra::{Matrix4, Vector4};

use crate::error::{Result, SimError};
use crate::kernel::{project_w, Eigensystem};
use crate::C64;

pub type Amp4 = Vector4<C64>;

/// Where a loop channel of a past segment reads its amplitude from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowSource {
    Absent,
    Row { row: usize, scale: C64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowMap(pub [RowSource; 4]);

impl RowMap {
    pub fn identity() -> Self {
        let one = C64::new(1.0, 0.0);
        Self([0, 1, 2, 3].map(|row| RowSource::Row { row, scale: one }))
    }

    /// Channel map after a cavity jump `C₀`: the loop photon that was paired
    /// with a cavity photon is now paired with the empty cavity.
    pub fn after_cavity_jump(scale: C64) -> Self {
        Self([
            RowSource::Row { row: 2, scale },
            RowSource::Row { row: 3, scale },
            RowSource::Absent,
            RowSource::Absent,
        ])
    }

    /// Channel map after a TLS jump `C₁` (σ⁻ moves excited-TLS amplitudes onto
    /// ground-TLS ones).
    pub fn after_tls_jump(scale: C64) -> Self {
        Self([
            RowSource::Row { row: 1, scale },
            RowSource::Absent,
            RowSource::Row { row: 3, scale },
            RowSource::Absent,
        ])
    }

    /// Composes a later jump map onto this segment's map.
    pub fn then(&self, jump: &RowMap) -> RowMap {
        RowMap(jump.0.map(|src| match src {
            RowSource::Absent => RowSource::Absent,
            RowSource::Row { row, scale } => match self.0[row] {
                RowSource::Absent => RowSource::Absent,
                RowSource::Row { row: r2, scale: s2 } => RowSource::Row {
                    row: r2,
                    scale: scale * s2,
                },
            },
        }))
    }

    /// Applies the map to the raw channel vector of this segment.
    pub fn apply(&self, raw: &Amp4) -> Amp4 {
        Amp4::from_fn(|mu, _| match self.0[mu] {
            RowSource::Absent => C64::new(0.0, 0.0),
            RowSource::Row { row, scale } => raw[row] * scale,
        })
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub t: f64,
    pub alpha1: C64,
    pub beta1: C64,
    pub w: Amp4,
}

impl Record {
    pub fn new(t: f64, alpha1: C64, beta1: C64, eig: &Eigensystem) -> Self {
        Self {
            t,
            alpha1,
            beta1,
            w: project_w(eig, alpha1, beta1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub k_start: usize,
    pub records: Vec<Record>,
    pub row_map: RowMap,
    pop_acc: Matrix4<C64>,
}

impl Segment {
    fn open(k_start: usize, first: Record) -> Self {
        Self {
            k_start,
            records: vec![first],
            row_map: RowMap::identity(),
            pop_acc: Matrix4::zeros(),
        }
    }

    pub fn k_end(&self) -> usize {
        self.k_start + self.records.len() - 1
    }

    pub fn t_start(&self) -> f64 {
        self.records[0].t
    }

    pub fn t_end(&self) -> f64 {
        self.records[self.records.len() - 1].t
    }

    pub fn record(&self, k: usize) -> Option<&Record> {
        k.checked_sub(self.k_start).and_then(|i| self.records.get(i))
    }
}

#[derive(Debug, Clone)]
struct LagPair {
    later: usize,
    earlier: usize,
    acc: Matrix4<C64>,
}

#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    dt: f64,
    lag_steps: usize,
    k_origin: usize,
    segments: Vec<Segment>,
    lag_pairs: Vec<LagPair>,
    e: Matrix4<C64>,
    /// `e^{(c_j + c_l*) dt}`.
    decay: Matrix4<C64>,
    /// `e^{c_j τ}`.
    delay_prop: Amp4,
}

impl HistoryBuffer {
    /// Creates a buffer whose first record sits at grid step `k0`.
    pub fn new(dt: f64, lag_steps: usize, eig: &Eigensystem, k0: usize, first: Record) -> Self {
        assert!(lag_steps >= 1, "delay must span at least one step");
        let decay = Matrix4::from_fn(|j, l| ((eig.c[j] + eig.c[l].conj()) * dt).exp());
        let tau = lag_steps as f64 * dt;
        Self {
            dt,
            lag_steps,
            k_origin: k0,
            segments: vec![Segment::open(k0, first)],
            lag_pairs: Vec::new(),
            e: eig.e,
            decay,
            delay_prop: eig.propagation(tau),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn lag_steps(&self) -> usize {
        self.lag_steps
    }

    pub fn origin(&self) -> usize {
        self.k_origin
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn current_step(&self) -> usize {
        self.current().k_end()
    }

    pub fn current(&self) -> &Segment {
        self.segments.last().expect("history always has an open segment")
    }

    pub fn latest(&self) -> &Record {
        let seg = self.current();
        &seg.records[seg.records.len() - 1]
    }

    pub fn record_count(&self) -> usize {
        self.segments.iter().map(|s| s.records.len()).sum()
    }

    /// Drops everything and opens a fresh identity segment at `k0`.
    pub fn reset(&mut self, k0: usize, first: Record) {
        self.k_origin = k0;
        self.segments.clear();
        self.lag_pairs.clear();
        self.segments.push(Segment::open(k0, first));
    }

    /// Closes the current segment at its last step, relabels all past
    /// segments with `jump`, and opens a new identity segment at the same
    /// step holding the post-jump record.
    pub fn jump(&mut self, jump: &RowMap, post: Record) {
        for seg in &mut self.segments {
            seg.row_map = seg.row_map.then(jump);
        }
        let k = self.current_step();
        self.segments.push(Segment::open(k, post));
    }

    /// Whether the delayed term is switched on at step `k`.
    pub fn delay_active(&self, k: usize) -> bool {
        k >= self.k_origin + self.lag_steps
    }

    /// Segment holding grid point `k`; at a jump boundary the pre-jump
    /// segment wins.
    fn segment_at_point(&self, k: usize) -> Result<usize> {
        let idx = self.segments.partition_point(|s| s.k_end() < k);
        match self.segments.get(idx) {
            Some(s) if s.k_start <= k => Ok(idx),
            _ => Err(SimError::HistoryGap { step: k }),
        }
    }

    /// Segment holding the whole interval `[k, k + 1]`.
    fn segment_for_interval(&self, k: usize) -> Result<usize> {
        let idx = self.segments.partition_point(|s| s.k_end() <= k);
        match self.segments.get(idx) {
            Some(s) if s.k_start <= k && k < s.k_end() => Ok(idx),
            _ => Err(SimError::HistoryGap { step: k }),
        }
    }

    fn delayed_channels(&self, seg: usize, k: usize) -> Result<Amp4> {
        let s = &self.segments[seg];
        let rec = s.record(k).ok_or(SimError::HistoryGap { step: k })?;
        let raw = self.e * self.delay_prop.component_mul(&rec.w);
        Ok(s.row_map.apply(&raw))
    }

    /// `X(t_k, t_k − τ)` for all four channels, or `None` before the first
    /// return of the feedback.
    pub fn delayed_point(&self, k: usize) -> Result<Option<Amp4>> {
        if !self.delay_active(k) {
            return Ok(None);
        }
        let kd = k - self.lag_steps;
        let seg = self.segment_at_point(kd)?;
        self.delayed_channels(seg, kd).map(Some)
    }

    /// Delayed channels at both ends of the step `[t_k, t_{k+1}]`, read from
    /// the single segment that holds the lagged interval.
    pub fn delayed_interval(&self, k: usize) -> Result<Option<(Amp4, Amp4)>> {
        if !self.delay_active(k) {
            return Ok(None);
        }
        let kd = k - self.lag_steps;
        let seg = self.segment_for_interval(kd)?;
        Ok(Some((
            self.delayed_channels(seg, kd)?,
            self.delayed_channels(seg, kd + 1)?,
        )))
    }

    /// Appends the record for the next grid step and advances the integral
    /// accumulators by one trapezoid panel.
    pub fn push(&mut self, rec: Record) -> Result<()> {
        let k = self.current_step();
        let half = C64::new(self.dt / 2.0, 0.0);
        let decay = self.decay;

        for seg in &mut self.segments {
            seg.pop_acc.component_mul_assign(&decay);
        }
        for pair in &mut self.lag_pairs {
            pair.acc.component_mul_assign(&decay);
        }

        let a = self.segments.len() - 1;
        let wk = self.latest().w;
        let wk1 = rec.w;
        let panel = (wk * wk.adjoint()).component_mul(&decay) + wk1 * wk1.adjoint();
        self.segments[a].pop_acc += panel * half;

        if self.delay_active(k) {
            let kd = k - self.lag_steps;
            let b = self.segment_for_interval(kd)?;
            let u0 = self.segments[b].record(kd).ok_or(SimError::HistoryGap { step: kd })?.w;
            let u1 = self.segments[b]
                .record(kd + 1)
                .ok_or(SimError::HistoryGap { step: kd + 1 })?
                .w;
            let panel = (u0 * wk.adjoint()).component_mul(&decay) + u1 * wk1.adjoint();
            let pos = self.lag_pairs.iter().position(|p| p.later == a && p.earlier == b);
            let pair = match pos {
                Some(i) => &mut self.lag_pairs[i],
                None => {
                    self.lag_pairs.push(LagPair {
                        later: a,
                        earlier: b,
                        acc: Matrix4::zeros(),
                    });
                    self.lag_pairs.last_mut().unwrap()
                }
            };
            pair.acc += panel * half;
        }

        self.segments[a].records.push(rec);
        Ok(())
    }

    /// The four raw (unclamped) loop integrals `I_μ` at the current step.
    pub fn loop_integrals(&self, gamma_l: f64, phase: C64) -> [f64; 4] {
        let e = &self.e;
        let e_adj = e.adjoint();
        let e_delay = e * Matrix4::from_diagonal(&self.delay_prop);

        let mut diag = [0.0f64; 4];
        for seg in &self.segments {
            let q = e * seg.pop_acc * e_adj;
            for (mu, d) in diag.iter_mut().enumerate() {
                if let RowSource::Row { row, scale } = seg.row_map.0[mu] {
                    *d += scale.norm_sqr() * q[(row, row)].re;
                }
            }
        }

        let mut lag = [C64::new(0.0, 0.0); 4];
        for pair in &self.lag_pairs {
            let q = e_delay * pair.acc * e_adj;
            let map_a = &self.segments[pair.later].row_map;
            let map_b = &self.segments[pair.earlier].row_map;
            for (mu, l) in lag.iter_mut().enumerate() {
                if let (
                    RowSource::Row { row: ra, scale: sa },
                    RowSource::Row { row: rb, scale: sb },
                ) = (map_a.0[mu], map_b.0[mu])
                {
                    *l += sa.conj() * sb * q[(rb, ra)];
                }
            }
        }

        let pref = gamma_l / 4.0;
        [0, 1, 2, 3].map(|mu| pref * (2.0 * diag[mu] - 2.0 * (phase * lag[mu]).re))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SystemParams;

    fn eig() -> Eigensystem {
        Eigensystem::from_params(&SystemParams {
            omega: 0.2,
            gamma_c: 0.1,
            ..Default::default()
        })
        .unwrap()
    }

    fn rec(eig: &Eigensystem, k: usize, a: f64, b: f64) -> Record {
        Record::new(k as f64 * 0.1, C64::new(a, 0.0), C64::new(0.0, b), eig)
    }

    #[test]
    fn row_map_composition() {
        let s1 = C64::new(2.0, 0.0);
        let s2 = C64::new(0.5, 1.0);
        // C0 then C1: channel 1 <- (after C1) row 2 <- (after C0) row 4
        let m = RowMap::identity()
            .then(&RowMap::after_cavity_jump(s1))
            .then(&RowMap::after_tls_jump(s2));
        assert_eq!(m.0[0], RowSource::Row { row: 3, scale: s1 * s2 });
        assert_eq!(m.0[1], RowSource::Absent);
        assert_eq!(m.0[2], RowSource::Absent);
        assert_eq!(m.0[3], RowSource::Absent);
        // two cavity jumps empty everything
        let m = RowMap::after_cavity_jump(s1).then(&RowMap::after_cavity_jump(s1));
        assert!(m.0.iter().all(|s| *s == RowSource::Absent));
    }

    #[test]
    fn segment_lookup_prefers_pre_jump() {
        let eig = eig();
        let mut h = HistoryBuffer::new(0.1, 2, &eig, 0, rec(&eig, 0, 1.0, 0.0));
        for k in 1..=4 {
            h.push(rec(&eig, k, 1.0, 0.0)).unwrap();
        }
        h.jump(&RowMap::after_cavity_jump(C64::new(1.0, 0.0)), rec(&eig, 4, 0.0, 0.0));
        for k in 5..=8 {
            h.push(rec(&eig, k, 0.3, 0.1)).unwrap();
        }
        assert_eq!(h.segment_at_point(4).unwrap(), 0);
        assert_eq!(h.segment_at_point(5).unwrap(), 1);
        assert_eq!(h.segment_for_interval(3).unwrap(), 0);
        assert_eq!(h.segment_for_interval(4).unwrap(), 1);
        assert!(h.segment_for_interval(8).is_err());
        assert_eq!(h.record_count(), 10);
    }

    #[test]
    fn delay_off_before_lag() {
        let eig = eig();
        let mut h = HistoryBuffer::new(0.1, 3, &eig, 0, rec(&eig, 0, 1.0, 0.0));
        for k in 1..=2 {
            h.push(rec(&eig, k, 1.0, 0.5)).unwrap();
        }
        assert!(h.delayed_point(2).unwrap().is_none());
        h.push(rec(&eig, 3, 1.0, 0.5)).unwrap();
        assert!(h.delayed_point(3).unwrap().is_some());
    }

    #[test]
    fn reset_discards_memory() {
        let eig = eig();
        let mut h = HistoryBuffer::new(0.1, 2, &eig, 0, rec(&eig, 0, 1.0, 0.0));
        for k in 1..=10 {
            h.push(rec(&eig, k, 1.0, 0.2)).unwrap();
        }
        h.reset(10, rec(&eig, 10, 0.5, 0.0));
        assert_eq!(h.record_count(), 1);
        assert!(h.delayed_point(11).unwrap().is_none());
        assert_eq!(h.loop_integrals(1.0, C64::new(1.0, 0.0)), [0.0; 4]);
    }
}
