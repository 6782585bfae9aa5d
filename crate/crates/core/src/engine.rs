//! Single trajectories, ensembles and parameter sweeps.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::conditioning::{conditioned_observables, ClickAccumulator};
use crate::error::{Result, SimError};
use crate::evolution::advance;
use crate::fast;
use crate::history::{HistoryBuffer, Record};
use crate::jumps::{
    jump_probabilities, sample_and_apply, unconditioned_observables, uniform_open, JumpEvent, JumpOutcome,
};
use crate::kernel::{build_kernel_matrix, Eigensystem};
use crate::params::{ModelVariant, SystemParams};
use crate::state::{InitialState, TrajectoryState};

/// Trajectories per reduction chunk. Fixed so the summation order does not
/// depend on the thread count.
pub const CHUNK: usize = 16;

/// Largest relative mismatch tolerated before `τ/dt` or `t_end/dt` is
/// rejected as off-grid.
const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: SystemParams,
    pub dt: f64,
    pub t_end: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub init: InitialState,
    pub conditioning: bool,
    pub variant: ModelVariant,
    /// With jumps off every trajectory follows the no-jump branch.
    pub jumps: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: SystemParams::default(),
            dt: 0.01,
            t_end: 30.0,
            n_traj: 1,
            seed: 0,
            init: InitialState::TlsExcited,
            conditioning: true,
            variant: ModelVariant::CavityLoop,
            jumps: true,
        }
    }
}

fn grid_steps(name: &'static str, x: f64, dt: f64) -> Result<usize> {
    let r = x / dt;
    let n = r.round();
    if (r - n).abs() > GRID_TOL * r.max(1.0) {
        return Err(SimError::InvalidParameter {
            name,
            reason: format!("{x} is not a multiple of dt = {dt}"),
        });
    }
    Ok(n as usize)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidParameter {
                name: "dt",
                reason: format!("must be positive, got {}", self.dt),
            });
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(SimError::InvalidParameter {
                name: "t_end",
                reason: format!("must be non-negative, got {}", self.t_end),
            });
        }
        if self.n_traj == 0 {
            return Err(SimError::InvalidParameter {
                name: "n_traj",
                reason: "must be at least 1".into(),
            });
        }
        if self.lag_steps()? == 0 {
            return Err(SimError::InvalidParameter {
                name: "tau",
                reason: format!("shorter than one step dt = {}", self.dt),
            });
        }
        self.n_steps()?;
        Ok(())
    }

    pub fn n_steps(&self) -> Result<usize> {
        grid_steps("t_end", self.t_end, self.dt)
    }

    pub fn lag_steps(&self) -> Result<usize> {
        grid_steps("tau", self.params.tau, self.dt)
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        Ok((0..=self.n_steps()?).map(|k| k as f64 * self.dt).collect())
    }

    /// Whether the deterministic single-excitation solver can stand in for
    /// the full jump engine.
    pub fn fast_eligible(&self) -> bool {
        let p = &self.params;
        self.jumps
            && self.conditioning
            && p.omega == 0.0
            && p.gamma_c == 0.0
            && p.gamma_t == 0.0
            && self.init != InitialState::Ground
    }
}

/// The trajectory's random stream: the seed picks the key, the trajectory
/// index picks the stream, so draws never depend on scheduling.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Observables recorded at one grid point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Sample {
    pub n_a: f64,
    pub n_c: f64,
    pub n_loop: f64,
    pub norm: f64,
    pub n_a_cond: f64,
    pub n_c_cond: f64,
    pub p_eplus: f64,
}

pub const SAMPLE_FIELDS: usize = 7;

impl Sample {
    pub fn to_array(&self) -> [f64; SAMPLE_FIELDS] {
        [self.n_a, self.n_c, self.n_loop, self.norm, self.n_a_cond, self.n_c_cond, self.p_eplus]
    }

    pub fn from_array(a: [f64; SAMPLE_FIELDS]) -> Self {
        Self {
            n_a: a[0],
            n_c: a[1],
            n_loop: a[2],
            norm: a[3],
            n_a_cond: a[4],
            n_c_cond: a[5],
            p_eplus: a[6],
        }
    }

    /// `(n_a, n_c)` as used for averaging: conditioned when conditioning is on.
    pub fn reported(&self, conditioning: bool) -> (f64, f64) {
        if conditioning {
            (self.n_a_cond, self.n_c_cond)
        } else {
            (self.n_a, self.n_c)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub index: usize,
    pub samples: Vec<Sample>,
    pub jumps: Vec<JumpEvent>,
    /// Steps where the no-click branch was empty and unconditioned values
    /// were reported instead.
    pub degenerate_steps: usize,
    /// Steps with some per-step jump probability above the coarse-step limit.
    pub coarse_steps: usize,
}

impl TrajectoryResult {
    pub fn first_jump(&self) -> Option<&JumpEvent> {
        self.jumps.first()
    }
}

/// Runs trajectory `index` of `config`.
pub fn run_trajectory(config: &RunConfig, index: usize) -> Result<TrajectoryResult> {
    let prepared = Prepared::new(config)?;
    prepared.run(index)
}

/// Per-configuration data shared by all trajectories.
struct Prepared<'a> {
    config: &'a RunConfig,
    params: SystemParams,
    eig: Eigensystem,
    kernel: nalgebra::Matrix4<crate::C64>,
    n_steps: usize,
    lag: usize,
}

impl<'a> Prepared<'a> {
    fn new(config: &'a RunConfig) -> Result<Self> {
        config.validate()?;
        if config.variant == ModelVariant::TlsDirect {
            return Err(SimError::InvalidParameter {
                name: "variant",
                reason: "tls-direct is only available through the no-drive solver".into(),
            });
        }
        let params = config.params.normalized();
        Ok(Self {
            config,
            eig: Eigensystem::from_params(&params)?,
            kernel: build_kernel_matrix(&params),
            params,
            n_steps: config.n_steps()?,
            lag: config.lag_steps()?,
        })
    }

    fn run(&self, index: usize) -> Result<TrajectoryResult> {
        let (p, eig, dt) = (&self.params, &self.eig, self.config.dt);
        let mut rng = trajectory_rng(self.config.seed, index);
        let amps = self.config.init.amplitudes();
        let mut state = TrajectoryState::new(amps, uniform_open(&mut rng));
        let mut history = HistoryBuffer::new(dt, self.lag, eig, 0, Record::new(0.0, amps[2], amps[3], eig));
        let mut clicks = ClickAccumulator::new(&self.kernel, dt);

        let mut out = TrajectoryResult {
            index,
            samples: Vec::with_capacity(self.n_steps + 1),
            jumps: Vec::new(),
            degenerate_steps: 0,
            coarse_steps: 0,
        };

        for k in 0..=self.n_steps {
            let probs = jump_probabilities(&state, &history, p, dt)?;
            if probs.too_coarse() {
                out.coarse_steps += 1;
            }
            let obs = unconditioned_observables(&state.amps, &probs.loop_pop);
            let mut sample = Sample {
                n_a: obs.n_a / obs.norm,
                n_c: obs.n_c / obs.norm,
                n_loop: obs.n_loop / obs.norm,
                norm: obs.norm,
                n_a_cond: obs.n_a / obs.norm,
                n_c_cond: obs.n_c / obs.norm,
                p_eplus: clicks.p_eplus,
            };
            if self.config.conditioning {
                match conditioned_observables(&obs, &clicks) {
                    Ok(c) => {
                        sample.n_a_cond = c.n_a;
                        sample.n_c_cond = c.n_c;
                    }
                    Err(SimError::DegenerateConditioning { .. }) => out.degenerate_steps += 1,
                    Err(e) => return Err(e),
                }
            }
            out.samples.push(sample);
            if k == self.n_steps {
                break;
            }

            clicks.accumulate(&probs.click, probs.dp_loop);
            if self.config.jumps {
                let outcome = sample_and_apply(&mut state, &probs, &mut rng, &mut history, eig, p)?;
                if let JumpOutcome::Jump(ev) = outcome {
                    clicks.reset();
                    out.jumps.push(ev);
                }
            }
            state.amps = advance(&state.amps, &mut history, eig, &self.kernel, p)?;
            state.step += 1;
        }
        Ok(out)
    }
}

/// Running sums of a per-step series over trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSums {
    pub count: usize,
    pub sum: Vec<[f64; SAMPLE_FIELDS]>,
    pub sum_sq: Vec<[f64; SAMPLE_FIELDS]>,
}

impl SeriesSums {
    fn new(len: usize) -> Self {
        Self {
            count: 0,
            sum: vec![[0.0; SAMPLE_FIELDS]; len],
            sum_sq: vec![[0.0; SAMPLE_FIELDS]; len],
        }
    }

    fn add(&mut self, samples: &[Sample]) {
        self.count += 1;
        for ((s, q), x) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(samples) {
            for (i, v) in x.to_array().into_iter().enumerate() {
                s[i] += v;
                q[i] += v * v;
            }
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            for i in 0..SAMPLE_FIELDS {
                a[i] += b[i];
            }
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            for i in 0..SAMPLE_FIELDS {
                a[i] += b[i];
            }
        }
        self
    }
}

/// Sample mean and standard error from a count, a sum and a sum of squares.
pub fn mean_se(n: usize, sum: f64, sum_sq: f64) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub mean: Vec<Sample>,
    pub se: Vec<Sample>,
    /// First jump of every trajectory, indexed by trajectory.
    pub first_jumps: Vec<Option<JumpEvent>>,
    pub total_jumps: usize,
    pub degenerate_steps: usize,
    pub coarse_steps: usize,
}

impl EnsembleResult {
    pub fn n_traj(&self) -> usize {
        self.first_jumps.len()
    }

    /// Fraction of trajectories with no jump strictly before each grid time.
    pub fn survival(&self) -> Vec<f64> {
        let n = self.n_traj();
        let mut dead = vec![0usize; self.times.len() + 1];
        for ev in self.first_jumps.iter().flatten() {
            // the record at the jump step is still pre-jump
            dead[(ev.step + 1).min(self.times.len())] += 1;
        }
        let mut acc = 0;
        (0..self.times.len())
            .map(|k| {
                acc += dead[k];
                (n - acc) as f64 / n.max(1) as f64
            })
            .collect()
    }

    /// First-jump times binned over `[0, t_end]`.
    pub fn jump_histogram(&self, bins: usize) -> Vec<usize> {
        let mut h = vec![0; bins];
        let t_end = *self.times.last().unwrap_or(&0.0);
        if bins == 0 || t_end <= 0.0 {
            return h;
        }
        for ev in self.first_jumps.iter().flatten() {
            let b = ((ev.t / t_end) * bins as f64) as usize;
            h[b.min(bins - 1)] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Serial,
}

/// Runs `run_chunk` over fixed index chunks and merges the results pairwise
/// in index order.
fn reduce_chunks<A, F, M>(n: usize, exec: Execution, run_chunk: F, merge: M) -> Result<Option<A>>
where
    A: Send,
    F: Fn(Range<usize>) -> Result<A> + Sync,
    M: Fn(A, A) -> A,
{
    let ranges: Vec<Range<usize>> = (0..n).step_by(CHUNK).map(|s| s..(s + CHUNK).min(n)).collect();
    let parts: Vec<A> = match exec {
        Execution::Parallel => ranges.into_par_iter().map(&run_chunk).collect::<Result<_>>()?,
        Execution::Serial => ranges.into_iter().map(&run_chunk).collect::<Result<_>>()?,
    };
    Ok(pairwise(parts, merge))
}

fn pairwise<A, M: Fn(A, A) -> A>(mut parts: Vec<A>, merge: M) -> Option<A> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop()
}

struct ChunkOut {
    sums: SeriesSums,
    first_jumps: Vec<Option<JumpEvent>>,
    total_jumps: usize,
    degenerate: usize,
    coarse: usize,
}

pub fn run_ensemble(config: &RunConfig) -> Result<EnsembleResult> {
    run_ensemble_with(config, Execution::Parallel)
}

pub fn run_ensemble_with(config: &RunConfig, exec: Execution) -> Result<EnsembleResult> {
    let prepared = Prepared::new(config)?;
    let len = prepared.n_steps + 1;
    let run_chunk = |r: Range<usize>| -> Result<ChunkOut> {
        let mut out = ChunkOut {
            sums: SeriesSums::new(len),
            first_jumps: Vec::with_capacity(r.len()),
            total_jumps: 0,
            degenerate: 0,
            coarse: 0,
        };
        for i in r {
            let tr = prepared.run(i)?;
            out.sums.add(&tr.samples);
            out.first_jumps.push(tr.first_jump().copied());
            out.total_jumps += tr.jumps.len();
            out.degenerate += tr.degenerate_steps;
            out.coarse += tr.coarse_steps;
        }
        Ok(out)
    };
    let merge = |mut a: ChunkOut, b: ChunkOut| {
        a.sums = a.sums.merge(&b.sums);
        a.first_jumps.extend(b.first_jumps);
        a.total_jumps += b.total_jumps;
        a.degenerate += b.degenerate;
        a.coarse += b.coarse;
        a
    };
    let all = reduce_chunks(config.n_traj, exec, run_chunk, merge)?.expect("n_traj >= 1");

    let n = all.sums.count;
    let mut mean = Vec::with_capacity(len);
    let mut se = Vec::with_capacity(len);
    for (s, q) in all.sums.sum.iter().zip(&all.sums.sum_sq) {
        let mut m = [0.0; SAMPLE_FIELDS];
        let mut e = [0.0; SAMPLE_FIELDS];
        for i in 0..SAMPLE_FIELDS {
            (m[i], e[i]) = mean_se(n, s[i], q[i]);
        }
        mean.push(Sample::from_array(m));
        se.push(Sample::from_array(e));
    }
    Ok(EnsembleResult {
        times: config.times()?,
        mean,
        se,
        first_jumps: all.first_jumps,
        total_jumps: all.total_jumps,
        degenerate_steps: all.degenerate,
        coarse_steps: all.coarse,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Phi,
    Tau,
    /// Moves `δ_aL` to the grid value and keeps `δ_aL − δ_cL` fixed.
    Delta,
}

impl SweepAxis {
    pub fn apply(&self, base: &RunConfig, x: f64) -> RunConfig {
        let mut c = base.clone();
        match self {
            Self::Phi => c.params.phi = x,
            Self::Tau => c.params.tau = x,
            Self::Delta => {
                let offset = base.params.delta_a - base.params.delta_c;
                c.params.delta_a = x;
                c.params.delta_c = x - offset;
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub x: f64,
    pub na_mean: f64,
    pub na_se: f64,
    pub nc_mean: f64,
    pub nc_se: f64,
}

/// Window-averaged populations for each trajectory, reduced per grid point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct PairSums {
    n: usize,
    a: f64,
    a2: f64,
    c: f64,
    c2: f64,
}

impl PairSums {
    fn add(&mut self, a: f64, c: f64) {
        self.n += 1;
        self.a += a;
        self.a2 += a * a;
        self.c += c;
        self.c2 += c * c;
    }

    fn merge(self, o: Self) -> Self {
        Self {
            n: self.n + o.n,
            a: self.a + o.a,
            a2: self.a2 + o.a2,
            c: self.c + o.c,
            c2: self.c2 + o.c2,
        }
    }
}

fn window_indices(config: &RunConfig, window: (f64, f64)) -> Result<Range<usize>> {
    let n = config.n_steps()?;
    let lo = (window.0 / config.dt).round().max(0.0) as usize;
    let hi = ((window.1 / config.dt).round().max(0.0) as usize).min(n);
    if !(window.0 <= window.1) || lo > hi {
        return Err(SimError::InvalidParameter {
            name: "window",
            reason: format!("empty observation window [{}, {}]", window.0, window.1),
        });
    }
    Ok(lo..hi + 1)
}

/// One point of a sweep: trajectories reduced to their mean populations over
/// `window`. The no-drive solver is used whenever it applies.
pub fn sweep_point(config: &RunConfig, window: (f64, f64), exec: Execution) -> Result<(SweepRow, bool)> {
    let idx = window_indices(config, window)?;
    let w = idx.len() as f64;
    let sums = if config.fast_eligible() {
        let series = fast::solve_dde(&config.params, config.variant, config.init, config.dt, config.t_end)?;
        let mut s = PairSums::default();
        for i in 0..config.n_traj {
            let eps = fast::threshold(config.seed, i);
            let (mut a, mut c) = (0.0, 0.0);
            for k in idx.clone() {
                if eps > series.p_eplus[k] {
                    a += series.n_a_cond[k];
                    c += series.n_c_cond[k];
                }
            }
            s.add(a / w, c / w);
        }
        (s, true)
    } else {
        let prepared = Prepared::new(config)?;
        let run_chunk = |r: Range<usize>| -> Result<PairSums> {
            let mut s = PairSums::default();
            for i in r {
                let tr = prepared.run(i)?;
                let (mut a, mut c) = (0.0, 0.0);
                for k in idx.clone() {
                    let (x, y) = tr.samples[k].reported(config.conditioning);
                    a += x;
                    c += y;
                }
                s.add(a / w, c / w);
            }
            Ok(s)
        };
        let s = reduce_chunks(config.n_traj, exec, run_chunk, PairSums::merge)?.expect("n_traj >= 1");
        (s, false)
    };
    let (s, fast_used) = sums;
    let (na_mean, na_se) = mean_se(s.n, s.a, s.a2);
    let (nc_mean, nc_se) = mean_se(s.n, s.c, s.c2);
    Ok((
        SweepRow {
            x: f64::NAN,
            na_mean,
            na_se,
            nc_mean,
            nc_se,
        },
        fast_used,
    ))
}

/// Evaluates every grid value of `axis`; rows come back in grid order.
pub fn sweep(
    base: &RunConfig,
    axis: SweepAxis,
    grid: &[f64],
    window: (f64, f64),
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    grid.iter()
        .map(|&x| {
            let (mut row, _) = sweep_point(&axis.apply(base, x), window, exec)?;
            row.x = x;
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rabi() -> RunConfig {
        RunConfig {
            params: SystemParams::default(),
            dt: 0.01,
            t_end: 3.0,
            conditioning: false,
            ..Default::default()
        }
    }

    #[test]
    fn vacuum_rabi_single_trajectory() {
        let tr = run_trajectory(&rabi(), 0).unwrap();
        assert!(tr.jumps.is_empty());
        for (k, s) in tr.samples.iter().enumerate() {
            let t = k as f64 * 0.01;
            assert!((s.n_a - t.cos().powi(2)).abs() < 1e-8);
            assert!((s.norm - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn config_grid_checks() {
        let mut c = rabi();
        c.params.tau = 1.005;
        assert!(matches!(c.validate(), Err(SimError::InvalidParameter { name: "tau", .. })));
        c.params.tau = 0.001;
        assert!(c.validate().is_err());
        c.params.tau = 1.0;
        c.n_traj = 0;
        assert!(c.validate().is_err());
        c.n_traj = 1;
        c.variant = ModelVariant::TlsDirect;
        assert!(run_trajectory(&c, 0).is_err());
    }

    #[test]
    fn same_index_same_trajectory() {
        let c = RunConfig {
            params: SystemParams {
                gamma_c: 0.5,
                gamma_t: 0.3,
                omega: 0.4,
                gamma_l: 1.0,
                tau: 0.5,
                ..Default::default()
            },
            t_end: 4.0,
            seed: 5,
            ..Default::default()
        };
        let a = run_trajectory(&c, 3).unwrap();
        let b = run_trajectory(&c, 3).unwrap();
        assert_eq!(a, b);
        assert!(!a.jumps.is_empty());
        let other = run_trajectory(&c, 4).unwrap();
        assert_ne!(a.jumps, other.jumps);
    }

    #[test]
    fn single_member_ensemble_is_the_trajectory() {
        let mut c = rabi();
        c.params.gamma_c = 0.4;
        c.seed = 9;
        let tr = run_trajectory(&c, 0).unwrap();
        let ens = run_ensemble(&c).unwrap();
        assert_eq!(ens.mean, tr.samples);
        assert!(ens.se.iter().all(|s| *s == Sample::default()));
    }

    #[test]
    fn serial_and_parallel_agree_bitwise() {
        let c = RunConfig {
            params: SystemParams {
                gamma_c: 0.3,
                omega: 0.2,
                gamma_l: 1.0,
                tau: 0.5,
                ..Default::default()
            },
            t_end: 2.0,
            n_traj: 40,
            seed: 1,
            ..Default::default()
        };
        let a = run_ensemble_with(&c, Execution::Serial).unwrap();
        let b = run_ensemble_with(&c, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pairwise_merge_order() {
        let v: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let s = pairwise(v, |a, b| format!("({a}{b})")).unwrap();
        assert_eq!(s, "(((01)(23))4)");
        assert!(pairwise(Vec::<u8>::new(), |a, _| a).is_none());
    }

    #[test]
    fn empty_sweep_grid() {
        let rows = sweep(&rabi(), SweepAxis::Phi, &[], (0.0, 1.0), Execution::Serial).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn delta_axis_keeps_offset() {
        let mut base = rabi();
        base.params.delta_a = 0.5;
        base.params.delta_c = -0.5;
        let c = SweepAxis::Delta.apply(&base, 2.0);
        assert_eq!((c.params.delta_a, c.params.delta_c), (2.0, 1.0));
    }
}
