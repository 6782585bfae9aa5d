use fbtraj::evolution::advance;
use fbtraj::history::{HistoryBuffer, Record};
use fbtraj::jumps::{
    apply_cavity_jump, apply_loop_jump, apply_tls_jump, compute_i_direct, jump_probabilities, loop_integrals,
    unconditioned_observables,
};
use fbtraj::kernel::{build_kernel_matrix, Eigensystem};
use fbtraj::state::{InitialState, TrajectoryState};
use fbtraj::{SystemParams, C64};

fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol * (1.0 + b.abs()), "{what}: {a} vs {b}");
}

#[test]
fn constant_history_before_tau() {
    let p = SystemParams {
        gamma_l: 1.6,
        tau: 5.0,
        phi: 0.9,
        ..Default::default()
    };
    let eig = Eigensystem::from_params(&p).unwrap();
    let k = C64::new(0.3, -0.4);
    let dt = 0.01;
    let zero = C64::new(0.0, 0.0);
    let mut h = HistoryBuffer::new(dt, 500, &eig, 0, Record::new(0.0, k, zero, &eig));
    assert_eq!(loop_integrals(&h, &p).unwrap(), [0.0; 4]);
    for step in 1..=200 {
        h.push(Record::new(step as f64 * dt, k, zero, &eig)).unwrap();
    }
    let t = 2.0;
    let i = loop_integrals(&h, &p).unwrap();
    assert_close(i[0], p.gamma_l / 2.0 * k.norm_sqr() * t, 1e-10, "I1");
    assert_close(compute_i_direct(1, &h, &eig, &p).unwrap(), i[0], 1e-10, "direct I1");
    for (mu, v) in i.iter().enumerate().skip(1) {
        assert!(v.abs() < 1e-12, "I{} = {v}", mu + 1);
    }
}

/// Drives a lossy, driven trajectory through C0, C1 and output jumps at
/// fixed steps and compares the recursive loop integrals with the direct
/// quadrature at every step.
#[test]
fn recursive_matches_direct_through_jumps() {
    let p = SystemParams {
        gamma_c: 0.3,
        gamma_t: 0.2,
        gamma_l: 1.2,
        omega: 0.4,
        delta_a: 0.3,
        delta_c: -0.2,
        tau: 0.25,
        phi: 2.1,
        ..Default::default()
    };
    let dt = 0.01;
    let eig = Eigensystem::from_params(&p).unwrap();
    let kernel = build_kernel_matrix(&p);
    let amps = InitialState::TlsExcited.amplitudes();
    let mut state = TrajectoryState::new(amps, 0.5);
    let mut h = HistoryBuffer::new(dt, 25, &eig, 0, Record::new(0.0, amps[2], amps[3], &eig));
    let mut max_i = 0.0f64;
    for k in 0..=260 {
        let probs = jump_probabilities(&state, &h, &p, dt).unwrap();
        for mu in 1..=4 {
            let direct = compute_i_direct(mu, &h, &eig, &p).unwrap();
            assert_close(probs.loop_pop[mu - 1], direct, 1e-9, &format!("I{mu} at step {k}"));
            max_i = max_i.max(direct);
        }
        match k {
            70 | 150 => {
                apply_cavity_jump(&mut state, &mut h, &eig, &p, probs.dp_cavity / dt).unwrap();
            }
            100 | 180 => {
                apply_tls_jump(&mut state, &mut h, &eig, &p, probs.dp_tls / dt).unwrap();
            }
            220 => {
                apply_loop_jump(&mut state, &mut h, &eig, &probs.click).unwrap();
                assert_eq!(loop_integrals(&h, &p).unwrap(), [0.0; 4]);
            }
            _ => {}
        }
        if k == 100 || k == 70 {
            // right after a jump the renormalized state has unit norm
            let i = loop_integrals(&h, &p).unwrap();
            let obs = unconditioned_observables(&state.amps, &i);
            assert_close(obs.norm, 1.0, 1e-9, "post-jump norm");
        }
        state.amps = advance(&state.amps, &mut h, &eig, &kernel, &p).unwrap();
        state.step += 1;
    }
    assert!(max_i > 1e-3, "loop never populated: {max_i}");
}

#[test]
fn lossless_norm_bookkeeping() {
    // system norm plus loop population stays 1 on the no-jump branch
    let p = SystemParams {
        gamma_l: 1.0,
        omega: 0.15,
        tau: 1.5,
        phi: 0.4,
        ..Default::default()
    };
    let dt = 0.01;
    let eig = Eigensystem::from_params(&p).unwrap();
    let kernel = build_kernel_matrix(&p);
    let mut amps = InitialState::TlsExcited.amplitudes();
    let mut h = HistoryBuffer::new(dt, 150, &eig, 0, Record::new(0.0, amps[2], amps[3], &eig));
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let i = loop_integrals(&h, &p).unwrap();
        let sys: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        worst = worst.max((sys + i.iter().sum::<f64>() - 1.0).abs());
        amps = advance(&amps, &mut h, &eig, &kernel, &p).unwrap();
    }
    assert!(worst < 1e-4, "norm drift {worst}");
}
