mod common;

use mcis_core::forward::{ForwardSolver, ScanOptions, SolverOptions};
use mcis_core::profiles::ProfileMatrix;
use mcis_core::{BoundState, ChannelSystem};

fn states(sys: &ChannelSystem, pot: &ProfileMatrix, opts: SolverOptions) -> Vec<BoundState> {
    ForwardSolver::new(pot, sys, opts).unwrap().bound_states(&ScanOptions::default()).unwrap()
}

fn assert_close(have: f64, want: f64, rel: f64, what: &str) {
    assert!((have - want).abs() <= rel * want.abs(), "{what}: {have} vs {want}");
}

fn assert_normalization(st: &BoundState, want: [f64; 4]) {
    let m = st.normalization();
    for (e, w) in want.iter().enumerate() {
        let z = m.as_slice()[e];
        assert_close(z.re, *w, 0.10, &format!("M[{e}]"));
        assert!(z.im.abs() <= 1e-9 * m.max_norm().max(1.0), "M[{e}] not real: {z}");
    }
}

#[test]
fn example2_strong_coupling_binds_once() {
    let (sys, pot) = common::example2(0.5);
    let s = states(&sys, &pot, SolverOptions::default());
    assert_eq!(s.len(), 1);
    assert!((s[0].energy() + 0.00053).abs() <= 2e-4, "E = {}", s[0].energy());
}

#[test]
fn example2_weak_coupling_has_no_state() {
    let (sys, pot) = common::example2(0.12);
    assert!(states(&sys, &pot, SolverOptions::default()).is_empty());
}

#[test]
fn example3_bound_state() {
    let (sys, pot) = common::example3(0.0);
    let s = states(&sys, &pot, SolverOptions::default());
    assert_eq!(s.len(), 1);
    assert!((s[0].energy() + 0.01558).abs() <= 5e-4, "E = {}", s[0].energy());
    assert_normalization(&s[0], [-0.0065, 0.0216, 0.0216, -0.0711]);
    let m = s[0].normalization();
    assert!((m[(0, 1)] - m[(1, 0)]).norm() <= 1e-6);
}

#[test]
fn example4_bound_state_and_residue_ratio() {
    let eps2 = 0.01;
    let (sys, pot) = common::example3(eps2);
    let s = states(&sys, &pot, SolverOptions::default());
    assert_eq!(s.len(), 1);
    assert!((s[0].energy() + 0.0068).abs() <= 5e-4, "E = {}", s[0].energy());
    assert_normalization(&s[0], [-0.0104, 0.0400, 0.0257, -0.1031]);
    let m = s[0].normalization();
    let k2 = s[0].kappa * s[0].kappa;
    let ratio = m[(0, 1)].re / m[(1, 0)].re;
    assert_close(ratio, ((k2 + eps2) / k2).sqrt(), 0.02, "M12/M21");
    assert!(s[0].residue_symmetry() <= 1e-6);
}

#[test]
fn zero_potential_has_no_states() {
    let sys = ChannelSystem::new(vec![0.0, 0.02]).unwrap();
    let pot = ProfileMatrix::new(&sys, vec![]).unwrap();
    assert!(states(&sys, &pot, SolverOptions::default()).is_empty());
}

#[test]
fn bound_states_stable_under_step_halving() {
    for eps2 in [0.0, 0.01] {
        let (sys, pot) = common::example3(eps2);
        let coarse = states(&sys, &pot, SolverOptions::default());
        let fine = states(&sys, &pot, SolverOptions::default().refined(2.0));
        assert_eq!(coarse.len(), fine.len());
        for (a, b) in coarse.iter().zip(&fine) {
            assert!((a.kappa - b.kappa).abs() <= 1e-8, "{} vs {}", a.kappa, b.kappa);
        }
    }
}
