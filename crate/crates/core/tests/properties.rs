mod common;

use std::sync::OnceLock;

use mcis_core::channels::reflection_symmetry_residual;
use mcis_core::forward::{
    flux_unitarity_residual, momentum_grid, wronskian, ForwardSolver, ScanOptions, SolverOptions,
};
use mcis_core::kernel::{InputKernel, KernelGrid, KernelOptions};
use mcis_core::marchenko::{reconstruct, MarchenkoOptions};
use mcis_core::profiles::{ProfileMatrix, ProfileSpec};
use mcis_core::{BoundState, ChannelSystem, Complex64, ReflectionTable};
use proptest::prelude::*;

struct Data {
    table: ReflectionTable,
    states: Vec<BoundState>,
}

fn solve(sys: &ChannelSystem, pot: &ProfileMatrix) -> Data {
    let solver = ForwardSolver::new(pot, sys, SolverOptions::default()).unwrap();
    let k = momentum_grid(sys, 12.0, 1200, 16, 0.05).unwrap();
    Data { table: solver.reflection_table(&k).unwrap(), states: solver.bound_states(&ScanOptions::default()).unwrap() }
}

fn example2() -> &'static Data {
    static D: OnceLock<Data> = OnceLock::new();
    D.get_or_init(|| {
        let (sys, pot) = common::example2(0.12);
        solve(&sys, &pot)
    })
}

fn example4() -> &'static Data {
    static D: OnceLock<Data> = OnceLock::new();
    D.get_or_init(|| {
        let (sys, pot) = common::example3(0.01);
        solve(&sys, &pot)
    })
}

fn example4_kernel() -> &'static InputKernel {
    static K: OnceLock<InputKernel> = OnceLock::new();
    K.get_or_init(|| {
        let d = example4();
        let grid = KernelGrid::symmetric(4.5, 0.05).unwrap();
        InputKernel::build(&d.table, &d.states, grid, &KernelOptions::default()).unwrap()
    })
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

#[test]
fn reflection_symmetry_at_table_points() {
    for d in [example2(), example4()] {
        let mut worst = 0.0_f64;
        for (&k, r) in d.table.k.iter().zip(&d.table.r) {
            let km = d.table.sys.momenta(c(k)).unwrap();
            worst = worst.max(reflection_symmetry_residual(r, &km).unwrap());
        }
        assert!(worst <= 1e-6, "{worst:e}");
        assert_eq!(worst, d.table.symmetry_residual);
    }
}

#[test]
fn flux_unitarity_above_threshold() {
    for d in [example2(), example4()] {
        let top = d.table.sys.highest_threshold().sqrt();
        let mut checked = 0;
        for ((&k, r), t) in d.table.k.iter().zip(&d.table.r).zip(&d.table.t) {
            if k > top {
                let km = d.table.sys.momenta(c(k)).unwrap();
                let res = flux_unitarity_residual(r, t, &km);
                assert!(res <= 1e-6, "k = {k}: {res:e}");
                checked += 1;
            }
        }
        assert!(checked > 1000);
    }
}

#[test]
fn negative_momentum_gives_conjugate() {
    for (sys, pot) in [common::example2(0.12), common::example3(0.01)] {
        let solver = ForwardSolver::new(&pot, &sys, SolverOptions::default()).unwrap();
        for k in [0.05, 0.12, 0.4, 1.7, 6.0] {
            let (r, t) = solver.reflection_transmission(k).unwrap();
            let (rm, tm) = solver.reflection_transmission(-k).unwrap();
            assert!((&rm - &r.conj()).max_norm() <= 1e-8, "k = {k}");
            assert!((&tm - &t.conj()).max_norm() <= 1e-8, "k = {k}");
        }
    }
}

fn wronskian_spread(sys: &ChannelSystem, pot: &ProfileMatrix, k: Complex64) -> f64 {
    let solver = ForwardSolver::new(pot, sys, SolverOptions::default()).unwrap();
    let minus = solver.jost_minus_on_grid(k, -0.5, 0.25, 25).unwrap();
    let mut ws = Vec::new();
    for (p, m) in minus.iter().enumerate() {
        let x = -0.5 + 0.25 * p as f64;
        let plus = solver.jost_plus_at(k, x).unwrap();
        ws.push(wronskian(&plus.psi, &plus.dpsi, &m.psi, &m.dpsi).unwrap());
    }
    let scale = ws.iter().map(|w| w.max_norm()).fold(0.0, f64::max);
    ws.iter().map(|w| (w - &ws[0]).max_norm()).fold(0.0, f64::max) / scale
}

#[test]
fn wronskian_is_constant() {
    let (sys, pot) = common::example3(0.01);
    for k in [c(0.05), c(0.3), c(2.0), Complex64::new(0.0, 0.2)] {
        let spread = wronskian_spread(&sys, &pot, k);
        assert!(spread <= 1e-8, "k = {k}: {spread:e}");
    }
}

#[test]
fn kernel_symmetry() {
    let res = example4_kernel().symmetry_residual();
    assert!(res <= 1e-6, "{res:e}");
}

#[test]
fn kernel_compensation_left_of_origin() {
    let res = example4_kernel().compensation_residual(-0.5);
    assert!(res <= 0.01, "{res:e}");
}

#[test]
fn diagonal_residual_of_reconstruction() {
    let rec = reconstruct(example4_kernel(), &MarchenkoOptions::default()).unwrap();
    assert!(rec.diagonal_residual <= 0.02, "{:e}", rec.diagonal_residual);
    assert!(rec.asymmetry <= 0.05);
}

fn random_potential() -> impl Strategy<Value = (ChannelSystem, ProfileMatrix)> {
    (0.0..0.05f64, -0.3..0.3f64, 0.5..6.0f64, 1.0..3.0f64, -0.2..0.2f64, 0.0..0.2f64).prop_map(
        |(eps, v11, b, c0, v12, v22)| {
            let sys = ChannelSystem::new(vec![0.0, eps]).unwrap();
            let pot = ProfileMatrix::new(
                &sys,
                vec![
                    (0, 0, ProfileSpec::Gaussian { v0: v11, b, c: c0 }),
                    (0, 1, ProfileSpec::Gaussian { v0: v12, b, c: c0 + 0.3 }),
                    (1, 1, ProfileSpec::Multilayer { a: 0.1, x0: 0.5, layers: vec![(v22, 2.5)] }),
                ],
            )
            .unwrap();
            (sys, pot)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn symmetry_and_flux_hold_for_random_potentials((sys, pot) in random_potential(), k in 0.25..8.0f64) {
        let solver = ForwardSolver::new(&pot, &sys, SolverOptions::default()).unwrap();
        let (r, t) = solver.reflection_transmission(k).unwrap();
        let km = sys.momenta(c(k)).unwrap();
        prop_assert!(reflection_symmetry_residual(&r, &km).unwrap() <= 1e-6);
        prop_assert!(flux_unitarity_residual(&r, &t, &km) <= 1e-6);
    }

    #[test]
    fn wronskian_constant_for_random_potentials((sys, pot) in random_potential(), k in 0.25..8.0f64) {
        prop_assert!(wronskian_spread(&sys, &pot, c(k)) <= 1e-8);
    }
}
