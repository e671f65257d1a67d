mod common;

use mcis_core::forward::{momentum_grid, ForwardSolver, ScanOptions, SolverOptions};
use mcis_core::kernel::{KernelGrid, KernelOptions};
use mcis_core::marchenko::MarchenkoOptions;
use mcis_core::susy::{partner_via_omission, superpotential, transform_reflection};
use mcis_core::{Complex64, MatrixPotential};

fn max_deviation(a: &dyn MatrixPotential, b: &dyn MatrixPotential, xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let n = a.n_channels();
    let (mut va, mut vb) = (vec![0.0; n * n], vec![0.0; n * n]);
    let (mut dev, mut scale) = (0.0_f64, 0.0_f64);
    for x in xs {
        a.eval_into(x, &mut va);
        b.eval_into(x, &mut vb);
        for (p, q) in va.iter().zip(&vb) {
            dev = dev.max((p - q).abs());
            scale = scale.max(p.abs());
        }
    }
    (dev, scale)
}

#[test]
fn factorization_partner_of_example3() {
    let (sys, pot) = common::example3(0.0);
    let opts = SolverOptions::default();
    let solver = ForwardSolver::new(&pot, &sys, opts.clone()).unwrap();
    let states = solver.bound_states(&ScanOptions::default()).unwrap();
    assert_eq!(states.len(), 1);
    let (lo, hi) = pot.support();
    let h = 0.05;
    let count = ((hi - lo + 12.0) / h).round() as usize + 1;
    let w = superpotential(&pot, &sys, states[0].kappa, lo - 1.0, h, count, &opts).unwrap();
    assert!(w.riccati_residual <= 1e-3, "{:e}", w.riccati_residual);
    let partner = w.partner(&pot).unwrap();

    let psolver = ForwardSolver::new(&partner, &sys, opts).unwrap();
    assert!(psolver.find_bound_states(&ScanOptions::default()).unwrap().is_empty());
    let w_left = w.left_value();
    for k in [0.05, 0.2, 0.5, 1.0, 2.5, 6.0] {
        let (r0, _) = solver.reflection_transmission(k).unwrap();
        let (r1, _) = psolver.reflection_transmission(k).unwrap();
        let km = sys.momenta(Complex64::new(k, 0.0)).unwrap();
        let predicted = transform_reflection(&r0, &w_left, &km).unwrap();
        assert!((&r1 - &predicted).max_norm() <= 1e-2, "k = {k}: {:e}", (&r1 - &predicted).max_norm());
    }
    let (dev, scale) = max_deviation(&pot, &partner, (0..=90).map(|p| 0.05 * p as f64));
    assert!(dev > 0.25 * scale);
}

#[test]
fn omission_partner_of_example3() {
    let (sys, pot) = common::example3(0.0);
    let solver = ForwardSolver::new(&pot, &sys, SolverOptions::default()).unwrap();
    let k = momentum_grid(&sys, 12.0, 1200, 16, 0.05).unwrap();
    let table = solver.reflection_table(&k).unwrap();
    let grid = KernelGrid::new(-20.0, 4.5, 0.05).unwrap();
    let rec = partner_via_omission(&table, grid, &KernelOptions::default(), &MarchenkoOptions::default()).unwrap();
    let partner = rec.potential;

    let psolver = ForwardSolver::new(&partner, &sys, SolverOptions::default()).unwrap();
    assert!(psolver.find_bound_states(&ScanOptions::default()).unwrap().is_empty());
    // away from k = 0, where the k-table spacing limits the partner's tail
    for k in [0.3, 0.6, 1.2, 3.0] {
        let (r0, _) = solver.reflection_transmission(k).unwrap();
        let (r1, _) = psolver.reflection_transmission(k).unwrap();
        assert!((&r1 - &r0).max_norm() <= 1e-2, "k = {k}: {:e}", (&r1 - &r0).max_norm());
    }
    let (dev, scale) = max_deviation(&pot, &partner, (0..=90).map(|p| 0.05 * p as f64));
    assert!(dev > 0.25 * scale);
}
