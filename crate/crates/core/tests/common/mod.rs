#![allow(dead_code)]

use mcis_core::profiles::{ProfileMatrix, ProfileSpec};
use mcis_core::ChannelSystem;

pub fn gaussian(v0: f64, b: f64, c: f64) -> ProfileSpec {
    ProfileSpec::Gaussian { v0, b, c }
}

pub fn example1() -> (ChannelSystem, ProfileMatrix) {
    let sys = ChannelSystem::degenerate(2);
    let m = ProfileMatrix::new(
        &sys,
        vec![
            (0, 0, gaussian(0.1, 4.0, 1.8)),
            (1, 1, ProfileSpec::Multilayer { a: 0.01, x0: 0.5, layers: vec![(0.08, 2.7), (0.05, 4.0)] }),
            (0, 1, ProfileSpec::SeaSaw { v0: 0.075, x_ell: 1.2, x_s: 0.75, signs: vec![1.0, -1.0, -1.0] }),
        ],
    )
    .unwrap();
    (sys, m)
}

pub fn example2(coupling: f64) -> (ChannelSystem, ProfileMatrix) {
    let sys = ChannelSystem::new(vec![0.0, 0.025]).unwrap();
    let m = ProfileMatrix::new(
        &sys,
        vec![
            (0, 0, gaussian(0.15, 9.0, 1.8)),
            (1, 1, ProfileSpec::Multilayer { a: 0.05, x0: 1.0, layers: vec![(0.20, 2.8)] }),
            (0, 1, gaussian(coupling, 9.0, 2.2)),
        ],
    )
    .unwrap();
    (sys, m)
}

pub fn example3(eps2: f64) -> (ChannelSystem, ProfileMatrix) {
    let sys = ChannelSystem::new(vec![0.0, eps2]).unwrap();
    let m = ProfileMatrix::new(
        &sys,
        vec![
            (0, 0, gaussian(0.15, 1.5, 2.2)),
            (1, 1, ProfileSpec::Multilayer { a: 0.1, x0: 1.0, layers: vec![(-0.1, 3.3)] }),
            (0, 1, ProfileSpec::SeaSaw { v0: 0.1, x_ell: 1.5, x_s: 0.70, signs: vec![1.0, 1.0] }),
        ],
    )
    .unwrap();
    (sys, m)
}
