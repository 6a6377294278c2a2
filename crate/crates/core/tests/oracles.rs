mod common;

use common::{sphere_search, Oracle};
use fuzzysphere::algebra::default_pbw_basis;
use fuzzysphere::distance::{connes_distance, CommutatorModel, DistanceOptions};
use fuzzysphere::states::{default_coulomb_g, generate_states};
use fuzzysphere::triple::{build_deformed_dirac, su2_generators, DeformationParams};

fn compare(n: usize, params: DeformationParams, states: usize, search: impl Fn(&Oracle) -> f64) {
    let t = build_deformed_dirac(n, params).unwrap();
    let gens = su2_generators(n).unwrap();
    let basis = default_pbw_basis(&gens).unwrap();
    let model = CommutatorModel::new(&t, &basis).unwrap();
    let ens = generate_states(&gens, states, default_coulomb_g(n), 5, params).unwrap();
    for i in 0..ens.len() {
        for j in i + 1..ens.len() {
            let (s1, s2) = (&ens.states[i], &ens.states[j]);
            let solved = connes_distance(&model, s1, s2, &DistanceOptions::default(), 9).unwrap();
            let oracle = search(&Oracle::new(&t, &s1.vector, &s2.vector));
            let rel = (solved.value - oracle).abs() / oracle;
            assert!(
                rel < 1e-6,
                "n={n} {params:?} ({i},{j}): solver {} oracle {oracle}",
                solved.value
            );
        }
    }
}

#[test]
fn two_dimensional_algebra_matches_sphere_search() {
    for params in [
        DeformationParams::round(),
        DeformationParams::restricted(1.0, 2.0),
        DeformationParams::new(1.0, 1.1, 0.7, 1.5),
    ] {
        compare(2, params, 4, sphere_search);
    }
}

#[test]
fn three_dimensional_algebra_matches_the_ellipsoid_method() {
    for params in [DeformationParams::round(), DeformationParams::restricted(1.0, 1.5)] {
        compare(3, params, 4, |o| o.ellipsoid_method(20.0, 4000));
    }
}
