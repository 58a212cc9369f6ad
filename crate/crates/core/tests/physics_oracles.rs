use concierge_core::physics::boxes::{overlapping_pairs_seq, BoxWorld};
use concierge_core::physics::nbody::{accelerations_seq, SystemState};
use concierge_core::physics::presets::builtin;
use concierge_core::physics::{accelerations, GRAVITATIONAL_CONSTANT};
use concierge_core::testkit::collisions::{conservation_run, crowd, head_on_exchange};
use concierge_core::testkit::gravity::{
    double_loop_accelerations, max_relative_error, random_cluster, raw, two_body_closure,
};

fn to_arrays(acc: &[nalgebra::Vector3<f64>]) -> Vec<[f64; 3]> {
    acc.iter().map(|a| [a.x, a.y, a.z]).collect()
}

fn oracle(state: &SystemState) -> Vec<[f64; 3]> {
    let (p, _, m) = raw(state);
    double_loop_accelerations(&p, &m, state.g, state.softening)
}

#[test]
fn five_body_accelerations_match_double_loop() {
    let mut states = vec![builtin("solar-lite").unwrap().instantiate(3)];
    for seed in 0..200 {
        states.push(random_cluster(5, GRAVITATIONAL_CONSTANT, 0.0, seed));
        states.push(random_cluster(5, 1.0, 0.05, seed));
    }
    for state in states {
        let got = to_arrays(&accelerations(&state).unwrap());
        let err = max_relative_error(&got, &oracle(&state));
        assert!(err < 1e-12, "relative error {err:e}");
    }
}

#[test]
fn two_body_orbit_closes_and_conserves_energy() {
    let (closure, drift, worst) = two_body_closure(10_000).unwrap();
    assert!(closure < 1e-3, "closure {closure:e}");
    assert!(drift < 1e-6, "drift {drift:e}");
    assert!(worst < 1e-6, "worst {worst:e}");
}

#[cfg(feature = "parallel")]
#[test]
fn parallel_paths_are_bitwise_sequential() {
    use concierge_core::physics::boxes::overlapping_pairs_par;
    use concierge_core::physics::nbody::accelerations_par;
    for n in [2, 5, 64, 300] {
        let s = random_cluster(n, 1.0, 0.01, n as u64);
        assert_eq!(accelerations_seq(&s).unwrap(), accelerations_par(&s).unwrap());
    }
    let mut w = crowd(400, 1);
    for _ in 0..50 {
        w.step(0.05).unwrap();
        assert_eq!(overlapping_pairs_seq(w.boxes()), overlapping_pairs_par(w.boxes()));
    }
}

#[test]
fn large_systems_agree_with_the_oracle() {
    let s = random_cluster(200, 1.0, 0.01, 77);
    let got = to_arrays(&accelerations(&s).unwrap());
    assert!(max_relative_error(&got, &oracle(&s)) < 1e-12);
    assert_eq!(accelerations(&s).unwrap(), accelerations_seq(&s).unwrap());
}

#[test]
fn equal_masses_swap_velocities() {
    for (va, vb) in [(3.0, -2.0), (1.0, 0.0), (5.5, 1.25), (-0.5, -4.0)] {
        let (va, vb) = if va > vb { (va, vb) } else { (vb, va) };
        let err = head_on_exchange(va, vb).unwrap();
        assert!(err < 1e-12, "{va} {vb}: {err:e}");
    }
}

#[test]
fn collisions_conserve_momentum_and_energy() {
    let (dp, dk, hits) = conservation_run(1_000, 1_000, 0.01).unwrap();
    assert!(hits >= 1_000, "only {hits} collisions");
    assert!(dp < 1e-9, "momentum {dp:e}");
    assert!(dk < 1e-9, "energy {dk:e}");
}

#[test]
fn broadphase_matches_brute_force() {
    let mut w: BoxWorld = crowd(150, 5);
    for _ in 0..20 {
        w.step(0.1).unwrap();
        let boxes = w.boxes();
        let mut want = Vec::new();
        for i in 0..boxes.len() {
            for j in (i + 1)..boxes.len() {
                let (a, b) = (&boxes[i], &boxes[j]);
                let gap = |k: usize| {
                    a.spec.half_extents[k] + b.spec.half_extents[k]
                        - (a.position[k] - b.position[k]).abs()
                };
                if gap(0) > 0.0 && gap(1) > 0.0 {
                    want.push((i, j));
                }
            }
        }
        assert_eq!(overlapping_pairs_seq(boxes), want);
    }
}
