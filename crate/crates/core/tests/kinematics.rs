use demoforge_core::geometry::{Pose, Quat, Vec3};
use demoforge_core::kinematics::{demo_arm, ik, solve_trajectory, IkParams, SerialChain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_q(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..6).map(|_| rng.gen_range(-2.5..2.5)).collect()
}

/// Counts targets (from random joint vectors) that IK reaches from the zero
/// configuration within 1 mm / 0.01 rad.
fn round_trip_successes(chain: &SerialChain, trials: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ok = 0;
    for _ in 0..trials {
        let target = chain.fk(&random_q(&mut rng)).unwrap();
        if let Ok(sol) = ik(chain, &target, &vec![0.0; chain.dof()], &IkParams::default()) {
            let (ang, dist) = chain.fk(&sol.q).unwrap().distance_to(&target);
            if dist <= 1e-3 && ang <= 1e-2 {
                ok += 1;
            }
        }
    }
    ok
}

#[test]
fn round_trip_on_random_reachable_targets() {
    let ok = round_trip_successes(&demo_arm(), 100, 12);
    assert!(ok >= 95, "only {ok}/100 targets reached");
}

/// Rotation-vector of `R(q+h) R(q-h)ᵀ` over `2h` is the angular velocity.
fn fd_column(chain: &SerialChain, q: &[f64], i: usize, h: f64) -> [f64; 6] {
    let mut qp = q.to_vec();
    let mut qm = q.to_vec();
    qp[i] += h;
    qm[i] -= h;
    let a = chain.fk(&qp).unwrap();
    let b = chain.fk(&qm).unwrap();
    let v = (a.translation - b.translation) / (2.0 * h);
    let w = a.rotation.mul(b.rotation.conjugate()).to_rotation_vector() / (2.0 * h);
    [v.x, v.y, v.z, w.x, w.y, w.z]
}

#[test]
fn jacobian_matches_finite_differences() {
    let chain = demo_arm();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let q = random_q(&mut rng);
        let jac = chain.jacobian(&q).unwrap();
        for (i, col) in jac.iter().enumerate() {
            let fd = fd_column(&chain, &q, i, 1e-6);
            let scale = col.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            for k in 0..6 {
                assert!((col[k] - fd[k]).abs() <= 1e-5 * scale, "joint {i} row {k}: {} vs {}", col[k], fd[k]);
            }
        }
    }
}

#[test]
fn warm_started_trajectory_is_continuous() {
    let chain = demo_arm();
    let q0 = [0.2, -0.6, 1.4, 0.1, 0.9, 0.0];
    let start = chain.fk(&q0).unwrap();
    // a pouring-like sweep: move 20 cm sideways while tilting 90 degrees
    let poses: Vec<Pose> = (0..=60)
        .map(|k| {
            let s = k as f64 / 60.0;
            let r = start.rotation.mul(Quat::rot_x(s * core::f64::consts::FRAC_PI_2));
            Pose::new(r, start.translation + Vec3::new(0.0, 0.2 * s, 0.05 * s))
        })
        .collect();
    let qs = solve_trajectory(&chain, &poses, &q0, &IkParams::default()).unwrap();
    for w in qs.windows(2) {
        let jump = w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(jump <= 0.3, "joint jump {jump}");
    }
}
