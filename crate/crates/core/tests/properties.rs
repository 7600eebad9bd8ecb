//! Symmetry properties of the control system on random schedules.

use std::f64::consts::{PI, TAU};

use copepod::dynamics::{body_velocity, field_f1, field_f2};
use copepod::simulation::{integrate, reverse_schedule, ControlLaw, ControlSchedule, Segment};
use copepod::{ControlInput, State};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

/// Piecewise schedule on `[0, T]` mixing constant and linear segments.
fn schedule() -> impl Strategy<Value = ControlSchedule> {
    let seg = (prop::bool::ANY, prop::array::uniform4(-1.5..1.5f64), 0.2..1.5f64);
    prop::collection::vec(seg, 1..6).prop_map(|segs| {
        let mut t = 0.0;
        let segments = segs
            .into_iter()
            .map(|(linear, u, dt)| {
                let law = if linear {
                    ControlLaw::Linear { start: vec![u[0], u[1]], end: vec![u[2], u[3]] }
                } else {
                    ControlLaw::Constant(vec![u[0], u[1]])
                };
                let s = Segment { t_start: t, t_end: t + dt, law };
                t += dt;
                s
            })
            .collect();
        ControlSchedule::new(segments).unwrap()
    })
}

fn start() -> impl Strategy<Value = [f64; 5]> {
    (-1.0..1.0f64, -1.0..1.0f64, -PI..PI, 0.0..PI, PI..TAU).prop_map(|(x, y, p, a, b)| [x, y, p, a, b])
}

fn rigid(q: &[f64; 5], tau: f64, shift: [f64; 2]) -> [f64; 5] {
    let (s, c) = tau.sin_cos();
    [c * q[0] - s * q[1] + shift[0], s * q[0] + c * q[1] + shift[1], q[2] + tau, q[3], q[4]]
}

fn max_diff(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn trajectories_commute_with_rigid_motions(
        sched in schedule(),
        q0 in start(),
        tau in -PI..PI,
        dx in -2.0..2.0f64,
        dy in -2.0..2.0f64,
    ) {
        let a = integrate(&State::from_array(q0), &sched, 1e-11).unwrap();
        let b = integrate(&State::from_array(rigid(&q0, tau, [dx, dy])), &sched, 1e-11).unwrap();
        let expected = rigid(&a.final_state().to_array(), tau, [dx, dy]);
        prop_assert!(max_diff(&b.final_state().to_array(), &expected) < TOL);
    }

    #[test]
    fn reversed_schedule_retraces_the_path(sched in schedule(), q0 in start()) {
        let fwd = integrate(&State::from_array(q0), &sched, 1e-11).unwrap();
        let back = integrate(fwd.final_state(), &reverse_schedule(&sched), 1e-11).unwrap();
        prop_assert!(max_diff(&back.final_state().to_array(), &q0) < TOL);
        prop_assert!((back.energy() - fwd.energy()).abs() < TOL * fwd.energy().max(1.0));
    }

    #[test]
    fn fields_rotate_with_the_body(q in start(), tau in -PI..PI, dx in -5.0..5.0f64, dy in -5.0..5.0f64) {
        let moved = State::from_array(rigid(&q, tau, [dx, dy]));
        let here = State::from_array(q);
        let (s, c) = tau.sin_cos();
        for (f, g) in [(field_f1(&here), field_f1(&moved)), (field_f2(&here), field_f2(&moved))] {
            let rotated = [c * f[0] - s * f[1], s * f[0] + c * f[1], f[2], f[3], f[4]];
            prop_assert!(max_diff(&rotated, &g) < 1e-12);
        }
    }

    #[test]
    fn closed_form_fields_match_the_resistance_solve(q in start(), u1 in -2.0..2.0f64, u2 in -2.0..2.0f64) {
        let state = State::from_array(q);
        let v = body_velocity(&state, &ControlInput(vec![u1, u2])).unwrap();
        let (f1, f2) = (field_f1(&state), field_f2(&state));
        for i in 0..3 {
            prop_assert!((v[i] - (u1 * f1[i] + u2 * f2[i])).abs() < 1e-10);
        }
    }
}
