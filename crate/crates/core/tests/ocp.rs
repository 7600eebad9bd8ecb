use std::f64::consts::{PI, TAU};

use copepod::extremals::{normal_flow, Costate};
use copepod::ocp::*;
use copepod::State;

fn cfg(starts: usize) -> TranscriptionConfig {
    TranscriptionConfig { multistart: starts, ..Default::default() }
}

fn row_i() -> OcpSolution {
    solve(&table1_row('i').unwrap().boundary(), &cfg(4)).unwrap()
}

#[test]
fn row_i_energy_and_normal_extremal() {
    let sol = row_i();
    assert!(sol.feasible);
    assert!(sol.max_defect < 1e-6 && sol.boundary_violation < 1e-6);
    assert!((sol.energy - 0.319).abs() < 0.01 * 0.319, "{}", sol.energy);
    let pmp = pmp_diagnostic(&sol);
    assert!(pmp.consistent && pmp.correlation > 0.99, "{}", pmp.correlation);
}

#[test]
fn shooting_from_extracted_costate_retraces_the_solution() {
    let sol = row_i();
    let pmp = pmp_diagnostic(&sol);
    let states = sol.node_states();
    let h = TAU / sol.intervals() as f64;
    let mid: [f64; 5] = std::array::from_fn(|i| 0.5 * (states[0][i] + states[1][i]));
    let arc = normal_flow(&State::from_array(mid), &Costate::normal(pmp.costates[0]), TAU - h, 1e-9).unwrap();
    let end = arc.states.last().unwrap();
    let last = &states[states.len() - 1];
    let prev = &states[states.len() - 2];
    for i in 0..5 {
        let target = 0.5 * (last[i] + prev[i]);
        assert!((end[i] - target).abs() < 2e-3, "coordinate {i}: {} vs {target}", end[i]);
    }
}

#[test]
fn unconverged_solution_is_flagged() {
    let c = TranscriptionConfig { multistart: 1, max_inner: 3, ..Default::default() };
    let raw = solve_all(&table1_row('i').unwrap().boundary(), &c).unwrap().remove(0);
    assert!(!raw.feasible);
    assert!(!pmp_diagnostic(&raw).consistent);
}

#[test]
fn stationary_solution_is_trivially_consistent() {
    let sol = solve(&rotation_boundary(0.0), &cfg(2)).unwrap();
    assert!(sol.energy < 1e-9, "{}", sol.energy);
    let pmp = pmp_diagnostic(&sol);
    assert!(pmp.consistent);
}

#[test]
fn reversed_solution_solves_the_reversed_problem() {
    let sol = row_i();
    let rev = reverse_solution(&sol);
    assert!(rev.feasible, "violation {}", rev.boundary_violation);
    assert!(rev.max_defect < 1e-9);
    assert!((rev.energy - sol.energy).abs() < 1e-12 * sol.energy.max(1.0));
}

#[test]
fn mirrored_solution_has_equal_energy() {
    let sol = row_i();
    let m = mirror_solution(&sol);
    assert!(m.feasible, "violation {}", m.boundary_violation);
    assert!((m.energy - sol.energy).abs() < 1e-3 * sol.energy);
    // Solving the mirrored problem independently lands on the same energy.
    let direct = solve(&mirror_boundary(&sol.boundary), &cfg(4)).unwrap();
    assert!((direct.energy - sol.energy).abs() < 1e-3 * sol.energy, "{} vs {}", direct.energy, sol.energy);
}

#[test]
fn reported_solutions_respect_the_box() {
    for row in ['d', 'i'] {
        let sol = solve(&table1_row(row).unwrap().boundary(), &cfg(4)).unwrap();
        assert!(sol.box_violation < 1e-8, "row {row}: {}", sol.box_violation);
        let e: f64 = sol.interval_controls().iter().map(|u| u[0] * u[0] + u[1] * u[1]).sum::<f64>() * TAU
            / sol.intervals() as f64;
        assert!((e - sol.energy).abs() < 1e-12 * e.max(1.0));
    }
}

#[test]
fn small_rotation_follows_the_hypotenuse() {
    let rep = rotation_policy_check(PI / 3.0, &cfg(4)).unwrap();
    assert!(rep.solution.feasible);
    assert!(rep.solution.energy.is_finite());
    assert!(rep.hypotenuse_fraction > 0.99, "{}", rep.hypotenuse_fraction);
    assert!((rep.traversals - 0.25).abs() < 0.05, "{}", rep.traversals);
}

#[test]
fn rotation_target_outside_range_is_rejected() {
    assert!(matches!(rotation_policy_check(4.0, &cfg(1)), Err(copepod::Error::InvalidInput(_))));
}

#[test]
fn same_seed_gives_identical_solutions() {
    let b = table1_row('d').unwrap().boundary();
    let a = solve(&b, &cfg(3)).unwrap();
    let c = solve(&b, &cfg(3)).unwrap();
    assert_eq!(a.node_states(), c.node_states());
    assert_eq!(a.energy.to_bits(), c.energy.to_bits());
}

/// Doubling N must not raise the best energy by more than 1% on any row.
#[test]
#[ignore = "nightly: full benchmark suite at two resolutions"]
fn refinement_does_not_raise_energy() {
    let coarse = TranscriptionConfig { intervals: 100, ..Default::default() };
    let fine = TranscriptionConfig { intervals: 200, ..Default::default() };
    let mut bad = Vec::new();
    for row in table1_rows() {
        let b = row.boundary();
        if let (Ok(c), Ok(f)) = (solve(&b, &coarse), solve(&b, &fine)) {
            println!("row {}: N=100 {:.4}  N=200 {:.4}", row.label, c.energy, f.energy);
            if f.energy > 1.01 * c.energy {
                bad.push(row.label);
            }
        }
    }
    assert!(bad.is_empty(), "rows {bad:?}");
}

/// Full benchmark table at N = 200 with 16 starts; at least 12 of 15 rows
/// must land within 10% of the reference energy or below it.
#[test]
#[ignore = "nightly: full benchmark table"]
fn benchmark_table_within_band() {
    let outcomes = table1_suite(&TranscriptionConfig::default());
    let mut passing = 0;
    for o in &outcomes {
        match &o.result {
            Ok(s) => println!(
                "row {}: {:.4} vs {} {}",
                o.row.label,
                s.energy,
                o.row.reference_energy,
                if o.passes() { "ok" } else { "outside band" }
            ),
            Err(e) => println!("row {}: {e}", o.row.label),
        }
        passing += o.passes() as usize;
    }
    assert!(passing >= 12, "{passing}/15 rows within band");
}
