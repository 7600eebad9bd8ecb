//! Energy-minimizing strokes by direct transcription.
//!
//! The horizon is fixed to `[0, 2 pi]`. States live at `N + 1` nodes, controls
//! are constant on each interval, the dynamics are enforced with compressed
//! Hermite-Simpson collocation and the cost is `sum_k h |u_k|^2` (the
//! trapezoidal rule applied to a piecewise-constant integrand).
//!
//! Because the collocation equations are explicit for this system (see
//! [`transcription`]), the nonlinear program is solved in the reduced space
//! of leg-angle nodes and initial pose: boundary conditions coupling the
//! endpoints are handled by an augmented Lagrangian, fixed values and the
//! leg-angle box by bounds in a projected L-BFGS inner solver.

mod analysis;
mod lbfgs;
pub mod transcription;

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{box_violation, ControlInput, State};
use crate::error::{Error, Result};
use crate::simulation::Trajectory;

pub use analysis::*;
use lbfgs::Preconditioner;
pub use transcription::{hermite_simpson_defect, hermite_simpson_step, LinearConstraint};
use transcription::{Condensed, Workspace};

pub const HORIZON: f64 = TAU;

/// Names of the state coordinates, in storage order.
pub const COORDINATES: [&str; 5] = ["x", "y", "phi", "theta1", "theta2"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EndValue {
    Free,
    Fixed(f64),
}

impl EndValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            EndValue::Free => None,
            EndValue::Fixed(v) => Some(*v),
        }
    }
}

/// Per-coordinate boundary conditions at `t = 0` and `t = 2 pi`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySpec {
    pub initial: [EndValue; 5],
    pub terminal: [EndValue; 5],
    /// `theta_i(0) = theta_i(2 pi)`.
    pub stroke: bool,
    /// `(phi, theta1, theta2)(0) = (phi, theta1, theta2)(2 pi)`.
    pub shape_periodic: bool,
    /// `phi(2 pi) - phi(0)`.
    pub delta_phi: Option<f64>,
}

fn leg_range(leg: usize) -> (f64, f64) {
    if leg == 0 {
        (0.0, PI)
    } else {
        (PI, TAU)
    }
}

impl BoundarySpec {
    pub fn free() -> Self {
        BoundarySpec {
            initial: [EndValue::Free; 5],
            terminal: [EndValue::Free; 5],
            stroke: false,
            shape_periodic: false,
            delta_phi: None,
        }
    }

    /// Offset `q_i(2 pi) - q_i(0)` imposed on coordinate `i`, if any.
    fn link(&self, i: usize) -> Option<f64> {
        match i {
            2 => self.delta_phi.or(if self.shape_periodic { Some(0.0) } else { None }),
            3 | 4 if self.stroke || self.shape_periodic => Some(0.0),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        for (i, name) in COORDINATES.iter().enumerate() {
            for end in [self.initial[i], self.terminal[i]] {
                if let EndValue::Fixed(v) = end {
                    if !v.is_finite() {
                        return bad(format!("{name}: fixed value must be finite"));
                    }
                    if i >= 3 {
                        let (lo, hi) = leg_range(i - 3);
                        if v < lo || v > hi {
                            return bad(format!("{name}: fixed value {v} outside [{lo}, {hi}]"));
                        }
                    }
                }
            }
        }
        if let Some(d) = self.delta_phi {
            if !d.is_finite() {
                return bad("delta_phi must be finite".into());
            }
            if self.initial[2] != EndValue::Free && self.terminal[2] != EndValue::Free {
                return bad("phi cannot be fixed at both ends when a delta_phi target is set".into());
            }
            if self.shape_periodic {
                return bad("shape_periodic already fixes delta_phi = 0".into());
            }
        }
        for i in 0..5 {
            if let (Some(d), Some(a), Some(b)) = (self.link(i), self.initial[i].value(), self.terminal[i].value()) {
                if (b - a - d).abs() > 1e-12 {
                    return bad(format!(
                        "{}: fixed end values are inconsistent with the periodicity condition",
                        COORDINATES[i]
                    ));
                }
            }
        }
        Ok(())
    }

    /// The same problem traversed backwards in time.
    pub fn reversed(&self) -> Self {
        BoundarySpec {
            initial: self.terminal,
            terminal: self.initial,
            stroke: self.stroke,
            shape_periodic: self.shape_periodic,
            delta_phi: self.delta_phi.map(|d| -d),
        }
    }

    /// Equality constraints not expressible as bounds.
    pub fn constraints(&self) -> Vec<LinearConstraint> {
        let unit = |i: usize| {
            let mut e = [0.0; 5];
            e[i] = 1.0;
            e
        };
        let mut out = Vec::new();
        for i in 0..3 {
            if let Some(v) = self.terminal[i].value() {
                out.push(LinearConstraint { initial: [0.0; 5], terminal: unit(i), rhs: v });
            }
        }
        for i in 0..5 {
            let both_fixed = self.initial[i] != EndValue::Free && self.terminal[i] != EndValue::Free;
            if let Some(d) = self.link(i) {
                if !both_fixed {
                    out.push(LinearConstraint {
                        initial: unit(i).map(|v| -v),
                        terminal: unit(i),
                        rhs: d,
                    });
                }
            }
        }
        out
    }

    /// Largest violation of any boundary condition by the given endpoints.
    pub fn violation(&self, q0: &[f64; 5], qn: &[f64; 5]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..5 {
            if let Some(v) = self.initial[i].value() {
                worst = worst.max((q0[i] - v).abs());
            }
            if let Some(v) = self.terminal[i].value() {
                worst = worst.max((qn[i] - v).abs());
            }
            if let Some(d) = self.link(i) {
                worst = worst.max((qn[i] - q0[i] - d).abs());
            }
        }
        worst
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptionConfig {
    /// Number of intervals `N`.
    pub intervals: usize,
    pub multistart: usize,
    pub seed: u64,
    /// Initial augmented-Lagrangian penalty.
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_outer: usize,
    /// Total inner L-BFGS iterations allowed per start.
    pub max_inner: usize,
    pub lbfgs_memory: usize,
    /// Defect and boundary tolerance for a start to count as feasible.
    pub feasibility_tol: f64,
}

impl Default for TranscriptionConfig {
    fn default() -> Self {
        TranscriptionConfig {
            intervals: 200,
            multistart: 16,
            seed: 0,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_outer: 40,
            max_inner: 8000,
            lbfgs_memory: 12,
            feasibility_tol: 1e-6,
        }
    }
}

impl TranscriptionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if self.intervals < 10 {
            return bad("at least 10 intervals are required");
        }
        if self.multistart == 0 {
            return bad("multistart must be at least 1");
        }
        if !(self.initial_penalty > 0.0) || !(self.penalty_growth > 1.0) {
            return bad("penalty weights must be positive and grow");
        }
        if !(self.feasibility_tol > 0.0) || self.lbfgs_memory == 0 || self.max_inner == 0 {
            return bad("tolerances and budgets must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct OcpSolution {
    pub boundary: BoundarySpec,
    pub trajectory: Trajectory,
    /// `sum_k h |u_k|^2`.
    pub energy: f64,
    /// Largest collocation residual over all intervals and coordinates.
    pub max_defect: f64,
    /// Largest residual on each interval.
    pub defects: Vec<f64>,
    pub boundary_violation: f64,
    pub box_violation: f64,
    pub status: SolverStatus,
    pub feasible: bool,
    pub iters: usize,
    /// Index of the multistart that produced this solution.
    pub start: usize,
    pub constraints: Vec<LinearConstraint>,
    /// Multiplier estimates for `constraints`.
    pub multipliers: Vec<f64>,
}

impl OcpSolution {
    pub fn intervals(&self) -> usize {
        self.trajectory.states.len() - 1
    }

    pub fn node_states(&self) -> Vec<[f64; 5]> {
        self.trajectory.states.iter().map(State::to_array).collect()
    }

    /// Constant control on each interval.
    pub fn interval_controls(&self) -> Vec<[f64; 2]> {
        let n = self.intervals();
        self.trajectory.controls[..n]
            .iter()
            .map(|u| [u.0[0], u.0[1]])
            .collect()
    }

    pub fn summary_line(&self) -> String {
        format!("energy={} feasible={} iters={}", self.energy, self.feasible, self.iters)
    }
}

/// Builds a solution record from node states and interval controls.
pub(crate) fn assemble(
    boundary: &BoundarySpec,
    states: Vec<[f64; 5]>,
    controls: Vec<[f64; 2]>,
    feasibility_tol: f64,
) -> OcpSolution {
    let n = controls.len();
    let h = HORIZON / n as f64;
    let mut defects = Vec::with_capacity(n);
    let mut energy_profile = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    energy_profile.push(0.0);
    for k in 0..n {
        let d = hermite_simpson_defect(&states[k], &states[k + 1], controls[k], h);
        defects.push(d.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let u = controls[k];
        acc += h * (u[0] * u[0] + u[1] * u[1]);
        energy_profile.push(acc);
    }
    let max_defect = defects.iter().copied().fold(0.0, f64::max);
    let boundary_violation = boundary.violation(&states[0], &states[n]);
    let box_viol = states
        .iter()
        .map(|q| box_violation(q[3], q[4]))
        .fold(0.0, f64::max);
    let mut node_controls: Vec<ControlInput> = controls.iter().map(|u| ControlInput(u.to_vec())).collect();
    node_controls.push(ControlInput(controls[n - 1].to_vec()));
    let trajectory = Trajectory {
        times: (0..=n).map(|k| k as f64 * h).collect(),
        states: states.into_iter().map(State::from_array).collect(),
        controls: node_controls,
        energy_profile,
        box_violation: box_viol,
    };
    let feasible = max_defect < feasibility_tol && boundary_violation < feasibility_tol && box_viol < 1e-8;
    OcpSolution {
        boundary: boundary.clone(),
        trajectory,
        energy: acc,
        max_defect,
        defects,
        boundary_violation,
        box_violation: box_viol,
        status: SolverStatus::IterationLimit,
        feasible,
        iters: 0,
        start: 0,
        constraints: boundary.constraints(),
        multipliers: Vec::new(),
    }
}

/// Exact Hessian of the energy term, `(2/h)` times the path Laplacian of
/// each leg's node chain, plus a small shift.
struct ChainPreconditioner {
    nodes: usize,
    weight: f64,
    shift: f64,
}

impl Preconditioner for ChainPreconditioner {
    fn apply(&self, v: &[f64], free: &[bool], out: &mut [f64]) {
        let m = self.nodes;
        let mut c = vec![0.0; m];
        for leg in 0..2 {
            let base = leg * m;
            let mut k = 0;
            while k < m {
                if !free[base + k] {
                    out[base + k] = 0.0;
                    k += 1;
                    continue;
                }
                let start = k;
                while k < m && free[base + k] {
                    k += 1;
                }
                // Thomas algorithm on the run [start, k).
                let diag = |i: usize| {
                    let deg = (i > 0) as usize + (i + 1 < m) as usize;
                    self.weight * deg as f64 + self.shift
                };
                let off = -self.weight;
                let mut prev_c = 0.0;
                let mut prev_d = 0.0;
                for i in start..k {
                    let denom = diag(i) - if i > start { off * prev_c } else { 0.0 };
                    c[i] = off / denom;
                    let rhs = v[base + i] - if i > start { off * prev_d } else { 0.0 };
                    out[base + i] = rhs / denom;
                    prev_c = c[i];
                    prev_d = out[base + i];
                }
                for i in (start..k - 1).rev() {
                    out[base + i] -= c[i] * out[base + i + 1];
                }
            }
        }
        for i in 2 * m..v.len() {
            out[i] = if free[i] { v[i] } else { 0.0 };
        }
    }
}

/// Chain preconditioner plus the Gauss-Newton term `mu J^T J` of the
/// penalty, inverted with the Woodbury identity.
struct PenaltyPreconditioner<'a> {
    chain: &'a ChainPreconditioner,
    /// Constraint gradients at the current outer iterate.
    jacobian: Vec<Vec<f64>>,
    mu: f64,
}

impl Preconditioner for PenaltyPreconditioner<'_> {
    fn apply(&self, v: &[f64], free: &[bool], out: &mut [f64]) {
        self.chain.apply(v, free, out);
        let m = self.jacobian.len();
        if m == 0 {
            return;
        }
        let n = v.len();
        let mut w = vec![vec![0.0; n]; m];
        let mut masked = vec![0.0; n];
        for (j, g) in self.jacobian.iter().enumerate() {
            for i in 0..n {
                masked[i] = if free[i] { g[i] } else { 0.0 };
            }
            self.chain.apply(&masked, free, &mut w[j]);
        }
        let dot = |a: &[f64], b: &[f64]| -> f64 { (0..n).filter(|&i| free[i]).map(|i| a[i] * b[i]).sum() };
        let mut small = nalgebra::DMatrix::<f64>::zeros(m, m);
        let mut rhs = nalgebra::DVector::<f64>::zeros(m);
        for a in 0..m {
            for b in 0..m {
                small[(a, b)] = dot(&self.jacobian[a], &w[b]) + if a == b { 1.0 / self.mu } else { 0.0 };
            }
            rhs[a] = dot(&self.jacobian[a], out);
        }
        let Some(coef) = small.lu().solve(&rhs) else {
            return;
        };
        for j in 0..m {
            for i in 0..n {
                out[i] -= coef[j] * w[j][i];
            }
        }
    }
}

fn bounds(spec: &BoundarySpec, prob: &Condensed) -> (Vec<f64>, Vec<f64>) {
    let n = prob.intervals;
    let mut lo = vec![f64::NEG_INFINITY; prob.dim()];
    let mut hi = vec![f64::INFINITY; prob.dim()];
    for leg in 0..2 {
        let (a, b) = leg_range(leg);
        for k in 0..=n {
            lo[prob.theta_index(leg, k)] = a;
            hi[prob.theta_index(leg, k)] = b;
        }
        if let Some(v) = spec.initial[3 + leg].value() {
            lo[prob.theta_index(leg, 0)] = v;
            hi[prob.theta_index(leg, 0)] = v;
        }
        if let Some(v) = spec.terminal[3 + leg].value() {
            lo[prob.theta_index(leg, n)] = v;
            hi[prob.theta_index(leg, n)] = v;
        }
    }
    let p = prob.pose_index();
    for i in 0..3 {
        if let Some(v) = spec.initial[i].value() {
            lo[p + i] = v;
            hi[p + i] = v;
        }
    }
    (lo, hi)
}

/// Random leg-angle path: a straight line between random endpoints blended
/// with a circle wound `m` times about a random centre, plus smooth noise.
fn initial_guess(spec: &BoundarySpec, prob: &Condensed, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = prob.intervals;
    let mut z = vec![0.0; prob.dim()];
    let mut start = [0.0; 2];
    let mut end = [0.0; 2];
    let mut centre = [0.0; 2];
    for leg in 0..2 {
        let (a, b) = leg_range(leg);
        let pick = |rng: &mut ChaCha8Rng| rng.gen_range(a + 0.1 * PI..b - 0.1 * PI);
        start[leg] = spec.initial[3 + leg].value().unwrap_or_else(|| pick(rng));
        end[leg] = match spec.terminal[3 + leg].value() {
            Some(v) => v,
            None if spec.stroke || spec.shape_periodic => start[leg],
            None => pick(rng),
        };
        centre[leg] = rng.gen_range(a + 0.25 * PI..b - 0.25 * PI);
    }
    let windings = rng.gen_range(0..=3) as f64;
    let direction = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let radius = rng.gen_range(0.1..0.3) * PI;
    let phase = rng.gen_range(0.0..TAU);
    let noise: [[f64; 3]; 2] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-0.1..0.1)));
    for k in 0..=n {
        let t = k as f64 * prob.h;
        let s = t / HORIZON;
        // Zero at both ends, one in the middle.
        let w = if windings > 0.0 { (0.5 * t).sin().powi(2) } else { 0.0 };
        let a = windings * t + phase;
        let circle = [centre[0] + radius * a.cos(), centre[1] + direction * radius * a.sin()];
        for leg in 0..2 {
            let (lo, hi) = leg_range(leg);
            let line = start[leg] + (end[leg] - start[leg]) * s;
            let wiggle = (0.5 * t).sin() * (noise[leg][0] * t.sin() + noise[leg][1] * t.cos() + noise[leg][2]);
            let v = (1.0 - w) * line + w * circle[leg] + wiggle;
            z[prob.theta_index(leg, k)] = v.clamp(lo, hi);
        }
    }
    let p = prob.pose_index();
    for i in 0..3 {
        z[p + i] = spec.initial[i].value().unwrap_or(0.0);
    }
    z
}

struct StartOutcome {
    z: Vec<f64>,
    multipliers: Vec<f64>,
    iters: usize,
    status: SolverStatus,
}

const CONSTRAINT_TARGET: f64 = 1e-9;
const FINAL_PG_TOL: f64 = 1e-6;
const MAX_PENALTY: f64 = 1e12;
const STUCK_LIMIT: usize = 3;

/// Penalty schedule of one start.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Schedule {
    /// Penalty balanced against the cost from the first iteration.
    Balanced,
    /// A first pass with a heavy penalty pulls the guess onto the constraints
    /// before the cost can flatten it; then continues as `Balanced`.
    FeasibilityFirst,
}

/// Penalty multiple of the balanced value used in the feasibility pass.
const FEASIBILITY_BOOST: f64 = 1e4;
const FEASIBILITY_ITERS: usize = 200;

fn run_from(
    z: &mut Vec<f64>,
    prob: &Condensed,
    lo: &[f64],
    hi: &[f64],
    cfg: &TranscriptionConfig,
    schedule: Schedule,
) -> StartOutcome {
    let m = prob.constraints.len();
    let pre = ChainPreconditioner {
        nodes: prob.intervals + 1,
        weight: 2.0 / prob.h,
        shift: 1e-2,
    };
    let mut ws = Workspace::default();
    let mut lambda = vec![0.0; m];
    // Balance the penalty against the cost at the starting point so that
    // neither term swamps the other.
    let mut mu = {
        let c = prob.constraint_values(&prob.states(z));
        let sq: f64 = c.iter().map(|v| v * v).sum();
        let j = prob.energy(z);
        if sq > 0.0 {
            (cfg.initial_penalty * j.max(1.0) / sq).clamp(cfg.initial_penalty, 1e6)
        } else {
            cfg.initial_penalty
        }
    };
    let mut total = 0;
    if schedule == Schedule::FeasibilityFirst && m > 0 {
        let heavy = mu * FEASIBILITY_BOOST;
        let precond = PenaltyPreconditioner {
            chain: &pre,
            jacobian: prob.constraint_jacobian(z, &mut ws),
            mu: heavy,
        };
        let out = lbfgs::minimize(
            z,
            lo,
            hi,
            |x, g| prob.augmented_lagrangian(x, &lambda, heavy, g, &mut ws),
            &precond,
            &lbfgs::Options {
                memory: cfg.lbfgs_memory,
                max_iters: FEASIBILITY_ITERS.min(cfg.max_inner),
                pg_tol: 1e-3,
            },
        );
        total += out.iters;
        let c = prob.constraint_values(&prob.states(z));
        for j in 0..m {
            lambda[j] += heavy * c[j];
        }
    }
    let mut eta = 1e-2;
    let mut omega = 1e-3;
    let mut status = SolverStatus::IterationLimit;
    let mut prev_viol = f64::INFINITY;
    let mut stuck = 0;
    for _ in 0..cfg.max_outer.max(1) {
        let budget = cfg.max_inner.saturating_sub(total);
        if budget == 0 {
            break;
        }
        let tol = if m == 0 { FINAL_PG_TOL } else { omega };
        let precond = PenaltyPreconditioner {
            chain: &pre,
            jacobian: prob.constraint_jacobian(z, &mut ws),
            mu,
        };
        let out = lbfgs::minimize(
            z,
            lo,
            hi,
            |x, g| prob.augmented_lagrangian(x, &lambda, mu, g, &mut ws),
            &precond,
            &lbfgs::Options {
                memory: cfg.lbfgs_memory,
                max_iters: budget,
                pg_tol: tol,
            },
        );
        total += out.iters;
        let c = prob.constraint_values(&prob.states(z));
        let viol = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if viol <= CONSTRAINT_TARGET && (out.pg_norm <= FINAL_PG_TOL || out.stalled) {
            for j in 0..m {
                lambda[j] += mu * c[j];
            }
            status = SolverStatus::Converged;
            break;
        }
        if viol <= eta {
            for j in 0..m {
                lambda[j] += mu * c[j];
            }
            eta = (eta * 0.1).max(CONSTRAINT_TARGET);
            omega = (omega * 0.1).max(FINAL_PG_TOL);
        } else if viol <= 0.25 * prev_viol {
            // Still making progress at this penalty.
            for j in 0..m {
                lambda[j] += mu * c[j];
            }
        } else {
            mu = (mu * cfg.penalty_growth).min(MAX_PENALTY);
        }
        // A local minimizer of the violation: more penalty will not help.
        stuck = if viol > 0.9 * prev_viol { stuck + 1 } else { 0 };
        if stuck >= STUCK_LIMIT && mu >= 1e6 {
            break;
        }
        prev_viol = viol;
    }
    StartOutcome {
        z: z.clone(),
        multipliers: lambda,
        iters: total,
        status,
    }
}

fn finish(spec: &BoundarySpec, prob: &Condensed, out: StartOutcome, cfg: &TranscriptionConfig, start: usize) -> OcpSolution {
    let states = prob.states(&out.z);
    let controls = (0..prob.intervals).map(|k| prob.control(&out.z, k)).collect();
    let mut sol = assemble(spec, states, controls, cfg.feasibility_tol);
    sol.status = out.status;
    sol.iters = out.iters;
    sol.start = start;
    sol.multipliers = out.multipliers;
    sol
}

/// Solves from each multistart and returns every candidate in start order.
pub fn solve_all(spec: &BoundarySpec, cfg: &TranscriptionConfig) -> Result<Vec<OcpSolution>> {
    spec.validate()?;
    cfg.validate()?;
    let cons = spec.constraints();
    let prob = Condensed::new(cfg.intervals, HORIZON, &cons);
    let (lo, hi) = bounds(spec, &prob);
    let candidates = (0..cfg.multistart)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
            let mut z = initial_guess(spec, &prob, &mut rng);
            let schedule = if i % 2 == 1 { Schedule::FeasibilityFirst } else { Schedule::Balanced };
            let out = run_from(&mut z, &prob, &lo, &hi, cfg, schedule);
            finish(spec, &prob, out, cfg, i)
        })
        .collect();
    Ok(candidates)
}

/// Picks the lowest-energy feasible candidate; ties go to the lower start index.
pub fn select_best(candidates: Vec<OcpSolution>) -> Result<OcpSolution> {
    let mut best: Option<OcpSolution> = None;
    let mut best_defect = f64::INFINITY;
    let mut best_boundary = f64::INFINITY;
    for c in candidates {
        best_defect = best_defect.min(c.max_defect);
        best_boundary = best_boundary.min(c.boundary_violation);
        if !c.feasible {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => c.energy < b.energy || (c.energy == b.energy && c.start < b.start),
        };
        if better {
            best = Some(c);
        }
    }
    best.ok_or(Error::InfeasibleWithinBudget { best_defect, best_boundary })
}

/// Minimum-energy trajectory over `[0, 2 pi]` meeting `spec`.
pub fn solve(spec: &BoundarySpec, cfg: &TranscriptionConfig) -> Result<OcpSolution> {
    select_best(solve_all(spec, cfg)?)
}

/// Re-solves starting from the leg-angle path and initial pose of `guess`,
/// resampled onto `cfg.intervals` intervals.
pub fn solve_from(spec: &BoundarySpec, cfg: &TranscriptionConfig, guess: &OcpSolution) -> Result<OcpSolution> {
    spec.validate()?;
    cfg.validate()?;
    let cons = spec.constraints();
    let prob = Condensed::new(cfg.intervals, HORIZON, &cons);
    let (lo, hi) = bounds(spec, &prob);
    let nodes = guess.node_states();
    let old = nodes.len() - 1;
    let mut z = vec![0.0; prob.dim()];
    for k in 0..=cfg.intervals {
        let s = k as f64 * old as f64 / cfg.intervals as f64;
        let i = (s.floor() as usize).min(old - 1);
        let w = s - i as f64;
        for leg in 0..2 {
            z[prob.theta_index(leg, k)] = (1.0 - w) * nodes[i][3 + leg] + w * nodes[i + 1][3 + leg];
        }
    }
    let p = prob.pose_index();
    z[p..p + 3].copy_from_slice(&nodes[0][..3]);
    let out = run_from(&mut z, &prob, &lo, &hi, cfg, Schedule::Balanced);
    let sol = finish(spec, &prob, out, cfg, 0);
    select_best(vec![sol])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> TranscriptionConfig {
        TranscriptionConfig {
            intervals: 40,
            multistart: 4,
            ..Default::default()
        }
    }

    #[test]
    fn validation_rejects_conflicts() {
        let mut b = BoundarySpec::free();
        b.initial[2] = EndValue::Fixed(0.0);
        b.terminal[2] = EndValue::Fixed(0.0);
        b.delta_phi = Some(0.5);
        assert!(b.validate().is_err());
        let mut b = BoundarySpec::free();
        b.initial[3] = EndValue::Fixed(4.0);
        assert!(b.validate().is_err());
        let mut b = BoundarySpec::free();
        b.stroke = true;
        b.initial[3] = EndValue::Fixed(1.0);
        b.terminal[3] = EndValue::Fixed(2.0);
        assert!(b.validate().is_err());
        let bad = TranscriptionConfig { intervals: 9, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn staying_still_costs_nothing() {
        let q = [0.0, 0.0, 0.3, 1.0, 4.0];
        let mut b = BoundarySpec::free();
        for i in 0..5 {
            b.initial[i] = EndValue::Fixed(q[i]);
            b.terminal[i] = EndValue::Fixed(q[i]);
        }
        b.stroke = true;
        let sol = solve(&b, &quick()).unwrap();
        assert!(sol.feasible);
        assert!(sol.energy < 1e-9, "{}", sol.energy);
        let umax = sol.interval_controls().iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        // The energy gradient is 2 h u, so a 1e-6 projected-gradient stop
        // leaves controls of order 1e-6 / (2 h).
        assert!(umax < 1e-5, "{umax}");
    }

    #[test]
    fn preconditioner_inverts_chain() {
        let pre = ChainPreconditioner { nodes: 5, weight: 3.0, shift: 0.5 };
        let mut free = vec![true; 13];
        free[2] = false;
        free[11] = false;
        let v: Vec<f64> = (0..13).map(|i| (i as f64).sin()).collect();
        let mut out = vec![0.0; 13];
        pre.apply(&v, &free, &mut out);
        // Multiply back by the restricted matrix.
        for leg in 0..2 {
            for i in 0..5 {
                let idx = leg * 5 + i;
                if !free[idx] {
                    assert_eq!(out[idx], 0.0);
                    continue;
                }
                let deg = (i > 0) as usize + (i < 4) as usize;
                let mut r = (3.0 * deg as f64 + 0.5) * out[idx];
                if i > 0 && free[idx - 1] {
                    r -= 3.0 * out[idx - 1];
                }
                if i < 4 && free[idx + 1] {
                    r -= 3.0 * out[idx + 1];
                }
                assert!((r - v[idx]).abs() < 1e-12);
            }
        }
        assert_eq!(out[11], 0.0);
        assert_eq!(out[12], v[12]);
    }

    #[test]
    fn selection_is_deterministic() {
        let mut b = BoundarySpec::free();
        for i in 0..3 {
            b.initial[i] = EndValue::Fixed(0.0);
        }
        b.terminal[0] = EndValue::Fixed(0.0);
        b.terminal[1] = EndValue::Fixed(0.05);
        let a = solve(&b, &quick()).unwrap();
        let c = solve(&b, &quick()).unwrap();
        assert_eq!(a.start, c.start);
        assert_eq!(a.energy.to_bits(), c.energy.to_bits());
        assert!(a.feasible && a.max_defect < 1e-12);
    }
}
