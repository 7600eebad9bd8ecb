//! Forward integration of prescribed leg motions.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};

use crate::dynamics::{drive_vector, fields_at, ControlInput, LegAngles, State};
use crate::error::{Error, Result};

/// Control law on one segment of a schedule.
#[derive(Clone)]
pub enum ControlLaw {
    Constant(Vec<f64>),
    /// Interpolates linearly from `start` at the segment start to `end` at its end.
    Linear { start: Vec<f64>, end: Vec<f64> },
    /// Arbitrary bounded law evaluated at absolute time.
    Function(Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>),
}

impl fmt::Debug for ControlLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlLaw::Constant(u) => f.debug_tuple("Constant").field(u).finish(),
            ControlLaw::Linear { start, end } => f
                .debug_struct("Linear")
                .field("start", start)
                .field("end", end)
                .finish(),
            ControlLaw::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl PartialEq for ControlLaw {
    /// Function laws never compare equal.
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ControlLaw::Constant(a), ControlLaw::Constant(b)) => a == b,
            (
                ControlLaw::Linear { start: a, end: b },
                ControlLaw::Linear { start: c, end: d },
            ) => a == c && b == d,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub law: ControlLaw,
}

impl Segment {
    pub fn constant(t_start: f64, t_end: f64, u: Vec<f64>) -> Self {
        Segment {
            t_start,
            t_end,
            law: ControlLaw::Constant(u),
        }
    }

    fn control_at(&self, t: f64) -> Vec<f64> {
        match &self.law {
            ControlLaw::Constant(u) => u.clone(),
            ControlLaw::Linear { start, end } => {
                let s = (t - self.t_start) / (self.t_end - self.t_start);
                start
                    .iter()
                    .zip(end)
                    .map(|(a, b)| a + s * (b - a))
                    .collect()
            }
            ControlLaw::Function(f) => f(t),
        }
    }

    fn width(&self) -> usize {
        match &self.law {
            ControlLaw::Constant(u) => u.len(),
            ControlLaw::Linear { start, .. } => start.len(),
            ControlLaw::Function(f) => f(self.t_start).len(),
        }
    }
}

/// Piecewise control history partitioning `[t0, tf]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSchedule {
    segments: Vec<Segment>,
}

impl ControlSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::InvalidInput("schedule has no segments".into()))?;
        let width = first.width();
        if width == 0 {
            return Err(Error::InvalidInput("controls must have at least one entry".into()));
        }
        for (i, seg) in segments.iter().enumerate() {
            if !(seg.t_start.is_finite() && seg.t_end.is_finite() && seg.t_end > seg.t_start) {
                return Err(Error::InvalidInput(format!(
                    "segment {i} has an empty or invalid interval [{}, {}]",
                    seg.t_start, seg.t_end
                )));
            }
            if i > 0 && seg.t_start != segments[i - 1].t_end {
                return Err(Error::InvalidInput(format!(
                    "segment {i} starts at {} but the previous one ends at {}",
                    seg.t_start,
                    segments[i - 1].t_end
                )));
            }
            if seg.width() != width {
                return Err(Error::InvalidInput(format!(
                    "segment {i} has {} controls, expected {width}",
                    seg.width()
                )));
            }
            let check = |u: &[f64]| u.iter().all(|v| v.is_finite());
            let ok = match &seg.law {
                ControlLaw::Constant(u) => check(u),
                ControlLaw::Linear { start, end } => {
                    start.len() == end.len() && check(start) && check(end)
                }
                ControlLaw::Function(f) => check(&f(seg.t_start)) && check(&f(seg.t_end)),
            };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "segment {i} has non-finite controls"
                )));
            }
        }
        Ok(ControlSchedule { segments })
    }

    /// Constant controls `controls[k]` on `[times[k], times[k + 1])`.
    pub fn piecewise_constant(times: &[f64], controls: &[Vec<f64>]) -> Result<Self> {
        if times.len() != controls.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "{} breakpoints for {} intervals",
                times.len(),
                controls.len()
            )));
        }
        ControlSchedule::new(
            controls
                .iter()
                .enumerate()
                .map(|(k, u)| Segment::constant(times[k], times[k + 1], u.clone()))
                .collect(),
        )
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn t0(&self) -> f64 {
        self.segments[0].t_start
    }

    pub fn tf(&self) -> f64 {
        self.segments[self.segments.len() - 1].t_end
    }

    pub fn n_controls(&self) -> usize {
        self.segments[0].width()
    }

    /// Right-continuous control value; `tf` maps to the last segment.
    pub fn control_at(&self, t: f64) -> Vec<f64> {
        let idx = self
            .segments
            .iter()
            .position(|s| t < s.t_end)
            .unwrap_or(self.segments.len() - 1);
        self.segments[idx].control_at(t)
    }

    /// Exact `integral |u|^2 dt` for constant and linear laws; Simpson with
    /// 512 panels per segment for function laws.
    pub fn energy(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| {
                let len = s.t_end - s.t_start;
                match &s.law {
                    ControlLaw::Constant(u) => len * u.iter().map(|v| v * v).sum::<f64>(),
                    ControlLaw::Linear { start, end } => {
                        len * start
                            .iter()
                            .zip(end)
                            .map(|(a, b)| (a * a + a * b + b * b) / 3.0)
                            .sum::<f64>()
                    }
                    ControlLaw::Function(_) => {
                        let panels = 512;
                        let h = len / panels as f64;
                        let g = |t: f64| s.control_at(t).iter().map(|v| v * v).sum::<f64>();
                        let mut acc = g(s.t_start) + g(s.t_end);
                        for k in 1..panels {
                            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                            acc += w * g(s.t_start + k as f64 * h);
                        }
                        acc * h / 3.0
                    }
                }
            })
            .sum()
    }
}

/// Time reversal `t -> t0 + tf - t`, `u -> -u`.
///
/// Integrating the reversed schedule from the end of a forward run retraces
/// the forward path back to its start.
pub fn reverse_schedule(schedule: &ControlSchedule) -> ControlSchedule {
    let total = schedule.t0() + schedule.tf();
    let neg = |u: &[f64]| u.iter().map(|v| -v).collect::<Vec<_>>();
    let segments = schedule
        .segments
        .iter()
        .rev()
        .map(|s| Segment {
            t_start: total - s.t_end,
            t_end: total - s.t_start,
            law: match &s.law {
                ControlLaw::Constant(u) => ControlLaw::Constant(neg(u)),
                ControlLaw::Linear { start, end } => ControlLaw::Linear {
                    start: neg(end),
                    end: neg(start),
                },
                ControlLaw::Function(f) => {
                    let f = Arc::clone(f);
                    ControlLaw::Function(Arc::new(move |t| {
                        f(total - t).into_iter().map(|v| -v).collect()
                    }))
                }
            },
        })
        .collect();
    ControlSchedule { segments }
}

/// Sampled state history of an integration run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Control at each node (right limit, except at the final node).
    pub controls: Vec<ControlInput>,
    /// Accumulated `integral |u|^2` up to each node.
    pub energy_profile: Vec<f64>,
    /// Largest excursion outside the two-leg constraint box; zero for other
    /// leg counts.
    pub box_violation: f64,
}

impl Trajectory {
    pub fn energy(&self) -> f64 {
        *self.energy_profile.last().unwrap_or(&0.0)
    }

    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory has at least one node")
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IntegratorOptions {
    /// Accept when halving the step moves the endpoint by less than this.
    pub tol: f64,
    /// Initial number of steps per unit time.
    pub initial_density: f64,
    /// Cap on the total number of steps of the finest attempted grid.
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            tol: 1e-10,
            initial_density: 16.0,
            max_steps: 1 << 22,
        }
    }
}

/// Body velocity for leg angles `thetas` and rates `u`, without allocation.
pub(crate) fn mobility(phi: f64, thetas: &[f64], u: &[f64]) -> Result<Vector3<f64>> {
    let mut m = Matrix3::zeros();
    let mut k = Vector3::zeros();
    for (&t, &ui) in thetas.iter().zip(u) {
        let a = t + phi;
        let (s, c) = a.sin_cos();
        m[(0, 0)] += 1.0 + s * s;
        m[(0, 1)] -= s * c;
        m[(0, 2)] -= s;
        m[(1, 1)] += 1.0 + c * c;
        m[(1, 2)] += c;
        k += drive_vector(a) * ui;
    }
    m[(2, 2)] = 2.0;
    m[(1, 0)] = m[(0, 1)];
    m[(2, 0)] = m[(0, 2)];
    m[(2, 1)] = m[(1, 2)];
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Numerical("resistance matrix lost positive definiteness".into()))?;
    Ok(chol.solve(&k))
}

/// `(q', e')` for the augmented state `(q, e)` with `e' = |u|^2`.
fn augmented_rate(q: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
    let legs = q.len() - 3;
    if legs == 2 {
        let qa = [q[0], q[1], q[2], q[3], q[4]];
        let (f1, f2) = fields_at(&qa);
        for i in 0..5 {
            out[i] = u[0] * f1[i] + u[1] * f2[i];
        }
    } else {
        let v = mobility(q[2], &q[3..], u)?;
        out[..3].copy_from_slice(v.as_slice());
        out[3..3 + legs].copy_from_slice(u);
    }
    out[3 + legs] = u.iter().map(|v| v * v).sum();
    Ok(())
}

struct Run {
    times: Vec<f64>,
    nodes: Vec<Vec<f64>>,
}

fn rk4_run(q0: &[f64], schedule: &ControlSchedule, density: f64) -> Result<Run> {
    let dim = q0.len() + 1;
    let mut y = q0.to_vec();
    y.push(0.0);
    let mut times = vec![schedule.t0()];
    let mut nodes = vec![y.clone()];
    let mut k = vec![vec![0.0; dim]; 4];
    let mut tmp = vec![0.0; dim];
    for seg in &schedule.segments {
        let len = seg.t_end - seg.t_start;
        let steps = ((len * density).ceil() as usize).max(1);
        let h = len / steps as f64;
        for s in 0..steps {
            let t = seg.t_start + s as f64 * h;
            let stages = [(0.0, 0usize), (0.5, 0), (0.5, 1), (1.0, 2)];
            for (j, &(c, prev)) in stages.iter().enumerate() {
                for i in 0..dim {
                    tmp[i] = if j == 0 { y[i] } else { y[i] + c * h * k[prev][i] };
                }
                let u = seg.control_at(t + c * h);
                augmented_rate(&tmp[..dim - 1], &u, &mut k[j])?;
            }
            for i in 0..dim {
                y[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
            }
            let t_next = if s + 1 == steps {
                seg.t_end
            } else {
                seg.t_start + (s + 1) as f64 * h
            };
            times.push(t_next);
            nodes.push(y.clone());
        }
    }
    Ok(Run { times, nodes })
}

fn total_steps(schedule: &ControlSchedule, density: f64) -> usize {
    schedule
        .segments
        .iter()
        .map(|s| (((s.t_end - s.t_start) * density).ceil() as usize).max(1))
        .sum()
}

/// Integrates `q' = sum_i u_i F_i(q)` under `schedule` with classical RK4.
///
/// The grid is uniform within each segment and always contains the segment
/// boundaries. It is refined by halving until the endpoint (state and
/// energy) moves by less than `tol`.
pub fn integrate(initial: &State, schedule: &ControlSchedule, tol: f64) -> Result<Trajectory> {
    integrate_with(
        initial,
        schedule,
        &IntegratorOptions {
            tol,
            ..IntegratorOptions::default()
        },
    )
}

pub fn integrate_with(
    initial: &State,
    schedule: &ControlSchedule,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if schedule.n_controls() != initial.legs.len() {
        return Err(Error::InvalidInput(format!(
            "schedule drives {} legs but the state has {}",
            schedule.n_controls(),
            initial.legs.len()
        )));
    }
    let q0 = initial.to_vec();
    let mut density = opts.initial_density;
    let mut coarse = rk4_run(&q0, schedule, density)?;
    let mut change = f64::INFINITY;
    while total_steps(schedule, 2.0 * density) <= opts.max_steps {
        density *= 2.0;
        let fine = rk4_run(&q0, schedule, density)?;
        change = endpoint_distance(&coarse, &fine);
        coarse = fine;
        if change < opts.tol {
            return Ok(to_trajectory(coarse, schedule));
        }
    }
    Err(Error::ToleranceUnachievable {
        tol: opts.tol,
        achieved: change,
        max_steps: opts.max_steps,
    })
}

fn endpoint_distance(a: &Run, b: &Run) -> f64 {
    let ya = a.nodes.last().unwrap();
    let yb = b.nodes.last().unwrap();
    ya.iter()
        .zip(yb)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

fn to_trajectory(run: Run, schedule: &ControlSchedule) -> Trajectory {
    let legs = run.nodes[0].len() - 4;
    let last = run.times.len() - 1;
    let mut states = Vec::with_capacity(run.nodes.len());
    let mut controls = Vec::with_capacity(run.nodes.len());
    let mut energy_profile = Vec::with_capacity(run.nodes.len());
    let mut box_violation = 0.0f64;
    for (i, (t, y)) in run.times.iter().zip(&run.nodes).enumerate() {
        let thetas = y[3..3 + legs].to_vec();
        if legs == 2 {
            box_violation = box_violation.max(crate::dynamics::box_violation(thetas[0], thetas[1]));
        }
        states.push(State::new(y[0], y[1], y[2], LegAngles::new(thetas).expect("finite")));
        let u = if i == last {
            let seg = schedule.segments.last().unwrap();
            seg.control_at(seg.t_end)
        } else {
            schedule.control_at(*t)
        };
        controls.push(ControlInput(u));
        energy_profile.push(y[3 + legs]);
    }
    Trajectory {
        times: run.times,
        states,
        controls,
        energy_profile,
        box_violation,
    }
}

/// The three-segment triangle stroke on `[0, 2 pi]`, started from
/// `(theta1, theta2) = (0, pi)`: both legs sweep forward together, then each
/// returns on its own.
pub fn triangle_stroke() -> ControlSchedule {
    ControlSchedule::new(vec![
        Segment::constant(0.0, PI, vec![1.0, 1.0]),
        Segment::constant(PI, 1.5 * PI, vec![-2.0, 0.0]),
        Segment::constant(1.5 * PI, 2.0 * PI, vec![0.0, -2.0]),
    ])
    .expect("triangle stroke is well formed")
}

/// Named periodic shape changes of the two-leg swimmer.
#[derive(Clone, Debug, PartialEq)]
pub enum StrokeSpec {
    /// The triangle stroke over `[0, 2 pi]`.
    Triangle,
    /// `theta1 = c1 + r1 cos(w t + p)`, `theta2 = c2 + r2 sin(w t + p)` with `w = 2 pi / period`.
    Ellipse {
        center: [f64; 2],
        radii: [f64; 2],
        phase: f64,
        period: f64,
    },
    /// Closed polygon in the leg-angle plane visited at the given knot times.
    PiecewiseLinear { times: Vec<f64>, legs: Vec<[f64; 2]> },
}

impl StrokeSpec {
    pub fn period(&self) -> f64 {
        match self {
            StrokeSpec::Triangle => 2.0 * PI,
            StrokeSpec::Ellipse { period, .. } => *period,
            StrokeSpec::PiecewiseLinear { times, .. } => times[times.len() - 1] - times[0],
        }
    }

    pub fn initial_legs(&self) -> [f64; 2] {
        match self {
            StrokeSpec::Triangle => [0.0, PI],
            StrokeSpec::Ellipse {
                center,
                radii,
                phase,
                ..
            } => [
                center[0] + radii[0] * phase.cos(),
                center[1] + radii[1] * phase.sin(),
            ],
            StrokeSpec::PiecewiseLinear { legs, .. } => legs[0],
        }
    }

    pub fn schedule(&self) -> Result<ControlSchedule> {
        match self {
            StrokeSpec::Triangle => Ok(triangle_stroke()),
            StrokeSpec::Ellipse {
                radii,
                phase,
                period,
                ..
            } => {
                if !(*period > 0.0) {
                    return Err(Error::InvalidInput("stroke period must be positive".into()));
                }
                let w = 2.0 * PI / period;
                let (r, p) = (*radii, *phase);
                ControlSchedule::new(vec![Segment {
                    t_start: 0.0,
                    t_end: *period,
                    law: ControlLaw::Function(Arc::new(move |t| {
                        let (s, c) = (w * t + p).sin_cos();
                        vec![-r[0] * w * s, r[1] * w * c]
                    })),
                }])
            }
            StrokeSpec::PiecewiseLinear { times, legs } => {
                if times.len() != legs.len() || times.len() < 3 {
                    return Err(Error::InvalidInput(
                        "a polygonal stroke needs matching knot times and leg angles (at least 3)".into(),
                    ));
                }
                let (first, last) = (legs[0], legs[legs.len() - 1]);
                if (first[0] - last[0]).abs() > 1e-12 || (first[1] - last[1]).abs() > 1e-12 {
                    return Err(Error::InvalidInput(
                        "stroke is not periodic: first and last leg angles differ".into(),
                    ));
                }
                let controls: Vec<Vec<f64>> = times
                    .windows(2)
                    .zip(legs.windows(2))
                    .map(|(t, l)| {
                        let dt = t[1] - t[0];
                        vec![(l[1][0] - l[0][0]) / dt, (l[1][1] - l[0][1]) / dt]
                    })
                    .collect();
                ControlSchedule::piecewise_constant(times, &controls)
            }
        }
    }
}

/// Net `(dx, dy, dphi)` of a one-legged swimmer after one period of the
/// prescribed leg motion. `signal(t)` returns `(theta, theta')`.
///
/// The body equations are integrated with the general resistance solve, so
/// this is an independent check of the reduced one-leg mobility.
pub fn one_leg_net_motion<F>(signal: F, period: f64) -> Result<[f64; 3]>
where
    F: Fn(f64) -> (f64, f64),
{
    if !(period > 0.0) {
        return Err(Error::InvalidInput("period must be positive".into()));
    }
    let theta0 = signal(0.0).0;
    let theta_t = signal(period).0;
    if (theta_t - theta0).abs() > 1e-10 * theta0.abs().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "leg motion is not periodic: theta(0) = {theta0}, theta(T) = {theta_t}"
        )));
    }
    let rate = |t: f64, y: &Vector3<f64>| -> Result<Vector3<f64>> {
        let (theta, dtheta) = signal(t);
        mobility(y.z, &[theta], &[dtheta])
    };
    let run = |steps: usize| -> Result<Vector3<f64>> {
        let h = period / steps as f64;
        let mut y = Vector3::zeros();
        for s in 0..steps {
            let t = s as f64 * h;
            let k1 = rate(t, &y)?;
            let k2 = rate(t + 0.5 * h, &(y + 0.5 * h * k1))?;
            let k3 = rate(t + 0.5 * h, &(y + 0.5 * h * k2))?;
            let k4 = rate(t + h, &(y + h * k3))?;
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        Ok(y)
    };
    let mut steps = 256;
    let mut prev = run(steps)?;
    loop {
        steps *= 2;
        let next = run(steps)?;
        if (next - prev).amax() < 1e-13 || steps >= 1 << 18 {
            return Ok([next.x, next.y, next.z]);
        }
        prev = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn start() -> State {
        State::two_leg(0.0, 0.0, 0.0, 0.0, PI)
    }

    #[test]
    fn zero_controls_do_not_move() {
        let sched = ControlSchedule::new(vec![Segment::constant(0.0, 2.0 * PI, vec![0.0, 0.0])]).unwrap();
        let q0 = State::two_leg(0.3, -0.2, 0.7, 1.0, 4.0);
        let traj = integrate(&q0, &sched, 1e-10).unwrap();
        assert_eq!(traj.final_state(), &q0);
        assert_eq!(traj.energy(), 0.0);
    }

    #[test]
    fn triangle_stroke_energy_and_shape() {
        let s = triangle_stroke();
        assert!((s.energy() - 6.0 * PI).abs() < 1e-9);
        let traj = integrate(&start(), &s, 1e-11).unwrap();
        assert!((traj.energy() - 6.0 * PI).abs() < 1e-9);
        let q = traj.final_state().legs.as_slice().to_vec();
        assert!(q[0].abs() < 1e-12 && (q[1] - PI).abs() < 1e-12);
        // the leg path visits the three triangle corners
        let corner = |t: f64| {
            let i = traj.times.iter().position(|&s| (s - t).abs() < 1e-12).unwrap();
            traj.states[i].legs.as_slice().to_vec()
        };
        let c1 = corner(PI);
        assert!((c1[0] - PI).abs() < 1e-12 && (c1[1] - 2.0 * PI).abs() < 1e-12);
        let c2 = corner(1.5 * PI);
        assert!(c2[0].abs() < 1e-12 && (c2[1] - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn triangle_stroke_net_rotation() {
        let traj = integrate(&start(), &triangle_stroke(), 1e-11).unwrap();
        let end = traj.final_state();
        assert!((end.phi + PI / 6.0).abs() < 1e-8, "phi = {}", end.phi);
        assert!((end.x - 0.0071).abs() < 5e-4, "x = {}", end.x);
        assert!((end.y - 0.0019).abs() < 5e-4, "y = {}", end.y);
        // first leg of the triangle: phi(t) = -2t/3
        let i = traj.times.iter().position(|&t| t == PI).unwrap();
        assert!((traj.states[i].phi + 2.0 * PI / 3.0).abs() < 1e-10);
    }

    #[test]
    fn reversal_returns_to_start() {
        let s = triangle_stroke();
        let fwd = integrate(&start(), &s, 1e-11).unwrap();
        let back = integrate(fwd.final_state(), &reverse_schedule(&s), 1e-11).unwrap();
        let (a, b) = (back.final_state().to_array(), start().to_array());
        for i in 0..5 {
            assert!((a[i] - b[i]).abs() < 1e-7);
        }
        assert_eq!(reverse_schedule(&reverse_schedule(&s)), s);
    }

    #[test]
    fn reversed_function_law_negates_and_mirrors() {
        let s = StrokeSpec::Ellipse {
            center: [1.5, 4.5],
            radii: [0.5, 0.8],
            phase: 0.3,
            period: 2.0 * PI,
        }
        .schedule()
        .unwrap();
        let r = reverse_schedule(&s);
        for &t in &[0.1, 1.0, 4.0] {
            let a = s.control_at(2.0 * PI - t);
            let b = r.control_at(t);
            assert!((a[0] + b[0]).abs() < 1e-15 && (a[1] + b[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(ControlSchedule::new(vec![]).is_err());
        let gap = vec![
            Segment::constant(0.0, 1.0, vec![1.0, 0.0]),
            Segment::constant(1.5, 2.0, vec![1.0, 0.0]),
        ];
        assert!(ControlSchedule::new(gap).is_err());
        let width = vec![
            Segment::constant(0.0, 1.0, vec![1.0, 0.0]),
            Segment::constant(1.0, 2.0, vec![1.0]),
        ];
        assert!(ControlSchedule::new(width).is_err());
        assert!(ControlSchedule::new(vec![Segment::constant(1.0, 1.0, vec![0.0])]).is_err());
        assert!(ControlSchedule::new(vec![Segment::constant(0.0, 1.0, vec![f64::NAN])]).is_err());
    }

    #[test]
    fn tolerance_budget_is_enforced() {
        let opts = IntegratorOptions {
            tol: 1e-30,
            initial_density: 4.0,
            max_steps: 256,
        };
        let err = integrate_with(&start(), &triangle_stroke(), &opts).unwrap_err();
        assert!(matches!(err, Error::ToleranceUnachievable { .. }));
        assert!(integrate(&start(), &triangle_stroke(), -1.0).is_err());
    }

    #[test]
    fn one_leg_strokes_produce_nothing() {
        let net = one_leg_net_motion(|t| (t.sin(), t.cos()), 2.0 * PI).unwrap();
        assert!(net.iter().all(|v| v.abs() < 1e-9), "{net:?}");
        let net = one_leg_net_motion(|_| (1.3, 0.0), 2.0 * PI).unwrap();
        assert_eq!(net, [0.0, 0.0, 0.0]);
        let net = one_leg_net_motion(
            |t| (2.0 * t.sin() + 0.3 * (3.0 * t).sin(), 2.0 * t.cos() + 0.9 * (3.0 * t).cos()),
            2.0 * PI,
        )
        .unwrap();
        assert!(net.iter().all(|v| v.abs() < 1e-9), "{net:?}");
        assert!(one_leg_net_motion(|t| (t, 1.0), 2.0 * PI).is_err());
    }

    #[test]
    fn polygon_and_ellipse_strokes_are_periodic() {
        let poly = StrokeSpec::PiecewiseLinear {
            times: vec![0.0, 1.0, 2.5, 4.0],
            legs: vec![[0.5, 3.5], [2.0, 5.0], [1.0, 6.0], [0.5, 3.5]],
        };
        let traj = integrate(&State::two_leg(0.0, 0.0, 0.0, 0.5, 3.5), &poly.schedule().unwrap(), 1e-11).unwrap();
        let l = traj.final_state().legs.as_slice();
        assert!((l[0] - 0.5).abs() < 1e-12 && (l[1] - 3.5).abs() < 1e-12);

        let ell = StrokeSpec::Ellipse {
            center: [1.5, 4.5],
            radii: [0.5, 0.8],
            phase: 0.0,
            period: 2.0 * PI,
        };
        let [a, b] = ell.initial_legs();
        let traj = integrate(&State::two_leg(0.0, 0.0, 0.0, a, b), &ell.schedule().unwrap(), 1e-11).unwrap();
        let l = traj.final_state().legs.as_slice();
        assert!((l[0] - a).abs() < 1e-9 && (l[1] - b).abs() < 1e-9);
        assert_eq!(traj.box_violation, 0.0);

        let open = StrokeSpec::PiecewiseLinear {
            times: vec![0.0, 1.0, 2.0],
            legs: vec![[0.5, 3.5], [2.0, 5.0], [1.0, 6.0]],
        };
        assert!(open.schedule().is_err());
    }

    #[test]
    fn general_leg_count_uses_resistance_solve() {
        let legs = LegAngles::new(vec![0.4, 1.7, 4.0]).unwrap();
        let q0 = State::new(0.0, 0.0, 0.0, legs);
        let sched = ControlSchedule::new(vec![Segment::constant(0.0, 1.0, vec![1.0, -0.5, 0.2])]).unwrap();
        let traj = integrate(&q0, &sched, 1e-11).unwrap();
        let l = traj.final_state().legs.as_slice();
        assert!((l[0] - 1.4).abs() < 1e-12 && (l[1] - 1.2).abs() < 1e-12);
        assert!((traj.energy() - 1.29).abs() < 1e-11);
    }
}
