//! Normal and abnormal extremals of the energy-minimizing swimmer.
//!
//! With momenta `P_i = <p, F_i(q)>`, normal extremals follow the flow of
//! `H = (P1^2 + P2^2) / 2` with controls `u_i = P_i`. Abnormal extremals
//! satisfy `P1 = P2 = P3 = 0`; inside the singular sets they are given in
//! closed form, outside they follow the control-free Hamiltonian
//! `P1 P5 - P2 P4`.

use std::f64::consts::TAU;

use nalgebra::{Matrix5x3, Vector5};

use crate::autodiff::{Dual, Jet, Scalar};
use crate::dynamics::{field_jacobians, State};
use crate::error::{Error, Result};
use crate::liegeometry::{bracket_at, bracket_jet, defect_of_psi, pairing_gradient, BracketWord};

/// Adjoint vector with the cost multiplier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Costate {
    pub p: [f64; 5],
    /// `0` for abnormal extremals, `-1/2` for normal ones.
    pub p0: f64,
}

impl Costate {
    pub fn normal(p: [f64; 5]) -> Self {
        Costate { p, p0: -0.5 }
    }

    /// Abnormal costates must be nonzero.
    pub fn abnormal(p: [f64; 5]) -> Result<Self> {
        if p.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidInput(
                "an abnormal costate must be nonzero".into(),
            ));
        }
        Ok(Costate { p, p0: 0.0 })
    }

    pub fn is_nontrivial(&self) -> bool {
        self.p0 != 0.0 || self.p.iter().any(|v| *v != 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtremalKind {
    Normal,
    /// Closed-form abnormal inside the singular sets.
    AbnormalInS,
    /// Abnormal following the reduced Hamiltonian off the singular sets.
    AbnormalOffS,
}

#[derive(Clone, Debug)]
pub struct ExtremalArc {
    pub kind: ExtremalKind,
    pub times: Vec<f64>,
    pub states: Vec<[f64; 5]>,
    pub costates: Vec<[f64; 5]>,
    pub controls: Vec<[f64; 2]>,
    /// Hamiltonian value at each node.
    pub hamiltonian: Vec<f64>,
}

impl ExtremalArc {
    pub fn max_hamiltonian_drift(&self) -> f64 {
        let h0 = self.hamiltonian[0];
        self.hamiltonian
            .iter()
            .map(|h| (h - h0).abs())
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(q', p')` of the normal flow and `(P1, P2)` at `z = (q, p)`.
fn normal_rhs(z: &[f64; 10]) -> ([f64; 10], [f64; 2]) {
    let q: [f64; 5] = std::array::from_fn(|i| z[i]);
    let p: [f64; 5] = std::array::from_fn(|i| z[5 + i]);
    let fj = field_jacobians(&q);
    let p1 = dot(&p, &fj.f1);
    let p2 = dot(&p, &fj.f2);
    let mut out = [0.0; 10];
    for i in 0..5 {
        out[i] = p1 * fj.f1[i] + p2 * fj.f2[i];
    }
    for c in 0..5 {
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for r in 0..5 {
            d1 += p[r] * fj.j1[r][c];
            d2 += p[r] * fj.j2[r][c];
        }
        out[5 + c] = -(p1 * d1 + p2 * d2);
    }
    (out, [p1, p2])
}

fn rk4_step<const N: usize>(z: &[f64; N], h: f64, f: &impl Fn(&[f64; N]) -> Result<[f64; N]>) -> Result<[f64; N]> {
    let axpy = |a: &[f64; N], s: f64, b: &[f64; N]| -> [f64; N] { std::array::from_fn(|i| a[i] + s * b[i]) };
    let k1 = f(z)?;
    let k2 = f(&axpy(z, 0.5 * h, &k1))?;
    let k3 = f(&axpy(z, 0.5 * h, &k2))?;
    let k4 = f(&axpy(z, h, &k3))?;
    Ok(std::array::from_fn(|i| {
        z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    }))
}

pub const DEFAULT_FLOW_STEP: f64 = 1e-3;

/// Normal extremal from `(q0, p0)` over `[0, duration]` with the default step.
pub fn normal_flow(q0: &State, costate: &Costate, duration: f64, tol: f64) -> Result<ExtremalArc> {
    normal_flow_with_step(q0, costate, duration, tol, DEFAULT_FLOW_STEP)
}

/// Normal extremal integrated with fixed-step RK4. Fails if the Hamiltonian
/// drifts by more than `tol` at any node.
pub fn normal_flow_with_step(
    q0: &State,
    costate: &Costate,
    duration: f64,
    tol: f64,
    step: f64,
) -> Result<ExtremalArc> {
    if !(tol > 0.0 && step > 0.0 && duration >= 0.0) {
        return Err(Error::InvalidInput(
            "normal flow needs tol > 0, step > 0 and a nonnegative duration".into(),
        ));
    }
    if costate.p0 != -0.5 {
        return Err(Error::InvalidInput(format!(
            "normal extremals use p0 = -1/2, got {}",
            costate.p0
        )));
    }
    let q = q0.to_array();
    let mut z = [0.0; 10];
    z[..5].copy_from_slice(&q);
    z[5..].copy_from_slice(&costate.p);
    let steps = (duration / step).ceil().max(1.0) as usize;
    let h = duration / steps as f64;

    let mut arc = ExtremalArc {
        kind: ExtremalKind::Normal,
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        costates: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps + 1),
        hamiltonian: Vec::with_capacity(steps + 1),
    };
    let rhs = |z: &[f64; 10]| -> Result<[f64; 10]> { Ok(normal_rhs(z).0) };
    for k in 0..=steps {
        let (_, u) = normal_rhs(&z);
        let ham = 0.5 * (u[0] * u[0] + u[1] * u[1]);
        let t = k as f64 * h;
        if let Some(h0) = arc.hamiltonian.first() {
            let drift = (ham - h0).abs();
            if !(drift <= tol) {
                return Err(Error::HamiltonianDrift { drift, tol, t });
            }
        }
        arc.times.push(t);
        arc.states.push(std::array::from_fn(|i| z[i]));
        arc.costates.push(std::array::from_fn(|i| z[5 + i]));
        arc.controls.push(u);
        arc.hamiltonian.push(ham);
        if k < steps {
            z = rk4_step(&z, h, &rhs)?;
        }
    }
    Ok(arc)
}

/// Parameters of the abnormal family through the first singular set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct S1Family {
    pub n: i64,
    /// `+1` or `-1`: which branch `psi = -+ 2 arctan 2` is followed.
    pub sign: f64,
    pub phi0: f64,
    pub x0: f64,
    pub y0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl S1Family {
    pub fn new(n: i64, sign: f64, phi0: f64, x0: f64, y0: f64, c1: f64, c2: f64) -> Result<Self> {
        if c1 == 0.0 && c2 == 0.0 {
            return Err(Error::InvalidInput(
                "(c1, c2) = (0, 0) gives a trivial costate".into(),
            ));
        }
        if sign != 1.0 && sign != -1.0 {
            return Err(Error::InvalidInput(format!("sign must be +1 or -1, got {sign}")));
        }
        Ok(S1Family { n, sign, phi0, x0, y0, c1, c2 })
    }

    fn radius() -> f64 {
        5f64.sqrt() / 6.0
    }

    /// Centre `(c_x, c_y)` of the planar circle.
    pub fn center(&self) -> [f64; 2] {
        let a = self.sign * 2f64.atan() + self.phi0;
        [
            self.x0 + Self::radius() * a.cos(),
            self.y0 + Self::radius() * a.sin(),
        ]
    }

    pub fn eval<T: Scalar>(&self, t: &T) -> ([T; 5], [T; 5]) {
        let r = Self::radius();
        let [cx, cy] = self.center();
        let atan2 = 2f64.atan();
        let (s, c) = (t.clone() * 0.4 + (self.sign * atan2 + self.phi0)).sin_cos();
        let q = [
            -(c * r) + cx,
            -(s * r) + cy,
            t.clone() * -0.6 + self.phi0,
            t.clone(),
            t.clone() + (self.sign * 2.0 * atan2 - TAU * self.n as f64),
        ];
        // The costate is written in terms of w = phi + theta1. Swapping the legs
        // exchanges F1 and F2 and fixes u = (1, 1), so the other branch uses
        // w = phi + theta2 with the last two components exchanged.
        let (c1, c2) = (self.c1, self.c2);
        let w0 = if self.sign > 0.0 { self.phi0 } else { self.phi0 - 2.0 * atan2 };
        let (sw, cw) = (t.clone() * 0.4 + w0).sin_cos();
        let mut p = [
            T::constant(c1),
            T::constant(c2),
            (cw.clone() * (-2.0 * c1 + c2) - sw.clone() * (c1 + 2.0 * c2)) / 6.0,
            (cw.clone() * (-2.0 * c1 + 11.0 * c2) - sw.clone() * (11.0 * c1 + 2.0 * c2)) / 36.0,
            (cw * (-10.0 * c1 - 5.0 * c2) + sw * (5.0 * c1 - 10.0 * c2)) / 36.0,
        ];
        if self.sign < 0.0 {
            p.swap(3, 4);
        }
        (q, p)
    }
}

/// Parameters of the abnormal family through the second singular set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct S2Family {
    pub n: i64,
    pub phi0: f64,
    pub x0: f64,
    pub y0: f64,
}

impl S2Family {
    pub fn center(&self) -> [f64; 2] {
        [
            self.x0 + 0.5 * self.phi0.cos(),
            self.y0 + 0.5 * self.phi0.sin(),
        ]
    }

    pub fn eval<T: Scalar>(&self, t: &T) -> ([T; 5], [T; 5]) {
        let [cx, cy] = self.center();
        let (s, c) = (t.clone() * (2.0 / 3.0) + self.phi0).sin_cos();
        let q = [
            -(c * 0.5) + cx,
            -(s * 0.5) + cy,
            t.clone() * (-1.0 / 3.0) + self.phi0,
            t.clone(),
            t.clone() - TAU * self.n as f64,
        ];
        let p = [0.0, 0.0, 6.0, 1.0, 1.0].map(T::constant);
        (q, p)
    }
}

fn to_pair(q: [f64; 5], p: [f64; 5], abnormal: bool) -> (State, Costate) {
    let p0 = if abnormal { 0.0 } else { -0.5 };
    (State::from_array(q), Costate { p, p0 })
}

/// Point at time `t` of the abnormal family inside the first singular set.
#[allow(clippy::too_many_arguments)]
pub fn abnormal_family_s1(
    n: i64,
    sign: f64,
    phi0: f64,
    x0: f64,
    y0: f64,
    c1: f64,
    c2: f64,
    t: f64,
) -> Result<(State, Costate)> {
    let fam = S1Family::new(n, sign, phi0, x0, y0, c1, c2)?;
    let (q, p) = fam.eval(&t);
    Ok(to_pair(q, p, true))
}

/// Point at time `t` of the abnormal family inside the second singular set.
pub fn abnormal_family_s2(n: i64, phi0: f64, x0: f64, y0: f64, t: f64) -> (State, Costate) {
    let (q, p) = S2Family { n, phi0, x0, y0 }.eval(&t);
    to_pair(q, p, true)
}

/// Sample of a `(q, p)` curve with its exact time derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbnormalSample {
    pub t: f64,
    pub q: [f64; 5],
    pub p: [f64; 5],
    pub q_dot: [f64; 5],
    pub p_dot: [f64; 5],
}

/// Samples a closed-form curve on a uniform grid of `count` points over
/// `[t0, t1]`; derivatives come from forward-mode differentiation in `t`.
pub fn sample_curve<F>(curve: F, t0: f64, t1: f64, count: usize) -> Vec<AbnormalSample>
where
    F: Fn(&Dual) -> ([Dual; 5], [Dual; 5]),
{
    let count = count.max(2);
    (0..count)
        .map(|k| {
            let t = t0 + (t1 - t0) * k as f64 / (count - 1) as f64;
            let (q, p) = curve(&Dual::variable(t));
            AbnormalSample {
                t,
                q: q.map(|v| v.re),
                p: p.map(|v| v.re),
                q_dot: q.map(|v| v.du),
                p_dot: p.map(|v| v.du),
            }
        })
        .collect()
}

/// Largest residuals of the abnormal conditions along a sampled arc.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AbnormalResiduals {
    pub p_f1: f64,
    pub p_f2: f64,
    pub p_f3: f64,
    /// `u1 <p,F4> + u2 <p,F5>`
    pub p_f45: f64,
    /// `|(q', p') - X_Ha(q, p)|_inf`
    pub hamilton: f64,
}

impl AbnormalResiduals {
    pub fn max(&self) -> f64 {
        [self.p_f1, self.p_f2, self.p_f3, self.p_f45, self.hamilton]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Checks the abnormal equations and Hamilton's equations for
/// `H_a = u1 <p,F1> + u2 <p,F2>` at every sample.
pub fn verify_abnormal(samples: &[AbnormalSample], u: [f64; 2]) -> AbnormalResiduals {
    let f3 = BracketWord::named(3).unwrap();
    let f4 = BracketWord::named(4).unwrap();
    let f5 = BracketWord::named(5).unwrap();
    let mut r = AbnormalResiduals::default();
    for s in samples {
        let fj = field_jacobians(&s.q);
        let pf1 = dot(&s.p, &fj.f1);
        let pf2 = dot(&s.p, &fj.f2);
        let pf3 = dot(&s.p, &bracket_at(&f3, &s.q));
        let pf45 = u[0] * dot(&s.p, &bracket_at(&f4, &s.q)) + u[1] * dot(&s.p, &bracket_at(&f5, &s.q));
        let mut ham = 0.0f64;
        for i in 0..5 {
            let qd = u[0] * fj.f1[i] + u[1] * fj.f2[i];
            let pd: f64 = -(0..5)
                .map(|r| s.p[r] * (u[0] * fj.j1[r][i] + u[1] * fj.j2[r][i]))
                .sum::<f64>();
            ham = ham.max((s.q_dot[i] - qd).abs()).max((s.p_dot[i] - pd).abs());
        }
        r.p_f1 = r.p_f1.max(pf1.abs());
        r.p_f2 = r.p_f2.max(pf2.abs());
        r.p_f3 = r.p_f3.max(pf3.abs());
        r.p_f45 = r.p_f45.max(pf45.abs());
        r.hamilton = r.hamilton.max(ham);
    }
    r
}

/// Removes from `p` its component in `span{F1, F2, F3}(q)`.
pub fn project_onto_abnormal_constraints(q: &[f64; 5], p: &[f64; 5]) -> [f64; 5] {
    let cols = [
        bracket_at(&BracketWord::F1, q),
        bracket_at(&BracketWord::F2, q),
        bracket_at(&BracketWord::named(3).unwrap(), q),
    ];
    let a = Matrix5x3::from_fn(|i, j| cols[j][i]);
    let pv = Vector5::from_row_slice(p);
    let qr = a.qr();
    let qm = qr.q();
    let proj = &qm * (qm.transpose() * pv);
    let out = pv - proj;
    std::array::from_fn(|i| out[i])
}

#[derive(Clone, Copy, Debug)]
pub struct ReducedFlowOptions {
    pub step: f64,
    /// States whose singular defect falls below this are treated as inside S.
    pub singular_threshold: f64,
}

impl Default for ReducedFlowOptions {
    fn default() -> Self {
        ReducedFlowOptions {
            step: DEFAULT_FLOW_STEP,
            singular_threshold: 1e-6,
        }
    }
}

/// Momenta `P1, P2, P4, P5`, fields `F1, F2, F4, F5` and gradients of the momenta.
struct ReducedTerms {
    momenta: [f64; 4],
    fields: [[f64; 5]; 4],
    grads: [[f64; 5]; 4],
}

fn reduced_terms(q: &[f64; 5], p: &[f64; 5]) -> ReducedTerms {
    let words = [
        BracketWord::F1,
        BracketWord::F2,
        BracketWord::named(4).unwrap(),
        BracketWord::named(5).unwrap(),
    ];
    let mut t = ReducedTerms {
        momenta: [0.0; 4],
        fields: [[0.0; 5]; 4],
        grads: [[0.0; 5]; 4],
    };
    for (k, w) in words.iter().enumerate() {
        if k < 2 {
            let (v, g) = pairing_gradient(w, q, p);
            t.momenta[k] = v;
            t.grads[k] = g;
            t.fields[k] = bracket_at(w, q);
            continue;
        }
        for col in 2..5 {
            let qj: [Jet; 5] = std::array::from_fn(|i| {
                let seed = if i == col { 1.0 } else { 0.0 };
                Jet::lift(&Jet::constant_jet(q[i]), &Jet::constant_jet(seed), 0)
            });
            let v = bracket_jet(w, &qj, 1);
            if col == 2 {
                t.fields[k] = std::array::from_fn(|i| v[i].coeff(0));
                t.momenta[k] = dot(p, &t.fields[k]);
            }
            t.grads[k][col] = (0..5).map(|i| p[i] * v[i].coeff(1)).sum();
        }
    }
    t
}

/// Hamiltonian `P1 P5 - P2 P4` with its vector field.
fn reduced_rhs(z: &[f64; 10]) -> ([f64; 10], f64, [f64; 2]) {
    let q: [f64; 5] = std::array::from_fn(|i| z[i]);
    let p: [f64; 5] = std::array::from_fn(|i| z[5 + i]);
    let t = reduced_terms(&q, &p);
    let [p1, p2, p4, p5] = t.momenta;
    let [f1, f2, f4, f5] = t.fields;
    let [g1, g2, g4, g5] = t.grads;
    let mut out = [0.0; 10];
    for i in 0..5 {
        out[i] = p5 * f1[i] + p1 * f5[i] - p4 * f2[i] - p2 * f4[i];
        out[5 + i] = -(p5 * g1[i] + p1 * g5[i] - p4 * g2[i] - p2 * g4[i]);
    }
    (out, p1 * p5 - p2 * p4, [p5, -p4])
}

/// Abnormal extremal off the singular sets, following the flow of
/// `P1 P5 - P2 P4`. The controls reported are `(u1, u2) = (P5, -P4)`.
pub fn reduced_abnormal_flow(q0: &State, costate: &Costate, duration: f64) -> Result<ExtremalArc> {
    reduced_abnormal_flow_with(q0, costate, duration, &ReducedFlowOptions::default())
}

pub fn reduced_abnormal_flow_with(
    q0: &State,
    costate: &Costate,
    duration: f64,
    opts: &ReducedFlowOptions,
) -> Result<ExtremalArc> {
    if !(opts.step > 0.0 && duration >= 0.0) {
        return Err(Error::InvalidInput("reduced flow needs step > 0 and duration >= 0".into()));
    }
    let q = q0.to_array();
    let psi = q[3] - q[4];
    let defect = defect_of_psi(psi);
    if defect.abs() < opts.singular_threshold {
        return Err(Error::InvalidInput(format!(
            "initial state lies in the singular set (defect {defect:e})"
        )));
    }
    let p4 = dot(&costate.p, &bracket_at(&BracketWord::named(4).unwrap(), &q));
    if p4.abs() < 1e-12 {
        return Err(Error::InvalidInput(
            "<p, F4> vanishes at the initial point; the reduction needs it nonzero".into(),
        ));
    }
    let mut z = [0.0; 10];
    z[..5].copy_from_slice(&q);
    z[5..].copy_from_slice(&costate.p);
    let steps = (duration / opts.step).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let mut arc = ExtremalArc {
        kind: ExtremalKind::AbnormalOffS,
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        costates: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps + 1),
        hamiltonian: Vec::with_capacity(steps + 1),
    };
    let rhs = |z: &[f64; 10]| -> Result<[f64; 10]> { Ok(reduced_rhs(z).0) };
    for k in 0..=steps {
        let t = k as f64 * h;
        let d = defect_of_psi(z[3] - z[4]);
        if d.abs() < opts.singular_threshold {
            return Err(Error::EnteredSingularSet { t, defect: d });
        }
        let (_, ham, u) = reduced_rhs(&z);
        arc.times.push(t);
        arc.states.push(std::array::from_fn(|i| z[i]));
        arc.costates.push(std::array::from_fn(|i| z[5 + i]));
        arc.controls.push(u);
        arc.hamiltonian.push(ham);
        if k < steps {
            z = rk4_step(&z, h, &rhs)?;
        }
    }
    Ok(arc)
}

/// Largest `|<p, F_i>|` for `i = 1, 2, 3` along an arc.
pub fn abnormal_constraint_residual(arc: &ExtremalArc) -> f64 {
    let f3 = BracketWord::named(3).unwrap();
    arc.states
        .iter()
        .zip(&arc.costates)
        .map(|(q, p)| {
            let fj = field_jacobians(q);
            dot(p, &fj.f1)
                .abs()
                .max(dot(p, &fj.f2).abs())
                .max(dot(p, &bracket_at(&f3, q)).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{integrate, ControlSchedule, Segment};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn zero_costate_is_stationary() {
        let q0 = State::two_leg(0.1, 0.2, 0.3, 1.0, 4.0);
        let arc = normal_flow(&q0, &Costate::normal([0.0; 5]), 1.0, 1e-12).unwrap();
        assert!(arc.states.iter().all(|q| *q == q0.to_array()));
        assert_eq!(arc.max_hamiltonian_drift(), 0.0);
    }

    #[test]
    fn normal_flow_conserves_hamiltonian() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..3 {
            let q0 = State::two_leg(0.0, 0.0, rng.gen_range(-3.0..3.0), rng.gen_range(0.0..PI), rng.gen_range(PI..TAU));
            let p: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let arc = normal_flow(&q0, &Costate::normal(p), 1.0, 1e-9).unwrap();
            assert!(arc.max_hamiltonian_drift() < 1e-9);
            // stored controls are the momenta at each node
            for (k, q) in arc.states.iter().enumerate() {
                let fj = field_jacobians(q);
                let p = &arc.costates[k];
                assert!((arc.controls[k][0] - dot(p, &fj.f1)).abs() < 1e-12);
                assert!((arc.controls[k][1] - dot(p, &fj.f2)).abs() < 1e-12);
            }
            // energy identity: |u|^2 = 2H
            let u = arc.controls[arc.controls.len() / 2];
            assert!((u[0] * u[0] + u[1] * u[1] - 2.0 * arc.hamiltonian[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn normal_flow_reports_drift() {
        let q0 = State::two_leg(0.0, 0.0, 0.0, 1.0, 4.0);
        let p = [0.0, 0.0, 3.0, 2.0, -2.0];
        let err = normal_flow_with_step(&q0, &Costate::normal(p), 2.0, 1e-15, 0.2).unwrap_err();
        assert!(matches!(err, Error::HamiltonianDrift { .. }));
        assert!(normal_flow(&q0, &Costate { p, p0: 0.0 }, 1.0, 1e-9).is_err());
    }

    #[test]
    fn s1_family_at_time_zero() {
        let (q, p) = abnormal_family_s1(1, 1.0, 0.4, 0.2, -0.3, 1.0, 0.5, 0.0).unwrap();
        assert!((q.x - 0.2).abs() < 1e-15 && (q.y + 0.3).abs() < 1e-15);
        assert_eq!(q.phi, 0.4);
        let l = q.legs.as_slice();
        assert_eq!(l[0], 0.0);
        assert!((l[1] - (2.0 * 2f64.atan() - TAU)).abs() < 1e-15);
        assert!(p.is_nontrivial() && p.p0 == 0.0);
        assert!(abnormal_family_s1(0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn s1_family_geometry() {
        let fam = S1Family::new(0, 1.0, 0.3, 0.1, 0.2, 1.0, -2.0).unwrap();
        let [cx, cy] = fam.center();
        let samples = sample_curve(|t| fam.eval(t), 0.0, 7.0, 20);
        for s in &samples {
            assert!((s.q_dot[2] + 0.6).abs() < 1e-15);
            let r = ((s.q[0] - cx).powi(2) + (s.q[1] - cy).powi(2)).sqrt();
            assert!((r - 5f64.sqrt() / 6.0).abs() < 1e-14);
        }
    }

    #[test]
    fn s2_family_geometry() {
        let fam = S2Family { n: 2, phi0: -0.7, x0: 1.0, y0: 2.0 };
        let [cx, cy] = fam.center();
        assert!((cx - (1.0 + 0.5 * (-0.7f64).cos())).abs() < 1e-15);
        for s in sample_curve(|t| fam.eval(t), 0.0, 5.0, 20) {
            assert_eq!(s.p, [0.0, 0.0, 6.0, 1.0, 1.0]);
            assert!((s.q[2] - (-s.t / 3.0 - 0.7)).abs() < 1e-15);
            let r = ((s.q[0] - cx).powi(2) + (s.q[1] - cy).powi(2)).sqrt();
            assert!((r - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn families_are_abnormal() {
        let s2 = S2Family { n: 1, phi0: 0.5, x0: 0.0, y0: 0.0 };
        let r = verify_abnormal(&sample_curve(|t| s2.eval(t), 0.0, TAU, 64), [1.0, 1.0]);
        assert!(r.max() < 1e-9, "{r:?}");
        for sign in [1.0, -1.0] {
            for (c1, c2) in [(1.0, 0.0), (0.0, 1.0), (-0.3, 0.8)] {
                let s1 = S1Family::new(1, sign, 0.4, 0.2, -0.1, c1, c2).unwrap();
                let r = verify_abnormal(&sample_curve(|t| s1.eval(t), 0.0, TAU, 64), [1.0, 1.0]);
                assert!(r.max() < 1e-9, "sign {sign} c ({c1}, {c2}): {r:?}");
            }
        }
    }

    #[test]
    fn perturbed_costate_is_not_abnormal() {
        let s2 = S2Family { n: 0, phi0: 0.0, x0: 0.0, y0: 0.0 };
        let perturbed = |t: &Dual| {
            let (q, mut p) = s2.eval(t);
            p[2] = Dual::constant(5.0);
            (q, p)
        };
        let r = verify_abnormal(&sample_curve(perturbed, 0.0, TAU, 32), [1.0, 1.0]);
        assert!(r.max() > 1e-3);
    }

    #[test]
    fn families_are_integral_curves_of_f1_plus_f2() {
        let s1 = S1Family::new(2, -1.0, 1.0, 0.5, 0.5, 0.3, 0.7).unwrap();
        let h = 1e-5;
        for k in 0..10 {
            let t = 0.3 * k as f64;
            let (qp, _) = s1.eval(&(t + h));
            let (qm, _) = s1.eval(&(t - h));
            let (q, _) = s1.eval(&t);
            let fj = field_jacobians(&q);
            for i in 0..5 {
                let fd = (qp[i] - qm[i]) / (2.0 * h);
                assert!((fd - fj.f1[i] - fj.f2[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn back_and_forth_along_s_is_not_a_net_motion() {
        let (q0, _) = abnormal_family_s2(0, 0.2, 0.0, 0.0, 0.5);
        let sched = ControlSchedule::new(vec![
            Segment::constant(0.0, 1.5, vec![1.0, 1.0]),
            Segment::constant(1.5, 3.0, vec![-1.0, -1.0]),
        ])
        .unwrap();
        let traj = integrate(&q0, &sched, 1e-12).unwrap();
        let (a, b) = (traj.final_state().to_array(), q0.to_array());
        for i in 0..5 {
            assert!((a[i] - b[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_lands_on_constraint_set() {
        let q = [0.0, 0.0, 0.3, 1.0, 4.0];
        let p = project_onto_abnormal_constraints(&q, &[0.4, -0.2, 1.0, 0.5, 0.3]);
        let fj = field_jacobians(&q);
        assert!(dot(&p, &fj.f1).abs() < 1e-14);
        assert!(dot(&p, &fj.f2).abs() < 1e-14);
        assert!(dot(&p, &bracket_at(&BracketWord::named(3).unwrap(), &q)).abs() < 1e-14);
    }

    #[test]
    fn reduced_flow_keeps_constraints() {
        let q0 = State::two_leg(0.0, 0.0, 0.3, 1.0, 4.0);
        let p = project_onto_abnormal_constraints(&q0.to_array(), &[0.4, -0.2, 1.0, 0.5, 0.3]);
        let arc = reduced_abnormal_flow(&q0, &Costate::abnormal(p).unwrap(), 1.0).unwrap();
        assert!(abnormal_constraint_residual(&arc) < 1e-7);
        assert!(arc.max_hamiltonian_drift() < 1e-9);
        assert!(arc.controls.iter().all(|u| u[0] != 0.0 && u[1] != 0.0));
    }

    #[test]
    fn reduced_flow_preconditions() {
        let on_s = State::two_leg(0.0, 0.0, 0.0, 2.0, 2.0);
        let p = Costate::abnormal([0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(reduced_abnormal_flow(&on_s, &p, 1.0).is_err());
        assert!(Costate::abnormal([0.0; 5]).is_err());
    }
}
