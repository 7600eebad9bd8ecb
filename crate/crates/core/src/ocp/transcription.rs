//! Hermite-Simpson transcription with piecewise-constant controls.
//!
//! On an interval with constant `u` the leg angles move linearly, the body
//! turn rate depends on the leg angles only, and the translation rate on
//! `(phi, theta)`. The collocation equations can therefore be solved in that
//! order without iteration, which lets the optimizer work in the reduced
//! space of leg-angle nodes plus the initial body pose.

use crate::autodiff::{Grad, Scalar};
use crate::dynamics::{body_turn_rate, control_fields, fields_at};

/// Solves the Hermite-Simpson equations for the node after `q`.
pub fn hermite_simpson_step<T: Scalar>(q: &[T; 5], u: &[T; 2], h: f64) -> [T; 5] {
    let [x0, y0, phi0, a1, a2] = q.clone();
    let [u1, u2] = u.clone();
    let b1 = a1.clone() + u1.clone() * h;
    let b2 = a2.clone() + u2.clone() * h;
    let m1 = a1.clone() + u1.clone() * (0.5 * h);
    let m2 = a2.clone() + u2.clone() * (0.5 * h);
    let usum = u1.clone() + u2.clone();

    let (g0, k0) = control_fields(&phi0, &a1, &a2);
    let rate_0 = g0[2].clone() * usum.clone();
    let rate_m = body_turn_rate(&m1, &m2) * usum.clone();
    let rate_1 = body_turn_rate(&b1, &b2) * usum;
    let phi1 = phi0.clone() + (rate_0.clone() + rate_m * 4.0 + rate_1.clone()) * (h / 6.0);
    let phim = (phi0 + phi1.clone()) * 0.5 + (rate_0 - rate_1) * (h / 8.0);

    let (gm, km) = control_fields(&phim, &m1, &m2);
    let (g1, k1) = control_fields(&phi1, &b1, &b2);
    let rate = |g: &[T; 5], k: &[T; 5], i: usize| g[i].clone() * u1.clone() + k[i].clone() * u2.clone();
    let x1 = x0 + (rate(&g0, &k0, 0) + rate(&gm, &km, 0) * 4.0 + rate(&g1, &k1, 0)) * (h / 6.0);
    let y1 = y0 + (rate(&g0, &k0, 1) + rate(&gm, &km, 1) * 4.0 + rate(&g1, &k1, 1)) * (h / 6.0);
    [x1, y1, phi1, b1, b2]
}

/// Residual of the compressed Hermite-Simpson equations on one interval.
pub fn hermite_simpson_defect(q0: &[f64; 5], q1: &[f64; 5], u: [f64; 2], h: f64) -> [f64; 5] {
    let f = |q: &[f64; 5]| {
        let (a, b) = fields_at(q);
        std::array::from_fn::<f64, 5, _>(|i| u[0] * a[i] + u[1] * b[i])
    };
    let f0 = f(q0);
    let f1 = f(q1);
    let qm: [f64; 5] = std::array::from_fn(|i| 0.5 * (q0[i] + q1[i]) + h / 8.0 * (f0[i] - f1[i]));
    let fm = f(&qm);
    std::array::from_fn(|i| q1[i] - q0[i] - h / 6.0 * (f0[i] + 4.0 * fm[i] + f1[i]))
}

/// `initial . q(0) + terminal . q(T) = rhs`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearConstraint {
    pub initial: [f64; 5],
    pub terminal: [f64; 5],
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn value(&self, q0: &[f64; 5], qn: &[f64; 5]) -> f64 {
        let a: f64 = self.initial.iter().zip(q0).map(|(c, v)| c * v).sum();
        let b: f64 = self.terminal.iter().zip(qn).map(|(c, v)| c * v).sum();
        a + b - self.rhs
    }
}

/// Reduced problem. Variables are laid out as
/// `[theta1_0..=theta1_N, theta2_0..=theta2_N, x_0, y_0, phi_0]`.
#[derive(Clone, Debug)]
pub(crate) struct Condensed<'a> {
    pub intervals: usize,
    pub h: f64,
    pub constraints: &'a [LinearConstraint],
}

/// Scratch space reused across evaluations.
#[derive(Clone, Debug, Default)]
pub(crate) struct Workspace {
    pose: Vec<[f64; 3]>,
    // d(x, y, phi)_{k+1} / d(phi_k, theta_k, theta_{k+1})
    jac: Vec<[[f64; 5]; 3]>,
}

impl<'a> Condensed<'a> {
    pub fn new(intervals: usize, horizon: f64, constraints: &'a [LinearConstraint]) -> Self {
        Condensed {
            intervals,
            h: horizon / intervals as f64,
            constraints,
        }
    }

    pub fn dim(&self) -> usize {
        2 * (self.intervals + 1) + 3
    }

    pub fn theta_index(&self, leg: usize, k: usize) -> usize {
        leg * (self.intervals + 1) + k
    }

    pub fn pose_index(&self) -> usize {
        2 * (self.intervals + 1)
    }

    pub fn theta(&self, z: &[f64], k: usize) -> [f64; 2] {
        [z[self.theta_index(0, k)], z[self.theta_index(1, k)]]
    }

    pub fn control(&self, z: &[f64], k: usize) -> [f64; 2] {
        let (a, b) = (self.theta(z, k), self.theta(z, k + 1));
        [(b[0] - a[0]) / self.h, (b[1] - a[1]) / self.h]
    }

    /// All node states obtained by solving the collocation equations forward.
    pub fn states(&self, z: &[f64]) -> Vec<[f64; 5]> {
        let p = self.pose_index();
        let t = self.theta(z, 0);
        let mut q = [z[p], z[p + 1], z[p + 2], t[0], t[1]];
        let mut out = Vec::with_capacity(self.intervals + 1);
        out.push(q);
        for k in 0..self.intervals {
            let next = hermite_simpson_step(&q, &self.control(z, k), self.h);
            // Leg angles are decision variables; take them verbatim.
            let t = self.theta(z, k + 1);
            q = [next[0], next[1], next[2], t[0], t[1]];
            out.push(q);
        }
        out
    }

    pub fn energy(&self, z: &[f64]) -> f64 {
        (0..self.intervals)
            .map(|k| {
                let u = self.control(z, k);
                self.h * (u[0] * u[0] + u[1] * u[1])
            })
            .sum()
    }

    pub fn constraint_values(&self, states: &[[f64; 5]]) -> Vec<f64> {
        let (q0, qn) = (&states[0], states.last().unwrap());
        self.constraints.iter().map(|c| c.value(q0, qn)).collect()
    }

    /// Augmented Lagrangian `J + sum (lambda_j c_j + mu/2 c_j^2)` and its
    /// gradient.
    pub fn augmented_lagrangian(
        &self,
        z: &[f64],
        lambda: &[f64],
        mu: f64,
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> f64 {
        let n = self.intervals;
        let h = self.h;
        self.forward(z, ws);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        for k in 0..n {
            for leg in 0..2 {
                let (i0, i1) = (self.theta_index(leg, k), self.theta_index(leg, k + 1));
                let d = z[i1] - z[i0];
                value += d * d / h;
                grad[i1] += 2.0 * d / h;
                grad[i0] -= 2.0 * d / h;
            }
        }

        let (q0, qn) = self.endpoints(z, ws);
        let mut w0 = [0.0; 5];
        let mut wn = [0.0; 5];
        for (j, c) in self.constraints.iter().enumerate() {
            let v = c.value(&q0, &qn);
            value += lambda[j] * v + 0.5 * mu * v * v;
            let w = lambda[j] + mu * v;
            for i in 0..5 {
                w0[i] += w * c.initial[i];
                wn[i] += w * c.terminal[i];
            }
        }
        self.pullback(&w0, &wn, grad, ws);
        value
    }

    /// Gradient of each constraint with respect to `z`.
    pub fn constraint_jacobian(&self, z: &[f64], ws: &mut Workspace) -> Vec<Vec<f64>> {
        self.forward(z, ws);
        self.constraints
            .iter()
            .map(|c| {
                let mut g = vec![0.0; self.dim()];
                self.pullback(&c.initial, &c.terminal, &mut g, ws);
                g
            })
            .collect()
    }

    /// Integrates the pose and stores per-interval Jacobians.
    fn forward(&self, z: &[f64], ws: &mut Workspace) {
        let n = self.intervals;
        let h = self.h;
        ws.pose.resize(n + 1, [0.0; 3]);
        ws.jac.resize(n, [[0.0; 5]; 3]);
        let p = self.pose_index();
        ws.pose[0] = [z[p], z[p + 1], z[p + 2]];
        for k in 0..n {
            let [x, y, phi] = ws.pose[k];
            let a = self.theta(z, k);
            let b = self.theta(z, k + 1);
            let q: [Grad<5>; 5] = [
                Grad::constant(x),
                Grad::constant(y),
                Grad::variable(phi, 0),
                Grad::variable(a[0], 1),
                Grad::variable(a[1], 2),
            ];
            let u = [
                (Grad::variable(b[0], 3) - q[3]) / h,
                (Grad::variable(b[1], 4) - q[4]) / h,
            ];
            let next = hermite_simpson_step(&q, &u, h);
            ws.pose[k + 1] = [next[0].re, next[1].re, next[2].re];
            ws.jac[k] = [next[0].du, next[1].du, next[2].du];
        }
    }

    fn endpoints(&self, z: &[f64], ws: &Workspace) -> ([f64; 5], [f64; 5]) {
        let n = self.intervals;
        let t0 = self.theta(z, 0);
        let tn = self.theta(z, n);
        (
            [ws.pose[0][0], ws.pose[0][1], ws.pose[0][2], t0[0], t0[1]],
            [ws.pose[n][0], ws.pose[n][1], ws.pose[n][2], tn[0], tn[1]],
        )
    }

    /// Adds the gradient of `w0 . q0 + wn . qN` to `grad`, using the
    /// Jacobians from the last [`Self::forward`].
    fn pullback(&self, w0: &[f64; 5], wn: &[f64; 5], grad: &mut [f64], ws: &Workspace) {
        let n = self.intervals;
        let p = self.pose_index();
        for leg in 0..2 {
            grad[self.theta_index(leg, 0)] += w0[3 + leg];
            grad[self.theta_index(leg, n)] += wn[3 + leg];
        }
        // adj holds the sensitivity to (x, y, phi)_{k+1}.
        let mut adj = [wn[0], wn[1], wn[2]];
        for k in (0..n).rev() {
            let jac = &ws.jac[k];
            let mut col = [0.0; 5];
            for (o, row) in jac.iter().enumerate() {
                for c in 0..5 {
                    col[c] += adj[o] * row[c];
                }
            }
            grad[self.theta_index(0, k)] += col[1];
            grad[self.theta_index(1, k)] += col[2];
            grad[self.theta_index(0, k + 1)] += col[3];
            grad[self.theta_index(1, k + 1)] += col[4];
            // x and y enter additively; phi through the Jacobian.
            adj = [adj[0], adj[1], col[0]];
        }
        grad[p] += adj[0] + w0[0];
        grad[p + 1] += adj[1] + w0[1];
        grad[p + 2] += adj[2] + w0[2];
    }
}
