//! Bound-constrained limited-memory BFGS with projected backtracking.

use std::collections::VecDeque;

/// Initial inverse-Hessian approximation restricted to the free variables.
pub(crate) trait Preconditioner {
    fn apply(&self, v: &[f64], free: &[bool], out: &mut [f64]);
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Options {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the projected gradient step is below this in max-norm.
    pub pg_tol: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Outcome {
    pub iters: usize,
    pub pg_norm: f64,
    /// Stopped because the objective no longer decreased at working precision.
    pub stalled: bool,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| ((x[i] - g[i]).clamp(lo[i], hi[i]) - x[i]).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` over the box `[lo, hi]`, starting from the projection of `x`.
/// `f` writes the gradient into its second argument and returns the value.
pub(crate) fn minimize<F, P>(
    x: &mut [f64],
    lo: &[f64],
    hi: &[f64],
    mut f: F,
    precond: &P,
    opts: &Options,
) -> Outcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    P: Preconditioner,
{
    let n = x.len();
    project(x, lo, hi);
    let mut g = vec![0.0; n];
    let mut fx = f(x, &mut g);
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut free = vec![true; n];
    let mut d = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut alpha = vec![0.0; opts.memory];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut pg = projected_gradient_norm(x, &g, lo, hi);
    let mut iters = 0;
    // Consecutive iterations without meaningful decrease.
    let mut flat = 0;
    let mut stalled = false;

    while iters < opts.max_iters && pg > opts.pg_tol {
        iters += 1;
        for i in 0..n {
            let at_lo = x[i] <= lo[i] && g[i] > 0.0;
            let at_hi = x[i] >= hi[i] && g[i] < 0.0;
            free[i] = lo[i] < hi[i] && !at_lo && !at_hi;
        }

        // Two-loop recursion on the free subspace.
        for i in 0..n {
            d[i] = if free[i] { -g[i] } else { 0.0 };
        }
        for (j, (s, y, rho)) in pairs.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha[j] = a;
            for i in 0..n {
                if free[i] {
                    d[i] -= a * y[i];
                }
            }
        }
        precond.apply(&d, &free, &mut r);
        for (j, (s, y, rho)) in pairs.iter().enumerate() {
            let b = rho * dot(y, &r);
            for i in 0..n {
                if free[i] {
                    r[i] += (alpha[j] - b) * s[i];
                }
            }
        }
        d.copy_from_slice(&r);
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            pairs.clear();
            for i in 0..n {
                d[i] = if free[i] { -g[i] } else { 0.0 };
            }
            precond.apply(&d.clone(), &free, &mut d);
            slope = dot(&d, &g);
            if !(slope < 0.0) {
                break;
            }
        }

        // Projected backtracking with an Armijo test on the actual step.
        let mut step = 1.0;
        let mut accepted = false;
        let mut f_new = fx;
        for _ in 0..30 {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            project(&mut x_new, lo, hi);
            f_new = f(&x_new, &mut g_new);
            let decrease: f64 = (0..n).map(|i| g[i] * (x_new[i] - x[i])).sum();
            if f_new.is_finite() && f_new <= fx + 1e-4 * decrease.min(0.0) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if pairs.is_empty() {
                stalled = true;
                break;
            }
            pairs.clear();
            continue;
        }

        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let progress = fx - f_new;
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        pg = projected_gradient_norm(x, &g, lo, hi);
        if progress <= 1e-14 * fx.abs().max(1.0) {
            flat += 1;
            if flat >= 5 {
                stalled = true;
                break;
            }
        } else {
            flat = 0;
        }
    }
    Outcome { iters, pg_norm: pg, stalled }
}

#[cfg(test)]
mod tests {
    use super::*;

struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, v: &[f64], free: &[bool], out: &mut [f64]) {
        for i in 0..v.len() {
            out[i] = if free[i] { v[i] } else { 0.0 };
        }
    }
}

    #[test]
    fn rosenbrock_unconstrained() {
        let mut x = vec![-1.2, 1.0];
        let inf = f64::INFINITY;
        let out = minimize(
            &mut x,
            &[-inf, -inf],
            &[inf, inf],
            |z, g| {
                let (a, b) = (z[0], z[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            &Identity,
            &Options { memory: 8, max_iters: 500, pg_tol: 1e-10 },
        );
        assert!(out.pg_norm <= 1e-10);
        assert!((x[0] - 1.0).abs() < 1e-8 && (x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn active_bounds_are_respected() {
        // min (x - 2)^2 + (y + 1)^2 on [0, 1] x [0, 1] -> (1, 0)
        let mut x = vec![0.5, 0.5];
        minimize(
            &mut x,
            &[0.0, 0.0],
            &[1.0, 1.0],
            |z, g| {
                g[0] = 2.0 * (z[0] - 2.0);
                g[1] = 2.0 * (z[1] + 1.0);
                (z[0] - 2.0).powi(2) + (z[1] + 1.0).powi(2)
            },
            &Identity,
            &Options { memory: 5, max_iters: 100, pg_tol: 1e-12 },
        );
        assert_eq!(x, vec![1.0, 0.0]);
    }

    #[test]
    fn fixed_variables_stay_put() {
        let mut x = vec![3.0, 0.0];
        minimize(
            &mut x,
            &[0.25, -10.0],
            &[0.25, 10.0],
            |z, g| {
                g[0] = 2.0 * z[0];
                g[1] = 2.0 * (z[1] - z[0]);
                z[0] * z[0] + (z[1] - z[0]).powi(2)
            },
            &Identity,
            &Options { memory: 5, max_iters: 100, pg_tol: 1e-12 },
        );
        assert_eq!(x[0], 0.25);
        assert!((x[1] - 0.25).abs() < 1e-10);
    }
}
