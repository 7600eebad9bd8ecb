//! Resistive-force equations of motion.
//!
//! For `n` slender legs attached to a point body, the body velocity
//! `(x', y', phi')` solves `M v = sum_i u_i K_i`, where `M` is the 3x3
//! resistance matrix and `K_i` the drive vector of leg `i`. Both depend only
//! on the inertial leg angles `alpha_i = theta_i + phi`.
//!
//! For two legs the mobility `M^-1 K_i` has a closed form, which is what the
//! control fields [`field_f1`] and [`field_f2`] evaluate. The general solve
//! path [`body_velocity`] is kept for any `n` and used to cross-check them.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::autodiff::{Dual, Scalar};
use crate::error::{Error, Result};

/// Leg angles measured in the body frame, stored unwrapped.
#[derive(Clone, Debug, PartialEq)]
pub struct LegAngles(Vec<f64>);

impl LegAngles {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::InvalidInput("at least one leg is required".into()));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("leg angles must be finite".into()));
        }
        Ok(LegAngles(theta))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Distance outside `0 <= theta1 <= pi <= theta2 <= 2 pi`; zero inside.
    /// Only meaningful for two legs.
    pub fn box_violation(&self) -> f64 {
        match self.0.as_slice() {
            [t1, t2] => box_violation(*t1, *t2),
            _ => 0.0,
        }
    }

    /// Checks the two-leg constraint box.
    pub fn check_box(&self) -> Result<()> {
        if self.0.len() != 2 {
            return Err(Error::InvalidInput(
                "the constraint box is defined for two legs".into(),
            ));
        }
        let v = self.box_violation();
        if v > 0.0 {
            return Err(Error::InvalidInput(format!(
                "leg angles {:?} leave the constraint box by {v:e}",
                self.0
            )));
        }
        Ok(())
    }
}

/// Distance of `(theta1, theta2)` outside the box `0 <= theta1 <= pi <= theta2 <= 2 pi`.
pub fn box_violation(theta1: f64, theta2: f64) -> f64 {
    [-theta1, theta1 - PI, PI - theta2, theta2 - 2.0 * PI]
        .into_iter()
        .fold(0.0, f64::max)
}

/// Configuration `(x, y, phi, theta_1, ..., theta_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub legs: LegAngles,
}

impl State {
    pub fn new(x: f64, y: f64, phi: f64, legs: LegAngles) -> Self {
        State { x, y, phi, legs }
    }

    pub fn two_leg(x: f64, y: f64, phi: f64, theta1: f64, theta2: f64) -> Self {
        State {
            x,
            y,
            phi,
            legs: LegAngles(vec![theta1, theta2]),
        }
    }

    pub fn from_array(q: [f64; 5]) -> Self {
        State::two_leg(q[0], q[1], q[2], q[3], q[4])
    }

    pub fn dim(&self) -> usize {
        3 + self.legs.len()
    }

    /// Two-leg state as a flat vector. Panics for other leg counts.
    pub fn to_array(&self) -> [f64; 5] {
        let t = self.legs.as_slice();
        assert_eq!(t.len(), 2, "flat 5-vector requires two legs");
        [self.x, self.y, self.phi, t[0], t[1]]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.x, self.y, self.phi];
        v.extend_from_slice(self.legs.as_slice());
        v
    }

    pub fn from_slice(q: &[f64]) -> Result<Self> {
        if q.len() < 4 {
            return Err(Error::InvalidInput(format!(
                "state needs at least 4 entries, got {}",
                q.len()
            )));
        }
        Ok(State::new(q[0], q[1], q[2], LegAngles::new(q[3..].to_vec())?))
    }

    /// Inertial leg angles `alpha_i = theta_i + phi`.
    pub fn inertial_angles(&self) -> Vec<f64> {
        self.legs.as_slice().iter().map(|t| t + self.phi).collect()
    }
}

/// Leg angular velocities `u_i = theta_i'`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlInput(pub Vec<f64>);

impl ControlInput {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("controls must be finite".into()));
        }
        Ok(ControlInput(u))
    }
}

/// Symmetric positive-definite resistance matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResistanceMatrix(pub Matrix3<f64>);

impl ResistanceMatrix {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn resistance_matrix(alphas: &[f64]) -> ResistanceMatrix {
    let mut m = Matrix3::zeros();
    for &a in alphas {
        let (s, c) = a.sin_cos();
        m[(0, 0)] += 1.0 + s * s;
        m[(0, 1)] -= s * c;
        m[(0, 2)] -= s;
        m[(1, 1)] += 1.0 + c * c;
        m[(1, 2)] += c;
    }
    m[(2, 2)] = 2.0;
    m[(1, 0)] = m[(0, 1)];
    m[(2, 0)] = m[(0, 2)];
    m[(2, 1)] = m[(1, 2)];
    ResistanceMatrix(m)
}

pub fn drive_vector(alpha: f64) -> Vector3<f64> {
    let (s, c) = alpha.sin_cos();
    Vector3::new(s, -c, -2.0 / 3.0)
}

/// Body velocity `(x', y', phi')` for leg rates `u` at `state`.
pub fn body_velocity(state: &State, u: &ControlInput) -> Result<Vector3<f64>> {
    if u.0.len() != state.legs.len() {
        return Err(Error::InvalidInput(format!(
            "{} controls for {} legs",
            u.0.len(),
            state.legs.len()
        )));
    }
    let alphas = state.inertial_angles();
    let m = resistance_matrix(&alphas).0;
    let k = alphas
        .iter()
        .zip(&u.0)
        .fold(Vector3::zeros(), |acc, (&a, &ui)| acc + drive_vector(a) * ui);
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Numerical("resistance matrix lost positive definiteness".into()))?;
    let v = chol.solve(&k);
    let residual = (m * v - k).amax();
    let scale = m.amax() * v.amax() + k.amax();
    if residual > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!(
            "resistance solve residual {residual:e}"
        )));
    }
    Ok(v)
}

/// Closed-form control fields `(F1, F2)` of the two-leg swimmer.
///
/// Only `phi`, `theta1` and `theta2` enter; the fields are translation
/// invariant.
pub fn control_fields<T: Scalar>(phi: &T, theta1: &T, theta2: &T) -> ([T; 5], [T; 5]) {
    let t1 = theta1.clone();
    let t2 = theta2.clone();
    let p = phi.clone();
    let (s_a, c_a) = (t1.clone() - t2.clone() * 2.0 - p.clone()).sin_cos();
    let (s_b, c_b) = (t1.clone() * 2.0 - t2.clone() + p.clone()).sin_cos();
    let (s_1, c_1) = (t1.clone() + p.clone()).sin_cos();
    let (s_2, c_2) = (t2.clone() + p).sin_cos();
    let rot = body_turn_rate(&t1, &t2);
    let den = rot.clone() * 288.0;

    let common_x = s_a - s_b;
    let common_y = c_a + c_b;
    let f1x = -(common_x.clone() + s_1.clone() * 17.0 - s_2.clone() * 7.0) / den.clone();
    let f1y = -(common_y.clone() - c_1.clone() * 17.0 + c_2.clone() * 7.0) / den.clone();
    let f2x = -(common_x + s_2 * 17.0 - s_1 * 7.0) / den.clone();
    let f2y = -(common_y - c_2 * 17.0 + c_1 * 7.0) / den;

    let one = T::constant(1.0);
    let zero = T::constant(0.0);
    (
        [f1x, f1y, rot.clone(), one.clone(), zero.clone()],
        [f2x, f2y, rot, zero, one],
    )
}

/// `phi` component shared by both fields; it depends on `theta1 - theta2` only.
pub fn body_turn_rate<T: Scalar>(theta1: &T, theta2: &T) -> T {
    ((theta1.clone() - theta2.clone()).cos() - 3.0) / 12.0
}

/// Both fields at a flat two-leg configuration.
pub fn fields_at(q: &[f64; 5]) -> ([f64; 5], [f64; 5]) {
    control_fields(&q[2], &q[3], &q[4])
}

pub fn field_f1(state: &State) -> [f64; 5] {
    fields_at(&state.to_array()).0
}

pub fn field_f2(state: &State) -> [f64; 5] {
    fields_at(&state.to_array()).1
}

/// `u1 F1(q) + u2 F2(q)`.
pub fn two_leg_rate(q: &[f64; 5], u: [f64; 2]) -> [f64; 5] {
    let (f1, f2) = fields_at(q);
    std::array::from_fn(|i| u[0] * f1[i] + u[1] * f2[i])
}

/// Fields and their Jacobians `jac[row][col] = d F_row / d q_col`.
pub fn field_jacobians(q: &[f64; 5]) -> FieldJacobians {
    let mut out = FieldJacobians {
        f1: [0.0; 5],
        f2: [0.0; 5],
        j1: [[0.0; 5]; 5],
        j2: [[0.0; 5]; 5],
    };
    // x and y do not enter the fields.
    for col in 2..5 {
        let seed = |i: usize| Dual::new(q[i], if i == col { 1.0 } else { 0.0 });
        let (a, b) = control_fields(&seed(2), &seed(3), &seed(4));
        for row in 0..5 {
            out.f1[row] = a[row].re;
            out.f2[row] = b[row].re;
            out.j1[row][col] = a[row].du;
            out.j2[row][col] = b[row].du;
        }
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub struct FieldJacobians {
    pub f1: [f64; 5],
    pub f2: [f64; 5],
    pub j1: [[f64; 5]; 5],
    pub j2: [[f64; 5]; 5],
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_mat(m: &Matrix3<f64>, expected: [[f64; 3]; 3], tol: f64) {
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (m[(i, j)] - expected[i][j]).abs() <= tol,
                    "entry ({i},{j}) = {} expected {}",
                    m[(i, j)],
                    expected[i][j]
                );
            }
        }
    }

    #[test]
    fn resistance_matrix_single_leg_at_zero() {
        let m = resistance_matrix(&[0.0]);
        assert_mat(m.matrix(), [[1.0, 0.0, 0.0], [0.0, 2.0, 1.0], [0.0, 1.0, 2.0]], 0.0);
    }

    #[test]
    fn resistance_matrix_opposed_legs_cancel() {
        let m = resistance_matrix(&[0.0, PI]);
        assert_mat(m.matrix(), [[2.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 2.0]], 1e-15);
    }

    #[test]
    fn resistance_matrix_generic_angles() {
        // Frozen from a 50-digit term-by-term evaluation (mpmath) at pi/4, pi/3.
        let m = resistance_matrix(&[PI / 4.0, PI / 3.0]);
        let expected = [
            [
                3.25,
                -0.933012701892219323381861585376,
                -1.57313218497098617116456753286,
            ],
            [
                -0.933012701892219323381861585376,
                2.75,
                1.20710678118654752440084436210,
            ],
            [
                -1.57313218497098617116456753286,
                1.20710678118654752440084436210,
                2.0,
            ],
        ];
        assert_mat(m.matrix(), expected, 1e-14);
    }

    #[test]
    fn drive_vector_values() {
        let k = drive_vector(0.0);
        assert_eq!((k.x, k.y, k.z), (0.0, -1.0, -2.0 / 3.0));
        let k = drive_vector(PI / 2.0);
        assert!((k.x - 1.0).abs() < 1e-16 && k.y.abs() < 1e-16);
        // 50-digit oracle for sin/cos(1.234)
        let k = drive_vector(1.234);
        assert!((k.x - 0.943818209374633704861751006157).abs() < 1e-15);
        assert!((k.y + 0.330465108071729857403280772790).abs() < 1e-15);
    }

    #[test]
    fn one_leg_mobility_is_four_ninths() {
        for &(theta, phi) in &[(0.3, 0.0), (2.0, -1.1), (5.5, 0.4)] {
            let state = State::new(0.0, 0.0, phi, LegAngles::new(vec![theta]).unwrap());
            let v = body_velocity(&state, &ControlInput(vec![1.0])).unwrap();
            let a: f64 = theta + phi;
            assert!((v.x - 4.0 / 9.0 * a.sin()).abs() < 1e-14);
            assert!((v.y + 4.0 / 9.0 * a.cos()).abs() < 1e-14);
            assert!((v.z + 1.0 / 9.0).abs() < 1e-14);
        }
    }

    #[test]
    fn parallel_legs_rotate_at_minus_one_third() {
        let state = State::two_leg(0.0, 0.0, 0.3, 1.2, 1.2);
        let v = body_velocity(&state, &ControlInput(vec![1.0, 1.0])).unwrap();
        assert!((v.z + 1.0 / 3.0).abs() < 1e-14);
        let f1 = field_f1(&state);
        assert!((f1[2] + 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn solve_matches_closed_form_at_box_corner() {
        let state = State::two_leg(0.0, 0.0, 0.0, 0.0, PI);
        let v = body_velocity(&state, &ControlInput(vec![1.0, 0.0])).unwrap();
        let f1 = field_f1(&state);
        for i in 0..3 {
            assert!((v[i] - f1[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn closed_form_finite_on_first_singular_set() {
        let psi = 2.0 * 2f64.atan();
        let f1 = field_f1(&State::two_leg(0.0, 0.0, 0.2, 1.0 + psi, 1.0));
        assert!(f1.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_mismatched_controls() {
        let state = State::two_leg(0.0, 0.0, 0.0, 0.0, PI);
        assert!(matches!(
            body_velocity(&state, &ControlInput(vec![1.0])),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn closed_form_agrees_with_solve_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let q: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-10.0..10.0));
            let state = State::from_array(q);
            let (f1, f2) = fields_at(&q);
            let v1 = body_velocity(&state, &ControlInput(vec![1.0, 0.0])).unwrap();
            let v2 = body_velocity(&state, &ControlInput(vec![0.0, 1.0])).unwrap();
            for i in 0..3 {
                worst = worst.max((f1[i] - v1[i]).abs()).max((f2[i] - v2[i]).abs());
            }
            assert!(resistance_matrix(&state.inertial_angles()).min_eigenvalue() > 0.0);
        }
        assert!(worst < 1e-10, "worst disagreement {worst:e}");
    }

    #[test]
    fn box_violation_measures_distance() {
        assert_eq!(box_violation(0.5, 4.0), 0.0);
        assert!((box_violation(-0.2, 4.0) - 0.2).abs() < 1e-15);
        assert!((box_violation(1.0, 7.0) - (7.0 - 2.0 * PI)).abs() < 1e-15);
        assert!(LegAngles::new(vec![]).is_err());
        assert!(LegAngles::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn field_jacobians_match_finite_differences() {
        let q = [0.3, -0.1, 0.7, 1.1, 4.2];
        let fj = field_jacobians(&q);
        let h = 1e-6;
        for col in 0..5 {
            let (mut qp, mut qm) = (q, q);
            qp[col] += h;
            qm[col] -= h;
            let ((a1, a2), (b1, b2)) = (fields_at(&qp), fields_at(&qm));
            for row in 0..5 {
                assert!((fj.j1[row][col] - (a1[row] - b1[row]) / (2.0 * h)).abs() < 1e-8);
                assert!((fj.j2[row][col] - (a2[row] - b2[row]) / (2.0 * h)).abs() < 1e-8);
            }
        }
        let (f1, f2) = fields_at(&q);
        for i in 0..5 {
            assert!((fj.f1[i] - f1[i]).abs() < 1e-15 && (fj.f2[i] - f2[i]).abs() < 1e-15);
        }
    }
}
