//! Forward-mode automatic differentiation.
//!
//! Three number types share the [`Scalar`] interface used by the closed-form
//! vector fields:
//!
//! * [`Dual`] carries a single first-order tangent; [`Grad`] carries several.
//!   Both are used on hot paths (Jacobians inside the optimizer, Hamiltonian
//!   gradients).
//! * [`Jet`] is a nested dual number flattened into `2^levels` coefficients.
//!   Coefficient `m` multiplies the monomial `prod_{i in m} eps_i`, with
//!   `eps_i^2 = 0`. Nesting `levels` duals this way gives exact mixed
//!   derivatives up to order `levels`, which is what iterated Lie brackets
//!   need.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Arithmetic needed to evaluate the swimmer's closed-form fields.
pub trait Scalar:
    Clone
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn constant(value: f64) -> Self;
    /// The real (non-infinitesimal) part.
    fn re(&self) -> f64;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn sin_cos(&self) -> (Self, Self) {
        (self.sin(), self.cos())
    }
}

impl Scalar for f64 {
    fn constant(value: f64) -> Self {
        value
    }
    fn re(&self) -> f64 {
        *self
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn sin_cos(&self) -> (Self, Self) {
        f64::sin_cos(*self)
    }
}

/// First-order dual number `re + eps * du`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub du: f64,
}

impl Dual {
    pub fn new(re: f64, du: f64) -> Self {
        Dual { re, du }
    }

    pub fn variable(re: f64) -> Self {
        Dual { re, du: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.du + o.du)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.du - o.du)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re * o.re, self.re * o.du + self.du * o.re)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.re;
        Dual::new(self.re * inv, (self.du * o.re - self.re * o.du) * inv * inv)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.du)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, o: f64) -> Dual {
        Dual::new(self.re + o, self.du)
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(self, o: f64) -> Dual {
        Dual::new(self.re - o, self.du)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, o: f64) -> Dual {
        Dual::new(self.re * o, self.du * o)
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    fn div(self, o: f64) -> Dual {
        Dual::new(self.re / o, self.du / o)
    }
}

impl Scalar for Dual {
    fn constant(value: f64) -> Self {
        Dual::new(value, 0.0)
    }
    fn re(&self) -> f64 {
        self.re
    }
    fn sin(&self) -> Self {
        let (s, c) = self.re.sin_cos();
        Dual::new(s, c * self.du)
    }
    fn cos(&self) -> Self {
        let (s, c) = self.re.sin_cos();
        Dual::new(c, -s * self.du)
    }
    fn sin_cos(&self) -> (Self, Self) {
        let (s, c) = self.re.sin_cos();
        (Dual::new(s, c * self.du), Dual::new(c, -s * self.du))
    }
}

/// First-order number carrying `K` independent tangents at once, so a full
/// Jacobian row block costs a single evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grad<const K: usize> {
    pub re: f64,
    pub du: [f64; K],
}

impl<const K: usize> Grad<K> {
    pub fn new(re: f64, du: [f64; K]) -> Self {
        Grad { re, du }
    }

    /// Seeds tangent `index`.
    pub fn variable(re: f64, index: usize) -> Self {
        let mut du = [0.0; K];
        du[index] = 1.0;
        Grad { re, du }
    }

    fn chain(&self, value: f64, slope: f64) -> Self {
        Grad::new(value, self.du.map(|d| d * slope))
    }
}

impl<const K: usize> Add for Grad<K> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Grad::new(self.re + o.re, std::array::from_fn(|i| self.du[i] + o.du[i]))
    }
}

impl<const K: usize> Sub for Grad<K> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Grad::new(self.re - o.re, std::array::from_fn(|i| self.du[i] - o.du[i]))
    }
}

impl<const K: usize> Mul for Grad<K> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Grad::new(
            self.re * o.re,
            std::array::from_fn(|i| self.re * o.du[i] + self.du[i] * o.re),
        )
    }
}

impl<const K: usize> Div for Grad<K> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.re;
        let q = self.re * inv;
        Grad::new(q, std::array::from_fn(|i| (self.du[i] - q * o.du[i]) * inv))
    }
}

impl<const K: usize> Neg for Grad<K> {
    type Output = Self;
    fn neg(self) -> Self {
        Grad::new(-self.re, self.du.map(|d| -d))
    }
}

impl<const K: usize> Add<f64> for Grad<K> {
    type Output = Self;
    fn add(self, o: f64) -> Self {
        Grad::new(self.re + o, self.du)
    }
}

impl<const K: usize> Sub<f64> for Grad<K> {
    type Output = Self;
    fn sub(self, o: f64) -> Self {
        Grad::new(self.re - o, self.du)
    }
}

impl<const K: usize> Mul<f64> for Grad<K> {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        Grad::new(self.re * o, self.du.map(|d| d * o))
    }
}

impl<const K: usize> Div<f64> for Grad<K> {
    type Output = Self;
    fn div(self, o: f64) -> Self {
        self * (1.0 / o)
    }
}

impl<const K: usize> Scalar for Grad<K> {
    fn constant(value: f64) -> Self {
        Grad::new(value, [0.0; K])
    }
    fn re(&self) -> f64 {
        self.re
    }
    fn sin(&self) -> Self {
        let (s, c) = self.re.sin_cos();
        self.chain(s, c)
    }
    fn cos(&self) -> Self {
        let (s, c) = self.re.sin_cos();
        self.chain(c, -s)
    }
    fn sin_cos(&self) -> (Self, Self) {
        let (s, c) = self.re.sin_cos();
        (self.chain(s, c), self.chain(c, -s))
    }
}

/// Maximum nesting depth of a [`Jet`].
pub const MAX_LEVELS: usize = 5;
const CAPACITY: usize = 1 << MAX_LEVELS;

/// Nested dual number with up to [`MAX_LEVELS`] independent infinitesimals.
#[derive(Clone, Copy)]
pub struct Jet {
    levels: u8,
    c: [f64; CAPACITY],
}

impl Jet {
    pub fn constant_jet(value: f64) -> Jet {
        let mut c = [0.0; CAPACITY];
        c[0] = value;
        Jet { levels: 0, c }
    }

    pub fn levels(&self) -> usize {
        self.levels as usize
    }

    fn len(&self) -> usize {
        1 << self.levels
    }

    /// Coefficient of the monomial whose infinitesimals are the set bits of `mask`.
    pub fn coeff(&self, mask: usize) -> f64 {
        if mask < self.len() {
            self.c[mask]
        } else {
            0.0
        }
    }

    /// Builds `base + eps_level * tangent`, introducing infinitesimal number
    /// `level`. Both inputs must only use infinitesimals `0..level`.
    pub fn lift(base: &Jet, tangent: &Jet, level: usize) -> Jet {
        assert!(level < MAX_LEVELS, "jet nesting exceeds {MAX_LEVELS} levels");
        assert!(base.levels() <= level && tangent.levels() <= level);
        let half = 1 << level;
        let mut c = [0.0; CAPACITY];
        c[..base.len()].copy_from_slice(&base.c[..base.len()]);
        c[half..half + tangent.len()].copy_from_slice(&tangent.c[..tangent.len()]);
        Jet {
            levels: (level + 1) as u8,
            c,
        }
    }

    /// Coefficient of `eps_level`, as a jet over the lower infinitesimals.
    pub fn tangent(&self, level: usize) -> Jet {
        let mut out = Jet::constant_jet(0.0);
        if level >= self.levels() {
            return out;
        }
        let half = 1 << level;
        // Infinitesimals above `level` are not expected here; drop them.
        out.c[..half].copy_from_slice(&self.c[half..2 * half]);
        out.levels = level as u8;
        out
    }

    /// Part of the jet free of `eps_level` and every higher infinitesimal.
    pub fn truncate(&self, level: usize) -> Jet {
        let mut out = *self;
        if level < self.levels() {
            for v in out.c[(1 << level)..self.len()].iter_mut() {
                *v = 0.0;
            }
            out.levels = level as u8;
        }
        out
    }

    fn raised(&self, levels: u8) -> Jet {
        let mut out = *self;
        out.levels = out.levels.max(levels);
        out
    }

    /// `f(self)` given `derivs[k] = f^(k)(re)` for `k = 0..=levels`.
    fn compose(&self, derivs: &[f64]) -> Jet {
        let mut nil = *self;
        nil.c[0] = 0.0;
        let mut out = Jet::constant_jet(derivs[0]).raised(self.levels);
        let mut power = Jet::constant_jet(1.0).raised(self.levels);
        let mut factorial = 1.0;
        for (k, d) in derivs.iter().enumerate().skip(1).take(self.levels()) {
            power = power * nil;
            factorial *= k as f64;
            let scale = d / factorial;
            for i in 0..out.len() {
                out.c[i] += scale * power.c[i];
            }
        }
        out
    }

    fn recip(&self) -> Jet {
        let a = self.c[0];
        let mut derivs = [0.0; MAX_LEVELS + 1];
        // d^k/dx^k (1/x) = (-1)^k k! / x^(k+1)
        let mut val = 1.0 / a;
        let mut fact = 1.0;
        for (k, d) in derivs.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
                val /= -a;
            }
            *d = fact * val;
        }
        self.compose(&derivs[..=self.levels()])
    }
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("levels", &self.levels)
            .field("coeffs", &&self.c[..self.len()])
            .finish()
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Jet) -> bool {
        let n = self.len().max(other.len());
        (0..n).all(|i| self.coeff(i) == other.coeff(i))
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, o: Jet) {
        self.levels = self.levels.max(o.levels);
        for i in 0..o.len() {
            self.c[i] += o.c[i];
        }
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, o: Jet) {
        self.levels = self.levels.max(o.levels);
        for i in 0..o.len() {
            self.c[i] -= o.c[i];
        }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        self += o;
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, o: Jet) -> Jet {
        self -= o;
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let levels = self.levels.max(o.levels);
        let n = 1usize << levels;
        let mut c = [0.0; CAPACITY];
        for (m, slot) in c.iter_mut().enumerate().take(n) {
            // Sum over all ways to split the monomial `m` between the factors.
            let mut s = m;
            let mut acc = 0.0;
            loop {
                acc += self.c[s] * o.c[m ^ s];
                if s == 0 {
                    break;
                }
                s = (s - 1) & m;
            }
            *slot = acc;
        }
        Jet { levels, c }
    }
}

impl MulAssign<f64> for Jet {
    fn mul_assign(&mut self, o: f64) {
        let n = self.len();
        for v in self.c[..n].iter_mut() {
            *v *= o;
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        if o.levels == 0 {
            return self / o.c[0];
        }
        self * o.recip()
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        self *= -1.0;
        self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, o: f64) -> Jet {
        self.c[0] += o;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, o: f64) -> Jet {
        self.c[0] -= o;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, o: f64) -> Jet {
        self *= o;
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(mut self, o: f64) -> Jet {
        let n = self.len();
        for v in self.c[..n].iter_mut() {
            *v /= o;
        }
        self
    }
}

impl Scalar for Jet {
    fn constant(value: f64) -> Self {
        Jet::constant_jet(value)
    }
    fn re(&self) -> f64 {
        self.c[0]
    }
    fn sin(&self) -> Self {
        self.sin_cos().0
    }
    fn cos(&self) -> Self {
        self.sin_cos().1
    }
    fn sin_cos(&self) -> (Self, Self) {
        let (s, c) = self.c[0].sin_cos();
        // derivatives cycle: sin, cos, -sin, -cos
        let cycle_sin = [s, c, -s, -c];
        let cycle_cos = [c, -s, -c, s];
        let n = self.levels() + 1;
        let mut ds = [0.0; MAX_LEVELS + 1];
        let mut dc = [0.0; MAX_LEVELS + 1];
        for k in 0..n {
            ds[k] = cycle_sin[k % 4];
            dc[k] = cycle_cos[k % 4];
        }
        (self.compose(&ds[..n]), self.compose(&dc[..n]))
    }
}
