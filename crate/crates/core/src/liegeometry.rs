//! Iterated Lie brackets of the two control fields, singular sets and small
//! growth vectors.
//!
//! Brackets are evaluated as `[X, Y] = (DY) X - (DX) Y`. Each directional
//! derivative is taken by lifting the configuration to a fresh dual
//! infinitesimal (`q + eps X(q)`) and re-evaluating the inner word, so a word
//! of depth `d` uses `d` nested levels of [`Jet`] and no truncation error.

use std::f64::consts::{PI, TAU};
use std::fmt;

use nalgebra::DMatrix;

use crate::autodiff::{Dual, Jet, Scalar, MAX_LEVELS};
use crate::dynamics::{control_fields, State};
use crate::error::{Error, Result};

/// `2 arctan 2`, the angular offset of the first singular set.
pub fn s1_offset() -> f64 {
    2.0 * 2f64.atan()
}

/// Bracket expression over the generators `F1`, `F2`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum BracketWord {
    F1,
    F2,
    Bracket(Box<BracketWord>, Box<BracketWord>),
}

impl BracketWord {
    pub fn bracket(a: BracketWord, b: BracketWord) -> BracketWord {
        BracketWord::Bracket(Box::new(a), Box::new(b))
    }

    /// Named fields `F1 .. F10`:
    /// `F3 = [F1,F2]`, `F4 = [F1,F3]`, `F5 = [F2,F3]`, `F6 = [F1,F4]`,
    /// `F7 = [F1,F5]`, `F8 = [F2,F4]`, `F9 = [F2,F5]`, `F10 = [F1,F6]`.
    pub fn named(k: usize) -> Option<BracketWord> {
        use BracketWord::{F1, F2};
        let b = BracketWord::bracket;
        let w = match k {
            1 => F1,
            2 => F2,
            3 => b(F1, F2),
            4 => b(F1, Self::named(3)?),
            5 => b(F2, Self::named(3)?),
            6 => b(F1, Self::named(4)?),
            7 => b(F1, Self::named(5)?),
            8 => b(F2, Self::named(4)?),
            9 => b(F2, Self::named(5)?),
            10 => b(F1, Self::named(6)?),
            _ => return None,
        };
        Some(w)
    }

    /// Bracket nesting depth; generators have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            BracketWord::F1 | BracketWord::F2 => 0,
            BracketWord::Bracket(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Number of generators in the word.
    pub fn length(&self) -> usize {
        match self {
            BracketWord::F1 | BracketWord::F2 => 1,
            BracketWord::Bracket(a, b) => a.length() + b.length(),
        }
    }
}

impl fmt::Debug for BracketWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BracketWord::F1 => f.write_str("F1"),
            BracketWord::F2 => f.write_str("F2"),
            BracketWord::Bracket(a, b) => write!(f, "[{a:?},{b:?}]"),
        }
    }
}

/// Evaluates `word` on a configuration whose entries use infinitesimals
/// `0..level`.
pub fn bracket_jet(word: &BracketWord, q: &[Jet; 5], level: usize) -> [Jet; 5] {
    match word {
        BracketWord::F1 => control_fields(&q[2], &q[3], &q[4]).0,
        BracketWord::F2 => control_fields(&q[2], &q[3], &q[4]).1,
        BracketWord::Bracket(a, b) => {
            let x = bracket_jet(a, q, level);
            let y = bracket_jet(b, q, level);
            let dy_x = directional(b, q, &x, level);
            let dx_y = directional(a, q, &y, level);
            std::array::from_fn(|i| dy_x[i] - dx_y[i])
        }
    }
}

/// `D(word)(q) . dir`.
fn directional(word: &BracketWord, q: &[Jet; 5], dir: &[Jet; 5], level: usize) -> [Jet; 5] {
    assert!(level < MAX_LEVELS, "bracket word too deep for jet nesting");
    let lifted: [Jet; 5] = std::array::from_fn(|i| Jet::lift(&q[i], &dir[i], level));
    let v = bracket_jet(word, &lifted, level + 1);
    std::array::from_fn(|i| v[i].tangent(level))
}

/// Value of `word` at a flat two-leg configuration.
pub fn bracket_at(word: &BracketWord, q: &[f64; 5]) -> [f64; 5] {
    let qj: [Jet; 5] = std::array::from_fn(|i| Jet::constant_jet(q[i]));
    let v = bracket_jet(word, &qj, 0);
    std::array::from_fn(|i| v[i].re())
}

/// Value of `word` at `state`. Words deeper than five brackets are rejected.
pub fn bracket(word: &BracketWord, state: &State) -> Result<[f64; 5]> {
    if word.depth() > MAX_LEVELS {
        return Err(Error::InvalidInput(format!(
            "bracket word {word:?} exceeds depth {MAX_LEVELS}"
        )));
    }
    if state.legs.len() != 2 {
        return Err(Error::InvalidInput("brackets are defined for two legs".into()));
    }
    Ok(bracket_at(word, &state.to_array()))
}

/// Value and gradient with respect to `q` of `<p, word(q)>`.
pub fn pairing_gradient(word: &BracketWord, q: &[f64; 5], p: &[f64; 5]) -> (f64, [f64; 5]) {
    let mut grad = [0.0; 5];
    let mut value = 0.0;
    // The fields do not depend on x or y.
    for (j, g) in grad.iter_mut().enumerate().skip(2) {
        let qj: [Jet; 5] = std::array::from_fn(|i| {
            let seed = if i == j { 1.0 } else { 0.0 };
            Jet::lift(&Jet::constant_jet(q[i]), &Jet::constant_jet(seed), 0)
        });
        let v = bracket_jet(word, &qj, 1);
        let mut d = 0.0;
        let mut val = 0.0;
        for i in 0..5 {
            val += p[i] * v[i].coeff(0);
            d += p[i] * v[i].coeff(1);
        }
        *g = d;
        value = val;
    }
    (value, grad)
}

fn defect_of<T: Scalar>(psi: T) -> T {
    let s = (psi.clone() / 2.0).sin();
    let s2 = s.clone() * s;
    let quad = (psi.clone() * 2.0).cos() * 25.0 + psi.cos() * 120.0 + 79.0;
    s2.clone() * s2 * quad
}

/// `sin^4(psi/2) (25 cos 2psi + 120 cos psi + 79)` with `psi = theta1 - theta2`.
/// Vanishes exactly on the singular sets.
pub fn singular_defect(state: &State) -> f64 {
    let t = state.legs.as_slice();
    defect_of_psi(t[0] - t[1])
}

pub fn defect_of_psi(psi: f64) -> f64 {
    defect_of(psi)
}

fn defect_derivative(psi: f64) -> f64 {
    defect_of(Dual::variable(psi)).du
}

/// Roots of the singular defect in `[lo, hi]`, located by bisection.
///
/// Simple roots bracket a sign change of the defect. The even-order roots of
/// the `sin^4` factor do not, so those are found as sign changes of the
/// derivative at which the defect itself vanishes.
pub fn defect_roots(lo: f64, hi: f64, grid: usize) -> Vec<f64> {
    let grid = grid.max(2);
    let h = (hi - lo) / grid as f64;
    let nodes: Vec<f64> = (0..=grid).map(|k| lo + k as f64 * h).collect();
    let scale = nodes
        .iter()
        .map(|&p| defect_of_psi(p).abs())
        .fold(0.0, f64::max);
    let mut roots = Vec::new();
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (defect_of_psi(a), defect_of_psi(b));
        if fa == 0.0 {
            roots.push(a);
        }
        if fa * fb < 0.0 {
            roots.push(bisect(defect_of_psi, a, b));
            continue;
        }
        let (da, db) = (defect_derivative(a), defect_derivative(b));
        if da * db < 0.0 && fa.abs().min(fb.abs()) < 1e-3 * scale {
            let r = bisect(defect_derivative, a, b);
            if defect_of_psi(r).abs() <= 1e-12 * scale {
                roots.push(r);
            }
        }
    }
    if defect_of_psi(hi) == 0.0 {
        roots.push(hi);
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    roots.retain(|r| (lo..=hi).contains(r));
    roots
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SingularKind {
    Regular,
    /// `theta1 - theta2 = 2 pi n +- 2 arctan 2`.
    S1,
    /// `theta1 - theta2 = 2 pi n`.
    S2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularClass {
    pub kind: SingularKind,
    /// `theta1 - theta2`
    pub psi: f64,
}

fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Exact membership in the singular sets up to angular tolerance `tol`.
pub fn classify(state: &State, tol: f64) -> SingularClass {
    let t = state.legs.as_slice();
    let psi = t[0] - t[1];
    let off = s1_offset();
    let kind = if angular_distance(psi, 0.0) <= tol {
        SingularKind::S2
    } else if angular_distance(psi, off) <= tol || angular_distance(psi, -off) <= tol {
        SingularKind::S1
    } else {
        SingularKind::Regular
    };
    SingularClass { kind, psi }
}

pub const DEFAULT_RANK_TOL: f64 = 1e-8;
pub const DEFAULT_CLASSIFY_TOL: f64 = 1e-9;

/// Dimensions of the flag `D^1 ⊆ D^2 ⊆ ...`; ends at 5.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrowthVector(pub Vec<usize>);

impl GrowthVector {
    /// Degree of non-holonomy.
    pub fn degree(&self) -> usize {
        self.0.len()
    }
}

/// Right-normed bracket words of each length `1..=max_len`; together they
/// span each layer of the flag.
pub fn words_by_length(max_len: usize) -> Vec<Vec<BracketWord>> {
    let mut layers = vec![vec![BracketWord::F1, BracketWord::F2]];
    for len in 2..=max_len {
        let prev = &layers[len - 2];
        let next: Vec<BracketWord> = if len == 2 {
            vec![BracketWord::bracket(BracketWord::F1, BracketWord::F2)]
        } else {
            [BracketWord::F1, BracketWord::F2]
                .iter()
                .flat_map(|g| prev.iter().map(move |w| BracketWord::bracket(g.clone(), w.clone())))
                .collect()
        };
        layers.push(next);
    }
    layers
}

/// Numerical rank by singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(columns: &[[f64; 5]], rel_tol: f64) -> usize {
    if columns.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(5, columns.len(), |i, j| columns[j][i]);
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Cumulative ranks of the flag layers `D^1 .. D^max_len`.
pub fn flag_ranks(q: &[f64; 5], rank_tol: f64, max_len: usize) -> Vec<usize> {
    let mut columns = Vec::new();
    let mut ranks = Vec::new();
    for layer in words_by_length(max_len) {
        columns.extend(layer.iter().map(|w| bracket_at(w, q)));
        ranks.push(numerical_rank(&columns, rank_tol));
    }
    ranks
}

/// Small growth vector at `state`.
pub fn growth_vector(state: &State, rank_tol: f64) -> Result<GrowthVector> {
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidInput("rank tolerance must be positive".into()));
    }
    let q = state.to_array();
    let mut columns = Vec::new();
    let mut dims: Vec<usize> = Vec::new();
    for layer in words_by_length(5) {
        columns.extend(layer.iter().map(|w| bracket_at(w, &q)));
        let r = numerical_rank(&columns, rank_tol);
        dims.push(r);
        if r == 5 {
            return Ok(GrowthVector(dims));
        }
    }
    Err(Error::Numerical(format!(
        "brackets up to length 5 only span {:?} at {q:?}",
        dims
    )))
}

/// One row of a `psi` sweep of the singular structure.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub psi: f64,
    pub defect: f64,
    /// Ranks of `D^1 .. D^5`.
    pub ranks: Vec<usize>,
}

/// Samples `psi` uniformly on `[0, 2 pi]` (`samples + 1` points).
pub fn psi_sweep(samples: usize, rank_tol: f64) -> Vec<SweepRow> {
    let samples = samples.max(1);
    (0..=samples)
        .map(|k| {
            let psi = TAU * k as f64 / samples as f64;
            let q = [0.0, 0.0, 0.0, PI + psi, PI];
            SweepRow {
                psi,
                defect: defect_of_psi(psi),
                ranks: flag_ranks(&q, rank_tol, 5),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f(k: usize) -> BracketWord {
        BracketWord::named(k).unwrap()
    }

    fn norm(v: &[f64; 5]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn random_q(rng: &mut ChaCha8Rng) -> [f64; 5] {
        std::array::from_fn(|_| rng.gen_range(-4.0..4.0))
    }

    #[test]
    fn generators_match_closed_form() {
        let q = [0.1, 0.2, 0.3, 0.9, 4.0];
        let (f1, f2) = crate::dynamics::fields_at(&q);
        assert_eq!(bracket_at(&BracketWord::F1, &q), f1);
        assert_eq!(bracket_at(&BracketWord::F2, &q), f2);
    }

    #[test]
    fn self_bracket_vanishes() {
        let q = [0.0, 0.0, 0.7, 1.1, 3.9];
        let v = bracket_at(&BracketWord::bracket(BracketWord::F1, BracketWord::F1), &q);
        assert!(norm(&v) == 0.0, "{v:?}");
    }

    #[test]
    fn antisymmetry_at_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let q = random_q(&mut rng);
            let a = bracket_at(&BracketWord::bracket(BracketWord::F1, BracketWord::F2), &q);
            let b = bracket_at(&BracketWord::bracket(BracketWord::F2, BracketWord::F1), &q);
            let s: [f64; 5] = std::array::from_fn(|i| a[i] + b[i]);
            assert!(norm(&s) < 1e-12);
        }
    }

    #[test]
    fn first_bracket_matches_finite_differences() {
        // Central differences of the closed-form fields, as an independent check.
        let q = [0.0, 0.0, 0.4, 1.3, 4.1];
        let h = 1e-6;
        let jac = |field: usize| -> [[f64; 5]; 5] {
            let mut j = [[0.0; 5]; 5];
            for c in 0..5 {
                let mut qp = q;
                let mut qm = q;
                qp[c] += h;
                qm[c] -= h;
                let (a1, a2) = crate::dynamics::fields_at(&qp);
                let (b1, b2) = crate::dynamics::fields_at(&qm);
                let (a, b) = if field == 1 { (a1, b1) } else { (a2, b2) };
                for r in 0..5 {
                    j[r][c] = (a[r] - b[r]) / (2.0 * h);
                }
            }
            j
        };
        let (f1, f2) = crate::dynamics::fields_at(&q);
        let (j1, j2) = (jac(1), jac(2));
        let fd: [f64; 5] = std::array::from_fn(|r| {
            (0..5).map(|c| j2[r][c] * f1[c] - j1[r][c] * f2[c]).sum()
        });
        let ad = bracket_at(&f(3), &q);
        for r in 0..5 {
            assert!((fd[r] - ad[r]).abs() < 1e-8, "row {r}: {} vs {}", fd[r], ad[r]);
        }
    }

    #[test]
    fn f3_vanishes_on_s2() {
        let q = [0.5, -0.3, 0.8, 2.0, 2.0];
        assert!(norm(&bracket_at(&f(3), &q)) < 1e-10);
    }

    #[test]
    fn jacobi_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = BracketWord::bracket;
        let (f1, f2, f3) = (BracketWord::F1, BracketWord::F2, f(3));
        for _ in 0..10 {
            let q = random_q(&mut rng);
            let a = bracket_at(&b(f1.clone(), b(f2.clone(), f3.clone())), &q);
            let c = bracket_at(&b(f2.clone(), b(f3.clone(), f1.clone())), &q);
            let d = bracket_at(&b(f3.clone(), b(f1.clone(), f2.clone())), &q);
            let s: [f64; 5] = std::array::from_fn(|i| a[i] + c[i] + d[i]);
            assert!(norm(&s) < 1e-9, "{s:?}");
        }
    }

    #[test]
    fn translation_does_not_change_brackets() {
        let q = [0.0, 0.0, 0.4, 1.3, 4.1];
        let shifted = [3.0, -7.0, 0.4, 1.3, 4.1];
        for k in 1..=10 {
            assert_eq!(bracket_at(&f(k), &q), bracket_at(&f(k), &shifted));
        }
    }

    #[test]
    fn defect_values() {
        assert_eq!(defect_of_psi(0.0), 0.0);
        assert!(defect_of_psi(s1_offset()).abs() < 1e-12);
        assert!((defect_of_psi(PI) + 16.0).abs() < 1e-12);
        assert!(defect_of_psi(1.0).abs() > 1e-2);
    }

    #[test]
    fn classification() {
        let at = |psi: f64| State::two_leg(0.0, 0.0, 0.0, 3.0 + psi, 3.0);
        assert_eq!(classify(&at(0.0), DEFAULT_CLASSIFY_TOL).kind, SingularKind::S2);
        assert_eq!(classify(&at(TAU), DEFAULT_CLASSIFY_TOL).kind, SingularKind::S2);
        assert!((s1_offset() - 2.21429743558818).abs() < 1e-13);
        assert_eq!(classify(&at(s1_offset()), DEFAULT_CLASSIFY_TOL).kind, SingularKind::S1);
        assert_eq!(classify(&at(-s1_offset()), DEFAULT_CLASSIFY_TOL).kind, SingularKind::S1);
        assert_eq!(classify(&at(1.0), DEFAULT_CLASSIFY_TOL).kind, SingularKind::Regular);
        assert_eq!(classify(&at(1e-6), DEFAULT_CLASSIFY_TOL).kind, SingularKind::Regular);
    }

    #[test]
    fn growth_vectors_for_each_class() {
        let at = |psi: f64| State::two_leg(0.2, 0.1, 0.5, 1.0 + psi, 1.0);
        let gv = |psi| growth_vector(&at(psi), DEFAULT_RANK_TOL).unwrap().0;
        assert_eq!(gv(1.0), vec![2, 3, 5]);
        assert_eq!(gv(s1_offset()), vec![2, 3, 4, 5]);
        assert_eq!(gv(-s1_offset()), vec![2, 3, 4, 5]);
        assert_eq!(gv(0.0), vec![2, 2, 3, 4, 5]);
        assert!(growth_vector(&at(1.0), 0.0).is_err());
    }

    #[test]
    fn words_have_expected_counts() {
        let layers = words_by_length(5);
        let counts: Vec<usize> = layers.iter().map(Vec::len).collect();
        assert_eq!(counts, vec![2, 1, 2, 4, 8]);
        assert_eq!(layers[3][0], f(6));
        assert_eq!(layers[4][0], f(10));
        assert_eq!(f(10).depth(), 4);
        assert_eq!(f(10).length(), 5);
    }

    #[test]
    fn pairing_gradient_matches_finite_differences() {
        let q = [0.0, 0.0, 0.4, 1.3, 4.1];
        let p = [0.3, -1.0, 0.7, 0.2, -0.5];
        let (v, g) = pairing_gradient(&f(4), &q, &p);
        let pair = |q: &[f64; 5]| -> f64 {
            let b = bracket_at(&f(4), q);
            (0..5).map(|i| p[i] * b[i]).sum()
        };
        assert!((v - pair(&q)).abs() < 1e-13);
        let h = 1e-6;
        for j in 0..5 {
            let mut qp = q;
            let mut qm = q;
            qp[j] += h;
            qm[j] -= h;
            let fd = (pair(&qp) - pair(&qm)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-7, "component {j}: {fd} vs {}", g[j]);
        }
    }
}
