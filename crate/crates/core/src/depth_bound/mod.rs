//! Lower bounds on entanglement depth from the echo contrast and the one-
//! and two-excitation probabilities.
//!
//! For a candidate depth `M` the achievable contrast is maximised over
//! mixtures `ρ = Σ q_i |ψ_i⟩⟨ψ_i|`, where `ψ_n` is a product of `n` blocks of
//! `M` teeth, each block in `√(1-β²)|0⟩ + β|W_M⟩`, and the remaining teeth in
//! the ground state. When `M` does not divide `N`, the largest term also
//! carries a remainder block of `k' = N mod M` teeth whose excitation is
//! slaved to the others so that the single-excitation part is `|W_N⟩`.

mod optimize;
mod solver;

pub use optimize::{
    augmented_lagrangian, lbfgs, project_feasible, AugLagOptions, ConstrainedProblem, LbfgsOptions, Solution,
};
pub use solver::{
    bound_curve, certify_depth, certify_depth_with, max_r, max_r_reduced, max_r_with, CurvePoint, DepthBoundResult,
    DepthCertifier, MaxR, SolverDiagnostics, SolverOptions,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{CompensatedSum, Real};

/// Measured quantities that do not depend on the candidate depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationBudget<T> {
    pub n_teeth: usize,
    pub p1: T,
    pub p2: T,
}

impl<T: Real> ExcitationBudget<T> {
    pub fn new(n_teeth: usize, p1: T, p2: T) -> Result<Self> {
        if n_teeth == 0 {
            return Err(Error::domain("comb has no teeth"));
        }
        if !(p1 > T::zero() && p1 <= T::one()) {
            return Err(Error::domain(format!("P1 = {p1} must lie in (0, 1]")));
        }
        if !(p2 >= T::zero() && p2 <= p1) || p1 + p2 > T::one() {
            return Err(Error::domain(format!("need 0 <= P2 <= P1 and P1 + P2 <= 1, got P1 = {p1}, P2 = {p2}")));
        }
        Ok(Self { n_teeth, p1, p2 })
    }

    pub fn at_depth(&self, depth: usize) -> Result<BoundProblem<T>> {
        if depth == 0 || depth > self.n_teeth {
            return Err(Error::domain(format!("depth {depth} outside 1..={}", self.n_teeth)));
        }
        Ok(BoundProblem { budget: *self, depth })
    }

    /// Contrast of the best unrestricted state, `N P₁ / (P₁ + 2P₂)`.
    pub fn universal_cap(&self) -> T {
        T::from_count(self.n_teeth) * self.p1 / (self.p1 + T::lit(2.0) * self.p2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundProblem<T> {
    pub budget: ExcitationBudget<T>,
    pub depth: usize,
}

impl<T: Real> BoundProblem<T> {
    pub fn new(n_teeth: usize, depth: usize, p1: T, p2: T) -> Result<Self> {
        ExcitationBudget::new(n_teeth, p1, p2)?.at_depth(depth)
    }

    pub fn n_teeth(&self) -> usize {
        self.budget.n_teeth
    }

    /// `(k, k') = (N div M, N mod M)`.
    pub fn blocks(&self) -> (usize, usize) {
        (self.budget.n_teeth / self.depth, self.budget.n_teeth % self.depth)
    }

    /// Terms of the mixture, in order.
    pub fn components(&self) -> Vec<Component> {
        let (k, rem) = self.blocks();
        let mut out: Vec<Component> = (1..=k).map(Component::Plain).collect();
        if rem > 0 {
            if k == 1 {
                out.push(Component::Augmented(1));
            } else {
                out[k - 1] = Component::Augmented(k);
            }
        }
        out
    }
}

/// `Plain(n)`: `n` excitable blocks of `M` teeth. `Augmented(k)`: `k` blocks
/// plus the remainder block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Component {
    Plain(usize),
    Augmented(usize),
}

/// Single-, two-excitation and echo-numerator weights of one pure term, with
/// derivatives in `β²`.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ComponentValue<T> {
    pub f: T,
    pub g: T,
    pub h: T,
    pub df: T,
    pub dg: T,
    pub dh: T,
}

fn choose2<T: Real>(n: usize) -> T {
    T::from_count(n) * T::from_count(n.saturating_sub(1)) / T::lit(2.0)
}

/// `f = n b a^{n-1}` and `g = C(n,2) b² a^{n-2}` with `a = 1 - b`, passed
/// separately so `a` keeps full precision near `b = 1`.
fn plain<T: Real>(n: usize, b: T, a: T) -> (T, T, T, T) {
    let nt = T::from_count(n);
    let pow = |e: usize| a.powi(e as i32);
    let f = nt * b * pow(n - 1);
    let df = nt * pow(n - 1) - if n >= 2 { nt * T::from_count(n - 1) * b * pow(n - 2) } else { T::zero() };
    if n < 2 {
        return (f, T::zero(), df, T::zero());
    }
    let c2 = choose2::<T>(n);
    let g = c2 * b * b * pow(n - 2);
    let dg = c2 * (T::lit(2.0) * b * pow(n - 2) - if n >= 3 { T::from_count(n - 2) * b * b * pow(n - 3) } else { T::zero() });
    (f, g, df, dg)
}

impl Component {
    pub(crate) fn evaluate<T: Real>(self, depth: usize, n_teeth: usize, b: T, a: T) -> ComponentValue<T> {
        match self {
            Component::Plain(n) => {
                let (f, g, df, dg) = plain(n, b, a);
                let scale = T::from_count(n * depth);
                ComponentValue { f, g, h: scale * f, df, dg, dh: scale * df }
            }
            Component::Augmented(k) => {
                // remainder block excitation b' = c b / (a + c b), c = k'/M, which
                // equalises every single-excitation amplitude
                let c = T::from_count(n_teeth % depth) / T::from_count(depth);
                let (fk, gk, dfk, dgk) = plain(k, b, a);
                let den = a + c * b;
                let bp = c * b / den;
                let ap = a / den;
                let dbp = c / (den * den);
                let big_a = a.powi(k as i32);
                let d_big_a = -T::from_count(k) * a.powi(k as i32 - 1);
                let f = fk * ap + big_a * bp;
                let df = dfk * ap - fk * dbp + d_big_a * bp + big_a * dbp;
                let g = gk * ap + fk * bp;
                let dg = dgk * ap - gk * dbp + dfk * bp + fk * dbp;
                let nt = T::from_count(n_teeth);
                ComponentValue { f, g, h: nt * f, df, dg, dh: nt * df }
            }
        }
    }
}

/// Mixture weights and block excitations, aligned with
/// [`BoundProblem::components`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedBlockState<T> {
    pub q: Vec<T>,
    pub beta_sq: Vec<T>,
}

impl<T: Real> MixedBlockState<T> {
    pub fn new(prob: &BoundProblem<T>, q: Vec<T>, beta_sq: Vec<T>) -> Result<Self> {
        let k = prob.components().len();
        if q.len() != k || beta_sq.len() != k {
            return Err(Error::domain(format!("state needs {k} weights and excitations")));
        }
        if q.iter().any(|&v| !(v >= T::zero())) || beta_sq.iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::domain("weights must be non-negative and excitations in [0, 1]"));
        }
        let total: T = q.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e3) * T::exact_tolerance() {
            return Err(Error::domain(format!("weights sum to {total}")));
        }
        Ok(Self { q, beta_sq })
    }

    /// Excitation of the remainder block, if there is one.
    pub fn beta_kprime_sq(&self, prob: &BoundProblem<T>) -> Option<T> {
        let (_, rem) = prob.blocks();
        if rem == 0 {
            return None;
        }
        let b = *self.beta_sq.last()?;
        let c = T::from_count(rem) / T::from_count(prob.depth);
        Some(c * b / (T::one() - b + c * b))
    }

    fn sums(&self, prob: &BoundProblem<T>) -> (T, T, T) {
        let (mut f, mut g, mut h) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
        for ((comp, &q), &b) in prob.components().iter().zip(&self.q).zip(&self.beta_sq) {
            let v = comp.evaluate(prob.depth, prob.n_teeth(), b, T::one() - b);
            f.add(q * v.f);
            g.add(q * v.g);
            h.add(q * v.h);
        }
        (f.value(), g.value(), h.value())
    }
}

/// One-excitation probability of the mixture.
pub fn family_p1<T: Real>(state: &MixedBlockState<T>, prob: &BoundProblem<T>) -> T {
    state.sums(prob).0
}

/// Two-excitation probability of the mixture.
pub fn family_p2<T: Real>(state: &MixedBlockState<T>, prob: &BoundProblem<T>) -> T {
    state.sums(prob).1
}

/// Echo contrast of the mixture: single-excitation `⟨S₊S₋⟩` over the
/// measured `P₁ + 2P₂`.
pub fn family_r<T: Real>(state: &MixedBlockState<T>, prob: &BoundProblem<T>) -> T {
    state.sums(prob).2 / (prob.budget.p1 + T::lit(2.0) * prob.budget.p2)
}

/// Closed-form approximation `M > R - √(2P₂) N / P₁`.
pub fn linear_bound<T: Real>(r: T, budget: &ExcitationBudget<T>) -> T {
    r - linear_intercept(budget)
}

/// `√(2P₂) N / P₁`, the contrast reachable with no entanglement at all.
pub fn linear_intercept<T: Real>(budget: &ExcitationBudget<T>) -> T {
    (T::lit(2.0) * budget.p2).sqrt() * T::from_count(budget.n_teeth) / budget.p1
}

#[cfg(test)]
mod tests;
