//! The double exponential ansatz and its feasibility inequalities.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Ansatz constants: δ_q = a^{−2αb^{q−1}}, λ_q = a^{b^q}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ansatz {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
}

impl Default for Ansatz {
    fn default() -> Self {
        Self { a: 100.0, b: 1.05, alpha: 0.5, beta: 0.1, epsilon: 0.01 }
    }
}

impl Ansatz {
    pub fn delta(&self, q: i64) -> f64 {
        self.a.powf(-2.0 * self.alpha * self.b.powi(q as i32 - 1))
    }

    pub fn lambda(&self, q: i64) -> f64 {
        self.a.powf(self.b.powi(q as i32))
    }

    pub fn beta_star(&self) -> f64 {
        1.0 / (2.0 - self.beta)
    }

    pub fn eps_star(&self) -> f64 {
        self.epsilon * self.beta_star()
    }

    /// ℓ_q = λ_q^{−1−ε*}(δ_{q+1}/δ_q)^{β*}.
    pub fn ell(&self, q: i64) -> f64 {
        self.lambda(q).powf(-1.0 - self.eps_star()) * (self.delta(q + 1) / self.delta(q)).powf(self.beta_star())
    }

    /// Violated structural constraints on the constants themselves.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.a > 1.0) {
            v.push(format!("a>1 (a = {})", self.a));
        }
        if !(self.b > 1.0) {
            v.push(format!("b>1 (b = {})", self.b));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            v.push(format!("α∈(0,1) (α = {})", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            v.push(format!("β∈(0,1) (β = {})", self.beta));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.25) {
            v.push(format!("ε∈(0,1/4) (ε = {})", self.epsilon));
        }
        if !(2.0 * self.alpha < 2.0 - self.beta) {
            v.push(format!("2α<2−β ({} ≥ {})", 2.0 * self.alpha, 2.0 - self.beta));
        }
        v
    }
}

/// One stage's parameter pack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageParams {
    pub q: usize,
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub delta_q: f64,
    pub delta_q1: f64,
    pub delta_q2: f64,
    pub lambda_q: f64,
    pub lambda_q1: f64,
    pub ell: f64,
    pub beta_star: f64,
    pub eps_star: f64,
    pub theta: f64,
    pub kallen_steps: usize,
}

/// Outcome of the numeric schedule inequalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleCheck {
    pub bound2: bool,
    pub bound3: bool,
    pub bound4: bool,
    pub violations: Vec<String>,
}

impl ScheduleCheck {
    pub fn feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

impl StageParams {
    /// Evaluate the ansatz at stage `q` without checking anything.
    pub fn compute(q: usize, ansatz: &Ansatz, theta: f64, kallen_steps: usize) -> Self {
        let qi = q as i64;
        Self {
            q,
            a: ansatz.a,
            b: ansatz.b,
            alpha: ansatz.alpha,
            beta: ansatz.beta,
            epsilon: ansatz.epsilon,
            delta_q: ansatz.delta(qi),
            delta_q1: ansatz.delta(qi + 1),
            delta_q2: ansatz.delta(qi + 2),
            lambda_q: ansatz.lambda(qi),
            lambda_q1: ansatz.lambda(qi + 1),
            ell: ansatz.ell(qi),
            beta_star: ansatz.beta_star(),
            eps_star: ansatz.eps_star(),
            theta,
            kallen_steps,
        }
    }

    pub fn ansatz(&self) -> Ansatz {
        Ansatz { a: self.a, b: self.b, alpha: self.alpha, beta: self.beta, epsilon: self.epsilon }
    }

    /// λ_{q+1}ℓ.
    pub fn lambda_ell(&self) -> f64 {
        self.lambda_q1 * self.ell
    }

    /// λ_qℓ ≤ 1 ≤ λ_{q+1}ℓ.
    pub fn bound2(&self) -> bool {
        self.lambda_q * self.ell <= 1.0 && 1.0 <= self.lambda_ell()
    }

    /// δ_q^{1/2}λ_qℓ ≤ δ_{q+1}^{1/2}λ_{q+1}ℓ ≤ 1.
    pub fn bound3(&self) -> bool {
        let lo = self.delta_q.sqrt() * self.lambda_q * self.ell;
        let hi = self.delta_q1.sqrt() * self.lambda_ell();
        lo <= hi && hi <= 1.0
    }

    /// (λ_{q+1}ℓ)^{−s} ≤ δ_{q+2}λ_{q+1}^{−ε} with s the Källén step count.
    pub fn bound4(&self) -> bool {
        self.lambda_ell().powf(-(self.kallen_steps as f64)) <= self.delta_q2 * self.lambda_q1.powf(-self.epsilon)
    }

    /// Every inequality, with a description of each violated one.
    pub fn check(&self) -> ScheduleCheck {
        let mut violations = self.ansatz().violations();
        let (b2, b3, b4) = (self.bound2(), self.bound3(), self.bound4());
        let q = self.q;
        if !b2 {
            violations.push(format!(
                "bound2 λ_qℓ≤1≤λ_(q+1)ℓ at q={q} (λ_qℓ = {:.4}, λ_(q+1)ℓ = {:.4})",
                self.lambda_q * self.ell,
                self.lambda_ell()
            ));
        }
        if !b3 {
            violations.push(format!(
                "bound3 δ_q^(1/2)λ_qℓ≤δ_(q+1)^(1/2)λ_(q+1)ℓ≤1 at q={q} ({:.4}, {:.4})",
                self.delta_q.sqrt() * self.lambda_q * self.ell,
                self.delta_q1.sqrt() * self.lambda_ell()
            ));
        }
        if !b4 {
            violations.push(format!(
                "bound4 (λ_(q+1)ℓ)^(−s)≤δ_(q+2)λ_(q+1)^(−ε) at q={q}, s={} ({:.4e} > {:.4e})",
                self.kallen_steps,
                self.lambda_ell().powf(-(self.kallen_steps as f64)),
                self.delta_q2 * self.lambda_q1.powf(-self.epsilon)
            ));
        }
        ScheduleCheck { bound2: b2, bound3: b3, bound4: b4, violations }
    }
}

/// Stage-q parameters, rejected with every violated inequality when infeasible.
pub fn schedule(q: usize, ansatz: &Ansatz, theta: f64, kallen_steps: usize) -> Result<StageParams> {
    let structural = ansatz.violations();
    if !structural.is_empty() {
        return Err(Error::Infeasible(structural));
    }
    let p = StageParams::compute(q, ansatz, theta, kallen_steps);
    let check = p.check();
    if check.feasible() {
        Ok(p)
    } else {
        Err(Error::Infeasible(check.violations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: Ansatz = Ansatz { a: 100.0, b: 1.05, alpha: 0.5, beta: 0.1, epsilon: 0.01 };

    #[test]
    fn first_stage_values() {
        let p = StageParams::compute(1, &BASE, 0.1, 5);
        assert!((p.delta_q - 0.01).abs() < 1e-15);
        assert!((p.lambda_q - 125.89254117941675).abs() < 1e-9);
    }

    #[test]
    fn alpha_beta_violation_is_named() {
        let bad = Ansatz { alpha: 0.99, ..BASE };
        match schedule(0, &bad, 0.1, 5) {
            Err(Error::Infeasible(v)) => assert!(v.iter().any(|s| s.contains("2α<2−β"))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bound4_fails_at_five_steps_for_a100() {
        let p = StageParams::compute(0, &BASE, 0.1, 5);
        assert!(p.bound2() && p.bound3() && !p.bound4());
    }
}
