//! Pointwise solve of τ = Σ A_k² n_k⊗n_k + Σ A_k τ_k + Σ A_k A_k' τ_kk'.
//!
//! Guards act on the homogeneity-normalized problem: with μ = tr τ / n the
//! substitution A = √μ·Â maps the problem to (τ/μ, τ_k/√μ, τ_kk'), whose
//! identity-like part has unit size.

use crate::error::{Error, Result};
use crate::field::{FieldKind, GridField};
use crate::frame::DirectionSet;
use crate::linalg::{solve_with_condition, sym_dim, sym_frobenius, sym_idx, sym_trace, Dense, MAX_DIM};
use serde::{Deserialize, Serialize};

/// Guard and iteration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompSettings {
    pub sigma1: f64,
    pub sigma_floor: f64,
    pub max_iter: usize,
    pub max_condition: f64,
}

impl Default for DecompSettings {
    fn default() -> Self {
        Self { sigma1: 0.2, sigma_floor: 0.05, max_iter: 50, max_condition: 1e8 }
    }
}

/// One pointwise decomposition problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompProblem {
    pub n: usize,
    pub tau: [f64; 6],
    pub tau_k: [[f64; 6]; 6],
    /// Row-major over (k, k').
    pub tau_kk: [[[f64; 6]; 6]; 6],
    pub basis: Dense,
    pub count: usize,
}

impl DecompProblem {
    /// Problem with τ_k = τ_kk' = 0.
    pub fn new(tau: &[f64], dirs: &DirectionSet) -> Self {
        let mut t = [0.0; 6];
        t[..tau.len()].copy_from_slice(tau);
        Self {
            n: dirs.n,
            tau: t,
            tau_k: [[0.0; 6]; 6],
            tau_kk: [[[0.0; 6]; 6]; 6],
            basis: dirs.basis_matrix(),
            count: dirs.len(),
        }
    }

    /// Problem with all perturbing tensors; `tau_k` holds N·dim entries, `tau_kk` N²·dim.
    pub fn with_perturbations(tau: &[f64], tau_k: &[f64], tau_kk: &[f64], dirs: &DirectionSet) -> Self {
        let mut p = Self::new(tau, dirs);
        let dim = sym_dim(dirs.n);
        for k in 0..p.count {
            p.tau_k[k][..dim].copy_from_slice(&tau_k[k * dim..(k + 1) * dim]);
            for l in 0..p.count {
                let o = (k * p.count + l) * dim;
                p.tau_kk[k][l][..dim].copy_from_slice(&tau_kk[o..o + dim]);
            }
        }
        p
    }

    fn dim(&self) -> usize {
        sym_dim(self.n)
    }

    /// μ = tr τ / n.
    pub fn scale(&self) -> f64 {
        sym_trace(self.n, &self.tau) / self.n as f64
    }

    /// ‖τ/μ − Id‖ + Σ‖τ_k‖/√μ + Σ‖τ_kk'‖ (Frobenius norms).
    pub fn guard_value(&self) -> f64 {
        let (n, dim) = (self.n, self.dim());
        let mu = self.scale();
        if !(mu > 0.0) {
            return f64::INFINITY;
        }
        let mut dev = [0.0; 6];
        for i in 0..n {
            for j in i..n {
                let s = sym_idx(n, i, j);
                dev[s] = self.tau[s] / mu - if i == j { 1.0 } else { 0.0 };
            }
        }
        let mut v = sym_frobenius(n, &dev[..dim]);
        for k in 0..self.count {
            v += sym_frobenius(n, &self.tau_k[k][..dim]) / mu.sqrt();
            for l in 0..self.count {
                v += sym_frobenius(n, &self.tau_kk[k][l][..dim]);
            }
        }
        v
    }

    /// G(A) in upper-triangle coordinates.
    pub fn residual(&self, a: &[f64]) -> [f64; 6] {
        let dim = self.dim();
        let mut g = [0.0; 6];
        for s in 0..dim {
            let mut v = -self.tau[s];
            for k in 0..self.count {
                v += a[k] * a[k] * self.basis[s][k] + a[k] * self.tau_k[k][s];
                for l in 0..self.count {
                    v += a[k] * a[l] * self.tau_kk[k][l][s];
                }
            }
            g[s] = v;
        }
        g
    }

    /// ∂G/∂A.
    pub fn jacobian(&self, a: &[f64]) -> Dense {
        let dim = self.dim();
        let mut j: Dense = [[0.0; MAX_DIM]; MAX_DIM];
        for s in 0..dim {
            for m in 0..self.count {
                let mut v = 2.0 * a[m] * self.basis[s][m] + self.tau_k[m][s];
                for l in 0..self.count {
                    v += a[l] * (self.tau_kk[m][l][s] + self.tau_kk[l][m][s]);
                }
                j[s][m] = v;
            }
        }
        j
    }

    fn norm(&self, g: &[f64; 6]) -> f64 {
        sym_frobenius(self.n, &g[..self.dim()])
    }

    /// Convergence threshold 10⁻¹² max(1, ‖τ‖).
    pub fn tolerance(&self) -> f64 {
        1e-12 * sym_frobenius(self.n, &self.tau[..self.dim()]).max(1.0)
    }
}

/// Solve Σ c_k n_k⊗n_k = τ and return A_k = √c_k.
pub fn baseline_solve(tau: &[f64], dirs: &DirectionSet, settings: &DecompSettings) -> Result<Vec<f64>> {
    let p = DecompProblem::new(tau, dirs);
    let mu = p.scale();
    let (c, _) = solve_with_condition(&p.basis, p.dim(), &p.tau[..p.dim()])
        .ok_or_else(|| Error::Config("singular direction basis".into()))?;
    let floor = settings.sigma_floor * settings.sigma_floor;
    for &ck in &c[..p.count] {
        if !(mu > 0.0) || ck / mu < floor {
            return Err(Error::ConeBoundary { coefficient: ck / mu.max(f64::MIN_POSITIVE), floor });
        }
    }
    Ok(c[..p.count].iter().map(|v| v.sqrt()).collect())
}

/// Result of a Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub a: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Damped Newton iteration on G(A) = 0 from `seed`.
pub fn newton_decompose(p: &DecompProblem, seed: &[f64], settings: &DecompSettings) -> Result<NewtonOutcome> {
    let guard = p.guard_value();
    if !(guard <= settings.sigma1) {
        return Err(Error::Guard { value: guard, sigma1: settings.sigma1 });
    }
    let floor = settings.sigma_floor * p.scale().sqrt();
    if seed.iter().take(p.count).any(|v| !(*v >= floor)) {
        return Err(Error::ConeBoundary { coefficient: seed.iter().cloned().fold(f64::INFINITY, f64::min), floor });
    }
    let tol = p.tolerance();
    let mut a = [0.0; MAX_DIM];
    a[..p.count].copy_from_slice(&seed[..p.count]);
    let mut g = p.residual(&a);
    let mut r = p.norm(&g);
    for it in 0..=settings.max_iter {
        if r <= tol {
            // one polishing step down to round-off
            let j = p.jacobian(&a);
            if let Some((step, _)) = solve_with_condition(&j, p.dim(), &g[..p.dim()]) {
                let mut trial = a;
                for k in 0..p.count {
                    trial[k] -= step[k];
                }
                let rt = p.norm(&p.residual(&trial));
                if rt < r && trial[..p.count].iter().all(|v| *v >= floor) {
                    a = trial;
                    r = rt;
                }
            }
            return Ok(NewtonOutcome { a: a[..p.count].to_vec(), iterations: it, residual: r });
        }
        if it == settings.max_iter {
            break;
        }
        let j = p.jacobian(&a);
        let (step, cond) = solve_with_condition(&j, p.dim(), &g[..p.dim()])
            .ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
        if cond > settings.max_condition {
            return Err(Error::IllConditioned { condition: cond });
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = a;
            for k in 0..p.count {
                trial[k] -= t * step[k];
            }
            if trial[..p.count].iter().all(|v| *v >= floor) {
                let gt = p.residual(&trial);
                let rt = p.norm(&gt);
                if rt < r {
                    a = trial;
                    g = gt;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::SolverFailure {
                detail: format!("line search stalled at residual {r:.3e}"),
                points: vec![],
            });
        }
    }
    Err(Error::SolverFailure { detail: format!("no convergence in {} iterations", settings.max_iter), points: vec![] })
}

/// Coefficient functions A_k with their positivity floor.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    /// Map field with N_dir components.
    pub a: GridField,
    pub floor: f64,
}

impl CoefficientField {
    /// Smallest coefficient over valid points.
    pub fn min_value(&self) -> f64 {
        (0..self.a.len())
            .filter(|&p| self.a.is_valid(p))
            .flat_map(|p| self.a.at(p).iter().cloned())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Decompose at every point where τ and the perturbing tensors are valid.
pub fn decompose_field(
    tau: &GridField,
    tau_k: &GridField,
    tau_kk: &GridField,
    dirs: &DirectionSet,
    warm: Option<&CoefficientField>,
    settings: &DecompSettings,
) -> Result<CoefficientField> {
    let grid = *tau.grid();
    let nd = dirs.len();
    let failures = std::sync::Mutex::new(Vec::<(usize, String)>::new());
    let a = GridField::build(grid, FieldKind::Map, nd, |p, out| {
        if !(tau.is_valid(p) && tau_k.is_valid(p) && tau_kk.is_valid(p)) {
            return false;
        }
        let prob = DecompProblem::with_perturbations(tau.at(p), tau_k.at(p), tau_kk.at(p), dirs);
        let seed: Vec<f64> = match warm.filter(|w| w.a.is_valid(p)) {
            Some(w) => w.a.at(p).to_vec(),
            None => baseline_solve(tau.at(p), dirs, settings).unwrap_or_else(|_| {
                let mu = prob.scale().max(0.0).sqrt();
                dirs.id_coeffs.iter().map(|c| c * mu).collect()
            }),
        };
        match newton_decompose(&prob, &seed, settings) {
            Ok(o) => {
                out.copy_from_slice(&o.a);
                true
            }
            Err(e) => {
                failures.lock().unwrap().push((p, e.to_string()));
                false
            }
        }
    });
    let mut failures = failures.into_inner().unwrap();
    if !failures.is_empty() {
        failures.sort_by_key(|f| f.0);
        let points = failures.iter().take(10).map(|(p, _)| grid.position(*p)[..grid.n].to_vec()).collect();
        return Err(Error::SolverFailure {
            detail: format!("{} points failed; first: {}", failures.len(), failures[0].1),
            points,
        });
    }
    Ok(CoefficientField { a, floor: settings.sigma_floor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::make_directions;

    #[test]
    fn identity_baseline() {
        let d = make_directions(2).unwrap();
        let a = baseline_solve(&[1.0, 0.0, 1.0], &d, &DecompSettings::default()).unwrap();
        for v in a {
            assert!((v - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn guard_trips() {
        let d = make_directions(2).unwrap();
        let p = DecompProblem::new(&[1.0, 0.5, 1.0], &d);
        let seed = [0.8; 3];
        assert!(matches!(newton_decompose(&p, &seed, &DecompSettings::default()), Err(Error::Guard { .. })));
    }
}
