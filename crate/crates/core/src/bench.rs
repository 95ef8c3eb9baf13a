//! Stand-alone verification runs for the decomposition solver and the frames.

use crate::decomp::{baseline_solve, newton_decompose, DecompProblem, DecompSettings};
use crate::error::{Error, Result};
use crate::field::{pullback, FieldKind, GridField, GridSpec};
use crate::frame::{
    frame_residual, fundamental_identity, make_directions, normal_frame, tangent_frame, DirectionSet,
    FrameResidual, IdentityCheck,
};
use crate::linalg::{sym_dim, sym_idx};
use crate::mollify::loglog_slope;
use crate::perturb::Variant;
use crate::stage::BaseEmbedding;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Settings of [`decompose_bench`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompBenchConfig {
    pub n: usize,
    /// Upper triangle of τ; the identity when empty.
    pub tau: Vec<f64>,
    pub samples: usize,
    /// Entry size of the random perturbing tensors.
    pub scale: f64,
    pub seed: u64,
    pub settings: DecompSettings,
}

impl Default for DecompBenchConfig {
    fn default() -> Self {
        Self { n: 2, tau: Vec::new(), samples: 10, scale: 0.02, seed: 0, settings: DecompSettings::default() }
    }
}

/// One random perturbed problem and its Newton solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompSample {
    pub guard: f64,
    pub coefficients: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompBenchReport {
    pub config: DecompBenchConfig,
    pub tau: Vec<f64>,
    /// Baseline A_k for τ.
    pub baseline: Vec<f64>,
    pub samples: Vec<DecompSample>,
    pub pass: bool,
}

/// Identity in upper-triangle coordinates.
pub fn identity_tensor(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; sym_dim(n)];
    for i in 0..n {
        t[sym_idx(n, i, i)] = 1.0;
    }
    t
}

/// Random problem near Id with perturbing tensors of entry size `scale`, redrawn until inside the guard.
pub fn random_problem(dirs: &DirectionSet, scale: f64, sigma1: f64, rng: &mut ChaCha8Rng) -> DecompProblem {
    let n = dirs.n;
    let dim = sym_dim(n);
    let count = dirs.len();
    let mut s = scale;
    loop {
        let mut draw = |len: usize, size: f64| -> Vec<f64> { (0..len).map(|_| size * rng.gen_range(-1.0..1.0)).collect() };
        let mut tau = identity_tensor(n);
        for (t, d) in tau.iter_mut().zip(draw(dim, s)) {
            *t += d;
        }
        let tau_k = draw(count * dim, s);
        let tau_kk = draw(count * count * dim, s * s);
        let p = DecompProblem::with_perturbations(&tau, &tau_k, &tau_kk, dirs);
        if p.guard_value() <= sigma1 {
            return p;
        }
        s *= 0.8;
    }
}

/// Baseline solve of the configured τ plus Newton solves of random perturbed problems.
pub fn decompose_bench(cfg: &DecompBenchConfig) -> Result<DecompBenchReport> {
    let dirs = make_directions(cfg.n)?;
    let tau = if cfg.tau.is_empty() { identity_tensor(cfg.n) } else { cfg.tau.clone() };
    if tau.len() != sym_dim(cfg.n) {
        return Err(Error::Config(format!("τ needs {} entries for n = {}", sym_dim(cfg.n), cfg.n)));
    }
    let baseline = baseline_solve(&tau, &dirs, &cfg.settings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::new();
    for _ in 0..cfg.samples {
        let p = random_problem(&dirs, cfg.scale, cfg.settings.sigma1, &mut rng);
        let seed = baseline_solve(&p.tau[..sym_dim(cfg.n)], &dirs, &cfg.settings)?;
        let o = newton_decompose(&p, &seed, &cfg.settings)?;
        samples.push(DecompSample { guard: p.guard_value(), coefficients: o.a, residual: o.residual, iterations: o.iterations });
    }
    let pass = samples.iter().all(|s| s.residual <= 1e-12);
    Ok(DecompBenchReport { config: cfg.clone(), tau, baseline, samples, pass })
}

/// Settings of [`frame_bench`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameBenchConfig {
    /// Points per axis of the coarse grid; the fine grid has 2N − 1.
    pub points_per_axis: usize,
    pub radius: f64,
    pub base: BaseEmbedding,
}

impl Default for FrameBenchConfig {
    fn default() -> Self {
        Self { points_per_axis: 129, radius: 0.5, base: BaseEmbedding::Bump { height: 0.3, width: 0.4 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBenchReport {
    pub config: FrameBenchConfig,
    /// Tangency and Gram residuals of the 2·N_dir spiral normals.
    pub spiral: FrameResidual,
    /// Tangency and Gram residuals of the strain normals.
    pub strain_normals: FrameResidual,
    /// ∂_i f·ν¹_k − (n_k)_i with the differences used to build ν¹.
    pub identity: IdentityCheck,
    /// The same identity against the exact derivative, coarse then fine grid.
    pub exact_residual: [f64; 2],
    pub convergence_order: f64,
    pub pass: bool,
}

/// Largest |∂_i f·ν¹_k − (n_k)_i| with the analytic derivative of the base map.
fn exact_identity_residual(base: &BaseEmbedding, nu1: &GridField, dirs: &DirectionSet, m: usize) -> f64 {
    let grid = *nu1.grid();
    let n = grid.n;
    (0..nu1.len())
        .into_par_iter()
        .filter(|&p| nu1.is_valid(p))
        .map(|p| {
            let x = grid.position(p);
            let mut jac = vec![0.0; n * m];
            base.jacobian(&x[..n], m, &mut jac);
            let v = nu1.at(p);
            let mut r: f64 = 0.0;
            for (k, nk) in dirs.dirs.iter().enumerate() {
                for i in 0..n {
                    let d: f64 = (0..m).map(|c| jac[i * m + c] * v[k * m + c]).sum();
                    r = r.max((d - nk[i]).abs());
                }
            }
            r
        })
        .reduce(|| 0.0, f64::max)
}

fn strain_frames(base: &BaseEmbedding, grid: GridSpec, dirs: &DirectionSet) -> Result<(GridField, GridField, GridField)> {
    let n = grid.n;
    let m = Variant::Strain.target_dim(n);
    let f = GridField::sample(grid, FieldKind::Map, m, |x, o| base.eval(&x[..n], o));
    let g = pullback(&f)?;
    let nu1 = tangent_frame(&f, &g, dirs)?;
    Ok((f, g, nu1))
}

/// Spiral orthonormality, the strain identity, and its convergence under grid halving.
pub fn frame_bench(cfg: &FrameBenchConfig) -> Result<FrameBenchReport> {
    let n = 2;
    let dirs = make_directions(n)?;
    let coarse = GridSpec::centered(n, cfg.points_per_axis, cfg.radius)?;
    let fine = GridSpec::centered(n, 2 * cfg.points_per_axis - 1, cfg.radius)?;
    let ms = Variant::Spiral.target_dim(n);
    let fs = GridField::sample(coarse, FieldKind::Map, ms, |x, o| cfg.base.eval(&x[..n], o));
    let spiral = frame_residual(&fs, &normal_frame(&fs, 2 * dirs.len(), None)?);
    let m = Variant::Strain.target_dim(n);
    let (f, g, nu1) = strain_frames(&cfg.base, coarse, &dirs)?;
    let strain_normals = frame_residual(&f, &normal_frame(&f, dirs.len(), None)?);
    let identity = fundamental_identity(&f, &g, &nu1, &dirs)?;
    let r0 = exact_identity_residual(&cfg.base, &nu1, &dirs, m);
    let (_, _, nu1_fine) = strain_frames(&cfg.base, fine, &dirs)?;
    let r1 = exact_identity_residual(&cfg.base, &nu1_fine, &dirs, m);
    let convergence_order = loglog_slope(&[coarse.spacing, fine.spacing], &[r0, r1]);
    let pass = spiral.tangent <= 1e-10
        && spiral.gram <= 1e-10
        && strain_normals.tangent <= 1e-10
        && strain_normals.gram <= 1e-10
        && identity.max_residual <= 10.0 * identity.truncation_estimate.max(f64::EPSILON)
        && convergence_order >= 3.5;
    Ok(FrameBenchReport {
        config: cfg.clone(),
        spiral,
        strain_normals,
        identity,
        exact_residual: [r0, r1],
        convergence_order,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_baseline_is_sqrt_two_thirds() {
        let r = decompose_bench(&DecompBenchConfig { samples: 3, ..Default::default() }).unwrap();
        for a in &r.baseline {
            assert!((a - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        }
        assert!(r.pass);
        assert!(r.samples.iter().all(|s| s.guard <= r.config.settings.sigma1));
    }

    #[test]
    fn wrong_tau_length_is_rejected() {
        let cfg = DecompBenchConfig { tau: vec![1.0, 0.0], ..Default::default() };
        assert!(matches!(decompose_bench(&cfg), Err(Error::Config(_))));
    }
}
