use super::{derivative_family, order, GridField};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default number of sampled point pairs for the Hölder seminorm.
pub const DEFAULT_PAIR_BUDGET: usize = 1_000_000;

/// Pair-sampling controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderOptions {
    pub pair_budget: usize,
    pub seed: u64,
}

impl Default for HolderOptions {
    fn default() -> Self {
        Self { pair_budget: DEFAULT_PAIR_BUDGET, seed: 0 }
    }
}

/// Estimate of ‖f‖_{k,α} = Σ_{|a|≤k} sup|∂^a f| + Σ_{|a|=k} [∂^a f]_α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub k: usize,
    pub alpha: f64,
    pub value: f64,
    pub sup_part: f64,
    pub seminorm: f64,
    pub pair_budget: usize,
    /// Pairs actually examined (all candidate pairs when they fit in the budget).
    pub pairs_examined: usize,
}

/// ‖f‖_{k,α} with the default budget and seed.
pub fn holder_norm(f: &GridField, k: usize, alpha: f64) -> Result<HolderEstimate> {
    holder_norm_with(f, k, alpha, &HolderOptions::default())
}

/// ‖f‖_{k,α} with explicit sampling options.
pub fn holder_norm_with(f: &GridField, k: usize, alpha: f64, opts: &HolderOptions) -> Result<HolderEstimate> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("Hölder exponent {alpha} outside (0, 1]")));
    }
    let family = derivative_family(f, k)?;
    let mask = common_mask(&family);
    let sup_part = sup_of_sum(f, &family, &mask, |_| true);
    let top: Vec<&GridField> = family.iter().filter(|(a, _)| order(a) == k).map(|(_, g)| g).collect();
    let (seminorm, pairs_examined) = seminorm(f, &top, &mask, alpha, opts);
    Ok(HolderEstimate {
        k,
        alpha,
        value: sup_part + seminorm,
        sup_part,
        seminorm,
        pair_budget: opts.pair_budget,
        pairs_examined,
    })
}

/// C^r norm sup Σ_{|a|≤r} |∂^a f|.
pub fn cr_norm(f: &GridField, r: usize) -> Result<f64> {
    let family = derivative_family(f, r)?;
    let mask = common_mask(&family);
    Ok(sup_of_sum(f, &family, &mask, |_| true))
}

/// C^r norm restricted to local axis-0 rows `[from, to)`; derivatives use the whole field.
pub fn cr_norm_rows(f: &GridField, r: usize, from: usize, to: usize) -> Result<f64> {
    let family = derivative_family(f, r)?;
    let mut mask = common_mask(&family);
    let per_row = f.grid().stride(0);
    for (p, m) in mask.iter_mut().enumerate() {
        let row = p / per_row;
        if row < from || row >= to {
            *m = false;
        }
    }
    Ok(sup_of_sum(f, &family, &mask, |_| true))
}

/// C^r seminorm sup Σ_{|a|=r} |∂^a f|.
pub fn cr_seminorm(f: &GridField, r: usize) -> Result<f64> {
    let family = derivative_family(f, r)?;
    let mask = common_mask(&family);
    Ok(sup_of_sum(f, &family, &mask, |a| order(a) == r))
}

/// Norm at a real exponent s: C^s for integer s, C^{⌊s⌋, s−⌊s⌋} otherwise.
pub fn norm_real(f: &GridField, s: f64, opts: &HolderOptions) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::Domain(format!("negative norm exponent {s}")));
    }
    let k = s.floor();
    let frac = s - k;
    if frac.abs() < 1e-12 || (1.0 - frac).abs() < 1e-12 {
        cr_norm(f, s.round() as usize)
    } else {
        Ok(holder_norm_with(f, k as usize, frac, opts)?.value)
    }
}

/// Outcome of an interpolation-inequality check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub alpha: f64,
    /// ‖f‖_α
    pub lhs: f64,
    /// ‖f‖_{a1}^λ ‖f‖_{a2}^{1−λ}
    pub rhs: f64,
    pub holds: bool,
}

/// Compare ‖f‖_α against ‖f‖_{a1}^λ ‖f‖_{a2}^{1−λ} for α = λa1 + (1−λ)a2, with 5% slack.
pub fn interpolation_check(f: &GridField, a1: f64, a2: f64, lam: f64) -> Result<InterpolationReport> {
    if !(a1 < a2) || !(lam > 0.0 && lam < 1.0) {
        return Err(Error::Domain("interpolation needs a1 < a2 and λ in (0, 1)".into()));
    }
    let opts = HolderOptions::default();
    let alpha = lam * a1 + (1.0 - lam) * a2;
    let lhs = norm_real(f, alpha, &opts)?;
    let rhs = norm_real(f, a1, &opts)?.powf(lam) * norm_real(f, a2, &opts)?.powf(1.0 - lam);
    Ok(InterpolationReport { alpha, lhs, rhs, holds: lhs <= 1.05 * rhs })
}

fn common_mask(family: &[(super::MultiIndex, GridField)]) -> Vec<bool> {
    let len = family[0].1.len();
    (0..len).into_par_iter().map(|p| family.iter().all(|(_, g)| g.is_valid(p))).collect()
}

fn sup_of_sum<F>(f: &GridField, family: &[(super::MultiIndex, GridField)], mask: &[bool], keep: F) -> f64
where
    F: Fn(&super::MultiIndex) -> bool + Sync,
{
    (0..f.len())
        .into_par_iter()
        .filter(|&p| mask[p])
        .map(|p| family.iter().filter(|(a, _)| keep(a)).map(|(_, g)| f.point_norm(g.at(p))).sum::<f64>())
        .reduce(|| 0.0, f64::max)
}

/// Direction offsets (axis and diagonal) in grid steps.
fn directions(n: usize) -> Vec<[i64; 3]> {
    let mut dirs = Vec::new();
    for a in 0..n {
        let mut d = [0i64; 3];
        d[a] = 1;
        dirs.push(d);
    }
    for a in 0..n {
        for b in a + 1..n {
            let mut d = [0i64; 3];
            d[a] = 1;
            d[b] = 1;
            dirs.push(d);
            d[b] = -1;
            dirs.push(d);
        }
    }
    dirs
}

fn seminorm(f: &GridField, top: &[&GridField], mask: &[bool], alpha: f64, opts: &HolderOptions) -> (f64, usize) {
    let grid = *f.grid();
    let h = grid.spacing;
    let mut steps = Vec::new();
    let mut s = 1usize;
    while s as f64 * h <= 0.5 * grid.radius * (1.0 + 1e-12) {
        steps.push(s);
        s *= 2;
    }
    if steps.is_empty() {
        steps.push(1);
    }
    let dirs = directions(grid.n);
    let combos: Vec<(usize, [i64; 3])> =
        steps.iter().flat_map(|&s| dirs.iter().map(move |d| (s, *d))).collect();

    let quotient = |p: usize, combo: usize| -> f64 {
        if !mask[p] {
            return 0.0;
        }
        let (s, d) = combos[combo];
        let idx = grid.index(p);
        let mut q = [0usize; 3];
        let mut dist2 = 0.0;
        for a in 0..grid.n {
            let j = idx[a] as i64 + d[a] * s as i64;
            if j < 0 || j >= grid.extent(a) as i64 {
                return 0.0;
            }
            q[a] = j as usize;
            dist2 += (d[a] * d[a]) as f64;
        }
        let pq = grid.point(&q[..grid.n]);
        if !mask[pq] {
            return 0.0;
        }
        let dist = s as f64 * h * dist2.sqrt();
        let mut diff = [0.0; 64];
        let mut total = 0.0;
        for g in top {
            let (x, y) = (g.at(p), g.at(pq));
            let c = x.len().min(64);
            for i in 0..c {
                diff[i] = x[i] - y[i];
            }
            total += f.point_norm(&diff[..c]);
        }
        total / dist.powf(alpha)
    };

    let candidates = combos.len() * f.len();
    if candidates <= opts.pair_budget {
        let best = (0..f.len())
            .into_par_iter()
            .map(|p| (0..combos.len()).map(|c| quotient(p, c)).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max);
        (best, candidates)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let draws: Vec<(usize, usize)> = (0..opts.pair_budget)
            .map(|_| (rng.gen_range(0..f.len()), rng.gen_range(0..combos.len())))
            .collect();
        let best = draws.par_iter().map(|&(p, c)| quotient(p, c)).reduce(|| 0.0, f64::max);
        (best, opts.pair_budget)
    }
}
