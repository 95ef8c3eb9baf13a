//! Convolution with the polynomial bump φ(x) = c_n(1−|x|²)⁴ at scale ℓ, and
//! empirical rate checks for the four mollification estimates.

use crate::corpus::{corpus_rng, BandLimited, Spectrum};
use crate::error::{Error, Result};
use crate::field::{cr_norm, cr_seminorm, norm_real, GridField, GridSpec, HolderOptions};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

/// Discrete kernel φ_ℓ sampled on the grid and renormalized to unit mass.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub ell: f64,
    pub spacing: f64,
    /// Support radius in grid cells.
    pub reach: usize,
    /// Offsets in grid steps with their weights (weights sum to 1).
    pub taps: Vec<([i64; 3], f64)>,
}

impl Kernel {
    /// Radial profile (1−r²)⁴ on r ≤ 1.
    pub fn profile(r: f64) -> f64 {
        if r >= 1.0 {
            0.0
        } else {
            (1.0 - r * r).powi(4)
        }
    }

    /// Sample φ_ℓ on a grid of the given spacing in dimension n.
    pub fn new(n: usize, spacing: f64, ell: f64) -> Self {
        let reach = (ell / spacing).floor() as i64;
        let mut taps = Vec::new();
        let span = |a: usize| if a < n { -reach..=reach } else { 0..=0 };
        for i in span(0) {
            for j in span(1) {
                for k in span(2) {
                    let r2 = ((i * i + j * j + k * k) as f64) * spacing * spacing / (ell * ell);
                    let w = Self::profile(r2.sqrt());
                    if w > 0.0 {
                        taps.push(([i, j, k], w));
                    }
                }
            }
        }
        let mass: f64 = taps.iter().map(|t| t.1).sum();
        for t in taps.iter_mut() {
            t.1 /= mass;
        }
        Self { ell, spacing, reach: reach as usize, taps }
    }

    /// Total discrete mass (1 up to round-off).
    pub fn mass(&self) -> f64 {
        self.taps.iter().map(|t| t.1).sum()
    }
}

/// Kernels with more taps than this are applied through the FFT.
pub const FFT_THRESHOLD: usize = 400;

/// f * φ_ℓ on the ball of radius R − ℓ.
///
/// An output point is valid when it lies in the shrunken ball and every point
/// of its kernel support is a valid input point.
pub fn mollify(f: &GridField, ell: f64) -> Result<GridField> {
    let grid = *f.grid();
    if ell < 2.0 * grid.spacing {
        return Err(Error::Resolution(format!("ℓ = {ell:.4e} below twice the spacing {:.4e}", grid.spacing)));
    }
    if ell >= grid.radius {
        return Err(Error::DomainExhausted(format!("ℓ = {ell:.4e} ≥ radius {:.4e}", grid.radius)));
    }
    let kernel = Kernel::new(grid.n, grid.spacing, ell);
    if kernel.taps.len() > FFT_THRESHOLD {
        Ok(mollify_fft(f, &kernel))
    } else {
        Ok(mollify_direct(f, &kernel))
    }
}

fn live_components(f: &GridField) -> Vec<usize> {
    (0..f.components())
        .filter(|&k| (0..f.len()).into_par_iter().any(|p| f.is_valid(p) && f.at(p)[k] != 0.0))
        .collect()
}

fn mollify_direct(f: &GridField, kernel: &Kernel) -> GridField {
    let grid = *f.grid();
    let out_grid = grid.with_radius(grid.radius - kernel.ell);
    let c = f.components();
    let live = live_components(f);
    let taps: Vec<(isize, [i64; 3], f64)> = kernel
        .taps
        .iter()
        .map(|(o, w)| {
            let lin: i64 = (0..grid.n).map(|a| o[a] * grid.stride(a) as i64).sum();
            (lin as isize, *o, *w)
        })
        .collect();
    let reach = kernel.reach;
    let s = f.samples();
    let m = f.mask();
    GridField::build(out_grid, f.kind(), c, |p, out| {
        if !m[p] || !out_grid.in_ball(p) {
            return false;
        }
        let idx = grid.index(p);
        let interior = (0..grid.n).all(|a| idx[a] >= reach && idx[a] + reach < grid.extent(a));
        out.fill(0.0);
        for &(lin, o, w) in &taps {
            if !interior {
                let inside = (0..grid.n).all(|a| {
                    let j = idx[a] as i64 + o[a];
                    j >= 0 && j < grid.extent(a) as i64
                });
                if !inside {
                    return false;
                }
            }
            let q = (p as isize + lin) as usize;
            if !m[q] {
                return false;
            }
            for &k in &live {
                out[k] += w * s[q * c + k];
            }
        }
        true
    })
}

fn mollify_fft(f: &GridField, kernel: &Kernel) -> GridField {
    let grid = *f.grid();
    let out_grid = grid.with_radius(grid.radius - kernel.ell);
    let n = grid.n;
    let c = f.components();
    let reach = kernel.reach;
    let dims: Vec<usize> = (0..n).map(|a| fft_size(grid.extent(a) + 2 * reach)).collect();
    let plan = FftNd::new(&dims);
    let total = plan.len();
    let scatter_kernel = |weight: &dyn Fn(f64) -> f64| {
        let mut buf = vec![Complex::new(0.0, 0.0); total];
        for (o, w) in &kernel.taps {
            let mut lin = 0;
            for a in 0..n {
                let d = dims[a] as i64;
                lin = lin * dims[a] + ((o[a] % d + d) % d) as usize;
            }
            buf[lin].re = weight(*w);
        }
        plan.forward(&mut buf);
        buf
    };
    let k_hat = scatter_kernel(&|w| w);
    let support_hat = scatter_kernel(&|_| 1.0);
    let padded_index = |p: usize| -> usize {
        let idx = grid.index(p);
        (0..n).fold(0, |acc, a| acc * dims[a] + idx[a])
    };
    let convolve = |hat: &[Complex<f64>], value: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); total];
        for p in 0..grid.len() {
            buf[padded_index(p)].re = value(p);
        }
        plan.forward(&mut buf);
        for (b, h) in buf.iter_mut().zip(hat) {
            *b *= *h;
        }
        plan.inverse(&mut buf);
        let scale = 1.0 / total as f64;
        (0..grid.len()).map(|p| buf[padded_index(p)].re * scale).collect()
    };
    let m = f.mask();
    let count = convolve(&support_hat, &|p| if m[p] { 1.0 } else { 0.0 });
    let need = kernel.taps.len() as f64 - 0.5;
    let live = live_components(f);
    let channels: Vec<(usize, Vec<f64>)> =
        live.iter().map(|&k| (k, convolve(&k_hat, &|p| if m[p] { f.at(p)[k] } else { 0.0 }))).collect();
    GridField::build(out_grid, f.kind(), c, |p, out| {
        if !m[p] || !out_grid.in_ball(p) || count[p] < need {
            return false;
        }
        let idx = grid.index(p);
        if !(0..n).all(|a| idx[a] >= reach && idx[a] + reach < grid.extent(a)) {
            return false;
        }
        out.fill(0.0);
        for (k, v) in &channels {
            out[*k] = v[p];
        }
        true
    })
}

/// Smallest 2^a·3^b·5^c at least `min`.
fn fft_size(min: usize) -> usize {
    let mut best = usize::MAX;
    let mut p2 = 1;
    while p2 < 2 * min {
        let mut p3 = p2;
        while p3 < 2 * min {
            let mut p5 = p3;
            while p5 < 2 * min {
                if p5 >= min {
                    best = best.min(p5);
                }
                p5 *= 5;
            }
            p3 *= 3;
        }
        p2 *= 2;
    }
    best
}

/// Row-major multidimensional complex FFT built from 1-D transforms.
struct FftNd {
    dims: Vec<usize>,
    forward: Vec<std::sync::Arc<dyn rustfft::Fft<f64>>>,
    inverse: Vec<std::sync::Arc<dyn rustfft::Fft<f64>>>,
}

impl FftNd {
    fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dims: dims.to_vec(),
            forward: dims.iter().map(|&d| planner.plan_fft_forward(d)).collect(),
            inverse: dims.iter().map(|&d| planner.plan_fft_inverse(d)).collect(),
        }
    }

    fn len(&self) -> usize {
        self.dims.iter().product()
    }

    fn forward(&self, buf: &mut [Complex<f64>]) {
        self.run(buf, &self.forward);
    }

    fn inverse(&self, buf: &mut [Complex<f64>]) {
        self.run(buf, &self.inverse);
    }

    fn run(&self, buf: &mut [Complex<f64>], plans: &[std::sync::Arc<dyn rustfft::Fft<f64>>]) {
        let total = self.len();
        for (axis, plan) in plans.iter().enumerate() {
            let d = self.dims[axis];
            let inner: usize = self.dims[axis + 1..].iter().product();
            let outer = total / (d * inner);
            if inner == 1 {
                buf.par_chunks_mut(d).for_each(|row| plan.process(row));
                continue;
            }
            for o in 0..outer {
                let block = &mut buf[o * d * inner..(o + 1) * d * inner];
                let lines: Vec<Vec<Complex<f64>>> = (0..inner)
                    .into_par_iter()
                    .map(|i| {
                        let mut line: Vec<Complex<f64>> = (0..d).map(|j| block[j * inner + i]).collect();
                        plan.process(&mut line);
                        line
                    })
                    .collect();
                for (i, line) in lines.iter().enumerate() {
                    for (j, v) in line.iter().enumerate() {
                        block[j * inner + i] = *v;
                    }
                }
            }
        }
    }
}

/// One fitted estimate of the rate report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub name: String,
    pub nominal: f64,
    /// Least-squares log–log slope; `None` when every left side vanishes.
    pub fitted: Option<f64>,
    pub lhs: Vec<f64>,
    /// Largest lhs / (ℓ^nominal · right-side norm) over the sweep.
    pub constant: f64,
    /// |fitted − nominal| ≤ 0.3 (or vanishing left sides).
    pub pass: bool,
}

/// Fitted orders for estimates (i)–(iv).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub ells: Vec<f64>,
    pub r: usize,
    pub s: usize,
    pub alpha: f64,
    pub estimates: Vec<RateFit>,
    pub pass: bool,
}

impl RateReport {
    /// Estimate by its roman label ("i" .. "iv").
    pub fn get(&self, name: &str) -> &RateFit {
        self.estimates.iter().find(|e| e.name == name).expect("known estimate label")
    }
}

/// Tolerance on |fitted − nominal|.
pub const RATE_TOLERANCE: f64 = 0.3;

/// Rate fits with s = 1 in estimate (i).
pub fn verify_mollification_rates(
    f: &GridField,
    g: &GridField,
    ell_list: &[f64],
    r: usize,
    alpha: f64,
) -> Result<RateReport> {
    verify_mollification_rates_with(f, g, ell_list, r, 1, alpha)
}

/// Rate fits with an explicit derivative gain s in estimate (i).
pub fn verify_mollification_rates_with(
    f: &GridField,
    g: &GridField,
    ell_list: &[f64],
    r: usize,
    s: usize,
    alpha: f64,
) -> Result<RateReport> {
    if ell_list.len() < 3 {
        return Err(Error::InsufficientData(format!("{} scales given, at least 3 needed", ell_list.len())));
    }
    if ell_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("ℓ list must be strictly decreasing".into()));
    }
    if f.components() != g.components() {
        return Err(Error::Config("f and g must have the same component count".into()));
    }
    let opts = HolderOptions::default();
    // Evaluate every scale on the region left by the largest ℓ.
    let region = mollify(f, ell_list[0])?.mask().to_vec();
    let fg = f.zip(g, f.kind(), f.components(), |a, b, o| {
        for k in 0..o.len() {
            o[k] = a[k] * b[k];
        }
    });
    let mut lhs = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for &ell in ell_list {
        let fm = mollify(f, ell)?.restrict_mask(&region);
        let gm = mollify(g, ell)?.restrict_mask(&region);
        let fgm = mollify(&fg, ell)?.restrict_mask(&region);
        let defect = f.restrict_mask(&region).sub(&fm);
        let comm = fgm.sub(&fm.zip(&gm, f.kind(), f.components(), |a, b, o| {
            for k in 0..o.len() {
                o[k] = a[k] * b[k];
            }
        }));
        lhs[0].push(cr_seminorm(&fm, r + s)?);
        lhs[1].push(cr_seminorm(&defect, r)?);
        lhs[2].push(cr_seminorm(&comm, r)?);
        lhs[3].push(defect.sup_norm());
    }
    let rhs = [
        cr_norm(f, r)?,
        cr_norm(f, r + 2)?,
        norm_real(f, alpha, &opts)? * norm_real(g, alpha, &opts)?,
        cr_norm(f, 1)?,
    ];
    let nominal = [-(s as f64), 2.0, 2.0 * alpha - r as f64, 1.0];
    let names = ["i", "ii", "iii", "iv"];
    let scale = f.sup_norm().max(g.sup_norm()).max(1e-300);
    let estimates: Vec<RateFit> = (0..4)
        .map(|e| {
            let vanishing = lhs[e].iter().all(|v| *v <= 1e-12 * scale);
            let fitted = if vanishing { None } else { Some(loglog_slope(ell_list, &lhs[e])) };
            let constant = ell_list
                .iter()
                .zip(&lhs[e])
                .map(|(l, v)| if rhs[e] > 0.0 { v / (l.powf(nominal[e]) * rhs[e]) } else { 0.0 })
                .fold(0.0, f64::max);
            let pass = fitted.is_none_or(|k| (k - nominal[e]).abs() <= RATE_TOLERANCE);
            RateFit { name: names[e].into(), nominal: nominal[e], fitted, lhs: lhs[e].clone(), constant, pass }
        })
        .collect();
    let pass = estimates.iter().all(|e| e.pass);
    Ok(RateReport { ells: ell_list.to_vec(), r, s, alpha, estimates, pass })
}

/// Least-squares slope of log(y) against log(x).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, v)| **v > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Settings of the rate benchmark over the band-limited corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub points_per_axis: usize,
    pub radius: f64,
    /// Strictly decreasing mollification scales.
    pub ells: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { points_per_axis: 513, radius: 1.0, ells: vec![0.3, 0.2, 0.13, 0.09, 0.06, 0.04, 0.03], samples: 5, seed: 0 }
    }
}

/// Fitted orders of one estimate across the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEstimate {
    pub name: String,
    pub nominal: f64,
    /// Decay exponent of the corpus members used for this estimate.
    pub decay: f64,
    pub fitted: Vec<f64>,
    pub worst_deviation: f64,
    pub pass: bool,
}

/// Result of [`mollification_bench`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub estimates: Vec<BenchEstimate>,
    /// Smallest fitted order of the commutator estimate (iii).
    pub commutator_min_order: f64,
    pub pass: bool,
}

/// Spectra that make each estimate sharp: a flat spectrum across the scales for (i),
/// a smooth low band for (ii) and (iii), and k⁻¹ decay across the scales for (iv).
pub fn bench_spectra(cfg: &BenchConfig, spacing: f64) -> [Spectrum; 4] {
    let wide = |decay| Spectrum { k_min: 1.0, k_max: 0.6 / spacing, modes: 48, decay };
    let low = Spectrum { k_min: 0.5, k_max: 1.0 / (3.0 * cfg.ells[0]), modes: 4, decay: 0.0 };
    [wide(0.0), low, low, wide(1.0)]
}

/// Fit the four rates with r = 0, s = 1, α = 1 on `samples` corpus draws.
pub fn mollification_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let grid = GridSpec::centered(2, cfg.points_per_axis, cfg.radius)?;
    let spectra = bench_spectra(cfg, grid.spacing);
    let mut rng = corpus_rng(cfg.seed);
    let mut fitted = vec![Vec::new(); 4];
    for _ in 0..cfg.samples {
        let draws: Vec<GridField> =
            spectra.iter().map(|s| BandLimited::random(2, 1, s, &mut rng).sample(grid)).collect();
        let pair = BandLimited::random(2, 1, &spectra[2], &mut rng).sample(grid);
        for e in 0..4 {
            let g = if e == 2 { &pair } else { &draws[e] };
            let rep = verify_mollification_rates(&draws[e], g, &cfg.ells, 0, 1.0)?;
            fitted[e].push(rep.estimates[e].fitted.unwrap_or(f64::NAN));
        }
    }
    let nominal = [-1.0, 2.0, 2.0, 1.0];
    let names = ["i", "ii", "iii", "iv"];
    let estimates: Vec<BenchEstimate> = (0..4)
        .map(|e| {
            let worst = fitted[e].iter().map(|k| (k - nominal[e]).abs()).fold(0.0, f64::max);
            BenchEstimate {
                name: names[e].into(),
                nominal: nominal[e],
                decay: spectra[e].decay,
                fitted: fitted[e].clone(),
                worst_deviation: worst,
                pass: fitted[e].iter().all(|k| (k - nominal[e]).abs() <= RATE_TOLERANCE),
            }
        })
        .collect();
    let commutator_min_order = fitted[2].iter().cloned().fold(f64::INFINITY, f64::min);
    let pass = estimates.iter().all(|e| e.pass) && commutator_min_order >= 1.7;
    Ok(BenchReport { config: cfg.clone(), estimates, commutator_min_order, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;

    #[test]
    fn kernel_is_symmetric_with_unit_mass() {
        let k = Kernel::new(2, 0.01, 0.057);
        assert!((k.mass() - 1.0).abs() < 1e-14);
        for (o, w) in &k.taps {
            let mirror = k.taps.iter().find(|(p, _)| p[0] == -o[0] && p[1] == -o[1]).unwrap();
            assert_eq!(mirror.1, *w);
            assert!(*w > 0.0);
        }
    }

    #[test]
    fn errors_on_bad_scales() {
        let g = GridSpec::centered(2, 41, 1.0).unwrap();
        let f = GridField::scalar(g, |x| x[0]);
        assert!(matches!(mollify(&f, 0.03), Err(Error::Resolution(_))));
        assert!(matches!(mollify(&f, 1.0), Err(Error::DomainExhausted(_))));
        assert!(matches!(
            verify_mollification_rates(&f, &f, &[0.2, 0.1], 0, 1.0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn fft_path_matches_direct_sum() {
        let g = GridSpec::centered(2, 61, 1.0).unwrap();
        let f = GridField::sample(g, crate::field::FieldKind::Map, 3, |x, o| {
            o[0] = (3.0 * x[0]).sin() * x[1];
            o[1] = 0.0;
            o[2] = x[0] * x[0] - x[1];
        });
        let k = Kernel::new(2, g.spacing, 0.4);
        assert!(k.taps.len() > 100);
        let a = mollify_direct(&f, &k);
        let b = mollify_fft(&f, &k);
        assert_eq!(a.mask(), b.mask());
        assert!(a.sub(&b).sup_norm() < 1e-13);
        assert!(a.valid_count() > 0);
    }

    #[test]
    fn smooth_sizes() {
        assert_eq!(fft_size(97), 100);
        assert_eq!(fft_size(128), 128);
        assert_eq!(fft_size(2166), 2187);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [0.02, 0.01, 0.005];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((loglog_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
