//! Seeded random band-limited fields.
//!
//! A field is a finite sum Σ_j c_j k_j^{−γ} cos(k_j θ_j·x + φ_j) with
//! wavenumbers k_j spaced geometrically in [k_min, k_max], random unit
//! directions θ_j, phases φ_j and amplitudes c_j ∈ [½, 1]. The decay γ sets
//! which Hölder norms stay bounded as the band widens.

use crate::field::{FieldKind, GridField, GridSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Spectrum of one corpus member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub k_min: f64,
    pub k_max: f64,
    pub modes: usize,
    /// Amplitude decay exponent γ.
    pub decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Mode {
    k: [f64; 3],
    phase: f64,
    amp: f64,
}

/// A sampled band-limited function, evaluable anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct BandLimited {
    n: usize,
    modes: Vec<Vec<Mode>>,
}

impl BandLimited {
    /// Draw `components` independent sums in dimension n.
    pub fn random(n: usize, components: usize, spec: &Spectrum, rng: &mut ChaCha8Rng) -> Self {
        let modes = (0..components)
            .map(|_| {
                (0..spec.modes)
                    .map(|j| {
                        let t = if spec.modes > 1 { j as f64 / (spec.modes - 1) as f64 } else { 0.0 };
                        let k = spec.k_min * (spec.k_max / spec.k_min).powf(t);
                        let dir = unit_vector(n, rng);
                        let mut kv = [0.0; 3];
                        for i in 0..n {
                            kv[i] = k * dir[i];
                        }
                        let amp = rng.gen_range(0.5..1.0) * k.powf(-spec.decay);
                        Mode { k: kv, phase: rng.gen_range(0.0..2.0 * PI), amp }
                    })
                    .collect()
            })
            .collect();
        Self { n, modes }
    }

    /// Value of every component at x.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (o, modes) in out.iter_mut().zip(&self.modes) {
            *o = modes
                .iter()
                .map(|m| m.amp * ((0..self.n).map(|i| m.k[i] * x[i]).sum::<f64>() + m.phase).cos())
                .sum();
        }
    }

    /// Sample on a grid as a map field.
    pub fn sample(&self, grid: GridSpec) -> GridField {
        GridField::sample(grid, FieldKind::Map, self.modes.len(), |x, o| self.eval(&x[..self.n], o))
    }
}

fn unit_vector(n: usize, rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let mut v = [0.0; 3];
        for x in v.iter_mut().take(n) {
            *x = rng.gen_range(-1.0..1.0);
        }
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 1e-3 && r <= 1.0 {
            for x in v.iter_mut() {
                *x /= r;
            }
            return v;
        }
    }
}

/// Deterministic generator for corpus draws.
pub fn corpus_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
