//! Test-side oracles shared by integration tests.

use cilab::decomp::DecompProblem;
use cilab::frame::DirectionSet;

/// b(A) − τ in upper-triangle order, assembled from the direction vectors.
pub fn defect(p: &DecompProblem, dirs: &DirectionSet, a: &[f64]) -> Vec<f64> {
    let n = dirs.n;
    let count = dirs.dirs.len();
    let mut out = Vec::new();
    let mut s = 0;
    for i in 0..n {
        for j in i..n {
            let mut v = -p.tau[s];
            for k in 0..count {
                let nk = dirs.dirs[k];
                v += a[k] * a[k] * nk[i] * nk[j] + a[k] * p.tau_k[k][s];
                for l in 0..count {
                    v += a[k] * a[l] * p.tau_kk[k][l][s];
                }
            }
            out.push(v);
            s += 1;
        }
    }
    out
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve the square linear system m·x = r by Gaussian elimination with partial pivoting.
fn solve(mut m: Vec<Vec<f64>>, mut r: Vec<f64>) -> Vec<f64> {
    let d = r.len();
    for c in 0..d {
        let piv = (c..d).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, piv);
        r.swap(c, piv);
        for row in c + 1..d {
            let f = m[row][c] / m[c][c];
            for col in c..d {
                m[row][col] -= f * m[c][col];
            }
            r[row] -= f * r[c];
        }
    }
    let mut x = vec![0.0; d];
    for c in (0..d).rev() {
        let s: f64 = (c + 1..d).map(|k| m[c][k] * x[k]).sum();
        x[c] = (r[c] - s) / m[c][c];
    }
    x
}

/// Brute-force search over A ∈ [lo, hi]^N with the given step, then Gauss–Newton polish
/// with a central-difference Jacobian. Only square problems (N = n(n+1)/2) are supported.
pub fn oracle_decompose(p: &DecompProblem, dirs: &DirectionSet, lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = dirs.dirs.len();
    let ticks = ((hi - lo) / step).round() as usize + 1;
    let mut best = (f64::INFINITY, vec![0.0; count]);
    let mut idx = vec![0usize; count];
    let mut a = vec![0.0; count];
    loop {
        for k in 0..count {
            a[k] = lo + idx[k] as f64 * step;
        }
        let r = norm2(&defect(p, dirs, &a));
        if r < best.0 {
            best = (r, a.clone());
        }
        let mut k = 0;
        while k < count {
            idx[k] += 1;
            if idx[k] < ticks {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == count {
            break;
        }
    }
    let mut a = best.1;
    let h = 1e-7;
    for _ in 0..50 {
        let r = defect(p, dirs, &a);
        if norm2(&r) < 1e-15 {
            break;
        }
        let mut jac = vec![vec![0.0; count]; r.len()];
        for k in 0..count {
            let (mut ap, mut am) = (a.clone(), a.clone());
            ap[k] += h;
            am[k] -= h;
            let (rp, rm) = (defect(p, dirs, &ap), defect(p, dirs, &am));
            for s in 0..r.len() {
                jac[s][k] = (rp[s] - rm[s]) / (2.0 * h);
            }
        }
        let dx = solve(jac, r.iter().map(|v| -v).collect());
        for k in 0..count {
            a[k] += dx[k];
        }
    }
    a
}
