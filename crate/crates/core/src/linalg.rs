//! Small dense and symmetric linear algebra for per-point work (n ≤ 3, systems ≤ 6×6).

/// Largest supported size of a dense per-point system.
pub const MAX_DIM: usize = 6;

/// Number of stored entries of a symmetric n×n tensor.
pub fn sym_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Storage slot of entry (i, j) of a symmetric tensor in upper-triangle row-major order.
pub fn sym_idx(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Expand upper-triangle storage into a full 3×3 array (unused rows stay zero).
pub fn sym_to_full(n: usize, s: &[f64]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            m[i][j] = s[sym_idx(n, i, j)];
        }
    }
    m
}

/// Symmetric part of a full n×n matrix stored row-major, written in upper-triangle order.
pub fn sym_of_full(n: usize, full: &[f64], out: &mut [f64]) {
    for i in 0..n {
        for j in i..n {
            out[sym_idx(n, i, j)] = 0.5 * (full[i * n + j] + full[j * n + i]);
        }
    }
}

/// Frobenius norm of a symmetric tensor given in upper-triangle storage.
pub fn sym_frobenius(n: usize, s: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in i..n {
            let v = s[sym_idx(n, i, j)];
            acc += if i == j { v * v } else { 2.0 * v * v };
        }
    }
    acc.sqrt()
}

/// Trace of a symmetric tensor.
pub fn sym_trace(n: usize, s: &[f64]) -> f64 {
    (0..n).map(|i| s[sym_idx(n, i, i)]).sum()
}

/// Eigenvalues in ascending order (closed form for n ≤ 3).
pub fn sym_eigenvalues(n: usize, s: &[f64]) -> [f64; 3] {
    match n {
        1 => [s[0], 0.0, 0.0],
        2 => {
            let (a, b, c) = (s[0], s[1], s[2]);
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            [mean - rad, mean + rad, 0.0]
        }
        3 => {
            let m = sym_to_full(3, s);
            let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
            if p1 == 0.0 {
                let mut d = [m[0][0], m[1][1], m[2][2]];
                d.sort_by(|a, b| a.total_cmp(b));
                return d;
            }
            let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
            let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
            let p = (p2 / 6.0).sqrt();
            let mut b = m;
            for (i, row) in b.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = (m[i][j] - if i == j { q } else { 0.0 }) / p;
                }
            }
            let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
                - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
                + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
            let r = (0.5 * det).clamp(-1.0, 1.0);
            let phi = r.acos() / 3.0;
            let e_max = q + 2.0 * p * phi.cos();
            let e_min = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
            let e_mid = 3.0 * q - e_max - e_min;
            [e_min, e_mid, e_max]
        }
        _ => panic!("sym_eigenvalues supports n ≤ 3, got {n}"),
    }
}

/// Smallest eigenvalue of a symmetric tensor.
pub fn sym_min_eig(n: usize, s: &[f64]) -> f64 {
    sym_eigenvalues(n, s)[0]
}

/// Inverse of a symmetric tensor in upper-triangle storage; `None` when singular.
pub fn sym_inverse(n: usize, s: &[f64]) -> Option<[f64; 6]> {
    let mut out = [0.0; 6];
    match n {
        1 => {
            if s[0] == 0.0 {
                return None;
            }
            out[0] = 1.0 / s[0];
        }
        2 => {
            let det = s[0] * s[2] - s[1] * s[1];
            if det == 0.0 {
                return None;
            }
            out[0] = s[2] / det;
            out[1] = -s[1] / det;
            out[2] = s[0] / det;
        }
        3 => {
            let m = sym_to_full(3, s);
            let c00 = m[1][1] * m[2][2] - m[1][2] * m[1][2];
            let c01 = m[0][2] * m[1][2] - m[0][1] * m[2][2];
            let c02 = m[0][1] * m[1][2] - m[0][2] * m[1][1];
            let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
            if det == 0.0 {
                return None;
            }
            out[0] = c00 / det;
            out[1] = c01 / det;
            out[2] = c02 / det;
            out[3] = (m[0][0] * m[2][2] - m[0][2] * m[0][2]) / det;
            out[4] = (m[0][2] * m[0][1] - m[0][0] * m[1][2]) / det;
            out[5] = (m[0][0] * m[1][1] - m[0][1] * m[0][1]) / det;
        }
        _ => return None,
    }
    Some(out)
}

/// Dense d×d matrix with fixed capacity.
pub type Dense = [[f64; MAX_DIM]; MAX_DIM];

/// LU factorization with partial pivoting, in place. Returns the row permutation or `None` if singular.
pub fn lu_factor(a: &mut Dense, d: usize) -> Option<[usize; MAX_DIM]> {
    let mut perm = [0usize; MAX_DIM];
    for (i, p) in perm.iter_mut().enumerate() {
        *p = i;
    }
    for col in 0..d {
        let mut piv = col;
        for row in col + 1..d {
            if a[row][col].abs() > a[piv][col].abs() {
                piv = row;
            }
        }
        if a[piv][col] == 0.0 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        perm.swap(col, piv);
        for row in col + 1..d {
            let f = a[row][col] / a[col][col];
            a[row][col] = f;
            for k in col + 1..d {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    Some(perm)
}

/// Solve with an LU factorization produced by [`lu_factor`].
pub fn lu_solve(lu: &Dense, perm: &[usize; MAX_DIM], d: usize, b: &[f64]) -> [f64; MAX_DIM] {
    let mut x = [0.0; MAX_DIM];
    for i in 0..d {
        let mut v = b[perm[i]];
        for k in 0..i {
            v -= lu[i][k] * x[k];
        }
        x[i] = v;
    }
    for i in (0..d).rev() {
        let mut v = x[i];
        for k in i + 1..d {
            v -= lu[i][k] * x[k];
        }
        x[i] = v / lu[i][i];
    }
    x
}

/// Solve `a x = b`; returns the solution and the 1-norm condition number.
pub fn solve_with_condition(a: &Dense, d: usize, b: &[f64]) -> Option<([f64; MAX_DIM], f64)> {
    let mut lu = *a;
    let perm = lu_factor(&mut lu, d)?;
    let x = lu_solve(&lu, &perm, d, b);
    let norm1 = |m: &Dense| (0..d).map(|j| (0..d).map(|i| m[i][j].abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut inv: Dense = [[0.0; MAX_DIM]; MAX_DIM];
    for j in 0..d {
        let mut e = [0.0; MAX_DIM];
        e[j] = 1.0;
        let col = lu_solve(&lu, &perm, d, &e);
        for i in 0..d {
            inv[i][j] = col[i];
        }
    }
    Some((x, norm1(a) * norm1(&inv)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_index_layout() {
        assert_eq!((sym_idx(2, 0, 0), sym_idx(2, 0, 1), sym_idx(2, 1, 0), sym_idx(2, 1, 1)), (0, 1, 1, 2));
        let got: Vec<usize> = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
            .iter()
            .map(|&(i, j)| sym_idx(3, i, j))
            .collect();
        assert_eq!(got, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn eigenvalues_closed_form() {
        let e = sym_eigenvalues(2, &[0.25, 0.0, 4.0]);
        assert_eq!(e[0], 0.25);
        // [[2,1,0],[1,2,0],[0,0,5]] has eigenvalues 1, 3, 5
        let e = sym_eigenvalues(3, &[2.0, 1.0, 0.0, 2.0, 0.0, 5.0]);
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 3.0).abs() < 1e-12 && (e[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_round_trip() {
        let s = [2.0, 0.3, -0.1, 1.5, 0.2, 3.0];
        let inv = sym_inverse(3, &s).unwrap();
        let a = sym_to_full(3, &s);
        let b = sym_to_full(3, &inv);
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i][k] * b[k][j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dense_solve() {
        let mut a: Dense = [[0.0; MAX_DIM]; MAX_DIM];
        a[0][0] = 0.0;
        a[0][1] = 2.0;
        a[1][0] = 3.0;
        a[1][1] = 1.0;
        let (x, cond) = solve_with_condition(&a, 2, &[4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!(cond > 1.0);
    }
}
