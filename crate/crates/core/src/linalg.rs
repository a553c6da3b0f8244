//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Pfaffian of a skew-symmetric matrix by pivoted skew elimination.
///
/// Odd dimension gives 0; the empty matrix gives 1.
pub fn pfaffian(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    if n % 2 == 1 {
        return 0.0;
    }
    let mut m = a.clone();
    let mut pf = 1.0;
    let mut k = 0;
    while k + 1 < n {
        let mut kp = k + 1;
        let mut best = m[(k + 1, k)].abs();
        for i in (k + 2)..n {
            let v = m[(i, k)].abs();
            if v > best {
                best = v;
                kp = i;
            }
        }
        if kp != k + 1 {
            m.swap_rows(k + 1, kp);
            m.swap_columns(k + 1, kp);
            pf = -pf;
        }
        let piv = m[(k, k + 1)];
        if piv == 0.0 {
            return 0.0;
        }
        pf *= piv;
        if k + 2 < n {
            let tau: Vec<f64> = ((k + 2)..n).map(|j| m[(k, j)] / piv).collect();
            let col: Vec<f64> = ((k + 2)..n).map(|i| m[(i, k + 1)]).collect();
            for (ii, i) in ((k + 2)..n).enumerate() {
                for (jj, j) in ((k + 2)..n).enumerate() {
                    m[(i, j)] += tau[ii] * col[jj] - col[ii] * tau[jj];
                }
            }
        }
        k += 2;
    }
    pf
}

/// Largest singular value.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Smallest singular value of a square matrix.
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    m.singular_values()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Modified Gram–Schmidt with one reorthogonalisation pass. Columns whose
/// residual falls below `rel_tol` of their original norm are dropped.
pub fn orthonormalize(cols: &[DVector<f64>], rel_tol: f64) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(cols.len());
    for c in cols {
        let norm0 = c.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = c.clone();
        for _ in 0..2 {
            for q in &out {
                let d = q.dot(&v);
                v.axpy(-d, q, 1.0);
            }
        }
        let nv = v.norm();
        if nv > rel_tol * norm0 {
            out.push(v / nv);
        }
    }
    out
}

/// Orthonormal basis of the column span of `m`.
pub fn column_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = m.column_iter().map(|c| c.into_owned()).collect();
    let q = orthonormalize(&cols, rel_tol);
    from_columns(m.nrows(), &q)
}

/// Orthonormal basis of the orthogonal complement of the column span of `m`.
pub fn orthogonal_complement(m: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = m.nrows();
    let mut cols: Vec<DVector<f64>> = m.column_iter().map(|c| c.into_owned()).collect();
    let span = orthonormalize(&cols, 1e-10).len();
    for i in 0..dim {
        let mut e = DVector::zeros(dim);
        e[i] = 1.0;
        cols.push(e);
    }
    let q = orthonormalize(&cols, 1e-8);
    from_columns(dim, &q[span..])
}

pub fn from_columns(rows: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Least-squares solve through a truncated SVD (relative cutoff `rcond`).
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut x = DVector::zeros(a.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > rcond * smax && s > 0.0 {
            let coef = u.column(i).dot(b) / s;
            x.axpy(coef, &vt.row(i).transpose(), 1.0);
        }
    }
    x
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            dp = nf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfaffian_small_cases() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, -3.0, 0.0]);
        assert_eq!(pfaffian(&a), 3.0);
        // Pf of 4x4 = a12 a34 - a13 a24 + a14 a23
        let (a12, a13, a14, a23, a24, a34) = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, a12, a13, a14, -a12, 0.0, a23, a24, -a13, -a23, 0.0, a34, -a14, -a24, -a34,
                0.0,
            ],
        );
        let expected = a12 * a34 - a13 * a24 + a14 * a23;
        assert!((pfaffian(&m) - expected).abs() < 1e-12);
        assert_eq!(pfaffian(&DMatrix::zeros(0, 0)), 1.0);
    }

    #[test]
    fn pfaffian_squared_is_determinant() {
        let n = 6;
        let mut m = DMatrix::zeros(n, n);
        let mut s = 0.3_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                s = (s * 7.13 + 0.37).fract();
                m[(i, j)] = s - 0.5;
                m[(j, i)] = 0.5 - s;
            }
        }
        let pf = pfaffian(&m);
        assert!((pf * pf - m.determinant()).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        // exact through degree 9
        let i8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((i8 - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn complement_is_orthogonal() {
        let m = DMatrix::from_row_slice(4, 1, &[1.0, 1.0, 0.0, 0.0]);
        let c = orthogonal_complement(&m);
        assert_eq!(c.ncols(), 3);
        assert!(max_abs(&(m.transpose() * &c)) < 1e-14);
    }
}
