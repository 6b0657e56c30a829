//! Complex dense linear algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const LN2: f64 = std::f64::consts::LN_2;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `(A + Aᴴ)/2`.
pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues descending.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = hermitize(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    (values, vectors)
}

/// Singular value decomposition with singular values sorted descending.
///
/// Returns `(U, σ, V)` with `A = U diag(σ) Vᴴ`; `V` is `n×n` (full), `U` is
/// `m×min(m,n)`.
pub fn svd_sorted(a: &CMatrix) -> (CMatrix, Vec<f64>, CMatrix) {
    let (m, n) = a.shape();
    // pad with zero rows so that V comes out square
    let rows = m.max(n);
    let mut padded = CMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m, n)).copy_from(a);
    let svd = padded.svd(true, true);
    let u_full = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let v = CMatrix::from_fn(n, k, |r, col| v_t[(order[col], r)].conj());
    let keep = m.min(n);
    let u = CMatrix::from_fn(m, keep, |r, col| u_full[(r, order[col])]);
    (u, sigma[..k].to_vec(), v)
}

/// Orthonormal basis (columns) of the null space of `a`; singular values
/// below `rel_tol·σ_max` count as zero. An empty `a` yields the identity.
pub fn null_space(a: &CMatrix, n: usize, rel_tol: f64) -> CMatrix {
    if a.nrows() == 0 {
        return CMatrix::identity(n, n);
    }
    let (_, sigma, v) = svd_sorted(a);
    let smax = sigma.first().copied().unwrap_or(0.0);
    let rank = sigma.iter().filter(|&&s| s > rel_tol * smax && s > 0.0).count();
    v.columns(rank, n - rank).into_owned()
}

pub fn inverse(a: &CMatrix) -> Option<CMatrix> {
    a.clone().try_inverse()
}

/// 2-norm condition number.
pub fn condition_number(a: &CMatrix) -> f64 {
    let (_, sigma, _) = svd_sorted(a);
    let smin = sigma.last().copied().unwrap_or(0.0);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        sigma[0] / smin
    }
}

/// `log2 det(A)` for Hermitian positive-definite `A`.
pub fn log2_det_hpd(a: &CMatrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    match hermitize(a).cholesky() {
        Some(ch) => {
            let l = ch.l_dirty();
            2.0 * (0..a.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>() / LN2
        }
        None => {
            let (vals, _) = hermitian_eigen(a);
            vals.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).sum::<f64>() / LN2
        }
    }
}

/// Real part of `tr(A B)`.
pub fn trace_product_re(a: &CMatrix, b: &CMatrix) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

pub fn trace_re(a: &CMatrix) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)].re).sum()
}

/// Euclidean projection of `x` onto `{y ≥ 0, Σy ≤ cap}`.
pub fn project_capped_simplex(x: &[f64], cap: f64) -> Vec<f64> {
    let clipped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= cap {
        return clipped;
    }
    project_simplex(x, cap)
}

/// Euclidean projection of `x` onto `{y ≥ 0, Σy = total}`.
pub fn project_simplex(x: &[f64], total: f64) -> Vec<f64> {
    // y = max(x - θ, 0) with θ chosen so that Σy = total
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - total) / (i + 1) as f64;
        if *v - candidate > 0.0 {
            theta = candidate;
        }
    }
    x.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// Projects a family of Hermitian matrices onto
/// `{K_i ⪰ 0, Σ tr K_i ≤ cap}` in the Frobenius norm.
pub fn project_psd_trace(mats: &[CMatrix], cap: f64) -> Vec<CMatrix> {
    let decomps: Vec<(Vec<f64>, CMatrix)> = mats.iter().map(hermitian_eigen).collect();
    let all: Vec<f64> = decomps.iter().flat_map(|(v, _)| v.iter().copied()).collect();
    let projected = project_capped_simplex(&all, cap);
    let mut offset = 0;
    decomps
        .into_iter()
        .map(|(vals, vecs)| {
            let n = vals.len();
            let lam = &projected[offset..offset + n];
            offset += n;
            let mut out = CMatrix::zeros(n, n);
            for (i, &l) in lam.iter().enumerate() {
                if l > 0.0 {
                    let col = vecs.column(i);
                    out += (col * col.adjoint()).scale(l);
                }
            }
            hermitize(&out)
        })
        .collect()
}

/// Outer product `x yᴴ`.
pub fn outer(x: &CVector, y: &CVector) -> CMatrix {
    x * y.adjoint()
}
