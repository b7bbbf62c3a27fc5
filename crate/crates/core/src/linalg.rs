//! Dense least-squares kernels: QR/SVD solves, Lawson–Hanson NNLS and least distance programming.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solution of an unconstrained least-squares problem.
#[derive(Debug, Clone)]
pub struct Lsq {
    pub x: DVector<f64>,
    /// True when the minimal-norm SVD route was needed.
    pub rank_deficient: bool,
}

const RANK_RTOL: f64 = 1e-12;

/// `argmin ||B x - y||`, minimal norm when `B` is rank deficient.
pub fn least_squares(b: &DMatrix<f64>, y: &DVector<f64>) -> Lsq {
    let (m, k) = b.shape();
    if k == 0 {
        return Lsq {
            x: DVector::zeros(0),
            rank_deficient: false,
        };
    }
    if k <= m {
        let qr = b.clone().qr();
        let r = qr.r();
        let rmax = (0..k).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
        let rmin = (0..k)
            .map(|j| r[(j, j)].abs())
            .fold(f64::INFINITY, f64::min);
        if rmax > 0.0 && rmin > RANK_RTOL * rmax * (m as f64).sqrt() {
            let qty = qr.q().transpose() * y;
            if let Some(x) = r.solve_upper_triangular(&qty) {
                if x.iter().all(|v| v.is_finite()) {
                    return Lsq {
                        x,
                        rank_deficient: false,
                    };
                }
            }
        }
    }
    Lsq {
        x: min_norm_solve(b, y),
        rank_deficient: true,
    }
}

/// Pseudo-inverse solve through the SVD.
pub fn min_norm_solve(b: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let (m, k) = b.shape();
    if k == 0 {
        return DVector::zeros(0);
    }
    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = smax * RANK_RTOL * (m.max(k) as f64);
    svd.solve(y, eps).unwrap_or_else(|_| DVector::zeros(k))
}

/// Orthonormal basis of the null space of `b` (columns), using the SVD.
pub fn null_space(b: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, k) = b.shape();
    if m == 0 {
        return DMatrix::identity(k, k);
    }
    // pad to a square matrix so the SVD returns the full right basis
    let mut padded = DMatrix::zeros(m.max(k), k);
    padded.view_mut((0, 0), (m, k)).copy_from(b);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = smax * RANK_RTOL * (m.max(k) as f64);
    let null_rows: Vec<usize> = (0..k).filter(|&j| svd.singular_values[j] <= tol).collect();
    let mut out = DMatrix::zeros(k, null_rows.len());
    for (c, &j) in null_rows.iter().enumerate() {
        out.set_column(c, &v_t.row(j).transpose());
    }
    out
}

/// Result of [`nnls`].
#[derive(Debug, Clone)]
pub struct Nnls {
    pub x: DVector<f64>,
    /// Negative gradient `B^T (y - B x)` at the solution.
    pub dual: DVector<f64>,
    pub passive: Vec<usize>,
    pub iterations: usize,
    pub rank_deficient: bool,
}

fn gather(b: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(b.nrows(), cols.len(), |i, k| b[(i, cols[k])])
}

/// Lawson–Hanson active-set solver for `min ||B x - y||` subject to `x >= 0`.
///
/// `warm` seeds the passive set; `tol` is the gradient threshold that stops
/// the outer loop.
pub fn nnls(b: &DMatrix<f64>, y: &DVector<f64>, warm: &[usize], tol: f64) -> Result<Nnls> {
    let k = b.ncols();
    let max_iter = 30 * k.max(1) + 30;
    let mut x = DVector::zeros(k);
    let mut in_p = vec![false; k];
    let mut rank_deficient = false;
    let mut iterations = 0;

    let mut passive: Vec<usize> = warm.iter().copied().filter(|&j| j < k).collect();
    passive.sort_unstable();
    passive.dedup();
    for &j in &passive {
        in_p[j] = true;
    }
    // warm start: shrink the seed until its least-squares solution is positive
    while !passive.is_empty() {
        iterations += 1;
        let ls = least_squares(&gather(b, &passive), y);
        rank_deficient |= ls.rank_deficient;
        if ls.x.iter().all(|v| *v > 0.0) {
            for (c, &j) in passive.iter().enumerate() {
                x[j] = ls.x[c];
            }
            break;
        }
        let keep: Vec<usize> = passive
            .iter()
            .enumerate()
            .filter(|(c, _)| ls.x[*c] > 0.0)
            .map(|(_, &j)| j)
            .collect();
        for &j in &passive {
            in_p[j] = keep.contains(&j);
        }
        passive = keep;
    }

    // columns whose admission was undone at once; cleared when x moves
    let mut banned = vec![false; k];
    loop {
        let added;
        {
            let dual = b.tr_mul(&(y - b * &x));
            let candidate = (0..k)
                .filter(|&j| !in_p[j] && !banned[j] && dual[j] > tol)
                .max_by(|&i, &j| dual[i].total_cmp(&dual[j]));
            match candidate {
                Some(j) => {
                    in_p[j] = true;
                    passive.push(j);
                    passive.sort_unstable();
                    added = j;
                }
                None => {
                    return Ok(Nnls {
                        x,
                        dual,
                        passive,
                        iterations,
                        rank_deficient,
                    })
                }
            }
        }

        let mut first = true;
        loop {
            iterations += 1;
            if iterations > max_iter {
                let dual = b.tr_mul(&(y - b * &x));
                let residual = (0..k).map(|j| dual[j].max(0.0)).fold(0.0, f64::max);
                return Err(Error::NotConverged {
                    iterations,
                    residual,
                });
            }
            let sub = gather(b, &passive);
            let ls = least_squares(&sub, y);
            rank_deficient |= ls.rank_deficient;
            let z = ls.x;
            if first {
                first = false;
                let pos = passive
                    .iter()
                    .position(|&j| j == added)
                    .expect("added column is passive");
                if z[pos] <= 0.0 {
                    // rounding made the gradient positive; drop the column
                    in_p[added] = false;
                    passive.remove(pos);
                    banned[added] = true;
                    break;
                }
                banned.fill(false);
            }
            if z.iter().all(|v| *v > 0.0) {
                x.fill(0.0);
                for (c, &j) in passive.iter().enumerate() {
                    x[j] = z[c];
                }
                break;
            }
            // step toward z until the first passive coordinate hits zero
            let mut alpha = f64::INFINITY;
            let mut blocking = passive[0];
            for (c, &j) in passive.iter().enumerate() {
                if z[c] <= 0.0 {
                    let denom = x[j] - z[c];
                    let a = if denom > 0.0 { x[j] / denom } else { 0.0 };
                    if a < alpha || alpha.is_infinite() {
                        alpha = a;
                        blocking = j;
                    }
                }
            }
            for (c, &j) in passive.iter().enumerate() {
                x[j] += alpha * (z[c] - x[j]);
            }
            x[blocking] = 0.0;
            passive.retain(|&j| x[j] > 0.0);
            for j in 0..k {
                if in_p[j] && x[j] <= 0.0 {
                    in_p[j] = false;
                    x[j] = 0.0;
                }
            }
            if passive.is_empty() {
                break;
            }
        }
    }
}

/// Least distance programming: `min ||z||` subject to `G z >= h`.
///
/// Returns `None` when the constraints are infeasible. The dual NNLS loses
/// precision when the solution is long, so `h` is rescaled until the
/// recovered point is feasible.
pub fn ldp(g: &DMatrix<f64>, h: &DVector<f64>) -> Result<Option<DVector<f64>>> {
    let (rows, n) = g.shape();
    if rows == 0 {
        return Ok(Some(DVector::zeros(n)));
    }
    let tol = 1e-10 * h.amax().max(1.0);
    let mut fallback = None;
    for scale in [1.0, 1e3, 1e6, 1e9] {
        if let Some(z) = ldp_scaled(g, &(h / scale))? {
            let z = z * scale;
            if (g * &z - h).min() >= -tol {
                return Ok(Some(z));
            }
            fallback.get_or_insert(z);
        }
    }
    Ok(fallback)
}

fn ldp_scaled(g: &DMatrix<f64>, h: &DVector<f64>) -> Result<Option<DVector<f64>>> {
    let (rows, n) = g.shape();
    let mut e = DMatrix::zeros(n + 1, rows);
    e.view_mut((0, 0), (n, rows)).copy_from(&g.transpose());
    for i in 0..rows {
        e[(n, i)] = h[i];
    }
    let mut f = DVector::zeros(n + 1);
    f[n] = 1.0;
    let scale = e.amax().max(1.0);
    let sol = nnls(&e, &f, &[], 1e-14 * scale)?;
    let r = &e * &sol.x - &f;
    if r.norm() <= 1e-12 || r[n].abs() <= 1e-12 {
        return Ok(None);
    }
    Ok(Some(DVector::from_fn(n, |j, _| -r[j] / r[n])))
}
