//! Low end of the spectrum of a symmetric operator.
//!
//! Lanczos iteration with full reorthogonalization runs on the shifted
//! operator `sigma*I - M`, where `sigma` is a Gershgorin bound on `M`, so the
//! smallest eigenvalues of `M` become the dominant ones. Converged Ritz pairs
//! are locked and later runs start from a random vector orthogonal to
//! everything locked; this recovers the extra copies of repeated eigenvalues
//! that a single Krylov space cannot see. The solve ends once a fresh run's
//! lowest converged value is no smaller than the `count`-th locked one.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A real symmetric linear operator.
pub trait SymmetricOperator: Sync {
    fn order(&self) -> usize;

    /// `y = M x`
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Upper bound on the spectral radius.
    fn norm_bound(&self) -> f64;
}

/// Dense row-major symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSymmetric {
    n: usize,
    data: Vec<f64>,
}

impl DenseSymmetric {
    /// Checks symmetry within `1e-12` relative to the largest entry.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::arg(format!("expected {} entries, got {}", n * n, data.len())));
        }
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in (i + 1)..n {
                if (data[i * n + j] - data[j * n + i]).abs() > 1e-12 * scale {
                    return Err(Error::arg(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(DenseSymmetric { n, data })
    }


    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, &d) in diag.iter().enumerate() {
            data[i * n + i] = d;
        }
        DenseSymmetric { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl SymmetricOperator for DenseSymmetric {
    fn order(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut()
            .zip(self.data.par_chunks(self.n.max(1)))
            .for_each(|(yi, row)| *yi = dot(row, x));
    }

    fn norm_bound(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct EigenOptions {
    /// Residual tolerance relative to the operator norm bound.
    pub tol: f64,
    /// Cap on the total number of Lanczos steps (operator applications).
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-8,
            max_iter: 20_000,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPairs {
    /// Ascending.
    pub values: Vec<f64>,
    /// Unit-norm eigenvectors, `vectors[k]` belongs to `values[k]`.
    pub vectors: Vec<Vec<f64>>,
    /// Explicit residual norms `|M v - lambda v|`.
    pub residuals: Vec<f64>,
    /// Eigenvalues at or below the null tolerance that were skipped.
    pub skipped: usize,
}

/// The `count` smallest eigenpairs of `op` whose eigenvalues exceed
/// `null_tol`.
pub fn smallest_eigenpairs<O: SymmetricOperator + ?Sized>(
    op: &O,
    count: usize,
    null_tol: f64,
    opts: &EigenOptions,
) -> Result<EigenPairs> {
    smallest_eigenpairs_deflated(op, count, null_tol, &[], opts)
}

/// As [`smallest_eigenpairs`], with a known orthonormal basis of the null
/// space supplied up front (for a Laplacian: normalized component
/// indicators).
pub fn smallest_eigenpairs_deflated<O: SymmetricOperator + ?Sized>(
    op: &O,
    count: usize,
    null_tol: f64,
    known_null: &[Vec<f64>],
    opts: &EigenOptions,
) -> Result<EigenPairs> {
    let n = op.order();
    if count == 0 {
        return Err(Error::arg("eigenpair count must be positive"));
    }
    if count + known_null.len() > n {
        return Err(Error::arg(format!(
            "requested {count} eigenpairs plus {} null vectors from an operator of order {n}",
            known_null.len()
        )));
    }
    let norm = op.norm_bound();
    let sigma = if norm > 0.0 { norm } else { 1.0 };
    let tol_abs = opts.tol * sigma;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut locked: Vec<Locked> = known_null
        .iter()
        .map(|v| Locked {
            value: 0.0,
            vector: v.clone(),
        })
        .collect();
    let mut budget = opts.max_iter;

    loop {
        let mut above: Vec<f64> = locked.iter().map(|l| l.value).filter(|&v| v > null_tol).collect();
        above.sort_by(f64::total_cmp);
        let boundary = above.get(count - 1).copied();
        let want = if boundary.is_some() { 1 } else { count - above.len() };

        if locked.len() == n {
            if boundary.is_some() {
                break;
            }
            return Err(Error::arg(format!(
                "only {} eigenvalues above the null tolerance exist, {count} requested",
                above.len()
            )));
        }

        let found = lanczos_run(op, sigma, &locked, want, tol_abs, &mut budget, &mut rng).map_err(|e| match e {
            Error::Solver { residual, tolerance, .. } => Error::Solver {
                iterations: opts.max_iter,
                residual,
                tolerance,
            },
            other => other,
        })?;
        if let (Some(b), Some(first)) = (boundary, found.first()) {
            if first.value >= b - tol_abs {
                break;
            }
        }
        locked.extend(found);
    }

    locked.sort_by(|a, b| a.value.total_cmp(&b.value));
    let skipped = locked.iter().take_while(|l| l.value <= null_tol).count();
    let mut out = EigenPairs {
        values: Vec::with_capacity(count),
        vectors: Vec::with_capacity(count),
        residuals: Vec::with_capacity(count),
        skipped,
    };
    let mut mv = vec![0.0; n];
    for l in locked.into_iter().skip(skipped).take(count) {
        op.apply(&l.vector, &mut mv);
        let res = mv
            .iter()
            .zip(&l.vector)
            .map(|(a, b)| (a - l.value * b).powi(2))
            .sum::<f64>()
            .sqrt();
        let mut v = l.vector;
        orient(&mut v);
        out.values.push(l.value);
        out.vectors.push(v);
        out.residuals.push(res);
    }
    Ok(out)
}

struct Locked {
    value: f64,
    vector: Vec<f64>,
}

/// Flips `v` so its largest-magnitude entry is positive.
fn orient(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best + 1e-12 {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// One Lanczos run orthogonal to `locked`. Returns the converged Ritz pairs
/// at the low end of the spectrum of `M` (ascending), at least `want` of them
/// unless the available space is smaller.
fn lanczos_run<O: SymmetricOperator + ?Sized>(
    op: &O,
    sigma: f64,
    locked: &[Locked],
    want: usize,
    tol_abs: f64,
    budget: &mut usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Locked>> {
    let n = op.order();
    let avail = n - locked.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];

    let mut next_check = (want + 20).min(avail).max(1);
    let mut current = fresh_start(n, locked, &basis, rng).ok_or_else(|| Error::arg("no room for a start vector"))?;
    let mut last_residual = f64::INFINITY;

    loop {
        if *budget == 0 {
            return Err(Error::Solver {
                iterations: 0,
                residual: last_residual,
                tolerance: tol_abs,
            });
        }
        *budget -= 1;

        op.apply(&current, &mut w);
        for (wi, ci) in w.iter_mut().zip(&current) {
            *wi = sigma * ci - *wi;
        }
        let a = dot(&w, &current);
        axpy(-a, &current, &mut w);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            axpy(-b, prev, &mut w);
        }
        basis.push(current);
        alpha.push(a);
        // Two passes of classical Gram-Schmidt keep the basis orthogonal to
        // working precision.
        for _ in 0..2 {
            for l in locked {
                let c = dot(&w, &l.vector);
                axpy(-c, &l.vector, &mut w);
            }
            for v in &basis {
                let c = dot(&w, v);
                axpy(-c, v, &mut w);
            }
        }
        let mut b = norm2(&w);
        let m = basis.len();

        let exhausted = m == avail;
        if !exhausted && b <= 1e-10 * sigma {
            // Invariant subspace: continue from a new direction.
            b = 0.0;
        }

        if m >= next_check || exhausted || b == 0.0 && m >= want {
            let (theta, vecs) = tridiagonal_eigen(&alpha, &beta);
            // theta ascending; the low end of M is the high end of theta.
            let mut found = Vec::new();
            for k in (0..m).rev() {
                let resid = (b * vecs[k * m + m - 1]).abs();
                if resid > tol_abs && !exhausted {
                    last_residual = resid;
                    break;
                }
                found.push(k);
            }
            if found.len() >= want.min(avail) || exhausted {
                return Ok(found
                    .into_iter()
                    .map(|k| {
                        let s = &vecs[k * m..(k + 1) * m];
                        let mut v = vec![0.0; n];
                        for (coef, q) in s.iter().zip(&basis) {
                            axpy(*coef, q, &mut v);
                        }
                        let nv = norm2(&v);
                        v.iter_mut().for_each(|x| *x /= nv);
                        Locked {
                            value: sigma - theta[k],
                            vector: v,
                        }
                    })
                    .collect());
            }
            next_check = (m + (m / 4).max(10)).min(avail);
        }

        beta.push(b);
        if b == 0.0 {
            current = match fresh_start(n, locked, &basis, rng) {
                Some(v) => v,
                None => unreachable!("basis smaller than available space"),
            };
        } else {
            current = w.iter().map(|x| x / b).collect();
        }
    }
}

fn fresh_start(n: usize, locked: &[Locked], basis: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    for _ in 0..10 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        for _ in 0..2 {
            for l in locked {
                let c = dot(&v, &l.vector);
                axpy(-c, &l.vector, &mut v);
            }
            for q in basis {
                let c = dot(&v, q);
                axpy(-c, q, &mut v);
            }
        }
        let nv = norm2(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

/// Eigen-decomposition of the symmetric tridiagonal matrix with diagonal
/// `diag` and off-diagonal `off` (`off.len() == diag.len() - 1`) by implicit
/// QL iteration. Returns ascending eigenvalues and eigenvectors stored as
/// rows: `vecs[k * m + i]` is component `i` of eigenvector `k`.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; m];
    e[..m.saturating_sub(1)].copy_from_slice(&off[..m.saturating_sub(1)]);
    let mut vt = vec![0.0; m * m];
    for i in 0..m {
        vt[i * m + i] = 1.0;
    }

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..m {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut mm = l;
        while mm < m {
            if e[mm].abs() <= eps * tst1 {
                break;
            }
            mm += 1;
        }
        if mm > l {
            let mut guard = 0;
            loop {
                guard += 1;
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[mm];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..mm).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = vt.split_at_mut((i + 1) * m);
                    let row_i = &mut lo[i * m..];
                    let row_i1 = &mut hi[..m];
                    for k in 0..m {
                        let hk = row_i1[k];
                        row_i1[k] = s * row_i[k] + c * hk;
                        row_i[k] = c * row_i[k] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 || guard > 60 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&k| d[k]).collect();
    let mut vecs = vec![0.0; m * m];
    for (dst, &src) in order.iter().enumerate() {
        vecs[dst * m..(dst + 1) * m].copy_from_slice(&vt[src * m..(src + 1) * m]);
    }
    (values, vecs)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn path_laplacian(n: usize) -> DenseSymmetric {
        let mut data = vec![0.0; n * n];
        for i in 0..n - 1 {
            data[i * n + i + 1] = -1.0;
            data[(i + 1) * n + i] = -1.0;
            data[i * n + i] += 1.0;
            data[(i + 1) * n + i + 1] += 1.0;
        }
        DenseSymmetric::new(n, data).unwrap()
    }

    #[test]
    fn tridiagonal_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in [1usize, 2, 5, 17, 40] {
            let diag: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let off: Vec<f64> = (0..m.saturating_sub(1)).map(|_| rng.random::<f64>() - 0.5).collect();
            let (vals, vecs) = tridiagonal_eigen(&diag, &off);
            let mut dense = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                dense[(i, i)] = diag[i];
                if i + 1 < m {
                    dense[(i, i + 1)] = off[i];
                    dense[(i + 1, i)] = off[i];
                }
            }
            let mut want: Vec<f64> = dense.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            want.sort_by(f64::total_cmp);
            for (a, b) in vals.iter().zip(&want) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
            for k in 0..m {
                let v = nalgebra::DVector::from_column_slice(&vecs[k * m..(k + 1) * m]);
                let r = &dense * &v - &v * vals[k];
                assert!(r.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn path_p4_spectrum() {
        let l = path_laplacian(4);
        let res = smallest_eigenpairs(&l, 2, 1e-9, &EigenOptions::default()).unwrap();
        assert_eq!(res.skipped, 1);
        assert!((res.values[0] - (2.0 - 2.0 * (PI / 4.0).cos())).abs() < 1e-9);
        assert!((res.values[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn diagonal_skips_null() {
        let m = DenseSymmetric::from_diagonal(&[0.0, 1.0, 2.0, 3.0]);
        let res = smallest_eigenpairs(&m, 2, 1e-9, &EigenOptions::default()).unwrap();
        assert!((res.values[0] - 1.0).abs() < 1e-10);
        assert!((res.values[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn repeated_eigenvalues_are_all_found() {
        let m = DenseSymmetric::from_diagonal(&[0.0, 1.0, 1.0, 1.0, 2.0, 5.0]);
        let res = smallest_eigenpairs(&m, 4, 1e-9, &EigenOptions::default()).unwrap();
        let want = [1.0, 1.0, 1.0, 2.0];
        for (a, b) in res.values.iter().zip(want) {
            assert!((a - b).abs() < 1e-9, "{:?}", res.values);
        }
    }

    #[test]
    fn two_component_null_space() {
        // Laplacian of two disjoint P3 paths.
        let n = 6;
        let mut data = vec![0.0; n * n];
        for (u, w) in [(0, 1), (1, 2), (3, 4), (4, 5)] {
            data[u * n + w] = -1.0;
            data[w * n + u] = -1.0;
            data[u * n + u] += 1.0;
            data[w * n + w] += 1.0;
        }
        let l = DenseSymmetric::new(n, data).unwrap();
        let res = smallest_eigenpairs(&l, 2, 1e-9, &EigenOptions::default()).unwrap();
        assert_eq!(res.skipped, 2);
        assert!((res.values[0] - 1.0).abs() < 1e-9);
        assert!((res.values[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn path_spectra_larger() {
        for n in [16usize, 64] {
            let l = path_laplacian(n);
            let res = smallest_eigenpairs(&l, 5, 1e-9, &EigenOptions::default()).unwrap();
            for (k, v) in res.values.iter().enumerate() {
                let want = 2.0 - 2.0 * (PI * (k + 1) as f64 / n as f64).cos();
                assert!((v - want).abs() < 1e-6, "n={n} k={k}: {v} vs {want}");
            }
        }
    }

    #[test]
    fn orthonormal_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 40;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rng.random::<f64>();
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        let m = DenseSymmetric::new(n, data).unwrap();
        let res = smallest_eigenpairs(&m, 6, f64::NEG_INFINITY, &EigenOptions::default()).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                let d = dot(&res.vectors[a], &res.vectors[b]);
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-6);
            }
            assert!(res.residuals[a] <= 1e-8 * m.norm_bound() * 10.0);
        }
    }

    #[test]
    fn rejects_asymmetric_and_oversized_requests() {
        assert!(DenseSymmetric::new(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        let m = DenseSymmetric::from_diagonal(&[0.0, 1.0]);
        assert!(smallest_eigenpairs(&m, 2, 1e-9, &EigenOptions::default()).is_err());
    }
}
