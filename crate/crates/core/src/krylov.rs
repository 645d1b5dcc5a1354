//! Lanczos-based exponentials and lowest eigenpairs of Hermitian operators
//! given only as matrix-vector products.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};

use crate::error::{Error, Result};
use crate::tensor::{vdot, C64, ZERO};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovOptions {
    pub dim: usize,
    pub tol: f64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { dim: 30, tol: 1e-12 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KrylovInfo {
    pub iterations: usize,
    pub error_estimate: f64,
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [C64], a: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn tridiag_eigh(alpha: &[f64], beta: &[f64]) -> Result<(Array1<f64>, Array2<f64>)> {
    let k = alpha.len();
    let mut t = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        t[[i, i]] = alpha[i];
        if i + 1 < k {
            t[[i, i + 1]] = beta[i];
            t[[i + 1, i]] = beta[i];
        }
    }
    Ok(t.eigh(UPLO::Lower)?)
}

/// Orthogonalize `w` against `basis` twice (classical Gram-Schmidt).
fn reorthogonalize(w: &mut [C64], basis: &[Vec<C64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = vdot(q, w);
            axpy(w, -c, q);
        }
    }
}

/// `exp(z H) v` for Hermitian `H` (`z = -i dt` for real-time evolution).
///
/// Fails with [`Error::KrylovNotConverged`] if the error estimate relative
/// to `|v|` is still above `opts.tol` after `opts.dim` Lanczos vectors.
pub fn expm_krylov<F>(mut apply: F, v: &[C64], z: C64, opts: KrylovOptions) -> Result<(Vec<C64>, KrylovInfo)>
where
    F: FnMut(&[C64]) -> Vec<C64>,
{
    let beta0 = norm(v);
    if beta0 == 0.0 || z == ZERO {
        return Ok((v.to_vec(), KrylovInfo::default()));
    }
    let dim = opts.dim.max(2).min(v.len().max(1));
    let mut basis: Vec<Vec<C64>> = vec![v.iter().map(|x| x / beta0).collect()];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    loop {
        let j = basis.len() - 1;
        let mut w = apply(&basis[j]);
        let a = vdot(&basis[j], &w).re;
        alpha.push(a);
        reorthogonalize(&mut w, &basis);
        let b = norm(&w);
        let k = alpha.len();
        let (evals, evecs) = tridiag_eigh(&alpha, &beta)?;
        // c = exp(z T) e1
        let mut c = vec![ZERO; k];
        for m in 0..k {
            let f = (z * evals[m]).exp() * evecs[[0, m]];
            for i in 0..k {
                c[i] += f * evecs[[i, m]];
            }
        }
        let breakdown = b < 1e-13 * (1.0 + a.abs());
        let err = if breakdown { 0.0 } else { b * c[k - 1].norm() };
        if err <= opts.tol || breakdown || k >= dim {
            if err > opts.tol {
                return Err(Error::KrylovNotConverged { residual: err, tol: opts.tol, dim: k });
            }
            let mut out = vec![ZERO; v.len()];
            for (ci, q) in c.iter().zip(&basis) {
                axpy(&mut out, ci * beta0, q);
            }
            return Ok((out, KrylovInfo { iterations: k, error_estimate: err }));
        }
        beta.push(b);
        basis.push(w.into_iter().map(|x| x / b).collect());
    }
}

/// `exp(-i H t) v` split into as many equal substeps as needed for each
/// substep to converge within `opts.dim` vectors.
pub fn evolve_adaptive<F>(mut apply: F, v: &[C64], t: f64, opts: KrylovOptions) -> Result<Vec<C64>>
where
    F: FnMut(&[C64]) -> Vec<C64>,
{
    let mut pieces = 1usize;
    loop {
        let dt = t / pieces as f64;
        let sub = KrylovOptions { dim: opts.dim, tol: (opts.tol / pieces as f64).max(opts.tol.min(1e-12)) };
        let mut cur = v.to_vec();
        let mut ok = true;
        for _ in 0..pieces {
            match expm_krylov(&mut apply, &cur, C64::new(0.0, -dt), sub) {
                Ok((next, _)) => cur = next,
                Err(Error::KrylovNotConverged { .. }) => {
                    ok = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if ok {
            return Ok(cur);
        }
        if pieces >= 1 << 16 {
            return Err(Error::KrylovNotConverged { residual: f64::NAN, tol: opts.tol, dim: opts.dim });
        }
        pieces *= 2;
    }
}

/// Lowest eigenpair of a Hermitian operator by explicitly restarted Lanczos.
/// `project` is applied to every new vector (sector projection, deflation).
/// Returns `(eigenvalue, eigenvector, residual norm)`.
pub fn lowest_eigenpair<F, P>(
    mut apply: F,
    mut project: P,
    start: Vec<C64>,
    basis_size: usize,
    tol: f64,
    max_restarts: usize,
) -> Result<(f64, Vec<C64>, f64)>
where
    F: FnMut(&[C64]) -> Vec<C64>,
    P: FnMut(&mut Vec<C64>),
{
    let mut x = start;
    project(&mut x);
    let nx = norm(&x);
    if nx == 0.0 {
        return Err(Error::Sector("start vector vanishes after projection".into()));
    }
    x.iter_mut().for_each(|z| *z /= nx);
    let mut last_res = f64::INFINITY;
    for _ in 0..=max_restarts {
        let mut basis: Vec<Vec<C64>> = vec![x.clone()];
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        loop {
            let j = basis.len() - 1;
            let mut w = apply(&basis[j]);
            project(&mut w);
            alpha.push(vdot(&basis[j], &w).re);
            reorthogonalize(&mut w, &basis);
            let b = norm(&w);
            if basis.len() >= basis_size || b < 1e-12 {
                break;
            }
            beta.push(b);
            basis.push(w.into_iter().map(|z| z / b).collect());
        }
        let (_, evecs) = tridiag_eigh(&alpha, &beta)?;
        let mut y = vec![ZERO; x.len()];
        for (i, q) in basis.iter().enumerate() {
            axpy(&mut y, C64::from(evecs[[i, 0]]), q);
        }
        project(&mut y);
        let ny = norm(&y);
        y.iter_mut().for_each(|z| *z /= ny);
        let mut hy = apply(&y);
        project(&mut hy);
        let theta = vdot(&y, &hy).re;
        axpy(&mut hy, C64::from(-theta), &y);
        last_res = norm(&hy);
        x = y;
        if last_res <= tol {
            return Ok((theta, x, last_res));
        }
    }
    Err(Error::EigenNotConverged { residual: last_res, iterations: max_restarts })
}
