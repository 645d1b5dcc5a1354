//! Small dense-tensor toolkit for third-order node tensors.
//!
//! Every node tensor has shape `(d0, d1, d2)`: legs 0 and 1 point down the
//! tree (children or physical sites), leg 2 points up. Most operations reduce
//! to a matricization along one leg followed by a BLAS matrix product.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use ndarray::ShapeBuilder;
use ndarray_linalg::{Eigh, QR, UPLO};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

fn perm(leg: usize) -> [usize; 3] {
    match leg {
        0 => [0, 1, 2],
        1 => [1, 0, 2],
        2 => [2, 0, 1],
        _ => panic!("third-order tensors have legs 0..3, got {leg}"),
    }
}

fn inv_perm(leg: usize) -> [usize; 3] {
    match leg {
        0 => [0, 1, 2],
        1 => [1, 0, 2],
        2 => [1, 2, 0],
        _ => panic!("third-order tensors have legs 0..3, got {leg}"),
    }
}

/// Matricize along `leg`: rows index the leg, columns the remaining two legs
/// in their original order.
pub fn mat(t: ArrayView3<C64>, leg: usize) -> Array2<C64> {
    let d = t.dim();
    let dims = [d.0, d.1, d.2];
    let rest: usize = dims.iter().product::<usize>() / dims[leg].max(1);
    let p = t.permuted_axes(perm(leg));
    let owned = p.as_standard_layout().into_owned();
    owned
        .into_shape_with_order((dims[leg], rest))
        .expect("standard layout reshape")
}

/// Inverse of [`mat`]. `dims` are the dims of the resulting tensor, with
/// `dims[leg]` equal to the number of rows of `m`.
pub fn unmat(m: Array2<C64>, leg: usize, dims: [usize; 3]) -> Array3<C64> {
    let p = perm(leg);
    let shaped = m
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((dims[p[0]], dims[p[1]], dims[p[2]]))
        .expect("standard layout reshape");
    shaped
        .permuted_axes(inv_perm(leg))
        .as_standard_layout()
        .into_owned()
}

pub fn dims3(t: &Array3<C64>) -> [usize; 3] {
    let d = t.dim();
    [d.0, d.1, d.2]
}

/// `t'[.., a', ..] = sum_a m[a', a] t[.., a, ..]` on the given leg.
pub fn apply_leg(t: &Array3<C64>, leg: usize, m: ArrayView2<C64>) -> Array3<C64> {
    let mut dims = dims3(t);
    debug_assert_eq!(m.ncols(), dims[leg]);
    if leg == 0 {
        let (d0, d1, d2) = t.dim();
        let ts = t.as_standard_layout();
        let tm = ts.view().into_shape_with_order((d0, d1 * d2)).expect("contiguous");
        let out = m.dot(&tm);
        return out
            .into_shape_with_order((m.nrows(), d1, d2))
            .expect("contiguous");
    }
    if leg == 2 {
        let (d0, d1, d2) = t.dim();
        let ts = t.as_standard_layout();
        let tm = ts.view().into_shape_with_order((d0 * d1, d2)).expect("contiguous");
        let out = tm.dot(&m.t());
        return out
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((d0, d1, m.nrows()))
            .expect("contiguous");
    }
    let tm = mat(t.view(), leg);
    dims[leg] = m.nrows();
    unmat(m.dot(&tm), leg, dims)
}

/// `out[a', a] = sum_{other legs} conj(bra[.., a', ..]) ket[.., a, ..]`.
pub fn project_out(bra: &Array3<C64>, ket: &Array3<C64>, leg: usize) -> Array2<C64> {
    if leg == 2 {
        let (b0, b1, b2) = bra.dim();
        let (k0, k1, k2) = ket.dim();
        let bs = bra.as_standard_layout();
        let ks = ket.as_standard_layout();
        let bm = bs.view().into_shape_with_order((b0 * b1, b2)).expect("contiguous");
        let km = ks.view().into_shape_with_order((k0 * k1, k2)).expect("contiguous");
        let bc = bm.mapv(|z| z.conj());
        return bc.t().dot(&km);
    }
    let bm = mat(bra.view(), leg).mapv(|z| z.conj());
    let km = mat(ket.view(), leg);
    bm.dot(&km.t())
}

/// QR decomposition isolating `leg`: returns `(q, r)` with `q` isometric on
/// the other two legs and `t = q ×_leg r`, i.e.
/// `t[.., b, ..] = sum_a q[.., a, ..] r[a, b]`.
pub fn qr_leg(t: &Array3<C64>, leg: usize) -> Result<(Array3<C64>, Array2<C64>)> {
    let mut dims = dims3(t);
    let m = mat(t.view(), leg).reversed_axes(); // rest x d_leg
    let (q, r) = m.qr()?;
    dims[leg] = q.ncols();
    let q_t = q.reversed_axes();
    Ok((unmat(q_t, leg, dims), r))
}

/// Squared Frobenius norm.
pub fn norm_sqr(t: &Array3<C64>) -> f64 {
    t.iter().map(|z| z.norm_sqr()).sum()
}

pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn random_tensor<R: Rng + ?Sized>(rng: &mut R, dims: [usize; 3], scale: f64) -> Array3<C64> {
    Array3::from_shape_simple_fn((dims[0], dims[1], dims[2]), || {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * scale, im * scale)
    })
}

/// Embed `t` into a zero tensor of larger `dims`.
pub fn embed(t: &Array3<C64>, dims: [usize; 3]) -> Array3<C64> {
    let mut out = Array3::zeros((dims[0], dims[1], dims[2]));
    let (a, b, c) = t.dim();
    out.slice_mut(ndarray::s![..a, ..b, ..c]).assign(t);
    out
}

/// Maximum deviation of `m` from the identity.
pub fn identity_defect(m: &Array2<C64>) -> f64 {
    let mut worst: f64 = 0.0;
    for ((i, j), z) in m.indexed_iter() {
        let target = if i == j { ONE } else { ZERO };
        worst = worst.max((z - target).norm());
    }
    worst
}

pub fn eye(n: usize) -> Array2<C64> {
    Array2::from_diag_elem(n, ONE)
}

pub fn dagger(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending and
/// eigenvectors in columns. The input is copied to column-major order first;
/// LAPACK on a row-major complex matrix sees its conjugate.
pub fn eigh_hermitian(a: &Array2<C64>) -> Result<(ndarray::Array1<f64>, Array2<C64>)> {
    let (n, m) = a.dim();
    let mut f = Array2::<C64>::zeros((n, m).f());
    f.assign(a);
    Ok(f.eigh(UPLO::Lower)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_apply(t: &Array3<C64>, leg: usize, m: &Array2<C64>) -> Array3<C64> {
        let mut dims = dims3(t);
        dims[leg] = m.nrows();
        let mut out = Array3::zeros((dims[0], dims[1], dims[2]));
        for ((i, j, k), v) in out.indexed_iter_mut() {
            let idx = [i, j, k];
            let mut acc = ZERO;
            for a in 0..m.ncols() {
                let mut src = idx;
                src[leg] = a;
                acc += m[[idx[leg], a]] * t[[src[0], src[1], src[2]]];
            }
            *v = acc;
        }
        out
    }

    #[test]
    fn mat_unmat_roundtrip_all_legs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_tensor(&mut rng, [2, 3, 4], 1.0);
        for leg in 0..3 {
            let m = mat(t.view(), leg);
            assert_eq!(m.nrows(), dims3(&t)[leg]);
            assert_eq!(unmat(m, leg, dims3(&t)), t);
        }
    }

    #[test]
    fn apply_leg_matches_index_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_tensor(&mut rng, [3, 4, 5], 1.0);
        for leg in 0..3 {
            let d = dims3(&t)[leg];
            let m = Array2::from_shape_fn((d + 1, d), |(i, j)| C64::new(i as f64 - j as f64, 0.5 * j as f64));
            let fast = apply_leg(&t, leg, m.view());
            let slow = naive_apply(&t, leg, &m);
            let diff = (&fast - &slow).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-12, "leg {leg}: {diff}");
        }
    }

    #[test]
    fn eigh_hermitian_returns_true_eigenvectors() {
        let i = C64::new(0.0, 1.0);
        let a = ndarray::array![[ONE, i], [-i, ONE * 2.0]];
        let (w, u) = eigh_hermitian(&a).unwrap();
        for k in 0..2 {
            let col = u.column(k).to_owned();
            let diff = (&a.dot(&col) - &col.mapv(|z| z * w[k])).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn qr_leg_reconstructs_and_is_isometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_tensor(&mut rng, [3, 4, 5], 1.0);
        for leg in 0..3 {
            let (q, r) = qr_leg(&t, leg).unwrap();
            let back = apply_leg(&q, leg, r.t());
            let diff = (&back - &t).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-12);
            let gram = project_out(&q, &q, leg);
            assert!(identity_defect(&gram) < 1e-12);
        }
    }
}
