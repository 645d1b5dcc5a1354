//! Cross-checks of the tree network against exact diagonalization on
//! small lattices.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ed::{build_sparse_hamiltonian, dense_energy_density, dense_expect, krylov_evolve};
use crate::error::{Error, Result};
use crate::ising::{build_terms, energy_density, IsingParams};
use crate::lattice::{build_tree_topology, LatticeGeometry};
use crate::measure::MeasurementContext;
use crate::observables::{composite_correlators, composite_operators, long_range_correlators, CorrelatorSuite};
use crate::operators::LocalOperator;
use crate::tdvp::TdvpEngine;
use crate::tensor::{vdot, C64};
use crate::ttn::{overlap, TtnState};

/// Largest lattice accepted; the full bond dimension grows as `2^(sites/2)`.
pub const MAX_SITES: usize = 12;

/// Tolerance for static quantities.
pub const STATIC_TOL: f64 = 1e-10;
/// Tolerance for `<Z>` after the quench.
pub const DYNAMIC_TOL: f64 = 1e-6;
pub const ENERGY_DRIFT_TOL: f64 = 1e-6;
pub const NORM_DRIFT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub lx: usize,
    pub ly: usize,
    pub chi: usize,
    pub overlap_error: f64,
    pub local_error: f64,
    pub correlator_error: f64,
    pub energy_density_error: f64,
    /// Largest `<Z>` deviation from Krylov evolution over the quench.
    pub quench_z_error: f64,
    pub quench_time: f64,
    /// Relative energy change over `drift_time` at constant field.
    pub energy_drift: f64,
    pub norm_drift: f64,
    pub drift_time: f64,
}

impl ValidationReport {
    pub fn static_ok(&self) -> bool {
        [self.overlap_error, self.local_error, self.correlator_error, self.energy_density_error]
            .iter()
            .all(|&e| e <= STATIC_TOL)
    }

    pub fn dynamics_ok(&self) -> bool {
        self.quench_z_error <= DYNAMIC_TOL && self.energy_drift <= ENERGY_DRIFT_TOL && self.norm_drift <= NORM_DRIFT_TOL
    }

    pub fn passed(&self) -> bool {
        self.static_ok() && self.dynamics_ok()
    }
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Full bond dimension for a lattice: every bond can hold the whole space.
pub fn full_chi(geom: &LatticeGeometry) -> usize {
    1 << geom.n_sites().div_ceil(2)
}

/// Random full-rank states compared against their dense vectors, then a
/// sudden quench of the vacuum from `g = 0` to `params.g` with time step
/// `dt`, checked against Krylov evolution up to `quench_time` and for
/// conservation up to `drift_time`.
pub fn ed_validate(
    geom: &LatticeGeometry,
    params: IsingParams,
    dt: f64,
    quench_time: f64,
    drift_time: f64,
    seed: u64,
) -> Result<ValidationReport> {
    if geom.n_sites() > MAX_SITES {
        return Err(Error::SizeOverflow { sites: geom.n_sites(), limit: MAX_SITES });
    }
    if !(dt > 0.0) || !(quench_time >= 0.0) || !(drift_time >= 0.0) {
        return Err(Error::InvalidParams("validation times must be non-negative and dt positive".into()));
    }
    let topo = Arc::new(build_tree_topology(geom)?);
    let chi = full_chi(geom);
    let terms = build_terms(params, geom)?;

    let a = TtnState::random(topo.clone(), chi, seed);
    let b = TtnState::random(topo.clone(), chi, seed + 1);
    let (va, vb) = (a.to_dense()?, b.to_dense()?);
    let overlap_error = (overlap(&a, &b)? - vdot(&vb, &va)).norm() / (a.norm() * b.norm());

    let ctx = MeasurementContext::new(&a)?;
    let n = geom.n_sites();
    let mut local_error: f64 = 0.0;
    for i in 0..n {
        for op in [LocalOperator::x(i), LocalOperator::z(i), LocalOperator::n_product(&[i, (i + 1) % n])] {
            local_error = local_error.max((ctx.expect(&op)? - dense_expect(&va, &op)).norm());
        }
    }
    let dense_sum = |ops: &[LocalOperator]| ops.iter().map(|o| dense_expect(&va, o)).sum::<C64>().re;
    let [h3, k3, c4] = composite_operators(geom);
    let cc = composite_correlators(&ctx)?;
    let mut correlator_error = max_abs(&[cc.c3h, cc.c3k, cc.c4], &[dense_sum(&h3), dense_sum(&k3), dense_sum(&c4)]);
    let suite = CorrelatorSuite::for_geometry(geom)?;
    let lr = long_range_correlators(&ctx, &suite)?;
    let idx = |c| geom.site_index(c);
    let (p, q) = (idx(suite.axis[0])?, idx(suite.axis[1])?);
    let (o1, o2) = (idx(suite.orthogonal[0])?, idx(suite.orthogonal[1])?);
    let m = idx(suite.center)?;
    let nd = |s: &[usize]| dense_expect(&va, &LocalOperator::n_product(s)).re;
    let dense_lr = [
        nd(&[p, q]) - nd(&[p]) * nd(&[q]),
        nd(&[o1, o2]) - nd(&[o1]) * nd(&[o2]),
        nd(&[p, o1]) - nd(&[p]) * nd(&[o1]),
        nd(&[p, m, q]) - nd(&[p]) * nd(&[m]) * nd(&[q]),
        nd(&[o2, m, o1]) - nd(&[o2]) * nd(&[m]) * nd(&[o1]),
    ];
    correlator_error = correlator_error.max(max_abs(&[lr.c_a, lr.c_o, lr.c_ao, lr.c_a3, lr.c_o3], &dense_lr));
    let energy_density_error =
        max_abs(&energy_density(&ctx, &terms, params.g)?, &dense_energy_density(&va, &terms, params.g));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = TtnState::vacuum(topo.clone());
    s.pad_to(chi, 1e-12, &mut rng)?;
    s.normalize();
    let mut v = s.to_dense()?;
    let h = build_sparse_hamiltonian(params, geom)?;
    let mut engine = TdvpEngine::new(topo, terms)?;
    engine.krylov.tol = 1e-12;
    let n_quench = (quench_time / dt).round() as usize;
    let n_drift = (drift_time / dt).round() as usize;
    let e0 = engine.energy(&mut s, params.g)?;
    let norm0 = s.norm();
    let mut quench_z_error: f64 = 0.0;
    let (mut energy_drift, mut norm_drift): (f64, f64) = (0.0, 0.0);
    for k in 1..=n_quench.max(n_drift) {
        engine.step(&mut s, dt, params.g)?;
        if k <= n_quench {
            v = krylov_evolve(&v, &h, dt, 1e-12)?;
            let z = MeasurementContext::new(&s)?.z_field()?;
            let zd: Vec<f64> = (0..n).map(|i| dense_expect(&v, &LocalOperator::z(i)).re).collect();
            quench_z_error = quench_z_error.max(max_abs(&z, &zd));
        }
        if k <= n_drift {
            let e = engine.energy(&mut s, params.g)?;
            energy_drift = energy_drift.max((e - e0).abs() / e0.abs().max(1e-300));
            norm_drift = norm_drift.max((s.norm() - norm0).abs());
        }
    }
    Ok(ValidationReport {
        lx: geom.lx(),
        ly: geom.ly(),
        chi,
        overlap_error,
        local_error,
        correlator_error,
        energy_density_error,
        quench_z_error,
        quench_time: n_quench as f64 * dt,
        energy_drift,
        norm_drift,
        drift_time: n_drift as f64 * dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;

    #[test]
    fn small_lattice_passes() {
        let g = LatticeGeometry::rectangular(3, 3, Boundary::Periodic).unwrap();
        let r = ed_validate(&g, IsingParams::new(1.0, 1.0, 0.2).unwrap(), 0.05, 0.5, 1.0, 4).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.chi, 32);
    }

    #[test]
    fn too_large_rejected() {
        let g = LatticeGeometry::rectangular(4, 4, Boundary::Periodic).unwrap();
        let p = IsingParams::new(1.0, 1.0, 0.0).unwrap();
        assert!(matches!(ed_validate(&g, p, 0.02, 1.0, 1.0, 0), Err(Error::SizeOverflow { .. })));
    }
}
