//! Sudden quench of the polarized state to g = 1 on a 3x4 torus. At full
//! bond dimension the tree evolution reproduces exact Krylov evolution.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ttn_scatter::ed::{build_sparse_hamiltonian, dense_expect, krylov_evolve};
use ttn_scatter::ising::{build_terms, IsingParams};
use ttn_scatter::lattice::{build_tree_topology, Boundary, LatticeGeometry};
use ttn_scatter::measure::MeasurementContext;
use ttn_scatter::operators::LocalOperator;
use ttn_scatter::tdvp::TdvpEngine;
use ttn_scatter::ttn::TtnState;

fn main() -> ttn_scatter::Result<()> {
    let geom = LatticeGeometry::rectangular(3, 4, Boundary::Periodic)?;
    let params = IsingParams::new(1.0, 1.0, 0.0)?;
    let topo = Arc::new(build_tree_topology(&geom)?);
    let mut engine = TdvpEngine::new(topo.clone(), build_terms(params, &geom)?)?;

    let mut state = TtnState::vacuum(topo);
    state.pad_to(64, 1e-12, &mut ChaCha8Rng::seed_from_u64(0))?;
    state.normalize();
    let h = build_sparse_hamiltonian(params, &geom)?;
    let mut exact = state.to_dense()?;

    let dt = 0.02;
    println!("t\t<Z0> ttn\t<Z0> exact\tenergy");
    for step in 1..=100 {
        engine.step(&mut state, dt, params.g)?;
        exact = krylov_evolve(&exact, &h, dt, 1e-12)?;
        if step % 10 == 0 {
            let z = MeasurementContext::new(&state)?.z_field()?[0];
            let ze = dense_expect(&exact, &LocalOperator::z(0)).re;
            println!("{:.2}\t{z:.10}\t{ze:.10}\t{:.10}", step as f64 * dt, engine.energy(&mut state, params.g)?);
        }
    }
    Ok(())
}
