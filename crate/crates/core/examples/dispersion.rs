//! Dressed magnon energies on an 8x8 torus against the second-order
//! dispersion `8J - (g^2/J)(1/2 + (cos kx + cos ky)/4)`.

use std::sync::Arc;

use ttn_scatter::ising::{dispersion_second_order, lattice_momentum, IsingParams};
use ttn_scatter::lattice::{build_tree_topology, Boundary, LatticeGeometry};
use ttn_scatter::tdvp::EvolutionConfig;
use ttn_scatter::wavepacket::{measure_dispersion, write_dispersion, DispersionOptions};

fn main() -> ttn_scatter::Result<()> {
    let geom = LatticeGeometry::square(8, Boundary::Periodic)?;
    let topo = Arc::new(build_tree_topology(&geom)?);
    let params = IsingParams::new(1.0, 0.5, 0.0)?;
    let ks: Vec<(f64, f64)> = (0..=4).map(|m| lattice_momentum(&geom, (m, m))).collect();
    let opts = DispersionOptions {
        chi: 6,
        sigma: 1.5,
        evolution: EvolutionConfig { dt: 0.05, ..Default::default() },
        ..Default::default()
    };
    let points = measure_dispersion(&topo, params, &ks, &opts)?;
    write_dispersion(std::io::stdout().lock(), &points)?;
    for p in &points {
        let eq = dispersion_second_order((p.kx, p.ky), &params)?;
        println!("k = ({:.3}, {:.3})  ttn {:.5}  second order {:.5}", p.kx, p.ky, p.energy, eq);
    }
    Ok(())
}
