//! Sum two Gaussian magnon packets into a tree tensor network and report
//! the summation error per sweep.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use ttn_scatter::lattice::{build_tree_topology, Boundary, LatticeGeometry, SiteCoord};
use ttn_scatter::measure::MeasurementContext;
use ttn_scatter::wavepacket::{build_packet_state, packet_basis_terms, WavePacketSpec};

fn main() -> ttn_scatter::Result<()> {
    let geom = LatticeGeometry::square(12, Boundary::Periodic)?;
    let topo = Arc::new(build_tree_topology(&geom)?);
    let specs = [
        WavePacketSpec::new(SiteCoord::new(4, 4), (FRAC_PI_2, FRAC_PI_2), 2.0),
        WavePacketSpec::new(SiteCoord::new(9, 9), (-FRAC_PI_2, -FRAC_PI_2), 2.0),
    ];
    let terms = packet_basis_terms(&specs, &geom)?;
    println!("{} basis states", terms.len());

    let (state, report) = build_packet_state(&specs, &topo, 8, 1)?;
    println!("sweep errors {:?}", report.sweep_errors);
    println!("max bond {}", state.max_bond_dim());

    let n = MeasurementContext::new(&state)?.n_field()?;
    println!("total flips {:.12}", n.iter().sum::<f64>());
    for y in (0..12).rev() {
        let row: String = (0..12).map(|x| if n[geom.site_index(SiteCoord::new(x, y))?] > 0.05 { Ok('#') } else { Ok('.') }).collect::<ttn_scatter::Result<_>>()?;
        println!("{row}");
    }
    Ok(())
}
