//! Composite and long-range correlators on product states: a 2x2 square,
//! an L-shaped kink and a straight three-site chain.

use std::sync::Arc;

use ttn_scatter::lattice::{build_tree_topology, Boundary, LatticeGeometry, SiteCoord};
use ttn_scatter::measure::MeasurementContext;
use ttn_scatter::observables::{composite_correlators, long_range_correlators, CorrelatorSuite};
use ttn_scatter::ttn::{Spin, TtnState};

fn main() -> ttn_scatter::Result<()> {
    let geom = LatticeGeometry::square(8, Boundary::Periodic)?;
    let topo = Arc::new(build_tree_topology(&geom)?);
    let shapes: [(&str, &[(i64, i64)]); 3] = [
        ("square", &[(3, 3), (4, 3), (3, 4), (4, 4)]),
        ("kink", &[(3, 3), (4, 3), (3, 4)]),
        ("chain", &[(2, 3), (3, 3), (4, 3)]),
    ];
    for (name, sites) in shapes {
        let mut spins = vec![Spin::Down; geom.n_sites()];
        for &(x, y) in sites {
            spins[geom.site_index(SiteCoord::new(x, y))?] = Spin::Up;
        }
        let ctx = MeasurementContext::new(&TtnState::product(topo.clone(), &spins)?)?;
        let c = composite_correlators(&ctx)?;
        println!("{name:>6}: C3h = {:.0}  C3k = {:.0}  C4 = {:.0}", c.c3h, c.c3k, c.c4);
    }

    // connected correlators vanish on any product state
    let suite = CorrelatorSuite::for_geometry(&geom)?;
    let st = TtnState::random(topo.clone(), 1, 5);
    println!("{:?}", long_range_correlators(&MeasurementContext::new(&st)?, &suite)?);
    Ok(())
}
