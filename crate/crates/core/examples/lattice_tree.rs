//! Lay a lattice onto a binary tree and print the blocks per level.
//!
//! ```bash
//! cargo run --example lattice_tree -- 6 4
//! ```

use ttn_scatter::lattice::{build_tree_topology, Boundary, LatticeGeometry, NodeKind};

fn main() -> ttn_scatter::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (lx, ly) = (args.first().copied().unwrap_or(4), args.get(1).copied().unwrap_or(4));
    let geom = LatticeGeometry::rectangular(lx, ly, Boundary::Periodic)?;
    let topo = build_tree_topology(&geom)?;
    println!("{lx}x{ly}: {} nodes, {} leaves, depth {}", topo.n_nodes(), topo.leaves().len(), topo.depth());

    for (n, node) in topo.nodes().iter().enumerate() {
        let b = node.block;
        let what = match &node.kind {
            NodeKind::Leaf { sites } => format!("leaf {sites:?}"),
            NodeKind::Internal { children } => format!("children {children:?}"),
        };
        println!("{:indent$}#{n} [{}..{}) x [{}..{}) {what}", "", b.x0, b.x0 + b.w, b.y0, b.y0 + b.h, indent = 2 * node.level);
    }

    // largest bond each link can carry at chi = 16
    println!("bond caps at chi=16: {:?}", topo.max_bond_dims(16));
    Ok(())
}
