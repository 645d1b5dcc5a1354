//! Versioned binary snapshots of a state.
//!
//! Layout (little endian):
//!
//! ```text
//! magic    "TTNSNAP\0"
//! version  u32
//! lattice  u32 lx, u32 ly, u8 boundary (0 periodic, 1 open)
//! nodes    u32 count, then per node: u8 kind (0 leaf, 1 internal),
//!          two i64 (leaf sites, -1 if absent; or child ids), i64 parent (-1 root)
//! center   i64 (-1 if unknown)
//! meta     f64 j, g, h, t, dt; u64 chi, seed
//! tensors  per node: u32 d0, d1, d2, then d0*d1*d2 (re, im) f64 pairs, row-major
//! ```
//!
//! The topology block is checked against the tree rebuilt from the lattice.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{build_tree_topology, Boundary, LatticeGeometry, NodeKind};
use crate::tensor::{dims3, C64};
use crate::ttn::TtnState;

pub const MAGIC: &[u8; 8] = b"TTNSNAP\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub j: f64,
    pub g: f64,
    pub h: f64,
    pub t: f64,
    pub dt: f64,
    pub chi: u64,
    pub seed: u64,
}

fn opt_i64(v: Option<usize>) -> i64 {
    v.map_or(-1, |x| x as i64)
}

pub fn write_snapshot<W: Write>(mut w: W, state: &TtnState, meta: &SnapshotMeta) -> Result<()> {
    let topo = state.topology();
    let geom = topo.geometry();
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u32::<LE>(geom.lx() as u32)?;
    w.write_u32::<LE>(geom.ly() as u32)?;
    w.write_u8(match geom.boundary() {
        Boundary::Periodic => 0,
        Boundary::Open => 1,
    })?;
    w.write_u32::<LE>(topo.n_nodes() as u32)?;
    for node in topo.nodes() {
        let (kind, a, b) = match &node.kind {
            NodeKind::Leaf { sites } => (0u8, opt_i64(sites[0]), opt_i64(sites[1])),
            NodeKind::Internal { children } => (1u8, children[0] as i64, children[1] as i64),
        };
        w.write_u8(kind)?;
        w.write_i64::<LE>(a)?;
        w.write_i64::<LE>(b)?;
        w.write_i64::<LE>(opt_i64(node.parent))?;
    }
    w.write_i64::<LE>(opt_i64(state.center()))?;
    for x in [meta.j, meta.g, meta.h, meta.t, meta.dt] {
        w.write_f64::<LE>(x)?;
    }
    w.write_u64::<LE>(meta.chi)?;
    w.write_u64::<LE>(meta.seed)?;
    for t in state.tensors() {
        for d in dims3(t) {
            w.write_u32::<LE>(d as u32)?;
        }
        for z in t.iter() {
            w.write_f64::<LE>(z.re)?;
            w.write_f64::<LE>(z.im)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(TtnState, SnapshotMeta)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a state snapshot"));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(bad(format!("snapshot version {version}, expected {VERSION}")));
    }
    let lx = r.read_u32::<LE>()? as usize;
    let ly = r.read_u32::<LE>()? as usize;
    let boundary = match r.read_u8()? {
        0 => Boundary::Periodic,
        1 => Boundary::Open,
        b => return Err(bad(format!("unknown boundary code {b}"))),
    };
    let geom = LatticeGeometry::rectangular(lx, ly, boundary)?;
    let topo = Arc::new(build_tree_topology(&geom)?);
    let n_nodes = r.read_u32::<LE>()? as usize;
    if n_nodes != topo.n_nodes() {
        return Err(bad(format!("{n_nodes} nodes, tree has {}", topo.n_nodes())));
    }
    for (n, node) in topo.nodes().iter().enumerate() {
        let kind = r.read_u8()?;
        let a = r.read_i64::<LE>()?;
        let b = r.read_i64::<LE>()?;
        let parent = r.read_i64::<LE>()?;
        let want = match &node.kind {
            NodeKind::Leaf { sites } => (0u8, opt_i64(sites[0]), opt_i64(sites[1])),
            NodeKind::Internal { children } => (1u8, children[0] as i64, children[1] as i64),
        };
        if (kind, a, b) != want || parent != opt_i64(node.parent) {
            return Err(bad(format!("node {n} does not match the tree for this lattice")));
        }
    }
    let center = match r.read_i64::<LE>()? {
        -1 => None,
        c if c >= 0 && (c as usize) < n_nodes => Some(c as usize),
        c => return Err(bad(format!("center {c} out of range"))),
    };
    let mut f = [0.0; 5];
    for x in &mut f {
        *x = r.read_f64::<LE>()?;
    }
    let meta = SnapshotMeta {
        j: f[0],
        g: f[1],
        h: f[2],
        t: f[3],
        dt: f[4],
        chi: r.read_u64::<LE>()?,
        seed: r.read_u64::<LE>()?,
    };
    let mut tensors = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let d0 = r.read_u32::<LE>()? as usize;
        let d1 = r.read_u32::<LE>()? as usize;
        let d2 = r.read_u32::<LE>()? as usize;
        let len = d0
            .checked_mul(d1)
            .and_then(|x| x.checked_mul(d2))
            .filter(|&x| x <= 1 << 30)
            .ok_or_else(|| bad("tensor too large"))?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            let re = r.read_f64::<LE>()?;
            let im = r.read_f64::<LE>()?;
            data.push(C64::new(re, im));
        }
        tensors.push(Array3::from_shape_vec((d0, d1, d2), data).expect("length checked"));
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(bad("trailing bytes after snapshot"));
    }
    Ok((TtnState::from_tensors(topo, tensors, center)?, meta))
}

/// Write to `path` via a temporary file and rename, so readers never see
/// a partial snapshot.
pub fn save_snapshot(path: &Path, state: &TtnState, meta: &SnapshotMeta) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let f = File::create(&tmp)?;
        write_snapshot(BufWriter::new(f), state, meta)?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<(TtnState, SnapshotMeta)> {
    read_snapshot(BufReader::new(File::open(path)?))
}
