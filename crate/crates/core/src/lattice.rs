//! Square-lattice geometry and its mapping onto the leaves of a binary tree.
//!
//! Sites are numbered row-major, `index = x + lx * y`. The tree is built by
//! recursive bisection of rectangular blocks, so every subtree owns a
//! contiguous rectangle and every leaf owns two lattice-adjacent sites. Blocks
//! of odd area end in a single-site leaf whose second physical leg has
//! dimension one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeGeometry {
    lx: usize,
    ly: usize,
    boundary: Boundary,
}

/// A lattice position. Raw coordinates may lie outside `[0, L)`; periodic
/// lattices wrap them, open lattices reject them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteCoord {
    pub x: i64,
    pub y: i64,
}

impl SiteCoord {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }
}

impl From<(i64, i64)> for SiteCoord {
    fn from((x, y): (i64, i64)) -> Self {
        Self { x, y }
    }
}

impl LatticeGeometry {
    /// An `n x n` lattice.
    pub fn square(n: usize, boundary: Boundary) -> Result<Self> {
        Self::rectangular(n, n, boundary)
    }

    /// An `lx x ly` lattice. Rectangles are used by the small exact
    /// cross-checks (e.g. 3x4); production runs use squares.
    pub fn rectangular(lx: usize, ly: usize, boundary: Boundary) -> Result<Self> {
        if lx == 0 || ly == 0 {
            return Err(Error::InvalidGeometry("side lengths must be positive".into()));
        }
        if lx * ly < 2 {
            return Err(Error::InvalidGeometry("need at least two sites".into()));
        }
        if boundary == Boundary::Periodic && (lx < 3 || ly < 3) {
            return Err(Error::InvalidGeometry(format!(
                "periodic lattices need both sides >= 3, got {lx}x{ly}"
            )));
        }
        Ok(Self { lx, ly, boundary })
    }

    pub fn lx(&self) -> usize {
        self.lx
    }

    pub fn ly(&self) -> usize {
        self.ly
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_square(&self) -> bool {
        self.lx == self.ly
    }

    pub fn n_sites(&self) -> usize {
        self.lx * self.ly
    }

    /// Reduce a coordinate into the lattice.
    pub fn wrap(&self, c: SiteCoord) -> Result<SiteCoord> {
        match self.boundary {
            Boundary::Periodic => Ok(SiteCoord {
                x: c.x.rem_euclid(self.lx as i64),
                y: c.y.rem_euclid(self.ly as i64),
            }),
            Boundary::Open => {
                if c.x < 0 || c.y < 0 || c.x >= self.lx as i64 || c.y >= self.ly as i64 {
                    Err(Error::CoordinateOutOfRange { x: c.x, y: c.y, lx: self.lx, ly: self.ly })
                } else {
                    Ok(c)
                }
            }
        }
    }

    pub fn site_index(&self, c: SiteCoord) -> Result<usize> {
        let w = self.wrap(c)?;
        Ok(w.x as usize + self.lx * w.y as usize)
    }

    pub fn coord_of(&self, index: usize) -> SiteCoord {
        assert!(index < self.n_sites(), "site {index} out of range");
        SiteCoord { x: (index % self.lx) as i64, y: (index / self.lx) as i64 }
    }

    /// Nearest neighbours; four on periodic lattices, fewer on open edges.
    pub fn neighbors(&self, c: SiteCoord) -> Result<Vec<SiteCoord>> {
        let c = self.wrap(c)?;
        let mut out = Vec::with_capacity(4);
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            if let Ok(n) = self.wrap(SiteCoord { x: c.x + dx, y: c.y + dy }) {
                if !out.contains(&n) {
                    out.push(n);
                }
            }
        }
        Ok(out)
    }

    /// Every unordered nearest-neighbour bond exactly once, as `(i, j)` with
    /// `i < j`, sorted.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(2 * self.n_sites());
        for i in 0..self.n_sites() {
            let c = self.coord_of(i);
            for n in self.neighbors(c).expect("in-range coordinate") {
                let j = self.site_index(n).expect("wrapped");
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Squared minimum-image distance between two sites.
    pub fn distance_sqr(&self, a: SiteCoord, b: SiteCoord) -> f64 {
        let (dx, dy) = self.displacement(a, b);
        dx * dx + dy * dy
    }

    /// Minimum-image displacement `b - a`.
    pub fn displacement(&self, a: SiteCoord, b: SiteCoord) -> (f64, f64) {
        let mut dx = (b.x - a.x) as f64;
        let mut dy = (b.y - a.y) as f64;
        if self.boundary == Boundary::Periodic {
            let (lx, ly) = (self.lx as f64, self.ly as f64);
            dx -= lx * (dx / lx).round();
            dy -= ly * (dy / ly).round();
        }
        (dx, dy)
    }
}

pub type NodeId = usize;

/// Axis-aligned block of sites `[x0, x0 + w) x [y0, y0 + h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Block {
    pub fn area(&self) -> usize {
        self.w * self.h
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeKind {
    /// Two physical legs. The second one is absent (dimension one) on the
    /// single-site leaf of an odd-sized lattice.
    Leaf { sites: [Option<usize>; 2] },
    Internal { children: [NodeId; 2] },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub kind: NodeKind,
    pub parent: Option<NodeId>,
    pub level: usize,
    pub block: Block,
}

/// Binary tree over the lattice. Node 0 is the root; nodes are stored in
/// depth-first pre-order, children left before right.
#[derive(Clone, Debug)]
pub struct TreeTopology {
    geom: LatticeGeometry,
    nodes: Vec<TreeNode>,
    leaves: Vec<NodeId>,
    /// site -> (leaf, physical leg)
    site_leaf: Vec<(NodeId, usize)>,
    post_order: Vec<NodeId>,
    subtree_sites: Vec<Vec<usize>>,
    subtree_nodes: Vec<Vec<NodeId>>,
    in_subtree: Vec<Vec<bool>>,
}

impl PartialEq for TreeTopology {
    fn eq(&self, other: &Self) -> bool {
        self.geom == other.geom && self.nodes == other.nodes
    }
}

fn split_block(b: Block) -> (Block, Block) {
    // Candidate cuts ranked by: both halves even (when the block is even),
    // balance, cutting the longer side, then cutting along y.
    let even = b.area().is_multiple_of(2);
    let mut best: Option<((bool, usize, bool, bool), (Block, Block))> = None;
    let mut consider = |first: Block, second: Block, along_x: bool| {
        let parity_bad = even && (first.area() % 2 == 1 || second.area() % 2 == 1);
        let imbalance = first.area().abs_diff(second.area());
        let side = if along_x { b.w } else { b.h };
        let other = if along_x { b.h } else { b.w };
        let key = (parity_bad, imbalance, side < other, along_x);
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((key, (first, second)));
        }
    };
    for c in 1..b.w {
        let l = Block { x0: b.x0, y0: b.y0, w: c, h: b.h };
        let r = Block { x0: b.x0 + c, y0: b.y0, w: b.w - c, h: b.h };
        consider(l, r, true);
    }
    for c in 1..b.h {
        let l = Block { x0: b.x0, y0: b.y0, w: b.w, h: c };
        let r = Block { x0: b.x0, y0: b.y0 + c, w: b.w, h: b.h - c };
        consider(l, r, false);
    }
    best.expect("block with area >= 3 has a cut").1
}

/// Build the recursive-bisection tree for a geometry.
pub fn build_tree_topology(geom: &LatticeGeometry) -> Result<TreeTopology> {
    let mut nodes = Vec::new();
    let root = Block { x0: 0, y0: 0, w: geom.lx(), h: geom.ly() };
    build_rec(geom, root, None, 0, &mut nodes);
    TreeTopology::from_nodes(*geom, nodes)
}

fn build_rec(
    geom: &LatticeGeometry,
    block: Block,
    parent: Option<NodeId>,
    level: usize,
    nodes: &mut Vec<TreeNode>,
) -> NodeId {
    let id = nodes.len();
    let site = |x: usize, y: usize| x + geom.lx() * y;
    if block.area() <= 2 {
        let mut sites = [None, None];
        let mut k = 0;
        for y in block.y0..block.y0 + block.h {
            for x in block.x0..block.x0 + block.w {
                sites[k] = Some(site(x, y));
                k += 1;
            }
        }
        nodes.push(TreeNode { kind: NodeKind::Leaf { sites }, parent, level, block });
        return id;
    }
    nodes.push(TreeNode {
        kind: NodeKind::Internal { children: [0, 0] },
        parent,
        level,
        block,
    });
    let (a, b) = split_block(block);
    let ca = build_rec(geom, a, Some(id), level + 1, nodes);
    let cb = build_rec(geom, b, Some(id), level + 1, nodes);
    nodes[id].kind = NodeKind::Internal { children: [ca, cb] };
    id
}

impl TreeTopology {
    fn from_nodes(geom: LatticeGeometry, nodes: Vec<TreeNode>) -> Result<Self> {
        let n_nodes = nodes.len();
        let n_sites = geom.n_sites();
        let mut leaves = Vec::new();
        let mut site_leaf = vec![(usize::MAX, 0); n_sites];
        for (id, node) in nodes.iter().enumerate() {
            if let NodeKind::Leaf { sites } = &node.kind {
                leaves.push(id);
                for (leg, s) in sites.iter().enumerate() {
                    if let Some(s) = s {
                        if site_leaf[*s].0 != usize::MAX {
                            return Err(Error::InvalidGeometry(format!("site {s} on two leaves")));
                        }
                        site_leaf[*s] = (id, leg);
                    }
                }
            }
        }
        if site_leaf.iter().any(|(l, _)| *l == usize::MAX) {
            return Err(Error::InvalidGeometry("leaf map does not cover all sites".into()));
        }
        let mut post_order = Vec::with_capacity(n_nodes);
        let mut stack = vec![(0usize, false)];
        while let Some((n, expanded)) = stack.pop() {
            match (&nodes[n].kind, expanded) {
                (NodeKind::Internal { children }, false) => {
                    stack.push((n, true));
                    stack.push((children[1], false));
                    stack.push((children[0], false));
                }
                _ => post_order.push(n),
            }
        }
        let mut subtree_sites = vec![Vec::new(); n_nodes];
        let mut subtree_nodes = vec![Vec::new(); n_nodes];
        for &n in &post_order {
            match &nodes[n].kind {
                NodeKind::Leaf { sites } => {
                    subtree_sites[n] = sites.iter().flatten().copied().collect();
                    subtree_nodes[n] = vec![n];
                }
                NodeKind::Internal { children } => {
                    let mut s = subtree_sites[children[0]].clone();
                    s.extend_from_slice(&subtree_sites[children[1]]);
                    let mut m = subtree_nodes[children[0]].clone();
                    m.extend_from_slice(&subtree_nodes[children[1]]);
                    m.push(n);
                    subtree_sites[n] = s;
                    subtree_nodes[n] = m;
                }
            }
        }
        let in_subtree = subtree_sites
            .iter()
            .map(|sites| {
                let mut mask = vec![false; n_sites];
                for &s in sites {
                    mask[s] = true;
                }
                mask
            })
            .collect();
        Ok(Self {
            geom,
            nodes,
            leaves,
            site_leaf,
            post_order,
            subtree_sites,
            subtree_nodes,
            in_subtree,
        })
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geom
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node(&self, n: NodeId) -> &TreeNode {
        &self.nodes[n]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn parent(&self, n: NodeId) -> Option<NodeId> {
        self.nodes[n].parent
    }

    pub fn children(&self, n: NodeId) -> Option<[NodeId; 2]> {
        match self.nodes[n].kind {
            NodeKind::Internal { children } => Some(children),
            NodeKind::Leaf { .. } => None,
        }
    }

    pub fn is_leaf(&self, n: NodeId) -> bool {
        matches!(self.nodes[n].kind, NodeKind::Leaf { .. })
    }

    /// Number of node layers (root alone has depth 1).
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0) + 1
    }

    /// Leaf and physical leg carrying `site`.
    pub fn site_leaf(&self, site: usize) -> (NodeId, usize) {
        self.site_leaf[site]
    }

    /// Children before parents.
    pub fn post_order(&self) -> &[NodeId] {
        &self.post_order
    }

    pub fn subtree_sites(&self, n: NodeId) -> &[usize] {
        &self.subtree_sites[n]
    }

    pub fn subtree_nodes(&self, n: NodeId) -> &[NodeId] {
        &self.subtree_nodes[n]
    }

    pub fn site_in_subtree(&self, n: NodeId, site: usize) -> bool {
        self.in_subtree[n][site]
    }

    pub fn node_in_subtree(&self, root: NodeId, n: NodeId) -> bool {
        let mut cur = Some(n);
        while let Some(c) = cur {
            if c == root {
                return true;
            }
            cur = self.nodes[c].parent;
        }
        false
    }

    /// Which leg of `n` connects to the adjacent node `m`.
    pub fn leg_towards(&self, n: NodeId, m: NodeId) -> usize {
        if self.nodes[n].parent == Some(m) {
            return 2;
        }
        match self.nodes[n].kind {
            NodeKind::Internal { children } if children[0] == m => 0,
            NodeKind::Internal { children } if children[1] == m => 1,
            _ => panic!("nodes {n} and {m} are not adjacent"),
        }
    }

    /// The neighbour of `n` on the path towards `target` (`n != target`).
    pub fn step_towards(&self, n: NodeId, target: NodeId) -> NodeId {
        if let Some(children) = self.children(n) {
            for c in children {
                if self.node_in_subtree(c, target) {
                    return c;
                }
            }
        }
        self.nodes[n].parent.expect("target outside the tree")
    }

    /// Node path `from -> to`, inclusive.
    pub fn path(&self, from: NodeId, to: NodeId) -> Vec<NodeId> {
        let mut out = vec![from];
        let mut cur = from;
        while cur != to {
            cur = self.step_towards(cur, to);
            out.push(cur);
        }
        out
    }

    /// Lowest common ancestor of a set of nodes.
    pub fn lowest_common_ancestor(&self, nodes: &[NodeId]) -> NodeId {
        let mut lca = nodes[0];
        for &n in &nodes[1..] {
            while !self.node_in_subtree(lca, n) {
                lca = self.nodes[lca].parent.expect("root contains every node");
            }
        }
        lca
    }

    /// Physical dimension of leaf leg (1 for the padding leg).
    pub fn physical_dim(&self, leaf: NodeId, leg: usize) -> usize {
        match &self.nodes[leaf].kind {
            NodeKind::Leaf { sites } => {
                if sites[leg].is_some() {
                    2
                } else {
                    1
                }
            }
            NodeKind::Internal { .. } => panic!("node {leaf} is not a leaf"),
        }
    }

    /// Largest admissible bond dimension of every node's upward link, 1 at
    /// the root, when no link may exceed `chi`. Each link is bounded by the
    /// Hilbert-space dimension on both sides and by the product of the other
    /// two legs at both of its endpoints.
    pub fn max_bond_dims(&self, chi: usize) -> Vec<usize> {
        let n_sites = self.geom.n_sites();
        let pow2 = |k: usize| if k >= 60 { usize::MAX } else { 1usize << k };
        let mut dims: Vec<usize> = (0..self.n_nodes())
            .map(|n| {
                if n == self.root() {
                    1
                } else {
                    let inside = self.subtree_sites[n].len();
                    chi.max(1).min(pow2(inside)).min(pow2(n_sites - inside))
                }
            })
            .collect();
        loop {
            let mut changed = false;
            for n in 0..self.n_nodes() {
                let legs = self.leg_dims_with(n, &dims);
                let mut cap = |target: usize, bound: usize, dims: &mut Vec<usize>| {
                    if dims[target] > bound {
                        dims[target] = bound;
                        changed = true;
                    }
                };
                if n != self.root() {
                    cap(n, legs[0].saturating_mul(legs[1]), &mut dims);
                }
                if let Some(ch) = self.children(n) {
                    let legs = self.leg_dims_with(n, &dims);
                    cap(ch[0], legs[1].saturating_mul(legs[2]), &mut dims);
                    let legs = self.leg_dims_with(n, &dims);
                    cap(ch[1], legs[0].saturating_mul(legs[2]), &mut dims);
                }
            }
            if !changed {
                return dims;
            }
        }
    }

    /// Leg dimensions of node `n` given per-node upward link dims.
    pub fn leg_dims_with(&self, n: NodeId, link: &[usize]) -> [usize; 3] {
        match &self.nodes[n].kind {
            NodeKind::Leaf { .. } => [self.physical_dim(n, 0), self.physical_dim(n, 1), link[n]],
            NodeKind::Internal { children } => [link[children[0]], link[children[1]], link[n]],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(n: usize) -> LatticeGeometry {
        LatticeGeometry::square(n, Boundary::Periodic).unwrap()
    }

    #[test]
    fn site_index_examples() {
        let g3 = sq(3);
        assert_eq!(g3.site_index(SiteCoord::new(0, 0)).unwrap(), 0);
        assert_eq!(g3.site_index(SiteCoord::new(2, 1)).unwrap(), 5);
        assert_eq!(sq(4).site_index(SiteCoord::new(-1, 0)).unwrap(), 3);
    }

    #[test]
    fn open_lattice_rejects_out_of_range() {
        let g = LatticeGeometry::square(3, Boundary::Open).unwrap();
        assert!(matches!(
            g.site_index(SiteCoord::new(3, 0)),
            Err(Error::CoordinateOutOfRange { .. })
        ));
    }

    #[test]
    fn periodic_needs_three_sites_per_side() {
        assert!(LatticeGeometry::square(2, Boundary::Periodic).is_err());
        assert!(LatticeGeometry::square(2, Boundary::Open).is_ok());
        assert!(LatticeGeometry::rectangular(3, 4, Boundary::Periodic).is_ok());
    }

    #[test]
    fn neighbor_examples() {
        let g = sq(4);
        let mut n = g.neighbors(SiteCoord::new(0, 0)).unwrap();
        n.sort();
        let mut want = vec![
            SiteCoord::new(1, 0),
            SiteCoord::new(3, 0),
            SiteCoord::new(0, 1),
            SiteCoord::new(0, 3),
        ];
        want.sort();
        assert_eq!(n, want);
        let mut n = g.neighbors(SiteCoord::new(1, 1)).unwrap();
        n.sort();
        let mut want = vec![
            SiteCoord::new(0, 1),
            SiteCoord::new(2, 1),
            SiteCoord::new(1, 0),
            SiteCoord::new(1, 2),
        ];
        want.sort();
        assert_eq!(n, want);
    }

    #[test]
    fn bond_counts() {
        assert_eq!(sq(3).bonds().len(), 18);
        assert_eq!(sq(4).bonds().len(), 32);
        let open = LatticeGeometry::square(3, Boundary::Open).unwrap();
        assert_eq!(open.bonds().len(), 12);
        assert_eq!(open.neighbors(SiteCoord::new(0, 0)).unwrap().len(), 2);
    }

    #[test]
    fn coord_roundtrip() {
        let g = LatticeGeometry::rectangular(5, 3, Boundary::Periodic).unwrap();
        for i in 0..g.n_sites() {
            assert_eq!(g.site_index(g.coord_of(i)).unwrap(), i);
        }
    }

    #[test]
    fn tree_n4_golden() {
        let t = build_tree_topology(&sq(4)).unwrap();
        assert_eq!(t.depth(), 4);
        assert_eq!(t.leaves().len(), 8);
        let NodeKind::Leaf { sites } = &t.node(t.leaves()[0]).kind else { panic!() };
        assert_eq!(*sites, [Some(0), Some(1)]); // (0,0), (1,0)
        // full leaf list in pre-order
        let all: Vec<[Option<usize>; 2]> = t
            .leaves()
            .iter()
            .map(|&l| match &t.node(l).kind {
                NodeKind::Leaf { sites } => *sites,
                _ => unreachable!(),
            })
            .collect();
        let s = |a, b| [Some(a), Some(b)];
        assert_eq!(
            all,
            vec![s(0, 1), s(4, 5), s(2, 3), s(6, 7), s(8, 9), s(12, 13), s(10, 11), s(14, 15)]
        );
    }

    #[test]
    fn tree_n2_open_is_smallest() {
        let g = LatticeGeometry::square(2, Boundary::Open).unwrap();
        let t = build_tree_topology(&g).unwrap();
        assert_eq!(t.depth(), 2);
        assert_eq!(t.leaves().len(), 2);
    }

    #[test]
    fn odd_lattice_gets_one_padded_leaf() {
        let t = build_tree_topology(&sq(3)).unwrap();
        assert_eq!(t.leaves().len(), 5);
        let padded = t
            .leaves()
            .iter()
            .filter(|&&l| t.physical_dim(l, 1) == 1)
            .count();
        assert_eq!(padded, 1);
    }

    #[test]
    fn rank_bounds_on_3x4() {
        let g = LatticeGeometry::rectangular(3, 4, Boundary::Periodic).unwrap();
        let t = build_tree_topology(&g).unwrap();
        let dims = t.max_bond_dims(64);
        let ch = t.children(t.root()).unwrap();
        assert_eq!(dims[ch[0]], 64);
        assert_eq!(dims[ch[1]], 64);
        for &l in t.leaves() {
            assert!(dims[l] <= 4);
        }
    }
}
