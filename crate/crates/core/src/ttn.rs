//! Tree tensor network states.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayD, IxDyn};
use ndarray_linalg::QR;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{NodeId, NodeKind, TreeTopology};
use crate::tensor::{
    self, apply_leg, dims3, embed, norm_sqr, project_out, qr_leg, random_tensor, C64, ONE, ZERO,
};

static NEXT_STATE_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_STATE_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }

    pub fn z(self) -> f64 {
        match self {
            Spin::Up => 1.0,
            Spin::Down => -1.0,
        }
    }
}

/// One rank-3 tensor per tree node plus an optional isometry center.
///
/// Every tensor has legs `(child0 | phys0, child1 | phys1, parent)`. When a
/// center is set, every other tensor is an isometry pointing towards it.
#[derive(Debug)]
pub struct TtnState {
    topo: Arc<TreeTopology>,
    tensors: Vec<Array3<C64>>,
    center: Option<NodeId>,
    versions: Vec<u64>,
    id: u64,
}

impl Clone for TtnState {
    fn clone(&self) -> Self {
        Self {
            topo: self.topo.clone(),
            tensors: self.tensors.clone(),
            center: self.center,
            versions: self.versions.clone(),
            id: fresh_id(),
        }
    }
}

impl TtnState {
    /// Assemble a state from raw tensors. Shapes must agree across every
    /// link; the root's parent leg must have dimension one.
    pub fn from_tensors(
        topo: Arc<TreeTopology>,
        tensors: Vec<Array3<C64>>,
        center: Option<NodeId>,
    ) -> Result<Self> {
        if tensors.len() != topo.n_nodes() {
            return Err(Error::Format(format!(
                "{} tensors for {} nodes",
                tensors.len(),
                topo.n_nodes()
            )));
        }
        for n in 0..topo.n_nodes() {
            let d = dims3(&tensors[n]);
            match &topo.node(n).kind {
                NodeKind::Leaf { .. } => {
                    for leg in 0..2 {
                        if d[leg] != topo.physical_dim(n, leg) {
                            return Err(Error::Format(format!("leaf {n} leg {leg} has dim {}", d[leg])));
                        }
                    }
                }
                NodeKind::Internal { children } => {
                    for (leg, &c) in children.iter().enumerate() {
                        if d[leg] != tensors[c].dim().2 {
                            return Err(Error::Format(format!("link {n}-{c} dims disagree")));
                        }
                    }
                }
            }
            if n == topo.root() && d[2] != 1 {
                return Err(Error::Format("root parent leg must have dim 1".into()));
            }
        }
        let n = tensors.len();
        Ok(Self { topo, tensors, center, versions: vec![0; n], id: fresh_id() })
    }

    /// Random normalized state with every link at its largest admissible
    /// dimension not exceeding `chi`, centered at the root.
    pub fn random(topo: Arc<TreeTopology>, chi: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(topo, chi, &mut rng)
    }

    pub fn random_with<R: Rng + ?Sized>(topo: Arc<TreeTopology>, chi: usize, rng: &mut R) -> Self {
        let link = topo.max_bond_dims(chi);
        let tensors = (0..topo.n_nodes())
            .map(|n| random_tensor(rng, topo.leg_dims_with(n, &link), 1.0))
            .collect();
        let mut s = Self::from_tensors(topo, tensors, None).expect("consistent dims");
        s.canonicalize(0).expect("QR of random tensors");
        s.normalize();
        s
    }

    /// Bond-dimension-one product state.
    pub fn product(topo: Arc<TreeTopology>, spins: &[Spin]) -> Result<Self> {
        let n_sites = topo.geometry().n_sites();
        if spins.len() != n_sites {
            return Err(Error::InvalidParams(format!(
                "{} spins for {} sites",
                spins.len(),
                n_sites
            )));
        }
        let tensors = (0..topo.n_nodes())
            .map(|n| match &topo.node(n).kind {
                NodeKind::Leaf { sites } => {
                    let d1 = topo.physical_dim(n, 1);
                    let mut t = Array3::zeros((2, d1, 1));
                    let i0 = spins[sites[0].expect("first leg always present")].index();
                    let i1 = sites[1].map_or(0, |s| spins[s].index());
                    t[[i0, i1, 0]] = ONE;
                    t
                }
                NodeKind::Internal { .. } => Array3::from_elem((1, 1, 1), ONE),
            })
            .collect();
        Self::from_tensors(topo, tensors, Some(0))
    }

    /// Product state with every spin down.
    pub fn vacuum(topo: Arc<TreeTopology>) -> Self {
        let n = topo.geometry().n_sites();
        Self::product(topo, &vec![Spin::Down; n]).expect("right length")
    }

    pub fn topology(&self) -> &Arc<TreeTopology> {
        &self.topo
    }

    pub fn tensor(&self, n: NodeId) -> &Array3<C64> {
        &self.tensors[n]
    }

    pub fn tensors(&self) -> &[Array3<C64>] {
        &self.tensors
    }

    pub fn center(&self) -> Option<NodeId> {
        self.center
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn version(&self, n: NodeId) -> u64 {
        self.versions[n]
    }

    pub fn versions(&self) -> &[u64] {
        &self.versions
    }

    /// Replace one tensor. The center survives only if `n` is the center.
    pub fn set_tensor(&mut self, n: NodeId, t: Array3<C64>) -> Result<()> {
        let old = dims3(&self.tensors[n]);
        let new = dims3(&t);
        if old != new {
            return Err(Error::Format(format!("tensor {n}: shape {new:?} != {old:?}")));
        }
        self.put(n, t);
        if self.center != Some(n) {
            self.center = None;
        }
        Ok(())
    }

    /// Replace a tensor without touching the center bookkeeping. Shapes may
    /// change; the caller keeps neighbouring legs consistent.
    pub(crate) fn put(&mut self, n: NodeId, t: Array3<C64>) {
        self.tensors[n] = t;
        self.versions[n] += 1;
    }

    pub(crate) fn set_center_unchecked(&mut self, c: Option<NodeId>) {
        self.center = c;
    }

    /// Dimension of the link above node `n`.
    pub fn bond_dim(&self, n: NodeId) -> usize {
        self.tensors[n].dim().2
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        (0..self.tensors.len()).map(|n| self.bond_dim(n)).collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn same_topology(&self, other: &TtnState) -> bool {
        Arc::ptr_eq(&self.topo, &other.topo) || *self.topo == *other.topo
    }

    /// QR-split `n` on the leg facing its neighbour `m` and push the
    /// triangular factor into `m`. Returns nothing; `n` becomes an isometry.
    pub(crate) fn shift(&mut self, n: NodeId, m: NodeId) -> Result<()> {
        let leg_n = self.topo.leg_towards(n, m);
        let leg_m = self.topo.leg_towards(m, n);
        let (q, r) = qr_leg(&self.tensors[n], leg_n)?;
        let absorbed = apply_leg(&self.tensors[m], leg_m, r.view());
        self.put(n, q);
        self.put(m, absorbed);
        Ok(())
    }

    /// Move the isometry center to `target`, orthogonalizing the whole tree
    /// first if no center is known.
    pub fn canonicalize(&mut self, target: NodeId) -> Result<()> {
        match self.center {
            Some(c) => {
                let path = self.topo.path(c, target);
                for w in path.windows(2) {
                    self.shift(w[0], w[1])?;
                }
            }
            None => {
                // post-order of the tree re-rooted at `target`
                let order = self.rerooted_post_order(target);
                for (n, towards) in order {
                    self.shift(n, towards)?;
                }
            }
        }
        self.center = Some(target);
        Ok(())
    }

    fn rerooted_post_order(&self, target: NodeId) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        let mut stack = vec![(target, usize::MAX, false)];
        while let Some((n, from, expanded)) = stack.pop() {
            if expanded {
                if from != usize::MAX {
                    out.push((n, from));
                }
                continue;
            }
            stack.push((n, from, true));
            for m in self.neighbours(n) {
                if m != from {
                    stack.push((m, n, false));
                }
            }
        }
        out
    }

    fn neighbours(&self, n: NodeId) -> Vec<NodeId> {
        let mut v = Vec::with_capacity(3);
        if let Some(ch) = self.topo.children(n) {
            v.extend_from_slice(&ch);
        }
        if let Some(p) = self.topo.parent(n) {
            v.push(p);
        }
        v
    }

    /// Largest deviation from the isometry condition over every non-center
    /// node (zero if there is no center to point at).
    pub fn isometry_defect(&self) -> f64 {
        let Some(c) = self.center else { return f64::INFINITY };
        (0..self.tensors.len())
            .filter(|&n| n != c)
            .map(|n| {
                let leg = self.topo.leg_towards(n, self.topo.step_towards(n, c));
                let t = &self.tensors[n];
                tensor::identity_defect(&project_out(t, t, leg))
            })
            .fold(0.0, f64::max)
    }

    pub fn norm_sqr(&self) -> f64 {
        match self.center {
            Some(c) => norm_sqr(&self.tensors[c]),
            None => overlap(self, self).expect("same state").re,
        }
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Scale to unit norm; canonicalizes at the root if no center is set.
    pub fn normalize(&mut self) -> f64 {
        if self.center.is_none() {
            self.canonicalize(self.topo.root()).expect("QR");
        }
        let c = self.center.expect("just set");
        let nrm = norm_sqr(&self.tensors[c]).sqrt();
        if nrm > 0.0 {
            let t = self.tensors[c].mapv(|z| z / nrm);
            self.put(c, t);
        }
        nrm
    }

    pub fn scale(&mut self, factor: C64) {
        let n = self.center.unwrap_or(self.topo.root());
        let t = self.tensors[n].mapv(|z| z * factor);
        self.put(n, t);
    }

    /// Grow every link to its admissible maximum under `chi`, filling new
    /// directions with noise of magnitude `noise`, then re-orthogonalize
    /// towards the root. The represented state changes by O(`noise`).
    pub fn pad_to<R: Rng + ?Sized>(&mut self, chi: usize, noise: f64, rng: &mut R) -> Result<()> {
        let link = self.topo.max_bond_dims(chi);
        let mut tensors = Vec::with_capacity(self.tensors.len());
        for n in 0..self.tensors.len() {
            let mut target = self.topo.leg_dims_with(n, &link);
            let cur = dims3(&self.tensors[n]);
            for l in 0..3 {
                target[l] = target[l].max(cur[l]);
            }
            let mut t = embed(&self.tensors[n], target);
            if noise > 0.0 {
                t = t + random_tensor(rng, target, noise);
            }
            tensors.push(t);
        }
        let versions = self.versions.iter().map(|v| v + 1).collect();
        *self = Self::from_tensors(self.topo.clone(), tensors, None)?;
        self.versions = versions;
        self.canonicalize(self.topo.root())?;
        Ok(())
    }

    /// Dense amplitude vector; basis index bit `s` is the physical index of
    /// site `s` (1 = down).
    pub fn to_dense(&self) -> Result<Vec<C64>> {
        let n_sites = self.topo.geometry().n_sites();
        if n_sites > 24 {
            return Err(Error::SizeOverflow { sites: n_sites, limit: 24 });
        }
        let mut blocks: Vec<Option<Array2<C64>>> = vec![None; self.tensors.len()];
        for &n in self.topo.post_order() {
            let t = &self.tensors[n];
            let (d0, d1, d2) = t.dim();
            let m = match self.topo.children(n) {
                None => t.as_standard_layout().into_owned().into_shape_with_order((d0 * d1, d2))?,
                Some([c0, c1]) => {
                    let m0 = blocks[c0].take().expect("child done");
                    let m1 = blocks[c1].take().expect("child done");
                    // w[s0, (b1, a)] = sum_b0 m0[s0, b0] t[b0, b1, a]
                    let tm = t.as_standard_layout().into_owned().into_shape_with_order((d0, d1 * d2))?;
                    let w = m0.dot(&tm);
                    let s0 = m0.nrows();
                    let s1 = m1.nrows();
                    let w3 = w.into_shape_with_order((s0, d1, d2))?;
                    let mut out = Array3::<C64>::zeros((s0, s1, d2));
                    for i in 0..s0 {
                        let wi = w3.index_axis(ndarray::Axis(0), i);
                        out.index_axis_mut(ndarray::Axis(0), i).assign(&m1.dot(&wi));
                    }
                    out.into_shape_with_order((s0 * s1, d2))?
                }
            };
            blocks[n] = Some(m);
        }
        let root = blocks[self.topo.root()].take().expect("root done");
        let order = self.topo.subtree_sites(self.topo.root());
        let dim = 1usize << n_sites;
        let mut out = vec![ZERO; dim];
        for (f, amp) in root.column(0).iter().enumerate() {
            let mut idx = 0usize;
            for (pos, &site) in order.iter().enumerate() {
                let bit = (f >> (n_sites - 1 - pos)) & 1;
                idx |= bit << site;
            }
            out[idx] = *amp;
        }
        Ok(out)
    }

    /// Exact TTN of a dense vector by successive QR from the leaves.
    pub fn from_dense(topo: Arc<TreeTopology>, v: &[C64]) -> Result<Self> {
        let n_sites = topo.geometry().n_sites();
        if v.len() != 1usize << n_sites {
            return Err(Error::InvalidParams(format!("vector length {} for {n_sites} sites", v.len())));
        }
        #[derive(Clone, Copy, PartialEq)]
        enum Label {
            Site(usize),
            Link(NodeId),
        }
        // axis k of `work` carries site `n_sites - 1 - k`'s bit; reverse to
        // get site-ordered axes
        let shape = vec![2usize; n_sites];
        let mut work = ArrayD::from_shape_vec(IxDyn(&shape), v.to_vec())?;
        work = work.permuted_axes(IxDyn(&(0..n_sites).rev().collect::<Vec<_>>()));
        let mut labels: Vec<Label> = (0..n_sites).map(Label::Site).collect();
        let mut tensors: Vec<Option<Array3<C64>>> = vec![None; topo.n_nodes()];
        for &n in topo.post_order() {
            let legs: Vec<Option<Label>> = match &topo.node(n).kind {
                NodeKind::Leaf { sites } => sites.iter().map(|s| s.map(Label::Site)).collect(),
                NodeKind::Internal { children } => {
                    children.iter().map(|&c| Some(Label::Link(c))).collect()
                }
            };
            let mut front = Vec::new();
            let mut dims = [1usize; 2];
            for (k, l) in legs.iter().enumerate() {
                if let Some(l) = l {
                    let ax = labels.iter().position(|x| x == l).expect("label present");
                    dims[k] = work.shape()[ax];
                    front.push(ax);
                }
            }
            let rest: Vec<usize> = (0..labels.len()).filter(|a| !front.contains(a)).collect();
            let mut perm = front.clone();
            perm.extend_from_slice(&rest);
            let permuted = work.view().permuted_axes(IxDyn(&perm)).as_standard_layout().into_owned();
            let rest_shape: Vec<usize> = rest.iter().map(|&a| work.shape()[a]).collect();
            let rest_size: usize = rest_shape.iter().product();
            let mat = permuted.into_shape_with_order((dims[0] * dims[1], rest_size))?;
            let new_labels: Vec<Label> = rest.iter().map(|&a| labels[a]).collect();
            if n == topo.root() {
                tensors[n] = Some(mat.into_shape_with_order((dims[0], dims[1], 1))?);
                break;
            }
            let (q, r) = mat.qr()?;
            let k = q.ncols();
            tensors[n] = Some(q.into_shape_with_order((dims[0], dims[1], k))?);
            let mut shape = vec![k];
            shape.extend_from_slice(&rest_shape);
            work = r.into_shape_with_order(IxDyn(&shape))?;
            labels = std::iter::once(Label::Link(n)).chain(new_labels).collect();
        }
        let tensors = tensors.into_iter().map(|t| t.expect("every node visited")).collect();
        Self::from_tensors(topo.clone(), tensors, Some(topo.root()))
    }
}

/// `<phi|psi>`.
pub fn overlap(psi: &TtnState, phi: &TtnState) -> Result<C64> {
    if !psi.same_topology(phi) {
        return Err(Error::TopologyMismatch);
    }
    let topo = psi.topology();
    let mut env: Vec<Option<Array2<C64>>> = vec![None; topo.n_nodes()];
    for &n in topo.post_order() {
        let mut t = psi.tensor(n).clone();
        if let Some(ch) = topo.children(n) {
            for (leg, c) in ch.into_iter().enumerate() {
                let e = env[c].take().expect("child done");
                t = apply_leg(&t, leg, e.view());
            }
        }
        env[n] = Some(project_out(phi.tensor(n), &t, 2));
    }
    Ok(env[topo.root()].as_ref().expect("root")[[0, 0]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_tree_topology, Boundary, LatticeGeometry};

    fn topo(lx: usize, ly: usize) -> Arc<TreeTopology> {
        let g = LatticeGeometry::rectangular(lx, ly, Boundary::Periodic).unwrap();
        Arc::new(build_tree_topology(&g).unwrap())
    }

    fn dense_dot(a: &[C64], b: &[C64]) -> C64 {
        tensor::vdot(a, b)
    }

    #[test]
    fn random_is_normalized_and_deterministic() {
        let t = topo(4, 4);
        let a = TtnState::random(t.clone(), 8, 7);
        let b = TtnState::random(t.clone(), 8, 7);
        assert_eq!(a.tensors(), b.tensors());
        assert!((a.norm_sqr() - 1.0).abs() < 1e-12);
        assert!(a.isometry_defect() < 1e-12);
        let one = TtnState::random(t, 1, 3);
        assert!(one.bond_dims().iter().all(|&d| d == 1));
        assert!((overlap(&one, &one).unwrap().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonicalize_round_trip_preserves_state() {
        let t = topo(4, 4);
        let mut s = TtnState::random(t.clone(), 8, 11);
        let before = s.clone();
        let leaf = t.leaves()[5];
        s.canonicalize(leaf).unwrap();
        assert!(s.isometry_defect() < 1e-12);
        s.canonicalize(0).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        assert!((overlap(&s, &before).unwrap() - ONE).norm() < 1e-12);
    }

    #[test]
    fn canonicalize_without_center() {
        let t = topo(3, 3);
        let mut s = TtnState::random(t.clone(), 4, 1);
        let before = s.to_dense().unwrap();
        let leaf = t.leaves()[2];
        let noise = s.tensor(leaf).mapv(|z| z * 1.5);
        s.set_tensor(leaf, noise).unwrap();
        assert_eq!(s.center(), None);
        let changed = s.to_dense().unwrap();
        s.canonicalize(t.leaves()[0]).unwrap();
        assert!(s.isometry_defect() < 1e-12);
        let after = s.to_dense().unwrap();
        let diff: f64 = after.iter().zip(&changed).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
        assert!(before.iter().zip(&changed).any(|(a, b)| (a - b).norm() > 1e-6));
    }

    #[test]
    fn product_states_are_orthogonal_basis_vectors() {
        let t = topo(4, 4);
        let vac = TtnState::vacuum(t.clone());
        let mut spins = vec![Spin::Down; 16];
        spins[2 + 4 * 2] = Spin::Up;
        let flip = TtnState::product(t, &spins).unwrap();
        assert!(overlap(&vac, &flip).unwrap().norm() < 1e-15);
        assert!((overlap(&vac, &vac).unwrap() - ONE).norm() < 1e-15);
    }

    #[test]
    fn dense_round_trip_3x3_and_3x4() {
        for (lx, ly) in [(3, 3), (3, 4)] {
            let t = topo(lx, ly);
            let s = TtnState::random(t.clone(), 64, 5);
            let v = s.to_dense().unwrap();
            let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12);
            let back = TtnState::from_dense(t, &v).unwrap();
            let w = back.to_dense().unwrap();
            let diff = v.iter().zip(&w).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(diff < 1e-12, "{lx}x{ly}: {diff}");
        }
    }

    #[test]
    fn overlap_matches_dense_and_is_conjugate_symmetric() {
        let t = topo(3, 3);
        let a = TtnState::random(t.clone(), 4, 1);
        let b = TtnState::random(t.clone(), 4, 2);
        let ab = overlap(&a, &b).unwrap();
        let ba = overlap(&b, &a).unwrap();
        assert!((ab - ba.conj()).norm() < 1e-14);
        let dense = dense_dot(&b.to_dense().unwrap(), &a.to_dense().unwrap());
        assert!((ab - dense).norm() < 1e-12);
    }

    #[test]
    fn product_dense_has_single_amplitude() {
        let t = topo(3, 3);
        let mut spins = vec![Spin::Down; 9];
        spins[4] = Spin::Up;
        let v = TtnState::product(t, &spins).unwrap().to_dense().unwrap();
        let idx = ((1usize << 9) - 1) & !(1 << 4);
        assert_eq!(v[idx], ONE);
        assert_eq!(v.iter().filter(|z| z.norm() > 0.0).count(), 1);
    }

    #[test]
    fn pad_to_keeps_state() {
        use rand::SeedableRng;
        let t = topo(4, 4);
        let vac = TtnState::vacuum(t.clone());
        let mut padded = vac.clone();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        padded.pad_to(16, 1e-12, &mut rng).unwrap();
        assert_eq!(padded.max_bond_dim(), 16);
        assert!(padded.isometry_defect() < 1e-12);
        let ov = overlap(&padded, &vac).unwrap();
        assert!((ov.norm() - 1.0).abs() < 1e-9);
    }
}
